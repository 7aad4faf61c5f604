// darc: run experiments, theory checks and plots from the command line.
// Exit codes: 0 ok, 1 config or input error, 2 runtime failure, 3 failed checks.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "darc/experiment.hpp"
#include "darc/mdp.hpp"

namespace fs = std::filesystem;
using namespace darc;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError(fmt::format("cannot read '{}'", p.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  return parse_config("seeds = " + s).seeds;
}

void print_gridworld(const ExperimentResult& r) {
  double mean = 0.0, exact = 0.0;
  std::size_t n = 0;
  for (const auto& s : r.seeds) {
    if (!s.ok) {
      fmt::print("seed {}: FAILED: {}\n", s.seed, s.error);
      continue;
    }
    fmt::print("seed {}: target success {:.3f} (exact {:.3f})\n", s.seed, s.final_target_success,
               s.exact_target_success);
    mean += s.final_target_success;
    exact += s.exact_target_success;
    ++n;
  }
  if (n) fmt::print("mean over {} seeds: {:.3f} (exact {:.3f})\n", n, mean / n, exact / n);
}

void print_archery(const ExperimentResult& r) {
  for (const auto& c : r.archery) {
    fmt::print("argmax target {:+.2f} deg, source {:+.2f} deg, source modified {:+.2f} deg; "
               "target hit rate at source optimum {:.3f}, at modified optimum {:.3f}\n",
               c.argmax_target, c.argmax_source, c.argmax_source_modified,
               c.target_eval_source_opt.success_rate, c.target_eval_modified_opt.success_rate);
  }
  for (const auto& s : r.seeds) {
    if (!s.ok) fmt::print("seed {}: FAILED: {}\n", s.seed, s.error);
  }
}

int finish(const ExperimentConfig& cfg, const fs::path& root) {
  ExperimentResult r = run_experiment(cfg, root);
  switch (cfg.kind) {
    case ExperimentKind::archery_sweep: print_archery(r); break;
    case ExperimentKind::theory_suite:
      fmt::print("{} checks, {} failed, {} skipped\n", r.theory.checks.size(), r.theory.failures(),
                 r.theory.skipped());
      break;
    default: print_gridworld(r); break;
  }
  fmt::print("wrote {} files under {}\n", r.files.size(), (root / cfg.output_dir).string());
  return r.exit_code;
}

int validate_mdp_files(const fs::path& source, const std::optional<fs::path>& target) {
  auto load = [](const fs::path& p) {
    try {
      return read_mdp(read_text(p));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(fmt::format("{}: {}", p.string(), e.what()));
    }
  };
  int status = 0;
  auto report = [&](const fs::path& p, const TabularMDP& m) {
    const ValidationReport v = validate_mdp(m);
    fmt::print("{}: {} states, {} actions, horizon {}: {}\n", p.string(), m.num_states,
               m.num_actions, m.horizon, v.empty() ? "valid" : "INVALID");
    for (const auto& x : v) {
      std::string where;
      if (x.s) where += fmt::format(" s={}", *x.s);
      if (x.a) where += fmt::format(" a={}", *x.a);
      if (x.s_next) where += fmt::format(" s'={}", *x.s_next);
      fmt::print("  {}{} (magnitude {:.3g})\n", x.what, where, x.magnitude);
    }
    if (!v.empty()) status = 2;
  };
  const TabularMDP src = load(source);
  report(source, src);
  if (target) {
    const TabularMDP tgt = load(*target);
    report(*target, tgt);
    if (status == 0) {
      const SupportCheck sc = check_support(src, tgt);
      fmt::print("target support inside source support: {}\n", sc.ok ? "yes" : "NO");
      for (const auto& t : sc.violations) {
        fmt::print("  p_target > 0 = p_source at s={} a={} s'={}\n", t.s, t.a, t.s_next);
      }
      if (!sc.ok) status = 2;
    }
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DARC tabular experiments and theory checks"};
  app.require_subcommand(1);
  std::string root_opt;
  app.add_option("--output-root", root_opt, "Output root (default: $DARC_OUTPUT_ROOT or cwd)");

  auto* run = app.add_subcommand("run", "Run an experiment config");
  std::string config_path;
  std::size_t threads = 0;
  run->add_option("config", config_path, "Config file")->required();
  run->add_option("--threads", threads, "Worker threads (overrides the config)");

  auto* theory = app.add_subcommand("theory", "Randomized checks of the transfer bounds");
  std::size_t instances = 200;
  std::string theory_seeds = "0", theory_out = "theory";
  bool nonvacuous = false;
  theory->add_option("--instances", instances, "Instances per seed");
  theory->add_option("--seeds", theory_seeds, "Comma separated seeds");
  theory->add_option("--out", theory_out, "Output directory under the root");
  theory->add_flag("--equal-supports", nonvacuous,
                   "Never drop source outcomes in the target (keeps every bound non-vacuous)");

  auto* archery = app.add_subcommand("archery", "Archery objective sweep with learned classifiers");
  std::string archery_seeds = "0", archery_out = "archery";
  archery->add_option("--seeds", archery_seeds, "Comma separated seeds");
  archery->add_option("--out", archery_out, "Output directory under the root");

  auto* validate = app.add_subcommand("validate", "Check an MDP file (and a target against it)");
  std::string mdp_path, target_path;
  validate->add_option("mdp-file", mdp_path, "MDP file")->required();
  validate->add_option("target-file", target_path, "Optional target MDP for the support check");

  auto* plot = app.add_subcommand("plot", "SVG line chart from a CSV");
  std::string csv_path, spec_arg, svg_path;
  plot->add_option("csv", csv_path, "CSV file with a header row")->required();
  plot->add_option("spec", spec_arg, "Plot spec file, or inline 'x=...;y=...'")->required();
  plot->add_option("-o,--out", svg_path, "Output SVG (default: CSV path with .svg)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const fs::path root = root_opt.empty() ? output_root() : fs::path(root_opt);
    if (*run) {
      ExperimentConfig cfg = load_config(config_path);
      if (threads) cfg.threads = threads;
      return finish(cfg, root);
    }
    if (*theory) {
      ExperimentConfig cfg;
      cfg.kind = ExperimentKind::theory_suite;
      cfg.theory.instances = instances;
      if (nonvacuous) cfg.theory.zero_mask_share = 0.0;
      cfg.seeds = parse_seeds(theory_seeds);
      cfg.output_dir = theory_out;
      return finish(cfg, root);
    }
    if (*archery) {
      ExperimentConfig cfg;
      cfg.kind = ExperimentKind::archery_sweep;
      cfg.seeds = parse_seeds(archery_seeds);
      cfg.output_dir = archery_out;
      cfg.threads = cfg.seeds.size();
      return finish(cfg, root);
    }
    if (*validate) {
      return validate_mdp_files(mdp_path, target_path.empty() ? std::nullopt
                                                              : std::optional<fs::path>(target_path));
    }
    if (*plot) {
      const std::string spec_text = fs::is_regular_file(spec_arg) ? read_text(spec_arg) : spec_arg;
      const PlotSpec spec = parse_plot_spec(spec_text);
      fs::path out = svg_path.empty() ? fs::path(csv_path).replace_extension(".svg") : fs::path(svg_path);
      emit_plot(csv_path, spec, out);
      fmt::print("wrote {}\n", out.string());
      return 0;
    }
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "input error: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "runtime failure: {}\n", e.what());
    return 2;
  }
  return 0;
}
