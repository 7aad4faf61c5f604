#include "darc/experiment.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "darc/reward_correction.hpp"

namespace darc {

const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::darc: return "darc";
    case ExperimentKind::rl_source: return "rl_source";
    case ExperimentKind::rl_target: return "rl_target";
    case ExperimentKind::importance: return "importance";
    case ExperimentKind::ablation_single_classifier: return "ablation_single_classifier";
    case ExperimentKind::matl_style: return "matl_style";
    case ExperimentKind::archery_sweep: return "archery_sweep";
    case ExperimentKind::theory_suite: return "theory_suite";
  }
  return "?";
}

static const char* to_string(GridKind g) { return g == GridKind::wall ? "wall" : "flip"; }

ConfigError::ConfigError(const std::string& what, std::size_t line)
    : std::runtime_error(line ? fmt::format("line {}: {}", line, what) : what), line_(line) {}

NetTrainConfig ArcheryExperiment::default_net() {
  NetTrainConfig n;
  n.hidden = {32};
  n.learning_rate = 3e-3;
  n.batch_size = 1024;
  n.steps = 3000;
  n.noise_std = 0.1;
  n.patience = 0;
  return n;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

template <class T>
T parse_number(const std::string& v, const char* what) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (v.empty() || ec != std::errc() || ptr != end) {
    throw std::invalid_argument(fmt::format("expected {}, got '{}'", what, v));
  }
  return out;
}

std::size_t parse_size(const std::string& v) {
  return parse_number<std::size_t>(v, "a non-negative integer");
}

double parse_double(const std::string& v) {
  if (v == "inf") return kPosInf;
  if (v == "-inf") return kNegInf;
  return parse_number<double>(v, "a number");
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument(fmt::format("expected true or false, got '{}'", v));
}

template <class T>
std::vector<T> parse_list(const std::string& v, const char* what) {
  std::vector<T> out;
  if (trim(v).empty()) return out;
  for (const auto& item : split(v, ',')) out.push_back(parse_number<T>(item, what));
  return out;
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + fmt::format("{}", xs[i]);
  return out;
}

std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{}", v);  // shortest form that reads back exactly
}

struct Key {
  std::string name;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

struct Section {
  std::string name;
  std::vector<Key> keys;
};

Key size_key(std::string name, std::size_t& ref, std::size_t min = 0) {
  return {name,
          [&ref, min, name](const std::string& v) {
            const std::size_t x = parse_size(v);
            if (x < min) throw std::invalid_argument(fmt::format("{} must be >= {}", name, min));
            ref = x;
          },
          [&ref] { return fmt::format("{}", ref); }};
}

Key double_key(std::string name, double& ref) {
  return {name, [&ref](const std::string& v) { ref = parse_double(v); },
          [&ref] { return fmt_double(ref); }};
}

Key bool_key(std::string name, bool& ref) {
  return {name, [&ref](const std::string& v) { ref = parse_bool(v); },
          [&ref] { return ref ? "true" : "false"; }};
}

template <class E>
Key enum_key(std::string name, E& ref, std::vector<E> all) {
  return {name,
          [&ref, all](const std::string& v) {
            for (E e : all) {
              if (v == to_string(e)) {
                ref = e;
                return;
              }
            }
            std::string opts;
            for (E e : all) opts += std::string(opts.empty() ? "" : ", ") + to_string(e);
            throw std::invalid_argument(fmt::format("unknown value '{}' (expected one of {})", v, opts));
          },
          [&ref] { return std::string(to_string(ref)); }};
}

void add_net_keys(std::vector<Key>& keys, NetTrainConfig& n) {
  keys.push_back({"hidden",
                  [&n](const std::string& v) {
                    auto h = parse_list<std::size_t>(v, "a layer width");
                    for (auto w : h) {
                      if (w == 0) throw std::invalid_argument("hidden widths must be positive");
                    }
                    n.hidden = h;
                  },
                  [&n] { return join(n.hidden); }});
  keys.push_back(double_key("noise_std", n.noise_std));
  keys.push_back(double_key("learning_rate", n.learning_rate));
  keys.push_back(size_key("batch_size", n.batch_size, 2));
  keys.push_back(size_key("steps", n.steps));
  keys.push_back(double_key("validation_fraction", n.validation_fraction));
  keys.push_back(size_key("eval_every", n.eval_every, 1));
  keys.push_back(size_key("patience", n.patience));
  keys.push_back(bool_key("standardize", n.standardize));
}

GridworldSpec default_grid(GridKind g) {
  return g == GridKind::wall ? GridworldSpec{} : default_flip_gridworld_spec();
}

std::vector<Section> registry(ExperimentConfig& c) {
  std::vector<Section> out;

  Section top{"", {}};
  top.keys.push_back(enum_key("kind", c.kind,
                              {ExperimentKind::darc, ExperimentKind::rl_source,
                               ExperimentKind::rl_target, ExperimentKind::importance,
                               ExperimentKind::ablation_single_classifier,
                               ExperimentKind::matl_style, ExperimentKind::archery_sweep,
                               ExperimentKind::theory_suite}));
  top.keys.push_back({"seeds",
                      [&c](const std::string& v) {
                        auto s = parse_list<std::uint64_t>(v, "a seed");
                        if (s.empty()) throw std::invalid_argument("seeds must be non-empty");
                        c.seeds = s;
                      },
                      [&c] { return join(c.seeds); }});
  top.keys.push_back({"output_dir",
                      [&c](const std::string& v) {
                        if (v.empty()) throw std::invalid_argument("output_dir must be non-empty");
                        c.output_dir = v;
                      },
                      [&c] { return c.output_dir; }});
  top.keys.push_back(size_key("threads", c.threads, 1));
  top.keys.push_back(bool_key("plot", c.plot));
  out.push_back(std::move(top));

  Section dom{"domain", {}};
  dom.keys.push_back({"grid",
                      [&c](const std::string& v) {
                        if (v == "wall") c.grid = GridKind::wall;
                        else if (v == "flip") c.grid = GridKind::flip;
                        else throw std::invalid_argument(
                            fmt::format("unknown value '{}' (expected wall or flip)", v));
                        c.gridworld = default_grid(c.grid);
                      },
                      [&c] { return std::string(to_string(c.grid)); }});
  dom.keys.push_back({"map",
                      [&c](const std::string& v) {
                        std::string text = v;
                        std::replace(text.begin(), text.end(), '/', '\n');
                        GridworldSpec m = parse_gridworld_map(text);
                        c.gridworld.width = m.width;
                        c.gridworld.height = m.height;
                        c.gridworld.start = m.start;
                        c.gridworld.goal = m.goal;
                        c.gridworld.wall_cells = m.wall_cells;
                        c.gridworld.flip_cell = m.flip_cell;
                      },
                      [&c] {
                        std::string m = gridworld_map(c.gridworld);
                        while (!m.empty() && m.back() == '\n') m.pop_back();
                        std::replace(m.begin(), m.end(), '\n', '/');
                        return m;
                      }});
  dom.keys.push_back(double_key("slip_prob", c.gridworld.slip_prob));
  dom.keys.push_back(double_key("goal_reward", c.gridworld.goal_reward));
  dom.keys.push_back(double_key("step_reward", c.gridworld.step_reward));
  dom.keys.push_back(size_key("horizon", c.gridworld.horizon, 1));
  out.push_back(std::move(dom));

  DarcConfig& d = c.darc;
  Section dk{"darc", {}};
  dk.keys.push_back(size_key("num_iterations", d.num_iterations, 1));
  dk.keys.push_back(size_key("target_collect_period", d.target_collect_period, 1));
  dk.keys.push_back(size_key("warmup_iters", d.warmup_iters));
  dk.keys.push_back(enum_key("classifier", d.classifier, {ClassifierKind::tabular, ClassifierKind::net}));
  dk.keys.push_back(enum_key("delta_r_mode", d.delta_r_mode,
                             {DeltaRMode::full, DeltaRMode::sas_only, DeltaRMode::state_only}));
  dk.keys.push_back(double_key("smoothing", d.smoothing));
  dk.keys.push_back(size_key("classifier_steps_per_iter", d.classifier_steps_per_iter));
  dk.keys.push_back({"clamp_bound",
                     [&d](const std::string& v) {
                       if (v == "none") d.clamp_bound.reset();
                       else d.clamp_bound = parse_double(v);
                     },
                     [&d] { return d.clamp_bound ? fmt_double(*d.clamp_bound) : "none"; }});
  dk.keys.push_back(double_key("lr_alpha0", d.schedule.alpha0));
  dk.keys.push_back(double_key("lr_tau", d.schedule.tau));
  dk.keys.push_back(size_key("rl_updates_per_iter", d.rl_updates_per_iter));
  dk.keys.push_back(size_key("rl_batch_size", d.rl_batch_size, 1));
  dk.keys.push_back(enum_key("relabel", d.relabel, {TimeRelabel::none, TimeRelabel::random, TimeRelabel::all}));
  dk.keys.push_back(enum_key("q_init", d.q_init, {QInit::zero, QInit::max_entropy}));
  dk.keys.push_back(size_key("target_update_multiplier", d.target_update_multiplier, 1));
  dk.keys.push_back(size_key("buffer_capacity", d.buffer_capacity));
  dk.keys.push_back(enum_key("source_collection", d.source_collection, {Collection::policy, Collection::uniform}));
  dk.keys.push_back(enum_key("target_collection", d.target_collection, {Collection::policy, Collection::uniform}));
  dk.keys.push_back(size_key("eval_every", d.eval_every, 1));
  dk.keys.push_back(size_key("eval_episodes", d.eval_episodes, 1));
  dk.keys.push_back({"success_states",
                     [&d](const std::string& v) { d.success_states = parse_list<std::size_t>(v, "a state"); },
                     [&d] { return join(d.success_states); }});
  dk.keys.push_back(size_key("finetune_source_iters", d.finetune_source_iters));
  dk.keys.push_back(bool_key("record_wall_clock", d.record_wall_clock));
  out.push_back(std::move(dk));

  Section nk{"net", {}};
  add_net_keys(nk.keys, d.net);
  out.push_back(std::move(nk));

  ArcheryExperiment& a = c.archery;
  Section ak{"archery", {}};
  ak.keys.push_back(double_key("target_distance", a.spec.target_distance));
  ak.keys.push_back(double_key("source_wind_mean", a.spec.source_wind_mean));
  ak.keys.push_back(double_key("source_wind_std", a.spec.source_wind_std));
  ak.keys.push_back(double_key("target_wind_mean", a.spec.target_wind_mean));
  ak.keys.push_back(double_key("target_wind_std", a.spec.target_wind_std));
  ak.keys.push_back(double_key("angle_lo_deg", a.spec.angle_lo_deg));
  ak.keys.push_back(double_key("angle_hi_deg", a.spec.angle_hi_deg));
  ak.keys.push_back(size_key("episodes_per_domain", a.episodes_per_domain, 1));
  ak.keys.push_back(size_key("grid_points", a.grid_points, 2));
  ak.keys.push_back(size_key("samples_per_point", a.samples_per_point, 1));
  ak.keys.push_back(double_key("success_threshold", a.success_threshold));
  out.push_back(std::move(ak));

  Section ank{"archery_net", {}};
  add_net_keys(ank.keys, a.net);
  out.push_back(std::move(ank));

  TheorySuiteOptions& t = c.theory;
  Section tk{"theory", {}};
  tk.keys.push_back(size_key("instances", t.instances, 1));
  tk.keys.push_back(size_key("max_states", t.max_states, 2));
  tk.keys.push_back(size_key("max_actions", t.max_actions, 2));
  tk.keys.push_back(size_key("max_horizon", t.max_horizon, 1));
  tk.keys.push_back(double_key("zero_mask_share", t.zero_mask_share));
  tk.keys.push_back(double_key("mask_zero_prob", t.mask_zero_prob));
  tk.keys.push_back(bool_key("pinsker", t.pinsker));
  tk.keys.push_back(bool_key("theorem", t.theorem));
  tk.keys.push_back(bool_key("jensen", t.jensen));
  tk.keys.push_back(bool_key("mi", t.mi));
  tk.keys.push_back(bool_key("kl_paths", t.kl_paths));
  out.push_back(std::move(tk));

  return out;
}

bool is_gridworld_kind(ExperimentKind k) {
  return k != ExperimentKind::archery_sweep && k != ExperimentKind::theory_suite;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  auto reg = registry(cfg);
  const Section* section = &reg.front();
  std::set<std::string> seen;
  bool domain_key_seen = false;

  std::istringstream in(text);
  std::size_t lineno = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("malformed section header", lineno);
      const std::string name = trim(line.substr(1, line.size() - 2));
      auto it = std::find_if(reg.begin() + 1, reg.end(), [&](const Section& s) { return s.name == name; });
      if (it == reg.end()) throw ConfigError(fmt::format("unknown section '[{}]'", name), lineno);
      section = &*it;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed line, expected 'key = value'", lineno);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("malformed line, missing key", lineno);
    const std::string where = section->name.empty() ? "top level" : "[" + section->name + "]";
    const Section* owner = section;
    auto find = [&](const Section* sec) {
      return std::find_if(sec->keys.begin(), sec->keys.end(), [&](const Key& k) { return k.name == key; });
    };
    auto kit = find(owner);
    if (kit == owner->keys.end() && owner->name.empty()) {
      // training keys may also sit at the top level
      owner = &*std::find_if(reg.begin(), reg.end(), [](const Section& s) { return s.name == "darc"; });
      kit = find(owner);
    }
    if (kit == owner->keys.end()) {
      throw ConfigError(fmt::format("unknown key '{}' at {}", key, where), lineno);
    }
    if (!seen.insert(owner->name + "." + key).second) {
      throw ConfigError(fmt::format("repeated key '{}' at {}", key, where), lineno);
    }
    if (section->name == "domain") {
      if (key == "grid" && domain_key_seen) {
        throw ConfigError("'grid' must come before the other [domain] keys", lineno);
      }
      domain_key_seen = true;
    }
    try {
      kit->set(value);
    } catch (const std::exception& e) {
      throw ConfigError(fmt::format("{}: {}", key, e.what()), lineno);
    }
  }
  validate_experiment(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string emit_config(const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  std::string out;
  for (const auto& sec : registry(copy)) {
    if (!sec.name.empty()) out += fmt::format("\n[{}]\n", sec.name);
    for (const auto& k : sec.keys) out += fmt::format("{} = {}\n", k.name, k.get());
  }
  return out;
}

void validate_experiment(const ExperimentConfig& cfg) {
  auto wrap = [](auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  };
  if (cfg.seeds.empty()) throw ConfigError("seeds must be non-empty");
  if (cfg.threads == 0) throw ConfigError("threads must be >= 1");
  if (cfg.output_dir.empty()) throw ConfigError("output_dir must be non-empty");
  if (is_gridworld_kind(cfg.kind)) {
    wrap([&] { validate_gridworld_spec(cfg.gridworld); });
    wrap([&] { validate_config(effective_darc_config(cfg)); });
    if (cfg.grid == GridKind::flip && !cfg.gridworld.flip_cell) {
      throw ConfigError("flip grid needs an 'F' cell in the map");
    }
  }
  if (cfg.kind == ExperimentKind::archery_sweep) {
    wrap([&] { validate_archery_spec(cfg.archery.spec); });
    if (cfg.archery.grid_points < 2) throw ConfigError("grid_points must be >= 2");
    if (!(cfg.archery.success_threshold > 0.0)) throw ConfigError("success_threshold must be > 0");
  }
  if (cfg.kind == ExperimentKind::theory_suite) {
    const auto& t = cfg.theory;
    if (!(t.zero_mask_share >= 0.0 && t.zero_mask_share <= 1.0) ||
        !(t.mask_zero_prob >= 0.0 && t.mask_zero_prob < 1.0)) {
      throw ConfigError("zero_mask_share must be in [0, 1] and mask_zero_prob in [0, 1)");
    }
  }
}

DomainPair build_domain(const ExperimentConfig& cfg) {
  return cfg.grid == GridKind::wall ? build_wall_gridworld(cfg.gridworld)
                                    : build_action_flip_gridworld(cfg.gridworld);
}

DarcConfig effective_darc_config(const ExperimentConfig& cfg) {
  DarcConfig d = cfg.darc;
  if (cfg.kind == ExperimentKind::ablation_single_classifier) d.delta_r_mode = DeltaRMode::sas_only;
  if (cfg.kind == ExperimentKind::matl_style) d.delta_r_mode = DeltaRMode::state_only;
  if (d.success_states.empty()) d.success_states = {goal_state(cfg.gridworld)};
  return d;
}

SeedOutcome run_gridworld_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedOutcome out;
  out.seed = seed;
  try {
    DomainPair pair = build_domain(cfg);
    DarcConfig d = effective_darc_config(cfg);
    d.seed = seed;
    TrainResult res;
    switch (cfg.kind) {
      case ExperimentKind::rl_source: res = run_rl_on_source(pair, d); break;
      case ExperimentKind::rl_target: res = run_rl_on_target(pair, d); break;
      case ExperimentKind::importance: res = run_importance_weighting(pair, d); break;
      default: res = run_darc(pair, d); break;
    }
    out.stats = std::move(res.stats);
    if (out.stats.diverged) {
      out.error = out.stats.error.empty() ? "classifier diverged" : out.stats.error;
      return out;
    }
    if (!out.stats.records.empty()) {
      out.final_target_success = out.stats.records.back().target_success;
      out.final_target_return = out.stats.records.back().target_return;
    }
    out.exact_target_success = exact_success_probability(pair.target, res.policy, d.success_states);
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

ArcheryCurves run_archery_seed(const ArcheryExperiment& cfg, std::uint64_t seed,
                               NetClassifierPair* trained) {
  const ArcherySpec& spec = cfg.spec;
  validate_archery_spec(spec);
  const Rng root(seed);
  auto shots = [&](Domain d, Rng r) {
    std::vector<ArcheryShot> v;
    v.reserve(cfg.episodes_per_domain);
    for (std::size_t i = 0; i < cfg.episodes_per_domain; ++i) {
      const double th = r.uniform(spec.angle_lo_deg, spec.angle_hi_deg);
      v.push_back({th, archery_sample(th, d, spec, r)});
    }
    return v;
  };
  const auto src = shots(Domain::source, root.split("source_rollouts"));
  const auto tgt = shots(Domain::target, root.split("target_rollouts"));
  Rng clf_rng = root.split("classifier");
  NetClassifierPair pair =
      train_net_pair(archery_features(src), archery_features(tgt), cfg.net, clf_rng);

  const ArcheryRewardFn plain = [](double, double sp) { return archery_reward(sp); };
  Eigen::MatrixXd x_sa(1, 1), x_sas(2, 1);
  const ArcheryRewardFn modified = [&](double th, double sp) {
    x_sa(0, 0) = th;
    x_sas(0, 0) = th;
    x_sas(1, 0) = sp;
    return archery_reward(sp) + clamp_delta_r(pair.delta_r(x_sa, x_sas)[0], kDefaultClampBound);
  };

  const Rng ev = root.split("evaluation");
  const std::size_t n = cfg.samples_per_point, pts = cfg.grid_points;
  ArcheryCurve ct = archery_sweep(Domain::target, plain, spec, n, ev, pts);
  ArcheryCurve cs = archery_sweep(Domain::source, plain, spec, n, ev, pts);
  ArcheryCurve cm = archery_sweep(Domain::source, modified, spec, n, ev, pts);

  ArcheryCurves out;
  out.theta_deg = ct.theta_deg;
  out.target = std::move(ct.objective);
  out.source = std::move(cs.objective);
  out.source_modified = std::move(cm.objective);
  out.argmax_target = ct.argmax_deg;
  out.argmax_source = cs.argmax_deg;
  out.argmax_source_modified = cm.argmax_deg;
  const Rng shoot = root.split("target_eval");
  Rng r1 = shoot, r2 = shoot;
  out.target_eval_source_opt = evaluate_archery(cs.argmax_deg, Domain::target, spec, n, r1,
                                                cfg.success_threshold);
  out.target_eval_modified_opt = evaluate_archery(cm.argmax_deg, Domain::target, spec, n, r2,
                                                  cfg.success_threshold);
  if (trained) *trained = std::move(pair);
  return out;
}

void write_archery_csv(std::ostream& out, const ArcheryCurves& c) {
  out << "theta_deg,target,source,source_modified\n";
  for (std::size_t i = 0; i < c.theta_deg.size(); ++i) {
    out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g}\n", c.theta_deg[i], c.target[i],
                       c.source[i], c.source_modified[i]);
  }
}

std::filesystem::path output_root() {
  if (const char* env = std::getenv("DARC_OUTPUT_ROOT"); env && *env) return env;
  return std::filesystem::current_path();
}

namespace {

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

void write_file(const std::filesystem::path& path, const std::string& text,
                std::vector<std::filesystem::path>& files) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  f << text;
  if (!f) throw std::runtime_error(fmt::format("write failed for '{}'", path.string()));
  files.push_back(path);
}

// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

void maybe_plot(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                const std::string& csv_text, const PlotSpec& spec, const std::string& name,
                std::vector<std::filesystem::path>& files) {
  if (!cfg.plot) return;
  std::istringstream in(csv_text);
  write_file(dir / name, emit_plot(read_csv(in), spec), files);
}

void run_gridworld(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                   ExperimentResult& result) {
  result.seeds.resize(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), cfg.threads,
               [&](std::size_t i) { result.seeds[i] = run_gridworld_seed(cfg, cfg.seeds[i]); });

  std::string summary =
      "seed,ok,final_target_success,final_target_return,exact_target_success,source_rollouts,"
      "target_rollouts,policy_updates,target_transitions_in_policy_updates,error\n";
  std::vector<const SeedOutcome*> ok;
  for (const auto& s : result.seeds) {
    std::ostringstream csv;
    write_train_stats_csv(csv, s.stats);
    write_file(dir / fmt::format("seed_{}.csv", s.seed), csv.str(), result.files);
    summary += fmt::format("{},{},{:.17g},{:.17g},{:.17g},{},{},{},{},{}\n", s.seed, s.ok ? 1 : 0,
                           s.final_target_success, s.final_target_return, s.exact_target_success,
                           s.stats.source_rollouts, s.stats.target_rollouts,
                           s.stats.policy_updates, s.stats.target_transitions_in_policy_updates,
                           quote(s.error));
    if (s.ok) ok.push_back(&s);
    else result.exit_code = 2;
  }
  write_file(dir / "summary.csv", summary, result.files);
  if (ok.empty()) return;

  std::size_t n = ok.front()->stats.records.size();
  for (const auto* s : ok) n = std::min(n, s->stats.records.size());
  std::string agg =
      "iter,mean_delta_r,loss_sas,loss_sa,source_return,target_return,target_success";
  for (const auto* s : ok) agg += fmt::format(",target_success_seed{}", s->seed);
  for (const auto* s : ok) agg += fmt::format(",mean_delta_r_seed{}", s->seed);
  agg += "\n";
  const double k = static_cast<double>(ok.size());
  for (std::size_t i = 0; i < n; ++i) {
    TrainRecord m;
    for (const auto* s : ok) {
      const auto& r = s->stats.records[i];
      m.mean_delta_r += r.mean_delta_r / k;
      m.loss_sas += r.loss_sas / k;
      m.loss_sa += r.loss_sa / k;
      m.source_return += r.source_return / k;
      m.target_return += r.target_return / k;
      m.target_success += r.target_success / k;
    }
    agg += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}",
                       ok.front()->stats.records[i].iter, m.mean_delta_r, m.loss_sas, m.loss_sa,
                       m.source_return, m.target_return, m.target_success);
    for (const auto* s : ok) agg += fmt::format(",{:.17g}", s->stats.records[i].target_success);
    for (const auto* s : ok) agg += fmt::format(",{:.17g}", s->stats.records[i].mean_delta_r);
    agg += "\n";
  }
  write_file(dir / "aggregate.csv", agg, result.files);

  PlotSpec success{"iter", {"target_success"}, {}, fmt::format("{}: target success", to_string(cfg.kind)),
                   "iteration", "target success"};
  PlotSpec dr{"iter", {"mean_delta_r"}, {}, fmt::format("{}: mean reward correction", to_string(cfg.kind)),
              "iteration", "mean delta r"};
  for (const auto* s : ok) {
    success.faint.push_back(fmt::format("target_success_seed{}", s->seed));
    dr.faint.push_back(fmt::format("mean_delta_r_seed{}", s->seed));
  }
  maybe_plot(cfg, dir, agg, success, "target_success.svg", result.files);
  maybe_plot(cfg, dir, agg, dr, "delta_r.svg", result.files);
}

void run_archery(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                 ExperimentResult& result) {
  const std::size_t n = cfg.seeds.size();
  std::vector<std::optional<ArcheryCurves>> curves(n);
  std::vector<std::string> errors(n);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    try {
      curves[i] = run_archery_seed(cfg.archery, cfg.seeds[i]);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  std::string summary =
      "seed,ok,argmax_target,argmax_source,argmax_source_modified,target_success_source_opt,"
      "target_success_modified_opt,error\n";
  std::vector<const ArcheryCurves*> ok;
  for (std::size_t i = 0; i < n; ++i) {
    SeedOutcome so;
    so.seed = cfg.seeds[i];
    so.ok = curves[i].has_value();
    so.error = errors[i];
    if (!so.ok) {
      result.exit_code = 2;
      summary += fmt::format("{},0,nan,nan,nan,nan,nan,{}\n", so.seed, quote(so.error));
      result.seeds.push_back(so);
      continue;
    }
    const auto& c = *curves[i];
    so.final_target_success = c.target_eval_modified_opt.success_rate;
    result.seeds.push_back(so);
    std::ostringstream csv;
    write_archery_csv(csv, c);
    write_file(dir / fmt::format("archery_seed_{}.csv", so.seed), csv.str(), result.files);
    summary += fmt::format("{},1,{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},\"\"\n", so.seed,
                           c.argmax_target, c.argmax_source, c.argmax_source_modified,
                           c.target_eval_source_opt.success_rate,
                           c.target_eval_modified_opt.success_rate);
    result.archery.push_back(c);
  }
  for (const auto& c : result.archery) ok.push_back(&c);
  write_file(dir / "archery_summary.csv", summary, result.files);
  if (ok.empty()) return;

  ArcheryCurves mean;
  mean.theta_deg = ok.front()->theta_deg;
  const std::size_t pts = mean.theta_deg.size();
  mean.target.assign(pts, 0.0);
  mean.source.assign(pts, 0.0);
  mean.source_modified.assign(pts, 0.0);
  const double k = static_cast<double>(ok.size());
  for (const auto* c : ok) {
    for (std::size_t j = 0; j < pts; ++j) {
      mean.target[j] += c->target[j] / k;
      mean.source[j] += c->source[j] / k;
      mean.source_modified[j] += c->source_modified[j] / k;
    }
  }
  std::ostringstream agg;
  write_archery_csv(agg, mean);
  write_file(dir / "archery.csv", agg.str(), result.files);
  maybe_plot(cfg, dir, agg.str(),
             PlotSpec{"theta_deg", {"target", "source", "source_modified"}, {},
                      "archery: log-mean-exp objective vs aim angle", "theta (deg)", "J(theta)"},
             "archery.svg", result.files);
}

void run_theory(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                ExperimentResult& result) {
  const std::size_t n = cfg.seeds.size();
  std::vector<TheoryReport> reports(n);
  std::vector<std::string> errors(n);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    TheorySuiteOptions opts = cfg.theory;
    opts.seed = cfg.seeds[i];
    try {
      reports[i] = run_theory_suite(opts);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    SeedOutcome so;
    so.seed = cfg.seeds[i];
    so.ok = errors[i].empty();
    so.error = errors[i];
    if (!so.ok) result.exit_code = 2;
    result.seeds.push_back(so);
    for (auto& c : reports[i].checks) result.theory.checks.push_back(std::move(c));
  }
  std::ostringstream csv, txt;
  write_theory_csv(csv, result.theory);
  write_theory_summary(txt, result.theory);
  write_file(dir / "theory_report.csv", csv.str(), result.files);
  write_file(dir / "theory_summary.txt", txt.str(), result.files);
  if (result.exit_code == 0 && !result.theory.all_passed()) result.exit_code = 3;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& root) {
  validate_experiment(cfg);
  const std::filesystem::path dir = root / cfg.output_dir;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw ConfigError(fmt::format("output directory '{}' is not writable", dir.string()));
  }
  ExperimentResult result;
  write_file(dir / "config.ini", emit_config(cfg), result.files);
  switch (cfg.kind) {
    case ExperimentKind::archery_sweep: run_archery(cfg, dir, result); break;
    case ExperimentKind::theory_suite: run_theory(cfg, dir, result); break;
    default: run_gridworld(cfg, dir, result); break;
  }
  return result;
}

// ---- plots ----

PlotSpec parse_plot_spec(const std::string& text) {
  PlotSpec spec;
  std::string body = text;
  if (body.find('\n') == std::string::npos) std::replace(body.begin(), body.end(), ';', '\n');
  std::istringstream in(body);
  std::size_t lineno = 0;
  auto names = [](const std::string& v) {
    std::vector<std::string> out;
    for (auto& s : split(v, ',')) {
      if (!s.empty()) out.push_back(s);
    }
    return out;
  };
  for (std::string raw; std::getline(in, raw);) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed line, expected 'key = value'", lineno);
    const std::string key = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
    try {
      if (key == "x") spec.x = v;
      else if (key == "y") spec.y = names(v);
      else if (key == "faint") spec.faint = names(v);
      else if (key == "title") spec.title = v;
      else if (key == "x_label") spec.x_label = v;
      else if (key == "y_label") spec.y_label = v;
      else if (key == "width") spec.width = static_cast<int>(parse_size(v));
      else if (key == "height") spec.height = static_cast<int>(parse_size(v));
      else throw ConfigError(fmt::format("unknown key '{}'", key), lineno);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(fmt::format("{}: {}", key, e.what()), lineno);
    }
  }
  if (spec.x.empty() || spec.y.empty()) throw ConfigError("plot spec needs 'x' and 'y'");
  if (spec.width < 100 || spec.height < 100) throw ConfigError("plot size must be at least 100x100");
  return spec;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') cur += c, ++i;
      else if (c == '"') quoted = false;
      else cur += c;
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::vector<double> CsvTable::column(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw std::invalid_argument(fmt::format("missing column '{}'", name));
  const auto j = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[j]);
  return out;
}

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("csv: empty input");
  t.columns = split_csv_line(line);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.columns.size()) {
      throw std::invalid_argument(fmt::format("csv: row {} has {} cells, header has {}",
                                              t.rows.size() + 1, cells.size(), t.columns.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (auto& c : cells) {
      const std::string v = trim(c);
      double x = std::numeric_limits<double>::quiet_NaN();  // text cells read as NaN
      try {
        x = parse_double(v);
      } catch (const std::invalid_argument&) {
      }
      row.push_back(x);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

}  // namespace

std::string emit_plot(const CsvTable& table, const PlotSpec& spec) {
  const std::vector<double> xs = table.column(spec.x);
  std::vector<std::vector<double>> ys, faint;
  for (const auto& y : spec.y) ys.push_back(table.column(y));
  for (const auto& y : spec.faint) faint.push_back(table.column(y));

  double x0 = kPosInf, x1 = kNegInf, y0 = kPosInf, y1 = kNegInf;
  auto span_y = [&](const std::vector<double>& col) {
    for (std::size_t i = 0; i < col.size(); ++i) {
      if (!std::isfinite(xs[i]) || !std::isfinite(col[i])) continue;
      x0 = std::min(x0, xs[i]);
      x1 = std::max(x1, xs[i]);
      y0 = std::min(y0, col[i]);
      y1 = std::max(y1, col[i]);
    }
  };
  for (const auto& c : ys) span_y(c);
  for (const auto& c : faint) span_y(c);
  if (x0 > x1) x0 = 0.0, x1 = 1.0;
  if (y0 > y1) y0 = 0.0, y1 = 1.0;
  if (x0 == x1) x0 -= 0.5, x1 += 0.5;
  if (y0 == y1) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const double left = 70, right = 20, top = 40, bottom = 50;
  const double W = spec.width, H = spec.height;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::string s;
  s += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
      "font-family=\"sans-serif\" font-size=\"11\">\n",
      spec.width, spec.height, spec.width, spec.height);
  s += fmt::format("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n", spec.width,
                   spec.height);
  s += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"none\" "
                   "stroke=\"black\"/>\n",
                   left, top, pw, ph);
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
    s += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"#ddd\"/>\n",
                     px(fx), top, top + ph);
    s += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{:.3g}</text>\n", px(fx),
                     top + ph + 15, fx);
    s += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\" stroke=\"#ddd\"/>\n",
                     left, py(fy), left + pw);
    s += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{:.3g}</text>\n", left - 5,
                     py(fy) + 4, fy);
  }
  if (!spec.title.empty()) {
    s += fmt::format("<text x=\"{:.2f}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                     W / 2, xml_escape(spec.title));
  }
  s += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n", left + pw / 2,
                   H - 12, xml_escape(spec.x_label.empty() ? spec.x : spec.x_label));
  if (!spec.y_label.empty()) {
    s += fmt::format(
        "<text x=\"15\" y=\"{0:.2f}\" text-anchor=\"middle\" transform=\"rotate(-90 15 {0:.2f})\">{1}</text>\n",
        top + ph / 2, xml_escape(spec.y_label));
  }

  auto polyline = [&](const std::vector<double>& col, const char* color, const char* extra) {
    std::string pts;
    for (std::size_t i = 0; i < col.size(); ++i) {
      if (!std::isfinite(xs[i]) || !std::isfinite(col[i])) continue;
      pts += fmt::format("{}{:.2f},{:.2f}", pts.empty() ? "" : " ", px(xs[i]), py(col[i]));
    }
    return fmt::format("<polyline fill=\"none\" stroke=\"{}\" {} points=\"{}\"/>\n", color, extra, pts);
  };
  for (const auto& c : faint) s += polyline(c, kPalette[0], "stroke-width=\"1\" stroke-opacity=\"0.3\"");
  for (std::size_t k = 0; k < ys.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    s += polyline(ys[k], color, "stroke-width=\"2\"");
    const double ly = top + 14 + 14.0 * static_cast<double>(k);
    s += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                     left + pw - 140, ly - 4, left + pw - 120, ly - 4, color);
    s += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\">{}</text>\n", left + pw - 115, ly,
                     xml_escape(spec.y[k]));
  }
  s += "</svg>\n";
  return s;
}

void emit_plot(const std::filesystem::path& csv_path, const PlotSpec& spec,
               const std::filesystem::path& svg_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::invalid_argument(fmt::format("cannot read '{}'", csv_path.string()));
  const std::string svg = emit_plot(read_csv(in), spec);
  std::ofstream out(svg_path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", svg_path.string()));
  out << svg;
}

}  // namespace darc
