#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "darc/darc_loop.hpp"
#include "darc/domains.hpp"
#include "darc/net.hpp"
#include "darc/theory.hpp"

namespace darc {

enum class ExperimentKind {
  darc,
  rl_source,
  rl_target,
  importance,
  ablation_single_classifier,  // DARC with the SAS classifier only
  matl_style,                  // DARC with an (s, s') classifier
  archery_sweep,
  theory_suite,
};

const char* to_string(ExperimentKind k);

enum class GridKind { wall, flip };

// Parse or semantic error in a config; line is 0 when not tied to one line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::size_t line = 0);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct ArcheryExperiment {
  ArcherySpec spec{};
  std::size_t episodes_per_domain = 10000;
  std::size_t grid_points = 81;
  std::size_t samples_per_point = 10000;
  double success_threshold = 1.0;  // meters
  NetTrainConfig net = default_net();

  // One hidden layer of 32, lr 3e-3, batch 1024, 3000 steps, input noise 0.1.
  static NetTrainConfig default_net();
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::darc;
  GridKind grid = GridKind::wall;
  GridworldSpec gridworld{};
  DarcConfig darc{};
  ArcheryExperiment archery{};
  TheorySuiteOptions theory{};  // its seed is replaced by each entry of seeds
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "results";
  std::size_t threads = 1;
  bool plot = true;
};

// Line-based `key = value` with `[section]` headers; '#' starts a comment.
// Only whole-line comments, since maps use '#' for walls. Sections: top
// level, [domain], [darc], [net] (DARC network classifier), [archery],
// [archery_net], [theory]; [darc] keys are also accepted at the top level.
// Unknown keys, repeated keys and malformed lines
// throw ConfigError with the line number.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Every field, in a form parse_config reads back to the same config.
std::string emit_config(const ExperimentConfig& cfg);
// Semantic checks beyond parsing; throws ConfigError.
void validate_experiment(const ExperimentConfig& cfg);

// The config's gridworld pair, with success states set to the goal.
DomainPair build_domain(const ExperimentConfig& cfg);
// DarcConfig as run for this kind (mode switch, success states filled in).
DarcConfig effective_darc_config(const ExperimentConfig& cfg);

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  TrainStats stats;
  double final_target_success = 0.0;
  double final_target_return = 0.0;
  double exact_target_success = 0.0;
};

// One training run for a gridworld kind.
SeedOutcome run_gridworld_seed(const ExperimentConfig& cfg, std::uint64_t seed);

struct ArcheryCurves {
  std::vector<double> theta_deg;
  std::vector<double> target;
  std::vector<double> source;
  std::vector<double> source_modified;
  double argmax_target = 0.0;
  double argmax_source = 0.0;
  double argmax_source_modified = 0.0;
  EvalResult target_eval_source_opt;    // plain-source optimum shot in the target
  EvalResult target_eval_modified_opt;  // modified-objective optimum shot in the target
};

// Trains the network classifier pair on 10k shots per domain (theta uniform
// over the angle range) and sweeps the three objectives.
ArcheryCurves run_archery_seed(const ArcheryExperiment& cfg, std::uint64_t seed,
                               NetClassifierPair* trained = nullptr);

void write_archery_csv(std::ostream& out, const ArcheryCurves& curves);

struct ExperimentResult {
  int exit_code = 0;  // 0 ok, 2 some seed failed, 3 theory check failed
  std::vector<std::filesystem::path> files;
  std::vector<SeedOutcome> seeds;
  std::vector<ArcheryCurves> archery;
  TheoryReport theory;
};

// Runs every seed (in cfg.threads workers) and writes per-seed and aggregate
// CSVs under root / cfg.output_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& root);

// Output root from DARC_OUTPUT_ROOT, else the working directory.
std::filesystem::path output_root();

struct PlotSpec {
  std::string x;
  std::vector<std::string> y;
  std::vector<std::string> faint;  // thin translucent traces, no legend entry
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 640;
  int height = 400;
};

// `key = value` lines (or ';' separated): x, y and faint (comma separated),
// title, x_label, y_label, width, height.
PlotSpec parse_plot_spec(const std::string& text);

// Minimal CSV reader for numeric tables with a header row.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  // Throws std::invalid_argument naming a missing column.
  std::vector<double> column(const std::string& name) const;
};
CsvTable read_csv(std::istream& in);

// Self-contained SVG line chart; identical input gives identical bytes.
// Throws std::invalid_argument naming a missing column.
std::string emit_plot(const CsvTable& table, const PlotSpec& spec);
void emit_plot(const std::filesystem::path& csv_path, const PlotSpec& spec,
               const std::filesystem::path& svg_path);

}  // namespace darc
