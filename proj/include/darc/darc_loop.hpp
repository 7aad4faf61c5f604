#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "darc/domains.hpp"
#include "darc/maxent.hpp"
#include "darc/mdp.hpp"
#include "darc/net.hpp"
#include "darc/reward_correction.hpp"
#include "darc/rng.hpp"

namespace darc {

// Bounded FIFO of transitions; capacity 0 means unbounded.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 0) : capacity_(capacity) {}

  // Returns the evicted transition when the buffer was full.
  std::optional<Transition> add(const Transition& tr);
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }
  // Oldest first.
  const Transition& operator[](std::size_t i) const;
  const Transition& sample(Rng& rng) const;
  std::vector<Transition> contents() const;

 private:
  std::size_t capacity_;
  std::vector<Transition> data_;
  std::size_t head_ = 0;  // index of the oldest element once full
  std::uint64_t inserted_ = 0;
};

enum class ClassifierKind { tabular, net };
enum class DeltaRMode { full, sas_only, state_only };
// Which policy gathers rollouts in a domain.
enum class Collection { policy, uniform };
// How a sampled transition is stamped with a timestep for the Q update. The
// dynamics and reward are stationary, so (s, a, s') is a valid sample at any t.
enum class TimeRelabel { none, random, all };
// Initial soft Q values. zero is pessimistic next to the entropy bonus an
// unexplored action would still earn; max_entropy starts every entry at the
// soft value of a reward-free MDP, (H - t - 1) log A.
enum class QInit { zero, max_entropy };

const char* to_string(ClassifierKind k);
const char* to_string(DeltaRMode m);
const char* to_string(Collection c);
const char* to_string(TimeRelabel r);
const char* to_string(QInit q);

struct DarcConfig {
  std::size_t num_iterations = 1000;
  std::size_t target_collect_period = 10;
  std::size_t warmup_iters = 0;

  ClassifierKind classifier = ClassifierKind::tabular;
  DeltaRMode delta_r_mode = DeltaRMode::full;
  double smoothing = 0.5;
  NetTrainConfig net{};
  std::size_t classifier_steps_per_iter = 1;
  std::optional<double> clamp_bound = kDefaultClampBound;

  LearningRateSchedule schedule{};
  std::size_t rl_updates_per_iter = 1;
  std::size_t rl_batch_size = 32;
  TimeRelabel relabel = TimeRelabel::all;
  QInit q_init = QInit::max_entropy;
  std::size_t target_update_multiplier = 1;  // RL on target only

  std::size_t buffer_capacity = 0;
  Collection source_collection = Collection::policy;
  Collection target_collection = Collection::policy;

  std::size_t eval_every = 10;
  std::size_t eval_episodes = 100;
  // Reaching any of these states counts as success in evaluation.
  std::vector<std::size_t> success_states;

  // RL on target: first train on source for this many iterations, then keep
  // the table and continue on target.
  std::size_t finetune_source_iters = 0;

  bool record_wall_clock = false;  // off keeps stats bit-reproducible
  std::uint64_t seed = 0;
};

// Throws std::invalid_argument naming the offending field.
void validate_config(const DarcConfig& cfg);

struct TrainRecord {
  std::size_t iter = 0;
  double mean_delta_r = 0.0;  // over this iteration's source rollout
  double loss_sas = 0.0;
  double loss_sa = 0.0;
  double source_return = 0.0;  // entropy-regularized return of the training rollout
  double target_return = 0.0;  // latest evaluation
  double target_success = 0.0;
  double wall_clock_ms = 0.0;
};

struct TrainStats {
  std::vector<TrainRecord> records;
  std::size_t source_rollouts = 0;
  std::size_t target_rollouts = 0;
  std::size_t policy_updates = 0;
  std::size_t target_transitions_in_policy_updates = 0;
  bool diverged = false;
  std::string error;
};

struct TrainResult {
  StochasticPolicy policy;
  SoftQTable q;
  TrainStats stats;
  // Last correction table, flat [s][a][s'], clamped; empty when unused.
  std::vector<double> delta_r;
};

TrainResult run_darc(DomainPair& pair, const DarcConfig& cfg);
TrainResult run_rl_on_source(DomainPair& pair, const DarcConfig& cfg);
TrainResult run_rl_on_target(DomainPair& pair, const DarcConfig& cfg);
TrainResult run_importance_weighting(DomainPair& pair, const DarcConfig& cfg);

// exp(clamped dr) as an update weight.
double importance_weight(double delta_r, std::optional<double> clamp_bound);

struct EvalResult {
  std::size_t episodes = 0;
  double mean_return = 0.0;
  double return_se = 0.0;
  double success_rate = 0.0;
  double success_ci_low = 0.0;  // Wilson 95% interval
  double success_ci_high = 0.0;
};

// Success: some visited state (including the last s') is in success_states.
EvalResult evaluate_policy(const TabularMDP& mdp, const StochasticPolicy& policy,
                           std::size_t n_episodes, Rng& rng,
                           std::span<const std::size_t> success_states);

// Exact probability of visiting success_states within the horizon.
double exact_success_probability(const TabularMDP& mdp, const StochasticPolicy& policy,
                                 std::span<const std::size_t> success_states);

// Archery: a shot succeeds when |s'| < threshold (meters).
EvalResult evaluate_archery(double theta_deg, Domain domain, const ArcherySpec& spec,
                            std::size_t n_episodes, Rng& rng, double threshold = 1.0);

void write_train_stats_csv(std::ostream& out, const TrainStats& stats);

}  // namespace darc
