#include "darc/darc_loop.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace darc {

std::optional<Transition> ReplayBuffer::add(const Transition& tr) {
  ++inserted_;
  if (capacity_ == 0 || data_.size() < capacity_) {
    data_.push_back(tr);
    return std::nullopt;
  }
  Transition evicted = data_[head_];
  data_[head_] = tr;
  head_ = (head_ + 1) % capacity_;
  return evicted;
}

const Transition& ReplayBuffer::operator[](std::size_t i) const {
  if (i >= data_.size()) throw std::out_of_range("ReplayBuffer: index out of range");
  return data_[(head_ + i) % data_.size()];
}

const Transition& ReplayBuffer::sample(Rng& rng) const {
  if (data_.empty()) throw std::logic_error("ReplayBuffer: sampling from an empty buffer");
  return data_[rng.uniform_index(data_.size())];
}

std::vector<Transition> ReplayBuffer::contents() const {
  std::vector<Transition> out;
  out.reserve(data_.size());
  for (std::size_t i = 0; i < data_.size(); ++i) out.push_back((*this)[i]);
  return out;
}

const char* to_string(ClassifierKind k) { return k == ClassifierKind::tabular ? "tabular" : "net"; }

const char* to_string(DeltaRMode m) {
  switch (m) {
    case DeltaRMode::full: return "full";
    case DeltaRMode::sas_only: return "sas_only";
    case DeltaRMode::state_only: return "state_only";
  }
  return "?";
}

const char* to_string(Collection c) { return c == Collection::policy ? "policy" : "uniform"; }

const char* to_string(TimeRelabel r) {
  switch (r) {
    case TimeRelabel::none: return "none";
    case TimeRelabel::random: return "random";
    case TimeRelabel::all: return "all";
  }
  return "?";
}

const char* to_string(QInit q) { return q == QInit::zero ? "zero" : "max_entropy"; }

void validate_config(const DarcConfig& cfg) {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  need(cfg.num_iterations >= 1, "num_iterations must be >= 1");
  need(cfg.target_collect_period >= 1, "target_collect_period must be >= 1");
  need(cfg.rl_batch_size >= 1, "rl_batch_size must be >= 1");
  need(cfg.target_update_multiplier >= 1, "target_update_multiplier must be >= 1");
  need(cfg.eval_every >= 1, "eval_every must be >= 1");
  need(cfg.eval_episodes >= 1, "eval_episodes must be >= 1");
  need(cfg.smoothing > 0.0, "smoothing must be > 0");
  need(!cfg.clamp_bound || *cfg.clamp_bound > 0.0, "clamp_bound must be > 0");
  need(cfg.schedule.alpha0 > 0.0 && cfg.schedule.alpha0 <= 1.0, "alpha0 must lie in (0, 1]");
  need(cfg.schedule.tau > 0.0, "tau must be > 0");
  need(!(cfg.classifier == ClassifierKind::net && cfg.delta_r_mode == DeltaRMode::state_only),
       "delta_r_mode state_only requires the tabular classifier");
  need(cfg.net.batch_size >= 2, "net batch_size must be >= 2");
}

double importance_weight(double delta_r, std::optional<double> clamp_bound) {
  return std::exp(clamp_delta_r(delta_r, clamp_bound));
}

namespace {

enum class Mode { darc, rl_source, rl_target, importance };

double rollout_soft_return(const TabularMDP& mdp, const StochasticPolicy& pi,
                           const Trajectory& traj) {
  double ret = 0.0;
  for (const auto& tr : traj) ret += mdp.r(tr.s, tr.a) + entropy_of(pi.row(tr.t, tr.s));
  return ret;
}

class Runner {
 public:
  Runner(DomainPair& pair, const DarcConfig& cfg)
      : pair_(pair),
        cfg_(cfg),
        S_(pair.source.num_states),
        A_(pair.source.num_actions),
        H_(pair.source.horizon),
        root_(cfg.seed),
        src_rng_(root_.split("source_rollouts")),
        tgt_rng_(root_.split("target_rollouts")),
        rl_rng_(root_.split("rl_updates")),
        clf_rng_(root_.split("classifier")),
        eval_rng_(root_.split("evaluation")),
        source_buf_(cfg.buffer_capacity),
        target_buf_(cfg.buffer_capacity),
        counts_(empty_classifiers(S_, A_, cfg.smoothing)),
        learner_(H_, S_, A_, cfg.schedule),
        dr_(S_ * A_ * S_, 0.0),
        start_(std::chrono::steady_clock::now()) {
    validate_config(cfg);
    if (!check_support(pair).ok) {
      std::fprintf(stderr,
                   "warning: target support is not contained in source support; "
                   "continuing with clamped reward correction\n");
    }
    if (cfg.q_init == QInit::max_entropy) {
      SoftQTable& q = learner_.table();
      const double log_a = std::log(static_cast<double>(A_));
      for (std::size_t t = 0; t < H_; ++t)
        for (std::size_t s = 0; s < S_; ++s)
          for (std::size_t a = 0; a < A_; ++a)
            q.at(t, s, a) = static_cast<double>(H_ - t - 1) * log_a;
    }
    for (std::size_t s : cfg.success_states) {
      if (s >= S_) throw std::invalid_argument("success state out of range");
    }
    if (cfg.classifier == ClassifierKind::net) {
      Rng init = clf_rng_.split("init");
      NetClassifierPair net =
          init_net_pair(S_ + A_, S_ + A_ + S_, cfg.net.hidden, cfg.net.noise_std, init);
      net_.emplace(std::move(net), cfg.net);
      build_triple_features();
    }
  }

  void run(Mode mode, std::size_t iterations) {
    for (std::size_t k = 0; k < iterations && !stats_.diverged; ++k) step(mode);
  }

  TrainResult result() {
    std::vector<double> dr;
    if (used_classifier_) dr = dr_;
    return {learner_.policy(), learner_.table(), std::move(stats_), std::move(dr)};
  }

 private:
  void step(Mode mode) {
    const std::size_t i = ++iter_;
    const bool uses_classifier = mode == Mode::darc || mode == Mode::importance;
    const bool trains_on_target = mode == Mode::rl_target;
    TrainRecord rec;
    rec.iter = i;

    // Collect experience.
    const StochasticPolicy current = learner_.policy();
    const StochasticPolicy uniform = StochasticPolicy::uniform_for(pair_.source);
    Trajectory rollout;
    if (trains_on_target) {
      const StochasticPolicy& pi = cfg_.source_collection == Collection::policy ? current : uniform;
      rollout = sample_trajectory(pair_.target, pi, tgt_rng_);
      for (const auto& tr : rollout) target_buf_.add(tr);
      ++stats_.target_rollouts;
      rec.source_return = rollout_soft_return(pair_.target, pi, rollout);
    } else {
      const StochasticPolicy& pi = cfg_.source_collection == Collection::policy ? current : uniform;
      rollout = sample_trajectory(pair_.source, pi, src_rng_);
      for (const auto& tr : rollout) {
        auto evicted = source_buf_.add(tr);
        if (uses_classifier) {
          record_transition(counts_, false, tr);
          if (evicted) record_transition(counts_, false, *evicted, -1.0);
        }
      }
      ++stats_.source_rollouts;
      rec.source_return = rollout_soft_return(pair_.source, pi, rollout);
      if (uses_classifier && i % cfg_.target_collect_period == 0) {
        const StochasticPolicy& tpi =
            cfg_.target_collection == Collection::policy ? current : uniform;
        for (const auto& tr : sample_trajectory(pair_.target, tpi, tgt_rng_)) {
          auto evicted = target_buf_.add(tr);
          record_transition(counts_, true, tr);
          if (evicted) record_transition(counts_, true, *evicted, -1.0);
        }
        ++stats_.target_rollouts;
      }
    }

    // Classifier update and the resulting correction table.
    const bool ready = uses_classifier && !source_buf_.empty() && !target_buf_.empty();
    if (ready) {
      used_classifier_ = true;
      try {
        update_classifier(rec);
      } catch (const ClassifierDivergence& e) {
        stats_.diverged = true;
        stats_.error = e.what();
        rec.target_return = last_eval_.mean_return;
        rec.target_success = last_eval_.success_rate;
        stats_.records.push_back(rec);
        return;
      }
      double sum = 0.0;
      for (const auto& tr : rollout) sum += dr_[index(tr.s, tr.a, tr.s_next)];
      rec.mean_delta_r = sum / static_cast<double>(rollout.size());
    }

    // Policy update on training-domain experience only.
    const bool active = ready && i > cfg_.warmup_iters;
    const ReplayBuffer& buf = trains_on_target ? target_buf_ : source_buf_;
    std::size_t updates = cfg_.rl_updates_per_iter;
    if (trains_on_target) updates *= cfg_.target_update_multiplier;
    TransitionReward reward;
    const TabularMDP& mdp = trains_on_target ? pair_.target : pair_.source;
    if (active && mode == Mode::darc) {
      reward = {[this, &mdp](std::size_t, std::size_t s, std::size_t a, std::size_t sn) {
                  return mdp.r(s, a) + dr_[index(s, a, sn)];
                },
                true, false};
    } else {
      reward = plain_reward(mdp);
    }
    std::vector<Transition> one(1);
    std::vector<double> w(1, 1.0);
    for (std::size_t u = 0; u < updates; ++u) {
      for (std::size_t b = 0; b < cfg_.rl_batch_size; ++b) {
        one[0] = buf.sample(rl_rng_);
        if (trains_on_target) ++stats_.target_transitions_in_policy_updates;
        if (active && mode == Mode::importance) {
          w[0] = importance_weight(dr_[index(one[0].s, one[0].a, one[0].s_next)], cfg_.clamp_bound);
        }
        std::span<const double> weights =
            mode == Mode::importance ? std::span<const double>(w) : std::span<const double>();
        switch (cfg_.relabel) {
          case TimeRelabel::none:
            learner_.update(one, reward, weights);
            break;
          case TimeRelabel::random:
            one[0].t = rl_rng_.uniform_index(H_);
            learner_.update(one, reward, weights);
            break;
          case TimeRelabel::all:
            for (std::size_t t = H_; t-- > 0;) {
              one[0].t = t;
              learner_.update(one, reward, weights);
            }
            break;
        }
        ++stats_.policy_updates;
      }
    }

    // Evaluation in the target domain.
    if (i == 1 || i % cfg_.eval_every == 0) {
      last_eval_ = evaluate_policy(pair_.target, learner_.policy(), cfg_.eval_episodes, eval_rng_,
                                   cfg_.success_states);
    }
    rec.target_return = last_eval_.mean_return;
    rec.target_success = last_eval_.success_rate;
    if (cfg_.record_wall_clock) {
      rec.wall_clock_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - start_)
                              .count();
    }
    stats_.records.push_back(rec);
  }

  std::size_t index(std::size_t s, std::size_t a, std::size_t sn) const {
    return (s * A_ + a) * S_ + sn;
  }

  void update_classifier(TrainRecord& rec) {
    if (cfg_.classifier == ClassifierKind::tabular) {
      for (std::size_t s = 0; s < S_; ++s)
        for (std::size_t a = 0; a < A_; ++a)
          for (std::size_t sn = 0; sn < S_; ++sn) {
            double v = 0.0;
            switch (cfg_.delta_r_mode) {
              case DeltaRMode::full:
                v = classifier_delta_r(counts_, s, a, sn, cfg_.clamp_bound);
                break;
              case DeltaRMode::sas_only:
                v = single_classifier_delta_r(counts_, SingleClassifier::sas_only, s, a, sn,
                                              cfg_.clamp_bound);
                break;
              case DeltaRMode::state_only:
                v = single_classifier_delta_r(counts_, SingleClassifier::state_only, s, a, sn,
                                              cfg_.clamp_bound);
                break;
            }
            dr_[index(s, a, sn)] = v;
          }
      tabular_losses(rec);
      return;
    }
    ClassifierLoss loss;
    for (std::size_t k = 0; k < cfg_.classifier_steps_per_iter; ++k) {
      loss = net_->step(net_batch());
    }
    rec.loss_sas = loss.sas;
    rec.loss_sa = loss.sa;
    const NetClassifierPair& net = net_->pair();
    Eigen::VectorXd d = cfg_.delta_r_mode == DeltaRMode::sas_only
                            ? net.sas_only_delta_r(triple_sa_, triple_sas_)
                            : net.delta_r(triple_sa_, triple_sas_);
    for (std::size_t j = 0; j < dr_.size(); ++j)
      dr_[j] = clamp_delta_r(d[static_cast<Eigen::Index>(j)], cfg_.clamp_bound);
  }

  // Cross-entropy of the counting classifiers on a fresh balanced batch.
  void tabular_losses(TrainRecord& rec) {
    const std::size_t half = std::max<std::size_t>(cfg_.net.batch_size / 2, 1);
    double l_sas = 0.0, l_sa = 0.0;
    for (bool is_target : {false, true}) {
      const ReplayBuffer& buf = is_target ? target_buf_ : source_buf_;
      for (std::size_t k = 0; k < half; ++k) {
        const Transition& tr = buf.sample(clf_rng_);
        const double p_sas = counts_.p_target_sas(tr.s, tr.a, tr.s_next);
        const double p_sa = counts_.p_target_sa(tr.s, tr.a);
        l_sas -= std::log(is_target ? p_sas : 1.0 - p_sas);
        l_sa -= std::log(is_target ? p_sa : 1.0 - p_sa);
      }
    }
    rec.loss_sas = l_sas / static_cast<double>(2 * half);
    rec.loss_sa = l_sa / static_cast<double>(2 * half);
  }

  ClassifierBatch net_batch() {
    const std::size_t n_src = cfg_.net.batch_size / 2;
    const std::size_t n_tgt = cfg_.net.batch_size - n_src;
    std::vector<Transition> src, tgt;
    for (std::size_t k = 0; k < n_src; ++k) src.push_back(source_buf_.sample(clf_rng_));
    for (std::size_t k = 0; k < n_tgt; ++k) tgt.push_back(target_buf_.sample(clf_rng_));
    ClassifierBatch b = full_batch(net_->pair(), one_hot_features(src, S_, A_),
                                   one_hot_features(tgt, S_, A_));
    const double sd = net_->pair().noise_std;
    if (sd > 0.0) {
      for (Eigen::Index k = 0; k < b.sa.size(); ++k) b.sa.data()[k] += clf_rng_.normal(0.0, sd);
      for (Eigen::Index k = 0; k < b.sas.size(); ++k) b.sas.data()[k] += clf_rng_.normal(0.0, sd);
    }
    return b;
  }

  void build_triple_features() {
    std::vector<Transition> all;
    all.reserve(S_ * A_ * S_);
    for (std::size_t s = 0; s < S_; ++s)
      for (std::size_t a = 0; a < A_; ++a)
        for (std::size_t sn = 0; sn < S_; ++sn) all.push_back({s, a, sn, 0.0, 0, false});
    ClassifierData d = one_hot_features(all, S_, A_);
    triple_sa_ = std::move(d.sa);
    triple_sas_ = std::move(d.sas);
  }

  DomainPair& pair_;
  const DarcConfig& cfg_;
  std::size_t S_, A_, H_;
  Rng root_, src_rng_, tgt_rng_, rl_rng_, clf_rng_, eval_rng_;
  ReplayBuffer source_buf_, target_buf_;
  TabularClassifierPair counts_;
  std::optional<NetTrainer> net_;
  Eigen::MatrixXd triple_sa_, triple_sas_;
  SoftQLearner learner_;
  std::vector<double> dr_;
  EvalResult last_eval_{};
  TrainStats stats_;
  std::size_t iter_ = 0;
  bool used_classifier_ = false;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

TrainResult run_darc(DomainPair& pair, const DarcConfig& cfg) {
  Runner r(pair, cfg);
  r.run(Mode::darc, cfg.num_iterations);
  return r.result();
}

TrainResult run_rl_on_source(DomainPair& pair, const DarcConfig& cfg) {
  Runner r(pair, cfg);
  r.run(Mode::rl_source, cfg.num_iterations);
  return r.result();
}

TrainResult run_rl_on_target(DomainPair& pair, const DarcConfig& cfg) {
  Runner r(pair, cfg);
  if (cfg.finetune_source_iters > 0) r.run(Mode::rl_source, cfg.finetune_source_iters);
  r.run(Mode::rl_target, cfg.num_iterations);
  return r.result();
}

TrainResult run_importance_weighting(DomainPair& pair, const DarcConfig& cfg) {
  Runner r(pair, cfg);
  r.run(Mode::importance, cfg.num_iterations);
  return r.result();
}

namespace {

bool is_success(std::size_t s, std::span<const std::size_t> success_states) {
  for (std::size_t x : success_states)
    if (x == s) return true;
  return false;
}

void wilson(EvalResult& r, double successes) {
  const double n = static_cast<double>(r.episodes);
  const double z = 1.959963984540054;
  const double p = successes / n;
  const double den = 1.0 + z * z / n;
  const double centre = (p + z * z / (2.0 * n)) / den;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / den;
  r.success_rate = p;
  r.success_ci_low = std::max(0.0, centre - half);
  r.success_ci_high = std::min(1.0, centre + half);
}

}  // namespace

EvalResult evaluate_policy(const TabularMDP& mdp, const StochasticPolicy& policy,
                           std::size_t n_episodes, Rng& rng,
                           std::span<const std::size_t> success_states) {
  if (n_episodes == 0) throw std::invalid_argument("evaluate_policy: need at least one episode");
  check_dimensions(mdp, policy);
  EvalResult r;
  r.episodes = n_episodes;
  double sum = 0.0, sum_sq = 0.0, successes = 0.0;
  for (std::size_t e = 0; e < n_episodes; ++e) {
    Trajectory traj = sample_trajectory(mdp, policy, rng);
    double ret = 0.0;
    bool hit = false;
    for (const auto& tr : traj) {
      ret += tr.r;
      hit = hit || is_success(tr.s, success_states) || is_success(tr.s_next, success_states);
    }
    sum += ret;
    sum_sq += ret * ret;
    if (hit) successes += 1.0;
  }
  const double n = static_cast<double>(n_episodes);
  r.mean_return = sum / n;
  r.return_se = n > 1 ? std::sqrt(std::max(0.0, sum_sq / n - r.mean_return * r.mean_return) / (n - 1))
                      : 0.0;
  wilson(r, successes);
  return r;
}

double exact_success_probability(const TabularMDP& mdp, const StochasticPolicy& policy,
                                 std::span<const std::size_t> success_states) {
  check_dimensions(mdp, policy);
  const std::size_t S = mdp.num_states, A = mdp.num_actions;
  std::vector<double> d = mdp.initial_dist;
  double absorbed = 0.0;
  auto absorb = [&] {
    for (std::size_t s : success_states) {
      absorbed += d[s];
      d[s] = 0.0;
    }
  };
  absorb();
  for (std::size_t t = 0; t < mdp.horizon; ++t) {
    std::vector<double> next(S, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      if (d[s] == 0.0) continue;
      for (std::size_t a = 0; a < A; ++a) {
        const double w = d[s] * policy.prob(t, s, a);
        if (w == 0.0) continue;
        auto row = mdp.row(s, a);
        for (std::size_t sn = 0; sn < S; ++sn) next[sn] += w * row[sn];
      }
    }
    d = std::move(next);
    absorb();
  }
  return absorbed;
}

EvalResult evaluate_archery(double theta_deg, Domain domain, const ArcherySpec& spec,
                            std::size_t n_episodes, Rng& rng, double threshold) {
  if (n_episodes == 0) throw std::invalid_argument("evaluate_archery: need at least one episode");
  EvalResult r;
  r.episodes = n_episodes;
  double sum = 0.0, sum_sq = 0.0, successes = 0.0;
  for (std::size_t e = 0; e < n_episodes; ++e) {
    const double sp = archery_sample(theta_deg, domain, spec, rng);
    const double ret = archery_reward(sp);
    sum += ret;
    sum_sq += ret * ret;
    if (std::abs(sp) < threshold) successes += 1.0;
  }
  const double n = static_cast<double>(n_episodes);
  r.mean_return = sum / n;
  r.return_se = n > 1 ? std::sqrt(std::max(0.0, sum_sq / n - r.mean_return * r.mean_return) / (n - 1))
                      : 0.0;
  wilson(r, successes);
  return r;
}

void write_train_stats_csv(std::ostream& out, const TrainStats& stats) {
  out << "iter,mean_delta_r,loss_sas,loss_sa,source_return,target_return,target_success,"
         "wall_clock_ms\n";
  for (const auto& r : stats.records) {
    out << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.iter,
                       r.mean_delta_r, r.loss_sas, r.loss_sa, r.source_return, r.target_return,
                       r.target_success, r.wall_clock_ms);
  }
}

}  // namespace darc
