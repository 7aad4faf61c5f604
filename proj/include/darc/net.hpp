#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "darc/mdp.hpp"
#include "darc/rng.hpp"

namespace darc {

// Fully connected network with ReLU hidden layers and a linear output.
// Parameters live in one flat vector: for each layer, W (out x in, column
// major) then b.
class Mlp {
 public:
  Mlp() = default;
  // sizes = {input, hidden..., output}. He-normal weights, zero biases.
  Mlp(std::vector<std::size_t> sizes, Rng& rng);

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t num_layers() const { return sizes_.size() - 1; }
  std::size_t num_params() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  // x holds one sample per column.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;

  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;  // input of each layer (post-activation)
  };
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& cache) const;
  // Adds dLoss/dparams into grad given dLoss/doutput.
  void backward(const Cache& cache, const Eigen::MatrixXd& grad_out,
                std::vector<double>& grad) const;

  // Rebuilds from explicit sizes and parameters (checkpoint loading).
  static Mlp from_params(std::vector<std::size_t> sizes, std::vector<double> params);

 private:
  std::size_t offset(std::size_t layer) const;
  std::vector<std::size_t> sizes_;
  std::vector<double> params_;
};

// Adaptive-moment optimizer state for one parameter vector.
struct AdamState {
  std::vector<double> m, v;
  std::size_t step = 0;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 128;

  void apply(std::vector<double>& params, const std::vector<double>& grad);
};

// Per-feature affine map x -> (x - mean) / scale.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer identity(std::size_t dim);
  // Zero mean, unit variance over the columns of x; constant features keep
  // scale 1.
  static Standardizer fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

// Features of labelled-by-domain data, one sample per column.
struct ClassifierData {
  Eigen::MatrixXd sa;   // (s, a) features
  Eigen::MatrixXd sas;  // (s, a, s') features
  std::size_t size() const { return static_cast<std::size_t>(sa.cols()); }
};

// One-hot features for a finite MDP: sa = [e_s, e_a], sas = [e_s, e_a, e_s'].
ClassifierData one_hot_features(std::span<const Transition> transitions, std::size_t num_states,
                                std::size_t num_actions);

// Archery features: sa = [theta_deg], sas = [theta_deg, s'].
struct ArcheryShot {
  double theta_deg = 0.0;
  double s_prime = 0.0;
};
ClassifierData archery_features(std::span<const ArcheryShot> shots);

// SAS logits = f_SAS(x_sas) + f_SA(x_sa); SA logits = f_SA(x_sa). Output 1
// is "target", output 0 is "source".
struct NetClassifierPair {
  Mlp f_sa;
  Mlp f_sas;
  double noise_std = 1.0;
  Standardizer sa_norm;
  Standardizer sas_norm;
  bool trained = false;

  // Eq. 3 from the four log-probabilities; columns of the inputs are samples
  // in raw (unstandardized) feature units.
  Eigen::VectorXd delta_r(const Eigen::MatrixXd& x_sa, const Eigen::MatrixXd& x_sas) const;
  // Only the SAS classifier: log p(t|s,a,s') - log p(s|s,a,s').
  Eigen::VectorXd sas_only_delta_r(const Eigen::MatrixXd& x_sa,
                                   const Eigen::MatrixXd& x_sas) const;
  // p(target | s, a) for each column.
  Eigen::VectorXd p_target_sa(const Eigen::MatrixXd& x_sa) const;
  Eigen::VectorXd p_target_sas(const Eigen::MatrixXd& x_sa, const Eigen::MatrixXd& x_sas) const;
};

// He-initialized pair with identity standardization.
NetClassifierPair init_net_pair(std::size_t sa_dim, std::size_t sas_dim,
                                const std::vector<std::size_t>& hidden, double noise_std,
                                Rng& rng);

// A batch in standardized units, noise already applied; label 1 = target.
struct ClassifierBatch {
  Eigen::MatrixXd sa;
  Eigen::MatrixXd sas;
  std::vector<int> labels;
};

struct ClassifierLoss {
  double sas = 0.0;
  double sa = 0.0;
  double total() const { return sas + sa; }
};

// Mean cross-entropy of both classifiers. With non-null gradient vectors,
// also writes d(total)/dparams; SAS-loss gradients reach f_SA through the
// residual sum.
ClassifierLoss classifier_loss(const NetClassifierPair& pair, const ClassifierBatch& batch,
                               std::vector<double>* grad_sa = nullptr,
                               std::vector<double>* grad_sas = nullptr);

struct GradientCheck {
  std::size_t checked = 0;
  std::size_t kinks_skipped = 0;
  double max_rel_error = 0.0;
};

// Central differences on the total loss for n_params random coordinates
// drawn across both networks. Relative error |g - fd| / max(|g| + |fd|, 1e-12).
// A coordinate whose +-step flips any ReLU on the batch is redrawn (the
// difference quotient straddles a kink there).
GradientCheck check_gradients(const NetClassifierPair& pair, const ClassifierBatch& batch,
                              std::size_t n_params, Rng& rng, double step = 1e-4);

class ClassifierDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NetTrainConfig {
  std::vector<std::size_t> hidden{32};
  double noise_std = 1.0;
  double learning_rate = 3e-4;
  std::size_t batch_size = 128;  // half drawn from each domain
  std::size_t steps = 1000;
  double validation_fraction = 0.1;
  std::size_t eval_every = 100;
  std::size_t patience = 3;  // evaluations without improvement; 0 disables
  bool standardize = true;   // fit input standardization on the source data
};

struct NetTrainLog {
  std::vector<std::size_t> step;
  std::vector<ClassifierLoss> train;
  std::vector<ClassifierLoss> validation;
  std::size_t steps_run = 0;
  bool stopped_early = false;
};

// Trains from scratch on balanced batches. Throws ClassifierDivergence on a
// non-finite loss.
NetClassifierPair train_net_pair(const ClassifierData& source, const ClassifierData& target,
                                 const NetTrainConfig& cfg, Rng& rng, NetTrainLog* log = nullptr);

// Continues training an existing pair in place (no validation split).
class NetTrainer {
 public:
  NetTrainer(NetClassifierPair pair, const NetTrainConfig& cfg);
  ClassifierLoss train_steps(const ClassifierData& source, const ClassifierData& target,
                             std::size_t steps, Rng& rng);
  // One optimizer step on a prepared batch (standardized, noise applied).
  ClassifierLoss step(const ClassifierBatch& batch);
  const NetClassifierPair& pair() const { return pair_; }

 private:
  NetClassifierPair pair_;
  NetTrainConfig cfg_;
  AdamState adam_sa_, adam_sas_;
};

// Draws a balanced batch (half per domain, with replacement), standardizes it
// and adds input noise of the pair's noise_std.
ClassifierBatch sample_batch(const NetClassifierPair& pair, const ClassifierData& source,
                             const ClassifierData& target, std::size_t batch_size, Rng& rng,
                             bool add_noise);

// Whole dataset, noise-free, standardized.
ClassifierBatch full_batch(const NetClassifierPair& pair, const ClassifierData& source,
                           const ClassifierData& target);

void write_net_pair(std::ostream& out, const NetClassifierPair& pair);
NetClassifierPair read_net_pair(std::istream& in);

}  // namespace darc
