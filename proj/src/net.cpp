#include "darc/net.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace darc {

Mlp::Mlp(std::vector<std::size_t> sizes, Rng& rng) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw std::invalid_argument("Mlp: need input and output sizes");
  for (std::size_t n : sizes_)
    if (n == 0) throw std::invalid_argument("Mlp: zero-width layer");
  params_.assign(offset(num_layers()), 0.0);
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const double sd = std::sqrt(2.0 / static_cast<double>(sizes_[l]));
    const std::size_t n_w = sizes_[l] * sizes_[l + 1];
    for (std::size_t i = 0; i < n_w; ++i) params_[offset(l) + i] = rng.normal(0.0, sd);
  }
}

Mlp Mlp::from_params(std::vector<std::size_t> sizes, std::vector<double> params) {
  Mlp m;
  m.sizes_ = std::move(sizes);
  if (m.sizes_.size() < 2) throw std::invalid_argument("Mlp: need input and output sizes");
  if (params.size() != m.offset(m.num_layers())) {
    throw std::invalid_argument(fmt::format("Mlp: expected {} parameters, got {}",
                                            m.offset(m.num_layers()), params.size()));
  }
  m.params_ = std::move(params);
  return m;
}

std::size_t Mlp::offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) off += sizes_[l + 1] * (sizes_[l] + 1);
  return off;
}

namespace {

using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

}  // namespace

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Cache cache;
  return forward(x, cache);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache& cache) const {
  if (static_cast<std::size_t>(x.rows()) != input_dim()) {
    throw DimensionError(
        fmt::format("Mlp: input has {} features, expected {}", x.rows(), input_dim()));
  }
  cache.inputs.clear();
  cache.inputs.push_back(x);
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const auto in = static_cast<Eigen::Index>(sizes_[l]);
    const auto out = static_cast<Eigen::Index>(sizes_[l + 1]);
    ConstMatMap w(params_.data() + offset(l), out, in);
    ConstVecMap b(params_.data() + offset(l) + out * in, out);
    Eigen::MatrixXd z = w * h;
    z.colwise() += b;
    if (l + 1 < num_layers()) {
      h = z.cwiseMax(0.0);
      cache.inputs.push_back(h);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

void Mlp::backward(const Cache& cache, const Eigen::MatrixXd& grad_out,
                   std::vector<double>& grad) const {
  if (grad.size() != params_.size()) grad.assign(params_.size(), 0.0);
  Eigen::MatrixXd g = grad_out;
  for (std::size_t l = num_layers(); l-- > 0;) {
    const auto in = static_cast<Eigen::Index>(sizes_[l]);
    const auto out = static_cast<Eigen::Index>(sizes_[l + 1]);
    Eigen::Map<Eigen::MatrixXd> dw(grad.data() + offset(l), out, in);
    Eigen::Map<Eigen::VectorXd> db(grad.data() + offset(l) + out * in, out);
    dw.noalias() += g * cache.inputs[l].transpose();
    db += g.rowwise().sum();
    if (l == 0) break;
    ConstMatMap w(params_.data() + offset(l), out, in);
    Eigen::MatrixXd back = w.transpose() * g;
    g = back.cwiseProduct((cache.inputs[l].array() > 0.0).cast<double>().matrix());
  }
}

void AdamState::apply(std::vector<double>& params, const std::vector<double>& grad) {
  if (m.size() != params.size()) {
    m.assign(params.size(), 0.0);
    v.assign(params.size(), 0.0);
  }
  ++step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    params[i] -= learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + epsilon);
  }
}

Standardizer Standardizer::identity(std::size_t dim) {
  return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim)),
          Eigen::VectorXd::Ones(static_cast<Eigen::Index>(dim))};
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
  if (x.cols() == 0) throw std::invalid_argument("Standardizer: no samples");
  Standardizer out;
  out.mean = x.rowwise().mean();
  Eigen::MatrixXd centered = x.colwise() - out.mean;
  out.scale = (centered.array().square().rowwise().sum() / static_cast<double>(x.cols())).sqrt();
  for (Eigen::Index i = 0; i < out.scale.size(); ++i)
    if (!(out.scale[i] > 1e-12)) out.scale[i] = 1.0;
  return out;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  if (x.rows() != mean.size()) throw DimensionError("Standardizer: feature count mismatch");
  return (x.colwise() - mean).array().colwise() / scale.array();
}

ClassifierData one_hot_features(std::span<const Transition> transitions, std::size_t num_states,
                                std::size_t num_actions) {
  const auto n = static_cast<Eigen::Index>(transitions.size());
  const auto S = static_cast<Eigen::Index>(num_states);
  const auto A = static_cast<Eigen::Index>(num_actions);
  ClassifierData d;
  d.sa = Eigen::MatrixXd::Zero(S + A, n);
  d.sas = Eigen::MatrixXd::Zero(S + A + S, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& tr = transitions[static_cast<std::size_t>(i)];
    if (tr.s >= num_states || tr.s_next >= num_states || tr.a >= num_actions) {
      throw DimensionError("one_hot_features: transition out of range");
    }
    const auto s = static_cast<Eigen::Index>(tr.s);
    const auto a = static_cast<Eigen::Index>(tr.a);
    const auto sn = static_cast<Eigen::Index>(tr.s_next);
    d.sa(s, i) = 1.0;
    d.sa(S + a, i) = 1.0;
    d.sas(s, i) = 1.0;
    d.sas(S + a, i) = 1.0;
    d.sas(S + A + sn, i) = 1.0;
  }
  return d;
}

ClassifierData archery_features(std::span<const ArcheryShot> shots) {
  const auto n = static_cast<Eigen::Index>(shots.size());
  ClassifierData d;
  d.sa.resize(1, n);
  d.sas.resize(2, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const ArcheryShot& shot = shots[static_cast<std::size_t>(i)];
    d.sa(0, i) = shot.theta_deg;
    d.sas(0, i) = shot.theta_deg;
    d.sas(1, i) = shot.s_prime;
  }
  return d;
}

namespace {

// Column-wise log-softmax.
Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& z) {
  Eigen::RowVectorXd mx = z.colwise().maxCoeff();
  Eigen::MatrixXd shifted = z.rowwise() - mx;
  Eigen::RowVectorXd lse = shifted.array().exp().colwise().sum().log().matrix();
  return shifted.rowwise() - lse;
}

struct Logits {
  Eigen::MatrixXd sa;
  Eigen::MatrixXd sas;
};

Logits logits(const NetClassifierPair& pair, const Eigen::MatrixXd& x_sa,
              const Eigen::MatrixXd& x_sas) {
  if (x_sa.cols() != x_sas.cols()) throw DimensionError("classifier: sample count mismatch");
  Logits out;
  out.sa = pair.f_sa.forward(pair.sa_norm.apply(x_sa));
  out.sas = pair.f_sas.forward(pair.sas_norm.apply(x_sas)) + out.sa;
  return out;
}

void require_trained(const NetClassifierPair& pair) {
  if (!pair.trained) throw std::logic_error("classifier not fitted");
}

ClassifierData select_columns(const ClassifierData& d, const std::vector<Eigen::Index>& idx) {
  ClassifierData out;
  out.sa.resize(d.sa.rows(), static_cast<Eigen::Index>(idx.size()));
  out.sas.resize(d.sas.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.sa.col(static_cast<Eigen::Index>(i)) = d.sa.col(idx[i]);
    out.sas.col(static_cast<Eigen::Index>(i)) = d.sas.col(idx[i]);
  }
  return out;
}

void shuffle(std::vector<Eigen::Index>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_index(i)]);
}

bool finite(const ClassifierLoss& l) { return std::isfinite(l.sas) && std::isfinite(l.sa); }

}  // namespace

Eigen::VectorXd NetClassifierPair::delta_r(const Eigen::MatrixXd& x_sa,
                                           const Eigen::MatrixXd& x_sas) const {
  require_trained(*this);
  Logits z = logits(*this, x_sa, x_sas);
  Eigen::MatrixXd lp_sa = log_softmax(z.sa);
  Eigen::MatrixXd lp_sas = log_softmax(z.sas);
  return ((lp_sas.row(1) - lp_sa.row(1)) - (lp_sas.row(0) - lp_sa.row(0))).transpose();
}

Eigen::VectorXd NetClassifierPair::sas_only_delta_r(const Eigen::MatrixXd& x_sa,
                                                    const Eigen::MatrixXd& x_sas) const {
  require_trained(*this);
  Eigen::MatrixXd lp = log_softmax(logits(*this, x_sa, x_sas).sas);
  return (lp.row(1) - lp.row(0)).transpose();
}

Eigen::VectorXd NetClassifierPair::p_target_sa(const Eigen::MatrixXd& x_sa) const {
  require_trained(*this);
  Eigen::MatrixXd lp = log_softmax(f_sa.forward(sa_norm.apply(x_sa)));
  return lp.row(1).array().exp().transpose();
}

Eigen::VectorXd NetClassifierPair::p_target_sas(const Eigen::MatrixXd& x_sa,
                                                const Eigen::MatrixXd& x_sas) const {
  require_trained(*this);
  Eigen::MatrixXd lp = log_softmax(logits(*this, x_sa, x_sas).sas);
  return lp.row(1).array().exp().transpose();
}

NetClassifierPair init_net_pair(std::size_t sa_dim, std::size_t sas_dim,
                                const std::vector<std::size_t>& hidden, double noise_std,
                                Rng& rng) {
  if (noise_std < 0.0) throw std::invalid_argument("noise_std must be >= 0");
  std::vector<std::size_t> sa_sizes{sa_dim};
  std::vector<std::size_t> sas_sizes{sas_dim};
  for (std::size_t h : hidden) {
    sa_sizes.push_back(h);
    sas_sizes.push_back(h);
  }
  sa_sizes.push_back(2);
  sas_sizes.push_back(2);
  NetClassifierPair pair;
  Rng sa_rng = rng.split("f_sa");
  Rng sas_rng = rng.split("f_sas");
  pair.f_sa = Mlp(sa_sizes, sa_rng);
  pair.f_sas = Mlp(sas_sizes, sas_rng);
  pair.noise_std = noise_std;
  pair.sa_norm = Standardizer::identity(sa_dim);
  pair.sas_norm = Standardizer::identity(sas_dim);
  pair.trained = true;
  return pair;
}

ClassifierLoss classifier_loss(const NetClassifierPair& pair, const ClassifierBatch& batch,
                               std::vector<double>* grad_sa, std::vector<double>* grad_sas) {
  const Eigen::Index n = batch.sa.cols();
  if (n == 0 || static_cast<std::size_t>(n) != batch.labels.size() || batch.sas.cols() != n) {
    throw DimensionError("classifier_loss: inconsistent batch");
  }
  Mlp::Cache c_sa, c_sas;
  Eigen::MatrixXd z_sa = pair.f_sa.forward(batch.sa, c_sa);
  Eigen::MatrixXd z_sas = pair.f_sas.forward(batch.sas, c_sas) + z_sa;
  Eigen::MatrixXd lp_sa = log_softmax(z_sa);
  Eigen::MatrixXd lp_sas = log_softmax(z_sas);
  ClassifierLoss loss;
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(2, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = batch.labels[static_cast<std::size_t>(i)];
    onehot(y, i) = 1.0;
    loss.sa -= lp_sa(y, i);
    loss.sas -= lp_sas(y, i);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  loss.sa *= inv_n;
  loss.sas *= inv_n;
  if (grad_sa && grad_sas) {
    Eigen::MatrixXd d_sas = (lp_sas.array().exp().matrix() - onehot) * inv_n;
    Eigen::MatrixXd d_sa = (lp_sa.array().exp().matrix() - onehot) * inv_n;
    grad_sa->assign(pair.f_sa.num_params(), 0.0);
    grad_sas->assign(pair.f_sas.num_params(), 0.0);
    pair.f_sas.backward(c_sas, d_sas, *grad_sas);
    pair.f_sa.backward(c_sa, d_sa + d_sas, *grad_sa);
  }
  return loss;
}

namespace {

std::vector<bool> relu_pattern(const NetClassifierPair& pair, const ClassifierBatch& batch) {
  std::vector<bool> out;
  for (const Mlp* m : {&pair.f_sa, &pair.f_sas}) {
    Mlp::Cache cache;
    m->forward(m == &pair.f_sa ? batch.sa : batch.sas, cache);
    for (std::size_t l = 1; l < cache.inputs.size(); ++l) {
      const Eigen::MatrixXd& h = cache.inputs[l];
      for (Eigen::Index i = 0; i < h.size(); ++i) out.push_back(h.data()[i] > 0.0);
    }
  }
  return out;
}

}  // namespace

GradientCheck check_gradients(const NetClassifierPair& pair, const ClassifierBatch& batch,
                              std::size_t n_params, Rng& rng, double step) {
  std::vector<double> g_sa, g_sas;
  classifier_loss(pair, batch, &g_sa, &g_sas);
  NetClassifierPair probe = pair;
  const std::size_t total = g_sa.size() + g_sas.size();
  GradientCheck out;
  while (out.checked < n_params) {
    if (out.kinks_skipped > 100 * n_params) {
      throw std::runtime_error("check_gradients: every probed coordinate straddles a kink");
    }
    const std::size_t idx = rng.uniform_index(total);
    const bool in_sa = idx < g_sa.size();
    std::vector<double>& p = in_sa ? probe.f_sa.params() : probe.f_sas.params();
    const std::size_t j = in_sa ? idx : idx - g_sa.size();
    const double analytic = in_sa ? g_sa[j] : g_sas[j];
    const double saved = p[j];
    p[j] = saved + step;
    const double up = classifier_loss(probe, batch).total();
    const std::vector<bool> up_pattern = relu_pattern(probe, batch);
    p[j] = saved - step;
    const double down = classifier_loss(probe, batch).total();
    const bool kink = relu_pattern(probe, batch) != up_pattern;
    p[j] = saved;
    if (kink) {
      ++out.kinks_skipped;
      continue;
    }
    const double numeric = (up - down) / (2.0 * step);
    const double rel =
        std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-12);
    out.max_rel_error = std::max(out.max_rel_error, rel);
    ++out.checked;
  }
  return out;
}

ClassifierBatch sample_batch(const NetClassifierPair& pair, const ClassifierData& source,
                             const ClassifierData& target, std::size_t batch_size, Rng& rng,
                             bool add_noise) {
  if (source.size() == 0 || target.size() == 0) {
    throw std::invalid_argument("classifier training: both buffers must be non-empty");
  }
  if (batch_size < 2) throw std::invalid_argument("classifier training: batch_size must be >= 2");
  const std::size_t n_src = batch_size / 2;
  const std::size_t n = batch_size;
  ClassifierBatch b;
  b.sa.resize(source.sa.rows(), static_cast<Eigen::Index>(n));
  b.sas.resize(source.sas.rows(), static_cast<Eigen::Index>(n));
  b.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool is_target = i >= n_src;
    const ClassifierData& d = is_target ? target : source;
    const auto j = static_cast<Eigen::Index>(rng.uniform_index(d.size()));
    b.sa.col(static_cast<Eigen::Index>(i)) = d.sa.col(j);
    b.sas.col(static_cast<Eigen::Index>(i)) = d.sas.col(j);
    b.labels[i] = is_target ? 1 : 0;
  }
  b.sa = pair.sa_norm.apply(b.sa);
  b.sas = pair.sas_norm.apply(b.sas);
  if (add_noise && pair.noise_std > 0.0) {
    for (Eigen::Index i = 0; i < b.sa.size(); ++i) b.sa.data()[i] += rng.normal(0.0, pair.noise_std);
    for (Eigen::Index i = 0; i < b.sas.size(); ++i)
      b.sas.data()[i] += rng.normal(0.0, pair.noise_std);
  }
  return b;
}

ClassifierBatch full_batch(const NetClassifierPair& pair, const ClassifierData& source,
                           const ClassifierData& target) {
  const Eigen::Index ns = source.sa.cols(), nt = target.sa.cols();
  ClassifierBatch b;
  b.sa.resize(source.sa.rows(), ns + nt);
  b.sas.resize(source.sas.rows(), ns + nt);
  b.sa << source.sa, target.sa;
  b.sas << source.sas, target.sas;
  b.sa = pair.sa_norm.apply(b.sa);
  b.sas = pair.sas_norm.apply(b.sas);
  b.labels.assign(static_cast<std::size_t>(ns), 0);
  b.labels.insert(b.labels.end(), static_cast<std::size_t>(nt), 1);
  return b;
}

NetTrainer::NetTrainer(NetClassifierPair pair, const NetTrainConfig& cfg)
    : pair_(std::move(pair)), cfg_(cfg) {
  adam_sa_.learning_rate = adam_sas_.learning_rate = cfg.learning_rate;
  adam_sa_.batch_size = adam_sas_.batch_size = cfg.batch_size;
}

ClassifierLoss NetTrainer::step(const ClassifierBatch& batch) {
  std::vector<double> g_sa, g_sas;
  ClassifierLoss loss = classifier_loss(pair_, batch, &g_sa, &g_sas);
  if (!finite(loss)) {
    throw ClassifierDivergence(fmt::format(
        "classifier loss diverged at optimizer step {} (loss_sas={}, loss_sa={})",
        adam_sa_.step + 1, loss.sas, loss.sa));
  }
  adam_sa_.apply(pair_.f_sa.params(), g_sa);
  adam_sas_.apply(pair_.f_sas.params(), g_sas);
  return loss;
}

ClassifierLoss NetTrainer::train_steps(const ClassifierData& source, const ClassifierData& target,
                                       std::size_t steps, Rng& rng) {
  ClassifierLoss last;
  for (std::size_t k = 0; k < steps; ++k) {
    last = step(sample_batch(pair_, source, target, cfg_.batch_size, rng, true));
  }
  return last;
}

NetClassifierPair train_net_pair(const ClassifierData& source, const ClassifierData& target,
                                 const NetTrainConfig& cfg, Rng& rng, NetTrainLog* log) {
  if (source.size() == 0 || target.size() == 0) {
    throw std::invalid_argument("train_net_pair: both buffers must be non-empty");
  }
  if (cfg.steps == 0) throw std::invalid_argument("train_net_pair: steps must be >= 1");
  Rng init_rng = rng.split("init");
  NetClassifierPair pair = init_net_pair(static_cast<std::size_t>(source.sa.rows()),
                                         static_cast<std::size_t>(source.sas.rows()), cfg.hidden,
                                         cfg.noise_std, init_rng);
  if (cfg.standardize) {
    pair.sa_norm = Standardizer::fit(source.sa);
    pair.sas_norm = Standardizer::fit(source.sas);
  }

  // Hold out a validation slice from each domain.
  Rng split_rng = rng.split("validation");
  auto split = [&](const ClassifierData& d, ClassifierData& train, ClassifierData& val) {
    std::vector<Eigen::Index> idx(d.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto n_val = static_cast<std::size_t>(cfg.validation_fraction * static_cast<double>(d.size()));
    if (d.size() < 10 || cfg.validation_fraction <= 0.0) n_val = 0;
    shuffle(idx, split_rng);
    train = select_columns(d, {idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end()});
    val = select_columns(d, {idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val)});
  };
  ClassifierData src_train, src_val, tgt_train, tgt_val;
  split(source, src_train, src_val);
  split(target, tgt_train, tgt_val);
  const bool validate = src_val.size() > 0 && tgt_val.size() > 0;
  ClassifierBatch val_batch;
  if (validate) val_batch = full_batch(pair, src_val, tgt_val);

  NetTrainer trainer(pair, cfg);
  Rng batch_rng = rng.split("batches");
  NetClassifierPair best = pair;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t bad = 0;
  std::size_t done = 0;
  bool stopped = false;
  const std::size_t every = std::max<std::size_t>(cfg.eval_every, 1);
  while (done < cfg.steps) {
    const std::size_t chunk = std::min(every, cfg.steps - done);
    ClassifierLoss train_loss = trainer.train_steps(src_train, tgt_train, chunk, batch_rng);
    done += chunk;
    if (!validate) {
      if (log) {
        log->step.push_back(done);
        log->train.push_back(train_loss);
        log->validation.push_back({});
      }
      continue;
    }
    ClassifierLoss val = classifier_loss(trainer.pair(), val_batch);
    if (!finite(val)) {
      throw ClassifierDivergence(
          fmt::format("validation loss diverged after {} steps (loss_sas={}, loss_sa={})", done,
                      val.sas, val.sa));
    }
    if (log) {
      log->step.push_back(done);
      log->train.push_back(train_loss);
      log->validation.push_back(val);
    }
    if (val.total() < best_val) {
      best_val = val.total();
      best = trainer.pair();
      bad = 0;
    } else if (cfg.patience > 0 && ++bad >= cfg.patience) {
      stopped = true;
      break;
    }
  }
  if (log) {
    log->steps_run = done;
    log->stopped_early = stopped;
  }
  return validate ? best : trainer.pair();
}

namespace {

void write_vector(std::ostream& out, const char* tag, std::span<const double> v) {
  out << tag << ' ' << v.size();
  for (double x : v) out << ' ' << fmt::format("{:.17g}", x);
  out << '\n';
}

void write_mlp(std::ostream& out, const char* name, const Mlp& m) {
  out << "mlp " << name << ' ' << m.sizes().size();
  for (std::size_t n : m.sizes()) out << ' ' << n;
  out << '\n';
  write_vector(out, "params", m.params());
}

std::istringstream next_line(std::istream& in, std::size_t& line_no, const char* expect) {
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument(
        fmt::format("checkpoint line {}: expected '{}', got end of input", line_no + 1, expect));
  }
  ++line_no;
  std::istringstream ls(line);
  std::string tag;
  ls >> tag;
  if (tag != expect) {
    throw std::invalid_argument(
        fmt::format("checkpoint line {}: expected '{}', got '{}'", line_no, expect, tag));
  }
  return ls;
}

std::vector<double> read_vector(std::istream& in, std::size_t& line_no, const char* tag) {
  std::istringstream ls = next_line(in, line_no, tag);
  std::size_t n = 0;
  if (!(ls >> n)) throw std::invalid_argument(fmt::format("checkpoint line {}: bad count", line_no));
  std::vector<double> v(n);
  for (double& x : v) {
    std::string tok;
    if (!(ls >> tok)) {
      throw std::invalid_argument(fmt::format("checkpoint line {}: too few values", line_no));
    }
    x = std::stod(tok);
  }
  return v;
}

Mlp read_mlp(std::istream& in, std::size_t& line_no, const std::string& name) {
  std::istringstream ls = next_line(in, line_no, "mlp");
  std::string got;
  std::size_t n = 0;
  ls >> got >> n;
  if (got != name) {
    throw std::invalid_argument(
        fmt::format("checkpoint line {}: expected network '{}', got '{}'", line_no, name, got));
  }
  std::vector<std::size_t> sizes(n);
  for (auto& s : sizes)
    if (!(ls >> s)) throw std::invalid_argument(fmt::format("checkpoint line {}: bad sizes", line_no));
  return Mlp::from_params(sizes, read_vector(in, line_no, "params"));
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void write_net_pair(std::ostream& out, const NetClassifierPair& pair) {
  out << "netpair v1\n";
  out << fmt::format("noise_std {:.17g}\n", pair.noise_std);
  write_vector(out, "sa_mean", {pair.sa_norm.mean.data(), static_cast<std::size_t>(pair.sa_norm.mean.size())});
  write_vector(out, "sa_scale", {pair.sa_norm.scale.data(), static_cast<std::size_t>(pair.sa_norm.scale.size())});
  write_vector(out, "sas_mean", {pair.sas_norm.mean.data(), static_cast<std::size_t>(pair.sas_norm.mean.size())});
  write_vector(out, "sas_scale", {pair.sas_norm.scale.data(), static_cast<std::size_t>(pair.sas_norm.scale.size())});
  write_mlp(out, "sa", pair.f_sa);
  write_mlp(out, "sas", pair.f_sas);
}

NetClassifierPair read_net_pair(std::istream& in) {
  std::size_t line_no = 0;
  std::istringstream header = next_line(in, line_no, "netpair");
  std::string version;
  header >> version;
  if (version != "v1") {
    throw std::invalid_argument(fmt::format("checkpoint line 1: unsupported version '{}'", version));
  }
  NetClassifierPair pair;
  std::istringstream noise = next_line(in, line_no, "noise_std");
  std::string tok;
  noise >> tok;
  pair.noise_std = std::stod(tok);
  pair.sa_norm.mean = to_eigen(read_vector(in, line_no, "sa_mean"));
  pair.sa_norm.scale = to_eigen(read_vector(in, line_no, "sa_scale"));
  pair.sas_norm.mean = to_eigen(read_vector(in, line_no, "sas_mean"));
  pair.sas_norm.scale = to_eigen(read_vector(in, line_no, "sas_scale"));
  pair.f_sa = read_mlp(in, line_no, "sa");
  pair.f_sas = read_mlp(in, line_no, "sas");
  if (pair.f_sa.output_dim() != 2 || pair.f_sas.output_dim() != 2) {
    throw std::invalid_argument("checkpoint: classifier networks must have 2 outputs");
  }
  if (static_cast<std::size_t>(pair.sa_norm.mean.size()) != pair.f_sa.input_dim() ||
      static_cast<std::size_t>(pair.sas_norm.mean.size()) != pair.f_sas.input_dim()) {
    throw std::invalid_argument("checkpoint: standardizer size does not match network input");
  }
  pair.trained = true;
  return pair;
}

}  // namespace darc
