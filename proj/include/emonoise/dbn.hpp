// Copyright (c) 2026 The emonoise Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "emonoise/detail/binary_io.hpp"
#include "emonoise/error.hpp"
#include "emonoise/rng.hpp"

namespace emonoise {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class VisibleKind : std::uint8_t { bernoulli = 0, gaussian = 1 };

inline double sigmoid(double x) {
  // Split on sign so exp never overflows.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

template <class Derived>
Matrix sigmoid(const Eigen::MatrixBase<Derived>& m) {
  Matrix out = m;
  out = out.unaryExpr([](double x) { return sigmoid(x); });
  return out;
}

/// A restricted Boltzmann machine. Weights are n_visible x n_hidden.
struct Rbm {
  Matrix weights;
  Vector visible_bias;
  Vector hidden_bias;
  VisibleKind visible_kind = VisibleKind::bernoulli;

  Eigen::Index n_visible() const { return weights.rows(); }
  Eigen::Index n_hidden() const { return weights.cols(); }

  static Rbm zeros(Eigen::Index n_visible, Eigen::Index n_hidden, VisibleKind kind) {
    return Rbm{Matrix::Zero(n_visible, n_hidden), Vector::Zero(n_visible), Vector::Zero(n_hidden), kind};
  }

  /// Weights drawn N(0, stddev^2) in row-major order, biases zero.
  static Rbm random(Eigen::Index n_visible, Eigen::Index n_hidden, VisibleKind kind, Rng& rng,
                    double stddev = 0.01) {
    Rbm rbm = zeros(n_visible, n_hidden, kind);
    for (Eigen::Index i = 0; i < n_visible; ++i)
      for (Eigen::Index j = 0; j < n_hidden; ++j) rbm.weights(i, j) = stddev * rng.normal();
    return rbm;
  }
};

inline bool operator==(const Rbm& a, const Rbm& b) {
  return a.visible_kind == b.visible_kind && a.weights == b.weights &&
         a.visible_bias == b.visible_bias && a.hidden_bias == b.hidden_bias;
}

/// Momentum buffers matching an Rbm's parameters.
struct RbmVelocity {
  Matrix weights;
  Vector visible_bias;
  Vector hidden_bias;

  static RbmVelocity zeros_like(const Rbm& rbm) {
    return {Matrix::Zero(rbm.n_visible(), rbm.n_hidden()), Vector::Zero(rbm.n_visible()),
            Vector::Zero(rbm.n_hidden())};
  }
};

/// Per-dimension z-score parameters.
struct Standardization {
  Vector mean;
  Vector stddev;

  Eigen::Index dim() const { return mean.size(); }

  Vector apply(const Vector& x) const {
    if (x.size() != mean.size())
      throw Error(Errc::dimension_mismatch, "input has " + std::to_string(x.size()) +
                                                " dims, standardization has " + std::to_string(mean.size()));
    return (x - mean).cwiseQuotient(stddev);
  }

  Matrix apply_rows(const Matrix& x) const {
    if (x.cols() != mean.size())
      throw Error(Errc::dimension_mismatch, "input has " + std::to_string(x.cols()) +
                                                " columns, standardization has " + std::to_string(mean.size()));
    Matrix out = x.rowwise() - mean.transpose();
    out.array().rowwise() /= stddev.transpose().array();
    return out;
  }
};

/// Stacked RBMs unrolled into a sigmoid feed-forward net with a softmax head.
struct Dbn {
  std::vector<Rbm> rbms;
  Matrix softmax_weights;  // top hidden size x n_classes
  Vector softmax_bias;
  std::optional<Standardization> standardization;

  Eigen::Index input_dim() const {
    return rbms.empty() ? softmax_weights.rows() : rbms.front().n_visible();
  }
  Eigen::Index n_classes() const { return softmax_weights.cols(); }
};

inline bool operator==(const Dbn& a, const Dbn& b) {
  if (a.rbms != b.rbms || a.softmax_weights != b.softmax_weights || a.softmax_bias != b.softmax_bias)
    return false;
  if (a.standardization.has_value() != b.standardization.has_value()) return false;
  return !a.standardization ||
         (a.standardization->mean == b.standardization->mean &&
          a.standardization->stddev == b.standardization->stddev);
}

struct TrainConfig {
  std::size_t cd_steps = 1;
  double learning_rate_pretrain_bernoulli = 0.01;
  double learning_rate_pretrain_gaussian = 0.001;
  double learning_rate_finetune = 0.01;
  double momentum = 0.9;
  double weight_decay = 2e-4;
  std::size_t batch_size = 64;
  std::size_t epochs_pretrain = 30;
  std::size_t epochs_finetune = 50;
  std::uint64_t seed = 0;
  double init_stddev = 0.01;
  bool freeze_pretrained = false;  // fine-tune the softmax head only

  double pretrain_rate(VisibleKind kind) const {
    return kind == VisibleKind::gaussian ? learning_rate_pretrain_gaussian
                                         : learning_rate_pretrain_bernoulli;
  }
};

inline void validate(const TrainConfig& cfg) {
  if (cfg.cd_steps == 0) throw Error(Errc::invalid_argument, "cd_steps must be positive");
  if (cfg.batch_size == 0) throw Error(Errc::invalid_argument, "batch_size must be positive");
  if (!(cfg.learning_rate_pretrain_bernoulli >= 0.0 && cfg.learning_rate_pretrain_gaussian >= 0.0 &&
        cfg.learning_rate_finetune >= 0.0))
    throw Error(Errc::invalid_argument, "learning rates must be nonnegative");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    throw Error(Errc::invalid_argument, "momentum must lie in [0, 1)");
  if (!(cfg.weight_decay >= 0.0)) throw Error(Errc::invalid_argument, "weight_decay must be nonnegative");
}

// ---------------------------------------------------------------------------
// Conditionals

inline Matrix hidden_probs(const Rbm& rbm, const Matrix& visible) {
  if (visible.cols() != rbm.n_visible())
    throw Error(Errc::dimension_mismatch, "visible batch has " + std::to_string(visible.cols()) +
                                              " columns, rbm expects " + std::to_string(rbm.n_visible()));
  Matrix pre = visible * rbm.weights;
  pre.rowwise() += rbm.hidden_bias.transpose();
  return sigmoid(pre);
}

inline Vector hidden_probs(const Rbm& rbm, const Vector& v) {
  return hidden_probs(rbm, Matrix(v.transpose())).row(0).transpose();
}

/// Bernoulli visibles give probabilities; Gaussian visibles give the
/// unit-variance conditional mean.
inline Matrix visible_recon(const Rbm& rbm, const Matrix& hidden) {
  if (hidden.cols() != rbm.n_hidden())
    throw Error(Errc::dimension_mismatch, "hidden batch has " + std::to_string(hidden.cols()) +
                                              " columns, rbm expects " + std::to_string(rbm.n_hidden()));
  Matrix pre = hidden * rbm.weights.transpose();
  pre.rowwise() += rbm.visible_bias.transpose();
  return rbm.visible_kind == VisibleKind::gaussian ? pre : sigmoid(pre);
}

inline Vector visible_recon(const Rbm& rbm, const Vector& h) {
  return visible_recon(rbm, Matrix(h.transpose())).row(0).transpose();
}

inline double free_energy(const Rbm& rbm, const Vector& v) {
  if (v.size() != rbm.n_visible())
    throw Error(Errc::dimension_mismatch, "visible vector has " + std::to_string(v.size()) +
                                              " entries, rbm expects " + std::to_string(rbm.n_visible()));
  const Vector pre = rbm.weights.transpose() * v + rbm.hidden_bias;
  double hidden_term = 0.0;
  for (Eigen::Index j = 0; j < pre.size(); ++j) hidden_term += softplus(pre(j));
  const double visible_term = rbm.visible_kind == VisibleKind::gaussian
                                  ? 0.5 * (v - rbm.visible_bias).squaredNorm()
                                  : -rbm.visible_bias.dot(v);
  return visible_term - hidden_term;
}

inline Matrix sample_bernoulli(const Matrix& probs, Rng& rng) {
  Matrix out(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    for (Eigen::Index j = 0; j < probs.cols(); ++j) out(i, j) = rng.bernoulli(probs(i, j)) ? 1.0 : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Contrastive divergence

/// One CD-k minibatch update in place; returns the mean squared error between
/// the batch and its first reconstruction.
///
/// Positive statistics use hidden probabilities of the data. The chain draws
/// binary hidden states; Bernoulli visibles are sampled to continue the chain
/// while their probabilities feed the statistics, Gaussian visibles use the
/// mean. Weight decay applies to weights only.
inline double cd_step(Rbm& rbm, RbmVelocity& velocity, const Matrix& batch, const TrainConfig& cfg,
                      Rng& rng) {
  if (batch.rows() == 0) throw Error(Errc::empty_input, "empty minibatch");
  if (batch.cols() != rbm.n_visible())
    throw Error(Errc::dimension_mismatch, "minibatch has " + std::to_string(batch.cols()) +
                                              " columns, rbm expects " + std::to_string(rbm.n_visible()));
  if (cfg.cd_steps == 0) throw Error(Errc::invalid_argument, "cd_steps must be positive");

  const Matrix p0 = hidden_probs(rbm, batch);
  Matrix chain_hidden = p0;
  Matrix recon;
  Matrix first_recon;
  for (std::size_t step = 1; step <= cfg.cd_steps; ++step) {
    const Matrix h = sample_bernoulli(chain_hidden, rng);
    recon = visible_recon(rbm, h);
    if (step == 1) first_recon = recon;
    if (step < cfg.cd_steps) {
      const Matrix chain_visible =
          rbm.visible_kind == VisibleKind::bernoulli ? sample_bernoulli(recon, rng) : recon;
      chain_hidden = hidden_probs(rbm, chain_visible);
    }
  }
  const Matrix pk = hidden_probs(rbm, recon);

  const double inv_b = 1.0 / static_cast<double>(batch.rows());
  const double lr = cfg.pretrain_rate(rbm.visible_kind);
  const Matrix grad_w = (batch.transpose() * p0 - recon.transpose() * pk) * inv_b;
  const Vector grad_b = (batch.colwise().sum() - recon.colwise().sum()).transpose() * inv_b;
  const Vector grad_c = (p0.colwise().sum() - pk.colwise().sum()).transpose() * inv_b;

  velocity.weights = cfg.momentum * velocity.weights + lr * (grad_w - cfg.weight_decay * rbm.weights);
  velocity.visible_bias = cfg.momentum * velocity.visible_bias + lr * grad_b;
  velocity.hidden_bias = cfg.momentum * velocity.hidden_bias + lr * grad_c;
  rbm.weights += velocity.weights;
  rbm.visible_bias += velocity.visible_bias;
  rbm.hidden_bias += velocity.hidden_bias;

  return (batch - first_recon).squaredNorm() / static_cast<double>(batch.size());
}

struct CdUpdate {
  Rbm rbm;
  RbmVelocity velocity;
  double reconstruction_error;
};

/// Value-returning form of cd_step.
inline CdUpdate cd_update(Rbm rbm, RbmVelocity velocity, const Matrix& batch, const TrainConfig& cfg,
                          Rng& rng) {
  const double err = cd_step(rbm, velocity, batch, cfg, rng);
  return {std::move(rbm), std::move(velocity), err};
}

/// Rows of `data` listed by `order[first, last)`.
inline Matrix gather_rows(const Matrix& data, std::span<const std::size_t> order) {
  Matrix out(static_cast<Eigen::Index>(order.size()), data.cols());
  for (std::size_t i = 0; i < order.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = data.row(static_cast<Eigen::Index>(order[i]));
  return out;
}

/// Trains one RBM for cfg.epochs_pretrain epochs of shuffled minibatches.
/// Returns the mean reconstruction error of each epoch.
inline std::vector<double> train_rbm(Rbm& rbm, const Matrix& data, const TrainConfig& cfg, Rng& rng) {
  if (data.rows() == 0) throw Error(Errc::empty_input, "no training data");
  RbmVelocity velocity = RbmVelocity::zeros_like(rbm);
  std::vector<std::size_t> order(static_cast<std::size_t>(data.rows()));
  std::vector<double> history;
  for (std::size_t epoch = 0; epoch < cfg.epochs_pretrain; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    double err_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const Matrix batch = gather_rows(data, std::span<const std::size_t>(order).subspan(start, len));
      err_sum += cd_step(rbm, velocity, batch, cfg, rng);
      ++batches;
    }
    history.push_back(err_sum / static_cast<double>(batches));
  }
  return history;
}

/// Progress hook: (layer index, epoch, mean reconstruction error).
using PretrainObserver = std::function<void(std::size_t, std::size_t, double)>;

/// Greedy layer-wise pretraining on standardized inputs. The first RBM has
/// Gaussian visibles, the rest Bernoulli; each layer trains on the hidden
/// probabilities of the one below. The softmax head is drawn at random and
/// standardization is left unset.
inline Dbn pretrain_dbn(const Matrix& data, std::span<const std::size_t> layer_sizes,
                        const TrainConfig& cfg, std::size_t n_classes = 7,
                        const PretrainObserver& observer = {}) {
  validate(cfg);
  if (data.rows() == 0) throw Error(Errc::empty_input, "no pretraining data");
  if (layer_sizes.empty()) throw Error(Errc::invalid_argument, "layer_sizes is empty");
  if (static_cast<Eigen::Index>(layer_sizes.front()) != data.cols())
    throw Error(Errc::dimension_mismatch, "layer_sizes starts at " + std::to_string(layer_sizes.front()) +
                                              " but data has " + std::to_string(data.cols()) + " columns");
  if (std::find(layer_sizes.begin(), layer_sizes.end(), std::size_t{0}) != layer_sizes.end())
    throw Error(Errc::invalid_argument, "layer sizes must be positive");
  if (n_classes < 2) throw Error(Errc::invalid_argument, "need at least two classes");

  Dbn dbn;
  Matrix activations = data;
  for (std::size_t layer = 0; layer + 1 < layer_sizes.size(); ++layer) {
    const auto kind = layer == 0 ? VisibleKind::gaussian : VisibleKind::bernoulli;
    Rng init_rng(mix_seed(cfg.seed, 100 + layer));
    Rbm rbm = Rbm::random(static_cast<Eigen::Index>(layer_sizes[layer]),
                          static_cast<Eigen::Index>(layer_sizes[layer + 1]), kind, init_rng, cfg.init_stddev);
    Rng train_rng(mix_seed(cfg.seed, 200 + layer));
    const auto history = train_rbm(rbm, activations, cfg, train_rng);
    if (observer)
      for (std::size_t e = 0; e < history.size(); ++e) observer(layer, e, history[e]);
    activations = hidden_probs(rbm, activations);
    dbn.rbms.push_back(std::move(rbm));
  }

  Rng head_rng(mix_seed(cfg.seed, 300));
  const auto top = static_cast<Eigen::Index>(layer_sizes.back());
  dbn.softmax_weights = Matrix(top, static_cast<Eigen::Index>(n_classes));
  for (Eigen::Index i = 0; i < dbn.softmax_weights.rows(); ++i)
    for (Eigen::Index j = 0; j < dbn.softmax_weights.cols(); ++j)
      dbn.softmax_weights(i, j) = cfg.init_stddev * head_rng.normal();
  dbn.softmax_bias = Vector::Zero(static_cast<Eigen::Index>(n_classes));
  return dbn;
}

// ---------------------------------------------------------------------------
// Inference

inline void check_input(const Dbn& dbn, Eigen::Index cols) {
  if (!dbn.standardization)
    throw Error(Errc::not_configured, "network has no input standardization");
  if (cols != dbn.input_dim())
    throw Error(Errc::dimension_mismatch, "input has " + std::to_string(cols) + " dims, network expects " +
                                              std::to_string(dbn.input_dim()));
}

/// Deterministic mean-field pass; returns the activations of every layer,
/// starting with the standardized input.
inline std::vector<Matrix> layer_activations(const Dbn& dbn, const Matrix& raw) {
  check_input(dbn, raw.cols());
  std::vector<Matrix> acts;
  acts.reserve(dbn.rbms.size() + 1);
  acts.push_back(dbn.standardization->apply_rows(raw));
  for (const Rbm& rbm : dbn.rbms) acts.push_back(hidden_probs(rbm, acts.back()));
  return acts;
}

inline Matrix logits(const Dbn& dbn, const Matrix& top_activations) {
  Matrix out = top_activations * dbn.softmax_weights;
  out.rowwise() += dbn.softmax_bias.transpose();
  return out;
}

/// Row-wise softmax with max subtraction.
inline Matrix softmax_rows(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    out.row(r) = (z.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

inline Matrix forward(const Dbn& dbn, const Matrix& raw) {
  return softmax_rows(logits(dbn, layer_activations(dbn, raw).back()));
}

inline Vector forward(const Dbn& dbn, const Vector& x) {
  return forward(dbn, Matrix(x.transpose())).row(0).transpose();
}

/// Index of the largest entry; ties go to the lowest index.
template <class Derived>
int argmax_lowest(const Eigen::DenseBase<Derived>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return static_cast<int>(best);
}

inline int predict(const Dbn& dbn, const Vector& x) { return argmax_lowest(forward(dbn, x)); }

inline std::vector<int> predict(const Dbn& dbn, const Matrix& raw) {
  const Matrix z = logits(dbn, layer_activations(dbn, raw).back());
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index r = 0; r < z.rows(); ++r) out[static_cast<std::size_t>(r)] = argmax_lowest(z.row(r));
  return out;
}

// ---------------------------------------------------------------------------
// Supervised fine-tuning

/// Gradients in the same layout as the Dbn parameters. RBM visible biases do
/// not take part in the feed-forward pass and have no gradient.
struct DbnGradient {
  std::vector<Matrix> weights;
  std::vector<Vector> hidden_bias;
  Matrix softmax_weights;
  Vector softmax_bias;
};

inline void check_labels(std::span<const int> labels, Eigen::Index n_classes) {
  for (int y : labels)
    if (y < 0 || y >= n_classes)
      throw Error(Errc::label_out_of_range, "label " + std::to_string(y) + " not in [0, " +
                                                std::to_string(n_classes) + ")");
}

/// Mean cross-entropy -ln p(label) over the rows of `raw`.
inline double cross_entropy(const Dbn& dbn, const Matrix& raw, std::span<const int> labels) {
  if (raw.rows() == 0) throw Error(Errc::empty_input, "no examples");
  if (static_cast<std::size_t>(raw.rows()) != labels.size())
    throw Error(Errc::dimension_mismatch, "example and label counts differ");
  check_labels(labels, dbn.n_classes());
  const Matrix z = logits(dbn, layer_activations(dbn, raw).back());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    const double lse = m + std::log((z.row(r).array() - m).exp().sum());
    loss += lse - z(r, labels[static_cast<std::size_t>(r)]);
  }
  return loss / static_cast<double>(z.rows());
}

/// Backpropagated gradient of the mean cross-entropy.
inline DbnGradient cross_entropy_gradient(const Dbn& dbn, const Matrix& raw, std::span<const int> labels) {
  if (raw.rows() == 0) throw Error(Errc::empty_input, "no examples");
  if (static_cast<std::size_t>(raw.rows()) != labels.size())
    throw Error(Errc::dimension_mismatch, "example and label counts differ");
  check_labels(labels, dbn.n_classes());

  const auto acts = layer_activations(dbn, raw);
  Matrix delta = softmax_rows(logits(dbn, acts.back()));
  for (Eigen::Index r = 0; r < delta.rows(); ++r) delta(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
  delta /= static_cast<double>(raw.rows());

  DbnGradient g;
  g.softmax_weights = acts.back().transpose() * delta;
  g.softmax_bias = delta.colwise().sum().transpose();
  g.weights.resize(dbn.rbms.size());
  g.hidden_bias.resize(dbn.rbms.size());

  Matrix upstream = delta * dbn.softmax_weights.transpose();
  for (std::size_t l = dbn.rbms.size(); l-- > 0;) {
    const Matrix& out = acts[l + 1];
    const Matrix dz = upstream.array() * out.array() * (1.0 - out.array());
    g.weights[l] = acts[l].transpose() * dz;
    g.hidden_bias[l] = dz.colwise().sum().transpose();
    if (l > 0) upstream = dz * dbn.rbms[l].weights.transpose();
  }
  return g;
}

/// Progress hook: (epoch, full-data cross-entropy after that epoch).
using FineTuneObserver = std::function<void(std::size_t, double)>;

/// Minibatch gradient descent with momentum on the mean cross-entropy,
/// through every layer (or the head only when cfg.freeze_pretrained).
/// `raw` holds unstandardized inputs; the network's standardization applies.
inline Dbn fine_tune(Dbn dbn, const Matrix& raw, std::span<const int> labels, const TrainConfig& cfg,
                     const FineTuneObserver& observer = {}) {
  validate(cfg);
  if (raw.rows() == 0) throw Error(Errc::empty_input, "no fine-tuning data");
  if (static_cast<std::size_t>(raw.rows()) != labels.size())
    throw Error(Errc::dimension_mismatch, "example and label counts differ");
  check_input(dbn, raw.cols());
  check_labels(labels, dbn.n_classes());

  DbnGradient velocity;
  for (const Rbm& rbm : dbn.rbms) {
    velocity.weights.push_back(Matrix::Zero(rbm.n_visible(), rbm.n_hidden()));
    velocity.hidden_bias.push_back(Vector::Zero(rbm.n_hidden()));
  }
  velocity.softmax_weights = Matrix::Zero(dbn.softmax_weights.rows(), dbn.softmax_weights.cols());
  velocity.softmax_bias = Vector::Zero(dbn.softmax_bias.size());

  const double lr = cfg.learning_rate_finetune;
  const double mu = cfg.momentum;
  Rng rng(mix_seed(cfg.seed, 400));
  std::vector<std::size_t> order(labels.size());
  std::vector<int> batch_labels;
  for (std::size_t epoch = 0; epoch < cfg.epochs_finetune; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto idx = std::span<const std::size_t>(order).subspan(start, std::min(cfg.batch_size, order.size() - start));
      const Matrix batch = gather_rows(raw, idx);
      batch_labels.clear();
      for (std::size_t i : idx) batch_labels.push_back(labels[i]);
      const DbnGradient g = cross_entropy_gradient(dbn, batch, batch_labels);

      velocity.softmax_weights = mu * velocity.softmax_weights - lr * g.softmax_weights;
      velocity.softmax_bias = mu * velocity.softmax_bias - lr * g.softmax_bias;
      dbn.softmax_weights += velocity.softmax_weights;
      dbn.softmax_bias += velocity.softmax_bias;
      if (cfg.freeze_pretrained) continue;
      for (std::size_t l = 0; l < dbn.rbms.size(); ++l) {
        velocity.weights[l] = mu * velocity.weights[l] - lr * g.weights[l];
        velocity.hidden_bias[l] = mu * velocity.hidden_bias[l] - lr * g.hidden_bias[l];
        dbn.rbms[l].weights += velocity.weights[l];
        dbn.rbms[l].hidden_bias += velocity.hidden_bias[l];
      }
    }
    if (observer) observer(epoch, cross_entropy(dbn, raw, labels));
  }
  return dbn;
}

// ---------------------------------------------------------------------------
// Model file
//
// "DBN1", u32 version, u32 layer count; per layer u64 rows, u64 cols,
// u8 visible kind, weights row-major, visible bias, hidden bias; then u64
// rows, u64 cols, softmax weights row-major, softmax bias; then the input
// means and standard deviations. All little-endian, values f64.

inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

inline void write_doubles(std::ostream& out, const double* data, Eigen::Index n) {
  write_le<double>(out, std::span<const double>(data, static_cast<std::size_t>(n)));
}

inline void read_doubles(std::istream& in, double* data, Eigen::Index n, const char* what) {
  read_le<double>(in, std::span<double>(data, static_cast<std::size_t>(n)), what);
}

inline Eigen::Index read_dim(std::istream& in, const char* what) {
  const auto v = read_le<std::uint64_t>(in, what);
  if (v > (std::uint64_t{1} << 32)) throw Error(Errc::malformed_header, std::string("implausible ") + what);
  return static_cast<Eigen::Index>(v);
}

/// Fails early when a declared matrix cannot fit in the rest of the stream.
inline void require_bytes(std::istream& in, std::uint64_t doubles, const char* what) {
  const auto here = in.tellg();
  in.seekg(0, std::ios::end);
  const auto end = in.tellg();
  in.seekg(here);
  if (static_cast<std::uint64_t>(end - here) / sizeof(double) < doubles)
    throw Error(Errc::truncated, std::string("file ends inside ") + what);
}

}  // namespace detail

inline void save_model(const Dbn& dbn, const std::filesystem::path& path) {
  if (!dbn.standardization)
    throw Error(Errc::not_configured, "cannot save a network without input standardization");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");

  out.write("DBN1", 4);
  detail::write_le<std::uint32_t>(out, kModelVersion);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dbn.rbms.size()));
  for (const Rbm& rbm : dbn.rbms) {
    detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(rbm.n_visible()));
    detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(rbm.n_hidden()));
    detail::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(rbm.visible_kind));
    detail::write_doubles(out, rbm.weights.data(), rbm.weights.size());
    detail::write_doubles(out, rbm.visible_bias.data(), rbm.visible_bias.size());
    detail::write_doubles(out, rbm.hidden_bias.data(), rbm.hidden_bias.size());
  }
  detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(dbn.softmax_weights.rows()));
  detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(dbn.softmax_weights.cols()));
  detail::write_doubles(out, dbn.softmax_weights.data(), dbn.softmax_weights.size());
  detail::write_doubles(out, dbn.softmax_bias.data(), dbn.softmax_bias.size());
  detail::write_doubles(out, dbn.standardization->mean.data(), dbn.standardization->mean.size());
  detail::write_doubles(out, dbn.standardization->stddev.data(), dbn.standardization->stddev.size());
  if (!out) throw Error(Errc::io, "failed writing " + path.string());
}

inline Dbn load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  if (detail::read_tag(in, "magic") != "DBN1")
    throw Error(Errc::bad_magic, path.string() + " is not a DBN model file");
  const auto version = detail::read_le<std::uint32_t>(in, "format version");
  if (version != kModelVersion)
    throw Error(Errc::version_mismatch, "model format version " + std::to_string(version) +
                                            ", expected " + std::to_string(kModelVersion));
  const auto layers = detail::read_le<std::uint32_t>(in, "layer count");

  Dbn dbn;
  Eigen::Index prev_hidden = -1;
  for (std::uint32_t l = 0; l < layers; ++l) {
    const auto rows = detail::read_dim(in, "layer rows");
    const auto cols = detail::read_dim(in, "layer cols");
    const auto kind = detail::read_le<std::uint8_t>(in, "visible kind");
    if (kind > 1) throw Error(Errc::malformed_header, "unknown visible kind " + std::to_string(kind));
    if (prev_hidden >= 0 && rows != prev_hidden)
      throw Error(Errc::dimension_mismatch, "layer " + std::to_string(l) + " does not chain");
    detail::require_bytes(in, static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols), "layer weights");
    Rbm rbm = Rbm::zeros(rows, cols, static_cast<VisibleKind>(kind));
    detail::read_doubles(in, rbm.weights.data(), rbm.weights.size(), "layer weights");
    detail::read_doubles(in, rbm.visible_bias.data(), rbm.visible_bias.size(), "visible bias");
    detail::read_doubles(in, rbm.hidden_bias.data(), rbm.hidden_bias.size(), "hidden bias");
    prev_hidden = cols;
    dbn.rbms.push_back(std::move(rbm));
  }
  const auto rows = detail::read_dim(in, "softmax rows");
  const auto cols = detail::read_dim(in, "softmax cols");
  if (prev_hidden >= 0 && rows != prev_hidden)
    throw Error(Errc::dimension_mismatch, "softmax head does not chain");
  detail::require_bytes(in, static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols), "softmax weights");
  dbn.softmax_weights = Matrix(rows, cols);
  dbn.softmax_bias = Vector(cols);
  detail::read_doubles(in, dbn.softmax_weights.data(), dbn.softmax_weights.size(), "softmax weights");
  detail::read_doubles(in, dbn.softmax_bias.data(), dbn.softmax_bias.size(), "softmax bias");
  const Eigen::Index dim = dbn.input_dim();
  Standardization st{Vector(dim), Vector(dim)};
  detail::read_doubles(in, st.mean.data(), dim, "standardization mean");
  detail::read_doubles(in, st.stddev.data(), dim, "standardization stddev");
  dbn.standardization = std::move(st);
  return dbn;
}

}  // namespace emonoise
