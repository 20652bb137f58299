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

// Independent reference computations used by the tests. Nothing here calls
// into the code paths it is used to check.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "emonoise/dbn.hpp"

namespace oracle {

/// O(N^2) DFT with the exp(-2 pi i kn/N) convention.
inline std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc{};
    for (std::size_t t = 0; t < n; ++t) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

/// Inverse of the orthonormal DCT-II (the DCT-III with matching scale).
inline std::vector<double> inverse_dct2(const std::vector<double>& y) {
  const std::size_t n = y.size();
  std::vector<double> v(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double s = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
      acc += s * y[k] * std::cos(std::numbers::pi * k * (2.0 * j + 1.0) / (2.0 * n));
    }
    v[j] = acc;
  }
  return v;
}

/// Frame starts enumerated one by one.
inline std::size_t enumerate_frames(std::size_t length, std::size_t frame_len, std::size_t hop) {
  std::size_t count = 0;
  for (std::size_t start = 0; start + frame_len <= length; start += hop) ++count;
  return count;
}

inline std::size_t enumerate_segments(std::size_t frames, std::size_t seg_frames, std::size_t seg_hop) {
  if (frames == 0) return 0;
  if (frames < seg_frames) return 1;
  std::size_t count = 0;
  for (std::size_t start = 0; start + seg_frames <= frames; start += seg_hop) ++count;
  return count;
}

/// Binary state vector of length n from the bits of `code`.
inline emonoise::Vector bits(unsigned code, Eigen::Index n) {
  emonoise::Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = (code >> i) & 1u ? 1.0 : 0.0;
  return v;
}

/// Joint energy E(v, h) = -b.v - c.h - v'Wh of a Bernoulli RBM.
inline double joint_energy(const emonoise::Rbm& rbm, const emonoise::Vector& v, const emonoise::Vector& h) {
  return -rbm.visible_bias.dot(v) - rbm.hidden_bias.dot(h) - v.dot(rbm.weights * h);
}

/// Exact marginals P(v) over every visible configuration, by summing
/// exp(-E) over all joint states.
inline std::vector<double> brute_force_marginals(const emonoise::Rbm& rbm) {
  const auto nv = rbm.n_visible(), nh = rbm.n_hidden();
  std::vector<double> unnorm(1u << nv, 0.0);
  double z = 0.0;
  for (unsigned vc = 0; vc < (1u << nv); ++vc) {
    for (unsigned hc = 0; hc < (1u << nh); ++hc) {
      const double w = std::exp(-joint_energy(rbm, bits(vc, nv), bits(hc, nh)));
      unnorm[vc] += w;
      z += w;
    }
  }
  for (double& p : unnorm) p /= z;
  return unnorm;
}

/// Partition function by full enumeration.
inline double brute_force_partition(const emonoise::Rbm& rbm) {
  double z = 0.0;
  for (unsigned vc = 0; vc < (1u << rbm.n_visible()); ++vc)
    for (unsigned hc = 0; hc < (1u << rbm.n_hidden()); ++hc)
      z += std::exp(-joint_energy(rbm, bits(vc, rbm.n_visible()), bits(hc, rbm.n_hidden())));
  return z;
}

/// Exact gradient of the mean log-likelihood of `data` (rows of binary
/// visibles) for a Bernoulli RBM, by enumeration: data term minus model term
/// for each parameter block. Returned as weights, visible bias, hidden bias.
struct ExactGradient {
  emonoise::Matrix weights;
  emonoise::Vector visible_bias, hidden_bias;
  double log_likelihood = 0.0;
};

inline ExactGradient exact_loglik_gradient(const emonoise::Rbm& rbm, const emonoise::Matrix& data) {
  const auto nv = rbm.n_visible(), nh = rbm.n_hidden();
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  auto cond_h = [&](const emonoise::Vector& v) {
    emonoise::Vector p(nh);
    for (Eigen::Index j = 0; j < nh; ++j) p(j) = sig(rbm.hidden_bias(j) + v.dot(rbm.weights.col(j)));
    return p;
  };

  ExactGradient g{emonoise::Matrix::Zero(nv, nh), emonoise::Vector::Zero(nv), emonoise::Vector::Zero(nh), 0.0};
  const auto marg = brute_force_marginals(rbm);
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    const emonoise::Vector v = data.row(r).transpose();
    const emonoise::Vector p = cond_h(v);
    g.weights += v * p.transpose();
    g.visible_bias += v;
    g.hidden_bias += p;
    unsigned code = 0;
    for (Eigen::Index i = 0; i < nv; ++i)
      if (v(i) > 0.5) code |= 1u << i;
    g.log_likelihood += std::log(marg[code]);
  }
  const double inv = 1.0 / static_cast<double>(data.rows());
  g.weights *= inv;
  g.visible_bias *= inv;
  g.hidden_bias *= inv;
  g.log_likelihood *= inv;
  for (unsigned vc = 0; vc < (1u << nv); ++vc) {
    const emonoise::Vector v = bits(vc, nv);
    const emonoise::Vector p = cond_h(v);
    g.weights -= marg[vc] * v * p.transpose();
    g.visible_bias -= marg[vc] * v;
    g.hidden_bias -= marg[vc] * p;
  }
  return g;
}

/// Mean cross-entropy of a Dbn written with plain loops, for finite
/// differences against the backpropagated gradient.
inline double naive_cross_entropy(const emonoise::Dbn& dbn, const emonoise::Matrix& raw,
                                  const std::vector<int>& labels) {
  double total = 0.0;
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    std::vector<double> a(static_cast<std::size_t>(raw.cols()));
    for (Eigen::Index i = 0; i < raw.cols(); ++i)
      a[i] = (raw(r, i) - dbn.standardization->mean(i)) / dbn.standardization->stddev(i);
    for (const auto& rbm : dbn.rbms) {
      std::vector<double> next(static_cast<std::size_t>(rbm.n_hidden()));
      for (Eigen::Index j = 0; j < rbm.n_hidden(); ++j) {
        double z = rbm.hidden_bias(j);
        for (Eigen::Index i = 0; i < rbm.n_visible(); ++i) z += a[i] * rbm.weights(i, j);
        next[j] = 1.0 / (1.0 + std::exp(-z));
      }
      a = std::move(next);
    }
    std::vector<double> z(static_cast<std::size_t>(dbn.n_classes()));
    for (Eigen::Index k = 0; k < dbn.n_classes(); ++k) {
      z[k] = dbn.softmax_bias(k);
      for (std::size_t j = 0; j < a.size(); ++j) z[k] += a[j] * dbn.softmax_weights(static_cast<Eigen::Index>(j), k);
    }
    double sum = 0.0;
    for (double zk : z) sum += std::exp(zk);
    total += std::log(sum) - z[static_cast<std::size_t>(labels[r])];
  }
  return total / static_cast<double>(raw.rows());
}

}  // namespace oracle
