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

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "emonoise/audio.hpp"
#include "emonoise/detail/binary_io.hpp"
#include "emonoise/error.hpp"

namespace emonoise {

/// One row per frame (or segment), one column per cepstral coefficient.
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct MfccConfig {
  std::size_t frame_len = 400;  // 25 ms at 16 kHz
  std::size_t hop = 160;        // 10 ms at 16 kHz
  std::size_t fft_size = 512;
  std::size_t n_mels = 26;
  std::size_t n_ceps = 13;
  double preemph = 0.97;
  double fmin_hz = 0.0;
  std::optional<double> fmax_hz;  // unset: Nyquist of the clip being processed
  double log_floor = 1e-10;

  double upper_hz(std::uint32_t sample_rate_hz) const {
    return fmax_hz.value_or(sample_rate_hz / 2.0);
  }
};

struct SegmentConfig {
  std::size_t seg_frames = 25;  // ~250 ms at a 10 ms hop
  std::size_t seg_hop = 25;
};

constexpr bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline void validate(const MfccConfig& cfg, std::uint32_t sample_rate_hz) {
  if (cfg.frame_len == 0 || cfg.hop == 0)
    throw Error(Errc::invalid_argument, "frame_len and hop must be positive");
  if (!is_power_of_two(cfg.fft_size))
    throw Error(Errc::invalid_argument, "fft_size " + std::to_string(cfg.fft_size) +
                                            " is not a power of two");
  if (cfg.fft_size < cfg.frame_len)
    throw Error(Errc::invalid_argument, "fft_size smaller than frame_len");
  if (cfg.n_ceps == 0 || cfg.n_ceps > cfg.n_mels)
    throw Error(Errc::invalid_argument, "need 0 < n_ceps <= n_mels");
  if (!(cfg.preemph >= 0.0 && cfg.preemph < 1.0))
    throw Error(Errc::invalid_argument, "preemph must lie in [0, 1)");
  if (!(cfg.log_floor > 0.0)) throw Error(Errc::invalid_argument, "log_floor must be positive");
  const double fmax = cfg.upper_hz(sample_rate_hz);
  if (!(cfg.fmin_hz >= 0.0 && cfg.fmin_hz < fmax))
    throw Error(Errc::invalid_argument, "need 0 <= fmin_hz < fmax_hz");
  if (fmax > sample_rate_hz / 2.0)
    throw Error(Errc::invalid_argument, "fmax_hz " + std::to_string(fmax) + " above Nyquist");
}

/// In-place iterative radix-2 FFT, forward sign convention exp(-2 pi i kn/N).
/// Twiddles are evaluated directly per index rather than by recurrence.
inline void fft_inplace(std::span<std::complex<double>> x) {
  const std::size_t n = x.size();
  if (!is_power_of_two(n))
    throw Error(Errc::invalid_argument, "fft length " + std::to_string(n) + " is not a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    std::vector<std::complex<double>> twiddle(half);
    for (std::size_t k = 0; k < half; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len);
      twiddle[k] = {std::cos(angle), std::sin(angle)};
    }
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const auto u = x[start + k];
        const auto v = x[start + k + half] * twiddle[k];
        x[start + k] = u + v;
        x[start + k + half] = u - v;
      }
    }
  }
}

inline std::vector<std::complex<double>> fft(std::vector<std::complex<double>> buffer) {
  fft_inplace(buffer);
  return buffer;
}

/// Frames start at 0, hop, 2*hop, ... and must fit entirely; the tail is
/// dropped, never padded.
inline std::size_t frame_count(std::size_t length, std::size_t frame_len, std::size_t hop) {
  if (frame_len == 0 || hop == 0) throw Error(Errc::invalid_argument, "frame_len and hop must be positive");
  return length < frame_len ? 0 : 1 + (length - frame_len) / hop;
}

inline std::vector<std::vector<double>> frame_signal(std::span<const double> samples,
                                                     std::size_t frame_len, std::size_t hop) {
  const std::size_t count = frame_count(samples.size(), frame_len, hop);
  std::vector<std::vector<double>> frames;
  frames.reserve(count);
  for (std::size_t f = 0; f < count; ++f) {
    const auto first = samples.begin() + static_cast<std::ptrdiff_t>(f * hop);
    frames.emplace_back(first, first + static_cast<std::ptrdiff_t>(frame_len));
  }
  return frames;
}

inline double hz_to_mel(double hz) {
  if (hz < 0.0) throw Error(Errc::invalid_argument, "negative frequency");
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

inline double mel_to_hz(double mel) {
  if (mel < 0.0) throw Error(Errc::invalid_argument, "negative mel value");
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

/// Centre frequencies (Hz) of the n_mels + 2 mel-spaced filter edges.
inline std::vector<double> mel_edges_hz(const MfccConfig& cfg, std::uint32_t sample_rate_hz) {
  const double lo = hz_to_mel(cfg.fmin_hz);
  const double hi = hz_to_mel(cfg.upper_hz(sample_rate_hz));
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  return edges;
}

/// Triangular filters, linear in Hz between mel-spaced edges, apex height 1.
/// Shape n_mels x (fft_size/2 + 1).
inline Eigen::MatrixXd mel_filterbank(const MfccConfig& cfg, std::uint32_t sample_rate_hz) {
  validate(cfg, sample_rate_hz);
  const auto edges = mel_edges_hz(cfg, sample_rate_hz);
  const std::size_t n_bins = cfg.fft_size / 2 + 1;
  const double bin_hz = static_cast<double>(sample_rate_hz) / static_cast<double>(cfg.fft_size);

  Eigen::MatrixXd bank = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cfg.n_mels),
                                               static_cast<Eigen::Index>(n_bins));
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    bool support = false;
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      double w = 0.0;
      if (f > left && f < centre)
        w = (f - left) / (centre - left);
      else if (f == centre)
        w = 1.0;
      else if (f > centre && f < right)
        w = (right - f) / (right - centre);
      if (w > 0.0) {
        bank(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) = w;
        support = true;
      }
    }
    if (!support)
      throw Error(Errc::invalid_argument, "mel filter " + std::to_string(m) +
                                              " has no FFT bin; lower n_mels or raise fft_size");
  }
  return bank;
}

/// Orthonormal DCT-II keeping the first n_out coefficients.
inline std::vector<double> dct2(std::span<const double> v, std::size_t n_out) {
  const std::size_t n = v.size();
  if (n_out == 0 || n_out > n)
    throw Error(Errc::invalid_argument, "dct2 needs 1 <= n_out <= input length");
  std::vector<double> y(n_out);
  const double s0 = std::sqrt(1.0 / static_cast<double>(n));
  const double sk = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t k = 0; k < n_out; ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      acc += v[j] * std::cos(std::numbers::pi * static_cast<double>(k) *
                             (2.0 * static_cast<double>(j) + 1.0) / (2.0 * static_cast<double>(n)));
    y[k] = (k == 0 ? s0 : sk) * acc;
  }
  return y;
}

/// Filterbank energies per frame (before the log), shape frames x n_mels.
/// Pre-emphasis runs over the whole clip, then each frame is Hamming
/// windowed, zero-padded to fft_size and turned into |X|^2 / fft_size.
inline FeatureMatrix mel_energies(const AudioClip& clip, const MfccConfig& cfg) {
  validate(cfg, clip.sample_rate_hz);
  const std::size_t frames = frame_count(clip.size(), cfg.frame_len, cfg.hop);
  if (frames == 0)
    throw Error(Errc::invalid_argument, "clip of " + std::to_string(clip.size()) +
                                            " samples is shorter than one frame");
  const Eigen::MatrixXd bank = mel_filterbank(cfg, clip.sample_rate_hz);

  std::vector<double> emphasized(clip.samples.size());
  for (std::size_t t = 0; t < emphasized.size(); ++t)
    emphasized[t] = clip.samples[t] - (t == 0 ? 0.0 : cfg.preemph * clip.samples[t - 1]);

  std::vector<double> window(cfg.frame_len);
  for (std::size_t i = 0; i < cfg.frame_len; ++i)
    window[i] = cfg.frame_len == 1
                    ? 1.0
                    : 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                             static_cast<double>(cfg.frame_len - 1));

  const std::size_t n_bins = cfg.fft_size / 2 + 1;
  FeatureMatrix energies(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(cfg.n_mels));
  std::vector<std::complex<double>> buffer(cfg.fft_size);
  Eigen::VectorXd power(static_cast<Eigen::Index>(n_bins));
  for (std::size_t f = 0; f < frames; ++f) {
    std::fill(buffer.begin(), buffer.end(), std::complex<double>{});
    for (std::size_t i = 0; i < cfg.frame_len; ++i) buffer[i] = emphasized[f * cfg.hop + i] * window[i];
    fft_inplace(buffer);
    for (std::size_t k = 0; k < n_bins; ++k)
      power(static_cast<Eigen::Index>(k)) = std::norm(buffer[k]) / static_cast<double>(cfg.fft_size);
    energies.row(static_cast<Eigen::Index>(f)) = (bank * power).transpose();
  }
  return energies;
}

/// Cepstra from filterbank energies: natural log of max(energy, floor), then
/// DCT-II keeping n_ceps coefficients (C0 included).
inline FeatureMatrix cepstra_from_energies(const FeatureMatrix& energies, const MfccConfig& cfg) {
  FeatureMatrix out(energies.rows(), static_cast<Eigen::Index>(cfg.n_ceps));
  std::vector<double> logs(static_cast<std::size_t>(energies.cols()));
  for (Eigen::Index r = 0; r < energies.rows(); ++r) {
    for (Eigen::Index m = 0; m < energies.cols(); ++m)
      logs[static_cast<std::size_t>(m)] = std::log(std::max(energies(r, m), cfg.log_floor));
    const auto ceps = dct2(logs, cfg.n_ceps);
    for (std::size_t c = 0; c < cfg.n_ceps; ++c) out(r, static_cast<Eigen::Index>(c)) = ceps[c];
  }
  return out;
}

inline FeatureMatrix mfcc(const AudioClip& clip, const MfccConfig& cfg = {}) {
  return cepstra_from_energies(mel_energies(clip, cfg), cfg);
}

inline std::size_t segment_count(std::size_t frames, const SegmentConfig& scfg) {
  if (scfg.seg_frames == 0 || scfg.seg_hop == 0)
    throw Error(Errc::invalid_argument, "seg_frames and seg_hop must be positive");
  if (frames == 0) return 0;
  if (frames < scfg.seg_frames) return 1;
  return 1 + (frames - scfg.seg_frames) / scfg.seg_hop;
}

/// Mean of each run of seg_frames rows, runs starting every seg_hop rows.
/// An utterance shorter than one segment collapses to a single mean row.
inline FeatureMatrix segment_features(const FeatureMatrix& frames, const SegmentConfig& scfg = {}) {
  if (frames.rows() == 0) throw Error(Errc::empty_input, "no frames to segment");
  const auto total = static_cast<std::size_t>(frames.rows());
  const std::size_t count = segment_count(total, scfg);
  const std::size_t span_len = std::min(scfg.seg_frames, total);
  FeatureMatrix out(static_cast<Eigen::Index>(count), frames.cols());
  for (std::size_t s = 0; s < count; ++s) {
    out.row(static_cast<Eigen::Index>(s)) =
        frames.middleRows(static_cast<Eigen::Index>(s * scfg.seg_hop), static_cast<Eigen::Index>(span_len))
            .colwise()
            .mean();
  }
  return out;
}

/// Clip to segment-level vectors in one call.
inline FeatureMatrix utterance_segments(const AudioClip& clip, const MfccConfig& cfg,
                                        const SegmentConfig& scfg) {
  return segment_features(mfcc(clip, cfg), scfg);
}

// Feature cache: "MFC1", u32 rows, u32 cols, then f64 values row-major.

inline void write_feature_cache(const FeatureMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  out.write("MFC1", 4);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  detail::write_le<double>(out, std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
  if (!out) throw Error(Errc::io, "failed writing " + path.string());
}

inline FeatureMatrix read_feature_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  if (detail::read_tag(in, "magic") != "MFC1")
    throw Error(Errc::bad_magic, path.string() + " is not a feature cache");
  const auto rows = detail::read_le<std::uint32_t>(in, "row count");
  const auto cols = detail::read_le<std::uint32_t>(in, "column count");
  FeatureMatrix m(rows, cols);
  detail::read_le<double>(in, std::span<double>(m.data(), static_cast<std::size_t>(m.size())), "feature values");
  return m;
}

}  // namespace emonoise
