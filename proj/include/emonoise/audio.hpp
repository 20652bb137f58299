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
#include <iterator>
#include <numeric>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "emonoise/detail/binary_io.hpp"
#include "emonoise/error.hpp"
#include "emonoise/rng.hpp"

namespace emonoise {

/// Mono audio: amplitudes nominally in [-1, 1] plus the sample rate.
struct AudioClip {
  std::vector<double> samples;
  std::uint32_t sample_rate_hz = 16000;

  std::size_t size() const noexcept { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

/// How a noise recording is laid under a clean clip.
struct MixSpec {
  double snr_db = 0.0;
  std::size_t noise_offset = 0;  // start of the window inside the noise clip
  std::uint64_t seed = 0;
};

namespace detail {

inline std::uint16_t get_u16(const std::vector<unsigned char>& b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

inline std::uint32_t get_u32(const std::vector<unsigned char>& b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

inline bool tag_is(const std::vector<unsigned char>& b, std::size_t at, const char* tag) {
  return std::equal(tag, tag + 4, b.begin() + static_cast<std::ptrdiff_t>(at));
}

}  // namespace detail

/// Parses an in-memory RIFF/WAVE image. Only 16-bit integer PCM is accepted;
/// multi-channel data keeps channel 0. Unknown chunks are skipped, and a data
/// chunk whose declared size runs past the end of the image is cut to the
/// whole frames actually present.
inline AudioClip parse_wav(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 12 || !detail::tag_is(bytes, 0, "RIFF"))
    throw Error(Errc::malformed_header, "missing RIFF tag");
  if (!detail::tag_is(bytes, 8, "WAVE"))
    throw Error(Errc::malformed_header, "missing WAVE tag");

  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::size_t data_at = 0, data_len = 0;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t len = detail::get_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (detail::tag_is(bytes, pos, "fmt ")) {
      if (len < 16 || body + 16 > bytes.size())
        throw Error(Errc::malformed_header, "fmt chunk too short");
      std::uint16_t format = detail::get_u16(bytes, body);
      channels = detail::get_u16(bytes, body + 2);
      rate = detail::get_u32(bytes, body + 4);
      const std::uint16_t bits = detail::get_u16(bytes, body + 14);
      if (format == 0xFFFE) {  // WAVE_FORMAT_EXTENSIBLE: sub-format GUID at +24
        if (len < 40 || body + 26 > bytes.size())
          throw Error(Errc::malformed_header, "extensible fmt chunk too short");
        format = detail::get_u16(bytes, body + 24);
      }
      if (format != 1)
        throw Error(Errc::unsupported_encoding,
                    "format code " + std::to_string(format) + " is not integer PCM");
      if (bits != 16)
        throw Error(Errc::unsupported_encoding, std::to_string(bits) + "-bit samples");
      if (channels == 0) throw Error(Errc::malformed_header, "zero channels");
      if (rate == 0) throw Error(Errc::malformed_header, "zero sample rate");
      have_fmt = true;
    } else if (detail::tag_is(bytes, pos, "data")) {
      data_at = body;
      data_len = std::min<std::size_t>(len, bytes.size() - body);
      have_data = true;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt) throw Error(Errc::malformed_header, "no fmt chunk");
  if (!have_data) throw Error(Errc::malformed_header, "no data chunk");

  const std::size_t frame_bytes = 2u * channels;
  const std::size_t frames = data_len / frame_bytes;
  AudioClip clip;
  clip.sample_rate_hz = rate;
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const auto raw = static_cast<std::int16_t>(detail::get_u16(bytes, data_at + i * frame_bytes));
    clip.samples[i] = static_cast<double>(raw) / 32768.0;
  }
  return clip;
}

inline AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(Errc::io, "cannot read " + path.string());
  return parse_wav(bytes);
}

/// Quantizes one amplitude to int16: clamp to [-1, 1], scale by 32768, round
/// half away from zero, saturate at 32767. Inverse of the s/32768 read scale.
inline std::int16_t quantize_sample(double s) {
  const double clamped = std::clamp(s, -1.0, 1.0);
  const double q = std::round(clamped * 32768.0);
  return static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0));
}

inline void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  if (clip.sample_rate_hz == 0) throw Error(Errc::invalid_argument, "zero sample rate");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");

  const auto data_len = static_cast<std::uint32_t>(clip.samples.size() * 2);
  out.write("RIFF", 4);
  detail::write_le<std::uint32_t>(out, 36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  detail::write_le<std::uint32_t>(out, 16);
  detail::write_le<std::uint16_t>(out, 1);  // PCM
  detail::write_le<std::uint16_t>(out, 1);  // mono
  detail::write_le<std::uint32_t>(out, clip.sample_rate_hz);
  detail::write_le<std::uint32_t>(out, clip.sample_rate_hz * 2);
  detail::write_le<std::uint16_t>(out, 2);
  detail::write_le<std::uint16_t>(out, 16);
  out.write("data", 4);
  detail::write_le<std::uint32_t>(out, data_len);
  for (double s : clip.samples) detail::write_le<std::int16_t>(out, quantize_sample(s));
  if (!out) throw Error(Errc::io, "failed writing " + path.string());
}

/// Band-limited resampling with a Hann-windowed sinc kernel of 64 taps at the
/// lower of the two rates. Output length is round(n * target / source).
///
/// Output sample n sits at input position n * source / target. With
/// L = target / g and M = source / g (g the gcd) that position has integer
/// part floor(n M / L) and one of L fractional phases, so the kernel is
/// tabulated once per phase.
inline AudioClip resample(const AudioClip& clip, std::uint32_t target_rate_hz) {
  if (target_rate_hz == 0) throw Error(Errc::invalid_argument, "target rate must be positive");
  if (clip.sample_rate_hz == 0) throw Error(Errc::invalid_argument, "source rate must be positive");
  if (target_rate_hz == clip.sample_rate_hz) return clip;

  constexpr double kTaps = 64.0;
  const std::uint64_t g = std::gcd(clip.sample_rate_hz, target_rate_hz);
  const std::uint64_t up = target_rate_hz / g;
  const std::uint64_t down = clip.sample_rate_hz / g;
  const double cutoff = std::min(1.0, static_cast<double>(target_rate_hz) / clip.sample_rate_hz);
  const double half_width = (kTaps / 2.0) / cutoff;  // in input samples

  const auto j_min = static_cast<std::ptrdiff_t>(std::ceil(-half_width));
  const auto j_max = static_cast<std::ptrdiff_t>(std::floor(1.0 + half_width));
  const auto width = static_cast<std::size_t>(j_max - j_min + 1);

  auto kernel = [&](double d) {
    if (std::abs(d) >= half_width) return 0.0;
    const double x = std::numbers::pi * cutoff * d;
    const double sinc = (x == 0.0) ? 1.0 : std::sin(x) / x;
    const double window = 0.5 * (1.0 + std::cos(std::numbers::pi * d / half_width));
    return cutoff * sinc * window;
  };

  std::vector<double> table(static_cast<std::size_t>(up) * width);
  for (std::uint64_t r = 0; r < up; ++r) {
    const double frac = static_cast<double>(r) / static_cast<double>(up);
    for (std::size_t t = 0; t < width; ++t)
      table[r * width + t] = kernel(frac - static_cast<double>(j_min + static_cast<std::ptrdiff_t>(t)));
  }

  const auto n_in = static_cast<std::ptrdiff_t>(clip.samples.size());
  const auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(clip.samples.size()) * static_cast<double>(up) / static_cast<double>(down)));

  AudioClip out;
  out.sample_rate_hz = target_rate_hz;
  out.samples.resize(n_out);
  for (std::size_t n = 0; n < n_out; ++n) {
    const std::uint64_t pos = static_cast<std::uint64_t>(n) * down;
    const auto q = static_cast<std::ptrdiff_t>(pos / up);
    const double* taps = &table[(pos % up) * width];
    double acc = 0.0;
    for (std::size_t t = 0; t < width; ++t) {
      const std::ptrdiff_t k = q + j_min + static_cast<std::ptrdiff_t>(t);
      if (k >= 0 && k < n_in) acc += clip.samples[static_cast<std::size_t>(k)] * taps[t];
    }
    out.samples[n] = acc;
  }
  return out;
}

inline double rms(std::span<const double> samples) {
  if (samples.empty()) throw Error(Errc::empty_input, "rms of an empty signal");
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return std::sqrt(acc / static_cast<double>(samples.size()));
}

/// The stretch of noise laid under a clean clip of `length` samples, starting
/// at `offset` and wrapping around when the recording is too short.
inline std::vector<double> noise_window(const AudioClip& noise, std::size_t offset,
                                        std::size_t length) {
  if (noise.samples.empty()) throw Error(Errc::empty_input, "empty noise recording");
  if (offset >= noise.samples.size())
    throw Error(Errc::invalid_argument, "noise offset " + std::to_string(offset) +
                                            " beyond noise length " +
                                            std::to_string(noise.samples.size()));
  std::vector<double> window(length);
  std::size_t at = offset;
  for (std::size_t i = 0; i < length; ++i) {
    window[i] = noise.samples[at];
    if (++at == noise.samples.size()) at = 0;
  }
  return window;
}

/// Deterministic window start for one utterance, keyed by seed and a stable
/// utterance key (see utterance_key in pipeline.hpp).
inline std::size_t choose_noise_offset(std::size_t noise_length, std::uint64_t seed,
                                       std::uint64_t utterance_key) {
  if (noise_length == 0) throw Error(Errc::empty_input, "empty noise recording");
  return static_cast<std::size_t>(mix_seed(seed, utterance_key) % noise_length);
}

/// Gain applied to the noise window so that the RMS ratio hits `snr_db`.
inline double snr_gain(double clean_rms, double noise_rms, double snr_db) {
  return clean_rms / (noise_rms * std::pow(10.0, snr_db / 20.0));
}

inline AudioClip mix_at_snr(const AudioClip& clean, const AudioClip& noise, const MixSpec& spec) {
  if (clean.sample_rate_hz != noise.sample_rate_hz)
    throw Error(Errc::rate_mismatch, std::to_string(clean.sample_rate_hz) + " Hz speech vs " +
                                         std::to_string(noise.sample_rate_hz) + " Hz noise");
  if (!std::isfinite(spec.snr_db)) throw Error(Errc::invalid_argument, "snr_db must be finite");
  const double clean_rms = rms(clean.samples);
  if (clean_rms == 0.0) throw Error(Errc::silent_signal, "clean clip is silent");

  const auto window = noise_window(noise, spec.noise_offset, clean.samples.size());
  const double noise_rms = rms(window);
  if (noise_rms == 0.0) throw Error(Errc::silent_signal, "noise window is silent");

  const double g = snr_gain(clean_rms, noise_rms, spec.snr_db);
  AudioClip out;
  out.sample_rate_hz = clean.sample_rate_hz;
  out.samples.resize(clean.samples.size());
  for (std::size_t i = 0; i < out.samples.size(); ++i)
    out.samples[i] = clean.samples[i] + g * window[i];
  return out;
}

}  // namespace emonoise
