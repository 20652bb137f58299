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
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "emonoise/audio.hpp"
#include "emonoise/pipeline.hpp"
#include "emonoise/rng.hpp"

// Stand-in corpora for demos and tests: seven tone-complex "emotions" with
// EMO-DB style file names, plus noise recordings laid out like DEMAND.
namespace emonoise::synthetic {

inline constexpr std::array<char, kLabelCount> kBerlinCodes = {'W', 'L', 'E', 'A', 'F', 'N', 'T'};

/// Harmonic complex whose fundamental and spectral tilt depend on the class.
/// Fundamental, level and length are jittered per utterance.
inline AudioClip tone_complex(Label label, Rng& rng, std::uint32_t rate_hz = 16000) {
  const double c = static_cast<double>(label_index(label));
  const double f0 = (110.0 + 55.0 * c) * (1.0 + 0.03 * (2.0 * rng.uniform() - 1.0));
  const double tilt = 0.6 + 0.15 * c;
  const double level = 0.1 + 0.2 * rng.uniform();
  const double seconds = 1.0 + 0.6 * rng.uniform();
  const auto n = static_cast<std::size_t>(seconds * rate_hz);

  AudioClip clip;
  clip.sample_rate_hz = rate_hz;
  clip.samples.assign(n, 0.0);
  double norm = 0.0;
  for (int h = 1; h <= 8; ++h) {
    const double f = f0 * h;
    if (f >= rate_hz / 2.0) break;
    const double amp = std::pow(static_cast<double>(h), -tilt);
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    norm += amp;
    for (std::size_t t = 0; t < n; ++t)
      clip.samples[t] += amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(t) / rate_hz + phase);
  }
  // Recording noise floor roughly 45 dB under the tone.
  for (double& s : clip.samples) s = s * level / norm + 0.004 * level * rng.normal();
  return clip;
}

inline AudioClip white_noise(std::size_t n, Rng& rng, std::uint32_t rate_hz = 16000, double stddev = 0.1) {
  AudioClip clip;
  clip.sample_rate_hz = rate_hz;
  clip.samples.resize(n);
  for (double& s : clip.samples) s = stddev * rng.normal();
  return clip;
}

/// Low-frequency hum with slow amplitude drift (a stationary, low-variability noise).
inline AudioClip hum_noise(std::size_t n, Rng& rng, std::uint32_t rate_hz = 16000) {
  AudioClip clip;
  clip.sample_rate_hz = rate_hz;
  clip.samples.resize(n);
  const double phase = 2.0 * std::numbers::pi * rng.uniform();
  for (std::size_t t = 0; t < n; ++t) {
    const double time = static_cast<double>(t) / rate_hz;
    clip.samples[t] = 0.1 * (1.0 + 0.2 * std::sin(2.0 * std::numbers::pi * 0.5 * time)) *
                      (std::sin(2.0 * std::numbers::pi * 50.0 * time + phase) +
                       0.5 * std::sin(2.0 * std::numbers::pi * 100.0 * time + phase));
  }
  return clip;
}

/// EMO-DB style name: speaker, text code, emotion letter, version letter.
inline std::string berlin_name(int speaker, std::size_t text, Label label) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02d%c%02zu%c%c.wav", speaker, static_cast<char>('a' + text / 100), text % 100,
                kBerlinCodes[static_cast<std::size_t>(label)], 'a');
  return buf;
}

/// Writes `per_class` utterances of every class, spread over `speakers`
/// speakers, into `dir`. Returns the number of files.
inline std::size_t write_clean_corpus(const std::filesystem::path& dir, std::size_t per_class, int speakers,
                                      std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  Rng rng(seed);
  std::size_t written = 0;
  for (std::size_t c = 0; c < kLabelCount; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const int speaker = 3 + static_cast<int>(i % static_cast<std::size_t>(speakers));
      const auto text = i / static_cast<std::size_t>(speakers);
      write_wav(tone_complex(static_cast<Label>(c), rng), dir / berlin_name(speaker, text, static_cast<Label>(c)));
      ++written;
    }
  }
  return written;
}

/// noise_dir/WHITE/ch01.wav and noise_dir/HUM/ch01.wav, `seconds` long.
inline void write_noise_corpus(const std::filesystem::path& noise_dir, double seconds, std::uint64_t seed) {
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(seconds * 16000);
  std::filesystem::create_directories(noise_dir / "WHITE");
  std::filesystem::create_directories(noise_dir / "HUM");
  write_wav(white_noise(n, rng), noise_dir / "WHITE" / "ch01.wav");
  write_wav(hum_noise(n, rng), noise_dir / "HUM" / "ch01.wav");
}

}  // namespace emonoise::synthetic
