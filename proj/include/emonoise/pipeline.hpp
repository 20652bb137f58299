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
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "emonoise/audio.hpp"
#include "emonoise/dbn.hpp"
#include "emonoise/dsp.hpp"
#include "emonoise/error.hpp"
#include "emonoise/log.hpp"
#include "emonoise/rng.hpp"

namespace emonoise {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Labels

enum class Label : int { anger = 0, boredom, disgust, fear, joy, neutral, sadness };

inline constexpr std::size_t kLabelCount = 7;

inline constexpr std::array<std::string_view, kLabelCount> kLabelNames = {
    "anger", "boredom", "disgust", "fear", "joy", "neutral", "sadness"};

inline std::string_view label_name(Label label) { return kLabelNames[static_cast<std::size_t>(label)]; }

inline int label_index(Label label) { return static_cast<int>(label); }

inline Label label_from_index(int index) {
  if (index < 0 || index >= static_cast<int>(kLabelCount))
    throw Error(Errc::label_out_of_range, "label index " + std::to_string(index));
  return static_cast<Label>(index);
}

inline Label parse_label(std::string_view name) {
  for (std::size_t i = 0; i < kLabelCount; ++i)
    if (kLabelNames[i] == name) return static_cast<Label>(i);
  throw Error(Errc::invalid_argument, "unknown label '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Manifest

enum class SplitTag { none, train, test };

inline std::string_view split_name(SplitTag tag) {
  switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::test: return "test";
    case SplitTag::none: break;
  }
  return "";
}

struct ManifestEntry {
  fs::path path;
  Label label = Label::anger;
  std::string speaker;
  SplitTag split = SplitTag::none;

  bool operator==(const ManifestEntry&) const = default;
};

using Manifest = std::vector<ManifestEntry>;

struct LabeledName {
  Label label;
  std::string speaker;
};

/// Maps a file name (no directory) to its label and speaker, or nullopt.
using LabelRule = std::function<std::optional<LabeledName>(std::string_view)>;

/// EMO-DB names: two-digit speaker, three-character text code, emotion letter
/// (German initial), version letter, ".wav". E.g. "03a01Fa.wav".
inline std::optional<LabeledName> berlin_label_rule(std::string_view name) {
  if (name.size() != 11 || name.substr(7) != ".wav") return std::nullopt;
  if (!std::isdigit(static_cast<unsigned char>(name[0])) || !std::isdigit(static_cast<unsigned char>(name[1])))
    return std::nullopt;
  Label label;
  switch (name[5]) {
    case 'W': label = Label::anger; break;    // Wut / Aerger
    case 'L': label = Label::boredom; break;  // Langeweile
    case 'E': label = Label::disgust; break;  // Ekel
    case 'A': label = Label::fear; break;     // Angst
    case 'F': label = Label::joy; break;      // Freude
    case 'N': label = Label::neutral; break;
    case 'T': label = Label::sadness; break;  // Trauer
    default: return std::nullopt;
  }
  return LabeledName{label, std::string(name.substr(0, 2))};
}

inline std::vector<fs::path> list_wavs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".wav") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// One entry per WAV in `clean_dir`, in file-name order, without split tags.
inline Manifest build_manifest(const fs::path& clean_dir, const LabelRule& rule = berlin_label_rule) {
  if (!fs::is_directory(clean_dir)) throw Error(Errc::io, "not a directory: " + clean_dir.string());
  Manifest manifest;
  for (const auto& path : list_wavs(clean_dir)) {
    const auto labeled = rule(path.filename().string());
    if (!labeled) throw Error(Errc::unmappable_filename, path.filename().string());
    manifest.push_back({path, labeled->label, labeled->speaker, SplitTag::none});
  }
  if (manifest.empty()) throw Error(Errc::empty_input, "no WAV files in " + clean_dir.string());
  return manifest;
}

inline std::array<std::size_t, kLabelCount> label_counts(const Manifest& manifest) {
  std::array<std::size_t, kLabelCount> counts{};
  for (const auto& e : manifest) ++counts[static_cast<std::size_t>(e.label)];
  return counts;
}

inline Manifest entries_with(const Manifest& manifest, SplitTag tag) {
  Manifest out;
  std::copy_if(manifest.begin(), manifest.end(), std::back_inserter(out),
               [tag](const ManifestEntry& e) { return e.split == tag; });
  return out;
}

namespace detail {

inline std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n\r") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  return fields;
}

}  // namespace detail

inline void write_manifest_csv(const Manifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  out << "path,label,speaker,split\n";
  for (const auto& e : manifest)
    out << detail::csv_field(e.path.string()) << ',' << label_name(e.label) << ','
        << detail::csv_field(e.speaker) << ',' << split_name(e.split) << '\n';
  if (!out) throw Error(Errc::io, "failed writing " + path.string());
}

inline Manifest read_manifest_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || detail::split_csv_line(line) !=
                                     std::vector<std::string>{"path", "label", "speaker", "split"})
    throw Error(Errc::malformed_header, path.string() + " lacks the manifest header");
  Manifest manifest;
  std::set<std::string> seen;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 4)
      throw Error(Errc::malformed_header, path.string() + ":" + std::to_string(lineno) + ": expected 4 fields");
    SplitTag tag = SplitTag::none;
    if (f[3] == "train") tag = SplitTag::train;
    else if (f[3] == "test") tag = SplitTag::test;
    else if (!f[3].empty())
      throw Error(Errc::malformed_header, path.string() + ":" + std::to_string(lineno) + ": bad split '" + f[3] + "'");
    if (!seen.insert(f[0]).second)
      throw Error(Errc::invalid_argument, "duplicate manifest path " + f[0]);
    manifest.push_back({f[0], parse_label(f[1]), f[2], tag});
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Splits

enum class SplitStrategy { stratified_random, leave_speakers_out };

namespace detail {
// ceil that ignores representation error, e.g. 0.1 * 30 = 3.0000000000000004.
inline std::size_t fraction_ceil(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}
}  // namespace detail

/// Tags every entry train or test. Stratified: each label's entries are
/// shuffled and the last ceil(fraction * n) go to test. Leave-speakers-out:
/// speakers are shuffled and moved to test whole until the test share
/// reaches the fraction.
inline Manifest split(Manifest manifest, SplitStrategy strategy, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw Error(Errc::invalid_argument, "test fraction must lie in (0, 1)");
  if (manifest.empty()) throw Error(Errc::empty_input, "empty manifest");
  Rng rng(seed);
  for (auto& e : manifest) e.split = SplitTag::train;

  if (strategy == SplitStrategy::stratified_random) {
    for (std::size_t label = 0; label < kLabelCount; ++label) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < manifest.size(); ++i)
        if (static_cast<std::size_t>(manifest[i].label) == label) members.push_back(i);
      if (members.empty()) continue;
      if (members.size() < 2)
        throw Error(Errc::invalid_argument, "label " + std::string(kLabelNames[label]) +
                                                " has fewer than 2 utterances");
      rng.shuffle(members.begin(), members.end());
      const std::size_t n_test = detail::fraction_ceil(test_fraction, members.size());
      for (std::size_t k = members.size() - n_test; k < members.size(); ++k)
        manifest[members[k]].split = SplitTag::test;
    }
    return manifest;
  }

  std::set<std::string> unique;
  for (const auto& e : manifest) unique.insert(e.speaker);
  std::vector<std::string> speakers(unique.begin(), unique.end());
  rng.shuffle(speakers.begin(), speakers.end());
  const std::size_t target = detail::fraction_ceil(test_fraction, manifest.size());
  std::size_t in_test = 0;
  for (const auto& speaker : speakers) {
    if (in_test >= target) break;
    for (auto& e : manifest)
      if (e.speaker == speaker) {
        e.split = SplitTag::test;
        ++in_test;
      }
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Standardization

/// Per-dimension mean and population standard deviation. A dimension with
/// (near) zero spread keeps std 1 so it maps to zero.
inline Standardization fit_standardization(const Matrix& train, const LogSink& log = stderr_sink()) {
  if (train.rows() == 0) throw Error(Errc::empty_input, "no training features to standardize");
  Standardization st{train.colwise().mean().transpose(), Vector(train.cols())};
  for (Eigen::Index d = 0; d < train.cols(); ++d) {
    const double var = (train.col(d).array() - st.mean(d)).square().mean();
    double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(st.mean(d))))) {
      if (log) log("warning: feature dimension " + std::to_string(d) + " is constant; std clamped to 1");
      sd = 1.0;
    }
    st.stddev(d) = sd;
  }
  return st;
}

// ---------------------------------------------------------------------------
// Scoring

/// Most frequent label; ties go to the lowest index.
inline int majority_vote(std::span<const int> segment_labels) {
  if (segment_labels.empty()) throw Error(Errc::empty_input, "no segment predictions to vote on");
  std::map<int, std::size_t> counts;
  for (int l : segment_labels) ++counts[l];
  int best = counts.begin()->first;
  std::size_t best_count = 0;
  for (const auto& [label, count] : counts)
    if (count > best_count) {
      best = label;
      best_count = count;
    }
  return best;
}

enum class DeltaMode { relative, absolute };

/// Clean-to-noisy accuracy drop in percent (relative) or percentage points
/// (absolute). Negative means the noisy condition scored higher.
inline double accuracy_delta(double clean_acc, double noisy_acc, DeltaMode mode = DeltaMode::relative) {
  if (mode == DeltaMode::absolute) return 100.0 * (clean_acc - noisy_acc);
  if (!(clean_acc > 0.0)) throw Error(Errc::invalid_argument, "clean accuracy must be positive");
  return 100.0 * (clean_acc - noisy_acc) / clean_acc;
}

inline std::string_view band(double delta_percent) {
  if (!std::isfinite(delta_percent)) throw Error(Errc::invalid_argument, "delta must be finite");
  if (delta_percent < 0.0) return "improved";
  if (delta_percent < 10.0) return "<10";
  if (delta_percent < 20.0) return "10-20";
  if (delta_percent < 30.0) return "20-30";
  return ">=30";
}

using Confusion = std::array<std::array<std::size_t, kLabelCount>, kLabelCount>;  // [truth][predicted]

struct UtteranceOutcome {
  Label truth;
  std::vector<int> segment_predictions;
};

struct EvalReport {
  std::string condition = "clean";
  std::optional<double> snr_db;
  double segment_accuracy = 0.0;
  double utterance_accuracy = 0.0;
  double clean_accuracy = 0.0;
  double delta_percent = 0.0;
  std::string band = "<10";
  Confusion confusion{};
  std::size_t utterances = 0;
  std::size_t segments = 0;
};

/// Accuracy and confusion from per-utterance segment predictions. The
/// comparison fields (clean accuracy, delta, band) are left for the caller.
inline EvalReport score_outcomes(std::string condition, std::span<const UtteranceOutcome> outcomes) {
  if (outcomes.empty()) throw Error(Errc::empty_input, "no test utterances");
  EvalReport report;
  report.condition = std::move(condition);
  std::size_t correct_utt = 0, correct_seg = 0;
  for (const auto& o : outcomes) {
    const int voted = majority_vote(o.segment_predictions);
    const auto truth = static_cast<std::size_t>(o.truth);
    ++report.confusion[truth][static_cast<std::size_t>(label_from_index(voted))];
    if (voted == label_index(o.truth)) ++correct_utt;
    for (int p : o.segment_predictions)
      if (p == label_index(o.truth)) ++correct_seg;
    report.segments += o.segment_predictions.size();
  }
  report.utterances = outcomes.size();
  report.utterance_accuracy = static_cast<double>(correct_utt) / static_cast<double>(outcomes.size());
  report.segment_accuracy = static_cast<double>(correct_seg) / static_cast<double>(report.segments);
  return report;
}

/// Fills the comparison fields against a clean baseline accuracy.
inline void compare_to_clean(EvalReport& report, double clean_accuracy, DeltaMode mode) {
  report.clean_accuracy = clean_accuracy;
  report.delta_percent = accuracy_delta(clean_accuracy, report.utterance_accuracy, mode);
  report.band = std::string(band(report.delta_percent));
}

// ---------------------------------------------------------------------------
// Evaluation

struct FeatureSettings {
  MfccConfig mfcc;
  SegmentConfig segment;
  std::uint32_t target_rate_hz = 16000;
};

/// Reads an utterance and brings it to the working sample rate.
inline AudioClip load_utterance(const fs::path& path, std::uint32_t target_rate_hz) {
  return resample(read_wav(path), target_rate_hz);
}

/// Audio corruption applied to a test (or training) utterance.
using ConditionTransform = std::function<AudioClip(const AudioClip&, const ManifestEntry&)>;

inline ConditionTransform identity_condition() {
  return [](const AudioClip& clip, const ManifestEntry&) { return clip; };
}

/// Stable per-utterance key: the file name, independent of list position.
inline std::uint64_t utterance_key(const ManifestEntry& entry) { return fnv1a(entry.path.filename().string()); }

/// Mixes `noise` in at `snr_db`. The window offset depends only on the seed,
/// the noise name and the utterance file name, so every SNR level of one
/// category reuses the same stretch of noise for a given utterance.
inline ConditionTransform noise_condition(AudioClip noise, const std::string& noise_name, double snr_db,
                                          std::uint64_t seed) {
  const std::uint64_t noise_seed = mix_seed(seed, fnv1a(noise_name));
  return [noise = std::move(noise), noise_seed, snr_db](const AudioClip& clip, const ManifestEntry& entry) {
    MixSpec spec;
    spec.snr_db = snr_db;
    spec.seed = noise_seed;
    spec.noise_offset = choose_noise_offset(noise.size(), noise_seed, utterance_key(entry));
    return mix_at_snr(clip, noise, spec);
  };
}

inline FeatureMatrix utterance_features(const AudioClip& clip, const FeatureSettings& fs) {
  return utterance_segments(clip, fs.mfcc, fs.segment);
}

/// Scores every entry of `test` under `transform`. `classify` maps a segment
/// matrix (raw MFCC means, one row per segment) to one label per row.
template <class SegmentClassifier>
EvalReport evaluate(const SegmentClassifier& classify, const Manifest& test, const ConditionTransform& transform,
                    const FeatureSettings& fs, std::string condition = "clean") {
  if (test.empty()) throw Error(Errc::empty_input, "empty test split");
  std::vector<UtteranceOutcome> outcomes;
  outcomes.reserve(test.size());
  for (const auto& entry : test) {
    const AudioClip clip = transform(load_utterance(entry.path, fs.target_rate_hz), entry);
    const FeatureMatrix segments = utterance_features(clip, fs);
    if (segments.rows() == 0)
      throw Error(Errc::empty_input, entry.path.string() + " yields no segments");
    outcomes.push_back({entry.label, classify(segments)});
  }
  return score_outcomes(std::move(condition), outcomes);
}

inline EvalReport evaluate(const Dbn& dbn, const Manifest& test, const ConditionTransform& transform,
                           const FeatureSettings& fs, std::string condition = "clean") {
  return evaluate([&dbn](const FeatureMatrix& segs) { return predict(dbn, Matrix(segs)); }, test, transform, fs,
                  std::move(condition));
}

// ---------------------------------------------------------------------------
// Report CSV

namespace detail {
inline std::string fixed6(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  auto s = os.str();
  return s == "-0.000000" ? "0.000000" : s;
}
}  // namespace detail

/// Clean row first, then noisy rows ordered by condition name and SNR.
inline void sort_reports(std::vector<EvalReport>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const EvalReport& a, const EvalReport& b) {
    const bool a_clean = !a.snr_db, b_clean = !b.snr_db;
    if (a_clean != b_clean) return a_clean;
    if (a.condition != b.condition) return a.condition < b.condition;
    return a.snr_db.value_or(0.0) < b.snr_db.value_or(0.0);
  });
}

inline std::string format_report_csv(std::vector<EvalReport> rows) {
  sort_reports(rows);
  std::ostringstream out;
  out << "condition,snr_db,segment_accuracy,utterance_accuracy,clean_utterance_accuracy,delta_percent,band\n";
  for (const auto& r : rows) {
    out << detail::csv_field(r.condition) << ',' << (r.snr_db ? detail::fixed6(*r.snr_db) : "") << ','
        << detail::fixed6(r.segment_accuracy) << ',' << detail::fixed6(r.utterance_accuracy) << ','
        << detail::fixed6(r.clean_accuracy) << ',' << detail::fixed6(r.delta_percent) << ',' << r.band << '\n';
  }
  return out.str();
}

inline void write_report_csv(const std::vector<EvalReport>& rows, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  out << format_report_csv(rows);
  if (!out) throw Error(Errc::io, "failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Experiment

struct ExperimentConfig {
  fs::path clean_dir;
  fs::path noise_dir;
  fs::path work_dir = ".";
  std::vector<double> snrs_db = {0.0, 10.0, 20.0};
  std::vector<std::string> noise_categories;  // empty: every subdirectory of noise_dir
  FeatureSettings features;
  TrainConfig train;
  std::vector<std::size_t> layer_sizes = {13, 1000, 1000, 2000};
  SplitStrategy split_strategy = SplitStrategy::stratified_random;
  double test_fraction = 0.2;
  std::uint64_t split_seed = 42;
  DeltaMode delta_mode = DeltaMode::relative;
  bool train_on_noisy = false;  // add every noise x SNR mix of the training set
};

/// Files written into the work directory.
struct WorkFiles {
  fs::path manifest, features, labels, model, report;

  explicit WorkFiles(const fs::path& work_dir)
      : manifest(work_dir / "manifest.csv"),
        features(work_dir / "train_features.mfc"),
        labels(work_dir / "train_labels.txt"),
        model(work_dir / "model.dbn"),
        report(work_dir / "report.csv") {}
};

/// Category names in use: the configured list, or every subdirectory.
inline std::vector<std::string> resolve_noise_categories(const ExperimentConfig& cfg) {
  if (!cfg.noise_categories.empty()) return cfg.noise_categories;
  if (cfg.noise_dir.empty()) return {};
  if (!fs::is_directory(cfg.noise_dir)) throw Error(Errc::io, "not a directory: " + cfg.noise_dir.string());
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(cfg.noise_dir))
    if (entry.is_directory()) names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

/// The recording used for a category: its first WAV by name (channel 0 for
/// multi-channel files), resampled to the working rate.
inline AudioClip load_noise(const ExperimentConfig& cfg, const std::string& category) {
  const fs::path dir = cfg.noise_dir / category;
  if (!fs::is_directory(dir)) throw Error(Errc::missing_category, dir.string());
  const auto wavs = list_wavs(dir);
  if (wavs.empty()) throw Error(Errc::missing_category, "no WAV files in " + dir.string());
  return resample(read_wav(wavs.front()), cfg.features.target_rate_hz);
}

/// Fails before any training if a configured category is absent.
inline void check_noise_categories(const ExperimentConfig& cfg, const std::vector<std::string>& categories) {
  for (const auto& category : categories) {
    const fs::path dir = cfg.noise_dir / category;
    if (!fs::is_directory(dir)) throw Error(Errc::missing_category, dir.string());
    if (list_wavs(dir).empty()) throw Error(Errc::missing_category, "no WAV files in " + dir.string());
  }
}

struct TrainingSet {
  Matrix features;  // raw segment vectors
  std::vector<int> labels;
};

inline Manifest prepare_manifest(const ExperimentConfig& cfg) {
  return split(build_manifest(cfg.clean_dir), cfg.split_strategy, cfg.test_fraction, cfg.split_seed);
}

inline TrainingSet extract_training_set(const ExperimentConfig& cfg, const Manifest& manifest,
                                        const LogSink& log = stderr_sink()) {
  const Manifest train = entries_with(manifest, SplitTag::train);
  if (train.empty()) throw Error(Errc::empty_input, "training split is empty");

  std::vector<std::pair<std::string, ConditionTransform>> conditions = {{"clean", identity_condition()}};
  if (cfg.train_on_noisy) {
    for (const auto& category : resolve_noise_categories(cfg)) {
      const AudioClip noise = load_noise(cfg, category);
      for (double snr : cfg.snrs_db)
        conditions.emplace_back(category, noise_condition(noise, category, snr, cfg.train.seed));
    }
  }

  std::vector<FeatureMatrix> blocks;
  std::vector<int> labels;
  Eigen::Index rows = 0;
  for (const auto& entry : train) {
    const AudioClip clean = load_utterance(entry.path, cfg.features.target_rate_hz);
    for (const auto& [name, transform] : conditions) {
      blocks.push_back(utterance_features(transform(clean, entry), cfg.features));
      labels.insert(labels.end(), static_cast<std::size_t>(blocks.back().rows()), label_index(entry.label));
      rows += blocks.back().rows();
    }
  }
  TrainingSet set{Matrix(rows, static_cast<Eigen::Index>(cfg.features.mfcc.n_ceps)), std::move(labels)};
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    set.features.middleRows(at, b.rows()) = b;
    at += b.rows();
  }
  if (log)
    log("extracted " + std::to_string(rows) + " training segments from " + std::to_string(train.size()) +
        " utterances");
  return set;
}

inline void write_labels(std::span<const int> labels, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  for (int l : labels) out << l << '\n';
  if (!out) throw Error(Errc::io, "failed writing " + path.string());
}

inline std::vector<int> read_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::vector<int> labels;
  for (int l; in >> l;) labels.push_back(l);
  if (!in.eof()) throw Error(Errc::malformed_header, "non-integer label in " + path.string());
  return labels;
}

/// Standardize, pretrain and fine-tune on one training set.
inline Dbn train_model(const ExperimentConfig& cfg, const TrainingSet& set, const LogSink& log = stderr_sink()) {
  if (set.features.rows() == 0) throw Error(Errc::empty_input, "no training segments");
  Standardization st = fit_standardization(set.features, log);
  const Matrix standardized = st.apply_rows(set.features);
  Dbn dbn = pretrain_dbn(standardized, cfg.layer_sizes, cfg.train, kLabelCount,
                         [&log](std::size_t layer, std::size_t epoch, double err) {
                           if (log)
                             log("pretrain layer " + std::to_string(layer + 1) + " epoch " +
                                 std::to_string(epoch + 1) + " reconstruction error " + detail::fixed6(err));
                         });
  dbn.standardization = std::move(st);
  return fine_tune(std::move(dbn), set.features, set.labels, cfg.train, [&log](std::size_t epoch, double loss) {
    if (log) log("fine-tune epoch " + std::to_string(epoch + 1) + " cross-entropy " + detail::fixed6(loss));
  });
}

/// Clean baseline plus every category x SNR condition, sorted for output.
inline std::vector<EvalReport> evaluate_conditions(const ExperimentConfig& cfg, const Dbn& dbn,
                                                   const Manifest& manifest, const LogSink& log = stderr_sink()) {
  const Manifest test = entries_with(manifest, SplitTag::test);
  if (test.empty()) throw Error(Errc::empty_input, "test split is empty");
  const auto categories = resolve_noise_categories(cfg);
  check_noise_categories(cfg, categories);

  std::vector<EvalReport> rows;
  EvalReport clean = evaluate(dbn, test, identity_condition(), cfg.features, "clean");
  if (!(clean.utterance_accuracy > 0.0) && cfg.delta_mode == DeltaMode::relative)
    throw Error(Errc::invalid_argument, "clean accuracy is zero; relative delta undefined");
  compare_to_clean(clean, clean.utterance_accuracy, cfg.delta_mode);
  if (log) log("clean utterance accuracy " + detail::fixed6(clean.utterance_accuracy));
  rows.push_back(clean);

  for (const auto& category : categories) {
    const AudioClip noise = load_noise(cfg, category);
    for (double snr : cfg.snrs_db) {
      EvalReport r = evaluate(dbn, test, noise_condition(noise, category, snr, cfg.train.seed), cfg.features, category);
      r.snr_db = snr;
      compare_to_clean(r, clean.utterance_accuracy, cfg.delta_mode);
      if (log)
        log(category + " @ " + detail::fixed6(snr) + " dB: accuracy " + detail::fixed6(r.utterance_accuracy) +
            ", delta " + detail::fixed6(r.delta_percent) + " (" + r.band + ")");
      rows.push_back(std::move(r));
    }
  }
  sort_reports(rows);
  return rows;
}

/// End to end: manifest, split, features, training, evaluation, report.
/// Returns the report path. Category checks run before any training.
inline fs::path run_experiment(const ExperimentConfig& cfg, const LogSink& log = stderr_sink()) {
  if (!fs::is_directory(cfg.clean_dir)) throw Error(Errc::io, "clean_dir not found: " + cfg.clean_dir.string());
  const auto categories = resolve_noise_categories(cfg);
  check_noise_categories(cfg, categories);
  fs::create_directories(cfg.work_dir);
  const WorkFiles files(cfg.work_dir);

  const Manifest manifest = prepare_manifest(cfg);
  write_manifest_csv(manifest, files.manifest);
  if (log) log("manifest: " + std::to_string(manifest.size()) + " utterances");

  const TrainingSet set = extract_training_set(cfg, manifest, log);
  write_feature_cache(set.features, files.features);
  write_labels(set.labels, files.labels);

  const Dbn dbn = train_model(cfg, set, log);
  save_model(dbn, files.model);

  write_report_csv(evaluate_conditions(cfg, dbn, manifest, log), files.report);
  if (log) log("report written to " + files.report.string());
  return files.report;
}

}  // namespace emonoise
