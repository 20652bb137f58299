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

// Acceptance checks. Prints one PASS/FAIL/SKIP line per check and exits
// nonzero if any check fails. Check 9 needs the real corpora: set
// EMODB_DIR (the EMO-DB wav/ directory) and DEMAND_DIR (one subdirectory
// per noise type) to enable it.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "emonoise/pipeline.hpp"
#include "emonoise/synthetic.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace {

using namespace emonoise;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Result {
  enum class Status { pass, fail, skip } status;
  std::string detail;
};

Result verdict(bool ok, std::string detail) { return {ok ? Result::Status::pass : Result::Status::fail, detail}; }

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Result fft_oracle() {
  Rng rng(1);
  double worst = 0.0, fft_time = 0.0;
  for (std::size_t n = 2; n <= 1024; n *= 2) {
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<std::complex<double>> x(n);
      for (auto& v : x) v = {2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0};
      const auto t0 = Clock::now();
      const auto got = fft(x);
      fft_time += seconds_since(t0);
      const auto want = oracle::naive_dft(x);
      for (std::size_t k = 0; k < n; ++k) worst = std::max(worst, std::abs(got[k] - want[k]));
    }
  }
  return verdict(worst <= 1e-9 && fft_time < 5.0,
                 fmt("N=2..1024, 200 inputs each: max bin error %.3g, fft time %.3f s", worst, fft_time));
}

Result dct_mel_units() {
  Rng rng(2);
  double parseval = 0.0, inverse = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(64);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    const auto y = dct2(v, n);
    double ev = 0.0, ey = 0.0;
    for (std::size_t i = 0; i < n; ++i) ev += v[i] * v[i], ey += y[i] * y[i];
    parseval = std::max(parseval, std::abs(ev - ey));
    const auto back = oracle::inverse_dct2(y);
    for (std::size_t i = 0; i < n; ++i) inverse = std::max(inverse, std::abs(back[i] - v[i]));
  }
  double round_trip = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double f = 8000.0 * (1.0 - rng.uniform());  // (0, 8000]
    round_trip = std::max(round_trip, std::abs(mel_to_hz(hz_to_mel(f)) - f) / f);
  }
  return verdict(parseval <= 1e-9 && inverse <= 1e-9 && round_trip <= 1e-9,
                 fmt("Parseval %.3g, inverse %.3g, mel round trip %.3g relative", parseval, inverse, round_trip));
}

Result mfcc_sanity() {
  const MfccConfig cfg;
  AudioClip tone;
  tone.samples.resize(16000);
  for (std::size_t t = 0; t < tone.samples.size(); ++t)
    tone.samples[t] = 0.5 * std::sin(2.0 * std::numbers::pi * 1000.0 * static_cast<double>(t) / 16000.0);
  const FeatureMatrix energies = mel_energies(tone, cfg);
  Eigen::Index loudest;
  energies.colwise().mean().maxCoeff(&loudest);
  const auto edges = mel_edges_hz(cfg, 16000);
  std::size_t nearest = 0;
  for (std::size_t m = 1; m < cfg.n_mels; ++m)
    if (std::abs(edges[m + 1] - 1000.0) < std::abs(edges[nearest + 1] - 1000.0)) nearest = m;
  bool ok = static_cast<std::size_t>(loudest) == nearest;

  Rng rng(3);
  std::vector<AudioClip> clips = {AudioClip{std::vector<double>(8000, 0.0), 16000}, tone};
  for (int i = 0; i < 20; ++i) clips.push_back(synthetic::tone_complex(static_cast<Label>(i % 7), rng));
  clips.push_back(synthetic::white_noise(4000, rng, 16000, 1.0));
  std::size_t checked = 0;
  for (const auto& clip : clips) {
    const FeatureMatrix m = mfcc(clip, cfg);
    ok = ok && m.cols() == 13 && m.rows() > 0 && m.allFinite();
    ++checked;
  }
  return verdict(ok, fmt("1 kHz tone peaks in filter %ld (nearest centre: %zu); %zu clips incl. silence 13-dim and "
                         "finite",
                         static_cast<long>(loudest), nearest, checked));
}

Result rbm_exactness() {
  const auto t0 = Clock::now();
  Rng rng(4);
  double worst = 0.0;
  int count = 0;
  for (Eigen::Index nv = 1; nv <= 4; ++nv)
    for (Eigen::Index nh = 1; nh <= 4; ++nh)
      for (int rep = 0; rep < 2; ++rep, ++count) {
        Rbm rbm = Rbm::random(nv, nh, VisibleKind::bernoulli, rng, 1.0);
        for (Eigen::Index i = 0; i < nv; ++i) rbm.visible_bias(i) = rng.normal();
        for (Eigen::Index j = 0; j < nh; ++j) rbm.hidden_bias(j) = rng.normal();
        const auto want = oracle::brute_force_marginals(rbm);
        std::vector<double> p(want.size());
        double z = 0.0;
        for (unsigned v = 0; v < p.size(); ++v) z += p[v] = std::exp(-free_energy(rbm, oracle::bits(v, nv)));
        for (unsigned v = 0; v < p.size(); ++v) worst = std::max(worst, std::abs(p[v] / z - want[v]) / want[v]);
      }
  const double elapsed = seconds_since(t0);
  return verdict(count >= 20 && worst <= 1e-9 && elapsed < 10.0,
                 fmt("%d RBMs up to 4x4: max relative error %.3g in %.3f s", count, worst, elapsed));
}

Result gradient_check() {
  const auto t0 = Clock::now();
  Rng rng(5);
  Dbn dbn;
  const std::vector<Eigen::Index> sizes = {4, 3, 3, 3};
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Rbm rbm = Rbm::random(sizes[l], sizes[l + 1], l == 0 ? VisibleKind::gaussian : VisibleKind::bernoulli, rng, 0.8);
    for (Eigen::Index j = 0; j < rbm.hidden_bias.size(); ++j) rbm.hidden_bias(j) = 0.5 * rng.normal();
    dbn.rbms.push_back(rbm);
  }
  dbn.softmax_weights = Matrix(3, 7);
  for (Eigen::Index i = 0; i < dbn.softmax_weights.size(); ++i) dbn.softmax_weights.data()[i] = rng.normal();
  dbn.softmax_bias = Vector(7);
  for (Eigen::Index k = 0; k < 7; ++k) dbn.softmax_bias(k) = 0.5 * rng.normal();
  dbn.standardization = Standardization{Vector::Constant(4, 0.2), Vector::Constant(4, 1.5)};
  Matrix x(14, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  std::vector<int> labels;
  for (int i = 0; i < 14; ++i) labels.push_back(i % 7);

  const DbnGradient g = cross_entropy_gradient(dbn, x, labels);
  const double eps = 1e-5;
  double worst = 0.0;
  std::size_t params = 0;
  auto check = [&](double& p, double analytic) {
    const double saved = p;
    p = saved + eps;
    const double up = oracle::naive_cross_entropy(dbn, x, labels);
    p = saved - eps;
    const double down = oracle::naive_cross_entropy(dbn, x, labels);
    p = saved;
    const double numeric = (up - down) / (2.0 * eps);
    worst = std::max(worst, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-8}));
    ++params;
  };
  for (std::size_t l = 0; l < dbn.rbms.size(); ++l) {
    for (Eigen::Index i = 0; i < dbn.rbms[l].weights.size(); ++i)
      check(dbn.rbms[l].weights.data()[i], g.weights[l].data()[i]);
    for (Eigen::Index j = 0; j < dbn.rbms[l].hidden_bias.size(); ++j)
      check(dbn.rbms[l].hidden_bias(j), g.hidden_bias[l](j));
  }
  for (Eigen::Index i = 0; i < dbn.softmax_weights.size(); ++i)
    check(dbn.softmax_weights.data()[i], g.softmax_weights.data()[i]);
  for (Eigen::Index k = 0; k < 7; ++k) check(dbn.softmax_bias(k), g.softmax_bias(k));
  const double elapsed = seconds_since(t0);
  return verdict(worst <= 1e-4 && elapsed < 5.0,
                 fmt("4-3-3-3-7 network, %zu parameters: max relative error %.3g in %.3f s", params, worst, elapsed));
}

Result snr_exactness() {
  Rng rng(6);
  double worst = 0.0;
  std::size_t mixes = 0;
  for (int pair = 0; pair < 100; ++pair) {
    const AudioClip clean = synthetic::tone_complex(static_cast<Label>(pair % 7), rng);
    const AudioClip noise = pair % 2 ? synthetic::white_noise(3000 + rng.below(30000), rng)
                                     : synthetic::hum_noise(3000 + rng.below(30000), rng);
    for (int snr = -5; snr <= 20; ++snr) {
      MixSpec spec{static_cast<double>(snr), rng.below(noise.size()), 0};
      const AudioClip mixed = mix_at_snr(clean, noise, spec);
      std::vector<double> added(clean.size());
      for (std::size_t t = 0; t < added.size(); ++t) added[t] = mixed.samples[t] - clean.samples[t];
      const double achieved = 20.0 * std::log10(rms(clean.samples) / rms(added));
      worst = std::max(worst, std::abs(achieved - snr));
      ++mixes;
    }
  }
  return verdict(worst <= 1e-6, fmt("100 pairs x SNR -5..20 dB (%zu mixes): max error %.3g dB", mixes, worst));
}

// The library defaults move a 0.01-initialized stack too slowly to leave
// chance level within the default epoch budget on these small tasks, so the
// synthetic runs raise the first-layer and fine-tuning rates.
TrainConfig fast_rates(TrainConfig cfg) {
  cfg.learning_rate_pretrain_gaussian = 0.01;
  cfg.learning_rate_finetune = 0.1;
  return cfg;
}

std::uint64_t seed_from_env() {
  const char* s = std::getenv("EMONOISE_ACCEPTANCE_SEED");
  return s && *s ? std::strtoull(s, nullptr, 10) : 11;
}

Result synthetic_end_to_end() {
  const std::uint64_t seed = seed_from_env();
  auto make = [](std::size_t per_class, const Matrix& centres, Rng& rng, std::vector<int>& labels) {
    Matrix x(static_cast<Eigen::Index>(7 * per_class), 13);
    labels.clear();
    for (std::size_t i = 0; i < 7 * per_class; ++i) {
      const int c = static_cast<int>(i % 7);
      for (Eigen::Index d = 0; d < 13; ++d) x(static_cast<Eigen::Index>(i), d) = centres(c, d) + rng.normal();
      labels.push_back(c);
    }
    return x;
  };
  auto train_and_score = [&](std::string* model_bytes) {
    Rng rng(mix_seed(seed, 1));
    Matrix centres(7, 13);
    for (Eigen::Index i = 0; i < centres.size(); ++i) centres.data()[i] = 2.0 * rng.normal();
    std::vector<int> train_labels, test_labels;
    const Matrix train = make(100, centres, rng, train_labels);
    const Matrix test = make(50, centres, rng, test_labels);
    ExperimentConfig cfg;
    cfg.layer_sizes = {13, 64, 64, 128};
    cfg.train = fast_rates(cfg.train);
    cfg.train.seed = seed;
    const Dbn dbn = train_model(cfg, TrainingSet{train, train_labels}, null_sink());
    const auto predicted = predict(dbn, test);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == test_labels[i];
    TempDir dir;
    save_model(dbn, dir.path() / "m.dbn");
    *model_bytes = slurp(dir.path() / "m.dbn");
    return static_cast<double>(correct) / static_cast<double>(predicted.size());
  };
  const auto t0 = Clock::now();
  std::string first, second;
  const double acc = train_and_score(&first);
  const double elapsed = seconds_since(t0);
  const double again = train_and_score(&second);
  const bool same = acc == again && first == second;
  return verdict(acc >= 0.95 && elapsed < 60.0 && same,
                 fmt("700/350 vectors, layers 13-64-64-128, seed %llu: accuracy %.4f in %.2f s; rerun %s",
                     static_cast<unsigned long long>(seed), acc, elapsed,
                     same ? "bit-identical" : "DIFFERS"));
}

// Synthetic tone-complex corpus plus WHITE/HUM noise under `root`.
ExperimentConfig synthetic_experiment(const fs::path& root, std::size_t per_class) {
  synthetic::write_clean_corpus(root / "clean", per_class, 5, 21);
  synthetic::write_noise_corpus(root / "noise", 5.0, 22);
  ExperimentConfig cfg;
  cfg.clean_dir = root / "clean";
  cfg.noise_dir = root / "noise";
  cfg.work_dir = root / "work";
  cfg.noise_categories = {"WHITE"};
  cfg.snrs_db = {0.0, 20.0};
  cfg.layer_sizes = {13, 64, 64, 128};
  cfg.train = fast_rates(cfg.train);
  cfg.train.seed = seed_from_env();
  return cfg;
}

Result noise_degradation() {
  TempDir dir;
  const ExperimentConfig cfg = synthetic_experiment(dir.path(), 20);
  const Manifest manifest = prepare_manifest(cfg);
  const Dbn dbn = train_model(cfg, extract_training_set(cfg, manifest, null_sink()), null_sink());
  const auto rows = evaluate_conditions(cfg, dbn, manifest, null_sink());
  // rows: clean, WHITE@0, WHITE@20
  if (rows.size() != 3) return verdict(false, fmt("expected 3 report rows, got %zu", rows.size()));
  const double clean = rows[0].utterance_accuracy;
  const auto& at0 = rows[1];
  const auto& at20 = rows[2];
  return verdict(*at0.snr_db == 0.0 && *at20.snr_db == 20.0 && at0.utterance_accuracy <= clean &&
                     at0.delta_percent >= at20.delta_percent,
                 fmt("clean %.4f, white 0 dB %.4f (delta %.2f%%), white 20 dB %.4f (delta %.2f%%)", clean,
                     at0.utterance_accuracy, at0.delta_percent, at20.utterance_accuracy, at20.delta_percent));
}

Result protocol_reproduction() {
  const char* emodb = std::getenv("EMODB_DIR");
  const char* demand = std::getenv("DEMAND_DIR");
  if (!emodb || !demand || !*emodb || !*demand)
    return {Result::Status::skip, "set EMODB_DIR and DEMAND_DIR to run against the real corpora"};
  const auto t0 = Clock::now();
  const Manifest manifest = build_manifest(emodb);
  const auto counts = label_counts(manifest);
  const std::array<std::size_t, kLabelCount> want = {127, 81, 46, 69, 71, 79, 62};
  if (manifest.size() != 535 || counts != want)
    return verdict(false, fmt("manifest has %zu utterances", manifest.size()));

  TempDir work;
  ExperimentConfig cfg;
  cfg.clean_dir = emodb;
  cfg.noise_dir = demand;
  cfg.work_dir = work.path();
  cfg.snrs_db = {10.0};
  const auto categories = resolve_noise_categories(cfg);
  const fs::path report = run_experiment(cfg, stderr_sink());
  std::ifstream in(report);
  std::string line;
  std::getline(in, line);
  std::size_t rows = 0, banded = 0;
  const std::set<std::string> bands = {"<10", "10-20", "20-30", ">=30", "improved"};
  while (std::getline(in, line)) {
    ++rows;
    banded += bands.count(line.substr(line.rfind(',') + 1));
  }
  return verdict(categories.size() == 18 && rows == 19 && banded == rows,
                 fmt("535 utterances (127/81/46/69/71/79/62); %zu categories, %zu report rows, %zu banded, %.0f s",
                     categories.size(), rows, banded, seconds_since(t0)));
}

Result determinism_and_persistence() {
  TempDir a, b;
  ExperimentConfig cfg_a = synthetic_experiment(a.path(), 6);
  ExperimentConfig cfg_b = synthetic_experiment(b.path(), 6);
  cfg_a.train.epochs_pretrain = cfg_b.train.epochs_pretrain = 5;
  cfg_a.train.epochs_finetune = cfg_b.train.epochs_finetune = 10;
  const std::string report_a = slurp(run_experiment(cfg_a, null_sink()));
  const std::string report_b = slurp(run_experiment(cfg_b, null_sink()));

  const fs::path model = cfg_a.work_dir / "model.dbn";
  const Dbn loaded = load_model(model);
  save_model(loaded, a.path() / "resaved.dbn");
  const bool model_same = slurp(model) == slurp(a.path() / "resaved.dbn") && load_model(a.path() / "resaved.dbn") == loaded &&
                          slurp(model) == slurp(cfg_b.work_dir / "model.dbn");
  return verdict(!report_a.empty() && report_a == report_b && model_same,
                 fmt("report %s across reruns (%zu bytes); model save/load %s", report_a == report_b ? "byte-identical" : "DIFFERS",
                     report_a.size(), model_same ? "bit-exact" : "DIFFERS"));
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Result()>>> checks = {
      {"FFT oracle", fft_oracle},
      {"DCT/mel units", dct_mel_units},
      {"MFCC sanity", mfcc_sanity},
      {"RBM exactness", rbm_exactness},
      {"gradient check", gradient_check},
      {"SNR exactness", snr_exactness},
      {"synthetic end-to-end", synthetic_end_to_end},
      {"noise degradation", noise_degradation},
      {"protocol reproduction", protocol_reproduction},
      {"determinism and persistence", determinism_and_persistence},
  };
  int failures = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    Result r;
    try {
      r = checks[i].second();
    } catch (const std::exception& e) {
      r = {Result::Status::fail, std::string("exception: ") + e.what()};
    }
    const char* tag = r.status == Result::Status::pass ? "PASS" : r.status == Result::Status::skip ? "SKIP" : "FAIL";
    failures += r.status == Result::Status::fail;
    std::printf("[%s] %zu. %s: %s\n", tag, i + 1, checks[i].first, r.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
