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

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>

#include "emonoise/error.hpp"
#include "emonoise/log.hpp"
#include "emonoise/pipeline.hpp"

namespace emonoise::cli {

enum class Command { prepare, featurize, train, evaluate, report, run };

inline constexpr std::array<std::string_view, 6> kCommandNames = {"prepare", "featurize", "train",
                                                                  "evaluate", "report", "run"};

/// Bad invocation: unknown subcommand, missing flag, unreadable config text.
/// Maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  ExperimentConfig experiment;
  std::vector<std::uint64_t> seeds;  // seed sweep for `run`; empty uses train.seed
  bool print = false;                // `report --print`
};

// ---------------------------------------------------------------------------
// Config text: `[section]` headers and `key = value` lines, '#' comments.

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto item = trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
T parse_number(const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw std::invalid_argument("not a number: '" + text + "'");
  return value;
}

inline bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw std::invalid_argument("not a boolean: '" + text + "'");
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <class T>
std::string join(const std::vector<T>& items, const std::function<std::string(const T&)>& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + fmt(items[i]);
  return out;
}

struct Key {
  std::string_view section;
  std::string_view name;
  std::function<std::string(const RunConfig&)> get;  // nullopt-like values return ""
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class T>
Key number_key(std::string_view section, std::string_view name, T ExperimentConfig::*field) {
  return {section, name,
          [field](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_double(c.experiment.*field);
            else return std::to_string(c.experiment.*field);
          },
          [field](RunConfig& c, const std::string& v) { c.experiment.*field = parse_number<T>(v); }};
}

template <class T, class Sub>
Key nested_key(std::string_view section, std::string_view name, Sub ExperimentConfig::*sub, T Sub::*field) {
  return {section, name,
          [sub, field](const RunConfig& c) {
            const T& v = (c.experiment.*sub).*field;
            if constexpr (std::is_same_v<T, bool>) return std::string(v ? "true" : "false");
            else if constexpr (std::is_floating_point_v<T>) return format_double(v);
            else return std::to_string(v);
          },
          [sub, field](RunConfig& c, const std::string& v) {
            T& target = (c.experiment.*sub).*field;
            if constexpr (std::is_same_v<T, bool>) target = parse_bool(v);
            else target = parse_number<T>(v);
          }};
}

template <class T>
Key mfcc_key(std::string_view name, T MfccConfig::*field) {
  return {"dsp", name,
          [field](const RunConfig& c) {
            const T& v = c.experiment.features.mfcc.*field;
            if constexpr (std::is_floating_point_v<T>) return format_double(v);
            else return std::to_string(v);
          },
          [field](RunConfig& c, const std::string& v) { c.experiment.features.mfcc.*field = parse_number<T>(v); }};
}

template <class T>
Key segment_key(std::string_view name, T SegmentConfig::*field) {
  return {"dsp", name, [field](const RunConfig& c) { return std::to_string(c.experiment.features.segment.*field); },
          [field](RunConfig& c, const std::string& v) {
            c.experiment.features.segment.*field = parse_number<T>(v);
          }};
}

inline const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    auto path_key = [](std::string_view name, fs::path ExperimentConfig::*field) {
      return Key{"pipeline", name, [field](const RunConfig& c) { return (c.experiment.*field).string(); },
                 [field](RunConfig& c, const std::string& v) { c.experiment.*field = v; }};
    };
    k.push_back(path_key("clean_dir", &ExperimentConfig::clean_dir));
    k.push_back(path_key("noise_dir", &ExperimentConfig::noise_dir));
    k.push_back(path_key("work_dir", &ExperimentConfig::work_dir));
    k.push_back({"pipeline", "snrs_db",
                 [](const RunConfig& c) {
                   return join<double>(c.experiment.snrs_db, [](const double& d) { return format_double(d); });
                 },
                 [](RunConfig& c, const std::string& v) {
                   c.experiment.snrs_db.clear();
                   for (const auto& item : split_list(v)) c.experiment.snrs_db.push_back(parse_number<double>(item));
                 }});
    k.push_back({"pipeline", "noise_categories",
                 [](const RunConfig& c) {
                   return join<std::string>(c.experiment.noise_categories, [](const std::string& s) { return s; });
                 },
                 [](RunConfig& c, const std::string& v) { c.experiment.noise_categories = split_list(v); }});
    k.push_back({"pipeline", "split_strategy",
                 [](const RunConfig& c) {
                   return std::string(c.experiment.split_strategy == SplitStrategy::stratified_random
                                          ? "stratified_random"
                                          : "leave_speakers_out");
                 },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "stratified_random") c.experiment.split_strategy = SplitStrategy::stratified_random;
                   else if (v == "leave_speakers_out") c.experiment.split_strategy = SplitStrategy::leave_speakers_out;
                   else throw std::invalid_argument("unknown split strategy '" + v + "'");
                 }});
    k.push_back(number_key("pipeline", "test_fraction", &ExperimentConfig::test_fraction));
    k.push_back(number_key("pipeline", "split_seed", &ExperimentConfig::split_seed));
    k.push_back({"pipeline", "delta_mode",
                 [](const RunConfig& c) {
                   return std::string(c.experiment.delta_mode == DeltaMode::relative ? "relative" : "absolute");
                 },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "relative") c.experiment.delta_mode = DeltaMode::relative;
                   else if (v == "absolute") c.experiment.delta_mode = DeltaMode::absolute;
                   else throw std::invalid_argument("unknown delta mode '" + v + "'");
                 }});
    k.push_back({"pipeline", "train_on_noisy",
                 [](const RunConfig& c) { return std::string(c.experiment.train_on_noisy ? "true" : "false"); },
                 [](RunConfig& c, const std::string& v) { c.experiment.train_on_noisy = parse_bool(v); }});
    k.push_back({"pipeline", "seeds",
                 [](const RunConfig& c) {
                   return join<std::uint64_t>(c.seeds, [](const std::uint64_t& s) { return std::to_string(s); });
                 },
                 [](RunConfig& c, const std::string& v) {
                   c.seeds.clear();
                   for (const auto& item : split_list(v)) c.seeds.push_back(parse_number<std::uint64_t>(item));
                 }});

    k.push_back({"dsp", "target_rate_hz",
                 [](const RunConfig& c) { return std::to_string(c.experiment.features.target_rate_hz); },
                 [](RunConfig& c, const std::string& v) {
                   c.experiment.features.target_rate_hz = parse_number<std::uint32_t>(v);
                 }});
    k.push_back(mfcc_key("frame_len", &MfccConfig::frame_len));
    k.push_back(mfcc_key("hop", &MfccConfig::hop));
    k.push_back(mfcc_key("fft_size", &MfccConfig::fft_size));
    k.push_back(mfcc_key("n_mels", &MfccConfig::n_mels));
    k.push_back(mfcc_key("n_ceps", &MfccConfig::n_ceps));
    k.push_back(mfcc_key("preemph", &MfccConfig::preemph));
    k.push_back(mfcc_key("fmin_hz", &MfccConfig::fmin_hz));
    k.push_back({"dsp", "fmax_hz",
                 [](const RunConfig& c) {
                   const auto& v = c.experiment.features.mfcc.fmax_hz;
                   return v ? format_double(*v) : std::string("nyquist");
                 },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "nyquist") c.experiment.features.mfcc.fmax_hz.reset();
                   else c.experiment.features.mfcc.fmax_hz = parse_number<double>(v);
                 }});
    k.push_back(mfcc_key("log_floor", &MfccConfig::log_floor));
    k.push_back(segment_key("seg_frames", &SegmentConfig::seg_frames));
    k.push_back(segment_key("seg_hop", &SegmentConfig::seg_hop));

    k.push_back({"dbn", "layer_sizes",
                 [](const RunConfig& c) {
                   return join<std::size_t>(c.experiment.layer_sizes,
                                            [](const std::size_t& s) { return std::to_string(s); });
                 },
                 [](RunConfig& c, const std::string& v) {
                   c.experiment.layer_sizes.clear();
                   for (const auto& item : split_list(v))
                     c.experiment.layer_sizes.push_back(parse_number<std::size_t>(item));
                 }});
    using TC = TrainConfig;
    auto train = [](std::string_view name, auto field) {
      return nested_key("dbn", name, &ExperimentConfig::train, field);
    };
    k.push_back(train("cd_steps", &TC::cd_steps));
    k.push_back(train("learning_rate_pretrain_bernoulli", &TC::learning_rate_pretrain_bernoulli));
    k.push_back(train("learning_rate_pretrain_gaussian", &TC::learning_rate_pretrain_gaussian));
    k.push_back(train("learning_rate_finetune", &TC::learning_rate_finetune));
    k.push_back(train("momentum", &TC::momentum));
    k.push_back(train("weight_decay", &TC::weight_decay));
    k.push_back(train("batch_size", &TC::batch_size));
    k.push_back(train("epochs_pretrain", &TC::epochs_pretrain));
    k.push_back(train("epochs_finetune", &TC::epochs_finetune));
    k.push_back(train("seed", &TC::seed));
    k.push_back(train("init_stddev", &TC::init_stddev));
    k.push_back(train("freeze_pretrained", &TC::freeze_pretrained));
    return k;
  }();
  return table;
}

inline const Key* find_key(std::string_view section, std::string_view name) {
  for (const auto& k : keys())
    if (k.section == section && k.name == name) return &k;
  return nullptr;
}

}  // namespace detail

/// Assigns `section.key = value`; throws UsageError for unknown keys or
/// unparsable values. `where` prefixes the message (e.g. "exp.toml:12").
inline void set_value(RunConfig& cfg, std::string_view section, std::string_view name, const std::string& value,
                      const std::string& where) {
  const auto* key = detail::find_key(section, name);
  if (!key) throw UsageError(where + ": unknown key '" + std::string(section) + "." + std::string(name) + "'");
  try {
    key->set(cfg, value);
  } catch (const std::invalid_argument& e) {
    throw UsageError(where + ": " + std::string(section) + "." + std::string(name) + ": " + e.what());
  }
}

/// Applies config text over `cfg`. `source` names the text in messages.
inline void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& source = "config") {
  std::istringstream in{std::string(text)};
  std::string line;
  std::string section;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    const std::string body = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
    const std::string where = source + ":" + std::to_string(lineno);
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw UsageError(where + ": unterminated section header");
      section = detail::trim(std::string_view(body).substr(1, body.size() - 2));
      if (section != "pipeline" && section != "dsp" && section != "dbn")
        throw UsageError(where + ": unknown section '" + section + "'");
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw UsageError(where + ": expected 'key = value'");
    if (section.empty()) throw UsageError(where + ": key outside any section");
    std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    set_value(cfg, section, detail::trim(std::string_view(body).substr(0, eq)), value, where);
  }
}

inline void load_config_file(RunConfig& cfg, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  apply_config_text(cfg, text.str(), path.string());
}

/// Every key in canonical order; parsing the result reproduces `cfg`.
inline std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  std::string_view section;
  for (const auto& k : detail::keys()) {
    if (k.section != section) {
      out += (section.empty() ? "[" : "\n[") + std::string(k.section) + "]\n";
      section = k.section;
    }
    const std::string value = k.get(cfg);
    const bool quote = !value.empty() && (value.front() == ' ' || value.back() == ' ' ||
                                          value.find('#') != std::string::npos);
    out += std::string(k.name) + " = " + (quote ? "\"" + value + "\"" : value) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Arguments

struct ParsedArgs {
  Command command = Command::run;
  RunConfig config;
};

/// Raised for --help; carries the usage text. Exit code 0.
struct HelpRequested {
  std::string text;
};

/// Parses argv (without the program name). Precedence, lowest first:
/// defaults, --config file, EMONOISE_WORKDIR (work_dir fallback), flags.
inline ParsedArgs parse_args(const std::vector<std::string>& args,
                             const std::function<const char*(const char*)>& getenv = ::getenv) {
  CLI::App app{"Speech emotion classification under additive noise", "emonoise"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string clean_dir, noise_dir, work_dir, snrs, categories, seeds;
  std::vector<std::string> sets;
  bool print = false;

  app.add_option("--config", config_path, "key = value config file, applied before flags");
  app.add_option("--seed", seed, "training and mixing seed");
  app.add_option("--clean-dir", clean_dir, "directory of clean utterances");
  app.add_option("--noise-dir", noise_dir, "directory with one subdirectory per noise category");
  app.add_option("--work-dir", work_dir, "output directory (fallback: $EMONOISE_WORKDIR)");
  app.add_option("--snrs", snrs, "comma-separated SNR levels in dB");
  app.add_option("--categories", categories, "comma-separated noise categories (default: all)");
  app.add_option("--seeds", seeds, "comma-separated seed sweep for `run`");
  app.add_option("--set", sets, "override any config key, as section.key=value")->take_all();

  std::vector<CLI::App*> subs;
  subs.push_back(app.add_subcommand("prepare", "build and split the corpus manifest"));
  subs.push_back(app.add_subcommand("featurize", "extract training segment features"));
  subs.push_back(app.add_subcommand("train", "pretrain and fine-tune the network"));
  subs.push_back(app.add_subcommand("evaluate", "score clean and noisy test conditions"));
  subs.push_back(app.add_subcommand("report", "summarize the report (--print writes it to stdout)"));
  subs.push_back(app.add_subcommand("run", "all stages end to end"));
  subs[4]->add_flag("--print", print, "write report.csv to standard output");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested{app.help()};
  } catch (const CLI::CallForAllHelp&) {
    throw HelpRequested{app.help("", CLI::AppFormatMode::All)};
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  ParsedArgs parsed;
  for (std::size_t i = 0; i < subs.size(); ++i)
    if (subs[i]->parsed()) parsed.command = static_cast<Command>(i);

  RunConfig& cfg = parsed.config;
  cfg.experiment.work_dir.clear();
  if (!config_path.empty()) load_config_file(cfg, config_path);
  if (cfg.experiment.work_dir.empty()) {
    const char* env = getenv ? getenv("EMONOISE_WORKDIR") : nullptr;
    cfg.experiment.work_dir = (env && *env) ? fs::path(env) : fs::path(".");
  }

  auto set_flag = [&](std::string_view section, std::string_view key, const std::string& value,
                      const char* flag) {
    if (!value.empty()) set_value(cfg, section, key, value, flag);
  };
  set_flag("pipeline", "clean_dir", clean_dir, "--clean-dir");
  set_flag("pipeline", "noise_dir", noise_dir, "--noise-dir");
  set_flag("pipeline", "work_dir", work_dir, "--work-dir");
  set_flag("pipeline", "snrs_db", snrs, "--snrs");
  set_flag("pipeline", "noise_categories", categories, "--categories");
  set_flag("pipeline", "seeds", seeds, "--seeds");
  if (seed) cfg.experiment.train.seed = *seed;
  for (const auto& s : sets) {
    const auto eq = s.find('='), dot = s.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw UsageError("--set expects section.key=value, got '" + s + "'");
    set_value(cfg, s.substr(0, dot), s.substr(dot + 1, eq - dot - 1), s.substr(eq + 1), "--set");
  }
  cfg.print = print;

  if (cfg.experiment.snrs_db.empty()) throw UsageError("snrs_db must list at least one level");
  if (cfg.experiment.layer_sizes.size() < 2) throw UsageError("layer_sizes needs at least two entries");
  const bool needs_clean = parsed.command == Command::prepare || parsed.command == Command::run;
  if (needs_clean && cfg.experiment.clean_dir.empty())
    throw UsageError("missing required --clean-dir (or pipeline.clean_dir in the config file)");
  if (!cfg.experiment.noise_categories.empty() && cfg.experiment.noise_dir.empty())
    throw UsageError("noise_categories given without noise_dir");
  return parsed;
}

// ---------------------------------------------------------------------------
// Dispatch

namespace detail {

inline void require_file(const fs::path& path, const char* produced_by) {
  if (!fs::exists(path))
    throw Error(Errc::io, path.string() + " not found (run `" + produced_by + "` first)");
}

inline void require_dir(const fs::path& path, const char* what) {
  if (!fs::is_directory(path)) throw Error(Errc::io, std::string(what) + " not found: " + path.string());
}

inline void require_inputs(const ExperimentConfig& cfg, bool needs_noise) {
  require_dir(cfg.clean_dir, "clean_dir");
  if (needs_noise && !cfg.noise_dir.empty()) require_dir(cfg.noise_dir, "noise_dir");
}

}  // namespace detail

/// Runs one stage. Exit 0 on success, 1 on domain errors. Progress goes to
/// `log`; only `report --print` writes to `out`.
inline int dispatch(Command command, const RunConfig& cfg, std::ostream& out = std::cout,
                    const LogSink& log = stderr_sink()) {
  const ExperimentConfig& exp = cfg.experiment;
  try {
    const WorkFiles files(exp.work_dir);
    switch (command) {
      case Command::prepare: {
        detail::require_inputs(exp, false);
        fs::create_directories(exp.work_dir);
        const Manifest m = prepare_manifest(exp);
        write_manifest_csv(m, files.manifest);
        log("wrote " + files.manifest.string() + " (" + std::to_string(m.size()) + " utterances)");
        break;
      }
      case Command::featurize: {
        detail::require_file(files.manifest, "prepare");
        const TrainingSet set = extract_training_set(exp, read_manifest_csv(files.manifest), log);
        write_feature_cache(set.features, files.features);
        write_labels(set.labels, files.labels);
        log("wrote " + files.features.string());
        break;
      }
      case Command::train: {
        detail::require_file(files.features, "featurize");
        detail::require_file(files.labels, "featurize");
        TrainingSet set{read_feature_cache(files.features), read_labels(files.labels)};
        if (static_cast<std::size_t>(set.features.rows()) != set.labels.size())
          throw Error(Errc::dimension_mismatch, "feature and label counts differ");
        save_model(train_model(exp, set, log), files.model);
        log("wrote " + files.model.string());
        break;
      }
      case Command::evaluate: {
        detail::require_file(files.manifest, "prepare");
        detail::require_file(files.model, "train");
        if (!exp.noise_dir.empty()) detail::require_dir(exp.noise_dir, "noise_dir");
        write_report_csv(evaluate_conditions(exp, load_model(files.model), read_manifest_csv(files.manifest), log),
                         files.report);
        log("wrote " + files.report.string());
        break;
      }
      case Command::report: {
        detail::require_file(files.report, "evaluate");
        std::ifstream in(files.report, std::ios::binary);
        std::stringstream text;
        text << in.rdbuf();
        if (cfg.print) {
          out << text.str();
        } else {
          std::map<std::string, std::size_t> bands;
          std::string line;
          std::getline(text, line);
          std::size_t rows = 0;
          while (std::getline(text, line)) {
            const auto fields = emonoise::detail::split_csv_line(line);
            if (fields.size() == 7) ++bands[fields[6]], ++rows;
          }
          log(files.report.string() + ": " + std::to_string(rows) + " rows");
          for (const auto& [b, n] : bands) log("  band " + b + ": " + std::to_string(n));
        }
        break;
      }
      case Command::run: {
        detail::require_inputs(exp, true);
        if (cfg.seeds.empty()) {
          run_experiment(exp, log);
        } else {
          for (std::uint64_t s : cfg.seeds) {
            ExperimentConfig one = exp;
            one.train.seed = s;
            one.work_dir = exp.work_dir / ("seed_" + std::to_string(s));
            log("seed " + std::to_string(s));
            run_experiment(one, log);
          }
        }
        break;
      }
    }
  } catch (const Error& e) {
    log(std::string("error: ") + e.what());
    return 1;
  } catch (const fs::filesystem_error& e) {
    log(std::string("error: ") + e.what());
    return 1;
  }
  return 0;
}

/// Whole program: parse, dispatch, map outcomes to exit codes 0/1/2.
inline int main_entry(const std::vector<std::string>& args, std::ostream& out, const LogSink& log,
                      const std::function<const char*(const char*)>& getenv = ::getenv) {
  ParsedArgs parsed;
  try {
    parsed = parse_args(args, getenv);
  } catch (const HelpRequested& help) {
    out << help.text;
    return 0;
  } catch (const UsageError& e) {
    log(std::string("usage error: ") + e.what());
    return 2;
  }
  return dispatch(parsed.command, parsed.config, out, log);
}

}  // namespace emonoise::cli
