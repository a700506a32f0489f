#pragma once

// End-to-end orchestration: image extraction, PXRF calibration, joining,
// per-target model comparison, zone holdout and reporting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "soilfusion/config.hpp"
#include "soilfusion/csv.hpp"
#include "soilfusion/error.hpp"
#include "soilfusion/forest.hpp"
#include "soilfusion/fusion.hpp"
#include "soilfusion/image_io.hpp"
#include "soilfusion/metrics.hpp"
#include "soilfusion/parallel.hpp"
#include "soilfusion/pxrf.hpp"
#include "soilfusion/texture.hpp"

namespace soilfusion {

namespace fs = std::filesystem;

// Extraction ----------------------------------------------------------------

struct ImageFailure {
  std::string file;
  std::string message;
};

struct ExtractResult {
  std::vector<ImageFeatureVector> vectors;  // one per sample, sorted by id
  std::vector<ImageFailure> failures;
  std::size_t images_used = 0;
};

/// Decodes every supported image in `dir` (sorted by file name), extracts
/// features and averages replicates per sample id.
inline ExtractResult extract_directory(const fs::path& dir, std::size_t threads = default_thread_count()) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::IoError, dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_supported_image(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorKind::NoImagesFound, dir.string() + ": no .png/.jpg/.jpeg images");

  std::vector<std::optional<ImageFeatureVector>> per_file(files.size());
  std::vector<std::string> errors(files.size());
  parallel_for(files.size(), threads, [&](std::size_t i) {
    const auto name = parse_image_name(files[i]);
    if (!name) {
      errors[i] = "file name is not <sampleId>_<replicate>";
      return;
    }
    try {
      per_file[i] = extract_features(read_image(files[i].string()), name->sample_id);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  ExtractResult out;
  std::map<std::string, std::vector<ImageFeatureVector>> by_sample;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (per_file[i]) {
      by_sample[per_file[i]->sample_id].push_back(std::move(*per_file[i]));
      ++out.images_used;
    } else {
      out.failures.push_back({files[i].string(), errors[i]});
    }
  }
  if (by_sample.empty()) throw Error(ErrorKind::NoImagesFound, dir.string() + ": no decodable images");
  for (auto& [id, reps] : by_sample) out.vectors.push_back(aggregate_replicates(reps));
  return out;
}

// Calibration ---------------------------------------------------------------

struct CalibrationResult {
  CorrectionFactorTable table;
  std::vector<PxrfRecord> corrected;
  bool from_crm = false;
};

/// Builds the table from CRM scans when given, else uses the default table.
inline CalibrationResult calibrate_pxrf(const std::vector<PxrfRecord>& raw, const std::optional<fs::path>& crm_path) {
  CalibrationResult out;
  if (crm_path) {
    const auto scans = read_crm_scans(crm_path->string());
    if (scans.empty()) throw Error(ErrorKind::EmptyInput, crm_path->string() + ": no CRM scans");
    out.table = build_correction_table(scans);
    out.from_crm = true;
  } else {
    out.table = default_correction_table();
  }
  out.corrected.reserve(raw.size());
  for (const auto& r : raw) out.corrected.push_back(apply_correction(r, out.table));
  return out;
}

inline CalibrationResult calibrate_files(const fs::path& pxrf_path, const std::optional<fs::path>& crm_path,
                                         const fs::path& out_dir) {
  const auto raw = read_pxrf(pxrf_path.string());
  auto result = calibrate_pxrf(raw, crm_path);
  fs::create_directories(out_dir);
  write_acf((out_dir / "acf.csv").string(), result.table);
  write_pxrf((out_dir / "pxrf_corrected.csv").string(), result.corrected);
  return result;
}

// Configuration -------------------------------------------------------------

struct PipelineConfig {
  std::optional<fs::path> images_dir;
  std::optional<fs::path> features_csv;  // skips extraction when set
  fs::path samples_csv;
  std::optional<fs::path> pxrf_csv;
  std::optional<fs::path> crm_csv;
  fs::path out_dir = "soilfusion_out";
  std::uint64_t seed = 1;
  double split_fraction = 0.8;
  std::size_t folds = 5;
  ForestParams forest;
  std::vector<Target> targets{kTargets.begin(), kTargets.end()};
  std::vector<ConfigKind> configs{kConfigKinds.begin(), kConfigKinds.end()};
  bool zone_holdout = false;
  ConfigKind holdout_config = ConfigKind::IFS_AVS_PXRF;
  bool importance = true;
  std::size_t importance_top = 10;
  bool allow_partial = false;
  std::size_t threads = 0;

  bool needs_images() const {
    return std::any_of(configs.begin(), configs.end(), uses_images) || (zone_holdout && uses_images(holdout_config));
  }
  bool needs_pxrf() const {
    return std::any_of(configs.begin(), configs.end(), uses_pxrf) || (zone_holdout && uses_pxrf(holdout_config));
  }
  std::size_t worker_count() const { return threads ? threads : default_thread_count(); }
};

struct ConfigKey {
  const char* key;
  const char* help;
};

/// Every key accepted in a pipeline config file; each also has a --<key> flag.
inline constexpr std::array<ConfigKey, 20> kPipelineKeys{{
    {"images", "directory of <sampleId>_<k> images"},
    {"features", "precomputed features.csv (skips extraction)"},
    {"samples", "samples.csv with zones, categories and targets"},
    {"pxrf", "raw PXRF readings CSV"},
    {"crm", "CRM scans CSV (default correction table when absent)"},
    {"out_dir", "output directory"},
    {"seed", "master seed"},
    {"split_fraction", "calibration fraction"},
    {"folds", "cross-validation folds"},
    {"trees", "trees per forest"},
    {"min_leaf_size", "minimum rows per leaf"},
    {"features_per_split", "predictors tried per split (0 = ceil(p/3))"},
    {"targets", "comma-separated targets"},
    {"configs", "comma-separated predictor configurations"},
    {"zone_holdout", "run the zone-wise holdout"},
    {"holdout_config", "configuration used for the zone holdout"},
    {"importance", "compute permutation importance"},
    {"importance_top", "importance entries per model in report.json"},
    {"allow_partial", "drop samples lacking a block instead of failing"},
    {"threads", "worker threads (results do not depend on it)"},
}};

/// Relative paths resolve against `base` (the config file's directory).
inline PipelineConfig parse_pipeline_config(const KeyValueConfig& kv, const fs::path& base = {}) {
  PipelineConfig c;
  auto path = [&](const char* key) -> std::optional<fs::path> {
    auto v = kv.get(key);
    if (!v || v->empty()) return std::nullopt;
    fs::path p(*v);
    return p.is_absolute() || base.empty() ? p : base / p;
  };
  c.images_dir = path("images");
  c.features_csv = path("features");
  if (auto s = path("samples")) {
    c.samples_csv = *s;
  } else {
    throw Error(ErrorKind::ConfigError, kv.source() + ": key 'samples' is required");
  }
  c.pxrf_csv = path("pxrf");
  c.crm_csv = path("crm");
  if (auto o = path("out_dir")) c.out_dir = *o;
  c.seed = kv.get_uint("seed", c.seed);
  c.split_fraction = kv.get_double("split_fraction", c.split_fraction);
  c.folds = kv.get_uint("folds", c.folds);
  c.forest.tree_count = kv.get_uint("trees", c.forest.tree_count);
  c.forest.min_leaf_size = kv.get_uint("min_leaf_size", c.forest.min_leaf_size);
  c.forest.features_per_split = kv.get_uint("features_per_split", c.forest.features_per_split);
  if (kv.has("targets")) {
    c.targets.clear();
    for (const auto& t : kv.get_list("targets", {})) c.targets.push_back(parse_target(t));
  }
  if (kv.has("configs")) {
    c.configs.clear();
    for (const auto& k : kv.get_list("configs", {})) c.configs.push_back(parse_config_kind(k));
  }
  c.zone_holdout = kv.get_bool("zone_holdout", c.zone_holdout);
  if (auto h = kv.get("holdout_config")) c.holdout_config = parse_config_kind(*h);
  c.importance = kv.get_bool("importance", c.importance);
  c.importance_top = kv.get_uint("importance_top", c.importance_top);
  c.allow_partial = kv.get_bool("allow_partial", c.allow_partial);
  c.threads = kv.get_uint("threads", c.threads);
  c.forest.threads = c.threads;

  if (auto unused = kv.unused_keys(); !unused.empty()) {
    throw Error(ErrorKind::ConfigError, kv.source() + ": unknown key '" + unused.front() + "'");
  }
  auto dedupe = [](auto& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  dedupe(c.targets);
  dedupe(c.configs);
  if (c.targets.empty()) throw Error(ErrorKind::ConfigError, "no targets selected");
  if (c.configs.empty()) throw Error(ErrorKind::ConfigError, "no configurations selected");
  if (!(c.split_fraction > 0 && c.split_fraction < 1)) {
    throw Error(ErrorKind::ConfigError, "split_fraction must lie in (0, 1)");
  }
  if (c.folds < 2) throw Error(ErrorKind::ConfigError, "folds must be >= 2");
  if (c.forest.tree_count < 1 || c.forest.min_leaf_size < 1) {
    throw Error(ErrorKind::ConfigError, "trees and min_leaf_size must be >= 1");
  }
  return c;
}

/// Checks that the inputs the run will read exist.
inline void validate_inputs(const PipelineConfig& c) {
  auto need_file = [](const fs::path& p, const char* key) {
    if (!fs::is_regular_file(p)) throw Error(ErrorKind::ConfigError, std::string(key) + ": no such file " + p.string());
  };
  need_file(c.samples_csv, "samples");
  if (c.needs_images()) {
    if (c.features_csv) {
      need_file(*c.features_csv, "features");
    } else if (!c.images_dir) {
      throw Error(ErrorKind::ConfigError, "image-based configurations need 'images' or 'features'");
    } else if (!fs::is_directory(*c.images_dir)) {
      throw Error(ErrorKind::ConfigError, "images: no such directory " + c.images_dir->string());
    }
  }
  if (c.needs_pxrf()) {
    if (!c.pxrf_csv) throw Error(ErrorKind::ConfigError, "PXRF configurations need 'pxrf'");
    need_file(*c.pxrf_csv, "pxrf");
  }
  if (c.crm_csv) need_file(*c.crm_csv, "crm");
}

// Run -----------------------------------------------------------------------

enum class Stage { Config, Extract, Calibrate, Join, Train, Report };
inline constexpr std::array<std::string_view, 6> kStageNames{"config", "extract", "calibrate", "join", "train", "report"};

/// Process exit status for a failure in `stage`.
constexpr int exit_code(Stage s) { return s == Stage::Config ? 1 : 2 + static_cast<int>(s); }

class StageError : public std::runtime_error {
 public:
  StageError(Stage stage, const std::string& message)
      : std::runtime_error(std::string(kStageNames[static_cast<std::size_t>(stage)]) + " stage failed: " + message),
        stage_(stage) {}
  Stage stage() const noexcept { return stage_; }

 private:
  Stage stage_;
};

struct MetricBundle {
  std::size_t n = 0;
  std::optional<double> r2, rmse, bias, concordance;
};

inline MetricBundle compute_metrics(std::span<const double> y, std::span<const double> pred) {
  MetricBundle b;
  b.n = y.size();
  if (y.empty()) return b;
  b.rmse = metrics::rmse(y, pred);
  b.bias = metrics::bias(y, pred);
  if (y.size() >= 2) {
    b.concordance = metrics::concordance(y, pred);
    try {
      b.r2 = metrics::r_squared(y, pred);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ConstantTruth) throw;
    }
  }
  return b;
}

struct ModelResult {
  Target target;
  ConfigKind config;
  std::vector<std::string> calibration_ids, test_ids;
  std::vector<double> calibration_y, calibration_pred;  // pooled out-of-fold
  std::vector<double> test_y, test_pred;
  MetricBundle calibration, test;
  std::optional<ImportanceReport> importance;
};

struct RunResult {
  PipelineConfig config;
  std::size_t sample_count = 0, joined_count = 0;
  std::size_t calibration_size = 0, test_size = 0;
  bool acf_from_crm = false;
  std::vector<std::string> diagnostics;
  std::vector<ModelResult> models;
  std::map<std::pair<Zone, Target>, std::optional<double>> holdout_rmse;
  nlohmann::ordered_json report;
};

namespace detail {

inline std::uint64_t tag(Target t) { return static_cast<std::uint64_t>(t); }
inline std::uint64_t tag(ConfigKind k) { return static_cast<std::uint64_t>(k); }

inline nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json bundle_json(const MetricBundle& b) {
  return {{"n", b.n}, {"r2", opt_json(b.r2)}, {"rmse", opt_json(b.rmse)}, {"bias", opt_json(b.bias)},
          {"concordance", opt_json(b.concordance)}};
}

inline std::string opt_csv(const std::optional<double>& v) { return v ? csv::format_number(*v) : ""; }

inline std::string id_list(const std::vector<std::string>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size() && i < 5; ++i) s += (i ? ", " : "") + ids[i];
  if (ids.size() > 5) s += ", ... (" + std::to_string(ids.size()) + " total)";
  return s;
}

template <typename Fn>
auto in_stage(Stage stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorKind::IoError, "failed writing " + path.string());
}

}  // namespace detail

/// Loaded and joined inputs shared by every model.
struct JoinedData {
  std::vector<SoilSample> samples;  // joined subset, samples.csv order
  FeatureTable features;
  PxrfTable pxrf;
  std::size_t sample_count = 0;
  bool acf_from_crm = false;
  std::vector<std::string> diagnostics;
};

inline JoinedData load_inputs(const PipelineConfig& cfg) {
  JoinedData d;
  fs::create_directories(cfg.out_dir);
  if (cfg.needs_images()) {
    detail::in_stage(Stage::Extract, [&] {
      if (cfg.features_csv) {
        d.features = read_features(cfg.features_csv->string());
        return 0;
      }
      auto ex = extract_directory(*cfg.images_dir, cfg.worker_count());
      for (const auto& f : ex.failures) d.diagnostics.push_back("extract: " + f.file + ": " + f.message);
      write_features((cfg.out_dir / "features.csv").string(), ex.vectors);
      for (auto& v : ex.vectors) d.features.emplace(v.sample_id, std::move(v.values));
      return 0;
    });
  }
  if (cfg.needs_pxrf()) {
    detail::in_stage(Stage::Calibrate, [&] {
      auto cal = calibrate_files(*cfg.pxrf_csv, cfg.crm_csv, cfg.out_dir);
      d.acf_from_crm = cal.from_crm;
      for (auto& r : cal.corrected) {
        const auto id = r.sample_id;
        if (!d.pxrf.emplace(id, std::move(r)).second) {
          throw Error(ErrorKind::SchemaError, cfg.pxrf_csv->string() + ": duplicate sample_id '" + id + "'");
        }
      }
      return 0;
    });
  }
  detail::in_stage(Stage::Join, [&] {
    auto samples = read_samples(cfg.samples_csv.string());
    d.sample_count = samples.size();
    std::set<std::string, std::less<>> known;
    for (const auto& s : samples) known.insert(s.sample_id);
    std::vector<std::string> unmatched;
    auto orphans = [&](const auto& table, const char* what) {
      for (const auto& [id, v] : table) {
        if (!known.count(id)) unmatched.push_back(id + " (" + what + " without a sample row)");
      }
    };
    if (cfg.needs_images()) orphans(d.features, "image features");
    if (cfg.needs_pxrf()) orphans(d.pxrf, "PXRF record");

    std::vector<ConfigKind> kinds = cfg.configs;
    if (cfg.zone_holdout) kinds.push_back(cfg.holdout_config);
    for (auto& s : samples) {
      std::optional<std::string> why;
      for (auto k : kinds) {
        if ((why = missing_block(s, d.features, d.pxrf, k))) break;
      }
      if (why) {
        unmatched.push_back(s.sample_id + " (" + *why + ")");
      } else {
        d.samples.push_back(std::move(s));
      }
    }
    if (!unmatched.empty()) {
      if (!cfg.allow_partial) {
        throw Error(ErrorKind::UnmatchedIds, std::to_string(unmatched.size()) +
                                                 " unmatched sample(s): " + detail::id_list(unmatched) +
                                                 " (set allow_partial to drop them)");
      }
      for (const auto& u : unmatched) d.diagnostics.push_back("join: dropped " + u);
    }
    if (d.samples.size() < 2) throw Error(ErrorKind::TooFewSamples, "fewer than 2 joined samples");
    return 0;
  });
  return d;
}

/// Trains and evaluates one (target, configuration) model on a shared split.
inline ModelResult evaluate_model(const JoinedData& d, const PipelineConfig& cfg, Target target, ConfigKind kind,
                                  const std::vector<std::string>& calibration_ids,
                                  const std::vector<std::string>& test_ids,
                                  const std::vector<std::vector<std::string>>& folds) {
  ModelResult m{target, kind, calibration_ids, test_ids, {}, {}, {}, {}, {}, {}, std::nullopt};
  const auto fm = assemble_matrix(d.samples, d.features, d.pxrf, {kind, target});
  const auto cal_rows = row_positions(fm.rows, calibration_ids);
  const auto test_rows = row_positions(fm.rows, test_ids);
  const Matrix x_cal = fm.x.select_rows(cal_rows);
  m.calibration_y = select(std::span<const double>(fm.y), std::span<const std::size_t>(cal_rows));
  m.test_y = select(std::span<const double>(fm.y), std::span<const std::size_t>(test_rows));

  std::vector<std::vector<std::size_t>> fold_rows;
  for (const auto& f : folds) {
    if (!f.empty()) fold_rows.push_back(row_positions(calibration_ids, f));
  }
  ForestParams fp = cfg.forest;
  fp.seed = derive_seed(cfg.seed, {0xF0ull, detail::tag(target), detail::tag(kind)});
  m.calibration_pred = cross_validate(x_cal, m.calibration_y, fp, fold_rows);
  m.calibration = compute_metrics(m.calibration_y, m.calibration_pred);

  const auto forest = train_forest(x_cal, m.calibration_y, fp, fm.column_names);
  const Matrix x_test = fm.x.select_rows(test_rows);
  m.test_pred = forest.predict(x_test);
  m.test = compute_metrics(m.test_y, m.test_pred);
  if (cfg.importance && cfg.forest.bootstrap) {
    m.importance = variable_importance(forest, x_cal, m.calibration_y,
                                       derive_seed(cfg.seed, {0x1Aull, detail::tag(target), detail::tag(kind)}));
  }
  return m;
}

/// Zone-wise holdout RMSE: train on five zones, test on the sixth.
inline std::map<std::pair<Zone, Target>, std::optional<double>> zone_holdout_rmse(const JoinedData& d,
                                                                                  const PipelineConfig& cfg) {
  std::map<std::pair<Zone, Target>, std::optional<double>> out;
  const auto splits = zone_holdout_splits(d.samples);
  for (auto target : cfg.targets) {
    const auto fm = assemble_matrix(d.samples, d.features, d.pxrf, {cfg.holdout_config, target});
    std::set<std::string, std::less<>> present(fm.rows.begin(), fm.rows.end());
    for (const auto& split : splits) {
      std::vector<std::string> train, test;
      for (const auto& id : split.train_ids) {
        if (present.count(id)) train.push_back(id);
      }
      for (const auto& id : split.test_ids) {
        if (present.count(id)) test.push_back(id);
      }
      auto& cell = out[{split.zone, target}];
      if (test.empty() || train.size() < std::max<std::size_t>(cfg.forest.min_leaf_size, 2)) continue;
      const auto tr = row_positions(fm.rows, train);
      const auto te = row_positions(fm.rows, test);
      ForestParams fp = cfg.forest;
      fp.seed = derive_seed(cfg.seed, {0x2011ull, static_cast<std::uint64_t>(split.zone), detail::tag(target)});
      const auto forest = train_forest(fm.x.select_rows(tr), select(std::span<const double>(fm.y), std::span<const std::size_t>(tr)),
                                       fp, fm.column_names);
      const auto pred = forest.predict(fm.x.select_rows(te));
      cell = metrics::rmse(select(std::span<const double>(fm.y), std::span<const std::size_t>(te)), pred);
    }
  }
  return out;
}

inline nlohmann::ordered_json holdout_json(const RunResult& r) {
  using nlohmann::ordered_json;
  ordered_json grid = ordered_json::object();
  for (auto z : kZones) {
    ordered_json row = ordered_json::object();
    for (auto t : r.config.targets) {
      auto it = r.holdout_rmse.find({z, t});
      row[std::string(name_of(t))] = it == r.holdout_rmse.end() ? ordered_json(nullptr) : detail::opt_json(it->second);
    }
    grid[std::string(name_of(z))] = row;
  }
  return {{"config", std::string(name_of(r.config.holdout_config))}, {"rmse", grid}};
}

inline nlohmann::ordered_json build_report(const RunResult& r, const JoinedData& d) {
  using nlohmann::ordered_json;
  const auto& cfg = r.config;
  ordered_json j;
  j["schema"] = "soilfusion-report/1";
  j["seed"] = cfg.seed;
  ordered_json settings;
  settings["split_fraction"] = cfg.split_fraction;
  settings["folds"] = cfg.folds;
  settings["trees"] = cfg.forest.tree_count;
  settings["min_leaf_size"] = cfg.forest.min_leaf_size;
  settings["features_per_split"] = cfg.forest.features_per_split;
  settings["targets"] = ordered_json::array();
  for (auto t : cfg.targets) settings["targets"].push_back(std::string(name_of(t)));
  settings["configs"] = ordered_json::array();
  for (auto k : cfg.configs) settings["configs"].push_back(std::string(name_of(k)));
  settings["zone_holdout"] = cfg.zone_holdout;
  settings["holdout_config"] = std::string(name_of(cfg.holdout_config));
  settings["importance"] = cfg.importance;
  settings["allow_partial"] = cfg.allow_partial;
  j["settings"] = settings;
  j["inputs"] = {{"samples", r.sample_count},
                 {"joined", r.joined_count},
                 {"calibration", r.calibration_size},
                 {"test", r.test_size},
                 {"acf_source", r.acf_from_crm ? "crm" : "default"}};

  auto find = [&](Target t, ConfigKind k) -> const ModelResult* {
    for (const auto& m : r.models) {
      if (m.target == t && m.config == k) return &m;
    }
    return nullptr;
  };

  ordered_json metrics_j = ordered_json::object();
  for (auto t : cfg.targets) {
    ordered_json per = ordered_json::object();
    for (auto k : cfg.configs) {
      const auto* m = find(t, k);
      per[std::string(name_of(k))] = {{"calibration", detail::bundle_json(m->calibration)},
                                      {"test", detail::bundle_json(m->test)}};
    }
    metrics_j[std::string(name_of(t))] = per;
  }
  j["metrics"] = metrics_j;

  const bool has_pxrf = std::count(cfg.configs.begin(), cfg.configs.end(), ConfigKind::PXRF) > 0;
  ordered_json rel = ordered_json::object();
  for (auto t : cfg.targets) {
    ordered_json per = ordered_json::object();
    const auto* base = has_pxrf ? find(t, ConfigKind::PXRF) : nullptr;
    for (auto k : cfg.configs) {
      if (k == ConfigKind::PXRF) continue;
      const auto* m = find(t, k);
      auto change = [&](const std::optional<double>& cand, const std::optional<double>& b) -> ordered_json {
        if (!base || !cand || !b || *b == 0) return nullptr;
        return metrics::relative_change(*cand, *b);
      };
      per[std::string(name_of(k))] = {{"r2_pct", base ? change(m->test.r2, base->test.r2) : nullptr},
                                      {"rmse_pct", base ? change(m->test.rmse, base->test.rmse) : nullptr}};
    }
    rel[std::string(name_of(t))] = per;
  }
  j["relative_change_vs_pxrf"] = rel;

  ordered_json resid = ordered_json::object();
  for (auto t : cfg.targets) {
    const auto* fused = find(t, ConfigKind::IFS_AVS);
    const auto* px = find(t, ConfigKind::PXRF);
    ordered_json v = nullptr;
    if (fused && px && fused->test_y.size() >= 2) {
      std::vector<double> res(fused->test_y.size());
      for (std::size_t i = 0; i < res.size(); ++i) res[i] = fused->test_y[i] - fused->test_pred[i];
      try {
        v = metrics::residual_correlation(res, px->test_pred);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::ZeroVariance) throw;
      }
    }
    resid[std::string(name_of(t))] = v;
  }
  j["residual_vs_pxrf_correlation"] = resid;

  ordered_json imp = ordered_json::object();
  if (cfg.importance) {
    for (auto t : cfg.targets) {
      ordered_json per = ordered_json::object();
      for (auto k : cfg.configs) {
        const auto* m = find(t, k);
        ordered_json list = ordered_json::array();
        if (m->importance) {
          for (std::size_t i = 0; i < m->importance->ranking.size() && i < cfg.importance_top; ++i) {
            const auto& e = m->importance->ranking[i];
            list.push_back({{"feature", e.feature}, {"score", e.score}});
          }
        }
        per[std::string(name_of(k))] = list;
      }
      imp[std::string(name_of(t))] = per;
    }
  }
  j["importance"] = imp;

  j["zone_holdout"] = cfg.zone_holdout ? holdout_json(r) : nlohmann::ordered_json(nullptr);

  ordered_json desc = ordered_json::object();
  for (auto t : cfg.targets) {
    ordered_json per = ordered_json::object();
    auto stats_json = [&](const std::vector<double>& v) -> ordered_json {
      ordered_json s = {{"n", v.size()}, {"min", nullptr}, {"max", nullptr}, {"mean", nullptr}, {"sd", nullptr},
                        {"skewness", nullptr}, {"kurtosis", nullptr}, {"cv_pct", nullptr}};
      if (v.size() < 2) return s;
      try {
        const auto st = metrics::descriptive_stats(v);
        s["min"] = st.min;
        s["max"] = st.max;
        s["mean"] = st.mean;
        s["sd"] = st.sd;
        s["skewness"] = detail::opt_json(st.skewness);
        s["kurtosis"] = detail::opt_json(st.kurtosis);
        s["cv_pct"] = st.cv;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::ZeroVariance && e.kind() != ErrorKind::ZeroMean) throw;
      }
      return s;
    };
    std::vector<double> all;
    for (auto z : kZones) {
      std::vector<double> v;
      for (const auto& s : d.samples) {
        if (s.zone == z && s[t]) v.push_back(*s[t]);
      }
      all.insert(all.end(), v.begin(), v.end());
      per[std::string(name_of(z))] = stats_json(v);
    }
    std::vector<double> ordered;
    for (const auto& s : d.samples) {
      if (s[t]) ordered.push_back(*s[t]);
    }
    per["all"] = stats_json(ordered);
    desc[std::string(name_of(t))] = per;
  }
  j["descriptive"] = desc;
  j["diagnostics"] = r.diagnostics;
  return j;
}

inline void write_holdout_csv(const RunResult& r) {
  csv::Writer w((r.config.out_dir / "zone_holdout.csv").string());
  std::vector<std::string> header{"zone"};
  for (auto t : r.config.targets) header.emplace_back(name_of(t));
  w.row(header);
  for (auto z : kZones) {
    std::vector<std::string> row{std::string(name_of(z))};
    for (auto t : r.config.targets) {
      auto it = r.holdout_rmse.find({z, t});
      row.push_back(it == r.holdout_rmse.end() ? "" : detail::opt_csv(it->second));
    }
    w.row(row);
  }
  w.close();
}

inline void write_artifacts(const RunResult& r) {
  const auto& dir = r.config.out_dir;
  {
    csv::Writer w((dir / "metrics.csv").string());
    w.row({"target", "config", "partition", "n", "r2", "rmse", "bias", "concordance"});
    for (const auto& m : r.models) {
      for (auto [part, b] : {std::pair{"calibration", &m.calibration}, std::pair{"test", &m.test}}) {
        w.row({std::string(name_of(m.target)), std::string(name_of(m.config)), part, std::to_string(b->n),
               detail::opt_csv(b->r2), detail::opt_csv(b->rmse), detail::opt_csv(b->bias),
               detail::opt_csv(b->concordance)});
      }
    }
    w.close();
  }
  {
    csv::Writer w((dir / "predictions.csv").string());
    w.row({"target", "config", "partition", "sample_id", "measured", "predicted"});
    for (const auto& m : r.models) {
      for (std::size_t i = 0; i < m.calibration_ids.size(); ++i) {
        w.row({std::string(name_of(m.target)), std::string(name_of(m.config)), "calibration", m.calibration_ids[i],
               csv::format_number(m.calibration_y[i]), csv::format_number(m.calibration_pred[i])});
      }
      for (std::size_t i = 0; i < m.test_ids.size(); ++i) {
        w.row({std::string(name_of(m.target)), std::string(name_of(m.config)), "test", m.test_ids[i],
               csv::format_number(m.test_y[i]), csv::format_number(m.test_pred[i])});
      }
    }
    w.close();
  }
  if (r.config.importance) {
    csv::Writer w((dir / "importance.csv").string());
    w.row({"target", "config", "rank", "feature", "score"});
    for (const auto& m : r.models) {
      if (!m.importance) continue;
      for (std::size_t i = 0; i < m.importance->ranking.size(); ++i) {
        const auto& e = m.importance->ranking[i];
        w.row({std::string(name_of(m.target)), std::string(name_of(m.config)), std::to_string(i + 1), e.feature,
               csv::format_number(e.score)});
      }
    }
    w.close();
  }
  {
    csv::Writer w((dir / "relative_change.csv").string());
    w.row({"target", "config", "r2_pct", "rmse_pct"});
    for (const auto& [target, per] : r.report["relative_change_vs_pxrf"].items()) {
      for (const auto& [config, v] : per.items()) {
        auto cell = [](const nlohmann::ordered_json& x) {
          return x.is_null() ? std::string() : csv::format_number(x.get<double>());
        };
        w.row({target, config, cell(v["r2_pct"]), cell(v["rmse_pct"])});
      }
    }
    w.close();
  }
  {
    csv::Writer w((dir / "descriptive.csv").string());
    const std::vector<std::string> fields{"n", "min", "max", "mean", "sd", "skewness", "kurtosis", "cv_pct"};
    std::vector<std::string> header{"target", "zone"};
    header.insert(header.end(), fields.begin(), fields.end());
    w.row(header);
    for (const auto& [target, per] : r.report["descriptive"].items()) {
      for (const auto& [zone, st] : per.items()) {
        std::vector<std::string> row{target, zone};
        for (const auto& f : fields) {
          const auto& v = st[f];
          row.push_back(v.is_null() ? std::string() : v.is_number_unsigned() ? std::to_string(v.get<std::size_t>())
                                                                               : csv::format_number(v.get<double>()));
        }
        w.row(row);
      }
    }
    w.close();
  }
  if (r.config.zone_holdout) write_holdout_csv(r);
}

/// Runs every stage. Failures surface as StageError; the output directory
/// then holds an INCOMPLETE marker naming the stage.
inline RunResult run_pipeline(const PipelineConfig& cfg, bool holdout_only = false) {
  const auto marker = cfg.out_dir / "INCOMPLETE";
  try {
    detail::in_stage(Stage::Config, [&] {
      validate_inputs(cfg);
      fs::create_directories(cfg.out_dir);
      fs::remove(cfg.out_dir / "report.json");
      detail::write_text(marker, "run in progress\n");
      return 0;
    });
    RunResult r;
    r.config = cfg;
    if (holdout_only) {
      r.config.zone_holdout = true;
      r.config.configs = {cfg.holdout_config};
      r.config.importance = false;
    }
    const auto data = load_inputs(r.config);
    r.sample_count = data.sample_count;
    r.joined_count = data.samples.size();
    r.acf_from_crm = data.acf_from_crm;
    r.diagnostics = data.diagnostics;

    detail::in_stage(Stage::Train, [&] {
      std::vector<std::string> ids;
      for (const auto& s : data.samples) ids.push_back(s.sample_id);
      const auto plan = split_calibration_test(ids, cfg.split_fraction, derive_seed(cfg.seed, {0x5Bull}));
      const auto folds = kfold_indices(plan.calibration_ids, cfg.folds, derive_seed(cfg.seed, {0xFDull}));
      r.calibration_size = plan.calibration_ids.size();
      r.test_size = plan.test_ids.size();
      if (!holdout_only) {
        for (auto t : r.config.targets) {
          std::set<std::string, std::less<>> has;
          for (const auto& s : data.samples) {
            if (s[t]) has.insert(s.sample_id);
          }
          auto keep = [&](const std::vector<std::string>& v) {
            std::vector<std::string> out;
            for (const auto& id : v) {
              if (has.count(id)) out.push_back(id);
            }
            return out;
          };
          const auto cal = keep(plan.calibration_ids);
          const auto test = keep(plan.test_ids);
          std::vector<std::vector<std::string>> f;
          for (const auto& fold : folds) f.push_back(keep(fold));
          for (auto k : r.config.configs) r.models.push_back(evaluate_model(data, r.config, t, k, cal, test, f));
        }
      }
      if (r.config.zone_holdout) r.holdout_rmse = zone_holdout_rmse(data, r.config);
      return 0;
    });

    detail::in_stage(Stage::Report, [&] {
      if (holdout_only) {
        r.report = holdout_json(r);
        detail::write_text(cfg.out_dir / "zone_holdout.json", r.report.dump(2) + "\n");
        write_holdout_csv(r);
      } else {
        r.report = build_report(r, data);
        write_artifacts(r);
        detail::write_text(cfg.out_dir / "report.json", r.report.dump(2) + "\n");
      }
      fs::remove(marker);
      return 0;
    });
    return r;
  } catch (const StageError& e) {
    std::error_code ec;
    if (fs::exists(cfg.out_dir, ec)) {
      std::ofstream out(marker, std::ios::binary);
      out << e.what() << '\n';
    }
    throw;
  }
}

// PCA -----------------------------------------------------------------------

struct CategoricalSpec {
  std::string column;
  metrics::DummyMode mode = metrics::DummyMode::DropFirst;
};

struct PcaInput {
  std::vector<std::string> row_labels;
  std::vector<std::string> column_names;
  Matrix x;
};

/// Canonical vocabulary for the known categorical columns, else sorted distinct values.
inline std::vector<std::string> category_vocabulary(const std::string& column, const std::vector<std::string>& values) {
  auto names = [](const auto& arr) { return std::vector<std::string>(arr.begin(), arr.end()); };
  if (column == "zone") return names(kZoneNames);
  if (column == "parent_material") return names(kParentMaterialNames);
  if (column == "soil_order") return names(kSoilOrderNames);
  std::set<std::string> distinct(values.begin(), values.end());
  return {distinct.begin(), distinct.end()};
}

/// Numeric columns (all but sample_id and the categoricals when `columns` is
/// empty) followed by dummy columns for each categorical.
inline PcaInput pca_input(const csv::Table& table, const std::vector<std::string>& columns,
                          const std::vector<CategoricalSpec>& categoricals) {
  PcaInput in;
  const auto id_col = table.find("sample_id");
  std::vector<std::size_t> numeric;
  if (!columns.empty()) {
    for (const auto& c : columns) numeric.push_back(table.require(c));
  } else {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (id_col && c == *id_col) continue;
      const bool is_cat = std::any_of(categoricals.begin(), categoricals.end(),
                                      [&](const CategoricalSpec& s) { return s.column == table.header[c]; });
      if (!is_cat) numeric.push_back(c);
    }
  }
  const std::size_t n = table.rows.size();
  std::vector<Matrix> blocks;
  Matrix num(n, numeric.size());
  for (std::size_t r = 0; r < n; ++r) {
    in.row_labels.push_back(id_col ? table.rows[r][*id_col] : std::to_string(r + 1));
    for (std::size_t j = 0; j < numeric.size(); ++j) {
      num(r, j) = csv::parse_number(table.rows[r][numeric[j]], table.source + ":" + std::to_string(r + 2) +
                                                                   ": column '" + table.header[numeric[j]] + "'");
    }
  }
  for (auto c : numeric) in.column_names.push_back(table.header[c]);
  blocks.push_back(std::move(num));
  for (const auto& spec : categoricals) {
    const auto c = table.require(spec.column);
    std::vector<std::string> values;
    for (const auto& row : table.rows) values.push_back(row[c]);
    const auto vocab = category_vocabulary(spec.column, values);
    blocks.push_back(metrics::filmer_pritchett_encode(values, vocab, spec.mode));
    for (std::size_t k = spec.mode == metrics::DummyMode::DropFirst ? 1 : 0; k < vocab.size(); ++k) {
      in.column_names.push_back(spec.column + "_" + vocab[k]);
    }
  }
  in.x = Matrix(n, in.column_names.size());
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t col = 0;
    for (const auto& b : blocks) {
      for (std::size_t j = 0; j < b.cols(); ++j) in.x(r, col++) = b(r, j);
    }
  }
  return in;
}

/// Writes <prefix>scores.csv, <prefix>loadings.csv and <prefix>variance.csv.
inline metrics::PcaResult run_pca(const PcaInput& in, bool scale, const std::string& prefix) {
  auto result = metrics::pca(in.x, scale);
  const std::size_t k = result.variances.size();
  std::vector<std::string> pcs;
  for (std::size_t i = 0; i < k; ++i) pcs.push_back("PC" + std::to_string(i + 1));
  {
    csv::Writer w(prefix + "scores.csv");
    std::vector<std::string> header{"sample_id"};
    header.insert(header.end(), pcs.begin(), pcs.end());
    w.row(header);
    for (std::size_t r = 0; r < in.x.rows(); ++r) {
      std::vector<std::string> row{in.row_labels[r]};
      for (std::size_t c = 0; c < k; ++c) row.push_back(csv::format_number(result.scores(r, c)));
      w.row(row);
    }
    w.close();
  }
  {
    csv::Writer w(prefix + "loadings.csv");
    std::vector<std::string> header{"variable"};
    header.insert(header.end(), pcs.begin(), pcs.end());
    w.row(header);
    for (std::size_t v = 0; v < in.column_names.size(); ++v) {
      std::vector<std::string> row{in.column_names[v]};
      for (std::size_t c = 0; c < k; ++c) row.push_back(csv::format_number(result.loadings(v, c)));
      w.row(row);
    }
    w.close();
  }
  {
    csv::Writer w(prefix + "variance.csv");
    w.row({"component", "variance", "percent"});
    for (std::size_t c = 0; c < k; ++c) {
      w.row({pcs[c], csv::format_number(result.variances[c]), csv::format_number(result.variance_explained[c])});
    }
    w.close();
  }
  return result;
}

}  // namespace soilfusion
