#pragma once

// Sample metadata, auxiliary-variable coding, predictor matrix assembly for
// the four predictor configurations, and calibration/test, k-fold and
// zone-holdout splits.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "soilfusion/csv.hpp"
#include "soilfusion/error.hpp"
#include "soilfusion/matrix.hpp"
#include "soilfusion/pxrf.hpp"
#include "soilfusion/rng.hpp"
#include "soilfusion/texture.hpp"

namespace soilfusion {

enum class Zone { NHZ, TAZ, GAZ, CSZ, VAZ, RLZ };
enum class ParentMaterial { RecentAlluvium, OlderAlluvium, GraniteGneiss, PeninsularColluvium, DeltaicAlluvium };
enum class SoilOrder { Inceptisols, Entisols, Alfisols };
enum class Target { B, OC, Mn, S, SAI };
enum class ConfigKind { IFS, PXRF, IFS_AVS, IFS_AVS_PXRF };

inline constexpr std::array<std::string_view, 6> kZoneNames{"NHZ", "TAZ", "GAZ", "CSZ", "VAZ", "RLZ"};
inline constexpr std::array<std::string_view, 5> kParentMaterialNames{
    "RecentAlluvium", "OlderAlluvium", "GraniteGneiss", "PeninsularColluvium", "DeltaicAlluvium"};
inline constexpr std::array<std::string_view, 3> kSoilOrderNames{"Inceptisols", "Entisols", "Alfisols"};
inline constexpr std::array<std::string_view, 5> kTargetNames{"B", "OC", "Mn", "S", "SAI"};
inline constexpr std::array<std::string_view, 4> kConfigNames{"IFS", "PXRF", "IFS_AVS", "IFS_AVS_PXRF"};
/// samples.csv column for each target.
inline constexpr std::array<std::string_view, 5> kTargetColumns{"b_mg_kg", "oc_pct", "mn_mg_kg", "s_mg_kg", "sai"};

inline constexpr std::array<Zone, 6> kZones{Zone::NHZ, Zone::TAZ, Zone::GAZ, Zone::CSZ, Zone::VAZ, Zone::RLZ};
inline constexpr std::array<Target, 5> kTargets{Target::B, Target::OC, Target::Mn, Target::S, Target::SAI};
inline constexpr std::array<ConfigKind, 4> kConfigKinds{ConfigKind::IFS, ConfigKind::PXRF, ConfigKind::IFS_AVS,
                                                        ConfigKind::IFS_AVS_PXRF};

template <typename Enum, std::size_t N>
constexpr std::string_view enum_name(Enum e, const std::array<std::string_view, N>& names) {
  return names[static_cast<std::size_t>(e)];
}

constexpr std::string_view name_of(Zone z) { return enum_name(z, kZoneNames); }
constexpr std::string_view name_of(ParentMaterial p) { return enum_name(p, kParentMaterialNames); }
constexpr std::string_view name_of(SoilOrder o) { return enum_name(o, kSoilOrderNames); }
constexpr std::string_view name_of(Target t) { return enum_name(t, kTargetNames); }
constexpr std::string_view name_of(ConfigKind k) { return enum_name(k, kConfigNames); }

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view text, const std::array<std::string_view, N>& names, std::string_view what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == text) return static_cast<Enum>(i);
  }
  throw Error(ErrorKind::UnknownCategory, "unknown " + std::string(what) + " '" + std::string(text) + "'");
}

inline Zone parse_zone(std::string_view s) { return parse_enum<Zone>(s, kZoneNames, "zone"); }
inline ParentMaterial parse_parent_material(std::string_view s) {
  return parse_enum<ParentMaterial>(s, kParentMaterialNames, "parent material");
}
inline SoilOrder parse_soil_order(std::string_view s) { return parse_enum<SoilOrder>(s, kSoilOrderNames, "soil order"); }
inline Target parse_target(std::string_view s) { return parse_enum<Target>(s, kTargetNames, "target"); }
inline ConfigKind parse_config_kind(std::string_view s) { return parse_enum<ConfigKind>(s, kConfigNames, "config"); }

struct SoilSample {
  std::string sample_id;
  Zone zone = Zone::NHZ;
  ParentMaterial parent_material = ParentMaterial::RecentAlluvium;
  SoilOrder soil_order = SoilOrder::Inceptisols;
  std::array<std::optional<double>, 5> targets{};

  std::optional<double>& operator[](Target t) { return targets[static_cast<std::size_t>(t)]; }
  const std::optional<double>& operator[](Target t) const { return targets[static_cast<std::size_t>(t)]; }
};

inline constexpr std::size_t kAuxiliaryWidth = kZoneNames.size() + kParentMaterialNames.size() + kSoilOrderNames.size();
static_assert(kAuxiliaryWidth == 14);

inline const std::vector<std::string>& auxiliary_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (auto z : kZoneNames) out.push_back("zone_" + std::string(z));
    for (auto p : kParentMaterialNames) out.push_back("pm_" + std::string(p));
    for (auto o : kSoilOrderNames) out.push_back("order_" + std::string(o));
    return out;
  }();
  return names;
}

/// Full one-hot: 6 zone, 5 parent-material, 3 soil-order indicators.
inline std::array<double, kAuxiliaryWidth> encode_auxiliary(const SoilSample& s) {
  const auto z = static_cast<std::size_t>(s.zone);
  const auto p = static_cast<std::size_t>(s.parent_material);
  const auto o = static_cast<std::size_t>(s.soil_order);
  if (z >= kZoneNames.size() || p >= kParentMaterialNames.size() || o >= kSoilOrderNames.size()) {
    throw Error(ErrorKind::UnknownCategory, "sample '" + s.sample_id + "' has an out-of-vocabulary category");
  }
  std::array<double, kAuxiliaryWidth> out{};
  out[z] = 1;
  out[kZoneNames.size() + p] = 1;
  out[kZoneNames.size() + kParentMaterialNames.size() + o] = 1;
  return out;
}

constexpr std::size_t config_width(ConfigKind k) {
  switch (k) {
    case ConfigKind::IFS: return kImageFeatureCount;
    case ConfigKind::PXRF: return kElementCount;
    case ConfigKind::IFS_AVS: return kImageFeatureCount + kAuxiliaryWidth;
    case ConfigKind::IFS_AVS_PXRF: return kImageFeatureCount + kAuxiliaryWidth + kElementCount;
  }
  return 0;
}

constexpr bool uses_images(ConfigKind k) { return k != ConfigKind::PXRF; }
constexpr bool uses_auxiliary(ConfigKind k) { return k == ConfigKind::IFS_AVS || k == ConfigKind::IFS_AVS_PXRF; }
constexpr bool uses_pxrf(ConfigKind k) { return k == ConfigKind::PXRF || k == ConfigKind::IFS_AVS_PXRF; }

struct FusionConfig {
  ConfigKind kind = ConfigKind::IFS;
  Target target = Target::OC;
};

/// Image descriptors keyed by sample id.
using FeatureTable = std::map<std::string, std::vector<double>, std::less<>>;
using PxrfTable = std::map<std::string, PxrfRecord, std::less<>>;

struct FusionMatrix {
  std::vector<std::string> rows;
  std::vector<std::string> column_names;
  Matrix x;
  std::vector<double> y;
  std::vector<std::string> dropped_missing_target;
  std::vector<std::string> dropped_missing_block;  // only with MissingBlockPolicy::Drop
};

enum class MissingBlockPolicy { Error, Drop };

inline std::vector<std::string> fusion_column_names(ConfigKind kind) {
  std::vector<std::string> names;
  if (uses_images(kind)) names = image_feature_names();
  if (uses_auxiliary(kind)) names.insert(names.end(), auxiliary_names().begin(), auxiliary_names().end());
  if (uses_pxrf(kind)) {
    for (auto e : kElementNames) names.push_back("pxrf_" + std::string(e));
  }
  return names;
}

/// Why `s` cannot populate the blocks `kind` needs, or nullopt when it can.
inline std::optional<std::string> missing_block(const SoilSample& s, const FeatureTable& features,
                                                const PxrfTable& pxrf, ConfigKind kind) {
  if (uses_images(kind)) {
    auto it = features.find(s.sample_id);
    if (it == features.end()) return "no image features";
    if (it->second.size() != kImageFeatureCount) return "image feature vector has wrong length";
  }
  if (uses_pxrf(kind)) {
    auto it = pxrf.find(s.sample_id);
    if (it == pxrf.end()) return "no PXRF record";
    for (std::size_t e = 0; e < kElementCount; ++e) {
      if (!it->second.concentrations[e]) return "PXRF value missing for " + std::string(kElementNames[e]);
    }
  }
  return std::nullopt;
}

/// Rows follow input order; samples without the target are dropped first.
inline FusionMatrix assemble_matrix(std::span<const SoilSample> samples, const FeatureTable& features,
                                    const PxrfTable& pxrf, const FusionConfig& config,
                                    MissingBlockPolicy policy = MissingBlockPolicy::Error) {
  FusionMatrix m;
  m.column_names = fusion_column_names(config.kind);
  const std::size_t width = config_width(config.kind);
  m.x = Matrix(0, width);
  std::vector<double> row;
  row.reserve(width);
  for (const auto& s : samples) {
    const auto& target = s[config.target];
    if (!target) {
      m.dropped_missing_target.push_back(s.sample_id);
      continue;
    }
    if (auto why = missing_block(s, features, pxrf, config.kind)) {
      if (policy == MissingBlockPolicy::Drop) {
        m.dropped_missing_block.push_back(s.sample_id);
        continue;
      }
      throw Error(ErrorKind::MissingBlock, "sample '" + s.sample_id + "': " + *why + " (config " +
                                               std::string(name_of(config.kind)) + ")");
    }
    row.clear();
    if (uses_images(config.kind)) {
      const auto& f = features.find(s.sample_id)->second;
      row.insert(row.end(), f.begin(), f.end());
    }
    if (uses_auxiliary(config.kind)) {
      const auto aux = encode_auxiliary(s);
      row.insert(row.end(), aux.begin(), aux.end());
    }
    if (uses_pxrf(config.kind)) {
      for (const auto& v : pxrf.find(s.sample_id)->second.concentrations) row.push_back(*v);
    }
    m.x.append_row(row);
    m.rows.push_back(s.sample_id);
    m.y.push_back(*target);
  }
  return m;
}

struct SplitPlan {
  std::vector<std::string> calibration_ids;
  std::vector<std::string> test_ids;
  std::vector<std::vector<std::string>> folds;
  std::uint64_t seed = 0;
};

/// Seeded uniform permutation; the first ceil(fraction * n) ids calibrate.
inline SplitPlan split_calibration_test(std::span<const std::string> ids, double fraction, std::uint64_t seed) {
  if (!(fraction > 0 && fraction < 1)) throw Error(ErrorKind::InvalidSpec, "split fraction must lie in (0, 1)");
  if (ids.size() < 2) throw Error(ErrorKind::TooFewSamples, "need at least 2 samples to split");
  std::vector<std::string> order(ids.begin(), ids.end());
  Rng rng(derive_seed(seed, {0x5B17ull}));
  rng.shuffle(std::span<std::string>(order));
  auto n_cal = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(ids.size()) - 1e-9));
  n_cal = std::clamp<std::size_t>(n_cal, 1, ids.size() - 1);
  SplitPlan plan;
  plan.seed = seed;
  plan.calibration_ids.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_cal));
  plan.test_ids.assign(order.begin() + static_cast<std::ptrdiff_t>(n_cal), order.end());
  return plan;
}

/// Shuffled ids dealt round-robin into k folds.
inline std::vector<std::vector<std::string>> kfold_indices(std::span<const std::string> calibration_ids, std::size_t k,
                                                           std::uint64_t seed) {
  if (k < 2) throw Error(ErrorKind::InvalidSpec, "k-fold needs k >= 2");
  if (calibration_ids.size() < k) {
    throw Error(ErrorKind::TooFewSamples, std::to_string(calibration_ids.size()) + " samples for " +
                                              std::to_string(k) + " folds");
  }
  std::vector<std::string> order(calibration_ids.begin(), calibration_ids.end());
  Rng rng(derive_seed(seed, {0xF0D5ull}));
  rng.shuffle(std::span<std::string>(order));
  std::vector<std::vector<std::string>> folds(k);
  for (std::size_t i = 0; i < order.size(); ++i) folds[i % k].push_back(order[i]);
  return folds;
}

struct HoldoutSplit {
  Zone zone;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

inline std::vector<HoldoutSplit> zone_holdout_splits(std::span<const SoilSample> samples) {
  std::vector<HoldoutSplit> out;
  for (Zone z : kZones) {
    HoldoutSplit h{z, {}, {}};
    for (const auto& s : samples) (s.zone == z ? h.test_ids : h.train_ids).push_back(s.sample_id);
    out.push_back(std::move(h));
  }
  return out;
}

/// Positions of `ids` within `rows`; every id must be present.
inline std::vector<std::size_t> row_positions(std::span<const std::string> rows, std::span<const std::string> ids) {
  std::map<std::string_view, std::size_t> where;
  for (std::size_t i = 0; i < rows.size(); ++i) where.emplace(rows[i], i);
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = where.find(id);
    if (it == where.end()) throw Error(ErrorKind::UnmatchedIds, "id '" + id + "' not among matrix rows");
    out.push_back(it->second);
  }
  return out;
}

// CSV schemas --------------------------------------------------------------

/// sample_id, zone, parent_material, soil_order, b_mg_kg, oc_pct, mn_mg_kg, s_mg_kg, sai
inline std::vector<SoilSample> read_samples(const std::string& path) {
  const auto table = csv::read_file(path);
  const auto c_id = table.require("sample_id");
  const auto c_zone = table.require("zone");
  const auto c_pm = table.require("parent_material");
  const auto c_order = table.require("soil_order");
  std::array<std::size_t, 5> c_targets{};
  for (std::size_t t = 0; t < 5; ++t) c_targets[t] = table.require(kTargetColumns[t]);
  std::vector<SoilSample> out;
  std::map<std::string, std::size_t> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = path + ":" + std::to_string(r + 2);
    SoilSample s;
    s.sample_id = row[c_id];
    if (s.sample_id.empty()) throw Error(ErrorKind::SchemaError, where + ": column 'sample_id' is empty");
    if (!seen.emplace(s.sample_id, r).second) {
      throw Error(ErrorKind::SchemaError, where + ": duplicate sample_id '" + s.sample_id + "'");
    }
    try {
      s.zone = parse_zone(row[c_zone]);
      s.parent_material = parse_parent_material(row[c_pm]);
      s.soil_order = parse_soil_order(row[c_order]);
    } catch (const Error& e) {
      throw Error(ErrorKind::UnknownCategory, where + ": " + e.what());
    }
    for (std::size_t t = 0; t < 5; ++t) {
      const std::string col = where + ": column '" + std::string(kTargetColumns[t]) + "'";
      s.targets[t] = csv::parse_optional_number(row[c_targets[t]], col);
      if (s.targets[t] && *s.targets[t] < 0) throw Error(ErrorKind::SchemaError, col + ": negative target");
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline void write_samples(const std::string& path, std::span<const SoilSample> samples) {
  csv::Writer w(path);
  std::vector<std::string> header{"sample_id", "zone", "parent_material", "soil_order"};
  for (auto c : kTargetColumns) header.emplace_back(c);
  w.row(header);
  for (const auto& s : samples) {
    std::vector<std::string> row{s.sample_id, std::string(name_of(s.zone)), std::string(name_of(s.parent_material)),
                                 std::string(name_of(s.soil_order))};
    for (const auto& t : s.targets) row.push_back(t ? csv::format_number(*t) : "");
    w.row(row);
  }
  w.close();
}

/// sample_id + the 231 canonical feature columns, in canonical order.
inline FeatureTable read_features(const std::string& path) {
  const auto table = csv::read_file(path);
  const auto& names = image_feature_names();
  if (table.header.size() != names.size() + 1 || table.header[0] != "sample_id") {
    throw Error(ErrorKind::SchemaError, path + ": expected sample_id + " + std::to_string(names.size()) +
                                            " feature columns");
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (table.header[i + 1] != names[i]) {
      throw Error(ErrorKind::SchemaError, path + ": column " + std::to_string(i + 2) + " is '" +
                                              table.header[i + 1] + "', expected '" + names[i] + "'");
    }
  }
  FeatureTable out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    std::vector<double> v(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) {
      v[i] = csv::parse_number(row[i + 1], path + ":" + std::to_string(r + 2) + ": column '" + names[i] + "'");
    }
    if (!out.emplace(row[0], std::move(v)).second) {
      throw Error(ErrorKind::SchemaError, path + ":" + std::to_string(r + 2) + ": duplicate sample_id '" + row[0] + "'");
    }
  }
  return out;
}

inline void write_features(const std::string& path, std::span<const ImageFeatureVector> vectors) {
  csv::Writer w(path);
  std::vector<std::string> header{"sample_id"};
  const auto& names = image_feature_names();
  header.insert(header.end(), names.begin(), names.end());
  w.row(header);
  for (const auto& v : vectors) {
    std::vector<std::string> row{v.sample_id};
    for (double x : v.values) row.push_back(csv::format_number(x, 9));
    w.row(row);
  }
  w.close();
}

}  // namespace soilfusion
