#pragma once

// Deterministic synthetic soil corpora: per-zone colored value-noise images,
// targets that are known functions of the emitted image colors, and PXRF
// readings that track the targets.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "soilfusion/config.hpp"
#include "soilfusion/error.hpp"
#include "soilfusion/fusion.hpp"
#include "soilfusion/image_io.hpp"
#include "soilfusion/parallel.hpp"
#include "soilfusion/pxrf.hpp"
#include "soilfusion/rng.hpp"
#include "soilfusion/texture.hpp"

namespace soilfusion::synth {

struct ZoneProfile {
  std::array<double, 3> base_color{128, 128, 128};
  double color_jitter_sd = 15;
  double granularity = 0.5;  // 0 coarse .. 1 fine texture
  double proportion = 1;
  ParentMaterial parent_material = ParentMaterial::RecentAlluvium;
  SoilOrder soil_order = SoilOrder::Inceptisols;
};

/// target = intercept + r*R + g*G + b*B + granularity*gran + N(0, noise_sd),
/// with R, G, B the sample's measured channel means scaled to [0, 1].
/// Results are clamped at 0.
struct TargetRule {
  double intercept = 0;
  double r = 0, g = 0, b = 0;
  double granularity = 0;
  double noise_sd = 0;
  double missing_rate = 0;

  double evaluate(const std::array<double, 3>& rgb01, double gran) const {
    return intercept + r * rgb01[0] + g * rgb01[1] + b * rgb01[2] + granularity * gran;
  }
};

/// PXRF element reading = intercept + slope * target + N(0, noise_rel * intercept).
struct PxrfRule {
  Target driver = Target::OC;
  double intercept = 100;
  double slope = 0;
};

struct CorpusSpec {
  std::size_t sample_count = 200;
  std::size_t image_width = 256;
  std::size_t image_height = 256;
  std::size_t replicates = 3;
  std::uint64_t seed = 42;
  double texture_amplitude = 35;
  double amplitude_jitter = 0.5;  // per-sample contrast factor drawn from 1 +/- this
  double speck_fraction = 0.06;   // upper bound on the area covered by each grain type
  double replicate_noise_sd = 3;
  int octaves = 3;
  double pxrf_noise_rel = 0.03;
  std::array<ZoneProfile, 6> zones = default_zones();
  std::array<TargetRule, 5> targets = default_targets();
  std::array<PxrfRule, kElementCount> pxrf = default_pxrf();

  static std::array<ZoneProfile, 6> default_zones() {
    using PM = ParentMaterial;
    using SO = SoilOrder;
    // Proportions follow the field corpus zone counts.
    return {{
        {{110, 80, 62}, 15, 0.20, 82, PM::OlderAlluvium, SO::Inceptisols},                     // NHZ
        {{150, 104, 76}, 15, 0.35, 102, PM::OlderAlluvium, SO::Alfisols},                      // TAZ
        {{136, 120, 100}, 15, 0.50, 238, PM::RecentAlluvium, SO::Inceptisols},                 // GAZ
        {{168, 112, 72}, 15, 0.65, 210, PM::DeltaicAlluvium, SO::Entisols},                    // CSZ
        {{122, 100, 86}, 15, 0.45, 214, PM::RecentAlluvium, SO::Inceptisols},                  // VAZ
        {{186, 118, 80}, 15, 0.80, 287, PM::GraniteGneiss, SO::Alfisols},                      // RLZ
    }};
  }

  static std::array<TargetRule, 5> default_targets() {
    return {{
        {0.2, 0.0, 1.6, 0.0, 0.3, 0.03, 0.02},     // B: greener soils richer
        {3.0, -3.0, 0.0, 0.0, 0.0, 0.03, 0.0},     // OC: darker red channel, more carbon
        {10.0, 0.0, 0.0, 60.0, 5.0, 1.0, 0.0},     // Mn
        {40.0, 0.0, 0.0, -25.0, 10.0, 0.8, 0.0},   // S
        {2.0, 12.0, -4.0, 0.0, 2.0, 0.2, 0.02},    // SAI
    }};
  }

  static std::array<PxrfRule, kElementCount> default_pxrf() {
    // Order follows kElements: Ca K Fe Mn Rb Zr Zn Ti Ba Cr Cu Pb Ni Ag Sn V Sr Sb Ga.
    return {{
        {Target::OC, 8000, -900},  {Target::S, 12000, 150},  {Target::B, 30000, 4000}, {Target::Mn, 300, 9},
        {Target::S, 90, 1.2},      {Target::OC, 310, 0},     {Target::OC, 60, 18},     {Target::SAI, 4200, 60},
        {Target::B, 400, 40},      {Target::Mn, 70, 0.5},    {Target::OC, 25, 6},      {Target::SAI, 22, 0.8},
        {Target::Mn, 30, 0.3},     {Target::B, 2, 0.2},      {Target::OC, 4, 0},       {Target::SAI, 90, 2},
        {Target::S, 110, 0.5},     {Target::OC, 1.5, 0},     {Target::B, 17, 1.5},
    }};
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidSpec, m); };
    if (sample_count < 1) fail("sample_count must be >= 1");
    if (image_width < 2 || image_height < 2) fail("image dimensions must be at least 2x2");
    if (replicates < 1) fail("replicates must be >= 1");
    if (texture_amplitude < 0 || replicate_noise_sd < 0 || pxrf_noise_rel < 0) fail("noise levels must be >= 0");
    if (amplitude_jitter < 0 || amplitude_jitter > 1) fail("amplitude_jitter must lie in [0, 1]");
    if (speck_fraction < 0 || speck_fraction > 0.5) fail("speck_fraction must lie in [0, 0.5]");
    if (octaves < 1 || octaves > 8) fail("octaves must lie in [1, 8]");
    double total = 0;
    for (std::size_t z = 0; z < zones.size(); ++z) {
      const auto& p = zones[z];
      const std::string where = "zone " + std::string(kZoneNames[z]);
      for (double c : p.base_color) {
        if (!(c >= 0 && c <= 255)) fail(where + ": base color outside [0, 255]");
      }
      if (p.color_jitter_sd < 0) fail(where + ": color jitter SD must be >= 0");
      if (p.granularity < 0 || p.granularity > 1) fail(where + ": granularity outside [0, 1]");
      if (p.proportion < 0) fail(where + ": proportion must be >= 0");
      total += p.proportion;
    }
    if (!(total > 0)) fail("zone proportions sum to zero");
    for (std::size_t t = 0; t < targets.size(); ++t) {
      if (targets[t].noise_sd < 0) fail("target " + std::string(kTargetNames[t]) + ": noise SD must be >= 0");
      if (targets[t].missing_rate < 0 || targets[t].missing_rate >= 1) {
        fail("target " + std::string(kTargetNames[t]) + ": missing rate outside [0, 1)");
      }
    }
  }
};

/// Reads a flat key=value spec; absent keys keep their defaults.
inline CorpusSpec parse_spec(const KeyValueConfig& cfg) {
  CorpusSpec s;
  s.sample_count = cfg.get_uint("sample_count", s.sample_count);
  if (auto size = cfg.get_uint("image_size", 0)) s.image_width = s.image_height = size;
  s.image_width = cfg.get_uint("image_width", s.image_width);
  s.image_height = cfg.get_uint("image_height", s.image_height);
  s.replicates = cfg.get_uint("replicates", s.replicates);
  s.seed = cfg.get_uint("seed", s.seed);
  s.texture_amplitude = cfg.get_double("texture_amplitude", s.texture_amplitude);
  s.amplitude_jitter = cfg.get_double("amplitude_jitter", s.amplitude_jitter);
  s.speck_fraction = cfg.get_double("speck_fraction", s.speck_fraction);
  s.replicate_noise_sd = cfg.get_double("replicate_noise_sd", s.replicate_noise_sd);
  s.octaves = static_cast<int>(cfg.get_int("octaves", s.octaves));
  s.pxrf_noise_rel = cfg.get_double("pxrf_noise_rel", s.pxrf_noise_rel);
  for (std::size_t z = 0; z < s.zones.size(); ++z) {
    const std::string pre = "zone." + std::string(kZoneNames[z]) + ".";
    auto& p = s.zones[z];
    const auto color = cfg.get_numbers(pre + "color", {p.base_color.begin(), p.base_color.end()});
    if (color.size() != 3) throw Error(ErrorKind::InvalidSpec, pre + "color needs three values");
    std::copy(color.begin(), color.end(), p.base_color.begin());
    p.color_jitter_sd = cfg.get_double(pre + "jitter_sd", p.color_jitter_sd);
    p.granularity = cfg.get_double(pre + "granularity", p.granularity);
    p.proportion = cfg.get_double(pre + "proportion", p.proportion);
    if (auto pm = cfg.get(pre + "parent_material")) p.parent_material = parse_parent_material(*pm);
    if (auto so = cfg.get(pre + "soil_order")) p.soil_order = parse_soil_order(*so);
  }
  for (std::size_t t = 0; t < s.targets.size(); ++t) {
    const std::string pre = "target." + std::string(kTargetNames[t]) + ".";
    auto& r = s.targets[t];
    r.intercept = cfg.get_double(pre + "intercept", r.intercept);
    r.r = cfg.get_double(pre + "r", r.r);
    r.g = cfg.get_double(pre + "g", r.g);
    r.b = cfg.get_double(pre + "b", r.b);
    r.granularity = cfg.get_double(pre + "granularity", r.granularity);
    r.noise_sd = cfg.get_double(pre + "noise_sd", r.noise_sd);
    r.missing_rate = cfg.get_double(pre + "missing_rate", r.missing_rate);
  }
  if (auto unused = cfg.unused_keys(); !unused.empty()) {
    throw Error(ErrorKind::InvalidSpec, cfg.source() + ": unknown key '" + unused.front() + "'");
  }
  s.validate();
  return s;
}

/// Zone of each sample: largest-remainder quotas, then a seeded shuffle.
inline std::vector<Zone> assign_zones(const CorpusSpec& spec) {
  double total = 0;
  for (const auto& z : spec.zones) total += z.proportion;
  const std::size_t n = spec.sample_count;
  std::array<std::size_t, 6> quota{};
  std::array<double, 6> remainder{};
  std::size_t assigned = 0;
  for (std::size_t z = 0; z < 6; ++z) {
    const double exact = static_cast<double>(n) * spec.zones[z].proportion / total;
    quota[z] = static_cast<std::size_t>(std::floor(exact));
    remainder[z] = exact - static_cast<double>(quota[z]);
    assigned += quota[z];
  }
  std::array<std::size_t, 6> order{0, 1, 2, 3, 4, 5};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++quota[order[i % 6]];
  std::vector<Zone> zones;
  zones.reserve(n);
  for (std::size_t z = 0; z < 6; ++z) zones.insert(zones.end(), quota[z], kZones[z]);
  Rng rng(derive_seed(spec.seed, {0x20E5ull}));
  rng.shuffle(std::span<Zone>(zones));
  return zones;
}

inline std::string sample_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "S%04zu", index + 1);
  return buf;
}

namespace detail {

/// Multi-octave value noise in [-1, 1] on a width x height raster.
inline std::vector<double> value_noise(std::size_t width, std::size_t height, double granularity, int octaves, Rng& rng) {
  std::vector<double> field(width * height, 0.0);
  const double base_cell = 48.0 + (6.0 - 48.0) * granularity;
  double amplitude = 1.0, norm = 0.0;
  for (int o = 0; o < octaves; ++o) {
    const double cell = std::max(2.0, base_cell / std::pow(2.0, o));
    const auto gw = static_cast<std::size_t>(std::ceil(static_cast<double>(width) / cell)) + 2;
    const auto gh = static_cast<std::size_t>(std::ceil(static_cast<double>(height) / cell)) + 2;
    std::vector<double> lattice(gw * gh);
    for (auto& v : lattice) v = rng.uniform(-1.0, 1.0);
    for (std::size_t y = 0; y < height; ++y) {
      const double fy = static_cast<double>(y) / cell;
      const auto iy = static_cast<std::size_t>(fy);
      double ty = fy - static_cast<double>(iy);
      ty = ty * ty * (3 - 2 * ty);
      for (std::size_t x = 0; x < width; ++x) {
        const double fx = static_cast<double>(x) / cell;
        const auto ix = static_cast<std::size_t>(fx);
        double tx = fx - static_cast<double>(ix);
        tx = tx * tx * (3 - 2 * tx);
        const double v00 = lattice[iy * gw + ix], v10 = lattice[iy * gw + ix + 1];
        const double v01 = lattice[(iy + 1) * gw + ix], v11 = lattice[(iy + 1) * gw + ix + 1];
        const double top = v00 + (v10 - v00) * tx;
        const double bottom = v01 + (v11 - v01) * tx;
        field[y * width + x] += amplitude * (top + (bottom - top) * ty);
      }
    }
    norm += amplitude;
    amplitude *= 0.5;
  }
  for (auto& v : field) v /= norm;
  return field;
}

enum : std::uint8_t { kMatrix = 0, kDarkGrain = 1, kBrightGrain = 2 };

/// Disc-shaped grains (radius 1..3 px) covering roughly `dark` and `bright`
/// fractions of the raster. Later discs overwrite earlier ones.
inline std::vector<std::uint8_t> grain_mask(std::size_t width, std::size_t height, double dark, double bright, Rng& rng) {
  std::vector<std::uint8_t> mask(width * height, kMatrix);
  const double area = static_cast<double>(width * height);
  for (auto [kind, fraction] : {std::pair{kDarkGrain, dark}, std::pair{kBrightGrain, bright}}) {
    const auto count = static_cast<std::size_t>(std::lround(fraction * area / 13.0));
    for (std::size_t k = 0; k < count; ++k) {
      const auto cx = static_cast<long>(rng.index(width));
      const auto cy = static_cast<long>(rng.index(height));
      const auto radius = static_cast<long>(1 + rng.index(3));
      for (long dy = -radius; dy <= radius; ++dy) {
        for (long dx = -radius; dx <= radius; ++dx) {
          const long x = cx + dx, y = cy + dy;
          if (dx * dx + dy * dy > radius * radius || x < 0 || y < 0) continue;
          if (x >= static_cast<long>(width) || y >= static_cast<long>(height)) continue;
          mask[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] = kind;
        }
      }
    }
  }
  return mask;
}

inline std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace detail

/// Everything recorded about one generated sample.
struct GeneratedSample {
  SoilSample sample;
  PxrfRecord pxrf;
  std::array<double, 3> base_color{};        // after jitter
  std::array<double, 3> measured_mean{};     // over all replicate pixels, 0..255
  double granularity = 0;
  double amplitude = 0;  // texture contrast for this sample
  std::array<double, 5> noiseless_targets{};  // rule value before noise and clamping
  std::vector<RgbImage> images;
};

/// Builds sample `index` in memory. Streams derive from (seed, index) only.
inline GeneratedSample generate_sample(const CorpusSpec& spec, std::size_t index, Zone zone) {
  const auto& profile = spec.zones[static_cast<std::size_t>(zone)];
  GeneratedSample g;
  g.sample.sample_id = sample_id(index);
  g.sample.zone = zone;
  g.pxrf.sample_id = g.sample.sample_id;

  Rng meta(derive_seed(spec.seed, {index, 1}));
  for (std::size_t c = 0; c < 3; ++c) {
    g.base_color[c] = std::clamp(meta.normal(profile.base_color[c], profile.color_jitter_sd), 0.0, 255.0);
  }
  g.granularity = std::clamp(profile.granularity + meta.uniform(-0.05, 0.05), 0.0, 1.0);
  g.amplitude = spec.texture_amplitude * (1.0 + meta.uniform(-spec.amplitude_jitter, spec.amplitude_jitter));
  g.sample.parent_material = profile.parent_material;
  g.sample.soil_order = profile.soil_order;
  // One sample in five takes a neighboring category.
  if (meta.uniform() < 0.2) {
    g.sample.parent_material = static_cast<ParentMaterial>((static_cast<std::size_t>(profile.parent_material) + 1) % 5);
  }
  if (meta.uniform() < 0.2) {
    g.sample.soil_order = static_cast<SoilOrder>((static_cast<std::size_t>(profile.soil_order) + 1) % 3);
  }

  Rng texture_rng(derive_seed(spec.seed, {index, 2}));
  const auto field = detail::value_noise(spec.image_width, spec.image_height, g.granularity, spec.octaves, texture_rng);
  // Channel-specific response to the shared texture field.
  constexpr std::array<double, 3> response{1.0, 0.85, 0.7};
  // Organic (dark) and quartz-like (bright) grains, shared by all replicates.
  Rng grain_rng(derive_seed(spec.seed, {index, 5}));
  const double dark = grain_rng.uniform(0.0, spec.speck_fraction);
  const double bright = grain_rng.uniform(0.0, spec.speck_fraction);
  const auto mask = detail::grain_mask(spec.image_width, spec.image_height, dark, bright, grain_rng);
  constexpr std::array<double, 3> bright_color{228, 222, 212};

  std::array<double, 3> sums{};
  for (std::size_t r = 0; r < spec.replicates; ++r) {
    Rng noise(derive_seed(spec.seed, {index, 100 + r}));
    std::vector<Rgb> pixels(field.size());
    for (std::size_t i = 0; i < field.size(); ++i) {
      std::array<std::uint8_t, 3> px{};
      for (std::size_t c = 0; c < 3; ++c) {
        double v = g.base_color[c] + g.amplitude * response[c] * field[i];
        if (mask[i] == detail::kDarkGrain) v = 0.35 * g.base_color[c];
        if (mask[i] == detail::kBrightGrain) v = bright_color[c];
        if (spec.replicate_noise_sd > 0) v += noise.normal(0.0, spec.replicate_noise_sd);
        px[c] = detail::to_byte(v);
        sums[c] += px[c];
      }
      pixels[i] = {px[0], px[1], px[2]};
    }
    g.images.emplace_back(spec.image_width, spec.image_height, std::move(pixels));
  }
  const double count = static_cast<double>(field.size() * spec.replicates);
  std::array<double, 3> rgb01{};
  for (std::size_t c = 0; c < 3; ++c) {
    g.measured_mean[c] = sums[c] / count;
    rgb01[c] = g.measured_mean[c] / 255.0;
  }

  Rng target_rng(derive_seed(spec.seed, {index, 3}));
  std::array<double, 5> values{};
  for (std::size_t t = 0; t < 5; ++t) {
    const auto& rule = spec.targets[t];
    g.noiseless_targets[t] = rule.evaluate(rgb01, g.granularity);
    const double noise = target_rng.normal();
    const double missing = target_rng.uniform();
    values[t] = std::max(0.0, g.noiseless_targets[t] + rule.noise_sd * noise);
    if (missing >= rule.missing_rate) g.sample.targets[t] = values[t];
  }

  Rng pxrf_rng(derive_seed(spec.seed, {index, 4}));
  for (std::size_t e = 0; e < kElementCount; ++e) {
    const auto& rule = spec.pxrf[e];
    const double driver = values[static_cast<std::size_t>(rule.driver)];
    const double noise = pxrf_rng.normal(0.0, spec.pxrf_noise_rel * rule.intercept);
    g.pxrf.concentrations[e] = std::max(0.0, rule.intercept + rule.slope * driver + noise);
  }
  return g;
}

inline nlohmann::ordered_json ground_truth_json(const CorpusSpec& spec) {
  nlohmann::ordered_json j;
  j["generator"] = "soilfusion-synth";
  j["seed"] = spec.seed;
  j["sample_count"] = spec.sample_count;
  j["image_width"] = spec.image_width;
  j["image_height"] = spec.image_height;
  j["replicates"] = spec.replicates;
  j["texture_amplitude"] = spec.texture_amplitude;
  j["amplitude_jitter"] = spec.amplitude_jitter;
  j["speck_fraction"] = spec.speck_fraction;
  j["replicate_noise_sd"] = spec.replicate_noise_sd;
  j["octaves"] = spec.octaves;
  j["target_inputs"] = "R, G, B = measured channel means over all replicate pixels / 255; gran = sample granularity";
  auto& zones = j["zones"] = nlohmann::ordered_json::object();
  for (std::size_t z = 0; z < 6; ++z) {
    const auto& p = spec.zones[z];
    zones[std::string(kZoneNames[z])] = {{"base_color", p.base_color},
                                         {"color_jitter_sd", p.color_jitter_sd},
                                         {"granularity", p.granularity},
                                         {"proportion", p.proportion},
                                         {"parent_material", std::string(name_of(p.parent_material))},
                                         {"soil_order", std::string(name_of(p.soil_order))}};
  }
  auto& targets = j["targets"] = nlohmann::ordered_json::object();
  for (std::size_t t = 0; t < 5; ++t) {
    const auto& r = spec.targets[t];
    targets[std::string(kTargetNames[t])] = {{"intercept", r.intercept}, {"r", r.r},
                                             {"g", r.g},                 {"b", r.b},
                                             {"granularity", r.granularity}, {"noise_sd", r.noise_sd},
                                             {"missing_rate", r.missing_rate}};
  }
  auto& pxrf = j["pxrf"] = nlohmann::ordered_json::object();
  for (std::size_t e = 0; e < kElementCount; ++e) {
    const auto& r = spec.pxrf[e];
    pxrf[std::string(kElementNames[e])] = {{"driver", std::string(name_of(r.driver))},
                                           {"intercept", r.intercept},
                                           {"slope", r.slope},
                                           {"noise_sd", spec.pxrf_noise_rel * r.intercept}};
  }
  return j;
}

struct CorpusSummary {
  std::vector<SoilSample> samples;
  std::vector<PxrfRecord> pxrf;
  std::size_t image_count = 0;
};

/// Writes images/<id>_<k>.png, samples.csv, pxrf.csv and ground_truth.json.
inline CorpusSummary generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir,
                                     std::size_t threads = default_thread_count()) {
  spec.validate();
  const auto images_dir = out_dir / "images";
  std::filesystem::create_directories(images_dir);
  const auto zones = assign_zones(spec);
  CorpusSummary summary;
  summary.samples.resize(spec.sample_count);
  summary.pxrf.resize(spec.sample_count);
  parallel_for(spec.sample_count, threads, [&](std::size_t i) {
    auto g = generate_sample(spec, i, zones[i]);
    for (std::size_t r = 0; r < g.images.size(); ++r) {
      write_png((images_dir / (g.sample.sample_id + "_" + std::to_string(r + 1) + ".png")).string(), g.images[r]);
    }
    summary.samples[i] = std::move(g.sample);
    summary.pxrf[i] = std::move(g.pxrf);
  });
  summary.image_count = spec.sample_count * spec.replicates;
  write_samples((out_dir / "samples.csv").string(), summary.samples);
  write_pxrf((out_dir / "pxrf.csv").string(), summary.pxrf);
  std::ofstream gt(out_dir / "ground_truth.json", std::ios::binary);
  gt << ground_truth_json(spec).dump(2) << '\n';
  if (!gt) throw Error(ErrorKind::IoError, "failed writing ground_truth.json");
  return summary;
}

}  // namespace soilfusion::synth
