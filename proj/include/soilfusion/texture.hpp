#pragma once

// Texture and color descriptors of soil microscope images: 16-level
// quantization, gray-level co-occurrence (GLCM) and run-length (GLRLM)
// matrices in four orientations, and RGB/HSV/L*a*b* channel statistics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "soilfusion/error.hpp"

namespace soilfusion {

inline constexpr int kGrayLevels = 16;
inline constexpr std::size_t kGlcmFeatureCount = 6;
inline constexpr std::size_t kGlrlmFeatureCount = 11;
inline constexpr std::size_t kColorFeatureCount = 27;
inline constexpr std::size_t kGlcmBlockSize = 3 * 4 * kGlcmFeatureCount;    // 72
inline constexpr std::size_t kGlrlmBlockSize = 3 * 4 * kGlrlmFeatureCount;  // 132
inline constexpr std::size_t kImageFeatureCount = kGlcmBlockSize + kGlrlmBlockSize + kColorFeatureCount;
static_assert(kImageFeatureCount == 231);

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// 8-bit RGB raster, row-major, at least 2x2.
class RgbImage {
 public:
  RgbImage(std::size_t width, std::size_t height, std::vector<Rgb> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width_ < 2 || height_ < 2) {
      throw Error(ErrorKind::DegenerateImage, "image must be at least 2x2, got " + std::to_string(width_) + "x" +
                                                  std::to_string(height_));
    }
    if (pixels_.size() != width_ * height_) {
      throw Error(ErrorKind::DegenerateImage, "pixel count does not match dimensions");
    }
  }

  RgbImage(std::size_t width, std::size_t height, Rgb fill)
      : RgbImage(width, height, std::vector<Rgb>(width * height, fill)) {}

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::span<const Rgb> pixels() const noexcept { return pixels_; }
  std::span<Rgb> pixels() noexcept { return pixels_; }
  const Rgb& at(std::size_t x, std::size_t y) const { return pixels_[y * width_ + x]; }
  Rgb& at(std::size_t x, std::size_t y) { return pixels_[y * width_ + x]; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

 private:
  std::size_t width_;
  std::size_t height_;
  std::vector<Rgb> pixels_;
};

/// Rotates 90 degrees counter-clockwise.
inline RgbImage rotate90(const RgbImage& image) {
  const std::size_t w = image.width(), h = image.height();
  std::vector<Rgb> out(w * h);
  // Source (x, y) lands at (y, w - 1 - x) in the h-wide result.
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) out[(w - 1 - x) * h + y] = image.at(x, y);
  }
  return RgbImage(h, w, std::move(out));
}

/// Center crop to at most `width` x `height`.
inline RgbImage center_crop(const RgbImage& image, std::size_t width, std::size_t height) {
  width = std::min(width, image.width());
  height = std::min(height, image.height());
  const std::size_t x0 = (image.width() - width) / 2, y0 = (image.height() - height) / 2;
  std::vector<Rgb> out;
  out.reserve(width * height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) out.push_back(image.at(x0 + x, y0 + y));
  }
  return RgbImage(width, height, std::move(out));
}

enum class Channel { R, G, B };
inline constexpr std::array<Channel, 3> kChannels{Channel::R, Channel::G, Channel::B};

/// Gray levels 1..16 on the source raster.
class QuantizedGrid {
 public:
  QuantizedGrid(std::size_t width, std::size_t height, std::vector<std::uint8_t> cells)
      : width_(width), height_(height), cells_(std::move(cells)) {
    if (width_ == 0 || height_ == 0 || cells_.size() != width_ * height_) {
      throw Error(ErrorKind::DegenerateImage, "quantized grid shape is invalid");
    }
    for (auto c : cells_) {
      if (c < 1 || c > kGrayLevels) throw Error(ErrorKind::DegenerateImage, "gray level out of range [1,16]");
    }
  }

  /// Rows of levels; all rows must share one length.
  static QuantizedGrid from_rows(const std::vector<std::vector<int>>& rows) {
    if (rows.empty()) throw Error(ErrorKind::DegenerateImage, "empty grid");
    std::vector<std::uint8_t> cells;
    for (const auto& r : rows) {
      if (r.size() != rows.front().size()) throw Error(ErrorKind::DegenerateImage, "ragged grid rows");
      for (int v : r) cells.push_back(static_cast<std::uint8_t>(std::clamp(v, 0, 255)));
    }
    return QuantizedGrid(rows.front().size(), rows.size(), std::move(cells));
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  static constexpr int levels() noexcept { return kGrayLevels; }
  std::span<const std::uint8_t> cells() const noexcept { return cells_; }
  int at(std::size_t x, std::size_t y) const { return cells_[y * width_ + x]; }

 private:
  std::size_t width_;
  std::size_t height_;
  std::vector<std::uint8_t> cells_;
};

/// Fixed equal-width bins over [0, 255].
constexpr int quantize_value(int v) noexcept { return std::clamp(v, 0, 255) * kGrayLevels / 256 + 1; }

inline QuantizedGrid quantize_channel(std::span<const std::uint8_t> channel, std::size_t width, std::size_t height) {
  std::vector<std::uint8_t> cells(channel.size());
  std::transform(channel.begin(), channel.end(), cells.begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(quantize_value(v)); });
  return QuantizedGrid(width, height, std::move(cells));
}

inline std::vector<std::uint8_t> channel_values(const RgbImage& image, Channel channel) {
  std::vector<std::uint8_t> out(image.pixels().size());
  std::transform(image.pixels().begin(), image.pixels().end(), out.begin(), [channel](const Rgb& p) {
    return channel == Channel::R ? p.r : channel == Channel::G ? p.g : p.b;
  });
  return out;
}

inline QuantizedGrid quantize_channel(const RgbImage& image, Channel channel) {
  return quantize_channel(channel_values(image, channel), image.width(), image.height());
}

enum class Orientation { Deg0, Deg45, Deg90, Deg135 };
inline constexpr std::array<Orientation, 4> kOrientations{Orientation::Deg0, Orientation::Deg45, Orientation::Deg90,
                                                          Orientation::Deg135};

struct Offset {
  int dcol;
  int drow;
};

/// Neighbor offset at distance 1; rows grow downward, so "up" is drow = -1.
constexpr Offset offset_of(Orientation o) noexcept {
  switch (o) {
    case Orientation::Deg0: return {+1, 0};
    case Orientation::Deg45: return {+1, -1};
    case Orientation::Deg90: return {0, -1};
    case Orientation::Deg135: return {-1, -1};
  }
  return {0, 0};
}

constexpr int degrees_of(Orientation o) noexcept {
  switch (o) {
    case Orientation::Deg0: return 0;
    case Orientation::Deg45: return 45;
    case Orientation::Deg90: return 90;
    case Orientation::Deg135: return 135;
  }
  return 0;
}

using GlcmCounts = std::array<std::uint64_t, kGrayLevels * kGrayLevels>;

/// Normalized symmetric co-occurrence matrix. `at` takes 1-based levels.
struct Glcm {
  std::array<double, kGrayLevels * kGrayLevels> matrix{};
  Orientation orientation = Orientation::Deg0;
  int distance = 1;

  double at(int i, int j) const { return matrix[(i - 1) * kGrayLevels + (j - 1)]; }
};

/// Symmetrized pair counts (ordered pairs plus their transpose), 0-based storage.
inline GlcmCounts glcm_counts(const QuantizedGrid& grid, Orientation orientation) {
  GlcmCounts counts{};
  const auto [dc, dr] = offset_of(orientation);
  const std::size_t w = grid.width(), h = grid.height();
  const auto cells = grid.cells();
  const std::size_t x_begin = dc < 0 ? 1 : 0;
  const std::size_t x_end = dc > 0 ? (w > 0 ? w - 1 : 0) : w;
  const std::size_t y_begin = dr < 0 ? 1 : 0;
  for (std::size_t y = y_begin; y < h; ++y) {
    const std::uint8_t* row = cells.data() + y * w;
    const std::uint8_t* nrow = cells.data() + (y + dr) * w;
    for (std::size_t x = x_begin; x < x_end; ++x) {
      const int a = row[x] - 1;
      const int b = nrow[x + dc] - 1;
      ++counts[a * kGrayLevels + b];
      ++counts[b * kGrayLevels + a];
    }
  }
  return counts;
}

inline Glcm compute_glcm(const QuantizedGrid& grid, Orientation orientation) {
  const GlcmCounts counts = glcm_counts(grid, orientation);
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) {
    throw Error(ErrorKind::DegenerateImage, "no neighbor pair at " + std::to_string(degrees_of(orientation)) +
                                                " degrees for a " + std::to_string(grid.width()) + "x" +
                                                std::to_string(grid.height()) + " grid");
  }
  Glcm g;
  g.orientation = orientation;
  const double inv = 1.0 / static_cast<double>(total);
  for (std::size_t k = 0; k < counts.size(); ++k) g.matrix[k] = static_cast<double>(counts[k]) * inv;
  return g;
}

struct GlcmFeatures {
  double contrast = 0, dissimilarity = 0, homogeneity = 0, energy = 0, asm_ = 0, correlation = 0;

  std::array<double, kGlcmFeatureCount> to_array() const {
    return {contrast, dissimilarity, homogeneity, energy, asm_, correlation};
  }
};

inline constexpr std::array<const char*, kGlcmFeatureCount> kGlcmFeatureNames{
    "contrast", "dissimilarity", "homogeneity", "energy", "ASM", "correlation"};

inline GlcmFeatures glcm_features(const Glcm& g) {
  GlcmFeatures f;
  double mean_i = 0, mean_j = 0;
  for (int i = 1; i <= kGrayLevels; ++i) {
    for (int j = 1; j <= kGrayLevels; ++j) {
      const double p = g.at(i, j);
      const double d = i - j;
      f.contrast += d * d * p;
      f.dissimilarity += std::abs(d) * p;
      f.homogeneity += p / (1.0 + d * d);
      f.asm_ += p * p;
      mean_i += i * p;
      mean_j += j * p;
    }
  }
  double var_i = 0, var_j = 0, cov = 0;
  for (int i = 1; i <= kGrayLevels; ++i) {
    for (int j = 1; j <= kGrayLevels; ++j) {
      const double p = g.at(i, j);
      var_i += (i - mean_i) * (i - mean_i) * p;
      var_j += (j - mean_j) * (j - mean_j) * p;
      cov += (i - mean_i) * (j - mean_j) * p;
    }
  }
  f.energy = std::sqrt(f.asm_);
  // Zero marginal variance (constant image) is defined as perfect correlation.
  if (var_i <= 0.0 || var_j <= 0.0) {
    f.correlation = 1.0;
  } else {
    f.correlation = std::clamp(cov / std::sqrt(var_i * var_j), -1.0, 1.0);
  }
  return f;
}

/// Run-length counts R(g, l) for gray level g in 1..16 and run length l in 1..max_run.
struct Glrlm {
  std::size_t max_run = 0;
  std::vector<std::uint64_t> counts;  // 16 x max_run, 0-based storage
  Orientation orientation = Orientation::Deg0;
  std::uint64_t total_runs = 0;
  std::uint64_t total_pixels = 0;

  std::uint64_t at(int g, std::size_t l) const { return counts[(g - 1) * max_run + (l - 1)]; }
};

/// Counts maximal runs: a pixel starts a run when its predecessor along the
/// orientation is outside the grid or carries a different level.
inline Glrlm compute_glrlm(const QuantizedGrid& grid, Orientation orientation) {
  const auto [dc, dr] = offset_of(orientation);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(grid.width());
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(grid.height());
  const auto cells = grid.cells();
  Glrlm r;
  r.orientation = orientation;
  r.max_run = static_cast<std::size_t>(std::max(w, h));
  r.counts.assign(kGrayLevels * r.max_run, 0);
  r.total_pixels = static_cast<std::uint64_t>(w * h);
  auto inside = [&](std::ptrdiff_t x, std::ptrdiff_t y) { return x >= 0 && x < w && y >= 0 && y < h; };
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      const std::uint8_t level = cells[y * w + x];
      const std::ptrdiff_t px = x - dc, py = y - dr;
      if (inside(px, py) && cells[py * w + px] == level) continue;
      std::size_t length = 1;
      std::ptrdiff_t nx = x + dc, ny = y + dr;
      while (inside(nx, ny) && cells[ny * w + nx] == level) {
        ++length;
        nx += dc;
        ny += dr;
      }
      ++r.counts[(level - 1) * r.max_run + (length - 1)];
      ++r.total_runs;
    }
  }
  return r;
}

struct GlrlmFeatures {
  double sre = 0, lre = 0, gln = 0, rln = 0, rp = 0, lgre = 0, hgre = 0, srlge = 0, srhge = 0, lrlge = 0, lrhge = 0;

  std::array<double, kGlrlmFeatureCount> to_array() const {
    return {sre, lre, gln, rln, rp, lgre, hgre, srlge, srhge, lrlge, lrhge};
  }
};

inline constexpr std::array<const char*, kGlrlmFeatureCount> kGlrlmFeatureNames{
    "SRE", "LRE", "GLN", "RLN", "RP", "LGRE", "HGRE", "SRLGE", "SRHGE", "LRLGE", "LRHGE"};

inline GlrlmFeatures glrlm_features(const Glrlm& r) {
  if (r.total_runs == 0) throw Error(ErrorKind::DegenerateImage, "run-length matrix has no runs");
  GlrlmFeatures f;
  std::vector<double> per_length(r.max_run, 0.0);
  for (int g = 1; g <= kGrayLevels; ++g) {
    const double g2 = static_cast<double>(g) * g;
    double per_level = 0;
    for (std::size_t l = 1; l <= r.max_run; ++l) {
      const auto c = r.at(g, l);
      if (c == 0) continue;
      const double n = static_cast<double>(c);
      const double l2 = static_cast<double>(l) * static_cast<double>(l);
      f.sre += n / l2;
      f.lre += n * l2;
      f.lgre += n / g2;
      f.hgre += n * g2;
      f.srlge += n / (g2 * l2);
      f.srhge += n * g2 / l2;
      f.lrlge += n * l2 / g2;
      f.lrhge += n * g2 * l2;
      per_level += n;
      per_length[l - 1] += n;
    }
    f.gln += per_level * per_level;
  }
  for (double v : per_length) f.rln += v * v;
  const double inv_runs = 1.0 / static_cast<double>(r.total_runs);
  for (double* v : {&f.sre, &f.lre, &f.gln, &f.rln, &f.lgre, &f.hgre, &f.srlge, &f.srhge, &f.lrlge, &f.lrhge}) {
    *v *= inv_runs;
  }
  f.rp = static_cast<double>(r.total_runs) / static_cast<double>(r.total_pixels);
  return f;
}

struct Hsv {
  double h = 0, s = 0, v = 0;
};

/// Hexcone model; H in degrees [0, 360), S and V in [0, 1]; achromatic H is 0.
inline Hsv rgb_to_hsv(Rgb px) {
  const int mx = std::max({px.r, px.g, px.b});
  const int mn = std::min({px.r, px.g, px.b});
  const int delta = mx - mn;
  Hsv out;
  out.v = mx / 255.0;
  out.s = mx == 0 ? 0.0 : static_cast<double>(delta) / mx;
  if (delta == 0) return out;
  double h;
  if (mx == px.r) {
    h = 60.0 * static_cast<double>(px.g - px.b) / delta;
  } else if (mx == px.g) {
    h = 60.0 * (2.0 + static_cast<double>(px.b - px.r) / delta);
  } else {
    h = 60.0 * (4.0 + static_cast<double>(px.r - px.g) / delta);
  }
  if (h < 0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  out.h = h;
  return out;
}

struct Lab {
  double l = 0, a = 0, b = 0;
};

namespace detail {

inline double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline const std::array<double, 256>& srgb_linear_table() {
  static const std::array<double, 256> table = [] {
    std::array<double, 256> t{};
    for (int i = 0; i < 256; ++i) t[i] = srgb_to_linear(i / 255.0);
    return t;
  }();
  return table;
}

inline double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

}  // namespace detail

/// sRGB (D65) to CIE L*a*b*. The white point is the sRGB matrix row sums, so
/// (255, 255, 255) maps to a* = b* = 0 up to rounding.
inline Lab rgb_to_lab(Rgb px) {
  const auto& lin = detail::srgb_linear_table();
  const double r = lin[px.r], g = lin[px.g], b = lin[px.b];
  constexpr double xn = 0.4124564 + 0.3575761 + 0.1804375;
  constexpr double yn = 0.2126729 + 0.7151522 + 0.0721750;
  constexpr double zn = 0.0193339 + 0.1191920 + 0.9503041;
  const double x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / xn;
  const double y = (0.2126729 * r + 0.7151522 * g + 0.0721750 * b) / yn;
  const double z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / zn;
  const double fx = detail::lab_f(x), fy = detail::lab_f(y), fz = detail::lab_f(z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

struct ChannelStats {
  double mean = 0, median = 0, sd = 0;
};

/// Mean, median and sample (n-1) SD. Takes its argument by value because the
/// median reorders it.
inline ChannelStats channel_stats(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorKind::EmptyInput, "channel statistics need at least one value");
  const std::size_t n = values.size();
  ChannelStats s;
  if (const auto [lo, hi] = std::minmax_element(values.begin(), values.end()); *lo == *hi) {
    s.mean = s.median = *lo;
    return s;
  }
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(n);
  double ss = 0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (n % 2 == 1) {
    s.median = upper;
  } else {
    const double lower = *std::max_element(values.begin(), values.begin() + mid);
    s.median = 0.5 * (lower + upper);
  }
  return s;
}

/// Canonical 231-entry descriptor of one sample.
struct ImageFeatureVector {
  std::string sample_id;
  std::vector<double> values;
};

inline constexpr std::array<const char*, 3> kChannelNames{"R", "G", "B"};

/// Canonical feature names, in output order.
inline const std::vector<std::string>& image_feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    out.reserve(kImageFeatureCount);
    for (auto ch : kChannelNames) {
      for (auto o : kOrientations) {
        for (auto f : kGlcmFeatureNames) {
          out.push_back(std::string("glcm_") + ch + "_" + std::to_string(degrees_of(o)) + "_" + f);
        }
      }
    }
    for (auto ch : kChannelNames) {
      for (auto o : kOrientations) {
        for (auto f : kGlrlmFeatureNames) {
          out.push_back(std::string("glrlm_") + ch + "_" + std::to_string(degrees_of(o)) + "_" + f);
        }
      }
    }
    const std::array<std::pair<const char*, std::array<const char*, 3>>, 3> spaces{{
        {"RGB", {"R", "G", "B"}},
        {"HSV", {"H", "S", "V"}},
        {"Lab", {"L", "a", "b"}},
    }};
    for (const auto& [space, chans] : spaces) {
      for (auto ch : chans) {
        for (auto stat : {"mean", "median", "sd"}) {
          out.push_back(std::string("color_") + space + "_" + ch + "_" + stat);
        }
      }
    }
    return out;
  }();
  return names;
}

/// Offset of a (channel, orientation) GLCM block in the feature vector.
constexpr std::size_t glcm_offset(std::size_t channel, std::size_t orientation) {
  return (channel * 4 + orientation) * kGlcmFeatureCount;
}

constexpr std::size_t glrlm_offset(std::size_t channel, std::size_t orientation) {
  return kGlcmBlockSize + (channel * 4 + orientation) * kGlrlmFeatureCount;
}

/// Offset of the color block for color channel 0..8 (R,G,B,H,S,V,L,a,b).
constexpr std::size_t color_offset(std::size_t color_channel) {
  return kGlcmBlockSize + kGlrlmBlockSize + color_channel * 3;
}

inline ImageFeatureVector extract_features(const RgbImage& image, std::string sample_id = {}) {
  ImageFeatureVector out;
  out.sample_id = std::move(sample_id);
  out.values.assign(kImageFeatureCount, 0.0);
  auto& v = out.values;

  for (std::size_t c = 0; c < kChannels.size(); ++c) {
    const QuantizedGrid grid = quantize_channel(image, kChannels[c]);
    for (std::size_t o = 0; o < kOrientations.size(); ++o) {
      const auto gf = glcm_features(compute_glcm(grid, kOrientations[o])).to_array();
      std::copy(gf.begin(), gf.end(), v.begin() + static_cast<std::ptrdiff_t>(glcm_offset(c, o)));
      const auto rf = glrlm_features(compute_glrlm(grid, kOrientations[o])).to_array();
      std::copy(rf.begin(), rf.end(), v.begin() + static_cast<std::ptrdiff_t>(glrlm_offset(c, o)));
    }
  }

  const std::size_t n = image.pixels().size();
  std::array<std::vector<double>, 9> color;
  for (auto& c : color) c.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Rgb px = image.pixels()[i];
    const Hsv hsv = rgb_to_hsv(px);
    const Lab lab = rgb_to_lab(px);
    color[0][i] = px.r;
    color[1][i] = px.g;
    color[2][i] = px.b;
    color[3][i] = hsv.h;
    color[4][i] = hsv.s;
    color[5][i] = hsv.v;
    color[6][i] = lab.l;
    color[7][i] = lab.a;
    color[8][i] = lab.b;
  }
  for (std::size_t c = 0; c < color.size(); ++c) {
    const ChannelStats s = channel_stats(std::move(color[c]));
    v[color_offset(c) + 0] = s.mean;
    v[color_offset(c) + 1] = s.median;
    v[color_offset(c) + 2] = s.sd;
  }
  return out;
}

/// Element-wise mean of replicate descriptors of one sample.
inline ImageFeatureVector aggregate_replicates(std::span<const ImageFeatureVector> vectors) {
  if (vectors.empty()) throw Error(ErrorKind::EmptyInput, "no replicate vectors to aggregate");
  const auto& first = vectors.front();
  ImageFeatureVector out{first.sample_id, std::vector<double>(first.values.size(), 0.0)};
  for (const auto& vec : vectors) {
    if (vec.sample_id != first.sample_id) {
      throw Error(ErrorKind::MixedSampleIds, "replicates of '" + first.sample_id + "' mixed with '" +
                                                 vec.sample_id + "'");
    }
    if (vec.values.size() != out.values.size()) {
      throw Error(ErrorKind::DimensionMismatch, "replicate vectors differ in length");
    }
  }
  // Running mean: exact for identical replicates.
  double k = 0;
  for (const auto& vec : vectors) {
    k += 1.0;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += (vec.values[i] - out.values[i]) / k;
  }
  return out;
}

}  // namespace soilfusion
