// Acceptance checks. Prints one PASS/FAIL line per criterion.
//   acceptance            run every criterion
//   acceptance 3 7        run the listed criteria
// Exit status is nonzero when any selected criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <json.hpp>

#include "soilfusion/forest.hpp"
#include "soilfusion/fusion.hpp"
#include "soilfusion/metrics.hpp"
#include "soilfusion/parallel.hpp"
#include "soilfusion/pxrf.hpp"
#include "soilfusion/rng.hpp"
#include "soilfusion/synth.hpp"
#include "soilfusion/texture.hpp"

namespace fs = std::filesystem;
using namespace soilfusion;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
  std::vector<std::string> failures;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      failures.push_back(what);
    }
  }
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

bool close_rel(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

RgbImage random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Rgb> px(w * h);
  for (auto& p : px) {
    p = {static_cast<std::uint8_t>(rng.index(256)), static_cast<std::uint8_t>(rng.index(256)),
         static_cast<std::uint8_t>(rng.index(256))};
  }
  return RgbImage(w, h, std::move(px));
}

// Independent texture oracles -----------------------------------------------

// All ordered pixel pairs (p, q) with q - p equal to the offset, plus transposes.
std::array<std::uint64_t, 256> naive_glcm(const QuantizedGrid& g, Orientation o) {
  std::array<std::uint64_t, 256> c{};
  const auto off = offset_of(o);
  const long w = static_cast<long>(g.width()), h = static_cast<long>(g.height());
  for (long y1 = 0; y1 < h; ++y1) {
    for (long x1 = 0; x1 < w; ++x1) {
      for (long y2 = 0; y2 < h; ++y2) {
        for (long x2 = 0; x2 < w; ++x2) {
          if (x2 - x1 != off.dcol || y2 - y1 != off.drow) continue;
          const int a = g.at(static_cast<std::size_t>(x1), static_cast<std::size_t>(y1));
          const int b = g.at(static_cast<std::size_t>(x2), static_cast<std::size_t>(y2));
          ++c[(a - 1) * 16 + (b - 1)];
          ++c[(b - 1) * 16 + (a - 1)];
        }
      }
    }
  }
  return c;
}

std::array<double, 6> naive_glcm_features(const std::array<std::uint64_t, 256>& c) {
  double total = 0;
  for (auto v : c) total += static_cast<double>(v);
  double con = 0, dis = 0, hom = 0, asm_ = 0, mi = 0, mj = 0;
  for (int i = 1; i <= 16; ++i) {
    for (int j = 1; j <= 16; ++j) {
      const double p = static_cast<double>(c[(i - 1) * 16 + (j - 1)]) / total;
      con += (i - j) * (i - j) * p;
      dis += std::abs(i - j) * p;
      hom += p / (1 + (i - j) * (i - j));
      asm_ += p * p;
      mi += i * p;
      mj += j * p;
    }
  }
  double vi = 0, vj = 0, cov = 0;
  for (int i = 1; i <= 16; ++i) {
    for (int j = 1; j <= 16; ++j) {
      const double p = static_cast<double>(c[(i - 1) * 16 + (j - 1)]) / total;
      vi += p * (i - mi) * (i - mi);
      vj += p * (j - mj) * (j - mj);
      cov += p * (i - mi) * (j - mj);
    }
  }
  const double corr = (vi > 0 && vj > 0) ? cov / std::sqrt(vi) / std::sqrt(vj) : 1.0;
  return {con, dis, hom, std::sqrt(asm_), asm_, corr};
}

// Enumerates every line along the orientation explicitly, then scans runs.
std::map<std::pair<int, std::size_t>, std::uint64_t> naive_runs(const QuantizedGrid& g, Orientation o) {
  const long w = static_cast<long>(g.width()), h = static_cast<long>(g.height());
  std::map<long, std::vector<std::pair<long, int>>> lines;  // line key -> (position along line, level)
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      long key = 0, pos = 0;
      switch (o) {
        case Orientation::Deg0: key = y, pos = x; break;
        case Orientation::Deg90: key = x, pos = -y; break;
        case Orientation::Deg45: key = x + y, pos = x; break;
        case Orientation::Deg135: key = x - y, pos = -x; break;
      }
      lines[key].push_back({pos, g.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y))});
    }
  }
  std::map<std::pair<int, std::size_t>, std::uint64_t> runs;
  for (auto& [key, cells] : lines) {
    std::sort(cells.begin(), cells.end());
    std::size_t i = 0;
    while (i < cells.size()) {
      std::size_t j = i;
      while (j + 1 < cells.size() && cells[j + 1].second == cells[i].second) ++j;
      ++runs[{cells[i].second, j - i + 1}];
      i = j + 1;
    }
  }
  return runs;
}

std::array<double, 11> naive_glrlm_features(const std::map<std::pair<int, std::size_t>, std::uint64_t>& runs,
                                            std::size_t pixels) {
  double nr = 0;
  for (const auto& [k, v] : runs) nr += static_cast<double>(v);
  std::array<double, 11> f{};
  std::map<int, double> by_level;
  std::map<std::size_t, double> by_length;
  for (const auto& [k, v] : runs) {
    const double g = k.first, l = static_cast<double>(k.second), n = static_cast<double>(v);
    f[0] += n / (l * l);
    f[1] += n * l * l;
    f[5] += n / (g * g);
    f[6] += n * g * g;
    f[7] += n / (g * g * l * l);
    f[8] += n * g * g / (l * l);
    f[9] += n * l * l / (g * g);
    f[10] += n * g * g * l * l;
    by_level[k.first] += n;
    by_length[k.second] += n;
  }
  for (const auto& [g, n] : by_level) f[2] += n * n;
  for (const auto& [l, n] : by_length) f[3] += n * n;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 7, 8, 9, 10}) f[i] /= nr;
  f[4] = nr / static_cast<double>(pixels);
  return f;
}

// Criteria ------------------------------------------------------------------

Outcome criterion1() {
  Outcome out;
  const auto& names = image_feature_names();
  auto count_prefix = [&](const std::string& p) {
    return std::count_if(names.begin(), names.end(), [&](const std::string& n) { return n.rfind(p, 0) == 0; });
  };
  out.check(names.size() == 231, "name count " + std::to_string(names.size()));
  out.check(count_prefix("glcm_") == 72, "GLCM names " + std::to_string(count_prefix("glcm_")));
  out.check(count_prefix("glrlm_") == 132, "GLRLM names " + std::to_string(count_prefix("glrlm_")));
  out.check(count_prefix("color_") == 27, "color names " + std::to_string(count_prefix("color_")));
  out.check(std::set<std::string>(names.begin(), names.end()).size() == names.size(), "names are unique");
  out.check(image_feature_names() == names, "names stable across calls");
  // Block order: GLCM, then GLRLM, then color.
  out.check(names[0].rfind("glcm_", 0) == 0 && names[72].rfind("glrlm_", 0) == 0 && names[204].rfind("color_", 0) == 0,
            "block order");

  double worst = 0;
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const auto img = random_image(256, 256, seed);
    const auto t0 = Clock::now();
    const auto v = extract_features(img, "s");
    worst = std::max(worst, seconds_since(t0));
    out.check(v.values.size() == 231, "vector length " + std::to_string(v.values.size()));
    out.check(std::all_of(v.values.begin(), v.values.end(), [](double x) { return std::isfinite(x); }),
              "finite values");
    out.check(extract_features(img, "s").values == v.values, "extraction repeatable");
  }
  out.check(worst < 1.0, "slowest 256x256 extraction " + fmt(worst) + " s");
  out.detail = "231 = 72/132/27, slowest 256x256 extraction " + fmt(worst, 3) + " s";
  return out;
}

Outcome criterion2() {
  Outcome out;
  Rng rng(2024);
  const auto t0 = Clock::now();
  std::size_t count_mismatch = 0, feature_mismatch = 0;
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t w = 2 + rng.index(15), h = 2 + rng.index(15);
    // Alternate full-range grids with few-level grids so long runs occur.
    const std::size_t levels = trial % 2 ? 16 : 1 + rng.index(4);
    const std::size_t base = rng.index(17 - levels);
    std::vector<std::uint8_t> cells(w * h);
    for (auto& c : cells) c = static_cast<std::uint8_t>(1 + base + rng.index(levels));
    const QuantizedGrid grid(w, h, cells);
    for (auto o : kOrientations) {
      const auto expected = naive_glcm(grid, o);
      if (glcm_counts(grid, o) != expected) ++count_mismatch;
      const auto f = glcm_features(compute_glcm(grid, o)).to_array();
      const auto fe = naive_glcm_features(expected);
      for (std::size_t i = 0; i < 6; ++i) {
        worst = std::max(worst, std::abs(f[i] - fe[i]) / std::max(1.0, std::abs(fe[i])));
        if (!close_rel(f[i], fe[i], 1e-12)) ++feature_mismatch;
      }

      const auto runs = naive_runs(grid, o);
      const auto r = compute_glrlm(grid, o);
      std::map<std::pair<int, std::size_t>, std::uint64_t> got;
      for (int g = 1; g <= 16; ++g) {
        for (std::size_t l = 1; l <= r.max_run; ++l) {
          if (r.at(g, l)) got[{g, l}] = r.at(g, l);
        }
      }
      if (got != runs) ++count_mismatch;
      const auto rf = glrlm_features(r).to_array();
      const auto rfe = naive_glrlm_features(runs, w * h);
      for (std::size_t i = 0; i < 11; ++i) {
        worst = std::max(worst, std::abs(rf[i] - rfe[i]) / std::max(1.0, std::abs(rfe[i])));
        if (!close_rel(rf[i], rfe[i], 1e-12)) ++feature_mismatch;
      }
    }
  }
  const double elapsed = seconds_since(t0);
  out.check(count_mismatch == 0, std::to_string(count_mismatch) + " count mismatches");
  out.check(feature_mismatch == 0, std::to_string(feature_mismatch) + " feature mismatches");
  out.check(elapsed < 10.0, "elapsed " + fmt(elapsed) + " s");
  out.detail = "1000 grids x 4 orientations, worst relative feature error " + fmt(worst, 3) + ", " + fmt(elapsed, 3) + " s";
  return out;
}

Outcome criterion3() {
  Outcome out;
  const auto& names = image_feature_names();
  auto feature = [&](const std::vector<double>& v, const std::string& name) {
    const auto it = std::find(names.begin(), names.end(), name);
    return v[static_cast<std::size_t>(it - names.begin())];
  };
  for (Rgb fill : {Rgb{128, 128, 128}, Rgb{0, 0, 0}, Rgb{255, 255, 255}, Rgb{170, 96, 40}}) {
    const auto v = extract_features(RgbImage(31, 17, fill)).values;
    for (std::size_t i = 0; i < names.size(); ++i) {
      const auto& n = names[i];
      auto ends = [&](const std::string& s) { return n.size() >= s.size() && n.compare(n.size() - s.size(), s.size(), s) == 0; };
      if (n.rfind("glcm_", 0) == 0) {
        if (ends("_contrast") || ends("_dissimilarity")) out.check(v[i] == 0.0, n + " not 0");
        if (ends("_ASM") || ends("_energy") || ends("_homogeneity") || ends("_correlation")) {
          out.check(v[i] == 1.0, n + " = " + fmt(v[i], 17) + ", expected 1");
        }
      }
      if (n.rfind("color_", 0) == 0 && ends("_sd")) out.check(v[i] == 0.0, n + " not 0");
    }
    // Constant W x H image: 0 degree runs are the H rows of length W; 90 degree runs the W columns.
    const double g = quantize_value(fill.r);
    out.check(close_rel(feature(v, "glrlm_R_0_SRE"), 1.0 / (31.0 * 31.0), 1e-15), "0 deg SRE");
    out.check(close_rel(feature(v, "glrlm_R_0_LRE"), 31.0 * 31.0, 1e-15), "0 deg LRE");
    out.check(close_rel(feature(v, "glrlm_R_0_RP"), 1.0 / 31.0, 1e-15), "0 deg RP");
    out.check(close_rel(feature(v, "glrlm_R_90_LRE"), 17.0 * 17.0, 1e-15), "90 deg LRE");
    out.check(close_rel(feature(v, "glrlm_R_0_LGRE"), 1.0 / (g * g), 1e-15), "LGRE");
    out.check(close_rel(feature(v, "glrlm_R_0_HGRE"), g * g, 1e-15), "HGRE");
  }
  // The listed 4x4 level-1 case.
  const auto flat = QuantizedGrid::from_rows({{1, 1, 1, 1}, {1, 1, 1, 1}, {1, 1, 1, 1}, {1, 1, 1, 1}});
  const auto r = compute_glrlm(flat, Orientation::Deg0);
  const auto rf = glrlm_features(r);
  out.check(r.at(1, 4) == 4 && r.total_runs == 4, "4x4 run matrix");
  out.check(rf.sre == 1.0 / 16 && rf.lre == 16 && rf.rp == 0.25 && rf.lgre == 1 && rf.hgre == 1, "4x4 run features");
  const auto cg = glcm_features(compute_glcm(flat, Orientation::Deg45));
  out.check(cg.contrast == 0 && cg.asm_ == 1 && cg.energy == 1 && cg.homogeneity == 1 && cg.correlation == 1,
            "constant GLCM features");

  // 90 degree rotation swaps the 0/90 and 45/135 orientation blocks.
  double worst = 0;
  for (std::uint64_t seed : {31u, 32u, 33u}) {
    const auto img = random_image(37, 23, seed);
    const auto a = extract_features(img).values;
    const auto b = extract_features(rotate90(img)).values;
    const std::array<std::size_t, 4> swap{2, 3, 0, 1};
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t o = 0; o < 4; ++o) {
        for (std::size_t k = 0; k < kGlcmFeatureCount; ++k) {
          const double d = std::abs(a[glcm_offset(c, o) + k] - b[glcm_offset(c, swap[o]) + k]);
          worst = std::max(worst, d);
          out.check(d <= 1e-12, "GLCM " + names[glcm_offset(c, o) + k] + " after rotation");
        }
        for (std::size_t k = 0; k < kGlrlmFeatureCount; ++k) {
          const double x = a[glrlm_offset(c, o) + k], y = b[glrlm_offset(c, swap[o]) + k];
          worst = std::max(worst, std::abs(x - y) / std::max(1.0, std::abs(x)));
          out.check(close_rel(y, x, 1e-12), "GLRLM " + names[glrlm_offset(c, o) + k] + " after rotation");
        }
      }
    }
  }
  out.detail = "degenerate values exact, rotation worst difference " + fmt(worst, 3);
  return out;
}

Outcome criterion4() {
  Outcome out;
  struct Row {
    Element e;
    std::array<double, 4> per_crm;
    double printed;
  };
  // Per-CRM factors and printed averages as listed for the 15 corrected elements.
  const std::vector<Row> rows{
      {Element::K, {1.01, 1.54, 0.91, 1.30}, 1.19},  {Element::Ca, {0.79, 1.25, 0.88, 1.34}, 1.06},
      {Element::Fe, {0.96, 1.26, 0.87, 1.19}, 1.07}, {Element::Mn, {0.92, 1.26, 0.59, 1.15}, 0.98},
      {Element::Rb, {0, 1.17, 0.27, 0}, 0.72},       {Element::Zn, {1.38, 1.28, 0.97, 1.16}, 1.20},
      {Element::Cu, {1.41, 1.29, 1.01, 1.15}, 1.22}, {Element::Cr, {0.87, 1.52, 0.36, 1.25}, 1.00},
      {Element::Ti, {1.03, 1.45, 3.25, 1.28}, 1.75}, {Element::Ni, {0, 0.48, 0.98, 0.63}, 0.60},
      {Element::Ag, {0, 0, 0.74, 0}, 0.74},          {Element::Ba, {0, 0.99, 1.16, 0.83}, 0.99},
      {Element::V, {0.80, 0.29, 0.47, 0.20}, 0.44},  {Element::Ga, {0, 0, 1.51, 1.72}, 1.62},
      {Element::Pb, {1.24, 1.16, 0.68, 0}, 1.03},
  };
  int matched = 0;
  std::string ni;
  for (const auto& r : rows) {
    const double acf = average_correction_factor(r.per_crm);
    // Oracle: mean over the strictly positive entries.
    double s = 0;
    int n = 0;
    for (double f : r.per_crm) {
      if (f > 0) s += f, ++n;
    }
    out.check(std::abs(acf - s / n) < 1e-12, std::string(name_of(r.e)) + " mean-of-nonzero");
    const bool within = std::abs(acf - r.printed) <= 0.01 + 1e-12;
    if (r.e == Element::Ni) {
      ni = fmt(acf, 4);
      out.check(!within, "Ni expected to mismatch the printed value");
      out.check(std::abs(acf - 0.6966666666666667) < 1e-9, "Ni computes to " + ni);
    } else {
      out.check(within, std::string(name_of(r.e)) + " " + fmt(acf, 4) + " vs printed " + fmt(r.printed, 3));
      matched += within;
    }
  }
  const auto table = default_correction_table();
  out.check(table.entry(Element::Ni)->acf == 0.60, "default table Ni ACF");
  for (const auto& r : rows) {
    out.check(table.covers(r.e) && table.entry(r.e)->acf == r.printed, std::string(name_of(r.e)) + " default ACF equals the printed value");
    out.check(table.covers(r.e) && table.entry(r.e)->correctable, std::string(name_of(r.e)) + " correctable");
  }
  for (auto e : {Element::Zr, Element::Sr, Element::Sn, Element::Sb}) {
    out.check(!table.covers(e) || !table.entry(e)->correctable, std::string(name_of(e)) + " passes through");
  }
  out.check(matched == 14, std::to_string(matched) + " of 14 matched");
  out.detail = std::to_string(matched) + "/14 within 0.01; Ni computes " + ni + " vs printed 0.60 (default ships 0.60)";
  return out;
}

Outcome criterion5() {
  Outcome out;
  Rng rng(5);
  double worst_identity = 0;
  std::size_t violations = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 2 + rng.index(40);
    std::vector<double> y(n), m(n);
    const double shift = rng.normal(0, 2), scale = rng.uniform(0.1, 3), noise = rng.uniform(0, 2);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.normal(0, 3);
      m[i] = shift + scale * y[i] + rng.normal(0, noise);
    }
    if (trial % 97 == 0) std::fill(m.begin(), m.end(), 1.5);  // constant predictions
    const double r = metrics::rmse(y, m), b = metrics::bias(y, m);
    double mean_res = 0, var_res = 0;
    for (std::size_t i = 0; i < n; ++i) mean_res += (y[i] - m[i]) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) var_res += (y[i] - m[i] - mean_res) * (y[i] - m[i] - mean_res);
    var_res /= static_cast<double>(n);
    const double err = std::abs(r * r - (b * b + var_res));
    worst_identity = std::max(worst_identity, err / std::max(1.0, r * r));
    const double rc = metrics::concordance(y, m), rho = metrics::pearson_or_zero(y, m);
    if (std::abs(rc) > std::abs(rho) + 1e-12) ++violations;
  }
  out.check(worst_identity <= 1e-12, "RMSE^2 identity error " + fmt(worst_identity));
  out.check(violations == 0, std::to_string(violations) + " series with |rho_c| > |rho|");

  using V = std::vector<double>;
  const V a{1, 2, 3}, b{2, 3, 4};
  out.check(std::abs(metrics::concordance(a, b) - 4.0 / 7.0) <= 1e-12, "concordance 4/7");
  out.check(metrics::rmse(a, a) == 0, "rmse y=m");
  out.check(std::abs(metrics::rmse(a, b) - 1) <= 1e-12, "rmse unit shift");
  out.check(std::abs(metrics::rmse(V{0, 0}, V{3, -4}) - std::sqrt(12.5)) <= 1e-12, "rmse (0,0) vs (3,-4)");
  out.check(metrics::bias(a, a) == 0, "bias y=m");
  out.check(std::abs(metrics::bias(a, b) + 1) <= 1e-12, "bias -1");
  out.check(metrics::bias(V{1, 1}, V{0, 2}) == 0, "antisymmetric residuals");
  out.check(std::abs(metrics::concordance(a, a) - 1) <= 1e-12, "concordance y=m");
  out.check(metrics::concordance(a, V{2, 2, 2}) == 0, "concordance constant m");
  out.detail = "10000 series, worst identity error " + fmt(worst_identity, 3) + ", rho_c((1,2,3),(2,3,4)) = " +
               fmt(metrics::concordance(a, b), 12);
  return out;
}

Outcome criterion6() {
  Outcome out;
  struct Case {
    const char* what;
    double candidate, baseline, expected;
  };
  // Candidate and baseline values as printed in the model comparison table.
  const std::vector<Case> quoted{
      {"S test R2, IFs vs PXRF", 0.33, 0.16, 106.25},
      {"SAI test R2, IFs vs PXRF", 0.41, 0.21, 95.24},
      {"S test RMSE, IFs vs PXRF", 10.554, 16.08, -34.37},
      {"SAI test RMSE, IFs vs PXRF", 3.861, 7.12, -45.77},
      {"S test R2, IFs+AVs+PXRF vs PXRF", 0.50, 0.16, 212.50},
      {"SAI test R2, IFs+AVs+PXRF vs PXRF", 0.70, 0.21, 233.33},
      {"Mn test R2, IFs+AVs+PXRF vs PXRF", 0.72, 0.42, 71.43},
      {"OC test RMSE, IFs+AVs vs IFs", 0.224, 0.552, -60.0},
      {"B test RMSE, IFs+AVs vs IFs", 0.296, 0.432, -32.0},
      {"SAI test RMSE, IFs+AVs vs IFs", 3.173, 3.861, -17.0},
  };
  std::string values;
  for (const auto& c : quoted) {
    const double got = metrics::relative_change(c.candidate, c.baseline);
    const bool ok = std::abs(got - c.expected) <= 0.25;
    values += (values.empty() ? "" : ", ") + fmt(got, 4);
    out.check(ok, std::string(c.what) + ": " + fmt(got, 6) + "% vs quoted " + fmt(c.expected, 5) + "%");
  }
  out.detail = "computed " + values;
  return out;
}

Outcome criterion7() {
  Outcome out;
  std::vector<std::string> ids;
  for (int i = 0; i < 1133; ++i) ids.push_back("id" + std::to_string(i));
  const auto plan = split_calibration_test(ids, 0.8, 99);
  out.check(plan.calibration_ids.size() == 907 && plan.test_ids.size() == 226,
            "split " + std::to_string(plan.calibration_ids.size()) + "/" + std::to_string(plan.test_ids.size()));
  std::set<std::string> all(plan.calibration_ids.begin(), plan.calibration_ids.end());
  all.insert(plan.test_ids.begin(), plan.test_ids.end());
  out.check(all.size() == 1133, "calibration and test are disjoint and exhaustive");

  const auto folds = kfold_indices(plan.calibration_ids, 5, 99);
  std::vector<std::size_t> sizes;
  std::set<std::string> in_folds;
  std::size_t total = 0;
  for (const auto& f : folds) {
    sizes.push_back(f.size());
    total += f.size();
    in_folds.insert(f.begin(), f.end());
  }
  const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
  out.check(*hi - *lo <= 1, "fold sizes differ by more than 1");
  out.check(total == 907 && in_folds == std::set<std::string>(plan.calibration_ids.begin(), plan.calibration_ids.end()),
            "folds partition calibration");

  const std::array<std::size_t, 6> counts{82, 102, 238, 210, 214, 287};
  std::vector<SoilSample> corpus;
  Rng rng(7);
  for (std::size_t z = 0; z < 6; ++z) {
    for (std::size_t i = 0; i < counts[z]; ++i) {
      SoilSample s;
      s.sample_id = std::string(kZoneNames[z]) + "_" + std::to_string(i);
      s.zone = kZones[z];
      corpus.push_back(s);
    }
  }
  rng.shuffle(std::span<SoilSample>(corpus));
  std::string got;
  for (const auto& h : zone_holdout_splits(corpus)) {
    const auto z = static_cast<std::size_t>(h.zone);
    out.check(h.test_ids.size() == counts[z] && h.train_ids.size() == 1133 - counts[z],
              std::string(name_of(h.zone)) + " holdout size");
    got += (got.empty() ? "" : ",") + std::to_string(h.test_ids.size());
  }
  out.detail = "907/226, folds " + std::to_string(*hi) + "/" + std::to_string(*lo) + ", holdout {" + got + "}";
  return out;
}

Outcome criterion8() {
  Outcome out;
  const auto t0 = Clock::now();
  Rng rng(8);
  // Constant target.
  {
    Matrix x(60, 4);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (auto& v : x.row(r)) v = rng.normal();
    }
    const std::vector<double> y(60, 2.75);
    ForestParams p;
    p.tree_count = 50;
    const auto f = train_forest(x, y, p);
    bool exact = true;
    for (std::size_t r = 0; r < x.rows(); ++r) exact = exact && f.predict(x.row(r)) == 2.75;
    Matrix probe(20, 4);
    for (std::size_t r = 0; r < probe.rows(); ++r) {
      for (auto& v : probe.row(r)) v = rng.normal(0, 10);
    }
    for (std::size_t r = 0; r < probe.rows(); ++r) exact = exact && f.predict(probe.row(r)) == 2.75;
    out.check(exact, "constant target predictions exact");
  }
  // Noiseless one-feature function, minLeafSize 1.
  double r2 = 0;
  {
    Matrix x(500, 6, 0.0);
    std::vector<double> y(500);
    for (std::size_t r = 0; r < 500; ++r) {
      x(r, 0) = rng.uniform(-5, 5);
      for (std::size_t c = 1; c < 6; ++c) x(r, c) = 3.0;
      y[r] = x(r, 0);
    }
    ForestParams p;
    p.min_leaf_size = 1;
    const auto f = train_forest(x, y, p);
    r2 = metrics::r_squared(y, f.predict(x));
    out.check(r2 >= 0.99, "training R2 " + fmt(r2));
  }
  // Bounded predictions and thread independence.
  {
    Matrix x(200, 12);
    std::vector<double> y(200);
    for (std::size_t r = 0; r < 200; ++r) {
      for (std::size_t c = 0; c < 12; ++c) x(r, c) = rng.normal();
      y[r] = std::sin(x(r, 0)) + x(r, 1) * x(r, 2) + rng.normal(0, 0.3);
    }
    const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
    Matrix probe(300, 12);
    for (std::size_t r = 0; r < probe.rows(); ++r) {
      for (auto& v : probe.row(r)) v = rng.normal(0, 4);
    }
    std::vector<std::vector<double>> preds;
    std::vector<RegressionForest> forests;
    for (std::size_t threads : {1u, 4u, 8u}) {
      ForestParams p;
      p.seed = 1234;
      p.threads = threads;
      forests.push_back(train_forest(x, y, p));
      preds.push_back(forests.back().predict(probe));
    }
    bool bounded = true;
    for (double v : preds[0]) bounded = bounded && v >= *ymin && v <= *ymax;
    out.check(bounded, "predictions within training target range");
    out.check(forests[0].trees() == forests[1].trees() && forests[0].trees() == forests[2].trees(),
              "trees identical across 1/4/8 workers");
    out.check(std::memcmp(preds[0].data(), preds[1].data(), preds[0].size() * sizeof(double)) == 0 &&
                  std::memcmp(preds[0].data(), preds[2].data(), preds[0].size() * sizeof(double)) == 0,
              "predictions bit-identical across 1/4/8 workers");
  }
  const double elapsed = seconds_since(t0);
  out.check(elapsed < 60, "elapsed " + fmt(elapsed) + " s");
  out.detail = "training R2 " + fmt(r2, 5) + ", bit-identical across 1/4/8 workers, " + fmt(elapsed, 3) + " s";
  return out;
}

Outcome criterion9() {
  Outcome out;
  Rng rng(9);
  const std::size_t n = 80, p = 5;
  Matrix x(n, p);
  for (std::size_t r = 0; r < n; ++r) {
    const double a = rng.normal(), b = rng.normal();
    x(r, 0) = a;
    x(r, 1) = 2 * a + 0.3 * rng.normal();
    x(r, 2) = b + 10;
    x(r, 3) = a - b + 0.5 * rng.normal();
    x(r, 4) = 100 * rng.normal();
  }
  double worst_gram = 0, worst_cov = 0, worst_sum = 0;
  for (bool scale : {false, true}) {
    const auto res = metrics::pca(x, scale);
    const std::size_t k = res.variances.size();
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) {
        double dot = 0;
        for (std::size_t v = 0; v < p; ++v) dot += res.loadings(v, a) * res.loadings(v, b);
        worst_gram = std::max(worst_gram, std::abs(dot - (a == b ? 1.0 : 0.0)));
      }
    }
    // Sample covariance of the processed matrix against the eigen reconstruction.
    std::vector<double> mean(p, 0), sd(p, 0);
    for (std::size_t c = 0; c < p; ++c) {
      for (std::size_t r = 0; r < n; ++r) mean[c] += x(r, c) / n;
      for (std::size_t r = 0; r < n; ++r) sd[c] += (x(r, c) - mean[c]) * (x(r, c) - mean[c]) / (n - 1);
      sd[c] = scale ? std::sqrt(sd[c]) : 1.0;
    }
    for (std::size_t a = 0; a < p; ++a) {
      for (std::size_t b = 0; b < p; ++b) {
        double cov = 0;
        for (std::size_t r = 0; r < n; ++r) cov += (x(r, a) - mean[a]) / sd[a] * (x(r, b) - mean[b]) / sd[b];
        cov /= static_cast<double>(n - 1);
        double rec = 0;
        for (std::size_t c = 0; c < k; ++c) rec += res.loadings(a, c) * res.variances[c] * res.loadings(b, c);
        worst_cov = std::max(worst_cov, std::abs(rec - cov) / std::max(1.0, std::abs(cov)));
      }
    }
    const double sum = std::accumulate(res.variance_explained.begin(), res.variance_explained.end(), 0.0);
    worst_sum = std::max(worst_sum, std::abs(sum - 100.0));
  }
  out.check(worst_gram <= 1e-8, "loadings orthonormal, error " + fmt(worst_gram));
  out.check(worst_cov <= 1e-8, "covariance reconstruction error " + fmt(worst_cov));
  out.check(worst_sum <= 1e-6, "variance percentages sum error " + fmt(worst_sum));

  Matrix line(30, 2);
  for (std::size_t r = 0; r < 30; ++r) {
    line(r, 0) = rng.normal();
    line(r, 1) = 2 * line(r, 0);
  }
  const double pc1 = metrics::pca(line, false).variance_explained[0];
  out.check(std::abs(pc1 - 100.0) <= 1e-9, "rank-1 PC1 " + fmt(pc1, 15));

  const std::vector<std::string> pm_vocab(kParentMaterialNames.begin(), kParentMaterialNames.end());
  const std::vector<std::string> order_vocab(kSoilOrderNames.begin(), kSoilOrderNames.end());
  const auto pm = metrics::filmer_pritchett_encode(pm_vocab, pm_vocab, metrics::DummyMode::DropFirst);
  const auto so = metrics::filmer_pritchett_encode(order_vocab, order_vocab, metrics::DummyMode::Full);
  out.check(pm.cols() == 4, "parent material dummies " + std::to_string(pm.cols()));
  out.check(so.cols() == 3, "soil order dummies " + std::to_string(so.cols()));
  out.detail = "gram error " + fmt(worst_gram, 3) + ", covariance error " + fmt(worst_cov, 3) + ", PC1 rank-1 " +
               fmt(pc1, 12) + "%, dummies 4/3";
  return out;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_command(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("soilfusion_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Outcome criterion10() {
  Outcome out;
  const auto dir = scratch_dir("e2e");
  const std::string cli = SOILFUSION_CLI;
  const auto corpus = dir / "corpus";
  {
    std::ofstream spec(dir / "spec.conf");
    spec << "sample_count = 200\nreplicates = 3\nimage_size = 256\nseed = 42\n";
  }
  const auto t0 = Clock::now();
  int rc = run_command(cli + " synth --spec " + (dir / "spec.conf").string() + " --out-dir " + corpus.string());
  out.check(rc == 0, "synth exit " + std::to_string(rc));
  const double synth_s = seconds_since(t0);
  {
    std::ofstream conf(dir / "pipeline.conf");
    conf << "images = corpus/images\nsamples = corpus/samples.csv\npxrf = corpus/pxrf.csv\n";
  }
  const auto t1 = Clock::now();
  rc = run_command(cli + " run --config " + (dir / "pipeline.conf").string() + " --out-dir " + (dir / "a").string());
  out.check(rc == 0, "first run exit " + std::to_string(rc));
  const double run_s = seconds_since(t1);
  rc = run_command(cli + " run --config " + (dir / "pipeline.conf").string() + " --out-dir " + (dir / "b").string());
  out.check(rc == 0, "second run exit " + std::to_string(rc));
  const double total = synth_s + run_s;
  out.check(total < 300, "synth + run took " + fmt(total) + " s");

  const auto a = read_bytes(dir / "a" / "report.json");
  const auto b = read_bytes(dir / "b" / "report.json");
  out.check(!a.empty() && a == b, "report.json byte-identical on rerun");
  double ifs = -1, full = -1;
  std::size_t bundles = 0;
  if (!a.empty()) {
    const auto j = nlohmann::json::parse(a);
    for (const auto& [t, per] : j["metrics"].items()) bundles += per.size();
    const auto& oc = j["metrics"]["OC"];
    ifs = oc["IFS"]["test"]["r2"].get<double>();
    full = oc["IFS_AVS_PXRF"]["test"]["r2"].get<double>();
  }
  out.check(bundles == 20, std::to_string(bundles) + " metric bundles");
  out.check(ifs >= 0.90, "OC IFS test R2 " + fmt(ifs));
  out.check(full >= ifs - 0.02, "OC IFS_AVS_PXRF test R2 " + fmt(full) + " vs IFS " + fmt(ifs));
  out.detail = "OC test R2 IFS " + fmt(ifs, 4) + ", IFS_AVS_PXRF " + fmt(full, 4) + ", synth " + fmt(synth_s, 3) +
               " s + run " + fmt(run_s, 3) + " s, rerun identical";
  if (out.pass) fs::remove_all(dir);
  return out;
}

bool is_r_l_v_color(const std::string& name) {
  return name.rfind("color_RGB_R_", 0) == 0 || name.rfind("color_Lab_L_", 0) == 0 ||
         name.rfind("color_HSV_V_", 0) == 0;
}

Outcome criterion11() {
  Outcome out;
  int votes = 0;
  std::string ranks;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    synth::CorpusSpec spec;
    spec.seed = seed;
    spec.image_width = spec.image_height = 128;
    // OC is the rule that depends on mean R only.
    const auto zones = synth::assign_zones(spec);
    std::vector<ImageFeatureVector> rows(spec.sample_count);
    std::vector<double> y(spec.sample_count);
    parallel_for(spec.sample_count, default_thread_count(), [&](std::size_t i) {
      const auto g = synth::generate_sample(spec, i, zones[i]);
      std::vector<ImageFeatureVector> reps;
      for (const auto& img : g.images) reps.push_back(extract_features(img, g.sample.sample_id));
      rows[i] = aggregate_replicates(reps);
      y[i] = *g.sample[Target::OC];
    });
    Matrix x(0, kImageFeatureCount);
    for (const auto& r : rows) x.append_row(r.values);
    ForestParams p;
    p.seed = seed;
    const auto forest = train_forest(x, y, p, image_feature_names());
    const auto report = variable_importance(forest, x, y, seed);
    std::size_t best = report.ranking.size();
    for (std::size_t i = 0; i < report.ranking.size(); ++i) {
      if (is_r_l_v_color(report.ranking[i].feature)) {
        best = i + 1;
        break;
      }
    }
    votes += best <= 5;
    ranks += (ranks.empty() ? "" : ",") + std::to_string(best);
  }
  out.check(votes >= 6, std::to_string(votes) + "/10 seeds with an R/L*/V color feature in the top 5");
  out.detail = std::to_string(votes) + "/10 seeds; best color rank per seed {" + ranks + "}";
  return out;
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "feature census", criterion1},
      {2, "texture oracle equivalence", criterion2},
      {3, "closed-form texture cases", criterion3},
      {4, "ACF reproduction", criterion4},
      {5, "metric identities", criterion5},
      {6, "relative-change arithmetic", criterion6},
      {7, "split protocol", criterion7},
      {8, "forest properties", criterion8},
      {9, "PCA properties", criterion9},
      {10, "end-to-end synthetic run", criterion10},
      {11, "variable-importance sanity", criterion11},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.failures.push_back(std::string("exception: ") + e.what());
    }
    std::printf("%s criterion %d: %s", o.pass ? "PASS" : "FAIL", c.id, c.title);
    if (!o.detail.empty()) std::printf(" (%s)", o.detail.c_str());
    std::printf("\n");
    for (std::size_t i = 0; i < o.failures.size() && i < 10; ++i) std::printf("    - %s\n", o.failures[i].c_str());
    if (o.failures.size() > 10) std::printf("    - ... %zu more\n", o.failures.size() - 10);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
