#pragma once

// Agreement metrics, descriptive statistics, relative change, dummy coding
// and principal component analysis.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "soilfusion/error.hpp"
#include "soilfusion/matrix.hpp"

namespace soilfusion::metrics {

namespace detail {

inline void check_pair(std::span<const double> y, std::span<const double> m, std::size_t min_n = 1) {
  if (y.size() != m.size()) {
    throw Error(ErrorKind::LengthMismatch,
                "series lengths differ: " + std::to_string(y.size()) + " vs " + std::to_string(m.size()));
  }
  if (y.empty()) throw Error(ErrorKind::EmptyInput, "empty series");
  if (y.size() < min_n) {
    throw Error(ErrorKind::TooFewSamples, "need at least " + std::to_string(min_n) + " values");
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i]) || !std::isfinite(m[i])) throw Error(ErrorKind::NonFiniteInput, "non-finite value");
  }
}

inline double mean(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Population (1/n) variance about `mu`.
inline double pop_var(std::span<const double> v, double mu) {
  double s = 0;
  for (double x : v) s += (x - mu) * (x - mu);
  return s / static_cast<double>(v.size());
}

}  // namespace detail

inline double rmse(std::span<const double> y, std::span<const double> m) {
  detail::check_pair(y, m);
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - m[i]) * (y[i] - m[i]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

/// Mean of (measured - predicted).
inline double bias(std::span<const double> y, std::span<const double> m) {
  detail::check_pair(y, m);
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] - m[i];
  return s / static_cast<double>(y.size());
}

/// Pearson correlation with population moments; 0 if either series is constant.
inline double pearson_or_zero(std::span<const double> y, std::span<const double> m) {
  const double my = detail::mean(y), mm = detail::mean(m);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sxy += (y[i] - my) * (m[i] - mm);
    sxx += (y[i] - my) * (y[i] - my);
    syy += (m[i] - mm) * (m[i] - mm);
  }
  if (sxx <= 0 || syy <= 0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Lin's concordance correlation coefficient with population moments. Written
/// as 2*cov / (var_y + var_m + (mu_y - mu_m)^2), which equals the
/// 2*rho*sigma_y*sigma_m form.
inline double concordance(std::span<const double> y, std::span<const double> m) {
  detail::check_pair(y, m, 2);
  const double my = detail::mean(y), mm = detail::mean(m);
  const double vy = detail::pop_var(y, my), vm = detail::pop_var(m, mm);
  if (vy <= 0 || vm <= 0) return 0.0;
  double cov = 0;
  for (std::size_t i = 0; i < y.size(); ++i) cov += (y[i] - my) * (m[i] - mm);
  cov /= static_cast<double>(y.size());
  return 2.0 * cov / (vy + vm + (my - mm) * (my - mm));
}

/// 1 - SS_res / SS_tot.
inline double r_squared(std::span<const double> y, std::span<const double> m) {
  detail::check_pair(y, m, 2);
  const double my = detail::mean(y);
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - m[i]) * (y[i] - m[i]);
    ss_tot += (y[i] - my) * (y[i] - my);
  }
  if (ss_tot <= 0) throw Error(ErrorKind::ConstantTruth, "R^2 undefined for constant measured values");
  return 1.0 - ss_res / ss_tot;
}

inline double residual_correlation(std::span<const double> residuals, std::span<const double> reference) {
  detail::check_pair(residuals, reference, 2);
  const double r = pearson_or_zero(residuals, reference);
  const double mr = detail::mean(residuals), mf = detail::mean(reference);
  if (detail::pop_var(residuals, mr) <= 0 || detail::pop_var(reference, mf) <= 0) {
    throw Error(ErrorKind::ZeroVariance, "correlation undefined for a constant series");
  }
  return r;
}

/// 100 * (candidate - baseline) / baseline.
inline double relative_change(double candidate, double baseline) {
  if (baseline == 0) throw Error(ErrorKind::ZeroBaseline, "relative change against a zero baseline");
  return 100.0 * (candidate - baseline) / baseline;
}

struct DescriptiveStats {
  double min = 0, max = 0, mean = 0, sd = 0;
  std::optional<double> skewness;  // adjusted Fisher-Pearson G1, n >= 3
  std::optional<double> kurtosis;  // sample-corrected excess G2, n >= 4
  double cv = 0;                   // percent
};

/// Sample (n-1) SD; shape statistics are bias-corrected and present only when
/// n is large enough for their correction factors.
inline DescriptiveStats descriptive_stats(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n < 2) throw Error(ErrorKind::TooFewSamples, "descriptive statistics need n >= 2, got " + std::to_string(n));
  detail::check_pair(v, v);
  DescriptiveStats s;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  s.mean = detail::mean(v);
  double m2 = 0, m3 = 0, m4 = 0;
  for (double x : v) {
    const double d = x - s.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  const double dn = static_cast<double>(n);
  s.sd = std::sqrt(m2 / (dn - 1));
  m2 /= dn;
  m3 /= dn;
  m4 /= dn;
  if (n >= 3) {
    if (m2 <= 0) throw Error(ErrorKind::ZeroVariance, "shape statistics undefined for constant data");
    const double g1 = m3 / std::pow(m2, 1.5);
    s.skewness = std::sqrt(dn * (dn - 1)) / (dn - 2) * g1;
    if (n >= 4) {
      const double g2 = m4 / (m2 * m2) - 3.0;
      s.kurtosis = (dn - 1) / ((dn - 2) * (dn - 3)) * ((dn + 1) * g2 + 6.0);
    }
  }
  if (s.mean == 0) throw Error(ErrorKind::ZeroMean, "coefficient of variation undefined for zero mean");
  s.cv = 100.0 * s.sd / s.mean;
  return s;
}

enum class DummyMode { DropFirst, Full };

/// 0/1 indicator columns over `vocabulary` (canonical order). Result is
/// values.size() x (k or k-1).
inline Matrix filmer_pritchett_encode(std::span<const std::string> values, std::span<const std::string> vocabulary,
                                      DummyMode mode) {
  if (vocabulary.empty()) throw Error(ErrorKind::UnknownCategory, "empty category vocabulary");
  const std::size_t skip = mode == DummyMode::DropFirst ? 1 : 0;
  Matrix out(values.size(), vocabulary.size() - skip, 0.0);
  for (std::size_t r = 0; r < values.size(); ++r) {
    auto it = std::find(vocabulary.begin(), vocabulary.end(), values[r]);
    if (it == vocabulary.end()) throw Error(ErrorKind::UnknownCategory, "unknown category '" + values[r] + "'");
    const auto k = static_cast<std::size_t>(it - vocabulary.begin());
    if (k >= skip) out(r, k - skip) = 1.0;
  }
  return out;
}

struct PcaResult {
  Matrix scores;    // rows x components
  Matrix loadings;  // variables x components
  std::vector<double> variances;           // eigenvalues of the covariance
  std::vector<double> variance_explained;  // percent
};

/// Centers (and optionally scales) the columns, then takes a thin SVD of the
/// processed matrix. Each loading column is signed so that its largest
/// magnitude entry is positive.
inline PcaResult pca(const Matrix& x, bool scale) {
  const std::size_t n = x.rows(), p = x.cols();
  if (n < 2 || p < 1) throw Error(ErrorKind::DegenerateInput, "PCA needs at least 2 rows and 1 column");
  Eigen::MatrixXd a(n, p);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < p; ++c) {
      if (!std::isfinite(x(r, c))) throw Error(ErrorKind::NonFiniteInput, "non-finite value in PCA input");
      a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = x(r, c);
    }
  }
  const Eigen::RowVectorXd mu = a.colwise().mean();
  a.rowwise() -= mu;
  if (scale) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      const double sd = std::sqrt(a.col(c).squaredNorm() / static_cast<double>(n - 1));
      if (!(sd > 0)) {
        throw Error(ErrorKind::ZeroVarianceColumn, "column " + std::to_string(c) + " has zero variance");
      }
      a.col(c) /= sd;
    }
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd sv = svd.singularValues();
  Eigen::MatrixXd v = svd.matrixV();
  const auto k = static_cast<std::size_t>(sv.size());
  double total = 0;
  PcaResult out;
  out.variances.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    out.variances[i] = sv(static_cast<Eigen::Index>(i)) * sv(static_cast<Eigen::Index>(i)) / static_cast<double>(n - 1);
    total += out.variances[i];
  }
  if (!(total > 0)) throw Error(ErrorKind::DegenerateInput, "PCA input has zero total variance");
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    Eigen::Index imax = 0;
    v.col(c).cwiseAbs().maxCoeff(&imax);
    if (v(imax, c) < 0) v.col(c) *= -1.0;
  }
  const Eigen::MatrixXd scores = a * v;
  out.variance_explained.resize(k);
  for (std::size_t i = 0; i < k; ++i) out.variance_explained[i] = 100.0 * out.variances[i] / total;
  out.loadings = Matrix(p, k);
  out.scores = Matrix(n, k);
  for (std::size_t c = 0; c < k; ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    for (std::size_t r = 0; r < p; ++r) out.loadings(r, c) = v(static_cast<Eigen::Index>(r), ci);
    for (std::size_t r = 0; r < n; ++r) out.scores(r, c) = scores(static_cast<Eigen::Index>(r), ci);
  }
  return out;
}

}  // namespace soilfusion::metrics
