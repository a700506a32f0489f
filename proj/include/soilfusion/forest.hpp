#pragma once

// Bagged regression forest: variance-reduction trees on bootstrap resamples,
// pooled k-fold predictions, and out-of-bag permutation importance.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "soilfusion/error.hpp"
#include "soilfusion/matrix.hpp"
#include "soilfusion/parallel.hpp"
#include "soilfusion/rng.hpp"

namespace soilfusion {

struct ForestParams {
  std::size_t tree_count = 300;
  std::size_t min_leaf_size = 8;
  std::size_t features_per_split = 0;  // 0 selects ceil(p / 3)
  bool bootstrap = true;
  std::uint64_t seed = 1;
  std::size_t threads = 0;  // 0 selects default_thread_count(); never affects results

  std::size_t resolved_features_per_split(std::size_t p) const {
    const std::size_t m = features_per_split == 0 ? (p + 2) / 3 : features_per_split;
    return std::clamp<std::size_t>(m, 1, std::max<std::size_t>(p, 1));
  }
};

struct TreeNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0;  // leaf mean
  std::uint32_t count = 0;

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  /// x[feature] <= threshold goes left.
  double predict(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
      const auto& n = nodes_[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes_[i].value;
  }

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;

 private:
  std::vector<TreeNode> nodes_;
};

namespace detail {

/// Grows one tree over `rows` (indices into x/y, possibly repeated).
class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, std::span<const double> y, std::size_t min_leaf, std::size_t mtry, Rng& rng)
      : x_(x), y_(y), min_leaf_(min_leaf), mtry_(mtry), rng_(rng) {
    features_.resize(x.cols());
    std::iota(features_.begin(), features_.end(), 0);
  }

  RegressionTree build(std::vector<std::size_t> rows) {
    rows_ = std::move(rows);
    scratch_.resize(rows_.size());
    grow(0, rows_.size());
    return RegressionTree(std::move(nodes_));
  }

 private:
  struct Split {
    bool found = false;
    double gain = 0;
    std::size_t feature = 0;
    double threshold = 0;
  };

  // Returns the node index.
  std::int32_t grow(std::size_t begin, std::size_t end) {
    const auto index = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    const std::size_t n = end - begin;
    double sum = 0;
    bool pure = true;
    const double y0 = y_[rows_[begin]];
    for (std::size_t i = begin; i < end; ++i) {
      const double v = y_[rows_[i]];
      sum += v;
      pure = pure && v == y0;
    }
    nodes_[index].value = pure ? y0 : sum / static_cast<double>(n);
    nodes_[index].count = static_cast<std::uint32_t>(n);
    if (pure || n < 2 * min_leaf_) return index;

    const Split split = best_split(begin, end, sum);
    if (!split.found) return index;

    // Stable partition keeps the row order, and with it every later draw, reproducible.
    std::size_t nl = 0, nr = 0;
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t r = rows_[i];
      if (x_(r, split.feature) <= split.threshold) {
        rows_[begin + nl++] = r;
      } else {
        scratch_[nr++] = r;
      }
    }
    std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(nr),
              rows_.begin() + static_cast<std::ptrdiff_t>(begin + nl));

    nodes_[index].feature = static_cast<int>(split.feature);
    nodes_[index].threshold = split.threshold;
    const auto left = grow(begin, begin + nl);
    const auto right = grow(begin + nl, end);
    nodes_[index].left = left;
    nodes_[index].right = right;
    return index;
  }

  // Visits features in a random order. A feature that is constant within the
  // node does not count toward the mtry quota.
  Split best_split(std::size_t begin, std::size_t end, double total) {
    const std::size_t n = end - begin;
    const std::size_t p = features_.size();
    Split best;
    std::size_t evaluated = 0;
    pairs_.resize(n);
    for (std::size_t k = 0; k < p && evaluated < mtry_; ++k) {
      // Partial Fisher-Yates: draw the next feature without replacement.
      std::swap(features_[k], features_[k + rng_.index(p - k)]);
      const std::size_t f = features_[k];
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = rows_[begin + i];
        pairs_[i] = {x_(r, f), y_[r]};
      }
      std::sort(pairs_.begin(), pairs_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      if (pairs_.front().first == pairs_.back().first) continue;
      ++evaluated;

      double left_sum = 0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left_sum += pairs_[i].second;
        const std::size_t nl = i + 1;
        if (pairs_[i].first == pairs_[i + 1].first) continue;
        if (nl < min_leaf_ || n - nl < min_leaf_) continue;
        const double right_sum = total - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(nl) +
                            right_sum * right_sum / static_cast<double>(n - nl) -
                            total * total / static_cast<double>(n);
        const double a = pairs_[i].first, b = pairs_[i + 1].first;
        double t = a + (b - a) / 2.0;
        if (!(t < b)) t = a;
        if (better(gain, f, t, best)) best = {true, gain, f, t};
      }
    }
    if (best.found && !(best.gain > 0)) best.found = false;
    return best;
  }

  static bool better(double gain, std::size_t f, double t, const Split& best) {
    if (!best.found || gain > best.gain) return true;
    if (gain < best.gain) return false;
    if (f != best.feature) return f < best.feature;
    return t < best.threshold;
  }

  const Matrix& x_;
  std::span<const double> y_;
  std::size_t min_leaf_;
  std::size_t mtry_;
  Rng& rng_;
  std::vector<std::size_t> features_;
  std::vector<std::size_t> rows_;
  std::vector<std::size_t> scratch_;
  std::vector<std::pair<double, double>> pairs_;
  std::vector<TreeNode> nodes_;
};

/// Row permutation that sorts rows lexicographically by (x, y); training
/// draws index this canonical order so the input row order is irrelevant.
inline std::vector<std::size_t> canonical_row_order(const Matrix& x, std::span<const double> y) {
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = x.row(a), rb = x.row(b);
    for (std::size_t c = 0; c < ra.size(); ++c) {
      if (ra[c] != rb[c]) return ra[c] < rb[c];
    }
    return y[a] < y[b];
  });
  return order;
}

}  // namespace detail

class RegressionForest {
 public:
  RegressionForest() = default;
  RegressionForest(std::vector<RegressionTree> trees, ForestParams params, std::vector<std::string> column_names,
                   std::vector<std::vector<std::size_t>> oob, std::size_t training_rows)
      : trees_(std::move(trees)),
        params_(params),
        column_names_(std::move(column_names)),
        oob_(std::move(oob)),
        training_rows_(training_rows) {}

  double predict(std::span<const double> x) const {
    if (x.size() != column_names_.size()) {
      throw Error(ErrorKind::DimensionMismatch, "expected " + std::to_string(column_names_.size()) +
                                                    " predictors, got " + std::to_string(x.size()));
    }
    // Running mean: a forest whose trees all agree returns that value exactly.
    double mean = 0, k = 0;
    for (const auto& t : trees_) {
      k += 1.0;
      mean += (t.predict(x) - mean) / k;
    }
    return mean;
  }

  std::vector<double> predict(const Matrix& x) const {
    if (x.cols() != column_names_.size()) {
      throw Error(ErrorKind::DimensionMismatch, "expected " + std::to_string(column_names_.size()) +
                                                    " predictors, got " + std::to_string(x.cols()));
    }
    std::vector<double> out(x.rows());
    const std::size_t threads = params_.threads ? params_.threads : default_thread_count();
    parallel_for(x.rows(), threads, [&](std::size_t r) { out[r] = predict(x.row(r)); });
    return out;
  }

  const std::vector<RegressionTree>& trees() const noexcept { return trees_; }
  const ForestParams& params() const noexcept { return params_; }
  const std::vector<std::string>& column_names() const noexcept { return column_names_; }
  /// Out-of-bag rows per tree, as indices into the training matrix.
  const std::vector<std::vector<std::size_t>>& oob_indices() const noexcept { return oob_; }
  std::size_t training_rows() const noexcept { return training_rows_; }

  friend bool operator==(const RegressionForest& a, const RegressionForest& b) {
    return a.trees_ == b.trees_ && a.column_names_ == b.column_names_ && a.oob_ == b.oob_ &&
           a.training_rows_ == b.training_rows_;
  }

 private:
  std::vector<RegressionTree> trees_;
  ForestParams params_;
  std::vector<std::string> column_names_;
  std::vector<std::vector<std::size_t>> oob_;
  std::size_t training_rows_ = 0;
};

inline RegressionForest train_forest(const Matrix& x, std::span<const double> y, const ForestParams& params,
                                     std::vector<std::string> column_names = {}) {
  const std::size_t n = x.rows(), p = x.cols();
  if (n == 0 || p == 0) throw Error(ErrorKind::TooFewSamples, "empty training matrix");
  if (y.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "target length " + std::to_string(y.size()) + " vs " +
                                                  std::to_string(n) + " rows");
  }
  if (params.tree_count < 1) throw Error(ErrorKind::InvalidSpec, "tree count must be >= 1");
  if (params.min_leaf_size < 1) throw Error(ErrorKind::InvalidSpec, "minimum leaf size must be >= 1");
  if (params.features_per_split > p) throw Error(ErrorKind::InvalidSpec, "features per split exceeds predictors");
  // n in [minLeaf, 2 minLeaf) yields single-leaf trees (bootstrap means).
  if (n < params.min_leaf_size) {
    throw Error(ErrorKind::TooFewSamples, std::to_string(n) + " rows < minimum leaf size " +
                                              std::to_string(params.min_leaf_size));
  }
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteInput, "non-finite predictor value");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteInput, "non-finite target value");
  }
  if (column_names.empty()) {
    for (std::size_t c = 0; c < p; ++c) column_names.push_back("x" + std::to_string(c + 1));
  }
  if (column_names.size() != p) throw Error(ErrorKind::DimensionMismatch, "column name count mismatch");

  const auto canonical = detail::canonical_row_order(x, y);
  const std::size_t mtry = params.resolved_features_per_split(p);
  std::vector<RegressionTree> trees(params.tree_count);
  std::vector<std::vector<std::size_t>> oob(params.tree_count);
  const std::size_t threads = params.threads ? params.threads : default_thread_count();

  parallel_for(params.tree_count, threads, [&](std::size_t t) {
    Rng rng(derive_seed(params.seed, {t}));
    std::vector<std::size_t> rows(n);
    std::vector<char> drawn(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = params.bootstrap ? rng.index(n) : i;
      rows[i] = canonical[k];
      drawn[k] = 1;
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (!drawn[k]) oob[t].push_back(canonical[k]);
    }
    std::sort(oob[t].begin(), oob[t].end());
    detail::TreeBuilder builder(x, y, params.min_leaf_size, mtry, rng);
    trees[t] = builder.build(std::move(rows));
  });
  return RegressionForest(std::move(trees), params, std::move(column_names), std::move(oob), n);
}

/// Pooled out-of-fold predictions. Each fold's forest is seeded from the
/// fold's smallest row index, so listing the folds in another order changes nothing.
inline std::vector<double> cross_validate(const Matrix& x, std::span<const double> y, const ForestParams& params,
                                          const std::vector<std::vector<std::size_t>>& folds) {
  std::vector<int> owner(x.rows(), -1);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (folds[f].empty()) throw Error(ErrorKind::TooFewSamples, "empty fold");
    for (auto r : folds[f]) {
      if (r >= x.rows() || owner[r] != -1) throw Error(ErrorKind::InvalidSpec, "folds do not partition the rows");
      owner[r] = static_cast<int>(f);
    }
  }
  if (std::find(owner.begin(), owner.end(), -1) != owner.end()) {
    throw Error(ErrorKind::InvalidSpec, "folds do not cover every row");
  }
  std::vector<double> out(x.rows(), 0.0);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<std::size_t> train;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      if (owner[r] != static_cast<int>(f)) train.push_back(r);
    }
    const Matrix xt = x.select_rows(train);
    const auto yt = select(y, std::span<const std::size_t>(train));
    ForestParams fp = params;
    fp.seed = derive_seed(params.seed, {0xF01Dull, *std::min_element(folds[f].begin(), folds[f].end())});
    const auto forest = train_forest(xt, yt, fp);
    for (auto r : folds[f]) out[r] = forest.predict(x.row(r));
  }
  return out;
}

struct ImportanceEntry {
  std::string feature;
  std::size_t column = 0;
  double score = 0;
};

struct ImportanceReport {
  std::vector<double> scores;           // by column
  std::vector<ImportanceEntry> ranking;  // descending score, ties by column
};

/// Mean over trees of the increase in out-of-bag MSE when one column is
/// permuted among that tree's OOB rows. Columns a tree never splits on add 0.
inline ImportanceReport variable_importance(const RegressionForest& forest, const Matrix& x, std::span<const double> y,
                                            std::uint64_t seed) {
  const std::size_t p = forest.column_names().size();
  if (x.cols() != p || x.rows() != forest.training_rows() || y.size() != x.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "importance requires the training matrix");
  }
  const auto& oob = forest.oob_indices();
  const auto& trees = forest.trees();
  std::vector<std::vector<double>> per_tree(trees.size(), std::vector<double>(p, 0.0));
  std::vector<char> usable(trees.size(), 0);
  const std::size_t threads = forest.params().threads ? forest.params().threads : default_thread_count();

  parallel_for(trees.size(), threads, [&](std::size_t t) {
    const auto& rows = oob[t];
    if (rows.empty()) return;
    usable[t] = 1;
    const auto& tree = trees[t];
    std::vector<char> used(p, 0);
    for (const auto& node : tree.nodes()) {
      if (!node.is_leaf()) used[static_cast<std::size_t>(node.feature)] = 1;
    }
    double base = 0;
    for (auto r : rows) {
      const double e = y[r] - tree.predict(x.row(r));
      base += e * e;
    }
    base /= static_cast<double>(rows.size());
    std::vector<double> buffer(p);
    std::vector<std::size_t> perm(rows.size());
    for (std::size_t f = 0; f < p; ++f) {
      if (!used[f]) continue;
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng(derive_seed(seed, {t, f}));
      rng.shuffle(std::span<std::size_t>(perm));
      double mse = 0;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = x.row(rows[i]);
        std::copy(src.begin(), src.end(), buffer.begin());
        buffer[f] = x(rows[perm[i]], f);
        const double e = y[rows[i]] - tree.predict(buffer);
        mse += e * e;
      }
      per_tree[t][f] = mse / static_cast<double>(rows.size()) - base;
    }
  });

  const auto count = static_cast<std::size_t>(std::count(usable.begin(), usable.end(), 1));
  if (count == 0) throw Error(ErrorKind::NoOobRows, "no out-of-bag rows (bootstrap disabled?)");
  ImportanceReport report;
  report.scores.assign(p, 0.0);
  for (std::size_t t = 0; t < trees.size(); ++t) {
    if (!usable[t]) continue;
    for (std::size_t f = 0; f < p; ++f) report.scores[f] += per_tree[t][f];
  }
  for (auto& s : report.scores) s /= static_cast<double>(count);
  for (std::size_t f = 0; f < p; ++f) report.ranking.push_back({forest.column_names()[f], f, report.scores[f]});
  std::stable_sort(report.ranking.begin(), report.ranking.end(),
                   [](const ImportanceEntry& a, const ImportanceEntry& b) { return a.score > b.score; });
  return report;
}

// Persistence ---------------------------------------------------------------

inline nlohmann::ordered_json forest_to_json(const RegressionForest& forest) {
  nlohmann::ordered_json j;
  j["format"] = "soilfusion-forest";
  j["version"] = 1;
  const auto& p = forest.params();
  j["params"] = {{"tree_count", p.tree_count},
                 {"min_leaf_size", p.min_leaf_size},
                 {"features_per_split", p.features_per_split},
                 {"bootstrap", p.bootstrap},
                 {"seed", p.seed}};
  j["columns"] = forest.column_names();
  j["training_rows"] = forest.training_rows();
  auto& trees = j["trees"] = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < forest.trees().size(); ++t) {
    nlohmann::ordered_json tj;
    std::vector<int> feature, left, right;
    std::vector<double> threshold, value;
    std::vector<std::uint32_t> count;
    for (const auto& n : forest.trees()[t].nodes()) {
      feature.push_back(n.feature);
      left.push_back(n.left);
      right.push_back(n.right);
      threshold.push_back(n.threshold);
      value.push_back(n.value);
      count.push_back(n.count);
    }
    tj["feature"] = feature;
    tj["threshold"] = threshold;
    tj["left"] = left;
    tj["right"] = right;
    tj["value"] = value;
    tj["count"] = count;
    tj["oob"] = forest.oob_indices()[t];
    trees.push_back(std::move(tj));
  }
  return j;
}

inline RegressionForest forest_from_json(const nlohmann::ordered_json& j) {
  try {
    if (j.at("format") != "soilfusion-forest") throw Error(ErrorKind::SchemaError, "not a forest model file");
    ForestParams p;
    const auto& pj = j.at("params");
    p.tree_count = pj.at("tree_count");
    p.min_leaf_size = pj.at("min_leaf_size");
    p.features_per_split = pj.at("features_per_split");
    p.bootstrap = pj.at("bootstrap");
    p.seed = pj.at("seed");
    auto columns = j.at("columns").get<std::vector<std::string>>();
    std::vector<RegressionTree> trees;
    std::vector<std::vector<std::size_t>> oob;
    for (const auto& tj : j.at("trees")) {
      const auto feature = tj.at("feature").get<std::vector<int>>();
      const auto threshold = tj.at("threshold").get<std::vector<double>>();
      const auto left = tj.at("left").get<std::vector<int>>();
      const auto right = tj.at("right").get<std::vector<int>>();
      const auto value = tj.at("value").get<std::vector<double>>();
      const auto count = tj.at("count").get<std::vector<std::uint32_t>>();
      const std::size_t m = feature.size();
      if (threshold.size() != m || left.size() != m || right.size() != m || value.size() != m || count.size() != m ||
          m == 0) {
        throw Error(ErrorKind::SchemaError, "inconsistent tree node arrays");
      }
      std::vector<TreeNode> nodes(m);
      for (std::size_t i = 0; i < m; ++i) {
        nodes[i] = {feature[i], threshold[i], left[i], right[i], value[i], count[i]};
        if (feature[i] >= 0) {
          const auto ok = [m](int c) { return c > 0 && static_cast<std::size_t>(c) < m; };
          if (!ok(left[i]) || !ok(right[i]) || static_cast<std::size_t>(feature[i]) >= columns.size()) {
            throw Error(ErrorKind::SchemaError, "tree node references out of range");
          }
        }
      }
      trees.emplace_back(std::move(nodes));
      oob.push_back(tj.at("oob").get<std::vector<std::size_t>>());
    }
    if (trees.size() != p.tree_count) throw Error(ErrorKind::SchemaError, "tree count mismatch");
    return RegressionForest(std::move(trees), p, std::move(columns), std::move(oob), j.at("training_rows"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaError, std::string("malformed forest model: ") + e.what());
  }
}

inline void save_forest(const std::string& path, const RegressionForest& forest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  out << forest_to_json(forest).dump() << '\n';
  if (!out) throw Error(ErrorKind::IoError, "failed writing " + path);
}

inline RegressionForest load_forest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaError, path + ": " + e.what());
  }
  return forest_from_json(j);
}

}  // namespace soilfusion
