#pragma once

// Random survival forests: bootstrap trees grown with the two-sample
// log-rank split rule, Nelson-Aalen leaves, and ensemble mortality.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsurv/parallel.hpp"
#include "fedsurv/rng.hpp"
#include "fedsurv/survival.hpp"

namespace fedsurv {

struct ForestConfig {
  std::size_t n_trees = 100;
  std::size_t mtry = 0;  // 0: ceil(sqrt(p))
  std::size_t min_leaf_events = 5;
  std::size_t max_depth = 12;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  std::size_t resolved_mtry(std::size_t p) const {
    return mtry ? mtry : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p))));
  }

  void validate(std::size_t p) const {
    if (n_trees == 0 || min_leaf_events == 0 || max_depth == 0) {
      throw std::invalid_argument("invalid ForestConfig");
    }
    if (resolved_mtry(p) > p) throw std::invalid_argument("mtry exceeds feature count");
  }
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  CumulativeHazardCurve curve;  // leaves only

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

/// Nodes are stored in preorder with the root at index 0. Records with
/// x[feature] <= threshold go left.
struct SurvivalTree {
  std::vector<TreeNode> nodes;
  std::uint64_t bootstrap_seed = 0;
  std::string client_tag;
  std::optional<double> importance;

  const TreeNode& leaf_for(std::span<const double> x) const {
    std::size_t k = 0;
    while (!nodes[k].is_leaf()) {
      const auto& node = nodes[k];
      k = x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
    }
    return nodes[k];
  }

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }

  bool operator==(const SurvivalTree&) const = default;
};

struct SurvivalForest {
  std::vector<SurvivalTree> trees;
  std::vector<double> grid;  // ascending unique training event times
  std::size_t dimension = 0;

  bool operator==(const SurvivalForest&) const = default;
};

namespace detail {

class FenwickSum {
 public:
  explicit FenwickSum(std::size_t n) : sum_(n + 1, 0.0), count_(n + 1, 0) {}

  void add(std::size_t pos, double v) {
    for (std::size_t i = pos + 1; i < sum_.size(); i += i & (~i + 1)) {
      sum_[i] += v;
      ++count_[i];
    }
  }

  // (sum, count) over positions < pos
  std::pair<double, std::size_t> prefix(std::size_t pos) const {
    double s = 0.0;
    std::size_t c = 0;
    for (std::size_t i = pos; i > 0; i -= i & (~i + 1)) {
      s += sum_[i];
      c += count_[i];
    }
    return {s, c};
  }

 private:
  std::vector<double> sum_;
  std::vector<std::size_t> count_;
};

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double statistic = 0.0;  // |standardized log-rank|
};

/// Member view of a node: parallel arrays of time, event and feature rows.
struct NodeSample {
  std::span<const double> time;
  std::span<const char> event;
  std::span<const std::vector<double>* const> x;
};

/// Exhaustive threshold search over `features` for the split maximizing the
/// absolute standardized two-sample log-rank statistic. Both children must
/// hold at least `min_child_events` events. The statistic is updated in
/// O(log n) per moved record via the decomposition
///   numerator = sum_{i in L} (delta_i - H(t_i)),
///   variance  = sum_{i in L} C(t_i) - sum_{i,j in L} V(min(t_i, t_j)).
inline SplitChoice best_split(const NodeSample& s, std::span<const std::size_t> features,
                              std::size_t min_child_events) {
  const std::size_t m = s.time.size();
  SplitChoice best;
  if (m < 2) return best;

  std::vector<std::size_t> by_time(m);
  std::iota(by_time.begin(), by_time.end(), std::size_t{0});
  std::stable_sort(by_time.begin(), by_time.end(),
                   [&](std::size_t a, std::size_t b) { return s.time[a] < s.time[b]; });

  // per-record time rank and the cumulative H, C, V at its time
  std::vector<std::size_t> rank(m);
  std::vector<double> h_at(m), c_at(m), v_at(m);
  std::size_t total_events = 0;
  {
    double h = 0.0, c = 0.0, v = 0.0;
    std::size_t k = 0;
    std::size_t r = 0;
    while (k < m) {
      const double t = s.time[by_time[k]];
      std::size_t end = k;
      std::size_t d = 0;
      while (end < m && s.time[by_time[end]] == t) {
        if (s.event[by_time[end]]) ++d;
        ++end;
      }
      const double n_t = static_cast<double>(m - k);
      if (d > 0) {
        const double dd = static_cast<double>(d);
        h += dd / n_t;
        if (n_t > 1.0) {
          const double ct = dd * (n_t - dd) / ((n_t - 1.0) * n_t);
          c += ct;
          v += ct / n_t;
        }
      }
      for (std::size_t q = k; q < end; ++q) {
        rank[by_time[q]] = r;
        h_at[by_time[q]] = h;
        c_at[by_time[q]] = c;
        v_at[by_time[q]] = v;
      }
      total_events += d;
      ++r;
      k = end;
    }
  }
  if (total_events < 2 * min_child_events) return best;
  const std::size_t n_ranks = rank.empty() ? 0 : *std::max_element(rank.begin(), rank.end()) + 1;

  std::vector<std::size_t> by_value(m);
  for (std::size_t f : features) {
    std::iota(by_value.begin(), by_value.end(), std::size_t{0});
    std::stable_sort(by_value.begin(), by_value.end(), [&](std::size_t a, std::size_t b) {
      return (*s.x[a])[f] < (*s.x[b])[f];
    });
    FenwickSum tree(n_ranks);
    double numerator = 0.0;
    double linear = 0.0;
    double quadratic = 0.0;
    std::size_t left_count = 0;
    std::size_t left_events = 0;
    for (std::size_t k = 0; k + 1 < m; ++k) {
      const std::size_t a = by_value[k];
      const auto [below_sum, below_count] = tree.prefix(rank[a]);
      quadratic += v_at[a] + 2.0 * (below_sum + v_at[a] * static_cast<double>(left_count - below_count));
      tree.add(rank[a], v_at[a]);
      numerator += (s.event[a] ? 1.0 : 0.0) - h_at[a];
      linear += c_at[a];
      ++left_count;
      if (s.event[a]) ++left_events;

      const double here = (*s.x[a])[f];
      const double next = (*s.x[by_value[k + 1]])[f];
      if (!(next > here)) continue;
      if (left_events < min_child_events || total_events - left_events < min_child_events) continue;
      const double variance = linear - quadratic;
      if (!(variance > 1e-12)) continue;
      const double stat = std::abs(numerator) / std::sqrt(variance);
      if (stat > best.statistic) {
        double threshold = here + 0.5 * (next - here);
        if (!(threshold < next)) threshold = here;
        best = {static_cast<int>(f), threshold, stat};
      }
    }
  }
  return best;
}

struct TreeBuilder {
  const SurvivalDataset& data;
  const ForestConfig& config;
  Rng& rng;
  std::size_t mtry;
  std::vector<TreeNode> nodes;

  CumulativeHazardCurve leaf_curve(std::span<const std::size_t> members) const {
    std::vector<std::size_t> sorted(members.begin(), members.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [&](std::size_t a, std::size_t b) { return data[a].time < data[b].time; });
    std::vector<double> times;
    std::vector<char> events;
    for (std::size_t i : sorted) {
      times.push_back(data[i].time);
      events.push_back(data[i].event ? 1 : 0);
    }
    return nelson_aalen_sorted(times, events);
  }

  std::uint32_t grow(std::vector<std::size_t> members, std::size_t depth) {
    const auto index = static_cast<std::uint32_t>(nodes.size());
    nodes.emplace_back();

    SplitChoice choice;
    if (depth < config.max_depth) {
      std::vector<std::size_t> candidates(data.dimension());
      std::iota(candidates.begin(), candidates.end(), std::size_t{0});
      for (std::size_t k = 0; k < mtry; ++k) {
        std::swap(candidates[k], candidates[k + rng.index(candidates.size() - k)]);
      }
      candidates.resize(mtry);

      std::vector<double> times;
      std::vector<char> events;
      std::vector<const std::vector<double>*> rows;
      for (std::size_t i : members) {
        times.push_back(data[i].time);
        events.push_back(data[i].event ? 1 : 0);
        rows.push_back(&data[i].features);
      }
      choice = best_split({times, events, rows}, candidates, config.min_leaf_events);
    }

    if (choice.feature < 0) {
      nodes[index].curve = leaf_curve(members);
      return index;
    }
    std::vector<std::size_t> left, right;
    for (std::size_t i : members) {
      (data[i].features[static_cast<std::size_t>(choice.feature)] <= choice.threshold ? left : right)
          .push_back(i);
    }
    members.clear();
    members.shrink_to_fit();
    nodes[index].feature = choice.feature;
    nodes[index].threshold = choice.threshold;
    const auto l = grow(std::move(left), depth + 1);
    const auto r = grow(std::move(right), depth + 1);
    nodes[index].left = l;
    nodes[index].right = r;
    return index;
  }
};

// Sum of the step function over the ascending grid points.
inline double curve_grid_sum(const CumulativeHazardCurve& curve, std::span<const double> grid) {
  double total = 0.0;
  double previous = 0.0;
  for (std::size_t k = 0; k < curve.size(); ++k) {
    const auto at_or_after = static_cast<std::size_t>(
        grid.end() - std::lower_bound(grid.begin(), grid.end(), curve.times()[k]));
    total += (curve.values()[k] - previous) * static_cast<double>(at_or_after);
    previous = curve.values()[k];
  }
  return total;
}

inline std::vector<double> event_time_grid(const SurvivalDataset& data) {
  std::vector<double> grid;
  for (const auto& r : data.records()) {
    if (r.event) grid.push_back(r.time);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

}  // namespace detail

/// Grows one tree on a with-replacement bootstrap of `train`.
inline SurvivalTree fit_tree(const SurvivalDataset& train, const ForestConfig& config,
                             std::uint64_t tree_seed) {
  config.validate(train.dimension());
  if (train.event_count() == 0) throw std::invalid_argument("cannot fit: zero events");
  Rng rng(tree_seed);
  const std::size_t n = train.size();
  std::vector<std::size_t> sample(n);
  for (auto& i : sample) i = rng.index(n);
  detail::TreeBuilder builder{train, config, rng, config.resolved_mtry(train.dimension()), {}};
  builder.grow(std::move(sample), 0);
  SurvivalTree tree;
  tree.nodes = std::move(builder.nodes);
  tree.bootstrap_seed = tree_seed;
  return tree;
}

/// n_trees independent trees seeded seed + tree_index.
inline SurvivalForest fit_forest(const SurvivalDataset& train, const ForestConfig& config) {
  config.validate(train.dimension());
  if (train.event_count() == 0) throw std::invalid_argument("cannot fit: zero events");
  SurvivalForest forest;
  forest.dimension = train.dimension();
  forest.grid = detail::event_time_grid(train);
  forest.trees.resize(config.n_trees);
  parallel_for(config.n_trees, config.threads, [&](std::size_t t) {
    forest.trees[t] = fit_tree(train, config, config.seed + t);
  });
  return forest;
}

/// Per-record tree mortality: sum over the grid of the leaf's cumulative hazard.
inline std::vector<double> tree_mortality(const SurvivalTree& tree, std::span<const double> grid,
                                          const SurvivalDataset& data) {
  std::vector<double> leaf_sum(tree.nodes.size(), 0.0);
  for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
    if (tree.nodes[k].is_leaf()) leaf_sum[k] = detail::curve_grid_sum(tree.nodes[k].curve, grid);
  }
  std::vector<double> out;
  out.reserve(data.size());
  for (const auto& r : data.records()) {
    const TreeNode& leaf = tree.leaf_for(r.features);
    out.push_back(leaf_sum[static_cast<std::size_t>(&leaf - tree.nodes.data())]);
  }
  return out;
}

/// Ensemble mortality for every record: the grid sum of the tree-averaged
/// cumulative hazard. Per-record tree values are summed in sorted order so the
/// result does not depend on tree order.
inline std::vector<double> predict_mortality(const SurvivalForest& forest, const SurvivalDataset& data) {
  if (forest.trees.empty()) throw std::invalid_argument("empty forest");
  if (data.dimension() != forest.dimension) throw std::invalid_argument("feature dimension mismatch");
  std::vector<std::vector<double>> per_tree;
  per_tree.reserve(forest.trees.size());
  for (const auto& tree : forest.trees) per_tree.push_back(tree_mortality(tree, forest.grid, data));
  std::vector<double> out(data.size());
  std::vector<double> column(forest.trees.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t t = 0; t < per_tree.size(); ++t) column[t] = per_tree[t][i];
    std::sort(column.begin(), column.end());
    double s = 0.0;
    for (double v : column) s += v;
    out[i] = s / static_cast<double>(column.size());
  }
  return out;
}

inline double predict_mortality(const SurvivalForest& forest, std::span<const double> features) {
  if (features.size() != forest.dimension) throw std::invalid_argument("feature dimension mismatch");
  SurvivalRecord r{{features.begin(), features.end()}, 1.0, false};
  SurvivalDataset one({std::move(r)}, default_feature_names(forest.dimension));
  return predict_mortality(forest, one).front();
}

/// Scores each tree by its own validation C-index and sorts trees by
/// descending importance (stable on ties).
inline SurvivalForest rank_trees(SurvivalForest forest, const SurvivalDataset& validation) {
  if (validation.empty()) throw std::invalid_argument("empty validation set");
  if (validation.dimension() != forest.dimension) throw std::invalid_argument("feature dimension mismatch");
  for (auto& tree : forest.trees) {
    tree.importance = concordance_index(tree_mortality(tree, forest.grid, validation), validation);
  }
  std::stable_sort(forest.trees.begin(), forest.trees.end(),
                   [](const SurvivalTree& a, const SurvivalTree& b) { return *a.importance > *b.importance; });
  return forest;
}

}  // namespace fedsurv
