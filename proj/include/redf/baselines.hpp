#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "redf/numeric.hpp"
#include "redf/timeseries.hpp"

namespace redf {

// Prediction for series[t] is series[t - season], for t in [season, n).
// Element k of the result forecasts series[season + k].
std::vector<double> seasonal_naive(std::span<const double> series, std::size_t season = 24);

// Seasonal-naive forecasts for arbitrary target positions (each >= season).
std::vector<double> seasonal_naive_at(std::span<const double> series,
                                      std::span<const std::size_t> target_index,
                                      std::size_t season = 24);

struct TreeConfig {
  std::size_t max_depth = 10;
  std::size_t min_samples_leaf = 5;
};

struct TreeNode {
  static constexpr std::uint32_t kLeaf = 0xFFFFFFFFu;
  std::uint32_t feature = kLeaf;  // kLeaf for leaves
  double threshold = 0.0;         // go left when x[feature] <= threshold
  double value = 0.0;             // mean target (meaningful on leaves)
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::uint32_t samples = 0;

  bool is_leaf() const noexcept { return feature == kLeaf; }
};

// CART regression tree grown by greedy variance reduction.
class RegressionTree {
 public:
  double predict(std::span<const double> window) const;
  std::vector<double> predict(const Matrix& windows) const;

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  std::size_t depth() const;
  std::size_t leaf_count() const;

 private:
  friend RegressionTree fit_tree(const Matrix&, std::span<const double>,
                                 std::span<const std::size_t>, const TreeConfig&);
  std::vector<TreeNode> nodes_;
};

// Fits on rows `sample` of (inputs, targets); rows may repeat. Candidate
// thresholds are midpoints between consecutive distinct feature values and
// ties between equally good splits go to the lowest feature index, then the
// lowest threshold.
RegressionTree fit_tree(const Matrix& inputs, std::span<const double> targets,
                        std::span<const std::size_t> sample, const TreeConfig& config);
RegressionTree fit_tree(const WindowedDataset& windows, const TreeConfig& config);

struct ForestConfig {
  std::size_t n_trees = 100;
  TreeConfig tree;
  bool bootstrap = true;
};

class Forest {
 public:
  double predict(std::span<const double> window) const;
  std::vector<double> predict(const Matrix& windows) const;

  const std::vector<RegressionTree>& trees() const noexcept { return trees_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  friend Forest fit_forest(const WindowedDataset&, const ForestConfig&, std::uint64_t);
  std::vector<RegressionTree> trees_;
  std::uint64_t seed_ = 0;
};

// Tree t is grown on a same-size bootstrap resample drawn from an rng seeded
// with seed ^ t.
Forest fit_forest(const WindowedDataset& windows, const ForestConfig& config, std::uint64_t seed);

}  // namespace redf
