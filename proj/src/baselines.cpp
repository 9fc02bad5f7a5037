#include "redf/baselines.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "redf/error.hpp"

namespace redf {

std::vector<double> seasonal_naive(std::span<const double> series, std::size_t season) {
  if (season == 0 || series.size() <= season) {
    throw WindowError("seasonal naive needs more than " + std::to_string(season) + " points");
  }
  return {series.begin(), series.end() - static_cast<std::ptrdiff_t>(season)};
}

std::vector<double> seasonal_naive_at(std::span<const double> series,
                                      std::span<const std::size_t> target_index, std::size_t season) {
  if (season == 0) throw WindowError("season must be positive");
  std::vector<double> out;
  out.reserve(target_index.size());
  for (std::size_t t : target_index) {
    if (t < season || t >= series.size()) {
      throw WindowError("target index " + std::to_string(t) + " has no value one season earlier");
    }
    out.push_back(series[t - season]);
  }
  return out;
}

namespace {

struct SplitChoice {
  bool found = false;
  std::size_t feature = 0;
  std::size_t position = 0;  // boundary inside the feature's sorted segment
  double threshold = 0.0;
  double sse = 0.0;
};

// Builds the tree with per-feature presorted sample lists. Each node owns the
// same contiguous range [lo, hi) in every feature's list.
class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, std::span<const double> y, std::span<const std::size_t> sample,
              const TreeConfig& config)
      : x_(x), y_(y), sample_(sample), config_(config), n_features_(x.cols()) {
    const std::size_t m = sample.size();
    order_.resize(n_features_);
    for (std::size_t f = 0; f < n_features_; ++f) {
      auto& ord = order_[f];
      ord.resize(m);
      std::iota(ord.begin(), ord.end(), std::size_t{0});
      std::stable_sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) {
        return value(a, f) < value(b, f);
      });
    }
    goes_left_.assign(m, 0);
    scratch_.resize(m);
  }

  std::vector<TreeNode> build() {
    nodes_.clear();
    grow(0, sample_.size(), 0);
    return std::move(nodes_);
  }

 private:
  double value(std::size_t pos, std::size_t f) const { return x_(sample_[pos], f); }
  double target(std::size_t pos) const { return y_[sample_[pos]]; }

  std::uint32_t grow(std::size_t lo, std::size_t hi, std::size_t depth) {
    const std::size_t n = hi - lo;
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({});

    // Positions in the node, in sample order, for an order-independent mean.
    const auto& any = order_.front();
    std::copy(any.begin() + static_cast<std::ptrdiff_t>(lo), any.begin() + static_cast<std::ptrdiff_t>(hi),
              scratch_.begin());
    std::sort(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(n));
    double sum = 0.0;
    bool constant = true;
    const double first = target(scratch_[0]);
    for (std::size_t k = 0; k < n; ++k) {
      const double t = target(scratch_[k]);
      sum += t;
      constant = constant && t == first;
    }
    const double mean = sum / static_cast<double>(n);
    nodes_[id].value = mean;
    nodes_[id].samples = static_cast<std::uint32_t>(n);

    if (depth >= config_.max_depth || constant || n < 2 * config_.min_samples_leaf) return id;
    const SplitChoice split = best_split(lo, hi, mean);
    if (!split.found) return id;

    // Partition every feature list stably around the chosen boundary.
    const auto& chosen = order_[split.feature];
    for (std::size_t k = lo; k < hi; ++k) goes_left_[chosen[k]] = k < split.position ? 1 : 0;
    for (auto& ord : order_) {
      std::stable_partition(ord.begin() + static_cast<std::ptrdiff_t>(lo),
                            ord.begin() + static_cast<std::ptrdiff_t>(hi),
                            [&](std::size_t pos) { return goes_left_[pos] != 0; });
    }
    nodes_[id].feature = static_cast<std::uint32_t>(split.feature);
    nodes_[id].threshold = split.threshold;
    const std::uint32_t left = grow(lo, split.position, depth + 1);
    const std::uint32_t right = grow(split.position, hi, depth + 1);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  // Minimises SSE(left) + SSE(right) over all features and boundaries that
  // respect min_samples_leaf. Targets are centred on the node mean to keep
  // the running sums well conditioned.
  SplitChoice best_split(std::size_t lo, std::size_t hi, double mean) const {
    const std::size_t n = hi - lo;
    const std::size_t min_leaf = std::max<std::size_t>(1, config_.min_samples_leaf);
    double total = 0.0, total_sq = 0.0;
    for (std::size_t k = lo; k < hi; ++k) {
      const double t = target(order_[0][k]) - mean;
      total += t;
      total_sq += t * t;
    }
    const double parent_sse = total_sq - total * total / static_cast<double>(n);

    SplitChoice best;
    best.sse = parent_sse;
    for (std::size_t f = 0; f < n_features_; ++f) {
      const auto& ord = order_[f];
      double left = 0.0, left_sq = 0.0;
      for (std::size_t k = lo; k + 1 < hi; ++k) {
        const double t = target(ord[k]) - mean;
        left += t;
        left_sq += t * t;
        const std::size_t nl = k + 1 - lo;
        const std::size_t nr = n - nl;
        if (nl < min_leaf) continue;
        if (nr < min_leaf) break;
        const double a = value(ord[k], f);
        const double b = value(ord[k + 1], f);
        if (!(a < b)) continue;
        const double right = total - left;
        const double right_sq = total_sq - left_sq;
        const double sse = (left_sq - left * left / static_cast<double>(nl)) +
                           (right_sq - right * right / static_cast<double>(nr));
        if (sse < best.sse) {
          best.found = true;
          best.feature = f;
          best.position = k + 1;
          best.threshold = a + (b - a) / 2.0;
          best.sse = sse;
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  std::span<const double> y_;
  std::span<const std::size_t> sample_;
  TreeConfig config_;
  std::size_t n_features_;
  std::vector<std::vector<std::size_t>> order_;
  std::vector<unsigned char> goes_left_;
  std::vector<std::size_t> scratch_;
  std::vector<TreeNode> nodes_;
};

}  // namespace

double RegressionTree::predict(std::span<const double> window) const {
  if (nodes_.empty()) throw StateError("predict on an unfitted tree");
  std::uint32_t id = 0;
  while (!nodes_[id].is_leaf()) {
    const TreeNode& node = nodes_[id];
    if (node.feature >= window.size()) throw ShapeError("window shorter than the tree's features");
    id = window[node.feature] <= node.threshold ? node.left : node.right;
  }
  return nodes_[id].value;
}

std::vector<double> RegressionTree::predict(const Matrix& windows) const {
  std::vector<double> out(windows.rows());
  for (std::size_t r = 0; r < windows.rows(); ++r) out[r] = predict(windows.row(r));
  return out;
}

std::size_t RegressionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::size_t best = 0;
  std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [id, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    if (!nodes_[id].is_leaf()) {
      stack.push_back({nodes_[id].left, d + 1});
      stack.push_back({nodes_[id].right, d + 1});
    }
  }
  return best;
}

std::size_t RegressionTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

RegressionTree fit_tree(const Matrix& inputs, std::span<const double> targets,
                        std::span<const std::size_t> sample, const TreeConfig& config) {
  if (inputs.rows() != targets.size()) throw ShapeError("fit_tree: inputs and targets disagree");
  if (sample.empty()) throw EmptyBatchError("fit_tree needs at least one sample");
  for (std::size_t s : sample) {
    if (s >= inputs.rows()) throw ShapeError("fit_tree: sample index out of range");
  }
  RegressionTree tree;
  tree.nodes_ = TreeBuilder(inputs, targets, sample, config).build();
  return tree;
}

RegressionTree fit_tree(const WindowedDataset& windows, const TreeConfig& config) {
  std::vector<std::size_t> all(windows.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return fit_tree(windows.inputs, windows.targets, all, config);
}

double Forest::predict(std::span<const double> window) const {
  if (trees_.empty()) throw StateError("predict on an empty forest");
  double sum = 0.0;
  for (const auto& t : trees_) sum += t.predict(window);
  return sum / static_cast<double>(trees_.size());
}

std::vector<double> Forest::predict(const Matrix& windows) const {
  std::vector<double> out(windows.rows());
  for (std::size_t r = 0; r < windows.rows(); ++r) out[r] = predict(windows.row(r));
  return out;
}

Forest fit_forest(const WindowedDataset& windows, const ForestConfig& config, std::uint64_t seed) {
  if (windows.empty()) throw EmptyBatchError("fit_forest needs at least one sample");
  if (config.n_trees == 0) throw ConfigError("forest needs at least one tree");
  Forest forest;
  forest.seed_ = seed;
  const std::size_t n = windows.size();
  std::vector<std::size_t> sample(n);
  for (std::size_t t = 0; t < config.n_trees; ++t) {
    if (config.bootstrap) {
      Rng rng(seed ^ static_cast<std::uint64_t>(t));
      for (auto& s : sample) s = static_cast<std::size_t>(rng.below(n));
    } else {
      std::iota(sample.begin(), sample.end(), std::size_t{0});
    }
    forest.trees_.push_back(fit_tree(windows.inputs, windows.targets, sample, config.tree));
  }
  return forest;
}

}  // namespace redf
