#include <doctest.h>

#include <cmath>
#include <numeric>

#include "redf/baselines.hpp"
#include "redf/error.hpp"
#include "redf/evaluation.hpp"

using namespace redf;

namespace {

WindowedDataset from_rows(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  WindowedDataset w;
  w.inputs = Matrix::from_rows(x);
  w.targets = y;
  w.timesteps = x.empty() ? 0 : x.front().size();
  return w;
}

// Exhaustive root split: every feature, every midpoint between distinct
// sorted values, both sides at least `min_leaf`. Returns the smallest SSE.
double brute_force_root_sse(const WindowedDataset& w, std::size_t min_leaf, std::size_t& feature, double& threshold) {
  double best = INFINITY;
  for (std::size_t f = 0; f < w.inputs.cols(); ++f) {
    std::vector<double> vals;
    for (std::size_t r = 0; r < w.size(); ++r) vals.push_back(w.inputs(r, f));
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
      const double thr = (vals[k] + vals[k + 1]) / 2.0;
      std::vector<double> left, right;
      for (std::size_t r = 0; r < w.size(); ++r) (w.inputs(r, f) <= thr ? left : right).push_back(w.targets[r]);
      if (left.size() < min_leaf || right.size() < min_leaf) continue;
      auto sse = [](const std::vector<double>& v) {
        const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double s = 0;
        for (double x : v) s += (x - m) * (x - m);
        return s;
      };
      const double total = sse(left) + sse(right);
      if (total < best - 1e-12) {
        best = total;
        feature = f;
        threshold = thr;
      }
    }
  }
  return best;
}

WindowedDataset ar1(std::size_t n, std::uint64_t seed, std::size_t lags) {
  Rng rng(seed);
  std::vector<double> v(n + lags + 1);
  for (std::size_t i = 1; i < v.size(); ++i) v[i] = 0.8 * v[i - 1] + 0.5 * rng.normal();
  return make_windows(v, lags, 1);
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("seasonal naive shifts by the season") {
  std::vector<double> v(30);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i * i) - 3.0;
  const auto p = seasonal_naive(v, 24);
  REQUIRE(p.size() == 6);
  for (std::size_t k = 0; k < p.size(); ++k) CHECK(p[k] == v[k]);
  CHECK_THROWS_AS(seasonal_naive(std::vector<double>(24, 1.0), 24), WindowError);

  const std::vector<std::size_t> at = {24, 29};
  const auto q = seasonal_naive_at(v, at, 24);
  CHECK(q == std::vector<double>{v[0], v[5]});
  const std::vector<std::size_t> bad = {3};
  CHECK_THROWS_AS(seasonal_naive_at(v, bad, 24), WindowError);
}

TEST_CASE("seasonal naive is exact on periodic and constant series") {
  std::vector<double> periodic(24 * 5), constant(100, 42.0);
  for (std::size_t i = 0; i < periodic.size(); ++i) periodic[i] = std::sin(static_cast<double>(i % 24));
  const auto p = seasonal_naive(periodic, 24);
  std::vector<double> actual(periodic.begin() + 24, periodic.end());
  CHECK(mae(actual, p) == 0.0);
  const auto c = seasonal_naive(constant, 24);
  CHECK(mae(std::vector<double>(constant.begin() + 24, constant.end()), c) == 0.0);
}

TEST_CASE("single sample tree is one leaf") {
  const auto w = from_rows({{1.0, 2.0}}, {3.5});
  const auto t = fit_tree(w, TreeConfig{10, 1});
  CHECK(t.leaf_count() == 1);
  CHECK(t.predict(std::vector<double>{100.0, -5.0}) == 3.5);
}

TEST_CASE("separable pair is fit exactly") {
  const auto w = from_rows({{0.0}, {1.0}}, {-2.0, 7.0});
  const auto t = fit_tree(w, TreeConfig{1, 1});
  CHECK(t.predict(std::vector<double>{0.0}) == -2.0);
  CHECK(t.predict(std::vector<double>{1.0}) == 7.0);
  CHECK(t.nodes()[0].threshold == 0.5);
}

TEST_CASE("root split matches exhaustive search") {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> x(20, std::vector<double>(3));
    std::vector<double> y(20);
    for (std::size_t r = 0; r < 20; ++r) {
      for (double& v : x[r]) v = std::round(rng.uniform(0.0, 10.0));  // ties on purpose
      y[r] = x[r][1] * 0.7 - x[r][2] + rng.normal();
    }
    const auto w = from_rows(x, y);
    for (std::size_t min_leaf : {1u, 3u}) {
      std::size_t feature = 0;
      double threshold = 0;
      const double best = brute_force_root_sse(w, min_leaf, feature, threshold);
      const auto t = fit_tree(w, TreeConfig{1, min_leaf});
      REQUIRE(t.nodes()[0].feature != TreeNode::kLeaf);
      CHECK(t.nodes()[0].feature == feature);
      CHECK(t.nodes()[0].threshold == threshold);
      // Leaf values are the side means, so the tree's SSE is the split SSE.
      double sse = 0;
      for (std::size_t r = 0; r < 20; ++r) {
        const double d = t.predict(w.inputs.row(r)) - y[r];
        sse += d * d;
      }
      CHECK(std::abs(sse - best) < 1e-9);
    }
  }
}

TEST_CASE("tree respects depth and leaf size") {
  const auto w = ar1(300, 4, 6);
  const auto t = fit_tree(w, TreeConfig{4, 10});
  CHECK(t.depth() <= 4);
  for (const auto& n : t.nodes()) {
    if (n.feature == TreeNode::kLeaf) {
      CHECK(n.samples >= 10);
      CHECK(std::isfinite(n.value));
    }
  }
  // Identical windows land on identical leaves.
  CHECK(t.predict(w.inputs.row(7)) == t.predict(w.inputs.row(7)));
  const auto preds = t.predict(w.inputs);
  CHECK(preds[7] == t.predict(w.inputs.row(7)));
}

TEST_CASE("one unbagged tree forest equals the tree") {
  const auto w = ar1(200, 5, 4);
  ForestConfig cfg;
  cfg.n_trees = 1;
  cfg.bootstrap = false;
  const auto forest = fit_forest(w, cfg, 3);
  const auto tree = fit_tree(w, cfg.tree);
  for (std::size_t r = 0; r < w.size(); ++r) CHECK(forest.predict(w.inputs.row(r)) == tree.predict(w.inputs.row(r)));
}

TEST_CASE("forest prediction is the mean of its trees") {
  const auto w = ar1(200, 6, 4);
  ForestConfig cfg;
  cfg.n_trees = 17;
  const auto forest = fit_forest(w, cfg, 11);
  CHECK(forest.trees().size() == 17);
  for (std::size_t r = 0; r < 20; ++r) {
    double s = 0;
    for (const auto& t : forest.trees()) s += t.predict(w.inputs.row(r));
    CHECK(std::abs(forest.predict(w.inputs.row(r)) - s / 17.0) < 1e-12);
  }
  const auto again = fit_forest(w, cfg, 11);
  CHECK(again.predict(w.inputs) == forest.predict(w.inputs));
}

TEST_CASE("constant targets give constant predictions") {
  auto w = ar1(100, 7, 3);
  std::fill(w.targets.begin(), w.targets.end(), 4.25);
  ForestConfig cfg;
  cfg.n_trees = 10;
  const auto forest = fit_forest(w, cfg, 1);
  for (double p : forest.predict(w.inputs)) CHECK(p == doctest::Approx(4.25).epsilon(1e-15));
}

TEST_CASE("forest fits its training set better than a deep tree generalises") {
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto train = ar1(200, seed, 4);
    const auto test = ar1(200, seed + 1000, 4);
    ForestConfig cfg;
    cfg.n_trees = 20;
    const auto forest = fit_forest(train, cfg, seed);
    const auto deep = fit_tree(train, TreeConfig{20, 1});
    const double forest_train = mae(train.targets, forest.predict(train.inputs));
    const double tree_test = mae(test.targets, deep.predict(test.inputs));
    if (forest_train <= tree_test) ++wins;
  }
  CHECK(wins >= 90);
}

}  // TEST_SUITE
