#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "redf/baselines.hpp"
#include "redf/evaluation.hpp"
#include "redf/lstm.hpp"
#include "redf/timeseries.hpp"
#include "redf/training.hpp"

namespace redf {

inline constexpr std::uint64_t kDefaultSeed = 42;

struct RunConfig {
  std::filesystem::path data;
  std::string zone;  // empty: taken from the CSV header
  ScalerKind scaler = ScalerKind::ZScore;
  HyperParams hyper;  // timesteps and horizon live here too
  std::uint64_t seed = kDefaultSeed;
  std::filesystem::path out = "out";

  // Preprocessing.
  std::size_t last = 0;  // keep only the final N hours; 0 keeps everything
  double train_ratio = 0.8;
  std::size_t max_gap = 6;
  double outlier_k = 3.0;

  // Training.
  EarlyStopping early_stop;
  double validation_fraction = 0.1;

  // Grid search; empty lists fall back to Grid::defaults.
  Grid grid;
  std::size_t folds = 3;

  // Benchmark.
  std::vector<std::string> models = {"redf", "naive", "rfr"};
  std::size_t season = 24;
  ForestConfig forest;

  // Serving and prediction.
  std::vector<std::filesystem::path> artifacts;
  std::string listen;
  std::string broker;
  std::string server;
  bool local = false;
  std::string model;
  std::filesystem::path history_file;
  std::vector<double> values;
  double timeout_seconds = 10.0;

  bool quiet = false;

  // Throws ConfigError naming the first invalid field.
  void validate() const;
};

// The preprocessing pipeline shared by every data command: load, fill gaps,
// trim to the final `last` hours, clip outliers, split chronologically, fit
// the scaler on the training part and frame windows.
struct PreparedData {
  std::string zone;
  LoadReport load;
  MissingReport missing;
  std::size_t clipped = 0;
  TimeSeries series;  // cleaned MW values
  std::size_t split = 0;
  Scaler scaler;
  std::vector<double> scaled;
  WindowedDataset train;
  WindowedDataset test;                     // targets at or after `split`
  std::vector<std::size_t> test_target_index;  // positions in `series`
};

PreparedData prepare(const RunConfig& config);

struct PreprocessSummary {
  std::filesystem::path cache;
  std::filesystem::path metadata;
  std::size_t raw_rows = 0;
};
PreprocessSummary cmd_preprocess(const RunConfig& config, std::ostream& log);

struct TrainSummary {
  std::filesystem::path artifact;
  std::filesystem::path history_csv;
  TrainHistory history;
  std::array<MetricsRow, 2> test_metrics;
};
TrainSummary cmd_train(const RunConfig& config, std::ostream& log);

struct GridSummary {
  std::filesystem::path table_csv;
  GridResult result;
};
GridSummary cmd_grid_search(const RunConfig& config, std::ostream& log);

struct BenchmarkSummary {
  std::filesystem::path report_csv;
  std::vector<MetricsRow> rows;
  std::vector<std::filesystem::path> figures;
};
BenchmarkSummary cmd_benchmark(const RunConfig& config, std::ostream& log);

// Renders every CSV in `inputs` (history or prediction exports) to an SVG
// of the same stem under the output directory.
std::vector<std::filesystem::path> cmd_plot(const RunConfig& config, const std::vector<std::filesystem::path>& inputs,
                                            std::ostream& log);

// Blocks until `wait_for_stop` returns. The default waits for SIGINT or
// SIGTERM. `ready` lines ("listening on host:port") go to `log`.
using StopWaiter = std::function<void()>;
void cmd_serve(const RunConfig& config, std::ostream& log, StopWaiter wait_for_stop = {});
void cmd_broker(const RunConfig& config, std::ostream& log, StopWaiter wait_for_stop = {});

// Forecast in MW; `--local` runs in-process from the first artifact,
// otherwise the request goes to `server` directly or through `broker`.
std::vector<double> cmd_predict(const RunConfig& config);

// One value per line; a trailing CSV column is used when lines contain
// commas, and a non-numeric first line is taken as a header.
std::vector<double> read_history(const std::filesystem::path& path);

}  // namespace redf
