#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "redf/lstm.hpp"
#include "redf/timeseries.hpp"

namespace redf {

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t step = 0;
  ModelParams m;  // first moments, same layout as the parameters
  ModelParams v;  // second moments

  static AdamState for_params(const ModelParams& params, double learning_rate);
};

// One Adam update. An all-zero gradient is a no-op (neither the parameters
// nor the moment estimates change). Throws NumericError, without touching
// anything, if any gradient entry is non-finite.
void adam_step(ModelParams& params, const Gradients& grads, AdamState& state);

struct EarlyStopping {
  std::size_t patience = 3;
  double min_delta = 1e-5;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_mse = 0.0;
  double val_mse = 0.0;
  double seconds = 0.0;
};

enum class StopReason { Completed, EarlyStopped };
const char* to_string(StopReason r) noexcept;

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  StopReason stop_reason = StopReason::Completed;
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
};

struct TrainOptions {
  EarlyStopping early_stop;
  // Chronological tail of the windows held out for validation.
  double validation_fraction = 0.1;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  ModelParams params;  // from the best-validation epoch
  TrainHistory history;
};

// Trains `initial` on the windows using params.hyper for epochs, batch size,
// learning rate and dropout. Windows are reshuffled every epoch with rng.
TrainResult train(const ModelParams& initial, const WindowedDataset& windows, Rng& rng,
                  const TrainOptions& options = {});

// Validation MSE in inference mode.
double evaluate_mse(const ModelParams& params, const WindowedDataset& windows);

// `epoch,train_mse,val_mse`
void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);
std::string history_csv(const TrainHistory& history);

// ---------------------------------------------------------------------------
// Grid search

struct Grid {
  std::vector<std::size_t> units;
  std::vector<std::size_t> timesteps;
  std::vector<double> learning_rates;
  std::vector<double> dropouts;
  std::vector<std::size_t> batch_sizes;

  // units {50,100,200} x lr {1e-3,1e-2} x timesteps {24}; dropout and batch
  // come from `base`.
  static Grid defaults(const HyperParams& base);
  std::size_t combinations() const noexcept;
  // Cartesian product in grid order: units outermost, batch size innermost.
  std::vector<HyperParams> expand(const HyperParams& base) const;
};

struct CvOptions {
  std::size_t folds = 3;
};

struct GridEntry {
  std::size_t index = 0;
  HyperParams hyper;
  bool feasible = false;
  std::string skip_reason;
  std::vector<double> fold_mae;
  double score = 0.0;  // mean validation MAE over folds, scaled units
};

struct GridResult {
  std::size_t best_index = 0;
  HyperParams best;
  std::vector<GridEntry> table;
  std::size_t training_runs = 0;
};

// Expanding-window cross-validation: with f folds and s = n/(f+1), fold k
// trains on the first k*s points and scores MAE on targets in [k*s, (k+1)*s).
// Combination c uses an rng seeded with seed ^ c. Ties on score go to fewer
// units, then smaller timesteps, then grid order.
GridResult grid_search(const Grid& grid, std::span<const double> series, const HyperParams& base,
                       const CvOptions& cv, std::uint64_t seed, const TrainOptions& options = {});

// Cross-validated score of a single configuration; what grid_search computes
// for each feasible cell. Throws WindowError when the series is too short.
std::vector<double> cross_validate(const HyperParams& hyper, std::span<const double> series,
                                   const CvOptions& cv, Rng& rng, const TrainOptions& options = {});

void write_grid_csv(const GridResult& result, const std::filesystem::path& path);

}  // namespace redf
