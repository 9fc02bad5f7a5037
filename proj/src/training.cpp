#include "redf/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <tuple>

#include "redf/error.hpp"

namespace redf {

namespace {

// Gathers windows[idx[first..first+count)] into one batch.
void gather(const WindowedDataset& w, std::span<const std::size_t> idx, Matrix& inputs,
            std::vector<double>& targets) {
  const std::size_t cols = w.inputs.cols();
  inputs = Matrix(idx.size(), cols);
  targets.resize(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::copy_n(w.inputs.row(idx[k]).begin(), cols, inputs.row(k).begin());
    targets[k] = w.targets[idx[k]];
  }
}

}  // namespace

AdamState AdamState::for_params(const ModelParams& params, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  s.m = ModelParams::zeros(params.hyper);
  s.v = ModelParams::zeros(params.hyper);
  return s;
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state) {
  if (state.m.layer1.units != params.hyper.units || state.m.dense_b.size() != params.dense_b.size()) {
    state = AdamState::for_params(params, state.learning_rate);
  }
  std::vector<std::span<double>> p_blocks, m_blocks, v_blocks;
  std::vector<std::span<const double>> g_blocks;
  auto collect = [](auto& out) {
    return [&out](const std::string&, auto v, std::size_t, std::size_t) { out.push_back(v); };
  };
  for_each_tensor(params, collect(p_blocks));
  for_each_tensor(grads, collect(g_blocks));
  for_each_tensor(state.m, collect(m_blocks));
  for_each_tensor(state.v, collect(v_blocks));
  if (g_blocks.size() != p_blocks.size()) throw ShapeError("adam_step: gradient layout mismatch");

  bool all_zero = true;
  for (std::size_t k = 0; k < g_blocks.size(); ++k) {
    if (g_blocks[k].size() != p_blocks[k].size()) throw ShapeError("adam_step: gradient block size mismatch");
    for (double g : g_blocks[k]) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient; update aborted");
      all_zero = all_zero && g == 0.0;
    }
  }
  if (all_zero) return;

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < p_blocks.size(); ++k) {
    auto p = p_blocks[k];
    auto g = g_blocks[k];
    auto m = m_blocks[k];
    auto v = v_blocks[k];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

const char* to_string(StopReason r) noexcept {
  return r == StopReason::Completed ? "COMPLETED" : "EARLY_STOPPED";
}

double evaluate_mse(const ModelParams& params, const WindowedDataset& windows) {
  const Matrix pred = predict(params, windows.inputs);
  return mse_loss(pred.values(), windows.targets).loss;
}

TrainResult train(const ModelParams& initial, const WindowedDataset& windows, Rng& rng,
                  const TrainOptions& options) {
  const HyperParams& hp = initial.hyper;
  hp.validate();
  if (options.early_stop.patience == 0) throw ConfigError("early stopping patience must be >= 1");
  if (!(options.validation_fraction >= 0.0 && options.validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in [0,1)");
  }
  if (windows.empty()) throw EmptyBatchError("no training windows");
  if (windows.inputs.cols() != hp.timesteps * hp.features) {
    throw ShapeError("window width " + std::to_string(windows.inputs.cols()) +
                     " does not match timesteps*features");
  }

  const std::size_t n = windows.size();
  std::size_t n_val = 0;
  if (n >= 2 && options.validation_fraction > 0.0) {
    n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(options.validation_fraction * static_cast<double>(n))));
  }
  const std::size_t n_train = n - n_val;
  const WindowedDataset fit_set = n_val > 0 ? windows.slice(0, n_train) : windows;
  const WindowedDataset val_set = n_val > 0 ? windows.slice(n_train, n_val) : windows;

  TrainResult result{initial, {}};
  ModelParams params = initial;
  AdamState adam = AdamState::for_params(params, hp.learning_rate);

  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Matrix batch_inputs;
  std::vector<double> batch_targets;

  double best_val = std::numeric_limits<double>::infinity();
  double reference = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  double initial_loss = -1.0;

  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t k = n_train; k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);

    double loss_sum = 0.0;
    for (std::size_t first = 0; first < n_train; first += hp.batch_size) {
      const std::size_t count = std::min(hp.batch_size, n_train - first);
      gather(fit_set, std::span(order).subspan(first, count), batch_inputs, batch_targets);
      ForwardResult fw = forward(params, batch_inputs, true, rng);
      LossResult loss = mse_loss(fw.predictions.values(), batch_targets);
      if (!std::isfinite(loss.loss)) throw NumericError("training loss became non-finite");
      if (initial_loss < 0.0) initial_loss = loss.loss;
      if (loss.loss > 1e6 * std::max(initial_loss, 1e-12)) {
        throw DivergenceError("loss " + format_double(loss.loss) + " exceeds 1e6 x initial loss " +
                              format_double(initial_loss));
      }
      const Matrix loss_grad(count, hp.dense_units, std::move(loss.grad));
      const Gradients grads = backward(params, fw.cache, loss_grad);
      adam_step(params, grads, adam);
      loss_sum += loss.loss * static_cast<double>(count);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_mse = loss_sum / static_cast<double>(n_train);
    rec.val_mse = evaluate_mse(params, val_set);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!std::isfinite(rec.val_mse)) throw NumericError("validation loss became non-finite");
    result.history.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);

    if (rec.val_mse < best_val) {
      best_val = rec.val_mse;
      result.params = params;
      result.history.best_epoch = epoch;
      result.history.best_val_mse = rec.val_mse;
    }
    if (rec.val_mse < reference - options.early_stop.min_delta) {
      reference = rec.val_mse;
      stale = 0;
    } else if (++stale >= options.early_stop.patience) {
      result.history.stop_reason = StopReason::EarlyStopped;
      break;
    }
  }
  return result;
}

std::string history_csv(const TrainHistory& history) {
  std::ostringstream out;
  out << "epoch,train_mse,val_mse\n";
  for (const auto& e : history.epochs) {
    out << e.epoch << ',' << format_double(e.train_mse) << ',' << format_double(e.val_mse) << '\n';
  }
  return out.str();
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << history_csv(history);
}

Grid Grid::defaults(const HyperParams& base) {
  Grid g;
  g.units = {50, 100, 200};
  g.learning_rates = {1e-3, 1e-2};
  g.timesteps = {24};
  g.dropouts = {base.dropout};
  g.batch_sizes = {base.batch_size};
  return g;
}

std::size_t Grid::combinations() const noexcept {
  return units.size() * timesteps.size() * learning_rates.size() * dropouts.size() *
         batch_sizes.size();
}

std::vector<HyperParams> Grid::expand(const HyperParams& base) const {
  std::vector<HyperParams> out;
  out.reserve(combinations());
  for (std::size_t u : units)
    for (std::size_t t : timesteps)
      for (double lr : learning_rates)
        for (double d : dropouts)
          for (std::size_t b : batch_sizes) {
            HyperParams h = base;
            h.units = u;
            h.timesteps = t;
            h.learning_rate = lr;
            h.dropout = d;
            h.batch_size = b;
            out.push_back(h);
          }
  return out;
}

std::vector<double> cross_validate(const HyperParams& hyper, std::span<const double> series,
                                   const CvOptions& cv, Rng& rng, const TrainOptions& options) {
  if (cv.folds == 0) throw ConfigError("cross-validation needs at least one fold");
  hyper.validate();
  const std::size_t fold = series.size() / (cv.folds + 1);
  const std::size_t min_train = hyper.timesteps + hyper.horizon;
  if (fold == 0 || fold < min_train) {
    throw WindowError("series of length " + std::to_string(series.size()) + " too short for " +
                      std::to_string(cv.folds) + " folds at timesteps=" +
                      std::to_string(hyper.timesteps));
  }
  std::vector<double> maes;
  for (std::size_t k = 1; k <= cv.folds; ++k) {
    const std::size_t train_end = k * fold;
    const WindowedDataset train_w = make_windows(series.first(train_end), hyper.timesteps, hyper.horizon);
    const WindowedDataset val_w =
        make_windows_from(series.first(train_end + fold), hyper.timesteps, hyper.horizon, train_end);
    const ModelParams init = ModelParams::initialize(hyper, rng);
    const TrainResult trained = train(init, train_w, rng, options);
    const Matrix pred = predict(trained.params, val_w.inputs);
    double abs_sum = 0.0;
    for (std::size_t j = 0; j < val_w.size(); ++j) abs_sum += std::abs(pred(j, 0) - val_w.targets[j]);
    maes.push_back(abs_sum / static_cast<double>(val_w.size()));
  }
  return maes;
}

GridResult grid_search(const Grid& grid, std::span<const double> series, const HyperParams& base,
                       const CvOptions& cv, std::uint64_t seed, const TrainOptions& options) {
  if (grid.combinations() == 0) throw GridError("grid has an empty hyperparameter list");
  if (cv.folds == 0) throw ConfigError("cross-validation needs at least one fold");
  const std::vector<HyperParams> combos = grid.expand(base);
  for (const auto& h : combos) h.validate();

  GridResult result;
  const std::size_t fold = series.size() / (cv.folds + 1);
  bool have_best = false;
  for (std::size_t c = 0; c < combos.size(); ++c) {
    GridEntry entry;
    entry.index = c;
    entry.hyper = combos[c];
    if (fold < combos[c].timesteps + combos[c].horizon) {
      entry.skip_reason = "series too short: fold size " + std::to_string(fold) +
                          " < timesteps + horizon";
      result.table.push_back(std::move(entry));
      continue;
    }
    Rng rng(seed ^ static_cast<std::uint64_t>(c));
    entry.fold_mae = cross_validate(combos[c], series, cv, rng, options);
    result.training_runs += entry.fold_mae.size();
    entry.feasible = true;
    entry.score = std::accumulate(entry.fold_mae.begin(), entry.fold_mae.end(), 0.0) /
                  static_cast<double>(entry.fold_mae.size());

    auto key = [](const GridEntry& e) {
      return std::make_tuple(e.score, e.hyper.units, e.hyper.timesteps, e.index);
    };
    if (!have_best || key(entry) < key(result.table[result.best_index])) {
      result.best_index = c;
      have_best = true;
    }
    result.table.push_back(std::move(entry));
  }
  if (!have_best) throw GridError("no feasible hyperparameter combination for this series");
  result.best = result.table[result.best_index].hyper;
  return result;
}

void write_grid_csv(const GridResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "index,units,timesteps,learning_rate,dropout,batch_size,feasible,score,selected\n";
  for (const auto& e : result.table) {
    out << e.index << ',' << e.hyper.units << ',' << e.hyper.timesteps << ','
        << format_double(e.hyper.learning_rate) << ',' << format_double(e.hyper.dropout) << ','
        << e.hyper.batch_size << ',' << (e.feasible ? 1 : 0) << ','
        << (e.feasible ? format_double(e.score) : std::string("")) << ','
        << (e.feasible && e.index == result.best_index ? 1 : 0) << '\n';
  }
}

}  // namespace redf
