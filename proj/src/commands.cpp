#include "redf/commands.hpp"

#include <signal.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "redf/artifact.hpp"
#include "redf/broker.hpp"
#include "redf/client.hpp"
#include "redf/error.hpp"
#include "redf/model_server.hpp"

namespace redf {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

fs::path out_file(const RunConfig& config, const std::string& zone, const std::string& suffix) {
  fs::create_directories(config.out);
  return config.out / (zone + suffix);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<double> first_column(const Matrix& m) {
  std::vector<double> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = m(r, 0);
  return out;
}

TrainOptions train_options(const RunConfig& config, std::ostream& log) {
  TrainOptions options;
  options.early_stop = config.early_stop;
  options.validation_fraction = config.validation_fraction;
  if (!config.quiet) {
    const std::size_t epochs = config.hyper.epochs;
    options.on_epoch = [&log, epochs](const EpochRecord& r) {
      log << "epoch " << r.epoch << "/" << epochs << " train_mse=" << fmt(r.train_mse)
          << " val_mse=" << fmt(r.val_mse) << " seconds=" << fmt(r.seconds) << "\n";
      log.flush();
    };
  }
  return options;
}

TrainResult fit_redf(const RunConfig& config, const PreparedData& data, std::ostream& log) {
  Rng rng(config.seed);
  const ModelParams initial = ModelParams::initialize(config.hyper, rng);
  return train(initial, data.train, rng, train_options(config, log));
}

// Blocks SIGINT/SIGTERM in the calling thread so that threads spawned
// afterwards inherit the mask and the signal is delivered to sigwait.
class SignalGate {
 public:
  SignalGate() {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set_, &previous_);
  }
  ~SignalGate() { pthread_sigmask(SIG_SETMASK, &previous_, nullptr); }
  void wait() {
    int sig = 0;
    sigwait(&set_, &sig);
  }

 private:
  sigset_t set_{};
  sigset_t previous_{};
};

void run_until_stopped(const StopWaiter& wait_for_stop, std::optional<SignalGate>& gate) {
  if (wait_for_stop) {
    wait_for_stop();
  } else {
    gate->wait();
  }
}

}  // namespace

void RunConfig::validate() const {
  hyper.validate();
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw ConfigError("--split must lie in (0, 1)");
  if (!(outlier_k > 0.0) || !std::isfinite(outlier_k)) throw ConfigError("--outlier-k must be positive");
  if (early_stop.patience < 1) throw ConfigError("--patience must be at least 1");
  if (!(early_stop.min_delta >= 0.0)) throw ConfigError("--min-delta must be non-negative");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("--val-fraction must lie in (0, 1)");
  }
  if (folds < 1) throw ConfigError("--folds must be at least 1");
  if (season < 1) throw ConfigError("--season must be positive");
  if (forest.n_trees < 1) throw ConfigError("--trees must be at least 1");
  if (forest.tree.max_depth < 1) throw ConfigError("--tree-depth must be at least 1");
  if (forest.tree.min_samples_leaf < 1) throw ConfigError("--min-leaf must be at least 1");
  if (!(timeout_seconds > 0.0)) throw ConfigError("--timeout must be positive");
  for (const auto& m : models) {
    if (m != "redf" && m != "naive" && m != "rfr") throw ConfigError("unknown model '" + m + "' in --models");
  }
  if (out.empty()) throw ConfigError("--out must not be empty");
}

PreparedData prepare(const RunConfig& config) {
  config.validate();
  if (config.data.empty()) throw ConfigError("--data is required");
  PreparedData d;
  LoadedSeries loaded = load_csv(config.data, config.zone);
  d.zone = loaded.series.zone;
  d.load = std::move(loaded.report);
  TimeSeries ts = handle_missing(loaded.series, config.max_gap, &d.missing);
  if (config.last > 0 && ts.points.size() > config.last) {
    ts.points.erase(ts.points.begin(), ts.points.end() - static_cast<std::ptrdiff_t>(config.last));
  }
  d.series = handle_outliers(ts, config.outlier_k, &d.clipped);

  const std::vector<double> values = d.series.values();
  d.split = split_point(values.size(), config.train_ratio);
  if (d.split == 0 || d.split >= values.size()) throw SplitError("split leaves an empty side");
  d.scaler = fit_scaler(std::span(values).first(d.split), config.scaler);
  d.scaled = d.scaler.apply(values);

  const std::size_t steps = config.hyper.timesteps;
  const std::size_t h = config.hyper.horizon;
  d.train = make_windows(std::span(d.scaled).first(d.split), steps, h);
  d.test = make_windows_from(d.scaled, steps, h, d.split);
  const std::size_t first = std::max(d.split, steps + h - 1);
  for (std::size_t k = 0; k < d.test.size(); ++k) d.test_target_index.push_back(first + k);
  return d;
}

PreprocessSummary cmd_preprocess(const RunConfig& config, std::ostream& log) {
  config.validate();
  if (config.data.empty()) throw ConfigError("--data is required");
  LoadedSeries loaded = load_csv(config.data, config.zone);
  const std::string zone = loaded.series.zone;
  MissingReport missing;
  std::size_t clipped = 0;
  TimeSeries ts;
  if (!loaded.series.points.empty()) {
    ts = handle_missing(loaded.series, config.max_gap, &missing);
    if (config.last > 0 && ts.points.size() > config.last) {
      ts.points.erase(ts.points.begin(), ts.points.end() - static_cast<std::ptrdiff_t>(config.last));
    }
    ts = handle_outliers(ts, config.outlier_k, &clipped);
  } else {
    ts.zone = zone;
  }

  PreprocessSummary s;
  s.raw_rows = loaded.report.raw_rows;
  s.cache = out_file(config, zone, "_clean.csv");
  s.metadata = out_file(config, zone, "_meta.json");
  write_csv(ts, s.cache);

  nlohmann::ordered_json meta;
  meta["zone"] = zone;
  meta["source"] = config.data.filename().string();
  meta["raw_rows"] = loaded.report.raw_rows;
  meta["unique_timestamps"] = loaded.series.points.size();
  meta["duplicate_rows"] = loaded.report.duplicate_rows;
  meta["row_errors"] = loaded.report.row_errors.size();
  meta["hourly_points"] = ts.points.size();
  meta["interpolated"] = missing.interpolated;
  meta["weekly_filled"] = missing.weekly_filled;
  meta["median_filled"] = missing.median_filled;
  meta["outliers_clipped"] = clipped;
  meta["outlier_k"] = config.outlier_k;
  meta["max_gap"] = config.max_gap;
  if (!ts.points.empty()) {
    meta["start"] = format_timestamp(ts.points.front().time);
    meta["end"] = format_timestamp(ts.points.back().time);
  }
  write_text(s.metadata, meta.dump(2) + "\n");

  log << zone << ": " << loaded.report.raw_rows << " raw rows, " << ts.points.size() << " hourly points, "
      << loaded.report.row_errors.size() << " bad rows, " << clipped << " clipped\n";
  for (const auto& issue : loaded.report.row_errors) log << "  line " << issue.line << ": " << issue.message << "\n";
  return s;
}

TrainSummary cmd_train(const RunConfig& config, std::ostream& log) {
  const PreparedData data = prepare(config);
  TrainResult result = fit_redf(config, data, log);

  TrainSummary s;
  s.artifact = out_file(config, data.zone, ".redf");
  s.history_csv = out_file(config, data.zone, "_history.csv");
  serialize(result.params, data.scaler, s.artifact);
  write_history_csv(result.history, s.history_csv);

  const auto forecasts = first_column(predict(result.params, data.test.inputs));
  s.test_metrics = evaluate("REDf", data.zone, forecasts, data.test.targets, data.scaler);
  s.history = std::move(result.history);
  log << "stop=" << to_string(s.history.stop_reason) << " best_epoch=" << s.history.best_epoch
      << " test_mae_scaled=" << fmt(s.test_metrics[0].mae) << " test_r2=" << fmt(s.test_metrics[0].r2)
      << " artifact=" << s.artifact.string() << "\n";
  return s;
}

GridSummary cmd_grid_search(const RunConfig& config, std::ostream& log) {
  const PreparedData data = prepare(config);
  Grid grid = Grid::defaults(config.hyper);
  if (!config.grid.units.empty()) grid.units = config.grid.units;
  if (!config.grid.timesteps.empty()) grid.timesteps = config.grid.timesteps;
  if (!config.grid.learning_rates.empty()) grid.learning_rates = config.grid.learning_rates;
  if (!config.grid.dropouts.empty()) grid.dropouts = config.grid.dropouts;
  if (!config.grid.batch_sizes.empty()) grid.batch_sizes = config.grid.batch_sizes;

  RunConfig quiet = config;
  quiet.quiet = true;
  GridSummary s;
  s.result = grid_search(grid, std::span(data.scaled).first(data.split), config.hyper, CvOptions{config.folds},
                         config.seed, train_options(quiet, log));
  s.table_csv = out_file(config, data.zone, "_grid.csv");
  write_grid_csv(s.result, s.table_csv);
  const auto& best = s.result.best;
  log << "best: units=" << best.units << " timesteps=" << best.timesteps << " lr=" << fmt(best.learning_rate)
      << " dropout=" << fmt(best.dropout) << " batch=" << best.batch_size
      << " cv_mae=" << fmt(s.result.table[s.result.best_index].score) << " runs=" << s.result.training_runs
      << "\n";
  return s;
}

BenchmarkSummary cmd_benchmark(const RunConfig& config, std::ostream& log) {
  const PreparedData data = prepare(config);
  BenchmarkSummary s;
  const std::vector<double> actual_mw = data.scaler.invert(data.test.targets);
  std::vector<Timestamp> stamps;
  for (std::size_t i : data.test_target_index) stamps.push_back(data.series.points[i].time);

  PlotSpec forecast_plot;
  forecast_plot.title = data.zone + " test forecasts";
  forecast_plot.x_label = "hour";
  forecast_plot.y_label = "demand (MW)";
  const std::size_t shown = std::min<std::size_t>(actual_mw.size(), 500);
  forecast_plot.series.push_back({"actual", {actual_mw.begin(), actual_mw.begin() + shown}});

  for (const auto& model : config.models) {
    std::vector<double> forecasts;
    std::string label;
    if (model == "redf") {
      label = "REDf";
      TrainResult trained = fit_redf(config, data, log);
      forecasts = first_column(predict(trained.params, data.test.inputs));
      const auto hist_path = out_file(config, data.zone, "_history.csv");
      write_history_csv(trained.history, hist_path);
      PlotSpec loss;
      loss.title = data.zone + " loss";
      loss.x_label = "epoch";
      loss.y_label = "MSE (scaled)";
      PlotSeries tr{"train", {}}, va{"validation", {}};
      for (const auto& e : trained.history.epochs) {
        loss.x.push_back(static_cast<double>(e.epoch));
        tr.y.push_back(e.train_mse);
        va.y.push_back(e.val_mse);
      }
      loss.series = {tr, va};
      s.figures.push_back(out_file(config, data.zone, "_loss.svg"));
      render_plot(loss, s.figures.back());
    } else if (model == "naive") {
      label = "SeasonalNaive";
      if (config.season < config.hyper.horizon) throw ConfigError("--season must be at least the horizon");
      forecasts = seasonal_naive_at(data.scaled, data.test_target_index, config.season);
    } else {
      label = "RFR";
      forecasts = fit_forest(data.train, config.forest, config.seed).predict(data.test.inputs);
    }
    const auto rows = evaluate(label, data.zone, forecasts, data.test.targets, data.scaler);
    s.rows.insert(s.rows.end(), rows.begin(), rows.end());
    const auto predicted_mw = data.scaler.invert(forecasts);
    export_predictions(stamps, actual_mw, predicted_mw, out_file(config, data.zone, "_" + lower(label) + "_predictions.csv"));
    forecast_plot.series.push_back({label, {predicted_mw.begin(), predicted_mw.begin() + shown}});
    log << label << ": mae_scaled=" << fmt(rows[0].mae) << " rmse_scaled=" << fmt(rows[0].rmse)
        << " r2=" << fmt(rows[0].r2) << " mae_mw=" << fmt(rows[1].mae) << "\n";
  }
  for (auto& row : published_rows(data.zone)) s.rows.push_back(std::move(row));

  s.figures.push_back(out_file(config, data.zone, "_forecast.svg"));
  render_plot(forecast_plot, s.figures.back());
  s.report_csv = out_file(config, data.zone, "_report.csv");
  write_report_csv(s.rows, s.report_csv);
  log << "report=" << s.report_csv.string() << "\n";
  return s;
}

std::vector<fs::path> cmd_plot(const RunConfig& config, const std::vector<fs::path>& inputs, std::ostream& log) {
  if (inputs.empty()) throw ConfigError("plot needs at least one --input CSV");
  std::vector<fs::path> written;
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::string header;
    std::getline(in, header);
    if (!header.empty() && header.back() == '\r') header.pop_back();
    PlotSpec spec;
    spec.title = path.stem().string();
    std::vector<std::vector<double>> columns;
    std::vector<std::string> names;
    std::size_t first_value_col = 0;
    if (header == "epoch,train_mse,val_mse") {
      spec.x_label = "epoch";
      spec.y_label = "MSE (scaled)";
      names = {"train", "validation"};
      first_value_col = 1;
    } else if (header == "timestamp,actual_mw,predicted_mw") {
      spec.x_label = "hour";
      spec.y_label = "demand (MW)";
      names = {"actual", "predicted"};
      first_value_col = 1;
    } else {
      throw FormatError("'" + path.string() + "' is neither a history nor a prediction export");
    }
    columns.resize(names.size());
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::vector<std::string> fields;
      std::stringstream ss(line);
      for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
      if (fields.size() != first_value_col + names.size()) {
        throw FormatError("'" + path.string() + "' row " + std::to_string(row + 2) + " has the wrong field count");
      }
      spec.x.push_back(first_value_col == 1 && names[0] == "train" ? std::stod(fields[0])
                                                                     : static_cast<double>(row));
      for (std::size_t c = 0; c < names.size(); ++c) columns[c].push_back(std::stod(fields[first_value_col + c]));
      ++row;
    }
    for (std::size_t c = 0; c < names.size(); ++c) spec.series.push_back({names[c], std::move(columns[c])});
    fs::create_directories(config.out);
    written.push_back(config.out / (path.stem().string() + ".svg"));
    render_plot(spec, written.back());
    log << "wrote " << written.back().string() << "\n";
  }
  return written;
}

void cmd_serve(const RunConfig& config, std::ostream& log, StopWaiter wait_for_stop) {
  config.validate();
  if (config.artifacts.empty()) throw ConfigError("serve needs at least one --artifact");
  if (config.listen.empty() && config.broker.empty()) throw ConfigError("serve needs --listen or --broker");
  ModelRegistry registry;
  for (const auto& path : config.artifacts) {
    LoadedModel m = load_model(path);
    log << "loaded model " << m.name << " version " << m.version << "\n";
    registry.add(std::move(m));
  }
  std::optional<SignalGate> gate;
  if (!wait_for_stop) gate.emplace();
  ModelServer server(std::move(registry));
  if (!config.listen.empty()) {
    Address addr = Address::parse(config.listen);
    server.listen(addr);
    addr.port = server.port();
    log << "listening on " << addr.str() << "\n";
  }
  if (!config.broker.empty()) {
    server.attach_broker(Address::parse(config.broker));
    log << "serving requests from broker " << config.broker << "\n";
  }
  log.flush();
  run_until_stopped(wait_for_stop, gate);
  server.stop();
  log << "stopped\n";
}

void cmd_broker(const RunConfig& config, std::ostream& log, StopWaiter wait_for_stop) {
  config.validate();
  if (config.listen.empty()) throw ConfigError("broker needs --listen");
  std::optional<SignalGate> gate;
  if (!wait_for_stop) gate.emplace();
  Broker broker;
  Address addr = Address::parse(config.listen);
  broker.start(addr);
  addr.port = broker.port();
  log << "broker listening on " << addr.str() << "\n";
  log.flush();
  run_until_stopped(wait_for_stop, gate);
  broker.stop();
  log << "stopped\n";
}

std::vector<double> read_history(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    const std::string field = comma == std::string::npos ? line : line.substr(comma + 1);
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end == field.c_str() || *end != '\0') {
      if (out.empty() && lineno == 1) continue;  // header
      throw RowError(lineno, "'" + field + "' is not a number in '" + path.string() + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<double> cmd_predict(const RunConfig& config) {
  config.validate();
  std::vector<double> history = config.values;
  if (!config.history_file.empty()) {
    const auto more = read_history(config.history_file);
    history.insert(history.end(), more.begin(), more.end());
  }
  if (history.empty()) throw ConfigError("predict needs --history or --values");
  const std::size_t horizon = config.hyper.horizon;
  const auto timeout = std::chrono::milliseconds(static_cast<long long>(config.timeout_seconds * 1000.0));

  if (config.local) {
    if (config.artifacts.empty()) throw ConfigError("--local needs --artifact");
    const LoadedModel model = load_model(config.artifacts.front(), config.model);
    Json req = make_forecast_request("local", model.name, history, horizon);
    ModelRegistry registry;
    registry.add(model);
    return parse_forecast_response(handle_forecast_request(registry, req)).forecast;
  }
  if (config.model.empty()) throw ConfigError("predict needs --model when using a server");
  if (!config.server.empty()) {
    return client_request(Address::parse(config.server), config.model, history, horizon, timeout).forecast;
  }
  if (!config.broker.empty()) {
    return client_request_via_broker(Address::parse(config.broker), config.model, history, horizon, timeout).forecast;
  }
  throw ConfigError("predict needs --local, --server or --broker");
}

}  // namespace redf
