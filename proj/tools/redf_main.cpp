#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "redf/commands.hpp"
#include "redf/error.hpp"

namespace {

struct Flags {
  redf::RunConfig config;
  std::string scaler;  // empty: minmax for benchmark, zscore elsewhere
  std::string data;
  std::string out = "out";
  std::vector<std::string> artifacts;
  std::string history;
  std::vector<std::string> plot_inputs;
};

void add_data_flags(CLI::App* cmd, Flags& f) {
  auto& c = f.config;
  cmd->add_option("--data", f.data, "hourly demand CSV (Datetime,<ZONE>_MW)")->required();
  cmd->add_option("--zone", c.zone, "zone name; defaults to the CSV header");
  cmd->add_option("--scaler", f.scaler, "zscore or minmax (benchmark defaults to minmax)")->check(CLI::IsMember({"zscore", "minmax"}));
  cmd->add_option("--last", c.last, "keep only the final N hours (0 = all)");
  cmd->add_option("--split", c.train_ratio, "training fraction of the chronological split");
  cmd->add_option("--max-gap", c.max_gap, "longest gap (hours) filled by interpolation");
  cmd->add_option("--outlier-k", c.outlier_k, "IQR multiplier for outlier clipping");
}

void add_model_flags(CLI::App* cmd, Flags& f) {
  auto& h = f.config.hyper;
  cmd->add_option("--timesteps", h.timesteps, "input window length in hours");
  cmd->add_option("--horizon", h.horizon, "forecast horizon in hours");
  cmd->add_option("--units", h.units, "LSTM units per layer");
  cmd->add_option("--epochs", h.epochs, "maximum training epochs");
  cmd->add_option("--batch", h.batch_size, "mini-batch size");
  cmd->add_option("--dropout", h.dropout, "dropout rate after each LSTM layer");
  cmd->add_option("--lr", h.learning_rate, "Adam learning rate");
  cmd->add_option("--patience", f.config.early_stop.patience, "early-stopping patience in epochs");
  cmd->add_option("--min-delta", f.config.early_stop.min_delta, "minimum validation improvement");
  cmd->add_option("--val-fraction", f.config.validation_fraction, "share of training windows held out");
}

void add_common_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--seed", f.config.seed, "random seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_flag("--quiet", f.config.quiet, "suppress per-epoch lines");
}

void finish(Flags& f, bool benchmark) {
  auto& c = f.config;
  if (f.scaler.empty()) f.scaler = benchmark ? "minmax" : "zscore";
  c.scaler = redf::scaler_kind_from_string(f.scaler);
  c.data = f.data;
  c.out = f.out;
  c.history_file = f.history;
  for (const auto& a : f.artifacts) c.artifacts.emplace_back(a);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Short-term energy demand forecasting with a two-layer LSTM"};
  app.require_subcommand(1);
  Flags f;

  auto* preprocess = app.add_subcommand("preprocess", "clean a dataset and cache it with metadata");
  add_data_flags(preprocess, f);
  add_common_flags(preprocess, f);

  auto* train = app.add_subcommand("train", "train a model and write the artifact and loss history");
  add_data_flags(train, f);
  add_model_flags(train, f);
  add_common_flags(train, f);

  auto* grid = app.add_subcommand("grid-search", "cross-validated hyperparameter search");
  add_data_flags(grid, f);
  add_model_flags(grid, f);
  add_common_flags(grid, f);
  grid->add_option("--grid-units", f.config.grid.units, "candidate unit counts")->delimiter(',');
  grid->add_option("--grid-timesteps", f.config.grid.timesteps, "candidate window lengths")->delimiter(',');
  grid->add_option("--grid-lr", f.config.grid.learning_rates, "candidate learning rates")->delimiter(',');
  grid->add_option("--grid-dropout", f.config.grid.dropouts, "candidate dropout rates")->delimiter(',');
  grid->add_option("--grid-batch", f.config.grid.batch_sizes, "candidate batch sizes")->delimiter(',');
  grid->add_option("--folds", f.config.folds, "expanding-window folds");

  auto* bench = app.add_subcommand("benchmark", "compare REDf with baselines and published figures");
  add_data_flags(bench, f);
  add_model_flags(bench, f);
  add_common_flags(bench, f);
  bench->add_option("--models", f.config.models, "subset of redf,naive,rfr")->delimiter(',');
  bench->add_option("--season", f.config.season, "seasonal-naive lag in hours");
  bench->add_option("--trees", f.config.forest.n_trees, "random forest size");
  bench->add_option("--tree-depth", f.config.forest.tree.max_depth, "maximum tree depth");
  bench->add_option("--min-leaf", f.config.forest.tree.min_samples_leaf, "minimum samples per leaf");

  auto* plot = app.add_subcommand("plot", "render history or prediction CSVs as SVG");
  plot->add_option("--input", f.plot_inputs, "CSV written by train or benchmark")->required();
  add_common_flags(plot, f);

  auto* serve = app.add_subcommand("serve", "answer forecast requests from trained artifacts");
  serve->add_option("--artifact", f.artifacts, "model artifact; repeat for several models")->required();
  serve->add_option("--listen", f.config.listen, "host:port to accept requests on");
  serve->add_option("--broker", f.config.broker, "host:port of a broker to take requests from");

  auto* broker = app.add_subcommand("broker", "run the in-memory message broker");
  broker->add_option("--listen", f.config.listen, "host:port to listen on")->required();

  auto* predict = app.add_subcommand("predict", "one-shot forecast printed in MW, one value per line");
  predict->add_option("--model", f.config.model, "model name (artifact file stem)");
  predict->add_option("--horizon", f.config.hyper.horizon, "steps to forecast");
  predict->add_option("--history", f.history, "file with one MW value per line");
  predict->add_option("--values", f.config.values, "inline MW values")->delimiter(',');
  predict->add_flag("--local", f.config.local, "run in-process from --artifact");
  predict->add_option("--artifact", f.artifacts, "artifact for --local");
  predict->add_option("--server", f.config.server, "model server host:port");
  predict->add_option("--broker", f.config.broker, "broker host:port");
  predict->add_option("--timeout", f.config.timeout_seconds, "seconds to wait for a reply");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (auto& ch : msg) {
      if (ch == '\n') ch = ' ';
    }
    std::cerr << "error: UsageError: " << msg << "\n";
    return 2;
  }

  try {
    finish(f, bench->parsed());
    std::ostream& log = std::cout;
    if (*preprocess) {
      redf::cmd_preprocess(f.config, log);
    } else if (*train) {
      redf::cmd_train(f.config, log);
    } else if (*grid) {
      redf::cmd_grid_search(f.config, log);
    } else if (*bench) {
      redf::cmd_benchmark(f.config, log);
    } else if (*plot) {
      std::vector<std::filesystem::path> inputs(f.plot_inputs.begin(), f.plot_inputs.end());
      redf::cmd_plot(f.config, inputs, log);
    } else if (*serve) {
      redf::cmd_serve(f.config, log);
    } else if (*broker) {
      redf::cmd_broker(f.config, log);
    } else if (*predict) {
      for (double v : redf::cmd_predict(f.config)) std::printf("%s\n", redf::format_double(v).c_str());
    }
  } catch (const redf::Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: InternalError: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
