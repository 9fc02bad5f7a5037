#include <doctest.h>

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <sstream>
#include <thread>

#include "redf/commands.hpp"
#include "redf/error.hpp"
#include "redf/protocol.hpp"
#include "support.hpp"

using namespace redf;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int status = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

CliResult run_cli(const testing::TempDir& dir, const std::string& args) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = quote(REDF_CLI_PATH) + " " + args + " >" + quote(out.string()) + " 2>" + quote(err.string());
  const int rc = std::system(cmd.c_str());
  CliResult r;
  r.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = testing::read_file(out);
  r.err = testing::read_file(err);
  return r;
}

RunConfig fixture_config(const testing::TempDir& dir, std::size_t n = 400) {
  const auto values = testing::synthetic_load(n);
  testing::write_hourly_csv(dir / "FIX_hourly.csv", "FIX", values);
  RunConfig c;
  c.data = dir / "FIX_hourly.csv";
  c.out = dir / "out";
  c.hyper.units = 4;
  c.hyper.epochs = 2;
  c.hyper.batch_size = 32;
  c.hyper.timesteps = 12;
  c.quiet = true;
  return c;
}

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(e.path());
  }
  return out;
}

}  // namespace

TEST_SUITE("commands") {

TEST_CASE("config validation") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.seed == kDefaultSeed);
  // Published training constants.
  CHECK(c.hyper.units == 200);
  CHECK(c.hyper.epochs == 10);
  CHECK(c.hyper.batch_size == 1000);
  CHECK(c.hyper.dropout == 0.1);
  CHECK(c.hyper.learning_rate == 0.001);
  CHECK(c.train_ratio == 0.8);
  c.train_ratio = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.early_stop.patience = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.models = {"redf", "svr"};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.hyper.dropout = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("prepare frames train and test windows after the split") {
  testing::TempDir dir;
  RunConfig c = fixture_config(dir);
  c.last = 300;
  const PreparedData d = prepare(c);
  CHECK(d.series.points.size() == 300);
  CHECK(d.split == 240);
  CHECK(d.train.size() == 240 - 12);
  CHECK(d.test.size() == 60);
  CHECK(d.test_target_index.front() == 240);
  CHECK(d.test.targets.front() == d.scaled[240]);
  CHECK(d.test.inputs(0, 11) == d.scaled[239]);
  // Scaler fitted on the training part only.
  const auto values = d.series.values();
  CHECK(d.scaler == fit_scaler(std::span(values).first(240), ScalerKind::ZScore));
}

TEST_CASE("preprocess writes a deterministic cache and metadata") {
  testing::TempDir dir;
  RunConfig c = fixture_config(dir);
  std::ostringstream log;
  const auto a = cmd_preprocess(c, log);
  const std::string cache1 = testing::read_file(a.cache), meta1 = testing::read_file(a.metadata);
  const auto b = cmd_preprocess(c, log);
  CHECK(testing::read_file(b.cache) == cache1);
  CHECK(testing::read_file(b.metadata) == meta1);
  CHECK(a.raw_rows == 400);
  const Json meta = Json::parse(meta1);
  CHECK(meta["raw_rows"] == 400);
  CHECK(meta["zone"] == "FIX");
  CHECK(load_csv(a.cache, "FIX").series.points.size() == 400);
}

TEST_CASE("train smoke run is fast and deterministic") {
  testing::TempDir dir;
  RunConfig c = fixture_config(dir, 100);
  c.hyper.units = 4;
  c.hyper.epochs = 1;
  c.hyper.timesteps = 24;
  std::ostringstream log;
  const auto start = std::chrono::steady_clock::now();
  const auto first = cmd_train(c, log);
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(5));
  const std::string hist = testing::read_file(first.history_csv);
  const std::string art = testing::read_file(first.artifact);
  const auto second = cmd_train(c, log);
  CHECK(testing::read_file(second.history_csv) == hist);
  CHECK(testing::read_file(second.artifact) == art);
  CHECK(first.history.epochs.size() == 1);
  for (const auto& p : files_under(dir / "out")) CHECK(p.parent_path() == dir / "out");
}

TEST_CASE("benchmark report rows") {
  testing::TempDir dir;
  testing::write_hourly_csv(dir / "DAYTON_hourly.csv", "DAYTON", testing::synthetic_load(500));
  RunConfig c = fixture_config(dir);
  c.data = dir / "DAYTON_hourly.csv";
  c.forest.n_trees = 5;
  std::ostringstream log;
  const auto s = cmd_benchmark(c, log);
  std::size_t computed = 0, published = 0;
  for (const auto& row : s.rows) {
    if (row.provenance == Provenance::Computed) {
      ++computed;
      CHECK(row.rmse >= row.mae);
    } else {
      ++published;
    }
  }
  CHECK(computed == 6);
  CHECK(published == 4);
  const std::string csv = testing::read_file(s.report_csv);
  CHECK(csv.find("SVR,DAYTON,UNSPECIFIED,11.064,24.873,0.976,PAPER_REPORTED") != std::string::npos);
  for (const auto& f : s.figures) CHECK(fs::exists(f));
  for (const auto& p : files_under(dir / "out")) CHECK(p.parent_path() == dir / "out");

  std::ostringstream plot_log;
  const auto svgs = cmd_plot(c, {dir / "out" / "DAYTON_history.csv", dir / "out" / "DAYTON_rfr_predictions.csv"}, plot_log);
  CHECK(svgs.size() == 2);
  for (const auto& f : svgs) CHECK(testing::read_file(f).rfind("<svg", 0) == 0);
}

TEST_CASE("history reader") {
  testing::TempDir dir;
  testing::write_file(dir / "h.txt", "1.5\n2\n\n3e2\n");
  CHECK(read_history(dir / "h.txt") == std::vector<double>{1.5, 2, 300});
  testing::write_file(dir / "h.csv", "Datetime,X_MW\n2010-01-01 00:00:00,10\n2010-01-01 01:00:00,11\n");
  CHECK(read_history(dir / "h.csv") == std::vector<double>{10, 11});
  testing::write_file(dir / "bad.txt", "1\nx\n");
  CHECK_THROWS_AS(read_history(dir / "bad.txt"), RowError);
}

TEST_CASE("cli: missing data file gives one error line naming the path") {
  testing::TempDir dir;
  const auto r = run_cli(dir, "preprocess --data /nonexistent/AEP_hourly.csv --out " + quote((dir / "o").string()));
  CHECK(r.status != 0);
  CHECK(r.err.find("/nonexistent/AEP_hourly.csv") != std::string::npos);
  CHECK(r.err.rfind("error: IoError: ", 0) == 0);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);

  const auto usage = run_cli(dir, "train --units 4");
  CHECK(usage.status != 0);
  CHECK(usage.err.rfind("error: UsageError: ", 0) == 0);
  CHECK(std::count(usage.err.begin(), usage.err.end(), '\n') == 1);
}

TEST_CASE("cli: predict locally and through a server prints identical values") {
  testing::TempDir dir;
  RunConfig c = fixture_config(dir, 200);
  std::ostringstream log;
  const auto trained = cmd_train(c, log);
  const auto h = testing::synthetic_load(40);
  std::string values;
  for (double v : h) values += (values.empty() ? "" : ",") + std::to_string(v);

  const auto local = run_cli(dir, "predict --local --artifact " + quote(trained.artifact.string()) +
                                      " --horizon 3 --values " + values);
  REQUIRE(local.status == 0);
  CHECK(std::count(local.out.begin(), local.out.end(), '\n') == 3);

  const fs::path serve_log = dir / "serve.log";
  const pid_t pid = fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    const std::string artifact = trained.artifact.string();
    if (freopen(serve_log.c_str(), "w", stdout) == nullptr) _exit(126);
    execl(REDF_CLI_PATH, REDF_CLI_PATH, "serve", "--artifact", artifact.c_str(), "--listen", "127.0.0.1:0",
          static_cast<char*>(nullptr));
    _exit(127);
  }
  std::string port;
  for (int k = 0; k < 100 && port.empty(); ++k) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    const std::string text = testing::read_file(serve_log);
    const auto at = text.find("listening on 127.0.0.1:");
    if (at != std::string::npos) {
      const auto end = text.find('\n', at);
      if (end != std::string::npos) port = text.substr(at + 23, end - at - 23);
    }
  }
  REQUIRE(!port.empty());
  const auto served = run_cli(dir, "predict --model FIX --server 127.0.0.1:" + port + " --horizon 3 --values " + values);
  CHECK(served.status == 0);
  CHECK(served.out == local.out);

  kill(pid, SIGINT);
  int status = 0;
  waitpid(pid, &status, 0);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
}

}  // TEST_SUITE
