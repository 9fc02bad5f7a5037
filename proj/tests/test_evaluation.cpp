#include <doctest.h>

#include <cmath>

#include "redf/error.hpp"
#include "redf/evaluation.hpp"
#include "support.hpp"

using namespace redf;

TEST_SUITE("evaluation") {

TEST_CASE("metric hand values") {
  CHECK(mae(std::vector<double>{2, 4}, std::vector<double>{1, 6}) == 1.5);
  CHECK(rmse(std::vector<double>{0, 0}, std::vector<double>{3, 4}) == std::sqrt(12.5));
  const std::vector<double> y = {1, 2, 3, 4};
  CHECK(mae(y, y) == 0.0);
  CHECK(rmse(y, y) == 0.0);
  CHECK(r2(y, y) == 1.0);
  CHECK(r2(y, std::vector<double>(4, 2.5)) == 0.0);
  const std::vector<double> shifted = {1.5, 2.5, 3.5, 4.5};
  CHECK(rmse(y, shifted) == 0.5);
  // Negative R^2 is legal.
  CHECK(r2(y, std::vector<double>{4, 3, 2, 1}) < 0.0);
}

TEST_CASE("metric errors") {
  CHECK_THROWS_AS(mae(std::vector<double>{1, 2}, std::vector<double>{1}), ShapeError);
  CHECK_THROWS_AS(rmse(std::vector<double>{1}, std::vector<double>{1}), ShapeError);
  CHECK_THROWS_AS(r2(std::vector<double>{3, 3, 3}, std::vector<double>{1, 2, 3}), DegenerateVarianceError);
}

TEST_CASE("evaluate reports both unit systems") {
  const std::vector<double> mw = {1000, 1500, 1200, 1800, 1100};
  const Scaler s = fit_scaler(mw, ScalerKind::MinMax);
  const auto targets = s.apply(mw);
  std::vector<double> forecasts = targets;
  const auto perfect = evaluate("M", "D", forecasts, targets, s);
  CHECK(perfect[0].unit == "SCALED");
  CHECK(perfect[1].unit == "MW");
  for (const auto& row : perfect) {
    CHECK(row.mae == 0.0);
    CHECK(row.rmse == 0.0);
    CHECK(row.r2 == 1.0);
    CHECK(row.provenance == Provenance::Computed);
  }
  forecasts = {0.1, 0.6, 0.2, 0.9, 0.05};
  const auto rows = evaluate("M", "D", forecasts, targets, s);
  CHECK(std::abs(rows[1].mae - rows[0].mae * 800.0) < 1e-9);
  CHECK(std::abs(rows[1].rmse - rows[0].rmse * 800.0) < 1e-9);
  CHECK(std::abs(rows[1].r2 - rows[0].r2) < 1e-12);
}

TEST_CASE("published figures") {
  const auto aep = published_rows("AEP");
  REQUIRE(aep.size() == 4);
  CHECK(aep[0].model == "REDf");
  CHECK(aep[0].mae == 0.015);
  CHECK(aep[0].r2 == 0.983);
  CHECK(aep[1].model == "SVR");
  CHECK(aep[1].r2 == 0.982);
  CHECK(aep[1].mae == 159.269);
  CHECK(aep[1].rmse == 346.603);
  for (const auto& row : aep) {
    CHECK(row.provenance == Provenance::PaperReported);
    CHECK(row.unit == "UNSPECIFIED");
  }
  const auto pjme = published_rows("PJME");
  CHECK(pjme[0].rmse == 0.020);
  const auto comed = published_rows("COMED");
  CHECK(comed[2].model == "Prophet");
  CHECK(comed[2].r2 == -0.021);
  CHECK(published_rows("DAYTON")[3].mae == 300.336);
  CHECK(published_rows("ERCOT").empty());
}

TEST_CASE("report csv") {
  std::vector<MetricsRow> rows = {{"REDf", "AEP", "SCALED", 0.5, 0.75, 0.25, Provenance::Computed}};
  rows.push_back(published_rows("AEP")[1]);
  const std::string csv = report_csv(rows);
  CHECK(csv.rfind("model,dataset,unit,mae,rmse,r2,provenance\nREDf,AEP,SCALED,0.5,0.75,0.25,COMPUTED\n", 0) == 0);
  CHECK(csv.find("SVR,AEP,UNSPECIFIED,159.269,346.603,0.982,PAPER_REPORTED\n") != std::string::npos);
}

TEST_CASE("prediction export") {
  testing::TempDir dir;
  const std::vector<Timestamp> t = {*parse_timestamp("2018-01-01 00:00:00"), *parse_timestamp("2018-01-01 01:00:00"),
                                    *parse_timestamp("2018-01-01 02:00:00")};
  const std::vector<double> a = {1, 2, 3}, p = {1.5, 2.5, 2.75};
  export_predictions(t, a, p, dir / "p.csv");
  CHECK(testing::read_file(dir / "p.csv") ==
        "timestamp,actual_mw,predicted_mw\n2018-01-01 00:00:00,1,1.5\n2018-01-01 01:00:00,2,2.5\n"
        "2018-01-01 02:00:00,3,2.75\n");
  export_predictions({}, {}, {}, dir / "e.csv");
  CHECK(testing::read_file(dir / "e.csv") == "timestamp,actual_mw,predicted_mw\n");
}

TEST_CASE("svg output") {
  PlotSpec spec;
  spec.title = "loss & more";
  spec.x_label = "epoch";
  spec.y_label = "mse";
  spec.series = {{"train", {3, 2, 1}}, {"validation", {4, 2.5, 2}}};
  const std::string a = render_svg(spec);
  CHECK(a == render_svg(spec));
  CHECK(a.rfind("<svg", 0) == 0);
  CHECK(a.find("width=\"960\"") != std::string::npos);
  CHECK(a.find("loss &amp; more") != std::string::npos);
  std::size_t lines = 0;
  for (std::size_t pos = 0; (pos = a.find("<polyline", pos)) != std::string::npos; ++pos) ++lines;
  CHECK(lines == 2);

  PlotSpec empty = spec;
  empty.series = {{"actual", {}}, {"predicted", {}}};
  const std::string e = render_svg(empty);
  CHECK(e.find("<polyline") == std::string::npos);
  CHECK(e.find("<line") != std::string::npos);

  testing::TempDir dir;
  render_plot(spec, dir / "a.svg");
  render_plot(spec, dir / "b.svg");
  CHECK(testing::read_file(dir / "a.svg") == testing::read_file(dir / "b.svg"));
}

}  // TEST_SUITE
