#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "redf/timeseries.hpp"

namespace redf {

// Metrics take (actual, predicted) of equal length n >= 2.
double mae(std::span<const double> actual, std::span<const double> predicted);
double rmse(std::span<const double> actual, std::span<const double> predicted);
// 1 - SSE/SST; throws DegenerateVarianceError when `actual` is constant.
double r2(std::span<const double> actual, std::span<const double> predicted);

enum class Provenance { Computed, PaperReported };
const char* to_string(Provenance p) noexcept;

struct MetricsRow {
  std::string model;
  std::string dataset;
  std::string unit;  // "SCALED", "MW", or "UNSPECIFIED" for published figures
  double mae = 0.0;
  double rmse = 0.0;
  double r2 = 0.0;
  Provenance provenance = Provenance::Computed;
};

// Scores forecasts against targets (both in scaled units) and again after
// inverting the scaler. Element 0 is SCALED, element 1 is MW.
std::array<MetricsRow, 2> evaluate(const std::string& model, const std::string& dataset,
                                   std::span<const double> forecasts_scaled,
                                   std::span<const double> targets_scaled, const Scaler& scaler);

// Published comparison figures for one zone (AEP, COMED, DAYTON, PJME) as
// reported, without unit conversion. Empty for unknown zones.
std::vector<MetricsRow> published_rows(const std::string& dataset);

// `model,dataset,unit,mae,rmse,r2,provenance`
std::string report_csv(std::span<const MetricsRow> rows);
void write_report_csv(std::span<const MetricsRow> rows, const std::filesystem::path& path);

// `timestamp,actual_mw,predicted_mw`
void export_predictions(std::span<const Timestamp> timestamps, std::span<const double> actual_mw,
                        std::span<const double> predicted_mw, const std::filesystem::path& path);

struct PlotSeries {
  std::string label;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<double> x;  // shared x values; empty means 0..n-1
  std::vector<PlotSeries> series;
};

// Deterministic SVG line chart on a fixed 960x480 canvas.
std::string render_svg(const PlotSpec& spec);
void render_plot(const PlotSpec& spec, const std::filesystem::path& path);

}  // namespace redf
