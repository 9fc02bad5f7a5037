#include "redf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "redf/error.hpp"

namespace redf {

namespace {

void check_inputs(std::span<const double> actual, std::span<const double> predicted) {
  if (actual.size() != predicted.size()) {
    throw ShapeError("metric inputs differ in length: " + std::to_string(actual.size()) + " vs " +
                     std::to_string(predicted.size()));
  }
  if (actual.size() < 2) throw ShapeError("metrics need at least 2 points");
}

std::string num(double v, const char* fmt) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct PublishedFigure {
  const char* model;
  const char* dataset;
  double r2;
  double mae;
  double rmse;
};

// Comparison table as published (R^2, MAE, RMSE). Units were not stated.
constexpr PublishedFigure kPublished[] = {
    {"REDf", "AEP", 0.983, 0.015, 0.024},
    {"REDf", "COMED", 0.979, 0.014, 0.022},
    {"REDf", "DAYTON", 0.980, 0.015, 0.023},
    {"REDf", "PJME", 0.985, 0.014, 0.020},
    {"SVR", "AEP", 0.982, 159.269, 346.603},
    {"SVR", "COMED", 0.958, 149.045, 471.277},
    {"SVR", "DAYTON", 0.976, 11.064, 24.873},
    {"SVR", "PJME", 0.726, 1878.685, 3382.786},
    {"Prophet", "AEP", 0.052, 2018.417, 2522.092},
    {"Prophet", "COMED", -0.021, 1782.898, 2321.032},
    {"Prophet", "DAYTON", -9.939, 0.602, 0.632},
    {"Prophet", "PJME", -3.298, 0.359, 0.407},
    {"RFR", "AEP", 0.133, 1926.917, 2412.619},
    {"RFR", "COMED", 0.170, 1613.671, 2099.070},
    {"RFR", "DAYTON", 0.065, 300.336, 380.377},
    {"RFR", "PJME", 0.047, 4890.830, 6309.890},
};

}  // namespace

double mae(std::span<const double> actual, std::span<const double> predicted) {
  check_inputs(actual, predicted);
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) s += std::abs(actual[i] - predicted[i]);
  return s / static_cast<double>(actual.size());
}

double rmse(std::span<const double> actual, std::span<const double> predicted) {
  check_inputs(actual, predicted);
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double d = actual[i] - predicted[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(actual.size()));
}

double r2(std::span<const double> actual, std::span<const double> predicted) {
  check_inputs(actual, predicted);
  double mean = 0.0;
  for (double v : actual) mean += v;
  mean /= static_cast<double>(actual.size());
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double e = actual[i] - predicted[i];
    const double d = actual[i] - mean;
    sse += e * e;
    sst += d * d;
  }
  const auto [mn, mx] = std::minmax_element(actual.begin(), actual.end());
  if (!(*mx > *mn) || !(sst > 0.0)) throw DegenerateVarianceError("R^2 undefined for constant actual values");
  return 1.0 - sse / sst;
}

const char* to_string(Provenance p) noexcept {
  return p == Provenance::Computed ? "COMPUTED" : "PAPER_REPORTED";
}

std::array<MetricsRow, 2> evaluate(const std::string& model, const std::string& dataset,
                                   std::span<const double> forecasts_scaled,
                                   std::span<const double> targets_scaled, const Scaler& scaler) {
  const std::vector<double> f_mw = scaler.invert(forecasts_scaled);
  const std::vector<double> t_mw = scaler.invert(targets_scaled);
  MetricsRow scaled{model, dataset, "SCALED", mae(targets_scaled, forecasts_scaled),
                    rmse(targets_scaled, forecasts_scaled), r2(targets_scaled, forecasts_scaled),
                    Provenance::Computed};
  MetricsRow mw{model, dataset, "MW", mae(t_mw, f_mw), rmse(t_mw, f_mw), r2(t_mw, f_mw),
                Provenance::Computed};
  return {scaled, mw};
}

std::vector<MetricsRow> published_rows(const std::string& dataset) {
  std::vector<MetricsRow> out;
  for (const auto& p : kPublished) {
    if (dataset != p.dataset) continue;
    out.push_back({p.model, p.dataset, "UNSPECIFIED", p.mae, p.rmse, p.r2, Provenance::PaperReported});
  }
  return out;
}

std::string report_csv(std::span<const MetricsRow> rows) {
  std::ostringstream out;
  out << "model,dataset,unit,mae,rmse,r2,provenance\n";
  for (const auto& r : rows) {
    out << r.model << ',' << r.dataset << ',' << r.unit << ',' << format_double(r.mae) << ',' << format_double(r.rmse)
        << ',' << format_double(r.r2) << ',' << to_string(r.provenance) << '\n';
  }
  return out.str();
}

void write_report_csv(std::span<const MetricsRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << report_csv(rows);
}

void export_predictions(std::span<const Timestamp> timestamps, std::span<const double> actual_mw,
                        std::span<const double> predicted_mw, const std::filesystem::path& path) {
  if (timestamps.size() != actual_mw.size() || actual_mw.size() != predicted_mw.size()) {
    throw ShapeError("export_predictions: series are not aligned");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "timestamp,actual_mw,predicted_mw\n";
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    out << format_timestamp(timestamps[i]) << ',' << format_double(actual_mw[i]) << ','
        << format_double(predicted_mw[i]) << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string render_svg(const PlotSpec& spec) {
  constexpr double kWidth = 960, kHeight = 480;
  constexpr double kLeft = 80, kRight = 160, kTop = 40, kBottom = 60;
  constexpr double kPlotW = kWidth - kLeft - kRight;
  constexpr double kPlotH = kHeight - kTop - kBottom;
  constexpr int kTicks = 5;
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};

  std::size_t longest = 0;
  double y_lo = 0.0, y_hi = 0.0;
  bool any = false;
  for (const auto& s : spec.series) {
    longest = std::max(longest, s.y.size());
    for (double v : s.y) {
      if (!std::isfinite(v)) continue;
      y_lo = any ? std::min(y_lo, v) : v;
      y_hi = any ? std::max(y_hi, v) : v;
      any = true;
    }
  }
  if (!any) {
    y_lo = 0.0;
    y_hi = 1.0;
  } else if (y_hi == y_lo) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }
  auto x_value = [&](std::size_t i) {
    return spec.x.empty() ? static_cast<double>(i) : spec.x[std::min(i, spec.x.size() - 1)];
  };
  double x_lo = 0.0, x_hi = 1.0;
  if (longest > 0) {
    x_lo = x_value(0);
    x_hi = x_value(longest - 1);
  }
  if (x_hi == x_lo) x_hi = x_lo + 1.0;

  auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * kPlotW; };
  auto py = [&](double y) { return kTop + (1.0 - (y - y_lo) / (y_hi - y_lo)) * kPlotH; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"960\" height=\"480\" viewBox=\"0 0 960 480\">\n";
  o << "<rect width=\"960\" height=\"480\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(kLeft + kPlotW / 2, "%.2f") << "\" y=\"24\" font-family=\"sans-serif\" "
       "font-size=\"16\" text-anchor=\"middle\">"
    << xml_escape(spec.title) << "</text>\n";
  o << "<g stroke=\"black\" stroke-width=\"1\">\n";
  o << "<line x1=\"" << num(kLeft, "%.2f") << "\" y1=\"" << num(kTop + kPlotH, "%.2f") << "\" x2=\""
    << num(kLeft + kPlotW, "%.2f") << "\" y2=\"" << num(kTop + kPlotH, "%.2f") << "\"/>\n";
  o << "<line x1=\"" << num(kLeft, "%.2f") << "\" y1=\"" << num(kTop, "%.2f") << "\" x2=\""
    << num(kLeft, "%.2f") << "\" y2=\"" << num(kTop + kPlotH, "%.2f") << "\"/>\n";
  for (int k = 0; k <= kTicks; ++k) {
    const double fx = kLeft + kPlotW * k / kTicks;
    const double fy = kTop + kPlotH * k / kTicks;
    o << "<line x1=\"" << num(fx, "%.2f") << "\" y1=\"" << num(kTop + kPlotH, "%.2f") << "\" x2=\""
      << num(fx, "%.2f") << "\" y2=\"" << num(kTop + kPlotH + 5, "%.2f") << "\"/>\n";
    o << "<line x1=\"" << num(kLeft - 5, "%.2f") << "\" y1=\"" << num(fy, "%.2f") << "\" x2=\""
      << num(kLeft, "%.2f") << "\" y2=\"" << num(fy, "%.2f") << "\"/>\n";
  }
  o << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int k = 0; k <= kTicks; ++k) {
    const double xv = x_lo + (x_hi - x_lo) * k / kTicks;
    const double yv = y_hi - (y_hi - y_lo) * k / kTicks;
    o << "<text x=\"" << num(kLeft + kPlotW * k / kTicks, "%.2f") << "\" y=\""
      << num(kTop + kPlotH + 18, "%.2f") << "\" text-anchor=\"middle\">" << num(xv, "%.6g")
      << "</text>\n";
    o << "<text x=\"" << num(kLeft - 8, "%.2f") << "\" y=\"" << num(kTop + kPlotH * k / kTicks + 4, "%.2f")
      << "\" text-anchor=\"end\">" << num(yv, "%.6g") << "</text>\n";
  }
  o << "<text x=\"" << num(kLeft + kPlotW / 2, "%.2f") << "\" y=\"" << num(kHeight - 16, "%.2f")
    << "\" text-anchor=\"middle\">" << xml_escape(spec.x_label) << "</text>\n";
  o << "<text x=\"16\" y=\"" << num(kTop + kPlotH / 2, "%.2f") << "\" text-anchor=\"middle\" "
       "transform=\"rotate(-90 16 "
    << num(kTop + kPlotH / 2, "%.2f") << ")\">" << xml_escape(spec.y_label) << "</text>\n";
  o << "</g>\n";

  for (std::size_t s = 0; s < spec.series.size(); ++s) {
    const auto& series = spec.series[s];
    const char* color = kColors[s % std::size(kColors)];
    const double ly = kTop + 16.0 * static_cast<double>(s);
    o << "<line x1=\"" << num(kLeft + kPlotW + 12, "%.2f") << "\" y1=\"" << num(ly, "%.2f")
      << "\" x2=\"" << num(kLeft + kPlotW + 32, "%.2f") << "\" y2=\"" << num(ly, "%.2f")
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << num(kLeft + kPlotW + 36, "%.2f") << "\" y=\"" << num(ly + 4, "%.2f")
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(series.label) << "</text>\n";
    if (series.y.empty()) continue;
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < series.y.size(); ++i) {
      if (!std::isfinite(series.y[i])) continue;
      if (!first) o << ' ';
      first = false;
      o << num(px(x_value(i)), "%.2f") << ',' << num(py(series.y[i]), "%.2f");
    }
    o << "\"/>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void render_plot(const PlotSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << render_svg(spec);
}

}  // namespace redf
