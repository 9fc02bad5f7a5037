#include "redf/timeseries.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "redf/error.hpp"

namespace redf {

namespace {

template <typename Int>
bool parse_fixed(std::string_view text, std::size_t pos, std::size_t len, Int& out) {
  if (pos + len > text.size()) return false;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (text[i] < '0' || text[i] > '9') return false;
  }
  auto res = std::from_chars(text.data() + pos, text.data() + pos + len, out);
  return res.ec == std::errc{};
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return percentile(v, 0.5);
}

}  // namespace

std::optional<Timestamp> parse_timestamp(std::string_view text) {
  text = trim(text);
  if (text.size() != 19 || text[4] != '-' || text[7] != '-' || text[10] != ' ' ||
      text[13] != ':' || text[16] != ':') {
    return std::nullopt;
  }
  int y = 0;
  unsigned mo = 0, d = 0, h = 0, mi = 0, s = 0;
  if (!parse_fixed(text, 0, 4, y) || !parse_fixed(text, 5, 2, mo) ||
      !parse_fixed(text, 8, 2, d) || !parse_fixed(text, 11, 2, h) ||
      !parse_fixed(text, 14, 2, mi) || !parse_fixed(text, 17, 2, s)) {
    return std::nullopt;
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{mo},
                                        std::chrono::day{d}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59) return std::nullopt;
  const auto days = std::chrono::sys_days{ymd}.time_since_epoch().count();
  return static_cast<Timestamp>(days) * 86400 + h * 3600 + mi * 60 + s;
}

std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const Timestamp floor_days = t >= 0 ? t / 86400 : -((-t + 86399) / 86400);
  const auto day_count = static_cast<int>(floor_days);
  const Timestamp secs = t - static_cast<Timestamp>(day_count) * 86400;
  const year_month_day ymd{sys_days{days{day_count}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(secs / 3600), static_cast<int>((secs / 60) % 60),
                static_cast<int>(secs % 60));
  return buf;
}

std::vector<double> TimeSeries::values() const {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    if (!p.value) throw EmptySeriesError("series has missing values; run handle_missing first");
    out.push_back(*p.value);
  }
  return out;
}

std::vector<Timestamp> TimeSeries::timestamps() const {
  std::vector<Timestamp> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.time);
  return out;
}

LoadedSeries load_csv(const std::filesystem::path& path, const std::string& zone) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("'" + path.string() + "': missing header");
  }
  std::string_view header = trim(line);
  if (header.substr(0, 3) == "\xEF\xBB\xBF") header.remove_prefix(3);

  LoadedSeries result;
  result.series.zone = zone;
  const std::string prefix = "Datetime,";
  const std::string suffix = "_MW";
  const bool shape_ok = header.size() > prefix.size() + suffix.size() &&
                        header.substr(0, prefix.size()) == prefix &&
                        header.substr(header.size() - suffix.size()) == suffix;
  if (!shape_ok) {
    throw FormatError("'" + path.string() + "': expected header Datetime,<ZONE>_MW, got '" +
                      std::string(header) + "'");
  }
  const std::string header_zone(
      header.substr(prefix.size(), header.size() - prefix.size() - suffix.size()));
  if (zone.empty()) {
    result.series.zone = header_zone;
  } else if (header_zone != zone) {
    throw FormatError("'" + path.string() + "': header zone '" + header_zone +
                      "' does not match requested zone '" + zone + "'");
  }

  std::vector<Observation> raw;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = trim(line);
    if (row.empty()) continue;
    ++result.report.raw_rows;
    try {
      const auto comma = row.find(',');
      if (comma == std::string_view::npos || row.find(',', comma + 1) != std::string_view::npos) {
        throw RowError(line_no, "expected 2 fields");
      }
      const auto ts = parse_timestamp(row.substr(0, comma));
      if (!ts) throw RowError(line_no, "bad timestamp");
      const std::string_view field = trim(row.substr(comma + 1));
      Observation obs{*ts, std::nullopt};
      if (!field.empty()) {
        double v = 0.0;
        auto res = std::from_chars(field.data(), field.data() + field.size(), v);
        if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
          throw RowError(line_no, "bad value '" + std::string(field) + "'");
        }
        if (!std::isfinite(v) || v < 0.0) {
          throw RowError(line_no, "value out of range '" + std::string(field) + "'");
        }
        obs.value = v;
      }
      raw.push_back(obs);
    } catch (const RowError& e) {
      result.report.row_errors.push_back({e.line(), e.what()});
    }
  }

  const std::size_t failed = result.report.row_errors.size();
  if (failed * 100 > result.report.raw_rows) {
    throw FormatError("'" + path.string() + "': " + std::to_string(failed) + " of " +
                      std::to_string(result.report.raw_rows) + " rows unparseable");
  }

  std::stable_sort(raw.begin(), raw.end(),
                   [](const Observation& a, const Observation& b) { return a.time < b.time; });
  auto& points = result.series.points;
  points.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size();) {
    std::size_t j = i;
    std::vector<double> dup;
    while (j < raw.size() && raw[j].time == raw[i].time) {
      if (raw[j].value) dup.push_back(*raw[j].value);
      ++j;
    }
    result.report.duplicate_rows += j - i - 1;
    Observation merged{raw[i].time, std::nullopt};
    if (!dup.empty()) {
      // Sorted before summing so the mean does not depend on file order.
      std::sort(dup.begin(), dup.end());
      merged.value = std::accumulate(dup.begin(), dup.end(), 0.0) / static_cast<double>(dup.size());
    }
    points.push_back(merged);
    i = j;
  }
  return result;
}

void write_csv(const TimeSeries& ts, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "Datetime," << ts.zone << "_MW\n";
  for (const auto& p : ts.points) {
    out << format_timestamp(p.time) << ',';
    if (p.value) out << format_double(*p.value);
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

TimeSeries handle_missing(const TimeSeries& ts, std::size_t max_gap, MissingReport* report) {
  std::vector<double> observed;
  for (const auto& p : ts.points) {
    if (p.value) observed.push_back(*p.value);
  }
  if (observed.empty()) throw EmptySeriesError("series '" + ts.zone + "' has no observed values");

  const Timestamp t0 = ts.points.front().time;
  const Timestamp t1 = ts.points.back().time;
  if ((t1 - t0) % kSecondsPerHour != 0) {
    throw FormatError("timestamps are not on an hourly grid");
  }
  const std::size_t n = static_cast<std::size_t>((t1 - t0) / kSecondsPerHour) + 1;
  std::vector<std::optional<double>> grid(n);
  for (std::size_t k = 0; k < ts.points.size(); ++k) {
    const auto& p = ts.points[k];
    if (k > 0 && p.time <= ts.points[k - 1].time) {
      throw FormatError("timestamps must be strictly increasing");
    }
    if ((p.time - t0) % kSecondsPerHour != 0) {
      throw FormatError("timestamp " + format_timestamp(p.time) + " is off the hourly grid");
    }
    grid[static_cast<std::size_t>((p.time - t0) / kSecondsPerHour)] = p.value;
  }

  MissingReport local;
  const double median = median_of(std::move(observed));
  for (std::size_t s = 0; s < n;) {
    if (grid[s]) {
      ++s;
      continue;
    }
    std::size_t e = s;
    while (e < n && !grid[e]) ++e;
    const bool interior = s > 0 && e < n;
    if (interior && e - s <= max_gap) {
      const double left = *grid[s - 1];
      const double right = *grid[e];
      const double span = static_cast<double>(e - (s - 1));
      for (std::size_t j = s; j < e; ++j) {
        grid[j] = left + (right - left) * static_cast<double>(j - (s - 1)) / span;
      }
      local.interpolated += e - s;
    } else {
      for (std::size_t j = s; j < e; ++j) {
        if (j >= kWeekHours && grid[j - kWeekHours]) {
          grid[j] = grid[j - kWeekHours];
          ++local.weekly_filled;
        } else {
          grid[j] = median;
          ++local.median_filled;
        }
      }
    }
    s = e;
  }

  TimeSeries out;
  out.zone = ts.zone;
  out.points.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    out.points[j] = {t0 + static_cast<Timestamp>(j) * kSecondsPerHour, grid[j]};
  }
  if (report) *report = local;
  return out;
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw EmptySeriesError("percentile of empty set");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

TimeSeries handle_outliers(const TimeSeries& ts, double k, std::size_t* clipped) {
  TimeSeries out = ts;
  if (ts.empty()) {
    if (clipped) *clipped = 0;
    return out;
  }
  const std::vector<double> v = ts.values();
  const double q1 = percentile(v, 0.25);
  const double q3 = percentile(v, 0.75);
  const double iqr = q3 - q1;
  const double lo = q1 - k * iqr;
  const double hi = q3 + k * iqr;
  std::size_t count = 0;
  for (auto& p : out.points) {
    if (*p.value < lo) {
      p.value = lo;
      ++count;
    } else if (*p.value > hi) {
      p.value = hi;
      ++count;
    }
  }
  if (clipped) *clipped = count;
  return out;
}

const char* to_string(ScalerKind kind) noexcept {
  return kind == ScalerKind::ZScore ? "zscore" : "minmax";
}

ScalerKind scaler_kind_from_string(std::string_view name) {
  if (name == "zscore" || name == "ZSCORE") return ScalerKind::ZScore;
  if (name == "minmax" || name == "MINMAX") return ScalerKind::MinMax;
  throw ConfigError("unknown scaler '" + std::string(name) + "'");
}

double Scaler::apply(double mw) const noexcept {
  return kind == ScalerKind::ZScore ? (mw - a) / b : (mw - a) / (b - a);
}

double Scaler::invert(double scaled) const noexcept {
  return kind == ScalerKind::ZScore ? scaled * b + a : scaled * (b - a) + a;
}

std::vector<double> Scaler::apply(std::span<const double> mw) const {
  std::vector<double> out(mw.size());
  for (std::size_t i = 0; i < mw.size(); ++i) out[i] = apply(mw[i]);
  return out;
}

std::vector<double> Scaler::invert(std::span<const double> scaled) const {
  std::vector<double> out(scaled.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) out[i] = invert(scaled[i]);
  return out;
}

Scaler fit_scaler(std::span<const double> train, ScalerKind kind) {
  if (train.empty()) throw EmptySeriesError("cannot fit a scaler on an empty series");
  const auto [mn, mx] = std::minmax_element(train.begin(), train.end());
  if (!(*mx > *mn)) throw DegenerateScaleError("cannot fit a scaler on a constant series");
  Scaler s;
  s.kind = kind;
  if (kind == ScalerKind::MinMax) {
    s.a = *mn;
    s.b = *mx;
    return s;
  }
  const double n = static_cast<double>(train.size());
  double mean = 0.0;
  for (double v : train) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : train) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  if (!(sd > 0.0)) throw DegenerateScaleError("zero standard deviation");
  s.a = mean;
  s.b = sd;
  return s;
}

Scaler fit_scaler(const TimeSeries& train, ScalerKind kind) {
  return fit_scaler(train.values(), kind);
}

std::size_t split_point(std::size_t n, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw SplitError("split ratio must lie in (0,1)");
  }
  const auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
  if (k == 0 || k >= n) {
    throw SplitError("ratio " + std::to_string(ratio) + " leaves an empty side for n=" +
                     std::to_string(n));
  }
  return k;
}

std::pair<TimeSeries, TimeSeries> split(const TimeSeries& ts, double ratio) {
  const std::size_t k = split_point(ts.size(), ratio);
  TimeSeries train{ts.zone, {ts.points.begin(), ts.points.begin() + static_cast<std::ptrdiff_t>(k)}};
  TimeSeries test{ts.zone, {ts.points.begin() + static_cast<std::ptrdiff_t>(k), ts.points.end()}};
  return {std::move(train), std::move(test)};
}

WindowedDataset WindowedDataset::slice(std::size_t first, std::size_t count) const {
  if (first + count > size()) throw WindowError("slice out of range");
  WindowedDataset out;
  out.timesteps = timesteps;
  out.horizon = horizon;
  out.inputs = Matrix(count, inputs.cols());
  std::copy(inputs.data() + first * inputs.cols(), inputs.data() + (first + count) * inputs.cols(),
            out.inputs.data());
  out.targets.assign(targets.begin() + static_cast<std::ptrdiff_t>(first),
                     targets.begin() + static_cast<std::ptrdiff_t>(first + count));
  return out;
}

WindowedDataset make_windows_from(std::span<const double> scaled, std::size_t timesteps,
                                  std::size_t horizon, std::size_t first_target) {
  if (timesteps == 0 || horizon == 0) throw WindowError("timesteps and horizon must be positive");
  const std::size_t n = scaled.size();
  if (n < timesteps + horizon) {
    throw WindowError("series of length " + std::to_string(n) + " is too short for timesteps=" +
                      std::to_string(timesteps) + ", horizon=" + std::to_string(horizon));
  }
  const std::size_t offset = timesteps + horizon - 1;  // target index of window 0
  const std::size_t start = first_target > offset ? first_target - offset : 0;
  const std::size_t total = n - offset;
  const std::size_t count = start < total ? total - start : 0;

  WindowedDataset ds;
  ds.timesteps = timesteps;
  ds.horizon = horizon;
  ds.inputs = Matrix(count, timesteps);
  ds.targets.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t w = start + i;
    std::copy(scaled.begin() + static_cast<std::ptrdiff_t>(w),
              scaled.begin() + static_cast<std::ptrdiff_t>(w + timesteps), ds.inputs.row(i).begin());
    ds.targets[i] = scaled[w + offset];
  }
  return ds;
}

WindowedDataset make_windows(std::span<const double> scaled, std::size_t timesteps,
                             std::size_t horizon) {
  return make_windows_from(scaled, timesteps, horizon, 0);
}

}  // namespace redf
