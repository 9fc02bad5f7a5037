#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "redf/numeric.hpp"

namespace redf {

// Seconds since 1970-01-01 00:00:00 on a naive wall clock (no time zone).
using Timestamp = std::int64_t;
inline constexpr Timestamp kSecondsPerHour = 3600;

// Parses "YYYY-MM-DD HH:MM:SS"; std::nullopt on anything else.
std::optional<Timestamp> parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp t);

struct Observation {
  Timestamp time = 0;
  std::optional<double> value;  // nullopt marks a missing reading

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct TimeSeries {
  std::string zone;
  std::vector<Observation> points;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  // Observed values in order; throws EmptySeriesError if any point is missing.
  std::vector<double> values() const;
  std::vector<Timestamp> timestamps() const;

  friend bool operator==(const TimeSeries&, const TimeSeries&) = default;
};

struct RowIssue {
  std::size_t line = 0;
  std::string message;
};

struct LoadReport {
  std::size_t raw_rows = 0;         // data rows in the file, header excluded
  std::size_t duplicate_rows = 0;   // rows folded into an earlier timestamp
  std::vector<RowIssue> row_errors;
};

struct LoadedSeries {
  TimeSeries series;
  LoadReport report;
};

// Reads a `Datetime,<ZONE>_MW` file. Rows that fail to parse are skipped and
// recorded; if more than 1% of rows fail the whole file is rejected.
LoadedSeries load_csv(const std::filesystem::path& path, const std::string& zone);
// Writes the same schema back out (missing values are left blank).
void write_csv(const TimeSeries& ts, const std::filesystem::path& path);

struct MissingReport {
  std::size_t interpolated = 0;
  std::size_t weekly_filled = 0;
  std::size_t median_filled = 0;
};

inline constexpr std::size_t kWeekHours = 168;

// Produces one point per hour over the full span. Gaps of at most `max_gap`
// hours between two observations are linearly interpolated; longer gaps (and
// gaps at either edge) copy the value one week earlier, falling back to the
// median of the observed values.
TimeSeries handle_missing(const TimeSeries& ts, std::size_t max_gap,
                          MissingReport* report = nullptr);

// Percentile with linear interpolation between order statistics, q in [0,1].
double percentile(std::span<const double> values, double q);

// Clips values to [Q1 - k*IQR, Q3 + k*IQR]. Returns the number clipped via
// `clipped` when non-null.
TimeSeries handle_outliers(const TimeSeries& ts, double k = 3.0, std::size_t* clipped = nullptr);

enum class ScalerKind { ZScore, MinMax };

const char* to_string(ScalerKind kind) noexcept;
ScalerKind scaler_kind_from_string(std::string_view name);

// Affine normaliser. For ZScore (a, b) = (mean, population std); for MinMax
// (a, b) = (min, max).
struct Scaler {
  ScalerKind kind = ScalerKind::ZScore;
  double a = 0.0;
  double b = 1.0;

  double apply(double mw) const noexcept;
  double invert(double scaled) const noexcept;
  std::vector<double> apply(std::span<const double> mw) const;
  std::vector<double> invert(std::span<const double> scaled) const;
  // Multiplier from scaled units back to MW.
  double spread() const noexcept { return kind == ScalerKind::ZScore ? b : b - a; }

  friend bool operator==(const Scaler&, const Scaler&) = default;
};

Scaler fit_scaler(std::span<const double> train, ScalerKind kind);
Scaler fit_scaler(const TimeSeries& train, ScalerKind kind);

// First floor(ratio*n) points train, the rest test.
std::pair<TimeSeries, TimeSeries> split(const TimeSeries& ts, double ratio);
std::size_t split_point(std::size_t n, double ratio);

// Supervised framing for univariate inputs: row i of `inputs` holds
// values[i, i+timesteps) and targets[i] = values[i + timesteps + horizon - 1].
struct WindowedDataset {
  Matrix inputs;
  std::vector<double> targets;
  std::size_t timesteps = 0;
  std::size_t horizon = 1;

  std::size_t size() const noexcept { return targets.size(); }
  bool empty() const noexcept { return targets.empty(); }
  // Rows [first, first+count) as a new dataset.
  WindowedDataset slice(std::size_t first, std::size_t count) const;
};

WindowedDataset make_windows(std::span<const double> scaled, std::size_t timesteps,
                             std::size_t horizon);

// Windows whose targets fall at or after `first_target` in `scaled`, with
// inputs free to reach back before it. Used to frame a test segment that
// follows a training segment.
WindowedDataset make_windows_from(std::span<const double> scaled, std::size_t timesteps,
                                  std::size_t horizon, std::size_t first_target);

}  // namespace redf
