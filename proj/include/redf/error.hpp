#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace redf {

// Root of every error raised by the library. kind() is a stable identifier
// used by the CLI for its single-line error output.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "Error"; }
};

#define REDF_DEFINE_ERROR(Name)                                         \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(what) {}             \
    const char* kind() const noexcept override { return #Name; }        \
  };

// timeseries_io
REDF_DEFINE_ERROR(FormatError)
REDF_DEFINE_ERROR(EmptySeriesError)
REDF_DEFINE_ERROR(DegenerateScaleError)
REDF_DEFINE_ERROR(SplitError)
REDF_DEFINE_ERROR(WindowError)
REDF_DEFINE_ERROR(IoError)

// numeric / lstm
REDF_DEFINE_ERROR(ShapeError)
REDF_DEFINE_ERROR(EmptyBatchError)
REDF_DEFINE_ERROR(StateError)

// training
REDF_DEFINE_ERROR(NumericError)
REDF_DEFINE_ERROR(DivergenceError)
REDF_DEFINE_ERROR(ConfigError)
REDF_DEFINE_ERROR(GridError)

// evaluation
REDF_DEFINE_ERROR(DegenerateVarianceError)

// serving
REDF_DEFINE_ERROR(ProtocolError)
REDF_DEFINE_ERROR(TimeoutError)
REDF_DEFINE_ERROR(ConnectError)

#undef REDF_DEFINE_ERROR

// A single unparseable CSV row. Normally recorded and skipped by the loader
// rather than thrown to the caller.
class RowError : public Error {
 public:
  RowError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  const char* kind() const noexcept override { return "RowError"; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ArtifactError : public Error {
 public:
  enum class Check { Io, Magic, Version, Shape, Checksum };

  ArtifactError(Check check, const std::string& what)
      : Error(std::string(check_name(check)) + " check failed: " + what), check_(check) {}
  const char* kind() const noexcept override { return "ArtifactError"; }
  Check check() const noexcept { return check_; }

  static const char* check_name(Check c) noexcept {
    switch (c) {
      case Check::Io: return "io";
      case Check::Magic: return "magic";
      case Check::Version: return "version";
      case Check::Shape: return "shape";
      case Check::Checksum: return "crc";
    }
    return "unknown";
  }

 private:
  Check check_;
};

// An ERROR frame returned by a broker or model server.
class RemoteError : public Error {
 public:
  RemoteError(std::string code, const std::string& message)
      : Error(code + ": " + message), code_(std::move(code)) {}
  const char* kind() const noexcept override { return "RemoteError"; }
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace redf
