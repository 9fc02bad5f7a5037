#pragma once

#include <stdlib.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "redf/lstm.hpp"
#include "redf/timeseries.hpp"

namespace testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "redf-test-XXXXXX").string();
    if (mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Hourly CSV starting 2015-01-01 00:00.
inline void write_hourly_csv(const std::filesystem::path& path, const std::string& zone,
                             std::span<const double> values) {
  std::ofstream out(path);
  out << "Datetime," << zone << "_MW\n";
  const redf::Timestamp start = *redf::parse_timestamp("2015-01-01 00:00:00");
  char buf[64];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f", values[i]);
    out << redf::format_timestamp(start + static_cast<redf::Timestamp>(i) * 3600) << "," << buf << "\n";
  }
}

// Daily and weekly cycles plus a little deterministic wobble.
inline std::vector<double> synthetic_load(std::size_t n) {
  std::vector<double> v(n);
  const double pi = std::acos(-1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i);
    v[i] = 2000.0 + 300.0 * std::sin(2 * pi * t / 24.0) + 120.0 * std::sin(2 * pi * t / 168.0) +
           15.0 * std::sin(0.37 * t);
  }
  return v;
}

// Straight-line LSTM written independently of the library kernels: one
// sample, one unit at a time, plain loops.
inline double ref_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline void ref_cell(const redf::LstmLayerWeights& w, const std::vector<double>& x, std::vector<double>& h,
                     std::vector<double>& c) {
  const std::size_t n = w.units;
  std::vector<double> h_new(n), c_new(n);
  for (std::size_t u = 0; u < n; ++u) {
    double pre[4];
    for (std::size_t g = 0; g < 4; ++g) {
      double s = w.b[g][u];
      for (std::size_t k = 0; k < x.size(); ++k) s += w.w_x[g](u, k) * x[k];
      for (std::size_t k = 0; k < n; ++k) s += w.w_h[g](u, k) * h[k];
      pre[g] = s;
    }
    const double i = ref_sigmoid(pre[0]);
    const double f = ref_sigmoid(pre[1]);
    const double cand = std::tanh(pre[2]);
    const double o = ref_sigmoid(pre[3]);
    c_new[u] = f * c[u] + i * cand;
    h_new[u] = o * std::tanh(c_new[u]);
  }
  h = h_new;
  c = c_new;
}

// Inference-mode network output for one window (timesteps * features).
inline std::vector<double> ref_forward(const redf::ModelParams& p, std::span<const double> window) {
  const std::size_t T = p.hyper.timesteps, F = p.hyper.features, H = p.hyper.units;
  std::vector<double> h1(H, 0.0), c1(H, 0.0), h2(H, 0.0), c2(H, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> x(window.begin() + t * F, window.begin() + (t + 1) * F);
    ref_cell(p.layer1, x, h1, c1);
    ref_cell(p.layer2, h1, h2, c2);
  }
  std::vector<double> y(p.hyper.dense_units);
  for (std::size_t r = 0; r < y.size(); ++r) {
    double s = p.dense_b[r];
    for (std::size_t u = 0; u < H; ++u) s += p.dense_w(r, u) * h2[u];
    y[r] = s;
  }
  return y;
}

}  // namespace testing
