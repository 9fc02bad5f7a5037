#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "redf/numeric.hpp"

namespace redf {

// Gate order used everywhere: storage, packing, artifact block names.
enum Gate : std::size_t { kInputGate = 0, kForgetGate = 1, kCellGate = 2, kOutputGate = 3 };
inline constexpr std::size_t kGateCount = 4;
inline constexpr std::array<char, kGateCount> kGateSuffix = {'i', 'f', 'c', 'o'};

// Architecture and training settings. Defaults are the published
// configuration: 200 units, a 1-unit dense head, 10 epochs, batch 1000,
// dropout 0.1 and Adam with learning rate 0.001.
struct HyperParams {
  std::size_t units = 200;
  std::size_t dense_units = 1;
  std::size_t epochs = 10;
  std::size_t batch_size = 1000;
  std::size_t timesteps = 24;
  std::size_t features = 1;
  double dropout = 0.1;
  double learning_rate = 1e-3;
  std::size_t horizon = 1;

  // Throws ConfigError when any field is out of range.
  void validate() const;

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

// One LSTM layer: per gate an input matrix (units x input_dim), a recurrent
// matrix (units x units) and a bias vector (units).
struct LstmLayerWeights {
  std::size_t units = 0;
  std::size_t input_dim = 0;
  std::array<Matrix, kGateCount> w_x;
  std::array<Matrix, kGateCount> w_h;
  std::array<std::vector<double>, kGateCount> b;

  static LstmLayerWeights zeros(std::size_t units, std::size_t input_dim);
  // Throws ShapeError if any block disagrees with (units, input_dim).
  void check_shapes() const;

  friend bool operator==(const LstmLayerWeights&, const LstmLayerWeights&) = default;
};

// Full network: LSTM(units, full sequence) -> dropout -> LSTM(units, last
// state) -> dropout -> dense(dense_units).
struct ModelParams {
  LstmLayerWeights layer1;
  LstmLayerWeights layer2;
  Matrix dense_w;               // dense_units x units
  std::vector<double> dense_b;  // dense_units
  HyperParams hyper;

  static ModelParams zeros(const HyperParams& hyper);
  // Glorot-uniform weights, zero biases except the forget gate.
  static ModelParams initialize(const HyperParams& hyper, Rng& rng, double forget_bias = 1.0);

  void check_shapes() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Same layout as the parameters they differentiate.
using Gradients = ModelParams;

// Calls fn(name, values, rows, cols) for every weight and bias block in a
// fixed order. Bias vectors report cols == 1.
template <typename Params, typename Fn>
void for_each_tensor(Params& params, Fn&& fn) {
  auto layer = [&](auto& l, std::string_view prefix) {
    for (std::size_t g = 0; g < kGateCount; ++g) {
      fn(std::string(prefix) + ".W_x" + kGateSuffix[g], l.w_x[g].values(), l.w_x[g].rows(),
         l.w_x[g].cols());
    }
    for (std::size_t g = 0; g < kGateCount; ++g) {
      fn(std::string(prefix) + ".W_h" + kGateSuffix[g], l.w_h[g].values(), l.w_h[g].rows(),
         l.w_h[g].cols());
    }
    for (std::size_t g = 0; g < kGateCount; ++g) {
      fn(std::string(prefix) + ".b_" + kGateSuffix[g], std::span(l.b[g]), l.b[g].size(),
         std::size_t{1});
    }
  };
  layer(params.layer1, "lstm1");
  layer(params.layer2, "lstm2");
  fn(std::string("dense.W"), params.dense_w.values(), params.dense_w.rows(),
     params.dense_w.cols());
  fn(std::string("dense.b"), std::span(params.dense_b), params.dense_b.size(), std::size_t{1});
}

// ---------------------------------------------------------------------------
// Single cell

struct CellCache {
  std::vector<double> x, h_prev, c_prev;
  std::vector<double> i, f, c_tilde, o;  // activated gates
  std::vector<double> c, tanh_c;
};

struct CellOutput {
  std::vector<double> h;
  std::vector<double> c;
  CellCache cache;
};

CellOutput cell_forward(std::span<const double> x, std::span<const double> h_prev,
                        std::span<const double> c_prev, const LstmLayerWeights& w);

// ---------------------------------------------------------------------------
// Layer over a batch of sequences

// Per-timestep activations for a batch, kept for the backward pass.
struct LayerCache {
  std::size_t batch = 0;
  std::size_t units = 0;
  std::size_t input_dim = 0;
  std::vector<Matrix> x;       // T of (batch x input_dim)
  std::vector<Matrix> gates;   // T of (batch x 4*units), activated, gate-major columns
  std::vector<Matrix> c;       // T of (batch x units)
  std::vector<Matrix> tanh_c;  // T of (batch x units)
  std::vector<Matrix> h;       // T of (batch x units)
  bool return_sequences = false;
};

// Runs the layer from zero initial state. `inputs` holds one batch slice per
// timestep. Returns all hidden states if return_sequences, else only h_T.
std::vector<Matrix> layer_forward(const std::vector<Matrix>& inputs, const LstmLayerWeights& w,
                                  bool return_sequences, LayerCache* cache = nullptr);

// Single-sequence convenience: `sequence` is timesteps x input_dim. Returns
// timesteps x units when return_sequences, else 1 x units.
Matrix layer_forward(const Matrix& sequence, const LstmLayerWeights& w, bool return_sequences);

// Gradients of one layer given dL/dh_t for each output step (one entry for
// return_sequences == false). Writes weight gradients into `grad` (added to
// whatever it holds) and returns dL/dx_t per step.
std::vector<Matrix> layer_backward(const LayerCache& cache, const LstmLayerWeights& w,
                                   const std::vector<Matrix>& d_outputs, LstmLayerWeights& grad);

// ---------------------------------------------------------------------------
// Dropout

struct DropoutResult {
  std::vector<double> output;
  std::vector<double> mask;  // 0 or 1/(1-rate); all ones when inactive
};

// Inverted dropout. Inference mode, or rate 0, is the identity and draws
// nothing from rng.
DropoutResult dropout(std::span<const double> h, double rate, Rng& rng, bool training);

// ---------------------------------------------------------------------------
// Whole network

struct ForwardCache {
  std::size_t batch = 0;
  std::size_t timesteps = 0;
  std::size_t features = 0;
  std::size_t units = 0;
  std::size_t dense_units = 0;
  LayerCache layer1;
  LayerCache layer2;
  std::vector<Matrix> mask1;  // T of (batch x units)
  Matrix mask2;               // batch x units
  Matrix dense_in;            // batch x units, after dropout
};

struct ForwardResult {
  Matrix predictions;  // batch x dense_units
  ForwardCache cache;
};

// `inputs` is batch x (timesteps * features), each row time-major.
ForwardResult forward(const ModelParams& params, const Matrix& inputs, bool training, Rng& rng);

// Inference without retaining caches. Processes rows in chunks; results are
// bitwise identical to forward(..., training = false, ...).
Matrix predict(const ModelParams& params, const Matrix& inputs);

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;
};

// Mean squared error over all entries and its gradient (2/n)(pred - target).
LossResult mse_loss(std::span<const double> pred, std::span<const double> target);

// Exact BPTT gradients. loss_grad is batch x dense_units.
Gradients backward(const ModelParams& params, const ForwardCache& cache, const Matrix& loss_grad);

}  // namespace redf
