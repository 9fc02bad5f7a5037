#include "redf/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "redf/error.hpp"

namespace redf {

namespace {

// Gate weights stacked gate-major: row g*units + u is gate g, unit u.
struct PackedLayer {
  std::size_t units = 0;
  std::size_t input_dim = 0;
  Matrix wx;    // 4H x D
  Matrix wh;    // 4H x H
  Matrix wx_t;  // D x 4H
  Matrix wh_t;  // H x 4H
  std::vector<double> bias;  // 4H
};

PackedLayer pack(const LstmLayerWeights& w) {
  const std::size_t H = w.units, D = w.input_dim;
  PackedLayer p;
  p.units = H;
  p.input_dim = D;
  p.wx = Matrix(4 * H, D);
  p.wh = Matrix(4 * H, H);
  p.bias.resize(4 * H);
  for (std::size_t g = 0; g < kGateCount; ++g) {
    for (std::size_t u = 0; u < H; ++u) {
      std::copy_n(w.w_x[g].row(u).begin(), D, p.wx.row(g * H + u).begin());
      std::copy_n(w.w_h[g].row(u).begin(), H, p.wh.row(g * H + u).begin());
      p.bias[g * H + u] = w.b[g][u];
    }
  }
  p.wx_t = transpose(p.wx);
  p.wh_t = transpose(p.wh);
  return p;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

// out[b, :] += a[b, k] * m[k, :] over k.
void accumulate_product(const Matrix& a, const Matrix& m, Matrix& out) {
  const std::size_t B = a.rows(), K = a.cols(), N = m.cols();
  for (std::size_t b = 0; b < B; ++b) {
    double* o = out.row(b).data();
    const double* ar = a.row(b).data();
    for (std::size_t k = 0; k < K; ++k) {
      const double s = ar[k];
      if (s == 0.0) continue;
      const double* mr = m.row(k).data();
      for (std::size_t n = 0; n < N; ++n) o[n] += s * mr[n];
    }
  }
}

// out[k, :] += a[b, k] * x[b, :] over b  (out += a^T x).
void accumulate_outer(const Matrix& a, const Matrix& x, Matrix& out) {
  const std::size_t B = a.rows(), K = a.cols(), N = x.cols();
  for (std::size_t b = 0; b < B; ++b) {
    const double* ar = a.row(b).data();
    const double* xr = x.row(b).data();
    for (std::size_t k = 0; k < K; ++k) {
      const double s = ar[k];
      if (s == 0.0) continue;
      double* o = out.row(k).data();
      for (std::size_t n = 0; n < N; ++n) o[n] += s * xr[n];
    }
  }
}

struct StepOutput {
  Matrix gates;
  Matrix c;
  Matrix tanh_c;
  Matrix h;
};

// One timestep for a whole batch.
StepOutput step_forward(const PackedLayer& p, const Matrix& x, const Matrix& h_prev,
                        const Matrix& c_prev) {
  const std::size_t B = x.rows(), H = p.units, G = 4 * H;
  StepOutput s{Matrix(B, G), Matrix(B, H), Matrix(B, H), Matrix(B, H)};
  for (std::size_t b = 0; b < B; ++b) std::copy(p.bias.begin(), p.bias.end(), s.gates.row(b).begin());
  accumulate_product(x, p.wx_t, s.gates);
  accumulate_product(h_prev, p.wh_t, s.gates);
  for (std::size_t b = 0; b < B; ++b) {
    double* a = s.gates.row(b).data();
    for (std::size_t u = 0; u < H; ++u) {
      a[kInputGate * H + u] = sigmoid(a[kInputGate * H + u]);
      a[kForgetGate * H + u] = sigmoid(a[kForgetGate * H + u]);
      a[kCellGate * H + u] = std::tanh(a[kCellGate * H + u]);
      a[kOutputGate * H + u] = sigmoid(a[kOutputGate * H + u]);
    }
    const double* cp = c_prev.row(b).data();
    double* c = s.c.row(b).data();
    double* tc = s.tanh_c.row(b).data();
    double* h = s.h.row(b).data();
    for (std::size_t u = 0; u < H; ++u) {
      c[u] = a[kForgetGate * H + u] * cp[u] + a[kInputGate * H + u] * a[kCellGate * H + u];
      tc[u] = std::tanh(c[u]);
      h[u] = a[kOutputGate * H + u] * tc[u];
    }
  }
  return s;
}

void check_layer_inputs(const std::vector<Matrix>& inputs, const LstmLayerWeights& w) {
  require(!inputs.empty(), "layer_forward: empty sequence");
  const std::size_t B = inputs.front().rows();
  for (const auto& x : inputs) {
    require(x.rows() == B && x.cols() == w.input_dim,
            "layer_forward: step input " + std::to_string(x.rows()) + "x" +
                std::to_string(x.cols()) + " does not match input_dim " +
                std::to_string(w.input_dim));
  }
}

std::vector<Matrix> run_layer(const std::vector<Matrix>& inputs, const PackedLayer& p,
                              bool return_sequences, LayerCache* cache) {
  const std::size_t B = inputs.front().rows(), H = p.units, T = inputs.size();
  Matrix h(B, H), c(B, H);
  std::vector<Matrix> outputs;
  if (cache) {
    *cache = LayerCache{};
    cache->batch = B;
    cache->units = H;
    cache->input_dim = p.input_dim;
    cache->return_sequences = return_sequences;
    cache->x = inputs;
    cache->gates.reserve(T);
    cache->c.reserve(T);
    cache->tanh_c.reserve(T);
    cache->h.reserve(T);
  }
  for (std::size_t t = 0; t < T; ++t) {
    StepOutput s = step_forward(p, inputs[t], h, c);
    h = s.h;
    c = s.c;
    if (return_sequences) outputs.push_back(h);
    if (cache) {
      cache->gates.push_back(std::move(s.gates));
      cache->c.push_back(std::move(s.c));
      cache->tanh_c.push_back(std::move(s.tanh_c));
      cache->h.push_back(std::move(s.h));
    }
  }
  if (!return_sequences) outputs.push_back(std::move(h));
  return outputs;
}

// Splits batch x (T*F) rows into T matrices of batch x F.
std::vector<Matrix> split_timesteps(const Matrix& inputs, std::size_t T, std::size_t F,
                                    std::size_t first_row, std::size_t rows) {
  std::vector<Matrix> seq(T, Matrix(rows, F));
  for (std::size_t b = 0; b < rows; ++b) {
    const double* src = inputs.row(first_row + b).data();
    for (std::size_t t = 0; t < T; ++t) {
      std::copy_n(src + t * F, F, seq[t].row(b).begin());
    }
  }
  return seq;
}

Matrix dense_forward(const ModelParams& params, const Matrix& in) {
  const std::size_t B = in.rows(), Y = params.dense_w.rows(), H = params.dense_w.cols();
  Matrix out(B, Y);
  for (std::size_t b = 0; b < B; ++b) {
    const double* x = in.row(b).data();
    for (std::size_t j = 0; j < Y; ++j) {
      const double* w = params.dense_w.row(j).data();
      double acc = params.dense_b[j];
      for (std::size_t u = 0; u < H; ++u) acc += w[u] * x[u];
      out(b, j) = acc;
    }
  }
  return out;
}

Matrix apply_dropout(const Matrix& h, double rate, Rng& rng, bool training, Matrix& mask) {
  DropoutResult r = dropout(h.values(), rate, rng, training);
  mask = Matrix(h.rows(), h.cols(), std::move(r.mask));
  return Matrix(h.rows(), h.cols(), std::move(r.output));
}

void check_input_shape(const ModelParams& params, const Matrix& inputs) {
  const auto& hp = params.hyper;
  require(inputs.cols() == hp.timesteps * hp.features,
          "forward: input width " + std::to_string(inputs.cols()) + " != timesteps*features " +
              std::to_string(hp.timesteps * hp.features));
}

}  // namespace

void HyperParams::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (units == 0) fail("units must be positive");
  if (dense_units == 0) fail("dense units must be positive");
  if (epochs == 0) fail("epochs must be positive");
  if (batch_size == 0) fail("batch size must be positive");
  if (timesteps == 0) fail("timesteps must be positive");
  if (features == 0) fail("features must be positive");
  if (horizon == 0) fail("horizon must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0,1)");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning rate must be positive");
}

LstmLayerWeights LstmLayerWeights::zeros(std::size_t units, std::size_t input_dim) {
  LstmLayerWeights w;
  w.units = units;
  w.input_dim = input_dim;
  for (std::size_t g = 0; g < kGateCount; ++g) {
    w.w_x[g] = Matrix(units, input_dim);
    w.w_h[g] = Matrix(units, units);
    w.b[g].assign(units, 0.0);
  }
  return w;
}

void LstmLayerWeights::check_shapes() const {
  for (std::size_t g = 0; g < kGateCount; ++g) {
    require(w_x[g].rows() == units && w_x[g].cols() == input_dim, "W_x block has wrong shape");
    require(w_h[g].rows() == units && w_h[g].cols() == units, "W_h block has wrong shape");
    require(b[g].size() == units, "bias block has wrong length");
  }
}

ModelParams ModelParams::zeros(const HyperParams& hyper) {
  ModelParams p;
  p.hyper = hyper;
  p.layer1 = LstmLayerWeights::zeros(hyper.units, hyper.features);
  p.layer2 = LstmLayerWeights::zeros(hyper.units, hyper.units);
  p.dense_w = Matrix(hyper.dense_units, hyper.units);
  p.dense_b.assign(hyper.dense_units, 0.0);
  return p;
}

ModelParams ModelParams::initialize(const HyperParams& hyper, Rng& rng, double forget_bias) {
  hyper.validate();
  ModelParams p = zeros(hyper);
  for (LstmLayerWeights* l : {&p.layer1, &p.layer2}) {
    for (std::size_t g = 0; g < kGateCount; ++g) l->w_x[g] = glorot_init(rng, l->units, l->input_dim);
    for (std::size_t g = 0; g < kGateCount; ++g) l->w_h[g] = glorot_init(rng, l->units, l->units);
    std::fill(l->b[kForgetGate].begin(), l->b[kForgetGate].end(), forget_bias);
  }
  p.dense_w = glorot_init(rng, hyper.dense_units, hyper.units);
  return p;
}

void ModelParams::check_shapes() const {
  layer1.check_shapes();
  layer2.check_shapes();
  require(layer1.units == hyper.units && layer2.units == hyper.units, "layer units disagree with hyper");
  require(layer1.input_dim == hyper.features, "layer 1 input_dim must equal features");
  require(layer2.input_dim == hyper.units, "layer 2 input_dim must equal units");
  require(dense_w.rows() == hyper.dense_units && dense_w.cols() == hyper.units,
          "dense weight has wrong shape");
  require(dense_b.size() == hyper.dense_units, "dense bias has wrong length");
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor(*this, [&](const std::string&, auto v, std::size_t, std::size_t) { n += v.size(); });
  return n;
}

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each_tensor(*this, [&](const std::string&, auto v, std::size_t, std::size_t) {
    for (double x : v) ok = ok && std::isfinite(x);
  });
  return ok;
}

CellOutput cell_forward(std::span<const double> x, std::span<const double> h_prev,
                        std::span<const double> c_prev, const LstmLayerWeights& w) {
  w.check_shapes();
  const std::size_t H = w.units;
  require(x.size() == w.input_dim, "cell_forward: input length " + std::to_string(x.size()) +
                                       " != input_dim " + std::to_string(w.input_dim));
  require(h_prev.size() == H && c_prev.size() == H, "cell_forward: state length != units");
  const PackedLayer p = pack(w);
  const Matrix xm(1, x.size(), {x.begin(), x.end()});
  const Matrix hm(1, H, {h_prev.begin(), h_prev.end()});
  const Matrix cm(1, H, {c_prev.begin(), c_prev.end()});
  StepOutput s = step_forward(p, xm, hm, cm);

  CellOutput out;
  out.h.assign(s.h.values().begin(), s.h.values().end());
  out.c.assign(s.c.values().begin(), s.c.values().end());
  auto& cc = out.cache;
  cc.x.assign(x.begin(), x.end());
  cc.h_prev.assign(h_prev.begin(), h_prev.end());
  cc.c_prev.assign(c_prev.begin(), c_prev.end());
  const auto g = s.gates.row(0);
  cc.i.assign(g.begin() + kInputGate * H, g.begin() + (kInputGate + 1) * H);
  cc.f.assign(g.begin() + kForgetGate * H, g.begin() + (kForgetGate + 1) * H);
  cc.c_tilde.assign(g.begin() + kCellGate * H, g.begin() + (kCellGate + 1) * H);
  cc.o.assign(g.begin() + kOutputGate * H, g.begin() + (kOutputGate + 1) * H);
  cc.c = out.c;
  cc.tanh_c.assign(s.tanh_c.values().begin(), s.tanh_c.values().end());
  return out;
}

std::vector<Matrix> layer_forward(const std::vector<Matrix>& inputs, const LstmLayerWeights& w,
                                  bool return_sequences, LayerCache* cache) {
  w.check_shapes();
  check_layer_inputs(inputs, w);
  return run_layer(inputs, pack(w), return_sequences, cache);
}

Matrix layer_forward(const Matrix& sequence, const LstmLayerWeights& w, bool return_sequences) {
  std::vector<Matrix> steps;
  steps.reserve(sequence.rows());
  for (std::size_t t = 0; t < sequence.rows(); ++t) {
    steps.emplace_back(1, sequence.cols(),
                       std::vector<double>(sequence.row(t).begin(), sequence.row(t).end()));
  }
  const std::vector<Matrix> hs = layer_forward(steps, w, return_sequences);
  Matrix out(hs.size(), w.units);
  for (std::size_t t = 0; t < hs.size(); ++t) std::copy_n(hs[t].data(), w.units, out.row(t).begin());
  return out;
}

std::vector<Matrix> layer_backward(const LayerCache& cache, const LstmLayerWeights& w,
                                   const std::vector<Matrix>& d_outputs, LstmLayerWeights& grad) {
  const std::size_t T = cache.x.size(), B = cache.batch, H = cache.units, D = cache.input_dim;
  if (T == 0 || cache.gates.size() != T || cache.h.size() != T || cache.c.size() != T ||
      H != w.units || D != w.input_dim) {
    throw StateError("layer cache does not match the layer weights");
  }
  const std::size_t expected = cache.return_sequences ? T : 1;
  if (d_outputs.size() != expected) {
    throw StateError("expected " + std::to_string(expected) + " output gradients, got " +
                     std::to_string(d_outputs.size()));
  }
  for (const auto& d : d_outputs) {
    if (d.rows() != B || d.cols() != H) throw StateError("output gradient has wrong shape");
  }
  if (grad.units != H || grad.input_dim != D) grad = LstmLayerWeights::zeros(H, D);

  const PackedLayer p = pack(w);
  const std::size_t G = 4 * H;
  Matrix d_wx(G, D), d_wh(G, H);
  std::vector<double> d_bias(G, 0.0);
  std::vector<Matrix> d_inputs(T, Matrix(B, D));
  Matrix dh_next(B, H), dc_next(B, H);
  const Matrix zeros(B, H);
  Matrix d_pre(B, G);

  for (std::size_t step = T; step-- > 0;) {
    const Matrix& a = cache.gates[step];
    const Matrix& tc = cache.tanh_c[step];
    const Matrix& c_prev = step > 0 ? cache.c[step - 1] : zeros;
    const Matrix& h_prev = step > 0 ? cache.h[step - 1] : zeros;
    const Matrix* d_out = nullptr;
    if (cache.return_sequences) {
      d_out = &d_outputs[step];
    } else if (step == T - 1) {
      d_out = &d_outputs.front();
    }
    Matrix dc_prev(B, H);
    for (std::size_t b = 0; b < B; ++b) {
      const double* ar = a.row(b).data();
      const double* tcr = tc.row(b).data();
      const double* cpr = c_prev.row(b).data();
      const double* dhn = dh_next.row(b).data();
      const double* dcn = dc_next.row(b).data();
      double* dp = d_pre.row(b).data();
      double* dcp = dc_prev.row(b).data();
      for (std::size_t u = 0; u < H; ++u) {
        const double i = ar[kInputGate * H + u];
        const double f = ar[kForgetGate * H + u];
        const double g = ar[kCellGate * H + u];
        const double o = ar[kOutputGate * H + u];
        const double dh = dhn[u] + (d_out ? (*d_out)(b, u) : 0.0);
        const double d_o = dh * tcr[u];
        const double dc = dcn[u] + dh * o * tanh_grad_from_output(tcr[u]);
        dp[kInputGate * H + u] = dc * g * sigmoid_grad_from_output(i);
        dp[kForgetGate * H + u] = dc * cpr[u] * sigmoid_grad_from_output(f);
        dp[kCellGate * H + u] = dc * i * tanh_grad_from_output(g);
        dp[kOutputGate * H + u] = d_o * sigmoid_grad_from_output(o);
        dcp[u] = dc * f;
      }
    }
    accumulate_outer(d_pre, cache.x[step], d_wx);
    if (step > 0) accumulate_outer(d_pre, h_prev, d_wh);
    for (std::size_t b = 0; b < B; ++b) {
      const double* dp = d_pre.row(b).data();
      for (std::size_t k = 0; k < G; ++k) d_bias[k] += dp[k];
    }
    accumulate_product(d_pre, p.wx, d_inputs[step]);
    Matrix dh_prev(B, H);
    accumulate_product(d_pre, p.wh, dh_prev);
    dh_next = std::move(dh_prev);
    dc_next = std::move(dc_prev);
  }

  for (std::size_t g = 0; g < kGateCount; ++g) {
    for (std::size_t u = 0; u < H; ++u) {
      auto gx = grad.w_x[g].row(u);
      auto gh = grad.w_h[g].row(u);
      const auto sx = d_wx.row(g * H + u);
      const auto sh = d_wh.row(g * H + u);
      for (std::size_t k = 0; k < D; ++k) gx[k] += sx[k];
      for (std::size_t k = 0; k < H; ++k) gh[k] += sh[k];
      grad.b[g][u] += d_bias[g * H + u];
    }
  }
  return d_inputs;
}

DropoutResult dropout(std::span<const double> h, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0,1)");
  DropoutResult r;
  r.output.assign(h.begin(), h.end());
  r.mask.assign(h.size(), 1.0);
  if (!training || rate == 0.0) return r;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t k = 0; k < h.size(); ++k) {
    r.mask[k] = rng.uniform() < rate ? 0.0 : keep_scale;
    r.output[k] = h[k] * r.mask[k];
  }
  return r;
}

ForwardResult forward(const ModelParams& params, const Matrix& inputs, bool training, Rng& rng) {
  params.check_shapes();
  check_input_shape(params, inputs);
  require(inputs.rows() > 0, "forward: empty batch");
  const auto& hp = params.hyper;
  const std::size_t B = inputs.rows(), T = hp.timesteps, F = hp.features, H = hp.units;

  ForwardResult r;
  auto& cache = r.cache;
  cache.batch = B;
  cache.timesteps = T;
  cache.features = F;
  cache.units = H;
  cache.dense_units = hp.dense_units;

  const std::vector<Matrix> seq = split_timesteps(inputs, T, F, 0, B);
  const std::vector<Matrix> h1 = run_layer(seq, pack(params.layer1), true, &cache.layer1);
  std::vector<Matrix> dropped1;
  dropped1.reserve(T);
  cache.mask1.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    dropped1.push_back(apply_dropout(h1[t], hp.dropout, rng, training, cache.mask1[t]));
  }
  const std::vector<Matrix> h2 = run_layer(dropped1, pack(params.layer2), false, &cache.layer2);
  cache.dense_in = apply_dropout(h2.front(), hp.dropout, rng, training, cache.mask2);
  r.predictions = dense_forward(params, cache.dense_in);
  return r;
}

Matrix predict(const ModelParams& params, const Matrix& inputs) {
  params.check_shapes();
  check_input_shape(params, inputs);
  const auto& hp = params.hyper;
  const std::size_t T = hp.timesteps, F = hp.features;
  const PackedLayer p1 = pack(params.layer1);
  const PackedLayer p2 = pack(params.layer2);
  constexpr std::size_t kChunk = 512;
  Matrix out(inputs.rows(), hp.dense_units);
  for (std::size_t first = 0; first < inputs.rows(); first += kChunk) {
    const std::size_t rows = std::min(kChunk, inputs.rows() - first);
    const std::vector<Matrix> seq = split_timesteps(inputs, T, F, first, rows);
    // Inference-mode dropout is the identity, so the layers chain directly.
    const std::vector<Matrix> h1 = run_layer(seq, p1, true, nullptr);
    const std::vector<Matrix> h2 = run_layer(h1, p2, false, nullptr);
    const Matrix y = dense_forward(params, h2.front());
    std::copy(y.values().begin(), y.values().end(), out.row(first).begin());
  }
  return out;
}

LossResult mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.empty()) throw EmptyBatchError("mse_loss on an empty batch");
  if (pred.size() != target.size()) {
    throw ShapeError("mse_loss: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(target.size()) + " targets");
  }
  const double n = static_cast<double>(pred.size());
  LossResult r;
  r.grad.resize(pred.size());
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double d = pred[k] - target[k];
    r.loss += d * d;
    r.grad[k] = 2.0 * d / n;
  }
  r.loss /= n;
  return r;
}

Gradients backward(const ModelParams& params, const ForwardCache& cache, const Matrix& loss_grad) {
  const auto& hp = params.hyper;
  if (cache.batch == 0 || cache.units != hp.units || cache.timesteps != hp.timesteps ||
      cache.features != hp.features || cache.dense_units != hp.dense_units ||
      cache.mask1.size() != hp.timesteps) {
    throw StateError("forward cache does not belong to these parameters");
  }
  if (loss_grad.rows() != cache.batch || loss_grad.cols() != hp.dense_units) {
    throw StateError("loss gradient shape does not match the cached batch");
  }
  const std::size_t B = cache.batch, H = hp.units, Y = hp.dense_units, T = hp.timesteps;

  Gradients grad = ModelParams::zeros(hp);

  // Dense head.
  Matrix d_dense_in(B, H);
  for (std::size_t b = 0; b < B; ++b) {
    const double* x = cache.dense_in.row(b).data();
    double* dx = d_dense_in.row(b).data();
    for (std::size_t j = 0; j < Y; ++j) {
      const double g = loss_grad(b, j);
      const double* w = params.dense_w.row(j).data();
      double* dw = grad.dense_w.row(j).data();
      for (std::size_t u = 0; u < H; ++u) {
        dw[u] += g * x[u];
        dx[u] += g * w[u];
      }
      grad.dense_b[j] += g;
    }
  }

  // Dropout after layer 2, then layer 2 from its final state.
  Matrix d_h2 = hadamard(d_dense_in, cache.mask2);
  std::vector<Matrix> d_layer1_out = layer_backward(cache.layer2, params.layer2, {d_h2}, grad.layer2);

  // Dropout after layer 1 (per timestep), then layer 1 over the full sequence.
  for (std::size_t t = 0; t < T; ++t) d_layer1_out[t] = hadamard(d_layer1_out[t], cache.mask1[t]);
  layer_backward(cache.layer1, params.layer1, d_layer1_out, grad.layer1);
  return grad;
}

}  // namespace redf
