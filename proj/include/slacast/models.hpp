/*
 *  Copyright 2026 The slacast Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

// The four forecasting networks.
//
//   lstm          grid flattened to a vector → LSTM×3 (60) → dense → grid
//   seq_lstm      same layers; output step j predicts the month 9 steps
//                 after input step j
//   seq_lstm_p    seq_lstm weights, evaluated by feeding predictions back
//   cnn_convlstm  BN(input) → conv3×3(32)+ReLU ×2 → maxpool 4/4 →
//                 ConvLSTM3×3(40) ×2 → deconv 4×4/4 (40→1)
//
// Networks see normalised SLA (see data.hpp Normalizer) with land set to 0
// and emit normalised SLA; the prediction helpers convert to meters.

#ifndef SLACAST_MODELS_HPP
#define SLACAST_MODELS_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "slacast/autograd.hpp"
#include "slacast/binary_io.hpp"
#include "slacast/data.hpp"
#include "slacast/layers.hpp"
#include "slacast/random.hpp"
#include "slacast/tensor.hpp"

namespace slacast {

enum class ModelKind { lstm, cnn_convlstm, seq_lstm, seq_lstm_p };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::lstm: return "lstm";
    case ModelKind::cnn_convlstm: return "cnn_convlstm";
    case ModelKind::seq_lstm: return "seq_lstm";
    case ModelKind::seq_lstm_p: return "seq_lstm_p";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& name) {
  for (ModelKind k : {ModelKind::lstm, ModelKind::cnn_convlstm, ModelKind::seq_lstm,
                      ModelKind::seq_lstm_p}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown model kind '" + name +
                              "' (lstm, cnn_convlstm, seq_lstm, seq_lstm_p)");
}

inline bool is_sequence_kind(ModelKind k) {
  return k == ModelKind::seq_lstm || k == ModelKind::seq_lstm_p;
}

struct ModelConfig {
  ModelKind kind = ModelKind::cnn_convlstm;
  std::size_t height = 32, width = 32;
  std::size_t lstm_units = 60, lstm_layers = 3;
  std::size_t conv_filters = 32, conv_kernel = 3, conv_layers = 2;
  std::size_t pool = 4;
  std::size_t convlstm_units = 40, convlstm_layers = 2;
  std::size_t seq_len = 9;
  double dropout = 0.8;
  double cell_degrees = 0.25;

  std::size_t cells() const { return height * width; }
  std::size_t sequence_length() const { return is_sequence_kind(kind) ? seq_len : 1; }

  void validate() const {
    if (height == 0 || width == 0) throw std::invalid_argument("grid dims must be positive");
    if (kind == ModelKind::cnn_convlstm && (height % pool != 0 || width % pool != 0)) {
      const auto up = [&](std::size_t v) { return (v + pool - 1) / pool * pool; };
      throw std::invalid_argument(
          "cnn_convlstm needs grid dims divisible by " + std::to_string(pool) + "; pad " +
          std::to_string(height) + "x" + std::to_string(width) + " to " +
          std::to_string(up(height)) + "x" + std::to_string(up(width)));
    }
    if (is_sequence_kind(kind) && seq_len == 0) {
      throw std::invalid_argument("sequence length must be positive");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
      throw std::invalid_argument("dropout must lie in [0, 1)");
    }
    if (lstm_units == 0 || lstm_layers == 0 || conv_filters == 0 || conv_kernel % 2 == 0 ||
        convlstm_units == 0 || convlstm_layers == 0 || pool == 0) {
      throw std::invalid_argument("layer sizes must be positive and kernels odd");
    }
  }
};

/// Trainable plus tracked (batchnorm running statistics) parameter total.
inline std::size_t count_params(const ModelConfig& c) {
  if (c.kind != ModelKind::cnn_convlstm) {
    const std::size_t n = c.cells(), u = c.lstm_units;
    std::size_t total = 0, n_in = n;
    for (std::size_t l = 0; l < c.lstm_layers; ++l) {
      total += 4 * u * (n_in + u + 1);
      n_in = u;
    }
    return total + u * n + n;
  }
  const std::size_t k2 = c.conv_kernel * c.conv_kernel;
  std::size_t total = 4;  // γ, β, running mean, running var for one input channel
  std::size_t c_in = 1;
  for (std::size_t l = 0; l < c.conv_layers; ++l) {
    total += c.conv_filters * c_in * k2 + c.conv_filters;
    c_in = c.conv_filters;
  }
  const std::size_t u = c.convlstm_units;
  for (std::size_t l = 0; l < c.convlstm_layers; ++l) {
    total += 4 * u * k2 * c_in + 4 * u * k2 * u + 4 * u;
    c_in = u;
  }
  return total + c_in * c.pool * c.pool + 1;
}

struct LayerGeometry {
  std::size_t kernel = 1;
  std::size_t stride = 1;
};

/// Input cells seen by one output cell: rf ← rf + (k−1)·jump, jump ← jump·stride.
inline std::size_t receptive_field(std::span<const LayerGeometry> stack) {
  std::size_t rf = 1, jump = 1;
  for (const LayerGeometry& g : stack) {
    rf += (g.kernel - 1) * jump;
    jump *= g.stride;
  }
  return rf;
}

struct ReceptiveField {
  std::size_t cells = 0;
  double degrees = 0.0;
};

/// Spatial receptive field of the convolutional network up to its last
/// ConvLSTM layer (the deconvolution only redistributes pooled cells).
inline ReceptiveField receptive_field(const ModelConfig& c) {
  if (c.kind != ModelKind::cnn_convlstm) {
    throw std::invalid_argument("receptive field is defined for cnn_convlstm only");
  }
  std::vector<LayerGeometry> stack;
  for (std::size_t l = 0; l < c.conv_layers; ++l) stack.push_back({c.conv_kernel, 1});
  stack.push_back({c.pool, c.pool});
  for (std::size_t l = 0; l < c.convlstm_layers; ++l) stack.push_back({c.conv_kernel, 1});
  const std::size_t cells = receptive_field(stack);
  return {cells, static_cast<double>(cells) * c.cell_degrees};
}

struct NamedParameter {
  std::string name;
  ag::Var var;
  bool trainable = true;
};

/// Normalised [1,H,W] input for month t: ocean cells standardised, land 0.
inline Tensor frame_tensor(const GridSeries& s, std::size_t t, const Normalizer& n) {
  Tensor f(Shape{1, s.height(), s.width()});
  auto m = s.month(t);
  for (std::size_t i = 0; i < s.cells(); ++i) f[i] = s.ocean(i) ? n.forward(m[i]) : 0.0;
  return f;
}

inline Tensor mask_tensor(const GridSeries& s) {
  Tensor m(Shape{1, s.height(), s.width()});
  for (std::size_t i = 0; i < s.cells(); ++i) m[i] = s.ocean(i) ? 1.0 : 0.0;
  return m;
}

class Model {
 public:
  struct Pass {
    layers::Mode mode = layers::Mode::infer;
    Rng* dropout_rng = nullptr;                     // train mode, vector kinds
    const layers::BatchStats* batch_stats = nullptr;  // train mode, cnn_convlstm
    const Tensor* mask = nullptr;                   // [1,H,W] ocean mask
  };

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  static Model build(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Model m;
    m.config_ = config;
    Rng rng(seed);
    if (config.kind == ModelKind::cnn_convlstm) {
      m.build_convolutional(rng);
    } else {
      m.build_recurrent(rng);
    }
    return m;
  }

  /// Deep copy; parameters are shared between graphs, so plain copies are
  /// disabled.
  Model clone() const {
    Model m = build(config_, 0);
    m.restore(snapshot());
    m.normalizer = normalizer;
    return m;
  }

  const ModelConfig& config() const { return config_; }
  std::vector<NamedParameter>& parameters() { return params_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var.value().size();
    return n;
  }

  std::vector<Tensor> snapshot() const {
    std::vector<Tensor> out;
    for (const auto& p : params_) out.push_back(p.var.value());
    return out;
  }
  void restore(const std::vector<Tensor>& values) {
    if (values.size() != params_.size()) {
      throw std::invalid_argument("restore: expected " + std::to_string(params_.size()) +
                                  " tensors, got " + std::to_string(values.size()));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i].shape() != params_[i].var.shape()) {
        throw std::invalid_argument("restore: " + params_[i].name + " expects " +
                                    to_string(params_[i].var.shape()) + ", got " +
                                    to_string(values[i].shape()));
      }
      params_[i].var.mutable_value() = values[i];
    }
  }
  void zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
  }

  /// Running statistics of the input batchnorm (cnn_convlstm only).
  Tensor& running_mean() { return bn_mean_.mutable_value(); }
  Tensor& running_var() { return bn_var_.mutable_value(); }

  /// Runs one sequence from zero recurrent state. Inputs are normalised
  /// [1,H,W] frames; returns one normalised [1,H,W] prediction per step.
  std::vector<ag::Var> forward(std::span<const Tensor> inputs, const Pass& pass) const {
    for (const Tensor& f : inputs) {
      if (f.shape() != Shape{1, config_.height, config_.width}) {
        throw std::invalid_argument("model expects frames of shape " +
                                    to_string(Shape{1, config_.height, config_.width}) +
                                    ", got " + to_string(f.shape()));
      }
    }
    return config_.kind == ModelKind::cnn_convlstm ? forward_convolutional(inputs, pass)
                                                   : forward_recurrent(inputs, pass);
  }

  Normalizer normalizer;

 private:
  Model() = default;

  ag::Var add_param(std::string name, Tensor value, bool trainable = true) {
    ag::Var v = trainable ? ag::Var::parameter(std::move(value))
                          : ag::Var::constant(std::move(value));
    params_.push_back({std::move(name), v, trainable});
    return v;
  }

  static Tensor lstm_bias(std::size_t units) {
    Tensor b(Shape{4 * units});
    for (std::size_t i = units; i < 2 * units; ++i) b[i] = 1.0;  // forget block
    return b;
  }

  void build_recurrent(Rng& rng) {
    const std::size_t n = config_.cells(), u = config_.lstm_units;
    std::size_t n_in = n;
    for (std::size_t l = 0; l < config_.lstm_layers; ++l) {
      const std::string p = "lstm" + std::to_string(l + 1) + ".";
      layers::LstmWeights w;
      w.input = add_param(p + "input", layers::glorot_uniform({n_in, 4 * u}, n_in, 4 * u, rng));
      w.recurrent = add_param(p + "recurrent", layers::orthogonal({u, 4 * u}, rng));
      w.bias = add_param(p + "bias", lstm_bias(u));
      lstm_.push_back(w);
      n_in = u;
    }
    dense_w_ = add_param("dense.weights", layers::glorot_uniform({u, n}, u, n, rng));
    dense_b_ = add_param("dense.bias", Tensor(Shape{n}));
  }

  void build_convolutional(Rng& rng) {
    const std::size_t k = config_.conv_kernel, k2 = k * k;
    bn_gamma_ = add_param("bn.gamma", Tensor(Shape{1}, 1.0));
    bn_beta_ = add_param("bn.beta", Tensor(Shape{1}, 0.0));
    bn_mean_ = add_param("bn.running_mean", Tensor(Shape{1}, 0.0), false);
    bn_var_ = add_param("bn.running_var", Tensor(Shape{1}, 1.0), false);
    std::size_t c_in = 1;
    for (std::size_t l = 0; l < config_.conv_layers; ++l) {
      const std::string p = "conv" + std::to_string(l + 1) + ".";
      const std::size_t f = config_.conv_filters;
      ConvWeights w;
      w.kernels = add_param(p + "kernels",
                            layers::glorot_uniform({f, c_in, k, k}, c_in * k2, f * k2, rng));
      w.bias = add_param(p + "bias", Tensor(Shape{f}));
      convs_.push_back(w);
      c_in = f;
    }
    const std::size_t u = config_.convlstm_units;
    for (std::size_t l = 0; l < config_.convlstm_layers; ++l) {
      const std::string p = "convlstm" + std::to_string(l + 1) + ".";
      layers::ConvLstmWeights w;
      w.input_kernels = add_param(
          p + "input_kernels",
          layers::glorot_uniform({4 * u, c_in, k, k}, c_in * k2, 4 * u * k2, rng));
      w.recurrent_kernels =
          add_param(p + "recurrent_kernels", layers::orthogonal({4 * u, u, k, k}, rng));
      w.bias = add_param(p + "bias", lstm_bias(u));
      convlstm_.push_back(w);
      c_in = u;
    }
    const std::size_t s = config_.pool;
    deconv_k_ = add_param("deconv.kernels",
                          layers::glorot_uniform({c_in, 1, s, s}, s * s, c_in * s * s, rng));
    deconv_b_ = add_param("deconv.bias", Tensor(Shape{1}));
  }

  std::vector<ag::Var> forward_recurrent(std::span<const Tensor> inputs,
                                         const Pass& pass) const {
    const std::size_t n = config_.cells(), u = config_.lstm_units;
    const bool drop = pass.mode == layers::Mode::train && config_.dropout > 0.0;
    if (drop && !pass.dropout_rng) {
      throw std::invalid_argument("training with dropout needs a random generator");
    }
    std::vector<layers::DropoutMasks> masks(lstm_.size());
    if (drop) {
      std::size_t n_in = n;
      for (auto& m : masks) {
        m.input = layers::recurrent_dropout_mask({n_in}, config_.dropout, *pass.dropout_rng);
        m.recurrent = layers::recurrent_dropout_mask({u}, config_.dropout, *pass.dropout_rng);
        n_in = u;
      }
    }
    std::vector<layers::RecurrentState> state(lstm_.size(),
                                              layers::RecurrentState::zeros({u}));
    std::vector<ag::Var> out;
    out.reserve(inputs.size());
    for (const Tensor& frame : inputs) {
      ag::Var x = ag::Var::constant(frame.reshaped(Shape{n}));
      for (std::size_t l = 0; l < lstm_.size(); ++l) {
        state[l] = layers::lstm_step(x, state[l], lstm_[l], drop ? &masks[l] : nullptr);
        x = state[l].h;
      }
      out.push_back(ag::reshape(layers::dense(x, dense_w_, dense_b_),
                                Shape{1, config_.height, config_.width}));
    }
    return out;
  }

  std::vector<ag::Var> forward_convolutional(std::span<const Tensor> inputs,
                                             const Pass& pass) const {
    layers::BatchStats stats;
    if (pass.mode == layers::Mode::train) {
      stats = pass.batch_stats ? *pass.batch_stats
                               : layers::batch_statistics(inputs, pass.mask);
    } else {
      stats = {bn_mean_.value(), bn_var_.value()};
    }
    const std::size_t ph = config_.height / config_.pool, pw = config_.width / config_.pool;
    std::vector<layers::RecurrentState> state(
        convlstm_.size(), layers::RecurrentState::zeros({config_.convlstm_units, ph, pw}));
    std::vector<ag::Var> out;
    out.reserve(inputs.size());
    for (const Tensor& frame : inputs) {
      ag::Var x = layers::batchnorm(ag::Var::constant(frame), bn_gamma_, bn_beta_, stats,
                                    pass.mask);
      for (const ConvWeights& c : convs_) {
        x = ag::activation(ag::conv2d(x, c.kernels, c.bias, 1, Padding::same),
                           Activation::relu);
      }
      x = ag::maxpool2d(x, config_.pool, config_.pool);
      for (std::size_t l = 0; l < convlstm_.size(); ++l) {
        state[l] = layers::convlstm_step(x, state[l], convlstm_[l]);
        x = state[l].h;
      }
      out.push_back(ag::deconv2d(x, deconv_k_, deconv_b_, config_.pool));
    }
    return out;
  }

  struct ConvWeights {
    ag::Var kernels, bias;
  };

  ModelConfig config_;
  std::vector<NamedParameter> params_;
  std::vector<layers::LstmWeights> lstm_;
  ag::Var dense_w_, dense_b_;
  ag::Var bn_gamma_, bn_beta_, bn_mean_, bn_var_;
  std::vector<ConvWeights> convs_;
  std::vector<layers::ConvLstmWeights> convlstm_;
  ag::Var deconv_k_, deconv_b_;
};

// ---------------------------------------------------------------------------
// prediction protocols

enum class Feed { truth, prediction };

struct Forecast {
  GridSeries fields;                 // emitted months, meters, land = fill
  std::vector<Feed> provenance;      // per emitted month
  std::vector<YearMonth> true_inputs;  // true months consumed, in order
};

namespace detail {

inline void require_grid(const Model& model, const GridSeries& s) {
  const ModelConfig& c = model.config();
  if (s.height() != c.height || s.width() != c.width) {
    throw std::invalid_argument("series grid " + std::to_string(s.height()) + "x" +
                                std::to_string(s.width()) + " does not match the model's " +
                                std::to_string(c.height) + "x" + std::to_string(c.width));
  }
}

/// Inference over normalised frames; returns normalised outputs.
inline std::vector<Tensor> infer(const Model& model, std::span<const Tensor> frames,
                                 const Tensor& mask) {
  ag::NoGradGuard no_grad;
  Model::Pass pass;
  pass.mask = &mask;
  std::vector<Tensor> out;
  for (const ag::Var& v : model.forward(frames, pass)) out.push_back(v.value());
  return out;
}

inline void write_month(GridSeries& dst, std::size_t t, const Tensor& normalised,
                        const Normalizer& n) {
  auto f = dst.month(t);
  for (std::size_t i = 0; i < dst.cells(); ++i) {
    f[i] = dst.ocean(i) ? n.inverse(normalised[i]) : static_cast<double>(dst.fill);
  }
}

}  // namespace detail

/// Month-ahead forecast: replays the last `warmup` true months (all of them
/// if fewer) from zero state and emits the month after the history.
inline Forecast predict_next_month(const Model& model, const GridSeries& history,
                                   std::size_t warmup = 12) {
  if (is_sequence_kind(model.config().kind)) {
    throw std::invalid_argument("predict_next_month needs an lstm or cnn_convlstm model");
  }
  detail::require_grid(model, history);
  if (history.months() == 0) throw std::invalid_argument("history is empty");
  const std::size_t count = std::min(std::max<std::size_t>(warmup, 1), history.months());
  const std::size_t first = history.months() - count;
  std::vector<Tensor> frames;
  Forecast fc{history.empty_like(1), {Feed::truth}, {}};
  for (std::size_t t = first; t < history.months(); ++t) {
    frames.push_back(frame_tensor(history, t, model.normalizer));
    fc.true_inputs.push_back(history.epoch.plus(static_cast<long>(t)));
  }
  const auto out = detail::infer(model, frames, mask_tensor(history));
  fc.fields.epoch = history.epoch.plus(static_cast<long>(history.months()));
  detail::write_month(fc.fields, 0, out.back(), model.normalizer);
  return fc;
}

/// Sequence forecast: a window of seq_len true months maps onto the seq_len
/// months that follow it.
inline Forecast predict_sequence(const Model& model, const GridSeries& window) {
  const ModelConfig& c = model.config();
  if (!is_sequence_kind(c.kind)) {
    throw std::invalid_argument("predict_sequence needs a seq_lstm model");
  }
  detail::require_grid(model, window);
  const std::size_t len = c.sequence_length();
  if (window.months() != len) {
    throw std::invalid_argument("sequence window must hold exactly " + std::to_string(len) +
                                " months, got " + std::to_string(window.months()));
  }
  std::vector<Tensor> frames;
  Forecast fc{window.empty_like(len), std::vector<Feed>(len, Feed::truth), {}};
  for (std::size_t t = 0; t < len; ++t) {
    frames.push_back(frame_tensor(window, t, model.normalizer));
    fc.true_inputs.push_back(window.epoch.plus(static_cast<long>(t)));
  }
  const auto out = detail::infer(model, frames, mask_tensor(window));
  fc.fields.epoch = window.epoch.plus(static_cast<long>(len));
  for (std::size_t t = 0; t < len; ++t) {
    detail::write_month(fc.fields, t, out[t], model.normalizer);
  }
  return fc;
}

/// Closed loop: the first cycle consumes the true seed window, every later
/// cycle consumes the previous cycle's predictions.
inline Forecast rollout_closed_loop(const Model& model, const GridSeries& seed_window,
                                    std::size_t cycles) {
  if (cycles < 1) throw std::invalid_argument("rollout needs at least one cycle");
  Forecast first = predict_sequence(model, seed_window);
  const std::size_t len = model.config().sequence_length();
  Forecast fc{seed_window.empty_like(len * cycles), std::vector<Feed>(len * cycles, Feed::prediction),
              first.true_inputs};
  fc.fields.epoch = first.fields.epoch;
  const Tensor mask = mask_tensor(seed_window);

  std::vector<Tensor> frames;
  for (std::size_t t = 0; t < len; ++t) frames.push_back(frame_tensor(seed_window, t, model.normalizer));
  for (std::size_t cycle = 0; cycle < cycles; ++cycle) {
    std::vector<Tensor> out = detail::infer(model, frames, mask);
    for (std::size_t t = 0; t < len; ++t) {
      if (!out[t].all_finite()) {
        throw std::runtime_error("rollout produced a non-finite field in cycle " +
                                 std::to_string(cycle + 1));
      }
      for (std::size_t i = 0; i < out[t].size(); ++i) out[t][i] *= mask[i];
      detail::write_month(fc.fields, cycle * len + t, out[t], model.normalizer);
      if (cycle == 0) fc.provenance[t] = Feed::truth;
    }
    frames = std::move(out);
  }
  return fc;
}

// ---------------------------------------------------------------------------
// checkpoints
//
//   "SLNN" | u16 version=1 | u32 config bytes | key=value lines |
//   u32 tensor count | per tensor: u32 rank, u64 extents, f64 values.

inline constexpr char kCheckpointMagic[] = "SLNN";
inline constexpr std::uint16_t kCheckpointVersion = 1;

namespace detail {

inline std::string hex(double v) {
  std::ostringstream os;
  os << std::hexfloat << v;
  return os.str();
}

inline std::string config_block(const Model& m) {
  const ModelConfig& c = m.config();
  std::ostringstream os;
  os << "kind=" << to_string(c.kind) << '\n'
     << "height=" << c.height << '\n'
     << "width=" << c.width << '\n'
     << "lstm_units=" << c.lstm_units << '\n'
     << "lstm_layers=" << c.lstm_layers << '\n'
     << "conv_filters=" << c.conv_filters << '\n'
     << "conv_kernel=" << c.conv_kernel << '\n'
     << "conv_layers=" << c.conv_layers << '\n'
     << "pool=" << c.pool << '\n'
     << "convlstm_units=" << c.convlstm_units << '\n'
     << "convlstm_layers=" << c.convlstm_layers << '\n'
     << "seq_len=" << c.seq_len << '\n'
     << "dropout=" << hex(c.dropout) << '\n'
     << "cell_degrees=" << hex(c.cell_degrees) << '\n'
     << "norm_mean=" << hex(m.normalizer.mean) << '\n'
     << "norm_std=" << hex(m.normalizer.std) << '\n';
  return os.str();
}

inline std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("bad config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace detail

inline io::ByteWriter encode_checkpoint(const Model& m) {
  io::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u16(kCheckpointVersion);
  const std::string block = detail::config_block(m);
  w.u32(static_cast<std::uint32_t>(block.size()));
  w.bytes(block);
  w.u32(static_cast<std::uint32_t>(m.parameters().size()));
  for (const auto& p : m.parameters()) {
    const Tensor& t = p.var.value();
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (double v : t.values()) w.f64(v);
  }
  return w;
}

inline void save_checkpoint(const Model& m, const std::filesystem::path& path) {
  encode_checkpoint(m).write_file(path);
}

inline Model decode_checkpoint(io::ByteReader r) {
  if (r.bytes(4, "magic") != kCheckpointMagic) {
    throw io::FormatError("bad magic, expected SLNN", 0);
  }
  const std::uint16_t version = r.u16("version");
  if (version != kCheckpointVersion) {
    throw io::FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  const std::size_t block_len = r.u32("config length");
  const auto kv = detail::parse_key_values(r.bytes(block_len, "config block"));
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw io::FormatError(std::string("config block lacks ") + key, 10);
    return it->second;
  };
  auto size = [&](const char* key) { return static_cast<std::size_t>(std::stoull(get(key))); };
  auto real = [&](const char* key) { return std::strtod(get(key).c_str(), nullptr); };

  ModelConfig c;
  c.kind = parse_model_kind(get("kind"));
  c.height = size("height");
  c.width = size("width");
  c.lstm_units = size("lstm_units");
  c.lstm_layers = size("lstm_layers");
  c.conv_filters = size("conv_filters");
  c.conv_kernel = size("conv_kernel");
  c.conv_layers = size("conv_layers");
  c.pool = size("pool");
  c.convlstm_units = size("convlstm_units");
  c.convlstm_layers = size("convlstm_layers");
  c.seq_len = size("seq_len");
  c.dropout = real("dropout");
  c.cell_degrees = real("cell_degrees");

  Model m = Model::build(c, 0);
  m.normalizer = {real("norm_mean"), real("norm_std")};
  const std::size_t count = r.u32("tensor count");
  if (count != m.parameters().size()) {
    throw io::FormatError("checkpoint holds " + std::to_string(count) + " tensors, model has " +
                              std::to_string(m.parameters().size()),
                          r.offset() - 4);
  }
  for (auto& p : m.parameters()) {
    const std::size_t at = r.offset();
    Shape shape(r.u32("rank"));
    for (auto& d : shape) d = r.u64("extent");
    if (shape != p.var.shape()) {
      throw io::FormatError(p.name + " expects " + to_string(p.var.shape()) + ", file has " +
                                to_string(shape),
                            at);
    }
    Tensor& t = p.var.mutable_value();
    for (double& v : t.values()) v = r.f64("parameter values");
  }
  if (r.remaining() != 0) throw io::FormatError("trailing bytes after parameters", r.offset());
  return m;
}

inline Model load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::ByteReader::from_file(path));
}

}  // namespace slacast

#endif  // SLACAST_MODELS_HPP
