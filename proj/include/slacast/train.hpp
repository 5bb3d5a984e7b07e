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

// Teacher-forced training loop.
//
// Samples are windows of true months cut from the training partition. For
// month-ahead kinds a window of L inputs is paired with the L months that
// follow each input by one; for sequence kinds a window of seq_len inputs is
// paired with the seq_len months after the window. Each window starts from
// zero recurrent state. Windows are shuffled every epoch and grouped into
// mini-batches; one Adam step per mini-batch.

#ifndef SLACAST_TRAIN_HPP
#define SLACAST_TRAIN_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "slacast/autograd.hpp"
#include "slacast/data.hpp"
#include "slacast/layers.hpp"
#include "slacast/models.hpp"
#include "slacast/optim.hpp"

namespace slacast::optim {

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_mse = 0.0;  // m²
  double val_mse = 0.0;    // m²
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;

  void write_csv(std::ostream& out) const {
    out << "epoch,train_mse,val_mse\n";
    out.precision(17);
    for (const auto& e : epochs) {
      out << e.epoch << ',' << e.train_mse << ',' << e.val_mse << '\n';
    }
  }
};

struct FitOptions {
  TrainSchedule schedule;
  std::size_t window = 12;  // months per truncated-BPTT window (month-ahead kinds)
  std::size_t batch = 4;    // windows per Adam step
  std::size_t stride = 1;   // months between consecutive window starts
  std::uint64_t seed = 1;
  bool keep_best = true;    // restore the lowest-validation-loss epoch
  std::function<void(const EpochRecord&)> on_epoch;
};

namespace detail {

struct Window {
  std::size_t input_begin = 0;  // index of the first input month
  std::size_t inputs = 0;       // number of input months
  std::size_t shift = 1;        // target of input month m is m + shift
};

/// Sum of squared errors and ocean-cell count of one window, in normalised
/// units. When `loss_scale` is positive the window's contribution
/// SE·loss_scale is differentiated into the model parameters.
struct WindowLoss {
  double se = 0.0;
  double count = 0.0;
};

inline WindowLoss run_window(const Model& model, const std::vector<Tensor>& frames,
                             const Window& w, std::size_t first_target,
                             std::size_t end_target, const Tensor& mask,
                             const Model::Pass& pass, double loss_scale) {
  std::vector<Tensor> inputs(frames.begin() + static_cast<std::ptrdiff_t>(w.input_begin),
                             frames.begin() +
                                 static_cast<std::ptrdiff_t>(w.input_begin + w.inputs));
  std::vector<ag::Var> outputs = model.forward(inputs, pass);
  const double ocean = sum(mask);
  WindowLoss result;
  ag::Var total;
  for (std::size_t j = 0; j < outputs.size(); ++j) {
    const std::size_t target = w.input_begin + j + w.shift;
    if (target < first_target || target >= end_target) continue;
    ag::Var mse = masked_mse(outputs[j], frames[target], mask);
    result.se += mse.value()[0] * ocean;
    result.count += ocean;
    if (loss_scale > 0.0) {
      ag::Var term = ag::scale(mse, ocean * loss_scale);
      total = total ? ag::add(total, term) : term;
    }
  }
  if (loss_scale > 0.0 && total) ag::backward(total);
  return result;
}

/// Teacher-forced loss over target months [first, end) of `frames`, evaluated
/// in consecutive zero-state chunks the same way training windows are.
inline double chunked_mse(const Model& model, const std::vector<Tensor>& frames,
                          std::size_t first, std::size_t end, std::size_t chunk,
                          std::size_t shift, const Tensor& mask) {
  ag::NoGradGuard no_grad;
  Model::Pass pass;
  pass.mask = &mask;
  double se = 0.0, count = 0.0;
  for (std::size_t target = first; target < end; target += chunk) {
    Window w{target - shift, std::min(chunk, end - target), shift};
    const WindowLoss l = run_window(model, frames, w, first, end, mask, pass, 0.0);
    se += l.se;
    count += l.count;
  }
  return se / count;
}

}  // namespace detail

/// Trains `model` in place and returns the per-epoch history. The model's
/// normaliser is fitted to the training partition. With keep_best the
/// parameters of the epoch with the lowest validation loss are restored.
inline TrainingHistory fit(Model& model, const GridSeries& train, const GridSeries& val,
                           const FitOptions& options) {
  const ModelConfig& config = model.config();
  if (!train.same_grid(val)) {
    throw std::invalid_argument("training and validation series differ in grid or mask");
  }
  if (train.height() != config.height || train.width() != config.width) {
    throw std::invalid_argument("training grid does not match the model configuration");
  }
  if (options.batch == 0 || options.stride == 0 || options.window == 0) {
    throw std::invalid_argument("window, batch and stride must be positive");
  }

  const bool sequence = is_sequence_kind(config.kind);
  const std::size_t train_months = train.months();
  const std::size_t span = sequence ? config.sequence_length()
                                    : std::min(options.window, train_months - 1);
  const std::size_t shift = sequence ? span : 1;
  if (train_months < span + shift || span == 0) {
    throw std::invalid_argument("training partition of " + std::to_string(train_months) +
                                " months is too short for windows of " +
                                std::to_string(span) + " + " + std::to_string(shift));
  }
  if (train_months < shift) {
    throw std::invalid_argument("training partition shorter than the validation context");
  }

  model.normalizer = Normalizer::fit(train);
  const double to_m2 = model.normalizer.std * model.normalizer.std;
  const Tensor mask = mask_tensor(train);

  // training frames, then validation frames preceded by `shift` months of context
  std::vector<Tensor> train_frames, val_frames;
  for (std::size_t t = 0; t < train_months; ++t) {
    train_frames.push_back(frame_tensor(train, t, model.normalizer));
  }
  for (std::size_t t = train_months - shift; t < train_months; ++t) {
    val_frames.push_back(train_frames[t]);
  }
  for (std::size_t t = 0; t < val.months(); ++t) {
    val_frames.push_back(frame_tensor(val, t, model.normalizer));
  }

  std::vector<detail::Window> windows;
  for (std::size_t s = 0; s + span + shift <= train_months; s += options.stride) {
    windows.push_back({s, span, shift});
  }

  std::vector<ag::Var> trainable;
  for (auto& p : model.parameters()) {
    if (p.trainable) trainable.push_back(p.var);
  }
  AdamState adam;
  TrainingHistory history;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_params = model.snapshot();

  auto diverged = [](std::size_t epoch, const std::string& why) {
    return std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ": " +
                              why);
  };

  for (std::size_t epoch = 0; epoch < options.schedule.epochs; ++epoch) {
    try {
      const double lr = lr_at_epoch(options.schedule, epoch);
      Rng order_rng = Rng::stream(options.seed, 2 * epoch);
      Rng dropout_rng = Rng::stream(options.seed, 2 * epoch + 1);
      std::vector<std::size_t> order(windows.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      order_rng.shuffle(order);

      double epoch_se = 0.0, epoch_count = 0.0;
      for (std::size_t b0 = 0; b0 < order.size(); b0 += options.batch) {
        const std::size_t b1 = std::min(order.size(), b0 + options.batch);

        layers::BatchStats stats;
        Model::Pass pass;
        pass.mode = layers::Mode::train;
        pass.dropout_rng = &dropout_rng;
        pass.mask = &mask;
        if (config.kind == ModelKind::cnn_convlstm) {
          std::vector<Tensor> batch_inputs;
          for (std::size_t i = b0; i < b1; ++i) {
            const auto& w = windows[order[i]];
            for (std::size_t t = 0; t < w.inputs; ++t) {
              batch_inputs.push_back(train_frames[w.input_begin + t]);
            }
          }
          stats = layers::batch_statistics(batch_inputs, &mask);
          pass.batch_stats = &stats;
        }

        const double batch_count = static_cast<double>(b1 - b0) *
                                   static_cast<double>(span) * sum(mask);
        double batch_se = 0.0;
        for (std::size_t i = b0; i < b1; ++i) {
          const auto l = detail::run_window(model, train_frames, windows[order[i]], 0,
                                            train_months, mask, pass, 1.0 / batch_count);
          batch_se += l.se;
        }
        if (!std::isfinite(batch_se)) throw diverged(epoch, "loss is not finite");
        epoch_se += batch_se;
        epoch_count += batch_count;

        std::vector<Tensor> zero_grads;
        std::vector<Tensor*> params;
        std::vector<const Tensor*> grads;
        zero_grads.reserve(trainable.size());
        for (auto& v : trainable) {
          params.push_back(&v.mutable_value());
          if (v.has_grad()) {
            grads.push_back(&v.grad());
          } else {
            zero_grads.emplace_back(v.shape());
            grads.push_back(&zero_grads.back());
          }
        }
        adam_step(params, grads, adam, lr);
        if (config.kind == ModelKind::cnn_convlstm) {
          layers::update_running_stats(model.running_mean(), model.running_var(), stats);
        }
        model.zero_grad();
      }

      EpochRecord rec;
      rec.epoch = epoch;
      rec.lr = lr;
      rec.train_mse = epoch_se / epoch_count * to_m2;
      rec.val_mse = detail::chunked_mse(model, val_frames, shift, val_frames.size(), span,
                                        shift, mask) *
                    to_m2;
      if (!std::isfinite(rec.val_mse)) throw diverged(epoch, "validation loss is not finite");
      if (rec.val_mse < best_val) {
        best_val = rec.val_mse;
        history.best_epoch = epoch;
        if (options.keep_best) best_params = model.snapshot();
      }
      history.epochs.push_back(rec);
      if (options.on_epoch) options.on_epoch(rec);
    } catch (const std::domain_error& e) {
      // non-finite values caught inside the forward pass or the optimizer
      throw diverged(epoch, e.what());
    }
  }
  if (options.keep_best && !history.epochs.empty()) model.restore(best_params);
  return history;
}

}  // namespace slacast::optim

#endif  // SLACAST_TRAIN_HPP
