#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "capsloc/core/error.hpp"
#include "capsloc/core/random.hpp"
#include "capsloc/core/tape.hpp"
#include "capsloc/data/sampling.hpp"
#include "capsloc/model_io.hpp"
#include "capsloc/optimizer.hpp"

namespace capsloc {

using data::SupervisedSet;

struct TrainOptions {
  int epochs = 150;
  int batch_size = 100;
  bool decode = true;  // include the reconstruction term where the model has one
};

/// One optimizer step: `primary` is the margin loss (capsule models) or the
/// cross entropy (benchmarks); `recon` is zero when not decoding.
struct StepRow {
  long long epoch = 0;
  long long step = 0;
  double total = 0;
  double primary = 0;
  double recon = 0;
};

struct TrainResult {
  std::vector<StepRow> steps;
  std::vector<double> epoch_mean_loss;
};

/// Called after each completed epoch with (1-based epoch, mean total loss).
template <class T>
using EpochHook = std::function<void(long long, double, ModelBundle<T>&)>;

namespace detail {

template <class T>
Tensor<T> batch_images(const SupervisedSet& set, const std::vector<int>& ids,
                       std::size_t lo, std::size_t hi) {
  const int c = set.canvas;
  Tensor<T> x({int(hi - lo), 1, c, c});
  T* px = x.raw();
  for (std::size_t b = lo; b < hi; ++b) {
    const std::uint8_t* img = set.image(ids[b]);
    for (int i = 0; i < c * c; ++i)
      *px++ = static_cast<T>(img[i]) / T(255);
  }
  return x;
}

template <class T>
Tensor<T> batch_multihot(const SupervisedSet& set, const std::vector<int>& ids,
                         std::size_t lo, std::size_t hi, int classes) {
  Tensor<T> y({int(hi - lo), classes});
  for (std::size_t b = lo; b < hi; ++b)
    for (int d = 0; d < set.digits; ++d) {
      const int k = set.labels[std::size_t(ids[b]) * set.digits + d];
      if (k >= classes)
        throw DataFormatError("label " + std::to_string(k) +
                              " outside the model's " +
                              std::to_string(classes) + " classes");
      y.at({int(b - lo), k}) = T(1);
    }
  return y;
}

inline std::vector<int> batch_first_labels(const SupervisedSet& set,
                                           const std::vector<int>& ids,
                                           std::size_t lo, std::size_t hi) {
  std::vector<int> y(hi - lo);
  for (std::size_t b = lo; b < hi; ++b)
    y[b - lo] = set.labels[std::size_t(ids[b]) * set.digits];
  return y;
}

inline double finite_or_throw(double v, const char* what, long long epoch,
                              long long step) {
  if (!std::isfinite(v))
    throw NumericError(std::string(what) + " became non-finite at epoch " +
                       std::to_string(epoch) + " step " +
                       std::to_string(step));
  return v;
}

}  // namespace detail

/// Ties a model to its optimizer and shuffling stream so training can pause
/// at any epoch boundary, round-trip through a checkpoint, and continue
/// bit-identically to an uninterrupted run.
template <class T>
class Trainer {
 public:
  Trainer(ModelBundle<T>& model, TrainOptions opts, Rng order_rng)
      : model_(model), opts_(std::move(opts)), order_rng_(std::move(order_rng)) {
    if (!model_.trainable())
      throw ConfigError("the heuristic model cannot be trained");
    if (opts_.batch_size < 1) throw ConfigError("batch size must be positive");
    opt_ = std::make_unique<Adam<T>>(model_.named_params(),
                                     static_cast<T>(model_.learning_rate()));
  }

  Adam<T>& optimizer() { return *opt_; }
  long long epochs_done() const { return epochs_done_; }

  /// Restore the optimizer moments, shuffle stream, and epoch counter that
  /// make_checkpoint() recorded.
  void resume_from(const Checkpoint& ck) {
    restore_optimizer(*opt_, ck);
    order_rng_ = Rng::deserialize(ck.rng_state);
    epochs_done_ = ck.epoch;
  }

  /// Trains until `target_epochs` are complete, appending to `out`.
  void run(const SupervisedSet& data, long long target_epochs,
           TrainResult& out, const EpochHook<T>& hook = {}) {
    if (data.count < 1) throw DataFormatError("empty training set");
    const bool caps = model_.is_capsnet();
    const bool decode =
        opts_.decode && (caps || (model_.is_benchmark() &&
                                  model_.bench->decodes()));
    std::vector<int> ids(data.count);
    for (int i = 0; i < data.count; ++i) ids[i] = i;

    while (epochs_done_ < target_epochs) {
      const long long epoch = epochs_done_ + 1;
      // shuffle from the identity so the epoch order is a pure function of
      // the rng state and survives checkpoint round trips
      for (int i = 0; i < data.count; ++i) ids[i] = i;
      order_rng_.shuffle(ids);
      double loss_sum = 0;
      long long steps = 0;
      for (std::size_t lo = 0; lo < ids.size();
           lo += std::size_t(opts_.batch_size)) {
        const std::size_t hi =
            std::min(ids.size(), lo + std::size_t(opts_.batch_size));
        auto images = detail::batch_images<T>(data, ids, lo, hi);
        Tape<T> tape;
        StepRow row{epoch, steps + 1, 0, 0, 0};
        Tensor<T> total;
        if (caps) {
          auto labels = detail::batch_multihot<T>(data, ids, lo, hi,
                                                  model_.num_classes());
          auto fwd = model_.caps->forward(&tape, images, &labels, decode);
          total = fwd.total;
          row.primary = fwd.margin.item();
          if (decode) row.recon = fwd.recon_loss.item();
        } else {
          auto labels = detail::batch_first_labels(data, ids, lo, hi);
          auto fwd = model_.bench->forward(&tape, images, &labels, decode);
          total = fwd.total;
          row.primary = fwd.ce.item();
          if (decode) row.recon = fwd.recon_loss.item();
        }
        row.total = detail::finite_or_throw(total.item(), "total loss",
                                            epoch, row.step);
        detail::finite_or_throw(row.primary, "classification loss", epoch,
                                row.step);
        detail::finite_or_throw(row.recon, "reconstruction loss", epoch,
                                row.step);
        tape.backward(total);
        opt_->step();
        out.steps.push_back(row);
        loss_sum += row.total;
        ++steps;
      }
      epochs_done_ = epoch;
      out.epoch_mean_loss.push_back(loss_sum / double(steps));
      if (hook) hook(epoch, out.epoch_mean_loss.back(), model_);
    }
  }

  Checkpoint snapshot(json extra = json::object()) {
    return make_checkpoint(model_, opt_.get(), epochs_done_,
                           order_rng_.serialize(), std::move(extra));
  }

 private:
  ModelBundle<T>& model_;
  TrainOptions opts_;
  Rng order_rng_;
  std::unique_ptr<Adam<T>> opt_;
  long long epochs_done_ = 0;
};

/// Fresh model + full training run. The seed splits into independent streams
/// for parameter initialization and batch order.
template <class T>
struct TrainRun {
  ModelBundle<T> model;
  TrainResult curve;
  Checkpoint final_state;
};

template <class T>
TrainRun<T> train_model(ModelKind kind, const json& config,
                        const SupervisedSet& data, const TrainOptions& opts,
                        unsigned long long seed,
                        const EpochHook<T>& hook = {}) {
  Rng master(seed);
  Rng init = master.fork(0);
  TrainRun<T> run;
  run.model = make_model<T>(kind, config, init);
  Trainer<T> trainer(run.model, opts, master.fork(1));
  trainer.run(data, opts.epochs, run.curve, hook);
  run.final_state = trainer.snapshot();
  return run;
}

template <class T>
TrainRun<T> resume_training(const Checkpoint& ck, const SupervisedSet& data,
                            const TrainOptions& opts,
                            const EpochHook<T>& hook = {}) {
  TrainRun<T> run;
  run.model = model_from_checkpoint<T>(ck);
  Trainer<T> trainer(run.model, opts, Rng(0));
  trainer.resume_from(ck);
  trainer.run(data, opts.epochs, run.curve, hook);
  run.final_state = trainer.snapshot();
  return run;
}

inline void write_curve_csv(const std::filesystem::path& path,
                            const TrainResult& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataFormatError("cannot open " + path.string());
  out << "epoch,step,total,classification,reconstruction\n";
  char buf[160];
  for (const auto& s : r.steps) {
    std::snprintf(buf, sizeof buf, "%lld,%lld,%.9g,%.9g,%.9g\n", s.epoch,
                  s.step, s.total, s.primary, s.recon);
    out << buf;
  }
  if (!out) throw DataFormatError("short write to " + path.string());
}

}  // namespace capsloc
