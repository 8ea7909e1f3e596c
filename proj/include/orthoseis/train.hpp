#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>
#include <numeric>
#include <unordered_map>
#include <vector>

#include "orthoseis/losses.hpp"
#include "orthoseis/network.hpp"
#include "orthoseis/optim.hpp"
#include "orthoseis/parallel.hpp"

namespace orthoseis {

template <class T>
struct Sample {
  RealGrid<T> input;
  RealGrid<T> target;
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 8;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  LossWeights loss_weights;
  double l1_weight = 1e-5;  // L1 penalty on convolution kernels and spectral weights
  int ssim_window = 11;
  double ssim_k1 = 0.01;
  double ssim_k2 = 0.03;
  double ssim_data_range = 0.0;  // 0 = derive from each batch's targets
  int early_stop_patience = 15;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_mae = 0.0;
  double val_mse = 0.0;
  double val_ssim = 0.0;
  double val_r2 = 0.0;
  double seconds = 0.0;
};

struct MetricsRecord {
  double mae = 0.0;
  double mse = 0.0;
  double ssim = 0.0;
  double r2 = 0.0;
  int count = 0;
};

template <class T>
struct FitResult {
  std::vector<EpochLog> epochs;
  int best_epoch = 0;  // 1-based epoch index of the restored state
  double best_val_loss = std::numeric_limits<double>::infinity();
  bool early_stopped = false;
  std::vector<std::vector<T>> final_values;  // parameters after the last epoch ran
};

namespace detail {

// Per-sample gradient buffer so batch members can run on worker threads and
// still reduce in sample order, keeping results bitwise independent of the
// worker count.
template <class T>
struct BufferGradSink final : GradSink<T> {
  const std::unordered_map<const Parameter<T>*, std::size_t>* index = nullptr;
  std::vector<std::vector<T>>* buffers = nullptr;

  void add_real(Parameter<T>& p, const RealGrid<T>& g) override {
    std::vector<T>& buf = (*buffers)[index->at(&p)];
    for (std::int64_t i = 0; i < g.size(); ++i) buf[static_cast<std::size_t>(i)] += g[i];
  }
  void add_complex(Parameter<T>& p, const ComplexGrid<T>& g) override {
    std::vector<T>& buf = (*buffers)[index->at(&p)];
    auto view = g.real_view();
    for (Eigen::Index i = 0; i < view.size(); ++i) buf[static_cast<std::size_t>(i)] += view[i];
  }
};

template <class T>
double batch_data_range(const std::vector<Sample<T>>& samples, const std::vector<int>& order,
                        std::size_t begin, std::size_t end) {
  T lo = std::numeric_limits<T>::max();
  T hi = std::numeric_limits<T>::lowest();
  for (std::size_t i = begin; i < end; ++i) {
    const RealGrid<T>& t = samples[order[i]].target;
    lo = std::min(lo, t.data().minCoeff());
    hi = std::max(hi, t.data().maxCoeff());
  }
  return static_cast<double>(hi) - static_cast<double>(lo);
}

// L1 penalty over convolution kernels and spectral weights (bias, gain, and
// shift parameters are exempt). Complex weights contribute |re| + |im|.
template <class T>
ValueId l1_penalty(Trace<T>& tr, ModelState<T>& model) {
  ValueId total{};
  auto add_term = [&tr, &total](ValueId term) {
    total = total.valid() ? add(tr, total, term) : term;
  };
  auto add_kernel = [&](Parameter<T>& p) { add_term(sum_all(tr, abs_op(tr, tr.param(p)))); };
  auto add_spectral = [&](SpectralWeights<T>& s) {
    if (!s.identity) add_term(l1_complex(tr, tr.param(s.weights)));
  };
  for (auto& e : model.encoders) {
    add_kernel(e.conv1.kernel);
    add_kernel(e.conv2.kernel);
    add_spectral(e.spectral);
  }
  add_kernel(model.bottleneck_conv.kernel);
  add_spectral(model.bottleneck_spectral);
  for (auto& d : model.decoders) {
    add_kernel(d.upconv.kernel);
    add_kernel(d.conv1.kernel);
    add_kernel(d.conv2.kernel);
    add_spectral(d.spectral);
  }
  add_kernel(model.head.kernel);
  return total;
}

}  // namespace detail

// Single-grid inference pass.
template <class T>
RealGrid<T> predict(ModelState<T>& model, const RealGrid<T>& input) {
  Trace<T> tr;
  RngState unused(0);
  ValueId out = forward(tr, model, tr.constant(input), unused, false);
  return tr.value(out);
}

// Per-patch metrics averaged over a sample set. SSIM uses each target's own
// dynamic range, which must be nonzero.
template <class T>
MetricsRecord evaluate(ModelState<T>& model, const std::vector<Sample<T>>& samples,
                       int ssim_window = 11, int threads = 1) {
  require(!samples.empty(), "evaluate: empty sample set");
  const int n = static_cast<int>(samples.size());
  std::vector<MetricsRecord> per(n);
  parallel_for(n, threads, [&](int i) {
    RealGrid<T> pred = predict(model, samples[i].input);
    const RealGrid<T>& target = samples[i].target;
    SsimConfig cfg;
    cfg.window = ssim_window;
    cfg.data_range = static_cast<double>(target.data().maxCoeff() - target.data().minCoeff());
    require(cfg.data_range > 0.0, "evaluate: target has zero dynamic range");
    per[i].mae = metric_mae(pred, target);
    per[i].mse = metric_mse(pred, target);
    per[i].ssim = metric_ssim(pred, target, cfg);
    per[i].r2 = r2_score(pred, target);
  });
  MetricsRecord out;
  for (const MetricsRecord& m : per) {
    out.mae += m.mae;
    out.mse += m.mse;
    out.ssim += m.ssim;
    out.r2 += m.r2;
  }
  out.mae /= n;
  out.mse /= n;
  out.ssim /= n;
  out.r2 /= n;
  out.count = n;
  return out;
}

// Minibatch training with Adam, the weighted MSE/SSIM/MAE loss, an L1 kernel
// penalty, and validation-based early stopping. The logged train/val losses
// are the data term only; the L1 penalty shapes gradients but is excluded
// from the logs so train and validation values stay comparable. After the
// final epoch the parameters are restored to the best-validation state, so
// the returned model attains the minimum logged validation loss.
template <class T>
FitResult<T> fit(ModelState<T>& model, const std::vector<Sample<T>>& train,
                 const std::vector<Sample<T>>& val, const TrainConfig& cfg) {
  require(cfg.epochs >= 0, "fit: epochs must be non-negative");
  require(cfg.batch_size >= 1, "fit: batch_size must be positive");
  require(!train.empty(), "fit: empty training set");
  require(!val.empty(), "fit: empty validation set");

  FitResult<T> result;
  if (cfg.epochs == 0) return result;

  auto params = model.parameters();
  std::unordered_map<const Parameter<T>*, std::size_t> param_index;
  for (std::size_t i = 0; i < params.size(); ++i) param_index[params[i]] = i;

  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  adam_cfg.beta1 = cfg.beta1;
  adam_cfg.beta2 = cfg.beta2;
  adam_cfg.eps = cfg.adam_eps;
  AdamState<T> adam(params, adam_cfg);

  RngState shuffle_rng = RngState(cfg.seed).split(1);
  RngState dropout_root = RngState(cfg.seed).split(2);

  const int n_train = static_cast<int>(train.size());
  std::vector<int> order(n_train);
  std::iota(order.begin(), order.end(), 0);

  const int workers = std::max(1, cfg.threads);
  std::vector<std::vector<std::vector<T>>> sample_buffers(cfg.batch_size);
  for (auto& buffers : sample_buffers) {
    buffers.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      buffers[i].assign(static_cast<std::size_t>(params[i]->scalar_count()), T(0));
    }
  }

  std::vector<std::vector<T>> best_values = clone_values(model);
  int wait = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(order.begin(), order.end());
    RngState epoch_dropout = dropout_root.split(static_cast<std::uint64_t>(epoch));

    double train_loss_sum = 0.0;
    int batch_count = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const int batch_n = static_cast<int>(end - begin);
      SsimConfig ssim_cfg;
      ssim_cfg.window = cfg.ssim_window;
      ssim_cfg.k1 = cfg.ssim_k1;
      ssim_cfg.k2 = cfg.ssim_k2;
      ssim_cfg.data_range = cfg.ssim_data_range > 0.0
                                ? cfg.ssim_data_range
                                : detail::batch_data_range(train, order, begin, end);
      require(ssim_cfg.data_range > 0.0, "fit: batch targets have zero dynamic range");

      for (int s = 0; s < batch_n; ++s) {
        for (auto& buf : sample_buffers[s]) std::fill(buf.begin(), buf.end(), T(0));
      }
      std::vector<double> sample_losses(batch_n, 0.0);
      const T inv_batch = T(1) / static_cast<T>(batch_n);

      parallel_for(batch_n, workers, [&](int s) {
        const int idx = order[begin + s];
        RngState sample_rng = epoch_dropout.split(static_cast<std::uint64_t>(idx));
        Trace<T> tr;
        ValueId x = tr.constant(train[idx].input);
        ValueId target = tr.constant(train[idx].target);
        ValueId pred = forward(tr, model, x, sample_rng, true);
        ValueId data_loss = mixed_loss(tr, pred, target, cfg.loss_weights, ssim_cfg);
        ValueId total = data_loss;
        if (cfg.l1_weight > 0.0) {
          ValueId penalty = detail::l1_penalty(tr, model);
          total = add(tr, data_loss, scale(tr, penalty, static_cast<T>(cfg.l1_weight)));
        }
        ValueId scaled = scale(tr, total, inv_batch);
        const double loss_value = static_cast<double>(tr.value(data_loss)[0]);
        if (!std::isfinite(loss_value)) {
          throw std::runtime_error("fit: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", sample " + std::to_string(idx));
        }
        sample_losses[s] = loss_value;
        detail::BufferGradSink<T> sink;
        sink.index = &param_index;
        sink.buffers = &sample_buffers[s];
        tr.backward(scaled, &sink);
      });

      model.zero_grad();
      for (int s = 0; s < batch_n; ++s) {
        for (std::size_t i = 0; i < params.size(); ++i) {
          Parameter<T>& p = *params[i];
          T* dst = p.is_complex ? reinterpret_cast<T*>(p.cgrad.raw()) : p.grad.raw();
          const std::vector<T>& src = sample_buffers[s][i];
          for (std::size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
        }
      }
      adam_step(adam);

      double batch_loss = 0.0;
      for (double v : sample_losses) batch_loss += v;
      train_loss_sum += batch_loss / batch_n;
      ++batch_count;
    }

    // Validation data loss over fixed-order batches (inference mode).
    double val_loss_sum = 0.0;
    int val_batches = 0;
    std::vector<int> val_order(val.size());
    std::iota(val_order.begin(), val_order.end(), 0);
    for (std::size_t begin = 0; begin < val.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(val.size(), begin + cfg.batch_size);
      SsimConfig ssim_cfg;
      ssim_cfg.window = cfg.ssim_window;
      ssim_cfg.k1 = cfg.ssim_k1;
      ssim_cfg.k2 = cfg.ssim_k2;
      ssim_cfg.data_range = cfg.ssim_data_range > 0.0
                                ? cfg.ssim_data_range
                                : detail::batch_data_range(val, val_order, begin, end);
      require(ssim_cfg.data_range > 0.0, "fit: validation batch has zero dynamic range");
      const int batch_n = static_cast<int>(end - begin);
      std::vector<double> losses(batch_n, 0.0);
      parallel_for(batch_n, workers, [&](int s) {
        const std::size_t i = begin + s;
        Trace<T> tr;
        RngState unused(0);
        ValueId pred = forward(tr, model, tr.constant(val[i].input), unused, false);
        ValueId loss = mixed_loss(tr, pred, tr.constant(val[i].target), cfg.loss_weights, ssim_cfg);
        losses[s] = static_cast<double>(tr.value(loss)[0]);
      });
      double batch_loss = 0.0;
      for (double v : losses) batch_loss += v;
      val_loss_sum += batch_loss / batch_n;
      ++val_batches;
    }

    MetricsRecord metrics = evaluate(model, val, cfg.ssim_window, cfg.threads);

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = train_loss_sum / std::max(1, batch_count);
    log.val_loss = val_loss_sum / std::max(1, val_batches);
    log.val_mae = metrics.mae;
    log.val_mse = metrics.mse;
    log.val_ssim = metrics.ssim;
    log.val_r2 = metrics.r2;
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(log);

    if (log.val_loss < result.best_val_loss) {
      result.best_val_loss = log.val_loss;
      result.best_epoch = epoch;
      best_values = clone_values(model);
      wait = 0;
    } else {
      ++wait;
      if (cfg.early_stop_patience > 0 && wait >= cfg.early_stop_patience) {
        result.early_stopped = true;
        break;
      }
    }
  }

  result.final_values = clone_values(model);
  assign_values(model, best_values);
  return result;
}

// Epoch log serialization: one row per epoch, '.' decimal separator.
inline void write_epoch_csv(const std::string& path, const std::vector<EpochLog>& logs) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  require(f != nullptr, "write_epoch_csv: cannot open " + path);
  std::fprintf(f, "epoch,train_loss,val_loss,val_mae,val_mse,val_ssim,val_r2,seconds\n");
  for (const EpochLog& e : logs) {
    std::fprintf(f, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f\n", e.epoch, e.train_loss, e.val_loss,
                 e.val_mae, e.val_mse, e.val_ssim, e.val_r2, e.seconds);
  }
  std::fclose(f);
}

}  // namespace orthoseis
