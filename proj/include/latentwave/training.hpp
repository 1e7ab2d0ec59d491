#pragma once

// Sequential training: the autoencoder on normalized volumes (mean L1), then
// the approximator on precomputed latent codes (mean squared error).

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "latentwave/adam.hpp"
#include "latentwave/dataset.hpp"
#include "latentwave/io.hpp"
#include "latentwave/model.hpp"

namespace latentwave {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t num_iterations = 2000;
  std::size_t batch_size = 4;
  std::uint64_t seed = 1;
  std::size_t log_interval = 50;
  /// 0 disables periodic checkpoints.
  std::size_t checkpoint_interval = 0;
  /// Memory budget for cached training volumes.
  std::size_t cache_bytes = std::size_t{1} << 30;

  static TrainConfig autoencoder_defaults() { return {}; }
  static TrainConfig approximator_defaults() {
    TrainConfig c;
    c.learning_rate = 1e-3;
    c.num_iterations = 20000;
    c.batch_size = 64;
    c.log_interval = 1000;
    return c;
  }

  void validate() const {
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate: must be positive");
    if (num_iterations == 0) throw ConfigError("num_iterations: must be positive");
    if (batch_size == 0) throw ConfigError("batch_size: must be positive");
    if (log_interval == 0) throw ConfigError("log_interval: must be positive");
    if (cache_bytes == 0) throw ConfigError("cache_bytes: must be positive");
  }
};

inline Json to_json(const TrainConfig& c) {
  Json j;
  j["learning_rate"] = c.learning_rate;
  j["num_iterations"] = c.num_iterations;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["log_interval"] = c.log_interval;
  j["checkpoint_interval"] = c.checkpoint_interval;
  j["cache_bytes"] = c.cache_bytes;
  return j;
}

/// Missing keys keep the values of `defaults`.
inline TrainConfig train_config_from_json(const Json& j, TrainConfig defaults = {}) {
  detail::reject_unknown_keys(
      j, {"learning_rate", "num_iterations", "batch_size", "seed", "log_interval", "checkpoint_interval", "cache_bytes"},
      "training config");
  TrainConfig c = defaults;
  detail::json_opt(j, "learning_rate", c.learning_rate);
  detail::json_opt(j, "num_iterations", c.num_iterations);
  detail::json_opt(j, "batch_size", c.batch_size);
  detail::json_opt(j, "seed", c.seed);
  detail::json_opt(j, "log_interval", c.log_interval);
  detail::json_opt(j, "checkpoint_interval", c.checkpoint_interval);
  detail::json_opt(j, "cache_bytes", c.cache_bytes);
  c.validate();
  return c;
}

/// Endless stream of indices in [0, n): a fresh seeded permutation per epoch.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::uint64_t seed) : n_(n), rng_(seed) {
    if (n == 0) throw ConfigError("training set is empty");
  }

  std::size_t next() {
    if (pos_ == order_.size()) reshuffle();
    return order_[pos_++];
  }

  std::vector<std::size_t> batch(std::size_t size) {
    std::vector<std::size_t> out(size);
    for (auto& i : out) i = next();
    return out;
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    for (std::size_t i = n_; i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng_.next() * static_cast<double>(i));
      std::swap(order_[i - 1], order_[std::min(j, i - 1)]);
    }
    pos_ = 0;
  }

  std::size_t n_;
  UniformSource rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

struct TrainingHooks {
  /// Called every log_interval iterations and after the last one.
  std::function<void(std::size_t iteration, double loss)> on_log;
  /// Called every checkpoint_interval iterations.
  std::function<void(std::size_t iteration)> on_checkpoint;
};

struct TrainingResult {
  std::vector<double> loss_history;
};

namespace detail {

inline void check_loss(double loss, std::size_t iteration, const char* what) {
  if (!std::isfinite(loss)) {
    throw NumericalError(std::string(what) + ": non-finite loss at iteration " + std::to_string(iteration));
  }
}

inline void report(const TrainConfig& cfg, const TrainingHooks& hooks, std::size_t it, double loss) {
  if (hooks.on_log && ((it + 1) % cfg.log_interval == 0 || it + 1 == cfg.num_iterations)) hooks.on_log(it + 1, loss);
  if (hooks.on_checkpoint && cfg.checkpoint_interval && (it + 1) % cfg.checkpoint_interval == 0) hooks.on_checkpoint(it + 1);
}

}  // namespace detail

/// (B, 1, D, H, W) batch of prepared volumes.
template <class T>
Tensor<T> stack_volumes(const std::vector<const FieldVolume*>& vols) {
  const GridDims d = vols.front()->dims;
  Tensor<T> t(Shape{vols.size(), 1, d.nz, d.ny, d.nx});
  const std::size_t n = d.count();
  for (std::size_t b = 0; b < vols.size(); ++b) {
    if (!(vols[b]->dims == d)) throw ShapeError("stack_volumes: mixed dims");
    for (std::size_t i = 0; i < n; ++i) t[b * n + i] = static_cast<T>(vols[b]->data[i]);
  }
  return t;
}

/// Mean L1 between a batch and its reconstruction.
template <class T>
Var<T> autoencoder_loss(const ModelParams<T>& m, const Tensor<T>& batch) {
  auto x = constant(batch);
  return l1_loss(decoder_forward(m, encoder_forward(m, x)), x);
}

/// One (entry, frame) pair per sample, in manifest order.
inline std::vector<std::pair<std::size_t, std::size_t>> frame_index(const DatasetManifest& m) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t e = 0; e < m.entries.size(); ++e)
    for (std::size_t k = 0; k < m.entries[e].frames.size(); ++k) out.emplace_back(e, k);
  return out;
}

/// Minimizes mean L1 reconstruction error of the encoder/decoder pair in
/// `model` over the manifest's volumes. Approximator weights are untouched.
template <class T>
TrainingResult train_autoencoder(ModelParams<T>& model, const DatasetManifest& manifest, const NormalizationSpec& norm,
                                 const TrainConfig& cfg, const TrainingHooks& hooks = {}) {
  cfg.validate();
  norm.validate();
  const GridDims dims = model.spec.input_dims;
  if (dims.nx > manifest.dims.nx || dims.ny > manifest.dims.ny || dims.nz > manifest.dims.nz) {
    throw ShapeError("model input " + dims.str() + " exceeds data " + manifest.dims.str());
  }
  const auto frames = frame_index(manifest);
  VolumeCache cache(manifest, dims, norm.field_scale, cfg.cache_bytes);
  EpochSampler sampler(frames.size(), cfg.seed);

  std::vector<Var<T>> params = model.group("encoder.");
  for (auto& p : model.group("decoder.")) params.push_back(p);
  for (auto& p : params) p.zero_grad();
  AdamState<T> adam(cfg.learning_rate);

  TrainingResult result;
  for (std::size_t it = 0; it < cfg.num_iterations; ++it) {
    std::vector<const FieldVolume*> vols;
    std::vector<FieldVolume> held;
    held.reserve(cfg.batch_size);
    for (std::size_t i : sampler.batch(cfg.batch_size)) {
      // Copies guard against eviction while the batch is assembled.
      held.push_back(cache.get(frames[i].first, frames[i].second));
    }
    for (const auto& v : held) vols.push_back(&v);
    auto loss = autoencoder_loss(model, stack_volumes<T>(vols));
    const double value = static_cast<double>(loss.value()[0]);
    detail::check_loss(value, it, "autoencoder");
    backward(loss);
    adam_step(params, adam);
    result.loss_history.push_back(value);
    detail::report(cfg, hooks, it, value);
  }
  return result;
}

/// Mean L1 over every volume of the manifest, evaluated one at a time.
template <class T>
double mean_reconstruction_l1(const ModelParams<T>& model, const DatasetManifest& manifest, const NormalizationSpec& norm,
                              std::size_t cache_bytes = std::size_t{1} << 30) {
  VolumeCache cache(manifest, model.spec.input_dims, norm.field_scale, cache_bytes);
  NoGradGuard guard;
  double total = 0.0;
  const auto frames = frame_index(manifest);
  for (const auto& [e, k] : frames) {
    const FieldVolume& v = cache.get(e, k);
    total += static_cast<double>(autoencoder_loss(model, stack_volumes<T>({&v})).value()[0]);
  }
  return total / static_cast<double>(frames.size());
}

/// Encodes every frame; records carry raw (r, n, t).
template <class T>
LatentDataset encode_dataset(const ModelParams<T>& model, const DatasetManifest& manifest, const NormalizationSpec& norm,
                             std::size_t cache_bytes = std::size_t{1} << 30) {
  if (manifest.dims.nx < model.spec.input_dims.nx || manifest.dims.ny < model.spec.input_dims.ny ||
      manifest.dims.nz < model.spec.input_dims.nz) {
    throw ShapeError("model input " + model.spec.input_dims.str() + " exceeds data " + manifest.dims.str());
  }
  VolumeCache cache(manifest, model.spec.input_dims, norm.field_scale, cache_bytes);
  LatentDataset out;
  out.latent_size = model.spec.latent_size;
  out.normalization = norm;
  for (const auto& [e, k] : frame_index(manifest)) {
    const LatentCode code = encode(model, cache.get(e, k));
    LatentRecord rec;
    rec.radius = manifest.entries[e].radius;
    rec.index = manifest.entries[e].index;
    rec.time = manifest.entries[e].frames[k].time;
    rec.code.assign(code.values.begin(), code.values.end());
    out.records.push_back(std::move(rec));
  }
  return out;
}

/// Normalized inputs (B, k+1) and target codes (B, l) for the given records.
template <class T>
std::pair<Tensor<T>, Tensor<T>> latent_batch(const LatentDataset& d, const std::vector<std::size_t>& rows) {
  Tensor<T> in(Shape{rows.size(), 3});
  Tensor<T> target(Shape{rows.size(), d.latent_size});
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const auto& r = d.records.at(rows[b]);
    const auto u = normalize_point({r.radius, r.index, r.time}, d.normalization);
    for (std::size_t i = 0; i < 3; ++i) in[b * 3 + i] = static_cast<T>(u[i]);
    for (std::size_t i = 0; i < d.latent_size; ++i) target[b * d.latent_size + i] = static_cast<T>(r.code[i]);
  }
  return {std::move(in), std::move(target)};
}

/// Mean squared latent error of the approximator over the whole data set.
template <class T>
double approximator_dataset_loss(const ModelParams<T>& model, const LatentDataset& d) {
  std::vector<std::size_t> rows(d.records.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  NoGradGuard guard;
  auto [in, target] = latent_batch<T>(d, rows);
  return static_cast<double>(l2_loss(approximator_forward(model, constant(std::move(in))), constant(std::move(target))).value()[0]);
}

/// Fits the approximator to precomputed codes; encoder and decoder are untouched.
template <class T>
TrainingResult train_approximator(ModelParams<T>& model, const LatentDataset& latents, const TrainConfig& cfg,
                                  const TrainingHooks& hooks = {}) {
  cfg.validate();
  if (latents.records.empty()) throw ConfigError("latent dataset is empty");
  if (latents.latent_size != model.spec.latent_size) {
    throw ShapeError("latent codes have length " + std::to_string(latents.latent_size) + ", model expects " +
                     std::to_string(model.spec.latent_size));
  }
  EpochSampler sampler(latents.records.size(), cfg.seed);
  std::vector<Var<T>> params = model.group("approximator.");
  for (auto& p : params) p.zero_grad();
  AdamState<T> adam(cfg.learning_rate);
  TrainingResult result;
  for (std::size_t it = 0; it < cfg.num_iterations; ++it) {
    auto [in, target] = latent_batch<T>(latents, sampler.batch(cfg.batch_size));
    auto loss = l2_loss(approximator_forward(model, constant(std::move(in))), constant(std::move(target)));
    const double value = static_cast<double>(loss.value()[0]);
    detail::check_loss(value, it, "approximator");
    backward(loss);
    adam_step(params, adam);
    result.loss_history.push_back(value);
    detail::report(cfg, hooks, it, value);
  }
  return result;
}

/// Mean of the first and last `window` entries of a loss log.
inline std::pair<double, double> windowed_ends(const std::vector<double>& log, std::size_t window) {
  if (log.empty()) return {0.0, 0.0};
  window = std::max<std::size_t>(1, std::min(window, log.size()));
  const double first = std::accumulate(log.begin(), log.begin() + static_cast<long>(window), 0.0) / window;
  const double last = std::accumulate(log.end() - static_cast<long>(window), log.end(), 0.0) / window;
  return {first, last};
}

}  // namespace latentwave
