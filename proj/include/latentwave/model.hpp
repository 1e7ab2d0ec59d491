#pragma once

// Encoder R (volume -> latent code), decoder G (latent code -> volume) and
// projection approximator F ((r, n, t) -> latent code).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "latentwave/autodiff.hpp"
#include "latentwave/errors.hpp"
#include "latentwave/normalization.hpp"
#include "latentwave/volume.hpp"

namespace latentwave {

/// Largest q with min(dims) / 2^q >= 4.
inline std::size_t num_downsample_layers(GridDims dims) {
  const std::size_t m = std::min({dims.nx, dims.ny, dims.nz});
  if (m < 8) throw ConfigError("input_dims: smallest extent " + std::to_string(m) + " is below 8");
  std::size_t q = 0;
  while (m >= (std::size_t{4} << (q + 1))) ++q;
  return q;
}

/// Per-axis largest multiple of 2^q not exceeding `dims`.
inline GridDims cropped_dims(GridDims dims, std::size_t q) {
  const std::size_t f = std::size_t{1} << q;
  return {dims.nx / f * f, dims.ny / f * f, dims.nz / f * f};
}

struct ArchitectureSpec {
  GridDims input_dims{48, 48, 48};
  std::size_t latent_size = 64;
  std::size_t base_channels = 4;
  std::size_t conv_block_depth = 4;
  std::size_t num_downsamples = 3;
  double leaky_slope = 0.2;
  std::size_t approx_hidden_width = 128;
  /// Number of simulation parameters besides time (r and n).
  std::size_t param_count = 2;

  bool operator==(const ArchitectureSpec&) const = default;

  /// Spec for volumes of `raw` extent, cropped to what `q` downsamplings allow.
  static ArchitectureSpec for_volume(GridDims raw, std::size_t latent_size, std::size_t base_channels) {
    ArchitectureSpec s;
    s.num_downsamples = num_downsample_layers(raw);
    s.input_dims = cropped_dims(raw, s.num_downsamples);
    s.latent_size = latent_size;
    s.base_channels = base_channels;
    s.approx_hidden_width = std::max<std::size_t>(128, 2 * latent_size);
    return s;
  }

  /// Channel count at resolution level j (0 = input resolution).
  std::size_t channels(std::size_t level) const {
    return base_channels * std::min<std::size_t>(std::size_t{1} << std::min<std::size_t>(level, 3), 8);
  }
  GridDims dims_at(std::size_t level) const {
    return {input_dims.nx >> level, input_dims.ny >> level, input_dims.nz >> level};
  }
  std::size_t bottleneck_size() const { return channels(num_downsamples) * dims_at(num_downsamples).count(); }

  void validate() const {
    auto fail = [](const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); };
    if (latent_size == 0) fail("latent_size", "must be positive");
    if (base_channels == 0) fail("base_channels", "must be positive");
    if (conv_block_depth != 4) fail("conv_block_depth", "must be 4");
    if (num_downsamples == 0) fail("num_downsamples", "must be positive");
    if (leaky_slope < 0 || leaky_slope >= 1) fail("leaky_slope", "must lie in [0, 1)");
    if (approx_hidden_width == 0) fail("approx_hidden_width", "must be positive");
    if (param_count == 0) fail("param_count", "must be positive");
    const std::size_t f = std::size_t{1} << num_downsamples;
    for (std::size_t n : {input_dims.nx, input_dims.ny, input_dims.nz}) {
      if (n % f != 0) fail("input_dims", input_dims.str() + " not divisible by 2^" + std::to_string(num_downsamples));
      if (n / f < 4) fail("input_dims", input_dims.str() + " too small for " + std::to_string(num_downsamples) +
                                            " downsamplings");
    }
  }
};

/// One learnable tensor as implied by the architecture.
struct ParamSlot {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0;
  bool is_bias = false;
};

namespace detail {

inline void push_conv(std::vector<ParamSlot>& out, const std::string& name, std::size_t cin, std::size_t cout,
                      std::size_t k, bool bias) {
  out.push_back({name + ".weight", Shape{cout, cin, k, k, k}, cin * k * k * k, false});
  if (bias) out.push_back({name + ".bias", Shape{cout}, cin * k * k * k, true});
}

inline void push_linear(std::vector<ParamSlot>& out, const std::string& name, std::size_t in, std::size_t outn) {
  out.push_back({name + ".weight", Shape{outn, in}, in, false});
  out.push_back({name + ".bias", Shape{outn}, in, true});
}

inline void push_block(std::vector<ParamSlot>& out, const std::string& name, std::size_t cin, std::size_t cout,
                       std::size_t depth) {
  for (std::size_t i = 0; i < depth; ++i) push_conv(out, name + ".conv" + std::to_string(i), i ? cout : cin, cout, 3, true);
  if (cin != cout) push_conv(out, name + ".skip", cin, cout, 1, false);
}

}  // namespace detail

/// Every learnable tensor in creation order; a pure function of the spec.
inline std::vector<ParamSlot> parameter_layout(const ArchitectureSpec& s) {
  s.validate();
  std::vector<ParamSlot> out;
  const std::size_t q = s.num_downsamples;
  const std::size_t depth = s.conv_block_depth;
  detail::push_block(out, "encoder.block0", 1, s.channels(0), depth);
  for (std::size_t j = 0; j < q; ++j) {
    detail::push_conv(out, "encoder.down" + std::to_string(j), s.channels(j), s.channels(j + 1), 3, true);
    detail::push_block(out, "encoder.block" + std::to_string(j + 1), s.channels(j + 1), s.channels(j + 1), depth);
  }
  detail::push_linear(out, "encoder.linear", s.bottleneck_size(), s.latent_size);

  detail::push_linear(out, "decoder.linear", s.latent_size, s.bottleneck_size());
  detail::push_block(out, "decoder.block" + std::to_string(q), s.channels(q), s.channels(q), depth);
  for (std::size_t j = q; j-- > 0;) {
    detail::push_block(out, "decoder.block" + std::to_string(j), s.channels(j + 1), s.channels(j), depth);
  }
  detail::push_conv(out, "decoder.output", s.channels(0), 1, 3, true);

  const std::size_t h = s.approx_hidden_width;
  detail::push_linear(out, "approximator.hidden0", s.param_count + 1, h);
  detail::push_linear(out, "approximator.hidden1", h, h);
  detail::push_linear(out, "approximator.output", h, s.latent_size);
  return out;
}

template <class T>
struct ModelParams {
  ArchitectureSpec spec;
  std::uint64_t rng_seed = 0;
  std::vector<std::string> names;
  std::vector<Var<T>> tensors;

  const Var<T>& get(const std::string& name) const {
    auto it = lookup_.find(name);
    if (it == lookup_.end()) throw ShapeError("model has no tensor named " + name);
    return tensors[it->second];
  }
  bool has(const std::string& name) const { return lookup_.count(name) != 0; }

  void add(std::string name, Var<T> v) {
    lookup_[name] = tensors.size();
    names.push_back(std::move(name));
    tensors.push_back(std::move(v));
  }

  /// Tensors whose name starts with `prefix` ("encoder.", "decoder.", "approximator.").
  std::vector<Var<T>> group(const std::string& prefix) const {
    std::vector<Var<T>> out;
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i].rfind(prefix, 0) == 0) out.push_back(tensors[i]);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.value().numel();
    return n;
  }

  /// Deep copy; copies made with the copy constructor share weight storage.
  ModelParams clone() const { return cast<T>(); }

  template <class U>
  ModelParams<U> cast() const {
    ModelParams<U> m;
    m.spec = spec;
    m.rng_seed = rng_seed;
    for (std::size_t i = 0; i < names.size(); ++i) m.add(names[i], parameter(tensors[i].value().template cast<U>()));
    return m;
  }

 private:
  std::map<std::string, std::size_t> lookup_;
};

/// Uniform doubles in [0, 1) from the raw 64-bit engine output, identical on
/// every standard library.
class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed) : engine_(seed) {}
  double next() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double next(double lo, double hi) { return lo + (hi - lo) * next(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Weights uniform in +-sqrt(6 / fan_in), biases zero.
template <class T>
ModelParams<T> build_models(const ArchitectureSpec& spec, std::uint64_t seed) {
  ModelParams<T> m;
  m.spec = spec;
  m.rng_seed = seed;
  UniformSource rng(seed);
  for (const auto& slot : parameter_layout(spec)) {
    Tensor<T> t(slot.shape);
    if (!slot.is_bias) {
      const double a = std::sqrt(6.0 / static_cast<double>(slot.fan_in));
      for (auto& v : t.data()) v = static_cast<T>(rng.next(-a, a));
    }
    m.add(slot.name, parameter(std::move(t)));
  }
  return m;
}

/// Spatial extents of the encoder block outputs, from input resolution down.
inline std::vector<GridDims> encoder_feature_dims(const ArchitectureSpec& s) {
  std::vector<GridDims> out;
  for (std::size_t j = 0; j <= s.num_downsamples; ++j) out.push_back(s.dims_at(j));
  return out;
}

/// Spatial extents of the decoder block outputs, from the bottleneck up.
inline std::vector<GridDims> decoder_feature_dims(const ArchitectureSpec& s) {
  std::vector<GridDims> out;
  for (std::size_t j = s.num_downsamples + 1; j-- > 0;) out.push_back(s.dims_at(j));
  return out;
}

/// Four convolutions with LeakyReLU plus an additive skip from block input to
/// block output (1x1 convolution on the skip when channel counts differ).
template <class T>
Var<T> conv_block(const ModelParams<T>& m, const std::string& name, const Var<T>& x) {
  const T slope = static_cast<T>(m.spec.leaky_slope);
  Var<T> h = x;
  for (std::size_t i = 0; i < m.spec.conv_block_depth; ++i) {
    const std::string conv = name + ".conv" + std::to_string(i);
    h = leaky_relu(conv3d(h, m.get(conv + ".weight"), m.get(conv + ".bias")), slope);
  }
  const std::string skip = name + ".skip.weight";
  return add(h, m.has(skip) ? conv3d(x, m.get(skip)) : x);
}

/// (B, 1, D, H, W) -> (B, l).
template <class T>
Var<T> encoder_forward(const ModelParams<T>& m, const Var<T>& x) {
  const auto& s = m.spec;
  const GridDims d = s.input_dims;
  const Shape& xs = x.shape();
  if (xs.size() != 5 || xs[1] != 1 || xs[2] != d.nz || xs[3] != d.ny || xs[4] != d.nx) {
    throw ShapeError("encoder expects (B,1," + std::to_string(d.nz) + "," + std::to_string(d.ny) + "," +
                     std::to_string(d.nx) + "), got " + shape_str(xs));
  }
  const T slope = static_cast<T>(s.leaky_slope);
  Var<T> h = conv_block(m, "encoder.block0", x);
  for (std::size_t j = 0; j < s.num_downsamples; ++j) {
    const std::string down = "encoder.down" + std::to_string(j);
    h = leaky_relu(conv3d(h, m.get(down + ".weight"), m.get(down + ".bias"), 2), slope);
    h = conv_block(m, "encoder.block" + std::to_string(j + 1), h);
  }
  h = reshape(h, Shape{xs[0], s.bottleneck_size()});
  return linear(h, m.get("encoder.linear.weight"), m.get("encoder.linear.bias"));
}

/// (B, l) -> (B, 1, D, H, W).
template <class T>
Var<T> decoder_forward(const ModelParams<T>& m, const Var<T>& z) {
  const auto& s = m.spec;
  const Shape& zs = z.shape();
  if (zs.size() != 2 || zs[1] != s.latent_size) {
    throw ShapeError("decoder expects (B," + std::to_string(s.latent_size) + "), got " + shape_str(zs));
  }
  const T slope = static_cast<T>(s.leaky_slope);
  const std::size_t q = s.num_downsamples;
  const GridDims b = s.dims_at(q);
  Var<T> h = leaky_relu(linear(z, m.get("decoder.linear.weight"), m.get("decoder.linear.bias")), slope);
  h = reshape(h, Shape{zs[0], s.channels(q), b.nz, b.ny, b.nx});
  h = conv_block(m, "decoder.block" + std::to_string(q), h);
  for (std::size_t j = q; j-- > 0;) {
    h = conv_block(m, "decoder.block" + std::to_string(j), upsample_nearest(h));
  }
  return conv3d(h, m.get("decoder.output.weight"), m.get("decoder.output.bias"));
}

/// (B, k + 1) normalized parameters and time -> (B, l).
template <class T>
Var<T> approximator_forward(const ModelParams<T>& m, const Var<T>& p) {
  const Shape& ps = p.shape();
  if (ps.size() != 2 || ps[1] != m.spec.param_count + 1) {
    throw ShapeError("approximator expects (B," + std::to_string(m.spec.param_count + 1) + "), got " + shape_str(ps));
  }
  Var<T> h = sin_activation(linear(p, m.get("approximator.hidden0.weight"), m.get("approximator.hidden0.bias")));
  h = sin_activation(linear(h, m.get("approximator.hidden1.weight"), m.get("approximator.hidden1.bias")));
  return linear(h, m.get("approximator.output.weight"), m.get("approximator.output.bias"));
}

struct ParamPoint {
  double radius = 0.0;
  double index = 1.0;
  double time = 0.0;
  bool operator==(const ParamPoint&) const = default;
};

struct LatentCode {
  std::vector<double> values;
  /// Set when the code came from the approximator; empty for encoded volumes.
  std::optional<ParamPoint> source_point;
  /// The query lay outside the normalization ranges.
  bool extrapolated = false;
};

/// Normalized approximator input for one point; flags points outside the ranges.
inline std::vector<double> normalize_point(const ParamPoint& p, const NormalizationSpec& norm, bool* outside = nullptr) {
  if (!std::isfinite(p.radius) || !std::isfinite(p.index) || !std::isfinite(p.time)) {
    throw ConfigError("point: non-finite parameter or time");
  }
  if (p.time < 0) throw ConfigError("point: time must be non-negative");
  std::vector<double> u{norm.radius.to_unit(p.radius), norm.index.to_unit(p.index), norm.time.to_unit(p.time)};
  if (outside) *outside = !(norm.radius.contains(p.radius) && norm.index.contains(p.index) && norm.time.contains(p.time));
  return u;
}

/// Copies a volume into a (1, 1, D, H, W) tensor, dividing by `scale`.
template <class T>
Tensor<T> volume_tensor(const FieldVolume& v, double scale = 1.0) {
  Tensor<T> t(Shape{1, 1, v.dims.nz, v.dims.ny, v.dims.nx});
  const double inv = 1.0 / scale;
  for (std::size_t i = 0; i < v.data.size(); ++i) t[i] = static_cast<T>(v.data[i] * inv);
  return t;
}

/// Encodes a normalized volume whose dims equal the spec's input dims.
template <class T>
LatentCode encode(const ModelParams<T>& m, const FieldVolume& v) {
  if (!(v.dims == m.spec.input_dims)) {
    throw ShapeError("encode: volume is " + v.dims.str() + ", model expects " + m.spec.input_dims.str());
  }
  NoGradGuard guard;
  const auto z = encoder_forward(m, constant(volume_tensor<T>(v))).value();
  LatentCode code;
  code.values.assign(z.data().begin(), z.data().end());
  return code;
}

template <class T>
FieldVolume decode(const ModelParams<T>& m, const LatentCode& code) {
  if (code.values.size() != m.spec.latent_size) {
    throw ShapeError("decode: code has length " + std::to_string(code.values.size()) + ", model expects " +
                     std::to_string(m.spec.latent_size));
  }
  NoGradGuard guard;
  Tensor<T> z(Shape{1, code.values.size()});
  for (std::size_t i = 0; i < code.values.size(); ++i) z[i] = static_cast<T>(code.values[i]);
  const auto y = decoder_forward(m, constant(std::move(z))).value();
  FieldVolume v(m.spec.input_dims);
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<float>(y[i]);
  if (code.source_point) {
    v.time = code.source_point->time;
    v.radius = code.source_point->radius;
    v.index = code.source_point->index;
  }
  return v;
}

template <class T>
LatentCode approximate(const ModelParams<T>& m, const ParamPoint& p, const NormalizationSpec& norm) {
  bool outside = false;
  const auto u = normalize_point(p, norm, &outside);
  NoGradGuard guard;
  Tensor<T> in(Shape{1, u.size()});
  for (std::size_t i = 0; i < u.size(); ++i) in[i] = static_cast<T>(u[i]);
  const auto z = approximator_forward(m, constant(std::move(in))).value();
  LatentCode code;
  code.values.assign(z.data().begin(), z.data().end());
  code.source_point = p;
  code.extrapolated = outside;
  return code;
}

/// G(F(p, t)): a normalized field volume, without time-stepping.
template <class T>
FieldVolume reconstruct(const ModelParams<T>& m, const ParamPoint& p, const NormalizationSpec& norm) {
  return decode(m, approximate(m, p, norm));
}

}  // namespace latentwave
