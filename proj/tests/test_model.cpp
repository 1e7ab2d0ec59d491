#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "latentwave/model.hpp"

using namespace latentwave;

namespace {

ArchitectureSpec small_spec() {
  ArchitectureSpec s;
  s.input_dims = {16, 16, 16};
  s.latent_size = 8;
  s.base_channels = 2;
  s.num_downsamples = 2;
  s.approx_hidden_width = 128;
  return s;
}

FieldVolume blob(GridDims d, double cx, double cy, double cz, double w) {
  FieldVolume v(d);
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy) + (z - cz) * (z - cz);
        v.at(x, y, z) = static_cast<float>(std::exp(-r2 / (2 * w * w)));
      }
  return v;
}

NormalizationSpec unit_norm() {
  NormalizationSpec n;
  n.field_scale = 1.0;
  n.radius = {2.0, 3.0};
  n.index = {1.1, 1.5};
  n.time = {0.0, 5.0};
  return n;
}

// Written out layer by layer for 16^3, l=8, c0=2 (channels 2, 4, 8), H=128.
std::size_t hand_count() {
  auto conv = [](std::size_t ci, std::size_t co) { return co * ci * 27 + co; };
  auto lin = [](std::size_t i, std::size_t o) { return o * i + o; };
  std::size_t n = 0;
  // encoder
  n += conv(1, 2) + 3 * conv(2, 2) + 1 * 2;  // block0 with 1x1 skip
  n += conv(2, 4) + 4 * conv(4, 4);          // down0, block1
  n += conv(4, 8) + 4 * conv(8, 8);          // down1, block2
  n += lin(8 * 4 * 4 * 4, 8);
  // decoder
  n += lin(8, 8 * 4 * 4 * 4);
  n += 4 * conv(8, 8);
  n += conv(8, 4) + 3 * conv(4, 4) + 8 * 4;
  n += conv(4, 2) + 3 * conv(2, 2) + 4 * 2;
  n += conv(2, 1);
  // approximator
  n += lin(3, 128) + lin(128, 128) + lin(128, 8);
  return n;
}

}  // namespace

TEST(Architecture, DownsampleLayerExamples) {
  EXPECT_EQ(num_downsample_layers({48, 48, 48}), 3u);
  EXPECT_EQ(num_downsample_layers({16, 16, 16}), 2u);
  EXPECT_EQ(num_downsample_layers({192, 192, 192}), 5u);
  EXPECT_EQ(num_downsample_layers({49, 49, 49}), 3u);
  EXPECT_EQ(num_downsample_layers({8, 64, 64}), 1u);
  EXPECT_THROW(num_downsample_layers({7, 32, 32}), ConfigError);
}

TEST(Architecture, ForVolumeCropsToMultiple) {
  const auto s = ArchitectureSpec::for_volume({49, 49, 49}, 64, 4);
  EXPECT_EQ(s.num_downsamples, 3u);
  EXPECT_EQ(s.input_dims, (GridDims{48, 48, 48}));
  EXPECT_EQ(s.approx_hidden_width, 128u);
  EXPECT_EQ(ArchitectureSpec::for_volume({16, 16, 16}, 100, 2).approx_hidden_width, 200u);
  EXPECT_NO_THROW(s.validate());
}

TEST(Architecture, ChannelsCapAtEightTimesBase) {
  ArchitectureSpec s;
  s.base_channels = 3;
  EXPECT_EQ(s.channels(0), 3u);
  EXPECT_EQ(s.channels(1), 6u);
  EXPECT_EQ(s.channels(3), 24u);
  EXPECT_EQ(s.channels(5), 24u);
}

TEST(Architecture, ValidateRejectsBadSpecs) {
  auto s = small_spec();
  s.input_dims = {18, 16, 16};
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.num_downsamples = 3;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.conv_block_depth = 3;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.latent_size = 0;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Models, ParameterCountMatchesHandEnumeration) {
  const auto m = build_models<float>(small_spec(), 1);
  EXPECT_EQ(hand_count(), 46699u);
  EXPECT_EQ(m.parameter_count(), hand_count());
  std::size_t from_layout = 0;
  for (const auto& slot : parameter_layout(small_spec())) from_layout += shape_numel(slot.shape);
  EXPECT_EQ(from_layout, hand_count());
}

TEST(Models, LayoutMatchesBuiltTensors) {
  const auto layout = parameter_layout(small_spec());
  const auto m = build_models<float>(small_spec(), 3);
  ASSERT_EQ(layout.size(), m.names.size());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    EXPECT_EQ(layout[i].name, m.names[i]);
    EXPECT_EQ(layout[i].shape, m.tensors[i].value().shape());
  }
  EXPECT_TRUE(m.has("encoder.block0.skip.weight"));
  EXPECT_FALSE(m.has("encoder.block1.skip.weight"));
  EXPECT_TRUE(m.has("decoder.block1.skip.weight"));
}

TEST(Models, SameSeedIsBitwiseIdentical) {
  const auto a = build_models<float>(small_spec(), 42);
  const auto b = build_models<float>(small_spec(), 42);
  const auto c = build_models<float>(small_spec(), 43);
  bool differs = false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    EXPECT_EQ(a.tensors[i].value(), b.tensors[i].value()) << a.names[i];
    differs = differs || !(a.tensors[i].value() == c.tensors[i].value());
  }
  EXPECT_TRUE(differs);
}

TEST(Models, InitWithinFanInBoundsAndZeroBias) {
  const auto m = build_models<double>(small_spec(), 5);
  const auto layout = parameter_layout(small_spec());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const double a = std::sqrt(6.0 / static_cast<double>(layout[i].fan_in));
    for (double v : m.tensors[i].value().data()) {
      if (layout[i].is_bias) {
        EXPECT_EQ(v, 0.0);
      } else {
        EXPECT_LE(std::abs(v), a);
      }
    }
  }
}

TEST(Models, CloneIsDeepAndCopyShares) {
  auto m = build_models<float>(small_spec(), 1);
  auto shared = m;
  auto deep = m.clone();
  m.tensors[0].value()[0] += 1.0f;
  EXPECT_EQ(shared.tensors[0].value()[0], m.tensors[0].value()[0]);
  EXPECT_NE(deep.tensors[0].value()[0], m.tensors[0].value()[0]);
}

TEST(Forward, EncodeDecodeShapes) {
  const auto m = build_models<float>(small_spec(), 1);
  const auto v = blob({16, 16, 16}, 8, 8, 8, 3);
  const auto code = encode(m, v);
  EXPECT_EQ(code.values.size(), 8u);
  for (double x : code.values) EXPECT_TRUE(std::isfinite(x));
  const auto out = decode(m, code);
  EXPECT_EQ(out.dims, v.dims);
  EXPECT_TRUE(out.all_finite());
}

TEST(Forward, EncodeIsDeterministic) {
  const auto m = build_models<float>(small_spec(), 1);
  const auto v = blob({16, 16, 16}, 5, 9, 7, 2);
  EXPECT_EQ(encode(m, v).values, encode(m, v).values);
}

TEST(Forward, ZeroCodeDecodesToFiniteVolume) {
  const auto m = build_models<float>(small_spec(), 1);
  LatentCode z;
  z.values.assign(8, 0.0);
  const auto out = decode(m, z);
  EXPECT_EQ(out.dims, (GridDims{16, 16, 16}));
  EXPECT_TRUE(out.all_finite());
}

TEST(Forward, DimensionMismatchesThrow) {
  const auto m = build_models<float>(small_spec(), 1);
  EXPECT_THROW(encode(m, FieldVolume({16, 16, 8})), ShapeError);
  LatentCode z;
  z.values.assign(7, 0.0);
  EXPECT_THROW(decode(m, z), ShapeError);
}

TEST(Forward, ReconstructIsDecodeOfApproximate) {
  const auto m = build_models<float>(small_spec(), 9);
  const ParamPoint p{2.5, 1.3, 2.0};
  const auto direct = reconstruct(m, p, unit_norm());
  const auto composed = decode(m, approximate(m, p, unit_norm()));
  EXPECT_EQ(direct.data, composed.data);
  EXPECT_EQ(direct.time, 2.0);
  EXPECT_EQ(direct.radius, 2.5);
}

TEST(Forward, ApproximateFlagsAndRejects) {
  const auto m = build_models<float>(small_spec(), 9);
  const auto inside = approximate(m, {2.5, 1.3, 1.0}, unit_norm());
  EXPECT_FALSE(inside.extrapolated);
  EXPECT_EQ(inside.values.size(), 8u);
  EXPECT_EQ(inside.values, approximate(m, {2.5, 1.3, 1.0}, unit_norm()).values);
  EXPECT_TRUE(approximate(m, {2.5, 1.9, 1.0}, unit_norm()).extrapolated);
  EXPECT_THROW(approximate(m, {NAN, 1.3, 1.0}, unit_norm()), ConfigError);
  EXPECT_THROW(approximate(m, {2.5, 1.3, -1.0}, unit_norm()), ConfigError);
}

TEST(Forward, SkipPassesInputWhenConvsAreZero) {
  auto m = build_models<double>(small_spec(), 2);
  for (std::size_t i = 0; i < m.names.size(); ++i)
    if (m.names[i].rfind("encoder.block1.", 0) == 0) m.tensors[i].value().fill(0.0);
  Tensor<double> x(Shape{1, 4, 8, 8, 8});
  std::mt19937 rng(3);
  std::normal_distribution<double> g;
  for (auto& v : x.data()) v = g(rng);
  const auto y = conv_block(m, "encoder.block1", constant(x)).value();
  EXPECT_EQ(y, x);
}

TEST(Forward, EveryAutoencoderTensorReceivesGradient) {
  auto m = build_models<double>(small_spec(), 4);
  const auto v = blob({16, 16, 16}, 7, 8, 9, 3);
  auto x = constant(volume_tensor<double>(v));
  auto loss = l1_loss(decoder_forward(m, encoder_forward(m, x)), x);
  backward(loss);
  for (std::size_t i = 0; i < m.names.size(); ++i) {
    if (m.names[i].rfind("approximator.", 0) == 0) continue;
    double norm = 0.0;
    for (double g : m.tensors[i].grad().data()) norm += std::abs(g);
    EXPECT_GT(norm, 0.0) << m.names[i];
  }
  for (auto& p : m.group("approximator.")) {
    for (double g : p.grad().data()) EXPECT_EQ(g, 0.0);
  }
}

TEST(Forward, FloatAndDoubleLossesAgree) {
  const auto md = build_models<double>(small_spec(), 11);
  const auto mf = md.cast<float>();
  const auto v = blob({16, 16, 16}, 6, 10, 8, 2.5);
  auto xd = constant(volume_tensor<double>(v));
  auto xf = constant(volume_tensor<float>(v));
  const double ld = l1_loss(decoder_forward(md, encoder_forward(md, xd)), xd).value()[0];
  const double lf = l1_loss(decoder_forward(mf, encoder_forward(mf, xf)), xf).value()[0];
  EXPECT_NEAR(lf, ld, 1e-3 * std::abs(ld));
}

TEST(Property, EncoderDecoderShapesCloseOverRandomSpecs) {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 12; ++trial) {
    ArchitectureSpec s;
    s.num_downsamples = 1 + rng() % 2;
    const std::size_t f = std::size_t{1} << s.num_downsamples;
    auto extent = [&] { return f * (4 + rng() % 2); };
    s.input_dims = {extent(), extent(), extent()};
    s.latent_size = 1 + rng() % 6;
    s.base_channels = 1 + rng() % 2;
    s.approx_hidden_width = 4 + rng() % 8;
    const auto m = build_models<float>(s, trial);
    Tensor<float> x(Shape{2, 1, s.input_dims.nz, s.input_dims.ny, s.input_dims.nx}, 0.5f);
    const auto z = encoder_forward(m, constant(x));
    EXPECT_EQ(z.shape(), (Shape{2, s.latent_size}));
    const auto y = decoder_forward(m, z);
    EXPECT_EQ(y.shape(), x.shape());
    Tensor<float> p(Shape{5, 3}, 0.1f);
    EXPECT_EQ(approximator_forward(m, constant(p)).shape(), (Shape{5, s.latent_size}));
  }
}
