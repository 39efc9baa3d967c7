#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "padprobe/metrics.hpp"
#include "padprobe/probe.hpp"

using namespace padprobe;
namespace fs = std::filesystem;

namespace {

std::vector<Tensor> zero_taps(const Encoder& e, std::size_t batch = 1) {
  std::vector<Tensor> taps;
  for (const auto& t : e.taps()) taps.push_back(Tensor({batch, t.channels, t.side, t.side}));
  return taps;
}

}  // namespace

TEST(ProbeSpec, PreUpsampleSides) {
  EXPECT_EQ(validate_probe_spec({}), 6U);
  EXPECT_EQ(validate_probe_spec({.padding = 1}), 8U);
  EXPECT_EQ(validate_probe_spec({.kernel = 7, .padding = 0}), 2U);
  EXPECT_EQ(validate_probe_spec({.kernel = 3, .layers = 3, .padding = 0}), 2U);
  EXPECT_EQ(validate_probe_spec({.kernel = 5, .layers = 2, .padding = 2}), 8U);
}

TEST(ProbeSpec, Rejections) {
  EXPECT_THROW(validate_probe_spec({.kernel = 2}), ConfigError);
  EXPECT_THROW(validate_probe_spec({.layers = 4}), ConfigError);
  EXPECT_THROW(validate_probe_spec({.padding = 3}), ConfigError);
  EXPECT_THROW(validate_probe_spec({.kernel = 7, .layers = 2}), ConfigError);
  EXPECT_THROW(validate_probe_spec({.taps = {}}), ConfigError);
  EXPECT_THROW(validate_probe_spec({.taps = {5}}), ConfigError);
  EXPECT_THROW(validate_probe_spec({.taps = {1, 1}}), ConfigError);
}

TEST(Probe, ParamCounts) {
  EXPECT_EQ(Probe::build({.kernel = 3}, 10, 0).param_count(), 9U * 10 + 1);
  EXPECT_EQ(Probe::build({.kernel = 1}, 368, 0).param_count(), 369U);
  const std::size_t two = (9 * 368 * 32 + 32) + (9 * 32 * 1 + 1);
  EXPECT_EQ(two, 106305U);
  EXPECT_EQ(Probe::build({.kernel = 3, .layers = 2}, 368, 0).param_count(), two);
}

TEST(Probe, InputChannels) {
  const Encoder e = Encoder::build(EncoderSpec::defaults(EncoderFamily::TinyVgg), 1);
  EXPECT_EQ(probe_input_channels({}, &e), 368U);
  EXPECT_EQ(probe_input_channels({.taps = {4}}, &e), 128U);
  EXPECT_EQ(probe_input_channels({.taps = {0, 2}}, &e), 80U);
  EXPECT_EQ(probe_input_channels({.standalone = true}, nullptr), 3U);
  EXPECT_THROW(probe_input_channels({}, nullptr), ConfigError);
}

TEST(Probe, PredictionShapeAndZeroPropagation) {
  const Encoder e = Encoder::build(EncoderSpec::defaults(EncoderFamily::TinyVgg), 1);
  Probe p = Probe::build({}, 368, 3);
  EXPECT_EQ(p.pre_upsample_side(), 6U);
  for (auto& param : p.params()) {
    if (param.name.ends_with(".bias")) param.value.fill(0.0F);
  }
  const PositionMap m = p.predict(zero_taps(e), 64, 64);
  EXPECT_EQ(m.height(), 64U);
  EXPECT_EQ(m.width(), 64U);
  for (float v : m.values()) EXPECT_EQ(v, 0.0F);
  EXPECT_EQ(spc(m, generate_pattern(PatternKind::H, 64, 64)), 0.0);
}

TEST(Probe, AlignTapsConcatenatesSelected) {
  const Encoder e = Encoder::build(EncoderSpec::defaults(EncoderFamily::TinyVgg), 1);
  const Tensor all = align_taps({}, zero_taps(e, 2));
  EXPECT_EQ(all.dims(), (Shape{2, 368, 8, 8}));
  const Tensor f5 = align_taps({.taps = {4}}, zero_taps(e));
  EXPECT_EQ(f5.dims(), (Shape{1, 128, 8, 8}));
}

TEST(Probe, StandaloneReadsImage) {
  Probe p = Probe::build({.padding = 1, .standalone = true}, 3, 1);
  const PositionMap m = p.predict_image(Tensor({1, 3, 64, 64}, 0.5F), 64, 64);
  EXPECT_EQ(m.size(), 64U * 64U);
  EXPECT_THROW(align_taps({.standalone = true}, {}), ConfigError);
}

TEST(Probe, SaveLoadRoundTrip) {
  const auto path = fs::temp_directory_path() / "padprobe_unit_probe.ptw";
  const ProbeSpec spec{.kernel = 5, .layers = 2, .padding = 2, .align_side = 8, .taps = {1, 3}};
  Probe p = Probe::build(spec, 96, 7);
  p.save(path);
  Probe back = Probe::load(path);
  EXPECT_EQ(back.spec(), spec);
  EXPECT_EQ(back.in_channels(), 96U);
  ASSERT_EQ(back.params().size(), p.params().size());
  for (std::size_t i = 0; i < p.params().size(); ++i) {
    EXPECT_TRUE(back.params()[i].value.bit_equal(p.params()[i].value));
  }
}

TEST(Probe, InputNormalizationStatistics) {
  Probe p = Probe::build({.kernel = 1, .align_side = 2}, 2, 1);
  EXPECT_FALSE(p.input_normalized());
  // Channel 0 takes values 1,3 (mean 2, std 1); channel 1 is constant 5.
  Tensor f({2, 2, 2, 2});
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t i = 0; i < 4; ++i) {
      f.data()[(n * 2 + 0) * 4 + i] = i % 2 == 0 ? 1.0F : 3.0F;
      f.data()[(n * 2 + 1) * 4 + i] = 5.0F;
    }
  }
  p.fit_input_normalization({f});
  ASSERT_TRUE(p.input_normalized());
  // A 1x1 probe with unit weight on channel 0 and zero bias reads the
  // normalized value back: (x - 2) / (1 * sqrt(1 * 2)).
  p.params()[0].value[0] = 1.0F;
  p.params()[0].value[1] = 1.0F;
  p.params()[1].value[0] = 0.0F;
  const auto maps = p.predict_features(f, 2, 2);
  const float s = 1.0F / std::sqrt(2.0F);
  EXPECT_FLOAT_EQ(maps[0].at(0, 0), -s);
  EXPECT_FLOAT_EQ(maps[0].at(0, 1), s);
}

TEST(Probe, InputNormalizationIgnoresChannelAffineScale) {
  Tensor f({3, 4, 8, 8});
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> d(0.0F, 2.0F);
  for (float& v : f.values()) v = d(rng);
  Tensor g = f;
  for (float& v : g.values()) v = 8.0F * v + 3.0F;
  Probe a = Probe::build({}, 4, 6), b = Probe::build({}, 4, 6);
  a.fit_input_normalization({f});
  b.fit_input_normalization({g});
  const auto pa = a.predict_features(f, 8, 8), pb = b.predict_features(g, 8, 8);
  for (std::size_t n = 0; n < 3; ++n) {
    for (std::size_t i = 0; i < pa[n].size(); ++i) EXPECT_NEAR(pa[n].values()[i], pb[n].values()[i], 1e-5);
  }
}

TEST(Probe, SaveLoadKeepsInputNormalization) {
  const auto path = fs::temp_directory_path() / "padprobe_unit_probe_norm.ptw";
  Probe p = Probe::build({.align_side = 4}, 3, 2);
  Tensor f({2, 3, 4, 4});
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(i % 7);
  p.fit_input_normalization({f});
  p.save(path);
  Probe back = Probe::load(path);
  ASSERT_TRUE(back.input_normalized());
  EXPECT_TRUE(back.predict_features(f, 4, 4)[1].values() == p.predict_features(f, 4, 4)[1].values());
}
