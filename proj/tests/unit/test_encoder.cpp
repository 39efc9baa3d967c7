#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "padprobe/encoder.hpp"
#include "padprobe/kernels.hpp"
#include "padprobe/training.hpp"

using namespace padprobe;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "padprobe_unit";
  fs::create_directories(dir);
  return dir / name;
}

EncoderSpec raw_input(EncoderSpec s) {
  s.input_mean = 0.0F;
  s.input_std = 1.0F;
  return s;
}

std::vector<std::size_t> tap_sides(const EncoderSpec& s) {
  std::vector<std::size_t> out;
  for (const auto& t : tap_shapes(s)) out.push_back(t.side);
  return out;
}

// Reference VGG16 forward in double precision with plain loops.
using Planes = std::vector<std::vector<double>>;  // channel -> side*side

Planes oracle_conv_relu(const Planes& in, std::size_t side, const Tensor& w, const Tensor& b) {
  const std::size_t out_c = w.dim(0), in_c = w.dim(1);
  Planes out(out_c, std::vector<double>(side * side));
  for (std::size_t o = 0; o < out_c; ++o)
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        double acc = b[o];
        for (std::size_t c = 0; c < in_c; ++c)
          for (int i = -1; i <= 1; ++i)
            for (int j = -1; j <= 1; ++j) {
              const long yy = static_cast<long>(y) + i, xx = static_cast<long>(x) + j;
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(side) || xx >= static_cast<long>(side)) continue;
              acc += in[c][yy * side + xx] * w.at(o, c, i + 1, j + 1);
            }
        out[o][y * side + x] = std::max(0.0, acc);
      }
  return out;
}

Planes oracle_pool(const Planes& in, std::size_t side) {
  const std::size_t h = side / 2;
  Planes out(in.size(), std::vector<double>(h * h));
  for (std::size_t c = 0; c < in.size(); ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < h; ++x) {
        const auto& p = in[c];
        out[c][y * h + x] = std::max({p[2 * y * side + 2 * x], p[2 * y * side + 2 * x + 1],
                                      p[(2 * y + 1) * side + 2 * x], p[(2 * y + 1) * side + 2 * x + 1]});
      }
  return out;
}

Tensor planes_to_tensor(const Planes& p, std::size_t side) {
  Tensor t({1, p.size(), side, side});
  for (std::size_t c = 0; c < p.size(); ++c)
    for (std::size_t i = 0; i < side * side; ++i) t[c * side * side + i] = static_cast<float>(p[c][i]);
  return t;
}

// Builds a file laid out like an exported VGG16: canonical names, ImageNet
// normalization metadata, a seeded reference input and oracle taps.
PtwFile exported_vgg16(std::size_t side) {
  const std::array<float, 3> mean{0.485F, 0.456F, 0.406F}, stdev{0.229F, 0.224F, 0.225F};
  const std::size_t convs[] = {2, 2, 3, 3, 3};
  const std::size_t chans[] = {64, 128, 256, 512, 512};
  std::mt19937_64 rng(2718);
  PtwFile file;
  std::size_t layer = 0, in_c = 3;
  std::vector<std::pair<Tensor, Tensor>> weights;
  for (std::size_t b = 0; b < 5; ++b)
    for (std::size_t j = 0; j < convs[b]; ++j) {
      const std::size_t out_c = chans[b];
      Tensor w({out_c, in_c, 3, 3}), bias({out_c});
      std::uniform_real_distribution<float> d(-1.0F, 1.0F);
      const float bound = std::sqrt(6.0F / static_cast<float>(in_c * 9));
      for (float& v : w.values()) v = bound * d(rng);
      for (float& v : bias.values()) v = 0.05F * d(rng);
      const std::string name(vgg16_name_table()[layer++].name);
      file.add(name + ".weight", w);
      file.add(name + ".bias", bias);
      weights.emplace_back(w, bias);
      in_c = out_c;
    }
  Tensor input({1, 3, side, side});
  std::uniform_real_distribution<float> unit(0.0F, 1.0F);
  for (float& v : input.values()) v = unit(rng);
  file.add("ref.input", input);

  Planes x(3, std::vector<double>(side * side));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < side * side; ++i)
      x[c][i] = (static_cast<double>(input[c * side * side + i]) - mean[c]) / stdev[c];
  std::size_t s = side, k = 0;
  for (std::size_t b = 0; b < 5; ++b) {
    if (b > 0) {
      x = oracle_pool(x, s);
      s /= 2;
    }
    for (std::size_t j = 0; j < convs[b]; ++j, ++k) x = oracle_conv_relu(x, s, weights[k].first, weights[k].second);
    file.add("ref.tap" + std::to_string(b + 1), planes_to_tensor(x, s));
  }
  file.set_meta("norm.mean", "0.485,0.456,0.406");
  file.set_meta("norm.std", "0.229,0.224,0.225");
  return file;
}

}  // namespace

TEST(EncoderShapes, TinyVgg) {
  const auto s = EncoderSpec::defaults(EncoderFamily::TinyVgg);
  EXPECT_EQ(tap_sides(s), (std::vector<std::size_t>{64, 32, 16, 8, 4}));
  const auto taps = tap_shapes(s);
  const std::size_t want[] = {16, 32, 64, 128, 128};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(taps[i].channels, want[i]);
}

TEST(EncoderShapes, UnpaddedCollapseIsRejected) {
  auto s = EncoderSpec::defaults(EncoderFamily::TinyVgg);
  s.padding = PaddingMode::None;
  try {
    tap_shapes(s);
    FAIL() << "64 px without padding must collapse";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("block 4"), std::string::npos) << e.what();
  }
  s.input_side = 140;
  EXPECT_EQ(tap_sides(s), (std::vector<std::size_t>{136, 64, 28, 10, 1}));
}

TEST(EncoderShapes, TinyResnet) {
  auto s = EncoderSpec::defaults(EncoderFamily::TinyResnet);
  EXPECT_EQ(tap_sides(s), (std::vector<std::size_t>{64, 32, 16, 8, 4}));
  s.padding = PaddingMode::None;
  EXPECT_THROW(tap_shapes(s), ConfigError);
  EXPECT_THROW(Encoder::build(s, 1), ConfigError);
}

TEST(EncoderShapes, Vgg16) {
  const auto s = EncoderSpec::defaults(EncoderFamily::Vgg16Import);
  EXPECT_EQ(tap_sides(s), (std::vector<std::size_t>{224, 112, 56, 28, 14}));
  const auto taps = tap_shapes(s);
  const std::size_t want[] = {64, 128, 256, 512, 512};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(taps[i].channels, want[i]);
  auto bad = s;
  bad.channels = {16, 32, 64, 128, 128};
  EXPECT_THROW(tap_shapes(bad), ConfigError);
}

TEST(EncoderShapes, WrongBlockCount) {
  auto s = EncoderSpec::defaults(EncoderFamily::TinyVgg);
  s.channels = {8, 8, 8, 8};
  EXPECT_THROW(tap_shapes(s), ConfigError);
}

TEST(Encoder, ForwardTapShapes) {
  auto spec = EncoderSpec::defaults(EncoderFamily::TinyResnet);
  spec.input_side = 32;
  Encoder e = Encoder::build(spec, 3);
  const auto taps = e.forward_taps(Tensor({2, 3, 32, 32}, 0.5F));
  ASSERT_EQ(taps.size(), 5U);
  const std::size_t sides[] = {32, 16, 8, 4, 2};
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(taps[i].dims(), (Shape{2, spec.channels[i], sides[i], sides[i]}));
  }
  EXPECT_THROW(e.forward_taps(Tensor({1, 3, 16, 16})), DimensionError);
  EXPECT_THROW(e.forward_taps(Tensor({1, 1, 32, 32})), DimensionError);
}

TEST(Encoder, SameSeedSameWeights) {
  const auto spec = EncoderSpec::defaults(EncoderFamily::TinyVgg);
  const Encoder a = Encoder::build(spec, 11), b = Encoder::build(spec, 11), c = Encoder::build(spec, 12);
  ASSERT_EQ(a.params().size(), b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    EXPECT_TRUE(a.params()[i].value.bit_equal(b.params()[i].value));
  }
  EXPECT_EQ(weight_fingerprint(a), weight_fingerprint(b));
  EXPECT_NE(weight_fingerprint(a), weight_fingerprint(c));
}

TEST(Encoder, ZeroImageGivesZeroTaps) {
  for (auto family : {EncoderFamily::TinyVgg, EncoderFamily::TinyResnet}) {
    auto spec = raw_input(EncoderSpec::defaults(family));
    spec.input_side = 32;
    Encoder e = Encoder::build(spec, 5);
    for (const auto& t : e.forward_taps(Tensor({1, 3, 32, 32}))) {
      for (float v : t.values()) ASSERT_EQ(v, 0.0F);
    }
  }
}

TEST(Encoder, ParameterNames) {
  const Encoder vgg = Encoder::build(EncoderSpec::defaults(EncoderFamily::TinyVgg), 1);
  EXPECT_NE(vgg.find("block1.conv1.weight"), nullptr);
  EXPECT_NE(vgg.find("block5.conv2.bias"), nullptr);
  EXPECT_EQ(vgg.find("block5.conv3.bias"), nullptr);
  const Encoder res = Encoder::build(EncoderSpec::defaults(EncoderFamily::TinyResnet), 1);
  EXPECT_NE(res.find("block1.conv1.weight"), nullptr);
  EXPECT_NE(res.find("block2.proj.weight"), nullptr);
  EXPECT_EQ(res.find("block1.proj.weight"), nullptr);
  EXPECT_EQ(res.find("block1.conv2.weight"), nullptr);
  EXPECT_EQ(res.find("block2.proj.weight")->value.dims(), (Shape{32, 16, 1, 1}));
}

TEST(Encoder, ZeroedResidualBranchLeavesProjection) {
  auto spec = EncoderSpec::defaults(EncoderFamily::TinyResnet);
  spec.input_side = 16;
  Encoder e = Encoder::build(spec, 9);
  e.find("block3.conv2.weight")->value.fill(0.0F);
  e.find("block3.conv2.bias")->value.fill(0.0F);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> d(0.0F, 1.0F);
  Tensor img({1, 3, 16, 16});
  for (float& v : img.values()) v = d(rng);
  const auto taps = e.forward_taps(img);
  const Tensor proj = kernels::conv2d(taps[1], e.find("block3.proj.weight")->value,
                                      e.find("block3.proj.bias")->value, {2, 0});
  EXPECT_TRUE(taps[2].bit_equal(kernels::relu(proj)));
}

TEST(Encoder, NormalizationFromSpec) {
  const Encoder e = Encoder::build(EncoderSpec::defaults(EncoderFamily::TinyVgg), 1);
  ASSERT_TRUE(e.normalization().has_value());
  EXPECT_EQ((*e.normalization())[0][1], 0.5F);
  EXPECT_EQ((*e.normalization())[1][2], 0.25F);
  const Encoder raw = Encoder::build(raw_input(EncoderSpec::defaults(EncoderFamily::TinyVgg)), 1);
  EXPECT_FALSE(raw.normalization().has_value());
}

TEST(Fingerprint, ForwardDoesNotChangeIt) {
  auto spec = EncoderSpec::defaults(EncoderFamily::TinyVgg);
  spec.input_side = 16;
  Encoder e = Encoder::build(spec, 2);
  const auto before = weight_fingerprint(e);
  e.forward_taps(Tensor({1, 3, 16, 16}, 0.3F));
  EXPECT_EQ(before, weight_fingerprint(e));
}

TEST(Fingerprint, UnfrozenStepChangesIt) {
  auto spec = EncoderSpec::defaults(EncoderFamily::TinyVgg);
  spec.input_side = 16;
  Encoder e = Encoder::build(spec, 2);
  ClassifierHead head = ClassifierHead::build(e, 2, 3);
  const auto before = weight_fingerprint(e);
  auto data = synth_shapes(4, 16, 2, 1);
  TrainConfig cfg{.epochs = 1, .learning_rate = 0.01F, .batch_size = 4};
  pretrain_classifier(e, head, data, cfg);
  EXPECT_NE(before, weight_fingerprint(e));
}

TEST(Fingerprint, ZeroLearningRateKeepsIt) {
  auto spec = EncoderSpec::defaults(EncoderFamily::TinyVgg);
  spec.input_side = 16;
  Encoder e = Encoder::build(spec, 2);
  ClassifierHead head = ClassifierHead::build(e, 2, 3);
  const auto before = weight_fingerprint(e);
  auto data = synth_shapes(4, 16, 2, 1);
  TrainConfig cfg{.epochs = 2, .learning_rate = 0.0F, .batch_size = 4};
  pretrain_classifier(e, head, data, cfg);
  EXPECT_EQ(before, weight_fingerprint(e));
}

TEST(WeightFile, RoundTrip) {
  auto spec = EncoderSpec::defaults(EncoderFamily::TinyResnet);
  spec.channels = {4, 8, 8, 16, 16};
  spec.input_side = 24;
  const Encoder e = Encoder::build(spec, 4);
  const auto path = temp_path("resnet.ptw");
  e.save(path);
  const Encoder back = load_encoder(path);
  EXPECT_EQ(back.spec(), spec);
  EXPECT_EQ(weight_fingerprint(back), weight_fingerprint(e));
  EXPECT_TRUE(back.frozen());
  EXPECT_EQ(back.normalization(), e.normalization());
}

TEST(WeightFile, AlteredDimNamesTheTensor) {
  const Encoder e = Encoder::build(EncoderSpec::defaults(EncoderFamily::TinyVgg), 4);
  PtwFile file = e.to_ptw();
  for (auto& t : file.tensors) {
    if (t.name == "block3.conv2.weight") t.value = Tensor({64, 64, 3, 1});
  }
  Encoder target = Encoder::build(EncoderSpec::defaults(EncoderFamily::TinyVgg), 5);
  const auto before = weight_fingerprint(target);
  try {
    target.load_weights(file);
    FAIL() << "load must fail";
  } catch (const WeightLoadError& err) {
    EXPECT_EQ(err.tensor(), "block3.conv2.weight");
    EXPECT_NE(std::string(err.what()).find("block3.conv2.weight"), std::string::npos);
  }
  EXPECT_EQ(before, weight_fingerprint(target)) << "failed load must not modify weights";
}

TEST(WeightFile, MissingTensorNamed) {
  const Encoder e = Encoder::build(EncoderSpec::defaults(EncoderFamily::TinyVgg), 4);
  PtwFile file = e.to_ptw();
  file.tensors.erase(file.tensors.begin() + 3);
  Encoder target = Encoder::build(EncoderSpec::defaults(EncoderFamily::TinyVgg), 5);
  try {
    target.load_weights(file);
    FAIL();
  } catch (const WeightLoadError& err) {
    EXPECT_EQ(err.tensor(), e.params()[3].name);
  }
}

TEST(WeightFile, CorruptFileIsWeightLoadError) {
  const Encoder e = Encoder::build(EncoderSpec::defaults(EncoderFamily::TinyVgg), 4);
  const auto path = temp_path("corrupt.ptw");
  auto bytes = serialize_ptw(e.to_ptw());
  bytes[100] ^= 0xFF;
  write_file_bytes(path, bytes);
  EXPECT_THROW(load_encoder(path), WeightLoadError);
}

TEST(ClassifierHead, PoolsConstantChannels) {
  auto spec = EncoderSpec::defaults(EncoderFamily::TinyVgg);
  spec.input_side = 16;
  const Encoder e = Encoder::build(spec, 1);
  ClassifierHead head = ClassifierHead::build(e, 3, 2);
  Tensor f5({1, 128, 1, 1});
  for (std::size_t c = 0; c < 128; ++c) f5[c] = static_cast<float>(c) * 0.01F;
  Graph g;
  Var logits = head.logits(g, g.input(f5));
  for (std::size_t k = 0; k < 3; ++k) {
    double want = head.bias.value[k];
    for (std::size_t c = 0; c < 128; ++c) want += double(head.weight.value[k * 128 + c]) * f5[c];
    EXPECT_NEAR(logits.value()[k], want, 1e-5);
  }
  Graph g2;
  EXPECT_EQ(head.num_classes(), 3);
  Var zero = head.logits(g2, g2.input(Tensor({2, 128, 2, 2})));
  for (float v : zero.value().values()) EXPECT_EQ(v, 0.0F);
  EXPECT_THROW(ClassifierHead::build(e, 1, 0), ConfigError);
}

TEST(Vgg16Import, NameTableMatchesEncoder) {
  const auto& table = vgg16_name_table();
  EXPECT_EQ(table.front().source_index, 0U);
  EXPECT_EQ(table.back().source_index, 28U);
  EXPECT_EQ(table[7].name, "block4.conv1");
  auto spec = EncoderSpec::defaults(EncoderFamily::Vgg16Import);
  spec.input_side = 16;
  const Encoder e = Encoder::build(spec, 0);
  ASSERT_EQ(e.params().size(), 26U);
  for (std::size_t i = 0; i < table.size(); ++i) {
    EXPECT_EQ(e.params()[2 * i].name, std::string(table[i].name) + ".weight");
    EXPECT_EQ(e.params()[2 * i + 1].name, std::string(table[i].name) + ".bias");
  }
  EXPECT_EQ(e.param_count(), 14714688U);
}

TEST(Vgg16Import, ReferenceTapsMatchOracle) {
  const PtwFile file = exported_vgg16(16);
  const auto path = temp_path("vgg16_small.ptw");
  write_ptw(file, path);
  Encoder e = load_encoder(path);
  EXPECT_EQ(e.spec().family, EncoderFamily::Vgg16Import);
  EXPECT_EQ(e.spec().input_side, 16U);
  ASSERT_TRUE(e.normalization().has_value());
  EXPECT_FLOAT_EQ((*e.normalization())[0][0], 0.485F);
  const auto check = validate_reference_taps(e, read_ptw(path));
  EXPECT_TRUE(check.passed) << "worst " << check.worst;
  EXPECT_LE(check.worst, 1e-4);

  PtwFile tampered = file;
  for (auto& t : tampered.tensors) {
    if (t.name == "ref.tap3") t.value[5] += 0.01F;
  }
  const auto bad = validate_reference_taps(e, tampered);
  EXPECT_FALSE(bad.passed);
  EXPECT_NEAR(bad.max_abs[2], 0.01, 1e-3);

  PtwFile no_ref = file;
  std::erase_if(no_ref.tensors, [](const PtwTensor& t) { return t.name == "ref.tap5"; });
  try {
    validate_reference_taps(e, no_ref);
    FAIL();
  } catch (const WeightLoadError& err) {
    EXPECT_EQ(err.tensor(), "ref.tap5");
  }
}
