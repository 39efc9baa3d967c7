#include "padprobe/encoder.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

namespace padprobe {

std::string_view family_name(EncoderFamily f) {
  switch (f) {
    case EncoderFamily::TinyVgg: return "tiny-vgg";
    case EncoderFamily::TinyResnet: return "tiny-resnet";
    case EncoderFamily::Vgg16Import: return "vgg16-import";
  }
  return "?";
}

std::optional<EncoderFamily> parse_family(std::string_view name) {
  for (auto f : {EncoderFamily::TinyVgg, EncoderFamily::TinyResnet, EncoderFamily::Vgg16Import}) {
    if (family_name(f) == name) return f;
  }
  return std::nullopt;
}

std::string_view padding_name(PaddingMode p) { return p == PaddingMode::Zero ? "zero" : "none"; }

std::optional<PaddingMode> parse_padding(std::string_view name) {
  if (name == "zero") return PaddingMode::Zero;
  if (name == "none") return PaddingMode::None;
  return std::nullopt;
}

namespace {

constexpr std::size_t kVggConvs[kNumTaps] = {2, 2, 3, 3, 3};
const std::vector<std::size_t> kVggChannels{64, 128, 256, 512, 512};

std::size_t pad_of(const EncoderSpec& s) { return s.padding == PaddingMode::Zero ? 1 : 0; }

std::size_t convs_in_block(const EncoderSpec& s, std::size_t block) {
  if (s.family == EncoderFamily::Vgg16Import) return kVggConvs[block];
  // The residual family opens with a single plain conv.
  if (s.family == EncoderFamily::TinyResnet) return 1;
  return s.convs_per_block;
}

std::string conv_name(std::size_t block, std::size_t conv) {
  return "block" + std::to_string(block + 1) + ".conv" + std::to_string(conv + 1);
}

}  // namespace

EncoderSpec EncoderSpec::defaults(EncoderFamily family) {
  EncoderSpec s;
  s.family = family;
  if (family == EncoderFamily::Vgg16Import) {
    s.channels = kVggChannels;
    s.input_side = 224;
    s.input_mean = 0.0F;
    s.input_std = 1.0F;
  }
  return s;
}

std::array<TapShape, kNumTaps> tap_shapes(const EncoderSpec& spec) {
  const std::string fam(family_name(spec.family));
  if (spec.channels.size() != kNumTaps) {
    throw ConfigError(fam + ": exactly 5 blocks required, got " + std::to_string(spec.channels.size()));
  }
  for (std::size_t c : spec.channels) {
    if (c == 0) throw ConfigError(fam + ": block channel counts must be >= 1");
  }
  if (spec.input_side == 0) throw ConfigError(fam + ": input side must be >= 1");
  if (spec.family == EncoderFamily::TinyResnet && spec.padding == PaddingMode::None) {
    throw ConfigError(
        "tiny-resnet without padding is unsupported: residual branches and shortcuts "
        "would disagree in size");
  }
  if (spec.family == EncoderFamily::Vgg16Import && spec.channels != kVggChannels) {
    throw ConfigError("vgg16-import uses fixed channels 64,128,256,512,512");
  }
  if (spec.family != EncoderFamily::Vgg16Import && spec.convs_per_block == 0) {
    throw ConfigError(fam + ": convs per block must be >= 1");
  }

  std::array<TapShape, kNumTaps> taps{};
  const std::size_t p = pad_of(spec);
  std::size_t side = spec.input_side;
  auto collapse = [&](std::size_t block) {
    return ConfigError(fam + " with input " + std::to_string(spec.input_side) + " and padding " +
                       std::string(padding_name(spec.padding)) + ": block " +
                       std::to_string(block + 1) + " collapses below 1 pixel");
  };
  for (std::size_t b = 0; b < kNumTaps; ++b) {
    if (spec.family == EncoderFamily::TinyResnet && b > 0) {
      side = (side - 1) / 2 + 1;  // 3x3 stride 2, padding 1
    } else {
      if (b > 0) side /= 2;
      for (std::size_t j = 0; j < convs_in_block(spec, b); ++j) {
        if (side + 2 * p < 3) throw collapse(b);
        side = side + 2 * p - 2;
      }
    }
    if (side == 0) throw collapse(b);
    taps[b] = {spec.channels[b], side};
  }
  return taps;
}

Parameter& Encoder::add_conv(const std::string& prefix, std::size_t out, std::size_t in,
                             std::size_t k) {
  params_.emplace_back(prefix + ".weight", Tensor({out, in, k, k}));
  params_.emplace_back(prefix + ".bias", Tensor({out}));
  return params_[params_.size() - 2];
}

Encoder Encoder::build(const EncoderSpec& spec, std::uint64_t seed) {
  Encoder e;
  e.spec_ = spec;
  e.taps_ = tap_shapes(spec);
  std::size_t in = 3;
  for (std::size_t b = 0; b < kNumTaps; ++b) {
    const std::size_t out = spec.channels[b];
    if (spec.family == EncoderFamily::TinyResnet && b > 0) {
      e.add_conv(conv_name(b, 0), out, in, 3);
      e.add_conv(conv_name(b, 1), out, out, 3);
      e.add_conv("block" + std::to_string(b + 1) + ".proj", out, in, 1);
    } else {
      for (std::size_t j = 0; j < convs_in_block(spec, b); ++j) {
        e.add_conv(conv_name(b, j), out, j == 0 ? in : out, 3);
      }
    }
    in = out;
  }
  if (!(spec.init_gain > 0.0)) throw ConfigError("init gain must be > 0");
  if (spec.input_mean != 0.0F || spec.input_std != 1.0F) {
    const float m = spec.input_mean, sd = spec.input_std;
    e.set_normalization({m, m, m}, {sd, sd, sd});
  }
  // Xavier uniform on weights in construction order; biases start at zero.
  std::mt19937_64 rng(seed);
  for (auto& p : e.params_) {
    if (p.value.rank() != 4) continue;
    const auto& d = p.value.dims();
    const double fan_in = static_cast<double>(d[1] * d[2] * d[3]);
    const double fan_out = static_cast<double>(d[0] * d[2] * d[3]);
    const auto bound = static_cast<float>(spec.init_gain * std::sqrt(6.0 / (fan_in + fan_out)));
    std::uniform_real_distribution<float> dist(-bound, bound);
    for (float& v : p.value.values()) v = dist(rng);
  }
  return e;
}

std::size_t Encoder::tap_channel_sum() const {
  std::size_t s = 0;
  for (const auto& t : taps_) s += t.channels;
  return s;
}

Parameter* Encoder::find(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Parameter* Encoder::find(std::string_view name) const {
  return const_cast<Encoder*>(this)->find(name);
}

std::size_t Encoder::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void Encoder::freeze() {
  frozen_ = true;
  for (auto& p : params_) p.trainable = false;
}

void Encoder::unfreeze() {
  frozen_ = false;
  for (auto& p : params_) p.trainable = true;
}

void Encoder::set_normalization(std::array<float, 3> mean, std::array<float, 3> std) {
  for (float s : std) {
    if (!(s > 0.0F)) throw ConfigError("normalization std must be positive");
  }
  norm_ = std::array<std::array<float, 3>, 2>{mean, std};
}

Tensor Encoder::normalize(const Tensor& images) const {
  require_rank(images, 4, "encoder input");
  if (images.dim(1) != 3) {
    throw DimensionError("encoder input: channel axis (1) must be 3, got " +
                         std::to_string(images.dim(1)));
  }
  if (images.dim(2) != spec_.input_side || images.dim(3) != spec_.input_side) {
    throw DimensionError("encoder input: expected side " + std::to_string(spec_.input_side) +
                         ", got " + shape_to_string(images.dims()));
  }
  if (!norm_) return images;
  Tensor out = images;
  const std::size_t plane = images.dim(2) * images.dim(3);
  for (std::size_t n = 0; n < images.dim(0); ++n) {
    for (std::size_t c = 0; c < 3; ++c) {
      float* p = out.data() + (n * 3 + c) * plane;
      const float m = (*norm_)[0][c], s = (*norm_)[1][c];
      for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - m) / s;
    }
  }
  return out;
}

std::vector<Var> Encoder::forward_taps(Graph& g, const Tensor& images) {
  Var x = g.input(normalize(images));
  const std::size_t p = pad_of(spec_);
  std::vector<Var> taps;
  taps.reserve(kNumTaps);
  auto conv = [&](const std::string& prefix, Var in, std::size_t stride, std::size_t pad) {
    Parameter* w = find(prefix + ".weight");
    Parameter* b = find(prefix + ".bias");
    return g.conv2d(in, g.parameter(*w), g.parameter(*b), stride, pad);
  };
  for (std::size_t b = 0; b < kNumTaps; ++b) {
    if (spec_.family == EncoderFamily::TinyResnet && b > 0) {
      Var r = g.relu(conv(conv_name(b, 0), x, 2, 1));
      r = conv(conv_name(b, 1), r, 1, 1);
      Var s = conv("block" + std::to_string(b + 1) + ".proj", x, 2, 0);
      x = g.relu(g.add(r, s));
      taps.push_back(x);
    } else {
      if (b > 0) x = g.maxpool2(x);
      for (std::size_t j = 0; j < convs_in_block(spec_, b); ++j) {
        x = g.relu(conv(conv_name(b, j), x, 1, p));
      }
      taps.push_back(x);
    }
  }
  return taps;
}

std::vector<Tensor> Encoder::forward_taps(const Tensor& images) {
  Graph g;
  auto vars = forward_taps(g, images);
  std::vector<Tensor> out;
  out.reserve(vars.size());
  for (auto& v : vars) out.push_back(v.value());
  return out;
}

std::vector<const Parameter*> Encoder::canonical_order() const {
  std::vector<const Parameter*> order;
  order.reserve(params_.size());
  for (const auto& p : params_) order.push_back(&p);
  std::sort(order.begin(), order.end(),
            [](const Parameter* a, const Parameter* b) { return a->name < b->name; });
  return order;
}

namespace {

std::string join_floats(const std::array<float, 3>& v) {
  std::string s;
  char buf[32];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v[i]));
    if (i > 0) s += ',';
    s += buf;
  }
  return s;
}

std::array<float, 3> parse_triplet(const std::string& text, const char* key) {
  std::array<float, 3> out{};
  std::stringstream ss(text);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= 3) break;
    try {
      out[i++] = std::stof(item);
    } catch (const std::exception&) {
      throw WeightLoadError(key, std::string("metadata ") + key + ": bad number '" + item + "'");
    }
  }
  if (i != 3) throw WeightLoadError(key, std::string("metadata ") + key + ": expected 3 values");
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i > 0 ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

PtwFile Encoder::to_ptw() const {
  PtwFile f;
  for (const auto& p : params_) f.add(p.name, p.value);
  f.set_meta("encoder.family", std::string(family_name(spec_.family)));
  f.set_meta("encoder.channels", join_sizes(spec_.channels));
  f.set_meta("encoder.convs_per_block", std::to_string(spec_.convs_per_block));
  f.set_meta("encoder.padding", std::string(padding_name(spec_.padding)));
  f.set_meta("encoder.input_side", std::to_string(spec_.input_side));
  if (norm_) {
    f.set_meta("norm.mean", join_floats((*norm_)[0]));
    f.set_meta("norm.std", join_floats((*norm_)[1]));
  }
  return f;
}

void Encoder::load_weights(const PtwFile& file) {
  // Validate everything before touching any parameter.
  for (const auto& p : params_) {
    const PtwTensor* t = file.find(p.name);
    if (t == nullptr) throw WeightLoadError(p.name, "weight file is missing tensor " + p.name);
    if (t->value.dims() != p.value.dims()) {
      throw WeightLoadError(p.name, "tensor " + p.name + " has dims " +
                                        shape_to_string(t->value.dims()) + ", expected " +
                                        shape_to_string(p.value.dims()));
    }
  }
  const auto mean = file.meta("norm.mean");
  const auto stdev = file.meta("norm.std");
  if (mean.has_value() != stdev.has_value()) {
    throw WeightLoadError("norm.mean", "norm.mean and norm.std must be given together");
  }
  if (mean) set_normalization(parse_triplet(*mean, "norm.mean"), parse_triplet(*stdev, "norm.std"));
  for (auto& p : params_) {
    p.value = file.find(p.name)->value;
    p.grad = Tensor::zeros_like(p.value);
  }
  freeze();
}

void Encoder::load_weights(const std::filesystem::path& path) {
  PtwFile file;
  try {
    file = read_ptw(path);
  } catch (const PtwError& e) {
    throw WeightLoadError("", std::string("cannot load weights: ") + e.what());
  }
  load_weights(file);
}

void Encoder::save(const std::filesystem::path& path) const { write_ptw(to_ptw(), path); }

const std::array<Vgg16Layer, 13>& vgg16_name_table() {
  static const std::array<Vgg16Layer, 13> table{{
      {0, "block1.conv1"},  {2, "block1.conv2"},  {5, "block2.conv1"},  {7, "block2.conv2"},
      {10, "block3.conv1"}, {12, "block3.conv2"}, {14, "block3.conv3"}, {17, "block4.conv1"},
      {19, "block4.conv2"}, {21, "block4.conv3"}, {24, "block5.conv1"}, {26, "block5.conv2"},
      {28, "block5.conv3"},
  }};
  return table;
}

EncoderSpec spec_from_ptw(const PtwFile& file) {
  const auto family = file.meta("encoder.family");
  if (!family) {
    // Exported VGG16: the reference input, when present, fixes the side.
    EncoderSpec s = EncoderSpec::defaults(EncoderFamily::Vgg16Import);
    if (const PtwTensor* ref = file.find("ref.input"); ref && ref->value.rank() == 4) {
      s.input_side = ref->value.dim(2);
    }
    return s;
  }
  const auto fam = parse_family(*family);
  if (!fam) throw WeightLoadError("encoder.family", "unknown encoder family '" + *family + "'");
  EncoderSpec s = EncoderSpec::defaults(*fam);
  try {
    if (auto v = file.meta("encoder.channels")) {
      s.channels.clear();
      std::stringstream ss(*v);
      std::string item;
      while (std::getline(ss, item, ',')) s.channels.push_back(std::stoul(item));
    }
    if (auto v = file.meta("encoder.convs_per_block")) s.convs_per_block = std::stoul(*v);
    if (auto v = file.meta("encoder.input_side")) s.input_side = std::stoul(*v);
  } catch (const std::exception&) {
    throw WeightLoadError("encoder.*", "malformed encoder metadata");
  }
  if (auto v = file.meta("encoder.padding")) {
    const auto pad = parse_padding(*v);
    if (!pad) throw WeightLoadError("encoder.padding", "unknown padding mode '" + *v + "'");
    s.padding = *pad;
  }
  return s;
}

Encoder load_encoder(const std::filesystem::path& path) {
  PtwFile file;
  try {
    file = read_ptw(path);
  } catch (const PtwError& e) {
    throw WeightLoadError("", std::string("cannot load encoder: ") + e.what());
  }
  Encoder e = Encoder::build(spec_from_ptw(file), 0);
  e.load_weights(file);
  return e;
}

std::string weight_fingerprint(const Encoder& encoder) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("SHA-256 unavailable");
  }
  for (const Parameter* p : encoder.canonical_order()) {
    EVP_DigestUpdate(ctx, p->name.data(), p->name.size());
    const unsigned char sep = 0;
    EVP_DigestUpdate(ctx, &sep, 1);
    for (std::size_t d : p->value.dims()) {
      const auto d32 = static_cast<std::uint32_t>(d);
      EVP_DigestUpdate(ctx, &d32, sizeof(d32));
    }
    EVP_DigestUpdate(ctx, p->value.data(), p->value.size() * sizeof(float));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[md[i] >> 4];
    hex += kHex[md[i] & 15];
  }
  return hex;
}

ClassifierHead ClassifierHead::build(const Encoder& encoder, int num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("classifier head needs at least 2 classes");
  const std::size_t c = encoder.taps().back().channels;
  const auto k = static_cast<std::size_t>(num_classes);
  ClassifierHead h;
  h.weight = Parameter("head.weight", Tensor({k, c}));
  h.bias = Parameter("head.bias", Tensor({k}));
  std::mt19937_64 rng(seed);
  const auto bound = static_cast<float>(std::sqrt(6.0 / static_cast<double>(c + k)));
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (float& v : h.weight.value.values()) v = dist(rng);
  return h;
}

Var ClassifierHead::logits(Graph& g, Var last_tap) {
  weight.trainable = true;
  bias.trainable = true;
  Var pooled = g.global_avg_pool(last_tap);
  return g.affine(pooled, g.parameter(weight), g.parameter(bias));
}

ReferenceCheck validate_reference_taps(Encoder& encoder, const PtwFile& file, double tolerance) {
  const PtwTensor* input = file.find("ref.input");
  if (input == nullptr) throw WeightLoadError("ref.input", "weight file has no ref.input tensor");
  const auto taps = encoder.forward_taps(input->value);
  ReferenceCheck check;
  for (std::size_t i = 0; i < kNumTaps; ++i) {
    const std::string name = "ref.tap" + std::to_string(i + 1);
    const PtwTensor* ref = file.find(name);
    if (ref == nullptr) throw WeightLoadError(name, "weight file has no " + name + " tensor");
    if (ref->value.dims() != taps[i].dims()) {
      throw WeightLoadError(name, name + " has dims " + shape_to_string(ref->value.dims()) +
                                      ", recomputed tap has " + shape_to_string(taps[i].dims()));
    }
    double worst = 0.0;
    for (std::size_t j = 0; j < taps[i].size(); ++j) {
      worst = std::max(worst, std::abs(static_cast<double>(taps[i][j]) -
                                       static_cast<double>(ref->value[j])));
    }
    check.max_abs[i] = worst;
    check.worst = std::max(check.worst, worst);
  }
  check.passed = check.worst <= tolerance;
  return check;
}

}  // namespace padprobe
