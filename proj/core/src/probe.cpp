#include "padprobe/probe.hpp"

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "padprobe/kernels.hpp"

namespace padprobe {

std::size_t validate_probe_spec(const ProbeSpec& spec) {
  if (spec.kernel != 1 && spec.kernel != 3 && spec.kernel != 5 && spec.kernel != 7) {
    throw ConfigError("probe kernel must be one of 1, 3, 5, 7; got " + std::to_string(spec.kernel));
  }
  if (spec.layers < 1 || spec.layers > 3) {
    throw ConfigError("probe stack length must be 1, 2 or 3; got " + std::to_string(spec.layers));
  }
  if (spec.padding > 2) {
    throw ConfigError("probe padding must be 0, 1 or 2; got " + std::to_string(spec.padding));
  }
  if (spec.align_side == 0) throw ConfigError("probe alignment side must be >= 1");
  if (spec.layers > 1 && spec.mid_channels == 0) throw ConfigError("probe mid channels must be >= 1");
  if (!spec.standalone) {
    if (spec.taps.empty()) throw ConfigError("probe needs at least one tap");
    std::set<std::size_t> seen;
    for (std::size_t t : spec.taps) {
      if (t >= kNumTaps) throw ConfigError("probe tap index " + std::to_string(t + 1) + " out of 1..5");
      if (!seen.insert(t).second) throw ConfigError("probe tap " + std::to_string(t + 1) + " repeated");
    }
  }
  std::size_t side = spec.align_side;
  for (std::size_t l = 0; l < spec.layers; ++l) {
    if (side + 2 * spec.padding < spec.kernel) {
      throw ConfigError("probe with alignment side " + std::to_string(spec.align_side) + ", kernel " +
                        std::to_string(spec.kernel) + ", padding " + std::to_string(spec.padding) +
                        " and " + std::to_string(spec.layers) + " layers has no output cells");
    }
    side = side + 2 * spec.padding - spec.kernel + 1;
  }
  return side;
}

std::size_t probe_input_channels(const ProbeSpec& spec, const Encoder* encoder) {
  if (spec.standalone) return 3;
  if (encoder == nullptr) throw ConfigError("a non-standalone probe needs an encoder");
  std::size_t c = 0;
  for (std::size_t t : spec.taps) c += encoder->taps().at(t).channels;
  return c;
}

Tensor align_taps(const ProbeSpec& spec, const std::vector<Tensor>& taps) {
  if (spec.standalone) throw ConfigError("standalone probe reads the image, not encoder taps");
  if (taps.size() != kNumTaps) {
    throw ConfigError("probe expects 5 encoder taps, got " + std::to_string(taps.size()));
  }
  std::vector<Tensor> resized;
  resized.reserve(spec.taps.size());
  for (std::size_t t : spec.taps) {
    resized.push_back(kernels::bilinear_resize(taps.at(t), spec.align_side, spec.align_side));
  }
  return kernels::concat_channels(resized);
}

Tensor align_image(const ProbeSpec& spec, const Tensor& image) {
  if (!spec.standalone) throw ConfigError("only a standalone probe reads the raw image");
  require_rank(image, 4, "probe image");
  if (image.dim(1) != 3) throw DimensionError("probe image: channel axis (1) must be 3");
  return kernels::bilinear_resize(image, spec.align_side, spec.align_side);
}

Probe Probe::build(const ProbeSpec& spec, std::size_t in_channels, std::uint64_t seed) {
  validate_probe_spec(spec);
  if (in_channels == 0) throw ConfigError("probe input channel count must be >= 1");
  Probe p;
  p.spec_ = spec;
  p.in_channels_ = in_channels;
  std::mt19937_64 rng(seed);
  std::size_t in = in_channels;
  const std::size_t k = spec.kernel;
  for (std::size_t l = 0; l < spec.layers; ++l) {
    const std::size_t out = l + 1 == spec.layers ? 1 : spec.mid_channels;
    const std::string prefix = "probe.conv" + std::to_string(l + 1);
    Parameter w(prefix + ".weight", Tensor({out, in, k, k}));
    const double fan_in = static_cast<double>(in * k * k);
    const double fan_out = static_cast<double>(out * k * k);
    const auto bound = static_cast<float>(std::sqrt(6.0 / (fan_in + fan_out)));
    std::uniform_real_distribution<float> dist(-bound, bound);
    for (float& v : w.value.values()) v = dist(rng);
    p.params_.push_back(std::move(w));
    p.params_.emplace_back(prefix + ".bias", Tensor({out}));
    in = out;
  }
  return p;
}

std::size_t Probe::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::size_t Probe::pre_upsample_side() const { return validate_probe_spec(spec_); }

void Probe::fit_input_normalization(const std::vector<Tensor>& features) {
  if (features.empty()) throw ConfigError("input normalization needs at least one feature tensor");
  const std::size_t c = in_channels_;
  std::vector<double> sum(c, 0.0), sq(c, 0.0);
  double count = 0.0;
  for (const auto& f : features) {
    require_rank(f, 4, "probe features");
    if (f.dim(1) != c) throw DimensionError("probe features: channel axis (1) must be " + std::to_string(c));
    const std::size_t plane = f.dim(2) * f.dim(3);
    for (std::size_t n = 0; n < f.dim(0); ++n) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const float* p = f.data() + (n * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum[ch] += p[i];
          sq[ch] += static_cast<double>(p[i]) * p[i];
        }
      }
      count += static_cast<double>(plane);
    }
  }
  const double fan = std::sqrt(static_cast<double>(spec_.kernel * spec_.kernel * c));
  input_shift_ = Tensor({c});
  input_scale_ = Tensor({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double mean = sum[ch] / count;
    const double var = sq[ch] / count - mean * mean;
    const double sd = var > 1e-12 ? std::sqrt(var) : 1.0;
    input_shift_[ch] = static_cast<float>(mean);
    input_scale_[ch] = static_cast<float>(1.0 / (sd * fan));
  }
}

Var Probe::forward(Graph& g, Var features, std::size_t target_h, std::size_t target_w) {
  const Tensor& f = features.value();
  require_rank(f, 4, "probe features");
  if (f.dim(1) != in_channels_) {
    throw DimensionError("probe features: channel axis (1) is " + std::to_string(f.dim(1)) +
                         ", probe expects " + std::to_string(in_channels_));
  }
  if (f.dim(2) != spec_.align_side || f.dim(3) != spec_.align_side) {
    throw DimensionError("probe features must be aligned to " + std::to_string(spec_.align_side));
  }
  Var x = features;
  if (input_normalized()) {
    Tensor t = f;
    const std::size_t plane = f.dim(2) * f.dim(3);
    for (std::size_t n = 0; n < f.dim(0); ++n) {
      for (std::size_t ch = 0; ch < in_channels_; ++ch) {
        float* p = t.data() + (n * in_channels_ + ch) * plane;
        const float shift = input_shift_[ch], scale = input_scale_[ch];
        for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - shift) * scale;
      }
    }
    x = g.input(std::move(t));
  }
  for (std::size_t l = 0; l < spec_.layers; ++l) {
    if (l > 0) x = g.relu(x);
    x = g.conv2d(x, g.parameter(params_[2 * l]), g.parameter(params_[2 * l + 1]), 1, spec_.padding);
  }
  return g.bilinear_resize(x, target_h, target_w);
}

std::vector<PositionMap> Probe::predict_features(const Tensor& features, std::size_t target_h,
                                                 std::size_t target_w) {
  Graph g;
  Var out = forward(g, g.input(features), target_h, target_w);
  std::vector<PositionMap> maps;
  for (std::size_t n = 0; n < out.value().dim(0); ++n) {
    maps.push_back(PositionMap::from_tensor(out.value(), n, 0));
  }
  return maps;
}

PositionMap Probe::predict(const std::vector<Tensor>& taps, std::size_t target_h,
                           std::size_t target_w) {
  return predict_features(align_taps(spec_, taps), target_h, target_w).front();
}

PositionMap Probe::predict_image(const Tensor& image, std::size_t target_h, std::size_t target_w) {
  return predict_features(align_image(spec_, image), target_h, target_w).front();
}

PtwFile Probe::to_ptw() const {
  PtwFile f;
  for (const auto& p : params_) f.add(p.name, p.value);
  if (input_normalized()) {
    f.add("input.shift", input_shift_);
    f.add("input.scale", input_scale_);
  }
  f.set_meta("probe.kernel", std::to_string(spec_.kernel));
  f.set_meta("probe.layers", std::to_string(spec_.layers));
  f.set_meta("probe.padding", std::to_string(spec_.padding));
  f.set_meta("probe.align_side", std::to_string(spec_.align_side));
  f.set_meta("probe.mid_channels", std::to_string(spec_.mid_channels));
  f.set_meta("probe.standalone", spec_.standalone ? "1" : "0");
  std::string taps;
  for (std::size_t i = 0; i < spec_.taps.size(); ++i) {
    taps += (i > 0 ? "," : "") + std::to_string(spec_.taps[i] + 1);
  }
  f.set_meta("probe.taps", taps);
  f.set_meta("probe.in_channels", std::to_string(in_channels_));
  return f;
}

void Probe::save(const std::filesystem::path& path) const { write_ptw(to_ptw(), path); }

Probe Probe::from_ptw(const PtwFile& file) {
  auto get = [&](const char* key) -> std::size_t {
    auto v = file.meta(key);
    if (!v) throw WeightLoadError(key, std::string("probe file lacks metadata ") + key);
    try {
      return std::stoul(*v);
    } catch (const std::exception&) {
      throw WeightLoadError(key, std::string("probe metadata ") + key + " is not a number");
    }
  };
  ProbeSpec spec;
  spec.kernel = get("probe.kernel");
  spec.layers = get("probe.layers");
  spec.padding = get("probe.padding");
  spec.align_side = get("probe.align_side");
  spec.mid_channels = get("probe.mid_channels");
  spec.standalone = get("probe.standalone") != 0;
  spec.taps.clear();
  if (auto v = file.meta("probe.taps")) {
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) spec.taps.push_back(std::stoul(item) - 1);
    }
  }
  Probe p = build(spec, get("probe.in_channels"), 0);
  for (auto& param : p.params_) {
    const PtwTensor* t = file.find(param.name);
    if (t == nullptr) throw WeightLoadError(param.name, "probe file is missing tensor " + param.name);
    if (t->value.dims() != param.value.dims()) {
      throw WeightLoadError(param.name, "tensor " + param.name + " has dims " +
                                            shape_to_string(t->value.dims()) + ", expected " +
                                            shape_to_string(param.value.dims()));
    }
    param.value = t->value;
  }
  const PtwTensor* shift = file.find("input.shift");
  const PtwTensor* scale = file.find("input.scale");
  if ((shift == nullptr) != (scale == nullptr)) {
    throw WeightLoadError("input.shift", "probe file has only one of input.shift / input.scale");
  }
  if (shift != nullptr) {
    const Shape want{p.in_channels_};
    if (shift->value.dims() != want || scale->value.dims() != want) {
      throw WeightLoadError("input.shift", "probe input normalization must have " +
                                               std::to_string(p.in_channels_) + " entries");
    }
    p.input_shift_ = shift->value;
    p.input_scale_ = scale->value;
  }
  return p;
}

Probe Probe::load(const std::filesystem::path& path) { return from_ptw(read_ptw(path)); }

}  // namespace padprobe
