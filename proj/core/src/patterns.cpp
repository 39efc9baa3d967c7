#include "padprobe/patterns.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace padprobe {

PositionMap::PositionMap(std::size_t h, std::size_t w, float fill)
    : h_(h), w_(w), values_(h * w, fill) {
  if (h == 0 || w == 0) throw DimensionError("position map needs h, w >= 1");
}

PositionMap::PositionMap(std::size_t h, std::size_t w, std::vector<float> values)
    : h_(h), w_(w), values_(std::move(values)) {
  if (h == 0 || w == 0) throw DimensionError("position map needs h, w >= 1");
  if (values_.size() != h * w) {
    throw DimensionError("position map " + std::to_string(h) + "x" + std::to_string(w) +
                         " given " + std::to_string(values_.size()) + " values");
  }
}

PositionMap PositionMap::from_tensor(const Tensor& t, std::size_t n, std::size_t c) {
  require_rank(t, 4, "PositionMap::from_tensor");
  if (n >= t.dim(0) || c >= t.dim(1)) throw DimensionError("PositionMap::from_tensor: plane index");
  const std::size_t h = t.dim(2), w = t.dim(3);
  const float* p = t.data() + (n * t.dim(1) + c) * h * w;
  return PositionMap(h, w, std::vector<float>(p, p + h * w));
}

Tensor PositionMap::to_tensor() const { return Tensor({1, 1, h_, w_}, values_); }

std::string_view pattern_name(PatternKind k) {
  switch (k) {
    case PatternKind::H: return "H";
    case PatternKind::V: return "V";
    case PatternKind::G: return "G";
    case PatternKind::HS: return "HS";
    case PatternKind::VS: return "VS";
  }
  return "?";
}

std::optional<PatternKind> parse_pattern(std::string_view name) {
  for (auto k : kAllPatterns) {
    if (pattern_name(k) == name) return k;
  }
  return std::nullopt;
}

namespace {

float ramp(std::size_t i, std::size_t n) {
  if (n <= 1) return 0.0F;
  return static_cast<float>(static_cast<double>(i) / static_cast<double>(n - 1));
}

float sawtooth(std::size_t i, std::size_t n, std::size_t periods) {
  const std::size_t width = (n + periods - 1) / periods;
  return ramp(i % width, width);
}

}  // namespace

PositionMap generate_pattern(PatternKind kind, std::size_t h, std::size_t w,
                             const PatternParams& params) {
  if (params.periods == 0) throw std::invalid_argument("stripe period count must be >= 1");
  if (!(params.sigma_fraction > 0.0)) throw std::invalid_argument("sigma fraction must be > 0");
  PositionMap m(h, w);
  switch (kind) {
    case PatternKind::H:
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) m.at(r, c) = ramp(c, w);
      break;
    case PatternKind::V:
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) m.at(r, c) = ramp(r, h);
      break;
    case PatternKind::HS:
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) m.at(r, c) = sawtooth(c, w, params.periods);
      break;
    case PatternKind::VS:
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) m.at(r, c) = sawtooth(r, h, params.periods);
      break;
    case PatternKind::G: {
      const double mu_r = (static_cast<double>(h) - 1.0) / 2.0;
      const double mu_c = (static_cast<double>(w) - 1.0) / 2.0;
      const double sigma = params.sigma_fraction * static_cast<double>(std::min(h, w));
      std::vector<double> raw(h * w);
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
          const double dr = static_cast<double>(r) - mu_r;
          const double dc = static_cast<double>(c) - mu_c;
          raw[r * w + c] = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
        }
      }
      const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
      const double min = *lo, range = *hi - *lo;
      for (std::size_t i = 0; i < raw.size(); ++i) {
        m.values()[i] = range > 0.0 ? static_cast<float>((raw[i] - min) / range)
                                    : static_cast<float>(raw[i]);
      }
      break;
    }
  }
  return m;
}

}  // namespace padprobe
