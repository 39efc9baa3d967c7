#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "padprobe/tensor.hpp"

namespace padprobe {

/// h x w map of floats. Holds ground-truth position maps, probe predictions
/// (which may leave [0, 1]) and content-loss maps.
class PositionMap {
 public:
  PositionMap() = default;
  PositionMap(std::size_t h, std::size_t w, float fill = 0.0F);
  PositionMap(std::size_t h, std::size_t w, std::vector<float> values);

  /// Takes plane (n, c) of an NCHW tensor.
  static PositionMap from_tensor(const Tensor& t, std::size_t n = 0, std::size_t c = 0);
  /// 1 x 1 x h x w.
  [[nodiscard]] Tensor to_tensor() const;

  [[nodiscard]] std::size_t height() const noexcept { return h_; }
  [[nodiscard]] std::size_t width() const noexcept { return w_; }
  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
  [[nodiscard]] const std::vector<float>& values() const noexcept { return values_; }
  [[nodiscard]] std::vector<float>& values() noexcept { return values_; }

  float& at(std::size_t r, std::size_t c) noexcept { return values_[r * w_ + c]; }
  [[nodiscard]] float at(std::size_t r, std::size_t c) const noexcept { return values_[r * w_ + c]; }

  [[nodiscard]] bool same_shape(const PositionMap& o) const noexcept {
    return h_ == o.h_ && w_ == o.w_;
  }
  bool operator==(const PositionMap&) const = default;

 private:
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::vector<float> values_;
};

enum class PatternKind { H, V, G, HS, VS };

inline constexpr PatternKind kAllPatterns[] = {PatternKind::H, PatternKind::V, PatternKind::G,
                                               PatternKind::HS, PatternKind::VS};

std::string_view pattern_name(PatternKind k);
std::optional<PatternKind> parse_pattern(std::string_view name);

struct PatternParams {
  /// Gaussian sigma as a fraction of min(h, w).
  double sigma_fraction = 0.25;
  /// Number of stripe periods for HS / VS.
  std::size_t periods = 4;
};

/// Normalized gradient-like ground truth.
///
///   H   c / (w - 1)                          (0 when w == 1)
///   V   r / (h - 1)
///   G   centred Gaussian, sigma = sigma_fraction * min(h, w), min-max normalized
///   HS  sawtooth along columns: (c mod p) / (p - 1), p = ceil(w / periods)
///   VS  the same along rows
PositionMap generate_pattern(PatternKind kind, std::size_t h, std::size_t w,
                             const PatternParams& params = {});

}  // namespace padprobe
