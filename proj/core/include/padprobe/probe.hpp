#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "padprobe/encoder.hpp"
#include "padprobe/graph.hpp"
#include "padprobe/patterns.hpp"
#include "padprobe/ptw.hpp"

namespace padprobe {

struct ProbeSpec {
  std::size_t kernel = 3;         // 1, 3, 5 or 7
  std::size_t layers = 1;         // 1, 2 or 3
  std::size_t padding = 0;        // 0, 1 or 2
  std::size_t align_side = 8;     // taps are resized to align_side x align_side
  std::size_t mid_channels = 32;  // width of the hidden layers when layers > 1
  bool standalone = false;        // read the raw image instead of encoder taps
  /// 0-based tap indices feeding the probe (ignored when standalone).
  std::vector<std::size_t> taps{0, 1, 2, 3, 4};

  bool operator==(const ProbeSpec&) const = default;
};

/// Throws ConfigError unless the spec is well formed and every layer keeps
/// at least one output cell. Returns the pre-upsample side.
std::size_t validate_probe_spec(const ProbeSpec& spec);

/// Channel count the probe reads: 3 when standalone, else the sum over the
/// selected taps.
std::size_t probe_input_channels(const ProbeSpec& spec, const Encoder* encoder);

/// Parameter-free front end: each selected tap resized to align_side and
/// concatenated along channels. `taps` must hold all five encoder taps.
Tensor align_taps(const ProbeSpec& spec, const std::vector<Tensor>& taps);
/// Standalone front end: the raw image resized to align_side.
Tensor align_image(const ProbeSpec& spec, const Tensor& image);

/// Position encoding readout: L convolutions (ReLU between, none after the
/// last) on aligned features, then bilinear upsampling to the target size.
class Probe {
 public:
  static Probe build(const ProbeSpec& spec, std::size_t in_channels, std::uint64_t seed);

  Probe(const Probe&) = delete;
  Probe& operator=(const Probe&) = delete;
  Probe(Probe&&) = default;
  Probe& operator=(Probe&&) = default;

  [[nodiscard]] const ProbeSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] std::size_t in_channels() const noexcept { return in_channels_; }
  [[nodiscard]] std::vector<Parameter>& params() noexcept { return params_; }
  [[nodiscard]] const std::vector<Parameter>& params() const noexcept { return params_; }
  /// Number of trainable scalars.
  [[nodiscard]] std::size_t param_count() const;
  /// Side of the single-channel map before upsampling.
  [[nodiscard]] std::size_t pre_upsample_side() const;

  /// Fixes a per-channel input transform from training features:
  /// x -> (x - mean_c) / (std_c * sqrt(kernel^2 * in_channels)). Channels with
  /// zero variance are only shifted. Encoder taps are large and strongly
  /// correlated, and without this SGD on the raw concatenation diverges at
  /// any usable rate. Not a trainable parameter; stored with the probe.
  void fit_input_normalization(const std::vector<Tensor>& features);
  [[nodiscard]] bool input_normalized() const noexcept { return !input_shift_.empty(); }

  /// `features` is N x in_channels x align x align (see align_taps / align_image).
  /// Output N x 1 x target_h x target_w, raw values. Features are treated as
  /// constants; no gradient flows back into them.
  Var forward(Graph& g, Var features, std::size_t target_h, std::size_t target_w);

  /// Full path from five encoder taps (or the raw image when standalone).
  PositionMap predict(const std::vector<Tensor>& taps, std::size_t target_h, std::size_t target_w);
  PositionMap predict_image(const Tensor& image, std::size_t target_h, std::size_t target_w);
  /// Batched inference on aligned features; one map per batch entry.
  std::vector<PositionMap> predict_features(const Tensor& features, std::size_t target_h,
                                            std::size_t target_w);

  [[nodiscard]] PtwFile to_ptw() const;
  void save(const std::filesystem::path& path) const;
  static Probe load(const std::filesystem::path& path);
  static Probe from_ptw(const PtwFile& file);

 private:
  Probe() = default;

  ProbeSpec spec_;
  std::size_t in_channels_ = 0;
  std::vector<Parameter> params_;
  Tensor input_shift_;
  Tensor input_scale_;
};

}  // namespace padprobe
