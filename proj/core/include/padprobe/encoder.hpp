#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "padprobe/graph.hpp"
#include "padprobe/ptw.hpp"
#include "padprobe/tensor.hpp"

namespace padprobe {

/// A spec/weights combination the library refuses to build or run.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Weight file does not fit the encoder. The message names the tensor.
class WeightLoadError : public std::runtime_error {
 public:
  WeightLoadError(std::string tensor, const std::string& what)
      : std::runtime_error(what), tensor_(std::move(tensor)) {}
  [[nodiscard]] const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

enum class EncoderFamily { TinyVgg, TinyResnet, Vgg16Import };
enum class PaddingMode { Zero, None };

std::string_view family_name(EncoderFamily f);
std::optional<EncoderFamily> parse_family(std::string_view name);
std::string_view padding_name(PaddingMode p);
std::optional<PaddingMode> parse_padding(std::string_view name);

inline constexpr std::size_t kNumTaps = 5;

struct EncoderSpec {
  EncoderFamily family = EncoderFamily::TinyVgg;
  /// Output channels of each of the five blocks.
  std::vector<std::size_t> channels{16, 32, 64, 128, 128};
  /// tiny-vgg only. tiny-resnet opens with one plain conv; vgg16-import
  /// always uses 2,2,3,3,3.
  std::size_t convs_per_block = 2;
  PaddingMode padding = PaddingMode::Zero;
  std::size_t input_side = 64;
  /// Multiplier on the Xavier-uniform bound sqrt(6 / (fan_in + fan_out)).
  /// The default is the ReLU gain; 1 gives plain Xavier.
  double init_gain = 1.4142135623730951;
  /// Fixed per-channel input normalization (x - mean) / std for freshly built
  /// encoders. vgg16-import takes its constants from the weight file instead.
  float input_mean = 0.5F;
  float input_std = 0.25F;

  /// Family defaults: tiny families 64 px, vgg16-import 224 px with 64..512 channels.
  static EncoderSpec defaults(EncoderFamily family);

  bool operator==(const EncoderSpec&) const = default;
};

struct TapShape {
  std::size_t channels;
  std::size_t side;
};

/// Validates the spec and returns the five tap shapes. Throws ConfigError for
/// padding-free tiny-resnet, wrong block count, or taps that collapse below 1 px.
std::array<TapShape, kNumTaps> tap_shapes(const EncoderSpec& spec);

/// Five-block feature extractor.
///
/// tiny-vgg      per block: convs_per_block x (3x3 conv + ReLU), tap, 2x2 max pool
/// tiny-resnet   block 1: 3x3 conv + ReLU, tap.
///               blocks 2-5: relu(conv3x3(relu(conv3x3_s2(x))) + conv1x1_s2(x)), tap
/// vgg16-import  VGG16 conv stack; taps after conv1_2, 2_2, 3_3, 4_3, 5_3
///
/// Parameters are named block{i}.conv{j}.weight / .bias (and block{i}.proj.*
/// for resnet shortcuts), 1-based.
class Encoder {
 public:
  static Encoder build(const EncoderSpec& spec, std::uint64_t seed);

  Encoder(const Encoder&) = delete;
  Encoder& operator=(const Encoder&) = delete;
  Encoder(Encoder&&) = default;
  Encoder& operator=(Encoder&&) = default;

  [[nodiscard]] const EncoderSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] const std::array<TapShape, kNumTaps>& taps() const noexcept { return taps_; }
  [[nodiscard]] std::size_t tap_channel_sum() const;

  [[nodiscard]] std::vector<Parameter>& params() noexcept { return params_; }
  [[nodiscard]] const std::vector<Parameter>& params() const noexcept { return params_; }
  [[nodiscard]] Parameter* find(std::string_view name);
  [[nodiscard]] const Parameter* find(std::string_view name) const;
  [[nodiscard]] std::size_t param_count() const;

  [[nodiscard]] bool frozen() const noexcept { return frozen_; }
  void freeze();
  void unfreeze();

  /// Per-channel input normalization (x - mean) / std applied before block 1.
  /// Built from the spec, replaced by norm.* metadata on load.
  void set_normalization(std::array<float, 3> mean, std::array<float, 3> std);
  [[nodiscard]] const std::optional<std::array<std::array<float, 3>, 2>>& normalization() const noexcept {
    return norm_;
  }

  /// Records the forward pass into `g`. `images` is N x 3 x side x side.
  std::vector<Var> forward_taps(Graph& g, const Tensor& images);
  /// Inference-only convenience wrapper.
  std::vector<Tensor> forward_taps(const Tensor& images);

  /// Canonical name order: lexicographic by parameter name.
  [[nodiscard]] std::vector<const Parameter*> canonical_order() const;

  [[nodiscard]] PtwFile to_ptw() const;
  /// Replaces every parameter from the file and freezes the encoder.
  /// Picks up norm.mean / norm.std metadata when present.
  void load_weights(const PtwFile& file);
  void load_weights(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  Encoder() = default;
  Parameter& add_conv(const std::string& prefix, std::size_t out, std::size_t in, std::size_t k);
  Tensor normalize(const Tensor& images) const;

  EncoderSpec spec_;
  std::array<TapShape, kNumTaps> taps_{};
  std::vector<Parameter> params_;
  bool frozen_ = false;
  std::optional<std::array<std::array<float, 3>, 2>> norm_;
};

/// Conv layers of the standard VGG16 feature stack: position in the source
/// network's `features` sequence and the canonical PTW name prefix
/// (weights are `<name>.weight`, biases `<name>.bias`).
struct Vgg16Layer {
  std::size_t source_index;
  std::string_view name;
};
const std::array<Vgg16Layer, 13>& vgg16_name_table();

/// Reads the spec stored by Encoder::save. Files without one (such as an
/// exported VGG16) are taken as vgg16-import at the side of `ref.input`, or
/// 224 px without it.
EncoderSpec spec_from_ptw(const PtwFile& file);
Encoder load_encoder(const std::filesystem::path& path);

/// SHA-256 (hex) over name, dims and value bytes of every parameter in
/// canonical order.
std::string weight_fingerprint(const Encoder& encoder);

/// Global average pool over the last tap followed by an affine layer.
/// Always trainable, regardless of the encoder's freeze flag.
struct ClassifierHead {
  Parameter weight;  // classes x C5
  Parameter bias;    // classes

  static ClassifierHead build(const Encoder& encoder, int num_classes, std::uint64_t seed);
  [[nodiscard]] int num_classes() const { return static_cast<int>(bias.value.size()); }
  Var logits(Graph& g, Var last_tap);
};

/// Result of checking stored reference activations against recomputed taps.
struct ReferenceCheck {
  std::array<double, kNumTaps> max_abs{};
  double worst = 0.0;
  bool passed = false;
};

/// Recomputes taps for the file's `ref.input` and compares with
/// `ref.tap1`..`ref.tap5`. The encoder must already hold the file's weights.
ReferenceCheck validate_reference_taps(Encoder& encoder, const PtwFile& file,
                                       double tolerance = 1e-4);

}  // namespace padprobe
