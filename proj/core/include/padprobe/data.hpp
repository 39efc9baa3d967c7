#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "padprobe/patterns.hpp"
#include "padprobe/tensor.hpp"

namespace padprobe {

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ground-truth placement of a synthetic shape, in pixel coordinates.
struct ShapePlacement {
  double center_x = 0.0;
  double center_y = 0.0;
  double radius = 0.0;
};

struct ImageRecord {
  /// File path, or a synthetic descriptor such as "synth:noise:7".
  std::string origin;
  /// 1 x 3 x side x side, RGB, values in [0, 1].
  Tensor image;
  std::optional<int> label;
  std::optional<ShapePlacement> shape;
};

/// Decodes PNG or binary PPM (P6, maxval 255), converts to RGB in [0, 1] and
/// bilinearly resizes to side x side. No resampling happens when the source
/// already has that size.
ImageRecord load_image(const std::filesystem::path& path, std::size_t side);

/// Raw decode without resizing: 1 x 3 x H x W.
Tensor decode_image(const std::filesystem::path& path);

void write_ppm(const Tensor& image, const std::filesystem::path& path);

enum class SynthKind { Black, White, Noise };

std::string_view synth_name(SynthKind kind);

/// black: zeros; white: ones; noise: N(0.5, 0.25) per element, clamped to [0, 1].
ImageRecord synth_image(SynthKind kind, std::size_t side, std::uint64_t seed);

inline constexpr const char* kShapeNames[] = {"circle", "square", "triangle",
                                              "cross",  "ring",   "bar"};

/// One filled shape per image on a flat background. Class i uses kShapeNames[i].
/// Center, size and both colours are drawn uniformly, so the label carries no
/// positional information.
std::vector<ImageRecord> synth_shapes(std::size_t count, std::size_t side, int num_classes,
                                      std::uint64_t seed);

/// P5 8-bit: round(255 * clamp(v, 0, 1)).
void write_pgm(const PositionMap& map, const std::filesystem::path& path);
/// Values are byte / 255.
PositionMap read_pgm(const std::filesystem::path& path);

/// FNV-1a over the bytes of `name`.
std::uint64_t stable_hash(std::string_view name);
/// Deterministic 80/20 split on the file name (not the full path).
bool in_train_split(std::string_view file_name);

/// Loads every PNG / PPM in `dir` (sorted by file name). If `dir/labels.csv`
/// exists (`filename,label`, optional header) labels are attached.
std::vector<ImageRecord> load_folder(const std::filesystem::path& dir, std::size_t side);

}  // namespace padprobe
