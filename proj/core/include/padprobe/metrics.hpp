#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "padprobe/patterns.hpp"

namespace padprobe {

/// Spearman rank correlation over the flattened maps. Ties get the average of
/// the ranks they span. Returns 0 when either map is constant.
double spc(const PositionMap& a, const PositionMap& b);
double spc(std::span<const float> a, std::span<const float> b);

/// Mean absolute difference with the prediction clamped to [0, 1].
double mae(const PositionMap& prediction, const PositionMap& truth);
/// Mean absolute difference without clamping.
double mae_raw(const PositionMap& a, const PositionMap& b);

/// Per-pixel mean of |gt - pred| over the H, V and G probes.
PositionMap content_loss_map(const PositionMap& pred_h, const PositionMap& pred_v,
                             const PositionMap& pred_g, const PositionMap& gt_h,
                             const PositionMap& gt_v, const PositionMap& gt_g);

/// Average ranks (1-based) with ties sharing the mean rank.
std::vector<double> average_ranks(std::span<const float> values);

enum class ImageSource { Natural, Black, White, Noise };

inline constexpr ImageSource kAllSources[] = {ImageSource::Natural, ImageSource::Black,
                                              ImageSource::White, ImageSource::Noise};

std::string_view source_name(ImageSource s);
std::optional<ImageSource> parse_source(std::string_view name);

/// Per-(pattern, source) metric aggregates. Only per-image values are stored;
/// means are recomputed from them in insertion order.
class MetricReport {
 public:
  struct Entry {
    std::vector<double> spc;
    std::vector<double> mae;

    [[nodiscard]] double spc_mean() const;
    [[nodiscard]] double mae_mean() const;
    [[nodiscard]] std::size_t count() const noexcept { return spc.size(); }
  };

  void add(PatternKind pattern, ImageSource source, double spc_value, double mae_value);
  void add_image(PatternKind pattern, ImageSource source, const PositionMap& prediction,
                 const PositionMap& truth);

  [[nodiscard]] const Entry* find(PatternKind pattern, ImageSource source) const;
  [[nodiscard]] const Entry& at(PatternKind pattern, ImageSource source) const;
  [[nodiscard]] const std::map<std::pair<PatternKind, ImageSource>, Entry>& entries() const noexcept {
    return entries_;
  }

  /// Header `pattern,source,spc_mean,mae_mean,n_images`, one row per entry.
  [[nodiscard]] std::string to_csv() const;

 private:
  std::map<std::pair<PatternKind, ImageSource>, Entry> entries_;
};

/// Fixed-format decimal used for every CSV number, so equal values give equal bytes.
std::string format_metric(double v);

}  // namespace padprobe
