#include "padprobe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace padprobe {

std::vector<double> average_ranks(std::span<const float> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // positions i..j-1 share ranks i+1..j
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

double spc(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw DimensionError("spc: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                         " cells");
  }
  if (a.size() < 2) throw DimensionError("spc needs at least 2 cells");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  // Average ranks always have mean (n + 1) / 2.
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean, db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double spc(const PositionMap& a, const PositionMap& b) {
  if (!a.same_shape(b)) throw DimensionError("spc: map shapes differ");
  return spc(std::span<const float>(a.values()), std::span<const float>(b.values()));
}

double mae(const PositionMap& prediction, const PositionMap& truth) {
  if (!prediction.same_shape(truth)) throw DimensionError("mae: map shapes differ");
  double acc = 0.0;
  const auto& p = prediction.values();
  const auto& t = truth.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double clamped = std::clamp(static_cast<double>(p[i]), 0.0, 1.0);
    acc += std::abs(clamped - static_cast<double>(t[i]));
  }
  return acc / static_cast<double>(p.size());
}

double mae_raw(const PositionMap& a, const PositionMap& b) {
  if (!a.same_shape(b)) throw DimensionError("mae: map shapes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += std::abs(static_cast<double>(a.values()[i]) - static_cast<double>(b.values()[i]));
  }
  return acc / static_cast<double>(a.size());
}

PositionMap content_loss_map(const PositionMap& pred_h, const PositionMap& pred_v,
                             const PositionMap& pred_g, const PositionMap& gt_h,
                             const PositionMap& gt_v, const PositionMap& gt_g) {
  for (const PositionMap* m : {&pred_v, &pred_g, &gt_h, &gt_v, &gt_g}) {
    if (!m->same_shape(pred_h)) throw DimensionError("content_loss_map: map shapes differ");
  }
  PositionMap out(pred_h.height(), pred_h.width());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double sum =
        std::abs(static_cast<double>(gt_h.values()[i]) - static_cast<double>(pred_h.values()[i])) +
        std::abs(static_cast<double>(gt_v.values()[i]) - static_cast<double>(pred_v.values()[i])) +
        std::abs(static_cast<double>(gt_g.values()[i]) - static_cast<double>(pred_g.values()[i]));
    out.values()[i] = static_cast<float>(sum / 3.0);
  }
  return out;
}

std::string_view source_name(ImageSource s) {
  switch (s) {
    case ImageSource::Natural: return "natural";
    case ImageSource::Black: return "black";
    case ImageSource::White: return "white";
    case ImageSource::Noise: return "noise";
  }
  return "?";
}

std::optional<ImageSource> parse_source(std::string_view name) {
  for (auto s : kAllSources) {
    if (source_name(s) == name) return s;
  }
  return std::nullopt;
}

namespace {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

}  // namespace

double MetricReport::Entry::spc_mean() const { return mean_of(spc); }
double MetricReport::Entry::mae_mean() const { return mean_of(mae); }

void MetricReport::add(PatternKind pattern, ImageSource source, double spc_value,
                       double mae_value) {
  auto& e = entries_[{pattern, source}];
  e.spc.push_back(spc_value);
  e.mae.push_back(mae_value);
}

void MetricReport::add_image(PatternKind pattern, ImageSource source,
                             const PositionMap& prediction, const PositionMap& truth) {
  add(pattern, source, spc(prediction, truth), mae(prediction, truth));
}

const MetricReport::Entry* MetricReport::find(PatternKind pattern, ImageSource source) const {
  auto it = entries_.find({pattern, source});
  return it == entries_.end() ? nullptr : &it->second;
}

const MetricReport::Entry& MetricReport::at(PatternKind pattern, ImageSource source) const {
  const Entry* e = find(pattern, source);
  if (e == nullptr) {
    throw std::out_of_range("no metrics for " + std::string(pattern_name(pattern)) + "/" +
                            std::string(source_name(source)));
  }
  return *e;
}

std::string format_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  if (std::string_view(buf) == "-0.000000") return "0.000000";
  return buf;
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os << "pattern,source,spc_mean,mae_mean,n_images\n";
  for (const auto& [key, e] : entries_) {
    os << pattern_name(key.first) << ',' << source_name(key.second) << ','
       << format_metric(e.spc_mean()) << ',' << format_metric(e.mae_mean()) << ',' << e.count()
       << '\n';
  }
  return os.str();
}

}  // namespace padprobe
