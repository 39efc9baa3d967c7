#include <gtest/gtest.h>

#include <algorithm>

#include "padprobe/patterns.hpp"

using namespace padprobe;

TEST(Patterns, HorizontalRamp) {
  const auto m = generate_pattern(PatternKind::H, 2, 3);
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_EQ(m.at(r, 0), 0.0F);
    EXPECT_EQ(m.at(r, 1), 0.5F);
    EXPECT_EQ(m.at(r, 2), 1.0F);
  }
}

TEST(Patterns, VerticalRamp) {
  const auto m = generate_pattern(PatternKind::V, 3, 2);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_EQ(m.at(0, c), 0.0F);
    EXPECT_EQ(m.at(1, c), 0.5F);
    EXPECT_EQ(m.at(2, c), 1.0F);
  }
}

TEST(Patterns, GaussianCenterAndCorners) {
  const auto m = generate_pattern(PatternKind::G, 5, 5);
  EXPECT_EQ(m.at(2, 2), 1.0F);
  EXPECT_EQ(m.at(0, 0), m.at(0, 4));
  EXPECT_EQ(m.at(0, 0), m.at(4, 0));
  EXPECT_EQ(m.at(0, 0), m.at(4, 4));
  EXPECT_EQ(m.at(0, 0), 0.0F);
}

TEST(Patterns, StripesTwoPeriods) {
  const auto m = generate_pattern(PatternKind::HS, 1, 8, {.periods = 2});
  const float want[] = {0.0F, 1.0F / 3, 2.0F / 3, 1.0F, 0.0F, 1.0F / 3, 2.0F / 3, 1.0F};
  for (std::size_t c = 0; c < 8; ++c) EXPECT_FLOAT_EQ(m.at(0, c), want[c]);
}

TEST(Patterns, TransposeDuality) {
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{7, 13}, {64, 64}, {5, 2}}) {
    const auto hm = generate_pattern(PatternKind::H, h, w);
    const auto vm = generate_pattern(PatternKind::V, w, h);
    const auto hs = generate_pattern(PatternKind::HS, h, w);
    const auto vs = generate_pattern(PatternKind::VS, w, h);
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        EXPECT_EQ(hm.at(r, c), vm.at(c, r));
        EXPECT_EQ(hs.at(r, c), vs.at(c, r));
      }
  }
}

TEST(Patterns, GaussianFlipSymmetry) {
  for (std::size_t side : {5U, 8U, 33U, 64U}) {
    const auto m = generate_pattern(PatternKind::G, side, side);
    for (std::size_t r = 0; r < side; ++r)
      for (std::size_t c = 0; c < side; ++c) {
        EXPECT_EQ(m.at(r, c), m.at(side - 1 - r, c));
        EXPECT_EQ(m.at(r, c), m.at(r, side - 1 - c));
        EXPECT_EQ(m.at(r, c), m.at(c, r));
      }
  }
}

TEST(Patterns, StripePeriodicity) {
  const std::size_t w = 64;
  const auto m = generate_pattern(PatternKind::HS, 3, w);
  const std::size_t period = w / 4;
  for (std::size_t c = 0; c + period < w; ++c) EXPECT_EQ(m.at(1, c), m.at(1, c + period));
}

TEST(Patterns, BoundsAttained) {
  for (PatternKind k : kAllPatterns) {
    const auto m = generate_pattern(k, 64, 64);
    const auto [lo, hi] = std::minmax_element(m.values().begin(), m.values().end());
    EXPECT_EQ(*lo, 0.0F) << pattern_name(k);
    EXPECT_EQ(*hi, 1.0F) << pattern_name(k);
  }
}

TEST(Patterns, Names) {
  for (PatternKind k : kAllPatterns) EXPECT_EQ(parse_pattern(pattern_name(k)), k);
  EXPECT_FALSE(parse_pattern("D").has_value());
}

TEST(Patterns, RejectsDegenerateSizes) {
  EXPECT_THROW(generate_pattern(PatternKind::H, 0, 4), std::invalid_argument);
}
