#include "forge/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "forge/error.hpp"

using namespace forge;

namespace {

// w x h map filled by f(x, y).
DepthMap make_map(int w, int h, const std::function<float(int, int)>& f) {
  DepthMap m;
  m.width = w;
  m.height = h;
  m.values.resize(static_cast<size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) m.values[static_cast<size_t>(y) * w + x] = f(x, y);
  }
  return m;
}

DepthStats whole(const DepthMap& m) {
  return depth_stats(m, BBox{0, 0, static_cast<double>(m.width), static_cast<double>(m.height)});
}

// 100 pixels per column block; value picked by the pixel's index in [0, 100).
DepthMap hundred(const std::function<float(int)>& f) {
  return make_map(10, 10, [&](int x, int y) { return f(y * 10 + x); });
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kIo;
}

}  // namespace

TEST(NormalizeTest, IdentityScale) {
  EXPECT_EQ(normalize_bbox({100, 200, 300, 400}, 1000, 1000), (NormalizedBBox{100, 200, 300, 400}));
}

TEST(NormalizeTest, FormulaExample) {
  EXPECT_EQ(normalize_bbox({64, 48, 320, 240}, 640, 480), (NormalizedBBox{100, 100, 500, 500}));
}

TEST(NormalizeTest, RoundsHalfUp) {
  // 1000 / 3 = 333.33 -> 333; 2000 / 3 = 666.67 -> 667.
  EXPECT_EQ(normalize_bbox({1, 0, 2, 3}, 3, 3), (NormalizedBBox{333, 0, 667, 1000}));
  // 1 / 8 * 1000 = 125 exactly, 3 / 16 * 1000 = 187.5 -> 188.
  EXPECT_EQ(normalize_bbox({3, 0, 8, 16}, 16, 16).x_min, 188);
}

TEST(NormalizeTest, Errors) {
  EXPECT_EQ(code_of([] { normalize_bbox({0, 0, 641, 10}, 640, 480); }), ErrorCode::kOutOfBounds);
  EXPECT_EQ(code_of([] { normalize_bbox({100, 0, 100.2, 10}, 4000, 480); }), ErrorCode::kDegenerateBox);
}

TEST(NormalizeTest, DenormalizeInverts) {
  const BBox b = denormalize_bbox({100, 100, 500, 500}, 640, 480);
  EXPECT_DOUBLE_EQ(b.x_min, 64);
  EXPECT_DOUBLE_EQ(b.y_max, 240);
}

TEST(IouTest, Identity) { EXPECT_DOUBLE_EQ(bbox_iou(BBox{0, 0, 10, 10}, BBox{0, 0, 10, 10}), 1.0); }

TEST(IouTest, Disjoint) { EXPECT_DOUBLE_EQ(bbox_iou(BBox{0, 0, 10, 10}, BBox{20, 0, 30, 10}), 0.0); }

TEST(IouTest, HalfShift) {
  // Intersection 50, union 150.
  EXPECT_DOUBLE_EQ(bbox_iou(BBox{0, 0, 10, 10}, BBox{5, 0, 15, 10}), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(bbox_iou(NormalizedBBox{0, 0, 10, 10}, NormalizedBBox{5, 0, 15, 10}), 1.0 / 3.0);
}

TEST(PercentileTest, LinearInterpolation) {
  const std::vector<double> v = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  EXPECT_DOUBLE_EQ(percentile_linear(v, 0.5), 5.5);
  EXPECT_NEAR(percentile_linear(v, 0.9), 9.1, 1e-12);
  EXPECT_DOUBLE_EQ(percentile_linear(v, 0.0), 1);
  EXPECT_DOUBLE_EQ(percentile_linear(v, 1.0), 10);
}

TEST(DepthStatsTest, ConstantRegion) {
  const DepthStats s = whole(make_map(20, 20, [](int, int) { return 5.0f; }));
  EXPECT_DOUBLE_EQ(s.median, 5.0);
  EXPECT_DOUBLE_EQ(s.p90, 5.0);
  EXPECT_DOUBLE_EQ(s.dispersion, 0.0);
  EXPECT_DOUBLE_EQ(s.valid_fraction, 1.0);
  EXPECT_DOUBLE_EQ(s.top_decile_clean_fraction, 1.0);
}

TEST(DepthStatsTest, OneToTen) {
  const DepthStats s = whole(make_map(10, 1, [](int x, int) { return static_cast<float>(x + 1); }));
  EXPECT_DOUBLE_EQ(s.median, 5.5);
  EXPECT_NEAR(s.p90, 9.1, 1e-6);
}

TEST(DepthStatsTest, MatchesBruteForceOnRandomRegion) {
  // Brute force: collect the same pixel centers, sort, interpolate.
  DepthMap m = make_map(37, 23, [](int x, int y) { return static_cast<float>(std::sin(x * 0.7 + y * 1.3) * 3 + 6); });
  m.values[5] = std::numeric_limits<float>::quiet_NaN();
  const BBox box{3.4, 2.5, 30.5, 20.0};
  std::vector<double> vals;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      const double cx = x + 0.5, cy = y + 0.5;
      if (cx >= box.x_min && cx < box.x_max && cy >= box.y_min && cy < box.y_max && std::isfinite(m.at(x, y))) {
        vals.push_back(m.at(x, y));
      }
    }
  }
  std::sort(vals.begin(), vals.end());
  const DepthStats s = depth_stats(m, box);
  EXPECT_NEAR(s.median, percentile_linear(vals, 0.5), 1e-6);
  EXPECT_NEAR(s.p90, percentile_linear(vals, 0.9), 1e-6);
}

TEST(DepthStatsTest, MaskedPixelsReduceValidFraction) {
  DepthMap m = make_map(10, 10, [](int, int) { return 2.0f; });
  m.valid_mask.assign(100, 1);
  for (int i = 0; i < 30; ++i) m.valid_mask[i] = 0;
  EXPECT_DOUBLE_EQ(whole(m).valid_fraction, 0.7);
}

TEST(DepthStatsTest, FullyMaskedRegionIsEmpty) {
  DepthMap m = make_map(10, 10, [](int, int) { return 2.0f; });
  m.valid_mask.assign(100, 0);
  EXPECT_EQ(code_of([&] { whole(m); }), ErrorCode::kEmptyRegion);
}

TEST(DepthStatsTest, BoxOutsideMap) {
  const DepthMap m = make_map(10, 10, [](int, int) { return 2.0f; });
  EXPECT_EQ(code_of([&] { depth_stats(m, BBox{0, 0, 11, 10}); }), ErrorCode::kOutOfBounds);
}

TEST(ReliabilityTest, PerfectRegion) {
  DepthStats s;
  s.valid_fraction = 1;
  s.dispersion = 0;
  s.top_decile_clean_fraction = 1;
  EXPECT_EQ(metric_reliability(s), (Reliability{true, true}));
}

TEST(ReliabilityTest, LowCoverage) {
  DepthStats s;
  s.valid_fraction = 0.1;
  s.top_decile_clean_fraction = 1;
  EXPECT_EQ(metric_reliability(s), (Reliability{false, false}));
}

TEST(ReliabilityTest, BimodalRegionKeepsOnlyP90) {
  // Half the pixels at 1, half at 10: CV = 4.5 / 5.5 > 0.5, the top decile
  // sits well inside Q3 + 1.5 IQR = 23.5.
  const DepthStats s = whole(hundred([](int i) { return i < 50 ? 1.0f : 10.0f; }));
  EXPECT_NEAR(s.dispersion, 4.5 / 5.5, 1e-9);
  EXPECT_DOUBLE_EQ(s.top_decile_clean_fraction, 1.0);
  EXPECT_EQ(metric_reliability(s), (Reliability{false, true}));
}

TEST(CompareDepthTest, CleanSeparation) {
  const DepthStats a = whole(make_map(10, 10, [](int, int) { return 1.0f; }));
  const DepthStats b = whole(make_map(10, 10, [](int, int) { return 2.0f; }));
  const auto ra = metric_reliability(a), rb = metric_reliability(b);
  EXPECT_EQ(compare_depth(a, b, ra, rb, 0.05), (DepthOrder{DepthOrderValue::kANearer, DepthClass::kA}));
  EXPECT_EQ(compare_depth(b, a, rb, ra, 0.05), (DepthOrder{DepthOrderValue::kBNearer, DepthClass::kA}));
}

TEST(CompareDepthTest, InconsistentMetricsAreClassD) {
  // A: ramp 1..3 (median 2, p90 2.8); B: ramp 2.4..2.6 (median 2.5, p90 2.58).
  const DepthStats a = whole(hundred([](int i) { return 1.0f + 2.0f * i / 99.0f; }));
  const DepthStats b = whole(hundred([](int i) { return 2.4f + 0.2f * i / 99.0f; }));
  const auto ra = metric_reliability(a), rb = metric_reliability(b);
  ASSERT_EQ(ra, (Reliability{true, true}));
  ASSERT_EQ(rb, (Reliability{true, true}));
  ASSERT_LT(a.median, b.median);
  ASSERT_GT(a.p90, b.p90);
  EXPECT_EQ(compare_depth(a, b, ra, rb), (DepthOrder{DepthOrderValue::kAmbiguous, DepthClass::kD}));
}

TEST(CompareDepthTest, OnlyMediansReliableIsClassB) {
  // 15% far outliers fill the top decile, so p90 is unusable on both.
  auto region = [](float base) {
    return hundred([base](int i) { return i < 85 ? base + 0.2f * i / 84.0f : base * 1.5f; });
  };
  const DepthStats a = whole(region(4.0f));
  const DepthStats b = whole(region(2.0f));
  const auto ra = metric_reliability(a), rb = metric_reliability(b);
  ASSERT_EQ(ra, (Reliability{true, false}));
  ASSERT_EQ(rb, (Reliability{true, false}));
  EXPECT_EQ(compare_depth(a, b, ra, rb), (DepthOrder{DepthOrderValue::kBNearer, DepthClass::kB}));
}

TEST(CompareDepthTest, OnlyP90ReliableIsClassC) {
  const DepthStats a = whole(hundred([](int i) { return i < 50 ? 1.0f : 10.0f; }));
  const DepthStats b = whole(hundred([](int i) { return i < 50 ? 2.0f : 20.0f; }));
  const auto ra = metric_reliability(a), rb = metric_reliability(b);
  EXPECT_EQ(compare_depth(a, b, ra, rb), (DepthOrder{DepthOrderValue::kANearer, DepthClass::kC}));
}

TEST(CompareDepthTest, TieWithinEpsilonIsClassD) {
  const DepthStats a = whole(make_map(10, 10, [](int, int) { return 5.0f; }));
  const DepthStats b = whole(make_map(10, 10, [](int, int) { return 5.05f; }));
  EXPECT_EQ(compare_depth(a, b, metric_reliability(a), metric_reliability(b)).quality, DepthClass::kD);
}

TEST(LeftRightTest, Separated) {
  EXPECT_EQ(left_right(BBox{0, 0, 100, 100}, BBox{200, 0, 300, 100}), LRRelation::kLeft);
  EXPECT_EQ(left_right(BBox{200, 0, 300, 100}, BBox{0, 0, 100, 100}), LRRelation::kRight);
}

TEST(LeftRightTest, OverlapIsAmbiguous) {
  EXPECT_EQ(left_right(BBox{0, 0, 150, 100}, BBox{100, 0, 300, 100}), LRRelation::kAmbiguous);
}

TEST(LeftRightTest, EqualBoxesAreAmbiguous) {
  EXPECT_EQ(left_right(BBox{10, 10, 50, 50}, BBox{10, 10, 50, 50}), LRRelation::kAmbiguous);
}

TEST(LeftRightTest, TouchingEdgesAreAmbiguous) {
  EXPECT_EQ(left_right(BBox{0, 0, 100, 100}, BBox{100, 0, 200, 100}), LRRelation::kAmbiguous);
}

TEST(LeftRightTest, VerticalPositionIgnored) {
  EXPECT_EQ(left_right(BBox{0, 500, 100, 600}, BBox{200, 0, 300, 100}), LRRelation::kLeft);
}

TEST(AllocentricTest, TruthTable) {
  EXPECT_EQ(to_allocentric(LRRelation::kLeft, Facing::kAway), LRRelation::kLeft);
  EXPECT_EQ(to_allocentric(LRRelation::kRight, Facing::kAway), LRRelation::kRight);
  EXPECT_EQ(to_allocentric(LRRelation::kLeft, Facing::kToward), LRRelation::kRight);
  EXPECT_EQ(to_allocentric(LRRelation::kRight, Facing::kToward), LRRelation::kLeft);
}

TEST(AllocentricTest, Involution) {
  EXPECT_EQ(to_allocentric(to_allocentric(LRRelation::kLeft, Facing::kToward), Facing::kToward), LRRelation::kLeft);
}

TEST(AllocentricTest, AmbiguousInputThrows) {
  EXPECT_EQ(code_of([] { to_allocentric(LRRelation::kAmbiguous, Facing::kAway); }), ErrorCode::kAmbiguousRelation);
}

TEST(FacingTest, Mapping) {
  EXPECT_EQ(map_facing("front"), Facing::kToward);
  EXPECT_EQ(map_facing("back"), Facing::kAway);
  EXPECT_FALSE(map_facing("three-quarter").has_value());
  EXPECT_FALSE(map_facing(FacingLabel::kSide).has_value());
  EXPECT_EQ(code_of([] { map_facing("sideways"); }), ErrorCode::kUnknownLabel);
}

TEST(DepthClassTest, Names) {
  EXPECT_EQ(depth_class_name(DepthClass::kC), "C");
  EXPECT_EQ(parse_depth_class("A"), DepthClass::kA);
  EXPECT_FALSE(parse_depth_class("E").has_value());
}

TEST(CanonicalizeTest, DecreasingIsInverted) {
  DepthMap m = make_map(3, 1, [](int x, int) { return static_cast<float>(x); });
  m.convention = DepthConvention::kDistanceDecreasing;
  const DepthMap c = canonicalize(m);
  EXPECT_EQ(c.convention, DepthConvention::kDistanceIncreasing);
  EXPECT_FALSE(c.valid(0, 0));  // v <= 0
  EXPECT_FLOAT_EQ(c.at(1, 0), 1.0f);
  EXPECT_FLOAT_EQ(c.at(2, 0), 0.5f);
  // Larger disparity = nearer = smaller canonical depth.
  EXPECT_LT(c.at(2, 0), c.at(1, 0));
}

TEST(DepthArtifactTest, RoundTrip) {
  DepthMap m = make_map(5, 3, [](int x, int y) { return static_cast<float>(x * 10 + y); });
  m.values[7] = std::numeric_limits<float>::quiet_NaN();
  const std::string path = ::testing::TempDir() + "/forge_depth_rt.pfm";
  write_depth_artifact(path, m);
  const DepthMap r = read_depth_artifact(path);
  ASSERT_EQ(r.width, 5);
  ASSERT_EQ(r.height, 3);
  for (size_t i = 0; i < m.values.size(); ++i) {
    if (i == 7) {
      EXPECT_TRUE(std::isnan(r.values[i]));
    } else {
      EXPECT_EQ(r.values[i], m.values[i]);
    }
  }
  EXPECT_EQ(read_depth_header(path).width, 5);
  EXPECT_EQ(code_of([] { read_depth_header("/nonexistent/depth.pfm"); }), ErrorCode::kMissingArtifact);
}
