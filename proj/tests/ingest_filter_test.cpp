#include "forge/ingest_filter.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "forge/error.hpp"

using namespace forge;

namespace {

Raster gray(int w, int h, std::uint8_t v) {
  Raster r{w, h, 1, {}};
  r.data.assign(static_cast<size_t>(w) * h, v);
  return r;
}

Raster checkerboard(int n, std::uint8_t lo, std::uint8_t hi) {
  Raster r = gray(n, n, lo);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if ((x + y) % 2) r.data[static_cast<size_t>(y) * n + x] = hi;
    }
  }
  return r;
}

const ImageRef kImage{"coco", "img-0", 1000, 1000, "img-0.jpg", std::nullopt};

SceneObject object_of(int id, const std::string& category) {
  SceneObject o;
  o.object_id = id;
  o.category = category;
  o.bbox = {0, 0, 200, 200};
  return o;
}

}  // namespace

TEST(QualityTest, AllBlackIsUnderexposed) {
  const QualityReport r = assess_image_quality(gray(512, 512, 0));
  EXPECT_EQ(r.verdict, DropReason::kExposure);
  EXPECT_DOUBLE_EQ(r.exposure_score, 0.0);
  EXPECT_DOUBLE_EQ(r.sharpness_score, 0.0);
}

TEST(QualityTest, TinyRasterFailsResolution) {
  QualityThresholds t;
  t.min_resolution = 64;
  EXPECT_EQ(assess_image_quality(checkerboard(8, 64, 192), t).verdict, DropReason::kResolution);
}

TEST(QualityTest, CheckerboardIsSharp) {
  // Every interior Laplacian is 4 * 192 - 4 * 64 = 512 or its negative, so
  // the variance is 512^2 and every pixel lies inside the exposure band.
  const QualityReport r = assess_image_quality(checkerboard(512, 64, 192));
  EXPECT_EQ(r.verdict, DropReason::kNone);
  EXPECT_DOUBLE_EQ(r.sharpness_score, 512.0 * 512.0);
  EXPECT_DOUBLE_EQ(r.exposure_score, 1.0);
}

TEST(QualityTest, FlatMidGrayIsBlurry) {
  EXPECT_EQ(assess_image_quality(gray(128, 128, 128)).verdict, DropReason::kSharpness);
}

TEST(QualityTest, RgbMatchesGrayForNeutralPixels) {
  const Raster g = checkerboard(96, 70, 180);
  Raster rgb{96, 96, 3, {}};
  for (auto v : g.data) rgb.data.insert(rgb.data.end(), {v, v, v});
  const auto a = assess_image_quality(g);
  const auto b = assess_image_quality(rgb);
  EXPECT_NEAR(a.sharpness_score, b.sharpness_score, 1e-6 * a.sharpness_score);
  EXPECT_DOUBLE_EQ(a.exposure_score, b.exposure_score);
}

TEST(QualityTest, InconsistentRasterThrows) {
  Raster r = gray(10, 10, 5);
  r.data.pop_back();
  EXPECT_THROW(assess_image_quality(r), Error);
}

TEST(RasterTest, PgmRoundTrip) {
  const Raster r = checkerboard(17, 3, 250);
  const std::string path = ::testing::TempDir() + "/forge_raster.pgm";
  write_raster(path, r);
  const Raster back = read_raster(path);
  EXPECT_EQ(back.width, 17);
  EXPECT_EQ(back.data, r.data);
  EXPECT_THROW(read_raster("/nonexistent.pgm"), Error);
}

TEST(SemanticTest, PositiveAnchorKeeps) {
  const std::map<std::string, std::vector<double>> emb = {{"street", {1, 0}}, {"text document", {0, 1}}};
  const SemanticAnchorSet anchors{{"street"}, {"text document"}, 0.0};
  const std::vector<double> image = {1, 0};
  EXPECT_TRUE(semantic_filter(image, emb, anchors));
}

TEST(SemanticTest, NegativeAnchorDrops) {
  const std::map<std::string, std::vector<double>> emb = {{"street", {1, 0}}, {"text document", {0, 1}}};
  const SemanticAnchorSet anchors{{"street"}, {"text document"}, 0.0};
  const std::vector<double> image = {0, 3};
  EXPECT_FALSE(semantic_filter(image, emb, anchors));
}

TEST(SemanticTest, HalfwayFailsMargin) {
  // cos 45 degrees to both anchors: difference 0 < 0.05.
  const std::map<std::string, std::vector<double>> emb = {{"p", {1, 0}}, {"n", {0, 1}}};
  const std::vector<double> image = {1, 1};
  EXPECT_FALSE(semantic_filter(image, emb, {{"p"}, {"n"}, 0.05}));
  EXPECT_NEAR(cosine_similarity(image, emb.at("p")), std::sqrt(0.5), 1e-12);
}

TEST(SemanticTest, Errors) {
  const std::map<std::string, std::vector<double>> emb = {{"p", {1, 0}}, {"n", {0, 1}}};
  const std::vector<double> three = {1, 0, 0};
  const std::vector<double> zero = {0, 0};
  EXPECT_THROW(semantic_filter(three, emb, {{"p"}, {"n"}, 0.0}), Error);
  EXPECT_THROW(semantic_filter(zero, emb, {{"p"}, {"n"}, 0.0}), Error);
  EXPECT_THROW(semantic_filter(std::vector<double>{1, 0}, emb, {{"missing"}, {"n"}, 0.0}), Error);
  EXPECT_THROW(semantic_filter(std::vector<double>{1, 0}, emb, {{}, {"n"}, 0.0}), Error);
}

TEST(BBoxFilterTest, AspectBelowThird) {
  EXPECT_EQ(filter_bbox({0, 0, 50, 200}, kImage), DropReason::kAspect);
}

TEST(BBoxFilterTest, AreaBoundaryIsInclusive) {
  EXPECT_EQ(filter_bbox({0, 0, 100, 100}, kImage), DropReason::kNone);
  EXPECT_EQ(filter_bbox({0, 0, 99, 99}, kImage), DropReason::kArea);
}

TEST(BBoxFilterTest, RatioBoundsAreInclusive) {
  EXPECT_EQ(filter_bbox({0, 0, 300, 100}, kImage), DropReason::kNone);
  EXPECT_EQ(filter_bbox({0, 0, 100, 300}, kImage), DropReason::kNone);
  EXPECT_EQ(filter_bbox({0, 0, 301, 100}, kImage), DropReason::kAspect);
  EXPECT_EQ(filter_bbox({0, 0, 100, 301}, kImage), DropReason::kAspect);
}

TEST(RebalanceTest, OtherCategoriesPassThrough) {
  CategoryHistogram hist;
  hist.overrepresented = default_overrepresented_categories();
  std::vector<SceneObject> objs;
  for (int i = 1; i <= 100; ++i) objs.push_back(object_of(i, "dog"));
  EXPECT_EQ(rebalance_categories(kImage, objs, hist, 0.1, 42).size(), 100u);
}

TEST(RebalanceTest, GoldenKeptCount) {
  // Frozen from tools/oracles/seeded.py (independent re-implementation).
  CategoryHistogram hist;
  hist.overrepresented = default_overrepresented_categories();
  std::vector<SceneObject> objs;
  for (int i = 1; i <= 1000; ++i) objs.push_back(object_of(i, "sky"));
  EXPECT_EQ(rebalance_categories(kImage, objs, hist, 0.10, 42).size(), 101u);
}

TEST(RebalanceTest, FullRateKeepsAll) {
  CategoryHistogram hist;
  hist.overrepresented = {"sky"};
  std::vector<SceneObject> objs;
  for (int i = 1; i <= 50; ++i) objs.push_back(object_of(i, "sky"));
  EXPECT_EQ(rebalance_categories(kImage, objs, hist, 1.0, 42).size(), 50u);
}

TEST(RebalanceTest, DecisionIndependentOfOrder) {
  CategoryHistogram hist;
  hist.overrepresented = {"tree"};
  std::vector<SceneObject> objs;
  for (int i = 1; i <= 200; ++i) objs.push_back(object_of(i, "tree"));
  auto forward = rebalance_categories(kImage, objs, hist, 0.3, 5);
  std::reverse(objs.begin(), objs.end());
  auto backward = rebalance_categories(kImage, objs, hist, 0.3, 5);
  std::reverse(backward.begin(), backward.end());
  EXPECT_EQ(forward, backward);
}

TEST(RebalanceTest, InvalidRateThrows) {
  CategoryHistogram hist;
  EXPECT_THROW(rebalance_categories(kImage, {}, hist, 0.0, 1), Error);
}
