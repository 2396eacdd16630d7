#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forge/scene_model.hpp"

namespace forge {

/// 8-bit raster, 1 (gray) or 3 (RGB) interleaved channels, row-major.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;

  /// Rec.601 luma in [0, 255].
  double luminance(int x, int y) const;
};

/// Reads binary PGM (P5) or PPM (P6) with maxval 255. Throws kUndecodableRaster.
Raster read_raster(const std::string& path);
void write_raster(const std::string& path, const Raster& raster);

enum class DropReason { kNone, kResolution, kExposure, kSharpness, kSemantic, kAspect, kArea };
std::string_view drop_reason_name(DropReason reason);

struct QualityThresholds {
  /// Variance of the 4-neighbour Laplacian of luma (0..255 scale).
  double min_sharpness = 100.0;
  /// Luma band edges as fractions of 255; pixels outside the band are clipped.
  double clip_low = 0.02;
  double clip_high = 0.98;
  /// Minimum share of pixels inside the band.
  double min_exposure = 0.5;
  int min_resolution = 64;
};

struct QualityReport {
  double sharpness_score = 0;
  /// Fraction of pixels whose luma lies within [clip_low, clip_high].
  double exposure_score = 0;
  bool resolution_ok = false;
  /// kNone means Keep. Checks run resolution, exposure, sharpness; the first
  /// failing check is the reported reason.
  DropReason verdict = DropReason::kNone;

  bool keep() const { return verdict == DropReason::kNone; }
};

/// Throws kUndecodableRaster for an empty or inconsistent raster.
QualityReport assess_image_quality(const Raster& raster, const QualityThresholds& thresholds = {});

struct SemanticAnchorSet {
  std::vector<std::string> positive_anchors;
  std::vector<std::string> negative_anchors;
  double margin = 0.0;
};

/// Keep iff max cosine to a positive anchor exceeds max cosine to a negative
/// anchor by at least the margin. `anchor_embeddings` maps anchor text to its
/// vector. Throws kDimensionMismatch, kZeroVector, kMissingField (anchor
/// without embedding) or kInvalidConfig (empty anchor list).
bool semantic_filter(std::span<const double> image_embedding,
                     const std::map<std::string, std::vector<double>>& anchor_embeddings,
                     const SemanticAnchorSet& anchors);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Drop iff width/height lies outside [1/3, 3] (kAspect) or the area is below
/// 100^2 pixels (kArea). Bounds are inclusive.
DropReason filter_bbox(const BBox& box, const ImageRef& image);

struct CategoryHistogram {
  std::map<std::string, long long> counts;
  std::set<std::string> overrepresented;

  void add(const std::string& category, long long n = 1) { counts[category] += n; }
};

/// Categories downsampled by default.
std::set<std::string> default_overrepresented_categories();

/// Independent keep/drop decision for one object of an overrepresented
/// category, derived from (seed, source_dataset, image_id, object_id) so the
/// outcome does not depend on processing order.
bool rebalance_keep(const ImageRef& image, int object_id, double keep_rate, std::uint64_t seed);

/// Filters a stream of objects from one image. Objects outside the
/// overrepresented set pass through untouched. keep_rate must be in (0, 1].
std::vector<SceneObject> rebalance_categories(const ImageRef& image, std::vector<SceneObject> objects,
                                              const CategoryHistogram& hist, double keep_rate,
                                              std::uint64_t seed);

}  // namespace forge
