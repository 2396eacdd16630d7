#pragma once

#include <optional>
#include <span>
#include <string_view>

#include "forge/depth_map.hpp"
#include "forge/scene_model.hpp"

namespace forge {

// ---------------------------------------------------------------------------
// Box normalization and overlap
// ---------------------------------------------------------------------------

/// Maps pixel coordinates into [0, 1000] with x' = x / W * 1000 (y likewise),
/// rounding half-up. Throws kOutOfBounds if the box is not inside (W, H) and
/// kDegenerateBox if rounding collapses an edge.
NormalizedBBox normalize_bbox(const BBox& box, int width, int height);
/// Inverse mapping back to pixels (no rounding).
BBox denormalize_bbox(const NormalizedBBox& box, int width, int height);

double bbox_iou(const BBox& a, const BBox& b);
double bbox_iou(const NormalizedBBox& a, const NormalizedBBox& b);

// ---------------------------------------------------------------------------
// Region depth statistics
// ---------------------------------------------------------------------------

struct DepthStats {
  double median = 0;
  double p90 = 0;
  double valid_fraction = 0;
  /// Coefficient of variation (population std / |mean|) of the valid pixels.
  double dispersion = 0;
  /// Share of the region's top decile (ceil(0.1 * region pixels) slots) filled
  /// by valid values inside the upper Tukey fence. Masked pixels and far
  /// outliers both count against it.
  double top_decile_clean_fraction = 0;
};

struct DepthStatsOptions {
  /// Upper fence = Q3 + k * IQR.
  double outlier_fence_k = 1.5;
};

/// Percentile with linear interpolation between order statistics:
/// position (n - 1) * p, interpolated between floor and ceil. `sorted` must be
/// ascending and non-empty; p in [0, 1].
double percentile_linear(std::span<const double> sorted, double p);

/// Stats over valid pixels whose centers lie in the box (x_min <= cx < x_max).
/// Throws kEmptyRegion when no valid pixel remains and kOutOfBounds when the
/// box exceeds the map.
DepthStats depth_stats(const DepthMap& map, const BBox& box, const DepthStatsOptions& options = {});

struct ReliabilityThresholds {
  double min_valid_fraction = 0.5;
  double max_dispersion = 0.5;
};

struct Reliability {
  bool median = false;
  bool p90 = false;
  bool operator==(const Reliability&) const = default;
};

/// median: valid_fraction >= f_min and dispersion <= v_max.
/// p90:    valid_fraction >= f_min and top_decile_clean_fraction >= f_min.
Reliability metric_reliability(const DepthStats& stats, const ReliabilityThresholds& thresholds = {});

// ---------------------------------------------------------------------------
// Pairwise relations
// ---------------------------------------------------------------------------

enum class DepthOrderValue { kANearer, kBNearer, kAmbiguous };
enum class DepthClass { kA, kB, kC, kD };

std::string_view depth_class_name(DepthClass c);  // "A".."D"
std::optional<DepthClass> parse_depth_class(std::string_view text);

struct DepthOrder {
  DepthOrderValue value = DepthOrderValue::kAmbiguous;
  DepthClass quality = DepthClass::kD;
  bool operator==(const DepthOrder&) const = default;
};

/// Ordinal near/far decision from two regions' stats. Smaller = nearer.
///   A: both metrics usable on both objects, both separated by more than
///      epsilon * (mean of the pair) and agreeing.
///   B: only the median usable and separated.
///   C: only p90 usable and separated.
///   D: anything else (disagreement, ties within epsilon, nothing usable).
DepthOrder compare_depth(const DepthStats& a, const DepthStats& b, const Reliability& ra,
                         const Reliability& rb, double epsilon = 0.02);

enum class LRRelation { kLeft, kRight, kAmbiguous };
std::string_view relation_name(LRRelation r);  // "left" / "right" / "ambiguous"

/// Dual-anchor rule: Left iff c_A < c_B and A's right edge is strictly left of
/// B's left edge; Right symmetrically; otherwise Ambiguous. y is ignored.
LRRelation left_right(const BBox& a, const BBox& b);

enum class Facing { kToward, kAway };
std::string_view facing_name(Facing f);  // "toward" / "away"

/// Egocentric -> person-centric relation. Away keeps the relation, Toward
/// mirrors it. Throws kAmbiguousRelation on Ambiguous input.
LRRelation to_allocentric(LRRelation egocentric, Facing facing);

/// front -> Toward, back -> Away, every other label -> nullopt.
std::optional<Facing> map_facing(FacingLabel label);
/// String form; throws kUnknownLabel outside the closed label set.
std::optional<Facing> map_facing(std::string_view label);

}  // namespace forge
