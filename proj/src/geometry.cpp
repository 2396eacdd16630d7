#include "forge/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "forge/error.hpp"

namespace forge {
namespace {

int normalize_coord(double v, int extent) {
  const double scaled = v * 1000.0 / extent;
  const int r = static_cast<int>(std::floor(scaled + 0.5));
  return std::clamp(r, 0, 1000);
}

template <typename Box>
double iou_impl(const Box& a, const Box& b) {
  const double ix = std::max(0.0, static_cast<double>(std::min(a.x_max, b.x_max)) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, static_cast<double>(std::min(a.y_max, b.y_max)) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  const double area_a = static_cast<double>(a.x_max - a.x_min) * (a.y_max - a.y_min);
  const double area_b = static_cast<double>(b.x_max - b.x_min) * (b.y_max - b.y_min);
  const double uni = area_a + area_b - inter;
  if (uni <= 0) return 0.0;
  return inter / uni;
}

// -1: a smaller than b by more than margin, +1: larger, 0: within margin.
int separated_sign(double a, double b, double epsilon) {
  const double margin = epsilon * 0.5 * (std::fabs(a) + std::fabs(b));
  if (b - a > margin) return -1;
  if (a - b > margin) return 1;
  return 0;
}

// First pixel index whose center (i + 0.5) is >= edge.
int first_center_at_or_after(double edge) { return static_cast<int>(std::ceil(edge - 0.5)); }

}  // namespace

NormalizedBBox normalize_bbox(const BBox& b, int width, int height) {
  if (width < 1 || height < 1 || !b.valid_within(width, height)) {
    throw Error(ErrorCode::kOutOfBounds, "normalize_bbox: box outside image bounds");
  }
  NormalizedBBox n{normalize_coord(b.x_min, width), normalize_coord(b.y_min, height),
                   normalize_coord(b.x_max, width), normalize_coord(b.y_max, height)};
  if (n.x_min >= n.x_max || n.y_min >= n.y_max) {
    throw Error(ErrorCode::kDegenerateBox, "normalize_bbox: box collapses after rounding");
  }
  return n;
}

BBox denormalize_bbox(const NormalizedBBox& n, int width, int height) {
  return BBox{n.x_min * width / 1000.0, n.y_min * height / 1000.0, n.x_max * width / 1000.0,
              n.y_max * height / 1000.0};
}

double bbox_iou(const BBox& a, const BBox& b) { return iou_impl(a, b); }
double bbox_iou(const NormalizedBBox& a, const NormalizedBBox& b) { return iou_impl(a, b); }

double percentile_linear(std::span<const double> sorted, double p) {
  const double pos = (static_cast<double>(sorted.size()) - 1.0) * p;
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

DepthStats depth_stats(const DepthMap& map, const BBox& box, const DepthStatsOptions& options) {
  if (!box.valid_within(map.width, map.height)) {
    throw Error(ErrorCode::kOutOfBounds, "depth_stats: box outside depth map");
  }
  const int x0 = std::max(0, first_center_at_or_after(box.x_min));
  const int x1 = std::min(map.width, first_center_at_or_after(box.x_max));
  const int y0 = std::max(0, first_center_at_or_after(box.y_min));
  const int y1 = std::min(map.height, first_center_at_or_after(box.y_max));
  const long long total = static_cast<long long>(std::max(0, x1 - x0)) * std::max(0, y1 - y0);

  thread_local std::vector<float> vals;
  if (vals.size() < static_cast<size_t>(std::max(0LL, total))) vals.resize(static_cast<size_t>(total));
  size_t n = 0;
  double sum = 0;
  const bool masked = !map.valid_mask.empty();
  float* out = vals.data();
  for (int y = y0; y < y1; ++y) {
    const size_t row = static_cast<size_t>(y) * map.width;
    const float* src = map.values.data() + row;
    for (int x = x0; x < x1; ++x) {
      const float v = src[x];
      const bool ok = std::isfinite(v) && (!masked || map.valid_mask[row + x]);
      out[n] = v;
      n += ok;
      sum += ok ? v : 0.0;
    }
  }
  if (n == 0) throw Error(ErrorCode::kEmptyRegion, "depth_stats: no valid pixels in region");

  const double mean = sum / static_cast<double>(n);
  double sq = 0;
  for (size_t i = 0; i < n; ++i) sq += (vals[i] - mean) * (vals[i] - mean);
  const double sd = std::sqrt(sq / static_cast<double>(n));

  // Selection instead of a full sort: each quantile needs the order statistics
  // at floor(pos) and floor(pos) + 1 only. The median splits the buffer into
  // a lower block [0, r_med) and an upper block (r_med, n); q1 is selected in
  // the lower block, q3 and then p90 in the upper one.
  auto rank = [&](double p) { return static_cast<size_t>(std::floor((static_cast<double>(n) - 1.0) * p)); };
  auto nth = [&](size_t begin, size_t k, size_t end) {
    std::nth_element(vals.begin() + static_cast<std::ptrdiff_t>(begin), vals.begin() + static_cast<std::ptrdiff_t>(k),
                     vals.begin() + static_cast<std::ptrdiff_t>(end));
  };
  auto min_of = [&](size_t begin, size_t end) {
    return static_cast<double>(*std::min_element(vals.begin() + static_cast<std::ptrdiff_t>(begin),
                                                 vals.begin() + static_cast<std::ptrdiff_t>(end)));
  };
  struct Pair {
    double a;
    double b;
  };
  auto interp = [&](double p, const Pair& v) {
    const double pos = (static_cast<double>(n) - 1.0) * p;
    return v.a + (pos - std::floor(pos)) * (v.b - v.a);
  };

  const size_t r_med = rank(0.5);
  const size_t r_q1 = rank(0.25);
  const size_t r_q3 = rank(0.75);
  const size_t r_p90 = rank(0.9);
  nth(0, r_med, n);
  const Pair med{vals[r_med], r_med + 1 < n ? min_of(r_med + 1, n) : static_cast<double>(vals[r_med])};
  Pair p1 = med;
  if (r_q1 < r_med) {
    nth(0, r_q1, r_med);
    p1 = {vals[r_q1], r_q1 + 1 < r_med ? min_of(r_q1 + 1, r_med) : med.a};
  }
  Pair p3 = med;
  if (r_q3 > r_med) {
    nth(r_med + 1, r_q3, n);
    p3 = {vals[r_q3], r_q3 + 1 < n ? min_of(r_q3 + 1, n) : static_cast<double>(vals[r_q3])};
  }
  Pair p9 = p3;
  if (r_p90 > r_q3) {
    nth(r_q3 + 1, r_p90, n);
    p9 = {vals[r_p90], r_p90 + 1 < n ? min_of(r_p90 + 1, n) : static_cast<double>(vals[r_p90])};
  }

  DepthStats s;
  s.valid_fraction = static_cast<double>(n) / static_cast<double>(total);
  s.dispersion = (mean == 0.0) ? (sd == 0.0 ? 0.0 : std::numeric_limits<double>::infinity())
                               : sd / std::fabs(mean);
  s.median = interp(0.5, med);
  const double q1 = interp(0.25, p1);
  const double q3 = interp(0.75, p3);
  s.p90 = interp(0.9, p9);

  const double fence = q3 + options.outlier_fence_k * (q3 - q1);
  size_t high_outliers = 0;
  for (size_t i = 0; i < n; ++i) high_outliers += (vals[i] > fence) ? 1 : 0;
  const size_t top_slots = static_cast<size_t>(std::max<long long>(1, (total + 9) / 10));
  const size_t filled = std::min(top_slots, n);
  const size_t clean = filled - std::min(high_outliers, filled);
  s.top_decile_clean_fraction = static_cast<double>(clean) / static_cast<double>(top_slots);
  return s;
}

Reliability metric_reliability(const DepthStats& s, const ReliabilityThresholds& t) {
  const bool coverage = s.valid_fraction >= t.min_valid_fraction;
  return Reliability{coverage && s.dispersion <= t.max_dispersion,
                     coverage && s.top_decile_clean_fraction >= t.min_valid_fraction};
}

std::string_view depth_class_name(DepthClass c) {
  switch (c) {
    case DepthClass::kA: return "A";
    case DepthClass::kB: return "B";
    case DepthClass::kC: return "C";
    case DepthClass::kD: return "D";
  }
  return "D";
}

std::optional<DepthClass> parse_depth_class(std::string_view text) {
  if (text == "A") return DepthClass::kA;
  if (text == "B") return DepthClass::kB;
  if (text == "C") return DepthClass::kC;
  if (text == "D") return DepthClass::kD;
  return std::nullopt;
}

DepthOrder compare_depth(const DepthStats& a, const DepthStats& b, const Reliability& ra,
                         const Reliability& rb, double epsilon) {
  const bool med_usable = ra.median && rb.median;
  const bool p90_usable = ra.p90 && rb.p90;
  const int med = separated_sign(a.median, b.median, epsilon);
  const int p90 = separated_sign(a.p90, b.p90, epsilon);
  auto value_of = [](int sign) { return sign < 0 ? DepthOrderValue::kANearer : DepthOrderValue::kBNearer; };

  if (med_usable && p90_usable) {
    if (med != 0 && med == p90) return {value_of(med), DepthClass::kA};
    return {DepthOrderValue::kAmbiguous, DepthClass::kD};
  }
  if (med_usable && med != 0) return {value_of(med), DepthClass::kB};
  if (p90_usable && p90 != 0) return {value_of(p90), DepthClass::kC};
  return {DepthOrderValue::kAmbiguous, DepthClass::kD};
}

std::string_view relation_name(LRRelation r) {
  switch (r) {
    case LRRelation::kLeft: return "left";
    case LRRelation::kRight: return "right";
    case LRRelation::kAmbiguous: return "ambiguous";
  }
  return "ambiguous";
}

LRRelation left_right(const BBox& a, const BBox& b) {
  const double ca = a.center_x();
  const double cb = b.center_x();
  if (ca < cb && a.x_max < b.x_min) return LRRelation::kLeft;
  if (ca > cb && b.x_max < a.x_min) return LRRelation::kRight;
  return LRRelation::kAmbiguous;
}

std::string_view facing_name(Facing f) { return f == Facing::kToward ? "toward" : "away"; }

LRRelation to_allocentric(LRRelation egocentric, Facing facing) {
  if (egocentric == LRRelation::kAmbiguous) {
    throw Error(ErrorCode::kAmbiguousRelation, "to_allocentric: ambiguous egocentric relation");
  }
  if (facing == Facing::kAway) return egocentric;
  return egocentric == LRRelation::kLeft ? LRRelation::kRight : LRRelation::kLeft;
}

std::optional<Facing> map_facing(FacingLabel label) {
  switch (label) {
    case FacingLabel::kFront: return Facing::kToward;
    case FacingLabel::kBack: return Facing::kAway;
    default: return std::nullopt;
  }
}

std::optional<Facing> map_facing(std::string_view label) { return map_facing(parse_facing_label(label)); }

}  // namespace forge
