#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

enum class DepthConvention {
  kDistanceIncreasing,  // larger value = farther (metric or relative depth)
  kDistanceDecreasing,  // larger value = nearer (disparity, inverse depth)
};

std::string_view convention_name(DepthConvention c);
/// Accepts "distance_increasing" / "distance_decreasing"; throws kInvalidConfig.
DepthConvention parse_convention(std::string_view text);

/// Dense row-major depth grid. An empty valid_mask means every pixel is valid;
/// non-finite values are always treated as invalid.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;
  DepthConvention convention = DepthConvention::kDistanceIncreasing;
  std::vector<std::uint8_t> valid_mask;

  float at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
  bool valid(int x, int y) const;
};

/// Rewrites a map into the DistanceIncreasing convention. Decreasing maps are
/// inverted (v -> 1/v); pixels with v <= 0 become invalid.
DepthMap canonicalize(DepthMap map);

struct DepthArtifactHeader {
  int width = 0;
  int height = 0;
  DepthConvention convention = DepthConvention::kDistanceIncreasing;
};

/// Depth artifacts are single-channel PFM rasters ("Pf") with a JSON sidecar
/// "<path>.json" carrying {"convention", "width", "height"}. NaN marks invalid
/// pixels.
void write_depth_artifact(const std::string& path, const DepthMap& map);
DepthMap read_depth_artifact(const std::string& path);
/// Reads only the sidecar header; throws kMissingArtifact when absent.
DepthArtifactHeader read_depth_header(const std::string& path);

}  // namespace forge
