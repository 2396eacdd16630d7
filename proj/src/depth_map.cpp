#include "forge/depth_map.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "forge/error.hpp"

namespace forge {

std::string_view convention_name(DepthConvention c) {
  return c == DepthConvention::kDistanceIncreasing ? "distance_increasing" : "distance_decreasing";
}

DepthConvention parse_convention(std::string_view text) {
  if (text == "distance_increasing") return DepthConvention::kDistanceIncreasing;
  if (text == "distance_decreasing") return DepthConvention::kDistanceDecreasing;
  throw Error(ErrorCode::kInvalidConfig, "unknown depth convention '" + std::string(text) + "'");
}

bool DepthMap::valid(int x, int y) const {
  const size_t i = static_cast<size_t>(y) * width + x;
  if (!valid_mask.empty() && !valid_mask[i]) return false;
  return std::isfinite(values[i]);
}

DepthMap canonicalize(DepthMap map) {
  if (map.values.size() != static_cast<size_t>(map.width) * map.height) {
    throw Error(ErrorCode::kDimensionMismatch, "depth grid size does not match width*height");
  }
  if (!map.valid_mask.empty() && map.valid_mask.size() != map.values.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "depth mask size does not match grid");
  }
  if (map.convention == DepthConvention::kDistanceIncreasing) return map;
  for (auto& v : map.values) {
    v = (std::isfinite(v) && v > 0.0f) ? 1.0f / v : std::numeric_limits<float>::quiet_NaN();
  }
  map.convention = DepthConvention::kDistanceIncreasing;
  return map;
}

void write_depth_artifact(const std::string& path, const DepthMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write depth artifact " + path);
  // Negative scale = little endian. PFM rows run bottom to top.
  out << "Pf\n" << map.width << " " << map.height << "\n-1.0\n";
  std::vector<float> row(map.width);
  for (int y = map.height - 1; y >= 0; --y) {
    for (int x = 0; x < map.width; ++x) {
      const size_t i = static_cast<size_t>(y) * map.width + x;
      const bool ok = map.valid_mask.empty() || map.valid_mask[i];
      row[x] = ok ? map.values[i] : std::numeric_limits<float>::quiet_NaN();
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw Error(ErrorCode::kIo, "short write on " + path);

  nlohmann::json header = {{"convention", std::string(convention_name(map.convention))},
                           {"width", map.width},
                           {"height", map.height},
                           {"format", "pfm"}};
  std::ofstream side(path + ".json");
  side << header.dump() << "\n";
  if (!side) throw Error(ErrorCode::kIo, "cannot write depth sidecar for " + path);
}

DepthArtifactHeader read_depth_header(const std::string& path) {
  std::ifstream side(path + ".json");
  if (!side) throw Error(ErrorCode::kMissingArtifact, "missing depth sidecar " + path + ".json");
  nlohmann::json j = nlohmann::json::parse(side, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("convention") || !j["convention"].is_string()) {
    throw Error(ErrorCode::kMissingArtifact, "depth sidecar lacks a convention tag: " + path);
  }
  DepthArtifactHeader h;
  h.convention = parse_convention(j["convention"].get<std::string>());
  h.width = j.value("width", 0);
  h.height = j.value("height", 0);
  return h;
}

DepthMap read_depth_artifact(const std::string& path) {
  const DepthArtifactHeader header = read_depth_header(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingArtifact, "missing depth artifact " + path);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0;
  in >> magic >> w >> h >> scale;
  in.get();
  if (magic != "Pf" || w <= 0 || h <= 0 || scale == 0) {
    throw Error(ErrorCode::kMissingArtifact, "not a single-channel PFM: " + path);
  }
  if ((header.width && header.width != w) || (header.height && header.height != h)) {
    throw Error(ErrorCode::kDimensionMismatch, "PFM dims disagree with sidecar: " + path);
  }
  DepthMap map;
  map.width = w;
  map.height = h;
  map.convention = header.convention;
  map.values.resize(static_cast<size_t>(w) * h);
  const bool swap = scale > 0;  // big-endian payload on a little-endian host
  in.read(reinterpret_cast<char*>(map.values.data()), static_cast<std::streamsize>(map.values.size() * sizeof(float)));
  if (!in) throw Error(ErrorCode::kMissingArtifact, "truncated PFM: " + path);
  // Rows arrive bottom to top.
  for (int y = 0; y < h / 2; ++y) {
    std::swap_ranges(map.values.begin() + static_cast<std::ptrdiff_t>(y) * w,
                     map.values.begin() + static_cast<std::ptrdiff_t>(y + 1) * w,
                     map.values.begin() + static_cast<std::ptrdiff_t>(h - 1 - y) * w);
  }
  if (swap) {
    for (auto& f : map.values) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      u = __builtin_bswap32(u);
      std::memcpy(&f, &u, 4);
    }
  }
  return map;
}

}  // namespace forge
