#include "forge/ingest_filter.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <type_traits>

#include "forge/error.hpp"
#include "forge/random.hpp"

namespace forge {
namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {}
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

std::vector<float> luma_plane(const Raster& r) {
  std::vector<float> luma(static_cast<size_t>(r.width) * r.height);
  if (r.channels == 1) {
    for (size_t i = 0; i < luma.size(); ++i) luma[i] = r.data[i];
  } else {
    for (size_t i = 0; i < luma.size(); ++i) {
      const std::uint8_t* p = &r.data[i * 3];
      luma[i] = static_cast<float>(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]);
    }
  }
  return luma;
}


struct LumaScores {
  double exposure = 0;
  double sharpness = 0;
};

// Exposure = share of pixels with luma in [lo, hi]; sharpness = variance of
// the 4-neighbour Laplacian over interior pixels.
template <typename T>
LumaScores luma_scores(const T* luma, int w, int h, double lo, double hi) {
  using Acc = std::conditional_t<std::is_integral_v<T>, long long, double>;
  using Lap = std::conditional_t<std::is_integral_v<T>, int, double>;
  const size_t n = static_cast<size_t>(w) * h;
  LumaScores out;
  size_t in_band = 0;
  if constexpr (std::is_integral_v<T>) {
    const int ilo = static_cast<int>(std::ceil(lo));
    const int ihi = static_cast<int>(std::floor(hi));
    for (size_t i = 0; i < n; ++i) in_band += (luma[i] >= ilo && luma[i] <= ihi) ? 1 : 0;
  } else {
    for (size_t i = 0; i < n; ++i) in_band += (luma[i] >= lo && luma[i] <= hi) ? 1 : 0;
  }
  out.exposure = static_cast<double>(in_band) / static_cast<double>(n);

  Acc sum = 0;
  Acc sum_sq = 0;
  for (int y = 1; y + 1 < h; ++y) {
    const T* row = luma + static_cast<size_t>(y) * w;
    const T* up = row - w;
    const T* down = row + w;
    // |lap| <= 1020, so 1024-pixel chunks keep int sums (and lap^2 sums)
    // inside 32 bits; the narrow accumulators let the loop vectorize.
    for (int x0 = 1; x0 + 1 < w; x0 += 1024) {
      const int x1 = std::min(w - 1, x0 + 1024);
      Lap chunk = 0;
      Lap chunk_sq = 0;
      for (int x = x0; x < x1; ++x) {
        const Lap lap = static_cast<Lap>(up[x]) + down[x] + row[x - 1] + row[x + 1] - 4 * static_cast<Lap>(row[x]);
        chunk += lap;
        chunk_sq += lap * lap;
      }
      sum += chunk;
      sum_sq += chunk_sq;
    }
  }
  const size_t count = static_cast<size_t>(std::max(0, w - 2)) * std::max(0, h - 2);
  if (count > 0) {
    const double mean = static_cast<double>(sum) / static_cast<double>(count);
    out.sharpness = std::max(0.0, static_cast<double>(sum_sq) / static_cast<double>(count) - mean * mean);
  }
  return out;
}

}  // namespace

double Raster::luminance(int x, int y) const {
  const size_t i = (static_cast<size_t>(y) * width + x) * channels;
  if (channels == 1) return data[i];
  return 0.299 * data[i] + 0.587 * data[i + 1] + 0.114 * data[i + 2];
}

Raster read_raster(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kUndecodableRaster, "cannot open raster " + path);
  const std::string magic = next_token(in);
  Raster r;
  if (magic == "P5") {
    r.channels = 1;
  } else if (magic == "P6") {
    r.channels = 3;
  } else {
    throw Error(ErrorCode::kUndecodableRaster, "unsupported raster format in " + path);
  }
  try {
    r.width = std::stoi(next_token(in));
    r.height = std::stoi(next_token(in));
    const int maxval = std::stoi(next_token(in));
    if (maxval != 255) throw Error(ErrorCode::kUndecodableRaster, "only 8-bit rasters are supported: " + path);
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::kUndecodableRaster, "bad raster header in " + path);
  }
  if (r.width < 1 || r.height < 1) throw Error(ErrorCode::kUndecodableRaster, "empty raster " + path);
  r.data.resize(static_cast<size_t>(r.width) * r.height * r.channels);
  in.read(reinterpret_cast<char*>(r.data.data()), static_cast<std::streamsize>(r.data.size()));
  if (!in) throw Error(ErrorCode::kUndecodableRaster, "truncated raster " + path);
  return r;
}

void write_raster(const std::string& path, const Raster& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write raster " + path);
  out << (r.channels == 1 ? "P5" : "P6") << "\n" << r.width << " " << r.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(r.data.data()), static_cast<std::streamsize>(r.data.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write on " + path);
}

std::string_view drop_reason_name(DropReason reason) {
  switch (reason) {
    case DropReason::kNone: return "keep";
    case DropReason::kResolution: return "resolution";
    case DropReason::kExposure: return "exposure";
    case DropReason::kSharpness: return "sharpness";
    case DropReason::kSemantic: return "semantic";
    case DropReason::kAspect: return "aspect";
    case DropReason::kArea: return "area";
  }
  return "unknown";
}

QualityReport assess_image_quality(const Raster& r, const QualityThresholds& t) {
  if (r.width < 1 || r.height < 1 || (r.channels != 1 && r.channels != 3) ||
      r.data.size() != static_cast<size_t>(r.width) * r.height * r.channels) {
    throw Error(ErrorCode::kUndecodableRaster, "raster dimensions do not match its buffer");
  }
  QualityReport report;
  report.resolution_ok = std::min(r.width, r.height) >= t.min_resolution;
  const double lo = t.clip_low * 255.0;
  const double hi = t.clip_high * 255.0;
  // Gray input stays integral (exact, and vectorizes); RGB goes through luma.
  const LumaScores scores = r.channels == 1 ? luma_scores(r.data.data(), r.width, r.height, lo, hi)
                                            : luma_scores(luma_plane(r).data(), r.width, r.height, lo, hi);
  report.exposure_score = scores.exposure;
  report.sharpness_score = scores.sharpness;

  if (!report.resolution_ok) {
    report.verdict = DropReason::kResolution;
  } else if (report.exposure_score < t.min_exposure) {
    report.verdict = DropReason::kExposure;
  } else if (report.sharpness_score < t.min_sharpness) {
    report.verdict = DropReason::kSharpness;
  }
  return report;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw Error(ErrorCode::kDimensionMismatch, "embedding dimensions differ");
  }
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) throw Error(ErrorCode::kZeroVector, "zero-norm embedding");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

bool semantic_filter(std::span<const double> image_embedding,
                     const std::map<std::string, std::vector<double>>& anchor_embeddings,
                     const SemanticAnchorSet& anchors) {
  if (anchors.positive_anchors.empty() || anchors.negative_anchors.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "semantic anchors: both lists must be non-empty");
  }
  auto best = [&](const std::vector<std::string>& names) {
    double m = -2.0;
    for (const auto& name : names) {
      auto it = anchor_embeddings.find(name);
      if (it == anchor_embeddings.end()) {
        throw Error(ErrorCode::kMissingField, "no embedding for anchor '" + name + "'");
      }
      m = std::max(m, cosine_similarity(image_embedding, it->second));
    }
    return m;
  };
  return best(anchors.positive_anchors) - best(anchors.negative_anchors) >= anchors.margin;
}

DropReason filter_bbox(const BBox& box, const ImageRef&) {
  const double w = box.width();
  const double h = box.height();
  // 1/3 <= w/h <= 3 evaluated without division.
  if (3.0 * w < h || w > 3.0 * h) return DropReason::kAspect;
  if (w * h < 100.0 * 100.0) return DropReason::kArea;
  return DropReason::kNone;
}

std::set<std::string> default_overrepresented_categories() {
  return {"sky", "tree", "window", "table", "floor"};
}

bool rebalance_keep(const ImageRef& image, int object_id, double keep_rate, std::uint64_t seed) {
  if (keep_rate >= 1.0) return true;
  const std::string id = std::to_string(object_id);
  const std::uint64_t h = derive_seed(seed, {"rebalance", image.source_dataset, image.image_id, id});
  return unit_interval(h) < keep_rate;
}

std::vector<SceneObject> rebalance_categories(const ImageRef& image, std::vector<SceneObject> objects,
                                              const CategoryHistogram& hist, double keep_rate,
                                              std::uint64_t seed) {
  if (!(keep_rate > 0.0 && keep_rate <= 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "keep_rate must lie in (0, 1]");
  }
  std::vector<SceneObject> kept;
  kept.reserve(objects.size());
  for (auto& o : objects) {
    if (!hist.overrepresented.count(o.category) || rebalance_keep(image, o.object_id, keep_rate, seed)) {
      kept.push_back(std::move(o));
    }
  }
  return kept;
}

}  // namespace forge
