#include "forge/scene_oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>

#include "forge/error.hpp"
#include "forge/random.hpp"

namespace forge {
namespace {

constexpr std::array<const char*, 10> kColors = {"red",    "blue",  "green", "white", "black",
                                                 "yellow", "brown", "gray",  "orange", "purple"};
constexpr std::array<const char*, 6> kMaterials = {"wooden", "metal", "plastic", "glass", "ceramic", "fabric"};
constexpr std::array<const char*, 4> kGarments = {"jacket", "shirt", "coat", "sweater"};

double overlap_area(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  return ix * iy;
}

int sign(double v) { return (v > 0) - (v < 0); }

// Ray from the origin along d against an axis-aligned box; entry distance
// (scaled so that d.z = 1, i.e. the returned value is the hit's z).
std::optional<double> ray_box(double dx, double dy, const SyntheticObject& o) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  const double dir[3] = {dx, dy, 1.0};
  const double lo[3] = {o.center.x - o.half_extents.x, o.center.y - o.half_extents.y, o.center.z - o.half_extents.z};
  const double hi[3] = {o.center.x + o.half_extents.x, o.center.y + o.half_extents.y, o.center.z + o.half_extents.z};
  for (int k = 0; k < 3; ++k) {
    if (dir[k] == 0.0) {
      if (0.0 < lo[k] || 0.0 > hi[k]) return std::nullopt;
      continue;
    }
    double a = lo[k] / dir[k];
    double b = hi[k] / dir[k];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    if (t0 > t1) return std::nullopt;
  }
  return t0;
}

std::string position_word(const BBox& b, int width) {
  const double c = b.center_x();
  if (c < width / 3.0) return "on the left";
  if (c > 2.0 * width / 3.0) return "on the right";
  return "in the center";
}

std::string synthesize_caption(const SyntheticObject& o, const BBox& box, const Camera& cam, std::uint64_t variant) {
  const std::string where = position_word(box, cam.width);
  if (o.is_person) {
    const std::string who = (variant & 1) ? "woman" : "man";
    const std::string color = kColors[(variant >> 1) % kColors.size()];
    const std::string garment = kGarments[(variant >> 5) % kGarments.size()];
    const FacingLabel f = facing_label_for_yaw(o.facing_yaw);
    const std::string facing = f == FacingLabel::kFront ? "facing camera"
                               : f == FacingLabel::kBack ? "back to camera"
                                                         : "in profile view";
    return who + " " + facing + " in " + color + " " + garment + " " + where;
  }
  const std::string color = kColors[variant % kColors.size()];
  const std::string material = kMaterials[(variant / kColors.size()) % kMaterials.size()];
  return o.category + " " + where + ", " + color + " " + material;
}

}  // namespace

double project_u(const Vec3& p, const Camera& c) { return c.focal_px * p.x / p.z + c.width / 2.0; }
double project_v(const Vec3& p, const Camera& c) { return c.focal_px * p.y / p.z + c.height / 2.0; }

BBox project_box(const SyntheticObject& o, const Camera& c) {
  double u0 = std::numeric_limits<double>::infinity(), v0 = u0;
  double u1 = -u0, v1 = -u0;
  for (int sx : {-1, 1}) {
    for (int sy : {-1, 1}) {
      for (int sz : {-1, 1}) {
        const Vec3 p{o.center.x + sx * o.half_extents.x, o.center.y + sy * o.half_extents.y,
                     o.center.z + sz * o.half_extents.z};
        const double u = project_u(p, c);
        const double v = project_v(p, c);
        u0 = std::min(u0, u);
        u1 = std::max(u1, u);
        v0 = std::min(v0, v);
        v1 = std::max(v1, v);
      }
    }
  }
  return BBox{std::clamp(u0, 0.0, static_cast<double>(c.width)), std::clamp(v0, 0.0, static_cast<double>(c.height)),
              std::clamp(u1, 0.0, static_cast<double>(c.width)), std::clamp(v1, 0.0, static_cast<double>(c.height))};
}

FacingLabel facing_label_for_yaw(double yaw) {
  const double a = std::fmod(std::fabs(yaw), 2.0 * std::numbers::pi);
  if (a < 1e-9 || std::fabs(a - 2.0 * std::numbers::pi) < 1e-9) return FacingLabel::kFront;
  if (std::fabs(a - std::numbers::pi) < 1e-9) return FacingLabel::kBack;
  return FacingLabel::kSide;
}

namespace {

// Placement and captions only; occlusion flags are left unset.
SyntheticScene gen_layout(std::uint64_t seed, int n_objects, const LayoutConfig& layout) {
  if (n_objects < 1) throw Error(ErrorCode::kInvalidConfig, "gen_scene: n_objects must be >= 1");
  if (layout.categories.empty()) throw Error(ErrorCode::kInvalidConfig, "gen_scene: empty category list");
  const Camera& cam = layout.camera;
  Rng rng(derive_seed(seed, {"oracle.scene"}));

  for (int attempt = 0; attempt < layout.max_attempts; ++attempt) {
    SyntheticScene scene;
    scene.camera = cam;
    scene.seed = seed;
    std::vector<BBox> boxes;
    bool ok = true;
    for (int k = 0; k < n_objects && ok; ++k) {
      bool placed = false;
      for (int tries = 0; tries < 200 && !placed; ++tries) {
        SyntheticObject o;
        o.object_id = k + 1;
        o.is_person = rng.bernoulli(layout.person_probability);
        o.category = o.is_person ? "person" : layout.categories[rng.below(layout.categories.size())];
        const double z = rng.uniform(layout.z_min, layout.z_max);
        double hw, hh;
        if (o.is_person) {
          hw = rng.uniform(layout.min_half_px, layout.min_half_px * 1.3);
          hh = rng.uniform(hw * 1.6, hw * 2.5);
        } else {
          hw = rng.uniform(layout.min_half_px, layout.max_half_px);
          hh = rng.uniform(std::max(layout.min_half_px, hw / 2.0), std::min(layout.max_half_px, hw * 2.0));
        }
        const double u = rng.uniform(hw + 2.0, cam.width - hw - 2.0);
        const double v = rng.uniform(hh + 2.0, cam.height - hh - 2.0);
        o.center = {(u - cam.width / 2.0) * z / cam.focal_px, (v - cam.height / 2.0) * z / cam.focal_px, z};
        o.half_extents = {hw * z / cam.focal_px, hh * z / cam.focal_px, rng.uniform(0.1, 0.4)};
        if (o.is_person) {
          const double pick = rng.uniform();
          o.facing_yaw = pick < 0.45 ? 0.0 : pick < 0.9 ? std::numbers::pi : std::numbers::pi / 2.0;
        }
        if (o.center.z - o.half_extents.z <= 0.1) continue;
        // The clipped projection must equal the unclipped one: fully in frame.
        const BBox box = project_box(o, cam);
        if (box.x_min <= 0.0 || box.y_min <= 0.0 || box.x_max >= cam.width || box.y_max >= cam.height) continue;
        if (box.width() < 2.0 || box.height() < 2.0) continue;

        bool fits = true;
        for (size_t j = 0; j < scene.objects.size() && fits; ++j) {
          const SyntheticObject& p = scene.objects[j];
          if (std::fabs(o.center.z - p.center.z) < o.half_extents.z + p.half_extents.z + layout.min_depth_gap) fits = false;
          if (std::fabs(o.center.x - p.center.x) < layout.min_lateral_separation) fits = false;
          if (sign(o.center.x - p.center.x) != sign(project_u(o.center, cam) - project_u(p.center, cam))) fits = false;
          const double smaller = std::min(box.area(), boxes[j].area());
          if (overlap_area(box, boxes[j]) > layout.max_overlap * smaller) fits = false;
        }
        if (!fits) continue;
        scene.objects.push_back(o);
        boxes.push_back(box);
        placed = true;
      }
      ok = placed;
    }
    if (!ok) continue;

    // Captions: deterministic per object, unique within the scene.
    std::set<std::string> used;
    for (size_t i = 0; i < scene.objects.size(); ++i) {
      SyntheticObject& o = scene.objects[i];
      std::uint64_t variant = derive_seed(seed, {"oracle.caption", std::to_string(o.object_id)});
      std::string caption = synthesize_caption(o, boxes[i], cam, variant);
      while (!used.insert(caption).second) {
        variant = splitmix64(variant);
        caption = synthesize_caption(o, boxes[i], cam, variant);
      }
      o.caption = caption;
    }
    return scene;
  }
  throw Error(ErrorCode::kUnsatisfiableLayout,
              "gen_scene: no layout with " + std::to_string(n_objects) + " objects for seed " + std::to_string(seed));
}

}  // namespace

SyntheticScene gen_scene(std::uint64_t seed, int n_objects, const LayoutConfig& layout) {
  SyntheticScene scene = gen_layout(seed, n_objects, layout);
  annotate_occlusion(scene, render_depth(scene), layout.min_visible_fraction);
  return scene;
}

RenderResult render_depth(const SyntheticScene& scene) {
  const Camera& cam = scene.camera;
  RenderResult out;
  out.depth.width = cam.width;
  out.depth.height = cam.height;
  out.depth.convention = DepthConvention::kDistanceIncreasing;
  const size_t n_px = static_cast<size_t>(cam.width) * cam.height;
  out.depth.values.assign(n_px, std::numeric_limits<float>::quiet_NaN());
  // Reused across calls; fresh full-frame buffers per scene cost more than the ray casts.
  thread_local std::vector<double> nearest;
  thread_local std::vector<int> owner;
  nearest.assign(n_px, std::numeric_limits<double>::infinity());
  owner.assign(n_px, -1);
  std::vector<long long> silhouette(scene.objects.size(), 0);

  for (size_t i = 0; i < scene.objects.size(); ++i) {
    const SyntheticObject& o = scene.objects[i];
    const BBox box = project_box(o, cam);
    const int x0 = std::max(0, static_cast<int>(std::floor(box.x_min)));
    const int x1 = std::min(cam.width, static_cast<int>(std::ceil(box.x_max)));
    const int y0 = std::max(0, static_cast<int>(std::floor(box.y_min)));
    const int y1 = std::min(cam.height, static_cast<int>(std::ceil(box.y_max)));
    for (int y = y0; y < y1; ++y) {
      const double dy = (y + 0.5 - cam.height / 2.0) / cam.focal_px;
      for (int x = x0; x < x1; ++x) {
        const double dx = (x + 0.5 - cam.width / 2.0) / cam.focal_px;
        const auto t = ray_box(dx, dy, o);
        if (!t) continue;
        ++silhouette[i];
        const size_t p = static_cast<size_t>(y) * cam.width + x;
        if (*t < nearest[p]) {
          nearest[p] = *t;
          owner[p] = static_cast<int>(i);
        }
      }
    }
  }
  std::vector<long long> visible(scene.objects.size(), 0);
  for (size_t p = 0; p < n_px; ++p) {
    if (owner[p] >= 0) {
      out.depth.values[p] = static_cast<float>(nearest[p]);
      ++visible[static_cast<size_t>(owner[p])];
    }
  }
  out.visible_fraction.resize(scene.objects.size());
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    out.visible_fraction[i] = silhouette[i] ? static_cast<double>(visible[i]) / static_cast<double>(silhouette[i]) : 0.0;
  }
  return out;
}

void annotate_occlusion(SyntheticScene& scene, const RenderResult& render, double min_visible_fraction) {
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    scene.objects[i].visible_fraction = render.visible_fraction[i];
    scene.objects[i].occluded = render.visible_fraction[i] < min_visible_fraction;
  }
}

Raster render_luminance(const SyntheticScene& scene, const RenderResult& render) {
  const Camera& cam = scene.camera;
  Raster r;
  r.width = cam.width;
  r.height = cam.height;
  r.channels = 1;
  r.data.resize(static_cast<size_t>(cam.width) * cam.height);
  std::uint64_t state = derive_seed(scene.seed, {"oracle.luma"});
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const size_t p = static_cast<size_t>(y) * cam.width + x;
      state = splitmix64(state);
      const double noise = 16.0 * unit_interval(state) - 8.0;
      double value;
      const float d = render.depth.values[p];
      if (std::isfinite(d)) {
        // Nearer surfaces are brighter; a 4-px checker gives texture.
        const double base = 200.0 - 8.0 * d;
        value = base + (((x / 4) + (y / 4)) % 2 ? 18.0 : -18.0);
      } else {
        value = 90.0 + 60.0 * y / cam.height;
      }
      r.data[p] = static_cast<std::uint8_t>(std::clamp(value + noise, 20.0, 235.0));
    }
  }
  return r;
}

SceneRecord to_scene_record(const SyntheticScene& scene, const ImageRef& image) {
  SceneRecord rec;
  rec.image = image;
  std::vector<std::string> names;
  for (const auto& o : scene.objects) {
    if (o.occluded) continue;
    SceneObject so;
    so.object_id = o.object_id;
    so.category = o.category;
    so.bbox = project_box(o, scene.camera);
    so.region_caption = o.caption;
    so.is_person = o.is_person;
    if (o.is_person) so.facing = facing_label_for_yaw(o.facing_yaw);
    rec.objects.push_back(std::move(so));
    names.push_back(o.category);
  }
  std::string list;
  for (size_t i = 0; i < names.size(); ++i) {
    if (i) list += i + 1 == names.size() ? " and " : ", ";
    list += "a " + names[i];
  }
  rec.global_caption = names.empty() ? "An empty synthetic room." : "A synthetic room with " + list + ".";
  rec.provenance = {true, true, true, true};
  return rec;
}

GroundTruth ground_truth_relations(const SyntheticScene& scene, const LayoutConfig& layout) {
  GroundTruth gt;
  std::vector<const SyntheticObject*> vis;
  for (const auto& o : scene.objects) {
    if (!o.occluded) vis.push_back(&o);
  }
  for (size_t i = 0; i < vis.size(); ++i) {
    for (size_t j = i + 1; j < vis.size(); ++j) {
      const SyntheticObject& a = *vis[i];
      const SyntheticObject& b = *vis[j];
      GroundTruthPair p;
      p.a = a.object_id;
      p.b = b.object_id;
      p.z_separation = std::fabs(a.center.z - b.center.z);
      if (p.z_separation >= a.half_extents.z + b.half_extents.z + layout.min_depth_gap) {
        p.near_far = a.center.z < b.center.z ? DepthOrderValue::kANearer : DepthOrderValue::kBNearer;
      }
      if (std::fabs(a.center.x - b.center.x) >= layout.min_lateral_separation) {
        p.left_right = a.center.x < b.center.x ? LRRelation::kLeft : LRRelation::kRight;
      }
      gt.pairs.push_back(p);
    }
  }
  for (const SyntheticObject* s : vis) {
    if (!s->is_person) continue;
    const FacingLabel label = facing_label_for_yaw(s->facing_yaw);
    if (label != FacingLabel::kFront && label != FacingLabel::kBack) continue;
    // forward = (sin yaw, 0, -cos yaw); up = -y; right = forward x up.
    const Vec3 f{std::sin(s->facing_yaw), 0.0, -std::cos(s->facing_yaw)};
    const Vec3 right{f.z, 0.0, -f.x};
    for (const SyntheticObject* t : vis) {
      if (t == s) continue;
      const double dx = t->center.x - s->center.x;
      if (std::fabs(dx) < layout.min_lateral_separation) continue;
      const double side = dx * right.x + (t->center.z - s->center.z) * right.z;
      GroundTruthPerspective gp;
      gp.subject = s->object_id;
      gp.target = t->object_id;
      gp.facing = label == FacingLabel::kFront ? Facing::kToward : Facing::kAway;
      // Lateral offset only: the depth component of right is zero for yaw in {0, pi}.
      gp.allocentric = side > 0 ? LRRelation::kRight : LRRelation::kLeft;
      gt.perspectives.push_back(gp);
    }
  }
  return gt;
}

Json ground_truth_to_json(const GroundTruth& gt) {
  Json pairs = Json::array();
  for (const auto& p : gt.pairs) {
    Json j = {{"a", p.a}, {"b", p.b}, {"z_separation", p.z_separation}};
    j["near"] = !p.near_far ? Json(nullptr) : Json(*p.near_far == DepthOrderValue::kANearer ? "a" : "b");
    j["left_right"] = !p.left_right ? Json(nullptr) : Json(std::string(relation_name(*p.left_right)));
    pairs.push_back(j);
  }
  Json persons = Json::array();
  for (const auto& p : gt.perspectives) {
    persons.push_back({{"subject", p.subject},
                       {"target", p.target},
                       {"facing", std::string(facing_name(p.facing))},
                       {"allocentric", std::string(relation_name(p.allocentric))}});
  }
  return Json{{"pairs", pairs}, {"perspectives", persons}};
}

RenderedScene render_scene(std::uint64_t seed, int n_objects, const LayoutConfig& layout) {
  RenderedScene out;
  out.scene = gen_layout(seed, n_objects, layout);
  out.render = render_depth(out.scene);
  annotate_occlusion(out.scene, out.render, layout.min_visible_fraction);
  return out;
}

int oracle_object_count(std::uint64_t scene_seed, int min_objects, int max_objects) {
  if (min_objects < 1 || max_objects < min_objects) {
    throw Error(ErrorCode::kInvalidConfig, "oracle object range must satisfy 1 <= min <= max");
  }
  const std::uint64_t span = static_cast<std::uint64_t>(max_objects - min_objects + 1);
  return min_objects + static_cast<int>(derive_seed(scene_seed, {"oracle.count"}) % span);
}

void write_oracle_corpus(const std::string& dir, const OracleCorpusOptions& options) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  fs::create_directories(root / "images");
  fs::create_directories(root / "depth");
  std::ofstream manifest(root / "manifest.jsonl", std::ios::binary | std::ios::trunc);
  std::ofstream scenes(root / "scenes.jsonl", std::ios::binary | std::ios::trunc);
  std::ofstream gt(root / "gt.jsonl", std::ios::binary | std::ios::trunc);
  if (!manifest || !scenes || !gt) throw Error(ErrorCode::kIo, "cannot write oracle corpus under " + dir);

  for (int i = 0; i < options.scenes; ++i) {
    const std::uint64_t seed = options.seed + static_cast<std::uint64_t>(i);
    const int n = oracle_object_count(seed, options.min_objects, options.max_objects);
    RenderedScene rs = render_scene(seed, n, options.layout);
    char id[32];
    std::snprintf(id, sizeof id, "scene-%06d", i);
    ImageRef image;
    image.source_dataset = options.source;
    image.image_id = id;
    image.width = rs.scene.camera.width;
    image.height = rs.scene.camera.height;
    image.uri = std::string("images/") + id + ".pgm";
    image.depth_uri = std::string("depth/") + id + ".pfm";
    write_raster((root / image.uri).string(), render_luminance(rs.scene, rs.render));
    write_depth_artifact((root / *image.depth_uri).string(), rs.render.depth);
    manifest << canonical_json(image_to_json(image)) << '\n';
    scenes << serialize_scene_record(to_scene_record(rs.scene, image)) << '\n';
    gt << canonical_json(Json{{"image_id", image.image_id},
                              {"seed", seed},
                              {"ground_truth", ground_truth_to_json(ground_truth_relations(rs.scene, options.layout))}})
       << '\n';
  }

  const Json mock = {{"transport", "mock"}};
  const Json config = {
      {"sources", Json::array({{{"name", options.source}, {"manifest", "manifest.jsonl"}}})},
      {"mock_world", "scenes.jsonl"},
      {"providers",
       {{"captioner", mock}, {"detector", mock}, {"orientation", mock}, {"judge", {{"transport", "mock"}, {"behavior", "gold"}}}}},
      {"shard_count", options.shard_count},
      {"worker_count", 1},
      {"seed", options.pipeline_seed},
      {"output_dir", "run"}};
  std::ofstream cfg(root / "config.json", std::ios::binary | std::ios::trunc);
  cfg << config.dump(2) << '\n';
  if (!cfg) throw Error(ErrorCode::kIo, "cannot write " + (root / "config.json").string());
}

}  // namespace forge
