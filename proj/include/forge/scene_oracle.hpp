#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "forge/depth_map.hpp"
#include "forge/geometry.hpp"
#include "forge/ingest_filter.hpp"
#include "forge/scene_model.hpp"

namespace forge {

// Camera frame: +x right, +y down, +z forward (into the scene). Pinhole
// projection u = f * x / z + W / 2, v = f * y / z + H / 2.

struct Vec3 {
  double x = 0;
  double y = 0;
  double z = 0;
};

struct Camera {
  double focal_px = 500.0;
  int width = 640;
  int height = 480;
};

struct SyntheticObject {
  int object_id = 0;
  std::string category;
  Vec3 center;
  Vec3 half_extents;
  bool is_person = false;
  /// 0 = facing the camera, pi = facing away, pi/2 = profile.
  double facing_yaw = 0;
  std::string caption;
  /// Share of the object's silhouette left visible after occlusion.
  double visible_fraction = 1.0;
  bool occluded = false;
};

struct SyntheticScene {
  std::vector<SyntheticObject> objects;
  Camera camera;
  std::uint64_t seed = 0;
};

struct LayoutConfig {
  Camera camera;
  double z_min = 3.0;
  double z_max = 16.0;
  /// Gap between the depth extents of any two objects (world units).
  double min_depth_gap = 0.5;
  /// Minimum |x_a - x_b| between object centers (world units).
  double min_lateral_separation = 0.25;
  /// Largest allowed bbox intersection as a share of the smaller box.
  double max_overlap = 0.2;
  /// Objects with less visible silhouette are flagged occluded.
  double min_visible_fraction = 0.6;
  double person_probability = 0.3;
  /// Half-size ranges in pixels at the object's center depth.
  double min_half_px = 52.0;
  double max_half_px = 100.0;
  int max_attempts = 500;
  std::vector<std::string> categories = {"chair", "table", "lamp", "bottle", "cup", "plant", "tree", "window"};
};

/// Samples n_objects boxes satisfying every layout constraint (depth gap,
/// lateral separation, no perspective inversion between pairs, bounded
/// overlap, fully in frame). Captions are synthesized from category and
/// layout. Throws kUnsatisfiableLayout after max_attempts restarts.
SyntheticScene gen_scene(std::uint64_t seed, int n_objects, const LayoutConfig& layout = {});

/// Projected center of the object.
double project_u(const Vec3& p, const Camera& camera);
double project_v(const Vec3& p, const Camera& camera);
/// Bounding rectangle of the 8 projected corners, clipped to the image.
BBox project_box(const SyntheticObject& object, const Camera& camera);

struct RenderResult {
  /// Nearest-surface z per pixel; NaN where no object is hit.
  DepthMap depth;
  std::vector<double> visible_fraction;  // per object, scene order
};

/// Ray-casts every pixel center against all boxes, keeping the nearest hit.
RenderResult render_depth(const SyntheticScene& scene);

/// Stores visible fractions and sets the occluded flag below the threshold.
void annotate_occlusion(SyntheticScene& scene, const RenderResult& render, double min_visible_fraction);

/// Textured luminance image that passes the default quality thresholds.
Raster render_luminance(const SyntheticScene& scene, const RenderResult& render);

/// Non-occluded objects only; every provenance flag set.
SceneRecord to_scene_record(const SyntheticScene& scene, const ImageRef& image);

FacingLabel facing_label_for_yaw(double yaw);

struct GroundTruthPair {
  int a = 0;
  int b = 0;
  /// From center z. Nullopt when |z_a - z_b| is below the depth margin.
  std::optional<DepthOrderValue> near_far;
  /// Camera-frame x of centers. Nullopt below the lateral margin.
  std::optional<LRRelation> left_right;
  double z_separation = 0;
};

struct GroundTruthPerspective {
  int subject = 0;
  int target = 0;
  Facing facing = Facing::kToward;
  /// Target side in the subject's own frame.
  LRRelation allocentric = LRRelation::kAmbiguous;
};

struct GroundTruth {
  std::vector<GroundTruthPair> pairs;
  std::vector<GroundTruthPerspective> perspectives;
};

/// Pairs among non-occluded objects (a < b by scene order). Perspective
/// entries cover persons whose yaw is 0 or pi.
GroundTruth ground_truth_relations(const SyntheticScene& scene, const LayoutConfig& layout = {});

Json ground_truth_to_json(const GroundTruth& gt);

/// Renders a scene end to end: depth, occlusion flags, luminance.
struct RenderedScene {
  SyntheticScene scene;
  RenderResult render;
};
RenderedScene render_scene(std::uint64_t seed, int n_objects, const LayoutConfig& layout = {});

struct OracleCorpusOptions {
  int scenes = 50;
  /// Scene i uses seed + i.
  std::uint64_t seed = 0;
  std::string source = "oracle";
  int min_objects = 2;
  int max_objects = 6;
  LayoutConfig layout;
  /// Seed written into the example pipeline config.
  std::uint64_t pipeline_seed = 7;
  int shard_count = 4;
};

/// Object count for scene seed s: min + hash(s) mod (max - min + 1).
int oracle_object_count(std::uint64_t scene_seed, int min_objects, int max_objects);

/// Writes under dir:
///   images/<id>.pgm, depth/<id>.pfm (+ .json sidecar)
///   manifest.jsonl  ImageRef lines (relative uris)
///   scenes.jsonl    ground-truth SceneRecords (the mock world)
///   gt.jsonl        {"image_id", "ground_truth"} per scene
///   config.json     pipeline config running every stage on mock providers
/// Image ids are "scene-NNNNNN" with the scene index.
void write_oracle_corpus(const std::string& dir, const OracleCorpusOptions& options);

}  // namespace forge
