#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "forge/geometry.hpp"
#include "forge/random.hpp"
#include "forge/scene_model.hpp"

namespace forge {

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

struct QATemplate {
  std::string template_id;
  TaskKind task = TaskKind::kGrounding;
  /// Selects which answer a generator binds, e.g. "closer" vs "farther" for
  /// near/far, "rightmost_box" vs "relation" for left/right.
  std::string variant = "default";
  std::string question_pattern;
  std::string answer_pattern;

  /// Placeholder names in order of first appearance across both patterns.
  std::vector<std::string> placeholders() const;
};

/// Every placeholder a template may use.
const std::set<std::string>& known_placeholders();
/// "box" and any "*_box" placeholder carry a normalized box.
bool is_box_placeholder(const std::string& name);
/// Variants a generator understands for each task.
const std::set<std::string>& known_variants(TaskKind task);

class TemplateRegistry {
 public:
  /// The registry shipped in assets/templates.json.
  static TemplateRegistry builtin();
  /// Throws kInvalidConfig on unknown tasks, variants or placeholders, on
  /// duplicate ids, or when a task has fewer than 3 templates.
  static TemplateRegistry from_json(const Json& j);
  static TemplateRegistry from_file(const std::string& path);
  Json to_json() const;

  const std::string& version() const { return version_; }
  const std::vector<QATemplate>& all() const { return templates_; }
  std::vector<const QATemplate*> for_task(TaskKind task) const;
  const QATemplate* find(const std::string& template_id) const;
  /// Hex digest of the canonical registry JSON; part of checkpoint hashes.
  std::string digest() const;

 private:
  std::string version_;
  std::vector<QATemplate> templates_;
};

struct Instantiation {
  std::string question;
  std::string answer;
};

/// Substitutes {name} placeholders. Box placeholders take a canonical payload
/// "[x1, y1, x2, y2]" (integers in [0, 1000]) and render as
/// "<box>[x1, y1, x2, y2]</box>". Throws kMissingBinding, kInvalidBinding and,
/// in strict mode, kUnusedBinding.
Instantiation instantiate_template(const QATemplate& t, const std::map<std::string, std::string>& bindings,
                                   bool strict = false);

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

struct SamplingPolicy {
  std::map<TaskKind, int> max_per_image = {{TaskKind::kGrounding, 4}, {TaskKind::kReferring, 4},
                                           {TaskKind::kCounting, 2},  {TaskKind::kNearFar, 4},
                                           {TaskKind::kLeftRight, 2}, {TaskKind::kPerspective, 1}};
  std::uint64_t seed = 0;
  std::set<DepthClass> min_depth_quality = {DepthClass::kA, DepthClass::kB, DepthClass::kC};

  int cap(TaskKind task) const;
  /// Throws kInvalidConfig for negative caps or Class D in min_depth_quality.
  void validate() const;
};

/// Generator state for one (seed, image, task).
Rng task_rng(std::uint64_t seed, const ImageRef& image, TaskKind task);

/// Uniformly samples min(cap, n) distinct indices of [0, n) and returns them
/// ascending.
std::vector<size_t> sample_indices(size_t n, int cap, Rng& rng);

using ObjectPair = std::pair<const SceneObject*, const SceneObject*>;

/// At most `cap` pairs drawn uniformly without replacement, in eligible order.
std::vector<ObjectPair> sample_pairs(const std::vector<ObjectPair>& eligible, int cap, Rng& rng);

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// "<source>/<image_id>/<task>/<key>"
std::string make_qa_id(const ImageRef& image, TaskKind task, const std::string& key);

/// Text -> box. Nullopt when the object lacks a caption or its box collapses
/// under normalization.
std::optional<QARecord> gen_grounding(const SceneRecord& scene, const SceneObject& obj,
                                      const TemplateRegistry& registry, Rng& rng);
/// Box -> text. Same guards as grounding; duplicate captions in the scene are
/// flagged with attributes["non_unique_reference"] = "true".
std::optional<QARecord> gen_referring(const SceneRecord& scene, const SceneObject& obj,
                                      const TemplateRegistry& registry, Rng& rng);
/// Emitted only when the category occurs more than once.
std::optional<QARecord> gen_counting(const SceneRecord& scene, const std::string& category,
                                     const TemplateRegistry& registry, Rng& rng);
std::optional<QARecord> gen_near_far(const SceneRecord& scene, const SceneObject& a, const SceneObject& b,
                                     const DepthOrder& order, const TemplateRegistry& registry, Rng& rng,
                                     const std::set<DepthClass>& allowed = {DepthClass::kA, DepthClass::kB,
                                                                            DepthClass::kC});
std::optional<QARecord> gen_left_right(const SceneRecord& scene, const SceneObject& a, const SceneObject& b,
                                       LRRelation rel, const TemplateRegistry& registry, Rng& rng);
/// Subject must be a person facing front or back; the answer is the target's
/// side in the subject's own frame.
std::optional<QARecord> gen_perspective(const SceneRecord& scene, const SceneObject& subject,
                                        const SceneObject& target, const TemplateRegistry& registry, Rng& rng);

struct GenerationConfig {
  SamplingPolicy policy;
  ReliabilityThresholds reliability;
  DepthStatsOptions depth_options;
  double depth_epsilon = 0.02;
};

/// Per-task accounting for one or many scenes. attempted = emitted + rejected
/// for every task.
struct TaskTally {
  long long attempted = 0;
  long long emitted = 0;
  std::map<std::string, long long> rejected;

  long long rejected_total() const;
  void merge(const TaskTally& other);
};

struct GenerationResult {
  std::vector<QARecord> records;
  std::map<TaskKind, TaskTally> tallies;
};

/// Runs all six generators over one scene. `depth` maps object_id to its
/// region stats; objects without an entry are not eligible for near/far.
/// Candidates are gated first, then sampled under the per-task caps.
GenerationResult generate_for_scene(const SceneRecord& scene, const std::map<int, DepthStats>& depth,
                                    const TemplateRegistry& registry, const GenerationConfig& config);

}  // namespace forge
