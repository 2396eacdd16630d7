#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace forge {

using Json = nlohmann::json;

enum class TaskKind { kGrounding, kReferring, kCounting, kNearFar, kLeftRight, kPerspective };

inline constexpr std::array<TaskKind, 6> kAllTasks = {
    TaskKind::kGrounding, TaskKind::kReferring, TaskKind::kCounting,
    TaskKind::kNearFar,   TaskKind::kLeftRight, TaskKind::kPerspective};

/// Wire name: grounding, referring, counting, near_far, left_right, perspective.
std::string_view task_name(TaskKind task);
std::optional<TaskKind> parse_task(std::string_view name);

/// Closed label set returned by the orientation estimator.
enum class FacingLabel { kFront, kBack, kLeft, kRight, kSide, kThreeQuarter, kUnknown };

std::string_view facing_label_name(FacingLabel label);
/// Throws Error(kUnknownLabel) outside the closed set.
FacingLabel parse_facing_label(std::string_view text);

struct ImageRef {
  std::string source_dataset;
  std::string image_id;
  int width = 0;
  int height = 0;
  std::string uri;
  std::optional<std::string> depth_uri;

  /// "<source_dataset>/<image_id>"; unique across a run.
  std::string key() const { return source_dataset + "/" + image_id; }
  bool operator==(const ImageRef&) const = default;
};

/// Pixel-space axis-aligned box.
struct BBox {
  double x_min = 0;
  double y_min = 0;
  double x_max = 0;
  double y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }
  /// 0 <= x_min < x_max <= width and the same vertically.
  bool valid_within(int image_width, int image_height) const;
  bool operator==(const BBox&) const = default;
};

/// Box in the [0, 1000] integer space used by all QA text.
struct NormalizedBBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  bool valid() const {
    return 0 <= x_min && x_min < x_max && x_max <= 1000 && 0 <= y_min && y_min < y_max &&
           y_max <= 1000;
  }
  bool operator==(const NormalizedBBox&) const = default;
};

/// "[x1, y1, x2, y2]"
std::string format_box_payload(const NormalizedBBox& box);
/// "<box>[x1, y1, x2, y2]</box>"
std::string format_box_token(const NormalizedBBox& box);

struct SceneObject {
  int object_id = 0;
  std::string category;
  BBox bbox;
  std::string region_caption;
  bool is_person = false;
  std::optional<FacingLabel> facing;

  bool operator==(const SceneObject&) const = default;
};

struct Provenance {
  bool filtered = false;
  bool captioned = false;
  bool grounded = false;
  bool depth_attached = false;

  bool operator==(const Provenance&) const = default;
};

struct SceneRecord {
  ImageRef image;
  std::string global_caption;
  std::vector<SceneObject> objects;
  Provenance provenance;

  const SceneObject* find(int object_id) const;
  bool operator==(const SceneRecord&) const = default;
};

struct QARecord {
  std::string qa_id;
  ImageRef image;
  TaskKind task = TaskKind::kGrounding;
  std::string question;
  std::string answer;
  std::optional<std::vector<NormalizedBBox>> answer_boxes;
  std::vector<int> object_ids;
  bool verified = false;
  std::string template_id;
  /// Generation metadata (depth_class, relation, facing, non_unique_reference...).
  std::map<std::string, std::string> attributes;

  bool operator==(const QARecord&) const = default;
};

/// Dumps with sorted keys, ", " and ": " separators and raw UTF-8: the
/// byte-canonical form of every record line.
std::string canonical_json(const Json& value);

Json image_to_json(const ImageRef& image);
ImageRef image_from_json(const Json& j, std::string_view path = "image");

/// Throws Error naming the offending field.
void validate_scene_record(const SceneRecord& record);
void validate_qa_record(const QARecord& record);

/// One line of the scene-input format. Throws Error (kMalformed, kInvalidBBox,
/// kOutOfBounds, kDuplicateId, kMissingField, kUnknownField).
SceneRecord parse_scene_record(std::string_view line);
std::string serialize_scene_record(const SceneRecord& record);

QARecord parse_qa_record(std::string_view line);
/// Single line, no trailing newline. In strict mode unverified records are
/// rejected with kUnverifiedRecord.
std::string serialize_qa_record(const QARecord& record, bool strict = false);

}  // namespace forge
