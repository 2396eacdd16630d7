#include "forge/scene_model.hpp"

#include <algorithm>
#include <set>

#include "forge/error.hpp"

namespace forge {
namespace {

constexpr std::array<std::string_view, 6> kTaskNames = {
    "grounding", "referring", "counting", "near_far", "left_right", "perspective"};

constexpr std::array<std::string_view, 7> kFacingNames = {
    "front", "back", "left", "right", "side", "three-quarter", "unknown"};

[[noreturn]] void fail(ErrorCode code, std::string_view path, std::string_view what) {
  throw Error(code, std::string(path) + ": " + std::string(what));
}

void append_canonical(const Json& v, std::string& out) {
  switch (v.type()) {
    case Json::value_t::object: {
      out += '{';
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out += ", ";
        first = false;
        out += Json(it.key()).dump(-1, ' ', false, Json::error_handler_t::strict);
        out += ": ";
        append_canonical(it.value(), out);
      }
      out += '}';
      break;
    }
    case Json::value_t::array: {
      out += '[';
      bool first = true;
      for (const auto& e : v) {
        if (!first) out += ", ";
        first = false;
        append_canonical(e, out);
      }
      out += ']';
      break;
    }
    default:
      out += v.dump(-1, ' ', false, Json::error_handler_t::strict);
  }
}

// Field access helpers. Each names the JSON path on failure.
const Json& require(const Json& obj, std::string_view key, std::string_view path) {
  auto it = obj.find(std::string(key));
  if (it == obj.end()) fail(ErrorCode::kMissingField, path, "missing field '" + std::string(key) + "'");
  return *it;
}

void reject_unknown(const Json& obj, std::initializer_list<std::string_view> known,
                    std::string_view path) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      fail(ErrorCode::kUnknownField, path, "unknown field '" + it.key() + "'");
    }
  }
}

std::string get_string(const Json& obj, std::string_view key, std::string_view path) {
  const Json& v = require(obj, key, path);
  if (!v.is_string()) fail(ErrorCode::kMalformed, std::string(path) + "." + std::string(key), "expected string");
  return v.get<std::string>();
}

long long get_int(const Json& obj, std::string_view key, std::string_view path) {
  const Json& v = require(obj, key, path);
  if (!v.is_number_integer()) fail(ErrorCode::kMalformed, std::string(path) + "." + std::string(key), "expected integer");
  return v.get<long long>();
}

bool get_bool(const Json& obj, std::string_view key, std::string_view path) {
  const Json& v = require(obj, key, path);
  if (!v.is_boolean()) fail(ErrorCode::kMalformed, std::string(path) + "." + std::string(key), "expected boolean");
  return v.get<bool>();
}

const Json& get_object(const Json& obj, std::string_view key, std::string_view path) {
  const Json& v = require(obj, key, path);
  if (!v.is_object()) fail(ErrorCode::kMalformed, std::string(path) + "." + std::string(key), "expected object");
  return v;
}

const Json& get_array(const Json& obj, std::string_view key, std::string_view path) {
  const Json& v = require(obj, key, path);
  if (!v.is_array()) fail(ErrorCode::kMalformed, std::string(path) + "." + std::string(key), "expected array");
  return v;
}

Json parse_line(std::string_view line) {
  Json j = Json::parse(line.begin(), line.end(), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw Error(ErrorCode::kMalformed, "record: malformed syntax");
  if (!j.is_object()) throw Error(ErrorCode::kMalformed, "record: expected object");
  return j;
}

Json bbox_to_json(const BBox& b) { return Json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

BBox bbox_from_json(const Json& v, std::string_view path) {
  if (!v.is_array() || v.size() != 4) fail(ErrorCode::kMalformed, path, "expected [x_min, y_min, x_max, y_max]");
  for (const auto& e : v) {
    if (!e.is_number()) fail(ErrorCode::kMalformed, path, "expected numeric coordinates");
  }
  return BBox{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
}

Json nbox_to_json(const NormalizedBBox& b) {
  return Json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

NormalizedBBox nbox_from_json(const Json& v, std::string_view path) {
  if (!v.is_array() || v.size() != 4) fail(ErrorCode::kMalformed, path, "expected 4 integers");
  for (const auto& e : v) {
    if (!e.is_number_integer()) fail(ErrorCode::kMalformed, path, "expected integer coordinates");
    const long long c = e.get<long long>();
    if (c < 0 || c > 1000) fail(ErrorCode::kOutOfBounds, path, "coordinate outside [0, 1000]");
  }
  return NormalizedBBox{v[0].get<int>(), v[1].get<int>(), v[2].get<int>(), v[3].get<int>()};
}

}  // namespace

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformed: return "malformed";
    case ErrorCode::kInvalidBBox: return "invalid_bbox";
    case ErrorCode::kOutOfBounds: return "out_of_bounds";
    case ErrorCode::kDuplicateId: return "duplicate_id";
    case ErrorCode::kMissingField: return "missing_field";
    case ErrorCode::kUnknownField: return "unknown_field";
    case ErrorCode::kMissingCaption: return "missing_caption";
    case ErrorCode::kMissingObjects: return "missing_objects";
    case ErrorCode::kUnbalancedList: return "unbalanced_list";
    case ErrorCode::kInvalidJson: return "invalid_json";
    case ErrorCode::kMissingKey: return "missing_key";
    case ErrorCode::kUnknownLabel: return "unknown_label";
    case ErrorCode::kEmptyCaption: return "empty_caption";
    case ErrorCode::kDimensionMismatch: return "dim_mismatch";
    case ErrorCode::kZeroVector: return "zero_vector";
    case ErrorCode::kMissingBinding: return "missing_binding";
    case ErrorCode::kUnusedBinding: return "unused_binding";
    case ErrorCode::kInvalidBinding: return "invalid_binding";
    case ErrorCode::kDegenerateBox: return "degenerate_box";
    case ErrorCode::kEmptyRegion: return "empty_region";
    case ErrorCode::kAmbiguousRelation: return "ambiguous_relation";
    case ErrorCode::kUnverifiedRecord: return "unverified_record";
    case ErrorCode::kTransport: return "transport";
    case ErrorCode::kExhaustedRetries: return "exhausted_retries";
    case ErrorCode::kUnparseableResponse: return "unparseable_response";
    case ErrorCode::kCorrelationMismatch: return "correlation_mismatch";
    case ErrorCode::kMissingArtifact: return "missing_artifact";
    case ErrorCode::kUnconfiguredProvider: return "unconfigured_provider";
    case ErrorCode::kMissingFixture: return "missing_fixture";
    case ErrorCode::kUndecodableRaster: return "undecodable_raster";
    case ErrorCode::kInvalidConfig: return "invalid_config";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kCheckpointMismatch: return "checkpoint_mismatch";
    case ErrorCode::kUnsatisfiableLayout: return "unsatisfiable_layout";
    case ErrorCode::kInterrupted: return "interrupted";
  }
  return "unknown";
}

std::string_view task_name(TaskKind task) { return kTaskNames[static_cast<size_t>(task)]; }

std::optional<TaskKind> parse_task(std::string_view name) {
  for (size_t i = 0; i < kTaskNames.size(); ++i) {
    if (kTaskNames[i] == name) return static_cast<TaskKind>(i);
  }
  return std::nullopt;
}

std::string_view facing_label_name(FacingLabel label) {
  return kFacingNames[static_cast<size_t>(label)];
}

FacingLabel parse_facing_label(std::string_view text) {
  for (size_t i = 0; i < kFacingNames.size(); ++i) {
    if (kFacingNames[i] == text) return static_cast<FacingLabel>(i);
  }
  throw Error(ErrorCode::kUnknownLabel, "unknown facing label '" + std::string(text) + "'");
}

bool BBox::valid_within(int image_width, int image_height) const {
  return 0 <= x_min && x_min < x_max && x_max <= image_width && 0 <= y_min && y_min < y_max &&
         y_max <= image_height;
}

std::string format_box_payload(const NormalizedBBox& b) {
  return "[" + std::to_string(b.x_min) + ", " + std::to_string(b.y_min) + ", " +
         std::to_string(b.x_max) + ", " + std::to_string(b.y_max) + "]";
}

std::string format_box_token(const NormalizedBBox& b) {
  return "<box>" + format_box_payload(b) + "</box>";
}

const SceneObject* SceneRecord::find(int object_id) const {
  for (const auto& o : objects) {
    if (o.object_id == object_id) return &o;
  }
  return nullptr;
}

std::string canonical_json(const Json& value) {
  std::string out;
  append_canonical(value, out);
  return out;
}

Json image_to_json(const ImageRef& image) {
  Json j = {{"source_dataset", image.source_dataset},
            {"image_id", image.image_id},
            {"width", image.width},
            {"height", image.height},
            {"uri", image.uri}};
  if (image.depth_uri) j["depth_uri"] = *image.depth_uri;
  return j;
}

ImageRef image_from_json(const Json& j, std::string_view path) {
  if (!j.is_object()) fail(ErrorCode::kMalformed, path, "expected object");
  reject_unknown(j, {"source_dataset", "image_id", "width", "height", "uri", "depth_uri"}, path);
  ImageRef image;
  image.source_dataset = get_string(j, "source_dataset", path);
  image.image_id = get_string(j, "image_id", path);
  const long long w = get_int(j, "width", path);
  const long long h = get_int(j, "height", path);
  if (w < 1 || w > 1'000'000) fail(ErrorCode::kOutOfBounds, std::string(path) + ".width", "must be >= 1");
  if (h < 1 || h > 1'000'000) fail(ErrorCode::kOutOfBounds, std::string(path) + ".height", "must be >= 1");
  image.width = static_cast<int>(w);
  image.height = static_cast<int>(h);
  image.uri = get_string(j, "uri", path);
  if (j.contains("depth_uri")) image.depth_uri = get_string(j, "depth_uri", path);
  if (image.source_dataset.empty()) fail(ErrorCode::kMalformed, std::string(path) + ".source_dataset", "must be non-empty");
  if (image.image_id.empty()) fail(ErrorCode::kMalformed, std::string(path) + ".image_id", "must be non-empty");
  return image;
}

void validate_scene_record(const SceneRecord& r) {
  if (r.image.width < 1 || r.image.height < 1) fail(ErrorCode::kOutOfBounds, "image", "width and height must be >= 1");
  std::set<int> ids;
  for (size_t i = 0; i < r.objects.size(); ++i) {
    const auto& o = r.objects[i];
    const std::string path = "objects[" + std::to_string(i) + "]";
    if (!ids.insert(o.object_id).second) {
      fail(ErrorCode::kDuplicateId, path + ".object_id", "duplicate object_id " + std::to_string(o.object_id));
    }
    const BBox& b = o.bbox;
    if (!(b.x_min < b.x_max) || !(b.y_min < b.y_max)) fail(ErrorCode::kInvalidBBox, path + ".bbox", "invalid bbox");
    if (!b.valid_within(r.image.width, r.image.height)) {
      fail(ErrorCode::kOutOfBounds, path + ".bbox", "bbox outside image bounds");
    }
    if (o.facing && !o.is_person) fail(ErrorCode::kMalformed, path + ".facing", "facing present on a non-person");
  }
}

SceneRecord parse_scene_record(std::string_view line) {
  const Json j = parse_line(line);
  reject_unknown(j, {"image", "global_caption", "objects", "provenance"}, "record");
  SceneRecord r;
  r.image = image_from_json(get_object(j, "image", "record"), "image");
  r.global_caption = get_string(j, "global_caption", "record");
  const Json& prov = get_object(j, "provenance", "record");
  reject_unknown(prov, {"filtered", "captioned", "grounded", "depth_attached"}, "provenance");
  r.provenance.filtered = get_bool(prov, "filtered", "provenance");
  r.provenance.captioned = get_bool(prov, "captioned", "provenance");
  r.provenance.grounded = get_bool(prov, "grounded", "provenance");
  r.provenance.depth_attached = get_bool(prov, "depth_attached", "provenance");
  const Json& objs = get_array(j, "objects", "record");
  r.objects.reserve(objs.size());
  for (size_t i = 0; i < objs.size(); ++i) {
    const std::string path = "objects[" + std::to_string(i) + "]";
    const Json& o = objs[i];
    if (!o.is_object()) fail(ErrorCode::kMalformed, path, "expected object");
    reject_unknown(o, {"object_id", "category", "bbox", "region_caption", "is_person", "facing"}, path);
    SceneObject obj;
    const long long id = get_int(o, "object_id", path);
    if (id < 0 || id > 1'000'000'000) fail(ErrorCode::kOutOfBounds, path + ".object_id", "out of range");
    obj.object_id = static_cast<int>(id);
    obj.category = get_string(o, "category", path);
    obj.bbox = bbox_from_json(require(o, "bbox", path), path + ".bbox");
    obj.region_caption = get_string(o, "region_caption", path);
    obj.is_person = get_bool(o, "is_person", path);
    if (o.contains("facing")) {
      const std::string label = get_string(o, "facing", path);
      try {
        obj.facing = parse_facing_label(label);
      } catch (const Error&) {
        fail(ErrorCode::kUnknownLabel, path + ".facing", "unknown facing label '" + label + "'");
      }
    }
    r.objects.push_back(std::move(obj));
  }
  validate_scene_record(r);
  return r;
}

std::string serialize_scene_record(const SceneRecord& r) {
  Json objects = Json::array();
  for (const auto& o : r.objects) {
    Json jo = {{"object_id", o.object_id},
               {"category", o.category},
               {"bbox", bbox_to_json(o.bbox)},
               {"region_caption", o.region_caption},
               {"is_person", o.is_person}};
    if (o.facing) jo["facing"] = std::string(facing_label_name(*o.facing));
    objects.push_back(std::move(jo));
  }
  Json j = {{"image", image_to_json(r.image)},
            {"global_caption", r.global_caption},
            {"objects", std::move(objects)},
            {"provenance",
             {{"filtered", r.provenance.filtered},
              {"captioned", r.provenance.captioned},
              {"grounded", r.provenance.grounded},
              {"depth_attached", r.provenance.depth_attached}}}};
  return canonical_json(j);
}

void validate_qa_record(const QARecord& r) {
  if (r.qa_id.empty()) fail(ErrorCode::kMalformed, "qa_id", "must be non-empty");
  if (r.answer_boxes) {
    for (size_t i = 0; i < r.answer_boxes->size(); ++i) {
      if (!(*r.answer_boxes)[i].valid()) {
        fail(ErrorCode::kOutOfBounds, "answer_boxes[" + std::to_string(i) + "]", "box outside [0,1000]^4");
      }
    }
  }
}

QARecord parse_qa_record(std::string_view line) {
  const Json j = parse_line(line);
  reject_unknown(j, {"qa_id", "image", "task", "question", "answer", "answer_boxes", "object_ids",
                     "verified", "template_id", "attributes"},
                 "record");
  QARecord r;
  r.qa_id = get_string(j, "qa_id", "record");
  r.image = image_from_json(get_object(j, "image", "record"), "image");
  const std::string task = get_string(j, "task", "record");
  const auto kind = parse_task(task);
  if (!kind) fail(ErrorCode::kUnknownLabel, "task", "unknown task '" + task + "'");
  r.task = *kind;
  r.question = get_string(j, "question", "record");
  r.answer = get_string(j, "answer", "record");
  if (j.contains("answer_boxes")) {
    const Json& boxes = get_array(j, "answer_boxes", "record");
    r.answer_boxes.emplace();
    for (size_t i = 0; i < boxes.size(); ++i) {
      r.answer_boxes->push_back(nbox_from_json(boxes[i], "answer_boxes[" + std::to_string(i) + "]"));
    }
  }
  const Json& ids = get_array(j, "object_ids", "record");
  for (const auto& id : ids) {
    if (!id.is_number_integer()) fail(ErrorCode::kMalformed, "object_ids", "expected integers");
    r.object_ids.push_back(id.get<int>());
  }
  r.verified = get_bool(j, "verified", "record");
  r.template_id = get_string(j, "template_id", "record");
  if (j.contains("attributes")) {
    const Json& attrs = get_object(j, "attributes", "record");
    for (auto it = attrs.begin(); it != attrs.end(); ++it) {
      if (!it.value().is_string()) fail(ErrorCode::kMalformed, "attributes." + it.key(), "expected string");
      r.attributes[it.key()] = it.value().get<std::string>();
    }
  }
  validate_qa_record(r);
  return r;
}

std::string serialize_qa_record(const QARecord& r, bool strict) {
  if (strict && !r.verified) {
    throw Error(ErrorCode::kUnverifiedRecord, "qa record '" + r.qa_id + "' is not verified");
  }
  validate_qa_record(r);
  Json j = {{"qa_id", r.qa_id},
            {"image", image_to_json(r.image)},
            {"task", std::string(task_name(r.task))},
            {"question", r.question},
            {"answer", r.answer},
            {"object_ids", r.object_ids},
            {"verified", r.verified},
            {"template_id", r.template_id}};
  if (r.answer_boxes) {
    Json boxes = Json::array();
    for (const auto& b : *r.answer_boxes) boxes.push_back(nbox_to_json(b));
    j["answer_boxes"] = std::move(boxes);
  }
  if (!r.attributes.empty()) j["attributes"] = r.attributes;
  return canonical_json(j);
}

}  // namespace forge
