#include "forge/mock_provider.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "forge/error.hpp"
#include "forge/geometry.hpp"
#include "forge/quality_gate.hpp"
#include "forge/random.hpp"

namespace forge {
namespace {

std::string quote(const std::string& s) { return Json(s).dump(); }

NormalizedBBox shifted_box(const NormalizedBBox& b) {
  const int w = b.x_max - b.x_min;
  const int h = b.y_max - b.y_min;
  const int dx = static_cast<int>(std::ceil(0.6 * w));
  if (b.x_max + dx <= 1000) return {b.x_min + dx, b.y_min, b.x_max + dx, b.y_max};
  if (b.x_min - dx >= 0) return {b.x_min - dx, b.y_min, b.x_max - dx, b.y_max};
  // Wider than the room left on either side: keep only the top-left quarter.
  return {b.x_min, b.y_min, b.x_min + std::max(1, w / 2), b.y_min + std::max(1, h / 2)};
}

std::string swap_left_right(const std::string& text, bool& changed) {
  std::string out;
  size_t i = 0;
  while (i < text.size()) {
    if (!std::isalpha(static_cast<unsigned char>(text[i]))) {
      out += text[i++];
      continue;
    }
    size_t j = i;
    while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
    std::string word = text.substr(i, j - i);
    std::string lower = word;
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "left") {
      word = "right";
      changed = true;
    } else if (lower == "right") {
      word = "left";
      changed = true;
    }
    out += word;
    i = j;
  }
  return out;
}

}  // namespace

void MockWorld::add(SceneRecord scene) {
  const std::string key = scene.image.key();
  scenes_[key] = std::move(scene);
}

std::shared_ptr<MockWorld> MockWorld::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read mock world " + path);
  auto world = std::make_shared<MockWorld>();
  std::string line;
  size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      world->add(parse_scene_record(line));
    } catch (const Error& e) {
      throw Error(e.code(), path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return world;
}

const SceneRecord* MockWorld::find(const std::string& image_key) const {
  auto it = scenes_.find(image_key);
  return it == scenes_.end() ? nullptr : &it->second;
}

void GoldBoard::put(const QARecord& record) {
  std::lock_guard<std::mutex> lock(mutex_);
  records_[record.qa_id] = record;
}

std::optional<QARecord> GoldBoard::get(const std::string& qa_id) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = records_.find(qa_id);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

void GoldBoard::erase(const std::string& qa_id) {
  std::lock_guard<std::mutex> lock(mutex_);
  records_.erase(qa_id);
}

JudgeBehavior parse_judge_behavior(std::string_view name) {
  if (name == "gold") return JudgeBehavior::kGold;
  if (name == "mutate") return JudgeBehavior::kMutate;
  if (name == "fail") return JudgeBehavior::kFail;
  throw Error(ErrorCode::kInvalidConfig, "unknown mock judge behavior '" + std::string(name) + "'");
}

std::string mutate_answer(const QARecord& gold) {
  if (gold.answer_boxes && !gold.answer_boxes->empty()) {
    return format_box_token(shifted_box(gold.answer_boxes->front()));
  }
  const std::string& a = gold.answer;
  std::string out;
  if (!a.empty() && std::all_of(a.begin(), a.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    out = std::to_string(std::stoll(a) + 1);
  } else {
    bool changed = false;
    out = swap_left_right(a, changed);
    if (!changed) {
      const size_t comma = a.find(", ");
      if (comma != std::string::npos && a.find(", ", comma + 2) == std::string::npos) {
        out = a.substr(comma + 2) + ", " + a.substr(0, comma);
      }
    }
  }
  if (normalize_answer_text(out) == normalize_answer_text(a)) out = "not " + a;
  return out;
}

MockProvider::MockProvider(std::shared_ptr<const MockWorld> world, std::shared_ptr<GoldBoard> gold, MockOptions options)
    : world_(std::move(world)), gold_(std::move(gold)), options_(std::move(options)) {}

std::shared_ptr<Transport> MockProvider::transport() const {
  return std::make_shared<FunctionTransport>([this](const ProviderRequest& r) { return handle(r); });
}

std::vector<double> MockProvider::embed(const std::string& text) const {
  std::uint64_t state = fnv1a64(text);
  std::vector<double> v(static_cast<size_t>(std::max(1, options_.embedding_dim)));
  double norm = 0;
  for (auto& x : v) {
    state = splitmix64(state);
    x = 2.0 * unit_interval(state) - 1.0;
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

const SceneRecord& MockProvider::scene_for(const ProviderRequest& request) const {
  const Json& body = request.body;
  if (!body.contains("image")) throw Error(ErrorCode::kMalformed, request.correlation_id + ": request has no image");
  const ImageRef image = image_from_json(body["image"]);
  const SceneRecord* scene = world_ ? world_->find(image.key()) : nullptr;
  if (!scene) throw Error(ErrorCode::kMissingFixture, "mock world has no scene " + image.key());
  return *scene;
}

std::string MockProvider::caption_text(const SceneRecord& scene) const {
  std::vector<std::string> categories;
  for (const auto& o : scene.objects) {
    if (std::find(categories.begin(), categories.end(), o.category) == categories.end()) {
      categories.push_back(o.category);
    }
  }
  std::string list;
  for (size_t i = 0; i < categories.size(); ++i) {
    if (i) list += ", ";
    list += quote(categories[i]);
  }
  const std::string caption = scene.global_caption.empty() ? "A scene." : scene.global_caption;
  return "Caption: " + caption + "\nObjects: [" + list + "]";
}

const SceneObject* MockProvider::object_at(const SceneRecord& scene, const Json& crop) const {
  if (!crop.is_array() || crop.size() != 4) return nullptr;
  const BBox box{crop[0].get<double>(), crop[1].get<double>(), crop[2].get<double>(), crop[3].get<double>()};
  const SceneObject* best = nullptr;
  double best_iou = 0.5;
  for (const auto& o : scene.objects) {
    const double iou = bbox_iou(o.bbox, box);
    if (iou > best_iou) {
      best_iou = iou;
      best = &o;
    }
  }
  return best;
}

ProviderResponse MockProvider::handle(const ProviderRequest& request) const {
  ProviderResponse response;
  response.correlation_id = request.correlation_id;
  const Json& body = request.body;

  switch (request.kind) {
    case ProviderKind::kCaptioner: {
      const SceneRecord& scene = scene_for(request);
      if (request.operation == "caption") {
        response.body = {{"text", caption_text(scene)}};
      } else {
        const SceneObject* o = object_at(scene, body.value("crop", Json()));
        response.body = {{"text", o ? o->region_caption : std::string()}};
      }
      break;
    }
    case ProviderKind::kDetector: {
      const SceneRecord& scene = scene_for(request);
      Json results = Json::array();
      for (const auto& q : body.value("queries", Json::array())) {
        const std::string query = q.get<std::string>();
        Json boxes = Json::array();
        int rank = 0;
        for (const auto& o : scene.objects) {
          if (o.category != query) continue;
          boxes.push_back({{"bbox", {o.bbox.x_min, o.bbox.y_min, o.bbox.x_max, o.bbox.y_max}},
                           {"confidence", std::max(0.05, 0.95 - 0.01 * rank++)}});
        }
        results.push_back({{"query", query}, {"boxes", boxes}});
      }
      response.body = {{"results", results}};
      break;
    }
    case ProviderKind::kOrientationEstimator: {
      const SceneRecord& scene = scene_for(request);
      const SceneObject* o = object_at(scene, body.value("crop", Json()));
      Json j = {{"description", o ? o->region_caption : std::string("person")},
                {"facing", std::string(facing_label_name(o && o->facing ? *o->facing : FacingLabel::kUnknown))}};
      response.body = {{"text", j.dump()}};
      break;
    }
    case ProviderKind::kDepthProvider:
      throw Error(ErrorCode::kMissingArtifact, "mock depth provider serves no maps; attach depth_uri artifacts");
    case ProviderKind::kJudge: {
      if (options_.judge == JudgeBehavior::kFail) throw TransportError("mock judge configured to fail");
      const std::string qa_id = body.value("qa_id", std::string());
      const auto gold = gold_ ? gold_->get(qa_id) : std::nullopt;
      if (!gold) {
        response.body = {{"text", "I cannot tell."}};
      } else {
        response.body = {{"text", options_.judge == JudgeBehavior::kGold ? gold->answer : mutate_answer(*gold)}};
      }
      break;
    }
    case ProviderKind::kEmbedder: {
      const std::string text =
          request.operation == "image" ? options_.image_embedding_text : body.value("text", std::string());
      response.body = {{"embedding", embed(text)}};
      break;
    }
  }
  return response;
}

}  // namespace forge
