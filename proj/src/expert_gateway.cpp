#include "forge/expert_gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <thread>

#include "forge/error.hpp"
#include "forge/prompts.hpp"
#include "forge/random.hpp"

namespace forge {
namespace {

namespace fs = std::filesystem;

constexpr std::array<std::string_view, 6> kKindNames = {"captioner", "detector",  "depth",
                                                        "orientation", "judge", "embedder"};

Json box_to_int_json(const BBox& b) {
  return Json::array({static_cast<long long>(std::floor(b.x_min)), static_cast<long long>(std::floor(b.y_min)),
                      static_cast<long long>(std::ceil(b.x_max)), static_cast<long long>(std::ceil(b.y_max))});
}

std::string kind_str(ProviderKind kind) { return std::string(provider_kind_name(kind)); }

double jitter_fraction(const std::string& correlation_id, int attempt) {
  return unit_interval(derive_seed(0, {"backoff", correlation_id, std::to_string(attempt)}));
}

std::vector<double> parse_vector(const Json& body, std::string_view what) {
  auto it = body.find("embedding");
  if (it == body.end() || !it->is_array()) {
    throw Error(ErrorCode::kUnparseableResponse, std::string(what) + ": response lacks an 'embedding' array");
  }
  std::vector<double> v;
  v.reserve(it->size());
  for (const auto& e : *it) {
    if (!e.is_number()) throw Error(ErrorCode::kUnparseableResponse, std::string(what) + ": non-numeric embedding");
    v.push_back(e.get<double>());
  }
  return v;
}

}  // namespace

std::string_view provider_kind_name(ProviderKind kind) { return kKindNames[static_cast<size_t>(kind)]; }

std::optional<ProviderKind> parse_provider_kind(std::string_view name) {
  for (size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<ProviderKind>(i);
  }
  return std::nullopt;
}

void ProviderEndpoint::validate() const {
  const std::string k = kind_str(kind);
  if (max_in_flight < 1) throw Error(ErrorCode::kInvalidConfig, "providers." + k + ".max_in_flight must be >= 1");
  if (retry.max_attempts < 1) {
    throw Error(ErrorCode::kInvalidConfig, "providers." + k + ".retry.max_attempts must be >= 1");
  }
  if (retry.backoff_base_ms < 0 || retry.backoff_cap_ms < retry.backoff_base_ms) {
    throw Error(ErrorCode::kInvalidConfig, "providers." + k + ".retry: need 0 <= backoff_base_ms <= backoff_cap_ms");
  }
  if (kind == ProviderKind::kDepthProvider && !depth_convention) {
    throw Error(ErrorCode::kUnconfiguredProvider, "providers.depth: depth_convention must be declared");
  }
}

Json ProviderRequest::to_json() const {
  return Json{{"correlation_id", correlation_id}, {"kind", kind_str(kind)}, {"operation", operation}, {"body", body}};
}

std::string make_correlation_id(ProviderKind kind, std::string_view operation, const Json& body) {
  return kind_str(kind) + "." + std::string(operation) + "." + hex64(fnv1a64(canonical_json(body)));
}

std::string replay_fixture_path(const std::string& dir, const ProviderRequest& request) {
  const std::string hash = hex64(fnv1a64(canonical_json(request.body)));
  return (fs::path(dir) / kind_str(request.kind) / (request.operation + "-" + hash + ".json")).string();
}

RecordingTransport::RecordingTransport(std::shared_ptr<Transport> inner, std::string dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {}

ProviderResponse RecordingTransport::send(const ProviderRequest& request) {
  ProviderResponse response = inner_->send(request);
  const fs::path path = replay_fixture_path(dir_, request);
  Json fixture = {{"request", request.to_json()},
                  {"response", {{"correlation_id", response.correlation_id}, {"body", response.body}}}};
  std::lock_guard<std::mutex> lock(mutex_);
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << canonical_json(fixture) << "\n";
    if (!out) throw Error(ErrorCode::kIo, "cannot write fixture " + tmp.string());
  }
  fs::rename(tmp, path);
  return response;
}

ProviderResponse ReplayTransport::send(const ProviderRequest& request) {
  const std::string path = replay_fixture_path(dir_, request);
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFixture, "no replay fixture for " + request.correlation_id + " at " + path);
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("response") || !j["response"].is_object()) {
    throw Error(ErrorCode::kMissingFixture, "corrupt replay fixture " + path);
  }
  const Json& r = j["response"];
  ProviderResponse out;
  out.correlation_id = r.value("correlation_id", std::string());
  out.body = r.value("body", Json::object());
  return out;
}

InFlightLimiter::InFlightLimiter(int max_in_flight) : max_(std::max(1, max_in_flight)) {}

void InFlightLimiter::acquire() {
  std::unique_lock<std::mutex> lock(mutex_);
  cv_.wait(lock, [&] { return current_ < max_; });
  ++current_;
  peak_ = std::max(peak_, current_);
}

void InFlightLimiter::release() {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    --current_;
  }
  cv_.notify_one();
}

int InFlightLimiter::peak() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return peak_;
}

ProviderClient::ProviderClient(ProviderEndpoint endpoint, std::shared_ptr<Transport> transport, Sleeper sleeper)
    : endpoint_(std::move(endpoint)),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)),
      limiter_(std::make_shared<InFlightLimiter>(endpoint_.max_in_flight)),
      attempts_(std::make_shared<std::atomic<long long>>(0)) {
  endpoint_.validate();
  if (!transport_) throw Error(ErrorCode::kUnconfiguredProvider, "provider " + kind_str(endpoint_.kind) + " has no transport");
  if (!sleeper_) {
    sleeper_ = [](double ms) { std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms)); };
  }
}

long long ProviderClient::attempts() const { return attempts_->load(); }

ProviderResponse ProviderClient::call(std::string_view operation, Json body) {
  ProviderRequest request;
  request.kind = endpoint_.kind;
  request.operation = std::string(operation);
  request.correlation_id = make_correlation_id(endpoint_.kind, operation, body);
  request.body = std::move(body);

  const RetryPolicy& policy = endpoint_.retry;
  std::string last_error;
  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    attempts_->fetch_add(1);
    try {
      ProviderResponse response;
      {
        InFlightLimiter::Guard guard(*limiter_);
        response = transport_->send(request);
      }
      if (response.correlation_id != request.correlation_id) {
        throw Error(ErrorCode::kCorrelationMismatch, "response " + response.correlation_id + " does not answer " +
                                                         request.correlation_id);
      }
      return response;
    } catch (const TransportError& e) {
      last_error = e.what();
    }
    if (attempt < policy.max_attempts) {
      const double full = std::min(policy.backoff_cap_ms, policy.backoff_base_ms * std::pow(2.0, attempt - 1));
      sleeper_(full * (0.5 + 0.5 * jitter_fraction(request.correlation_id, attempt)));
    }
  }
  throw Error(ErrorCode::kExhaustedRetries, request.correlation_id + ": gave up after " +
                                                std::to_string(policy.max_attempts) + " attempts: " + last_error);
}

// ---------------------------------------------------------------------------
// Request bodies
// ---------------------------------------------------------------------------

Json caption_request_body(const ImageRef& image) {
  return Json{{"image", image_to_json(image)},
              {"system_prompt", std::string(caption_system_prompt())},
              {"user_prompt", render_prompt(caption_user_prompt(), {{"question", ""}})}};
}

Json region_caption_request_body(const ImageRef& image, const BBox& box, const std::string& hint) {
  const Json crop = box_to_int_json(box);
  const std::map<std::string, std::string> vars = {
      {"region_note", ""},
      {"fisheye_note", ""},
      {"position_hint", ""},
      {"hint", hint},
      {"xmin", crop[0].dump()},
      {"ymin", crop[1].dump()},
      {"xmax", crop[2].dump()},
      {"ymax", crop[3].dump()},
      {"W", std::to_string(image.width)},
      {"H", std::to_string(image.height)}};
  return Json{{"image", image_to_json(image)},
              {"crop", crop},
              {"hint", hint},
              {"system_prompt", std::string(region_system_prompt())},
              {"user_prompt", render_prompt(region_user_prompt(), vars)}};
}

Json detection_request_body(const ImageRef& image, const std::vector<std::string>& queries) {
  return Json{{"image", image_to_json(image)}, {"queries", queries}};
}

Json orientation_request_body(const ImageRef& image, const BBox& box) {
  return Json{{"image", image_to_json(image)},
              {"crop", box_to_int_json(box)},
              {"system_prompt", std::string(orientation_system_prompt())}};
}

Json depth_request_body(const ImageRef& image) { return Json{{"image", image_to_json(image)}}; }

Json judge_request_body(const ImageRef& image, const std::string& question, const std::string& qa_id) {
  return Json{{"image", image_to_json(image)}, {"question", question}, {"qa_id", qa_id}};
}

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

ExpertGateway::ExpertGateway(GatewayOptions options) : options_(std::move(options)) {}

void ExpertGateway::configure(ProviderEndpoint endpoint, std::shared_ptr<Transport> transport,
                              ProviderClient::Sleeper sleeper) {
  const ProviderKind kind = endpoint.kind;
  clients_[kind] = std::make_unique<ProviderClient>(std::move(endpoint), std::move(transport), std::move(sleeper));
}

bool ExpertGateway::has(ProviderKind kind) const { return clients_.count(kind) > 0; }

ProviderClient& ExpertGateway::client(ProviderKind kind) {
  auto it = clients_.find(kind);
  if (it == clients_.end()) {
    throw Error(ErrorCode::kUnconfiguredProvider, "no " + kind_str(kind) + " provider configured");
  }
  return *it->second;
}

std::string ExpertGateway::resolve(const ImageRef& image, const std::string& uri) const {
  return options_.resolve_path ? options_.resolve_path(image, uri) : uri;
}

std::string ExpertGateway::text_field(const ProviderResponse& response, ProviderKind kind) const {
  auto it = response.body.find("text");
  if (it == response.body.end() || !it->is_string()) {
    throw Error(ErrorCode::kUnparseableResponse, kind_str(kind) + ": response lacks a 'text' string");
  }
  return it->get<std::string>();
}

CaptionResult ExpertGateway::request_global_caption(const ImageRef& image) {
  const auto response = client(ProviderKind::kCaptioner).call("caption", caption_request_body(image));
  return parse_caption_response(text_field(response, ProviderKind::kCaptioner));
}

RegionCaption ExpertGateway::request_region_caption(const ImageRef& image, const BBox& box, const std::string& hint) {
  if (!box.valid_within(image.width, image.height)) {
    throw Error(ErrorCode::kOutOfBounds, "region caption: box outside image " + image.key());
  }
  const auto response =
      client(ProviderKind::kCaptioner).call("region_caption", region_caption_request_body(image, box, hint));
  return clean_region_caption(text_field(response, ProviderKind::kCaptioner), options_.region_word_limit);
}

std::vector<DetectionResult> ExpertGateway::detect_objects(const ImageRef& image,
                                                           const std::vector<std::string>& queries) {
  if (queries.empty()) throw Error(ErrorCode::kMalformed, "detect_objects: queries must be non-empty");
  const auto response = client(ProviderKind::kDetector).call("detect", detection_request_body(image, queries));
  auto it = response.body.find("results");
  if (it == response.body.end() || !it->is_array() || it->size() != queries.size()) {
    throw Error(ErrorCode::kUnparseableResponse, "detector: expected one result per query");
  }
  std::vector<DetectionResult> results;
  results.reserve(queries.size());
  for (size_t q = 0; q < queries.size(); ++q) {
    const Json& r = (*it)[q];
    if (!r.is_object() || !r.contains("boxes") || !r["boxes"].is_array()) {
      throw Error(ErrorCode::kUnparseableResponse, "detector: results[" + std::to_string(q) + "] lacks 'boxes'");
    }
    DetectionResult dr;
    dr.query = queries[q];
    for (const auto& b : r["boxes"]) {
      const Json* coords = b.contains("bbox") ? &b["bbox"] : nullptr;
      if (!coords || !coords->is_array() || coords->size() != 4 || !b.contains("confidence") ||
          !b["confidence"].is_number()) {
        throw Error(ErrorCode::kUnparseableResponse, "detector: malformed box in results[" + std::to_string(q) + "]");
      }
      for (const auto& c : *coords) {
        if (!c.is_number()) throw Error(ErrorCode::kUnparseableResponse, "detector: non-numeric box coordinate");
      }
      BBox box{std::clamp((*coords)[0].get<double>(), 0.0, static_cast<double>(image.width)),
               std::clamp((*coords)[1].get<double>(), 0.0, static_cast<double>(image.height)),
               std::clamp((*coords)[2].get<double>(), 0.0, static_cast<double>(image.width)),
               std::clamp((*coords)[3].get<double>(), 0.0, static_cast<double>(image.height))};
      // Boxes that lie entirely outside the image collapse under clipping.
      if (!box.valid_within(image.width, image.height)) continue;
      dr.boxes.push_back({box, std::clamp(b["confidence"].get<double>(), 0.0, 1.0)});
    }
    std::stable_sort(dr.boxes.begin(), dr.boxes.end(),
                     [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
    results.push_back(std::move(dr));
  }
  return results;
}

OrientationResult ExpertGateway::request_orientation(const ImageRef& image, const BBox& box) {
  const auto response =
      client(ProviderKind::kOrientationEstimator).call("orientation", orientation_request_body(image, box));
  return parse_orientation_response(text_field(response, ProviderKind::kOrientationEstimator));
}

DepthArtifactHeader ExpertGateway::probe_depth_artifact(const ImageRef& image) {
  if (!image.depth_uri) throw Error(ErrorCode::kMissingArtifact, image.key() + ": no depth_uri");
  DepthArtifactHeader h = read_depth_header(resolve(image, *image.depth_uri));
  if (h.width != image.width || h.height != image.height) {
    throw Error(ErrorCode::kDimensionMismatch, image.key() + ": depth artifact is " + std::to_string(h.width) + "x" +
                                                   std::to_string(h.height) + ", image is " +
                                                   std::to_string(image.width) + "x" + std::to_string(image.height));
  }
  return h;
}

DepthMap ExpertGateway::fetch_depth_map(const ImageRef& image) {
  DepthMap map;
  if (image.depth_uri) {
    std::shared_ptr<const DepthMap> cached = depth_store_ ? depth_store_->find(*image.depth_uri) : nullptr;
    if (cached) {
      map = *cached;
    } else {
      const std::string path = resolve(image, *image.depth_uri);
      if (!fs::exists(path)) throw Error(ErrorCode::kMissingArtifact, image.key() + ": depth artifact not found: " + path);
      map = read_depth_artifact(path);
    }
  } else {
    if (!has(ProviderKind::kDepthProvider)) {
      throw Error(ErrorCode::kMissingArtifact, image.key() + ": no depth_uri and no depth provider configured");
    }
    ProviderClient& c = client(ProviderKind::kDepthProvider);
    const auto response = c.call("depth", depth_request_body(image));
    const Json& body = response.body;
    if (!body.contains("width") || !body.contains("height") || !body.contains("values") ||
        !body["width"].is_number_integer() || !body["height"].is_number_integer() || !body["values"].is_array()) {
      throw Error(ErrorCode::kUnparseableResponse, "depth: response needs width, height and values");
    }
    map.width = body["width"].get<int>();
    map.height = body["height"].get<int>();
    map.convention = *c.endpoint().depth_convention;
    map.values.reserve(body["values"].size());
    for (const auto& v : body["values"]) {
      if (v.is_null()) {
        map.values.push_back(std::numeric_limits<float>::quiet_NaN());
      } else if (v.is_number()) {
        map.values.push_back(v.get<float>());
      } else {
        throw Error(ErrorCode::kUnparseableResponse, "depth: non-numeric value");
      }
    }
  }
  if (map.width != image.width || map.height != image.height) {
    throw Error(ErrorCode::kDimensionMismatch, image.key() + ": depth map is " + std::to_string(map.width) + "x" +
                                                   std::to_string(map.height) + ", image is " +
                                                   std::to_string(image.width) + "x" + std::to_string(image.height));
  }
  return canonicalize(std::move(map));
}

std::string ExpertGateway::judge_answer(const ImageRef& image, const std::string& question, const std::string& qa_id) {
  const auto response = client(ProviderKind::kJudge).call("answer", judge_request_body(image, question, qa_id));
  return text_field(response, ProviderKind::kJudge);
}

std::vector<double> ExpertGateway::embed_image(const ImageRef& image) {
  const auto response = client(ProviderKind::kEmbedder).call("image", Json{{"image", image_to_json(image)}});
  return parse_vector(response.body, "embedder");
}

std::vector<double> ExpertGateway::embed_text(const std::string& text) {
  const auto response = client(ProviderKind::kEmbedder).call("text", Json{{"text", text}});
  return parse_vector(response.body, "embedder");
}

}  // namespace forge
