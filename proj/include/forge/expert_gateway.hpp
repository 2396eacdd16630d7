#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forge/depth_map.hpp"
#include "forge/scene_model.hpp"

namespace forge {

// ---------------------------------------------------------------------------
// Endpoint configuration
// ---------------------------------------------------------------------------

enum class ProviderKind { kCaptioner, kDetector, kDepthProvider, kOrientationEstimator, kJudge, kEmbedder };

/// captioner, detector, depth, orientation, judge, embedder
std::string_view provider_kind_name(ProviderKind kind);
std::optional<ProviderKind> parse_provider_kind(std::string_view name);

struct RetryPolicy {
  int max_attempts = 3;
  double backoff_base_ms = 50.0;
  double backoff_cap_ms = 2000.0;
};

struct ProviderEndpoint {
  ProviderKind kind = ProviderKind::kCaptioner;
  std::string base_url;
  /// Name of the environment variable holding the bearer token; empty = none.
  std::string auth_env_var;
  int max_in_flight = 4;
  RetryPolicy retry;
  /// Required for depth providers; the engine refuses to guess.
  std::optional<DepthConvention> depth_convention;

  /// Throws kInvalidConfig / kUnconfiguredProvider.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Transport layer
// ---------------------------------------------------------------------------

struct ProviderRequest {
  ProviderKind kind = ProviderKind::kCaptioner;
  std::string operation;
  /// Content-derived, so retries and replays of one request share it.
  std::string correlation_id;
  Json body;

  Json to_json() const;
};

struct ProviderResponse {
  std::string correlation_id;
  Json body;
};

/// Moves one request to a provider and back. Implementations throw
/// TransportError for transient failures and Error for permanent ones.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual ProviderResponse send(const ProviderRequest& request) = 0;
};

/// Adapts a callable; used by tests to script provider behaviour.
class FunctionTransport : public Transport {
 public:
  using Handler = std::function<ProviderResponse(const ProviderRequest&)>;
  explicit FunctionTransport(Handler handler) : handler_(std::move(handler)) {}
  ProviderResponse send(const ProviderRequest& request) override { return handler_(request); }

 private:
  Handler handler_;
};

/// POST <base_url>/v1/<kind>/<operation> with the request JSON as body.
/// 429 and 5xx responses and connection failures are transient.
class HttpTransport : public Transport {
 public:
  HttpTransport(std::string base_url, std::string auth_env_var, double timeout_seconds = 60.0);
  ProviderResponse send(const ProviderRequest& request) override;

 private:
  std::string host_;
  std::string path_prefix_;
  std::string auth_env_var_;
  double timeout_seconds_;
};

/// "<dir>/<kind>/<operation>-<hash>.json", holding {"request", "response"}.
std::string replay_fixture_path(const std::string& dir, const ProviderRequest& request);

/// Forwards to an inner transport and writes every exchange as a fixture.
class RecordingTransport : public Transport {
 public:
  RecordingTransport(std::shared_ptr<Transport> inner, std::string dir);
  ProviderResponse send(const ProviderRequest& request) override;

 private:
  std::shared_ptr<Transport> inner_;
  std::string dir_;
  std::mutex mutex_;
};

/// Serves recorded fixtures; a missing fixture is a permanent kMissingFixture.
class ReplayTransport : public Transport {
 public:
  explicit ReplayTransport(std::string dir) : dir_(std::move(dir)) {}
  ProviderResponse send(const ProviderRequest& request) override;

 private:
  std::string dir_;
};

/// Counting gate bounding concurrent requests to one endpoint.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(int max_in_flight);

  void acquire();
  void release();
  int peak() const;

  class Guard {
   public:
    explicit Guard(InFlightLimiter& limiter) : limiter_(limiter) { limiter_.acquire(); }
    ~Guard() { limiter_.release(); }
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;

   private:
    InFlightLimiter& limiter_;
  };

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  int max_;
  int current_ = 0;
  int peak_ = 0;
};

/// One configured endpoint: correlation ids, in-flight bound, retries with
/// jittered exponential backoff.
class ProviderClient {
 public:
  using Sleeper = std::function<void(double milliseconds)>;

  ProviderClient(ProviderEndpoint endpoint, std::shared_ptr<Transport> transport, Sleeper sleeper = {});

  /// Throws Error(kExhaustedRetries) after max_attempts transient failures and
  /// Error(kCorrelationMismatch) when the response answers another request.
  ProviderResponse call(std::string_view operation, Json body);

  const ProviderEndpoint& endpoint() const { return endpoint_; }
  int peak_in_flight() const { return limiter_->peak(); }
  long long attempts() const;

 private:
  ProviderEndpoint endpoint_;
  std::shared_ptr<Transport> transport_;
  Sleeper sleeper_;
  std::shared_ptr<InFlightLimiter> limiter_;
  std::shared_ptr<std::atomic<long long>> attempts_;
};

std::string make_correlation_id(ProviderKind kind, std::string_view operation, const Json& body);

// ---------------------------------------------------------------------------
// Parsed provider content
// ---------------------------------------------------------------------------

struct CaptionResult {
  std::string caption;
  std::vector<std::string> objects;
  bool operator==(const CaptionResult&) const = default;
};

struct OrientationResult {
  std::string description;
  FacingLabel facing = FacingLabel::kUnknown;
};

struct RegionCaption {
  std::string caption;
  bool truncated = false;
  /// Set when the caption breaks a prompt rule (word limit); the record stays
  /// usable but is reported.
  std::optional<std::string> warning;
};

struct Detection {
  BBox bbox;
  double confidence = 0;
};

struct DetectionResult {
  std::string query;
  std::vector<Detection> boxes;  // confidence descending
};

/// Lowercase, trim, collapse spaces, singularize the head noun. Returns an
/// empty string for meta-terms ("image", "photo", ...).
std::string normalize_object_name(std::string_view name);

/// Parses "Caption: <text>\nObjects: [\"a\", \"b\"]". Throws kMissingCaption,
/// kMissingObjects or kUnbalancedList; never crashes on arbitrary text.
CaptionResult parse_caption_response(std::string_view text);

/// Parses {"description": ..., "facing": ...}. Throws kInvalidJson,
/// kMissingKey or kUnknownLabel.
OrientationResult parse_orientation_response(std::string_view text);

/// Trims, drops trailing punctuation and enforces the word limit when
/// word_limit > 0. Throws kEmptyCaption.
RegionCaption clean_region_caption(std::string_view text, int word_limit);

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

/// In-memory depth artifacts keyed by uri; consulted before the filesystem.
class DepthStore {
 public:
  virtual ~DepthStore() = default;
  virtual std::shared_ptr<const DepthMap> find(const std::string& uri) const = 0;
};

struct GatewayOptions {
  /// 0 disables the region caption word-limit check.
  int region_word_limit = 20;
  /// Maps an image's uri/depth_uri to a filesystem path (relative uris are
  /// resolved per source). Identity when unset.
  std::function<std::string(const ImageRef&, const std::string&)> resolve_path;
};

class ExpertGateway {
 public:
  explicit ExpertGateway(GatewayOptions options = {});

  void configure(ProviderEndpoint endpoint, std::shared_ptr<Transport> transport,
                 ProviderClient::Sleeper sleeper = {});
  bool has(ProviderKind kind) const;
  /// Throws kUnconfiguredProvider.
  ProviderClient& client(ProviderKind kind);
  void set_depth_store(std::shared_ptr<const DepthStore> store) { depth_store_ = std::move(store); }

  CaptionResult request_global_caption(const ImageRef& image);
  RegionCaption request_region_caption(const ImageRef& image, const BBox& box, const std::string& hint);
  std::vector<DetectionResult> detect_objects(const ImageRef& image, const std::vector<std::string>& queries);
  OrientationResult request_orientation(const ImageRef& image, const BBox& box);
  /// Canonical (DistanceIncreasing) map. Uses image.depth_uri when present,
  /// the depth provider otherwise.
  DepthMap fetch_depth_map(const ImageRef& image);
  /// Validates an attached artifact's header (convention tag + dims) without
  /// loading the grid.
  DepthArtifactHeader probe_depth_artifact(const ImageRef& image);
  std::string judge_answer(const ImageRef& image, const std::string& question, const std::string& qa_id);
  std::vector<double> embed_image(const ImageRef& image);
  std::vector<double> embed_text(const std::string& text);

  std::string resolve(const ImageRef& image, const std::string& uri) const;

 private:
  std::string text_field(const ProviderResponse& response, ProviderKind kind) const;

  GatewayOptions options_;
  std::map<ProviderKind, std::unique_ptr<ProviderClient>> clients_;
  std::shared_ptr<const DepthStore> depth_store_;
};

/// Request bodies, shared by the gateway and anything that needs to predict a
/// request (fixture generators).
Json caption_request_body(const ImageRef& image);
Json region_caption_request_body(const ImageRef& image, const BBox& box, const std::string& hint);
Json detection_request_body(const ImageRef& image, const std::vector<std::string>& queries);
Json orientation_request_body(const ImageRef& image, const BBox& box);
Json depth_request_body(const ImageRef& image);
Json judge_request_body(const ImageRef& image, const std::string& question, const std::string& qa_id);

}  // namespace forge
