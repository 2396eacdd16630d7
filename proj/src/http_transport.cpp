#include <cstdlib>

#include <httplib.h>

#include "forge/error.hpp"
#include "forge/expert_gateway.hpp"

namespace forge {

HttpTransport::HttpTransport(std::string base_url, std::string auth_env_var, double timeout_seconds)
    : auth_env_var_(std::move(auth_env_var)), timeout_seconds_(timeout_seconds) {
  // Split "http://host:port/prefix" into the client origin and a path prefix.
  const size_t scheme = base_url.find("://");
  if (scheme == std::string::npos) throw Error(ErrorCode::kInvalidConfig, "base_url needs a scheme: " + base_url);
  const size_t path = base_url.find('/', scheme + 3);
  host_ = base_url.substr(0, path);
  path_prefix_ = path == std::string::npos ? "" : base_url.substr(path);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  if (host_.rfind("http://", 0) != 0) {
    throw Error(ErrorCode::kInvalidConfig, "only http:// endpoints are supported in this build: " + base_url);
  }
}

ProviderResponse HttpTransport::send(const ProviderRequest& request) {
  httplib::Client client(host_);
  const auto secs = static_cast<time_t>(timeout_seconds_);
  const auto usecs = static_cast<time_t>((timeout_seconds_ - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers = {{"X-Correlation-Id", request.correlation_id}};
  if (!auth_env_var_.empty()) {
    const char* token = std::getenv(auth_env_var_.c_str());
    if (!token || !*token) {
      throw Error(ErrorCode::kUnconfiguredProvider, "environment variable " + auth_env_var_ + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  const std::string path =
      path_prefix_ + "/v1/" + std::string(provider_kind_name(request.kind)) + "/" + request.operation;
  auto result = client.Post(path, headers, request.to_json().dump(), "application/json");
  if (!result) {
    throw TransportError(request.correlation_id + ": " + httplib::to_string(result.error()));
  }
  const int status = result->status;
  if (status == 429 || status >= 500) {
    throw TransportError(request.correlation_id + ": HTTP " + std::to_string(status));
  }
  if (status != 200) {
    throw Error(ErrorCode::kTransport, request.correlation_id + ": HTTP " + std::to_string(status) + ": " +
                                           result->body.substr(0, 200));
  }
  Json j = Json::parse(result->body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("correlation_id") || !j["correlation_id"].is_string() ||
      !j.contains("body")) {
    throw Error(ErrorCode::kUnparseableResponse, request.correlation_id + ": response is not a provider envelope");
  }
  return ProviderResponse{j["correlation_id"].get<std::string>(), j["body"]};
}

}  // namespace forge
