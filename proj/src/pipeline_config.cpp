#include <filesystem>
#include <fstream>

#include "forge/error.hpp"
#include "forge/pipeline.hpp"

namespace forge {
namespace {

namespace fs = std::filesystem;

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::kInvalidConfig, "config " + path + ": " + what);
}

void only_keys(const Json& obj, std::initializer_list<const char*> keys, const std::string& path) {
  if (!obj.is_object()) bad(path, "expected object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) bad(path, "unknown key '" + it.key() + "'");
  }
}

template <typename T>
T get_or(const Json& obj, const char* key, T fallback, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const Json::exception&) {
    bad(path + "." + key, "wrong type");
  }
}

std::string resolve_path(const std::string& base, const std::string& p) {
  if (p.empty()) return p;
  fs::path path(p);
  if (path.is_relative()) path = fs::path(base) / path;
  return path.lexically_normal().string();
}

std::set<std::string> string_set(const Json& j, const std::string& path) {
  if (!j.is_array()) bad(path, "expected array of strings");
  std::set<std::string> out;
  for (const auto& e : j) {
    if (!e.is_string()) bad(path, "expected array of strings");
    out.insert(e.get<std::string>());
  }
  return out;
}

std::vector<std::string> string_list(const Json& j, const std::string& path) {
  if (!j.is_array()) bad(path, "expected array of strings");
  std::vector<std::string> out;
  for (const auto& e : j) {
    if (!e.is_string()) bad(path, "expected array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

ProviderConfig parse_provider(ProviderKind kind, const Json& j, const std::string& base, const std::string& path) {
  only_keys(j,
            {"transport", "base_url", "auth_env_var", "max_in_flight", "retry", "depth_convention", "fixtures_dir",
             "record_inner", "timeout_seconds", "behavior"},
            path);
  ProviderConfig pc;
  pc.endpoint.kind = kind;
  pc.transport = get_or<std::string>(j, "transport", "mock", path);
  if (pc.transport != "mock" && pc.transport != "http" && pc.transport != "replay" && pc.transport != "record") {
    bad(path + ".transport", "expected mock, http, replay or record");
  }
  pc.endpoint.base_url = get_or<std::string>(j, "base_url", "", path);
  pc.endpoint.auth_env_var = get_or<std::string>(j, "auth_env_var", "", path);
  pc.endpoint.max_in_flight = get_or<int>(j, "max_in_flight", 4, path);
  if (j.contains("retry")) {
    const Json& r = j["retry"];
    only_keys(r, {"max_attempts", "backoff_base_ms", "backoff_cap_ms"}, path + ".retry");
    pc.endpoint.retry.max_attempts = get_or<int>(r, "max_attempts", 3, path + ".retry");
    pc.endpoint.retry.backoff_base_ms = get_or<double>(r, "backoff_base_ms", 50.0, path + ".retry");
    pc.endpoint.retry.backoff_cap_ms = get_or<double>(r, "backoff_cap_ms", 2000.0, path + ".retry");
  }
  if (j.contains("depth_convention")) {
    pc.endpoint.depth_convention = parse_convention(get_or<std::string>(j, "depth_convention", "", path));
  }
  pc.fixtures_dir = resolve_path(base, get_or<std::string>(j, "fixtures_dir", "", path));
  pc.record_inner = get_or<std::string>(j, "record_inner", "http", path);
  pc.timeout_seconds = get_or<double>(j, "timeout_seconds", 60.0, path);
  pc.judge_behavior = parse_judge_behavior(get_or<std::string>(j, "behavior", "gold", path));
  if ((pc.transport == "http" || (pc.transport == "record" && pc.record_inner == "http")) && pc.endpoint.base_url.empty()) {
    bad(path + ".base_url", "required for http transport");
  }
  if ((pc.transport == "replay" || pc.transport == "record") && pc.fixtures_dir.empty()) {
    bad(path + ".fixtures_dir", "required for replay/record transport");
  }
  return pc;
}

Json provider_to_json(const ProviderConfig& pc) {
  Json j = {{"transport", pc.transport},
            {"base_url", pc.endpoint.base_url},
            {"auth_env_var", pc.endpoint.auth_env_var},
            {"max_in_flight", pc.endpoint.max_in_flight},
            {"retry",
             {{"max_attempts", pc.endpoint.retry.max_attempts},
              {"backoff_base_ms", pc.endpoint.retry.backoff_base_ms},
              {"backoff_cap_ms", pc.endpoint.retry.backoff_cap_ms}}},
            {"fixtures_dir", pc.fixtures_dir},
            {"record_inner", pc.record_inner},
            {"timeout_seconds", pc.timeout_seconds},
            {"behavior", pc.judge_behavior == JudgeBehavior::kGold     ? "gold"
                         : pc.judge_behavior == JudgeBehavior::kMutate ? "mutate"
                                                                       : "fail"}};
  if (pc.endpoint.depth_convention) j["depth_convention"] = std::string(convention_name(*pc.endpoint.depth_convention));
  return j;
}

}  // namespace

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::kFilter: return "filter";
    case Stage::kExtract: return "extract";
    case Stage::kGenerate: return "generate";
    case Stage::kVerify: return "verify";
  }
  return "filter";
}

std::optional<Stage> parse_stage(std::string_view name) {
  for (Stage s : kAllStages) {
    if (stage_name(s) == name) return s;
  }
  return std::nullopt;
}

PipelineConfig PipelineConfig::from_json(const Json& j, const std::string& base_dir) {
  only_keys(j,
            {"sources", "providers", "mock_world", "filters", "sampling", "depth", "gate", "region_word_limit",
             "templates", "shard_count", "worker_count", "seed", "output_dir", "stages", "commit_every", "fsync",
             "strict_output", "interrupt_after_records"},
            "");
  PipelineConfig c;
  if (!j.contains("sources") || !j["sources"].is_array() || j["sources"].empty()) {
    bad("sources", "need a non-empty array");
  }
  for (size_t i = 0; i < j["sources"].size(); ++i) {
    const std::string path = "sources[" + std::to_string(i) + "]";
    const Json& s = j["sources"][i];
    only_keys(s, {"name", "manifest"}, path);
    SourceConfig sc;
    sc.name = get_or<std::string>(s, "name", "", path);
    sc.manifest = resolve_path(base_dir, get_or<std::string>(s, "manifest", "", path));
    if (sc.name.empty() || sc.manifest.empty()) bad(path, "needs name and manifest");
    sc.base_dir = fs::path(sc.manifest).parent_path().string();
    c.sources.push_back(sc);
  }

  if (j.contains("providers")) {
    const Json& p = j["providers"];
    if (!p.is_object()) bad("providers", "expected object");
    for (auto it = p.begin(); it != p.end(); ++it) {
      const auto kind = parse_provider_kind(it.key());
      if (!kind) bad("providers", "unknown provider kind '" + it.key() + "'");
      c.providers[*kind] = parse_provider(*kind, it.value(), base_dir, "providers." + it.key());
    }
  }
  c.mock_world = resolve_path(base_dir, get_or<std::string>(j, "mock_world", "", ""));

  if (j.contains("filters")) {
    const Json& f = j["filters"];
    only_keys(f, {"quality", "semantic", "bbox", "min_confidence", "rebalance"}, "filters");
    if (f.contains("quality")) {
      const Json& q = f["quality"];
      only_keys(q, {"enabled", "min_sharpness", "clip_low", "clip_high", "min_exposure", "min_resolution"},
                "filters.quality");
      c.filters.quality = get_or<bool>(q, "enabled", true, "filters.quality");
      auto& t = c.filters.thresholds;
      t.min_sharpness = get_or<double>(q, "min_sharpness", t.min_sharpness, "filters.quality");
      t.clip_low = get_or<double>(q, "clip_low", t.clip_low, "filters.quality");
      t.clip_high = get_or<double>(q, "clip_high", t.clip_high, "filters.quality");
      t.min_exposure = get_or<double>(q, "min_exposure", t.min_exposure, "filters.quality");
      t.min_resolution = get_or<int>(q, "min_resolution", t.min_resolution, "filters.quality");
    }
    if (f.contains("semantic")) {
      const Json& s = f["semantic"];
      only_keys(s, {"enabled", "positive", "negative", "margin"}, "filters.semantic");
      c.filters.semantic = get_or<bool>(s, "enabled", false, "filters.semantic");
      if (s.contains("positive")) c.filters.anchors.positive_anchors = string_list(s["positive"], "filters.semantic.positive");
      if (s.contains("negative")) c.filters.anchors.negative_anchors = string_list(s["negative"], "filters.semantic.negative");
      c.filters.anchors.margin = get_or<double>(s, "margin", 0.0, "filters.semantic");
    }
    c.filters.bbox = get_or<bool>(f, "bbox", true, "filters");
    c.filters.min_confidence = get_or<double>(f, "min_confidence", c.filters.min_confidence, "filters");
    if (f.contains("rebalance")) {
      const Json& r = f["rebalance"];
      only_keys(r, {"enabled", "keep_rate", "overrepresented"}, "filters.rebalance");
      c.filters.rebalance = get_or<bool>(r, "enabled", true, "filters.rebalance");
      c.filters.keep_rate = get_or<double>(r, "keep_rate", 0.10, "filters.rebalance");
      if (r.contains("overrepresented")) {
        c.filters.overrepresented = string_set(r["overrepresented"], "filters.rebalance.overrepresented");
      }
    }
  }

  if (j.contains("sampling")) {
    const Json& s = j["sampling"];
    only_keys(s, {"max_per_image", "min_depth_quality"}, "sampling");
    if (s.contains("max_per_image")) {
      const Json& m = s["max_per_image"];
      if (!m.is_object()) bad("sampling.max_per_image", "expected object");
      for (auto it = m.begin(); it != m.end(); ++it) {
        const auto task = parse_task(it.key());
        if (!task) bad("sampling.max_per_image", "unknown task '" + it.key() + "'");
        if (!it->is_number_integer()) bad("sampling.max_per_image." + it.key(), "expected integer");
        c.generation.policy.max_per_image[*task] = it->get<int>();
      }
    }
    if (s.contains("min_depth_quality")) {
      c.generation.policy.min_depth_quality.clear();
      for (const auto& name : string_set(s["min_depth_quality"], "sampling.min_depth_quality")) {
        const auto cls = parse_depth_class(name);
        if (!cls) bad("sampling.min_depth_quality", "unknown class '" + name + "'");
        c.generation.policy.min_depth_quality.insert(*cls);
      }
    }
  }
  if (j.contains("depth")) {
    const Json& d = j["depth"];
    only_keys(d, {"epsilon", "min_valid_fraction", "max_dispersion", "outlier_fence_k"}, "depth");
    c.generation.depth_epsilon = get_or<double>(d, "epsilon", 0.02, "depth");
    c.generation.reliability.min_valid_fraction = get_or<double>(d, "min_valid_fraction", 0.5, "depth");
    c.generation.reliability.max_dispersion = get_or<double>(d, "max_dispersion", 0.5, "depth");
    c.generation.depth_options.outlier_fence_k = get_or<double>(d, "outlier_fence_k", 1.5, "depth");
  }
  if (j.contains("gate")) {
    only_keys(j["gate"], {"iou_threshold"}, "gate");
    c.gate.iou_threshold = get_or<double>(j["gate"], "iou_threshold", 0.8, "gate");
  }
  c.region_word_limit = get_or<int>(j, "region_word_limit", 20, "");
  c.templates_path = resolve_path(base_dir, get_or<std::string>(j, "templates", "", ""));
  c.shard_count = get_or<int>(j, "shard_count", 1, "");
  c.worker_count = get_or<int>(j, "worker_count", 1, "");
  c.seed = get_or<std::uint64_t>(j, "seed", 0, "");
  c.generation.policy.seed = c.seed;
  c.output_dir = resolve_path(base_dir, get_or<std::string>(j, "output_dir", "run", ""));
  if (j.contains("stages")) {
    c.stages.clear();
    for (const auto& name : string_set(j["stages"], "stages")) {
      const auto st = parse_stage(name);
      if (!st) bad("stages", "unknown stage '" + name + "'");
      c.stages.insert(*st);
    }
  }
  c.commit_every = get_or<int>(j, "commit_every", 256, "");
  c.fsync = get_or<bool>(j, "fsync", false, "");
  c.strict_output = get_or<bool>(j, "strict_output", true, "");
  if (j.contains("interrupt_after_records")) {
    c.interrupt_after_records = get_or<long long>(j, "interrupt_after_records", 0, "");
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read config " + path);
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kInvalidConfig, "config is not valid JSON: " + path);
  return from_json(j, fs::absolute(path).parent_path().string());
}

Json PipelineConfig::to_json() const {
  Json sources = Json::array();
  for (const auto& s : this->sources) sources.push_back({{"name", s.name}, {"manifest", s.manifest}});
  Json providers = Json::object();
  for (const auto& [kind, pc] : this->providers) providers[std::string(provider_kind_name(kind))] = provider_to_json(pc);
  Json caps = Json::object();
  for (const auto& [task, cap] : generation.policy.max_per_image) caps[std::string(task_name(task))] = cap;
  Json classes = Json::array();
  for (DepthClass cls : generation.policy.min_depth_quality) classes.push_back(std::string(depth_class_name(cls)));
  const auto& t = filters.thresholds;
  Json stage_names = Json::array();
  for (Stage s : stages) stage_names.push_back(std::string(stage_name(s)));
  return Json{
      {"sources", sources},
      {"providers", providers},
      {"mock_world", mock_world},
      {"filters",
       {{"quality",
         {{"enabled", filters.quality},
          {"min_sharpness", t.min_sharpness},
          {"clip_low", t.clip_low},
          {"clip_high", t.clip_high},
          {"min_exposure", t.min_exposure},
          {"min_resolution", t.min_resolution}}},
        {"semantic",
         {{"enabled", filters.semantic},
          {"positive", filters.anchors.positive_anchors},
          {"negative", filters.anchors.negative_anchors},
          {"margin", filters.anchors.margin}}},
        {"bbox", filters.bbox},
        {"min_confidence", filters.min_confidence},
        {"rebalance",
         {{"enabled", filters.rebalance}, {"keep_rate", filters.keep_rate}, {"overrepresented", filters.overrepresented}}}}},
      {"sampling", {{"max_per_image", caps}, {"min_depth_quality", classes}}},
      {"depth",
       {{"epsilon", generation.depth_epsilon},
        {"min_valid_fraction", generation.reliability.min_valid_fraction},
        {"max_dispersion", generation.reliability.max_dispersion},
        {"outlier_fence_k", generation.depth_options.outlier_fence_k}}},
      {"gate", {{"iou_threshold", gate.iou_threshold}}},
      {"region_word_limit", region_word_limit},
      {"templates", templates_path},
      {"shard_count", shard_count},
      {"worker_count", worker_count},
      {"seed", seed},
      {"output_dir", output_dir},
      {"stages", stage_names},
      {"commit_every", commit_every},
      {"fsync", fsync},
      {"strict_output", strict_output}};
}

void PipelineConfig::validate() const {
  if (shard_count < 1) bad("shard_count", "must be >= 1");
  if (worker_count < 1) bad("worker_count", "must be >= 1");
  if (commit_every < 1) bad("commit_every", "must be >= 1");
  if (!(filters.keep_rate > 0.0 && filters.keep_rate <= 1.0)) bad("filters.rebalance.keep_rate", "must lie in (0, 1]");
  if (filters.semantic && (filters.anchors.positive_anchors.empty() || filters.anchors.negative_anchors.empty())) {
    bad("filters.semantic", "both anchor lists must be non-empty");
  }
  generation.policy.validate();
  std::set<std::string> names;
  for (const auto& s : sources) {
    if (!names.insert(s.name).second) bad("sources", "duplicate source name '" + s.name + "'");
  }
  for (const auto& [kind, pc] : providers) pc.endpoint.validate();

  auto need = [&](ProviderKind kind, Stage stage) {
    if (stages.count(stage) && !providers.count(kind)) {
      throw Error(ErrorCode::kUnconfiguredProvider, "stage " + std::string(stage_name(stage)) + " needs a " +
                                                        std::string(provider_kind_name(kind)) + " provider");
    }
  };
  need(ProviderKind::kCaptioner, Stage::kExtract);
  need(ProviderKind::kDetector, Stage::kExtract);
  need(ProviderKind::kOrientationEstimator, Stage::kExtract);
  need(ProviderKind::kJudge, Stage::kVerify);
  if (filters.semantic) need(ProviderKind::kEmbedder, Stage::kFilter);
  bool uses_mock = false;
  for (const auto& [kind, pc] : providers) {
    uses_mock = uses_mock || pc.transport == "mock" || (pc.transport == "record" && pc.record_inner == "mock");
  }
  if (uses_mock && mock_world.empty()) bad("mock_world", "required when a provider uses the mock transport");
}

std::string content_hash(const PipelineConfig& config, const TemplateRegistry& registry) {
  Json j = config.to_json();
  // Settings that change scheduling, not bytes.
  for (const char* key : {"worker_count", "output_dir", "stages", "commit_every", "fsync"}) j.erase(key);
  return hex64(fnv1a64(canonical_json(j) + "\x1f" + registry.digest()));
}

}  // namespace forge
