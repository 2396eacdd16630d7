#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "forge/expert_gateway.hpp"
#include "forge/ingest_filter.hpp"
#include "forge/mock_provider.hpp"
#include "forge/qa_forge.hpp"
#include "forge/quality_gate.hpp"
#include "forge/scene_model.hpp"

namespace forge {

enum class Stage { kFilter, kExtract, kGenerate, kVerify };
inline constexpr std::array<Stage, 4> kAllStages = {Stage::kFilter, Stage::kExtract, Stage::kGenerate,
                                                    Stage::kVerify};
/// filter, extract, generate, verify
std::string_view stage_name(Stage stage);
std::optional<Stage> parse_stage(std::string_view name);

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct SourceConfig {
  /// Must equal the source_dataset of every manifest line.
  std::string name;
  /// Absolute path of the manifest (one ImageRef JSON object per line).
  std::string manifest;
  /// Directory relative uris are resolved against (the manifest's directory).
  std::string base_dir;
};

struct ProviderConfig {
  ProviderEndpoint endpoint;
  /// mock | http | replay | record
  std::string transport = "mock";
  /// replay/record fixture directory.
  std::string fixtures_dir;
  /// Inner transport for record mode: mock | http.
  std::string record_inner = "http";
  double timeout_seconds = 60.0;
  JudgeBehavior judge_behavior = JudgeBehavior::kGold;
};

struct FilterConfig {
  bool quality = true;
  QualityThresholds thresholds;
  bool semantic = false;
  SemanticAnchorSet anchors;
  bool bbox = true;
  /// Detections below this confidence are ignored.
  double min_confidence = 0.3;
  bool rebalance = true;
  double keep_rate = 0.10;
  std::set<std::string> overrepresented = default_overrepresented_categories();
};

struct PipelineConfig {
  std::vector<SourceConfig> sources;
  std::map<ProviderKind, ProviderConfig> providers;
  /// Scene-record JSONL the mock transport answers from.
  std::string mock_world;
  FilterConfig filters;
  GenerationConfig generation;
  GateConfig gate;
  int region_word_limit = 20;
  /// Optional template registry file; the built-in registry otherwise.
  std::string templates_path;
  int shard_count = 1;
  int worker_count = 1;
  std::uint64_t seed = 0;
  std::string output_dir;
  std::set<Stage> stages = {kAllStages.begin(), kAllStages.end()};
  int commit_every = 256;
  bool fsync = false;
  bool strict_output = true;
  /// Test hook: abort (as if killed) after this many records have been
  /// processed across all stages of this invocation.
  std::optional<long long> interrupt_after_records;

  /// Paths inside `j` are resolved against base_dir. Throws kInvalidConfig.
  static PipelineConfig from_json(const Json& j, const std::string& base_dir);
  static PipelineConfig from_file(const std::string& path);
  /// Canonical JSON of every setting that influences output bytes.
  Json to_json() const;
  void validate() const;
};

/// Digest over the output-relevant config and the template registry. Resume
/// refuses checkpoints written under a different hash.
std::string content_hash(const PipelineConfig& config, const TemplateRegistry& registry);

/// Builds a gateway with one client per configured provider.
struct GatewayBundle {
  std::shared_ptr<ExpertGateway> gateway;
  std::shared_ptr<GoldBoard> gold;
  std::shared_ptr<MockWorld> world;
  std::shared_ptr<MockProvider> mock;
};
GatewayBundle build_gateway(const PipelineConfig& config);

// ---------------------------------------------------------------------------
// Sharding
// ---------------------------------------------------------------------------

/// Stable hash of (source_dataset, image_id) modulo shard_count.
int shard_of(const ImageRef& image, int shard_count);

/// Assignment for a whole manifest. Throws kDuplicateId naming the repeated
/// image.
std::vector<int> shard_inputs(const std::vector<ImageRef>& manifest, int shard_count);

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

struct StageStats {
  long long attempted = 0;
  long long emitted = 0;
  long long rejected = 0;
  long long quarantined = 0;
  std::map<std::string, long long> reasons;
  double wall_seconds = 0;

  void merge(const StageStats& other);
  bool conserved() const { return attempted == emitted + rejected + quarantined; }
  Json to_json() const;
  static StageStats from_json(const Json& j);
};

struct RunStats {
  /// Verified records per source and task.
  std::map<std::string, std::map<TaskKind, long long>> emitted;
  std::map<Stage, StageStats> stages;
  /// QA candidate accounting from the generate stage.
  std::map<TaskKind, TaskTally> generation;
  /// Object counts per category after detection, before rebalancing.
  std::map<std::string, long long> category_counts;
  /// Detections dropped inside kept images, by reason (bbox filter,
  /// rebalancing, low confidence).
  std::map<std::string, long long> object_drops;
  long long rebalanced_away = 0;
  long long judge_parse_warnings = 0;
  long long region_caption_warnings = 0;

  void merge(const RunStats& other);
  long long total(const std::string& source) const;
  long long total(TaskKind task) const;
  long long grand_total() const;
  bool conserved() const;
  Json to_json() const;
  static RunStats from_json(const Json& j);
};

/// Count table: one row per source, one column per task, totals row
/// and column. Throws if the totals do not add up.
std::string emit_stats(const RunStats& stats);

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

struct RunOptions {
  bool resume = false;
  /// Run only this stage (its inputs must already be materialized).
  std::optional<Stage> only_stage;
};

/// Runs the configured stages. Writes under config.output_dir:
///   stage0/shard-NNNN.jsonl          sharded manifest (ImageRef lines)
///   stage1_filtered/shard-NNNN.jsonl ImageRefs that passed the filters
///   stage2_scenes/shard-NNNN.jsonl   SceneRecords
///   stage3_raw_qa/shard-NNNN.jsonl   unverified QARecords
///   qa/shard-NNNN.jsonl              verified QARecords (final output)
///   rejections/shard-NNNN.csv        qa_id,reason,score
///   quarantine/<stage>-NNNN.jsonl    records held back by provider failures
///   drops/<stage>-NNNN.csv           filter/extract drop log
///   checkpoints/shard-NNNN.<stage>.json
///   stats.json, report.txt, run.json
/// Throws Error(kInterrupted) from the test hook, kCheckpointMismatch on a
/// resume under a different config.
RunStats run_pipeline(const PipelineConfig& config, const RunOptions& options = {});

/// Reads stats.json from a run directory.
RunStats load_run_stats(const std::string& run_dir);

struct VerifyReport {
  long long records = 0;
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Re-checks every output invariant of a finished run.
VerifyReport verify_run(const std::string& run_dir);

/// Paths of every qa/shard-*.jsonl file, in shard order.
std::vector<std::string> qa_shard_files(const std::string& run_dir);

}  // namespace forge
