#include "forge/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "forge/error.hpp"
#include "forge/random.hpp"

namespace forge {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

const std::set<std::string>& person_categories() {
  static const std::set<std::string> names = {"person", "man", "woman", "child", "boy", "girl", "people"};
  return names;
}

std::string shard_tag(int shard) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", shard);
  return buf;
}

const char* input_dir(Stage stage) {
  switch (stage) {
    case Stage::kFilter: return "stage0";
    case Stage::kExtract: return "stage1_filtered";
    case Stage::kGenerate: return "stage2_scenes";
    case Stage::kVerify: return "stage3_raw_qa";
  }
  return "";
}

const char* output_dir(Stage stage) {
  switch (stage) {
    case Stage::kFilter: return "stage1_filtered";
    case Stage::kExtract: return "stage2_scenes";
    case Stage::kGenerate: return "stage3_raw_qa";
    case Stage::kVerify: return "qa";
  }
  return "";
}

// Output files of one shard for one stage, relative to the run directory.
// Index 0 is the stage's main output.
std::vector<std::string> shard_outputs(Stage stage, int shard) {
  const std::string tag = shard_tag(shard);
  const std::string name(stage_name(stage));
  std::vector<std::string> out = {std::string(output_dir(stage)) + "/shard-" + tag + ".jsonl"};
  switch (stage) {
    case Stage::kFilter:
    case Stage::kExtract:
      out.push_back("drops/" + name + "-" + tag + ".csv");
      out.push_back("quarantine/" + name + "-" + tag + ".jsonl");
      break;
    case Stage::kGenerate:
      out.push_back("quarantine/" + name + "-" + tag + ".jsonl");
      break;
    case Stage::kVerify:
      out.push_back("rejections/shard-" + tag + ".csv");
      out.push_back("quarantine/" + name + "-" + tag + ".jsonl");
      break;
  }
  return out;
}

std::string checkpoint_rel(Stage stage, int shard) {
  return "checkpoints/shard-" + shard_tag(shard) + "." + std::string(stage_name(stage)) + ".json";
}

// Failures that say nothing about the record itself: the record is held back
// rather than rejected.
bool is_outage(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kTransport:
    case ErrorCode::kExhaustedRetries:
    case ErrorCode::kCorrelationMismatch:
    case ErrorCode::kMissingFixture:
    case ErrorCode::kUnconfiguredProvider:
      return true;
    default:
      return false;
  }
}

void write_file_atomic(const fs::path& path, const std::string& content, bool sync) {
  const fs::path tmp = path.string() + ".tmp";
  fs::create_directories(path.parent_path());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw Error(ErrorCode::kIo, "write failed: " + tmp.string());
  }
  if (sync) {
    const int fd = ::open(tmp.c_str(), O_RDONLY);
    if (fd >= 0) {
      ::fsync(fd);
      ::close(fd);
    }
  }
  fs::rename(tmp, path);
}

void fsync_path(const fs::path& path) {
  const int fd = ::open(path.c_str(), O_RDONLY);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

struct Checkpoint {
  int shard = 0;
  Stage stage = Stage::kFilter;
  std::string content_hash;
  long long records = 0;
  std::map<std::string, std::uintmax_t> outputs;
  RunStats stats;
  bool completed = false;

  Json to_json() const {
    Json out = Json::object();
    for (const auto& [rel, size] : outputs) out[rel] = size;
    return {{"shard_id", shard},
            {"stage", std::string(stage_name(stage))},
            {"content_hash", content_hash},
            {"records_committed", records},
            {"last_committed_record_index", records - 1},
            {"outputs", out},
            {"stats", stats.to_json()},
            {"completed", completed}};
  }

  static Checkpoint from_json(const Json& j) {
    Checkpoint c;
    c.shard = j.at("shard_id").get<int>();
    const auto st = parse_stage(j.at("stage").get<std::string>());
    if (!st) throw Error(ErrorCode::kMalformed, "checkpoint: unknown stage");
    c.stage = *st;
    c.content_hash = j.at("content_hash").get<std::string>();
    c.records = j.at("records_committed").get<long long>();
    for (const auto& [rel, size] : j.at("outputs").items()) c.outputs[rel] = size.get<std::uintmax_t>();
    c.stats = RunStats::from_json(j.at("stats"));
    c.completed = j.at("completed").get<bool>();
    return c;
  }
};

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read checkpoint " + path.string());
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kMalformed, "corrupt checkpoint " + path.string());
  try {
    return Checkpoint::from_json(j);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kMalformed, "corrupt checkpoint " + path.string() + ": " + e.what());
  }
}

class ShardWriter {
 public:
  ShardWriter(const fs::path& root, std::vector<std::string> rels, const std::map<std::string, std::uintmax_t>* resume,
              bool sync)
      : root_(root), rels_(std::move(rels)), sync_(sync) {
    for (const auto& rel : rels_) {
      const fs::path p = root_ / rel;
      fs::create_directories(p.parent_path());
      std::uintmax_t keep = 0;
      if (resume) {
        auto it = resume->find(rel);
        if (it != resume->end()) keep = it->second;
      }
      if (!fs::exists(p)) std::ofstream(p, std::ios::binary).flush();
      // Anything past the last commit is from the interrupted attempt.
      if (fs::file_size(p) != keep) fs::resize_file(p, keep);
      streams_.emplace_back(p, std::ios::binary | std::ios::app);
      if (!streams_.back()) throw Error(ErrorCode::kIo, "cannot open " + p.string());
    }
  }

  std::ofstream& operator[](size_t i) { return streams_[i]; }

  std::map<std::string, std::uintmax_t> commit() {
    std::map<std::string, std::uintmax_t> sizes;
    for (size_t i = 0; i < streams_.size(); ++i) {
      if (!streams_[i].flush()) throw Error(ErrorCode::kIo, "write failed: " + rels_[i]);
      const fs::path p = root_ / rels_[i];
      if (sync_) fsync_path(p);
      sizes[rels_[i]] = fs::file_size(p);
    }
    return sizes;
  }

 private:
  fs::path root_;
  std::vector<std::string> rels_;
  bool sync_;
  std::vector<std::ofstream> streams_;
};

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string quarantine_line(Stage stage, const std::string& input, const Error& e) {
  Json record = Json::parse(input, nullptr, false);
  if (record.is_discarded()) record = input;
  return canonical_json(Json{{"stage", std::string(stage_name(stage))},
                             {"record", record},
                             {"error", std::string(to_string(e.code()))},
                             {"message", e.what()}});
}

class RunContext {
 public:
  RunContext(const PipelineConfig& config, const fs::path& root)
      : config(config),
        root(root),
        registry(config.templates_path.empty() ? TemplateRegistry::builtin()
                                               : TemplateRegistry::from_file(config.templates_path)),
        hash(content_hash(config, registry)),
        bundle(build_gateway(config)) {
    generation = config.generation;
    generation.policy.seed = config.seed;
  }

  const PipelineConfig& config;
  fs::path root;
  TemplateRegistry registry;
  std::string hash;
  GatewayBundle bundle;
  GenerationConfig generation;
  std::map<std::string, std::vector<double>> anchor_embeddings;

  std::atomic<long long> processed{0};
  std::atomic<bool> stop{false};

  // Test hook and cross-worker abort, checked once per record.
  void tick() {
    if (stop.load()) throw Error(ErrorCode::kInterrupted, "stopped after a failure in another shard");
    const long long n = processed.fetch_add(1) + 1;
    if (config.interrupt_after_records && n >= *config.interrupt_after_records) {
      stop = true;
      throw Error(ErrorCode::kInterrupted, "interrupted after " + std::to_string(n) + " records");
    }
  }
};

// ---------------------------------------------------------------------------
// Stage bodies: one input line in, lines appended to the shard's outputs.
// ---------------------------------------------------------------------------

struct ShardState {
  ShardWriter& out;
  RunStats& stats;
  StageStats& stage;
};

void reject(ShardState& s, const std::string& reason) {
  ++s.stage.rejected;
  ++s.stage.reasons[reason];
}

void quarantine(ShardState& s, Stage stage, size_t stream, const std::string& line, const Error& e) {
  ++s.stage.quarantined;
  ++s.stage.reasons[std::string(to_string(e.code()))];
  s.out[stream] << quarantine_line(stage, line, e) << '\n';
}

void filter_record(RunContext& ctx, const std::string& line, ShardState& s) {
  const ImageRef image = image_from_json(Json::parse(line));
  ++s.stage.attempted;
  ExpertGateway& gw = *ctx.bundle.gateway;
  const FilterConfig& f = ctx.config.filters;
  auto drop = [&](const std::string& reason) {
    reject(s, reason);
    s.out[1] << csv_field(image.key()) << ',' << reason << '\n';
  };

  if (f.quality) {
    Raster raster;
    try {
      raster = read_raster(gw.resolve(image, image.uri));
    } catch (const Error& e) {
      drop(std::string(to_string(e.code())));
      return;
    }
    if (raster.width != image.width || raster.height != image.height) {
      drop(std::string(to_string(ErrorCode::kDimensionMismatch)));
      return;
    }
    const QualityReport q = assess_image_quality(raster, f.thresholds);
    if (!q.keep()) {
      drop(std::string(drop_reason_name(q.verdict)));
      return;
    }
  }
  if (f.semantic) {
    std::vector<double> embedding;
    try {
      embedding = gw.embed_image(image);
    } catch (const Error& e) {
      if (!is_outage(e)) throw;
      quarantine(s, Stage::kFilter, 2, line, e);
      return;
    }
    if (!semantic_filter(embedding, ctx.anchor_embeddings, f.anchors)) {
      drop(std::string(drop_reason_name(DropReason::kSemantic)));
      return;
    }
  }
  ++s.stage.emitted;
  s.out[0] << canonical_json(image_to_json(image)) << '\n';
}

void extract_record(RunContext& ctx, const std::string& line, ShardState& s) {
  const ImageRef image = image_from_json(Json::parse(line));
  ++s.stage.attempted;
  ExpertGateway& gw = *ctx.bundle.gateway;
  const FilterConfig& f = ctx.config.filters;
  // Object-level effects are kept aside until the image's fate is known.
  RunStats local;
  std::string drop_lines;
  auto log_drop = [&](const SceneObject& o, const std::string& reason) {
    ++local.object_drops[reason];
    drop_lines += csv_field(image.key()) + ',' + std::to_string(o.object_id) + ',' + csv_field(o.category) + ',' +
                  reason + '\n';
  };

  SceneRecord scene;
  scene.image = image;
  scene.provenance.filtered = true;
  try {
    const CaptionResult caption = gw.request_global_caption(image);
    scene.global_caption = caption.caption;
    scene.provenance.captioned = true;

    std::vector<std::string> queries;
    for (const auto& name : caption.objects) {
      const std::string q = normalize_object_name(name);
      if (!q.empty() && std::find(queries.begin(), queries.end(), q) == queries.end()) queries.push_back(q);
    }
    std::vector<SceneObject> objects;
    if (!queries.empty()) {
      int next_id = 0;
      for (const auto& result : gw.detect_objects(image, queries)) {
        for (const auto& det : result.boxes) {
          if (det.confidence < f.min_confidence) {
            ++local.object_drops["low_confidence"];
            continue;
          }
          SceneObject o;
          o.object_id = next_id++;
          o.category = result.query;
          o.bbox = det.bbox;
          o.is_person = person_categories().count(o.category) > 0;
          ++local.category_counts[o.category];
          if (f.bbox) {
            const DropReason why = filter_bbox(o.bbox, image);
            if (why != DropReason::kNone) {
              log_drop(o, std::string(drop_reason_name(why)));
              continue;
            }
          }
          if (f.rebalance && f.overrepresented.count(o.category) &&
              !rebalance_keep(image, o.object_id, f.keep_rate, ctx.config.seed)) {
            ++local.rebalanced_away;
            log_drop(o, "rebalanced");
            continue;
          }
          objects.push_back(std::move(o));
        }
      }
    }
    scene.provenance.grounded = true;

    for (auto& o : objects) {
      try {
        const RegionCaption rc = gw.request_region_caption(image, o.bbox, o.category);
        o.region_caption = rc.caption;
        if (rc.warning) ++local.region_caption_warnings;
      } catch (const Error& e) {
        if (is_outage(e)) throw;
        // Unusable caption: the object stays, caption-dependent tasks skip it.
        ++local.region_caption_warnings;
      }
      if (o.is_person) {
        try {
          o.facing = gw.request_orientation(image, o.bbox).facing;
        } catch (const Error& e) {
          if (is_outage(e)) throw;
          o.facing = FacingLabel::kUnknown;
        }
      }
    }

    if (image.depth_uri) {
      try {
        gw.probe_depth_artifact(image);
        scene.provenance.depth_attached = true;
      } catch (const Error& e) {
        drop_lines += csv_field(image.key()) + ",,," + std::string(to_string(e.code())) + '\n';
      }
    } else {
      scene.provenance.depth_attached = gw.has(ProviderKind::kDepthProvider);
    }

    scene.objects = std::move(objects);
    validate_scene_record(scene);
  } catch (const Error& e) {
    if (is_outage(e)) {
      quarantine(s, Stage::kExtract, 2, line, e);
    } else {
      reject(s, std::string(to_string(e.code())));
      s.out[1] << csv_field(image.key()) << ",,," << to_string(e.code()) << '\n';
    }
    return;
  }
  ++s.stage.emitted;
  s.stats.merge(local);
  s.out[1] << drop_lines;
  s.out[0] << serialize_scene_record(scene) << '\n';
}

void generate_record(RunContext& ctx, const std::string& line, ShardState& s) {
  const SceneRecord scene = parse_scene_record(line);
  ++s.stage.attempted;
  std::map<int, DepthStats> depth;
  if (scene.provenance.depth_attached && !scene.objects.empty()) {
    try {
      const DepthMap map = ctx.bundle.gateway->fetch_depth_map(scene.image);
      for (const auto& o : scene.objects) {
        try {
          depth[o.object_id] = depth_stats(map, o.bbox, ctx.generation.depth_options);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kEmptyRegion) throw;
        }
      }
    } catch (const Error& e) {
      if (is_outage(e)) {
        quarantine(s, Stage::kGenerate, 1, line, e);
        return;
      }
      // Without a usable map the scene still yields its depth-free tasks.
      depth.clear();
    }
  }
  GenerationResult result = generate_for_scene(scene, depth, ctx.registry, ctx.generation);
  for (const auto& r : result.records) s.out[0] << serialize_qa_record(r) << '\n';
  for (const auto& [task, tally] : result.tallies) s.stats.generation[task].merge(tally);
  ++s.stage.emitted;
}

void verify_record(RunContext& ctx, const std::string& line, ShardState& s) {
  QARecord record = parse_qa_record(line);
  ++s.stage.attempted;
  GoldBoard* gold = ctx.bundle.gold.get();
  if (gold) gold->put(record);
  ExpertGateway& gw = *ctx.bundle.gateway;
  long long warnings = 0;
  const Verdict v = inspect(
      record, [&](const QARecord& q) { return gw.judge_answer(q.image, q.question, q.qa_id); }, ctx.config.gate,
      &warnings);
  if (gold) gold->erase(record.qa_id);
  s.stats.judge_parse_warnings += warnings;

  if (v.passed) {
    record.verified = true;
    s.out[0] << serialize_qa_record(record, ctx.config.strict_output) << '\n';
    ++s.stage.emitted;
    ++s.stats.emitted[record.image.source_dataset][record.task];
  } else if (v.reason == VerdictReason::kJudgeUnavailable) {
    ++s.stage.quarantined;
    ++s.stage.reasons[std::string(verdict_reason_name(v.reason))];
    s.out[2] << canonical_json(Json{{"stage", "verify"},
                                    {"record", Json::parse(line)},
                                    {"error", std::string(verdict_reason_name(v.reason))},
                                    {"message", v.judge_answer}})
             << '\n';
  } else {
    reject(s, std::string(verdict_reason_name(v.reason)));
    s.out[1] << rejection_line(v) << '\n';
  }
}

using RecordFn = void (*)(RunContext&, const std::string&, ShardState&);

RecordFn record_fn(Stage stage) {
  switch (stage) {
    case Stage::kFilter: return filter_record;
    case Stage::kExtract: return extract_record;
    case Stage::kGenerate: return generate_record;
    case Stage::kVerify: return verify_record;
  }
  return filter_record;
}

// ---------------------------------------------------------------------------
// Shard driver
// ---------------------------------------------------------------------------

void run_shard(RunContext& ctx, Stage stage, int shard, bool resume) {
  const fs::path ckpt_path = ctx.root / checkpoint_rel(stage, shard);
  Checkpoint cp;
  cp.shard = shard;
  cp.stage = stage;
  cp.content_hash = ctx.hash;
  bool have = false;
  if (resume && fs::exists(ckpt_path)) {
    cp = load_checkpoint(ckpt_path);
    if (cp.content_hash != ctx.hash) {
      throw Error(ErrorCode::kCheckpointMismatch,
                  ckpt_path.string() + " was written under a different configuration; rerun without --resume");
    }
    have = true;
    if (cp.completed) {
      // Trim bytes written after the final commit; a file shorter than its
      // commit means the shard has to be redone.
      bool intact = true;
      for (const auto& [rel, size] : cp.outputs) {
        const fs::path p = ctx.root / rel;
        if (!fs::exists(p) || fs::file_size(p) < size) {
          intact = false;
        } else if (fs::file_size(p) > size) {
          fs::resize_file(p, size);
        }
      }
      if (intact) return;
      cp = Checkpoint{};
      cp.shard = shard;
      cp.stage = stage;
      cp.content_hash = ctx.hash;
      have = false;
    }
  }

  const fs::path input = ctx.root / input_dir(stage) / ("shard-" + shard_tag(shard) + ".jsonl");
  std::ifstream in(input, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIo, "missing stage input " + input.string() + "; run the earlier stages first");
  }
  ShardWriter out(ctx.root, shard_outputs(stage, shard), have ? &cp.outputs : nullptr, ctx.config.fsync);
  RunStats& stats = cp.stats;
  ShardState state{out, stats, stats.stages[stage]};
  const RecordFn fn = record_fn(stage);

  std::string line;
  long long index = 0;
  while (index < cp.records && std::getline(in, line)) ++index;

  auto t0 = Clock::now();
  auto commit = [&](bool completed) {
    const auto now = Clock::now();
    state.stage.wall_seconds += std::chrono::duration<double>(now - t0).count();
    t0 = now;
    cp.records = index;
    cp.outputs = out.commit();
    cp.completed = completed;
    write_file_atomic(ckpt_path, cp.to_json().dump(), ctx.config.fsync);
  };

  long long since_commit = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      fn(ctx, line, state);
    } catch (const Error& e) {
      throw Error(e.code(), input.string() + ":" + std::to_string(index + 1) + ": " + e.what());
    }
    ++index;
    ctx.tick();
    if (++since_commit >= ctx.config.commit_every) {
      commit(false);
      since_commit = 0;
    }
  }
  commit(true);
}

template <typename Fn>
void for_each_shard(RunContext& ctx, int shards, int workers, Fn fn) {
  std::atomic<int> next{0};
  std::mutex mutex;
  std::exception_ptr first;
  auto work = [&] {
    for (;;) {
      const int shard = next.fetch_add(1);
      if (shard >= shards || ctx.stop.load()) return;
      try {
        fn(shard);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mutex);
        // Keep the root cause, not the follow-on "stopped" errors.
        if (!first) first = std::current_exception();
        ctx.stop = true;
      }
    }
  };
  const int n = std::max(1, std::min(workers, shards));
  std::vector<std::thread> pool;
  for (int i = 1; i < n; ++i) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

// Splits every manifest into stage0 shards. Streams the manifests; only the
// image keys are held for duplicate detection.
void write_stage0(RunContext& ctx, bool resume) {
  const fs::path dir = ctx.root / "stage0";
  const fs::path marker = dir / "complete.json";
  if (resume && fs::exists(marker)) {
    std::ifstream in(marker);
    const Json j = Json::parse(in, nullptr, false);
    if (j.is_discarded() || j.value("content_hash", "") != ctx.hash) {
      throw Error(ErrorCode::kCheckpointMismatch, "stage0 was written under a different configuration");
    }
    return;
  }
  fs::remove_all(dir);
  fs::create_directories(dir);
  const int n = ctx.config.shard_count;
  std::vector<std::ofstream> outs;
  outs.reserve(n);
  for (int s = 0; s < n; ++s) {
    outs.emplace_back(dir / ("shard-" + shard_tag(s) + ".jsonl.tmp"), std::ios::binary | std::ios::trunc);
  }
  std::unordered_set<std::string> seen;
  for (const auto& source : ctx.config.sources) {
    std::ifstream in(source.manifest);
    if (!in) throw Error(ErrorCode::kIo, "cannot read manifest " + source.manifest);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const std::string where = source.manifest + ":" + std::to_string(lineno);
      const Json j = Json::parse(line, nullptr, false);
      if (j.is_discarded()) throw Error(ErrorCode::kMalformed, where + ": not valid JSON");
      ImageRef image;
      try {
        image = image_from_json(j);
      } catch (const Error& e) {
        throw Error(e.code(), where + ": " + e.what());
      }
      if (image.source_dataset != source.name) {
        throw Error(ErrorCode::kInvalidConfig, where + ": source_dataset '" + image.source_dataset +
                                                   "' does not match source '" + source.name + "'");
      }
      if (!seen.insert(image.key()).second) {
        throw Error(ErrorCode::kDuplicateId, where + ": duplicate image " + image.key());
      }
      outs[shard_of(image, n)] << canonical_json(image_to_json(image)) << '\n';
    }
  }
  for (int s = 0; s < n; ++s) {
    outs[s].close();
    fs::rename(dir / ("shard-" + shard_tag(s) + ".jsonl.tmp"), dir / ("shard-" + shard_tag(s) + ".jsonl"));
  }
  write_file_atomic(marker, Json{{"content_hash", ctx.hash}}.dump(), ctx.config.fsync);
}

void clear_stage(const fs::path& root, Stage stage) {
  if (stage == Stage::kFilter) fs::remove_all(root / "stage0");
  fs::remove_all(root / output_dir(stage));
  const std::string name(stage_name(stage));
  auto remove_matching = [&](const std::string& dir, const std::string& prefix, const std::string& suffix) {
    const fs::path d = root / dir;
    if (!fs::exists(d)) return;
    for (const auto& entry : fs::directory_iterator(d)) {
      const std::string f = entry.path().filename().string();
      if (f.rfind(prefix, 0) == 0 && f.size() >= suffix.size() &&
          f.compare(f.size() - suffix.size(), suffix.size(), suffix) == 0) {
        fs::remove(entry.path());
      }
    }
  };
  remove_matching("drops", name + "-", ".csv");
  remove_matching("quarantine", name + "-", ".jsonl");
  remove_matching("checkpoints", "shard-", "." + name + ".json");
  if (stage == Stage::kVerify) fs::remove_all(root / "rejections");
}

RunStats collect_stats(const fs::path& root, const std::string& hash) {
  RunStats total;
  const fs::path dir = root / "checkpoints";
  if (!fs::exists(dir)) return total;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const Checkpoint cp = load_checkpoint(f);
    if (cp.content_hash != hash) continue;
    total.merge(cp.stats);
  }
  return total;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public API
// ---------------------------------------------------------------------------

GatewayBundle build_gateway(const PipelineConfig& config) {
  GatewayBundle bundle;
  GatewayOptions options;
  options.region_word_limit = config.region_word_limit;
  std::map<std::string, std::string> bases;
  for (const auto& s : config.sources) bases[s.name] = s.base_dir;
  options.resolve_path = [bases](const ImageRef& image, const std::string& uri) {
    const fs::path p(uri);
    if (p.is_absolute()) return uri;
    auto it = bases.find(image.source_dataset);
    return it == bases.end() ? uri : (fs::path(it->second) / p).string();
  };
  bundle.gateway = std::make_shared<ExpertGateway>(options);
  bundle.gold = std::make_shared<GoldBoard>();

  bool uses_mock = false;
  for (const auto& [kind, pc] : config.providers) {
    uses_mock = uses_mock || pc.transport == "mock" || (pc.transport == "record" && pc.record_inner == "mock");
  }
  if (uses_mock) {
    bundle.world = MockWorld::from_file(config.mock_world);
    MockOptions mo;
    auto judge = config.providers.find(ProviderKind::kJudge);
    if (judge != config.providers.end()) mo.judge = judge->second.judge_behavior;
    bundle.mock = std::make_shared<MockProvider>(bundle.world, bundle.gold, mo);
  }

  for (const auto& [kind, pc] : config.providers) {
    auto make = [&](const std::string& name) -> std::shared_ptr<Transport> {
      if (name == "mock") return bundle.mock->transport();
      if (name == "http") {
        return std::make_shared<HttpTransport>(pc.endpoint.base_url, pc.endpoint.auth_env_var, pc.timeout_seconds);
      }
      throw Error(ErrorCode::kInvalidConfig, "unknown transport '" + name + "'");
    };
    std::shared_ptr<Transport> transport;
    if (pc.transport == "replay") {
      transport = std::make_shared<ReplayTransport>(pc.fixtures_dir);
    } else if (pc.transport == "record") {
      transport = std::make_shared<RecordingTransport>(make(pc.record_inner), pc.fixtures_dir);
    } else {
      transport = make(pc.transport);
    }
    bundle.gateway->configure(pc.endpoint, transport);
  }
  return bundle;
}

int shard_of(const ImageRef& image, int shard_count) {
  if (shard_count < 1) throw Error(ErrorCode::kInvalidConfig, "shard_count must be >= 1");
  const std::uint64_t h = fnv1a64(image.source_dataset + "\x1f" + image.image_id);
  return static_cast<int>(h % static_cast<std::uint64_t>(shard_count));
}

std::vector<int> shard_inputs(const std::vector<ImageRef>& manifest, int shard_count) {
  std::unordered_set<std::string> seen;
  std::vector<int> out;
  out.reserve(manifest.size());
  for (const auto& image : manifest) {
    if (!seen.insert(image.key()).second) throw Error(ErrorCode::kDuplicateId, "duplicate image " + image.key());
    out.push_back(shard_of(image, shard_count));
  }
  return out;
}

RunStats run_pipeline(const PipelineConfig& config, const RunOptions& options) {
  config.validate();
  const fs::path root = config.output_dir;
  fs::create_directories(root);
  RunContext ctx(config, root);

  std::vector<Stage> stages;
  for (Stage s : kAllStages) {
    if (options.only_stage ? *options.only_stage == s : config.stages.count(s) > 0) stages.push_back(s);
  }
  if (!options.resume) {
    for (Stage s : stages) clear_stage(root, s);
  }
  write_file_atomic(root / "run.json",
                    Json{{"config", config.to_json()},
                         {"content_hash", ctx.hash},
                         {"templates_version", ctx.registry.version()}}
                        .dump(2),
                    false);

  for (Stage stage : stages) {
    if (stage == Stage::kFilter) {
      write_stage0(ctx, options.resume);
      if (config.filters.semantic) {
        const auto& a = config.filters.anchors;
        for (const auto* list : {&a.positive_anchors, &a.negative_anchors}) {
          for (const auto& text : *list) ctx.anchor_embeddings[text] = ctx.bundle.gateway->embed_text(text);
        }
      }
    }
    for_each_shard(ctx, config.shard_count, config.worker_count,
                   [&](int shard) { run_shard(ctx, stage, shard, options.resume); });
  }

  RunStats stats = collect_stats(root, ctx.hash);
  for (Stage s : kAllStages) {
    if (stats.stages.count(s) && !stats.stages[s].conserved()) {
      throw Error(ErrorCode::kMalformed, "stage " + std::string(stage_name(s)) + " does not conserve records");
    }
  }
  write_file_atomic(root / "stats.json", stats.to_json().dump(2) + "\n", config.fsync);
  write_file_atomic(root / "report.txt", emit_stats(stats), config.fsync);
  return stats;
}

std::vector<std::string> qa_shard_files(const std::string& run_dir) {
  std::vector<std::string> files;
  const fs::path dir = fs::path(run_dir) / "qa";
  if (!fs::exists(dir)) return files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("shard-", 0) == 0 && entry.path().extension() == ".jsonl") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

VerifyReport verify_run(const std::string& run_dir) {
  VerifyReport report;
  auto fail = [&](const std::string& what) {
    if (report.violations.size() < 100) report.violations.push_back(what);
  };

  RunStats stats;
  try {
    stats = load_run_stats(run_dir);
  } catch (const Error& e) {
    fail(e.what());
    return report;
  }
  for (const auto& [stage, s] : stats.stages) {
    if (!s.conserved()) fail("stage " + std::string(stage_name(stage)) + ": attempted != emitted + rejected + quarantined");
  }
  for (const auto& [task, t] : stats.generation) {
    if (t.attempted != t.emitted + t.rejected_total()) fail("generation tally for " + std::string(task_name(task)) + " does not add up");
  }
  try {
    emit_stats(stats);
  } catch (const Error& e) {
    fail(e.what());
  }

  // Object ids of every materialized scene, for reference checks.
  std::unordered_map<std::string, std::set<int>> scene_objects;
  bool have_scenes = false;
  const fs::path scenes_dir = fs::path(run_dir) / "stage2_scenes";
  if (fs::exists(scenes_dir)) {
    have_scenes = true;
    for (const auto& entry : fs::directory_iterator(scenes_dir)) {
      if (entry.path().extension() != ".jsonl") continue;
      std::ifstream in(entry.path());
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
          const SceneRecord scene = parse_scene_record(line);
          auto& ids = scene_objects[scene.image.key()];
          for (const auto& o : scene.objects) ids.insert(o.object_id);
        } catch (const Error& e) {
          fail(entry.path().string() + ": " + e.what());
        }
      }
    }
  }

  std::map<std::string, std::map<TaskKind, long long>> recount;
  std::unordered_set<std::string> ids;
  for (const auto& file : qa_shard_files(run_dir)) {
    std::ifstream in(file);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string where = file + ":" + std::to_string(lineno);
      QARecord r;
      try {
        r = parse_qa_record(line);
      } catch (const Error& e) {
        fail(where + ": " + e.what());
        continue;
      }
      ++report.records;
      ++recount[r.image.source_dataset][r.task];
      if (!r.verified) fail(where + ": unverified record " + r.qa_id);
      if (!ids.insert(r.qa_id).second) fail(where + ": duplicate qa_id " + r.qa_id);
      const std::string prefix = r.image.key() + "/" + std::string(task_name(r.task)) + "/";
      if (r.qa_id.rfind(prefix, 0) != 0) fail(where + ": qa_id does not name its image and task");
      if (r.answer_boxes) {
        for (const auto& b : *r.answer_boxes) {
          if (!b.valid()) fail(where + ": invalid answer box");
        }
      }
      auto attr = [&](const char* key) {
        auto it = r.attributes.find(key);
        return it == r.attributes.end() ? std::string() : it->second;
      };
      switch (r.task) {
        case TaskKind::kCounting: {
          long long n = 0;
          try {
            size_t used = 0;
            n = std::stoll(r.answer, &used);
            if (used != r.answer.size()) n = 0;
          } catch (const std::exception&) {
            n = 0;
          }
          if (n <= 1) fail(where + ": counting answer '" + r.answer + "' is not greater than 1");
          break;
        }
        case TaskKind::kNearFar: {
          const auto cls = parse_depth_class(attr("depth_class"));
          if (!cls || *cls == DepthClass::kD) fail(where + ": near/far record outside classes A-C");
          if (attr("relation") != "a_nearer" && attr("relation") != "b_nearer") {
            fail(where + ": near/far record without a decided relation");
          }
          break;
        }
        case TaskKind::kLeftRight:
        case TaskKind::kPerspective:
          if (attr("relation") != "left" && attr("relation") != "right") {
            fail(where + ": relational record with relation '" + attr("relation") + "'");
          }
          break;
        default:
          break;
      }
      if (have_scenes) {
        auto it = scene_objects.find(r.image.key());
        if (it == scene_objects.end()) {
          fail(where + ": image " + r.image.key() + " has no scene record");
        } else {
          for (int id : r.object_ids) {
            if (!it->second.count(id)) fail(where + ": object " + std::to_string(id) + " not in scene");
          }
        }
      }
    }
  }

  std::set<std::string> sources;
  for (const auto& [s, m] : recount) sources.insert(s);
  for (const auto& [s, m] : stats.emitted) sources.insert(s);
  for (const auto& source : sources) {
    for (TaskKind task : kAllTasks) {
      long long counted = 0;
      long long reported = 0;
      if (auto it = recount.find(source); it != recount.end() && it->second.count(task)) counted = it->second.at(task);
      if (auto it = stats.emitted.find(source); it != stats.emitted.end() && it->second.count(task)) {
        reported = it->second.at(task);
      }
      if (counted != reported) {
        fail("stats report " + std::to_string(reported) + " " + std::string(task_name(task)) + " records for " + source +
             ", shards hold " + std::to_string(counted));
      }
    }
  }
  return report;
}

}  // namespace forge
