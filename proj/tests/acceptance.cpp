// Acceptance suite: one PASS/FAIL line per criterion, measured values inline.
// Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "forge/error.hpp"
#include "forge/geometry.hpp"
#include "forge/ingest_filter.hpp"
#include "forge/pipeline.hpp"
#include "forge/qa_forge.hpp"
#include "forge/quality_gate.hpp"
#include "forge/random.hpp"
#include "forge/scene_oracle.hpp"

using namespace forge;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr int kOracleScenes = 1000;
constexpr double kOracleBudgetSeconds = 10.0;
constexpr double kMaxClassDRate = 0.15;
constexpr int kInvolutionTrials = 10000;
constexpr int kRoundTripBoxes = 10000;
constexpr double kMaxRoundTripPx = 1.0;
constexpr long long kMinGeneratedRecords = 10000;
constexpr double kGateIou = 0.8;
constexpr int kInterruptPoints = 3;
constexpr int kBboxCases = 200;
constexpr int kRebalanceObjects = 10000;
constexpr double kKeepRate = 0.10;
constexpr double kMinPairsPerSecond = 100000.0;
constexpr double kMinScenesPerSecond = 1000.0;
constexpr int kThroughputScenes = 1000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& fn) {
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("[%s] %2d %-28s %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Json> read_jsonl(const fs::path& p) {
  std::vector<Json> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(Json::parse(line));
  return out;
}

std::vector<Json> read_dir_jsonl(const fs::path& dir) {
  std::vector<fs::path> files;
  if (fs::exists(dir))
    for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Json> out;
  for (const auto& f : files) {
    auto part = read_jsonl(f);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

fs::path work_root() {
  const fs::path p = fs::temp_directory_path() / "forge_acceptance";
  fs::create_directories(p);
  return p;
}

fs::path corpus(const std::string& name, const OracleCorpusOptions& options) {
  const fs::path dir = work_root() / name;
  if (!fs::exists(dir / "config.json")) write_oracle_corpus(dir.string(), options);
  return dir;
}

PipelineConfig run_config(const fs::path& corpus_dir, const std::string& out) {
  PipelineConfig c = PipelineConfig::from_file((corpus_dir / "config.json").string());
  c.output_dir = (work_root() / out).string();
  fs::remove_all(c.output_dir);
  return c;
}

fs::path golden_dir() { return fs::path(FORGE_TEST_DIR) / "golden" / "pipeline_50"; }

bool shards_equal(const fs::path& a, const fs::path& b) {
  const auto fa = qa_shard_files(a.string());
  const auto fb = qa_shard_files(b.string());
  if (fa.size() != fb.size() || fa.empty()) return false;
  for (size_t i = 0; i < fa.size(); ++i)
    if (fs::path(fa[i]).filename() != fs::path(fb[i]).filename() || slurp(fa[i]) != slurp(fb[i])) return false;
  return true;
}

bool matches_golden(const fs::path& run_dir) {
  const auto files = qa_shard_files(run_dir.string());
  if (files.size() != 4) return false;
  for (const auto& f : files)
    if (slurp(f) != slurp(golden_dir() / fs::path(f).filename())) return false;
  return true;
}

const SyntheticObject& by_id(const SyntheticScene& s, int id) { return s.objects[static_cast<size_t>(id - 1)]; }

// 1. Dual-anchor left/right against camera-frame x.
Outcome oracle_left_right() {
  const auto t0 = std::chrono::steady_clock::now();
  long long decided = 0, ambiguous = 0, contradictions = 0;
  for (int seed = 0; seed < kOracleScenes; ++seed) {
    const RenderedScene rs = render_scene(seed, oracle_object_count(seed, 2, 6));
    for (const auto& p : ground_truth_relations(rs.scene).pairs) {
      const LRRelation rel = left_right(project_box(by_id(rs.scene, p.a), rs.scene.camera),
                                        project_box(by_id(rs.scene, p.b), rs.scene.camera));
      if (rel == LRRelation::kAmbiguous) {
        ++ambiguous;
        continue;
      }
      ++decided;
      if (!p.left_right || *p.left_right != rel) ++contradictions;
    }
  }
  const double secs = seconds_since(t0);
  return {contradictions == 0 && decided > 0 && secs < kOracleBudgetSeconds,
          fmt("decided=%lld ambiguous=%lld contradictions=%lld time=%.2fs (<%.0fs)", decided, ambiguous,
              contradictions, secs, kOracleBudgetSeconds)};
}

// 2. Region depth statistics on rendered depth against center z.
Outcome oracle_near_far() {
  const auto t0 = std::chrono::steady_clock::now();
  long long pairs = 0, class_a = 0, class_a_checked = 0, class_a_wrong = 0, class_d = 0;
  for (int seed = 0; seed < kOracleScenes; ++seed) {
    const RenderedScene rs = render_scene(seed, oracle_object_count(seed, 2, 6));
    std::map<int, DepthStats> stats;
    for (const auto& o : rs.scene.objects)
      if (!o.occluded) stats[o.object_id] = depth_stats(rs.render.depth, project_box(o, rs.scene.camera));
    for (const auto& p : ground_truth_relations(rs.scene).pairs) {
      const DepthStats& a = stats.at(p.a);
      const DepthStats& b = stats.at(p.b);
      const DepthOrder d = compare_depth(a, b, metric_reliability(a), metric_reliability(b), 0.02);
      ++pairs;
      if (d.quality == DepthClass::kD) ++class_d;
      if (d.quality != DepthClass::kA) continue;
      ++class_a;
      if (!p.near_far) continue;
      ++class_a_checked;
      if (d.value != *p.near_far) ++class_a_wrong;
    }
  }
  const double secs = seconds_since(t0);
  const double d_rate = pairs ? static_cast<double>(class_d) / static_cast<double>(pairs) : 1.0;
  return {class_a_wrong == 0 && class_a_checked > 0 && d_rate < kMaxClassDRate && secs < kOracleBudgetSeconds,
          fmt("pairs=%lld classA=%lld checked=%lld wrong=%lld classD=%.3f (<%.2f) time=%.2fs (<%.0fs)", pairs,
              class_a, class_a_checked, class_a_wrong, d_rate, kMaxClassDRate, secs, kOracleBudgetSeconds)};
}

// 3. Person-centric transform.
Outcome facing_transform() {
  bool table_ok = to_allocentric(LRRelation::kLeft, Facing::kToward) == LRRelation::kRight &&
                  to_allocentric(LRRelation::kRight, Facing::kToward) == LRRelation::kLeft &&
                  to_allocentric(LRRelation::kLeft, Facing::kAway) == LRRelation::kLeft &&
                  to_allocentric(LRRelation::kRight, Facing::kAway) == LRRelation::kRight;
  try {
    to_allocentric(LRRelation::kAmbiguous, Facing::kAway);
    table_ok = false;
  } catch (const Error&) {
  }
  Rng rng(20261017);
  int broken = 0;
  for (int i = 0; i < kInvolutionTrials; ++i) {
    const LRRelation r = rng.below(2) ? LRRelation::kLeft : LRRelation::kRight;
    const Facing f = rng.below(2) ? Facing::kToward : Facing::kAway;
    if (to_allocentric(to_allocentric(r, f), f) != r) ++broken;
  }
  // The 2D rule reproduces the 3D person-frame relation where it decides.
  long long checked = 0, wrong = 0;
  for (int seed = 0; seed < 300; ++seed) {
    const RenderedScene rs = render_scene(seed, oracle_object_count(seed, 2, 6));
    for (const auto& p : ground_truth_relations(rs.scene).perspectives) {
      const LRRelation ego = left_right(project_box(by_id(rs.scene, p.target), rs.scene.camera),
                                        project_box(by_id(rs.scene, p.subject), rs.scene.camera));
      if (ego == LRRelation::kAmbiguous) continue;
      ++checked;
      if (to_allocentric(ego, p.facing) != p.allocentric) ++wrong;
    }
  }
  return {table_ok && broken == 0 && wrong == 0 && checked > 0,
          fmt("truth_table=%s involution_failures=%d/%d oracle_checked=%lld wrong=%lld", table_ok ? "ok" : "bad",
              broken, kInvolutionTrials, checked, wrong)};
}

// 4. Normalization example and round trip.
Outcome normalization() {
  const NormalizedBBox ex = normalize_bbox({64, 48, 320, 240}, 640, 480);
  const bool example_ok = ex == NormalizedBBox{100, 100, 500, 500};
  Rng rng(4000);
  double worst = 0;
  int worst_w = 0;
  int done = 0;
  while (done < kRoundTripBoxes) {
    const int w = 1 + static_cast<int>(rng.below(4000));
    const int h = 1 + static_cast<int>(rng.below(4000));
    double x1 = rng.uniform(0, w), x2 = rng.uniform(0, w), y1 = rng.uniform(0, h), y2 = rng.uniform(0, h);
    if (x1 > x2) std::swap(x1, x2);
    if (y1 > y2) std::swap(y1, y2);
    const BBox b{x1, y1, x2, y2};
    NormalizedBBox n;
    try {
      n = normalize_bbox(b, w, h);
    } catch (const Error&) {
      continue;  // collapses under rounding
    }
    ++done;
    const BBox back = denormalize_bbox(n, w, h);
    for (double e : {std::fabs(back.x_min - b.x_min), std::fabs(back.x_max - b.x_max), std::fabs(back.y_min - b.y_min),
                     std::fabs(back.y_max - b.y_max)}) {
      if (e > worst) {
        worst = e;
        worst_w = std::max(w, h);
      }
    }
  }
  return {example_ok && worst <= kMaxRoundTripPx,
          fmt("example=%s boxes=%d max_roundtrip_err=%.3fpx at side %d (<=%.1fpx; bound is side/2000)",
              example_ok ? "exact" : "wrong", done, worst, worst_w, kMaxRoundTripPx)};
}

// Shared by 5 and 10: a 1000-scene oracle corpus run as a single shard.
struct BigRun {
  fs::path corpus_dir;
  fs::path run_dir;
  double seconds = 0;
  RunStats stats;
};

const BigRun& big_run() {
  static BigRun run = [] {
    BigRun r;
    OracleCorpusOptions o;
    o.scenes = kThroughputScenes;
    o.shard_count = 1;
    r.corpus_dir = corpus("oracle1000", o);
    PipelineConfig c = run_config(r.corpus_dir, "run1000");
    r.run_dir = c.output_dir;
    const auto t0 = std::chrono::steady_clock::now();
    r.stats = run_pipeline(c);
    r.seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

// 5. Generation gates over every generated candidate (pre-verify).
Outcome gates() {
  const BigRun& r = big_run();
  std::map<std::string, Json> scenes;
  for (auto& s : read_dir_jsonl(r.run_dir / "stage2_scenes")) scenes[s["image"]["image_id"].get<std::string>()] = s;
  const auto records = read_dir_jsonl(r.run_dir / "stage3_raw_qa");
  long long low_counts = 0, class_d = 0, ambiguous = 0, relational = 0;
  for (const auto& q : records) {
    const std::string task = q["task"];
    if (task == "counting" && std::stoll(q["answer"].get<std::string>()) <= 1) ++low_counts;
    if (task == "near_far") {
      ++relational;
      if (q["attributes"].value("depth_class", "D") == "D") ++class_d;
    }
    if (task == "left_right" || task == "perspective") {
      ++relational;
      const Json& objs = scenes.at(q["image"]["image_id"].get<std::string>())["objects"];
      std::vector<BBox> boxes;
      for (int id : q["object_ids"].get<std::vector<int>>()) {
        for (const auto& o : objs) {
          if (o["object_id"].get<int>() != id) continue;
          const auto b = o["bbox"].get<std::vector<double>>();
          boxes.push_back({b[0], b[1], b[2], b[3]});
        }
      }
      if (boxes.size() != 2 || left_right(boxes[0], boxes[1]) == LRRelation::kAmbiguous) ++ambiguous;
    }
  }
  const long long n = static_cast<long long>(records.size());
  return {n >= kMinGeneratedRecords && low_counts == 0 && class_d == 0 && ambiguous == 0,
          fmt("records=%lld (>=%lld) relational=%lld counting<=1:%lld nearfar_classD:%lld ambiguous:%lld", n,
              kMinGeneratedRecords, relational, low_counts, class_d, ambiguous)};
}

// 6. Judge agreement.
Outcome quality_gate() {
  const fs::path dir = corpus("oracle50", OracleCorpusOptions{});
  const PipelineConfig gold_cfg = run_config(dir, "gate_gold");
  const RunStats gold = run_pipeline(gold_cfg);
  const StageStats& gv = gold.stages.at(Stage::kVerify);
  const bool gold_ok = gv.attempted > 0 && gv.emitted == gv.attempted;

  PipelineConfig mut_cfg = run_config(dir, "gate_mutate");
  mut_cfg.providers.at(ProviderKind::kJudge).judge_behavior = JudgeBehavior::kMutate;
  run_pipeline(mut_cfg);
  std::map<std::string, bool> is_box;
  for (const auto& q : read_dir_jsonl(fs::path(mut_cfg.output_dir) / "stage3_raw_qa"))
    is_box[q["qa_id"].get<std::string>()] = q.contains("answer_boxes") && !q["answer_boxes"].is_null();
  long long box_n = 0, box_iou = 0, text_n = 0, text_mm = 0;
  std::set<std::string> rejected;
  for (const auto& e : fs::directory_iterator(fs::path(mut_cfg.output_dir) / "rejections")) {
    std::ifstream in(e.path());
    for (std::string line; std::getline(in, line);) {
      if (line.empty() || line.rfind("qa_id,", 0) == 0) continue;
      // qa ids contain no commas; split from the right.
      const size_t c2 = line.rfind(',');
      const size_t c1 = line.rfind(',', c2 - 1);
      const std::string id = line.substr(0, c1);
      const std::string reason = line.substr(c1 + 1, c2 - c1 - 1);
      rejected.insert(id);
      if (is_box.at(id)) {
        ++box_n;
        box_iou += reason == "iou_below_threshold";
      } else {
        ++text_n;
        text_mm += reason == "text_mismatch";
      }
    }
  }
  const bool all_rejected = rejected.size() == is_box.size() && !is_box.empty();
  const bool mut_ok = all_rejected && box_n > 0 && text_n > 0 && box_iou == box_n && text_mm == text_n;

  // Inner 80x100 box inside 100x100 gives IoU 0.8 exactly.
  const BoxCheck edge = verify_box_answer({0, 0, 80, 100}, {0, 0, 100, 100});
  const bool edge_ok = edge.iou == kGateIou && edge.passed;
  return {gold_ok && mut_ok && edge_ok,
          fmt("gold_pass=%lld/%lld mutate_rejected=%zu/%zu box_iou=%lld/%lld text_mismatch=%lld/%lld iou0.8=%s",
              gv.emitted, gv.attempted, rejected.size(), is_box.size(), box_iou, box_n, text_mm, text_n,
              edge_ok ? "pass" : "fail")};
}

// 7. Byte-identical reruns and resume from random interrupts.
Outcome determinism() {
  const fs::path dir = corpus("oracle50", OracleCorpusOptions{});
  const PipelineConfig a = run_config(dir, "det_a");
  const PipelineConfig b = run_config(dir, "det_b");
  run_pipeline(a);
  run_pipeline(b);
  const bool identical = shards_equal(a.output_dir, b.output_dir);
  const bool golden = matches_golden(a.output_dir);

  const unsigned entropy = std::random_device{}();
  Rng rng(entropy);
  std::string points;
  int resumed_ok = 0;
  for (int i = 0; i < kInterruptPoints; ++i) {
    const long long at = 1 + static_cast<long long>(rng.below(700));
    points += (i ? "," : "") + std::to_string(at);
    PipelineConfig c = run_config(dir, "det_resume");
    c.commit_every = 16;
    c.interrupt_after_records = at;
    try {
      run_pipeline(c);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInterrupted) throw;
    }
    c.interrupt_after_records.reset();
    RunOptions resume;
    resume.resume = true;
    run_pipeline(c, resume);
    resumed_ok += matches_golden(c.output_dir);
  }
  return {identical && golden && resumed_ok == kInterruptPoints,
          fmt("rerun_identical=%s golden=%s interrupts=[%s] (entropy %u) resumed_match=%d/%d", identical ? "yes" : "no",
              golden ? "yes" : "no", points.c_str(), entropy, resumed_ok, kInterruptPoints)};
}

// 8. Box filter boundary table and rebalancing rate.
Outcome filtering() {
  // Integer oracle: keep iff h <= 3w, w <= 3h and w*h >= 10000.
  std::vector<std::pair<int, int>> cases = {{100, 100}, {99, 99}, {100, 99}, {99, 100}, {300, 100}, {301, 100},
                                            {100, 300}, {100, 301}, {58, 174}, {174, 58}, {57, 173}, {173, 57}};
  for (int h = 58; static_cast<int>(cases.size()) < kBboxCases; h += 7) {
    for (int w : {3 * h - 1, 3 * h, 3 * h + 1, (h + 2) / 3, h / 3, (10000 + h - 1) / h, 10000 / h}) {
      if (w > 0 && static_cast<int>(cases.size()) < kBboxCases) cases.emplace_back(w, h);
    }
  }
  const ImageRef img{"acc", "boundary", 4000, 4000, "x", std::nullopt};
  int mismatches = 0, kept = 0;
  for (auto [w, h] : cases) {
    const bool expect_keep = h <= 3 * w && w <= 3 * h && w * h >= 10000;
    const bool keep = filter_bbox({10, 10, 10.0 + w, 10.0 + h}, img) == DropReason::kNone;
    mismatches += expect_keep != keep;
    kept += keep;
  }
  long long kept_objects = 0;
  for (int i = 0; i < kRebalanceObjects; ++i) {
    const ImageRef im{"acc", "img-" + std::to_string(i / 10), 640, 480, "x", std::nullopt};
    kept_objects += rebalance_keep(im, i % 10 + 1, kKeepRate, 7);
  }
  const double frac = static_cast<double>(kept_objects) / kRebalanceObjects;
  const double sigma = std::sqrt(kKeepRate * (1 - kKeepRate) / kRebalanceObjects);
  const bool rate_ok = std::fabs(frac - kKeepRate) <= 3 * sigma;
  return {mismatches == 0 && cases.size() == static_cast<size_t>(kBboxCases) && rate_ok,
          fmt("bbox_cases=%zu kept=%d mismatches=%d rebalance_kept=%.4f (within [%.4f, %.4f])", cases.size(), kept,
              mismatches, frac, kKeepRate - 3 * sigma, kKeepRate + 3 * sigma)};
}

// 9. `forge stats` table against a recount of a two-source run.
Outcome stats_report() {
  OracleCorpusOptions oa;
  oa.scenes = 25;
  oa.source = "alpha";
  OracleCorpusOptions ob = oa;
  ob.source = "beta";
  ob.seed = 5000;
  const fs::path a = corpus("alpha25", oa);
  const fs::path b = corpus("beta25", ob);
  const fs::path root = work_root() / "two_source";
  fs::create_directories(root);
  {
    std::ofstream world(root / "world.jsonl", std::ios::binary);
    world << slurp(a / "scenes.jsonl") << slurp(b / "scenes.jsonl");
  }
  Json cfg = Json::parse(slurp(a / "config.json"));
  cfg["mock_world"] = (root / "world.jsonl").string();
  cfg["output_dir"] = (root / "run").string();
  cfg["sources"] = Json::array({{{"name", "alpha"}, {"manifest", (a / "manifest.jsonl").string()}},
                                {{"name", "beta"}, {"manifest", (b / "manifest.jsonl").string()}}});
  std::ofstream(root / "config.json") << cfg.dump(2);
  fs::remove_all(root / "run");

  const std::string forge = FORGE_BINARY;
  if (std::system((forge + " run --config " + (root / "config.json").string() + " > /dev/null").c_str()) != 0)
    return {false, "forge run failed"};
  if (std::system((forge + " stats " + (root / "run").string() + " > " + (root / "table.txt").string()).c_str()) != 0)
    return {false, "forge stats failed"};

  std::map<std::string, std::map<std::string, long long>> recount;
  for (const auto& q : read_dir_jsonl(root / "run" / "qa")) {
    const std::string src = q["image"]["source_dataset"];
    const std::string task = q["task"];
    ++recount[src][task];
    ++recount[src]["total"];
    ++recount["Total"][task];
    ++recount["Total"]["total"];
  }
  const std::vector<std::string> tasks = {"grounding", "referring", "counting", "near_far", "left_right", "perspective"};
  std::ifstream in(root / "table.txt");
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    if (line.find('|') == std::string::npos) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, '|');) {
      const auto s = cell.find_first_not_of(' ');
      const auto e = cell.find_last_not_of(' ');
      cells.push_back(s == std::string::npos ? "" : cell.substr(s, e - s + 1));
    }
    rows.push_back(cells);
  }
  // Header, one row per source, totals row; source + six tasks + total.
  bool layout = rows.size() == 4;
  for (const auto& r : rows) layout = layout && r.size() == tasks.size() + 2;
  int wrong = 0;
  std::string row_names;
  if (layout) {
    for (size_t i = 1; i < rows.size(); ++i) {
      const std::string& src = rows[i][0];
      row_names += (i > 1 ? "," : "") + src;
      for (size_t t = 0; t < tasks.size(); ++t) wrong += std::stoll(rows[i][t + 1]) != recount[src][tasks[t]];
      wrong += std::stoll(rows[i].back()) != recount[src]["total"];
    }
    layout = rows[1][0] == "alpha" && rows[2][0] == "beta" && rows[3][0] == "Total";
  }
  return {layout && wrong == 0 && recount["Total"]["total"] > 0,
          fmt("rows=[%s] columns=%zu cells_wrong=%d total=%lld", row_names.c_str(), rows.empty() ? 0 : rows[0].size(),
              wrong, recount["Total"]["total"])};
}

// 10. Pair evaluation rate and end-to-end pipeline rate.
Outcome throughput() {
  struct Item {
    BBox box;
    DepthStats stats;
    Reliability rel;
  };
  std::vector<Item> items;
  for (int seed = 0; seed < 100; ++seed) {
    const RenderedScene rs = render_scene(seed, oracle_object_count(seed, 2, 6));
    for (const auto& o : rs.scene.objects) {
      if (o.occluded) continue;
      Item it{project_box(o, rs.scene.camera), {}, {}};
      it.stats = depth_stats(rs.render.depth, it.box);
      it.rel = metric_reliability(it.stats);
      items.push_back(it);
    }
  }
  const size_t n = items.size();
  long long pairs = 0, sink = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int round = 0; round < 5; ++round) {
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        sink += static_cast<int>(left_right(items[i].box, items[j].box));
        sink += static_cast<int>(compare_depth(items[i].stats, items[j].stats, items[i].rel, items[j].rel).quality);
        sink += bbox_iou(items[i].box, items[j].box) > 0.5;
        ++pairs;
      }
    }
  }
  const double pair_rate = static_cast<double>(pairs) / seconds_since(t0);

  const BigRun& r = big_run();
  const double scene_rate = kThroughputScenes / r.seconds;
  return {pair_rate >= kMinPairsPerSecond && scene_rate >= kMinScenesPerSecond,
          fmt("pairs/s=%.0f (>=%.0f) pipeline scenes/s=%.0f (>=%.0f; %d scenes in %.2fs, 1 worker) [%lld]", pair_rate,
              kMinPairsPerSecond, scene_rate, kMinScenesPerSecond, kThroughputScenes, r.seconds, sink % 2)};
}

}  // namespace

int main() {
  report(1, "oracle left/right", oracle_left_right);
  report(2, "oracle near/far", oracle_near_far);
  report(3, "facing transform", facing_transform);
  report(4, "box normalization", normalization);
  report(5, "generation gates", gates);
  report(6, "quality gate", quality_gate);
  report(7, "determinism and resume", determinism);
  report(8, "filter rules", filtering);
  report(9, "stats report", stats_report);
  report(10, "throughput", throughput);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures;
}
