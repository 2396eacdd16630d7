#include <cstdio>
#include <fstream>
#include <numeric>

#include "forge/error.hpp"
#include "forge/pipeline.hpp"

namespace forge {
namespace {

constexpr std::array<const char*, 6> kColumnHeaders = {"Grounding", "Referring", "Counting",
                                                      "Near-Far",  "Left-Right", "Persp."};

long long count_of(const Json& j, const char* key) { return j.value(key, 0LL); }

Json tally_to_json(const TaskTally& t) {
  return {{"attempted", t.attempted}, {"emitted", t.emitted}, {"rejected", t.rejected}};
}

TaskTally tally_from_json(const Json& j) {
  TaskTally t;
  t.attempted = count_of(j, "attempted");
  t.emitted = count_of(j, "emitted");
  if (j.contains("rejected")) t.rejected = j["rejected"].get<std::map<std::string, long long>>();
  return t;
}

}  // namespace

void StageStats::merge(const StageStats& other) {
  attempted += other.attempted;
  emitted += other.emitted;
  rejected += other.rejected;
  quarantined += other.quarantined;
  for (const auto& [reason, n] : other.reasons) reasons[reason] += n;
  wall_seconds += other.wall_seconds;
}

Json StageStats::to_json() const {
  return {{"attempted", attempted},   {"emitted", emitted}, {"rejected", rejected},
          {"quarantined", quarantined}, {"reasons", reasons}, {"wall_seconds", wall_seconds}};
}

StageStats StageStats::from_json(const Json& j) {
  StageStats s;
  s.attempted = count_of(j, "attempted");
  s.emitted = count_of(j, "emitted");
  s.rejected = count_of(j, "rejected");
  s.quarantined = count_of(j, "quarantined");
  if (j.contains("reasons")) s.reasons = j["reasons"].get<std::map<std::string, long long>>();
  s.wall_seconds = j.value("wall_seconds", 0.0);
  return s;
}

void RunStats::merge(const RunStats& other) {
  for (const auto& [source, per_task] : other.emitted) {
    for (const auto& [task, n] : per_task) emitted[source][task] += n;
  }
  for (const auto& [stage, s] : other.stages) stages[stage].merge(s);
  for (const auto& [task, t] : other.generation) generation[task].merge(t);
  for (const auto& [cat, n] : other.category_counts) category_counts[cat] += n;
  for (const auto& [why, n] : other.object_drops) object_drops[why] += n;
  rebalanced_away += other.rebalanced_away;
  judge_parse_warnings += other.judge_parse_warnings;
  region_caption_warnings += other.region_caption_warnings;
}

long long RunStats::total(const std::string& source) const {
  auto it = emitted.find(source);
  if (it == emitted.end()) return 0;
  long long n = 0;
  for (const auto& [task, c] : it->second) n += c;
  return n;
}

long long RunStats::total(TaskKind task) const {
  long long n = 0;
  for (const auto& [source, per_task] : emitted) {
    auto it = per_task.find(task);
    if (it != per_task.end()) n += it->second;
  }
  return n;
}

long long RunStats::grand_total() const {
  long long n = 0;
  for (const auto& [source, per_task] : emitted) n += total(source);
  return n;
}

bool RunStats::conserved() const {
  for (const auto& [stage, s] : stages) {
    if (!s.conserved()) return false;
  }
  for (const auto& [task, t] : generation) {
    if (t.attempted != t.emitted + t.rejected_total()) return false;
  }
  return true;
}

Json RunStats::to_json() const {
  Json em = Json::object();
  for (const auto& [source, per_task] : emitted) {
    Json row = Json::object();
    for (TaskKind task : kAllTasks) {
      auto it = per_task.find(task);
      row[std::string(task_name(task))] = it == per_task.end() ? 0 : it->second;
    }
    em[source] = row;
  }
  Json st = Json::object();
  for (const auto& [stage, s] : stages) st[std::string(stage_name(stage))] = s.to_json();
  Json gen = Json::object();
  for (const auto& [task, t] : generation) gen[std::string(task_name(task))] = tally_to_json(t);
  Json totals = Json::object();
  for (TaskKind task : kAllTasks) totals[std::string(task_name(task))] = total(task);
  return {{"emitted", em},
          {"stages", st},
          {"generation", gen},
          {"category_counts", category_counts},
          {"object_drops", object_drops},
          {"rebalanced_away", rebalanced_away},
          {"judge_parse_warnings", judge_parse_warnings},
          {"region_caption_warnings", region_caption_warnings},
          {"task_totals", totals},
          {"grand_total", grand_total()}};
}

RunStats RunStats::from_json(const Json& j) {
  RunStats r;
  const Json emitted_j = j.value("emitted", Json::object());
  const Json stages_j = j.value("stages", Json::object());
  const Json generation_j = j.value("generation", Json::object());
  for (const auto& [source, row] : emitted_j.items()) {
    auto& dst = r.emitted[source];
    for (const auto& [name, n] : row.items()) {
      const auto task = parse_task(name);
      if (!task) throw Error(ErrorCode::kMalformed, "stats: unknown task '" + name + "'");
      dst[*task] = n.get<long long>();
    }
  }
  for (const auto& [name, s] : stages_j.items()) {
    const auto stage = parse_stage(name);
    if (!stage) throw Error(ErrorCode::kMalformed, "stats: unknown stage '" + name + "'");
    r.stages[*stage] = StageStats::from_json(s);
  }
  for (const auto& [name, t] : generation_j.items()) {
    const auto task = parse_task(name);
    if (!task) throw Error(ErrorCode::kMalformed, "stats: unknown task '" + name + "'");
    r.generation[*task] = tally_from_json(t);
  }
  if (j.contains("category_counts")) r.category_counts = j["category_counts"].get<std::map<std::string, long long>>();
  if (j.contains("object_drops")) r.object_drops = j["object_drops"].get<std::map<std::string, long long>>();
  r.rebalanced_away = j.value("rebalanced_away", 0LL);
  r.judge_parse_warnings = j.value("judge_parse_warnings", 0LL);
  r.region_caption_warnings = j.value("region_caption_warnings", 0LL);
  return r;
}

std::string emit_stats(const RunStats& stats) {
  std::vector<std::string> header = {"Source"};
  for (const char* h : kColumnHeaders) header.push_back(h);
  header.push_back("Total");

  std::vector<std::vector<std::string>> rows;
  std::array<long long, 6> column_sums{};
  long long corner = 0;
  for (const auto& [source, per_task] : stats.emitted) {
    std::vector<std::string> row = {source};
    long long row_sum = 0;
    for (size_t i = 0; i < kAllTasks.size(); ++i) {
      auto it = per_task.find(kAllTasks[i]);
      const long long n = it == per_task.end() ? 0 : it->second;
      row.push_back(std::to_string(n));
      row_sum += n;
      column_sums[i] += n;
    }
    if (row_sum != stats.total(source)) throw Error(ErrorCode::kMalformed, "stats row total mismatch for " + source);
    row.push_back(std::to_string(row_sum));
    corner += row_sum;
    rows.push_back(row);
  }
  std::vector<std::string> totals = {"Total"};
  for (size_t i = 0; i < kAllTasks.size(); ++i) {
    if (column_sums[i] != stats.total(kAllTasks[i])) throw Error(ErrorCode::kMalformed, "stats column total mismatch");
    totals.push_back(std::to_string(column_sums[i]));
  }
  if (corner != stats.grand_total() ||
      corner != std::accumulate(column_sums.begin(), column_sums.end(), 0LL)) {
    throw Error(ErrorCode::kMalformed, "stats grand total mismatch");
  }
  totals.push_back(std::to_string(corner));
  rows.push_back(totals);

  std::vector<size_t> width(header.size());
  for (size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  auto render = [&](const std::vector<std::string>& cells) {
    std::string line;
    for (size_t c = 0; c < cells.size(); ++c) {
      if (c) line += " | ";
      const std::string pad(width[c] - cells[c].size(), ' ');
      line += c == 0 ? cells[c] + pad : pad + cells[c];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    return line + "\n";
  };
  std::string out = render(header);
  std::string rule;
  for (size_t c = 0; c < header.size(); ++c) {
    if (c) rule += "-+-";
    rule += std::string(width[c], '-');
  }
  out += rule + "\n";
  for (size_t i = 0; i < rows.size(); ++i) {
    if (i + 1 == rows.size()) out += rule + "\n";
    out += render(rows[i]);
  }
  return out;
}

RunStats load_run_stats(const std::string& run_dir) {
  const std::string path = run_dir + "/stats.json";
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kMalformed, path + " is not valid JSON");
  return RunStats::from_json(j);
}

}  // namespace forge
