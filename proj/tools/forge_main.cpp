// forge: command-line front end for the QA synthesis pipeline.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>

#include "forge/error.hpp"
#include "forge/geometry.hpp"
#include "forge/pipeline.hpp"
#include "forge/random.hpp"
#include "forge/scene_oracle.hpp"

namespace fs = std::filesystem;
using namespace forge;

namespace {

int cmd_run(const std::string& config_path, const std::string& stage, bool resume) {
  const PipelineConfig config = PipelineConfig::from_file(config_path);
  RunOptions options;
  options.resume = resume;
  if (!stage.empty()) {
    options.only_stage = parse_stage(stage);
    if (!options.only_stage) throw Error(ErrorCode::kInvalidConfig, "unknown stage '" + stage + "'");
  }
  const RunStats stats = run_pipeline(config, options);
  std::cout << emit_stats(stats);
  std::cout << "output: " << config.output_dir << "\n";
  return 0;
}

int cmd_stats(const std::string& run_dir, bool as_json) {
  const RunStats stats = load_run_stats(run_dir);
  if (as_json) {
    std::cout << stats.to_json().dump(2) << "\n";
  } else {
    std::cout << emit_stats(stats);
  }
  return 0;
}

int cmd_verify(const std::string& run_dir) {
  const VerifyReport report = verify_run(run_dir);
  for (const auto& v : report.violations) std::cout << "violation: " << v << "\n";
  std::cout << report.records << " records checked, " << report.violations.size() << " violations\n";
  return report.ok() ? 0 : 1;
}

// Source name -> directory relative uris resolve against, from run.json.
std::map<std::string, fs::path> source_dirs(const std::string& run_dir) {
  std::map<std::string, fs::path> dirs;
  std::ifstream in(fs::path(run_dir) / "run.json");
  const Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) return dirs;
  for (const auto& s : j["config"].value("sources", Json::array())) {
    dirs[s.value("name", "")] = fs::path(s.value("manifest", "")).parent_path();
  }
  return dirs;
}

void draw_rect(Raster& r, const BBox& b, std::array<std::uint8_t, 3> color) {
  const int x0 = std::clamp(static_cast<int>(b.x_min), 0, r.width - 1);
  const int x1 = std::clamp(static_cast<int>(b.x_max) - 1, 0, r.width - 1);
  const int y0 = std::clamp(static_cast<int>(b.y_min), 0, r.height - 1);
  const int y1 = std::clamp(static_cast<int>(b.y_max) - 1, 0, r.height - 1);
  auto put = [&](int x, int y) {
    for (int c = 0; c < 3; ++c) r.data[(static_cast<size_t>(y) * r.width + x) * 3 + c] = color[c];
  };
  for (int t = 0; t < 2; ++t) {
    for (int x = x0; x <= x1; ++x) {
      put(x, std::min(y0 + t, y1));
      put(x, std::max(y1 - t, y0));
    }
    for (int y = y0; y <= y1; ++y) {
      put(std::min(x0 + t, x1), y);
      put(std::max(x1 - t, x0), y);
    }
  }
}

Raster to_rgb(const Raster& src) {
  if (src.channels == 3) return src;
  Raster out{src.width, src.height, 3, {}};
  out.data.resize(src.data.size() * 3);
  for (size_t i = 0; i < src.data.size(); ++i) out.data[3 * i] = out.data[3 * i + 1] = out.data[3 * i + 2] = src.data[i];
  return out;
}

int cmd_sample(const std::string& run_dir, int k, std::uint64_t seed) {
  // Reservoir sampling over every verified record.
  Rng rng(derive_seed(seed, {"sample"}));
  std::vector<std::string> reservoir;
  long long seen = 0;
  for (const auto& file : qa_shard_files(run_dir)) {
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      ++seen;
      if (static_cast<long long>(reservoir.size()) < k) {
        reservoir.push_back(line);
      } else {
        const auto j = rng.below(static_cast<std::uint64_t>(seen));
        if (j < static_cast<std::uint64_t>(k)) reservoir[j] = line;
      }
    }
  }
  const auto dirs = source_dirs(run_dir);
  const fs::path out_dir = fs::path(run_dir) / "samples";
  fs::create_directories(out_dir);
  const std::regex box_re(R"(<box>\[\s*(\d+),\s*(\d+),\s*(\d+),\s*(\d+)\s*\]</box>)");

  for (const auto& line : reservoir) {
    const QARecord r = parse_qa_record(line);
    std::cout << line << "\n";
    fs::path image_path = r.image.uri;
    if (image_path.is_relative()) {
      auto it = dirs.find(r.image.source_dataset);
      if (it != dirs.end()) image_path = it->second / image_path;
    }
    Raster canvas;
    try {
      canvas = to_rgb(read_raster(image_path.string()));
    } catch (const Error& e) {
      std::cerr << "  (no overlay: " << e.what() << ")\n";
      continue;
    }
    // Boxes mentioned in the question in green, answer boxes in red.
    for (std::sregex_iterator it(r.question.begin(), r.question.end(), box_re), end; it != end; ++it) {
      const NormalizedBBox nb{std::stoi((*it)[1]), std::stoi((*it)[2]), std::stoi((*it)[3]), std::stoi((*it)[4])};
      draw_rect(canvas, denormalize_bbox(nb, canvas.width, canvas.height), {40, 220, 40});
    }
    if (r.answer_boxes) {
      for (const auto& nb : *r.answer_boxes) {
        draw_rect(canvas, denormalize_bbox(nb, canvas.width, canvas.height), {230, 30, 30});
      }
    }
    std::string name = r.qa_id;
    for (char& c : name) {
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    }
    const fs::path overlay = out_dir / (name + ".ppm");
    write_raster(overlay.string(), canvas);
    std::cerr << "  overlay: " << overlay.string() << "\n";
  }
  return 0;
}

int cmd_oracle_gen(int scenes, std::uint64_t seed, const std::string& out, int shards) {
  OracleCorpusOptions options;
  options.scenes = scenes;
  options.seed = seed;
  options.shard_count = shards;
  write_oracle_corpus(out, options);
  std::cout << "wrote " << scenes << " scenes to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forge: spatial question-answer synthesis pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string stage;
  bool resume = false;
  auto* run = app.add_subcommand("run", "Run the configured pipeline stages");
  run->add_option("--config", config_path, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--stage", stage, "Run only this stage: filter, extract, generate, verify");
  run->add_flag("--resume", resume, "Continue from checkpoints");

  std::string run_dir;
  bool as_json = false;
  auto* stats = app.add_subcommand("stats", "Print the per-source, per-task count table");
  stats->add_option("run_dir", run_dir)->required()->check(CLI::ExistingDirectory);
  stats->add_flag("--json", as_json, "Print the machine-readable stats instead");

  auto* verify = app.add_subcommand("verify", "Re-check every output invariant of a run");
  verify->add_option("run_dir", run_dir)->required()->check(CLI::ExistingDirectory);

  int k = 10;
  std::uint64_t sample_seed = 0;
  auto* sample = app.add_subcommand("sample", "Print K random records and write overlay images");
  sample->add_option("run_dir", run_dir)->required()->check(CLI::ExistingDirectory);
  sample->add_option("-n", k, "Number of records")->check(CLI::PositiveNumber);
  sample->add_option("--seed", sample_seed, "Sampling seed");

  auto* oracle = app.add_subcommand("oracle", "Synthetic scene oracle");
  oracle->require_subcommand(1);
  int scenes = 50;
  std::uint64_t oracle_seed = 0;
  std::string out_dir;
  int shards = 4;
  auto* gen = oracle->add_subcommand("gen", "Write a synthetic fixture corpus");
  gen->add_option("-n", scenes, "Number of scenes")->check(CLI::PositiveNumber);
  gen->add_option("--seed", oracle_seed, "Seed of the first scene");
  gen->add_option("-o", out_dir, "Output directory")->required();
  gen->add_option("--shards", shards, "shard_count written into config.json")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, stage, resume);
    if (*stats) return cmd_stats(run_dir, as_json);
    if (*verify) return cmd_verify(run_dir);
    if (*sample) return cmd_sample(run_dir, k, sample_seed);
    if (*gen) return cmd_oracle_gen(scenes, oracle_seed, out_dir, shards);
  } catch (const Error& e) {
    std::cerr << "forge: " << to_string(e.code()) << ": " << e.what() << "\n";
    return e.code() == ErrorCode::kInterrupted ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "forge: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
