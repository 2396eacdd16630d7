#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>

#include "forge/expert_gateway.hpp"
#include "forge/scene_model.hpp"

namespace forge {

/// Ground-truth scenes the mock provider answers from, keyed by ImageRef::key().
class MockWorld {
 public:
  void add(SceneRecord scene);
  /// Loads a scene-record JSONL file.
  static std::shared_ptr<MockWorld> from_file(const std::string& path);
  const SceneRecord* find(const std::string& image_key) const;
  size_t size() const { return scenes_.size(); }

 private:
  std::unordered_map<std::string, SceneRecord> scenes_;
};

/// qa_id -> generated record, filled by the pipeline before judging so the
/// mock judge can answer with (or against) the gold answer.
class GoldBoard {
 public:
  void put(const QARecord& record);
  std::optional<QARecord> get(const std::string& qa_id) const;
  void erase(const std::string& qa_id);

 private:
  mutable std::mutex mutex_;
  std::unordered_map<std::string, QARecord> records_;
};

enum class JudgeBehavior { kGold, kMutate, kFail };
/// gold, mutate, fail
JudgeBehavior parse_judge_behavior(std::string_view name);

/// The answer a judge that disagrees would give: boxes translated by 60% of
/// their width, counts +1, left/right swapped, two-item orders reversed; any
/// other text gets a "not " prefix. Always fails the quality gate.
std::string mutate_answer(const QARecord& gold);

struct MockOptions {
  JudgeBehavior judge = JudgeBehavior::kGold;
  /// Embedding dimension for the embedder stub.
  int embedding_dim = 16;
  /// Text whose embedding the stub returns for every image.
  std::string image_embedding_text = "natural scene";
};

/// Deterministic in-process provider for every kind, backed by a MockWorld.
class MockProvider {
 public:
  MockProvider(std::shared_ptr<const MockWorld> world, std::shared_ptr<GoldBoard> gold, MockOptions options = {});

  ProviderResponse handle(const ProviderRequest& request) const;
  std::shared_ptr<Transport> transport() const;

  /// Hash-seeded unit vector; identical texts map to identical vectors.
  std::vector<double> embed(const std::string& text) const;

 private:
  std::string caption_text(const SceneRecord& scene) const;
  const SceneObject* object_at(const SceneRecord& scene, const Json& crop) const;
  const SceneRecord& scene_for(const ProviderRequest& request) const;

  std::shared_ptr<const MockWorld> world_;
  std::shared_ptr<GoldBoard> gold_;
  MockOptions options_;
};

}  // namespace forge
