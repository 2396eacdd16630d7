#include "forge/qa_forge.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <sstream>

#include "forge/error.hpp"
#include "forge/prompts.hpp"

namespace forge {
namespace {

bool is_ident_char(char c) { return std::islower(static_cast<unsigned char>(c)) || c == '_'; }

// Calls fn(name, begin, end) for each {identifier} in the pattern.
template <typename Fn>
void scan_placeholders(const std::string& pattern, Fn fn) {
  for (size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] != '{') continue;
    size_t j = i + 1;
    while (j < pattern.size() && is_ident_char(pattern[j])) ++j;
    if (j < pattern.size() && pattern[j] == '}' && j > i + 1) {
      fn(pattern.substr(i + 1, j - i - 1), i, j + 1);
      i = j;
    }
  }
}

std::string substitute(const std::string& pattern, const std::map<std::string, std::string>& rendered) {
  std::string out;
  size_t last = 0;
  scan_placeholders(pattern, [&](const std::string& name, size_t begin, size_t end) {
    out.append(pattern, last, begin - last);
    out += rendered.at(name);
    last = end;
  });
  out.append(pattern, last, std::string::npos);
  return out;
}

std::optional<NormalizedBBox> parse_payload(const std::string& text) {
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_array() || j.size() != 4) return std::nullopt;
  int c[4];
  for (size_t i = 0; i < 4; ++i) {
    if (!j[i].is_number_integer()) return std::nullopt;
    const long long v = j[i].get<long long>();
    if (v < 0 || v > 1000) return std::nullopt;
    c[i] = static_cast<int>(v);
  }
  NormalizedBBox b{c[0], c[1], c[2], c[3]};
  if (!b.valid()) return std::nullopt;
  return b;
}

std::optional<NormalizedBBox> try_normalize(const SceneObject& o, const ImageRef& image) {
  try {
    return normalize_bbox(o.bbox, image.width, image.height);
  } catch (const Error&) {
    return std::nullopt;
  }
}

const QATemplate* pick_template(const TemplateRegistry& registry, TaskKind task, Rng& rng,
                                const std::set<std::string>& excluded_variants = {}) {
  std::vector<const QATemplate*> options;
  for (const QATemplate* t : registry.for_task(task)) {
    if (!excluded_variants.count(t->variant)) options.push_back(t);
  }
  if (options.empty()) return nullptr;
  return options[rng.below(options.size())];
}

QARecord base_record(const SceneRecord& scene, TaskKind task, const std::string& key, const QATemplate& t) {
  QARecord r;
  r.qa_id = make_qa_id(scene.image, task, key);
  r.image = scene.image;
  r.task = task;
  r.template_id = t.template_id;
  return r;
}

std::string pair_key(const SceneObject& a, const SceneObject& b) {
  return std::to_string(a.object_id) + "-" + std::to_string(b.object_id);
}

size_t caption_count(const SceneRecord& scene, const std::string& caption) {
  return static_cast<size_t>(std::count_if(scene.objects.begin(), scene.objects.end(),
                                           [&](const SceneObject& o) { return o.region_caption == caption; }));
}

size_t category_count(const SceneRecord& scene, const std::string& category) {
  return static_cast<size_t>(std::count_if(scene.objects.begin(), scene.objects.end(),
                                           [&](const SceneObject& o) { return o.category == category; }));
}

// Relational tasks refer to objects by caption, so a pair whose captions
// coincide cannot be answered unambiguously.
bool distinct_captions(const SceneObject& a, const SceneObject& b) {
  return !a.region_caption.empty() && !b.region_caption.empty() && a.region_caption != b.region_caption;
}

}  // namespace

std::vector<std::string> QATemplate::placeholders() const {
  std::vector<std::string> names;
  auto add = [&](const std::string& name, size_t, size_t) {
    if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
  };
  scan_placeholders(question_pattern, add);
  scan_placeholders(answer_pattern, add);
  return names;
}

const std::set<std::string>& known_placeholders() {
  static const std::set<std::string> kNames = {
      "region_caption", "category",       "box",           "count",       "caption_a",      "caption_b",
      "box_a",          "box_b",          "option_list",   "order",       "answer_caption", "answer_box",
      "relation",       "subject_caption", "subject_box",  "target_caption", "target_box"};
  return kNames;
}

bool is_box_placeholder(const std::string& name) {
  return name == "box" || (name.size() > 4 && name.compare(name.size() - 4, 4, "_box") == 0);
}

const std::set<std::string>& known_variants(TaskKind task) {
  static const std::map<TaskKind, std::set<std::string>> kVariants = {
      {TaskKind::kGrounding, {"default", "unique_category"}},
      {TaskKind::kReferring, {"default"}},
      {TaskKind::kCounting, {"default"}},
      {TaskKind::kNearFar, {"closer", "farther", "order_far_to_near", "order_near_to_far"}},
      {TaskKind::kLeftRight, {"rightmost_box", "leftmost_box", "relation", "leftmost_caption", "rightmost_caption"}},
      {TaskKind::kPerspective, {"default"}}};
  return kVariants.at(task);
}

TemplateRegistry TemplateRegistry::builtin() {
  static const TemplateRegistry kBuiltin = from_json(Json::parse(builtin_templates_json()));
  return kBuiltin;
}

TemplateRegistry TemplateRegistry::from_json(const Json& j) {
  if (!j.is_object() || !j.contains("templates") || !j["templates"].is_array()) {
    throw Error(ErrorCode::kInvalidConfig, "templates: expected {\"version\", \"templates\": [...]}");
  }
  TemplateRegistry reg;
  reg.version_ = j.contains("version") && j["version"].is_string() ? j["version"].get<std::string>() : "0";
  std::set<std::string> ids;
  std::map<TaskKind, int> per_task;
  const auto& arr = j["templates"];
  for (size_t i = 0; i < arr.size(); ++i) {
    const std::string path = "templates[" + std::to_string(i) + "]";
    const Json& t = arr[i];
    if (!t.is_object()) throw Error(ErrorCode::kInvalidConfig, path + ": expected object");
    for (auto it = t.begin(); it != t.end(); ++it) {
      static const std::set<std::string> kKnown = {"template_id", "task", "variant", "question", "answer"};
      if (!kKnown.count(it.key())) throw Error(ErrorCode::kInvalidConfig, path + ": unknown field '" + it.key() + "'");
    }
    for (const char* key : {"template_id", "task", "question", "answer"}) {
      if (!t.contains(key) || !t[key].is_string()) {
        throw Error(ErrorCode::kInvalidConfig, path + ": missing string field '" + key + "'");
      }
    }
    QATemplate qt;
    qt.template_id = t["template_id"].get<std::string>();
    const auto task = parse_task(t["task"].get<std::string>());
    if (!task) throw Error(ErrorCode::kInvalidConfig, path + ".task: unknown task");
    qt.task = *task;
    if (t.contains("variant")) {
      if (!t["variant"].is_string()) throw Error(ErrorCode::kInvalidConfig, path + ".variant: expected string");
      qt.variant = t["variant"].get<std::string>();
    }
    if (!known_variants(qt.task).count(qt.variant)) {
      throw Error(ErrorCode::kInvalidConfig, path + ".variant: '" + qt.variant + "' is not valid for this task");
    }
    qt.question_pattern = t["question"].get<std::string>();
    qt.answer_pattern = t["answer"].get<std::string>();
    for (const auto& name : qt.placeholders()) {
      if (!known_placeholders().count(name)) {
        throw Error(ErrorCode::kInvalidConfig, path + ": placeholder {" + name + "} has no binding source");
      }
    }
    if (!ids.insert(qt.template_id).second) {
      throw Error(ErrorCode::kInvalidConfig, path + ": duplicate template_id '" + qt.template_id + "'");
    }
    ++per_task[qt.task];
    reg.templates_.push_back(std::move(qt));
  }
  for (TaskKind task : kAllTasks) {
    if (per_task[task] < 3) {
      throw Error(ErrorCode::kInvalidConfig, "templates: task " + std::string(task_name(task)) +
                                                 " needs at least 3 templates, has " + std::to_string(per_task[task]));
    }
  }
  return reg;
}

TemplateRegistry TemplateRegistry::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read template registry " + path);
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kInvalidConfig, "template registry is not valid JSON: " + path);
  return from_json(j);
}

Json TemplateRegistry::to_json() const {
  Json arr = Json::array();
  for (const auto& t : templates_) {
    arr.push_back({{"template_id", t.template_id},
                   {"task", std::string(task_name(t.task))},
                   {"variant", t.variant},
                   {"question", t.question_pattern},
                   {"answer", t.answer_pattern}});
  }
  return Json{{"version", version_}, {"templates", arr}};
}

std::vector<const QATemplate*> TemplateRegistry::for_task(TaskKind task) const {
  std::vector<const QATemplate*> out;
  for (const auto& t : templates_) {
    if (t.task == task) out.push_back(&t);
  }
  return out;
}

const QATemplate* TemplateRegistry::find(const std::string& template_id) const {
  for (const auto& t : templates_) {
    if (t.template_id == template_id) return &t;
  }
  return nullptr;
}

std::string TemplateRegistry::digest() const { return hex64(fnv1a64(canonical_json(to_json()))); }

Instantiation instantiate_template(const QATemplate& t, const std::map<std::string, std::string>& bindings,
                                   bool strict) {
  std::map<std::string, std::string> rendered;
  for (const auto& name : t.placeholders()) {
    auto it = bindings.find(name);
    if (it == bindings.end()) {
      throw Error(ErrorCode::kMissingBinding, t.template_id + ": missing binding {" + name + "}");
    }
    if (is_box_placeholder(name)) {
      const auto box = parse_payload(it->second);
      if (!box) {
        throw Error(ErrorCode::kInvalidBinding,
                    t.template_id + ": {" + name + "} needs a box payload [x1, y1, x2, y2], got '" + it->second + "'");
      }
      rendered[name] = format_box_token(*box);
    } else {
      rendered[name] = it->second;
    }
  }
  if (strict) {
    for (const auto& [name, value] : bindings) {
      if (!rendered.count(name)) {
        throw Error(ErrorCode::kUnusedBinding, t.template_id + ": binding {" + name + "} is not used");
      }
    }
  }
  return {substitute(t.question_pattern, rendered), substitute(t.answer_pattern, rendered)};
}

int SamplingPolicy::cap(TaskKind task) const {
  auto it = max_per_image.find(task);
  return it == max_per_image.end() ? 0 : it->second;
}

void SamplingPolicy::validate() const {
  for (const auto& [task, cap] : max_per_image) {
    if (cap < 0) {
      throw Error(ErrorCode::kInvalidConfig, "sampling.max_per_image." + std::string(task_name(task)) + " must be >= 0");
    }
  }
  if (min_depth_quality.count(DepthClass::kD)) {
    throw Error(ErrorCode::kInvalidConfig, "sampling.min_depth_quality must not include class D");
  }
}

Rng task_rng(std::uint64_t seed, const ImageRef& image, TaskKind task) {
  return Rng(derive_seed(seed, {image.source_dataset, image.image_id, task_name(task)}));
}

std::vector<size_t> sample_indices(size_t n, int cap, Rng& rng) {
  const size_t k = std::min(n, static_cast<size_t>(std::max(0, cap)));
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  // Partial Fisher-Yates: the first k slots become a uniform k-subset.
  for (size_t i = 0; i < k; ++i) {
    const size_t j = i + static_cast<size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<ObjectPair> sample_pairs(const std::vector<ObjectPair>& eligible, int cap, Rng& rng) {
  std::vector<ObjectPair> out;
  for (size_t i : sample_indices(eligible.size(), cap, rng)) out.push_back(eligible[i]);
  return out;
}

std::string make_qa_id(const ImageRef& image, TaskKind task, const std::string& key) {
  return image.source_dataset + "/" + image.image_id + "/" + std::string(task_name(task)) + "/" + key;
}

std::optional<QARecord> gen_grounding(const SceneRecord& scene, const SceneObject& obj,
                                      const TemplateRegistry& registry, Rng& rng) {
  if (obj.region_caption.empty()) return std::nullopt;
  const auto nbox = try_normalize(obj, scene.image);
  if (!nbox) return std::nullopt;
  std::set<std::string> excluded;
  if (category_count(scene, obj.category) != 1) excluded.insert("unique_category");
  const QATemplate* t = pick_template(registry, TaskKind::kGrounding, rng, excluded);
  if (!t) return std::nullopt;

  QARecord r = base_record(scene, TaskKind::kGrounding, std::to_string(obj.object_id), *t);
  const auto inst = instantiate_template(
      *t, {{"region_caption", obj.region_caption}, {"category", obj.category}, {"box", format_box_payload(*nbox)}});
  r.question = inst.question;
  r.answer = inst.answer;
  r.answer_boxes = std::vector<NormalizedBBox>{*nbox};
  r.object_ids = {obj.object_id};
  if (caption_count(scene, obj.region_caption) > 1) r.attributes["non_unique_reference"] = "true";
  return r;
}

std::optional<QARecord> gen_referring(const SceneRecord& scene, const SceneObject& obj,
                                      const TemplateRegistry& registry, Rng& rng) {
  if (obj.region_caption.empty()) return std::nullopt;
  const auto nbox = try_normalize(obj, scene.image);
  if (!nbox) return std::nullopt;
  const QATemplate* t = pick_template(registry, TaskKind::kReferring, rng);
  if (!t) return std::nullopt;

  QARecord r = base_record(scene, TaskKind::kReferring, std::to_string(obj.object_id), *t);
  const auto inst = instantiate_template(
      *t, {{"region_caption", obj.region_caption}, {"category", obj.category}, {"box", format_box_payload(*nbox)}});
  r.question = inst.question;
  r.answer = inst.answer;
  r.object_ids = {obj.object_id};
  if (caption_count(scene, obj.region_caption) > 1) r.attributes["non_unique_reference"] = "true";
  return r;
}

std::optional<QARecord> gen_counting(const SceneRecord& scene, const std::string& category,
                                     const TemplateRegistry& registry, Rng& rng) {
  std::vector<int> ids;
  for (const auto& o : scene.objects) {
    if (o.category == category) ids.push_back(o.object_id);
  }
  if (ids.size() <= 1) return std::nullopt;
  std::sort(ids.begin(), ids.end());
  const QATemplate* t = pick_template(registry, TaskKind::kCounting, rng);
  if (!t) return std::nullopt;

  QARecord r = base_record(scene, TaskKind::kCounting, category, *t);
  const auto inst = instantiate_template(*t, {{"category", category}, {"count", std::to_string(ids.size())}});
  r.question = inst.question;
  r.answer = inst.answer;
  r.object_ids = ids;
  return r;
}

std::optional<QARecord> gen_near_far(const SceneRecord& scene, const SceneObject& a, const SceneObject& b,
                                     const DepthOrder& order, const TemplateRegistry& registry, Rng& rng,
                                     const std::set<DepthClass>& allowed) {
  if (order.value == DepthOrderValue::kAmbiguous || order.quality == DepthClass::kD || !allowed.count(order.quality)) {
    return std::nullopt;
  }
  if (!distinct_captions(a, b)) return std::nullopt;
  const auto na = try_normalize(a, scene.image);
  const auto nb = try_normalize(b, scene.image);
  if (!na || !nb) return std::nullopt;
  const QATemplate* t = pick_template(registry, TaskKind::kNearFar, rng);
  if (!t) return std::nullopt;

  const bool a_nearer = order.value == DepthOrderValue::kANearer;
  const SceneObject& nearer = a_nearer ? a : b;
  const SceneObject& farther = a_nearer ? b : a;
  std::string answer_caption = t->variant == "farther" ? farther.region_caption : nearer.region_caption;
  std::string order_text;
  if (t->variant == "order_far_to_near") order_text = a_nearer ? "B, A" : "A, B";
  if (t->variant == "order_near_to_far") order_text = a_nearer ? "A, B" : "B, A";

  QARecord r = base_record(scene, TaskKind::kNearFar, pair_key(a, b), *t);
  const auto inst = instantiate_template(*t, {{"caption_a", a.region_caption},
                                              {"caption_b", b.region_caption},
                                              {"box_a", format_box_payload(*na)},
                                              {"box_b", format_box_payload(*nb)},
                                              {"option_list", "A. " + a.region_caption + "; B. " + b.region_caption},
                                              {"answer_caption", answer_caption},
                                              {"order", order_text}});
  r.question = inst.question;
  r.answer = inst.answer;
  r.object_ids = {a.object_id, b.object_id};
  r.attributes["depth_class"] = std::string(depth_class_name(order.quality));
  r.attributes["relation"] = a_nearer ? "a_nearer" : "b_nearer";
  return r;
}

std::optional<QARecord> gen_left_right(const SceneRecord& scene, const SceneObject& a, const SceneObject& b,
                                       LRRelation rel, const TemplateRegistry& registry, Rng& rng) {
  if (rel == LRRelation::kAmbiguous || !distinct_captions(a, b)) return std::nullopt;
  const auto na = try_normalize(a, scene.image);
  const auto nb = try_normalize(b, scene.image);
  if (!na || !nb) return std::nullopt;
  const QATemplate* t = pick_template(registry, TaskKind::kLeftRight, rng);
  if (!t) return std::nullopt;

  const bool a_left = rel == LRRelation::kLeft;
  const SceneObject& left = a_left ? a : b;
  const SceneObject& right = a_left ? b : a;
  const NormalizedBBox& left_box = a_left ? *na : *nb;
  const NormalizedBBox& right_box = a_left ? *nb : *na;

  std::string answer_caption;
  std::optional<NormalizedBBox> answer_box;
  if (t->variant == "rightmost_box") answer_box = right_box;
  if (t->variant == "leftmost_box") answer_box = left_box;
  if (t->variant == "rightmost_caption") answer_caption = right.region_caption;
  if (t->variant == "leftmost_caption") answer_caption = left.region_caption;

  QARecord r = base_record(scene, TaskKind::kLeftRight, pair_key(a, b), *t);
  std::map<std::string, std::string> bindings = {{"caption_a", a.region_caption},
                                                 {"caption_b", b.region_caption},
                                                 {"box_a", format_box_payload(*na)},
                                                 {"box_b", format_box_payload(*nb)},
                                                 {"relation", std::string(relation_name(rel))},
                                                 {"answer_caption", answer_caption}};
  if (answer_box) bindings["answer_box"] = format_box_payload(*answer_box);
  const auto inst = instantiate_template(*t, bindings);
  r.question = inst.question;
  r.answer = inst.answer;
  if (answer_box) r.answer_boxes = std::vector<NormalizedBBox>{*answer_box};
  r.object_ids = {a.object_id, b.object_id};
  r.attributes["relation"] = std::string(relation_name(rel));
  return r;
}

std::optional<QARecord> gen_perspective(const SceneRecord& scene, const SceneObject& subject,
                                        const SceneObject& target, const TemplateRegistry& registry, Rng& rng) {
  if (!subject.is_person || !subject.facing || subject.object_id == target.object_id) return std::nullopt;
  const auto facing = map_facing(*subject.facing);
  if (!facing) return std::nullopt;
  if (!distinct_captions(subject, target)) return std::nullopt;
  const LRRelation ego = left_right(target.bbox, subject.bbox);
  if (ego == LRRelation::kAmbiguous) return std::nullopt;
  const auto ns = try_normalize(subject, scene.image);
  const auto nt = try_normalize(target, scene.image);
  if (!ns || !nt) return std::nullopt;
  const QATemplate* t = pick_template(registry, TaskKind::kPerspective, rng);
  if (!t) return std::nullopt;

  const LRRelation allo = to_allocentric(ego, *facing);
  QARecord r = base_record(scene, TaskKind::kPerspective, pair_key(subject, target), *t);
  const auto inst = instantiate_template(*t, {{"subject_caption", subject.region_caption},
                                              {"subject_box", format_box_payload(*ns)},
                                              {"target_caption", target.region_caption},
                                              {"target_box", format_box_payload(*nt)},
                                              {"relation", std::string(relation_name(allo))}});
  r.question = inst.question;
  r.answer = inst.answer;
  r.object_ids = {subject.object_id, target.object_id};
  r.attributes["facing"] = std::string(facing_name(*facing));
  r.attributes["ego_relation"] = std::string(relation_name(ego));
  r.attributes["relation"] = std::string(relation_name(allo));
  return r;
}

long long TaskTally::rejected_total() const {
  long long n = 0;
  for (const auto& [reason, count] : rejected) n += count;
  return n;
}

void TaskTally::merge(const TaskTally& other) {
  attempted += other.attempted;
  emitted += other.emitted;
  for (const auto& [reason, count] : other.rejected) rejected[reason] += count;
}

GenerationResult generate_for_scene(const SceneRecord& scene, const std::map<int, DepthStats>& depth,
                                    const TemplateRegistry& registry, const GenerationConfig& config) {
  GenerationResult result;
  const SamplingPolicy& policy = config.policy;
  const auto& objs = scene.objects;
  for (TaskKind task : kAllTasks) result.tallies[task];

  auto emit = [&](TaskKind task, std::optional<QARecord> r, const char* failure) {
    TaskTally& tally = result.tallies[task];
    if (r) {
      ++tally.emitted;
      result.records.push_back(std::move(*r));
    } else {
      ++tally.rejected[failure];
    }
  };
  auto reject_over_cap = [&](TaskKind task, size_t eligible, size_t kept) {
    if (eligible > kept) result.tallies[task].rejected["over_cap"] += static_cast<long long>(eligible - kept);
  };
  // Shared per-object gate for tasks that need a caption and a usable box.
  auto object_gate = [&](const SceneObject& o) -> const char* {
    if (o.region_caption.empty()) return "empty_caption";
    if (!try_normalize(o, scene.image)) return "degenerate_box";
    return nullptr;
  };

  for (TaskKind task : {TaskKind::kGrounding, TaskKind::kReferring}) {
    Rng rng = task_rng(policy.seed, scene.image, task);
    TaskTally& tally = result.tallies[task];
    std::vector<const SceneObject*> eligible;
    for (const auto& o : objs) {
      ++tally.attempted;
      if (const char* why = object_gate(o)) {
        ++tally.rejected[why];
      } else {
        eligible.push_back(&o);
      }
    }
    const auto picks = sample_indices(eligible.size(), policy.cap(task), rng);
    reject_over_cap(task, eligible.size(), picks.size());
    for (size_t i : picks) {
      auto r = task == TaskKind::kGrounding ? gen_grounding(scene, *eligible[i], registry, rng)
                                            : gen_referring(scene, *eligible[i], registry, rng);
      emit(task, std::move(r), "generator_declined");
    }
  }

  {
    Rng rng = task_rng(policy.seed, scene.image, TaskKind::kCounting);
    TaskTally& tally = result.tallies[TaskKind::kCounting];
    std::set<std::string> categories;
    for (const auto& o : objs) categories.insert(o.category);
    std::vector<std::string> eligible;
    for (const auto& c : categories) {
      ++tally.attempted;
      if (category_count(scene, c) <= 1) {
        ++tally.rejected["count_le_1"];
      } else {
        eligible.push_back(c);
      }
    }
    const auto picks = sample_indices(eligible.size(), policy.cap(TaskKind::kCounting), rng);
    reject_over_cap(TaskKind::kCounting, eligible.size(), picks.size());
    for (size_t i : picks) emit(TaskKind::kCounting, gen_counting(scene, eligible[i], registry, rng), "generator_declined");
  }

  {
    Rng rng = task_rng(policy.seed, scene.image, TaskKind::kNearFar);
    TaskTally& tally = result.tallies[TaskKind::kNearFar];
    std::vector<ObjectPair> eligible;
    for (size_t i = 0; i < objs.size(); ++i) {
      for (size_t j = i + 1; j < objs.size(); ++j) {
        ++tally.attempted;
        const SceneObject& a = objs[i];
        const SceneObject& b = objs[j];
        const char* why = object_gate(a) ? object_gate(a) : object_gate(b);
        if (!why && a.region_caption == b.region_caption) why = "non_unique_reference";
        if (!why && (!depth.count(a.object_id) || !depth.count(b.object_id))) why = "no_depth";
        if (!why) {
          const DepthStats& sa = depth.at(a.object_id);
          const DepthStats& sb = depth.at(b.object_id);
          const DepthOrder order = compare_depth(sa, sb, metric_reliability(sa, config.reliability),
                                                 metric_reliability(sb, config.reliability), config.depth_epsilon);
          if (order.value == DepthOrderValue::kAmbiguous || order.quality == DepthClass::kD) {
            why = "class_d";
          } else if (!policy.min_depth_quality.count(order.quality)) {
            why = "depth_quality";
          }
        }
        if (why) {
          ++tally.rejected[why];
        } else {
          eligible.emplace_back(&a, &b);
        }
      }
    }
    const auto picks = sample_pairs(eligible, policy.cap(TaskKind::kNearFar), rng);
    reject_over_cap(TaskKind::kNearFar, eligible.size(), picks.size());
    for (auto [a, b] : picks) {
      if (rng.bernoulli(0.5)) std::swap(a, b);
      const DepthStats& sa = depth.at(a->object_id);
      const DepthStats& sb = depth.at(b->object_id);
      const DepthOrder order = compare_depth(sa, sb, metric_reliability(sa, config.reliability),
                                             metric_reliability(sb, config.reliability), config.depth_epsilon);
      emit(TaskKind::kNearFar, gen_near_far(scene, *a, *b, order, registry, rng, policy.min_depth_quality),
           "generator_declined");
    }
  }

  {
    Rng rng = task_rng(policy.seed, scene.image, TaskKind::kLeftRight);
    TaskTally& tally = result.tallies[TaskKind::kLeftRight];
    std::vector<ObjectPair> eligible;
    for (size_t i = 0; i < objs.size(); ++i) {
      for (size_t j = i + 1; j < objs.size(); ++j) {
        ++tally.attempted;
        const SceneObject& a = objs[i];
        const SceneObject& b = objs[j];
        const char* why = object_gate(a) ? object_gate(a) : object_gate(b);
        if (!why && a.region_caption == b.region_caption) why = "non_unique_reference";
        if (!why && left_right(a.bbox, b.bbox) == LRRelation::kAmbiguous) why = "ambiguous";
        if (why) {
          ++tally.rejected[why];
        } else {
          eligible.emplace_back(&a, &b);
        }
      }
    }
    const auto picks = sample_pairs(eligible, policy.cap(TaskKind::kLeftRight), rng);
    reject_over_cap(TaskKind::kLeftRight, eligible.size(), picks.size());
    for (auto [a, b] : picks) {
      if (rng.bernoulli(0.5)) std::swap(a, b);
      emit(TaskKind::kLeftRight, gen_left_right(scene, *a, *b, left_right(a->bbox, b->bbox), registry, rng),
           "generator_declined");
    }
  }

  {
    Rng rng = task_rng(policy.seed, scene.image, TaskKind::kPerspective);
    TaskTally& tally = result.tallies[TaskKind::kPerspective];
    std::vector<ObjectPair> eligible;
    for (const auto& s : objs) {
      if (!s.is_person) continue;
      for (const auto& t : objs) {
        if (t.object_id == s.object_id) continue;
        ++tally.attempted;
        const char* why = object_gate(s) ? object_gate(s) : object_gate(t);
        if (!why && s.region_caption == t.region_caption) why = "non_unique_reference";
        if (!why && !(s.facing && map_facing(*s.facing))) why = "facing_unmappable";
        if (!why && left_right(t.bbox, s.bbox) == LRRelation::kAmbiguous) why = "ambiguous";
        if (why) {
          ++tally.rejected[why];
        } else {
          eligible.emplace_back(&s, &t);
        }
      }
    }
    const auto picks = sample_pairs(eligible, policy.cap(TaskKind::kPerspective), rng);
    reject_over_cap(TaskKind::kPerspective, eligible.size(), picks.size());
    for (const auto& [s, t] : picks) {
      emit(TaskKind::kPerspective, gen_perspective(scene, *s, *t, registry, rng), "generator_declined");
    }
  }
  return result;
}

}  // namespace forge
