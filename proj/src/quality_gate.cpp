#include "forge/quality_gate.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

#include "forge/error.hpp"
#include "forge/geometry.hpp"

namespace forge {
namespace {

const std::map<std::string, std::string>& number_words() {
  static const std::map<std::string, std::string> kWords = {
      {"zero", "0"},     {"one", "1"},       {"two", "2"},       {"three", "3"},     {"four", "4"},
      {"five", "5"},     {"six", "6"},       {"seven", "7"},     {"eight", "8"},     {"nine", "9"},
      {"ten", "10"},     {"eleven", "11"},   {"twelve", "12"},   {"thirteen", "13"}, {"fourteen", "14"},
      {"fifteen", "15"}, {"sixteen", "16"},  {"seventeen", "17"}, {"eighteen", "18"}, {"nineteen", "19"},
      {"twenty", "20"}};
  return kWords;
}

bool is_terminal_punct(char c) { return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':'; }

}  // namespace

std::string_view verdict_reason_name(VerdictReason reason) {
  switch (reason) {
    case VerdictReason::kPassed: return "passed";
    case VerdictReason::kIouBelowThreshold: return "iou_below_threshold";
    case VerdictReason::kTextMismatch: return "text_mismatch";
    case VerdictReason::kJudgeUnavailable: return "judge_unavailable";
  }
  return "judge_unavailable";
}

BoxCheck verify_box_answer(const NormalizedBBox& predicted, const NormalizedBBox& gold, double threshold) {
  const double iou = bbox_iou(predicted, gold);
  // Integer boxes give exact rational IoUs; the slack only absorbs the last
  // bit of the division so that 0.8 itself passes.
  return {iou >= threshold - 1e-12, iou};
}

std::string normalize_answer_text(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  while (!tokens.empty()) {
    std::string& last = tokens.back();
    while (!last.empty() && is_terminal_punct(last.back())) last.pop_back();
    if (!last.empty()) break;
    tokens.pop_back();
  }
  std::string out;
  for (auto& t : tokens) {
    auto it = number_words().find(t);
    if (it != number_words().end()) t = it->second;
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

bool verify_text_answer(std::string_view predicted, std::string_view gold) {
  return normalize_answer_text(predicted) == normalize_answer_text(gold);
}

std::optional<NormalizedBBox> extract_box_from_judge(std::string_view text, long long* parse_warnings) {
  const size_t open = text.find("<box>");
  if (open == std::string_view::npos) return std::nullopt;
  const size_t close = text.find("</box>", open + 5);
  auto warn = [&]() -> std::optional<NormalizedBBox> {
    if (parse_warnings) ++*parse_warnings;
    return std::nullopt;
  };
  if (close == std::string_view::npos) return warn();
  const std::string payload(text.substr(open + 5, close - open - 5));
  Json j = Json::parse(payload, nullptr, false);
  if (j.is_discarded() || !j.is_array() || j.size() != 4) return warn();
  int c[4];
  for (size_t i = 0; i < 4; ++i) {
    if (!j[i].is_number()) return warn();
    const double v = std::floor(j[i].get<double>() + 0.5);
    c[i] = static_cast<int>(std::clamp(v, 0.0, 1000.0));
  }
  NormalizedBBox b{c[0], c[1], c[2], c[3]};
  if (!b.valid()) return warn();
  return b;
}

Verdict inspect(const QARecord& record, const JudgeFn& judge, const GateConfig& config, long long* parse_warnings) {
  Verdict v;
  v.qa_id = record.qa_id;
  try {
    v.judge_answer = judge(record);
  } catch (const Error&) {
    v.reason = VerdictReason::kJudgeUnavailable;
    return v;
  }
  if (record.answer_boxes && !record.answer_boxes->empty()) {
    const auto predicted = extract_box_from_judge(v.judge_answer, parse_warnings);
    const BoxCheck check = predicted ? verify_box_answer(*predicted, record.answer_boxes->front(), config.iou_threshold)
                                     : BoxCheck{false, 0.0};
    v.score = check.iou;
    v.passed = check.passed;
    v.reason = check.passed ? VerdictReason::kPassed : VerdictReason::kIouBelowThreshold;
  } else {
    v.passed = verify_text_answer(v.judge_answer, record.answer);
    v.reason = v.passed ? VerdictReason::kPassed : VerdictReason::kTextMismatch;
  }
  return v;
}

std::string rejection_line(const Verdict& v) {
  std::string line = v.qa_id + "," + std::string(verdict_reason_name(v.reason)) + ",";
  if (v.score) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v.score);
    line += buf;
  }
  return line;
}

}  // namespace forge
