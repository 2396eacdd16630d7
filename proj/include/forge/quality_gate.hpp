#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "forge/scene_model.hpp"

namespace forge {

enum class VerdictReason { kPassed, kIouBelowThreshold, kTextMismatch, kJudgeUnavailable };
/// passed, iou_below_threshold, text_mismatch, judge_unavailable
std::string_view verdict_reason_name(VerdictReason reason);

struct Verdict {
  std::string qa_id;
  bool passed = false;
  std::string judge_answer;
  /// IoU for box-valued answers.
  std::optional<double> score;
  VerdictReason reason = VerdictReason::kJudgeUnavailable;
};

struct BoxCheck {
  bool passed = false;
  double iou = 0;
};

/// passed iff IoU >= threshold (inclusive), computed in normalized space.
BoxCheck verify_box_answer(const NormalizedBBox& predicted, const NormalizedBBox& gold, double threshold = 0.8);

/// Trim, ASCII casefold, collapse whitespace, strip terminal punctuation and
/// map the number words zero..twenty to digits.
std::string normalize_answer_text(std::string_view text);
bool verify_text_answer(std::string_view predicted, std::string_view gold);

/// First "<box>[...]</box>" payload in free text, coordinates rounded half-up
/// and clamped to [0, 1000]. A malformed payload yields nullopt and bumps
/// *parse_warnings when given.
std::optional<NormalizedBBox> extract_box_from_judge(std::string_view text, long long* parse_warnings = nullptr);

struct GateConfig {
  double iou_threshold = 0.8;
};

/// Returns the judge's raw answer; throws Error when the judge is unavailable.
using JudgeFn = std::function<std::string(const QARecord&)>;

/// Asks the judge and compares. Records with answer_boxes go through the IoU
/// rule, all others through normalized text match. Judge errors become
/// judge_unavailable (quarantine), never a pass.
Verdict inspect(const QARecord& record, const JudgeFn& judge, const GateConfig& config = {},
                long long* parse_warnings = nullptr);

/// "qa_id,reason,score" with an empty score for text answers.
std::string rejection_line(const Verdict& verdict);

}  // namespace forge
