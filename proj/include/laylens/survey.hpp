#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "laylens/domain.hpp"

namespace laylens {

enum class QuestionKind { kLikert, kChoice, kBoolean };

/// Throws ValidationError for an unknown question id.
QuestionKind question_kind(std::string_view question_id);
const std::vector<std::string>& likert_questions();

struct SurveyResponse {
  std::string participant_id;
  std::string item_id;
  std::string question_id;
  std::optional<int> rating;           // Likert questions, 1..5
  std::optional<std::string> choice;   // "preference": "simplified" | "complex"
  std::optional<bool> answer;          // yes/no questions

  bool operator==(const SurveyResponse&) const = default;
};

/// Exactly the field matching the question kind must be present and in range.
void validate_survey_response(const SurveyResponse& r);

void to_json(Json& j, const SurveyResponse& v);
void from_json(const Json& j, SurveyResponse& v);

using LikertCounts = std::array<std::size_t, 5>;

LikertCounts likert_distribution(std::span<const SurveyResponse> responses, std::string_view question_id);

/// Share of "simplified" among preference answers. Throws ValidationError when
/// there are none.
double preference_proportion(std::span<const SurveyResponse> responses);

enum class WilcoxonMethod { kExact, kNormalApprox };
std::string_view to_string(WilcoxonMethod m);

inline constexpr std::size_t kExactWilcoxonMaxN = 25;

struct WilcoxonResult {
  std::size_t n_used = 0;
  double w_plus = 0;
  double w_minus = 0;
  WilcoxonMethod method = WilcoxonMethod::kExact;
  double p_two_sided = 1.0;
};

void to_json(Json& j, const WilcoxonResult& v);

/// Paired test on d = b − a. Zero differences are dropped, ties get midranks.
/// Exact null distribution for n_used ≤ 25, continuity-corrected normal
/// approximation above. Throws ValidationError("no nonzero pairs").
WilcoxonResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs);

/// Standard normal CDF.
double normal_cdf(double z);

struct Proportion {
  std::size_t hits = 0;
  std::size_t total = 0;
  double fraction() const { return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total); }
};

struct SurveySummary {
  std::size_t response_count = 0;
  std::size_t participant_count = 0;
  std::map<std::string, LikertCounts> distributions;
  Proportion preference_simplified;
  Proportion cognitive_load_reduced;
  Proportion comparison_helpful;
  Proportion confidence_improved;
  Proportion would_use;
  std::map<std::string, WilcoxonResult> wilcoxon;  // "ease" | "clarity" | "accuracy"
};

SurveySummary summary_report(std::span<const SurveyResponse> responses);

void to_json(Json& j, const SurveySummary& s);
/// question,rating,count rows for stacked-bar plotting.
std::string summary_csv(const SurveySummary& s);
std::string summary_text(const SurveySummary& s);

/// Parses a JSONL file of SurveyResponse records. Throws ValidationError with
/// the offending line number.
std::vector<SurveyResponse> load_survey_jsonl(const std::string& path);

}  // namespace laylens
