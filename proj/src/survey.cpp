#include "laylens/survey.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace laylens {

namespace {

const std::map<std::string, QuestionKind, std::less<>>& question_table() {
  static const std::map<std::string, QuestionKind, std::less<>> table = {
      {"ease_complex", QuestionKind::kLikert},       {"ease_simplified", QuestionKind::kLikert},
      {"clarity_complex", QuestionKind::kLikert},    {"clarity_simplified", QuestionKind::kLikert},
      {"accuracy_complex", QuestionKind::kLikert},   {"accuracy_simplified", QuestionKind::kLikert},
      {"preference", QuestionKind::kChoice},         {"cognitive_load_reduced", QuestionKind::kBoolean},
      {"comparison_helpful", QuestionKind::kBoolean}, {"confidence_improved", QuestionKind::kBoolean},
      {"would_use", QuestionKind::kBoolean},
  };
  return table;
}

}  // namespace

QuestionKind question_kind(std::string_view question_id) {
  auto it = question_table().find(question_id);
  if (it == question_table().end()) throw ValidationError("unknown question_id: " + std::string(question_id));
  return it->second;
}

const std::vector<std::string>& likert_questions() {
  static const std::vector<std::string> qs = {"ease_complex",    "ease_simplified",    "clarity_complex",
                                              "clarity_simplified", "accuracy_complex", "accuracy_simplified"};
  return qs;
}

void validate_survey_response(const SurveyResponse& r) {
  if (r.participant_id.empty()) throw ValidationError("participant_id is required");
  if (r.item_id.empty()) throw ValidationError("item_id is required");
  switch (question_kind(r.question_id)) {
    case QuestionKind::kLikert:
      if (!r.rating) throw ValidationError("rating is required for " + r.question_id);
      if (*r.rating < 1 || *r.rating > 5) throw ValidationError("rating must be between 1 and 5");
      if (r.choice || r.answer) throw ValidationError("only rating is allowed for " + r.question_id);
      break;
    case QuestionKind::kChoice:
      if (!r.choice || (*r.choice != "simplified" && *r.choice != "complex"))
        throw ValidationError("choice must be \"simplified\" or \"complex\"");
      if (r.rating || r.answer) throw ValidationError("only choice is allowed for preference");
      break;
    case QuestionKind::kBoolean:
      if (!r.answer) throw ValidationError("answer is required for " + r.question_id);
      if (r.rating || r.choice) throw ValidationError("only answer is allowed for " + r.question_id);
      break;
  }
}

void to_json(Json& j, const SurveyResponse& v) {
  j = Json{{"participant_id", v.participant_id}, {"item_id", v.item_id}, {"question_id", v.question_id}};
  if (v.rating) j["rating"] = *v.rating;
  if (v.choice) j["choice"] = *v.choice;
  if (v.answer) j["answer"] = *v.answer;
}

void from_json(const Json& j, SurveyResponse& v) {
  j.at("participant_id").get_to(v.participant_id);
  j.at("item_id").get_to(v.item_id);
  j.at("question_id").get_to(v.question_id);
  v.rating.reset();
  v.choice.reset();
  v.answer.reset();
  if (auto it = j.find("rating"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw ValidationError("rating must be an integer");
    v.rating = it->get<int>();
  }
  if (auto it = j.find("choice"); it != j.end() && !it->is_null()) v.choice = it->get<std::string>();
  if (auto it = j.find("answer"); it != j.end() && !it->is_null()) v.answer = it->get<bool>();
}

LikertCounts likert_distribution(std::span<const SurveyResponse> responses, std::string_view question_id) {
  LikertCounts counts{};
  for (const auto& r : responses)
    if (r.question_id == question_id && r.rating && *r.rating >= 1 && *r.rating <= 5) ++counts[*r.rating - 1];
  return counts;
}

double preference_proportion(std::span<const SurveyResponse> responses) {
  Proportion p;
  for (const auto& r : responses) {
    if (r.question_id != "preference" || !r.choice) continue;
    ++p.total;
    p.hits += *r.choice == "simplified";
  }
  if (p.total == 0) throw ValidationError("no preference responses");
  return p.fraction();
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank
// ---------------------------------------------------------------------------

std::string_view to_string(WilcoxonMethod m) { return m == WilcoxonMethod::kExact ? "exact" : "normal_approx"; }

void to_json(Json& j, const WilcoxonResult& v) {
  j = Json{{"n_used", v.n_used},
           {"w_plus", v.w_plus},
           {"w_minus", v.w_minus},
           {"method", to_string(v.method)},
           {"p_two_sided", v.p_two_sided}};
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

WilcoxonResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs) {
  std::vector<double> diffs;
  for (const auto& [a, b] : pairs)
    if (b - a != 0.0) diffs.push_back(b - a);
  if (diffs.empty()) throw ValidationError("no nonzero pairs");
  const std::size_t n = diffs.size();

  // Ranks are carried doubled so midranks stay integral.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return std::fabs(diffs[x]) < std::fabs(diffs[y]); });
  std::vector<std::uint64_t> rank2(n);
  std::vector<std::size_t> tie_sizes;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::fabs(diffs[order[j + 1]]) == std::fabs(diffs[order[i]])) ++j;
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = (i + 1) + (j + 1);
    tie_sizes.push_back(j - i + 1);
    i = j + 1;
  }
  std::uint64_t wplus2 = 0, total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (diffs[i] > 0) wplus2 += rank2[i];
  }

  WilcoxonResult out;
  out.n_used = n;
  out.w_plus = static_cast<double>(wplus2) / 2.0;
  out.w_minus = static_cast<double>(total2 - wplus2) / 2.0;

  if (n <= kExactWilcoxonMaxN) {
    // Null distribution of doubled W+ over all 2^n sign assignments, counted
    // by subset-sum over the observed rank multiset.
    std::vector<std::uint64_t> ways(total2 + 1, 0);
    ways[0] = 1;
    std::uint64_t reach = 0;
    for (auto r : rank2) {
      for (std::uint64_t s = reach + 1; s-- > 0;)
        if (ways[s]) ways[s + r] += ways[s];
      reach += r;
    }
    std::uint64_t le = 0, ge = 0;
    for (std::uint64_t s = 0; s <= total2; ++s) {
      if (s <= wplus2) le += ways[s];
      if (s >= wplus2) ge += ways[s];
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    double tail = std::min(static_cast<double>(le), static_cast<double>(ge)) / all;
    out.method = WilcoxonMethod::kExact;
    out.p_two_sided = std::min(1.0, 2.0 * tail);
    return out;
  }

  const double nn = static_cast<double>(n);
  const double mu = nn * (nn + 1.0) / 4.0;
  double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
  for (auto t : tie_sizes) {
    double tt = static_cast<double>(t);
    var -= (tt * tt * tt - tt) / 48.0;
  }
  double diff = out.w_plus - mu;
  if (diff > 0) diff = std::max(0.0, diff - 0.5);
  else if (diff < 0) diff = std::min(0.0, diff + 0.5);
  double z = var > 0 ? diff / std::sqrt(var) : 0.0;
  out.method = WilcoxonMethod::kNormalApprox;
  // 2(1 − Φ(|z|)) without the cancellation in 1 − Φ.
  out.p_two_sided = std::min(1.0, std::erfc(std::fabs(z) / std::sqrt(2.0)));
  return out;
}

// ---------------------------------------------------------------------------
// Summary
// ---------------------------------------------------------------------------

namespace {

Proportion boolean_share(std::span<const SurveyResponse> responses, std::string_view question_id) {
  Proportion p;
  for (const auto& r : responses) {
    if (r.question_id != question_id || !r.answer) continue;
    ++p.total;
    p.hits += *r.answer;
  }
  return p;
}

std::vector<std::pair<double, double>> paired_ratings(std::span<const SurveyResponse> responses,
                                                      const std::string& complex_q, const std::string& simple_q) {
  using Key = std::pair<std::string, std::string>;
  std::map<Key, int> complex_r, simple_r;
  for (const auto& r : responses) {
    if (!r.rating) continue;
    if (r.question_id == complex_q) complex_r[{r.participant_id, r.item_id}] = *r.rating;
    if (r.question_id == simple_q) simple_r[{r.participant_id, r.item_id}] = *r.rating;
  }
  std::vector<std::pair<double, double>> out;
  for (const auto& [key, a] : complex_r)
    if (auto it = simple_r.find(key); it != simple_r.end()) out.emplace_back(a, it->second);
  return out;
}

std::string percent(const Proportion& p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * p.fraction());
  return buf;
}

}  // namespace

SurveySummary summary_report(std::span<const SurveyResponse> responses) {
  SurveySummary s;
  s.response_count = responses.size();
  std::set<std::string> participants;
  for (const auto& r : responses) participants.insert(r.participant_id);
  s.participant_count = participants.size();

  for (const auto& q : likert_questions()) s.distributions[q] = likert_distribution(responses, q);
  for (const auto& r : responses) {
    if (r.question_id != "preference" || !r.choice) continue;
    ++s.preference_simplified.total;
    s.preference_simplified.hits += *r.choice == "simplified";
  }
  s.cognitive_load_reduced = boolean_share(responses, "cognitive_load_reduced");
  s.comparison_helpful = boolean_share(responses, "comparison_helpful");
  s.confidence_improved = boolean_share(responses, "confidence_improved");
  s.would_use = boolean_share(responses, "would_use");

  for (const std::string dim : {"ease", "clarity", "accuracy"}) {
    auto pairs = paired_ratings(responses, dim + "_complex", dim + "_simplified");
    try {
      s.wilcoxon[dim] = wilcoxon_signed_rank(pairs);
    } catch (const ValidationError&) {
      // no pairs or all ties: nothing to report for this dimension
    }
  }
  return s;
}

void to_json(Json& j, const SurveySummary& s) {
  auto prop = [](const Proportion& p) {
    return Json{{"fraction", p.fraction()}, {"hits", p.hits}, {"total", p.total}};
  };
  j = Json{{"response_count", s.response_count},
           {"participant_count", s.participant_count},
           {"distributions", s.distributions},
           {"preference_simplified", prop(s.preference_simplified)},
           {"cognitive_load_reduced", prop(s.cognitive_load_reduced)},
           {"comparison_helpful", prop(s.comparison_helpful)},
           {"confidence_improved", prop(s.confidence_improved)},
           {"would_use", prop(s.would_use)},
           {"wilcoxon", s.wilcoxon}};
}

std::string summary_csv(const SurveySummary& s) {
  std::ostringstream out;
  out << "question,rating,count\n";
  for (const auto& [q, counts] : s.distributions)
    for (std::size_t i = 0; i < counts.size(); ++i) out << q << ',' << (i + 1) << ',' << counts[i] << '\n';
  return out.str();
}

std::string summary_text(const SurveySummary& s) {
  std::ostringstream out;
  out << "Responses: " << s.response_count << " from " << s.participant_count << " participants\n\n";
  auto line = [&](const char* label, const Proportion& p) {
    out << "  " << label << ": " << percent(p) << " (" << p.hits << "/" << p.total << ")\n";
  };
  line("Preferred simplified explanations  ", s.preference_simplified);
  line("Simplified reduced cognitive load  ", s.cognitive_load_reduced);
  line("Side-by-side comparison helpful    ", s.comparison_helpful);
  line("Confidence in detection improved   ", s.confidence_improved);
  line("Would use such a tool              ", s.would_use);

  out << "\nLikert distributions (counts for ratings 1..5):\n";
  for (const auto& [q, c] : s.distributions) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "  %-20s %4zu %4zu %4zu %4zu %4zu\n", q.c_str(), c[0], c[1], c[2], c[3], c[4]);
    out << buf;
  }

  out << "\nWilcoxon signed-rank, complex vs simplified:\n";
  if (s.wilcoxon.empty()) out << "  (no paired ratings)\n";
  for (const auto& [dim, w] : s.wilcoxon) {
    char buf[192];
    std::snprintf(buf, sizeof buf, "  %-9s n_used=%zu W+=%.1f W-=%.1f method=%s p=%.3g\n", dim.c_str(), w.n_used,
                  w.w_plus, w.w_minus, std::string(to_string(w.method)).c_str(), w.p_two_sided);
    out << buf;
  }
  return out.str();
}

std::vector<SurveyResponse> load_survey_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path);
  std::vector<SurveyResponse> out;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      Json j = Json::parse(line);
      auto r = json_as<SurveyResponse>(j);
      validate_survey_response(r);
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace laylens
