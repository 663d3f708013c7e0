#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "laylens/survey.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace laylens;

namespace {

using oracles::Pairs;

Pairs random_pairs(std::mt19937& rng, std::size_t n, int lo, int hi) {
  std::uniform_int_distribution<int> r(lo, hi);
  Pairs p;
  for (std::size_t i = 0; i < n; ++i) p.emplace_back(r(rng), r(rng));
  return p;
}

SurveyResponse likert(std::string pid, std::string item, std::string q, int rating) {
  SurveyResponse r{std::move(pid), std::move(item), std::move(q), rating, {}, {}};
  return r;
}

}  // namespace

TEST_CASE("question kinds and validation") {
  CHECK(question_kind("ease_complex") == QuestionKind::kLikert);
  CHECK(question_kind("preference") == QuestionKind::kChoice);
  CHECK(question_kind("would_use") == QuestionKind::kBoolean);
  CHECK_THROWS_AS(question_kind("favourite_colour"), ValidationError);

  CHECK_NOTHROW(validate_survey_response(likert("p", "i", "ease_simplified", 5)));
  CHECK_THROWS_AS(validate_survey_response(likert("p", "i", "ease_simplified", 6)), ValidationError);
  CHECK_THROWS_AS(validate_survey_response(likert("p", "i", "ease_simplified", 0)), ValidationError);
  SurveyResponse pref{"p", "i", "preference", {}, "simplified", {}};
  CHECK_NOTHROW(validate_survey_response(pref));
  pref.choice = "neither";
  CHECK_THROWS_AS(validate_survey_response(pref), ValidationError);
  SurveyResponse yes{"p", "overall", "would_use", {}, {}, true};
  CHECK_NOTHROW(validate_survey_response(yes));
  yes.rating = 3;
  CHECK_THROWS_AS(validate_survey_response(yes), ValidationError);
  CHECK_THROWS_AS(validate_survey_response(likert("", "i", "ease_simplified", 3)), ValidationError);

  Json j = likert("p", "i", "clarity_complex", 4);
  CHECK(j.get<SurveyResponse>() == likert("p", "i", "clarity_complex", 4));
  CHECK_FALSE(j.contains("choice"));
}

TEST_CASE("likert distribution and proportions") {
  CHECK(likert_distribution({}, "ease_complex") == LikertCounts{0, 0, 0, 0, 0});
  std::vector<SurveyResponse> rs{likert("a", "1", "ease_complex", 3), likert("b", "1", "ease_complex", 3),
                                 likert("c", "1", "ease_complex", 5), likert("c", "1", "ease_simplified", 1)};
  CHECK(likert_distribution(rs, "ease_complex") == LikertCounts{0, 0, 2, 0, 1});
  std::reverse(rs.begin(), rs.end());
  CHECK(likert_distribution(rs, "ease_complex") == LikertCounts{0, 0, 2, 0, 1});

  std::vector<SurveyResponse> prefs{{"a", "1", "preference", {}, "simplified", {}},
                                    {"b", "1", "preference", {}, "complex", {}}};
  CHECK(preference_proportion(prefs) == 0.5);
  prefs[1].choice = "simplified";
  CHECK(preference_proportion(prefs) == 1.0);
  CHECK_THROWS_AS(preference_proportion({}), ValidationError);
}

TEST_CASE("wilcoxon symmetric example") {
  Pairs p{{0, 1}, {1, 0}, {0, 2}, {2, 0}};
  auto r = wilcoxon_signed_rank(p);
  CHECK(r.n_used == 4);
  CHECK(r.w_plus == 5.0);
  CHECK(r.w_minus == 5.0);
  CHECK(r.method == WilcoxonMethod::kExact);
  CHECK(r.p_two_sided == 1.0);
  CHECK_THROWS_WITH_AS(wilcoxon_signed_rank(Pairs{{3, 3}, {1, 1}}), "no nonzero pairs", ValidationError);
}

TEST_CASE("exact p matches brute-force enumeration") {
  std::mt19937 rng(2024);
  int checked = 0;
  while (checked < 50) {
    std::size_t n = 1 + rng() % 12;
    auto pairs = random_pairs(rng, n, 1, 5);  // small range: ties and zeros are common
    auto oracle = oracles::brute_force_wilcoxon(pairs);
    if (oracle.n == 0) continue;
    auto r = wilcoxon_signed_rank(pairs);
    CHECK(r.n_used == oracle.n);
    CHECK(r.w_plus == oracle.w_plus);
    CHECK(r.w_minus == oracle.w_minus);
    CHECK(r.method == WilcoxonMethod::kExact);
    CHECK(std::abs(r.p_two_sided - oracle.p) <= 1e-12);
    ++checked;
  }
}

TEST_CASE("rank-sum identity and sign symmetry") {
  std::mt19937 rng(7);
  for (int i = 0; i < 200; ++i) {
    std::size_t n = 1 + rng() % 60;
    auto pairs = random_pairs(rng, n, 1, 5 + static_cast<int>(rng() % 20));
    bool any = std::any_of(pairs.begin(), pairs.end(), [](auto p) { return p.first != p.second; });
    if (!any) continue;
    auto r = wilcoxon_signed_rank(pairs);
    double nu = static_cast<double>(r.n_used);
    CHECK(r.w_plus + r.w_minus == nu * (nu + 1) / 2);
    CHECK((r.method == WilcoxonMethod::kExact) == (r.n_used <= kExactWilcoxonMaxN));
    CHECK(r.p_two_sided >= 0.0);
    CHECK(r.p_two_sided <= 1.0);

    Pairs flipped;
    for (auto [a, b] : pairs) flipped.emplace_back(b, a);
    auto f = wilcoxon_signed_rank(flipped);
    CHECK(f.w_plus == r.w_minus);
    CHECK(f.w_minus == r.w_plus);
    if (r.method == WilcoxonMethod::kExact) CHECK(f.p_two_sided == r.p_two_sided);
    else CHECK(f.p_two_sided == doctest::Approx(r.p_two_sided).epsilon(1e-12));
  }
}

TEST_CASE("exact and approximate agree on tie-free n = 25") {
  std::mt19937 rng(99);
  for (int round = 0; round < 30; ++round) {
    // Distinct magnitudes 1..25 with random signs.
    std::vector<int> mags(25);
    std::iota(mags.begin(), mags.end(), 1);
    std::shuffle(mags.begin(), mags.end(), rng);
    std::bernoulli_distribution coin(0.3 + 0.4 * (round % 3) / 2.0);
    Pairs pairs;
    for (int m : mags) pairs.emplace_back(100, 100 + (coin(rng) ? m : -m));
    auto r = wilcoxon_signed_rank(pairs);
    REQUIRE(r.method == WilcoxonMethod::kExact);
    CHECK(std::abs(r.p_two_sided - oracles::normal_approx_p(pairs)) <= 0.01);
  }
}

TEST_CASE("normal approximation above 25 pairs") {
  std::mt19937 rng(5);
  for (int i = 0; i < 40; ++i) {
    auto pairs = random_pairs(rng, 26 + rng() % 150, 1, 5);
    auto r = wilcoxon_signed_rank(pairs);
    if (r.n_used <= kExactWilcoxonMaxN) continue;
    CHECK(r.method == WilcoxonMethod::kNormalApprox);
    CHECK(r.p_two_sided == doctest::Approx(oracles::normal_approx_p(pairs)).epsilon(1e-7));
  }
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-9));
}

TEST_CASE("summary of the bundled fixture") {
  auto rs = load_survey_jsonl(testsupport::fixture("user_study_synthetic.jsonl").string());
  auto s = summary_report(rs);
  CHECK(s.participant_count == 15);
  for (const auto& q : likert_questions()) {
    auto c = s.distributions.at(q);
    CHECK(c[0] + c[1] + c[2] + c[3] + c[4] == 150);
  }
  CHECK(s.preference_simplified.hits == 98);
  CHECK(s.preference_simplified.total == 150);
  CHECK(s.cognitive_load_reduced.hits == 122);
  CHECK(s.comparison_helpful.hits == 104);
  CHECK(s.comparison_helpful.total == 150);
  CHECK(s.confidence_improved.hits == 12);
  CHECK(s.confidence_improved.total == 15);
  CHECK(s.would_use.hits == 14);
  CHECK(s.would_use.total == 15);

  std::string text = summary_text(s);
  for (const char* pct : {"65.3%", "81.3%", "69.3%", "80.0%", "93.3%"}) CHECK(text.find(pct) != std::string::npos);
  CHECK(text.find("n_used=") != std::string::npos);
  CHECK(s.wilcoxon.size() == 3);

  // Input order does not matter.
  std::reverse(rs.begin(), rs.end());
  CHECK(Json(summary_report(rs)).dump() == Json(s).dump());
}

TEST_CASE("summary edge cases") {
  auto empty = summary_report({});
  CHECK(empty.response_count == 0);
  CHECK(empty.wilcoxon.empty());
  CHECK(empty.preference_simplified.fraction() == 0.0);

  std::vector<SurveyResponse> plus_one;
  std::mt19937 rng(1);
  for (int p = 0; p < 4; ++p)
    for (int i = 0; i < 5; ++i)
      for (const char* pair : {"ease", "clarity", "accuracy"}) {
        int base = 1 + static_cast<int>(rng() % 4);
        std::string pid = "p" + std::to_string(p), item = "img" + std::to_string(i);
        plus_one.push_back(likert(pid, item, std::string(pair) + "_complex", base));
        plus_one.push_back(likert(pid, item, std::string(pair) + "_simplified", base + 1));
      }
  auto s = summary_report(plus_one);
  REQUIRE(s.wilcoxon.size() == 3);
  for (const auto& [name, w] : s.wilcoxon) {
    CAPTURE(name);
    CHECK(w.w_minus == 0.0);
    CHECK(w.n_used == 20);
  }
}

TEST_CASE("csv export") {
  auto s = summary_report(load_survey_jsonl(testsupport::fixture("user_study_synthetic.jsonl").string()));
  std::string csv = summary_csv(s);
  CHECK(csv.rfind("question,rating,count\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 6 * 5);
  CHECK(csv.find("ease_simplified,4,73\n") != std::string::npos);
}

TEST_CASE("jsonl loading reports line numbers") {
  testsupport::TempDir dir;
  auto path = (dir.path() / "r.jsonl").string();
  {
    std::ofstream out(path);
    out << Json(likert("p", "i", "ease_complex", 2)).dump() << "\n\n";
    out << R"({"participant_id":"p","item_id":"i","question_id":"ease_complex","rating":9})" << "\n";
  }
  CHECK_THROWS_WITH_AS(load_survey_jsonl(path), doctest::Contains(":3:"), ValidationError);
  CHECK_THROWS_AS(load_survey_jsonl((dir.path() / "missing.jsonl").string()), NotFoundError);
}
