#include "laylens/explain.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace laylens {

std::string_view to_string(RepairPass p) {
  switch (p) {
    case RepairPass::kStripCodeFences: return "strip_code_fences";
    case RepairPass::kTrimSurroundingProse: return "trim_surrounding_prose";
    case RepairPass::kRemoveTrailingCommas: return "remove_trailing_commas";
    case RepairPass::kNormalizeCurlyQuotes: return "normalize_curly_quotes";
  }
  return "unknown";
}

std::string_view to_string(ExplainErrorClass c) {
  switch (c) {
    case ExplainErrorClass::kUnrecoverable: return "unrecoverable";
    case ExplainErrorClass::kInvalidShape: return "invalid_shape";
    case ExplainErrorClass::kNoValidEntries: return "no_valid_entries";
  }
  return "unknown";
}

ExplainError::ExplainError(ExplainErrorClass cls, std::string detail, RepairReport report)
    : ValidationError(std::string(to_string(cls)) + ": " + detail),
      cls_(cls),
      detail_(std::move(detail)),
      report_(std::move(report)) {}

// ---------------------------------------------------------------------------
// JSON extraction and repair
// ---------------------------------------------------------------------------

namespace {

bool parses_as_object(std::string_view text) {
  Json j = Json::parse(text.begin(), text.end(), nullptr, false);
  return !j.is_discarded() && j.is_object();
}

std::string strip_code_fences(std::string_view text) {
  auto open = text.find("```");
  if (open == std::string_view::npos) return std::string(text);
  std::size_t i = open + 3;
  while (i < text.size() && (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_' || text[i] == '-'))
    ++i;
  while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
  if (i < text.size() && text[i] == '\r') ++i;
  if (i < text.size() && text[i] == '\n') ++i;
  auto close = text.find("```", i);
  std::string_view body = text.substr(i, close == std::string_view::npos ? std::string_view::npos : close - i);
  return std::string(body);
}

// [start, end] of the first balanced {...} outside JSON strings.
std::optional<std::pair<std::size_t, std::size_t>> first_balanced_object(std::string_view text) {
  auto start = text.find('{');
  while (start != std::string_view::npos) {
    int depth = 0;
    bool in_string = false, escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) return std::make_pair(start, i);
    }
    start = text.find('{', start + 1);
  }
  return std::nullopt;
}

std::string_view trim_ws(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string trim_surrounding_prose(std::string_view text) {
  auto span = first_balanced_object(text);
  if (!span) return std::string(text);
  return std::string(text.substr(span->first, span->second - span->first + 1));
}

std::string remove_trailing_commas(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_string = false, escaped = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      out.push_back(c);
      continue;
    }
    if (c == '"') in_string = true;
    if (c == ',') {
      auto next = text.find_first_not_of(" \t\r\n", i + 1);
      if (next != std::string_view::npos && (text[next] == '}' || text[next] == ']')) continue;
    }
    out.push_back(c);
  }
  return out;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
  return s;
}

std::string normalize_curly_quotes(std::string_view text) {
  std::string s(text);
  s = replace_all(std::move(s), "“", "\"");
  s = replace_all(std::move(s), "”", "\"");
  s = replace_all(std::move(s), "‘", "'");
  s = replace_all(std::move(s), "’", "'");
  return s;
}

}  // namespace

ExtractedJson extract_json_block(std::string_view raw) {
  ExtractedJson out;
  std::string text(trim_ws(raw));
  using Pass = std::string (*)(std::string_view);
  static const std::pair<RepairPass, Pass> kPasses[] = {
      {RepairPass::kStripCodeFences, &strip_code_fences},
      {RepairPass::kTrimSurroundingProse, &trim_surrounding_prose},
      {RepairPass::kRemoveTrailingCommas, &remove_trailing_commas},
      {RepairPass::kNormalizeCurlyQuotes, &normalize_curly_quotes},
  };
  for (const auto& [pass, fn] : kPasses) {
    if (parses_as_object(text)) break;
    std::string next(trim_ws(fn(text)));
    if (next != text) {
      out.report.applied.push_back(pass);
      text = std::move(next);
    }
  }
  if (!parses_as_object(text)) {
    const char* why = first_balanced_object(text) ? "no parseable object after all repairs"
                                                  : "no balanced object found";
    throw ExplainError(ExplainErrorClass::kUnrecoverable, why, out.report);
  }
  out.report.recovered = true;
  out.candidate = std::move(text);
  return out;
}

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

namespace {

std::optional<std::string> non_blank_string(const Json& entry, const char* key, std::string& reason) {
  auto it = entry.find(key);
  if (it == entry.end() || it->is_null()) {
    reason = "missing";
    return std::nullopt;
  }
  if (!it->is_string()) {
    reason = "not a string";
    return std::nullopt;
  }
  auto s = it->get<std::string>();
  if (trim_ws(s).empty()) {
    reason = "blank";
    return std::nullopt;
  }
  return s;
}

}  // namespace

ParsedExplanations parse_region_explanations(std::string_view candidate) {
  Json root = Json::parse(candidate.begin(), candidate.end(), nullptr, false);
  if (root.is_discarded() || !root.is_object())
    throw ExplainError(ExplainErrorClass::kInvalidShape, "candidate is not a JSON object");
  auto regions = root.find("regions");
  if (regions == root.end() || !regions->is_array())
    throw ExplainError(ExplainErrorClass::kInvalidShape, "missing \"regions\" array");

  ParsedExplanations out;
  if (auto s = root.find("overall_summary"); s != root.end() && s->is_string())
    out.overall_summary = s->get<std::string>();

  for (std::size_t i = 0; i < regions->size(); ++i) {
    const Json& entry = (*regions)[i];
    if (!entry.is_object()) {
      out.entry_errors.push_back({i, "", "entry is not an object"});
      continue;
    }
    RegionExplanation ex;
    bool ok = true;
    for (auto [key, dest] : {std::pair{"region", &ex.region},
                             std::pair{"simple_explanation", &ex.simple_explanation},
                             std::pair{"edit_instruction", &ex.edit_instruction}}) {
      std::string reason;
      auto v = non_blank_string(entry, key, reason);
      if (!v) {
        out.entry_errors.push_back({i, key, reason});
        ok = false;
        break;
      }
      *dest = std::move(*v);
    }
    if (!ok) continue;
    if (auto m = entry.find("matched_region_index"); m != entry.end() && !m->is_null()) {
      if (!m->is_number_unsigned()) {
        out.entry_errors.push_back({i, "matched_region_index", "not a non-negative integer"});
        continue;
      }
      ex.matched_region_index = m->get<std::size_t>();
    }
    auto emoji = entry.find("emoji");
    if (emoji != entry.end() && emoji->is_string() && validate_emoji(emoji->get<std::string>())) {
      ex.emoji = emoji->get<std::string>();
    } else {
      ex.emoji = std::string(kFallbackEmoji);
      out.emoji_substitutions.push_back(i);
    }
    out.entries.push_back(std::move(ex));
  }
  if (!regions->empty() && out.entries.empty())
    throw ExplainError(ExplainErrorClass::kNoValidEntries, "every region entry was rejected");
  return out;
}

std::string serialize_region_explanations(const std::vector<RegionExplanation>& entries,
                                          const std::optional<std::string>& overall_summary) {
  Json j{{"regions", entries}};
  if (overall_summary) j["overall_summary"] = *overall_summary;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Emoji / grapheme clusters
// ---------------------------------------------------------------------------

namespace {

std::optional<std::vector<char32_t>> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  for (std::size_t i = 0; i < s.size();) {
    auto b0 = static_cast<unsigned char>(s[i]);
    int len = b0 < 0x80 ? 1 : (b0 >> 5) == 0x6 ? 2 : (b0 >> 4) == 0xE ? 3 : (b0 >> 3) == 0x1E ? 4 : 0;
    if (len == 0 || i + static_cast<std::size_t>(len) > s.size()) return std::nullopt;
    char32_t cp = len == 1 ? b0 : len == 2 ? (b0 & 0x1F) : len == 3 ? (b0 & 0x0F) : (b0 & 0x07);
    for (int k = 1; k < len; ++k) {
      auto b = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
      if ((b & 0xC0) != 0x80) return std::nullopt;
      cp = (cp << 6) | (b & 0x3F);
    }
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return std::nullopt;
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

bool in(char32_t c, char32_t lo, char32_t hi) { return c >= lo && c <= hi; }

bool is_regional_indicator(char32_t c) { return in(c, 0x1F1E6, 0x1F1FF); }

bool is_zwj(char32_t c) { return c == 0x200D; }

// Grapheme_Cluster_Break=Extend, restricted to the blocks that show up in
// emoji sequences and common combining marks.
bool is_extend(char32_t c) {
  return in(c, 0x0300, 0x036F) || in(c, 0x0483, 0x0489) || in(c, 0x1AB0, 0x1AFF) ||
         in(c, 0x1DC0, 0x1DFF) || c == 0x200C || in(c, 0x20D0, 0x20FF) || in(c, 0xFE00, 0xFE0F) ||
         in(c, 0xFE20, 0xFE2F) || in(c, 0x1F3FB, 0x1F3FF) || in(c, 0xE0020, 0xE007F) ||
         in(c, 0xE0100, 0xE01EF);
}

bool is_extended_pictographic(char32_t c) {
  if (is_regional_indicator(c) || in(c, 0x1F3FB, 0x1F3FF)) return false;
  return c == 0x00A9 || c == 0x00AE || c == 0x203C || c == 0x2049 || c == 0x2122 || c == 0x2139 ||
         in(c, 0x2194, 0x2199) || in(c, 0x21A9, 0x21AA) || in(c, 0x231A, 0x231B) || c == 0x2328 ||
         c == 0x23CF || in(c, 0x23E9, 0x23F3) || in(c, 0x23F8, 0x23FA) || c == 0x24C2 ||
         in(c, 0x25AA, 0x25AB) || c == 0x25B6 || c == 0x25C0 || in(c, 0x25FB, 0x25FE) ||
         in(c, 0x2600, 0x27BF) || in(c, 0x2934, 0x2935) || in(c, 0x2B05, 0x2B07) ||
         in(c, 0x2B1B, 0x2B1C) || c == 0x2B50 || c == 0x2B55 || c == 0x3030 || c == 0x303D ||
         c == 0x3297 || c == 0x3299 || in(c, 0x1F000, 0x1FAFF) || in(c, 0x1FC00, 0x1FFFD);
}

// No cluster boundary between cps[i-1] and cps[i].
bool joins_previous(const std::vector<char32_t>& cps, std::size_t i) {
  char32_t prev = cps[i - 1], cur = cps[i];
  if (prev == '\r' && cur == '\n') return true;
  if (prev < 0x20 || prev == 0x7F || cur < 0x20 || cur == 0x7F) return false;
  if (is_extend(cur) || is_zwj(cur)) return true;
  if (is_zwj(prev) && is_extended_pictographic(cur)) {
    std::size_t k = i - 1;
    while (k > 0 && is_extend(cps[k - 1])) --k;
    if (k > 0 && is_extended_pictographic(cps[k - 1])) return true;
  }
  if (is_regional_indicator(prev) && is_regional_indicator(cur)) {
    std::size_t run = 0;
    for (std::size_t k = i; k > 0 && is_regional_indicator(cps[k - 1]); --k) ++run;
    return run % 2 == 1;
  }
  return false;
}

}  // namespace

std::optional<std::size_t> grapheme_count(std::string_view text) {
  auto cps = decode_utf8(text);
  if (!cps) return std::nullopt;
  if (cps->empty()) return 0;
  std::size_t n = 1;
  for (std::size_t i = 1; i < cps->size(); ++i)
    if (!joins_previous(*cps, i)) ++n;
  return n;
}

bool validate_emoji(std::string_view candidate) {
  auto cps = decode_utf8(candidate);
  if (!cps || cps->empty()) return false;
  char32_t first = cps->front();
  if (!(in(first, 0x1F300, 0x1FAFF) || in(first, 0x2600, 0x27BF) || in(first, 0x1F000, 0x1F2FF)))
    return false;
  return grapheme_count(candidate) == 1u;
}

// ---------------------------------------------------------------------------
// Region matching
// ---------------------------------------------------------------------------

std::string normalize_label(std::string_view label) {
  std::string out;
  bool pending_space = false;
  for (char ch : label) {
    auto c = static_cast<unsigned char>(ch);
    if (c == '\'') continue;  // "bear's" → "bears"
    if (std::isspace(c) || (c < 0x80 && std::ispunct(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
  }
  return out;
}

namespace {

std::set<std::string> token_set(const std::string& normalized) {
  std::set<std::string> tokens;
  std::istringstream in(normalized);
  for (std::string t; in >> t;) tokens.insert(t);
  return tokens;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& t : a) inter += b.count(t);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

}  // namespace

std::optional<std::size_t> match_region_label(std::string_view label,
                                              const std::vector<RegionFinding>& findings,
                                              double jaccard_threshold) {
  const std::string norm = normalize_label(label);
  for (std::size_t i = 0; i < findings.size(); ++i)
    if (!norm.empty() && normalize_label(findings[i].label) == norm) return i;

  const auto tokens = token_set(norm);
  std::optional<std::size_t> best;
  double best_score = -1.0;
  for (std::size_t i = 0; i < findings.size(); ++i) {
    double s = jaccard(tokens, token_set(normalize_label(findings[i].label)));
    if (s >= jaccard_threshold && s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Edit instruction
// ---------------------------------------------------------------------------

std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (char c : s)
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  return n;
}

namespace {

// Byte offset just past the first `chars` code points.
std::size_t utf8_prefix_bytes(std::string_view s, std::size_t chars) {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) {
      if (seen == chars) return i;
      ++seen;
    }
  }
  return s.size();
}

std::string_view clean_clause_end(std::string_view s) {
  while (!s.empty() && (std::isspace(static_cast<unsigned char>(s.back())) || s.back() == ';' ||
                        s.back() == ',' || s.back() == ':'))
    s.remove_suffix(1);
  return s;
}

}  // namespace

std::string compose_edit_instruction(const std::vector<RegionExplanation>& explanations,
                                     const std::vector<RegionFinding>& findings, std::size_t cap) {
  if (explanations.empty()) throw ValidationError("compose_edit_instruction: no explanations");

  std::vector<std::pair<std::int64_t, const RegionExplanation*>> keyed;
  for (const auto& e : explanations) {
    std::int64_t area = -1;
    if (e.matched_region_index && *e.matched_region_index < findings.size())
      area = static_cast<std::int64_t>(findings[*e.matched_region_index].mask.foreground_count());
    keyed.emplace_back(area, &e);
  }
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });

  std::string joined;
  std::vector<std::size_t> boundaries;  // byte offsets where a clause ends
  for (const auto& [area, e] : keyed) {
    if (!joined.empty()) joined += "; ";
    std::string_view text = trim_ws(e->edit_instruction);
    for (std::size_t i = 0; i + 1 < text.size(); ++i)
      if (std::string_view(".,;!?").find(text[i]) != std::string_view::npos && text[i + 1] == ' ')
        boundaries.push_back(joined.size() + i + 1);
    joined += text;
    boundaries.push_back(joined.size());
  }
  if (utf8_length(joined) <= cap) return joined;

  for (auto it = boundaries.rbegin(); it != boundaries.rend(); ++it) {
    std::string_view prefix = clean_clause_end(std::string_view(joined).substr(0, *it));
    if (!prefix.empty() && utf8_length(prefix) <= cap) return std::string(prefix);
  }
  // No clause fits: fall back to the last word boundary, then a hard cut.
  std::string_view hard = std::string_view(joined).substr(0, utf8_prefix_bytes(joined, cap));
  auto space = hard.find_last_of(' ');
  if (space != std::string_view::npos && space > 0) hard = hard.substr(0, space);
  return std::string(clean_clause_end(hard));
}

// ---------------------------------------------------------------------------
// Readability
// ---------------------------------------------------------------------------

double readability_score(std::string_view text) {
  std::size_t words = 0, syllables = 0, sentences = 0;
  bool in_terminator = false;
  for (char c : text) {
    bool term = c == '.' || c == '!' || c == '?';
    if (term && !in_terminator) ++sentences;
    in_terminator = term;
  }
  std::istringstream in{std::string(text)};
  for (std::string tok; in >> tok;) {
    bool has_alnum = std::any_of(tok.begin(), tok.end(), [](char c) {
      auto u = static_cast<unsigned char>(c);
      return u < 0x80 && std::isalnum(u);
    });
    if (!has_alnum) continue;
    ++words;
    std::size_t groups = 0;
    bool in_vowel = false;
    for (char c : tok) {
      bool v = std::string_view("aeiouyAEIOUY").find(c) != std::string_view::npos;
      if (v && !in_vowel) ++groups;
      in_vowel = v;
    }
    syllables += std::max<std::size_t>(groups, 1);
  }
  if (words == 0) throw ValidationError("readability: text has no words");
  sentences = std::max<std::size_t>(sentences, 1);
  double w = static_cast<double>(words);
  return 206.835 - 1.015 * (w / static_cast<double>(sentences)) -
         84.6 * (static_cast<double>(syllables) / w);
}

// ---------------------------------------------------------------------------

SimplifiedResult interpret_simplifier_output(std::string_view raw,
                                             const std::vector<RegionFinding>& findings,
                                             double jaccard_threshold) {
  auto extracted = extract_json_block(raw);
  SimplifiedResult out;
  try {
    out.parsed = parse_region_explanations(extracted.candidate);
  } catch (const ExplainError& e) {
    throw ExplainError(e.error_class(), e.detail(), extracted.report);
  }
  out.report = extracted.report;
  for (auto& e : out.parsed.entries) e.matched_region_index = match_region_label(e.region, findings, jaccard_threshold);
  return out;
}

}  // namespace laylens
