#pragma once

// Turns a simplifier backend's free-form reply into validated per-region
// explanations.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "laylens/domain.hpp"

namespace laylens {

enum class RepairPass {
  kStripCodeFences,
  kTrimSurroundingProse,
  kRemoveTrailingCommas,
  kNormalizeCurlyQuotes,
};

std::string_view to_string(RepairPass p);

struct RepairReport {
  std::vector<RepairPass> applied;  // in application order, no duplicates
  bool recovered = false;           // a parseable object was produced

  bool operator==(const RepairReport&) const = default;
};

// Failure classes surfaced by the parser; the string form is what golden
// files and logs carry.
enum class ExplainErrorClass {
  kUnrecoverable,   // no JSON object even after every repair
  kInvalidShape,    // object lacks a "regions" array
  kNoValidEntries,  // "regions" non-empty but every entry was rejected
};

std::string_view to_string(ExplainErrorClass c);

class ExplainError : public ValidationError {
 public:
  ExplainError(ExplainErrorClass cls, std::string detail, RepairReport report = {});
  ExplainErrorClass error_class() const { return cls_; }
  const std::string& detail() const { return detail_; }
  const RepairReport& report() const { return report_; }

 private:
  ExplainErrorClass cls_;
  std::string detail_;
  RepairReport report_;
};

struct ExtractedJson {
  std::string candidate;
  RepairReport report;
};

/// Applies the repair passes in fixed order, each only while the text still
/// fails to parse as a JSON object. Throws ExplainError(kUnrecoverable).
ExtractedJson extract_json_block(std::string_view raw);

struct EntryError {
  std::size_t index = 0;
  std::string field;
  std::string reason;

  bool operator==(const EntryError&) const = default;
};

struct ParsedExplanations {
  std::vector<RegionExplanation> entries;
  std::optional<std::string> overall_summary;
  std::vector<EntryError> entry_errors;          // rejected entries
  std::vector<std::size_t> emoji_substitutions;  // input indices given the fallback emoji
};

/// Validates {"regions":[...], "overall_summary"?}. Invalid entries are
/// dropped individually. Throws ExplainError(kInvalidShape | kNoValidEntries).
ParsedExplanations parse_region_explanations(std::string_view candidate);

/// Canonical serialization accepted back by parse_region_explanations.
std::string serialize_region_explanations(const std::vector<RegionExplanation>& entries,
                                          const std::optional<std::string>& overall_summary);

/// True iff `candidate` is one extended grapheme cluster starting in one of
/// the emoji blocks.
bool validate_emoji(std::string_view candidate);

/// Number of extended grapheme clusters, or nullopt for invalid UTF-8.
/// Covers the cluster rules that matter for emoji sequences.
std::optional<std::size_t> grapheme_count(std::string_view text);

/// Lowercase, punctuation stripped, whitespace collapsed.
std::string normalize_label(std::string_view label);

/// Index of the matching finding, or nullopt.
std::optional<std::size_t> match_region_label(std::string_view label,
                                              const std::vector<RegionFinding>& findings,
                                              double jaccard_threshold = 0.5);

inline constexpr std::size_t kEditInstructionCap = 480;

std::size_t utf8_length(std::string_view s);

/// Joins the entries' edit instructions, largest matched region first, and
/// truncates at a clause boundary so the result fits `cap` characters.
/// Throws ValidationError on empty input.
std::string compose_edit_instruction(const std::vector<RegionExplanation>& explanations,
                                     const std::vector<RegionFinding>& findings,
                                     std::size_t cap = kEditInstructionCap);

/// Flesch Reading Ease. Throws ValidationError if `text` has no words.
double readability_score(std::string_view text);

struct SimplifiedResult {
  ParsedExplanations parsed;
  RepairReport report;
};

/// extract → parse → match every entry to a finding.
SimplifiedResult interpret_simplifier_output(std::string_view raw,
                                             const std::vector<RegionFinding>& findings,
                                             double jaccard_threshold = 0.5);

}  // namespace laylens
