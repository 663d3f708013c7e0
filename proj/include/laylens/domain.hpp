#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "laylens/error.hpp"

namespace laylens {

using Json = nlohmann::json;

inline constexpr int kMaxImageDimension = 4096;
inline constexpr std::string_view kFallbackEmoji = "\xF0\x9F\x94\x8D";  // 🔍

// ---------------------------------------------------------------------------
// Timestamps
// ---------------------------------------------------------------------------

// UTC instant with millisecond resolution. Ordered numerically; rendered as
// RFC 3339 ("2026-01-02T03:04:05.678Z") only at the JSON boundary.
struct Timestamp {
  std::int64_t epoch_ms = 0;

  static Timestamp now();
  static Timestamp parse(std::string_view rfc3339);
  std::string to_string() const;

  auto operator<=>(const Timestamp&) const = default;
};

// ---------------------------------------------------------------------------
// Value types
// ---------------------------------------------------------------------------

struct ImageRef {
  std::string sha256;
  std::string media_type;
  int width = 0;
  int height = 0;

  bool operator==(const ImageRef&) const = default;
};

/// Decodes `bytes` and builds a validated reference to them.
/// Throws DecodeError or ValidationError ("dimension limit").
ImageRef image_ref_for(std::span<const std::uint8_t> bytes);

/// Checks field shapes and the dimension limit; if `bytes` is given the
/// digest is recomputed and compared too.
void validate_image_ref(const ImageRef& ref,
                        std::optional<std::span<const std::uint8_t>> bytes = std::nullopt);

// Row-major run lengths, background first. A leading zero run means the mask
// starts with foreground; every other run is positive.
class MaskRLE {
 public:
  MaskRLE() = default;
  /// Throws ValidationError on run-sum mismatch or an interior zero run.
  MaskRLE(int width, int height, std::vector<std::uint32_t> runs);

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<std::uint32_t>& runs() const { return runs_; }
  std::uint64_t foreground_count() const;

  bool operator==(const MaskRLE&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint32_t> runs_;
};

// Inclusive pixel coordinates.
struct BBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  bool operator==(const BBox&) const = default;
};

struct RegionFinding {
  std::string label;
  MaskRLE mask;
  BBox bbox;

  /// Computes the bbox from the mask. Throws ValidationError on an empty mask.
  static RegionFinding make(std::string label, MaskRLE mask);

  bool operator==(const RegionFinding&) const = default;
};

/// Throws ValidationError unless the mask is nonempty and bbox is tight.
void validate_finding(const RegionFinding& f);

struct RegionExplanation {
  std::string region;
  std::string simple_explanation;
  std::string emoji;
  std::string edit_instruction;
  std::optional<std::size_t> matched_region_index;

  bool operator==(const RegionExplanation&) const = default;
};

struct ExplanationTiers {
  std::string technical;
  std::vector<RegionExplanation> simplified;
  std::optional<std::string> overall_summary;

  bool operator==(const ExplanationTiers&) const = default;
};

enum class JobState {
  kCreated,
  kDetecting,
  kSimplifying,
  kReconstructing,
  kCompleted,
  kCompletedPartial,
  kFailed,
  kCancelled,
};

std::string_view to_string(JobState s);
JobState parse_job_state(std::string_view s);
bool is_terminal(JobState s);

enum class Verdict { kFake, kReal };
std::string_view to_string(Verdict v);
Verdict parse_verdict(std::string_view s);

struct AnalysisJob {
  std::string job_id;
  ImageRef input;
  JobState state = JobState::kCreated;
  std::optional<Verdict> verdict;
  std::optional<double> confidence;
  std::vector<RegionFinding> findings;
  std::optional<ExplanationTiers> explanations;
  std::optional<ImageRef> reconstruction;
  std::optional<ImageRef> overlay;
  std::map<std::string, std::string> stage_errors;
  Timestamp created_at;
  Timestamp updated_at;
  std::string config_digest;

  bool operator==(const AnalysisJob&) const = default;
};

/// Fresh job in CREATED. `bytes` are the image the ref describes; the digest
/// and dimension limit are re-checked. Throws ValidationError.
AnalysisJob new_job(const ImageRef& input, std::string config_digest,
                    std::span<const std::uint8_t> bytes);

/// Cross-field invariants of a job (reconstruction ⇒ COMPLETED ∧ fake, ...).
void validate_job(const AnalysisJob& job);

// ---------------------------------------------------------------------------
// Canonical JSON (snake_case, absent optionals omitted, unknown keys ignored)
// ---------------------------------------------------------------------------

void to_json(Json& j, const Timestamp& v);
void from_json(const Json& j, Timestamp& v);
void to_json(Json& j, const ImageRef& v);
void from_json(const Json& j, ImageRef& v);
void to_json(Json& j, const MaskRLE& v);
void from_json(const Json& j, MaskRLE& v);
void to_json(Json& j, const BBox& v);
void from_json(const Json& j, BBox& v);
void to_json(Json& j, const RegionFinding& v);
void from_json(const Json& j, RegionFinding& v);
void to_json(Json& j, const RegionExplanation& v);
void from_json(const Json& j, RegionExplanation& v);
void to_json(Json& j, const ExplanationTiers& v);
void from_json(const Json& j, ExplanationTiers& v);
void to_json(Json& j, JobState v);
void from_json(const Json& j, JobState& v);
void to_json(Json& j, Verdict v);
void from_json(const Json& j, Verdict& v);
void to_json(Json& j, const AnalysisJob& v);
void from_json(const Json& j, AnalysisJob& v);

/// j.get<T>() with library exceptions mapped to ValidationError.
template <class T>
T json_as(const Json& j) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("json: ") + e.what());
  }
}

}  // namespace laylens
