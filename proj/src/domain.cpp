#include "laylens/domain.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>

#include "laylens/digest.hpp"
#include "laylens/image.hpp"

namespace laylens {

// ---------------------------------------------------------------------------
// Timestamp
// ---------------------------------------------------------------------------

Timestamp Timestamp::now() {
  using namespace std::chrono;
  return {duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count()};
}

std::string Timestamp::to_string() const {
  std::int64_t secs = epoch_ms / 1000;
  std::int64_t ms = epoch_ms % 1000;
  if (ms < 0) {
    ms += 1000;
    --secs;
  }
  std::time_t t = static_cast<std::time_t>(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

Timestamp Timestamp::parse(std::string_view text) {
  std::tm tm{};
  int ms = 0;
  int consumed = 0;
  std::string s(text);
  int n = std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &tm.tm_year, &tm.tm_mon, &tm.tm_mday,
                      &tm.tm_hour, &tm.tm_min, &tm.tm_sec, &consumed);
  if (n != 6) throw ValidationError("timestamp: not RFC 3339: " + s);
  std::string_view rest = text.substr(static_cast<std::size_t>(consumed));
  if (!rest.empty() && rest.front() == '.') {
    rest.remove_prefix(1);
    int digits = 0;
    while (!rest.empty() && rest.front() >= '0' && rest.front() <= '9') {
      if (digits < 3) ms = ms * 10 + (rest.front() - '0');
      ++digits;
      rest.remove_prefix(1);
    }
    if (digits == 0) throw ValidationError("timestamp: empty fraction: " + s);
    for (int d = digits; d < 3; ++d) ms *= 10;
  }
  if (rest != "Z") throw ValidationError("timestamp: must be UTC 'Z': " + s);
  tm.tm_year -= 1900;
  tm.tm_mon -= 1;
  return {static_cast<std::int64_t>(timegm(&tm)) * 1000 + ms};
}

// ---------------------------------------------------------------------------
// ImageRef
// ---------------------------------------------------------------------------

void validate_image_ref(const ImageRef& ref, std::optional<std::span<const std::uint8_t>> bytes) {
  if (!is_lower_hex(ref.sha256, 64)) throw ValidationError("image ref: sha256 must be 64 lowercase hex");
  if (ref.media_type != kMediaPng && ref.media_type != kMediaJpeg)
    throw ValidationError("image ref: unsupported media type " + ref.media_type);
  if (ref.width < 1 || ref.height < 1) throw ValidationError("image ref: dimensions must be >= 1");
  if (ref.width > kMaxImageDimension || ref.height > kMaxImageDimension)
    throw ValidationError("dimension limit exceeded (max 4096)");
  if (bytes && sha256_hex(*bytes) != ref.sha256) throw ValidationError("digest mismatch");
}

ImageRef image_ref_for(std::span<const std::uint8_t> bytes) {
  Raster r = decode_image(bytes);
  ImageRef ref{sha256_hex(bytes), *sniff_media_type(bytes), r.width, r.height};
  validate_image_ref(ref);
  return ref;
}

// ---------------------------------------------------------------------------
// MaskRLE / RegionFinding
// ---------------------------------------------------------------------------

MaskRLE::MaskRLE(int width, int height, std::vector<std::uint32_t> runs)
    : width_(width), height_(height), runs_(std::move(runs)) {
  if (width < 1 || height < 1) throw ValidationError("mask: dimensions must be >= 1");
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < runs_.size(); ++i) {
    if (runs_[i] == 0 && i != 0) throw ValidationError("mask: interior zero-length run");
    sum += runs_[i];
  }
  if (sum != static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height))
    throw ValidationError("mask: run-sum mismatch");
}

std::uint64_t MaskRLE::foreground_count() const {
  std::uint64_t n = 0;
  for (std::size_t i = 1; i < runs_.size(); i += 2) n += runs_[i];
  return n;
}

namespace {

std::optional<BBox> bbox_from_runs(const MaskRLE& m) {
  const std::uint64_t w = static_cast<std::uint64_t>(m.width());
  std::optional<BBox> box;
  std::uint64_t pos = 0;
  for (std::size_t i = 0; i < m.runs().size(); ++i) {
    std::uint64_t len = m.runs()[i];
    if (i % 2 == 1 && len > 0) {
      std::uint64_t end = pos + len - 1;
      int y0 = static_cast<int>(pos / w);
      int y1 = static_cast<int>(end / w);
      int x0 = y1 > y0 ? 0 : static_cast<int>(pos % w);
      int x1 = y1 > y0 ? static_cast<int>(w - 1) : static_cast<int>(end % w);
      if (!box) {
        box = BBox{x0, y0, x1, y1};
      } else {
        box->x_min = std::min(box->x_min, x0);
        box->y_min = std::min(box->y_min, y0);
        box->x_max = std::max(box->x_max, x1);
        box->y_max = std::max(box->y_max, y1);
      }
    }
    pos += len;
  }
  return box;
}

}  // namespace

RegionFinding RegionFinding::make(std::string label, MaskRLE mask) {
  auto box = bbox_from_runs(mask);
  if (!box) throw ValidationError("finding: mask has no foreground pixels");
  return RegionFinding{std::move(label), std::move(mask), *box};
}

void validate_finding(const RegionFinding& f) {
  auto box = bbox_from_runs(f.mask);
  if (!box) throw ValidationError("finding: mask has no foreground pixels");
  if (*box != f.bbox) throw ValidationError("finding: bbox is not the tight box of the mask");
}

// ---------------------------------------------------------------------------
// Enumerations
// ---------------------------------------------------------------------------

std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::kCreated: return "CREATED";
    case JobState::kDetecting: return "DETECTING";
    case JobState::kSimplifying: return "SIMPLIFYING";
    case JobState::kReconstructing: return "RECONSTRUCTING";
    case JobState::kCompleted: return "COMPLETED";
    case JobState::kCompletedPartial: return "COMPLETED_PARTIAL";
    case JobState::kFailed: return "FAILED";
    case JobState::kCancelled: return "CANCELLED";
  }
  return "UNKNOWN";
}

JobState parse_job_state(std::string_view s) {
  for (auto st : {JobState::kCreated, JobState::kDetecting, JobState::kSimplifying,
                  JobState::kReconstructing, JobState::kCompleted, JobState::kCompletedPartial,
                  JobState::kFailed, JobState::kCancelled})
    if (to_string(st) == s) return st;
  throw ValidationError("unknown job state: " + std::string(s));
}

bool is_terminal(JobState s) {
  return s == JobState::kCompleted || s == JobState::kCompletedPartial || s == JobState::kFailed ||
         s == JobState::kCancelled;
}

std::string_view to_string(Verdict v) { return v == Verdict::kFake ? "fake" : "real"; }

Verdict parse_verdict(std::string_view s) {
  if (s == "fake") return Verdict::kFake;
  if (s == "real") return Verdict::kReal;
  throw ValidationError("verdict must be \"fake\" or \"real\"");
}

// ---------------------------------------------------------------------------
// AnalysisJob
// ---------------------------------------------------------------------------

AnalysisJob new_job(const ImageRef& input, std::string config_digest,
                    std::span<const std::uint8_t> bytes) {
  validate_image_ref(input, bytes);
  if (!is_lower_hex(config_digest, 64)) throw ValidationError("config digest must be 64 lowercase hex");
  AnalysisJob job;
  job.job_id = random_hex(16);
  job.input = input;
  job.state = JobState::kCreated;
  job.created_at = Timestamp::now();
  job.updated_at = job.created_at;
  job.config_digest = std::move(config_digest);
  return job;
}

void validate_job(const AnalysisJob& job) {
  if (!is_lower_hex(job.job_id, 32)) throw ValidationError("job_id must be 32 lowercase hex");
  validate_image_ref(job.input);
  if (!is_lower_hex(job.config_digest, 64)) throw ValidationError("config digest must be 64 lowercase hex");
  if (job.confidence && (*job.confidence < 0.0 || *job.confidence > 1.0))
    throw ValidationError("confidence outside [0,1]");
  for (const auto& f : job.findings) validate_finding(f);
  if (job.reconstruction &&
      (job.state != JobState::kCompleted || job.verdict != Verdict::kFake))
    throw ValidationError("reconstruction requires COMPLETED with verdict fake");
  if (job.explanations && job.verdict == Verdict::kFake && job.explanations->technical.empty())
    throw ValidationError("technical explanation required for fake verdict");
  if (job.updated_at < job.created_at) throw ValidationError("updated_at precedes created_at");
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

void to_json(Json& j, const Timestamp& v) { j = v.to_string(); }
void from_json(const Json& j, Timestamp& v) { v = Timestamp::parse(j.get<std::string>()); }

void to_json(Json& j, const ImageRef& v) {
  j = Json{{"sha256", v.sha256}, {"media_type", v.media_type}, {"width", v.width}, {"height", v.height}};
}
void from_json(const Json& j, ImageRef& v) {
  j.at("sha256").get_to(v.sha256);
  j.at("media_type").get_to(v.media_type);
  j.at("width").get_to(v.width);
  j.at("height").get_to(v.height);
}

void to_json(Json& j, const MaskRLE& v) {
  j = Json{{"width", v.width()}, {"height", v.height()}, {"runs", v.runs()}};
}
void from_json(const Json& j, MaskRLE& v) {
  v = MaskRLE(j.at("width").get<int>(), j.at("height").get<int>(),
              j.at("runs").get<std::vector<std::uint32_t>>());
}

void to_json(Json& j, const BBox& v) { j = Json::array({v.x_min, v.y_min, v.x_max, v.y_max}); }
void from_json(const Json& j, BBox& v) {
  if (!j.is_array() || j.size() != 4) throw ValidationError("bbox must be [x_min,y_min,x_max,y_max]");
  v = BBox{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

void to_json(Json& j, const RegionFinding& v) {
  j = Json{{"label", v.label}, {"mask", v.mask}, {"bbox", v.bbox}};
}
void from_json(const Json& j, RegionFinding& v) {
  j.at("label").get_to(v.label);
  j.at("mask").get_to(v.mask);
  j.at("bbox").get_to(v.bbox);
}

void to_json(Json& j, const RegionExplanation& v) {
  j = Json{{"region", v.region},
           {"simple_explanation", v.simple_explanation},
           {"emoji", v.emoji},
           {"edit_instruction", v.edit_instruction}};
  if (v.matched_region_index) j["matched_region_index"] = *v.matched_region_index;
}
void from_json(const Json& j, RegionExplanation& v) {
  j.at("region").get_to(v.region);
  j.at("simple_explanation").get_to(v.simple_explanation);
  j.at("emoji").get_to(v.emoji);
  j.at("edit_instruction").get_to(v.edit_instruction);
  v.matched_region_index.reset();
  if (auto it = j.find("matched_region_index"); it != j.end() && !it->is_null())
    v.matched_region_index = it->get<std::size_t>();
}

void to_json(Json& j, const ExplanationTiers& v) {
  j = Json{{"technical", v.technical}, {"simplified", v.simplified}};
  if (v.overall_summary) j["overall_summary"] = *v.overall_summary;
}
void from_json(const Json& j, ExplanationTiers& v) {
  j.at("technical").get_to(v.technical);
  j.at("simplified").get_to(v.simplified);
  v.overall_summary.reset();
  if (auto it = j.find("overall_summary"); it != j.end() && !it->is_null())
    v.overall_summary = it->get<std::string>();
}

void to_json(Json& j, JobState v) { j = std::string(to_string(v)); }
void from_json(const Json& j, JobState& v) { v = parse_job_state(j.get<std::string>()); }
void to_json(Json& j, Verdict v) { j = std::string(to_string(v)); }
void from_json(const Json& j, Verdict& v) { v = parse_verdict(j.get<std::string>()); }

namespace {

template <class T>
void put_opt(Json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <class T>
void get_opt(const Json& j, const char* key, std::optional<T>& v) {
  v.reset();
  if (auto it = j.find(key); it != j.end() && !it->is_null()) v = it->get<T>();
}

}  // namespace

void to_json(Json& j, const AnalysisJob& v) {
  j = Json{{"job_id", v.job_id},
           {"input", v.input},
           {"state", v.state},
           {"findings", v.findings},
           {"stage_errors", v.stage_errors},
           {"created_at", v.created_at},
           {"updated_at", v.updated_at},
           {"config_digest", v.config_digest}};
  put_opt(j, "verdict", v.verdict);
  put_opt(j, "confidence", v.confidence);
  put_opt(j, "explanations", v.explanations);
  put_opt(j, "reconstruction", v.reconstruction);
  put_opt(j, "overlay", v.overlay);
}

void from_json(const Json& j, AnalysisJob& v) {
  j.at("job_id").get_to(v.job_id);
  j.at("input").get_to(v.input);
  j.at("state").get_to(v.state);
  v.findings.clear();
  if (auto it = j.find("findings"); it != j.end()) it->get_to(v.findings);
  v.stage_errors.clear();
  if (auto it = j.find("stage_errors"); it != j.end()) it->get_to(v.stage_errors);
  j.at("created_at").get_to(v.created_at);
  j.at("updated_at").get_to(v.updated_at);
  j.at("config_digest").get_to(v.config_digest);
  get_opt(j, "verdict", v.verdict);
  get_opt(j, "confidence", v.confidence);
  get_opt(j, "explanations", v.explanations);
  get_opt(j, "reconstruction", v.reconstruction);
  get_opt(j, "overlay", v.overlay);
}

}  // namespace laylens
