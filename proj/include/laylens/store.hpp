#pragma once

// Filesystem persistence:
//
//   data-dir/blobs/xx/<sha256>      content-addressed bytes
//   data-dir/jobs/<id>.json         latest job snapshot (atomic rewrite)
//   data-dir/jobs/<id>.log          JSONL state-change log
//   data-dir/survey/responses.jsonl append-only survey records

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "laylens/digest.hpp"
#include "laylens/domain.hpp"

namespace laylens {

inline constexpr std::size_t kMaxBlobBytes = 64u << 20;

struct StateChange {
  Timestamp ts;
  std::optional<JobState> from;  // absent for the creation record
  JobState to = JobState::kCreated;
  std::string detail;

  bool operator==(const StateChange&) const = default;
};

void to_json(Json& j, const StateChange& v);
void from_json(const Json& j, StateChange& v);

class Store {
 public:
  /// Creates the directory layout if needed.
  explicit Store(std::filesystem::path root, bool verify_reads = true);

  const std::filesystem::path& root() const { return root_; }

  /// Throws ValidationError above 64 MiB, IoError on write failure.
  std::string put_blob(std::span<const std::uint8_t> bytes);
  /// Throws NotFoundError, IntegrityError (digest mismatch), IoError.
  Bytes get_blob(const std::string& key) const;
  bool has_blob(const std::string& key) const;
  std::filesystem::path blob_path(const std::string& key) const;
  /// Keys whose content no longer matches.
  std::vector<std::string> scrub() const;

  /// Throws TerminalImmutableError if a stored terminal snapshot would change.
  void put_job(const AnalysisJob& job);
  /// Throws NotFoundError.
  AnalysisJob get_job(const std::string& job_id) const;
  /// Newest first by created_at; `page` is 1-based.
  std::vector<AnalysisJob> list_jobs(std::size_t page, std::size_t page_size) const;
  std::vector<AnalysisJob> all_jobs() const;

  void append_state_change(const std::string& job_id, const StateChange& change);
  std::vector<StateChange> state_log(const std::string& job_id) const;

  /// Appends one JSON record; returns its 1-based line number.
  std::size_t append_survey_response(const Json& record);
  std::vector<Json> survey_responses() const;
  std::filesystem::path survey_path() const;

 private:
  std::filesystem::path job_path(const std::string& job_id) const;
  void write_atomic(const std::filesystem::path& dest, std::span<const std::uint8_t> bytes) const;

  std::filesystem::path root_;
  bool verify_reads_;
  mutable std::mutex jobs_mu_;
  std::mutex log_mu_;
  std::mutex survey_mu_;
  std::optional<std::size_t> survey_lines_;
};

}  // namespace laylens
