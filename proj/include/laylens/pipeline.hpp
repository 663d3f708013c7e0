#pragma once

// Drives each job through detect → simplify → reconstruct.
//
// State graph (anything non-terminal may also go to FAILED or CANCELLED):
//
//   CREATED → DETECTING ─┬→ COMPLETED                 (verdict "real")
//                        └→ SIMPLIFYING ─┬→ COMPLETED_PARTIAL
//                                        └→ RECONSTRUCTING ─┬→ COMPLETED
//                                                           └→ COMPLETED_PARTIAL

#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

#include "laylens/backend.hpp"
#include "laylens/explain.hpp"
#include "laylens/mask.hpp"
#include "laylens/mock.hpp"
#include "laylens/store.hpp"

namespace laylens {

bool transition_allowed(JobState from, JobState to);

struct PipelineConfig {
  // Backend base URLs; ignored when `mock` is set.
  std::string detector_url;
  std::string simplifier_url;
  std::string editor_url;
  bool mock = false;
  MockConfig mock_detector;
  MockConfig mock_simplifier;
  MockConfig mock_editor;

  RetryPolicy retry;
  double jaccard_threshold = 0.5;
  std::size_t instruction_cap = kEditInstructionCapDefault;
  OverlayStyle overlay;
  std::size_t max_inflight = 4;  // scheduling only, not part of the digest

  static constexpr std::size_t kEditInstructionCapDefault = 480;

  /// Canonical form hashed into config_digest.
  Json canonical() const;
  std::string digest() const;
};

struct Backends {
  std::shared_ptr<Transport> detector;
  std::shared_ptr<Transport> simplifier;
  std::shared_ptr<Transport> editor;
  std::shared_ptr<MockBackends> mocks;  // set when built in mock mode

  /// HTTP transports, or in-process mocks when cfg.mock. Throws
  /// ValidationError if a required URL is missing.
  static Backends from_config(const PipelineConfig& cfg);
};

struct SubmitResult {
  std::string job_id;
  bool cache_hit = false;
};

class Pipeline {
 public:
  /// `start_workers` false leaves scheduling to explicit run() calls.
  Pipeline(std::shared_ptr<Store> store, PipelineConfig cfg, Backends backends, bool start_workers = true);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  /// Stores the image and creates (or reuses) a job. Throws DecodeError,
  /// ValidationError.
  SubmitResult submit(std::span<const std::uint8_t> image);

  /// Runs a CREATED job to a terminal state. Never throws for stage failures.
  AnalysisJob run(const std::string& job_id);

  /// Non-terminal → CANCELLED and aborts in-flight calls; terminal jobs are
  /// returned unchanged. Throws NotFoundError.
  AnalysisJob cancel(const std::string& job_id);

  /// Throws NotFoundError.
  AnalysisJob get(const std::string& job_id) const;

  /// Blocks until the job is terminal or `timeout` passes; returns the latest
  /// snapshot either way.
  AnalysisJob wait(const std::string& job_id, Millis timeout) const;

  const PipelineConfig& config() const { return cfg_; }
  const std::string& config_digest() const { return digest_; }
  const Backends& backends() const { return backends_; }
  Store& store() { return *store_; }
  std::size_t executions() const;

 private:
  struct Entry {
    AnalysisJob job;
    CancelToken cancel;
  };

  bool advance(const std::string& job_id, JobState to, const std::function<void(AnalysisJob&)>& mutate,
               const std::string& detail);
  void fail_or_degrade(const std::string& job_id, JobState to, const std::string& stage, const std::string& error,
                       const std::function<void(AnalysisJob&)>& mutate = {});
  void worker_loop();
  void recover_from_store();

  std::shared_ptr<Store> store_;
  PipelineConfig cfg_;
  std::string digest_;
  Backends backends_;

  mutable std::mutex mu_;
  mutable std::condition_variable changed_;
  std::map<std::string, Entry> jobs_;
  std::map<std::string, std::string> cache_;  // sha256 ‖ config_digest → job_id
  std::size_t executions_ = 0;

  std::deque<std::string> queue_;
  std::condition_variable queue_cv_;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace laylens
