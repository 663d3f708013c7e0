#include "laylens/pipeline.hpp"

#include <sstream>

#include "laylens/image.hpp"

namespace laylens {

bool transition_allowed(JobState from, JobState to) {
  using S = JobState;
  if (is_terminal(from)) return false;
  if (to == S::kFailed || to == S::kCancelled) return true;
  switch (from) {
    case S::kCreated:
      return to == S::kDetecting;
    case S::kDetecting:
      return to == S::kCompleted || to == S::kSimplifying;
    case S::kSimplifying:
      return to == S::kReconstructing || to == S::kCompletedPartial;
    case S::kReconstructing:
      return to == S::kCompleted || to == S::kCompletedPartial;
    default:
      return false;
  }
}

Json PipelineConfig::canonical() const {
  Json j;
  if (mock) {
    j["backends"] = {{"mode", "mock"},
                     {"detector", mock_detector},
                     {"simplifier", mock_simplifier},
                     {"editor", mock_editor}};
  } else {
    j["backends"] = {{"mode", "http"},
                     {"detector", detector_url},
                     {"simplifier", simplifier_url},
                     {"editor", editor_url}};
  }
  j["retry"] = retry;
  j["parser"] = {{"jaccard_threshold", jaccard_threshold}, {"instruction_cap", instruction_cap}};
  j["overlay"] = {{"highlight", overlay.highlight},
                  {"fill_opacity_pct", overlay.fill_opacity_pct},
                  {"outline_opacity_pct", overlay.outline_opacity_pct},
                  {"outline_px", overlay.outline_px}};
  return j;
}

std::string PipelineConfig::digest() const { return sha256_hex(canonical().dump()); }

Backends Backends::from_config(const PipelineConfig& cfg) {
  Backends b;
  if (cfg.mock) {
    b.mocks = std::make_shared<MockBackends>(cfg.mock_detector, cfg.mock_simplifier, cfg.mock_editor);
    b.detector = b.mocks->transport(BackendRole::kDetector);
    b.simplifier = b.mocks->transport(BackendRole::kSimplifier);
    b.editor = b.mocks->transport(BackendRole::kEditor);
    return b;
  }
  if (cfg.detector_url.empty() || cfg.simplifier_url.empty() || cfg.editor_url.empty())
    throw ValidationError("detector, simplifier and editor URLs are required without mock mode");
  b.detector = make_http_transport(cfg.detector_url);
  b.simplifier = make_http_transport(cfg.simplifier_url);
  b.editor = make_http_transport(cfg.editor_url);
  return b;
}

namespace {

std::string cache_key(const std::string& sha, const std::string& digest) { return sha + digest; }

std::string describe(const std::exception& e) {
  if (auto* be = dynamic_cast<const BackendError*>(&e)) {
    std::ostringstream os;
    os << to_string(be->kind()) << " after " << be->attempt_count() << " attempt"
       << (be->attempt_count() == 1 ? "" : "s") << ": " << be->detail();
    return os.str();
  }
  if (auto* pe = dynamic_cast<const ExplainError*>(&e))
    return std::string(to_string(pe->error_class())) + ": " + pe->detail();
  return e.what();
}

std::string join_repairs(const RepairReport& r) {
  std::string s;
  for (auto p : r.applied) {
    if (!s.empty()) s += ",";
    s += to_string(p);
  }
  return s.empty() ? "none" : s;
}

}  // namespace

Pipeline::Pipeline(std::shared_ptr<Store> store, PipelineConfig cfg, Backends backends, bool start_workers)
    : store_(std::move(store)), cfg_(std::move(cfg)), digest_(cfg_.digest()), backends_(std::move(backends)) {
  cfg_.mock_detector.validate();
  cfg_.mock_simplifier.validate();
  cfg_.mock_editor.validate();
  if (cfg_.max_inflight == 0) throw ValidationError("max_inflight must be >= 1");
  recover_from_store();
  if (start_workers)
    for (std::size_t i = 0; i < cfg_.max_inflight; ++i) workers_.emplace_back([this] { worker_loop(); });
}

Pipeline::~Pipeline() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
    for (auto& [id, e] : jobs_)
      if (!is_terminal(e.job.state)) e.cancel.cancel();
  }
  queue_cv_.notify_all();
  for (auto& t : workers_) t.join();
}

void Pipeline::recover_from_store() {
  // Jobs interrupted by a previous shutdown cannot resume mid-stage.
  for (auto& job : store_->all_jobs()) {
    if (!is_terminal(job.state)) {
      JobState from = job.state;
      job.state = JobState::kFailed;
      job.stage_errors["pipeline"] = "interrupted by restart";
      job.updated_at = std::max(Timestamp::now(), job.created_at);
      store_->put_job(job);
      store_->append_state_change(job.job_id, {job.updated_at, from, JobState::kFailed, "interrupted by restart"});
    }
    if (job.config_digest == digest_ && job.state != JobState::kFailed && job.state != JobState::kCancelled)
      cache_.emplace(cache_key(job.input.sha256, job.config_digest), job.job_id);
    jobs_.emplace(job.job_id, Entry{job, CancelToken{}});
  }
}

SubmitResult Pipeline::submit(std::span<const std::uint8_t> image) {
  ImageRef ref = image_ref_for(image);
  std::string key = cache_key(ref.sha256, digest_);

  std::unique_lock lock(mu_);
  if (auto it = cache_.find(key); it != cache_.end()) {
    const auto& job = jobs_.at(it->second).job;
    if (job.state != JobState::kFailed && job.state != JobState::kCancelled) return {job.job_id, true};
  }
  store_->put_blob(image);
  AnalysisJob job = new_job(ref, digest_, image);
  store_->put_job(job);
  store_->append_state_change(job.job_id, {job.created_at, std::nullopt, JobState::kCreated, "submitted"});
  jobs_.emplace(job.job_id, Entry{job, CancelToken{}});
  cache_[key] = job.job_id;
  if (!workers_.empty()) {
    queue_.push_back(job.job_id);
    queue_cv_.notify_one();
  }
  return {job.job_id, false};
}

AnalysisJob Pipeline::get(const std::string& job_id) const {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw NotFoundError("unknown job id");
  return it->second.job;
}

AnalysisJob Pipeline::wait(const std::string& job_id, Millis timeout) const {
  std::unique_lock lock(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw NotFoundError("unknown job id");
  changed_.wait_for(lock, timeout, [&] { return is_terminal(it->second.job.state); });
  return it->second.job;
}

std::size_t Pipeline::executions() const {
  std::lock_guard lock(mu_);
  return executions_;
}

AnalysisJob Pipeline::cancel(const std::string& job_id) {
  CancelToken token;
  AnalysisJob snapshot;
  {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) throw NotFoundError("unknown job id");
    Entry& e = it->second;
    if (is_terminal(e.job.state)) return e.job;
    AnalysisJob next = e.job;
    JobState from = next.state;
    next.state = JobState::kCancelled;
    next.updated_at = std::max(Timestamp::now(), next.created_at);
    store_->put_job(next);
    store_->append_state_change(job_id, {next.updated_at, from, JobState::kCancelled, "cancelled by request"});
    e.job = next;
    token = e.cancel;
    snapshot = next;
  }
  changed_.notify_all();
  token.cancel();
  return snapshot;
}

bool Pipeline::advance(const std::string& job_id, JobState to, const std::function<void(AnalysisJob&)>& mutate,
                       const std::string& detail) {
  {
    std::lock_guard lock(mu_);
    Entry& e = jobs_.at(job_id);
    // A concurrent cancel wins; the stage result is dropped.
    if (!transition_allowed(e.job.state, to)) return false;
    AnalysisJob next = e.job;
    JobState from = next.state;
    if (mutate) mutate(next);
    next.state = to;
    next.updated_at = std::max(Timestamp::now(), next.created_at);
    store_->put_job(next);
    store_->append_state_change(job_id, {next.updated_at, from, to, detail});
    e.job = std::move(next);
  }
  changed_.notify_all();
  return true;
}

void Pipeline::fail_or_degrade(const std::string& job_id, JobState to, const std::string& stage,
                               const std::string& error, const std::function<void(AnalysisJob&)>& mutate) {
  advance(
      job_id, to,
      [&](AnalysisJob& j) {
        if (mutate) mutate(j);
        j.stage_errors[stage] = error;
      },
      stage + " failed: " + error);
}

AnalysisJob Pipeline::run(const std::string& job_id) {
  CancelToken token;
  AnalysisJob job;
  {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) throw NotFoundError("unknown job id");
    if (it->second.job.state != JobState::kCreated) return it->second.job;
    token = it->second.cancel;
    job = it->second.job;
    ++executions_;
  }

  auto finish = [&] { return get(job_id); };

  if (!advance(job_id, JobState::kDetecting, {}, "detect started")) return finish();

  Bytes input;
  DetectResponse detected;
  try {
    input = store_->get_blob(job.input.sha256);
    detected = detect(input, *backends_.detector, cfg_.retry, token);
  } catch (const CancelledError&) {
    return finish();
  } catch (const std::exception& e) {
    fail_or_degrade(job_id, JobState::kFailed, "detect", describe(e));
    return finish();
  }

  if (detected.verdict == Verdict::kReal) {
    advance(
        job_id, JobState::kCompleted,
        [&](AnalysisJob& j) {
          j.verdict = Verdict::kReal;
          j.confidence = detected.confidence;
        },
        "verdict real");
    return finish();
  }

  std::vector<RegionFinding> findings;
  ImageRef overlay_ref;
  try {
    findings = to_findings(detected);
    Bytes overlay = compose_overlay(decode_image(input), findings, cfg_.overlay);
    store_->put_blob(overlay);
    overlay_ref = image_ref_for(overlay);
  } catch (const std::exception& e) {
    fail_or_degrade(job_id, JobState::kFailed, "overlay", describe(e));
    return finish();
  }

  std::ostringstream found;
  found << "verdict fake, " << findings.size() << " region" << (findings.size() == 1 ? "" : "s");
  bool ok = advance(
      job_id, JobState::kSimplifying,
      [&](AnalysisJob& j) {
        j.verdict = Verdict::kFake;
        j.confidence = detected.confidence;
        j.findings = findings;
        j.overlay = overlay_ref;
      },
      found.str());
  if (!ok) return finish();

  ExplanationTiers tiers;
  tiers.technical = detected.technical_explanation;
  auto technical_only = [&](AnalysisJob& j) { j.explanations = ExplanationTiers{tiers.technical, {}, {}}; };

  SimplifyRequest sreq;
  sreq.image = base64_encode(input);
  sreq.technical_explanation = detected.technical_explanation;
  for (const auto& f : findings) sreq.region_labels.push_back(f.label);

  SimplifiedResult simplified;
  try {
    std::string raw = simplify(sreq, *backends_.simplifier, cfg_.retry, token);
    simplified = interpret_simplifier_output(raw, findings, cfg_.jaccard_threshold);
  } catch (const CancelledError&) {
    return finish();
  } catch (const std::exception& e) {
    fail_or_degrade(job_id, JobState::kCompletedPartial, "simplify", describe(e), technical_only);
    return finish();
  }
  // parse_region_explanations rejects an all-invalid list, but an empty
  // "regions" array is still well formed.
  if (simplified.parsed.entries.empty()) {
    fail_or_degrade(job_id, JobState::kCompletedPartial, "simplify", "no simplified entries", technical_only);
    return finish();
  }

  tiers.simplified = simplified.parsed.entries;
  tiers.overall_summary = simplified.parsed.overall_summary;

  std::string instruction;
  try {
    instruction = compose_edit_instruction(tiers.simplified, findings, cfg_.instruction_cap);
  } catch (const std::exception& e) {
    fail_or_degrade(job_id, JobState::kCompletedPartial, "edit", describe(e),
                    [&](AnalysisJob& j) { j.explanations = tiers; });
    return finish();
  }

  std::ostringstream parsed;
  parsed << tiers.simplified.size() << " entries; repairs " << join_repairs(simplified.report);
  if (!simplified.parsed.emoji_substitutions.empty()) {
    parsed << "; emoji fallback for entries";
    for (auto i : simplified.parsed.emoji_substitutions) parsed << ' ' << i;
  }
  for (const auto& err : simplified.parsed.entry_errors)
    parsed << "; entry " << err.index << " rejected (" << err.field << ": " << err.reason << ")";
  ok = advance(job_id, JobState::kReconstructing, [&](AnalysisJob& j) { j.explanations = tiers; }, parsed.str());
  if (!ok) return finish();

  try {
    Bytes edited = edit(EditRequest{sreq.image, instruction}, *backends_.editor, cfg_.retry, token);
    store_->put_blob(edited);
    ImageRef rec = image_ref_for(edited);
    advance(job_id, JobState::kCompleted, [&](AnalysisJob& j) { j.reconstruction = rec; }, "reconstruction stored");
  } catch (const CancelledError&) {
  } catch (const std::exception& e) {
    fail_or_degrade(job_id, JobState::kCompletedPartial, "edit", describe(e));
  }
  return finish();
}

void Pipeline::worker_loop() {
  for (;;) {
    std::string id;
    {
      std::unique_lock lock(mu_);
      queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      id = std::move(queue_.front());
      queue_.pop_front();
    }
    try {
      run(id);
    } catch (const std::exception& e) {
      // Store failures land here; if recording them fails too, restart
      // recovery marks the job.
      try {
        fail_or_degrade(id, JobState::kFailed, "pipeline", e.what());
      } catch (const std::exception&) {
      }
    }
  }
}

}  // namespace laylens
