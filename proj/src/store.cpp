#include "laylens/store.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace laylens {

namespace fs = std::filesystem;

void to_json(Json& j, const StateChange& v) {
  j = Json{{"ts", v.ts}, {"to", v.to}, {"detail", v.detail}};
  j["from"] = v.from ? Json(*v.from) : Json(nullptr);
}

void from_json(const Json& j, StateChange& v) {
  j.at("ts").get_to(v.ts);
  j.at("to").get_to(v.to);
  v.detail = j.value("detail", "");
  v.from.reset();
  if (auto it = j.find("from"); it != j.end() && !it->is_null()) v.from = it->get<JobState>();
}

namespace {

Bytes read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw NotFoundError("not found: " + p.filename().string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::vector<std::string> lines;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  return lines;
}

void check_job_id(const std::string& id) {
  if (!is_lower_hex(id, 32)) throw NotFoundError("unknown job id");
}

}  // namespace

Store::Store(fs::path root, bool verify_reads) : root_(std::move(root)), verify_reads_(verify_reads) {
  std::error_code ec;
  for (auto sub : {"blobs", "jobs", "survey", "tmp"}) {
    fs::create_directories(root_ / sub, ec);
    if (ec) throw IoError("cannot create " + (root_ / sub).string() + ": " + ec.message());
  }
}

void Store::write_atomic(const fs::path& dest, std::span<const std::uint8_t> bytes) const {
  // Written beside the data tree, then renamed into place: readers see the
  // old file or the new one, never a prefix.
  fs::path tmp = root_ / "tmp" / (dest.filename().string() + "." + random_hex(8) + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("short write to " + tmp.string());
    }
  }
  std::error_code ec;
  fs::create_directories(dest.parent_path(), ec);
  fs::rename(tmp, dest, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot publish " + dest.string());
  }
}

// ---------------------------------------------------------------------------
// Blobs
// ---------------------------------------------------------------------------

fs::path Store::blob_path(const std::string& key) const {
  return root_ / "blobs" / key.substr(0, 2) / key;
}

std::string Store::put_blob(std::span<const std::uint8_t> bytes) {
  if (bytes.size() > kMaxBlobBytes) throw ValidationError("blob larger than 64 MiB");
  std::string key = sha256_hex(bytes);
  fs::path dest = blob_path(key);
  if (fs::exists(dest)) return key;
  write_atomic(dest, bytes);
  return key;
}

bool Store::has_blob(const std::string& key) const {
  return is_lower_hex(key, 64) && fs::exists(blob_path(key));
}

Bytes Store::get_blob(const std::string& key) const {
  if (!is_lower_hex(key, 64)) throw NotFoundError("blob not found");
  fs::path p = blob_path(key);
  if (!fs::exists(p)) throw NotFoundError("blob not found: " + key);
  Bytes b = read_file(p);
  if (verify_reads_ && sha256_hex(b) != key) throw IntegrityError("blob digest mismatch: " + key);
  return b;
}

std::vector<std::string> Store::scrub() const {
  std::vector<std::string> bad;
  for (const auto& shard : fs::directory_iterator(root_ / "blobs")) {
    if (!shard.is_directory()) continue;
    for (const auto& f : fs::directory_iterator(shard.path())) {
      std::string key = f.path().filename().string();
      if (sha256_hex(read_file(f.path())) != key) bad.push_back(key);
    }
  }
  std::sort(bad.begin(), bad.end());
  return bad;
}

// ---------------------------------------------------------------------------
// Jobs
// ---------------------------------------------------------------------------

fs::path Store::job_path(const std::string& job_id) const { return root_ / "jobs" / (job_id + ".json"); }

void Store::put_job(const AnalysisJob& job) {
  validate_job(job);
  std::lock_guard lock(jobs_mu_);
  fs::path p = job_path(job.job_id);
  if (fs::exists(p)) {
    auto stored = json_as<AnalysisJob>(Json::parse(to_string(read_file(p))));
    if (is_terminal(stored.state)) {
      if (stored == job) return;
      throw TerminalImmutableError();
    }
  }
  write_atomic(p, to_bytes(Json(job).dump()));
}

AnalysisJob Store::get_job(const std::string& job_id) const {
  check_job_id(job_id);
  fs::path p = job_path(job_id);
  std::lock_guard lock(jobs_mu_);
  if (!fs::exists(p)) throw NotFoundError("unknown job id");
  return json_as<AnalysisJob>(Json::parse(to_string(read_file(p))));
}

std::vector<AnalysisJob> Store::all_jobs() const {
  std::vector<AnalysisJob> jobs;
  {
    std::lock_guard lock(jobs_mu_);
    for (const auto& f : fs::directory_iterator(root_ / "jobs")) {
      if (f.path().extension() != ".json") continue;
      jobs.push_back(json_as<AnalysisJob>(Json::parse(to_string(read_file(f.path())))));
    }
  }
  std::sort(jobs.begin(), jobs.end(), [](const AnalysisJob& a, const AnalysisJob& b) {
    if (a.created_at != b.created_at) return a.created_at > b.created_at;
    return a.job_id < b.job_id;
  });
  return jobs;
}

std::vector<AnalysisJob> Store::list_jobs(std::size_t page, std::size_t page_size) const {
  if (page == 0 || page_size == 0) throw ValidationError("page and page_size must be >= 1");
  auto jobs = all_jobs();
  std::size_t begin = (page - 1) * page_size;
  if (begin >= jobs.size()) return {};
  std::size_t end = std::min(jobs.size(), begin + page_size);
  return {jobs.begin() + static_cast<std::ptrdiff_t>(begin), jobs.begin() + static_cast<std::ptrdiff_t>(end)};
}

void Store::append_state_change(const std::string& job_id, const StateChange& change) {
  check_job_id(job_id);
  std::lock_guard lock(log_mu_);
  std::ofstream out(root_ / "jobs" / (job_id + ".log"), std::ios::app);
  out << Json(change).dump() << '\n';
  out.flush();
  if (!out) throw IoError("cannot append state log for " + job_id);
}

std::vector<StateChange> Store::state_log(const std::string& job_id) const {
  check_job_id(job_id);
  std::vector<StateChange> out;
  for (const auto& line : read_lines(root_ / "jobs" / (job_id + ".log")))
    out.push_back(json_as<StateChange>(Json::parse(line)));
  return out;
}

// ---------------------------------------------------------------------------
// Survey
// ---------------------------------------------------------------------------

fs::path Store::survey_path() const { return root_ / "survey" / "responses.jsonl"; }

std::size_t Store::append_survey_response(const Json& record) {
  std::lock_guard lock(survey_mu_);
  if (!survey_lines_) survey_lines_ = read_lines(survey_path()).size();
  std::ofstream out(survey_path(), std::ios::app);
  out << record.dump() << '\n';
  out.flush();
  if (!out) throw IoError("cannot append survey response");
  return ++*survey_lines_;
}

std::vector<Json> Store::survey_responses() const {
  std::vector<Json> out;
  for (const auto& line : read_lines(survey_path())) out.push_back(Json::parse(line));
  return out;
}

}  // namespace laylens
