#include <doctest.h>

#include <atomic>
#include <thread>

#include "laylens/mask.hpp"
#include "laylens/store.hpp"
#include "support.hpp"

using namespace laylens;
namespace fs = std::filesystem;

namespace {

AnalysisJob job_at(const Bytes& png, const std::string& created) {
  AnalysisJob job = new_job(image_ref_for(png), std::string(64, 'd'), png);
  job.created_at = job.updated_at = Timestamp::parse(created);
  return job;
}

std::size_t count_files(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) n += e.is_regular_file();
  return n;
}

}  // namespace

TEST_CASE("blobs are content addressed") {
  testsupport::TempDir dir;
  Store store(dir.path());
  CHECK(store.put_blob(Bytes{}) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  Bytes b = to_bytes("hello blob");
  auto k1 = store.put_blob(b);
  auto k2 = store.put_blob(b);
  CHECK(k1 == k2);
  CHECK(k1 == sha256_hex(b));
  CHECK(count_files(dir.path() / "blobs") == 2);
  CHECK(store.get_blob(k1) == b);
  CHECK(store.has_blob(k1));
  CHECK_FALSE(store.has_blob(std::string(64, '1')));
  CHECK_THROWS_AS(store.get_blob(std::string(64, '1')), NotFoundError);
  CHECK_THROWS_AS(store.get_blob("../../etc/passwd"), NotFoundError);
}

TEST_CASE("blob size boundary") {
  testsupport::TempDir dir;
  Store store(dir.path());
  Bytes big(kMaxBlobBytes + 1, 7);
  CHECK_THROWS_AS(store.put_blob(big), ValidationError);
  big.pop_back();
  CHECK(store.put_blob(big) == sha256_hex(big));
}

TEST_CASE("corrupted blobs fail read-verify and show up in scrub") {
  testsupport::TempDir dir;
  Store store(dir.path());
  auto good = store.put_blob(to_bytes("fine"));
  auto bad = store.put_blob(to_bytes("about to rot"));
  CHECK(store.scrub().empty());
  {
    std::ofstream out(store.blob_path(bad), std::ios::binary | std::ios::trunc);
    out << "rotted";
  }
  CHECK_THROWS_AS(store.get_blob(bad), IntegrityError);
  CHECK(store.scrub() == std::vector<std::string>{bad});
  CHECK(store.get_blob(good) == to_bytes("fine"));

  Store lax(dir.path(), false);
  CHECK(lax.get_blob(bad) == to_bytes("rotted"));
}

TEST_CASE("jobs: put, get, terminal immutability") {
  testsupport::TempDir dir;
  Store store(dir.path());
  Bytes png = encode_png(Raster(4, 4));
  AnalysisJob job = job_at(png, "2026-01-01T00:00:00Z");
  store.put_job(job);
  CHECK(store.get_job(job.job_id) == job);

  job.state = JobState::kDetecting;
  store.put_job(job);
  job.state = JobState::kCompleted;
  job.verdict = Verdict::kReal;
  job.confidence = 0.9;
  store.put_job(job);
  CHECK(store.get_job(job.job_id) == job);
  CHECK_NOTHROW(store.put_job(job));  // same terminal snapshot is a no-op

  AnalysisJob changed = job;
  changed.confidence = 0.1;
  CHECK_THROWS_WITH_AS(store.put_job(changed), "terminal immutable", TerminalImmutableError);
  CHECK(store.get_job(job.job_id).confidence == 0.9);

  CHECK_THROWS_AS(store.get_job(std::string(32, 'f')), NotFoundError);
  CHECK_THROWS_AS(store.get_job("not-an-id"), NotFoundError);
}

TEST_CASE("jobs are paged newest first") {
  testsupport::TempDir dir;
  Store store(dir.path());
  Bytes png = encode_png(Raster(4, 4));
  auto j1 = job_at(png, "2026-01-01T00:00:00Z");
  auto j2 = job_at(png, "2026-01-02T00:00:00Z");
  auto j3 = job_at(png, "2026-01-03T00:00:00Z");
  for (const auto& j : {j2, j3, j1}) store.put_job(j);
  auto p1 = store.list_jobs(1, 2);
  auto p2 = store.list_jobs(2, 2);
  REQUIRE(p1.size() == 2);
  REQUIRE(p2.size() == 1);
  CHECK(p1[0].job_id == j3.job_id);
  CHECK(p1[1].job_id == j2.job_id);
  CHECK(p2[0].job_id == j1.job_id);
  CHECK(store.list_jobs(3, 2).empty());
  CHECK_THROWS_AS(store.list_jobs(0, 2), ValidationError);
}

TEST_CASE("state log appends in order") {
  testsupport::TempDir dir;
  Store store(dir.path());
  std::string id = random_hex(16);
  CHECK(store.state_log(id).empty());
  StateChange a{Timestamp::parse("2026-01-01T00:00:00Z"), std::nullopt, JobState::kCreated, "created"};
  StateChange b{Timestamp::parse("2026-01-01T00:00:01Z"), JobState::kCreated, JobState::kDetecting, ""};
  store.append_state_change(id, a);
  store.append_state_change(id, b);
  CHECK(store.state_log(id) == std::vector<StateChange>{a, b});
}

TEST_CASE("survey responses get line-number ids and survive restart") {
  testsupport::TempDir dir;
  {
    Store store(dir.path());
    CHECK(store.append_survey_response(Json{{"n", 1}}) == 1);
    CHECK(store.append_survey_response(Json{{"n", 2}}) == 2);
  }
  Store reopened(dir.path());
  auto all = reopened.survey_responses();
  REQUIRE(all.size() == 2);
  CHECK(all[0]["n"] == 1);
  CHECK(all[1]["n"] == 2);
  CHECK(reopened.append_survey_response(Json{{"n", 3}}) == 3);
}

TEST_CASE("readers never see a partial job snapshot") {
  testsupport::TempDir dir;
  Store store(dir.path());
  Bytes png = encode_png(Raster(64, 64));
  AnalysisJob job = job_at(png, "2026-01-01T00:00:00Z");
  job.state = JobState::kSimplifying;
  job.verdict = Verdict::kFake;
  // Large snapshots make torn writes likely if publish were not atomic.
  for (int i = 0; i < 40; ++i) {
    BinaryMask m(64, 64);
    m.set(i, i);
    job.findings.push_back(RegionFinding::make("region " + std::to_string(i), rle_encode(m)));
  }
  store.put_job(job);

  std::atomic<bool> done{false};
  std::atomic<int> reads{0}, failures{0};
  std::thread reader([&] {
    while (!done) {
      // Raw file reads bypass the store lock entirely.
      std::ifstream in(dir.path() / "jobs" / (job.job_id + ".json"));
      std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      Json j = Json::parse(text, nullptr, false);
      if (j.is_discarded() || j["findings"].size() != 40) ++failures;
      ++reads;
    }
  });
  for (int i = 0; i < 200; ++i) {
    job.updated_at = Timestamp{job.updated_at.epoch_ms + 1};
    store.put_job(job);
  }
  done = true;
  reader.join();
  CHECK(reads > 0);
  CHECK(failures == 0);
}
