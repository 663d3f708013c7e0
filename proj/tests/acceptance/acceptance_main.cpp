// Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any
// criterion fails.

#include <httplib.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "laylens/pipeline.hpp"
#include "laylens/survey.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace laylens;
using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

namespace {

// Collects problems; a criterion passes when none were recorded.
struct Problems {
  std::vector<std::string> list;
  void expect(bool ok, const std::string& what) {
    if (!ok) list.push_back(what);
  }
};

struct CommandResult {
  int exit_code = -1;
  std::string out;
  double seconds = 0;
};

CommandResult run_command(const std::string& cmd) {
  CommandResult r;
  auto start = Clock::now();
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) throw IoError("popen failed: " + cmd);
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, pipe)) > 0;) r.out.append(buf, n);
  int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return r;
}

std::string cli() { return LAYLENS_CLI_PATH; }

Json normalized(Json j) {
  j.erase("job_id");
  j.erase("created_at");
  j.erase("updated_at");
  return j;
}

// ---------------------------------------------------------------------------

void determinism(Problems& p) {
  std::string cmd = cli() + " analyze " + testsupport::fixture("fake_sample.png").string() + " --mock --json";
  auto a = run_command(cmd);
  auto b = run_command(cmd);
  p.expect(a.exit_code == 0 && b.exit_code == 0, "analyze exited non-zero");
  p.expect(a.seconds < 5.0 && b.seconds < 5.0, "analyze took " + std::to_string(std::max(a.seconds, b.seconds)) + " s");
  Json ja = Json::parse(a.out, nullptr, false), jb = Json::parse(b.out, nullptr, false);
  if (ja.is_discarded() || jb.is_discarded()) return p.expect(false, "analyze output is not JSON");
  p.expect(normalized(ja) == normalized(jb), "normalized job JSON differs between runs");
  p.expect(ja["state"] == "COMPLETED", "state is " + ja["state"].dump());
  p.expect(ja["findings"].size() >= 1, "no regions");
  p.expect(ja.contains("explanations") && !ja["explanations"]["technical"].get<std::string>().empty() &&
               !ja["explanations"]["simplified"].empty(),
           "explanation tiers missing");
  p.expect(ja.contains("overlay"), "overlay missing");
  p.expect(ja.contains("reconstruction"), "reconstruction missing");
}

void degradation(Problems& p) {
  Bytes img = testsupport::read_bytes(testsupport::fixture("fake_sample.png"));
  auto run_with = [&](const char* simplifier, const char* editor, auto&& check) {
    testsupport::TempDir dir;
    PipelineConfig cfg;
    cfg.mock = true;
    cfg.mock_simplifier = MockConfig::parse(simplifier);
    cfg.mock_editor = MockConfig::parse(editor);
    auto store = std::make_shared<Store>(dir.path());
    Pipeline pipeline(store, cfg, Backends::from_config(cfg), false);
    auto job = pipeline.run(pipeline.submit(img).job_id);
    check(job, *pipeline.backends().mocks, *store);
  };

  run_with("garbage", "none", [&](const AnalysisJob& j, MockBackends&, Store&) {
    p.expect(j.state == JobState::kCompletedPartial, "garbage: state not COMPLETED_PARTIAL");
    p.expect(j.stage_errors.size() == 1 && j.stage_errors.count("simplify"), "garbage: stage_errors != {simplify}");
    p.expect(!j.reconstruction, "garbage: reconstruction present");
    p.expect(j.explanations && !j.explanations->technical.empty(), "garbage: technical tier missing");
  });
  run_with("bad_emoji", "none", [&](const AnalysisJob& j, MockBackends&, Store& store) {
    p.expect(j.state == JobState::kCompleted, "bad_emoji: state not COMPLETED");
    p.expect(j.stage_errors.empty(), "bad_emoji: unexpected stage_errors");
    p.expect(j.explanations && !j.explanations->simplified.empty() && j.explanations->simplified[0].emoji == "🔍",
             "bad_emoji: fallback emoji not applied");
    bool logged = false;
    for (const auto& c : store.state_log(j.job_id)) logged = logged || c.detail.find("emoji fallback") != std::string::npos;
    p.expect(logged, "bad_emoji: substitution not logged");
    p.expect(j.reconstruction.has_value(), "bad_emoji: reconstruction missing");
  });
  run_with("none", "flaky_5xx:3", [&](const AnalysisJob& j, MockBackends& mocks, Store&) {
    p.expect(j.state == JobState::kCompletedPartial, "flaky edit: state not COMPLETED_PARTIAL");
    p.expect(j.stage_errors.size() == 1 && j.stage_errors.count("edit"), "flaky edit: stage_errors != {edit}");
    p.expect(j.stage_errors.count("edit") && j.stage_errors.at("edit").find("after 3 attempts") != std::string::npos,
             "flaky edit: attempt count not recorded");
    p.expect(mocks.calls(BackendRole::kEditor) == 3,
             "flaky edit: editor called " + std::to_string(mocks.calls(BackendRole::kEditor)) + " times");
    p.expect(mocks.calls(BackendRole::kDetector) == 1 && mocks.calls(BackendRole::kSimplifier) == 1,
             "flaky edit: other backends retried");
    p.expect(!j.reconstruction, "flaky edit: reconstruction present");
    p.expect(j.explanations && !j.explanations->simplified.empty(), "flaky edit: simplified tier missing");
  });
}

void mask_properties(Problems& p) {
  std::mt19937 rng(20240501);
  for (int i = 0; i < 1000; ++i) {
    int w = 1 + static_cast<int>(rng() % 64), h = 1 + static_cast<int>(rng() % 64);
    double density = std::uniform_real_distribution<double>(0, 1)(rng);
    std::bernoulli_distribution coin(density);
    BinaryMask a(w, h), b(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) a.set(x, y, coin(rng)), b.set(x, y, coin(rng));
    auto rle = rle_encode(a);
    std::uint64_t sum = 0;
    for (auto r : rle.runs()) sum += r;
    p.expect(rle_decode(rle) == a, "roundtrip failed at mask " + std::to_string(i));
    p.expect(sum == static_cast<std::uint64_t>(w) * static_cast<std::uint64_t>(h), "run-sum mismatch at mask " + std::to_string(i));
    p.expect(mask_iou(a, a) == 1.0, "IoU not reflexive at mask " + std::to_string(i));
    p.expect(mask_iou(a, b) == mask_iou(b, a), "IoU not symmetric at mask " + std::to_string(i));
  }

  for (const char* stem : {"01", "02", "03"}) {
    Raster img = decode_image(testsupport::read_bytes(testsupport::fixture(std::string("overlay/") + stem + ".png")));
    Json masks = Json::parse(testsupport::read_text(testsupport::fixture(std::string("overlay/") + stem + ".masks.json")));
    std::vector<RegionFinding> findings;
    std::vector<BinaryMask> decoded;
    for (const auto& m : masks) {
      auto rle = m.get<MaskRLE>();
      findings.push_back(RegionFinding::make("r", rle));
      decoded.push_back(rle_decode(rle));
    }
    OverlayStyle style;
    Raster out = decode_image(compose_overlay(img, findings, style));
    auto allowed = oracles::overlay_footprint(decoded, img.width, img.height, style.outline_px);
    std::size_t stray = 0;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) stray += !allowed.at(x, y) && out.at(x, y) != img.at(x, y);
    p.expect(stray == 0, std::string("overlay ") + stem + ": " + std::to_string(stray) + " pixels changed outside mask and outline");
  }
}

void parser_corpus(Problems& p) {
  std::size_t cases = 0;
  for (const auto& e : fs::directory_iterator(testsupport::fixture("parser_corpus"))) {
    std::string name = e.path().filename().string();
    const std::string suffix = ".input.txt";
    if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
    std::string stem = name.substr(0, name.size() - suffix.size());
    Json expected = Json::parse(testsupport::read_text(e.path().parent_path() / (stem + ".expected.json")));
    Json got = oracles::corpus_result(testsupport::read_text(e.path()));
    p.expect(got == expected, "case " + stem + " got " + got.dump());
    ++cases;
  }
  p.expect(cases >= 20, "only " + std::to_string(cases) + " corpus cases");
}

void wilcoxon(Problems& p) {
  std::mt19937 rng(77);
  auto random_pairs = [&](std::size_t n, int hi) {
    std::uniform_int_distribution<int> r(1, hi);
    oracles::Pairs pairs;
    for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(r(rng), r(rng));
    return pairs;
  };
  auto identity = [&](const WilcoxonResult& r) {
    double n = static_cast<double>(r.n_used);
    p.expect(r.w_plus + r.w_minus == n * (n + 1) / 2, "rank-sum identity violated");
  };

  int datasets = 0;
  while (datasets < 50) {
    auto pairs = random_pairs(1 + rng() % 12, 5);
    auto oracle = oracles::brute_force_wilcoxon(pairs);
    if (oracle.n == 0) continue;
    auto r = wilcoxon_signed_rank(pairs);
    identity(r);
    p.expect(std::abs(r.p_two_sided - oracle.p) <= 1e-12,
             "exact p " + std::to_string(r.p_two_sided) + " vs oracle " + std::to_string(oracle.p));
    ++datasets;
  }

  auto sym = wilcoxon_signed_rank(oracles::Pairs{{0, 1}, {1, 0}, {0, 2}, {2, 0}});
  p.expect(sym.p_two_sided == 1.0, "symmetric example p != 1.0");
  p.expect(sym.w_plus == 5.0 && sym.w_minus == 5.0, "symmetric example rank sums");

  for (int round = 0; round < 30; ++round) {
    std::vector<int> mags(25);
    for (int i = 0; i < 25; ++i) mags[static_cast<std::size_t>(i)] = i + 1;
    std::bernoulli_distribution coin(0.2 + 0.02 * round);
    oracles::Pairs pairs;
    for (int m : mags) pairs.emplace_back(0, coin(rng) ? m : -m);
    auto r = wilcoxon_signed_rank(pairs);
    identity(r);
    double approx = oracles::normal_approx_p(pairs);
    p.expect(r.method == WilcoxonMethod::kExact, "n = 25 not exact");
    p.expect(std::abs(r.p_two_sided - approx) <= 0.01,
             "n = 25: exact " + std::to_string(r.p_two_sided) + " vs approx " + std::to_string(approx));
  }

  for (int i = 0; i < 100; ++i) {
    auto pairs = random_pairs(1 + rng() % 80, 1 + static_cast<int>(rng() % 9));
    if (oracles::nonzero_diffs(pairs).empty()) continue;
    identity(wilcoxon_signed_rank(pairs));
  }
}

void survey_report(Problems& p) {
  auto r = run_command(cli() + " survey-report " + testsupport::fixture("user_study_synthetic.jsonl").string());
  p.expect(r.exit_code == 0, "survey-report exited " + std::to_string(r.exit_code));
  const std::pair<const char*, const char*> lines[] = {
      {"Preferred simplified", "65.3%"}, {"reduced cognitive load", "81.3%"}, {"comparison helpful", "69.3%"},
      {"Confidence in detection", "80.0%"}, {"Would use", "93.3%"}};
  std::istringstream in(r.out);
  std::vector<std::string> out_lines;
  for (std::string l; std::getline(in, l);) out_lines.push_back(l);
  for (auto [label, pct] : lines) {
    bool found = false;
    for (const auto& l : out_lines) found = found || (l.find(label) != std::string::npos && l.find(pct) != std::string::npos);
    p.expect(found, std::string("missing ") + pct + " for " + label);
  }
  for (const char* test : {"ease", "clarity", "accuracy"}) {
    bool found = false;
    for (const auto& l : out_lines)
      found = found || (l.rfind(std::string("  ") + test, 0) == 0 && l.find("n_used=") != std::string::npos &&
                        l.find("method=") != std::string::npos);
    p.expect(found, std::string("no n_used/method line for ") + test);
  }
}

// A `laylens serve` child process on a free port.
class ServeProcess {
 public:
  ServeProcess(const fs::path& data_dir, std::vector<std::string> extra) {
    port_ = testsupport::free_port();
    std::vector<std::string> args{cli(), "serve", "--mock", "--listen", "127.0.0.1:" + std::to_string(port_),
                                  "--data-dir", data_dir.string()};
    args.insert(args.end(), extra.begin(), extra.end());
    pid_ = ::fork();
    if (pid_ == 0) {
      std::vector<char*> argv;
      for (auto& a : args) argv.push_back(a.data());
      argv.push_back(nullptr);
      ::freopen("/dev/null", "w", stderr);
      ::execv(argv[0], argv.data());
      ::_exit(127);
    }
    httplib::Client c("127.0.0.1", port_);
    auto deadline = Clock::now() + 10s;
    while (Clock::now() < deadline) {
      if (auto r = c.Get("/healthz"); r && r->status == 200) return;
      std::this_thread::sleep_for(20ms);
    }
    throw IoError("serve did not come up");
  }
  ~ServeProcess() {
    if (pid_ > 0) {
      ::kill(pid_, SIGTERM);
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
  }
  int port() const { return port_; }

 private:
  pid_t pid_ = -1;
  int port_ = 0;
};

void api_contract(Problems& p) {
  testsupport::TempDir dir, dir2;
  ServeProcess serve(dir.path() / "data", {});
  ServeProcess flaky(dir2.path() / "data", {"--mock-fault", "editor=flaky_5xx:3"});
  httplib::Client c("127.0.0.1", serve.port());
  httplib::Client cf("127.0.0.1", flaky.port());
  c.set_read_timeout(10, 0);
  cf.set_read_timeout(10, 0);

  auto status_of = [](const httplib::Result& r) { return r ? r->status : -1; };
  auto is_error_body = [](const httplib::Result& r) {
    if (!r) return false;
    Json j = Json::parse(r->body, nullptr, false);
    return j.is_object() && j.contains("error") && j["error"].is_string();
  };
  auto upload = [](httplib::Client& cl, const std::string& bytes, const std::string& type) {
    return cl.Post("/api/v1/jobs", httplib::MultipartFormDataItems{{"image", bytes, "upload", type}});
  };
  auto submit = [&](httplib::Client& cl, const char* fixture) -> std::string {
    auto r = upload(cl, testsupport::read_text(testsupport::fixture(fixture)), "image/png");
    p.expect(status_of(r) == 202, std::string("POST ") + fixture + " -> " + std::to_string(status_of(r)));
    if (!r || r->status != 202) return std::string(32, '0');
    Json j = Json::parse(r->body);
    p.expect(j.contains("job_id") && is_lower_hex(j["job_id"].get<std::string>(), 32), "202 body lacks job_id");
    return j.value("job_id", std::string(32, '0'));
  };
  auto wait = [&](httplib::Client& cl, const std::string& id) {
    auto deadline = Clock::now() + 15s;
    Json j;
    while (Clock::now() < deadline) {
      auto r = cl.Get("/api/v1/jobs/" + id);
      if (!r || r->status != 200) break;
      j = Json::parse(r->body);
      if (is_terminal(parse_job_state(j["state"].get<std::string>()))) break;
      std::this_thread::sleep_for(20ms);
    }
    try {
      json_as<AnalysisJob>(j);
    } catch (const std::exception& e) {
      p.expect(false, std::string("job body does not validate: ") + e.what());
    }
    return j;
  };

  auto fake = submit(c, "fake_sample.png");
  auto real = submit(c, "real_sample.png");
  auto partial = submit(cf, "fake_sample.png");
  auto art = [&](httplib::Client& cl, const std::string& id, const char* name) {
    return status_of(cl.Get("/api/v1/jobs/" + id + "/" + name));
  };

  Json jf = wait(c, fake);
  p.expect(jf["state"] == "COMPLETED", "fake job state " + jf["state"].dump());
  p.expect(art(c, fake, "overlay.png") == 200 && art(c, fake, "reconstruction.png") == 200, "completed artifacts not 200");
  auto ov = c.Get("/api/v1/jobs/" + fake + "/overlay.png");
  p.expect(ov && ov->get_header_value("Cache-Control").find("immutable") != std::string::npos, "overlay not immutable-cached");
  p.expect(ov && ov->get_header_value("Content-Type") == "image/png", "overlay content type");

  Json jr = wait(c, real);
  p.expect(jr["verdict"] == "real", "real fixture verdict");
  p.expect(art(c, real, "overlay.png") == 404 && art(c, real, "reconstruction.png") == 404, "real-verdict artifacts not 404");

  Json jp = wait(cf, partial);
  p.expect(jp["state"] == "COMPLETED_PARTIAL", "edit-failure job state " + jp["state"].dump());
  p.expect(art(cf, partial, "overlay.png") == 200 && art(cf, partial, "reconstruction.png") == 404,
           "partial artifacts not 200/404");

  auto big = upload(c, std::string(17u << 20, 'x'), "image/png");
  p.expect(status_of(big) == 413, "17 MiB upload -> " + std::to_string(status_of(big)));
  auto text = upload(c, testsupport::read_text(testsupport::fixture("not_an_image.png")), "image/png");
  p.expect(status_of(text) == 422 && is_error_body(text), "text-as-png -> " + std::to_string(status_of(text)));
  auto bad_type = upload(c, "hello", "text/plain");
  p.expect(status_of(bad_type) == 415 && is_error_body(bad_type), "text/plain -> " + std::to_string(status_of(bad_type)));

  std::string unknown(32, 'f');
  auto missing = c.Get("/api/v1/jobs/" + unknown);
  p.expect(status_of(missing) == 404 && is_error_body(missing), "unknown job not 404");
  p.expect(status_of(c.Delete("/api/v1/jobs/" + unknown)) == 404, "DELETE unknown not 404");
  auto del = c.Delete("/api/v1/jobs/" + fake);
  p.expect(status_of(del) == 200 && Json::parse(del->body)["state"] == "COMPLETED", "DELETE completed not idempotent");
  p.expect(status_of(c.Get("/api/v1/jobs/" + fake)) == 200 && Json::parse(c.Get("/api/v1/jobs/" + fake)->body) == jf,
           "GET not repeatable");

  auto list = c.Get("/api/v1/jobs?page=1&page_size=10");
  p.expect(status_of(list) == 200 && Json::parse(list->body)["jobs"].size() == 2, "job listing");

  Json resp{{"participant_id", "p1"}, {"item_id", "img01"}, {"question_id", "clarity_simplified"}, {"rating", 6}};
  auto bad_rating = c.Post("/api/v1/survey", resp.dump(), "application/json");
  p.expect(status_of(bad_rating) == 422 && is_error_body(bad_rating), "rating 6 not 422");
  resp["rating"] = 5;
  auto created = c.Post("/api/v1/survey", resp.dump(), "application/json");
  p.expect(status_of(created) == 201 && Json::parse(created->body) == Json{{"id", 1}}, "survey POST not 201 {id: 1}");
  auto summary = c.Get("/api/v1/survey/summary");
  p.expect(status_of(summary) == 200 && Json::parse(summary->body)["response_count"] == 1, "survey summary");

  auto start = Clock::now();
  auto health = c.Get("/healthz");
  p.expect(Clock::now() - start < 3s, "healthz slower than 3 s");
  p.expect(status_of(health) == 200 && Json::parse(health->body)["status"] == "ok", "healthz not ok");
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<void(Problems&)>> criteria[] = {
      {"end-to-end determinism", determinism},
      {"degradation matrix", degradation},
      {"mask codec properties", mask_properties},
      {"parser corpus", parser_corpus},
      {"wilcoxon", wilcoxon},
      {"survey fixture report", survey_report},
      {"api contract", api_contract},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Problems p;
    try {
      fn(p);
    } catch (const std::exception& e) {
      p.list.push_back(std::string("exception: ") + e.what());
    }
    if (p.list.empty()) {
      std::cout << "PASS " << name << "\n";
    } else {
      ++failed;
      std::cout << "FAIL " << name << ": " << p.list.front();
      if (p.list.size() > 1) std::cout << " (+" << p.list.size() - 1 << " more)";
      std::cout << "\n";
    }
    std::cout.flush();
  }
  return failed == 0 ? 0 : 1;
}
