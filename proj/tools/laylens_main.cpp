// laylens: serve | analyze | survey-report

#include <csignal>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>

#include <CLI11.hpp>

#include "laylens/api.hpp"
#include "laylens/survey.hpp"

namespace fs = std::filesystem;
using namespace laylens;

namespace {

struct BackendOptions {
  bool mock = false;
  std::string detector_url;
  std::string simplifier_url;
  std::string editor_url;
  std::vector<std::string> faults;  // ROLE=MODE
  double jaccard = 0.5;
};

void add_backend_options(CLI::App* cmd, BackendOptions& o) {
  cmd->add_flag("--mock", o.mock, "Use the deterministic in-process mock backends")->envname("LAYLENS_MOCK");
  cmd->add_option("--detector-url", o.detector_url, "Detector base URL")->envname("LAYLENS_DETECTOR_URL");
  cmd->add_option("--simplifier-url", o.simplifier_url, "Simplifier base URL")->envname("LAYLENS_SIMPLIFIER_URL");
  cmd->add_option("--editor-url", o.editor_url, "Editor base URL")->envname("LAYLENS_EDITOR_URL");
  cmd->add_option("--mock-fault", o.faults,
                  "Fault injection for a mock role, e.g. simplifier=garbage or editor=flaky_5xx:3")
      ->envname("LAYLENS_MOCK_FAULT")
      ->delimiter(',');
  cmd->add_option("--jaccard-threshold", o.jaccard, "Label match threshold")
      ->envname("LAYLENS_JACCARD_THRESHOLD")
      ->check(CLI::Range(0.0, 1.0));
}

PipelineConfig pipeline_config(const BackendOptions& o) {
  PipelineConfig cfg;
  cfg.mock = o.mock;
  cfg.detector_url = o.detector_url;
  cfg.simplifier_url = o.simplifier_url;
  cfg.editor_url = o.editor_url;
  cfg.jaccard_threshold = o.jaccard;
  for (const auto& f : o.faults) {
    auto eq = f.find('=');
    if (eq == std::string::npos) throw ValidationError("--mock-fault expects ROLE=MODE, got '" + f + "'");
    std::string role = f.substr(0, eq);
    MockConfig mc = MockConfig::parse(f.substr(eq + 1));
    if (role == "detector") cfg.mock_detector = mc;
    else if (role == "simplifier") cfg.mock_simplifier = mc;
    else if (role == "editor") cfg.mock_editor = mc;
    else throw ValidationError("unknown mock role '" + role + "'");
  }
  return cfg;
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

int run_serve(const ServiceConfig& in_cfg) {
  ServiceConfig cfg = in_cfg;

  // Block termination signals before any thread starts; one thread waits.
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

  std::unique_ptr<MockServer> mock_server;
  if (!cfg.mock_serve.empty()) {
    auto [host, port] = parse_listen_address(cfg.mock_serve);
    auto mocks = std::make_shared<MockBackends>(cfg.pipeline.mock_detector, cfg.pipeline.mock_simplifier,
                                                cfg.pipeline.mock_editor);
    mock_server = std::make_unique<MockServer>(mocks, host, port);
    std::cerr << "mock backends on " << mock_server->base_url() << "\n";
    // Without --mock the pipeline talks to the served mocks over HTTP.
    if (!cfg.pipeline.mock) {
      if (cfg.pipeline.detector_url.empty()) cfg.pipeline.detector_url = mock_server->base_url();
      if (cfg.pipeline.simplifier_url.empty()) cfg.pipeline.simplifier_url = mock_server->base_url();
      if (cfg.pipeline.editor_url.empty()) cfg.pipeline.editor_url = mock_server->base_url();
    }
  }
  cfg.validate();

  auto store = std::make_shared<Store>(cfg.data_dir);
  auto pipeline = std::make_shared<Pipeline>(store, cfg.pipeline, Backends::from_config(cfg.pipeline));
  ApiService api(pipeline, cfg);
  auto [host, port] = parse_listen_address(cfg.listen);
  int bound = api.bind(host, port);
  std::cerr << "laylens listening on " << host << ":" << bound << " (data " << cfg.data_dir << ", config "
            << pipeline->config_digest().substr(0, 12) << ")\n";

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&sigs, &sig);
    api.stop();
  });
  api.serve();
  // serve() can also return on its own (socket error); release the waiter.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  if (mock_server) mock_server->stop();
  return 0;
}

int run_analyze(const std::string& file, const BackendOptions& opts, const std::string& data_dir, bool json,
                double timeout_s) {
  PipelineConfig cfg = pipeline_config(opts);
  Bytes image = read_file(file);

  fs::path dir = data_dir;
  bool temp = dir.empty();
  if (temp) dir = fs::temp_directory_path() / ("laylens-analyze-" + random_hex(8));

  int code = 0;
  {
    auto store = std::make_shared<Store>(dir);
    Pipeline pipeline(store, cfg, Backends::from_config(cfg), /*start_workers=*/false);
    auto submitted = pipeline.submit(image);
    AnalysisJob job = pipeline.get(submitted.job_id);
    if (!is_terminal(job.state)) {
      auto runner = std::async(std::launch::async, [&] { return pipeline.run(submitted.job_id); });
      job = pipeline.wait(submitted.job_id, Millis(static_cast<long long>(timeout_s * 1000)));
      if (!is_terminal(job.state)) job = pipeline.cancel(submitted.job_id);
      runner.get();
      job = pipeline.get(submitted.job_id);
    }

    if (json) {
      std::cout << Json(job).dump(2) << "\n";
    } else {
      std::cout << "job " << job.job_id << ": " << to_string(job.state) << "\n";
      if (job.verdict) std::cout << "verdict: " << to_string(*job.verdict) << "\n";
      for (const auto& f : job.findings)
        std::cout << "  region \"" << f.label << "\" bbox [" << f.bbox.x_min << "," << f.bbox.y_min << ","
                  << f.bbox.x_max << "," << f.bbox.y_max << "]\n";
      if (job.explanations)
        for (const auto& e : job.explanations->simplified)
          std::cout << "  " << e.emoji << " " << e.region << ": " << e.simple_explanation << "\n";
      for (const auto& [stage, err] : job.stage_errors) std::cout << "  " << stage << " error: " << err << "\n";
      if (!temp) {
        if (job.overlay) std::cout << "overlay: " << store->blob_path(job.overlay->sha256).string() << "\n";
        if (job.reconstruction)
          std::cout << "reconstruction: " << store->blob_path(job.reconstruction->sha256).string() << "\n";
      }
    }
    if (job.state == JobState::kFailed || job.state == JobState::kCancelled) code = 1;
  }
  if (temp) {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  return code;
}

int run_survey_report(const std::string& path, bool json, bool csv) {
  auto responses = load_survey_jsonl(path);
  SurveySummary s = summary_report(responses);
  if (json) std::cout << Json(s).dump(2) << "\n";
  else if (csv) std::cout << summary_csv(s);
  else std::cout << summary_text(s);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"laylens: explainable deepfake analysis service"};
  app.require_subcommand(1);

  ServiceConfig serve_cfg;
  BackendOptions serve_backends;
  std::size_t max_inflight = 4;
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--listen", serve_cfg.listen, "host:port to listen on")
      ->envname("LAYLENS_LISTEN")
      ->capture_default_str();
  serve->add_option("--data-dir", serve_cfg.data_dir, "Storage root")
      ->envname("LAYLENS_DATA_DIR")
      ->capture_default_str();
  add_backend_options(serve, serve_backends);
  serve->add_option("--mock-serve", serve_cfg.mock_serve, "Also expose the mock backends over HTTP at host:port")
      ->envname("LAYLENS_MOCK_SERVE");
  serve->add_option("--max-image-bytes", serve_cfg.max_image_bytes, "Upload size limit")
      ->envname("LAYLENS_MAX_IMAGE_BYTES")
      ->capture_default_str();
  serve->add_option("--max-inflight", max_inflight, "Concurrent jobs")
      ->envname("LAYLENS_MAX_INFLIGHT")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  serve->add_option("--allow-origin", serve_cfg.allow_origin, "CORS origin for a separate UI dev server")
      ->envname("LAYLENS_ALLOW_ORIGIN");
  serve->add_option("--static-dir", serve_cfg.static_dir, "Serve UI assets from this directory at /")
      ->envname("LAYLENS_STATIC_DIR");

  std::string analyze_file, analyze_dir;
  BackendOptions analyze_backends;
  bool analyze_json = false;
  double analyze_timeout = 600;
  auto* analyze = app.add_subcommand("analyze", "Run one image through the pipeline and print the job");
  analyze->add_option("file", analyze_file, "PNG or JPEG image")->required()->check(CLI::ExistingFile);
  add_backend_options(analyze, analyze_backends);
  analyze->add_flag("--json", analyze_json, "Print the terminal job as JSON");
  analyze->add_option("--data-dir", analyze_dir, "Keep artifacts here instead of a temporary directory")
      ->envname("LAYLENS_DATA_DIR");
  analyze->add_option("--timeout", analyze_timeout, "Seconds before the job is cancelled")->capture_default_str();

  std::string survey_file;
  bool survey_json = false, survey_csv = false;
  auto* survey = app.add_subcommand("survey-report", "Summarize survey responses (JSONL)");
  survey->add_option("responses", survey_file, "responses.jsonl")->required()->check(CLI::ExistingFile);
  auto* jflag = survey->add_flag("--json", survey_json, "SurveySummary as JSON");
  survey->add_flag("--csv", survey_csv, "question,rating,count rows")->excludes(jflag);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      serve_cfg.pipeline = pipeline_config(serve_backends);
      serve_cfg.pipeline.max_inflight = max_inflight;
      return run_serve(serve_cfg);
    }
    if (*analyze) return run_analyze(analyze_file, analyze_backends, analyze_dir, analyze_json, analyze_timeout);
    if (*survey) return run_survey_report(survey_file, survey_json, survey_csv);
  } catch (const std::exception& e) {
    std::cerr << "laylens: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
