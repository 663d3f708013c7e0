#pragma once

// Public HTTP surface:
//
//   POST   /api/v1/jobs                        multipart "image" -> 202 {job_id}
//   GET    /api/v1/jobs?page=&page_size=       {jobs: [...], page, page_size}
//   GET    /api/v1/jobs/{id}                   AnalysisJob
//   GET    /api/v1/jobs/{id}/overlay.png
//   GET    /api/v1/jobs/{id}/reconstruction.png
//   DELETE /api/v1/jobs/{id}                   AnalysisJob after cancel
//   POST   /api/v1/survey                      SurveyResponse -> 201 {id}
//   GET    /api/v1/survey/summary              SurveySummary
//   GET    /healthz                            service + backend reachability
//
// Errors carry {"error": message}.

#include <memory>
#include <string>

#include "laylens/pipeline.hpp"

namespace laylens {

inline constexpr std::size_t kDefaultMaxImageBytes = 16u << 20;

struct ServiceConfig {
  std::string listen = "127.0.0.1:8080";
  std::string data_dir = "./data";
  PipelineConfig pipeline;
  std::string mock_serve;  // host:port for exposing the mocks over HTTP, empty = off
  std::size_t max_image_bytes = kDefaultMaxImageBytes;
  std::string allow_origin;  // empty = same-origin only
  std::string static_dir;    // optional UI assets served at /

  /// Throws ValidationError when neither mock mode nor all three URLs are set.
  void validate() const;
};

/// "host:port" → pair. Throws ValidationError.
std::pair<std::string, int> parse_listen_address(const std::string& addr);

class ApiService {
 public:
  ApiService(std::shared_ptr<Pipeline> pipeline, ServiceConfig cfg);
  ~ApiService();
  ApiService(const ApiService&) = delete;
  ApiService& operator=(const ApiService&) = delete;

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  /// Throws IoError.
  int bind(const std::string& host, int port);
  /// Serves on the bound socket until stop(). Blocks.
  void serve();
  /// bind + serve on a background thread.
  int start(const std::string& host, int port);
  void stop();

  Pipeline& pipeline() { return *pipeline_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::shared_ptr<Pipeline> pipeline_;
};

}  // namespace laylens
