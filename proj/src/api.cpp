#include "laylens/api.hpp"

#include <future>
#include <thread>

#include <httplib.h>

#include "laylens/survey.hpp"

namespace laylens {

void ServiceConfig::validate() const {
  if (!pipeline.mock &&
      (pipeline.detector_url.empty() || pipeline.simplifier_url.empty() || pipeline.editor_url.empty()))
    throw ValidationError("either --mock or all of --detector-url, --simplifier-url, --editor-url are required");
  if (max_image_bytes == 0) throw ValidationError("max_image_bytes must be positive");
  if (max_image_bytes > kMaxBlobBytes) throw ValidationError("max_image_bytes above the 64 MiB blob limit");
  if (pipeline.max_inflight == 0) throw ValidationError("max_inflight must be >= 1");
  parse_listen_address(listen);
  if (!mock_serve.empty()) parse_listen_address(mock_serve);
}

std::pair<std::string, int> parse_listen_address(const std::string& addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0) throw ValidationError("expected host:port, got '" + addr + "'");
  std::string host = addr.substr(0, colon);
  if (host.size() > 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  int port = 0;
  try {
    std::size_t used = 0;
    port = std::stoi(addr.substr(colon + 1), &used);
    if (used != addr.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ValidationError("bad port in '" + addr + "'");
  }
  if (port < 0 || port > 65535) throw ValidationError("port out of range in '" + addr + "'");
  return {host, port};
}

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& msg) {
  send_json(res, status, Json{{"error", msg}});
}

bool accepted_image_type(std::string type) {
  if (auto semi = type.find(';'); semi != std::string::npos) type.resize(semi);
  while (!type.empty() && type.back() == ' ') type.pop_back();
  for (auto& c : type) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return type == "image/png" || type == "image/jpeg";
}

std::size_t query_size(const httplib::Request& req, const char* name, std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  const std::string v = req.get_param_value(name);
  if (v.empty() || v.size() > 9 || v.find_first_not_of("0123456789") != std::string::npos)
    throw ValidationError(std::string(name) + " must be a positive integer");
  return std::stoul(v);
}

}  // namespace

struct ApiService::Impl {
  httplib::Server server;
  ServiceConfig cfg;
  std::thread thread;
};

ApiService::ApiService(std::shared_ptr<Pipeline> pipeline, ServiceConfig cfg)
    : impl_(std::make_unique<Impl>()), pipeline_(std::move(pipeline)) {
  impl_->cfg = std::move(cfg);
  auto& srv = impl_->server;
  const ServiceConfig& conf = impl_->cfg;
  Pipeline* pl = pipeline_.get();

  // Multipart framing adds a little on top of the image itself; the exact
  // limit is enforced on the part below.
  srv.set_payload_max_length(conf.max_image_bytes + (64u << 10));

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const NotFoundError& e) {
      send_error(res, 404, e.what());
    } catch (const ValidationError& e) {
      send_error(res, 422, e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    } catch (...) {
      send_error(res, 500, "internal error");
    }
  });

  srv.set_post_routing_handler([&conf](const httplib::Request&, httplib::Response& res) {
    if (res.status == 413 && res.body.empty()) send_error(res, 413, "upload exceeds max_image_bytes");
    if (!conf.allow_origin.empty()) {
      res.set_header("Access-Control-Allow-Origin", conf.allow_origin);
      res.set_header("Vary", "Origin");
    }
  });

  if (!conf.allow_origin.empty()) {
    srv.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
      res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.set_header("Access-Control-Max-Age", "600");
    });
  }

  srv.Post("/api/v1/jobs", [pl, &conf](const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data()) return send_error(res, 400, "expected multipart/form-data");
    if (!req.has_file("image")) return send_error(res, 400, "missing multipart field \"image\"");
    const auto part = req.get_file_value("image");
    if (part.content.size() > conf.max_image_bytes) return send_error(res, 413, "upload exceeds max_image_bytes");
    if (!accepted_image_type(part.content_type))
      return send_error(res, 415, "unsupported content type '" + part.content_type + "'");
    SubmitResult r;
    try {
      r = pl->submit(std::span(reinterpret_cast<const std::uint8_t*>(part.content.data()), part.content.size()));
    } catch (const DecodeError& e) {
      return send_error(res, 422, e.what());
    }
    send_json(res, 202, Json{{"job_id", r.job_id}});
  });

  srv.Get("/api/v1/jobs", [pl](const httplib::Request& req, httplib::Response& res) {
    std::size_t page = query_size(req, "page", 1);
    std::size_t page_size = query_size(req, "page_size", 20);
    if (page_size > 200) throw ValidationError("page_size must be <= 200");
    auto jobs = pl->store().list_jobs(page, page_size);
    send_json(res, 200, Json{{"jobs", jobs}, {"page", page}, {"page_size", page_size}});
  });

  srv.Get(R"(/api/v1/jobs/([^/]+))", [pl](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, pl->get(req.matches[1]));
  });

  auto artifact = [pl](bool overlay) {
    return [pl, overlay](const httplib::Request& req, httplib::Response& res) {
      AnalysisJob job = pl->get(req.matches[1]);
      const auto& ref = overlay ? job.overlay : job.reconstruction;
      if (!ref) return send_error(res, 404, overlay ? "no overlay for this job" : "no reconstruction for this job");
      Bytes bytes = pl->store().get_blob(ref->sha256);
      res.status = 200;
      res.set_header("Cache-Control", "public, max-age=31536000, immutable");
      res.set_header("ETag", "\"" + ref->sha256 + "\"");
      res.set_content(std::string(bytes.begin(), bytes.end()), ref->media_type);
    };
  };
  srv.Get(R"(/api/v1/jobs/([^/]+)/overlay\.png)", artifact(true));
  srv.Get(R"(/api/v1/jobs/([^/]+)/reconstruction\.png)", artifact(false));

  srv.Delete(R"(/api/v1/jobs/([^/]+))", [pl](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, pl->cancel(req.matches[1]));
  });

  srv.Post("/api/v1/survey", [pl](const httplib::Request& req, httplib::Response& res) {
    Json body = Json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) return send_error(res, 400, "body must be a JSON object");
    auto resp = json_as<SurveyResponse>(body);
    validate_survey_response(resp);
    std::size_t id = pl->store().append_survey_response(Json(resp));
    send_json(res, 201, Json{{"id", id}});
  });

  srv.Get("/api/v1/survey/summary", [pl](const httplib::Request&, httplib::Response& res) {
    std::vector<SurveyResponse> responses;
    for (const auto& j : pl->store().survey_responses()) responses.push_back(json_as<SurveyResponse>(j));
    send_json(res, 200, summary_report(responses));
  });

  srv.Get("/healthz", [pl](const httplib::Request&, httplib::Response& res) {
    const Backends& b = pl->backends();
    std::pair<const char*, Transport*> roles[] = {
        {"detector", b.detector.get()}, {"simplifier", b.simplifier.get()}, {"editor", b.editor.get()}};
    // Probes run in parallel, each capped at the health timeout.
    std::vector<std::future<bool>> probes;
    for (auto& [name, t] : roles) probes.push_back(std::async(std::launch::async, [t] { return health(*t); }));
    Json backends = Json::object();
    bool all_up = true;
    for (std::size_t i = 0; i < probes.size(); ++i) {
      bool up = probes[i].get();
      all_up = all_up && up;
      backends[roles[i].first] = Json{{"reachable", up}, {"endpoint", roles[i].second->describe()}};
    }
    send_json(res, 200, Json{{"status", all_up ? "ok" : "degraded"}, {"backends", backends}});
  });

  if (!conf.static_dir.empty() && !srv.set_mount_point("/", conf.static_dir))
    throw ValidationError("static dir not found: " + conf.static_dir);
}

ApiService::~ApiService() { stop(); }

int ApiService::bind(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound <= 0) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

void ApiService::serve() { impl_->server.listen_after_bind(); }

int ApiService::start(const std::string& host, int port) {
  int bound = bind(host, port);
  impl_->thread = std::thread([this] { serve(); });
  impl_->server.wait_until_ready();
  return bound;
}

void ApiService::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace laylens
