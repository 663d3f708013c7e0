#include "laylens/backend.hpp"

#include <map>
#include <thread>

#include "httplib.h"
#include "laylens/image.hpp"

namespace laylens {

// ---------------------------------------------------------------------------
// CancelToken
// ---------------------------------------------------------------------------

struct CancelState {
  std::mutex mu;
  std::condition_variable cv;
  bool cancelled = false;
  std::size_t next_id = 1;
  std::map<std::size_t, std::function<void()>> callbacks;
};

CancelToken::CancelToken() : state_(std::make_shared<CancelState>()) {}

void CancelToken::cancel() const {
  std::map<std::size_t, std::function<void()>> callbacks;
  {
    std::lock_guard lock(state_->mu);
    if (state_->cancelled) return;
    state_->cancelled = true;
    callbacks.swap(state_->callbacks);
  }
  state_->cv.notify_all();
  for (auto& [id, fn] : callbacks) fn();
}

bool CancelToken::cancelled() const {
  std::lock_guard lock(state_->mu);
  return state_->cancelled;
}

bool CancelToken::wait_for(Millis d) const {
  std::unique_lock lock(state_->mu);
  return state_->cv.wait_for(lock, d, [&] { return state_->cancelled; });
}

CancelToken::Registration CancelToken::on_cancel(std::function<void()> fn) const {
  {
    std::lock_guard lock(state_->mu);
    if (!state_->cancelled) {
      auto id = state_->next_id++;
      state_->callbacks.emplace(id, std::move(fn));
      return Registration(state_, id);
    }
  }
  fn();
  return {};
}

CancelToken::Registration::~Registration() {
  if (!state_) return;
  std::lock_guard lock(state_->mu);
  state_->callbacks.erase(id_);
}

// ---------------------------------------------------------------------------
// Errors / policy
// ---------------------------------------------------------------------------

std::string_view to_string(BackendErrorKind k) {
  switch (k) {
    case BackendErrorKind::kTimeout: return "timeout";
    case BackendErrorKind::kConnect: return "connect";
    case BackendErrorKind::kProtocol: return "protocol";
    case BackendErrorKind::kRejected: return "rejected";
    case BackendErrorKind::kServer: return "server";
  }
  return "unknown";
}

BackendError::BackendError(BackendErrorKind kind, int attempt_count, std::string detail)
    : Error(std::string(to_string(kind)) + " after " + std::to_string(attempt_count) +
            " attempt(s): " + detail),
      kind_(kind),
      attempt_count_(attempt_count),
      detail_(std::move(detail)) {}

Millis RetryPolicy::backoff_before(int attempt) const {
  Millis d = initial_backoff;
  for (int i = 2; i < attempt; ++i) d *= backoff_factor;
  return d;
}

bool RetryPolicy::retryable(BackendErrorKind k) {
  return k == BackendErrorKind::kTimeout || k == BackendErrorKind::kConnect ||
         k == BackendErrorKind::kServer;
}

void to_json(Json& j, const RetryPolicy& p) {
  j = Json{{"max_retries", p.max_retries},
           {"initial_backoff_ms", p.initial_backoff.count()},
           {"backoff_factor", p.backoff_factor},
           {"detect_timeout_ms", p.detect_timeout.count()},
           {"simplify_timeout_ms", p.simplify_timeout.count()},
           {"edit_timeout_ms", p.edit_timeout.count()},
           {"max_response_bytes", p.max_response_bytes}};
}

// ---------------------------------------------------------------------------
// Transports
// ---------------------------------------------------------------------------

namespace {

class InProcessTransport final : public Transport {
 public:
  InProcessTransport(Handler handler, std::string name)
      : handler_(std::move(handler)), name_(std::move(name)) {}

  WireResponse exchange(const std::string& method, const std::string& path, const std::string& body,
                        Millis timeout, std::size_t max_bytes, const CancelToken& cancel) override {
    if (cancel.cancelled()) throw CancelledError();
    // The handler runs on its own thread so a slow mock still honours the
    // per-attempt timeout and cancellation.
    struct Slot {
      std::mutex mu;
      std::condition_variable cv;
      bool done = false;
      WireResponse response;
      std::exception_ptr error;
    };
    auto slot = std::make_shared<Slot>();
    std::thread([slot, handler = handler_, method, path, body] {
      WireResponse r;
      std::exception_ptr err;
      try {
        r = handler(method, path, body);
      } catch (...) {
        err = std::current_exception();
      }
      {
        std::lock_guard lock(slot->mu);
        slot->response = std::move(r);
        slot->error = err;
        slot->done = true;
      }
      slot->cv.notify_all();
    }).detach();

    auto reg = cancel.on_cancel([slot] {
      std::lock_guard lock(slot->mu);
      slot->cv.notify_all();
    });
    std::unique_lock lock(slot->mu);
    bool finished = slot->cv.wait_for(lock, timeout, [&] { return slot->done || cancel.cancelled(); });
    if (cancel.cancelled()) throw CancelledError();
    if (!finished) throw TransportError(BackendErrorKind::kTimeout, name_ + ": timed out");
    if (slot->error) {
      try {
        std::rethrow_exception(slot->error);
      } catch (const std::exception& e) {
        throw TransportError(BackendErrorKind::kConnect, name_ + ": " + e.what());
      }
    }
    if (slot->response.body.size() > max_bytes)
      throw TransportError(BackendErrorKind::kProtocol, name_ + ": response exceeds size cap");
    return slot->response;
  }

  std::string describe() const override { return name_; }

 private:
  Handler handler_;
  std::string name_;
};

class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(const std::string& base_url) : base_url_(base_url) {
    constexpr std::string_view kScheme = "http://";
    if (base_url.rfind(kScheme, 0) != 0) throw ValidationError("backend URL must start with http://: " + base_url);
    std::string rest = base_url.substr(kScheme.size());
    auto slash = rest.find('/');
    std::string authority = rest.substr(0, slash);
    if (slash != std::string::npos) prefix_ = rest.substr(slash);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    auto colon = authority.rfind(':');
    host_ = authority.substr(0, colon);
    port_ = 80;
    if (colon != std::string::npos) {
      try {
        port_ = std::stoi(authority.substr(colon + 1));
      } catch (const std::exception&) {
        throw ValidationError("backend URL has a bad port: " + base_url);
      }
    }
    if (host_.empty() || port_ <= 0 || port_ > 65535) throw ValidationError("bad backend URL: " + base_url);
  }

  WireResponse exchange(const std::string& method, const std::string& path, const std::string& body,
                        Millis timeout, std::size_t max_bytes, const CancelToken& cancel) override {
    if (cancel.cancelled()) throw CancelledError();
    httplib::Client cli(host_, port_);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    auto reg = cancel.on_cancel([&cli] { cli.stop(); });

    httplib::Request req;
    req.method = method;
    req.path = prefix_ + path;
    if (!body.empty()) {
      req.body = body;
      req.set_header("Content-Type", "application/json");
    }
    std::string received;
    bool oversized = false;
    req.content_receiver = [&](const char* data, std::size_t len, std::uint64_t, std::uint64_t) {
      if (received.size() + len > max_bytes) {
        oversized = true;
        return false;
      }
      received.append(data, len);
      return true;
    };

    auto started = std::chrono::steady_clock::now();
    httplib::Response res;
    httplib::Error err = httplib::Error::Success;
    bool ok = cli.send(req, res, err);
    if (cancel.cancelled()) throw CancelledError();
    if (oversized) throw TransportError(BackendErrorKind::kProtocol, describe() + ": response exceeds size cap");
    if (!ok) {
      auto elapsed = std::chrono::steady_clock::now() - started;
      bool timed_out = err == httplib::Error::ConnectionTimeout ||
                       (err == httplib::Error::Read && elapsed * 10 >= timeout * 9);
      throw TransportError(timed_out ? BackendErrorKind::kTimeout : BackendErrorKind::kConnect,
                           describe() + ": " + httplib::to_string(err));
    }
    return {res.status, std::move(received)};
  }

  std::string describe() const override { return base_url_; }

 private:
  std::string base_url_;
  std::string host_;
  int port_ = 80;
  std::string prefix_;
};

}  // namespace

std::shared_ptr<Transport> make_in_process_transport(Handler handler, std::string name) {
  return std::make_shared<InProcessTransport>(std::move(handler), std::move(name));
}

std::shared_ptr<Transport> make_http_transport(const std::string& base_url) {
  return std::make_shared<HttpTransport>(base_url);
}

// ---------------------------------------------------------------------------
// Wire types
// ---------------------------------------------------------------------------

void to_json(Json& j, const DetectedRegion& v) {
  j = Json{{"label", v.label}, {"mask", v.mask}, {"bbox", v.bbox}};
}
void from_json(const Json& j, DetectedRegion& v) {
  j.at("label").get_to(v.label);
  j.at("mask").get_to(v.mask);
  j.at("bbox").get_to(v.bbox);
}

void to_json(Json& j, const DetectResponse& v) {
  j = Json{{"verdict", v.verdict},
           {"technical_explanation", v.technical_explanation},
           {"regions", v.regions}};
  if (v.confidence) j["confidence"] = *v.confidence;
}
void from_json(const Json& j, DetectResponse& v) {
  j.at("verdict").get_to(v.verdict);
  j.at("technical_explanation").get_to(v.technical_explanation);
  v.regions.clear();
  if (auto it = j.find("regions"); it != j.end() && !it->is_null()) it->get_to(v.regions);
  v.confidence.reset();
  if (auto it = j.find("confidence"); it != j.end() && !it->is_null()) v.confidence = it->get<double>();
}

void to_json(Json& j, const SimplifyRequest& v) {
  j = Json{{"image", v.image},
           {"technical_explanation", v.technical_explanation},
           {"region_labels", v.region_labels}};
}
void from_json(const Json& j, SimplifyRequest& v) {
  j.at("image").get_to(v.image);
  j.at("technical_explanation").get_to(v.technical_explanation);
  j.at("region_labels").get_to(v.region_labels);
}

void to_json(Json& j, const EditRequest& v) { j = Json{{"image", v.image}, {"instruction", v.instruction}}; }
void from_json(const Json& j, EditRequest& v) {
  j.at("image").get_to(v.image);
  j.at("instruction").get_to(v.instruction);
}

void validate_detect_response(const DetectResponse& r, int width, int height) {
  if (r.verdict == Verdict::kReal && !r.regions.empty())
    throw ValidationError("detect: verdict \"real\" with regions attached");
  if (r.verdict == Verdict::kFake && r.technical_explanation.empty())
    throw ValidationError("detect: empty technical explanation for a fake verdict");
  if (r.confidence && !(*r.confidence >= 0.0 && *r.confidence <= 1.0))
    throw ValidationError("detect: confidence outside [0,1]");
  for (const auto& region : r.regions) {
    if (region.mask.width() != width || region.mask.height() != height)
      throw ValidationError("detect: mask dimensions differ from the image");
    validate_finding(RegionFinding{region.label, region.mask, region.bbox});
  }
}

void validate_edit_request(const EditRequest& r) {
  if (r.instruction.empty()) throw ValidationError("edit: empty instruction");
  std::size_t chars = 0;
  for (char c : r.instruction)
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++chars;
  if (chars > 480) throw ValidationError("edit: instruction longer than 480 characters");
}

std::vector<RegionFinding> to_findings(const DetectResponse& r) {
  std::vector<RegionFinding> out;
  for (const auto& region : r.regions) out.push_back(RegionFinding{region.label, region.mask, region.bbox});
  return out;
}

// ---------------------------------------------------------------------------
// Calls
// ---------------------------------------------------------------------------

namespace {

struct CallResult {
  Json body;
  int attempts = 0;
};

// The body is serialized once by the caller so every attempt sends the same
// bytes.
CallResult call_with_retries(Transport& endpoint, const std::string& method, const std::string& path,
                             const std::string& body, Millis timeout, const RetryPolicy& policy,
                             const CancelToken& cancel) {
  const int max_attempts = 1 + std::max(0, policy.max_retries);
  BackendErrorKind last_kind = BackendErrorKind::kConnect;
  std::string last_detail;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    if (attempt > 1 && cancel.wait_for(policy.backoff_before(attempt))) throw CancelledError();
    if (cancel.cancelled()) throw CancelledError();

    WireResponse resp;
    try {
      resp = endpoint.exchange(method, path, body, timeout, policy.max_response_bytes, cancel);
    } catch (const TransportError& e) {
      if (!RetryPolicy::retryable(e.kind())) throw BackendError(e.kind(), attempt, e.what());
      last_kind = e.kind();
      last_detail = e.what();
      continue;
    }
    if (resp.status >= 200 && resp.status < 300) {
      Json j = Json::parse(resp.body, nullptr, false);
      if (j.is_discarded() || !j.is_object())
        throw BackendError(BackendErrorKind::kProtocol, attempt, path + ": response is not a JSON object");
      return {std::move(j), attempt};
    }
    std::string detail = path + ": HTTP " + std::to_string(resp.status);
    if (resp.status >= 400 && resp.status < 500) throw BackendError(BackendErrorKind::kRejected, attempt, detail);
    if (resp.status >= 500 && resp.status < 600) {
      last_kind = BackendErrorKind::kServer;
      last_detail = detail;
      continue;
    }
    throw BackendError(BackendErrorKind::kProtocol, attempt, detail);
  }
  throw BackendError(last_kind, max_attempts, last_detail);
}

template <class Fn>
auto as_protocol_error(int attempts, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const BackendError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(BackendErrorKind::kProtocol, attempts, e.what());
  } catch (const ValidationError& e) {
    throw BackendError(BackendErrorKind::kProtocol, attempts, e.what());
  } catch (const DecodeError& e) {
    throw BackendError(BackendErrorKind::kProtocol, attempts, e.what());
  }
}

}  // namespace

DetectResponse detect(std::span<const std::uint8_t> image, Transport& endpoint, const RetryPolicy& policy,
                      const CancelToken& cancel) {
  Raster decoded = decode_image(image);
  const std::string body = Json{{"image", base64_encode(image)}}.dump();
  auto result = call_with_retries(endpoint, "POST", "/v1/detect", body, policy.detect_timeout, policy, cancel);
  return as_protocol_error(result.attempts, [&] {
    auto r = result.body.get<DetectResponse>();
    validate_detect_response(r, decoded.width, decoded.height);
    return r;
  });
}

std::string simplify(const SimplifyRequest& req, Transport& endpoint, const RetryPolicy& policy,
                     const CancelToken& cancel) {
  if (req.technical_explanation.empty()) throw ValidationError("simplify: empty technical explanation");
  const std::string body = Json(req).dump();
  auto result = call_with_retries(endpoint, "POST", "/v1/simplify", body, policy.simplify_timeout, policy, cancel);
  return as_protocol_error(result.attempts, [&] { return result.body.at("text").get<std::string>(); });
}

Bytes edit(const EditRequest& req, Transport& endpoint, const RetryPolicy& policy, const CancelToken& cancel) {
  validate_edit_request(req);
  Raster input = decode_image(base64_decode(req.image));
  const std::string body = Json(req).dump();
  auto result = call_with_retries(endpoint, "POST", "/v1/edit", body, policy.edit_timeout, policy, cancel);
  return as_protocol_error(result.attempts, [&] {
    Bytes out = base64_decode(result.body.at("image").get<std::string>());
    Raster edited = decode_image(out);
    if (edited.width != input.width || edited.height != input.height)
      throw ValidationError("edit: returned image dimensions differ from the input");
    return out;
  });
}

bool health(Transport& endpoint, Millis timeout) {
  try {
    auto resp = endpoint.exchange("GET", "/v1/health", "", timeout, 1 << 16, CancelToken{});
    return resp.status >= 200 && resp.status < 300;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace laylens
