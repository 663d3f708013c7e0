#pragma once

// Wire contracts and retrying clients for the detector, simplifier and
// editor backends.
//
// Endpoints (relative to a backend's base URL):
//   POST /v1/detect    {"image": b64}                               -> DetectResponse
//   POST /v1/simplify  SimplifyRequest                              -> {"text": raw}
//   POST /v1/edit      EditRequest                                  -> {"image": b64}
//   GET  /v1/health                                                 -> 200

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "laylens/domain.hpp"
#include "laylens/digest.hpp"

namespace laylens {

using Millis = std::chrono::milliseconds;

// ---------------------------------------------------------------------------
// Cancellation
// ---------------------------------------------------------------------------

struct CancelState;

// Shared cancellation flag. Copies observe the same state.
class CancelToken {
 public:
  CancelToken();

  void cancel() const;
  bool cancelled() const;
  /// Sleeps up to `d`; returns true if cancelled before or during the wait.
  bool wait_for(Millis d) const;

  // Runs `fn` on cancel() (or immediately if already cancelled) until the
  // returned handle is destroyed.
  class Registration {
   public:
    Registration() = default;
    Registration(std::shared_ptr<CancelState> s, std::size_t id) : state_(std::move(s)), id_(id) {}
    Registration(Registration&&) noexcept = default;
    Registration& operator=(Registration&&) noexcept = default;
    ~Registration();

   private:
    std::shared_ptr<CancelState> state_;
    std::size_t id_ = 0;
  };
  [[nodiscard]] Registration on_cancel(std::function<void()> fn) const;

 private:
  std::shared_ptr<CancelState> state_;
};

class CancelledError : public Error {
 public:
  CancelledError() : Error("cancelled") {}
};

// ---------------------------------------------------------------------------
// Errors and policy
// ---------------------------------------------------------------------------

enum class BackendErrorKind { kTimeout, kConnect, kProtocol, kRejected, kServer };
std::string_view to_string(BackendErrorKind k);

class BackendError : public Error {
 public:
  BackendError(BackendErrorKind kind, int attempt_count, std::string detail);
  BackendErrorKind kind() const { return kind_; }
  int attempt_count() const { return attempt_count_; }
  const std::string& detail() const { return detail_; }

 private:
  BackendErrorKind kind_;
  int attempt_count_;
  std::string detail_;
};

inline constexpr std::size_t kMaxResponseBytes = 64u << 20;

struct RetryPolicy {
  int max_retries = 2;
  Millis initial_backoff{250};
  int backoff_factor = 4;
  Millis detect_timeout{120'000};
  Millis simplify_timeout{120'000};
  Millis edit_timeout{300'000};
  std::size_t max_response_bytes = kMaxResponseBytes;

  /// Delay before attempt `attempt` (2-based): 250 ms, 1000 ms, 4000 ms, ...
  Millis backoff_before(int attempt) const;
  static bool retryable(BackendErrorKind k);
};

void to_json(Json& j, const RetryPolicy& p);

// ---------------------------------------------------------------------------
// Transport
// ---------------------------------------------------------------------------

struct WireResponse {
  int status = 0;
  std::string body;
};

// Thrown by transports for failures below HTTP (kind is timeout or connect).
class TransportError : public Error {
 public:
  TransportError(BackendErrorKind kind, std::string what) : Error(std::move(what)), kind_(kind) {}
  BackendErrorKind kind() const { return kind_; }

 private:
  BackendErrorKind kind_;
};

class Transport {
 public:
  virtual ~Transport() = default;
  /// One HTTP exchange. Throws TransportError; never retries.
  virtual WireResponse exchange(const std::string& method, const std::string& path,
                                const std::string& body, Millis timeout, std::size_t max_bytes,
                                const CancelToken& cancel) = 0;
  virtual std::string describe() const = 0;
};

using Handler = std::function<WireResponse(const std::string& method, const std::string& path,
                                           const std::string& body)>;

/// Calls `handler` directly; used for the in-process mock backends.
std::shared_ptr<Transport> make_in_process_transport(Handler handler, std::string name);

/// HTTP/1.1 client for "http://host:port[/prefix]". Throws ValidationError on
/// a malformed URL.
std::shared_ptr<Transport> make_http_transport(const std::string& base_url);

// ---------------------------------------------------------------------------
// Wire types
// ---------------------------------------------------------------------------

struct DetectedRegion {
  std::string label;
  MaskRLE mask;
  BBox bbox;

  bool operator==(const DetectedRegion&) const = default;
};

struct DetectResponse {
  Verdict verdict = Verdict::kReal;
  std::optional<double> confidence;
  std::string technical_explanation;
  std::vector<DetectedRegion> regions;

  bool operator==(const DetectResponse&) const = default;
};

struct SimplifyRequest {
  std::string image;  // base64
  std::string technical_explanation;
  std::vector<std::string> region_labels;
};

struct EditRequest {
  std::string image;  // base64
  std::string instruction;
};

void to_json(Json& j, const DetectedRegion& v);
void from_json(const Json& j, DetectedRegion& v);
void to_json(Json& j, const DetectResponse& v);
void from_json(const Json& j, DetectResponse& v);
void to_json(Json& j, const SimplifyRequest& v);
void from_json(const Json& j, SimplifyRequest& v);
void to_json(Json& j, const EditRequest& v);
void from_json(const Json& j, EditRequest& v);

/// Checks the DetectResponse invariants against the submitted image size.
/// Throws ValidationError.
void validate_detect_response(const DetectResponse& r, int width, int height);
void validate_edit_request(const EditRequest& r);

std::vector<RegionFinding> to_findings(const DetectResponse& r);

// ---------------------------------------------------------------------------
// Calls
// ---------------------------------------------------------------------------

DetectResponse detect(std::span<const std::uint8_t> image, Transport& endpoint,
                      const RetryPolicy& policy, const CancelToken& cancel = {});

/// Raw simplifier text, verbatim. Throws ValidationError before any network
/// call if technical_explanation is empty.
std::string simplify(const SimplifyRequest& req, Transport& endpoint, const RetryPolicy& policy,
                     const CancelToken& cancel = {});

/// Edited image bytes, checked to decode at the input's dimensions.
Bytes edit(const EditRequest& req, Transport& endpoint, const RetryPolicy& policy,
           const CancelToken& cancel = {});

inline constexpr Millis kHealthProbeTimeout{2000};

/// Single probe, no retries.
bool health(Transport& endpoint, Millis timeout = kHealthProbeTimeout);

}  // namespace laylens
