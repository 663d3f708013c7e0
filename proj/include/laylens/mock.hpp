#pragma once

// Deterministic stand-ins for the three model backends. Everything derives
// from the SHA-256 of the input; there is no RNG and no clock.

#include <array>
#include <atomic>
#include <memory>
#include <optional>
#include <string>

#include "laylens/backend.hpp"
#include "laylens/mask.hpp"

namespace laylens {

enum class FaultMode { kNone, kFenced, kProseWrapped, kTrailingCommas, kBadEmoji, kGarbage, kFlaky5xx };

std::string_view to_string(FaultMode m);

struct MockConfig {
  FaultMode fault_mode = FaultMode::kNone;
  int flaky_first_n = 0;                     // only with kFlaky5xx, must be >= 1
  std::optional<int> region_count_override;  // 1..3
  Millis latency{0};                         // test hook: delay before answering

  /// Throws ValidationError on a broken invariant.
  void validate() const;
  /// "none", "fenced", ..., "flaky_5xx:3".
  static MockConfig parse(std::string_view spec);

  bool operator==(const MockConfig&) const = default;
};

void to_json(Json& j, const MockConfig& c);

DetectResponse mock_detect(std::span<const std::uint8_t> image, const MockConfig& cfg = {});
std::string mock_simplify(const SimplifyRequest& req, const MockConfig& cfg = {});
/// Fills `mask` with the mean colour of the ring around it (radius 5), or
/// mid-grey when the ring is empty. Returns the input bytes unchanged when
/// no pixel changes.
Bytes mock_edit(std::span<const std::uint8_t> image, const BinaryMask& mask);
Raster mock_edit_raster(const Raster& image, const BinaryMask& mask);

BinaryMask union_mask(const std::vector<RegionFinding>& findings, int width, int height);

enum class BackendRole { kDetector = 0, kSimplifier = 1, kEditor = 2 };
std::string_view to_string(BackendRole r);

// The three mock roles behind the HTTP wire protocol. Call counters are
// atomic so flaky_5xx is exact under concurrency.
class MockBackends : public std::enable_shared_from_this<MockBackends> {
 public:
  MockBackends() = default;
  MockBackends(MockConfig detector, MockConfig simplifier, MockConfig editor);

  const MockConfig& config(BackendRole r) const { return configs_[static_cast<int>(r)]; }

  /// Routes one request the way the HTTP server would.
  WireResponse handle(const std::string& method, const std::string& path, const std::string& body);

  int calls(BackendRole r) const { return calls_[static_cast<int>(r)].load(); }

  std::shared_ptr<Transport> transport(BackendRole r);

 private:
  std::array<MockConfig, 3> configs_{};
  std::array<std::atomic<int>, 3> calls_{};
};

/// Serves `mocks` on host:port until stop() on the returned handle.
class MockServer {
 public:
  MockServer(std::shared_ptr<MockBackends> mocks, const std::string& host, int port);
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  int port() const { return port_; }
  std::string base_url() const;
  void stop();
  /// Blocks until stopped.
  void wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string host_;
  int port_ = 0;
};

}  // namespace laylens
