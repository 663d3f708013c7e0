#include "laylens/mock.hpp"

#include <thread>

#include "httplib.h"
#include "laylens/image.hpp"

namespace laylens {

std::string_view to_string(FaultMode m) {
  switch (m) {
    case FaultMode::kNone: return "none";
    case FaultMode::kFenced: return "fenced";
    case FaultMode::kProseWrapped: return "prose_wrapped";
    case FaultMode::kTrailingCommas: return "trailing_commas";
    case FaultMode::kBadEmoji: return "bad_emoji";
    case FaultMode::kGarbage: return "garbage";
    case FaultMode::kFlaky5xx: return "flaky_5xx";
  }
  return "unknown";
}

void MockConfig::validate() const {
  if (fault_mode == FaultMode::kFlaky5xx && flaky_first_n < 1)
    throw ValidationError("mock: flaky_5xx needs first_n >= 1");
  if (region_count_override && (*region_count_override < 1 || *region_count_override > 3))
    throw ValidationError("mock: region_count_override must be 1..3");
}

MockConfig MockConfig::parse(std::string_view spec) {
  MockConfig cfg;
  std::string_view name = spec;
  std::string_view arg;
  if (auto sep = spec.find_first_of(":("); sep != std::string_view::npos) {
    name = spec.substr(0, sep);
    arg = spec.substr(sep + 1);
    if (!arg.empty() && arg.back() == ')') arg.remove_suffix(1);
  }
  for (auto m : {FaultMode::kNone, FaultMode::kFenced, FaultMode::kProseWrapped, FaultMode::kTrailingCommas,
                 FaultMode::kBadEmoji, FaultMode::kGarbage, FaultMode::kFlaky5xx}) {
    if (to_string(m) != name) continue;
    cfg.fault_mode = m;
    if (m == FaultMode::kFlaky5xx) {
      try {
        cfg.flaky_first_n = std::stoi(std::string(arg));
      } catch (const std::exception&) {
        throw ValidationError("mock: flaky_5xx needs a count, e.g. flaky_5xx:3");
      }
    }
    cfg.validate();
    return cfg;
  }
  throw ValidationError("mock: unknown fault mode " + std::string(spec));
}

void to_json(Json& j, const MockConfig& c) {
  j = Json{{"fault_mode", to_string(c.fault_mode)}, {"latency_ms", c.latency.count()}};
  if (c.fault_mode == FaultMode::kFlaky5xx) j["flaky_first_n"] = c.flaky_first_n;
  if (c.region_count_override) j["region_count_override"] = *c.region_count_override;
}

// ---------------------------------------------------------------------------
// Detector
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kRegionLabels[] = {"Region A", "Region B", "Region C"};

// Affine map of a digest byte onto [lo, hi].
int spread(std::uint8_t b, int lo, int hi) { return lo + (static_cast<int>(b) * (hi - lo)) / 255; }

std::string technical_template(const std::vector<DetectedRegion>& regions) {
  std::string t = "Forensic analysis indicates manipulation in " + std::to_string(regions.size()) +
                  (regions.size() == 1 ? " region." : " regions.");
  for (const auto& r : regions) {
    t += " " + r.label + " (x " + std::to_string(r.bbox.x_min) + "-" + std::to_string(r.bbox.x_max) + ", y " +
         std::to_string(r.bbox.y_min) + "-" + std::to_string(r.bbox.y_max) +
         "): lighting inconsistencies relative to the dominant light source; shadow artifacts whose "
         "direction disagrees with neighbouring objects; resolution discrepancies in local noise and "
         "sharpness compared with the surrounding image.";
  }
  return t;
}

}  // namespace

DetectResponse mock_detect(std::span<const std::uint8_t> image, const MockConfig& cfg) {
  Raster decoded = decode_image(image);
  const auto d = sha256(image);
  DetectResponse out;
  if (d[0] % 2 == 1) {
    out.verdict = Verdict::kReal;
    out.confidence = 0.5 + d[20] / 510.0;
    out.technical_explanation = "No manipulation cues were found.";
    return out;
  }
  out.verdict = Verdict::kFake;
  out.confidence = 0.5 + d[20] / 510.0;
  const int k = cfg.region_count_override.value_or(1 + d[1] % 3);
  const int w = decoded.width, h = decoded.height;
  for (int i = 0; i < k; ++i) {
    const std::uint8_t* b = &d[2 + 6 * static_cast<std::size_t>(i)];
    int rw = std::min(w, spread(b[0], 8, std::max(8, w / 3)));
    int rh = std::min(h, spread(b[1], 8, std::max(8, h / 3)));
    int x0 = spread(b[2], 0, w - rw);
    int y0 = spread(b[3], 0, h - rh);
    BinaryMask m(w, h);
    for (int y = y0; y < y0 + rh; ++y)
      for (int x = x0; x < x0 + rw; ++x) m.set(x, y);
    out.regions.push_back({kRegionLabels[i], rle_encode(m), BBox{x0, y0, x0 + rw - 1, y0 + rh - 1}});
  }
  out.technical_explanation = technical_template(out.regions);
  return out;
}

// ---------------------------------------------------------------------------
// Simplifier
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kPhrases[] = {
    "The light on this part does not match the rest of the picture.",
    "This area looks pasted in because its shadow points the wrong way.",
    "This part is blurrier than everything around it.",
    "The edges here look too sharp, like a cut-out sticker.",
    "The colours in this spot do not blend with the background.",
    "This object looks flat compared with the scene around it.",
};

constexpr const char* kEmojis[] = {
    "\xF0\x9F\x94\xA6",              // 🔦
    "\xF0\x9F\x8C\x97",              // 🌗
    "\xF0\x9F\xA7\xA9",              // 🧩
    "\xF0\x9F\xAA\x9E",              // 🪞
    "\xF0\x9F\x8E\xAD",              // 🎭
    "\xF0\x9F\x96\xBC\xEF\xB8\x8F",  // 🖼️
    "\xF0\x9F\x91\x80",              // 👀
    "\xE2\x9C\x82\xEF\xB8\x8F",      // ✂️
};

}  // namespace

std::string mock_simplify(const SimplifyRequest& req, const MockConfig& cfg) {
  Json regions = Json::array();
  for (const auto& label : req.region_labels) {
    const auto h = sha256(to_bytes(label));
    regions.push_back(Json{{"region", label},
                           {"simple_explanation", kPhrases[h[0] % std::size(kPhrases)]},
                           {"emoji", kEmojis[h[1] % std::size(kEmojis)]},
                           {"edit_instruction", "Remove the " + label + " and restore the background."}});
  }
  if (cfg.fault_mode == FaultMode::kBadEmoji && !regions.empty()) regions[0]["emoji"] = "xx";
  Json doc{{"regions", regions},
           {"overall_summary", "Parts of this picture were probably changed by a computer."}};
  std::string text = doc.dump();
  switch (cfg.fault_mode) {
    case FaultMode::kFenced:
      return "```json\n" + text + "\n```";
    case FaultMode::kProseWrapped:
      return "Sure! Here is the simplified explanation you asked for:\n" + text +
             "\nI hope this helps you understand the image.";
    case FaultMode::kTrailingCommas:
      text.insert(text.size() - 1, ",");
      return text;
    case FaultMode::kGarbage:
      return "I'm sorry, but I can't provide a structured analysis of this image right now.";
    default:
      return text;
  }
}

// ---------------------------------------------------------------------------
// Editor
// ---------------------------------------------------------------------------

BinaryMask union_mask(const std::vector<RegionFinding>& findings, int width, int height) {
  BinaryMask m(width, height);
  for (const auto& f : findings) m = mask_union(m, rle_decode(f.mask));
  return m;
}

Raster mock_edit_raster(const Raster& image, const BinaryMask& mask) {
  if (mask.width != image.width || mask.height != image.height)
    throw ValidationError("mock edit: mask dimension mismatch");
  if (mask_area(mask) == 0) throw ValidationError("mock edit: empty mask");
  BinaryMask grown = dilate(mask, 5);
  std::uint64_t sum[3] = {0, 0, 0};
  std::uint64_t count = 0;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (!grown.at(x, y) || mask.at(x, y)) continue;
      auto c = image.at(x, y);
      for (int ch = 0; ch < 3; ++ch) sum[ch] += c[ch];
      ++count;
    }
  }
  Rgba fill{128, 128, 128, 255};
  if (count > 0)
    for (int ch = 0; ch < 3; ++ch) fill[ch] = static_cast<std::uint8_t>((sum[ch] + count / 2) / count);
  Raster out = image;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (!mask.at(x, y)) continue;
      Rgba c = out.at(x, y);
      out.set(x, y, {fill[0], fill[1], fill[2], c[3]});
    }
  }
  return out;
}

Bytes mock_edit(std::span<const std::uint8_t> image, const BinaryMask& mask) {
  Raster decoded = decode_image(image);
  Raster edited = mock_edit_raster(decoded, mask);
  if (edited == decoded) return Bytes(image.begin(), image.end());
  return encode_png(edited);
}

// ---------------------------------------------------------------------------
// Wire adapter
// ---------------------------------------------------------------------------

std::string_view to_string(BackendRole r) {
  switch (r) {
    case BackendRole::kDetector: return "detector";
    case BackendRole::kSimplifier: return "simplifier";
    case BackendRole::kEditor: return "editor";
  }
  return "unknown";
}

MockBackends::MockBackends(MockConfig detector, MockConfig simplifier, MockConfig editor)
    : configs_{std::move(detector), std::move(simplifier), std::move(editor)} {
  for (const auto& c : configs_) c.validate();
}

namespace {

WireResponse json_response(int status, const Json& j) { return {status, j.dump()}; }
WireResponse error_response(int status, const std::string& msg) {
  return json_response(status, Json{{"error", msg}});
}

}  // namespace

WireResponse MockBackends::handle(const std::string& method, const std::string& path, const std::string& body) {
  if (method == "GET" && path == "/v1/health") return json_response(200, Json{{"status", "ok"}});
  if (method != "POST") return error_response(405, "method not allowed");

  BackendRole role;
  if (path == "/v1/detect") role = BackendRole::kDetector;
  else if (path == "/v1/simplify") role = BackendRole::kSimplifier;
  else if (path == "/v1/edit") role = BackendRole::kEditor;
  else return error_response(404, "no such endpoint");

  const MockConfig& cfg = config(role);
  const int n = ++calls_[static_cast<int>(role)];
  if (cfg.latency.count() > 0) std::this_thread::sleep_for(cfg.latency);
  if (cfg.fault_mode == FaultMode::kFlaky5xx && n <= cfg.flaky_first_n)
    return error_response(503, "injected failure " + std::to_string(n) + "/" + std::to_string(cfg.flaky_first_n));

  Json req = Json::parse(body, nullptr, false);
  if (req.is_discarded() || !req.is_object()) return error_response(400, "body is not a JSON object");
  try {
    switch (role) {
      case BackendRole::kDetector: {
        Bytes image = base64_decode(req.at("image").get<std::string>());
        return json_response(200, Json(mock_detect(image, config(BackendRole::kDetector))));
      }
      case BackendRole::kSimplifier: {
        auto sreq = req.get<SimplifyRequest>();
        return json_response(200, Json{{"text", mock_simplify(sreq, cfg)}});
      }
      case BackendRole::kEditor: {
        auto ereq = req.get<EditRequest>();
        validate_edit_request(ereq);
        Bytes image = base64_decode(ereq.image);
        // The edit request carries no mask; the mock re-derives it from the
        // detector, which is deterministic in the image bytes.
        auto det = mock_detect(image, config(BackendRole::kDetector));
        Raster decoded = decode_image(image);
        BinaryMask m = union_mask(to_findings(det), decoded.width, decoded.height);
        if (mask_area(m) == 0) return error_response(422, "nothing to edit");
        return json_response(200, Json{{"image", base64_encode(mock_edit(image, m))}});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    return error_response(400, e.what());
  } catch (const Error& e) {
    return error_response(422, e.what());
  }
  return error_response(500, "unreachable");
}

std::shared_ptr<Transport> MockBackends::transport(BackendRole r) {
  auto self = shared_from_this();
  return make_in_process_transport(
      [self](const std::string& m, const std::string& p, const std::string& b) { return self->handle(m, p, b); },
      "mock://" + std::string(to_string(r)));
}

// ---------------------------------------------------------------------------
// HTTP server
// ---------------------------------------------------------------------------

struct MockServer::Impl {
  httplib::Server server;
  std::thread thread;
};

MockServer::MockServer(std::shared_ptr<MockBackends> mocks, const std::string& host, int port)
    : impl_(std::make_unique<Impl>()), host_(host) {
  auto route = [mocks](const httplib::Request& req, httplib::Response& res) {
    auto r = mocks->handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  impl_->server.Get("/v1/health", route);
  impl_->server.Post(R"(/v1/(detect|simplify|edit))", route);
  impl_->server.set_payload_max_length(kMaxResponseBytes);
  if (port == 0) port_ = impl_->server.bind_to_any_port(host);
  else port_ = impl_->server.bind_to_port(host, port) ? port : -1;
  if (port_ <= 0) throw IoError("mock server: cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

MockServer::~MockServer() { stop(); }

std::string MockServer::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

void MockServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void MockServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace laylens
