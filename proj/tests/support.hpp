#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "laylens/digest.hpp"
#include "laylens/image.hpp"

namespace testsupport {

inline std::filesystem::path fixture(const std::string& rel) {
  return std::filesystem::path(LAYLENS_FIXTURES_DIR) / rel;
}

inline laylens::Bytes read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("missing test file " + p.string());
  return laylens::Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline std::string read_text(const std::filesystem::path& p) { return laylens::to_string(read_bytes(p)); }

// Removed on destruction.
class TempDir {
 public:
  TempDir() : path_(std::filesystem::temp_directory_path() / ("laylens-test-" + laylens::random_hex(8))) {
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline laylens::Raster noise_raster(int w, int h, std::uint32_t seed) {
  std::mt19937 rng(seed);
  laylens::Raster r(w, h);
  for (auto& b : r.pixels) b = static_cast<std::uint8_t>(rng() & 0xFF);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) r.pixels[r.index(x, y) + 3] = 255;
  return r;
}

// A loopback port that was free a moment ago; nothing listens on it.
inline int free_port() {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd);
    throw std::runtime_error("cannot bind a probe socket");
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

inline laylens::Bytes png_of(const laylens::Raster& r) { return laylens::encode_png(r); }

}  // namespace testsupport
