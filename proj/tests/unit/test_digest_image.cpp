#include <doctest.h>

#include "laylens/digest.hpp"
#include "laylens/error.hpp"
#include "laylens/image.hpp"
#include "support.hpp"

using namespace laylens;

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex(std::string_view("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256(to_bytes("abc")).size() == 32);
}

TEST_CASE("base64") {
  CHECK(base64_encode(to_bytes("Man")) == "TWFu");
  CHECK(base64_encode(to_bytes("Ma")) == "TWE=");
  CHECK(base64_encode(to_bytes("")) == "");
  CHECK(to_string(base64_decode("TWE=")) == "Ma");
  CHECK_THROWS_AS(base64_decode("T!E="), ValidationError);
  CHECK_THROWS_AS(base64_decode("TWE"), ValidationError);

  std::mt19937 rng(3);
  for (int n = 0; n < 200; ++n) {
    Bytes b(static_cast<std::size_t>(n));
    for (auto& x : b) x = static_cast<std::uint8_t>(rng());
    CHECK(base64_decode(base64_encode(b)) == b);
  }
}

TEST_CASE("random_hex and is_lower_hex") {
  auto h = random_hex(16);
  CHECK(h.size() == 32);
  CHECK(is_lower_hex(h, 32));
  CHECK_FALSE(is_lower_hex("ABCDEF", 6));
  CHECK_FALSE(is_lower_hex("abc", 4));
  CHECK(random_hex(16) != h);
}

TEST_CASE("png roundtrip is lossless and deterministic") {
  auto r = testsupport::noise_raster(37, 23, 1);
  r.pixels[r.index(5, 5) + 3] = 17;  // non-opaque pixel survives too
  Bytes png = encode_png(r);
  CHECK(sniff_media_type(png) == std::optional<std::string>("image/png"));
  CHECK(decode_image(png) == r);
  CHECK(encode_png(r) == png);
}

TEST_CASE("decode fixtures") {
  auto jpg = testsupport::read_bytes(testsupport::fixture("sample.jpg"));
  CHECK(sniff_media_type(jpg) == std::optional<std::string>("image/jpeg"));
  Raster r = decode_image(jpg);
  CHECK(r.width == 64);
  CHECK(r.height == 48);
  CHECK(r.at(0, 0)[3] == 255);

  auto text = testsupport::read_bytes(testsupport::fixture("not_an_image.png"));
  CHECK_FALSE(sniff_media_type(text).has_value());
  CHECK_THROWS_AS(decode_image(text), DecodeError);

  // Truncated PNG: right magic, broken body.
  auto png = testsupport::read_bytes(testsupport::fixture("two_tone.png"));
  png.resize(png.size() / 2);
  CHECK_THROWS_AS(decode_image(png), DecodeError);
}
