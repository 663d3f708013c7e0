#include "laylens/image.hpp"

#include <jpeglib.h>
#include <png.h>

#include <csetjmp>
#include <cstring>

#include "laylens/error.hpp"

namespace laylens {

Raster::Raster(int w, int h, Rgba fill) : width(w), height(h) {
  if (w < 0 || h < 0) throw ValidationError("negative raster dimensions");
  pixels.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 4);
  for (std::size_t i = 0; i < pixels.size(); i += 4) std::memcpy(&pixels[i], fill.data(), 4);
}

Rgba Raster::at(int x, int y) const {
  auto i = index(x, y);
  return {pixels[i], pixels[i + 1], pixels[i + 2], pixels[i + 3]};
}

void Raster::set(int x, int y, Rgba c) { std::memcpy(&pixels[index(x, y)], c.data(), 4); }

std::optional<std::string> sniff_media_type(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) return std::string(kMediaPng);
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF)
    return std::string(kMediaJpeg);
  return std::nullopt;
}

namespace {

Raster decode_png(std::span<const std::uint8_t> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw DecodeError(std::string("png: ") + img.message);
  img.format = PNG_FORMAT_RGBA;
  if (img.width == 0 || img.height == 0 || img.width > 1u << 15 || img.height > 1u << 15) {
    png_image_free(&img);
    throw DecodeError("png: unsupported dimensions");
  }
  Raster out(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw DecodeError("png: " + msg);
  }
  return out;
}

struct JpegErrorMgr {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Raster decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo;
  JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.base);
  jerr.base.error_exit = jpeg_error_exit;
  // Declared before setjmp so longjmp never skips a destructor.
  Raster out;
  std::vector<std::uint8_t> row;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DecodeError(std::string("jpeg: ") + jerr.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  if (cinfo.output_width == 0 || cinfo.output_height == 0 || cinfo.output_width > 1u << 15 ||
      cinfo.output_height > 1u << 15) {
    jpeg_destroy_decompress(&cinfo);
    throw DecodeError("jpeg: unsupported dimensions");
  }
  out = Raster(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
  row.resize(static_cast<std::size_t>(cinfo.output_width) * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    int y = static_cast<int>(cinfo.output_scanline);
    JSAMPROW rows[1] = {row.data()};
    jpeg_read_scanlines(&cinfo, rows, 1);
    for (int x = 0; x < out.width; ++x) {
      auto i = static_cast<std::size_t>(x) * 3;
      out.set(x, y, {row[i], row[i + 1], row[i + 2], 255});
    }
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

}  // namespace

Raster decode_image(std::span<const std::uint8_t> bytes) {
  auto type = sniff_media_type(bytes);
  if (!type) throw DecodeError("not a PNG or JPEG image");
  return *type == kMediaPng ? decode_png(bytes) : decode_jpeg(bytes);
}

Bytes encode_png(const Raster& image) {
  if (image.width <= 0 || image.height <= 0) throw ValidationError("png: empty raster");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGBA;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(img, size, 0, image.pixels.data(), 0, nullptr))
    throw Error(std::string("png encode: ") + img.message);
  Bytes out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr))
    throw Error(std::string("png encode: ") + img.message);
  out.resize(size);
  return out;
}

}  // namespace laylens
