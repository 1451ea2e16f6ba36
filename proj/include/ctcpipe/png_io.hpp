#pragma once

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ctcpipe/error.hpp"
#include "ctcpipe/raster.hpp"

namespace ctc {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

inline File open_file(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) throw Error(ErrorCode::io, "cannot open " + path.string());
  return f;
}

}  // namespace detail

/// Reads an 8- or 16-bit grayscale PNG (alpha is dropped). 16-bit samples keep
/// their high byte.
inline GrayImage read_png(const std::filesystem::path& path) {
  auto file = detail::open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw Error(ErrorCode::io, path.string() + " is not a PNG file");
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::io, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(ErrorCode::io, "png_create_info_struct failed");
  }

  // State written after setjmp lives on the heap; only the pointer, fixed
  // before setjmp, is read after a longjmp.
  struct Decoded {
    std::vector<png_byte> raw;
    std::vector<png_bytep> rows;
    png_uint_32 width = 0, height = 0;
    int bit_depth = 0, color_type = 0;
    bool grayscale = true;
  };
  const auto state = std::make_unique<Decoded>();

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::io, "corrupt PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_get_IHDR(png, info, &state->width, &state->height, &state->bit_depth, &state->color_type, nullptr, nullptr,
               nullptr);
  if (state->color_type != PNG_COLOR_TYPE_GRAY && state->color_type != PNG_COLOR_TYPE_GRAY_ALPHA) {
    state->grayscale = false;
  } else {
    if (state->bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (state->color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const auto rowbytes = png_get_rowbytes(png, info);
    state->raw.resize(rowbytes * state->height);
    state->rows.resize(state->height);
    for (png_uint_32 y = 0; y < state->height; ++y) state->rows[y] = state->raw.data() + y * rowbytes;
    png_read_image(png, state->rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (!state->grayscale) throw Error(ErrorCode::io, path.string() + " is not grayscale");

  const auto width = state->width;
  const auto height = state->height;
  const auto& raw = state->raw;
  std::vector<std::uint8_t> px(static_cast<std::size_t>(width) * height);
  if (state->bit_depth == 16) {
    // Big-endian samples: the high byte comes first.
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = raw[2 * i];
  } else {
    std::copy(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(px.size()), px.begin());
  }
  return GrayImage(static_cast<int>(width), static_cast<int>(height), std::move(px));
}

inline void write_png(const std::filesystem::path& path, const GrayImage& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels().data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::io, "cannot write " + path.string() + ": " + msg);
  }
}

/// Writes 16-bit grayscale; each 8-bit value v becomes v * 257.
inline void write_png16(const std::filesystem::path& path, const GrayImage& img) {
  std::vector<png_uint_16> px(img.size());
  const auto src = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<png_uint_16>(src[i] * 257);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_LINEAR_Y;
  if (!png_image_write_to_file(&image, path.c_str(), 0, px.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::io, "cannot write " + path.string() + ": " + msg);
  }
}

}  // namespace ctc
