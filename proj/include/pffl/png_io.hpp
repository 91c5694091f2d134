#pragma once

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "pffl/errors.hpp"
#include "pffl/image.hpp"

namespace pffl {

// 8-bit grayscale and RGB PNGs only; values map linearly to [0,1].
// libpng reports errors by longjmp, so all libpng state lives on the heap in
// a context owned by a unique_ptr declared before the setjmp point; the error
// branch throws and unwinding runs the context destructor.

namespace detail {

struct PngCtx {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* fp = nullptr;
  bool writing = false;
  std::vector<unsigned char> buf;
  std::vector<png_bytep> rows;

  ~PngCtx() {
    if (png) {
      if (writing)
        png_destroy_write_struct(&png, info ? &info : nullptr);
      else
        png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
    if (fp) std::fclose(fp);
  }
};

inline void png_quiet_error(png_structp png, png_const_charp) { png_longjmp(png, 1); }
inline void png_quiet_warning(png_structp, png_const_charp) {}

}  // namespace detail

inline Image load_png(const std::string& path) {
  auto ctx = std::make_unique<detail::PngCtx>();
  ctx->fp = std::fopen(path.c_str(), "rb");
  if (!ctx->fp) {
    if (!std::filesystem::exists(path)) throw FileNotFoundError("no such file: " + path);
    throw IoError("cannot open: " + path);
  }

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, ctx->fp) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw UnsupportedPngError("not a PNG file: " + path);

  ctx->png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                    detail::png_quiet_error, detail::png_quiet_warning);
  if (!ctx->png) throw IoError("png reader allocation failed");
  ctx->info = png_create_info_struct(ctx->png);
  if (!ctx->info) throw IoError("png info allocation failed");

  if (setjmp(png_jmpbuf(ctx->png))) throw IoError("png decode failed: " + path);

  png_init_io(ctx->png, ctx->fp);
  png_set_sig_bytes(ctx->png, 8);
  png_read_info(ctx->png, ctx->info);

  const png_uint_32 w = png_get_image_width(ctx->png, ctx->info);
  const png_uint_32 h = png_get_image_height(ctx->png, ctx->info);
  const int depth = png_get_bit_depth(ctx->png, ctx->info);
  const int color = png_get_color_type(ctx->png, ctx->info);

  if (depth != 8)
    throw UnsupportedPngError("only 8-bit PNGs supported, got depth " +
                              std::to_string(depth));
  int channels;
  if (color == PNG_COLOR_TYPE_GRAY)
    channels = 1;
  else if (color == PNG_COLOR_TYPE_RGB)
    channels = 3;
  else
    throw UnsupportedPngError("only grayscale/RGB PNGs supported, got color type " +
                              std::to_string(color));
  if (w == 0 || h == 0 || w > (1u << 20) || h > (1u << 20))
    throw DimensionOverflowError("png dims out of range");

  png_set_interlace_handling(ctx->png);
  png_read_update_info(ctx->png, ctx->info);

  const std::size_t stride = static_cast<std::size_t>(w) * channels;
  ctx->buf.resize(stride * h);
  ctx->rows.resize(h);
  for (png_uint_32 i = 0; i < h; ++i) ctx->rows[i] = ctx->buf.data() + i * stride;
  png_read_image(ctx->png, ctx->rows.data());
  png_read_end(ctx->png, nullptr);

  Image img(channels, static_cast<int>(h), static_cast<int>(w));
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (int c = 0; c < channels; ++c)
        img.data[c * plane + i * w + j] =
            static_cast<float>(ctx->buf[i * stride + j * channels + c]) / 255.0f;
  return img;
}

// Clamps to [0,1] and quantizes to 8-bit (round to nearest).
inline void save_png(const Image& img, const std::string& path) {
  img.validate();
  auto ctx = std::make_unique<detail::PngCtx>();
  ctx->writing = true;
  ctx->fp = std::fopen(path.c_str(), "wb");
  if (!ctx->fp) throw IoError("cannot open for writing: " + path);

  ctx->png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                     detail::png_quiet_error, detail::png_quiet_warning);
  if (!ctx->png) throw IoError("png writer allocation failed");
  ctx->info = png_create_info_struct(ctx->png);
  if (!ctx->info) throw IoError("png info allocation failed");

  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
  ctx->buf.resize(stride * img.height);
  ctx->rows.resize(img.height);
  for (int i = 0; i < img.height; ++i) {
    ctx->rows[i] = ctx->buf.data() + static_cast<std::size_t>(i) * stride;
    for (int j = 0; j < img.width; ++j)
      for (int c = 0; c < img.channels; ++c) {
        float v = img.data[c * plane + static_cast<std::size_t>(i) * img.width + j];
        v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        ctx->buf[i * stride + j * img.channels + c] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
  }

  if (setjmp(png_jmpbuf(ctx->png))) throw IoError("png encode failed: " + path);

  png_init_io(ctx->png, ctx->fp);
  png_set_IHDR(ctx->png, ctx->info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx->png, ctx->info);
  png_write_image(ctx->png, ctx->rows.data());
  png_write_end(ctx->png, nullptr);

  if (std::fclose(ctx->fp) != 0) {
    ctx->fp = nullptr;
    throw IoError("short write: " + path);
  }
  ctx->fp = nullptr;
}

}  // namespace pffl
