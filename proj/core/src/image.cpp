#include "speechface/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace speechface {

namespace {

void check_hwc(const Tensor& img, const char* who) {
  if (img.rank() != 3) {
    throw std::invalid_argument(std::string(who) + ": expected (H, W, C) image, got " +
                                img.shape_str());
  }
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Tensor hwc_to_chw(const Tensor& img) {
  check_hwc(img, "hwc_to_chw");
  const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
  Tensor out({c, h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int k = 0; k < c; ++k) out.at(k, i, j) = img.at(i, j, k);
  return out;
}

Tensor chw_to_hwc(const Tensor& img) {
  if (img.rank() != 3) {
    throw std::invalid_argument("chw_to_hwc: expected (C, H, W), got " + img.shape_str());
  }
  const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor out({h, w, c});
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) out.at(i, j, k) = img.at(k, i, j);
  return out;
}

Tensor resize_bilinear(const Tensor& img, int out_h, int out_w) {
  check_hwc(img, "resize_bilinear");
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: empty target");
  const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
  Tensor out({out_h, out_w, c});
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (int i = 0; i < out_h; ++i) {
    const double fy = std::max(0.0, (i + 0.5) * sy - 0.5);
    const int y0 = std::min(static_cast<int>(fy), h - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int j = 0; j < out_w; ++j) {
      const double fx = std::max(0.0, (j + 0.5) * sx - 0.5);
      const int x0 = std::min(static_cast<int>(fx), w - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      for (int k = 0; k < c; ++k) {
        const double top = (1.0 - wx) * img.at(y0, x0, k) + wx * img.at(y0, x1, k);
        const double bot = (1.0 - wx) * img.at(y1, x0, k) + wx * img.at(y1, x1, k);
        out.at(i, j, k) = (1.0 - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

void clamp01(Tensor& img) {
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = std::clamp(img[i], 0.0, 1.0);
}

void write_png(const std::filesystem::path& path, const Tensor& img) {
  check_hwc(img, "write_png");
  const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
  if (c != 3) throw std::invalid_argument("write_png: expected 3 channels, got " + img.shape_str());

  FilePtr f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng write failed: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(static_cast<std::size_t>(w) * 3);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int k = 0; k < 3; ++k) {
        const double v = std::clamp(img.at(i, j, k), 0.0, 1.0);
        row[static_cast<std::size_t>(j) * 3 + static_cast<std::size_t>(k)] =
            static_cast<png_byte>(std::lround(v * 255.0));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor read_png(const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.string().c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open image: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng read failed: " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  const int h = static_cast<int>(png_get_image_height(png, info));
  const int w = static_cast<int>(png_get_image_width(png, info));
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  if (row.size() < static_cast<std::size_t>(w) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("unexpected PNG row layout: " + path.string());
  }
  Tensor img({h, w, 3});
  for (int i = 0; i < h; ++i) {
    png_read_row(png, row.data(), nullptr);
    for (int j = 0; j < w; ++j) {
      for (int k = 0; k < 3; ++k) {
        img.at(i, j, k) =
            static_cast<double>(row[static_cast<std::size_t>(j) * 3 + static_cast<std::size_t>(k)]) /
            255.0;
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_audio_raw(const std::filesystem::path& path, const std::vector<double>& samples) {
  FilePtr f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  std::vector<float> buf(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) buf[i] = static_cast<float>(samples[i]);
  if (!buf.empty() && std::fwrite(buf.data(), sizeof(float), buf.size(), f.get()) != buf.size()) {
    throw std::runtime_error("failed writing audio: " + path.string());
  }
}

std::vector<double> read_audio_raw(const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.string().c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open audio: " + path.string());
  std::fseek(f.get(), 0, SEEK_END);
  const long bytes = std::ftell(f.get());
  std::fseek(f.get(), 0, SEEK_SET);
  if (bytes < 0 || bytes % static_cast<long>(sizeof(float)) != 0) {
    throw std::runtime_error("not a float32 stream: " + path.string());
  }
  std::vector<float> buf(static_cast<std::size_t>(bytes) / sizeof(float));
  if (!buf.empty() && std::fread(buf.data(), sizeof(float), buf.size(), f.get()) != buf.size()) {
    throw std::runtime_error("failed reading audio: " + path.string());
  }
  return std::vector<double>(buf.begin(), buf.end());
}

}  // namespace speechface
