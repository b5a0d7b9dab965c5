#pragma once

#include <filesystem>
#include <vector>

#include "speechface/tensor.hpp"

namespace speechface {

// Frames travel as (H, W, C) tensors with values in [0, 1]; networks
// transpose to (C, H, W) at their boundary.

Tensor hwc_to_chw(const Tensor& img);
Tensor chw_to_hwc(const Tensor& img);

Tensor resize_bilinear(const Tensor& img_hwc, int out_h, int out_w);
void clamp01(Tensor& img);

/// 8-bit RGB PNG. Values are quantized with round(v * 255); reading maps
/// back via v / 255, so a write/read round trip moves any pixel by at most
/// 1/255. Grayscale files are expanded to three channels on read.
void write_png(const std::filesystem::path& path, const Tensor& img_hwc);
Tensor read_png(const std::filesystem::path& path);

/// Mono little-endian float32 stream, the `audio.raw` clip format.
void write_audio_raw(const std::filesystem::path& path, const std::vector<double>& samples);
std::vector<double> read_audio_raw(const std::filesystem::path& path);

}  // namespace speechface
