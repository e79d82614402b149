#pragma once

#include <string>

#include "labelforge/tensor.hpp"

namespace labelforge {

// Images are rank-3 HWC tensors with values in [0,1].

// Reads a PNG or raw tensor file, dispatching on the leading magic bytes.
Tensor read_image(const std::string& path);

// Raw tensor format: "LFIM", u32 version, u32 H, u32 W, u32 C, then H*W*C
// little-endian f32 values in [0,1].
Tensor read_lfim(const std::string& path);
void write_lfim(const std::string& path, const Tensor& image);

// 8-bit PNG; grayscale for C=1, RGB for C=3. Lossy (quantized to 8 bits).
Tensor read_png(const std::string& path);
void write_png(const std::string& path, const Tensor& image);

}  // namespace labelforge
