#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scaf/tensor.hpp"

namespace scaf {

// 8-bit interleaved raster, channels = 1 (gray) or 3 (RGB)
struct ImageU8 {
    int width = 0, height = 0, channels = 0;
    std::vector<uint8_t> pixels;

    uint8_t at(int y, int x, int c = 0) const {
        return pixels[((size_t)y * width + x) * channels + c];
    }
    uint8_t& at(int y, int x, int c = 0) {
        return pixels[((size_t)y * width + x) * channels + c];
    }
};

ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);

// in-memory JPEG encode + decode at the given quality (1..100); used as the
// compression-degradation proxy in the robustness harness
ImageU8 jpeg_roundtrip(const ImageU8& rgb, int quality);

// {C,H,W} in [0,1] <-> interleaved u8
Tensor image_to_tensor(const ImageU8& img);
ImageU8 tensor_to_image(const Tensor& t);

} // namespace scaf
