#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cpnav/tensor.hpp"

namespace cpnav {

// (3, H, W) float frame in [0, 1] <-> interleaved 8-bit RGB.
std::vector<std::uint8_t> to_rgb8(const Tensor& frame);
Tensor from_rgb8(const std::vector<std::uint8_t>& rgb, int width, int height);

// Rounds every value to the nearest multiple of 1/255, i.e. what a PPM
// round trip would produce.
Tensor quantize_rgb8(const Tensor& frame);

// Binary P6, maxval 255.
std::string encode_ppm(const Tensor& frame);
Tensor decode_ppm(std::string_view bytes);

void write_ppm(const std::filesystem::path& path, const Tensor& frame);
Tensor read_ppm(const std::filesystem::path& path);

}  // namespace cpnav
