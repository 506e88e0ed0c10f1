#include "cpnav/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "cpnav/checkpoint.hpp"
#include "cpnav/error.hpp"

namespace cpnav {

namespace {

void require_frame(const Tensor& frame) {
    if (frame.rank() != 3 || frame.dim(0) != 3) throw DimensionError("expected a (3,H,W) frame, got " + shape_str(frame.shape()));
}

std::uint8_t to_byte(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

}  // namespace

std::vector<std::uint8_t> to_rgb8(const Tensor& frame) {
    require_frame(frame);
    const int h = frame.dim(1), w = frame.dim(2);
    std::vector<std::uint8_t> out(static_cast<std::size_t>(3) * h * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                out[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_byte(frame.at(c, y, x));
    return out;
}

Tensor from_rgb8(const std::vector<std::uint8_t>& rgb, int width, int height) {
    if (rgb.size() != static_cast<std::size_t>(3) * width * height)
        throw DimensionError("rgb buffer size does not match " + std::to_string(width) + "x" + std::to_string(height));
    Tensor frame({3, height, width});
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c)
                frame.at(c, y, x) = rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c] / 255.0f;
    return frame;
}

Tensor quantize_rgb8(const Tensor& frame) { return from_rgb8(to_rgb8(frame), frame.dim(2), frame.dim(1)); }

std::string encode_ppm(const Tensor& frame) {
    require_frame(frame);
    std::string out = "P6\n" + std::to_string(frame.dim(2)) + " " + std::to_string(frame.dim(1)) + "\n255\n";
    const auto rgb = to_rgb8(frame);
    out.append(reinterpret_cast<const char*>(rgb.data()), rgb.size());
    return out;
}

Tensor decode_ppm(std::string_view bytes) {
    // header: magic, width, height, maxval separated by whitespace, then one
    // whitespace byte before the raster
    std::size_t pos = 0;
    auto skip_ws = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto token = [&] {
        skip_ws();
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        return std::string(bytes.substr(start, pos - start));
    };
    if (token() != "P6") throw FormatError("not a binary PPM (P6)");
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(token());
        h = std::stoi(token());
        maxval = std::stoi(token());
    } catch (const std::exception&) {
        throw FormatError("malformed PPM header");
    }
    if (w <= 0 || h <= 0 || maxval != 255) throw FormatError("unsupported PPM geometry or maxval");
    ++pos;
    const std::size_t need = static_cast<std::size_t>(3) * w * h;
    if (bytes.size() < pos + need) throw FormatError("truncated PPM raster");
    std::vector<std::uint8_t> rgb(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                  bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
    return from_rgb8(rgb, w, h);
}

void write_ppm(const std::filesystem::path& path, const Tensor& frame) { write_file_atomic(path, encode_ppm(frame)); }

Tensor read_ppm(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return decode_ppm(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace cpnav
