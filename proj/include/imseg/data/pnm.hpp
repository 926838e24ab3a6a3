#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "imseg/core/errors.hpp"

namespace imseg {

/// 8-bit interleaved RGB raster.
struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> rgb;
    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// 8-bit single-channel raster (class labels or a grayscale visualization).
struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;
    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

namespace detail {

struct PnmHeader {
    std::size_t width = 0, height = 0, maxval = 0, data_offset = 0;
};

inline PnmHeader parse_pnm_header(std::span<const std::uint8_t> bytes, const char* magic) {
    if (bytes.size() < 2 || bytes[0] != magic[0] || bytes[1] != magic[1])
        throw FormatError(std::string("expected magic ") + magic + " at byte 0");
    std::size_t pos = 2;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n')
                    ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&](const char* what) {
        skip_space();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
            throw FormatError(std::string("expected ") + what + " at byte " + std::to_string(pos));
        std::size_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 1u << 20)
                throw FormatError(std::string(what) + " too large at byte " + std::to_string(pos));
            ++pos;
        }
        return v;
    };
    PnmHeader h;
    h.width = number("width");
    h.height = number("height");
    h.maxval = number("maxval");
    if (h.width == 0 || h.height == 0)
        throw FormatError("zero image extent in header ending at byte " + std::to_string(pos));
    if (h.maxval == 0 || h.maxval > 255)
        throw FormatError("unsupported maxval " + std::to_string(h.maxval) + " at byte " + std::to_string(pos));
    if (pos >= bytes.size() || !std::isspace(bytes[pos]))
        throw FormatError("missing whitespace after header at byte " + std::to_string(pos));
    h.data_offset = pos + 1;
    return h;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, const std::string& header,
                        std::span<const std::uint8_t> body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + path.string());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
    if (!out)
        throw DataError("short write to " + path.string());
}

} // namespace detail

/// Binary PPM (P6). Samples are returned as stored; maxval must be <= 255.
inline RgbImage parse_ppm(std::span<const std::uint8_t> bytes) {
    const auto h = detail::parse_pnm_header(bytes, "P6");
    const std::size_t need = h.width * h.height * 3;
    if (bytes.size() < h.data_offset + need)
        throw FormatError("truncated P6 raster: need " + std::to_string(need) + " bytes from byte " +
                          std::to_string(h.data_offset) + ", file ends at byte " + std::to_string(bytes.size()));
    RgbImage img{h.width, h.height, {}};
    img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset),
                   bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset + need));
    return img;
}

/// Binary PGM (P5), maxval <= 255.
inline GrayImage parse_pgm(std::span<const std::uint8_t> bytes) {
    const auto h = detail::parse_pnm_header(bytes, "P5");
    const std::size_t need = h.width * h.height;
    if (bytes.size() < h.data_offset + need)
        throw FormatError("truncated P5 raster: need " + std::to_string(need) + " bytes from byte " +
                          std::to_string(h.data_offset) + ", file ends at byte " + std::to_string(bytes.size()));
    GrayImage img{h.width, h.height, {}};
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset),
                      bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset + need));
    return img;
}

inline RgbImage read_image(const std::filesystem::path& path) { return parse_ppm(detail::read_bytes(path)); }
inline GrayImage read_mask(const std::filesystem::path& path) { return parse_pgm(detail::read_bytes(path)); }

inline void write_image(const std::filesystem::path& path, const RgbImage& img) {
    if (img.rgb.size() != img.width * img.height * 3)
        throw DimensionError("write_image: raster size does not match extents");
    detail::write_bytes(path, "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n",
                        img.rgb);
}

inline void write_mask(const std::filesystem::path& path, const GrayImage& img) {
    if (img.pixels.size() != img.width * img.height)
        throw DimensionError("write_mask: raster size does not match extents");
    detail::write_bytes(path, "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n",
                        img.pixels);
}

/// Center-crops or zero-pads `img` to width×height.
inline RgbImage center_fit(const RgbImage& img, std::size_t width, std::size_t height) {
    RgbImage out{width, height, std::vector<std::uint8_t>(width * height * 3, 0)};
    const auto offset = [](std::size_t from, std::size_t to) {
        return static_cast<std::ptrdiff_t>(from / 2) - static_cast<std::ptrdiff_t>(to / 2);
    };
    const std::ptrdiff_t dy = offset(img.height, height), dx = offset(img.width, width);
    for (std::size_t i = 0; i < height; ++i) {
        const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i) + dy;
        if (si < 0 || si >= static_cast<std::ptrdiff_t>(img.height))
            continue;
        for (std::size_t j = 0; j < width; ++j) {
            const std::ptrdiff_t sj = static_cast<std::ptrdiff_t>(j) + dx;
            if (sj < 0 || sj >= static_cast<std::ptrdiff_t>(img.width))
                continue;
            const std::size_t src = (static_cast<std::size_t>(si) * img.width + static_cast<std::size_t>(sj)) * 3;
            std::copy_n(img.rgb.begin() + static_cast<std::ptrdiff_t>(src), 3,
                        out.rgb.begin() + static_cast<std::ptrdiff_t>((i * width + j) * 3));
        }
    }
    return out;
}

} // namespace imseg
