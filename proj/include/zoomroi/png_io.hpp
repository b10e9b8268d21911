#pragma once

#include <png.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "error.hpp"

namespace zoomroi {

/// 8-bit interleaved RGB raster, row-major.
struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;

    RgbImage() = default;
    RgbImage(std::size_t w, std::size_t h, std::uint8_t fill = 0)
        : width(w), height(h), pixels(w * h * 3, fill) {}

    std::uint8_t* at(std::size_t x, std::size_t y) { return &pixels[(y * width + x) * 3]; }
    const std::uint8_t* at(std::size_t x, std::size_t y) const {
        return &pixels[(y * width + x) * 3];
    }

    bool operator==(const RgbImage&) const = default;
};

/// Decodes any PNG libpng understands into 8-bit RGB. An alpha channel is
/// discarded without compositing.
inline RgbImage read_png(const std::filesystem::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
        throw IoError("cannot read PNG '" + path.string() + "': " + image.message);
    }
    image.format = PNG_FORMAT_RGBA;
    std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, rgba.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw IoError("cannot decode PNG '" + path.string() + "': " + msg);
    }
    RgbImage out;
    out.width = image.width;
    out.height = image.height;
    out.pixels.resize(out.width * out.height * 3);
    for (std::size_t i = 0, n = out.width * out.height; i < n; ++i) {
        out.pixels[i * 3 + 0] = rgba[i * 4 + 0];
        out.pixels[i * 3 + 1] = rgba[i * 4 + 1];
        out.pixels[i * 3 + 2] = rgba[i * 4 + 2];
    }
    return out;
}

/// Writes 8-bit RGB. No time or text chunks, so equal pixels give equal bytes.
inline void write_png(const std::filesystem::path& path, const RgbImage& img) {
    if (img.width == 0 || img.height == 0 || img.pixels.size() != img.width * img.height * 3) {
        throw InvalidArgument("write_png: inconsistent image buffer");
    }
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.pixels.data(), 0,
                                 nullptr)) {
        throw IoError("cannot write PNG '" + path.string() + "': " + image.message);
    }
}

}  // namespace zoomroi
