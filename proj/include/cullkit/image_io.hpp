#pragma once

#include <png.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cullkit/silhouette.hpp"

namespace cullkit {

namespace detail {

inline void write_png_buffer(const std::string& path, int width, int height, png_uint_32 format,
                             const std::uint8_t* data)
{
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(width);
    img.height = static_cast<png_uint_32>(height);
    img.format = format;
    if (!png_image_write_to_file(&img, path.c_str(), 0, data, 0, nullptr))
        throw Error(ErrorCode::IoError, "cannot write PNG " + path + ": " + img.message);
}

inline void skip_pnm_space(std::istream& in)
{
    for (;;) {
        const int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            in.get();
        } else {
            return;
        }
    }
}

inline int read_pnm_int(std::istream& in, const std::string& path)
{
    skip_pnm_space(in);
    int v = -1;
    if (!(in >> v) || v < 0) throw Error(ErrorCode::ParseError, "bad PNM header in " + path);
    return v;
}

} // namespace detail

/// Binary PGM (P5, maxval 255) with foreground pixels at 255.
inline void write_mask_pgm(const BinaryMask& mask, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path);
    out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
    for (std::uint8_t b : mask.bits) out.put(static_cast<char>(b ? 255 : 0));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

inline BinaryMask read_mask_pgm(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5") throw Error(ErrorCode::UnsupportedFormat, path + " is not a binary PGM");
    const int w = detail::read_pnm_int(in, path), h = detail::read_pnm_int(in, path);
    const int maxval = detail::read_pnm_int(in, path);
    if (maxval != 255 || w <= 0 || h <= 0) throw Error(ErrorCode::UnsupportedFormat, path + ": expected 8-bit PGM");
    in.get();
    BinaryMask mask(w, h);
    std::vector<char> buf(mask.bits.size());
    if (!in.read(buf.data(), static_cast<std::streamsize>(buf.size())))
        throw Error(ErrorCode::ParseError, path + ": truncated pixel data");
    for (std::size_t i = 0; i < buf.size(); ++i) mask.bits[i] = buf[i] != 0 ? 1 : 0;
    return mask;
}

inline void write_patch_png(const Patch4& patch, const std::string& path)
{
    const auto rgba = patch.rgba();
    detail::write_png_buffer(path, kPatchSize, kPatchSize, PNG_FORMAT_RGBA, rgba.data());
}

/// Reads a PNG back into RGB and mask (alpha > 127) planes.
inline Patch4 read_patch_png(const std::string& path)
{
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw Error(ErrorCode::IoError, "cannot read PNG " + path + ": " + img.message);
    if (img.width != kPatchSize || img.height != kPatchSize) {
        png_image_free(&img);
        throw Error(ErrorCode::DimensionMismatch, path + " is not a " + std::to_string(kPatchSize) + "px patch");
    }
    img.format = PNG_FORMAT_RGBA;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr))
        throw Error(ErrorCode::ParseError, "cannot decode PNG " + path + ": " + img.message);
    Patch4 p;
    p.rgb.resize(static_cast<std::size_t>(kPatchSize) * kPatchSize * 3);
    p.mask.resize(static_cast<std::size_t>(kPatchSize) * kPatchSize);
    for (std::size_t i = 0; i < p.mask.size(); ++i) {
        std::memcpy(&p.rgb[3 * i], &buf[4 * i], 3);
        p.mask[i] = buf[4 * i + 3] > 127 ? 1 : 0;
    }
    p.source_bbox = {0, 0, kPatchSize - 1, kPatchSize - 1};
    return p;
}

inline void write_rgb_png(const RgbImage& im, const std::string& path)
{
    detail::write_png_buffer(path, im.width, im.height, PNG_FORMAT_RGB, im.data.data());
}

inline void write_rgb_ppm(const RgbImage& im, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path);
    out << "P6\n" << im.width << ' ' << im.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(im.data.data()), static_cast<std::streamsize>(im.data.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

/// Loads a PNG (any colour type) or binary PPM as 8-bit RGB.
inline RgbImage read_rgb_image(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (magic[0] == 'P' && magic[1] == '6') {
        const int w = detail::read_pnm_int(in, path), h = detail::read_pnm_int(in, path);
        const int maxval = detail::read_pnm_int(in, path);
        if (maxval != 255 || w <= 0 || h <= 0) throw Error(ErrorCode::UnsupportedFormat, path + ": expected 8-bit PPM");
        in.get();
        RgbImage im(w, h);
        if (!in.read(reinterpret_cast<char*>(im.data.data()), static_cast<std::streamsize>(im.data.size())))
            throw Error(ErrorCode::ParseError, path + ": truncated pixel data");
        return im;
    }
    in.close();
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw Error(ErrorCode::UnsupportedFormat, path + " is neither PNG nor binary PPM");
    img.format = PNG_FORMAT_RGB;
    RgbImage im(static_cast<int>(img.width), static_cast<int>(img.height));
    if (!png_image_finish_read(&img, nullptr, im.data.data(), 0, nullptr))
        throw Error(ErrorCode::ParseError, "cannot decode PNG " + path + ": " + img.message);
    return im;
}

} // namespace cullkit
