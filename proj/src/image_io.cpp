// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace duosplat {
namespace {

struct FileCloser {
    void operator()(std::FILE *f) const {
        if (f) {
            std::fclose(f);
        }
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path &path, const char *mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    return f;
}

std::uint8_t to_code(double v) {
    if (!std::isfinite(v)) {
        v = 0.0;
    }
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Writes rows of 8-bit samples; `bit_depth` 1 packs gray samples MSB-first.
void write_png_rows(const std::filesystem::path &path, int width, int height, int color_type,
                    int bit_depth, const std::vector<std::vector<std::uint8_t>> &rows) {
    FilePtr f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) {
        throw IoError("libpng: cannot create write struct for '" + path.string() + "'");
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng: cannot create info struct for '" + path.string() + "'");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng: failed writing '" + path.string() + "'");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (const auto &row : rows) {
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fflush(f.get()) != 0) {
        throw IoError("cannot flush '" + path.string() + "'");
    }
}

struct DecodedPng {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;
};

DecodedPng decode_png(const std::filesystem::path &path) {
    FilePtr f = open_file(path, "rb");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw IoError("'" + path.string() + "' is not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) {
        throw IoError("libpng: cannot create read struct for '" + path.string() + "'");
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng: cannot create info struct for '" + path.string() + "'");
    }
    DecodedPng out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng: corrupt PNG '" + path.string() + "'");
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (bit_depth == 16) {
        png_set_strip_16(png);
    }
    png_read_update_info(png, info);
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    out.pixels.resize(stride * static_cast<std::size_t>(out.height));
    std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
    for (int r = 0; r < out.height; ++r) {
        rows[static_cast<std::size_t>(r)] = out.pixels.data() + stride * static_cast<std::size_t>(r);
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

template <typename T>
void write_le(std::ostream &os, T value) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
    os.write(reinterpret_cast<const char *>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream &is, const std::filesystem::path &path) {
    T value{};
    is.read(reinterpret_cast<char *>(&value), sizeof(T));
    if (!is) {
        throw IoError("truncated file '" + path.string() + "'");
    }
    return value;
}

} // namespace

void write_png(const std::filesystem::path &path, const RgbImage &image) {
    std::vector<std::vector<std::uint8_t>> rows(static_cast<std::size_t>(image.height()));
    for (int r = 0; r < image.height(); ++r) {
        auto &row = rows[static_cast<std::size_t>(r)];
        row.resize(static_cast<std::size_t>(image.width()) * 3);
        for (int c = 0; c < image.width(); ++c) {
            for (int k = 0; k < 3; ++k) {
                row[static_cast<std::size_t>(c * 3 + k)] = to_code(image(r, c)[k]);
            }
        }
    }
    write_png_rows(path, image.width(), image.height(), PNG_COLOR_TYPE_RGB, 8, rows);
}

RgbImage read_png(const std::filesystem::path &path) {
    const DecodedPng png = decode_png(path);
    RgbImage image(png.height, png.width, Vec3::Zero());
    const std::size_t stride = static_cast<std::size_t>(png.width) * png.channels;
    for (int r = 0; r < png.height; ++r) {
        for (int c = 0; c < png.width; ++c) {
            const std::uint8_t *px = png.pixels.data() + static_cast<std::size_t>(r) * stride +
                                     static_cast<std::size_t>(c) * png.channels;
            if (png.channels >= 3) {
                image(r, c) = Vec3(px[0], px[1], px[2]) / 255.0;
            } else {
                image(r, c) = Vec3::Constant(px[0] / 255.0);
            }
        }
    }
    return image;
}

void write_mask_png(const std::filesystem::path &path, const Mask &mask) {
    std::vector<std::vector<std::uint8_t>> rows(static_cast<std::size_t>(mask.height()));
    for (int r = 0; r < mask.height(); ++r) {
        auto &row = rows[static_cast<std::size_t>(r)];
        row.assign(static_cast<std::size_t>((mask.width() + 7) / 8), 0);
        for (int c = 0; c < mask.width(); ++c) {
            if (mask(r, c)) {
                row[static_cast<std::size_t>(c / 8)] |= static_cast<std::uint8_t>(0x80u >> (c % 8));
            }
        }
    }
    write_png_rows(path, mask.width(), mask.height(), PNG_COLOR_TYPE_GRAY, 1, rows);
}

Mask read_mask_png(const std::filesystem::path &path) {
    const DecodedPng png = decode_png(path);
    Mask mask(png.height, png.width, 0);
    const std::size_t stride = static_cast<std::size_t>(png.width) * png.channels;
    for (int r = 0; r < png.height; ++r) {
        for (int c = 0; c < png.width; ++c) {
            mask(r, c) = png.pixels[static_cast<std::size_t>(r) * stride +
                                    static_cast<std::size_t>(c) * png.channels] != 0;
        }
    }
    return mask;
}

void write_scalar_png(const std::filesystem::path &path, const ScalarMap &map, double lo,
                      double hi) {
    std::vector<std::vector<std::uint8_t>> rows(static_cast<std::size_t>(map.height()));
    const double span = hi > lo ? hi - lo : 1.0;
    for (int r = 0; r < map.height(); ++r) {
        auto &row = rows[static_cast<std::size_t>(r)];
        row.resize(static_cast<std::size_t>(map.width()));
        for (int c = 0; c < map.width(); ++c) {
            row[static_cast<std::size_t>(c)] = to_code((map(r, c) - lo) / span);
        }
    }
    write_png_rows(path, map.width(), map.height(), PNG_COLOR_TYPE_GRAY, 8, rows);
}

void write_depth(const std::filesystem::path &path, const DepthMap &depth) {
    if (depth.height() > 0xFFFF || depth.width() > 0xFFFF) {
        throw InvalidInput("write_depth: raster too large for the 16-bit header");
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    os.write(kDepthMagic, 4);
    write_le<std::uint16_t>(os, static_cast<std::uint16_t>(depth.height()));
    write_le<std::uint16_t>(os, static_cast<std::uint16_t>(depth.width()));
    for (double d : depth.values()) {
        write_le<float>(os, static_cast<float>(d));
    }
    if (!os) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

DepthMap read_depth(const std::filesystem::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kDepthMagic, 4) != 0) {
        throw IoError("'" + path.string() + "' is not a depth raster");
    }
    const int h = read_le<std::uint16_t>(is, path);
    const int w = read_le<std::uint16_t>(is, path);
    DepthMap depth(h, w, 0.0);
    for (double &d : depth.values()) {
        d = static_cast<double>(read_le<float>(is, path));
    }
    return depth;
}

RgbImage quantize_8bit(const RgbImage &image) {
    RgbImage out = image;
    for (Vec3 &px : out.values()) {
        for (int k = 0; k < 3; ++k) {
            px[k] = to_code(px[k]) / 255.0;
        }
    }
    return out;
}

nlohmann::json camera_to_json(const CameraModel &camera) {
    nlohmann::json j;
    j["fx"] = camera.fx;
    j["fy"] = camera.fy;
    j["cx"] = camera.cx;
    j["cy"] = camera.cy;
    j["width"] = camera.width;
    j["height"] = camera.height;
    std::vector<double> rot;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            rot.push_back(camera.world_to_camera.rotation(r, c));
        }
    }
    j["rotation"] = rot;
    const Vec3 &t = camera.world_to_camera.translation;
    j["translation"] = {t.x(), t.y(), t.z()};
    return j;
}

CameraModel camera_from_json(const nlohmann::json &j) {
    try {
        CameraModel cam;
        cam.fx = j.at("fx").get<double>();
        cam.fy = j.at("fy").get<double>();
        cam.cx = j.at("cx").get<double>();
        cam.cy = j.at("cy").get<double>();
        cam.width = j.at("width").get<int>();
        cam.height = j.at("height").get<int>();
        const auto rot = j.at("rotation").get<std::vector<double>>();
        const auto t = j.at("translation").get<std::vector<double>>();
        if (rot.size() != 9 || t.size() != 3) {
            throw ConfigError("camera: rotation needs 9 values and translation 3");
        }
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                cam.world_to_camera.rotation(r, c) = rot[static_cast<std::size_t>(r * 3 + c)];
            }
        }
        cam.world_to_camera.translation = Vec3(t[0], t[1], t[2]);
        cam.validate();
        return cam;
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("camera: ") + e.what());
    } catch (const InvalidInput &e) {
        throw ConfigError(e.what());
    }
}

void write_json(const std::filesystem::path &path, const nlohmann::json &j) {
    std::ofstream os(path);
    if (!os) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    os << j.dump(2) << '\n';
    if (!os) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

nlohmann::json read_json(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error &e) {
        throw ConfigError("'" + path.string() + "': " + e.what());
    }
}

} // namespace duosplat
