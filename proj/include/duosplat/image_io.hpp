// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "duosplat/common.hpp"
#include "duosplat/geometry.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace duosplat {

/// 8-bit RGB PNG. Values are clamped to [0,1] and rounded to the nearest code.
void write_png(const std::filesystem::path &path, const RgbImage &image);
/// Reads any 8/16-bit gray/RGB(A) PNG as linear RGB in [0,1].
RgbImage read_png(const std::filesystem::path &path);

/// 1-bit grayscale PNG.
void write_mask_png(const std::filesystem::path &path, const Mask &mask);
/// Any PNG; a pixel is set when its first channel is non-zero.
Mask read_mask_png(const std::filesystem::path &path);

/// Single-channel visualisation of a scalar raster mapped from [lo, hi] to [0, 255].
void write_scalar_png(const std::filesystem::path &path, const ScalarMap &map, double lo, double hi);

// Depth raster: 4-byte magic "DF32", uint16 height, uint16 width (little-endian),
// then height*width float32 little-endian values in row-major order.
inline constexpr char kDepthMagic[4] = {'D', 'F', '3', '2'};
void write_depth(const std::filesystem::path &path, const DepthMap &depth);
DepthMap read_depth(const std::filesystem::path &path);

/// Rounds every channel to the nearest 8-bit code, matching what write_png stores.
RgbImage quantize_8bit(const RgbImage &image);

nlohmann::json camera_to_json(const CameraModel &camera);
CameraModel camera_from_json(const nlohmann::json &j);
void write_json(const std::filesystem::path &path, const nlohmann::json &j);
nlohmann::json read_json(const std::filesystem::path &path);

} // namespace duosplat
