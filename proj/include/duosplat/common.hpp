// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace duosplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

// Error categories. The CLI maps each one to a distinct exit code.

/// Malformed arguments: shape mismatches, out-of-domain values, empty sets.
class InvalidInput : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A file could not be opened, read, written or decoded. The message names the path.
class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A configuration document violates its schema.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Checkpoint and configuration describe different networks.
class FingerprintMismatch : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Row-major H x W raster. Row 0 is the top of the image.
template <typename T>
class Grid {
  public:
    Grid() = default;
    Grid(int height, int width, const T &fill = T{})
        : height_(height), width_(width),
          data_(static_cast<std::size_t>(checked_area(height, width)), fill) {}

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T &operator()(int row, int col) { return data_[index(row, col)]; }
    const T &operator()(int row, int col) const { return data_[index(row, col)]; }
    T &operator[](std::size_t i) { return data_[i]; }
    const T &operator[](std::size_t i) const { return data_[i]; }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    template <typename U>
    bool same_shape(const Grid<U> &other) const {
        return height_ == other.height() && width_ == other.width();
    }

    bool operator==(const Grid &other) const = default;

  private:
    static long checked_area(int height, int width) {
        if (height < 0 || width < 0) {
            throw InvalidInput("grid dimensions must be non-negative");
        }
        return static_cast<long>(height) * width;
    }
    std::size_t index(int row, int col) const {
        return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(col);
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<T> data_;
};

using Mask = Grid<std::uint8_t>;
using DepthMap = Grid<double>;
using ScalarMap = Grid<double>;
/// Linear RGB, nominally in [0,1].
using RgbImage = Grid<Vec3>;

/// 64-bit FNV-1a hash.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::size_t count_true(const Mask &mask) {
    std::size_t n = 0;
    for (auto v : mask.values()) {
        n += v != 0;
    }
    return n;
}

/// The four canonical views. The numeric order is the fusion/concatenation order.
enum class ViewTag : std::uint8_t { front = 0, back = 1, left = 2, right = 3 };

inline constexpr std::array<ViewTag, 4> kCanonicalViews = {ViewTag::front, ViewTag::back,
                                                           ViewTag::left, ViewTag::right};

inline const char *to_string(ViewTag tag) {
    switch (tag) {
    case ViewTag::front: return "front";
    case ViewTag::back: return "back";
    case ViewTag::left: return "left";
    case ViewTag::right: return "right";
    }
    return "unknown";
}

/// Azimuth of a canonical view in degrees around the subject's vertical axis.
inline double canonical_azimuth(ViewTag tag) {
    switch (tag) {
    case ViewTag::front: return 0.0;
    case ViewTag::back: return 180.0;
    case ViewTag::left: return 90.0;
    case ViewTag::right: return 270.0;
    }
    return 0.0;
}

} // namespace duosplat
