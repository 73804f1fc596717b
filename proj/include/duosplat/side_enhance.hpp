// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "duosplat/geometry.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace duosplat {

/// Exact nearest-neighbor index over a fixed reference set on a uniform grid. Ties resolve
/// to the lowest reference index. Immutable after construction; queries are thread-safe.
class NnsGrid {
  public:
    /// Throws InvalidInput for an empty or non-finite reference set.
    explicit NnsGrid(std::span<const Vec3> reference);

    std::size_t nearest(const Vec3 &query) const;
    double cell_size() const { return cell_; }
    std::size_t size() const { return points_.size(); }

  private:
    long cell_id(long x, long y, long z) const { return (z * dims_[1] + y) * dims_[0] + x; }
    std::array<long, 3> cell_of(const Vec3 &p) const;

    std::vector<Vec3> points_;
    Vec3 origin_ = Vec3::Zero();
    double cell_ = 1.0;
    std::array<long, 3> dims_ = {1, 1, 1};
    std::vector<std::uint32_t> cell_start_; ///< CSR offsets, one past the last cell
    std::vector<std::uint32_t> cell_items_; ///< reference indices, ascending within a cell
};

/// Median distance from a deterministic sample of up to `samples` points to their nearest
/// other point. Zero when the sample only has duplicates.
double median_nn_distance(std::span<const Vec3> points, std::size_t samples = 256);

/// Each side point takes the color of its nearest reference point.
std::vector<Vec3> nns_color_transfer(std::span<const Vec3> side_points, std::span<const Vec3> ref_points,
                                     std::span<const Vec3> ref_colors);

struct PseudoView {
    RgbImage image;
    Mask valid;
};

/// Writes `colors` (in the valid-pixel row-major order of `side`) back to their pixels.
PseudoView build_pseudo_view(const PointMap &side, std::span<const Vec3> colors,
                             const Vec3 &background = Vec3::Zero());

/// Colors at the valid pixels in row-major order.
std::vector<Vec3> pseudo_view_colors(const PseudoView &view);

/// Debug dump: `<stem>.png` for colors and `<stem>.mask.png` for validity.
void write_pseudo_view(const std::filesystem::path &stem, const PseudoView &view);

} // namespace duosplat
