// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/side_enhance.hpp"

#include "duosplat/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace duosplat {
namespace {

constexpr long kMaxCells = 1L << 22;

} // namespace

double median_nn_distance(std::span<const Vec3> points, std::size_t samples) {
    const std::size_t n = points.size();
    if (n < 2) {
        return 0.0;
    }
    const std::size_t m = std::min(samples, n);
    std::vector<double> d;
    d.reserve(m);
    for (std::size_t s = 0; s < m; ++s) {
        const std::size_t i = s * n / m;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                best = std::min(best, (points[j] - points[i]).squaredNorm());
            }
        }
        d.push_back(std::sqrt(best));
    }
    std::nth_element(d.begin(), d.begin() + static_cast<long>(m / 2), d.end());
    return d[m / 2];
}

NnsGrid::NnsGrid(std::span<const Vec3> reference) : points_(reference.begin(), reference.end()) {
    if (points_.empty()) {
        throw InvalidInput("nearest-neighbor search needs at least one reference point");
    }
    if (points_.size() > std::numeric_limits<std::uint32_t>::max()) {
        throw InvalidInput("reference set too large");
    }
    Vec3 lo = points_.front();
    Vec3 hi = points_.front();
    for (const Vec3 &p : points_) {
        if (!p.allFinite()) {
            throw InvalidInput("reference points must be finite");
        }
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double diag = (hi - lo).norm();
    cell_ = median_nn_distance(points_);
    if (!(cell_ > 0.0)) {
        cell_ = diag > 0.0 ? diag / std::cbrt(static_cast<double>(points_.size())) : 1.0;
    }
    auto extent = [&](double c) {
        std::array<long, 3> d{};
        for (int a = 0; a < 3; ++a) {
            d[static_cast<std::size_t>(a)] = static_cast<long>(std::floor((hi[a] - lo[a]) / c)) + 1;
        }
        return d;
    };
    dims_ = extent(cell_);
    while (dims_[0] * dims_[1] * dims_[2] > kMaxCells) {
        cell_ *= 2.0;
        dims_ = extent(cell_);
    }
    origin_ = lo;

    const long cells = dims_[0] * dims_[1] * dims_[2];
    std::vector<long> ids(points_.size());
    cell_start_.assign(static_cast<std::size_t>(cells) + 1, 0);
    for (std::size_t i = 0; i < points_.size(); ++i) {
        const auto c = cell_of(points_[i]);
        ids[i] = cell_id(c[0], c[1], c[2]);
        ++cell_start_[static_cast<std::size_t>(ids[i]) + 1];
    }
    for (std::size_t c = 0; c < static_cast<std::size_t>(cells); ++c) {
        cell_start_[c + 1] += cell_start_[c];
    }
    cell_items_.resize(points_.size());
    std::vector<std::uint32_t> fill(cell_start_.begin(), cell_start_.end() - 1);
    for (std::size_t i = 0; i < points_.size(); ++i) {
        cell_items_[fill[static_cast<std::size_t>(ids[i])]++] = static_cast<std::uint32_t>(i);
    }
}

std::array<long, 3> NnsGrid::cell_of(const Vec3 &p) const {
    std::array<long, 3> c{};
    for (int a = 0; a < 3; ++a) {
        const double f = std::floor((p[a] - origin_[a]) / cell_);
        const double clamped = std::clamp(f, 0.0, static_cast<double>(dims_[static_cast<std::size_t>(a)] - 1));
        c[static_cast<std::size_t>(a)] = static_cast<long>(clamped);
    }
    return c;
}

std::size_t NnsGrid::nearest(const Vec3 &query) const {
    if (!query.allFinite()) {
        throw InvalidInput("nearest-neighbor query must be finite");
    }
    // Clamping puts far queries in a boundary cell; the lower bound below accounts for the
    // query's true distance to each shell, so exactness is kept.
    const auto qc = cell_of(query);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_index = 0;
    auto visit = [&](long x, long y, long z) {
        const long id = cell_id(x, y, z);
        const std::uint32_t end = cell_start_[static_cast<std::size_t>(id) + 1];
        for (std::uint32_t k = cell_start_[static_cast<std::size_t>(id)]; k < end; ++k) {
            const std::uint32_t i = cell_items_[k];
            const double d = (points_[i] - query).squaredNorm();
            if (d < best || (d == best && i < best_index)) {
                best = d;
                best_index = i;
            }
        }
    };
    const long max_r = std::max({dims_[0], dims_[1], dims_[2]});
    for (long r = 0; r <= max_r; ++r) {
        const long x0 = std::max(qc[0] - r, 0L), x1 = std::min(qc[0] + r, dims_[0] - 1);
        const long y0 = std::max(qc[1] - r, 0L), y1 = std::min(qc[1] + r, dims_[1] - 1);
        const long z0 = std::max(qc[2] - r, 0L), z1 = std::min(qc[2] + r, dims_[2] - 1);
        for (long z = z0; z <= z1; ++z) {
            const bool zface = std::abs(z - qc[2]) == r;
            for (long y = y0; y <= y1; ++y) {
                const bool face = zface || std::abs(y - qc[1]) == r;
                if (face) {
                    for (long x = x0; x <= x1; ++x) {
                        visit(x, y, z);
                    }
                } else {
                    if (qc[0] - r >= 0) {
                        visit(qc[0] - r, y, z);
                    }
                    if (r > 0 && qc[0] + r < dims_[0]) {
                        visit(qc[0] + r, y, z);
                    }
                }
            }
        }
        // Every cell outside the visited block lies at least this far from the query.
        double bound = std::numeric_limits<double>::infinity();
        for (int a = 0; a < 3; ++a) {
            const auto ua = static_cast<std::size_t>(a);
            const double lo_edge = origin_[a] + static_cast<double>(qc[ua] - r) * cell_;
            const double hi_edge = origin_[a] + static_cast<double>(qc[ua] + r + 1) * cell_;
            if (qc[ua] - r > 0) {
                bound = std::min(bound, query[a] - lo_edge);
            }
            if (qc[ua] + r < dims_[ua] - 1) {
                bound = std::min(bound, hi_edge - query[a]);
            }
        }
        if (bound == std::numeric_limits<double>::infinity()) {
            break;
        }
        bound = std::max(bound, 0.0) * (1.0 - 1e-9);
        if (best < bound * bound) {
            break;
        }
    }
    return best_index;
}

std::vector<Vec3> nns_color_transfer(std::span<const Vec3> side_points, std::span<const Vec3> ref_points,
                                     std::span<const Vec3> ref_colors) {
    if (ref_points.size() != ref_colors.size()) {
        throw InvalidInput("reference points and colors differ in length");
    }
    NnsGrid grid(ref_points);
    std::vector<Vec3> out;
    out.reserve(side_points.size());
    for (const Vec3 &p : side_points) {
        out.push_back(ref_colors[grid.nearest(p)]);
    }
    return out;
}

PseudoView build_pseudo_view(const PointMap &side, std::span<const Vec3> colors, const Vec3 &background) {
    if (colors.size() != side.valid_count()) {
        throw InvalidInput("pseudo view: " + std::to_string(colors.size()) + " colors for " +
                           std::to_string(side.valid_count()) + " valid pixels");
    }
    PseudoView view{RgbImage(side.height(), side.width(), background), side.valid};
    std::size_t k = 0;
    for (std::size_t i = 0; i < side.valid.size(); ++i) {
        if (side.valid[i]) {
            view.image[i] = colors[k++];
        }
    }
    return view;
}

std::vector<Vec3> pseudo_view_colors(const PseudoView &view) {
    std::vector<Vec3> out;
    for (std::size_t i = 0; i < view.valid.size(); ++i) {
        if (view.valid[i]) {
            out.push_back(view.image[i]);
        }
    }
    return out;
}

void write_pseudo_view(const std::filesystem::path &stem, const PseudoView &view) {
    write_png(stem.string() + ".png", view.image);
    write_mask_png(stem.string() + ".mask.png", view.valid);
}

} // namespace duosplat
