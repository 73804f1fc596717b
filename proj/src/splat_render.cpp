// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/splat_render.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace duosplat {
namespace {

void check_set(const GaussianSet &g) {
    const std::size_t n = g.mu.size();
    if (g.color.size() != n || g.opacity.size() != n || g.scale.size() != n || g.quat.size() != n) {
        throw InvalidInput("render: gaussian field lengths differ");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!g.mu[i].allFinite() || !g.color[i].allFinite() || !std::isfinite(g.opacity[i]) ||
            !g.scale[i].allFinite() || !g.quat[i].allFinite()) {
            throw InvalidInput("render: non-finite parameter at gaussian " + std::to_string(i));
        }
        if (g.quat[i].norm() == 0.0) {
            throw InvalidInput("render: zero quaternion at gaussian " + std::to_string(i));
        }
    }
}

/// Projection data of the visible splats in compositing order, plus per-pixel lists.
struct Raster {
    std::vector<std::size_t> order; ///< gaussian index of each slot
    std::vector<Vec2> mean;
    std::vector<Mat2> conic;
    std::vector<std::uint32_t> pixel_start; ///< CSR over pixels
    std::vector<std::uint32_t> pixel_items; ///< slots in compositing order
};

Raster rasterize(const GaussianSet &g, const CameraModel &cam) {
    check_set(g);
    cam.validate();
    std::vector<ProjectedGaussian> proj(g.size());
    std::vector<std::size_t> visible;
    for (std::size_t i = 0; i < g.size(); ++i) {
        proj[i] = project_gaussian(g.mu[i], g.scale[i], g.quat[i], cam);
        if (!proj[i].culled) {
            visible.push_back(i);
        }
    }
    std::stable_sort(visible.begin(), visible.end(),
                     [&](std::size_t a, std::size_t b) { return proj[a].depth < proj[b].depth; });
    Raster r;
    r.order = visible;
    const int h = cam.height;
    const int w = cam.width;
    struct Rect {
        int r0, r1, c0, c1;
    };
    std::vector<Rect> rects;
    rects.reserve(visible.size());
    std::vector<std::uint32_t> counts(static_cast<std::size_t>(h) * w + 1, 0);
    for (std::size_t s = 0; s < visible.size(); ++s) {
        const ProjectedGaussian &p = proj[visible[s]];
        r.mean.push_back(p.mean);
        r.conic.push_back(p.cov.inverse());
        const double lmax = Eigen::SelfAdjointEigenSolver<Mat2>(p.cov, Eigen::EigenvaluesOnly).eigenvalues()[1];
        const double rad = kFootprintSigmas * std::sqrt(lmax);
        Rect rc{static_cast<int>(std::max(0.0, std::ceil(p.mean.y() - rad - 0.5))),
                static_cast<int>(std::min(h - 1.0, std::floor(p.mean.y() + rad - 0.5))),
                static_cast<int>(std::max(0.0, std::ceil(p.mean.x() - rad - 0.5))),
                static_cast<int>(std::min(w - 1.0, std::floor(p.mean.x() + rad - 0.5)))};
        if (!std::isfinite(p.mean.x()) || !std::isfinite(p.mean.y()) || p.mean.y() + rad + 0.5 < 0 ||
            p.mean.x() + rad + 0.5 < 0 || p.mean.y() - rad - 0.5 > h || p.mean.x() - rad - 0.5 > w) {
            rc = {0, -1, 0, -1};
        }
        rects.push_back(rc);
        for (int y = rc.r0; y <= rc.r1; ++y) {
            for (int x = rc.c0; x <= rc.c1; ++x) {
                ++counts[static_cast<std::size_t>(y) * w + x + 1];
            }
        }
    }
    for (std::size_t k = 1; k < counts.size(); ++k) {
        counts[k] += counts[k - 1];
    }
    r.pixel_start = counts;
    r.pixel_items.resize(counts.back());
    std::vector<std::uint32_t> fill(counts.begin(), counts.end() - 1);
    for (std::size_t s = 0; s < rects.size(); ++s) {
        const Rect &rc = rects[s];
        for (int y = rc.r0; y <= rc.r1; ++y) {
            for (int x = rc.c0; x <= rc.c1; ++x) {
                r.pixel_items[fill[static_cast<std::size_t>(y) * w + x]++] = static_cast<std::uint32_t>(s);
            }
        }
    }
    return r;
}

struct Sample {
    std::uint32_t slot;
    double alpha;
    double gauss;
    double transmittance; ///< before this splat
    bool clamped;
};

/// Walks one pixel front to back. Returns the final transmittance.
double composite_pixel(const Raster &r, const GaussianSet &g, int row, int col, int width,
                       std::vector<Sample> *samples, Vec3 *color) {
    const Vec2 px(col + 0.5, row + 0.5);
    const std::size_t pix = static_cast<std::size_t>(row) * width + col;
    double t = 1.0;
    Vec3 c = Vec3::Zero();
    for (std::uint32_t k = r.pixel_start[pix]; k < r.pixel_start[pix + 1]; ++k) {
        const std::uint32_t s = r.pixel_items[k];
        const Vec2 d = px - r.mean[s];
        const double power = -0.5 * d.dot(r.conic[s] * d);
        const double gauss = std::exp(power);
        const std::size_t gi = r.order[s];
        const double raw = g.opacity[gi] * gauss;
        const bool clamped = raw > kMaxAlpha;
        const double alpha = clamped ? kMaxAlpha : raw;
        if (samples) {
            samples->push_back({s, alpha, gauss, t, clamped});
        }
        c += g.color[gi] * (alpha * t);
        t *= 1.0 - alpha;
        if (t < kMinTransmittance) {
            break;
        }
    }
    if (color) {
        *color = c;
    }
    return t;
}

} // namespace

Mat3 quat_to_rotation(const Vec4 &q) {
    const Vec4 u = q.normalized();
    const double w = u[0], x = u[1], y = u[2], z = u[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

ProjectedGaussian project_gaussian(const Vec3 &mu, const Vec3 &scale, const Vec4 &quat, const CameraModel &cam) {
    ProjectedGaussian p;
    const Mat3 &wr = cam.world_to_camera.rotation;
    const Vec3 t = cam.world_to_camera.apply(mu);
    p.depth = t.z();
    if (!(t.z() > kNearPlane)) {
        p.culled = true;
        return p;
    }
    p.culled = false;
    const Mat3 m = quat_to_rotation(quat) * scale.asDiagonal();
    const Mat3 sigma_cam = wr * (m * m.transpose()) * wr.transpose();
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx / t.z(), 0.0, -cam.fx * t.x() / (t.z() * t.z()),
         0.0, cam.fy / t.z(), -cam.fy * t.y() / (t.z() * t.z());
    p.cov = j * sigma_cam * j.transpose() + kCovarianceBlur * Mat2::Identity();
    p.cov(0, 1) = p.cov(1, 0) = 0.5 * (p.cov(0, 1) + p.cov(1, 0));
    p.mean = Vec2(cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy);
    return p;
}

RenderOutput render(const GaussianSet &g, const CameraModel &cam, const Vec3 &background) {
    const Raster r = rasterize(g, cam);
    RenderOutput out{RgbImage(cam.height, cam.width), ScalarMap(cam.height, cam.width)};
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            Vec3 c;
            const double t = composite_pixel(r, g, y, x, cam.width, nullptr, &c);
            out.image(y, x) = c + t * background;
            out.alpha(y, x) = 1.0 - t;
        }
    }
    return out;
}

GaussianGrads render_backward(const GaussianSet &g, const CameraModel &cam, const Vec3 &background,
                              const RgbImage &upstream) {
    if (upstream.height() != cam.height || upstream.width() != cam.width) {
        throw InvalidInput("render_backward: upstream gradient does not match the camera resolution");
    }
    const Raster r = rasterize(g, cam);
    const std::size_t slots = r.order.size();
    GaussianGrads out = GaussianGrads::zeros(g.size());
    std::vector<Vec2> d_mean(slots, Vec2::Zero());
    std::vector<Mat2> d_conic(slots, Mat2::Zero());
    std::vector<Sample> samples;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const Vec3 &up = upstream(y, x);
            if (up.isZero(0.0)) {
                continue;
            }
            samples.clear();
            const double t_final = composite_pixel(r, g, y, x, cam.width, &samples, nullptr);
            const Vec2 px(x + 0.5, y + 0.5);
            Vec3 behind = t_final * background;
            for (std::size_t k = samples.size(); k-- > 0;) {
                const Sample &s = samples[k];
                const std::size_t gi = r.order[s.slot];
                const Vec3 &col = g.color[gi];
                const double w = s.alpha * s.transmittance;
                out.color[gi] += up * w;
                const double d_alpha = up.dot(col * s.transmittance - behind / (1.0 - s.alpha));
                behind += col * w;
                if (s.clamped) {
                    continue;
                }
                out.opacity[gi] += d_alpha * s.gauss;
                const double d_power = d_alpha * g.opacity[gi] * s.gauss;
                const Vec2 d = px - r.mean[s.slot];
                d_mean[s.slot] += d_power * (r.conic[s.slot] * d);
                d_conic[s.slot] += -0.5 * d_power * (d * d.transpose());
            }
        }
    }

    for (std::size_t s = 0; s < slots; ++s) {
        const std::size_t gi = r.order[s];
        const Mat3 &wr = cam.world_to_camera.rotation;
        const Vec3 t = cam.world_to_camera.apply(g.mu[gi]);
        const double z = t.z();
        const double z2 = z * z;
        const Vec4 qn = g.quat[gi].normalized();
        const Mat3 rot = quat_to_rotation(qn);
        const Mat3 m = rot * g.scale[gi].asDiagonal();
        const Mat3 sigma = m * m.transpose();
        const Mat3 sigma_cam = wr * sigma * wr.transpose();
        Eigen::Matrix<double, 2, 3> j;
        j << cam.fx / z, 0.0, -cam.fx * t.x() / z2, 0.0, cam.fy / z, -cam.fy * t.y() / z2;

        const Mat2 &a = r.conic[s];
        const Mat2 d_cov = -a * d_conic[s] * a;
        const Mat3 d_sigma_cam = j.transpose() * d_cov * j;
        const Eigen::Matrix<double, 2, 3> d_j = 2.0 * d_cov * j * sigma_cam;
        const Mat3 d_sigma = wr.transpose() * d_sigma_cam * wr;
        const Mat3 d_m = 2.0 * d_sigma * m;

        Vec3 d_t = Vec3::Zero();
        const Vec2 &dm = d_mean[s];
        d_t.x() += dm.x() * cam.fx / z;
        d_t.y() += dm.y() * cam.fy / z;
        d_t.z() += -dm.x() * cam.fx * t.x() / z2 - dm.y() * cam.fy * t.y() / z2;
        d_t.z() += d_j(0, 0) * (-cam.fx / z2) + d_j(1, 1) * (-cam.fy / z2);
        d_t.x() += d_j(0, 2) * (-cam.fx / z2);
        d_t.y() += d_j(1, 2) * (-cam.fy / z2);
        d_t.z() += d_j(0, 2) * (2.0 * cam.fx * t.x() / (z2 * z)) + d_j(1, 2) * (2.0 * cam.fy * t.y() / (z2 * z));
        out.mu[gi] += wr.transpose() * d_t;

        for (int k = 0; k < 3; ++k) {
            out.scale[gi][k] += rot.col(k).dot(d_m.col(k));
        }
        const Mat3 gr = d_m * g.scale[gi].asDiagonal();
        const double w = qn[0], x = qn[1], y = qn[2], zq = qn[3];
        Vec4 du;
        du[0] = 2 * (-zq * gr(0, 1) + y * gr(0, 2) + zq * gr(1, 0) - x * gr(1, 2) - y * gr(2, 0) + x * gr(2, 1));
        du[1] = 2 * (y * gr(0, 1) + zq * gr(0, 2) + y * gr(1, 0) - 2 * x * gr(1, 1) - w * gr(1, 2) + zq * gr(2, 0) +
                     w * gr(2, 1) - 2 * x * gr(2, 2));
        du[2] = 2 * (-2 * y * gr(0, 0) + x * gr(0, 1) + w * gr(0, 2) + x * gr(1, 0) + zq * gr(1, 2) - w * gr(2, 0) +
                     zq * gr(2, 1) - 2 * y * gr(2, 2));
        du[3] = 2 * (-2 * zq * gr(0, 0) - w * gr(0, 1) + x * gr(0, 2) + w * gr(1, 0) - 2 * zq * gr(1, 1) +
                     y * gr(1, 2) + x * gr(2, 0) + y * gr(2, 1));
        out.quat[gi] += (du - qn * qn.dot(du)) / g.quat[gi].norm();
    }
    return out;
}

} // namespace duosplat
