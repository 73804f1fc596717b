// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/geometry.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace duosplat {

RigidTransform RigidTransform::inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
}

RigidTransform RigidTransform::compose(const RigidTransform &inner) const {
    RigidTransform out;
    out.rotation = rotation * inner.rotation;
    out.translation = rotation * inner.translation + translation;
    return out;
}

void CameraModel::validate() const {
    if (width <= 0 || height <= 0) {
        throw InvalidInput("camera: image dimensions must be positive");
    }
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw InvalidInput("camera: focal lengths must be positive");
    }
    if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
        throw InvalidInput("camera: principal point must lie inside the image");
    }
    const Mat3 &r = world_to_camera.rotation;
    if (!r.allFinite() || !world_to_camera.translation.allFinite()) {
        throw InvalidInput("camera: pose must be finite");
    }
    if ((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
        std::abs(r.determinant() - 1.0) > 1e-6) {
        throw InvalidInput("camera: rotation must be orthonormal with determinant +1");
    }
}

CameraModel ring_camera(double azimuth_deg, int resolution, double radius, double focal_scale) {
    if (resolution <= 0 || !(radius > 0.0) || !(focal_scale > 0.0)) {
        throw InvalidInput("ring_camera: resolution, radius and focal scale must be positive");
    }
    const double a = azimuth_deg * std::numbers::pi / 180.0;
    // Camera-to-world rotation about the vertical (+y, pointing down) axis.
    Mat3 cam_to_world;
    cam_to_world << std::cos(a), 0.0, std::sin(a), 0.0, 1.0, 0.0, -std::sin(a), 0.0, std::cos(a);
    CameraModel cam;
    cam.width = resolution;
    cam.height = resolution;
    cam.fx = cam.fy = focal_scale * resolution;
    cam.cx = cam.cy = 0.5 * resolution;
    cam.world_to_camera.rotation = cam_to_world.transpose();
    // Camera center sits at cam_to_world * (0, 0, -radius), so t = -R * C = (0, 0, radius).
    cam.world_to_camera.translation = Vec3(0.0, 0.0, radius);
    return cam;
}

std::vector<Vec3> PointMap::valid_points() const {
    std::vector<Vec3> out;
    out.reserve(valid_count());
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (valid[i]) {
            out.push_back(points[i]);
        }
    }
    return out;
}

PointMap unproject_depth(const DepthMap &depth, const Mask &mask, const CameraModel &camera) {
    camera.validate();
    if (!depth.same_shape(mask)) {
        throw InvalidInput("unproject_depth: depth and mask dimensions differ");
    }
    if (depth.height() != camera.height || depth.width() != camera.width) {
        throw InvalidInput("unproject_depth: raster does not match camera resolution");
    }
    const RigidTransform cam_to_world = camera.world_to_camera.inverse();
    PointMap out{Grid<Vec3>(depth.height(), depth.width(), Vec3::Zero()),
                 Mask(depth.height(), depth.width(), 0)};
    for (int r = 0; r < depth.height(); ++r) {
        for (int c = 0; c < depth.width(); ++c) {
            if (!mask(r, c)) {
                continue;
            }
            const double d = depth(r, c);
            if (!(d > 0.0) || !std::isfinite(d)) {
                throw InvalidInput("unproject_depth: non-positive depth on masked pixel (" +
                                   std::to_string(r) + ", " + std::to_string(c) + ")");
            }
            const double u = c + 0.5;
            const double v = r + 0.5;
            const Vec3 p_cam((u - camera.cx) * d / camera.fx, (v - camera.cy) * d / camera.fy, d);
            out.points(r, c) = cam_to_world.apply(p_cam);
            out.valid(r, c) = 1;
        }
    }
    return out;
}

std::vector<Projection> project_points(std::span<const Vec3> points, const CameraModel &camera) {
    camera.validate();
    std::vector<Projection> out;
    out.reserve(points.size());
    for (const Vec3 &p : points) {
        const Vec3 q = camera.world_to_camera.apply(p);
        Projection proj;
        proj.depth = q.z();
        if (q.z() > 0.0) {
            proj.u = camera.fx * q.x() / q.z() + camera.cx;
            proj.v = camera.fy * q.y() / q.z() + camera.cy;
        } else {
            proj.u = proj.v = std::numeric_limits<double>::quiet_NaN();
        }
        out.push_back(proj);
    }
    return out;
}

PointMap transform_pointmap(const PointMap &map, const RigidTransform &transform) {
    PointMap out = map;
    for (std::size_t i = 0; i < out.points.size(); ++i) {
        if (out.valid[i]) {
            out.points[i] = transform.apply(out.points[i]);
        }
    }
    return out;
}

PointMap scale_pointmap(const PointMap &map, double factor) {
    PointMap out = map;
    for (std::size_t i = 0; i < out.points.size(); ++i) {
        if (out.valid[i]) {
            out.points[i] *= factor;
        }
    }
    return out;
}

FusedPointCloud fuse_pointmaps(const PointMap &front, const PointMap &back, const PointMap &left,
                               const PointMap &right, double delta) {
    if (!(delta > 0.0) || !std::isfinite(delta)) {
        throw InvalidInput("fuse_pointmaps: delta must be positive");
    }
    FusedPointCloud cloud;
    const std::array<const PointMap *, 4> maps = {&front, &back, &left, &right};
    std::size_t total = 0;
    for (const PointMap *m : maps) {
        if (!m->points.same_shape(m->valid)) {
            throw InvalidInput("fuse_pointmaps: points and validity grids differ in shape");
        }
        total += m->valid_count();
    }
    cloud.positions.reserve(total);
    cloud.sources.reserve(total);
    for (std::size_t v = 0; v < maps.size(); ++v) {
        const PointMap &m = *maps[v];
        for (int r = 0; r < m.height(); ++r) {
            for (int c = 0; c < m.width(); ++c) {
                if (!m.valid(r, c)) {
                    continue;
                }
                const Vec3 &p = m.points(r, c);
                if (!p.allFinite()) {
                    throw InvalidInput("fuse_pointmaps: valid point is not finite");
                }
                cloud.positions.push_back(delta * p);
                cloud.sources.push_back({static_cast<ViewTag>(v), r, c});
            }
        }
    }
    return cloud;
}

} // namespace duosplat
