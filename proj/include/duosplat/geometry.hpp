// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "duosplat/common.hpp"

#include <Eigen/Geometry>

#include <span>
#include <vector>

namespace duosplat {

/// Rigid transform x -> rotation * x + translation.
struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3 &p) const { return rotation * p + translation; }
    RigidTransform inverse() const;
    /// (*this) after `inner`: x -> this(inner(x)).
    RigidTransform compose(const RigidTransform &inner) const;
};

/// Pinhole camera. Right-handed, +z into the scene, +y down, image origin at the top-left
/// pixel corner; pixel (row, col) has its center at (col + 0.5, row + 0.5).
struct CameraModel {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.5;
    double cy = 0.5;
    RigidTransform world_to_camera;
    int width = 1;
    int height = 1;

    /// Throws InvalidInput when intrinsics or the rotation are degenerate.
    void validate() const;
    Vec3 center() const { return world_to_camera.inverse().translation; }
};

/// Camera on the horizontal ring around the subject (elevation 0) looking at the origin.
/// Azimuth 0 is the front view; its world-to-camera rotation is the identity.
CameraModel ring_camera(double azimuth_deg, int resolution, double radius = 2.5,
                        double focal_scale = 1.1);

/// Pixel-aligned grid of 3D points plus validity.
struct PointMap {
    Grid<Vec3> points;
    Mask valid;

    int height() const { return points.height(); }
    int width() const { return points.width(); }
    std::size_t valid_count() const { return count_true(valid); }
    /// Valid points in row-major pixel order.
    std::vector<Vec3> valid_points() const;
};

struct PointSource {
    ViewTag view = ViewTag::front;
    int row = 0;
    int col = 0;

    bool operator==(const PointSource &) const = default;
};

struct FusedPointCloud {
    std::vector<Vec3> positions;
    /// Empty until colors are attached.
    std::vector<Vec3> colors;
    std::vector<PointSource> sources;

    std::size_t size() const { return positions.size(); }
};

/// Projected pixel coordinates (u = column axis, v = row axis) and camera-frame depth.
/// Depth <= 0 flags a point at or behind the camera plane.
struct Projection {
    double u = 0.0;
    double v = 0.0;
    double depth = 0.0;
};

/// Lifts masked depth pixels to world-frame points. Pixel centers are used as sample
/// positions. Unmasked pixels come back invalid.
PointMap unproject_depth(const DepthMap &depth, const Mask &mask, const CameraModel &camera);

std::vector<Projection> project_points(std::span<const Vec3> points, const CameraModel &camera);

/// Applies `transform` to every valid point; invalid entries are left untouched.
PointMap transform_pointmap(const PointMap &map, const RigidTransform &transform);

/// Multiplies every valid point by `factor`.
PointMap scale_pointmap(const PointMap &map, double factor);

/// Concatenates valid points front -> back -> left -> right, each scaled by delta.
FusedPointCloud fuse_pointmaps(const PointMap &front, const PointMap &back, const PointMap &left,
                               const PointMap &right, double delta);

} // namespace duosplat
