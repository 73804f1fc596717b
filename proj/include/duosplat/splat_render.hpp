// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "duosplat/gaussian_regress.hpp"

namespace duosplat {

inline constexpr double kNearPlane = 0.01;
/// Added to every projected covariance, in px^2.
inline constexpr double kCovarianceBlur = 0.3;
inline constexpr double kMaxAlpha = 0.999;
inline constexpr double kMinTransmittance = 1e-4;
/// Splat footprint half-width in standard deviations of the major axis.
inline constexpr double kFootprintSigmas = 3.0;

struct ProjectedGaussian {
    Vec2 mean = Vec2::Zero(); ///< pixel coordinates (u, v)
    Mat2 cov = Mat2::Identity();
    double depth = 0.0;
    bool culled = true;
};

/// Rotation of a quaternion (w, x, y, z); the quaternion is normalized first.
Mat3 quat_to_rotation(const Vec4 &q);

/// EWA projection of one Gaussian. Culled when depth <= kNearPlane.
ProjectedGaussian project_gaussian(const Vec3 &mu, const Vec3 &scale, const Vec4 &quat,
                                   const CameraModel &camera);

struct RenderOutput {
    RgbImage image;
    ScalarMap alpha;
};

/// Front-to-back alpha compositing of depth-sorted splats (stable, ties by index).
/// Each pixel stops after the splat that drops transmittance below kMinTransmittance.
RenderOutput render(const GaussianSet &gaussians, const CameraModel &camera,
                    const Vec3 &background = Vec3::Zero());

/// Exact gradient of <upstream, render(...).image> with respect to every Gaussian field.
GaussianGrads render_backward(const GaussianSet &gaussians, const CameraModel &camera,
                              const Vec3 &background, const RgbImage &upstream);

} // namespace duosplat
