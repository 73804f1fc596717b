// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "duosplat/gaussian_regress.hpp"
#include "duosplat/pointmap_net.hpp"
#include "duosplat/side_enhance.hpp"

#include <nlohmann/json.hpp>

namespace duosplat {

/// Ablation switches of the inference path.
struct PipelineOptions {
    /// Use the left/right pointmaps. Off: only front and back pixels emit Gaussians.
    bool side_heads = true;
    /// Fill side images by nearest-neighbor color transfer. Off: side images are uniform gray.
    bool nns = true;

    nlohmann::json to_json() const;
    static PipelineOptions from_json(const nlohmann::json &j);
};

/// The two captured views. Masks mark the subject.
struct SubjectInput {
    RgbImage front;
    Mask front_mask;
    RgbImage back;
    Mask back_mask;

    void validate() const;
};

/// Frozen first-stage products for one subject.
struct PointStage {
    PointMapPrediction prediction;
    /// delta-scaled maps whose `valid` is the emission mask of each view.
    std::array<PointMap, 4> maps;
    /// Color input of the regressor per view: the two captures and the two pseudo-views.
    std::array<RgbImage, 4> images;
    std::array<PseudoView, 2> pseudo;
    FusedPointCloud cloud;
    Vec3 center = Vec3::Zero();
    ActivationLimits limits;

    std::size_t gaussian_count() const;
};

/// `camera` re-expressed in the camera frame of `reference`. Predicted points live in the front
/// input camera frame, so dataset cameras pass through this before rendering.
CameraModel camera_in_frame(const CameraModel &camera, const CameraModel &reference);

PointStage run_point_stage(const PointMapNet &net, const SubjectInput &input, const PipelineOptions &options);

/// Gaussians of all four views (front, back, left, right order) without gradients.
GaussianSet regress_gaussians(const GaussianRegressor &regressor, const PointStage &stage);

/// No-learning reference: prior points as isotropic Gaussians (median nearest-neighbor
/// spacing, opacity 0.95) with their pixel or transferred colors.
GaussianSet baseline_gaussians(const PointStage &stage);

} // namespace duosplat
