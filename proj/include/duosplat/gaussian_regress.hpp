// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "duosplat/geometry.hpp"
#include "duosplat/nn/layers.hpp"

#include <filesystem>
#include <nlohmann/json.hpp>

#include <span>
#include <vector>

namespace duosplat {

/// Activated Gaussians. Quaternions are (w, x, y, z).
struct GaussianSet {
    std::vector<Vec3> mu;
    std::vector<Vec3> color;
    std::vector<double> opacity;
    std::vector<Vec3> scale;
    std::vector<Vec4> quat;
    /// Provenance (view and pixel). Empty for sets that did not come from pixels.
    std::vector<PointSource> source;

    std::size_t size() const { return mu.size(); }
    void reserve(std::size_t n);
    /// Throws InvalidInput when fields have different lengths or values leave their domain.
    void validate() const;
};

/// Per-pixel unconstrained outputs, 14 x H*W: offset(3), color(3), opacity(1), scale(3),
/// quaternion(4).
struct RawGaussianOutput {
    nn::Tensor values;
    int height = 0;
    int width = 0;
};

namespace raw_channel {
inline constexpr int offset = 0;
inline constexpr int color = 3;
inline constexpr int opacity = 6;
inline constexpr int scale = 7;
inline constexpr int quat = 10;
inline constexpr int count = 14;
} // namespace raw_channel

struct ActivationLimits {
    double offset_cap = 0.02;
    double min_scale = 1e-6;
    double scale_cap = 0.05;

    /// Caps at 2% (offset) and 5% (scale) of a bounding-box diagonal.
    static ActivationLimits from_diagonal(double diagonal);
};

/// Bounding-box diagonal of the valid points of all maps.
double bbox_diagonal(std::span<const PointMap> maps);

/// mu = prior + tanh(offset) * offset_cap, sigmoid color and opacity, exp scale clamped to
/// [min_scale, scale_cap], normalized quaternion (identity when the raw norm is below 1e-8).
/// `prior` must already be in the output frame and scale. Only pixels with `valid` emit.
GaussianSet activate(const RawGaussianOutput &raw, const PointMap &prior, const Mask &valid,
                     const ActivationLimits &limits, ViewTag view = ViewTag::front);

/// Gradients with respect to each field of a GaussianSet.
struct GaussianGrads {
    std::vector<Vec3> mu;
    std::vector<Vec3> color;
    std::vector<double> opacity;
    std::vector<Vec3> scale;
    std::vector<Vec4> quat;

    static GaussianGrads zeros(std::size_t n);
    std::size_t size() const { return mu.size(); }
};

/// Pulls gradients of the activated set (in emission order) back to a 14 x H*W tensor.
nn::Tensor activate_backward(const RawGaussianOutput &raw, const Mask &valid, const ActivationLimits &limits,
                             const GaussianGrads &grads, std::size_t offset = 0);

/// Concatenation in the given order.
GaussianSet assemble(std::span<const GaussianSet> parts);

/// Splits a gradient of an assembled set back into per-part gradients. The sizes must sum to the length.
std::vector<GaussianGrads> split_grads(const GaussianGrads &grads, std::span<const std::size_t> sizes);

struct UNetConfig {
    int in_channels = 6;
    int width = 16;
    int levels = 3;
    int groups = 4;
    double init_scale = 0.015;  ///< meters
    double init_opacity = 0.7;

    void validate() const;
    nlohmann::json to_json() const;
    static UNetConfig from_json(const nlohmann::json &j);
    std::uint64_t fingerprint() const;
};

/// UNet of residual blocks shared by all four views.
class GaussianRegressor {
  public:
    explicit GaussianRegressor(const UNetConfig &config = {}, std::uint64_t seed = 0);
    GaussianRegressor(const GaussianRegressor &) = delete;
    GaussianRegressor &operator=(const GaussianRegressor &) = delete;

    const UNetConfig &config() const { return config_; }
    nn::ParameterSet &params() { return params_; }
    const nn::ParameterSet &params() const { return params_; }

    /// Input 6 x H*W on the tape (spatial layout set), output 14 x H*W.
    nn::Var forward(nn::Tape &tape, nn::Var input) const;

    /// Builds the network input: xyz relative to `center` (zero on invalid pixels) and rgb.
    static nn::Tensor make_input(const PointMap &points, const RgbImage &image, const Vec3 &center);

    /// Inference without gradients.
    RawGaussianOutput regress_view(const PointMap &points, const RgbImage &image, const Vec3 &center) const;

  private:
    struct ResBlock {
        nn::GroupNorm norm1, norm2;
        nn::Conv2d conv1, conv2;
        nn::Conv2d skip;
        bool has_skip = false;
    };
    ResBlock make_block(const std::string &name, long in, long out, std::mt19937_64 &rng);
    nn::Var run_block(nn::Tape &tape, const ResBlock &block, nn::Var x) const;

    UNetConfig config_;
    nn::ParameterSet params_;
    nn::Conv2d stem_;
    ResBlock stem_block_;
    std::vector<nn::Conv2d> down_;
    std::vector<ResBlock> down_blocks_;
    std::vector<ResBlock> up_blocks_;
    nn::Conv2d out_;
};

/// 3DGS-convention binary PLY (x y z nx ny nz f_dc_0..2 opacity scale_0..2 rot_0..3).
void write_gaussian_ply(const std::filesystem::path &path, const GaussianSet &set);
GaussianSet read_gaussian_ply(const std::filesystem::path &path);
/// Colored point cloud as ASCII PLY (x y z red green blue).
void write_point_cloud_ply(const std::filesystem::path &path, const FusedPointCloud &cloud);

} // namespace duosplat
