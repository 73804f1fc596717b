// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "duosplat/common.hpp"
#include "duosplat/geometry.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace duosplat {

enum class TexturePattern : std::uint8_t { stripes, checker, noise };

/// Smooth solid texture: color = mix(color_a, color_b, t(p)) with t in [0,1].
struct Material {
    TexturePattern pattern = TexturePattern::stripes;
    Vec3 color_a = Vec3::Constant(0.5);
    Vec3 color_b = Vec3::Constant(0.5);
    double frequency = 3.0; ///< cycles per meter
    Vec3 axis = Vec3::UnitY();
    double phase = 0.0;
    std::vector<Vec4> waves; ///< noise components: (kx, ky, kz, phase)

    Vec3 color_at(const Vec3 &p) const;
};

struct Primitive {
    enum class Kind : std::uint8_t { ellipsoid, capsule };
    Kind kind = Kind::ellipsoid;
    // Ellipsoid: center, local-to-world rotation, semi-axes.
    Vec3 center = Vec3::Zero();
    Mat3 rotation = Mat3::Identity();
    Vec3 radii = Vec3::Ones();
    // Capsule: segment endpoints and radius.
    Vec3 a = Vec3::Zero();
    Vec3 b = Vec3::Zero();
    double radius = 0.0;
    int material = 0;
    /// Material used for the half-space z > center.z + split_offset (e.g. hair on the
    /// back of the head). -1 disables the split.
    int back_material = -1;
    double split_offset = 0.0;

    static Primitive ellipsoid(const Vec3 &center, const Vec3 &radii, const Mat3 &rotation,
                               int material);
    static Primitive capsule(const Vec3 &a, const Vec3 &b, double radius, int material);
    static Primitive sphere(const Vec3 &center, double radius, int material);
};

struct SubjectConfig {
    double min_height = 1.55;
    double max_height = 1.90;
    /// Largest in-plane (abduction) limb rotation in degrees.
    double max_articulation_deg = 30.0;
    /// Largest out-of-plane (forward/back swing) limb rotation in degrees. Kept small so the
    /// front and back silhouettes stay mirror images under perspective.
    double max_swing_deg = 2.0;

    void validate() const;
    nlohmann::json to_json() const;
    static SubjectConfig from_json(const nlohmann::json &j);
};

/// Textured articulated body proxy in the world frame (+y down, the subject faces -z and
/// its bounding box is centered at the origin).
struct SubjectScene {
    std::vector<Primitive> parts;
    std::vector<Material> materials;
    double height = 0.0;
    std::uint64_t seed = 0;
};

SubjectScene make_subject(std::uint64_t seed, const SubjectConfig &config = {});

struct RayHit {
    double t = 0.0;
    Vec3 point = Vec3::Zero();
    int part = -1;
};

/// Nearest intersection along origin + t * direction, t > 0. `direction` need not be unit.
std::optional<RayHit> intersect(const SubjectScene &scene, const Vec3 &origin,
                                const Vec3 &direction);

struct ViewBundle {
    RgbImage image;
    Mask mask;
    DepthMap depth; ///< camera-frame z of the hit, 0 on background
    CameraModel camera;
    std::string view_tag;
    double azimuth_deg = 0.0;
};

struct RenderViewOptions {
    Vec3 background = Vec3::Zero();
    /// Color is averaged over supersample^2 stratified rays. Mask and depth always come
    /// from the pixel-center ray, and uncovered pixels keep the pure background color.
    int supersample = 3;
};

ViewBundle render_view(const SubjectScene &scene, const CameraModel &camera,
                       const RenderViewOptions &options = {}, std::string view_tag = "view",
                       double azimuth_deg = 0.0);

/// Name used on disk for a novel view: "novel_045" for 45 degrees.
std::string novel_view_name(double azimuth_deg);

} // namespace duosplat
