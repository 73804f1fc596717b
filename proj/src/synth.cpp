// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/synth.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace duosplat {
namespace {

constexpr double kPi = std::numbers::pi;

double deg(double d) { return d * kPi / 180.0; }

Mat3 axis_angle(const Vec3 &axis, double angle) {
    return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

// Smallest positive root of a*t^2 + 2*b*t + c = 0, if any.
std::optional<double> nearest_root(double a, double b, double c) {
    const double disc = b * b - a * c;
    if (disc < 0.0 || a <= 0.0) {
        return std::nullopt;
    }
    const double s = std::sqrt(disc);
    const double t0 = (-b - s) / a;
    if (t0 > 1e-9) {
        return t0;
    }
    const double t1 = (-b + s) / a;
    if (t1 > 1e-9) {
        return t1;
    }
    return std::nullopt;
}

std::optional<double> intersect_ellipsoid(const Primitive &p, const Vec3 &o, const Vec3 &d) {
    const Vec3 lo = (p.rotation.transpose() * (o - p.center)).cwiseQuotient(p.radii);
    const Vec3 ld = (p.rotation.transpose() * d).cwiseQuotient(p.radii);
    return nearest_root(ld.dot(ld), lo.dot(ld), lo.dot(lo) - 1.0);
}

std::optional<double> intersect_sphere(const Vec3 &center, double radius, const Vec3 &o,
                                       const Vec3 &d) {
    const Vec3 oc = o - center;
    return nearest_root(d.dot(d), oc.dot(d), oc.dot(oc) - radius * radius);
}

std::optional<double> intersect_capsule(const Primitive &p, const Vec3 &o, const Vec3 &d) {
    // Infinite cylinder clipped to the segment, plus the two end caps.
    const Vec3 ba = p.b - p.a;
    const Vec3 oa = o - p.a;
    const double baba = ba.dot(ba);
    std::optional<double> best;
    auto consider = [&](std::optional<double> t) {
        if (t && (!best || *t < *best)) {
            best = t;
        }
    };
    if (baba > 0.0) {
        const double bard = ba.dot(d);
        const double baoa = ba.dot(oa);
        const double a = baba * d.dot(d) - bard * bard;
        const double b = baba * oa.dot(d) - baoa * bard;
        const double c = baba * oa.dot(oa) - baoa * baoa - p.radius * p.radius * baba;
        const double disc = b * b - a * c;
        if (a > 0.0 && disc >= 0.0) {
            const double s = std::sqrt(disc);
            for (double t : {(-b - s) / a, (-b + s) / a}) {
                const double y = baoa + t * bard;
                if (t > 1e-9 && y > 0.0 && y < baba) {
                    consider(t);
                }
            }
        }
    }
    consider(intersect_sphere(p.a, p.radius, o, d));
    consider(intersect_sphere(p.b, p.radius, o, d));
    return best;
}

Vec3 random_color(std::mt19937_64 &rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    return Vec3(u(rng), u(rng), u(rng));
}

Material random_material(std::mt19937_64 &rng, const Vec3 &base, double contrast) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Material m;
    const int kind = static_cast<int>(u01(rng) * 3.0);
    m.pattern = static_cast<TexturePattern>(std::min(kind, 2));
    m.color_a = base;
    const Vec3 shift = (random_color(rng, -1.0, 1.0)).normalized() * contrast;
    m.color_b = (base + shift).cwiseMax(0.05).cwiseMin(0.95);
    m.frequency = 2.0 + 3.0 * u01(rng);
    m.axis = Vec3(u01(rng) - 0.5, 1.0, u01(rng) - 0.5).normalized();
    m.phase = 2.0 * kPi * u01(rng);
    for (int i = 0; i < 3; ++i) {
        const Vec3 k = random_color(rng, -1.0, 1.0).normalized() * 2.0 * kPi *
                       (1.5 + 3.0 * u01(rng));
        m.waves.emplace_back(k.x(), k.y(), k.z(), 2.0 * kPi * u01(rng));
    }
    return m;
}

} // namespace

Vec3 Material::color_at(const Vec3 &p) const {
    double t = 0.5;
    switch (pattern) {
    case TexturePattern::stripes:
        t = 0.5 + 0.5 * std::sin(2.0 * kPi * frequency * p.dot(axis) + phase);
        break;
    case TexturePattern::checker:
        t = 0.5 + 0.5 * std::sin(2.0 * kPi * frequency * p.x() + phase) *
                      std::sin(2.0 * kPi * frequency * p.y());
        break;
    case TexturePattern::noise: {
        double acc = 0.0;
        for (const Vec4 &w : waves) {
            acc += std::sin(w.head<3>().dot(p) + w[3]);
        }
        t = waves.empty() ? 0.5 : 0.5 + 0.5 * acc / static_cast<double>(waves.size());
        break;
    }
    }
    t = std::clamp(t, 0.0, 1.0);
    return ((1.0 - t) * color_a + t * color_b).cwiseMax(0.0).cwiseMin(1.0);
}

Primitive Primitive::ellipsoid(const Vec3 &center, const Vec3 &radii, const Mat3 &rotation,
                               int material) {
    Primitive p;
    p.kind = Kind::ellipsoid;
    p.center = center;
    p.radii = radii;
    p.rotation = rotation;
    p.material = material;
    return p;
}

Primitive Primitive::capsule(const Vec3 &a, const Vec3 &b, double radius, int material) {
    Primitive p;
    p.kind = Kind::capsule;
    p.a = a;
    p.b = b;
    p.center = 0.5 * (a + b);
    p.radius = radius;
    p.material = material;
    return p;
}

Primitive Primitive::sphere(const Vec3 &center, double radius, int material) {
    return ellipsoid(center, Vec3::Constant(radius), Mat3::Identity(), material);
}

void SubjectConfig::validate() const {
    if (!(min_height >= 1.4) || !(max_height <= 2.0) || !(min_height <= max_height)) {
        throw InvalidInput("subject config: height range must lie within [1.4, 2.0] m");
    }
    if (!(max_articulation_deg >= 0.0 && max_articulation_deg <= 30.0) ||
        !(max_swing_deg >= 0.0 && max_swing_deg <= 30.0)) {
        throw InvalidInput("subject config: limb rotations are limited to 30 degrees");
    }
}

nlohmann::json SubjectConfig::to_json() const {
    return {{"min_height", min_height},
            {"max_height", max_height},
            {"max_articulation_deg", max_articulation_deg},
            {"max_swing_deg", max_swing_deg}};
}

SubjectConfig SubjectConfig::from_json(const nlohmann::json &j) {
    SubjectConfig c;
    c.min_height = j.value("min_height", c.min_height);
    c.max_height = j.value("max_height", c.max_height);
    c.max_articulation_deg = j.value("max_articulation_deg", c.max_articulation_deg);
    c.max_swing_deg = j.value("max_swing_deg", c.max_swing_deg);
    c.validate();
    return c;
}

SubjectScene make_subject(std::uint64_t seed, const SubjectConfig &config) {
    config.validate();
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + 0x632BE59BD9B4E019ull);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto jitter = [&](double spread) { return 1.0 + spread * (2.0 * u01(rng) - 1.0); };

    SubjectScene scene;
    scene.seed = seed;
    const double h = config.min_height + (config.max_height - config.min_height) * u01(rng);
    scene.height = h;

    // Materials: skin, hair, shirt, pants, shoes.
    const Vec3 skin = Vec3(0.80, 0.62, 0.50).cwiseProduct(Vec3::Constant(jitter(0.15)));
    scene.materials.push_back(random_material(rng, skin, 0.08));
    scene.materials.push_back(random_material(rng, random_color(rng, 0.05, 0.35), 0.10));
    scene.materials.push_back(random_material(rng, random_color(rng, 0.2, 0.85), 0.35));
    scene.materials.push_back(random_material(rng, random_color(rng, 0.1, 0.6), 0.25));
    scene.materials.push_back(random_material(rng, random_color(rng, 0.05, 0.4), 0.10));
    enum { kSkin = 0, kHair = 1, kShirt = 2, kPants = 3, kShoes = 4 };

    const double top = -0.5 * h; // +y is down; the feet end near +h/2
    const double width = jitter(0.10);
    const double bulk = jitter(0.10);
    const double max_abduction = deg(config.max_articulation_deg);
    const double max_swing = deg(config.max_swing_deg);
    auto swing = [&]() { return max_swing * (2.0 * u01(rng) - 1.0); };

    // Head with hair on the back half.
    const Vec3 head_c(0.0, top + 0.068 * h, 0.0);
    Primitive head = Primitive::ellipsoid(head_c, Vec3(0.056, 0.068, 0.062) * h * jitter(0.05),
                                          Mat3::Identity(), kSkin);
    head.back_material = kHair;
    head.split_offset = -0.01 * h;
    scene.parts.push_back(head);
    scene.parts.push_back(Primitive::capsule(Vec3(0.0, top + 0.125 * h, 0.0),
                                             Vec3(0.0, top + 0.17 * h, 0.0), 0.026 * h, kSkin));
    // Torso and pelvis.
    scene.parts.push_back(Primitive::ellipsoid(Vec3(0.0, top + 0.31 * h, 0.0),
                                               Vec3(0.115 * width, 0.165, 0.068 * bulk) * h,
                                               Mat3::Identity(), kShirt));
    scene.parts.push_back(Primitive::ellipsoid(Vec3(0.0, top + 0.48 * h, 0.0),
                                               Vec3(0.105 * width, 0.065, 0.064 * bulk) * h,
                                               Mat3::Identity(), kPants));

    // Shoulder girdle joining both arms to the torso.
    const double shoulder_x = 0.125 * width * h;
    scene.parts.push_back(Primitive::capsule(Vec3(-shoulder_x, top + 0.195 * h, 0.0),
                                             Vec3(shoulder_x, top + 0.195 * h, 0.0),
                                             0.036 * h * bulk, kShirt));

    // Arms: shoulder -> elbow -> wrist, abducted in the image plane with a small swing.
    for (int side : {-1, 1}) {
        const Vec3 shoulder(side * shoulder_x, top + 0.195 * h, 0.0);
        const double abduct = deg(8.0) + (max_abduction - deg(8.0)) * u01(rng);
        const Mat3 upper_rot = axis_angle(Vec3::UnitX(), swing()) *
                               axis_angle(Vec3::UnitZ(), -side * abduct);
        const Vec3 elbow = shoulder + upper_rot * Vec3(0.0, 0.175 * h * jitter(0.05), 0.0);
        const double bend = deg(15.0) * u01(rng);
        const Mat3 fore_rot = axis_angle(Vec3::UnitX(), swing()) *
                              axis_angle(Vec3::UnitZ(), -side * bend) * upper_rot;
        const Vec3 wrist = elbow + fore_rot * Vec3(0.0, 0.155 * h * jitter(0.05), 0.0);
        scene.parts.push_back(Primitive::capsule(shoulder, elbow, 0.03 * h * bulk, kShirt));
        scene.parts.push_back(Primitive::capsule(elbow, wrist, 0.025 * h * bulk, kSkin));
        scene.parts.push_back(Primitive::sphere(wrist + fore_rot * Vec3(0.0, 0.035 * h, 0.0),
                                                0.03 * h, kSkin));
    }

    // Legs: hip -> knee -> ankle, slightly spread.
    for (int side : {-1, 1}) {
        const Vec3 hip(side * 0.058 * width * h, top + 0.50 * h, 0.0);
        const double spread = deg(2.0) + deg(6.0) * u01(rng);
        const Mat3 rot = axis_angle(Vec3::UnitX(), 0.5 * swing()) *
                         axis_angle(Vec3::UnitZ(), -side * spread);
        const Vec3 knee = hip + rot * Vec3(0.0, 0.235 * h, 0.0);
        const Vec3 ankle = knee + rot * Vec3(0.0, 0.215 * h, 0.0);
        scene.parts.push_back(Primitive::capsule(hip, knee, 0.045 * h * bulk, kPants));
        scene.parts.push_back(Primitive::capsule(knee, ankle, 0.035 * h * bulk, kPants));
        scene.parts.push_back(Primitive::ellipsoid(ankle + Vec3(0.0, 0.025 * h, 0.0),
                                                   Vec3(0.035, 0.025, 0.05) * h, Mat3::Identity(),
                                                   kShoes));
    }

    // Normalize: exact height and a bounding box centered at the origin. The vertical extent
    // follows from head top and shoe bottoms; rescale every primitive about the origin.
    double y_min = 1e9;
    double y_max = -1e9;
    for (const Primitive &p : scene.parts) {
        if (p.kind == Primitive::Kind::ellipsoid) {
            const Mat3 m = p.rotation * p.radii.asDiagonal();
            const double ext = m.row(1).norm();
            y_min = std::min(y_min, p.center.y() - ext);
            y_max = std::max(y_max, p.center.y() + ext);
        } else {
            y_min = std::min({y_min, p.a.y() - p.radius, p.b.y() - p.radius});
            y_max = std::max({y_max, p.a.y() + p.radius, p.b.y() + p.radius});
        }
    }
    const double s = h / (y_max - y_min);
    const double mid = 0.5 * (y_min + y_max);
    for (Primitive &p : scene.parts) {
        auto remap = [&](const Vec3 &v) { return Vec3(v.x() * s, (v.y() - mid) * s, v.z() * s); };
        p.center = remap(p.center);
        p.a = remap(p.a);
        p.b = remap(p.b);
        p.radii *= s;
        p.radius *= s;
        p.split_offset *= s;
    }
    return scene;
}

std::optional<RayHit> intersect(const SubjectScene &scene, const Vec3 &origin,
                                const Vec3 &direction) {
    std::optional<RayHit> best;
    for (std::size_t i = 0; i < scene.parts.size(); ++i) {
        const Primitive &p = scene.parts[i];
        const std::optional<double> t = p.kind == Primitive::Kind::ellipsoid
                                            ? intersect_ellipsoid(p, origin, direction)
                                            : intersect_capsule(p, origin, direction);
        if (t && (!best || *t < best->t)) {
            best = RayHit{*t, origin + *t * direction, static_cast<int>(i)};
        }
    }
    return best;
}

namespace {

Vec3 shade(const SubjectScene &scene, const RayHit &hit) {
    const Primitive &p = scene.parts[static_cast<std::size_t>(hit.part)];
    int material = p.material;
    if (p.back_material >= 0 && hit.point.z() > p.center.z() + p.split_offset) {
        material = p.back_material;
    }
    return scene.materials[static_cast<std::size_t>(material)].color_at(hit.point);
}

} // namespace

ViewBundle render_view(const SubjectScene &scene, const CameraModel &camera,
                       const RenderViewOptions &options, std::string view_tag,
                       double azimuth_deg) {
    camera.validate();
    if (options.supersample < 1) {
        throw InvalidInput("render_view: supersample must be >= 1");
    }
    ViewBundle out;
    out.camera = camera;
    out.view_tag = std::move(view_tag);
    out.azimuth_deg = azimuth_deg;
    out.image = RgbImage(camera.height, camera.width, options.background);
    out.mask = Mask(camera.height, camera.width, 0);
    out.depth = DepthMap(camera.height, camera.width, 0.0);

    const Mat3 cam_to_world = camera.world_to_camera.rotation.transpose();
    const Vec3 origin = camera.center();
    auto ray_dir = [&](double u, double v) {
        return Vec3(cam_to_world *
                    Vec3((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0));
    };
    const int ss = options.supersample;
    for (int r = 0; r < camera.height; ++r) {
        for (int c = 0; c < camera.width; ++c) {
            const std::optional<RayHit> center = intersect(scene, origin, ray_dir(c + 0.5, r + 0.5));
            if (!center) {
                continue;
            }
            // With the unnormalized direction (camera-frame z component 1), t is the depth.
            out.depth(r, c) = center->t;
            out.mask(r, c) = 1;
            if (ss == 1) {
                out.image(r, c) = shade(scene, *center);
                continue;
            }
            Vec3 acc = Vec3::Zero();
            for (int i = 0; i < ss; ++i) {
                for (int j = 0; j < ss; ++j) {
                    const double u = c + (j + 0.5) / ss;
                    const double v = r + (i + 0.5) / ss;
                    const std::optional<RayHit> hit = intersect(scene, origin, ray_dir(u, v));
                    acc += hit ? shade(scene, *hit) : options.background;
                }
            }
            out.image(r, c) = acc / static_cast<double>(ss * ss);
        }
    }
    return out;
}

std::string novel_view_name(double azimuth_deg) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "novel_%03ld", std::lround(azimuth_deg));
    return buf;
}

} // namespace duosplat
