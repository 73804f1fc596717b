// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/gaussian_regress.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace duosplat {

namespace ops = nn::ops;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

constexpr double kSh0 = 0.28209479177387814;
constexpr double kQuatFloor = 1e-8;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

} // namespace

void GaussianSet::reserve(std::size_t n) {
    mu.reserve(n);
    color.reserve(n);
    opacity.reserve(n);
    scale.reserve(n);
    quat.reserve(n);
    source.reserve(n);
}

void GaussianSet::validate() const {
    const std::size_t n = mu.size();
    if (color.size() != n || opacity.size() != n || scale.size() != n || quat.size() != n ||
        (!source.empty() && source.size() != n)) {
        throw InvalidInput("gaussian set: field lengths differ");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!mu[i].allFinite() || !color[i].allFinite() || !std::isfinite(opacity[i]) ||
            !scale[i].allFinite() || !quat[i].allFinite()) {
            throw InvalidInput("gaussian set: non-finite parameter at index " + std::to_string(i));
        }
        if (opacity[i] < 0.0 || opacity[i] > 1.0 || color[i].minCoeff() < 0.0 || color[i].maxCoeff() > 1.0) {
            throw InvalidInput("gaussian set: color or opacity outside [0, 1] at index " + std::to_string(i));
        }
        if (scale[i].minCoeff() <= 0.0) {
            throw InvalidInput("gaussian set: non-positive scale at index " + std::to_string(i));
        }
        if (std::abs(quat[i].norm() - 1.0) > 1e-6) {
            throw InvalidInput("gaussian set: quaternion not unit at index " + std::to_string(i));
        }
    }
}

ActivationLimits ActivationLimits::from_diagonal(double diagonal) {
    if (!(diagonal > 0.0) || !std::isfinite(diagonal)) {
        throw InvalidInput("bounding-box diagonal must be positive");
    }
    ActivationLimits l;
    l.offset_cap = 0.02 * diagonal;
    l.scale_cap = 0.05 * diagonal;
    return l;
}

double bbox_diagonal(std::span<const PointMap> maps) {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const PointMap &m : maps) {
        for (std::size_t i = 0; i < m.valid.size(); ++i) {
            if (m.valid[i]) {
                lo = lo.cwiseMin(m.points[i]);
                hi = hi.cwiseMax(m.points[i]);
            }
        }
    }
    if (!lo.allFinite()) {
        throw InvalidInput("bounding box of an empty point set");
    }
    return (hi - lo).norm();
}

GaussianSet activate(const RawGaussianOutput &raw, const PointMap &prior, const Mask &valid,
                     const ActivationLimits &limits, ViewTag view) {
    const long n = static_cast<long>(raw.height) * raw.width;
    if (raw.values.rows() != raw_channel::count || raw.values.cols() != n || prior.height() != raw.height ||
        prior.width() != raw.width || valid.height() != raw.height || valid.width() != raw.width) {
        throw InvalidInput("activate: raw output, prior and mask sizes differ");
    }
    const Tensor &r = raw.values;
    GaussianSet set;
    set.reserve(count_true(valid));
    for (long i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (!valid[k]) {
            continue;
        }
        Vec3 off(std::tanh(r(0, i)), std::tanh(r(1, i)), std::tanh(r(2, i)));
        set.mu.push_back(prior.points[k] + limits.offset_cap * off);
        set.color.emplace_back(sigmoid(r(3, i)), sigmoid(r(4, i)), sigmoid(r(5, i)));
        set.opacity.push_back(sigmoid(r(6, i)));
        Vec3 s;
        for (int a = 0; a < 3; ++a) {
            s[a] = std::clamp(std::exp(r(7 + a, i)), limits.min_scale, limits.scale_cap);
        }
        set.scale.push_back(s);
        Vec4 q(r(10, i), r(11, i), r(12, i), r(13, i));
        const double qn = q.norm();
        set.quat.push_back(qn < kQuatFloor ? Vec4(1, 0, 0, 0) : Vec4(q / qn));
        set.source.push_back({view, static_cast<int>(i / raw.width), static_cast<int>(i % raw.width)});
    }
    return set;
}

GaussianGrads GaussianGrads::zeros(std::size_t n) {
    GaussianGrads g;
    g.mu.assign(n, Vec3::Zero());
    g.color.assign(n, Vec3::Zero());
    g.opacity.assign(n, 0.0);
    g.scale.assign(n, Vec3::Zero());
    g.quat.assign(n, Vec4::Zero());
    return g;
}

Tensor activate_backward(const RawGaussianOutput &raw, const Mask &valid, const ActivationLimits &limits,
                         const GaussianGrads &grads, std::size_t offset) {
    const long n = static_cast<long>(raw.height) * raw.width;
    if (raw.values.cols() != n || valid.size() != static_cast<std::size_t>(n)) {
        throw InvalidInput("activate_backward: shape mismatch");
    }
    if (offset + count_true(valid) > grads.size()) {
        throw InvalidInput("activate_backward: gradient list shorter than the emitted set");
    }
    const Tensor &r = raw.values;
    Tensor d = Tensor::Zero(raw_channel::count, n);
    std::size_t g = offset;
    for (long i = 0; i < n; ++i) {
        if (!valid[static_cast<std::size_t>(i)]) {
            continue;
        }
        for (int a = 0; a < 3; ++a) {
            const double t = std::tanh(r(a, i));
            d(a, i) = grads.mu[g][a] * limits.offset_cap * (1.0 - t * t);
            const double c = sigmoid(r(3 + a, i));
            d(3 + a, i) = grads.color[g][a] * c * (1.0 - c);
            const double e = std::exp(r(7 + a, i));
            if (e > limits.min_scale && e < limits.scale_cap) {
                d(7 + a, i) = grads.scale[g][a] * e;
            }
        }
        const double o = sigmoid(r(6, i));
        d(6, i) = grads.opacity[g] * o * (1.0 - o);
        Vec4 q(r(10, i), r(11, i), r(12, i), r(13, i));
        const double qn = q.norm();
        if (qn >= kQuatFloor) {
            const Vec4 u = q / qn;
            const Vec4 dq = (grads.quat[g] - u * u.dot(grads.quat[g])) / qn;
            for (int a = 0; a < 4; ++a) {
                d(10 + a, i) = dq[a];
            }
        }
        ++g;
    }
    return d;
}

GaussianSet assemble(std::span<const GaussianSet> parts) {
    GaussianSet out;
    std::size_t total = 0;
    bool with_source = true;
    for (const GaussianSet &p : parts) {
        total += p.size();
        with_source = with_source && p.source.size() == p.size();
    }
    out.reserve(total);
    for (const GaussianSet &p : parts) {
        out.mu.insert(out.mu.end(), p.mu.begin(), p.mu.end());
        out.color.insert(out.color.end(), p.color.begin(), p.color.end());
        out.opacity.insert(out.opacity.end(), p.opacity.begin(), p.opacity.end());
        out.scale.insert(out.scale.end(), p.scale.begin(), p.scale.end());
        out.quat.insert(out.quat.end(), p.quat.begin(), p.quat.end());
        if (with_source) {
            out.source.insert(out.source.end(), p.source.begin(), p.source.end());
        }
    }
    return out;
}

std::vector<GaussianGrads> split_grads(const GaussianGrads &grads, std::span<const std::size_t> sizes) {
    std::vector<GaussianGrads> out;
    std::size_t at = 0;
    for (std::size_t n : sizes) {
        if (at + n > grads.size()) {
            throw InvalidInput("split_grads: sizes exceed the gradient length");
        }
        GaussianGrads g;
        auto slice = [&](const auto &v, auto &dst) {
            dst.assign(v.begin() + static_cast<long>(at), v.begin() + static_cast<long>(at + n));
        };
        slice(grads.mu, g.mu);
        slice(grads.color, g.color);
        slice(grads.opacity, g.opacity);
        slice(grads.scale, g.scale);
        slice(grads.quat, g.quat);
        out.push_back(std::move(g));
        at += n;
    }
    if (at != grads.size()) {
        throw InvalidInput("split_grads: sizes do not cover the gradient length");
    }
    return out;
}

void UNetConfig::validate() const {
    if (in_channels != 6) {
        throw ConfigError("regressor config: in_channels must be 6 (xyz + rgb)");
    }
    if (width <= 0 || levels < 1 || groups <= 0 || width % groups != 0) {
        throw ConfigError("regressor config: width must be positive and divisible by groups");
    }
    if (!(init_scale > 0.0) || !(init_opacity > 0.0 && init_opacity < 1.0)) {
        throw ConfigError("regressor config: init_scale must be positive and init_opacity in (0, 1)");
    }
}

nlohmann::json UNetConfig::to_json() const {
    return {{"in_channels", in_channels}, {"width", width},          {"levels", levels},
            {"groups", groups},           {"init_scale", init_scale}, {"init_opacity", init_opacity}};
}

UNetConfig UNetConfig::from_json(const nlohmann::json &j) {
    UNetConfig c;
    try {
        c.in_channels = j.value("in_channels", c.in_channels);
        c.width = j.value("width", c.width);
        c.levels = j.value("levels", c.levels);
        c.groups = j.value("groups", c.groups);
        c.init_scale = j.value("init_scale", c.init_scale);
        c.init_opacity = j.value("init_opacity", c.init_opacity);
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("regressor config: ") + e.what());
    }
    c.validate();
    return c;
}

std::uint64_t UNetConfig::fingerprint() const { return fnv1a64(to_json().dump()); }

GaussianRegressor::ResBlock GaussianRegressor::make_block(const std::string &name, long in, long out,
                                                          std::mt19937_64 &rng) {
    ResBlock b;
    b.norm1 = nn::GroupNorm(params_, name + ".norm1", in, config_.groups);
    b.conv1 = nn::Conv2d(params_, name + ".conv1", in, out, 3, 1, 1, rng);
    b.norm2 = nn::GroupNorm(params_, name + ".norm2", out, config_.groups);
    b.conv2 = nn::Conv2d(params_, name + ".conv2", out, out, 3, 1, 1, rng);
    if (in != out) {
        b.skip = nn::Conv2d(params_, name + ".skip", in, out, 1, 1, 0, rng);
        b.has_skip = true;
    }
    return b;
}

GaussianRegressor::GaussianRegressor(const UNetConfig &config, std::uint64_t seed) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const long w = config_.width;
    stem_ = nn::Conv2d(params_, "stem", config_.in_channels, w, 3, 1, 1, rng);
    stem_block_ = make_block("stem_block", w, w, rng);
    for (int l = 0; l < config_.levels; ++l) {
        const std::string n = "down." + std::to_string(l);
        down_.emplace_back(params_, n + ".conv", w, w, 3, 2, 1, rng);
        down_blocks_.push_back(make_block(n + ".block", w, w, rng));
    }
    for (int l = 0; l < config_.levels; ++l) {
        up_blocks_.push_back(make_block("up." + std::to_string(l), 2 * w, w, rng));
    }
    out_ = nn::Conv2d(params_, "out", w, raw_channel::count, 1, 1, 0, rng);
    out_.weight().value *= 0.1;
    Tensor &bias = out_.bias().value;
    for (int a = 0; a < 3; ++a) {
        bias(raw_channel::scale + a, 0) = std::log(config_.init_scale);
    }
    bias(raw_channel::opacity, 0) = logit(config_.init_opacity);
    bias(raw_channel::quat, 0) = 1.0;
}

Var GaussianRegressor::run_block(Tape &tape, const ResBlock &b, Var x) const {
    Var h = b.conv1(tape, ops::silu(b.norm1(tape, x)));
    h = b.conv2(tape, ops::silu(b.norm2(tape, h)));
    return ops::add(b.has_skip ? b.skip(tape, x) : x, h);
}

Var GaussianRegressor::forward(Tape &tape, Var input) const {
    if (input.rows() != config_.in_channels || input.height() <= 0) {
        throw InvalidInput("regressor input must be a 6-channel feature map");
    }
    const int factor = 1 << config_.levels;
    if (input.height() % factor != 0 || input.width() % factor != 0) {
        throw InvalidInput("regressor input size must be divisible by " + std::to_string(factor));
    }
    Var x = run_block(tape, stem_block_, stem_(tape, input));
    std::vector<Var> skips;
    for (int l = 0; l < config_.levels; ++l) {
        skips.push_back(x);
        x = run_block(tape, down_blocks_[static_cast<std::size_t>(l)], down_[static_cast<std::size_t>(l)](tape, x));
    }
    for (int l = 0; l < config_.levels; ++l) {
        Var skip = skips[skips.size() - 1 - static_cast<std::size_t>(l)];
        x = run_block(tape, up_blocks_[static_cast<std::size_t>(l)], ops::concat_rows({ops::upsample2x(x), skip}));
    }
    return out_(tape, x);
}

Tensor GaussianRegressor::make_input(const PointMap &points, const RgbImage &image, const Vec3 &center) {
    if (!points.points.same_shape(image)) {
        throw InvalidInput("regressor: pointmap and image sizes differ");
    }
    const long n = static_cast<long>(image.size());
    Tensor in = Tensor::Zero(6, n);
    for (long i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (points.valid[k]) {
            const Vec3 p = points.points[k] - center;
            in(0, i) = p.x();
            in(1, i) = p.y();
            in(2, i) = p.z();
        }
        for (int c = 0; c < 3; ++c) {
            in(3 + c, i) = image[k][c];
        }
    }
    return in;
}

RawGaussianOutput GaussianRegressor::regress_view(const PointMap &points, const RgbImage &image,
                                                  const Vec3 &center) const {
    Tape tape(false);
    Var in = tape.constant(make_input(points, image, center));
    tape.set_spatial(in, image.height(), image.width());
    Var out = forward(tape, in);
    return {out.value(), image.height(), image.width()};
}

// ---------------------------------------------------------------------------------------
// PLY

namespace {

const char *kGaussianProps[] = {"x",       "y",       "z",       "nx",      "ny",      "nz",
                                "f_dc_0",  "f_dc_1",  "f_dc_2",  "opacity", "scale_0", "scale_1",
                                "scale_2", "rot_0",   "rot_1",   "rot_2",   "rot_3"};
constexpr int kGaussianPropCount = 17;

} // namespace

void write_gaussian_ply(const std::filesystem::path &path, const GaussianSet &set) {
    set.validate();
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot write " + path.string());
    }
    f << "ply\nformat binary_little_endian 1.0\nelement vertex " << set.size() << "\n";
    for (const char *p : kGaussianProps) {
        f << "property float " << p << "\n";
    }
    f << "end_header\n";
    std::vector<float> row(kGaussianPropCount);
    for (std::size_t i = 0; i < set.size(); ++i) {
        const double o = std::clamp(set.opacity[i], 1e-7, 1.0 - 1e-7);
        const double vals[kGaussianPropCount] = {
            set.mu[i].x(), set.mu[i].y(), set.mu[i].z(), 0.0, 0.0, 0.0,
            (set.color[i].x() - 0.5) / kSh0, (set.color[i].y() - 0.5) / kSh0, (set.color[i].z() - 0.5) / kSh0,
            logit(o), std::log(set.scale[i].x()), std::log(set.scale[i].y()), std::log(set.scale[i].z()),
            set.quat[i][0], set.quat[i][1], set.quat[i][2], set.quat[i][3]};
        for (int k = 0; k < kGaussianPropCount; ++k) {
            row[static_cast<std::size_t>(k)] = static_cast<float>(vals[k]);
        }
        f.write(reinterpret_cast<const char *>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!f) {
        throw IoError("failed writing " + path.string());
    }
}

GaussianSet read_gaussian_ply(const std::filesystem::path &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot read " + path.string());
    }
    std::string line;
    std::size_t count = 0;
    std::vector<std::string> props;
    bool binary = false;
    while (std::getline(f, line)) {
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "format") {
            std::string fmt;
            ls >> fmt;
            binary = fmt == "binary_little_endian";
        } else if (word == "element") {
            std::string name;
            ls >> name >> count;
        } else if (word == "property") {
            std::string type, name;
            ls >> type >> name;
            if (type != "float") {
                throw IoError(path.string() + ": unsupported property type " + type);
            }
            props.push_back(name);
        } else if (word == "end_header") {
            break;
        }
    }
    if (!binary || props.size() != static_cast<std::size_t>(kGaussianPropCount)) {
        throw IoError(path.string() + ": not a binary 3DGS PLY");
    }
    for (int k = 0; k < kGaussianPropCount; ++k) {
        if (props[static_cast<std::size_t>(k)] != kGaussianProps[k]) {
            throw IoError(path.string() + ": unexpected property " + props[static_cast<std::size_t>(k)]);
        }
    }
    GaussianSet set;
    set.reserve(count);
    std::vector<float> row(kGaussianPropCount);
    for (std::size_t i = 0; i < count; ++i) {
        if (!f.read(reinterpret_cast<char *>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)))) {
            throw IoError(path.string() + ": truncated vertex data");
        }
        auto v = [&](int k) { return static_cast<double>(row[static_cast<std::size_t>(k)]); };
        set.mu.emplace_back(v(0), v(1), v(2));
        set.color.push_back(Vec3(v(6), v(7), v(8)) * kSh0 + Vec3::Constant(0.5));
        set.color.back() = set.color.back().cwiseMax(0.0).cwiseMin(1.0);
        set.opacity.push_back(sigmoid(v(9)));
        set.scale.emplace_back(std::exp(v(10)), std::exp(v(11)), std::exp(v(12)));
        Vec4 q(v(13), v(14), v(15), v(16));
        set.quat.push_back(q.norm() > 0 ? Vec4(q.normalized()) : Vec4(1, 0, 0, 0));
    }
    return set;
}

void write_point_cloud_ply(const std::filesystem::path &path, const FusedPointCloud &cloud) {
    std::ofstream f(path);
    if (!f) {
        throw IoError("cannot write " + path.string());
    }
    const bool colored = cloud.colors.size() == cloud.size();
    f << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n";
    if (colored) {
        f << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    }
    f << "end_header\n";
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3 &p = cloud.positions[i];
        f << static_cast<float>(p.x()) << ' ' << static_cast<float>(p.y()) << ' ' << static_cast<float>(p.z());
        if (colored) {
            for (int c = 0; c < 3; ++c) {
                f << ' ' << static_cast<int>(std::lround(std::clamp(cloud.colors[i][c], 0.0, 1.0) * 255.0));
            }
        }
        f << '\n';
    }
    if (!f) {
        throw IoError("failed writing " + path.string());
    }
}

} // namespace duosplat
