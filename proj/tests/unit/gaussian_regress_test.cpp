// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/gaussian_regress.hpp"

#include "duosplat/splat_render.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace duosplat {
namespace {

using nn::Tensor;

PointMap random_prior(std::mt19937_64 &rng, int h, int w, double keep = 0.7) {
    std::uniform_real_distribution<double> u(-0.4, 0.4);
    std::bernoulli_distribution coin(keep);
    PointMap m{Grid<Vec3>(h, w), Mask(h, w, 0)};
    for (std::size_t i = 0; i < m.points.size(); ++i) {
        m.points[i] = Vec3(u(rng), u(rng), 3.0 + u(rng));
        m.valid[i] = coin(rng);
    }
    return m;
}

RgbImage random_rgb(std::mt19937_64 &rng, int h, int w) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RgbImage img(h, w);
    for (std::size_t i = 0; i < img.size(); ++i) {
        img[i] = Vec3(u(rng), u(rng), u(rng));
    }
    return img;
}

RawGaussianOutput random_raw(std::mt19937_64 &rng, int h, int w, double sigma) {
    std::normal_distribution<double> n(0.0, sigma);
    RawGaussianOutput r{Tensor(raw_channel::count, static_cast<long>(h) * w), h, w};
    for (long i = 0; i < r.values.size(); ++i) {
        r.values.data()[i] = n(rng);
    }
    return r;
}

UNetConfig small_unet() {
    UNetConfig c;
    c.width = 8;
    c.levels = 2;
    c.groups = 2;
    return c;
}

TEST(GaussianRegressor, OutputShapeAndFiniteness) {
    GaussianRegressor reg(small_unet(), 1);
    std::mt19937_64 rng(1);
    const PointMap prior = random_prior(rng, 12, 16);
    const RawGaussianOutput out = reg.regress_view(prior, random_rgb(rng, 12, 16), Vec3(0, 0, 3));
    EXPECT_EQ(out.height, 12);
    EXPECT_EQ(out.width, 16);
    ASSERT_EQ(out.values.rows(), raw_channel::count);
    ASSERT_EQ(out.values.cols(), 12 * 16);
    EXPECT_TRUE(out.values.allFinite());
}

TEST(GaussianRegressor, ViewsShareOneNetwork) {
    GaussianRegressor reg(small_unet(), 2);
    std::mt19937_64 rng(2);
    const PointMap left = random_prior(rng, 8, 8);
    const PointMap right = random_prior(rng, 8, 8);
    const RgbImage li = random_rgb(rng, 8, 8);
    const RgbImage ri = random_rgb(rng, 8, 8);
    const Tensor a = reg.regress_view(left, li, Vec3::Zero()).values;
    const Tensor b = reg.regress_view(right, ri, Vec3::Zero()).values;
    EXPECT_NE(a, b);
    EXPECT_EQ(reg.regress_view(left, li, Vec3::Zero()).values, a);
    EXPECT_EQ(reg.regress_view(right, ri, Vec3::Zero()).values, b);
}

TEST(GaussianRegressor, InitialOutputsMatchConfiguredDefaults) {
    UNetConfig cfg = small_unet();
    GaussianRegressor reg(cfg, 3);
    std::mt19937_64 rng(3);
    const PointMap prior = random_prior(rng, 8, 8, 1.0);
    const RawGaussianOutput raw = reg.regress_view(prior, random_rgb(rng, 8, 8), Vec3(0, 0, 3));
    ActivationLimits lim;
    lim.scale_cap = 1.0;
    const GaussianSet g = activate(raw, prior, prior.valid, lim);
    double mean_scale = 0.0;
    double mean_opacity = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        mean_scale += g.scale[i].mean();
        mean_opacity += g.opacity[i];
    }
    mean_scale /= static_cast<double>(g.size());
    mean_opacity /= static_cast<double>(g.size());
    EXPECT_NEAR(std::log(mean_scale), std::log(cfg.init_scale), 0.5);
    EXPECT_NEAR(mean_opacity, cfg.init_opacity, 0.15);
}

TEST(GaussianRegressor, MakeInputCentersValidPixelsOnly) {
    std::mt19937_64 rng(4);
    const PointMap prior = random_prior(rng, 4, 4, 0.5);
    const RgbImage img = random_rgb(rng, 4, 4);
    const Vec3 center(0.1, -0.2, 3.0);
    const Tensor in = GaussianRegressor::make_input(prior, img, center);
    for (long i = 0; i < 16; ++i) {
        const auto k = static_cast<std::size_t>(i);
        const Vec3 expect = prior.valid[k] ? Vec3(prior.points[k] - center) : Vec3::Zero();
        EXPECT_EQ(Vec3(in(0, i), in(1, i), in(2, i)), expect);
        EXPECT_EQ(Vec3(in(3, i), in(4, i), in(5, i)), img[k]);
    }
    EXPECT_THROW(GaussianRegressor::make_input(prior, RgbImage(3, 4), center), InvalidInput);
}

TEST(UNetConfigTest, JsonRoundTripAndValidation) {
    UNetConfig c = small_unet();
    c.init_opacity = 0.4;
    const UNetConfig back = UNetConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json());
    EXPECT_EQ(back.fingerprint(), c.fingerprint());
    c.width = 7;
    EXPECT_THROW(c.validate(), ConfigError);
    c = small_unet();
    c.init_opacity = 1.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Activate, ZeroOffsetKeepsPrior) {
    std::mt19937_64 rng(5);
    const PointMap prior = random_prior(rng, 5, 6);
    RawGaussianOutput raw = random_raw(rng, 5, 6, 1.0);
    raw.values.topRows(3).setZero();
    const GaussianSet g = activate(raw, prior, prior.valid, ActivationLimits{});
    std::size_t k = 0;
    for (std::size_t i = 0; i < prior.points.size(); ++i) {
        if (prior.valid[i]) {
            EXPECT_EQ(g.mu[k], prior.points[i]);
            EXPECT_EQ(g.source[k].row, static_cast<int>(i / 6));
            EXPECT_EQ(g.source[k].col, static_cast<int>(i % 6));
            ++k;
        }
    }
    EXPECT_EQ(k, g.size());
}

TEST(Activate, QuaternionIsNormalized) {
    std::mt19937_64 rng(6);
    const PointMap prior = random_prior(rng, 1, 1, 1.0);
    RawGaussianOutput raw = random_raw(rng, 1, 1, 1.0);
    raw.values.block(raw_channel::quat, 0, 4, 1) << 2, 0, 0, 0;
    EXPECT_EQ(activate(raw, prior, prior.valid, {}).quat[0], Vec4(1, 0, 0, 0));
    raw.values.block(raw_channel::quat, 0, 4, 1).setZero();
    EXPECT_EQ(activate(raw, prior, prior.valid, {}).quat[0], Vec4(1, 0, 0, 0));
}

TEST(Activate, FuzzedInputsSatisfyInvariants) {
    std::mt19937_64 rng(7);
    const ActivationLimits lim = ActivationLimits::from_diagonal(1.8);
    int total = 0;
    for (int round = 0; round < 10; ++round) {
        const PointMap prior = random_prior(rng, 25, 40, 1.0);
        const RawGaussianOutput raw = random_raw(rng, 25, 40, round < 5 ? 3.0 : 40.0);
        const GaussianSet g = activate(raw, prior, prior.valid, lim);
        ASSERT_NO_THROW(g.validate());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const Vec3 d = (g.mu[i] - prior.points[i]).cwiseAbs();
            ASSERT_LE(d.maxCoeff(), lim.offset_cap * (1.0 + 1e-12));
            ASSERT_GE(g.scale[i].minCoeff(), lim.min_scale);
            ASSERT_LE(g.scale[i].maxCoeff(), lim.scale_cap);
        }
        total += static_cast<int>(g.size());
    }
    EXPECT_EQ(total, 10000);
}

TEST(Activate, RejectsMismatchedShapes) {
    std::mt19937_64 rng(8);
    const PointMap prior = random_prior(rng, 4, 4);
    EXPECT_THROW(activate(random_raw(rng, 4, 5, 1.0), prior, prior.valid, {}), InvalidInput);
}

GaussianSet sized_set(std::mt19937_64 &rng, std::size_t n, ViewTag view) {
    const PointMap prior = random_prior(rng, 1, static_cast<int>(n), 1.0);
    ActivationLimits lim;
    lim.scale_cap = 0.2;
    RawGaussianOutput raw = random_raw(rng, 1, static_cast<int>(n), 1.0);
    raw.values.block(raw_channel::scale, 0, 3, static_cast<long>(n)).array() -= 2.5;
    return activate(raw, prior, prior.valid, lim, view);
}

TEST(Assemble, CountsAndIdentity) {
    std::mt19937_64 rng(9);
    std::vector<GaussianSet> parts;
    for (std::size_t n : {3, 4, 5, 6}) {
        parts.push_back(sized_set(rng, n, ViewTag::front));
    }
    EXPECT_EQ(assemble(parts).size(), 18u);
    const std::vector<GaussianSet> one = {GaussianSet{}, parts[2], GaussianSet{}, GaussianSet{}};
    const GaussianSet a = assemble(one);
    EXPECT_EQ(a.mu, parts[2].mu);
    EXPECT_EQ(a.quat, parts[2].quat);
    EXPECT_EQ(a.source, parts[2].source);
}

TEST(Assemble, RenderIsIndependentOfConcatenationOrder) {
    std::mt19937_64 rng(10);
    std::vector<GaussianSet> parts;
    for (ViewTag v : kCanonicalViews) {
        parts.push_back(sized_set(rng, 30, v));
    }
    const CameraModel cam = testing::simple_camera(24, 30.0, 12.0);
    const RgbImage ref = render(assemble(parts), cam).image;
    std::vector<GaussianSet> reversed(parts.rbegin(), parts.rend());
    EXPECT_EQ(render(assemble(reversed), cam).image, ref);
    std::swap(parts[0], parts[2]);
    EXPECT_EQ(render(assemble(parts), cam).image, ref);
}

TEST(SplitGrads, InvertsConcatenation) {
    GaussianGrads g = GaussianGrads::zeros(9);
    for (std::size_t i = 0; i < 9; ++i) {
        g.opacity[i] = static_cast<double>(i);
        g.mu[i] = Vec3::Constant(static_cast<double>(i));
    }
    const std::vector<std::size_t> sizes = {2, 0, 4, 3};
    const auto parts = split_grads(g, sizes);
    ASSERT_EQ(parts.size(), 4u);
    EXPECT_EQ(parts[1].size(), 0u);
    EXPECT_EQ(parts[2].opacity, (std::vector<double>{2, 3, 4, 5}));
    EXPECT_EQ(parts[3].mu[0], Vec3::Constant(6));
    const std::vector<std::size_t> bad = {2, 2};
    EXPECT_THROW(split_grads(g, bad), InvalidInput);
}

TEST(ActivateBackward, RenderedLossFiniteDifferences) {
    std::mt19937_64 rng(11);
    const int h = 6;
    const int w = 6;
    PointMap prior{Grid<Vec3>(h, w), Mask(h, w, 0)};
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            prior.points(r, c) = Vec3((c - 2.5) * 0.08 + 0.2 * u(rng), (r - 2.5) * 0.08 + 0.2 * u(rng), 3.0 + u(rng));
            prior.valid(r, c) = (r + c) % 3 != 0;
        }
    }
    ActivationLimits lim;
    lim.offset_cap = 0.05;
    lim.scale_cap = 0.4;
    RawGaussianOutput raw = random_raw(rng, h, w, 0.7);
    raw.values.block(raw_channel::scale, 0, 3, h * w).array() += std::log(0.1);
    raw.values.row(raw_channel::opacity).array() -= 0.5;
    const CameraModel cam = testing::simple_camera(12, 30.0, 6.0);
    RgbImage weights(12, 12);
    std::normal_distribution<double> n(0.0, 1.0);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        weights[i] = Vec3(n(rng), n(rng), n(rng));
    }
    auto loss = [&](const RawGaussianOutput &r) {
        const RgbImage img = render(activate(r, prior, prior.valid, lim), cam).image;
        double s = 0.0;
        for (std::size_t i = 0; i < img.size(); ++i) {
            s += img[i].dot(weights[i]);
        }
        return s;
    };
    const GaussianSet set = activate(raw, prior, prior.valid, lim);
    const Tensor grad =
        activate_backward(raw, prior.valid, lim, render_backward(set, cam, Vec3::Zero(), weights));

    std::vector<long> cols;
    for (long i = 0; i < h * w; ++i) {
        if (prior.valid[static_cast<std::size_t>(i)]) {
            cols.push_back(i);
        }
    }
    std::uniform_int_distribution<std::size_t> pick_col(0, cols.size() - 1);
    std::uniform_int_distribution<int> pick_row(0, raw_channel::count - 1);
    int checked = 0;
    int attempts = 0;
    const double step = 1e-5;
    while (checked < 8 && attempts++ < 1000) {
        const long c = cols[pick_col(rng)];
        const int r = pick_row(rng);
        if (std::abs(grad(r, c)) < 1e-6) {
            continue;
        }
        RawGaussianOutput p = raw;
        RawGaussianOutput m = raw;
        p.values(r, c) += step;
        m.values(r, c) -= step;
        const double numeric = (loss(p) - loss(m)) / (2 * step);
        EXPECT_LT(std::abs(grad(r, c) - numeric) / std::max(std::abs(grad(r, c)), std::abs(numeric)), 1e-2)
            << "row " << r << " col " << c << " analytic " << grad(r, c) << " numeric " << numeric;
        ++checked;
    }
    EXPECT_EQ(checked, 8);
    for (long i = 0; i < h * w; ++i) {
        if (!prior.valid[static_cast<std::size_t>(i)]) {
            EXPECT_EQ(grad.col(i).cwiseAbs().maxCoeff(), 0.0);
        }
    }
}

TEST(GaussianPly, RoundTrip) {
    testing::TempDir dir("ply");
    std::mt19937_64 rng(12);
    const GaussianSet g = sized_set(rng, 40, ViewTag::left);
    write_gaussian_ply(dir.path() / "g.ply", g);
    const GaussianSet back = read_gaussian_ply(dir.path() / "g.ply");
    ASSERT_EQ(back.size(), g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_LT((back.mu[i] - g.mu[i]).norm(), 1e-6);
        EXPECT_LT((back.color[i] - g.color[i]).norm(), 1e-6);
        EXPECT_NEAR(back.opacity[i], g.opacity[i], 1e-6);
        EXPECT_LT(((back.scale[i] - g.scale[i]).array() / g.scale[i].array()).abs().maxCoeff(), 1e-6);
        EXPECT_LT((back.quat[i] - g.quat[i]).norm(), 1e-6);
    }
    EXPECT_THROW(read_gaussian_ply(dir.path() / "missing.ply"), IoError);
}

} // namespace
} // namespace duosplat
