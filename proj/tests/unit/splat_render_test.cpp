// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/splat_render.hpp"

#include "splat_fixtures.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

namespace duosplat {
namespace {

using testing::ParamRef;
using testing::splat_camera;
using testing::weighted_sum;
using testing::wide_scene;

GaussianSet single(const Vec3 &mu, double opacity, const Vec3 &color, double s = 0.05) {
    GaussianSet g;
    g.mu.push_back(mu);
    g.color.push_back(color);
    g.opacity.push_back(opacity);
    g.scale.emplace_back(s, s, s);
    g.quat.emplace_back(1, 0, 0, 0);
    return g;
}

TEST(Projection, IsotropicOnAxisClosedForm) {
    CameraModel cam = splat_camera(64);
    cam.fx = cam.fy = 80.0;
    for (double sigma : {0.01, 0.05, 0.2}) {
        for (double d : {1.0, 2.5, 7.0}) {
            std::mt19937_64 rng(static_cast<std::uint64_t>(sigma * 1000 + d));
            std::normal_distribution<double> n;
            const Vec4 q(n(rng), n(rng), n(rng), n(rng));
            ProjectedGaussian p = project_gaussian(Vec3(0, 0, d), Vec3(sigma, sigma, sigma), q, cam);
            ASSERT_FALSE(p.culled);
            const double expect = std::pow(80.0 * sigma / d, 2) + kCovarianceBlur;
            EXPECT_NEAR(p.cov(0, 0), expect, 1e-12 * expect);
            EXPECT_NEAR(p.cov(1, 1), expect, 1e-12 * expect);
            EXPECT_NEAR(p.cov(0, 1), 0.0, 1e-12);
            EXPECT_NEAR(p.mean.x(), 32.0, 1e-12);
            EXPECT_DOUBLE_EQ(p.depth, d);
        }
    }
}

TEST(Projection, IdentityQuaternionGivesDiagonalCovariance) {
    const Vec3 s(0.1, 0.2, 0.3);
    const Mat3 r = quat_to_rotation(Vec4(1, 0, 0, 0));
    const Mat3 sigma = r * s.cwiseAbs2().asDiagonal() * r.transpose();
    EXPECT_TRUE(sigma.isApprox(Mat3(s.cwiseAbs2().asDiagonal()), 1e-15));
    CameraModel cam = splat_camera(64);
    ProjectedGaussian p = project_gaussian(Vec3(0, 0, 2), s, Vec4(1, 0, 0, 0), cam);
    EXPECT_NEAR(p.cov(0, 0), std::pow(20.0 * 0.1 / 2, 2) + kCovarianceBlur, 1e-12);
    EXPECT_NEAR(p.cov(1, 1), std::pow(20.0 * 0.2 / 2, 2) + kCovarianceBlur, 1e-12);
}

TEST(Projection, NearPlaneCulls) {
    CameraModel cam = splat_camera();
    EXPECT_TRUE(project_gaussian(Vec3(0, 0, 0.01), Vec3::Constant(0.1), Vec4(1, 0, 0, 0), cam).culled);
    EXPECT_TRUE(project_gaussian(Vec3(0, 0, -1), Vec3::Constant(0.1), Vec4(1, 0, 0, 0), cam).culled);
    EXPECT_FALSE(project_gaussian(Vec3(0, 0, 0.02), Vec3::Constant(0.1), Vec4(1, 0, 0, 0), cam).culled);
}

TEST(Projection, CovarianceIsSymmetricPositiveDefinite) {
    std::mt19937_64 rng(3);
    GaussianSet g = wide_scene(rng, 50);
    for (std::size_t i = 0; i < g.size(); ++i) {
        ProjectedGaussian p = project_gaussian(g.mu[i], g.scale[i] * 0.01, g.quat[i], splat_camera());
        EXPECT_EQ(p.cov(0, 1), p.cov(1, 0));
        EXPECT_GT(p.cov.determinant(), 0.0);
        EXPECT_GE(p.cov(0, 0), kCovarianceBlur);
    }
}

TEST(Render, EmptySetIsBackground) {
    const Vec3 bg(0.2, 0.4, 0.6);
    RenderOutput out = render(GaussianSet{}, splat_camera(), bg);
    for (std::size_t i = 0; i < out.image.size(); ++i) {
        EXPECT_EQ(out.image[i], bg);
        EXPECT_EQ(out.alpha[i], 0.0);
    }
}

TEST(Render, SingleGaussianAlphaAtCenter) {
    CameraModel cam = splat_camera();
    // Pixel (row 5, col 9) has its center at (9.5, 5.5); place the mean exactly there.
    const double z = 3.0;
    const Vec3 mu((9.5 - cam.cx) * z / cam.fx, (5.5 - cam.cy) * z / cam.fy, z);
    for (double o : {0.3, 0.8, 0.9995, 1.0}) {
        RenderOutput out = render(single(mu, o, Vec3(1, 0, 0)), cam);
        EXPECT_NEAR(out.alpha(5, 9), std::min(o, kMaxAlpha), 1e-15) << o;
    }
}

TEST(Render, TwoSplatAnalyticOracle) {
    CameraModel cam = splat_camera();
    GaussianSet g = single(Vec3(0.05, -0.02, 2.0), 0.6, Vec3(0.9, 0.1, 0.2), 0.4);
    GaussianSet far = single(Vec3(-0.03, 0.04, 3.0), 0.7, Vec3(0.1, 0.8, 0.3), 0.6);
    const GaussianSet parts[2] = {far, g}; // listed back-first; depth order must fix it
    GaussianSet both = assemble(parts);
    const Vec3 bg(0.3, 0.3, 0.5);
    RenderOutput out = render(both, cam, bg);

    auto alpha_at = [&](const GaussianSet &one, double u, double v) {
        ProjectedGaussian p = project_gaussian(one.mu[0], one.scale[0], one.quat[0], cam);
        const Vec2 d(u - p.mean.x(), v - p.mean.y());
        return std::min(kMaxAlpha, one.opacity[0] * std::exp(-0.5 * d.dot(p.cov.inverse() * d)));
    };
    for (int r = 4; r < 12; ++r) {
        for (int c = 4; c < 12; ++c) {
            const double a1 = alpha_at(g, c + 0.5, r + 0.5);
            const double a2 = alpha_at(far, c + 0.5, r + 0.5);
            const double w1 = a1;
            const double w2 = a2 * (1.0 - a1);
            const Vec3 expect = w1 * g.color[0] + w2 * far.color[0] + (1.0 - w1 - w2) * bg;
            EXPECT_LT((out.image(r, c) - expect).cwiseAbs().maxCoeff(), 1e-6);
        }
    }
}

TEST(Render, PermutationInvarianceIsBitExact) {
    std::mt19937_64 rng(11);
    GaussianSet g = wide_scene(rng, 15);
    for (std::size_t i = 0; i < g.size(); ++i) {
        g.scale[i] *= 0.1;
    }
    // Force exact depth ties to exercise the index tie-break.
    g.mu[3].z() = g.mu[7].z();
    RenderOutput ref = render(g, splat_camera());
    std::vector<std::size_t> perm(g.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (int trial = 0; trial < 5; ++trial) {
        std::shuffle(perm.begin(), perm.end(), rng);
        // Tied splats keep their relative order, as index tie-breaking requires.
        auto p3 = std::find(perm.begin(), perm.end(), 3);
        auto p7 = std::find(perm.begin(), perm.end(), 7);
        if (p3 > p7) {
            std::iter_swap(p3, p7);
        }
        GaussianSet s;
        for (std::size_t k : perm) {
            s.mu.push_back(g.mu[k]);
            s.color.push_back(g.color[k]);
            s.opacity.push_back(g.opacity[k]);
            s.scale.push_back(g.scale[k]);
            s.quat.push_back(g.quat[k]);
        }
        RenderOutput out = render(s, splat_camera());
        EXPECT_TRUE(out.image == ref.image);
        EXPECT_TRUE(out.alpha == ref.alpha);
    }
}

TEST(Render, WeightsAndTransmittanceSumToOne) {
    std::mt19937_64 rng(5);
    GaussianSet g = wide_scene(rng, 20);
    for (auto &c : g.color) {
        c = Vec3::Ones();
    }
    for (auto &o : g.opacity) {
        o = 0.95;
    }
    RenderOutput out = render(g, splat_camera(), Vec3::Zero());
    for (std::size_t i = 0; i < out.image.size(); ++i) {
        EXPECT_NEAR(out.image[i].x() + (1.0 - out.alpha[i]), 1.0, 1e-6);
    }
}

TEST(Render, AlphaMonotoneInOpacity) {
    std::mt19937_64 rng(8);
    GaussianSet g = wide_scene(rng, 8);
    for (std::size_t i = 0; i < g.size(); ++i) {
        g.scale[i] *= 0.15;
    }
    g.opacity[2] = 0.0;
    ScalarMap prev = render(g, splat_camera()).alpha;
    for (double o = 0.1; o <= 1.0; o += 0.1) {
        g.opacity[2] = o;
        ScalarMap cur = render(g, splat_camera()).alpha;
        for (std::size_t i = 0; i < cur.size(); ++i) {
            EXPECT_GE(cur[i], prev[i] - 1e-15);
        }
        prev = cur;
    }
}

TEST(Render, RejectsNonFiniteParameters) {
    GaussianSet g = single(Vec3(0, 0, 2), 0.5, Vec3(1, 1, 1));
    g.scale[0].x() = std::nan("");
    EXPECT_THROW(render(g, splat_camera()), InvalidInput);
}

TEST(RenderBackward, ZeroUpstreamGivesZeroGradients) {
    std::mt19937_64 rng(2);
    GaussianSet g = wide_scene(rng, 6);
    GaussianGrads d = render_backward(g, splat_camera(), Vec3::Zero(), RgbImage(16, 16, Vec3::Zero()));
    for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_TRUE(d.mu[i].isZero(0.0));
        EXPECT_TRUE(d.color[i].isZero(0.0));
        EXPECT_EQ(d.opacity[i], 0.0);
        EXPECT_TRUE(d.scale[i].isZero(0.0));
        EXPECT_TRUE(d.quat[i].isZero(0.0));
    }
}

TEST(RenderBackward, ColorGradientEqualsCompositingWeight) {
    CameraModel cam = splat_camera();
    GaussianSet g = single(Vec3(0, 0, 2), 0.97, Vec3(0.5, 0.5, 0.5), 0.1);
    RenderOutput out = render(g, cam);
    for (auto [r, c] : {std::pair{8, 8}, std::pair{6, 9}, std::pair{10, 7}}) {
        RgbImage up(16, 16, Vec3::Zero());
        up(r, c) = Vec3(1, 0, 0);
        GaussianGrads d = render_backward(g, cam, Vec3::Zero(), up);
        // Alone in front of the background, the weight is the pixel alpha.
        EXPECT_NEAR(d.color[0].x(), out.alpha(r, c), 1e-15);
        EXPECT_EQ(d.color[0].y(), 0.0);
    }
}

TEST(RenderBackward, RejectsMismatchedUpstream) {
    GaussianSet g = single(Vec3(0, 0, 2), 0.5, Vec3(1, 1, 1));
    EXPECT_THROW(render_backward(g, splat_camera(), Vec3::Zero(), RgbImage(8, 8)), InvalidInput);
}

double max_gradcheck_error(std::uint64_t seed, int count, int params_to_check) {
    std::mt19937_64 rng(seed);
    GaussianSet g = wide_scene(rng, count);
    CameraModel cam = splat_camera();
    const Vec3 bg(0.1, 0.2, 0.3);
    std::normal_distribution<double> n;
    RgbImage up(16, 16);
    for (std::size_t i = 0; i < up.size(); ++i) {
        up[i] = Vec3(n(rng), n(rng), n(rng));
    }
    GaussianGrads d = render_backward(g, cam, bg, up);
    const double h = 1e-3;
    double worst = 0.0;
    std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
    for (int k = 0; k < params_to_check; ++k) {
        const int field = k % 5;
        ParamRef p{field, pick(rng), field == 2 ? 0 : static_cast<int>(rng() % (field == 4 ? 4 : 3))};
        const double x0 = p.in(g);
        p.in(g) = x0 + h;
        const double fp = weighted_sum(render(g, cam, bg).image, up);
        p.in(g) = x0 - h;
        const double fm = weighted_sum(render(g, cam, bg).image, up);
        p.in(g) = x0;
        const double num = (fp - fm) / (2 * h);
        const double ana = p.in(d);
        const double err = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-3});
        worst = std::max(worst, err);
    }
    return worst;
}

TEST(RenderBackward, MatchesCentralDifferences) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const int count = 5 + static_cast<int>(seed) * 5;
        EXPECT_LT(max_gradcheck_error(seed, count, 25), 1e-2) << "seed " << seed;
    }
}

} // namespace
} // namespace duosplat
