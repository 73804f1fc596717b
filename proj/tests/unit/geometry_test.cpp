// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/geometry.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <tuple>

namespace duosplat {
namespace {

using testing::random_camera;
using testing::simple_camera;

TEST(UnprojectDepth, PrincipalPointLandsOnOpticalAxis) {
    // 9x9 image with the principal point at the center of pixel (4, 4).
    const CameraModel cam = simple_camera(9, 50.0, 4.5);
    DepthMap depth(9, 9, 0.0);
    Mask mask(9, 9, 0);
    depth(4, 4) = 2.0;
    mask(4, 4) = 1;
    const PointMap pm = unproject_depth(depth, mask, cam);
    ASSERT_EQ(pm.valid_count(), 1u);
    EXPECT_EQ(pm.points(4, 4), Vec3(0.0, 0.0, 2.0));
}

TEST(UnprojectDepth, EmptyMaskYieldsNoPoints) {
    const CameraModel cam = simple_camera(8, 50.0, 4.0);
    const PointMap pm = unproject_depth(DepthMap(8, 8, 1.0), Mask(8, 8, 0), cam);
    EXPECT_EQ(pm.valid_count(), 0u);
}

TEST(UnprojectDepth, RejectsBadInputs) {
    const CameraModel cam = simple_camera(8, 50.0, 4.0);
    Mask mask(8, 8, 1);
    DepthMap depth(8, 8, 1.0);
    depth(3, 5) = 0.0;
    EXPECT_THROW(unproject_depth(depth, mask, cam), InvalidInput);
    EXPECT_THROW(unproject_depth(DepthMap(8, 7, 1.0), Mask(8, 8, 1), cam), InvalidInput);
    EXPECT_THROW(unproject_depth(DepthMap(4, 4, 1.0), Mask(4, 4, 1), cam), InvalidInput);
}

TEST(ProjectPoints, OpticalAxisAndBehindCamera) {
    const CameraModel cam = simple_camera(128, 100.0, 64.0);
    const std::vector<Vec3> pts = {Vec3(0, 0, 2), Vec3(0, 0, -1)};
    const auto proj = project_points(pts, cam);
    EXPECT_DOUBLE_EQ(proj[0].u, 64.0);
    EXPECT_DOUBLE_EQ(proj[0].v, 64.0);
    EXPECT_DOUBLE_EQ(proj[0].depth, 2.0);
    EXPECT_LE(proj[1].depth, 0.0);
}

TEST(CameraModel, ValidationCatchesDegenerateCameras) {
    CameraModel cam = simple_camera(8, 10.0, 4.0);
    EXPECT_NO_THROW(cam.validate());
    cam.world_to_camera.rotation(0, 0) = -1.0; // reflection
    EXPECT_THROW(cam.validate(), InvalidInput);
    cam = simple_camera(8, 10.0, 8.0);
    EXPECT_THROW(cam.validate(), InvalidInput);
    cam = simple_camera(8, 0.0, 4.0);
    EXPECT_THROW(cam.validate(), InvalidInput);
}

TEST(RingCamera, CanonicalRingLooksAtTheOrigin) {
    for (double az : {0.0, 90.0, 180.0, 270.0, 33.0}) {
        const CameraModel cam = ring_camera(az, 64);
        EXPECT_NO_THROW(cam.validate());
        EXPECT_NEAR(cam.center().norm(), 2.5, 1e-12);
        EXPECT_NEAR(cam.center().y(), 0.0, 1e-12);
        const auto p = project_points(std::vector<Vec3>{Vec3::Zero()}, cam);
        EXPECT_NEAR(p[0].u, 32.0, 1e-9);
        EXPECT_NEAR(p[0].v, 32.0, 1e-9);
        EXPECT_NEAR(p[0].depth, 2.5, 1e-12);
    }
    EXPECT_TRUE(ring_camera(0.0, 64).world_to_camera.rotation.isIdentity());
    EXPECT_NEAR(ring_camera(180.0, 64).center().z(), 2.5, 1e-12);
}

// Round trip over random cameras: project(unproject(depth)) recovers pixel centers and depth.
TEST(GeometryProperty, UnprojectProjectRoundTrip) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const CameraModel cam = random_camera(rng, 8, 8);
        DepthMap depth(8, 8, 0.0);
        Mask mask(8, 8, 0);
        for (std::size_t i = 0; i < depth.size(); ++i) {
            mask[i] = u(rng) < 0.8;
            depth[i] = mask[i] ? 0.5 + 5.0 * u(rng) : 0.0;
        }
        const PointMap pm = unproject_depth(depth, mask, cam);
        const std::vector<Vec3> pts = pm.valid_points();
        const auto proj = project_points(pts, cam);
        std::size_t k = 0;
        for (int r = 0; r < 8; ++r) {
            for (int c = 0; c < 8; ++c) {
                if (!mask(r, c)) {
                    continue;
                }
                const Projection &p = proj[k++];
                EXPECT_NEAR(p.u, c + 0.5, 1e-5 * (c + 0.5));
                EXPECT_NEAR(p.v, r + 0.5, 1e-5 * (r + 0.5));
                EXPECT_NEAR(p.depth, depth(r, c), 1e-5 * depth(r, c));
            }
        }
        EXPECT_EQ(k, pts.size());
    }
}

TEST(GeometryProperty, ProjectUnprojectRoundTripOnRandomPoints) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const CameraModel cam = simple_camera(64, 80.0, 32.0);
    std::vector<Vec3> pts;
    for (int i = 0; i < 100; ++i) {
        pts.emplace_back(u(rng), u(rng), 3.0 + u(rng));
    }
    const auto proj = project_points(pts, cam);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Projection &p = proj[i];
        const Vec3 back((p.u - cam.cx) * p.depth / cam.fx, (p.v - cam.cy) * p.depth / cam.fy,
                        p.depth);
        EXPECT_LT((back - pts[i]).norm(), 1e-5 * pts[i].norm());
    }
}

PointMap random_pointmap(std::mt19937_64 &rng, int h, int w, double density) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    PointMap pm{Grid<Vec3>(h, w, Vec3::Zero()), Mask(h, w, 0)};
    for (std::size_t i = 0; i < pm.points.size(); ++i) {
        pm.valid[i] = (u(rng) + 1.0) * 0.5 < density;
        pm.points[i] = Vec3(u(rng), u(rng), u(rng));
    }
    return pm;
}

TEST(FusePointmaps, IdentityScaleAndCounts) {
    std::mt19937_64 rng(3);
    std::array<PointMap, 4> maps;
    for (auto &m : maps) {
        m = PointMap{Grid<Vec3>(4, 4, Vec3::Zero()), Mask(4, 4, 0)};
        for (int i = 0; i < 10; ++i) {
            m.valid[static_cast<std::size_t>(i)] = 1;
            m.points[static_cast<std::size_t>(i)] = Vec3(i, 2 * i, 3 * i) * 0.1;
        }
    }
    const FusedPointCloud cloud = fuse_pointmaps(maps[0], maps[1], maps[2], maps[3], 1.0);
    ASSERT_EQ(cloud.size(), 40u);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const PointSource &s = cloud.sources[i];
        EXPECT_EQ(cloud.positions[i], maps[static_cast<int>(s.view)].points(s.row, s.col));
    }
    const FusedPointCloud doubled = fuse_pointmaps(maps[0], maps[1], maps[2], maps[3], 2.0);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        EXPECT_EQ(doubled.positions[i], 2.0 * cloud.positions[i]);
    }
}

TEST(FusePointmaps, CountMatchesValidPixelsAndOrderIsFixed) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::array<PointMap, 4> maps;
        std::size_t expected = 0;
        for (auto &m : maps) {
            m = random_pointmap(rng, 6, 5, 0.4);
            // Counting oracle: direct scan of the mask.
            for (int r = 0; r < 6; ++r) {
                for (int c = 0; c < 5; ++c) {
                    expected += m.valid(r, c) ? 1 : 0;
                }
            }
        }
        const FusedPointCloud cloud = fuse_pointmaps(maps[0], maps[1], maps[2], maps[3], 1.3);
        ASSERT_EQ(cloud.size(), expected);
        // Provenance is a bijection onto the valid pixels, in front->back->left->right order.
        std::set<std::tuple<int, int, int>> seen;
        int last_view = 0;
        for (const PointSource &s : cloud.sources) {
            EXPECT_GE(static_cast<int>(s.view), last_view);
            last_view = static_cast<int>(s.view);
            EXPECT_TRUE(maps[static_cast<int>(s.view)].valid(s.row, s.col));
            EXPECT_TRUE(seen.insert({static_cast<int>(s.view), s.row, s.col}).second);
        }
    }
}

TEST(FusePointmaps, HomogeneousInDelta) {
    std::mt19937_64 rng(9);
    const PointMap f = random_pointmap(rng, 8, 8, 0.5);
    const PointMap b = random_pointmap(rng, 8, 8, 0.5);
    const PointMap l = random_pointmap(rng, 8, 8, 0.5);
    const PointMap r = random_pointmap(rng, 8, 8, 0.5);
    const double delta = 1.37;
    const FusedPointCloud base = fuse_pointmaps(f, b, l, r, delta);
    // Power-of-two factors commute exactly with rounding.
    for (double a : {0.25, 0.5, 2.0, 4.0}) {
        const FusedPointCloud scaled = fuse_pointmaps(f, b, l, r, a * delta);
        for (std::size_t i = 0; i < base.size(); ++i) {
            EXPECT_EQ(scaled.positions[i], a * base.positions[i]);
        }
    }
    for (double a : {0.3, 1.7, 3.1}) {
        const FusedPointCloud scaled = fuse_pointmaps(f, b, l, r, a * delta);
        for (std::size_t i = 0; i < base.size(); ++i) {
            EXPECT_LE((scaled.positions[i] - a * base.positions[i]).norm(),
                      4e-16 * a * base.positions[i].norm());
        }
    }
}

TEST(FusePointmaps, RejectsNonPositiveDelta) {
    const PointMap empty{Grid<Vec3>(2, 2, Vec3::Zero()), Mask(2, 2, 0)};
    EXPECT_THROW(fuse_pointmaps(empty, empty, empty, empty, 0.0), InvalidInput);
    EXPECT_THROW(fuse_pointmaps(empty, empty, empty, empty, -1.0), InvalidInput);
}

} // namespace
} // namespace duosplat
