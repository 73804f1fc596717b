// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/pipeline.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <random>

namespace duosplat {
namespace {

NetConfig tiny_net() {
    NetConfig c;
    c.image_size = 16;
    c.patch_size = 4;
    c.embed_dim = 16;
    c.heads = 2;
    c.mlp_ratio = 2;
    c.n_encoder_blocks = 1;
    c.n_decoder_blocks = 2;
    return c;
}

SubjectInput random_input(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SubjectInput in{RgbImage(16, 16), Mask(16, 16, 0), RgbImage(16, 16), Mask(16, 16, 0)};
    for (int r = 0; r < 16; ++r) {
        for (int c = 0; c < 16; ++c) {
            in.front(r, c) = Vec3(u(rng), u(rng), u(rng));
            in.back(r, c) = Vec3(u(rng), u(rng), u(rng));
            in.front_mask(r, c) = r > 2 && r < 13 && c > 5 && c < 11;
            in.back_mask(r, c) = r > 2 && r < 13 && c > 4 && c < 11;
        }
    }
    return in;
}

class PipelineFixture : public ::testing::Test {
  protected:
    PipelineFixture() : net_(tiny_net(), 3) {
        // A positive confidence bias makes the untrained side heads emit points.
        for (const char *head : {"head_left.proj.bias", "head_right.proj.bias"}) {
            nn::Tensor &b = net_.params().at(head).value;
            for (long k = 3; k < b.cols(); k += 4) {
                b(0, k) = 3.0;
            }
        }
    }
    PointMapNet net_;
};

TEST_F(PipelineFixture, GaussianCountIsValidPixelSum) {
    const SubjectInput in = random_input(1);
    const PointStage st = run_point_stage(net_, in, {});
    std::size_t expected = count_true(in.front_mask) + count_true(in.back_mask);
    expected += st.maps[2].valid_count() + st.maps[3].valid_count();
    EXPECT_GT(st.maps[2].valid_count(), 0u);
    EXPECT_EQ(st.gaussian_count(), expected);
    EXPECT_EQ(st.cloud.size(), expected);
    EXPECT_EQ(st.cloud.colors.size(), expected);
    GaussianRegressor reg(UNetConfig{}, 1);
    const GaussianSet g = regress_gaussians(reg, st);
    EXPECT_EQ(g.size(), expected);
    EXPECT_NO_THROW(g.validate());
    EXPECT_EQ(baseline_gaussians(st).size(), expected);
}

TEST_F(PipelineFixture, MapsAreDeltaScaled) {
    net_.log_delta().value(0, 0) = std::log(2.0);
    const PointStage st = run_point_stage(net_, random_input(2), {});
    EXPECT_NEAR(st.prediction.delta, 2.0, 1e-12);
    for (std::size_t v = 0; v < 4; ++v) {
        for (std::size_t i = 0; i < st.maps[v].points.size(); ++i) {
            if (st.maps[v].valid[i]) {
                EXPECT_EQ(st.maps[v].points[i], st.prediction.delta * st.prediction.maps[v].points[i]);
            }
        }
    }
}

TEST_F(PipelineFixture, SideHeadsOffDropsSidePoints) {
    PipelineOptions o;
    o.side_heads = false;
    const SubjectInput in = random_input(3);
    const PointStage st = run_point_stage(net_, in, o);
    EXPECT_EQ(st.maps[2].valid_count(), 0u);
    EXPECT_EQ(st.maps[3].valid_count(), 0u);
    EXPECT_EQ(st.gaussian_count(), count_true(in.front_mask) + count_true(in.back_mask));
}

TEST_F(PipelineFixture, NnsOffFeedsGraySides) {
    PipelineOptions o;
    o.nns = false;
    const PointStage st = run_point_stage(net_, random_input(4), o);
    for (std::size_t v = 2; v < 4; ++v) {
        for (std::size_t i = 0; i < st.images[v].size(); ++i) {
            EXPECT_EQ(st.images[v][i], Vec3::Constant(0.5));
        }
    }
    const PointStage with = run_point_stage(net_, random_input(4), {});
    EXPECT_NE(with.images[2], st.images[2]);
    // Side pseudo-view colors are drawn from the input pixels.
    const SubjectInput in = random_input(4);
    for (const Vec3 &c : pseudo_view_colors(with.pseudo[0])) {
        bool found = false;
        for (std::size_t i = 0; i < in.front.size() && !found; ++i) {
            found = (in.front_mask[i] && in.front[i] == c) || (in.back_mask[i] && in.back[i] == c);
        }
        EXPECT_TRUE(found);
    }
}

TEST_F(PipelineFixture, RejectsMismatchedInputs) {
    SubjectInput in = random_input(5);
    in.back = RgbImage(8, 8);
    in.back_mask = Mask(8, 8, 1);
    EXPECT_THROW(run_point_stage(net_, in, {}), InvalidInput);
    SubjectInput empty = random_input(5);
    empty.front_mask = Mask(16, 16, 0);
    empty.back_mask = Mask(16, 16, 0);
    EXPECT_THROW(run_point_stage(net_, empty, {}), InvalidInput);
}

TEST(CameraInFrame, ProjectionsAgreeAcrossFrames) {
    std::mt19937_64 rng(6);
    const CameraModel front = ring_camera(0.0, 32);
    const CameraModel side = ring_camera(90.0, 32);
    const CameraModel rel = camera_in_frame(side, front);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int i = 0; i < 20; ++i) {
        const Vec3 world(u(rng), u(rng), u(rng));
        const Vec3 in_front = front.world_to_camera.apply(world);
        EXPECT_LT((rel.world_to_camera.apply(in_front) - side.world_to_camera.apply(world)).norm(), 1e-12);
    }
    const CameraModel self = camera_in_frame(front, front);
    EXPECT_LT((self.world_to_camera.rotation - Mat3::Identity()).norm(), 1e-12);
    EXPECT_LT(self.world_to_camera.translation.norm(), 1e-12);
}

TEST(PipelineOptionsTest, JsonRoundTrip) {
    PipelineOptions o;
    o.side_heads = false;
    const PipelineOptions back = PipelineOptions::from_json(o.to_json());
    EXPECT_FALSE(back.side_heads);
    EXPECT_TRUE(back.nns);
    EXPECT_THROW(PipelineOptions::from_json(nlohmann::json{{"nns", "yes"}}), ConfigError);
}

} // namespace
} // namespace duosplat
