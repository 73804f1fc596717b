// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/checkpoint.hpp"

#include "duosplat/training.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>

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

UNetConfig tiny_unet() {
    UNetConfig c;
    c.width = 4;
    c.levels = 1;
    c.groups = 2;
    return c;
}

TEST(Checkpoint, FileRoundTripIsExact) {
    testing::TempDir dir("ckpt");
    PointMapNet net(tiny_net(), 1);
    net.log_delta().value(0, 0) = 0.125;
    const Checkpoint c = make_stage1_checkpoint(net, {3.0, 2.5, 1.0});
    save_checkpoint(dir.path() / "a.ckpt", c);
    const Checkpoint back = load_checkpoint(dir.path() / "a.ckpt");
    EXPECT_EQ(back.kind, CheckpointKind::stage1);
    EXPECT_EQ(back.config, c.config);
    EXPECT_EQ(back.fingerprint, c.fingerprint);
    EXPECT_EQ(back.delta, c.delta);
    EXPECT_EQ(back.loss_history, c.loss_history);
    ASSERT_EQ(back.tensors.size(), c.tensors.size());
    for (std::size_t i = 0; i < c.tensors.size(); ++i) {
        EXPECT_EQ(back.tensors[i].first, c.tensors[i].first);
        EXPECT_EQ(back.tensors[i].second, c.tensors[i].second);
    }
    const auto restored = load_stage1(back);
    for (const nn::Parameter *p : net.params().all()) {
        EXPECT_EQ(restored->params().at(p->name).value, p->value);
    }
    EXPECT_DOUBLE_EQ(restored->delta(), net.delta());
}

TEST(Checkpoint, SavingTwiceGivesIdenticalBytes) {
    testing::TempDir dir("ckpt");
    PointMapNet net(tiny_net(), 2);
    const Checkpoint c = make_stage1_checkpoint(net, {1.0});
    save_checkpoint(dir.path() / "a.ckpt", c);
    save_checkpoint(dir.path() / "b.ckpt", c);
    auto bytes = [](const std::filesystem::path &p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    EXPECT_EQ(bytes(dir.path() / "a.ckpt"), bytes(dir.path() / "b.ckpt"));
}

TEST(Checkpoint, RejectsCorruptFiles) {
    testing::TempDir dir("ckpt");
    EXPECT_THROW(load_checkpoint(dir.path() / "none.ckpt"), IoError);
    {
        std::ofstream out(dir.path() / "junk.ckpt", std::ios::binary);
        out << "not a checkpoint at all";
    }
    EXPECT_THROW(load_checkpoint(dir.path() / "junk.ckpt"), IoError);
    PointMapNet net(tiny_net(), 3);
    save_checkpoint(dir.path() / "full.ckpt", make_stage1_checkpoint(net, {}));
    std::filesystem::resize_file(dir.path() / "full.ckpt", std::filesystem::file_size(dir.path() / "full.ckpt") / 2);
    EXPECT_THROW(load_checkpoint(dir.path() / "full.ckpt"), IoError);
}

TEST(Checkpoint, ConfigMismatchIsRefused) {
    PointMapNet net(tiny_net(), 4);
    const Checkpoint c = make_stage1_checkpoint(net, {});
    NetConfig other = tiny_net();
    other.embed_dim = 32;
    EXPECT_THROW(load_stage1(c, &other), FingerprintMismatch);
    const NetConfig same = tiny_net();
    EXPECT_NO_THROW(load_stage1(c, &same));

    Checkpoint tampered = c;
    tampered.config["embed_dim"] = 32;
    EXPECT_THROW(load_stage1(tampered), FingerprintMismatch);

    PointMapNet wide(other, 4);
    EXPECT_THROW(c.restore(wide.params()), FingerprintMismatch);
}

TEST(Checkpoint, StageTwoIsBoundToItsStageOne) {
    GaussianRegressor reg(tiny_unet(), 5);
    PipelineOptions opts;
    opts.nns = false;
    const Checkpoint c = make_stage2_checkpoint(reg, opts, 1234, {0.5});
    PipelineOptions loaded;
    const auto back = load_stage2(c, 1234, &loaded);
    EXPECT_FALSE(loaded.nns);
    EXPECT_TRUE(loaded.side_heads);
    for (const nn::Parameter *p : reg.params().all()) {
        EXPECT_EQ(back->params().at(p->name).value, p->value);
    }
    EXPECT_THROW(load_stage2(c, 999, nullptr), FingerprintMismatch);
    EXPECT_THROW(load_stage1(c), FingerprintMismatch);
    PointMapNet net(tiny_net(), 5);
    EXPECT_THROW(load_stage2(make_stage1_checkpoint(net, {}), 1234, nullptr), FingerprintMismatch);
}

} // namespace
} // namespace duosplat
