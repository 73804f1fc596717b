// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/training.hpp"

#include "duosplat/nn/optim.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

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
    c.levels = 2;
    c.groups = 2;
    return c;
}

class TrainingTest : public ::testing::Test {
  protected:
    static void SetUpTestSuite() {
        dir_ = new testing::TempDir("training");
        DatasetSpec spec;
        spec.n_subjects = 2;
        spec.novel_views = 2;
        spec.resolution = 16;
        make_dataset(spec, dir_->path());
    }
    static void TearDownTestSuite() {
        delete dir_;
        dir_ = nullptr;
    }
    static Dataset dataset() { return Dataset::open(dir_->path()); }

    static Stage1Config quick_stage1(long iters) {
        Stage1Config c;
        c.net = tiny_net();
        c.iterations = iters;
        c.lr = 1e-3;
        c.seed = 4;
        return c;
    }

    static testing::TempDir *dir_;
};

testing::TempDir *TrainingTest::dir_ = nullptr;

TEST(TrainingConfig, JsonRoundTripAndValidation) {
    Stage1Config s1;
    s1.net = tiny_net();
    s1.subjects = {0, 1};
    EXPECT_EQ(Stage1Config::from_json(s1.to_json()).to_json(), s1.to_json());
    Stage2Config s2;
    s2.options.nns = false;
    s2.canonical_probability = 0.25;
    EXPECT_EQ(Stage2Config::from_json(s2.to_json()).to_json(), s2.to_json());

    nlohmann::json bad = s1.to_json();
    bad["iterations"] = 0;
    EXPECT_THROW(Stage1Config::from_json(bad), ConfigError);
    bad = s1.to_json();
    bad["lr"] = "fast";
    EXPECT_THROW(Stage1Config::from_json(bad), ConfigError);
    nlohmann::json bad2 = s2.to_json();
    bad2["beta"] = 1.2;
    EXPECT_THROW(Stage2Config::from_json(bad2), ConfigError);
    EXPECT_THROW(Stage2Config::from_json(nlohmann::json::array()), ConfigError);
}

TEST(TrainingSchedule, CosineEndpoints) {
    EXPECT_NEAR(nn::cosine_lr(0, 2000, 1e-4, 1e-7), 1e-4, 1e-15);
    EXPECT_NEAR(nn::cosine_lr(1999, 2000, 1e-4, 1e-7), 1e-7, 1e-12);
}

TEST_F(TrainingTest, StageOneSampleIsInFrontFrame) {
    const Dataset ds = dataset();
    const Stage1Sample s = load_stage1_sample(ds, 0);
    const ViewBundle front = ds.load(0, "front");
    // Front GT points reproject onto their own pixels through the front intrinsics.
    for (int r = 0; r < 16; ++r) {
        for (int c = 0; c < 16; ++c) {
            if (!s.gt_masks[0](r, c)) {
                continue;
            }
            const Vec3 p = s.gt_points[0].points(r, c);
            EXPECT_NEAR(front.camera.fx * p.x() / p.z() + front.camera.cx, c + 0.5, 1e-9);
            EXPECT_NEAR(front.camera.fy * p.y() / p.z() + front.camera.cy, r + 0.5, 1e-9);
        }
    }
    EXPECT_GT(s.gt_points[2].valid_count(), 0u);
    EXPECT_EQ(s.height, ds.manifest().subjects[0].height);
}

TEST_F(TrainingTest, StageOneIsDeterministic) {
    const Dataset ds = dataset();
    const Stage1Result a = train_stage1(ds, quick_stage1(6));
    const Stage1Result b = train_stage1(ds, quick_stage1(6));
    Stage1Config other = quick_stage1(6);
    other.seed = 5;
    const Stage1Result c = train_stage1(ds, other);
    ASSERT_EQ(a.history.size(), 6u);
    EXPECT_EQ(a.history, b.history);
    EXPECT_NE(a.history, c.history);
}

TEST_F(TrainingTest, StageOneOverfitsOneSubject) {
    const Dataset ds = dataset();
    Stage1Config cfg = quick_stage1(400);
    cfg.subjects = {0};
    const Stage1Sample sample = load_stage1_sample(ds, 0);
    PointMapNet init(cfg.net, cfg.seed);
    const double reg0 = stage1_step_gradients(init, sample).terms.reg;
    std::ostringstream log;
    const Stage1Result r = train_stage1(ds, cfg, &log);
    const double reg1 = stage1_step_gradients(*r.net, sample).terms.reg;
    EXPECT_LT(reg1, 0.1 * reg0) << "initial " << reg0 << " final " << reg1;
    std::istringstream lines(log.str());
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
        const nlohmann::json j = nlohmann::json::parse(line);
        EXPECT_TRUE(std::isfinite(j.at("loss").get<double>()));
        EXPECT_EQ(j.at("stage"), 1);
        ++n;
    }
    EXPECT_GE(n, 2);
}

TEST_F(TrainingTest, DivergenceIsReported) {
    const Dataset ds = dataset();
    Stage1Config cfg = quick_stage1(40);
    cfg.lr = 1e200;
    cfg.final_lr = 1e200;
    EXPECT_THROW(train_stage1(ds, cfg), DivergenceError);
}

TEST_F(TrainingTest, ResolutionMismatchIsAConfigError) {
    const Dataset ds = dataset();
    Stage1Config cfg = quick_stage1(1);
    cfg.net.image_size = 32;
    EXPECT_THROW(train_stage1(ds, cfg), ConfigError);
    cfg = quick_stage1(1);
    cfg.subjects = {7};
    EXPECT_THROW(train_stage1(ds, cfg), ConfigError);
}

TEST_F(TrainingTest, StageTwoLeavesStageOneUntouched) {
    const Dataset ds = dataset();
    const Stage1Result s1 = train_stage1(ds, quick_stage1(3));
    std::vector<nn::Tensor> before;
    for (const nn::Parameter *p : s1.net->params().all()) {
        before.push_back(p->value);
    }
    Stage2Config cfg;
    cfg.unet = tiny_unet();
    cfg.iterations = 4;
    cfg.lr = 1e-3;
    std::ostringstream log;
    cfg.log_every = 1;
    const Stage2Result s2 = train_stage2(ds, *s1.net, cfg, &log);
    std::size_t k = 0;
    for (const nn::Parameter *p : s1.net->params().all()) {
        EXPECT_EQ(p->value, before[k++]) << p->name;
    }
    ASSERT_EQ(s2.history.size(), 4u);
    for (double l : s2.history) {
        EXPECT_TRUE(std::isfinite(l));
    }
    const std::string text = log.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);

    const Stage2Result again = train_stage2(ds, *s1.net, cfg);
    EXPECT_EQ(again.history, s2.history);

    const Checkpoint c = make_stage2_checkpoint(*s2.regressor, cfg.options, s1.net->config().fingerprint(), s2.history);
    EXPECT_NO_THROW(load_stage2(c, s1.net->config().fingerprint()));
    EXPECT_THROW(load_stage2(c, s1.net->config().fingerprint() + 1), FingerprintMismatch);
}

// Ground-truth points stand in for the first stage so every pixel lands on screen.
PointStage oracle_stage(const Dataset &ds, std::size_t subject) {
    const Stage1Sample s = load_stage1_sample(ds, subject);
    PointStage st;
    for (std::size_t v = 0; v < 4; ++v) {
        st.maps[v] = s.gt_points[v];
        st.images[v] = ds.load(subject, to_string(kCanonicalViews[v])).image;
    }
    Vec3 sum = Vec3::Zero();
    std::size_t n = 0;
    for (const PointMap &m : st.maps) {
        for (const Vec3 &p : m.valid_points()) {
            sum += p;
            ++n;
        }
    }
    st.center = sum / static_cast<double>(n);
    st.limits = ActivationLimits::from_diagonal(bbox_diagonal(st.maps));
    return st;
}

TEST_F(TrainingTest, StageTwoGradientReachesNearlyEveryWeight) {
    const Dataset ds = dataset();
    const PointStage st = oracle_stage(ds, 0);
    const CameraModel front = ds.load(0, "front").camera;
    std::vector<std::pair<CameraModel, RgbImage>> targets;
    for (double az : {20.0, 135.0, 250.0}) {
        ViewBundle gt = ds.render_at(0, az);
        targets.emplace_back(camera_in_frame(gt.camera, front), gt.image);
    }
    GaussianRegressor reg(tiny_unet(), 9);
    reg.params().zero_grad();
    const double loss = stage2_step_gradients(reg, st, targets, 0.8);
    EXPECT_GT(loss, 0.0);
    std::size_t nonzero = 0;
    std::size_t total = 0;
    for (const nn::Parameter *p : reg.params().all()) {
        for (long i = 0; i < p->grad.size(); ++i) {
            nonzero += p->grad.data()[i] != 0.0;
            ++total;
        }
    }
    EXPECT_GE(static_cast<double>(nonzero), 0.99 * static_cast<double>(total))
        << nonzero << " of " << total << " weights have a gradient";

    // One weight, perturbed, moves the rendered loss in the direction the gradient predicts.
    nn::Parameter &w = reg.params().at(reg.params().all().front()->name);
    long best = 0;
    for (long i = 1; i < w.grad.size(); ++i) {
        if (std::abs(w.grad.data()[i]) > std::abs(w.grad.data()[best])) {
            best = i;
        }
    }
    const double g = w.grad.data()[best];
    const double h = 1e-4;
    w.value.data()[best] += h;
    GaussianRegressor &r = reg;
    r.params().zero_grad();
    const double moved = stage2_step_gradients(r, st, targets, 0.8);
    EXPECT_NEAR(moved - loss, g * h, 0.05 * std::abs(g * h) + 1e-12);
}

TEST_F(TrainingTest, EvaluatingGroundTruthIsPerfect) {
    const Dataset ds = dataset();
    const std::vector<std::string> views = held_out_views(ds);
    ASSERT_EQ(views.size(), 4u);
    const EvalReport rep = evaluate_views(ds, views, [](std::size_t, const ViewBundle &gt) { return gt.image; });
    ASSERT_EQ(rep.rows.size(), ds.subject_count() * views.size());
    for (const EvalRow &r : rep.rows) {
        EXPECT_EQ(r.status, "ok");
        EXPECT_TRUE(std::isinf(r.psnr));
        EXPECT_NEAR(r.ssim, 1.0, 1e-12);
    }
    EXPECT_TRUE(std::isnan(rep.mean_psnr()));
    EXPECT_EQ(rep.summary().at("finite_rows"), 0);
}

TEST_F(TrainingTest, ReportMeansMatchRecomputationFromCsv) {
    const Dataset ds = dataset();
    std::vector<std::string> views = {"left", "right", "no_such_view"};
    const EvalReport rep = evaluate_views(ds, views, [](std::size_t s, const ViewBundle &gt) {
        RgbImage out = gt.image;
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = (out[i] * 0.9 + Vec3::Constant(0.03 * static_cast<double>(s + 1))).cwiseMin(1.0);
        }
        return out;
    });
    ASSERT_EQ(rep.rows.size(), 6u);
    EXPECT_EQ(rep.skipped(), 2u);

    testing::TempDir out("report");
    rep.write(out.path());
    std::ifstream csv(out.path() / "report.csv");
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "subject,view,psnr,ssim,lpips,status");
    double sum = 0.0;
    int n = 0;
    int rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            f.push_back(cell);
        }
        f.resize(6);
        if (f[5] == "ok" && f[2] != "inf") {
            sum += std::stod(f[2]);
            ++n;
        }
    }
    EXPECT_EQ(rows, 6);
    ASSERT_EQ(n, 4);
    EXPECT_NEAR(rep.mean_psnr(), sum / n, 1e-8);
    std::ifstream js(out.path() / "summary.json");
    const nlohmann::json summary = nlohmann::json::parse(js);
    EXPECT_NEAR(summary.at("mean_psnr").get<double>(), sum / n, 1e-8);
    EXPECT_EQ(summary.at("skipped"), 2);
}

TEST_F(TrainingTest, EvaluationIsDeterministic) {
    const Dataset ds = dataset();
    const Stage1Result s1 = train_stage1(ds, quick_stage1(2));
    GaussianRegressor reg(tiny_unet(), 1);
    const auto views = held_out_views(ds);
    EXPECT_EQ(evaluate(*s1.net, reg, {}, ds, views).csv(), evaluate(*s1.net, reg, {}, ds, views).csv());
    EXPECT_EQ(evaluate_baseline(*s1.net, ds, views).rows.size(), 8u);
}

} // namespace
} // namespace duosplat
