// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "duosplat/checkpoint.hpp"
#include "duosplat/dataset.hpp"
#include "duosplat/metrics.hpp"
#include "duosplat/pipeline.hpp"

#include <functional>
#include <iosfwd>
#include <memory>

namespace duosplat {

struct Stage1Config {
    NetConfig net;
    long iterations = 2000;
    double lr = 1e-4;
    double final_lr = 1e-7;
    double weight_decay = 5e-2;
    std::uint64_t seed = 0;
    /// Subject indices to train on; empty means all.
    std::vector<int> subjects;
    long log_every = 50;

    void validate() const;
    nlohmann::json to_json() const;
    static Stage1Config from_json(const nlohmann::json &j);
};

struct Stage2Config {
    UNetConfig unet;
    PipelineOptions options;
    double beta = 0.8;
    long iterations = 2000;
    double lr = 1e-4;
    double final_lr = 1e-7;
    double weight_decay = 5e-2;
    /// Random-azimuth supervision views per step.
    int novel_views_per_step = 2;
    /// Each canonical view joins a step's supervision with this probability (0 disables).
    double canonical_probability = 0.5;
    std::uint64_t seed = 0;
    std::vector<int> subjects;
    long log_every = 50;

    void validate() const;
    nlohmann::json to_json() const;
    static Stage2Config from_json(const nlohmann::json &j);
};

/// Network inputs and point supervision of one subject (GT points in the front camera frame).
struct Stage1Sample {
    SubjectInput input;
    nn::Tensor front;
    nn::Tensor back;
    std::array<PointMap, 4> gt_points;
    std::array<Mask, 4> gt_masks;
    double height = 0.0;
};

SubjectInput subject_input(const Dataset &dataset, std::size_t subject);
Stage1Sample load_stage1_sample(const Dataset &dataset, std::size_t subject);

struct Stage1Result {
    std::unique_ptr<PointMapNet> net;
    std::vector<double> history;
};

/// Optimizes the pointmap network. Writes one JSON object per logged step to `log`.
/// Throws DivergenceError on a non-finite loss.
Stage1Result train_stage1(const Dataset &dataset, const Stage1Config &config, std::ostream *log = nullptr);

/// Loss, parameter gradients (accumulated into the net) and raw outputs for one sample.
Stage1LossGrad stage1_step_gradients(PointMapNet &net, const Stage1Sample &sample);

Checkpoint make_stage1_checkpoint(const PointMapNet &net, const std::vector<double> &history);
/// Throws FingerprintMismatch when the checkpoint is not a stage-1 checkpoint, its config does
/// not hash to its fingerprint, or `expected` is given and differs.
std::unique_ptr<PointMapNet> load_stage1(const Checkpoint &ckpt, const NetConfig *expected = nullptr);

struct Stage2Result {
    std::unique_ptr<GaussianRegressor> regressor;
    std::vector<double> history;
};

/// Optimizes the regressor through the renderer with `stage1` frozen.
Stage2Result train_stage2(const Dataset &dataset, const PointMapNet &stage1, const Stage2Config &config,
                          std::ostream *log = nullptr);

/// Per-view parameter gradients for one step (accumulated into the regressor) and the mean loss.
/// Exposed for gradient-path checks.
double stage2_step_gradients(GaussianRegressor &regressor, const PointStage &stage,
                             const std::vector<std::pair<CameraModel, RgbImage>> &targets, double beta,
                             const Vec3 &background = Vec3::Zero());

std::uint64_t stage2_fingerprint(const UNetConfig &unet, const PipelineOptions &options, std::uint64_t stage1);
Checkpoint make_stage2_checkpoint(const GaussianRegressor &regressor, const PipelineOptions &options,
                                  std::uint64_t stage1_fingerprint, const std::vector<double> &history);
/// Throws FingerprintMismatch when the checkpoint was trained on top of a different stage-1 network.
std::unique_ptr<GaussianRegressor> load_stage2(const Checkpoint &ckpt, std::uint64_t stage1_fingerprint,
                                               PipelineOptions *options = nullptr);

struct EvalRow {
    std::string subject;
    std::string view;
    double psnr = 0.0;
    double ssim = 0.0;
    std::string status = "ok"; ///< "ok" or "missing"
};

/// Rows in subject-major, view-minor order.
struct EvalReport {
    std::vector<EvalRow> rows;

    /// Means over rows with status ok and finite PSNR (SSIM over the same rows).
    double mean_psnr() const;
    double mean_ssim() const;
    std::size_t skipped() const;
    /// Columns: subject,view,psnr,ssim,lpips,status. lpips is reserved and left empty.
    std::string csv() const;
    nlohmann::json summary() const;
    /// Writes report.csv and summary.json into `dir`.
    void write(const std::filesystem::path &dir) const;
};

using ViewRenderer = std::function<RgbImage(std::size_t subject, const ViewBundle &gt)>;

/// Scores `render` against each stored view on the GT-mask bounding box (5 px margin).
EvalReport evaluate_views(const Dataset &dataset, const std::vector<std::string> &views, const ViewRenderer &render);

EvalReport evaluate(const PointMapNet &stage1, const GaussianRegressor &regressor, const PipelineOptions &options,
                    const Dataset &dataset, const std::vector<std::string> &views);
EvalReport evaluate_baseline(const PointMapNet &stage1, const Dataset &dataset, const std::vector<std::string> &views);

/// Left, right and every novel view of the dataset.
std::vector<std::string> held_out_views(const Dataset &dataset);

} // namespace duosplat
