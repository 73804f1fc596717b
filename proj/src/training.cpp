// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/training.hpp"

#include "duosplat/nn/optim.hpp"
#include "duosplat/splat_render.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

namespace duosplat {

namespace {

template <typename T> T get_or(const nlohmann::json &j, const char *key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

std::vector<std::size_t> pick_subjects(const Dataset &dataset, const std::vector<int> &subjects) {
    std::vector<std::size_t> out;
    if (subjects.empty()) {
        for (std::size_t s = 0; s < dataset.subject_count(); ++s) {
            out.push_back(s);
        }
    } else {
        for (int s : subjects) {
            if (s < 0 || static_cast<std::size_t>(s) >= dataset.subject_count()) {
                throw ConfigError("subject index " + std::to_string(s) + " outside the dataset");
            }
            out.push_back(static_cast<std::size_t>(s));
        }
    }
    if (out.empty()) {
        throw InvalidInput("dataset has no subjects");
    }
    return out;
}

void check_common(long iterations, double lr, double final_lr, double wd, long log_every) {
    if (iterations < 1) {
        throw ConfigError("iterations must be positive");
    }
    if (!(lr > 0.0) || !(final_lr >= 0.0) || final_lr > lr) {
        throw ConfigError("learning rates must satisfy 0 <= final_lr <= lr, lr > 0");
    }
    if (!(wd >= 0.0)) {
        throw ConfigError("weight_decay must be non-negative");
    }
    if (log_every < 1) {
        throw ConfigError("log_every must be positive");
    }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void guard(double loss, int stage, long iter) {
    if (!std::isfinite(loss)) {
        throw DivergenceError("stage " + std::to_string(stage) + " loss is not finite at iteration " +
                              std::to_string(iter));
    }
}

} // namespace

void Stage1Config::validate() const {
    net.validate();
    check_common(iterations, lr, final_lr, weight_decay, log_every);
}

nlohmann::json Stage1Config::to_json() const {
    return {{"net", net.to_json()},         {"iterations", iterations},
            {"lr", lr},                     {"final_lr", final_lr},
            {"weight_decay", weight_decay}, {"seed", seed},
            {"subjects", subjects},         {"log_every", log_every}};
}

Stage1Config Stage1Config::from_json(const nlohmann::json &j) {
    Stage1Config c;
    try {
        if (!j.is_object()) {
            throw ConfigError("stage-1 config must be an object");
        }
        if (j.contains("net")) {
            c.net = NetConfig::from_json(j.at("net"));
        }
        c.iterations = get_or(j, "iterations", c.iterations);
        c.lr = get_or(j, "lr", c.lr);
        c.final_lr = get_or(j, "final_lr", c.final_lr);
        c.weight_decay = get_or(j, "weight_decay", c.weight_decay);
        c.seed = get_or(j, "seed", c.seed);
        c.subjects = get_or(j, "subjects", c.subjects);
        c.log_every = get_or(j, "log_every", c.log_every);
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("stage-1 config: ") + e.what());
    }
    c.validate();
    return c;
}

void Stage2Config::validate() const {
    unet.validate();
    check_common(iterations, lr, final_lr, weight_decay, log_every);
    if (!(beta >= 0.0 && beta <= 1.0)) {
        throw ConfigError("beta must lie in [0, 1]");
    }
    if (novel_views_per_step < 0) {
        throw ConfigError("novel_views_per_step must be non-negative");
    }
    if (!(canonical_probability >= 0.0 && canonical_probability <= 1.0)) {
        throw ConfigError("canonical_probability must lie in [0, 1]");
    }
}

nlohmann::json Stage2Config::to_json() const {
    return {{"unet", unet.to_json()},
            {"options", options.to_json()},
            {"beta", beta},
            {"iterations", iterations},
            {"lr", lr},
            {"final_lr", final_lr},
            {"weight_decay", weight_decay},
            {"novel_views_per_step", novel_views_per_step},
            {"canonical_probability", canonical_probability},
            {"seed", seed},
            {"subjects", subjects},
            {"log_every", log_every}};
}

Stage2Config Stage2Config::from_json(const nlohmann::json &j) {
    Stage2Config c;
    try {
        if (!j.is_object()) {
            throw ConfigError("stage-2 config must be an object");
        }
        if (j.contains("unet")) {
            c.unet = UNetConfig::from_json(j.at("unet"));
        }
        if (j.contains("options")) {
            c.options = PipelineOptions::from_json(j.at("options"));
        }
        c.beta = get_or(j, "beta", c.beta);
        c.iterations = get_or(j, "iterations", c.iterations);
        c.lr = get_or(j, "lr", c.lr);
        c.final_lr = get_or(j, "final_lr", c.final_lr);
        c.weight_decay = get_or(j, "weight_decay", c.weight_decay);
        c.novel_views_per_step = get_or(j, "novel_views_per_step", c.novel_views_per_step);
        c.canonical_probability = get_or(j, "canonical_probability", c.canonical_probability);
        c.seed = get_or(j, "seed", c.seed);
        c.subjects = get_or(j, "subjects", c.subjects);
        c.log_every = get_or(j, "log_every", c.log_every);
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("stage-2 config: ") + e.what());
    }
    c.validate();
    return c;
}

SubjectInput subject_input(const Dataset &dataset, std::size_t subject) {
    ViewBundle f = dataset.load(subject, "front");
    ViewBundle b = dataset.load(subject, "back");
    return SubjectInput{std::move(f.image), std::move(f.mask), std::move(b.image), std::move(b.mask)};
}

Stage1Sample load_stage1_sample(const Dataset &dataset, std::size_t subject) {
    Stage1Sample s;
    std::array<ViewBundle, 4> views;
    for (std::size_t v = 0; v < 4; ++v) {
        views[v] = dataset.load(subject, to_string(kCanonicalViews[v]));
    }
    const RigidTransform to_front = views[0].camera.world_to_camera;
    for (std::size_t v = 0; v < 4; ++v) {
        PointMap world = unproject_depth(views[v].depth, views[v].mask, views[v].camera);
        s.gt_points[v] = transform_pointmap(world, to_front);
        s.gt_masks[v] = views[v].mask;
    }
    s.input = SubjectInput{views[0].image, views[0].mask, views[1].image, views[1].mask};
    s.front = prepare_image(s.input.front, s.input.front_mask);
    s.back = prepare_image(s.input.back, s.input.back_mask);
    s.height = dataset.manifest().subjects.at(subject).height;
    return s;
}

Stage1LossGrad stage1_step_gradients(PointMapNet &net, const Stage1Sample &sample) {
    nn::Tape tape;
    HeadOutputs out = net.forward(tape, tape.constant(sample.front), tape.constant(sample.back));
    std::array<nn::Tensor, 4> raw;
    for (std::size_t v = 0; v < 4; ++v) {
        raw[v] = out.raw[v].value();
    }
    Stage1LossGrad lg = stage1_loss_grad(raw, net.log_delta().value(0, 0), sample.gt_points, sample.gt_masks);
    std::vector<std::pair<nn::Var, nn::Tensor>> seeds;
    for (std::size_t v = 0; v < 4; ++v) {
        seeds.emplace_back(out.raw[v], lg.d_raw[v]);
    }
    tape.backward(seeds);
    if (net.log_delta().trainable) {
        net.log_delta().grad(0, 0) += lg.d_log_delta;
    }
    return lg;
}

Stage1Result train_stage1(const Dataset &dataset, const Stage1Config &config, std::ostream *log) {
    config.validate();
    if (dataset.resolution() != config.net.image_size) {
        throw ConfigError("dataset resolution " + std::to_string(dataset.resolution()) +
                          " differs from net image_size " + std::to_string(config.net.image_size));
    }
    const std::vector<std::size_t> subjects = pick_subjects(dataset, config.subjects);
    std::vector<Stage1Sample> samples;
    for (std::size_t s : subjects) {
        samples.push_back(load_stage1_sample(dataset, s));
    }

    Stage1Result result;
    result.net = std::make_unique<PointMapNet>(config.net, config.seed);
    PointMapNet &net = *result.net;
    nn::AdamW opt(nn::AdamWConfig{.weight_decay = config.weight_decay});
    std::mt19937_64 rng(config.seed ^ 0x5eed0001ULL);
    std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
    const auto t0 = std::chrono::steady_clock::now();

    for (long it = 0; it < config.iterations; ++it) {
        const Stage1Sample &sample = samples[pick(rng)];
        net.params().zero_grad();
        const Stage1LossGrad lg = stage1_step_gradients(net, sample);
        const double loss = lg.terms.total();
        guard(loss, 1, it);
        const double lr = nn::cosine_lr(it, config.iterations, config.lr, config.final_lr);
        opt.step(net.params(), lr);
        result.history.push_back(loss);
        if (log != nullptr && (it % config.log_every == 0 || it + 1 == config.iterations)) {
            nlohmann::json line = {{"stage", 1},          {"iter", it},
                                   {"loss", loss},        {"reg", lg.terms.reg},
                                   {"conf", lg.terms.conf}, {"lr", lr},
                                   {"delta", net.delta()}, {"elapsed_s", seconds_since(t0)}};
            *log << line.dump() << '\n' << std::flush;
        }
    }
    return result;
}

Checkpoint make_stage1_checkpoint(const PointMapNet &net, const std::vector<double> &history) {
    Checkpoint c;
    c.kind = CheckpointKind::stage1;
    c.config = net.config().to_json();
    c.fingerprint = net.config().fingerprint();
    c.delta = net.delta();
    c.store(net.params());
    c.loss_history = history;
    return c;
}

std::unique_ptr<PointMapNet> load_stage1(const Checkpoint &ckpt, const NetConfig *expected) {
    if (ckpt.kind != CheckpointKind::stage1) {
        throw FingerprintMismatch("checkpoint is not a stage-1 checkpoint");
    }
    NetConfig cfg;
    try {
        cfg = NetConfig::from_json(ckpt.config);
    } catch (const ConfigError &e) {
        throw FingerprintMismatch(std::string("stage-1 checkpoint config unreadable: ") + e.what());
    }
    if (cfg.fingerprint() != ckpt.fingerprint) {
        throw FingerprintMismatch("stage-1 checkpoint config does not match its fingerprint");
    }
    if (expected != nullptr && expected->fingerprint() != ckpt.fingerprint) {
        throw FingerprintMismatch("stage-1 checkpoint was trained with a different network config");
    }
    auto net = std::make_unique<PointMapNet>(cfg, 0);
    ckpt.restore(net->params());
    return net;
}

double stage2_step_gradients(GaussianRegressor &regressor, const PointStage &stage,
                             const std::vector<std::pair<CameraModel, RgbImage>> &targets, double beta,
                             const Vec3 &background) {
    if (targets.empty()) {
        throw InvalidInput("stage-2 step needs at least one target view");
    }
    nn::Tape tape;
    std::array<nn::Var, 4> outs;
    std::array<RawGaussianOutput, 4> raws;
    std::vector<GaussianSet> parts;
    std::vector<std::size_t> sizes;
    std::vector<std::size_t> active;
    for (std::size_t v = 0; v < 4; ++v) {
        if (stage.maps[v].valid_count() == 0) {
            continue;
        }
        const PointMap &pm = stage.maps[v];
        nn::Var in = tape.constant(GaussianRegressor::make_input(pm, stage.images[v], stage.center));
        tape.set_spatial(in, pm.height(), pm.width());
        outs[v] = regressor.forward(tape, in);
        raws[v] = RawGaussianOutput{outs[v].value(), pm.height(), pm.width()};
        parts.push_back(activate(raws[v], pm, pm.valid, stage.limits, kCanonicalViews[v]));
        sizes.push_back(parts.back().size());
        active.push_back(v);
    }
    if (active.empty()) {
        return 0.0;
    }
    const GaussianSet set = assemble(parts);

    GaussianGrads total = GaussianGrads::zeros(set.size());
    const double inv = 1.0 / static_cast<double>(targets.size());
    double loss = 0.0;
    for (const auto &[camera, gt] : targets) {
        const RenderOutput r = render(set, camera, background);
        Stage2Loss l = stage2_loss_grad(r.image, gt, beta);
        loss += l.total * inv;
        for (std::size_t i = 0; i < l.d_render.size(); ++i) {
            l.d_render[i] *= inv;
        }
        const GaussianGrads g = render_backward(set, camera, background, l.d_render);
        for (std::size_t i = 0; i < set.size(); ++i) {
            total.mu[i] += g.mu[i];
            total.color[i] += g.color[i];
            total.opacity[i] += g.opacity[i];
            total.scale[i] += g.scale[i];
            total.quat[i] += g.quat[i];
        }
    }
    const std::vector<GaussianGrads> per_view = split_grads(total, sizes);
    std::vector<std::pair<nn::Var, nn::Tensor>> seeds;
    for (std::size_t k = 0; k < active.size(); ++k) {
        const std::size_t v = active[k];
        seeds.emplace_back(outs[v], activate_backward(raws[v], stage.maps[v].valid, stage.limits, per_view[k]));
    }
    tape.backward(seeds);
    return loss;
}

Stage2Result train_stage2(const Dataset &dataset, const PointMapNet &stage1, const Stage2Config &config,
                          std::ostream *log) {
    config.validate();
    if (dataset.resolution() != stage1.config().image_size) {
        throw ConfigError("dataset resolution differs from the stage-1 image_size");
    }
    const std::vector<std::size_t> subjects = pick_subjects(dataset, config.subjects);
    std::vector<PointStage> stages;
    std::vector<CameraModel> fronts;
    for (std::size_t s : subjects) {
        stages.push_back(run_point_stage(stage1, subject_input(dataset, s), config.options));
        fronts.push_back(dataset.load(s, "front").camera);
    }

    Stage2Result result;
    result.regressor = std::make_unique<GaussianRegressor>(config.unet, config.seed);
    GaussianRegressor &reg = *result.regressor;
    nn::AdamW opt(nn::AdamWConfig{.weight_decay = config.weight_decay});
    std::mt19937_64 rng(config.seed ^ 0x5eed0002ULL);
    std::uniform_int_distribution<std::size_t> pick(0, subjects.size() - 1);
    std::uniform_real_distribution<double> azimuth(0.0, 360.0);
    std::bernoulli_distribution canonical(config.canonical_probability);
    const auto t0 = std::chrono::steady_clock::now();

    for (long it = 0; it < config.iterations; ++it) {
        const std::size_t k = pick(rng);
        std::vector<double> azimuths;
        for (int n = 0; n < config.novel_views_per_step; ++n) {
            azimuths.push_back(azimuth(rng));
        }
        for (ViewTag v : kCanonicalViews) {
            if (canonical(rng)) {
                azimuths.push_back(canonical_azimuth(v));
            }
        }
        if (azimuths.empty()) {
            azimuths.push_back(azimuth(rng));
        }
        std::vector<std::pair<CameraModel, RgbImage>> targets;
        for (double az : azimuths) {
            ViewBundle gt = dataset.render_at(subjects[k], az);
            targets.emplace_back(camera_in_frame(gt.camera, fronts[k]), std::move(gt.image));
        }

        reg.params().zero_grad();
        const double loss = stage2_step_gradients(reg, stages[k], targets, config.beta,
                                                  dataset.manifest().spec.render.background);
        guard(loss, 2, it);
        const double lr = nn::cosine_lr(it, config.iterations, config.lr, config.final_lr);
        opt.step(reg.params(), lr);
        result.history.push_back(loss);
        if (log != nullptr && (it % config.log_every == 0 || it + 1 == config.iterations)) {
            nlohmann::json line = {{"stage", 2}, {"iter", it},   {"loss", loss},
                                   {"views", azimuths.size()}, {"lr", lr}, {"elapsed_s", seconds_since(t0)}};
            *log << line.dump() << '\n' << std::flush;
        }
    }
    return result;
}

std::uint64_t stage2_fingerprint(const UNetConfig &unet, const PipelineOptions &options, std::uint64_t stage1) {
    const nlohmann::json j = {{"unet", unet.to_json()}, {"options", options.to_json()}, {"stage1", stage1}};
    return fnv1a64(j.dump());
}

Checkpoint make_stage2_checkpoint(const GaussianRegressor &regressor, const PipelineOptions &options,
                                  std::uint64_t stage1_fingerprint, const std::vector<double> &history) {
    Checkpoint c;
    c.kind = CheckpointKind::stage2;
    c.config = {{"unet", regressor.config().to_json()},
                {"options", options.to_json()},
                {"stage1", stage1_fingerprint}};
    c.fingerprint = stage2_fingerprint(regressor.config(), options, stage1_fingerprint);
    c.store(regressor.params());
    c.loss_history = history;
    return c;
}

std::unique_ptr<GaussianRegressor> load_stage2(const Checkpoint &ckpt, std::uint64_t stage1_fingerprint,
                                               PipelineOptions *options) {
    if (ckpt.kind != CheckpointKind::stage2) {
        throw FingerprintMismatch("checkpoint is not a stage-2 checkpoint");
    }
    UNetConfig unet;
    PipelineOptions opts;
    std::uint64_t recorded = 0;
    try {
        unet = UNetConfig::from_json(ckpt.config.at("unet"));
        opts = PipelineOptions::from_json(ckpt.config.at("options"));
        recorded = ckpt.config.at("stage1").get<std::uint64_t>();
    } catch (const std::exception &e) {
        throw FingerprintMismatch(std::string("stage-2 checkpoint config unreadable: ") + e.what());
    }
    if (stage2_fingerprint(unet, opts, recorded) != ckpt.fingerprint) {
        throw FingerprintMismatch("stage-2 checkpoint config does not match its fingerprint");
    }
    if (recorded != stage1_fingerprint) {
        throw FingerprintMismatch("stage-2 checkpoint was trained on a different stage-1 network");
    }
    auto reg = std::make_unique<GaussianRegressor>(unet, 0);
    ckpt.restore(reg->params());
    if (options != nullptr) {
        *options = opts;
    }
    return reg;
}

double EvalReport::mean_psnr() const {
    double sum = 0.0;
    long n = 0;
    for (const EvalRow &r : rows) {
        if (r.status == "ok" && std::isfinite(r.psnr)) {
            sum += r.psnr;
            ++n;
        }
    }
    return n > 0 ? sum / static_cast<double>(n) : std::nan("");
}

double EvalReport::mean_ssim() const {
    double sum = 0.0;
    long n = 0;
    for (const EvalRow &r : rows) {
        if (r.status == "ok" && std::isfinite(r.psnr)) {
            sum += r.ssim;
            ++n;
        }
    }
    return n > 0 ? sum / static_cast<double>(n) : std::nan("");
}

std::size_t EvalReport::skipped() const {
    std::size_t n = 0;
    for (const EvalRow &r : rows) {
        n += r.status != "ok";
    }
    return n;
}

std::string EvalReport::csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "subject,view,psnr,ssim,lpips,status\n";
    for (const EvalRow &r : rows) {
        os << r.subject << ',' << r.view << ',';
        if (r.status == "ok") {
            if (std::isinf(r.psnr)) {
                os << "inf";
            } else {
                os << r.psnr;
            }
            os << ',' << r.ssim;
        } else {
            os << ',';
        }
        os << ",," << r.status << '\n';
    }
    return os.str();
}

nlohmann::json EvalReport::summary() const {
    const double mp = mean_psnr();
    const double ms = mean_ssim();
    nlohmann::json j = {{"rows", rows.size()}, {"skipped", skipped()}};
    j["mean_psnr"] = std::isfinite(mp) ? nlohmann::json(mp) : nlohmann::json(nullptr);
    j["mean_ssim"] = std::isfinite(ms) ? nlohmann::json(ms) : nlohmann::json(nullptr);
    std::size_t finite = 0;
    for (const EvalRow &r : rows) {
        finite += r.status == "ok" && std::isfinite(r.psnr);
    }
    j["finite_rows"] = finite;
    return j;
}

void EvalReport::write(const std::filesystem::path &dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream c(dir / "report.csv", std::ios::binary);
    std::ofstream s(dir / "summary.json", std::ios::binary);
    if (!c || !s) {
        throw IoError("cannot write report into " + dir.string());
    }
    c << csv();
    s << summary().dump(2) << '\n';
}

EvalReport evaluate_views(const Dataset &dataset, const std::vector<std::string> &views, const ViewRenderer &render) {
    EvalReport report;
    for (std::size_t s = 0; s < dataset.subject_count(); ++s) {
        const std::string id = dataset.manifest().subjects[s].id;
        for (const std::string &view : views) {
            EvalRow row;
            row.subject = id;
            row.view = view;
            if (!dataset.has_view(s, view)) {
                std::cerr << "warning: " << id << " has no view " << view << ", skipped\n";
                row.status = "missing";
                row.psnr = row.ssim = std::nan("");
                report.rows.push_back(row);
                continue;
            }
            const ViewBundle gt = dataset.load(s, view);
            const RgbImage out = render(s, gt);
            const BoundingBox box = count_true(gt.mask) > 0 ? mask_bbox(gt.mask, 5)
                                                             : full_frame(gt.image.height(), gt.image.width());
            row.psnr = psnr(out, gt.image, box);
            row.ssim = ssim(out, gt.image, box);
            report.rows.push_back(row);
        }
    }
    return report;
}

namespace {

EvalReport evaluate_sets(const PointMapNet &stage1, const PipelineOptions &options, const Dataset &dataset,
                         const std::vector<std::string> &views,
                         const std::function<GaussianSet(const PointStage &)> &make) {
    std::size_t cached = static_cast<std::size_t>(-1);
    GaussianSet set;
    CameraModel front;
    const Vec3 bg = dataset.manifest().spec.render.background;
    return evaluate_views(dataset, views, [&](std::size_t s, const ViewBundle &gt) {
        if (s != cached) {
            set = make(run_point_stage(stage1, subject_input(dataset, s), options));
            front = dataset.load(s, "front").camera;
            cached = s;
        }
        return render(set, camera_in_frame(gt.camera, front), bg).image;
    });
}

} // namespace

EvalReport evaluate(const PointMapNet &stage1, const GaussianRegressor &regressor, const PipelineOptions &options,
                    const Dataset &dataset, const std::vector<std::string> &views) {
    return evaluate_sets(stage1, options, dataset, views,
                         [&](const PointStage &st) { return regress_gaussians(regressor, st); });
}

EvalReport evaluate_baseline(const PointMapNet &stage1, const Dataset &dataset, const std::vector<std::string> &views) {
    return evaluate_sets(stage1, PipelineOptions{}, dataset, views,
                         [](const PointStage &st) { return baseline_gaussians(st); });
}

std::vector<std::string> held_out_views(const Dataset &dataset) {
    std::vector<std::string> out = {"left", "right"};
    if (dataset.subject_count() == 0) {
        return out;
    }
    for (const std::string &v : dataset.views_of(0)) {
        if (v != "front" && v != "back" && v != "left" && v != "right") {
            out.push_back(v);
        }
    }
    return out;
}

} // namespace duosplat
