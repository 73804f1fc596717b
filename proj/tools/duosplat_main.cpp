// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

// duosplat command-line tool.

#include "duosplat/image_io.hpp"
#include "duosplat/splat_render.hpp"
#include "duosplat/training.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace duosplat;

namespace {

enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kUsage = 2,
    kMissingInput = 3,
    kSchema = 4,
    kFingerprint = 5,
    kDivergence = 6,
};

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<int> resolution;
    std::string device = "cpu";
};

// Rejects keys that the defaults do not have, recursing into nested objects.
void check_keys(const nlohmann::json &given, const nlohmann::json &known, const std::string &where) {
    if (!given.is_object()) {
        throw ConfigError(where + " must be an object");
    }
    for (const auto &[key, value] : given.items()) {
        if (!known.contains(key)) {
            throw ConfigError("unknown key '" + where + "." + key + "'");
        }
        if (known.at(key).is_object()) {
            check_keys(value, known.at(key), where + "." + key);
        }
    }
}

nlohmann::json dataset_defaults() {
    const DatasetSpec d;
    return {{"subjects", d.n_subjects},
            {"novel_views", d.novel_views},
            {"resolution", d.resolution},
            {"base_seed", d.base_seed},
            {"supersample", d.render.supersample},
            {"subject", d.subject.to_json()}};
}

/// Config file with optional sections "dataset", "stage1", "stage2".
struct ConfigFile {
    nlohmann::json dataset = nlohmann::json::object();
    nlohmann::json stage1 = nlohmann::json::object();
    nlohmann::json stage2 = nlohmann::json::object();
    bool has_net = false;

    static ConfigFile load(const std::string &path) {
        ConfigFile c;
        if (path.empty()) {
            return c;
        }
        const nlohmann::json j = read_json(path);
        if (!j.is_object()) {
            throw ConfigError("config file must hold an object");
        }
        for (const auto &[key, value] : j.items()) {
            if (key == "dataset") {
                check_keys(value, dataset_defaults(), key);
                c.dataset = value;
            } else if (key == "stage1") {
                check_keys(value, Stage1Config{}.to_json(), key);
                c.stage1 = value;
                c.has_net = value.contains("net");
            } else if (key == "stage2") {
                check_keys(value, Stage2Config{}.to_json(), key);
                c.stage2 = value;
            } else {
                throw ConfigError("unknown config section '" + key + "'");
            }
        }
        return c;
    }

    DatasetSpec dataset_spec() const {
        DatasetSpec s;
        try {
            s.n_subjects = dataset.value("subjects", s.n_subjects);
            s.novel_views = dataset.value("novel_views", s.novel_views);
            s.resolution = dataset.value("resolution", s.resolution);
            s.base_seed = dataset.value("base_seed", s.base_seed);
            s.render.supersample = dataset.value("supersample", s.render.supersample);
            if (dataset.contains("subject")) {
                s.subject = SubjectConfig::from_json(dataset.at("subject"));
            }
        } catch (const nlohmann::json::exception &e) {
            throw ConfigError(std::string("dataset section: ") + e.what());
        }
        return s;
    }
};

fs::path data_root(const std::string &flag) {
    if (!flag.empty()) {
        return flag;
    }
    if (const char *env = std::getenv("DUOSPLAT_DATA_ROOT"); env != nullptr && *env != '\0') {
        return env;
    }
    return "data";
}

fs::path out_dir(const Globals &g, const char *fallback) {
    const fs::path dir = g.out.empty() ? fs::path(fallback) : fs::path(g.out);
    fs::create_directories(dir);
    return dir;
}

void require_file(const fs::path &p, const char *what) {
    if (!fs::is_regular_file(p)) {
        throw IoError(std::string(what) + " not found: " + p.string());
    }
}

Dataset open_dataset(const fs::path &root) {
    require_file(root / "manifest.json", "dataset manifest");
    return Dataset::open(root);
}

std::unique_ptr<PointMapNet> open_stage1(const fs::path &path, const ConfigFile &cfg) {
    require_file(path, "stage-1 checkpoint");
    const Checkpoint c = load_checkpoint(path);
    if (cfg.has_net) {
        const NetConfig expected = NetConfig::from_json(cfg.stage1.at("net"));
        return load_stage1(c, &expected);
    }
    return load_stage1(c);
}

std::unique_ptr<GaussianRegressor> open_stage2(const fs::path &path, const PointMapNet &stage1,
                                               PipelineOptions *options) {
    require_file(path, "stage-2 checkpoint");
    return load_stage2(load_checkpoint(path), stage1.config().fingerprint(), options);
}

void write_log(const fs::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << text;
}

// xyz normalized over the valid pixels, black elsewhere.
RgbImage pointmap_image(const PointMap &m) {
    RgbImage img(m.height(), m.width(), Vec3::Zero());
    const std::vector<Vec3> pts = m.valid_points();
    if (pts.empty()) {
        return img;
    }
    Vec3 lo = pts.front();
    Vec3 hi = pts.front();
    for (const Vec3 &p : pts) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const Vec3 span = (hi - lo).cwiseMax(1e-9);
    for (std::size_t i = 0; i < img.size(); ++i) {
        if (m.valid[i]) {
            img[i] = (m.points[i] - lo).cwiseQuotient(span);
        }
    }
    return img;
}

void write_stage_outputs(const fs::path &dir, const std::string &stem, const PointStage &st, const GaussianSet &set) {
    write_gaussian_ply(dir / (stem + ".ply"), set);
    write_point_cloud_ply(dir / (stem + "_points.ply"), st.cloud);
    for (std::size_t v = 0; v < 4; ++v) {
        write_png(dir / (std::string("pointmap_") + to_string(kCanonicalViews[v]) + ".png"), pointmap_image(st.maps[v]));
    }
    write_pseudo_view(dir / "pseudo_left", st.pseudo[0]);
    write_pseudo_view(dir / "pseudo_right", st.pseudo[1]);
}

std::vector<std::string> split_list(const std::string &s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

int run(int argc, char **argv) {
    CLI::App app{"duosplat: two-image human Gaussian reconstruction"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "JSON config with dataset/stage1/stage2 sections");
    app.add_option("--seed", g.seed, "Seed override");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--resolution", g.resolution, "Image resolution override")->check(CLI::Range(8, 4096));
    app.add_option("--device", g.device, "Compute device")->check(CLI::IsMember({"cpu", "gpu-if-available"}));

    std::string data;
    std::string stage1_path;
    std::string stage2_path;
    long iterations = 0;
    bool no_side_heads = false;
    bool no_nns = false;

    auto *gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    int subjects = 0;
    int novel = -1;
    gen->add_option("--subjects", subjects, "Number of subjects")->check(CLI::PositiveNumber);
    gen->add_option("--novel-views", novel, "Novel views per subject")->check(CLI::NonNegativeNumber);

    auto *s1 = app.add_subcommand("train-stage1", "Train the pointmap network");
    s1->add_option("--data", data, "Dataset root (default $DUOSPLAT_DATA_ROOT or ./data)");
    s1->add_option("--iterations", iterations, "Iteration override")->check(CLI::PositiveNumber);

    auto *s2 = app.add_subcommand("train-stage2", "Train the Gaussian regressor on a frozen stage-1 network");
    s2->add_option("--data", data, "Dataset root");
    s2->add_option("--stage1", stage1_path, "Stage-1 checkpoint")->required();
    s2->add_option("--iterations", iterations, "Iteration override")->check(CLI::PositiveNumber);
    s2->add_flag("--no-side-heads", no_side_heads, "Train without side pointmaps");
    s2->add_flag("--no-nns", no_nns, "Feed gray side images");

    auto *inf = app.add_subcommand("infer", "Reconstruct Gaussians from a front and a back image");
    std::string front, front_mask, back, back_mask;
    inf->add_option("--stage1", stage1_path, "Stage-1 checkpoint")->required();
    inf->add_option("--stage2", stage2_path, "Stage-2 checkpoint")->required();
    inf->add_option("--front", front, "Front image PNG")->required();
    inf->add_option("--front-mask", front_mask, "Front mask PNG")->required();
    inf->add_option("--back", back, "Back image PNG")->required();
    inf->add_option("--back-mask", back_mask, "Back mask PNG")->required();

    auto *ren = app.add_subcommand("render", "Render a Gaussian PLY");
    std::string ply;
    std::string camera_file;
    std::vector<double> azimuths;
    ren->add_option("--ply", ply, "Gaussian PLY")->required();
    auto *cam_opt = ren->add_option("--camera", camera_file, "Camera JSON in the PLY frame");
    ren->add_option("--azimuth", azimuths, "Ring-camera azimuths in degrees (front camera at 0)")
        ->excludes(cam_opt);

    auto *ev = app.add_subcommand("eval", "Score held-out views of a dataset");
    std::string views;
    bool baseline = false;
    ev->add_option("--data", data, "Dataset root");
    ev->add_option("--stage1", stage1_path, "Stage-1 checkpoint")->required();
    ev->add_option("--stage2", stage2_path, "Stage-2 checkpoint")->required();
    ev->add_option("--views", views, "Comma-separated view names (default: left, right and novel views)");
    ev->add_flag("--baseline", baseline, "Also score the no-learning baseline");

    auto *exp = app.add_subcommand("export-ply", "Export the Gaussians of one dataset subject");
    int subject = 0;
    exp->add_option("--data", data, "Dataset root");
    exp->add_option("--stage1", stage1_path, "Stage-1 checkpoint")->required();
    exp->add_option("--stage2", stage2_path, "Stage-2 checkpoint")->required();
    exp->add_option("--subject", subject, "Subject index")->check(CLI::NonNegativeNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }
    if (g.device == "gpu-if-available") {
        std::cerr << "note: no GPU backend is built in, running on the CPU\n";
    }
    const ConfigFile cfg = ConfigFile::load(g.config);

    if (*gen) {
        DatasetSpec spec = cfg.dataset_spec();
        if (subjects > 0) {
            spec.n_subjects = subjects;
        }
        if (novel >= 0) {
            spec.novel_views = novel;
        }
        if (g.resolution) {
            spec.resolution = *g.resolution;
        }
        if (g.seed) {
            spec.base_seed = *g.seed;
        }
        const fs::path dir = g.out.empty() ? data_root("") : fs::path(g.out);
        const Manifest m = make_dataset(spec, dir);
        std::cout << "wrote " << m.subjects.size() << " subjects (" << m.entries.size() << " views) to "
                  << dir.string() << "\n";
        return kOk;
    }

    if (*s1) {
        Stage1Config c = Stage1Config::from_json(cfg.stage1);
        if (iterations > 0) {
            c.iterations = iterations;
        }
        if (g.seed) {
            c.seed = *g.seed;
        }
        if (g.resolution) {
            c.net.image_size = *g.resolution;
        }
        c.validate();
        const Dataset ds = open_dataset(data_root(data));
        const fs::path dir = out_dir(g, "runs");
        std::ostringstream log;
        const Stage1Result r = train_stage1(ds, c, &log);
        write_log(dir / "stage1_log.jsonl", log.str());
        write_json(dir / "stage1_config.json", c.to_json());
        save_checkpoint(dir / "stage1.ckpt", make_stage1_checkpoint(*r.net, r.history));
        std::cout << "stage 1: final loss " << r.history.back() << ", checkpoint " << (dir / "stage1.ckpt").string()
                  << "\n";
        return kOk;
    }

    if (*s2) {
        Stage2Config c = Stage2Config::from_json(cfg.stage2);
        if (iterations > 0) {
            c.iterations = iterations;
        }
        if (g.seed) {
            c.seed = *g.seed;
        }
        if (no_side_heads) {
            c.options.side_heads = false;
        }
        if (no_nns) {
            c.options.nns = false;
        }
        c.validate();
        const Dataset ds = open_dataset(data_root(data));
        const auto net = open_stage1(stage1_path, cfg);
        const fs::path dir = out_dir(g, "runs");
        std::ostringstream log;
        const Stage2Result r = train_stage2(ds, *net, c, &log);
        write_log(dir / "stage2_log.jsonl", log.str());
        write_json(dir / "stage2_config.json", c.to_json());
        save_checkpoint(dir / "stage2.ckpt",
                        make_stage2_checkpoint(*r.regressor, c.options, net->config().fingerprint(), r.history));
        std::cout << "stage 2: final loss " << r.history.back() << ", checkpoint " << (dir / "stage2.ckpt").string()
                  << "\n";
        return kOk;
    }

    if (*inf) {
        for (const std::string *p : {&front, &front_mask, &back, &back_mask}) {
            require_file(*p, "input image");
        }
        const auto net = open_stage1(stage1_path, cfg);
        PipelineOptions options;
        const auto reg = open_stage2(stage2_path, *net, &options);
        SubjectInput in{read_png(front), read_mask_png(front_mask), read_png(back), read_mask_png(back_mask)};
        in.validate();
        if (in.front.height() != net->config().image_size || in.front.width() != net->config().image_size) {
            throw InvalidInput("input images must be " + std::to_string(net->config().image_size) + "x" +
                               std::to_string(net->config().image_size) + " for this checkpoint");
        }
        const PointStage st = run_point_stage(*net, in, options);
        const GaussianSet set = regress_gaussians(*reg, st);
        const fs::path dir = out_dir(g, "infer");
        write_stage_outputs(dir, "gaussians", st, set);
        std::cout << "wrote " << set.size() << " Gaussians to " << (dir / "gaussians.ply").string() << "\n";
        return kOk;
    }

    if (*ren) {
        require_file(ply, "Gaussian PLY");
        const GaussianSet set = read_gaussian_ply(ply);
        const fs::path dir = out_dir(g, "renders");
        if (!camera_file.empty()) {
            const CameraModel cam = camera_from_json(read_json(camera_file));
            write_png(dir / "render.png", render(set, cam).image);
            std::cout << "wrote " << (dir / "render.png").string() << "\n";
            return kOk;
        }
        if (azimuths.empty()) {
            azimuths = {0.0, 90.0, 180.0, 270.0};
        }
        const int res = g.resolution.value_or(64);
        const CameraModel ref = ring_camera(0.0, res);
        for (double az : azimuths) {
            const CameraModel cam = camera_in_frame(ring_camera(az, res), ref);
            const fs::path file = dir / ("render_" + novel_view_name(az) + ".png");
            write_png(file, render(set, cam).image);
            std::cout << "wrote " << file.string() << "\n";
        }
        return kOk;
    }

    if (*ev) {
        const Dataset ds = open_dataset(data_root(data));
        const auto net = open_stage1(stage1_path, cfg);
        PipelineOptions options;
        const auto reg = open_stage2(stage2_path, *net, &options);
        const std::vector<std::string> names = views.empty() ? held_out_views(ds) : split_list(views);
        const fs::path dir = out_dir(g, "eval");
        const EvalReport rep = evaluate(*net, *reg, options, ds, names);
        rep.write(dir);
        std::cout << "mean PSNR " << rep.mean_psnr() << " dB, mean SSIM " << rep.mean_ssim() << " over "
                  << rep.rows.size() - rep.skipped() << " views; report in " << dir.string() << "\n";
        if (baseline) {
            const EvalReport b = evaluate_baseline(*net, ds, names);
            b.write(dir / "baseline");
            std::cout << "baseline PSNR " << b.mean_psnr() << " dB, SSIM " << b.mean_ssim() << "\n";
        }
        return kOk;
    }

    if (*exp) {
        const Dataset ds = open_dataset(data_root(data));
        if (static_cast<std::size_t>(subject) >= ds.subject_count()) {
            throw InvalidInput("subject index outside the dataset");
        }
        const auto net = open_stage1(stage1_path, cfg);
        PipelineOptions options;
        const auto reg = open_stage2(stage2_path, *net, &options);
        const PointStage st = run_point_stage(*net, subject_input(ds, static_cast<std::size_t>(subject)), options);
        const GaussianSet set = regress_gaussians(*reg, st);
        const fs::path dir = out_dir(g, "export");
        const std::string stem = ds.manifest().subjects[static_cast<std::size_t>(subject)].id;
        write_stage_outputs(dir, stem, st, set);
        std::cout << "wrote " << set.size() << " Gaussians to " << (dir / (stem + ".ply")).string() << "\n";
        return kOk;
    }
    return kUsage;
}

} // namespace

int main(int argc, char **argv) {
    try {
        return run(argc, argv);
    } catch (const FingerprintMismatch &e) {
        std::cerr << "error [fingerprint]: " << e.what() << "\n";
        return kFingerprint;
    } catch (const DivergenceError &e) {
        std::cerr << "error [divergence]: " << e.what() << "\n";
        return kDivergence;
    } catch (const IoError &e) {
        std::cerr << "error [missing input]: " << e.what() << "\n";
        return kMissingInput;
    } catch (const ConfigError &e) {
        std::cerr << "error [schema]: " << e.what() << "\n";
        return kSchema;
    } catch (const InvalidInput &e) {
        std::cerr << "error [schema]: " << e.what() << "\n";
        return kSchema;
    } catch (const std::exception &e) {
        std::cerr << "error [internal]: " << e.what() << "\n";
        return kInternal;
    }
}
