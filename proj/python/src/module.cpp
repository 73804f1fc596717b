// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

// Python bindings. Arrays cross the boundary as float64 NumPy arrays; cameras as JSON text.

#include "duosplat/image_io.hpp"
#include "duosplat/metrics.hpp"
#include "duosplat/side_enhance.hpp"
#include "duosplat/splat_render.hpp"
#include "duosplat/training.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace duosplat;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

template <int N>
std::vector<Eigen::Matrix<double, N, 1>> rows_of(const Array &a, const char *name) {
    if (a.ndim() != 2 || a.shape(1) != N) {
        throw InvalidInput(std::string(name) + " must have shape (n, " + std::to_string(N) + ")");
    }
    std::vector<Eigen::Matrix<double, N, 1>> out(static_cast<std::size_t>(a.shape(0)));
    const double *p = a.data();
    for (auto &v : out) {
        for (int k = 0; k < N; ++k) {
            v[k] = *p++;
        }
    }
    return out;
}

template <int N>
Array to_array(const std::vector<Eigen::Matrix<double, N, 1>> &v) {
    Array a({static_cast<py::ssize_t>(v.size()), static_cast<py::ssize_t>(N)});
    double *p = a.mutable_data();
    for (const auto &x : v) {
        for (int k = 0; k < N; ++k) {
            *p++ = x[k];
        }
    }
    return a;
}

RgbImage image_of(const Array &a) {
    if (a.ndim() != 3 || a.shape(2) != 3) {
        throw InvalidInput("image must have shape (h, w, 3)");
    }
    RgbImage img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    const double *p = a.data();
    for (std::size_t i = 0; i < img.size(); ++i, p += 3) {
        img[i] = Vec3(p[0], p[1], p[2]);
    }
    return img;
}

Array to_array(const RgbImage &img) {
    Array a({img.height(), img.width(), 3});
    double *p = a.mutable_data();
    for (std::size_t i = 0; i < img.size(); ++i) {
        *p++ = img[i].x();
        *p++ = img[i].y();
        *p++ = img[i].z();
    }
    return a;
}

Array to_array(const ScalarMap &m) {
    Array a({m.height(), m.width()});
    std::copy(m.values().begin(), m.values().end(), a.mutable_data());
    return a;
}

Mask mask_of(const MaskArray &a) {
    if (a.ndim() != 2) {
        throw InvalidInput("mask must have shape (h, w)");
    }
    Mask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    const std::uint8_t *p = a.data();
    for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] = p[i] ? 1 : 0;
    }
    return m;
}

GaussianSet gaussians_of(const py::dict &d) {
    GaussianSet g;
    g.mu = rows_of<3>(d["mu"].cast<Array>(), "mu");
    g.color = rows_of<3>(d["color"].cast<Array>(), "color");
    const Array o = d["opacity"].cast<Array>();
    g.opacity.assign(o.data(), o.data() + o.size());
    g.scale = rows_of<3>(d["scale"].cast<Array>(), "scale");
    g.quat = rows_of<4>(d["quat"].cast<Array>(), "quat");
    g.validate();
    return g;
}

py::dict to_dict(const GaussianSet &g) {
    py::dict d;
    d["mu"] = to_array<3>(g.mu);
    d["color"] = to_array<3>(g.color);
    Array o(static_cast<py::ssize_t>(g.opacity.size()));
    std::copy(g.opacity.begin(), g.opacity.end(), o.mutable_data());
    d["opacity"] = o;
    d["scale"] = to_array<3>(g.scale);
    d["quat"] = to_array<4>(g.quat);
    return d;
}

nlohmann::json parse(const std::string &text, const char *what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string(what) + ": " + e.what());
    }
}

CameraModel camera_of(const std::string &json_text) { return camera_from_json(parse(json_text, "camera JSON")); }

/// Loaded stage-1 and stage-2 checkpoints.
class Model {
  public:
    Model(const std::filesystem::path &stage1, const std::filesystem::path &stage2)
        : net_(load_stage1(load_checkpoint(stage1))),
          reg_(load_stage2(load_checkpoint(stage2), net_->config().fingerprint(), &options_)) {}

    py::dict infer(const Array &front, const MaskArray &front_mask, const Array &back,
                   const MaskArray &back_mask) const {
        const SubjectInput in{image_of(front), mask_of(front_mask), image_of(back), mask_of(back_mask)};
        PointStage st;
        GaussianSet set;
        {
            py::gil_scoped_release release;
            st = run_point_stage(*net_, in, options_);
            set = regress_gaussians(*reg_, st);
        }
        py::dict out = to_dict(set);
        out["delta"] = st.prediction.delta;
        py::list conf;
        for (const ScalarMap &c : st.prediction.confidence) {
            conf.append(to_array(c));
        }
        out["confidence"] = conf;
        return out;
    }

    int image_size() const { return net_->config().image_size; }
    bool side_heads() const { return options_.side_heads; }
    bool nns() const { return options_.nns; }

  private:
    std::unique_ptr<PointMapNet> net_;
    PipelineOptions options_;
    std::unique_ptr<GaussianRegressor> reg_;
};

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "duosplat C++ core";

    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<FingerprintMismatch>(m, "FingerprintMismatch", PyExc_RuntimeError);
    py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

    m.def(
        "ring_camera",
        [](double azimuth, int resolution) { return camera_to_json(ring_camera(azimuth, resolution)).dump(); },
        py::arg("azimuth"), py::arg("resolution"), "Ring camera in world coordinates, as JSON text.");

    m.def(
        "view_camera",
        [](double azimuth, int resolution) {
            const CameraModel cam = camera_in_frame(ring_camera(azimuth, resolution), ring_camera(0.0, resolution));
            return camera_to_json(cam).dump();
        },
        py::arg("azimuth"), py::arg("resolution"),
        "Ring camera in the frame of the front input camera, where predictions live, as JSON text.");

    m.def(
        "render",
        [](const py::dict &gaussians, const std::string &camera, const std::array<double, 3> &background) {
            const Vec3 bg(background[0], background[1], background[2]);
            const GaussianSet g = gaussians_of(gaussians);
            const CameraModel cam = camera_of(camera);
            RenderOutput out;
            {
                py::gil_scoped_release release;
                out = render(g, cam, bg);
            }
            return py::make_tuple(to_array(out.image), to_array(out.alpha));
        },
        py::arg("gaussians"), py::arg("camera"), py::arg("background"));

    m.def(
        "nns_color_transfer",
        [](const Array &side, const Array &ref, const Array &colors) {
            return to_array<3>(
                nns_color_transfer(rows_of<3>(side, "side"), rows_of<3>(ref, "ref"), rows_of<3>(colors, "colors")));
        },
        py::arg("side"), py::arg("ref"), py::arg("colors"));

    m.def(
        "psnr", [](const Array &a, const Array &b) { return psnr(image_of(a), image_of(b)); }, py::arg("a"),
        py::arg("b"));
    m.def(
        "ssim", [](const Array &a, const Array &b) { return ssim(image_of(a), image_of(b)); }, py::arg("a"),
        py::arg("b"));

    m.def(
        "make_dataset",
        [](const std::filesystem::path &out, int subjects, int novel_views, int resolution, std::uint64_t seed) {
            DatasetSpec spec;
            spec.n_subjects = subjects;
            spec.novel_views = novel_views;
            spec.resolution = resolution;
            spec.base_seed = seed;
            py::gil_scoped_release release;
            return make_dataset(spec, out).entries.size();
        },
        py::arg("out"), py::arg("subjects") = 2, py::arg("novel_views") = 4, py::arg("resolution") = 64,
        py::arg("seed") = 0, "Writes a synthetic dataset; returns the number of stored views.");

    m.def(
        "read_gaussian_ply", [](const std::filesystem::path &p) { return to_dict(read_gaussian_ply(p)); },
        py::arg("path"));
    m.def(
        "write_gaussian_ply",
        [](const std::filesystem::path &p, const py::dict &g) { write_gaussian_ply(p, gaussians_of(g)); },
        py::arg("path"), py::arg("gaussians"));

    m.def(
        "train_stage1",
        [](const std::filesystem::path &data, const std::filesystem::path &checkpoint, const std::string &config) {
            const Stage1Config cfg = Stage1Config::from_json(parse(config, "stage-1 config"));
            const Dataset ds = Dataset::open(data);
            py::gil_scoped_release release;
            const Stage1Result r = train_stage1(ds, cfg);
            save_checkpoint(checkpoint, make_stage1_checkpoint(*r.net, r.history));
            return r.history;
        },
        py::arg("data"), py::arg("checkpoint"), py::arg("config") = "{}",
        "Trains the pointmap network and saves it; returns the loss history.");

    m.def(
        "train_stage2",
        [](const std::filesystem::path &data, const std::filesystem::path &stage1,
           const std::filesystem::path &checkpoint, const std::string &config) {
            const Stage2Config cfg = Stage2Config::from_json(parse(config, "stage-2 config"));
            const Dataset ds = Dataset::open(data);
            const auto net = load_stage1(load_checkpoint(stage1));
            py::gil_scoped_release release;
            const Stage2Result r = train_stage2(ds, *net, cfg);
            save_checkpoint(checkpoint,
                            make_stage2_checkpoint(*r.regressor, cfg.options, net->config().fingerprint(), r.history));
            return r.history;
        },
        py::arg("data"), py::arg("stage1"), py::arg("checkpoint"), py::arg("config") = "{}",
        "Trains the Gaussian regressor on a frozen stage-1 checkpoint; returns the loss history.");

    py::class_<Model>(m, "Model")
        .def(py::init<const std::filesystem::path &, const std::filesystem::path &>(), py::arg("stage1"),
             py::arg("stage2"))
        .def("infer", &Model::infer, py::arg("front"), py::arg("front_mask"), py::arg("back"),
             py::arg("back_mask"))
        .def_property_readonly("image_size", &Model::image_size)
        .def_property_readonly("side_heads", &Model::side_heads)
        .def_property_readonly("nns", &Model::nns);
}
