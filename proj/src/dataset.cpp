// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/dataset.hpp"

#include "duosplat/image_io.hpp"

#include <cstdio>
#include <system_error>

namespace duosplat {

namespace fs = std::filesystem;

std::vector<double> novel_azimuths(int count) {
    std::vector<double> out;
    for (int k = 0; k < count; ++k) {
        out.push_back(45.0 + 360.0 * k / count);
    }
    return out;
}

std::string subject_id(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "subject_%04d", index);
    return buf;
}

nlohmann::json Manifest::to_json() const {
    nlohmann::json j;
    j["format"] = "duosplat-dataset";
    j["version"] = kVersion;
    j["resolution"] = spec.resolution;
    j["novel_views"] = spec.novel_views;
    j["base_seed"] = spec.base_seed;
    j["camera_radius"] = spec.camera_radius;
    j["focal_scale"] = spec.focal_scale;
    j["supersample"] = spec.render.supersample;
    const Vec3 &bg = spec.render.background;
    j["background"] = {bg.x(), bg.y(), bg.z()};
    j["subject_config"] = spec.subject.to_json();
    j["subjects"] = nlohmann::json::array();
    for (const SubjectRecord &s : subjects) {
        j["subjects"].push_back({{"id", s.id}, {"seed", s.seed}, {"height", s.height}});
    }
    j["entries"] = nlohmann::json::array();
    for (const ManifestEntry &e : entries) {
        j["entries"].push_back({{"subject", e.subject},
                                {"seed", e.seed},
                                {"view", e.view},
                                {"azimuth_deg", e.azimuth_deg},
                                {"image", e.image},
                                {"mask", e.mask},
                                {"depth", e.depth},
                                {"camera_file", e.camera_file},
                                {"camera", camera_to_json(e.camera)}});
    }
    return j;
}

Manifest Manifest::from_json(const nlohmann::json &j) {
    try {
        if (j.at("format").get<std::string>() != "duosplat-dataset") {
            throw ConfigError("manifest: unknown format tag");
        }
        if (j.at("version").get<int>() != kVersion) {
            throw ConfigError("manifest: unsupported version");
        }
        Manifest m;
        m.spec.resolution = j.at("resolution").get<int>();
        m.spec.novel_views = j.at("novel_views").get<int>();
        m.spec.base_seed = j.at("base_seed").get<std::uint64_t>();
        m.spec.camera_radius = j.at("camera_radius").get<double>();
        m.spec.focal_scale = j.at("focal_scale").get<double>();
        m.spec.render.supersample = j.at("supersample").get<int>();
        const auto bg = j.at("background").get<std::vector<double>>();
        if (bg.size() != 3) {
            throw ConfigError("manifest: background needs three values");
        }
        m.spec.render.background = Vec3(bg[0], bg[1], bg[2]);
        m.spec.subject = SubjectConfig::from_json(j.at("subject_config"));
        for (const auto &s : j.at("subjects")) {
            m.subjects.push_back({s.at("id").get<std::string>(), s.at("seed").get<std::uint64_t>(),
                                  s.at("height").get<double>()});
        }
        m.spec.n_subjects = static_cast<int>(m.subjects.size());
        for (const auto &e : j.at("entries")) {
            ManifestEntry entry;
            entry.subject = e.at("subject").get<std::string>();
            entry.seed = e.at("seed").get<std::uint64_t>();
            entry.view = e.at("view").get<std::string>();
            entry.azimuth_deg = e.at("azimuth_deg").get<double>();
            entry.image = e.at("image").get<std::string>();
            entry.mask = e.at("mask").get<std::string>();
            entry.depth = e.at("depth").get<std::string>();
            entry.camera_file = e.at("camera_file").get<std::string>();
            entry.camera = camera_from_json(e.at("camera"));
            m.entries.push_back(std::move(entry));
        }
        return m;
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("manifest: ") + e.what());
    }
}

Manifest make_dataset(const DatasetSpec &spec, const fs::path &out_dir) {
    if (spec.n_subjects < 1 || spec.novel_views < 0 || spec.resolution < 8) {
        throw InvalidInput("make_dataset: need >= 1 subject, >= 0 novel views, resolution >= 8");
    }
    spec.subject.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
    }
    Manifest manifest;
    manifest.spec = spec;
    struct ViewSpec {
        std::string name;
        double azimuth;
    };
    std::vector<ViewSpec> views;
    for (ViewTag tag : kCanonicalViews) {
        views.push_back({to_string(tag), canonical_azimuth(tag)});
    }
    for (double a : novel_azimuths(spec.novel_views)) {
        views.push_back({novel_view_name(a), a});
    }
    for (int i = 0; i < spec.n_subjects; ++i) {
        const std::uint64_t seed = spec.base_seed + static_cast<std::uint64_t>(i);
        const SubjectScene scene = make_subject(seed, spec.subject);
        const std::string id = subject_id(i);
        manifest.subjects.push_back({id, seed, scene.height});
        const fs::path dir = out_dir / id;
        fs::create_directories(dir, ec);
        if (ec) {
            throw IoError("cannot create '" + dir.string() + "': " + ec.message());
        }
        for (const ViewSpec &v : views) {
            const CameraModel cam =
                ring_camera(v.azimuth, spec.resolution, spec.camera_radius, spec.focal_scale);
            const ViewBundle bundle = render_view(scene, cam, spec.render, v.name, v.azimuth);
            ManifestEntry e;
            e.subject = id;
            e.seed = seed;
            e.view = v.name;
            e.azimuth_deg = v.azimuth;
            e.image = id + "/" + v.name + ".png";
            e.mask = id + "/" + v.name + ".mask.png";
            e.depth = id + "/" + v.name + ".depth.f32";
            e.camera_file = id + "/" + v.name + ".cam.json";
            e.camera = cam;
            write_png(out_dir / e.image, bundle.image);
            write_mask_png(out_dir / e.mask, bundle.mask);
            write_depth(out_dir / e.depth, bundle.depth);
            write_json(out_dir / e.camera_file, camera_to_json(cam));
            manifest.entries.push_back(std::move(e));
        }
    }
    write_json(out_dir / "manifest.json", manifest.to_json());
    return manifest;
}

Dataset Dataset::open(const fs::path &root) {
    Dataset ds;
    ds.root_ = root;
    ds.manifest_ = Manifest::from_json(read_json(root / "manifest.json"));
    return ds;
}

const ManifestEntry *Dataset::find(std::size_t subject, const std::string &view) const {
    if (subject >= manifest_.subjects.size()) {
        return nullptr;
    }
    const std::string &id = manifest_.subjects[subject].id;
    for (const ManifestEntry &e : manifest_.entries) {
        if (e.subject == id && e.view == view) {
            return &e;
        }
    }
    return nullptr;
}

bool Dataset::has_view(std::size_t subject, const std::string &view) const {
    const ManifestEntry *e = find(subject, view);
    return e && fs::exists(root_ / e->image) && fs::exists(root_ / e->mask) &&
           fs::exists(root_ / e->depth);
}

std::vector<std::string> Dataset::views_of(std::size_t subject) const {
    std::vector<std::string> out;
    if (subject >= manifest_.subjects.size()) {
        return out;
    }
    for (const ManifestEntry &e : manifest_.entries) {
        if (e.subject == manifest_.subjects[subject].id) {
            out.push_back(e.view);
        }
    }
    return out;
}

ViewBundle Dataset::load(std::size_t subject, const std::string &view) const {
    const ManifestEntry *e = find(subject, view);
    if (!e) {
        throw IoError("dataset '" + root_.string() + "' has no view '" + view + "' for subject " +
                      std::to_string(subject));
    }
    ViewBundle b;
    b.view_tag = e->view;
    b.azimuth_deg = e->azimuth_deg;
    b.camera = e->camera;
    b.image = read_png(root_ / e->image);
    b.mask = read_mask_png(root_ / e->mask);
    b.depth = read_depth(root_ / e->depth);
    if (!b.image.same_shape(b.mask) || !b.image.same_shape(b.depth) ||
        b.image.height() != b.camera.height || b.image.width() != b.camera.width) {
        throw IoError("dataset view '" + e->image + "' has inconsistent raster sizes");
    }
    return b;
}

SubjectScene Dataset::scene(std::size_t subject) const {
    if (subject >= manifest_.subjects.size()) {
        throw InvalidInput("dataset: subject index out of range");
    }
    return make_subject(manifest_.subjects[subject].seed, manifest_.spec.subject);
}

CameraModel Dataset::camera_at(double azimuth_deg) const {
    return ring_camera(azimuth_deg, manifest_.spec.resolution, manifest_.spec.camera_radius,
                       manifest_.spec.focal_scale);
}

ViewBundle Dataset::render_at(std::size_t subject, double azimuth_deg) const {
    ViewBundle b = render_view(scene(subject), camera_at(azimuth_deg), manifest_.spec.render,
                               novel_view_name(azimuth_deg), azimuth_deg);
    b.image = quantize_8bit(b.image);
    return b;
}

} // namespace duosplat
