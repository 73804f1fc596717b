// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/pipeline.hpp"

namespace duosplat {

nlohmann::json PipelineOptions::to_json() const { return {{"side_heads", side_heads}, {"nns", nns}}; }

PipelineOptions PipelineOptions::from_json(const nlohmann::json &j) {
    PipelineOptions o;
    try {
        o.side_heads = j.value("side_heads", o.side_heads);
        o.nns = j.value("nns", o.nns);
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("pipeline options: ") + e.what());
    }
    return o;
}

void SubjectInput::validate() const {
    if (!front.same_shape(front_mask) || !back.same_shape(back_mask)) {
        throw InvalidInput("each input image must match its mask");
    }
    if (!front.same_shape(back)) {
        throw InvalidInput("front and back images differ in resolution");
    }
    if (count_true(front_mask) == 0 && count_true(back_mask) == 0) {
        throw InvalidInput("both input masks are empty");
    }
}

CameraModel camera_in_frame(const CameraModel &camera, const CameraModel &reference) {
    CameraModel out = camera;
    out.world_to_camera = camera.world_to_camera.compose(reference.world_to_camera.inverse());
    return out;
}

std::size_t PointStage::gaussian_count() const {
    std::size_t n = 0;
    for (const PointMap &m : maps) {
        n += m.valid_count();
    }
    return n;
}

PointStage run_point_stage(const PointMapNet &net, const SubjectInput &input, const PipelineOptions &options) {
    input.validate();
    PointStage st;
    st.prediction = net.predict(input.front, input.front_mask, input.back, input.back_mask);
    const double delta = st.prediction.delta;
    for (std::size_t v = 0; v < 4; ++v) {
        st.maps[v] = scale_pointmap(st.prediction.maps[v], delta);
    }
    const int h = input.front.height();
    const int w = input.front.width();
    if (!options.side_heads) {
        for (std::size_t v = 2; v < 4; ++v) {
            st.maps[v].valid = Mask(h, w, 0);
        }
    }
    st.cloud = fuse_pointmaps(st.maps[0], st.maps[1], st.maps[2], st.maps[3], 1.0);

    // Reference colors: front then back pixels, matching the fused order.
    std::vector<Vec3> ref_points;
    std::vector<Vec3> ref_colors;
    for (std::size_t v = 0; v < 2; ++v) {
        const RgbImage &img = v == 0 ? input.front : input.back;
        for (std::size_t i = 0; i < img.size(); ++i) {
            if (st.maps[v].valid[i]) {
                ref_points.push_back(st.maps[v].points[i]);
                ref_colors.push_back(img[i]);
            }
        }
    }
    st.images[0] = input.front;
    st.images[1] = input.back;
    for (std::size_t s = 0; s < 2; ++s) {
        const PointMap &side = st.maps[2 + s];
        std::vector<Vec3> colors;
        if (options.nns && !ref_points.empty()) {
            colors = nns_color_transfer(side.valid_points(), ref_points, ref_colors);
            st.pseudo[s] = build_pseudo_view(side, colors);
            st.images[2 + s] = st.pseudo[s].image;
        } else {
            colors.assign(side.valid_count(), Vec3::Constant(0.5));
            st.pseudo[s] = build_pseudo_view(side, colors);
            st.images[2 + s] = RgbImage(h, w, Vec3::Constant(0.5));
        }
    }
    st.cloud.colors = ref_colors;
    for (std::size_t s = 0; s < 2; ++s) {
        const auto side = pseudo_view_colors(st.pseudo[s]);
        st.cloud.colors.insert(st.cloud.colors.end(), side.begin(), side.end());
    }

    Vec3 sum = Vec3::Zero();
    for (const Vec3 &p : st.cloud.positions) {
        sum += p;
    }
    st.center = st.cloud.size() > 0 ? Vec3(sum / static_cast<double>(st.cloud.size())) : Vec3::Zero();
    st.limits = ActivationLimits::from_diagonal(bbox_diagonal(st.maps));
    return st;
}

GaussianSet regress_gaussians(const GaussianRegressor &regressor, const PointStage &stage) {
    std::vector<GaussianSet> parts;
    for (std::size_t v = 0; v < 4; ++v) {
        RawGaussianOutput raw = regressor.regress_view(stage.maps[v], stage.images[v], stage.center);
        parts.push_back(activate(raw, stage.maps[v], stage.maps[v].valid, stage.limits, kCanonicalViews[v]));
    }
    return assemble(parts);
}

GaussianSet baseline_gaussians(const PointStage &stage) {
    const double s = std::max(median_nn_distance(stage.cloud.positions), 1e-4);
    GaussianSet g;
    g.reserve(stage.cloud.size());
    for (std::size_t i = 0; i < stage.cloud.size(); ++i) {
        g.mu.push_back(stage.cloud.positions[i]);
        g.color.push_back(stage.cloud.colors[i].cwiseMax(0.0).cwiseMin(1.0));
        g.opacity.push_back(0.95);
        g.scale.emplace_back(s, s, s);
        g.quat.emplace_back(1, 0, 0, 0);
        g.source.push_back(stage.cloud.sources[i]);
    }
    return g;
}

} // namespace duosplat
