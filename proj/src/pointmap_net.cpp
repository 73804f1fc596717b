// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/pointmap_net.hpp"

#include <algorithm>
#include <cmath>

namespace duosplat {

namespace ops = nn::ops;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

const char *to_string(HeadType h) { return h == HeadType::linear ? "linear" : "multi-scale"; }
const char *to_string(Fusion f) { return f == Fusion::average ? "average" : "concat"; }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

void NetConfig::validate() const {
    auto fail = [](const std::string &m) { throw ConfigError("network config: " + m); };
    if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0) {
        fail("image_size must be a positive multiple of patch_size");
    }
    if (embed_dim <= 0 || embed_dim % 4 != 0) {
        fail("embed_dim must be a positive multiple of 4");
    }
    if (heads <= 0 || embed_dim % heads != 0) {
        fail("embed_dim must be divisible by heads");
    }
    if (mlp_ratio <= 0 || n_encoder_blocks <= 0) {
        fail("mlp_ratio and n_encoder_blocks must be positive");
    }
    if (n_decoder_blocks < 2) {
        fail("n_decoder_blocks must be at least 2");
    }
}

nlohmann::json NetConfig::to_json() const {
    return {{"image_size", image_size},
            {"patch_size", patch_size},
            {"embed_dim", embed_dim},
            {"heads", heads},
            {"mlp_ratio", mlp_ratio},
            {"n_encoder_blocks", n_encoder_blocks},
            {"n_decoder_blocks", n_decoder_blocks},
            {"head_type", to_string(head_type)},
            {"fusion", to_string(fusion)}};
}

NetConfig NetConfig::from_json(const nlohmann::json &j) {
    NetConfig c;
    try {
        c.image_size = j.value("image_size", c.image_size);
        c.patch_size = j.value("patch_size", c.patch_size);
        c.embed_dim = j.value("embed_dim", c.embed_dim);
        c.heads = j.value("heads", c.heads);
        c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
        c.n_encoder_blocks = j.value("n_encoder_blocks", c.n_encoder_blocks);
        c.n_decoder_blocks = j.value("n_decoder_blocks", c.n_decoder_blocks);
        const std::string head = j.value("head_type", std::string("linear"));
        const std::string fusion = j.value("fusion", std::string("average"));
        if (head == "linear") {
            c.head_type = HeadType::linear;
        } else if (head == "multi-scale") {
            c.head_type = HeadType::multi_scale;
        } else {
            throw ConfigError("network config: unknown head_type '" + head + "'");
        }
        if (fusion == "average") {
            c.fusion = Fusion::average;
        } else if (fusion == "concat") {
            c.fusion = Fusion::concat;
        } else {
            throw ConfigError("network config: unknown fusion '" + fusion + "'");
        }
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("network config: ") + e.what());
    }
    c.validate();
    return c;
}

std::uint64_t NetConfig::fingerprint() const { return fnv1a64(to_json().dump()); }

Tensor sincos_pos_embed(int grid, int dim) {
    if (dim % 4 != 0) {
        throw InvalidInput("positional embedding width must be divisible by 4");
    }
    const int quarter = dim / 4;
    Tensor pe(static_cast<long>(grid) * grid, dim);
    for (int gy = 0; gy < grid; ++gy) {
        for (int gx = 0; gx < grid; ++gx) {
            const long t = static_cast<long>(gy) * grid + gx;
            for (int k = 0; k < quarter; ++k) {
                const double omega = 1.0 / std::pow(10000.0, static_cast<double>(k) / quarter);
                pe(t, k) = std::sin(gy * omega);
                pe(t, quarter + k) = std::cos(gy * omega);
                pe(t, 2 * quarter + k) = std::sin(gx * omega);
                pe(t, 3 * quarter + k) = std::cos(gx * omega);
            }
        }
    }
    return pe;
}

Tensor prepare_image(const RgbImage &image, const Mask &mask) {
    if (!image.same_shape(mask)) {
        throw InvalidInput("image and mask sizes differ");
    }
    Tensor out(1, static_cast<long>(image.size()) * 3);
    for (std::size_t i = 0; i < image.size(); ++i) {
        const Vec3 c = mask[i] ? image[i] : Vec3(0.5, 0.5, 0.5);
        for (int ch = 0; ch < 3; ++ch) {
            out(0, static_cast<long>(i) * 3 + ch) = 2.0 * c[ch] - 1.0;
        }
    }
    return out;
}

PointMapNet::PointMapNet(const NetConfig &config, std::uint64_t seed) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const int p = config_.patch_size;
    const int s = config_.image_size;
    const int g = config_.grid();
    const long d = config_.embed_dim;
    const long hidden = d * config_.mlp_ratio;

    pos_embed_ = sincos_pos_embed(g, static_cast<int>(d));
    patch_index_.resize(static_cast<std::size_t>(g) * g * p * p * 3);
    unpatch_index_.resize(static_cast<std::size_t>(4) * s * s);
    for (int ty = 0; ty < g; ++ty) {
        for (int tx = 0; tx < g; ++tx) {
            const int t = ty * g + tx;
            for (int py = 0; py < p; ++py) {
                for (int px = 0; px < p; ++px) {
                    const int pix = (ty * p + py) * s + tx * p + px;
                    for (int ch = 0; ch < 3; ++ch) {
                        patch_index_[(static_cast<std::size_t>(t) * p * p + py * p + px) * 3 + ch] =
                            pix * 3 + ch;
                    }
                    for (int ch = 0; ch < 4; ++ch) {
                        unpatch_index_[static_cast<std::size_t>(ch) * s * s + pix] =
                            (t * p * p + py * p + px) * 4 + ch;
                    }
                }
            }
        }
    }

    patch_embed_ = nn::Linear(params_, "patch_embed", static_cast<long>(p) * p * 3, d, rng);
    encoder_.resize(static_cast<std::size_t>(config_.n_encoder_blocks));
    for (int b = 0; b < config_.n_encoder_blocks; ++b) {
        const std::string n = "enc." + std::to_string(b);
        EncoderBlock &blk = encoder_[static_cast<std::size_t>(b)];
        blk.norm1 = nn::LayerNorm(params_, n + ".norm1", d);
        blk.attn = nn::Attention(params_, n + ".attn", d, config_.heads, rng);
        blk.norm2 = nn::LayerNorm(params_, n + ".norm2", d);
        blk.mlp = nn::Mlp(params_, n + ".mlp", d, hidden, rng);
    }
    encoder_norm_ = nn::LayerNorm(params_, "enc_norm", d);
    const char *stream_names[2] = {"dec_front", "dec_back"};
    for (int sidx = 0; sidx < 2; ++sidx) {
        auto &dec = decoders_[static_cast<std::size_t>(sidx)];
        dec.resize(static_cast<std::size_t>(config_.n_decoder_blocks));
        for (int b = 0; b < config_.n_decoder_blocks; ++b) {
            const std::string n = std::string(stream_names[sidx]) + "." + std::to_string(b);
            DecoderBlock &blk = dec[static_cast<std::size_t>(b)];
            blk.norm_x = nn::LayerNorm(params_, n + ".norm_x", d);
            blk.norm_y = nn::LayerNorm(params_, n + ".norm_y", d);
            blk.cross = nn::Attention(params_, n + ".cross", d, config_.heads, rng);
            blk.norm2 = nn::LayerNorm(params_, n + ".norm2", d);
            blk.self = nn::Attention(params_, n + ".self", d, config_.heads, rng);
            blk.norm3 = nn::LayerNorm(params_, n + ".norm3", d);
            blk.mlp = nn::Mlp(params_, n + ".mlp", d, hidden, rng);
        }
    }
    if (config_.fusion == Fusion::concat) {
        for (int b = 0; b < config_.n_decoder_blocks; ++b) {
            fuse_.emplace_back(params_, "fuse." + std::to_string(b), 2 * d, d, rng);
        }
    }
    const char *head_names[4] = {"head_front", "head_back", "head_left", "head_right"};
    for (int h = 0; h < 4; ++h) {
        heads_[static_cast<std::size_t>(h)] = make_head(head_names[h], rng);
    }
    log_delta_ = &params_.add("log_delta", Tensor::Zero(1, 1), false);
}

PointMapNet::Head PointMapNet::make_head(const std::string &name, std::mt19937_64 &rng) {
    Head head;
    const long d = config_.embed_dim;
    const long out = static_cast<long>(config_.patch_size) * config_.patch_size * 4;
    if (config_.head_type == HeadType::linear) {
        head.norms.emplace_back(params_, name + ".norm", d);
        head.proj.emplace_back(params_, name + ".proj", d, out, rng);
    } else {
        for (int b = 0; b < config_.n_decoder_blocks; ++b) {
            const std::string n = name + "." + std::to_string(b);
            head.norms.emplace_back(params_, n + ".norm", d);
            head.proj.emplace_back(params_, n + ".proj", d, out, rng);
        }
    }
    return head;
}

double PointMapNet::delta() const { return std::exp(log_delta_->value(0, 0)); }

TokenGrid PointMapNet::encode(Tape &tape, Var image) const {
    const long s = config_.image_size;
    if (image.rows() != 1 || image.cols() != s * s * 3) {
        throw InvalidInput("encoder input must be a " + std::to_string(s) + "x" + std::to_string(s) +
                           " RGB image");
    }
    const long p2 = static_cast<long>(config_.patch_size) * config_.patch_size * 3;
    Var patches = ops::gather(image, patch_index_, config_.token_count(), p2);
    Var x = ops::add(patch_embed_(tape, patches), tape.constant(pos_embed_));
    for (const EncoderBlock &blk : encoder_) {
        Var h = blk.norm1(tape, x);
        x = ops::add(x, blk.attn(tape, h, h));
        x = ops::add(x, blk.mlp(tape, blk.norm2(tape, x)));
    }
    return {encoder_norm_(tape, x), -1};
}

std::pair<TokenGrid, TokenGrid> PointMapNet::encode_pair(Tape &tape, Var front, Var back) const {
    if (front.cols() != back.cols() || front.rows() != back.rows()) {
        throw InvalidInput("front and back images differ in resolution");
    }
    return {encode(tape, front), encode(tape, back)};
}

Var PointMapNet::decoder_block(Tape &tape, const DecoderBlock &blk, Var x, Var y) const {
    x = ops::add(x, blk.cross(tape, blk.norm_x(tape, x), blk.norm_y(tape, y)));
    Var h = blk.norm2(tape, x);
    x = ops::add(x, blk.self(tape, h, h));
    return ops::add(x, blk.mlp(tape, blk.norm3(tape, x)));
}

std::pair<std::vector<TokenGrid>, std::vector<TokenGrid>>
PointMapNet::decode_pair(Tape &tape, const TokenGrid &front, const TokenGrid &back) const {
    if (front.tokens.rows() != config_.token_count() || back.tokens.rows() != config_.token_count() ||
        front.tokens.cols() != config_.embed_dim || back.tokens.cols() != config_.embed_dim) {
        throw InvalidInput("decoder input token grids have the wrong shape");
    }
    std::vector<TokenGrid> out_f;
    std::vector<TokenGrid> out_b;
    Var f = front.tokens;
    Var b = back.tokens;
    for (int i = 0; i < config_.n_decoder_blocks; ++i) {
        Var nf = decoder_block(tape, decoders_[0][static_cast<std::size_t>(i)], f, b);
        Var nb = decoder_block(tape, decoders_[1][static_cast<std::size_t>(i)], b, f);
        f = nf;
        b = nb;
        out_f.push_back({f, i});
        out_b.push_back({b, i});
    }
    return {out_f, out_b};
}

std::vector<TokenGrid> PointMapNet::side_tokens(Tape &tape, const std::vector<TokenGrid> &front,
                                                const std::vector<TokenGrid> &back) const {
    if (front.size() != back.size()) {
        throw InvalidInput("side_tokens: streams have different block counts");
    }
    std::vector<TokenGrid> out;
    for (std::size_t i = 0; i < front.size(); ++i) {
        Var v;
        if (config_.fusion == Fusion::average) {
            v = ops::scale(ops::add(front[i].tokens, back[i].tokens), 0.5);
        } else {
            v = fuse_.at(i)(tape, ops::concat_cols({front[i].tokens, back[i].tokens}));
        }
        out.push_back({v, front[i].block_index});
    }
    return out;
}

Var PointMapNet::run_head(Tape &tape, const Head &head, const std::vector<TokenGrid> &blocks) const {
    Var sum;
    if (config_.head_type == HeadType::linear) {
        sum = head.proj[0](tape, head.norms[0](tape, blocks.back().tokens));
    } else {
        for (std::size_t b = 0; b < head.proj.size(); ++b) {
            Var term = head.proj[b](tape, head.norms[b](tape, blocks.at(b).tokens));
            sum = sum.valid() ? ops::add(sum, term) : term;
        }
    }
    const long s = config_.image_size;
    Var map = ops::gather(sum, unpatch_index_, 4, s * s);
    tape.set_spatial(map, static_cast<int>(s), static_cast<int>(s));
    return map;
}

HeadOutputs PointMapNet::heads(Tape &tape, const std::vector<TokenGrid> &front,
                               const std::vector<TokenGrid> &back,
                               const std::vector<TokenGrid> &side) const {
    HeadOutputs out;
    out.raw[0] = run_head(tape, heads_[0], front);
    out.raw[1] = run_head(tape, heads_[1], back);
    out.raw[2] = run_head(tape, heads_[2], side);
    out.raw[3] = run_head(tape, heads_[3], side);
    return out;
}

HeadOutputs PointMapNet::forward(Tape &tape, Var front, Var back) const {
    auto [ef, eb] = encode_pair(tape, front, back);
    auto [df, db] = decode_pair(tape, ef, eb);
    return heads(tape, df, db, side_tokens(tape, df, db));
}

PointMapPrediction PointMapNet::predict(const RgbImage &front, const Mask &front_mask,
                                        const RgbImage &back, const Mask &back_mask) const {
    const int s = config_.image_size;
    if (front.height() != s || front.width() != s || back.height() != s || back.width() != s) {
        throw InvalidInput("input images must be " + std::to_string(s) + "x" + std::to_string(s));
    }
    Tape tape(false);
    HeadOutputs out = forward(tape, tape.constant(prepare_image(front, front_mask)),
                              tape.constant(prepare_image(back, back_mask)));
    PointMapPrediction pred;
    pred.delta = delta();
    for (int v = 0; v < 4; ++v) {
        const Tensor &raw = out.raw[static_cast<std::size_t>(v)].value();
        PointMap &pm = pred.maps[static_cast<std::size_t>(v)];
        pm.points = Grid<Vec3>(s, s);
        pm.valid = Mask(s, s);
        ScalarMap &conf = pred.confidence[static_cast<std::size_t>(v)];
        conf = ScalarMap(s, s);
        for (long i = 0; i < static_cast<long>(s) * s; ++i) {
            const auto k = static_cast<std::size_t>(i);
            pm.points[k] = Vec3(raw(0, i), raw(1, i), raw(2, i));
            conf[k] = sigmoid(raw(3, i));
            if (v == 0) {
                pm.valid[k] = front_mask[k] ? 1 : 0;
            } else if (v == 1) {
                pm.valid[k] = back_mask[k] ? 1 : 0;
            } else {
                pm.valid[k] = conf[k] > 0.5 ? 1 : 0;
            }
        }
    }
    return pred;
}

namespace {

struct LossInputs {
    const std::array<PointMap, 4> &gt_points;
    const std::array<Mask, 4> &gt_masks;
    long pixels_per_view;
    long valid_total;
};

LossInputs check_loss_inputs(const std::array<PointMap, 4> &gt_points, const std::array<Mask, 4> &gt_masks,
                             int height, int width) {
    long valid = 0;
    for (int v = 0; v < 4; ++v) {
        const PointMap &g = gt_points[static_cast<std::size_t>(v)];
        const Mask &m = gt_masks[static_cast<std::size_t>(v)];
        if (g.height() != height || g.width() != width || m.height() != height || m.width() != width) {
            throw InvalidInput("stage1_loss: ground truth does not match the prediction size");
        }
        valid += static_cast<long>(g.valid_count());
    }
    if (valid == 0) {
        throw InvalidInput("stage1_loss: no valid ground-truth pixels");
    }
    return {gt_points, gt_masks, static_cast<long>(height) * width, valid};
}

} // namespace

Stage1LossTerms stage1_loss(const PointMapPrediction &pred, const std::array<PointMap, 4> &gt_points,
                            const std::array<Mask, 4> &gt_masks) {
    const int h = pred.maps[0].height();
    const int w = pred.maps[0].width();
    LossInputs in = check_loss_inputs(gt_points, gt_masks, h, w);
    Stage1LossTerms terms;
    for (std::size_t v = 0; v < 4; ++v) {
        const PointMap &g = gt_points[v];
        for (std::size_t i = 0; i < g.points.size(); ++i) {
            if (g.valid[i]) {
                terms.reg += (pred.delta * pred.maps[v].points[i] - g.points[i]).squaredNorm();
            }
            const double c = std::clamp(pred.confidence[v][i], kConfClamp, 1.0 - kConfClamp);
            terms.conf -= gt_masks[v][i] ? std::log(c) : std::log(1.0 - c);
        }
    }
    terms.reg /= static_cast<double>(in.valid_total);
    terms.conf /= static_cast<double>(4 * in.pixels_per_view);
    return terms;
}

Stage1LossGrad stage1_loss_grad(const std::array<Tensor, 4> &raw, double log_delta,
                                const std::array<PointMap, 4> &gt_points,
                                const std::array<Mask, 4> &gt_masks) {
    const int h = gt_points[0].height();
    const int w = gt_points[0].width();
    LossInputs in = check_loss_inputs(gt_points, gt_masks, h, w);
    const double delta = std::exp(log_delta);
    const double inv_valid = 1.0 / static_cast<double>(in.valid_total);
    const double inv_pix = 1.0 / static_cast<double>(4 * in.pixels_per_view);
    Stage1LossGrad out;
    for (std::size_t v = 0; v < 4; ++v) {
        const Tensor &r = raw[v];
        if (r.rows() != 4 || r.cols() != in.pixels_per_view) {
            throw InvalidInput("stage1_loss: raw head output must be 4 x H*W");
        }
        Tensor &d = out.d_raw[v];
        d = Tensor::Zero(4, r.cols());
        const PointMap &g = gt_points[v];
        for (long i = 0; i < r.cols(); ++i) {
            const auto k = static_cast<std::size_t>(i);
            if (g.valid[k]) {
                const Vec3 p(r(0, i), r(1, i), r(2, i));
                const Vec3 e = delta * p - g.points[k];
                out.terms.reg += e.squaredNorm();
                const Vec3 de = 2.0 * inv_valid * e;
                d(0, i) = delta * de.x();
                d(1, i) = delta * de.y();
                d(2, i) = delta * de.z();
                out.d_log_delta += de.dot(delta * p);
            }
            const double m = gt_masks[v][k] ? 1.0 : 0.0;
            const double c = sigmoid(r(3, i));
            const double cc = std::clamp(c, kConfClamp, 1.0 - kConfClamp);
            out.terms.conf -= m > 0.0 ? std::log(cc) : std::log(1.0 - cc);
            if (cc == c) {
                d(3, i) = (c - m) * inv_pix;
            }
        }
    }
    out.terms.reg *= inv_valid;
    out.terms.conf *= inv_pix;
    return out;
}

} // namespace duosplat
