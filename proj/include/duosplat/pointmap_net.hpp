// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "duosplat/geometry.hpp"
#include "duosplat/nn/layers.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

namespace duosplat {

enum class HeadType { linear, multi_scale };
enum class Fusion { average, concat };

struct NetConfig {
    int image_size = 64;
    int patch_size = 8;
    int embed_dim = 128;
    int heads = 4;
    int mlp_ratio = 4;
    int n_encoder_blocks = 4;
    int n_decoder_blocks = 4;
    HeadType head_type = HeadType::linear;
    Fusion fusion = Fusion::average;

    int grid() const { return image_size / patch_size; }
    int token_count() const { return grid() * grid(); }

    /// Throws ConfigError.
    void validate() const;
    nlohmann::json to_json() const;
    /// Missing keys keep their defaults; unknown enum tags throw ConfigError.
    static NetConfig from_json(const nlohmann::json &j);
    /// FNV-1a 64 of the canonical JSON form.
    std::uint64_t fingerprint() const;
};

/// Token set of one image stream: token_count x embed_dim.
struct TokenGrid {
    nn::Var tokens;
    int block_index = -1; ///< -1 for encoder output
};

/// Four pointmaps in the front camera frame, not yet scaled by delta.
struct PointMapPrediction {
    std::array<PointMap, 4> maps;
    std::array<ScalarMap, 4> confidence;
    double delta = 1.0;

    const PointMap &map(ViewTag v) const { return maps[static_cast<std::size_t>(v)]; }
};

/// Raw head outputs (4 x H*W each: x, y, z, confidence logit) indexed by ViewTag.
struct HeadOutputs {
    std::array<nn::Var, 4> raw;
};

/// Network input after background replacement: values in [-1, 1], flattened (r, c, channel).
nn::Tensor prepare_image(const RgbImage &image, const Mask &mask);

/// Front/back pointmap regressor: shared ViT encoder, two cross-attending decoders and
/// four per-pixel heads. Owns its parameters; not copyable.
class PointMapNet {
  public:
    explicit PointMapNet(const NetConfig &config, std::uint64_t seed = 0);
    PointMapNet(const PointMapNet &) = delete;
    PointMapNet &operator=(const PointMapNet &) = delete;

    const NetConfig &config() const { return config_; }
    nn::ParameterSet &params() { return params_; }
    const nn::ParameterSet &params() const { return params_; }
    nn::Parameter &log_delta() { return *log_delta_; }
    double delta() const;

    /// Image values from prepare_image as a 1 x (S*S*3) tape value.
    TokenGrid encode(nn::Tape &tape, nn::Var image) const;
    std::pair<TokenGrid, TokenGrid> encode_pair(nn::Tape &tape, nn::Var front, nn::Var back) const;
    /// All B intermediate grids per stream.
    std::pair<std::vector<TokenGrid>, std::vector<TokenGrid>>
    decode_pair(nn::Tape &tape, const TokenGrid &front, const TokenGrid &back) const;
    std::vector<TokenGrid> side_tokens(nn::Tape &tape, const std::vector<TokenGrid> &front,
                                       const std::vector<TokenGrid> &back) const;
    HeadOutputs heads(nn::Tape &tape, const std::vector<TokenGrid> &front,
                      const std::vector<TokenGrid> &back, const std::vector<TokenGrid> &side) const;
    /// Full differentiable pass.
    HeadOutputs forward(nn::Tape &tape, nn::Var front, nn::Var back) const;

    /// Inference. Front/back validity comes from the input masks, side validity from
    /// confidence > 0.5.
    PointMapPrediction predict(const RgbImage &front, const Mask &front_mask, const RgbImage &back,
                               const Mask &back_mask) const;

  private:
    struct EncoderBlock {
        nn::LayerNorm norm1, norm2;
        nn::Attention attn;
        nn::Mlp mlp;
    };
    struct DecoderBlock {
        nn::LayerNorm norm_x, norm_y, norm2, norm3;
        nn::Attention cross, self;
        nn::Mlp mlp;
    };
    struct Head {
        std::vector<nn::LayerNorm> norms;
        std::vector<nn::Linear> proj;
    };

    Head make_head(const std::string &name, std::mt19937_64 &rng);
    nn::Var run_head(nn::Tape &tape, const Head &head, const std::vector<TokenGrid> &blocks) const;
    nn::Var decoder_block(nn::Tape &tape, const DecoderBlock &block, nn::Var x, nn::Var y) const;

    NetConfig config_;
    nn::ParameterSet params_;
    nn::Tensor pos_embed_;
    std::vector<int> patch_index_;
    std::vector<int> unpatch_index_;
    nn::Linear patch_embed_;
    std::vector<EncoderBlock> encoder_;
    nn::LayerNorm encoder_norm_;
    std::array<std::vector<DecoderBlock>, 2> decoders_;
    std::vector<nn::Linear> fuse_;
    std::array<Head, 4> heads_;
    nn::Parameter *log_delta_ = nullptr;
};

/// 2D sin-cos positional embedding, grid*grid x dim (dim divisible by 4).
nn::Tensor sincos_pos_embed(int grid, int dim);

/// Confidence values are clamped to [kConfClamp, 1 - kConfClamp] inside the loss.
inline constexpr double kConfClamp = 1e-6;

struct Stage1LossTerms {
    double reg = 0.0;
    double conf = 0.0;
    double total() const { return reg + conf; }
};

/// Loss and its gradient with respect to raw head outputs and log(delta).
struct Stage1LossGrad {
    Stage1LossTerms terms;
    std::array<nn::Tensor, 4> d_raw;
    double d_log_delta = 0.0;
};

/// L_reg: mean over all GT-valid pixels of the four views of |delta * p - p_gt|^2.
/// L_conf: binary cross-entropy of confidence against the GT mask averaged over every pixel
/// of the four views. Throws InvalidInput when no pixel is valid.
Stage1LossTerms stage1_loss(const PointMapPrediction &pred, const std::array<PointMap, 4> &gt_points,
                            const std::array<Mask, 4> &gt_masks);

Stage1LossGrad stage1_loss_grad(const std::array<nn::Tensor, 4> &raw, double log_delta,
                                const std::array<PointMap, 4> &gt_points,
                                const std::array<Mask, 4> &gt_masks);

} // namespace duosplat
