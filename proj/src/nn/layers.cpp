// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/nn/layers.hpp"

#include <cmath>

namespace duosplat::nn {

Tensor xavier_uniform(std::mt19937_64 &rng, long rows, long cols, long fan_in, long fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-a, a);
    Tensor t(rows, cols);
    for (long i = 0; i < t.size(); ++i) {
        t.data()[i] = u(rng);
    }
    return t;
}

Tensor he_normal(std::mt19937_64 &rng, long rows, long cols, long fan_in) {
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    Tensor t(rows, cols);
    for (long i = 0; i < t.size(); ++i) {
        t.data()[i] = n(rng);
    }
    return t;
}

Linear::Linear(ParameterSet &params, const std::string &name, long in, long out, std::mt19937_64 &rng,
               bool bias) {
    weight_ = &params.add(name + ".weight", xavier_uniform(rng, out, in, in, out));
    if (bias) {
        bias_ = &params.add(name + ".bias", Tensor::Zero(1, out), false);
    }
}

Var Linear::operator()(Tape &tape, Var x) const {
    return ops::linear(x, tape.param(*weight_), bias_ ? tape.param(*bias_) : Var());
}

LayerNorm::LayerNorm(ParameterSet &params, const std::string &name, long dim) {
    gamma_ = &params.add(name + ".weight", Tensor::Ones(1, dim), false);
    beta_ = &params.add(name + ".bias", Tensor::Zero(1, dim), false);
}

Var LayerNorm::operator()(Tape &tape, Var x) const {
    return ops::layer_norm(x, tape.param(*gamma_), tape.param(*beta_));
}

Mlp::Mlp(ParameterSet &params, const std::string &name, long dim, long hidden, std::mt19937_64 &rng)
    : fc1_(params, name + ".fc1", dim, hidden, rng), fc2_(params, name + ".fc2", hidden, dim, rng) {}

Var Mlp::operator()(Tape &tape, Var x) const { return fc2_(tape, ops::gelu(fc1_(tape, x))); }

Attention::Attention(ParameterSet &params, const std::string &name, long dim, int heads,
                     std::mt19937_64 &rng)
    : q_(params, name + ".q", dim, dim, rng), k_(params, name + ".k", dim, dim, rng),
      v_(params, name + ".v", dim, dim, rng), proj_(params, name + ".proj", dim, dim, rng),
      heads_(heads) {
    if (heads <= 0 || dim % heads != 0) {
        throw InvalidInput("attention '" + name + "': width must divide into heads");
    }
}

Var Attention::operator()(Tape &tape, Var x, Var context) const {
    Var out = ops::attention(q_(tape, x), k_(tape, context), v_(tape, context), heads_);
    return proj_(tape, out);
}

Conv2d::Conv2d(ParameterSet &params, const std::string &name, long in, long out, int kernel, int stride,
               int padding, std::mt19937_64 &rng)
    : kernel_(kernel), stride_(stride), padding_(padding) {
    const long fan_in = in * kernel * kernel;
    weight_ = &params.add(name + ".weight", he_normal(rng, out, fan_in, fan_in));
    bias_ = &params.add(name + ".bias", Tensor::Zero(out, 1), false);
}

Var Conv2d::operator()(Tape &tape, Var x) const {
    return ops::conv2d(x, tape.param(*weight_), tape.param(*bias_), kernel_, stride_, padding_);
}

GroupNorm::GroupNorm(ParameterSet &params, const std::string &name, long channels, int groups)
    : groups_(groups) {
    gamma_ = &params.add(name + ".weight", Tensor::Ones(channels, 1), false);
    beta_ = &params.add(name + ".bias", Tensor::Zero(channels, 1), false);
}

Var GroupNorm::operator()(Tape &tape, Var x) const {
    return ops::group_norm(x, tape.param(*gamma_), tape.param(*beta_), groups_);
}

} // namespace duosplat::nn
