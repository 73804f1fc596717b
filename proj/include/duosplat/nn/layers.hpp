// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "duosplat/nn/ops.hpp"

#include <random>
#include <string>

namespace duosplat::nn {

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(std::mt19937_64 &rng, long rows, long cols, long fan_in, long fan_out);
/// Normal(0, sqrt(2 / fan_in)).
Tensor he_normal(std::mt19937_64 &rng, long rows, long cols, long fan_in);

// Layers register their parameters in a ParameterSet at construction and keep pointers to
// them, so the owning model must not be copied or moved after construction.

/// y = x W^T + b on token sets (N x in).
class Linear {
  public:
    Linear() = default;
    Linear(ParameterSet &params, const std::string &name, long in, long out, std::mt19937_64 &rng,
           bool bias = true);
    Var operator()(Tape &tape, Var x) const;
    Parameter &weight() const { return *weight_; }
    Parameter *bias() const { return bias_; }

  private:
    Parameter *weight_ = nullptr;
    Parameter *bias_ = nullptr;
};

/// Per-row normalization of token sets.
class LayerNorm {
  public:
    LayerNorm() = default;
    LayerNorm(ParameterSet &params, const std::string &name, long dim);
    Var operator()(Tape &tape, Var x) const;

  private:
    Parameter *gamma_ = nullptr;
    Parameter *beta_ = nullptr;
};

/// Linear -> GELU -> Linear.
class Mlp {
  public:
    Mlp() = default;
    Mlp(ParameterSet &params, const std::string &name, long dim, long hidden, std::mt19937_64 &rng);
    Var operator()(Tape &tape, Var x) const;

  private:
    Linear fc1_;
    Linear fc2_;
};

/// Multi-head attention of queries from `x` over keys/values from `context`.
class Attention {
  public:
    Attention() = default;
    Attention(ParameterSet &params, const std::string &name, long dim, int heads, std::mt19937_64 &rng);
    Var operator()(Tape &tape, Var x, Var context) const;

  private:
    Linear q_, k_, v_, proj_;
    int heads_ = 1;
};

/// Convolution on (channels x H*W) feature maps.
class Conv2d {
  public:
    Conv2d() = default;
    Conv2d(ParameterSet &params, const std::string &name, long in, long out, int kernel, int stride,
           int padding, std::mt19937_64 &rng);
    Var operator()(Tape &tape, Var x) const;
    Parameter &weight() const { return *weight_; }
    Parameter &bias() const { return *bias_; }

  private:
    Parameter *weight_ = nullptr;
    Parameter *bias_ = nullptr;
    int kernel_ = 1;
    int stride_ = 1;
    int padding_ = 0;
};

class GroupNorm {
  public:
    GroupNorm() = default;
    GroupNorm(ParameterSet &params, const std::string &name, long channels, int groups);
    Var operator()(Tape &tape, Var x) const;

  private:
    Parameter *gamma_ = nullptr;
    Parameter *beta_ = nullptr;
    int groups_ = 1;
};

} // namespace duosplat::nn
