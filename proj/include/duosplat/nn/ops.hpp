// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "duosplat/nn/tape.hpp"

#include <span>
#include <vector>

/// Differentiable operations on Tape values. Every op records its own backward rule.
namespace duosplat::nn::ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// x (N x C) + b (1 x C) broadcast over rows.
Var add_row_bias(Var x, Var bias);
/// x (C x P) + b (C x 1) broadcast over columns. Keeps the spatial layout.
Var add_channel_bias(Var x, Var bias);
/// x (C x P) * g (C x 1) broadcast over columns. Keeps the spatial layout.
Var mul_channel(Var x, Var gain);

Var matmul(Var a, Var b);
/// x (N x in) * w^T (in x out) + b (1 x out). Pass an invalid Var to skip the bias.
Var linear(Var x, Var weight, Var bias);

Var concat_cols(const std::vector<Var> &parts);
/// Stacks along rows; for feature maps this is channel concatenation.
Var concat_rows(const std::vector<Var> &parts);

/// out.flat[i] = index[i] >= 0 ? x.flat[index[i]] : 0 (row-major flattening).
Var gather(Var x, std::span<const int> index, long rows, long cols);

Var gelu(Var x);
Var silu(Var x);
Var relu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var exp(Var x);

/// Row-wise normalization with per-column gain and bias (1 x C each).
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
/// Normalization over channel groups of a (C x P) map with per-channel gain and bias (C x 1).
Var group_norm(Var x, Var gamma, Var beta, int groups, double eps = 1e-5);

/// Multi-head scaled dot-product attention. q: (Tq x D), k and v: (Tk x D).
Var attention(Var q, Var k, Var v, int heads);

/// 2D convolution of a spatial map x (Cin x H*W) with weights (Cout x Cin*k*k) and an
/// optional bias (Cout x 1); zero padding.
Var conv2d(Var x, Var weight, Var bias, int kernel, int stride, int padding);
/// Nearest-neighbour 2x upsampling of a spatial map.
Var upsample2x(Var x);

/// 1 x 1 sum of all entries.
Var sum(Var x);

} // namespace duosplat::nn::ops
