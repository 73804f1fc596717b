// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace duosplat::nn {

void AdamW::step(ParameterSet &params, double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (Parameter *p : params.all()) {
        if (!p->trainable) {
            continue;
        }
        auto [it, fresh] = state_.try_emplace(p->name);
        Moments &s = it->second;
        if (fresh) {
            s.m = Tensor::Zero(p->value.rows(), p->value.cols());
            s.v = Tensor::Zero(p->value.rows(), p->value.cols());
        }
        s.m = config_.beta1 * s.m + (1.0 - config_.beta1) * p->grad;
        s.v = config_.beta2 * s.v + (1.0 - config_.beta2) * p->grad.cwiseAbs2();
        if (p->decay && config_.weight_decay > 0.0) {
            p->value *= 1.0 - lr * config_.weight_decay;
        }
        p->value.array() -=
            lr * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + config_.eps);
    }
}

double cosine_lr(long step, long total, double initial, double final) {
    if (total <= 1) {
        return final;
    }
    const double t = static_cast<double>(std::clamp(step, 0L, total - 1)) / static_cast<double>(total - 1);
    return final + 0.5 * (initial - final) * (1.0 + std::cos(std::numbers::pi * t));
}

double grad_norm_squared(const ParameterSet &params) {
    double s = 0.0;
    for (const Parameter *p : params.all()) {
        if (p->trainable) {
            s += p->grad.squaredNorm();
        }
    }
    return s;
}

} // namespace duosplat::nn
