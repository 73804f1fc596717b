// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "duosplat/nn/tape.hpp"

#include <map>
#include <string>

namespace duosplat::nn {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 5e-2;
};

/// Adam with decoupled weight decay. Decay applies to parameters flagged `decay`.
/// Frozen (non-trainable) parameters are never touched.
class AdamW {
  public:
    explicit AdamW(AdamWConfig config = {}) : config_(config) {}

    void step(ParameterSet &params, double lr);
    long steps() const { return step_; }

  private:
    struct Moments {
        Tensor m;
        Tensor v;
    };
    AdamWConfig config_;
    std::map<std::string, Moments> state_;
    long step_ = 0;
};

/// Cosine annealing from `initial` at step 0 to `final` at step total-1.
double cosine_lr(long step, long total, double initial, double final);

/// Sum of squared gradients over trainable parameters.
double grad_norm_squared(const ParameterSet &params);

} // namespace duosplat::nn
