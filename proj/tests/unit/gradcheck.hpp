// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "duosplat/nn/tape.hpp"

#include <functional>
#include <random>
#include <vector>

namespace duosplat::testing {

using nn::Tensor;

inline Tensor random_tensor(std::mt19937_64 &rng, long rows, long cols, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Tensor t(rows, cols);
    for (long i = 0; i < t.size(); ++i) {
        t.data()[i] = n(rng);
    }
    return t;
}

/// Largest |analytic - numeric| / max(1, |numeric|) over every input element, where the scalar
/// objective is <seed, f(inputs)> and numeric derivatives are central differences.
inline double gradcheck(const std::function<nn::Var(nn::Tape &, std::vector<nn::Var> &)> &f,
                        std::vector<Tensor> inputs, std::uint64_t seed = 7, double h = 1e-6) {
    std::mt19937_64 rng(seed);
    Tensor probe;
    std::vector<Tensor> analytic;
    {
        nn::Tape tape;
        std::vector<nn::Var> vars;
        for (const Tensor &in : inputs) {
            vars.push_back(tape.leaf(in));
        }
        nn::Var out = f(tape, vars);
        probe = random_tensor(rng, out.rows(), out.cols());
        tape.backward(out, probe);
        for (const nn::Var &v : vars) {
            const Tensor *g = tape.grad(v);
            analytic.push_back(g ? *g : Tensor::Zero(v.rows(), v.cols()));
        }
    }
    auto objective = [&](const std::vector<Tensor> &ins) {
        nn::Tape tape(false);
        std::vector<nn::Var> vars;
        for (const Tensor &in : ins) {
            vars.push_back(tape.leaf(in));
        }
        return f(tape, vars).value().cwiseProduct(probe).sum();
    };
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (long i = 0; i < inputs[k].size(); ++i) {
            const double x0 = inputs[k].data()[i];
            inputs[k].data()[i] = x0 + h;
            const double fp = objective(inputs);
            inputs[k].data()[i] = x0 - h;
            const double fm = objective(inputs);
            inputs[k].data()[i] = x0;
            const double num = (fp - fm) / (2.0 * h);
            const double err = std::abs(analytic[k].data()[i] - num) / std::max(1.0, std::abs(num));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

} // namespace duosplat::testing
