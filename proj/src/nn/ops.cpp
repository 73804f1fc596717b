// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/nn/ops.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace duosplat::nn::ops {
namespace {

void require(bool ok, const char *what) {
    if (!ok) {
        throw InvalidInput(std::string("nn op: ") + what);
    }
}

void require_same_shape(Var a, Var b, const char *op) {
    require(a.valid() && b.valid() && a.tape() == b.tape(), op);
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw InvalidInput(std::string("nn op ") + op + ": shape mismatch (" +
                           std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                           std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
    }
}

Var keep_spatial(Var out, Var like) {
    if (like.height() > 0 && out.cols() == like.cols()) {
        out.tape()->set_spatial(out, like.height(), like.width());
    }
    return out;
}

// Elementwise op with derivative expressed through input x and output y.
template <typename Fwd, typename Deriv>
Var unary(Var x, Fwd f, Deriv df) {
    Tape &t = *x.tape();
    const int xi = x.id();
    Var out = t.record(x.value().unaryExpr(f), {x}, [xi, df](Tape &tp, int self) {
        const Tensor &g = tp.grad_ref(self);
        const Tensor &xv = tp.value(xi);
        const Tensor &yv = tp.value(self);
        Tensor &gx = tp.grad_ref(xi);
        for (long i = 0; i < g.size(); ++i) {
            gx.data()[i] += g.data()[i] * df(xv.data()[i], yv.data()[i]);
        }
    });
    return keep_spatial(out, x);
}

struct ConvGeometry {
    int cin, h, w, k, stride, pad, oh, ow;
};

// cols((ci*k + ky)*k + kx, oy*ow + ox) = x(ci, (oy*s - p + ky)*w + ox*s - p + kx), zero outside.
Tensor im2col(const Tensor &x, const ConvGeometry &g) {
    Tensor cols = Tensor::Zero(static_cast<long>(g.cin) * g.k * g.k, static_cast<long>(g.oh) * g.ow);
    for (int ci = 0; ci < g.cin; ++ci) {
        const double *src = x.data() + static_cast<long>(ci) * g.h * g.w;
        for (int ky = 0; ky < g.k; ++ky) {
            for (int kx = 0; kx < g.k; ++kx) {
                double *dst = cols.data() + ((static_cast<long>(ci) * g.k + ky) * g.k + kx) * cols.cols();
                for (int oy = 0; oy < g.oh; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.h) {
                        continue;
                    }
                    for (int ox = 0; ox < g.ow; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (ix >= 0 && ix < g.w) {
                            dst[oy * g.ow + ox] = src[iy * g.w + ix];
                        }
                    }
                }
            }
        }
    }
    return cols;
}

void col2im_add(const Tensor &cols, const ConvGeometry &g, Tensor &x) {
    for (int ci = 0; ci < g.cin; ++ci) {
        double *dst = x.data() + static_cast<long>(ci) * g.h * g.w;
        for (int ky = 0; ky < g.k; ++ky) {
            for (int kx = 0; kx < g.k; ++kx) {
                const double *src =
                    cols.data() + ((static_cast<long>(ci) * g.k + ky) * g.k + kx) * cols.cols();
                for (int oy = 0; oy < g.oh; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.h) {
                        continue;
                    }
                    for (int ox = 0; ox < g.ow; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (ix >= 0 && ix < g.w) {
                            dst[iy * g.w + ix] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

} // namespace

Var add(Var a, Var b) {
    require_same_shape(a, b, "add");
    const int ai = a.id();
    const int bi = b.id();
    Var out = a.tape()->record(a.value() + b.value(), {a, b}, [ai, bi](Tape &t, int self) {
        const Tensor &g = t.grad_ref(self);
        if (t.needs_grad(ai)) {
            t.grad_ref(ai) += g;
        }
        if (t.needs_grad(bi)) {
            t.grad_ref(bi) += g;
        }
    });
    return keep_spatial(out, a);
}

Var sub(Var a, Var b) {
    require_same_shape(a, b, "sub");
    const int ai = a.id();
    const int bi = b.id();
    Var out = a.tape()->record(a.value() - b.value(), {a, b}, [ai, bi](Tape &t, int self) {
        const Tensor &g = t.grad_ref(self);
        if (t.needs_grad(ai)) {
            t.grad_ref(ai) += g;
        }
        if (t.needs_grad(bi)) {
            t.grad_ref(bi) -= g;
        }
    });
    return keep_spatial(out, a);
}

Var mul(Var a, Var b) {
    require_same_shape(a, b, "mul");
    const int ai = a.id();
    const int bi = b.id();
    Var out = a.tape()->record(a.value().cwiseProduct(b.value()), {a, b},
                               [ai, bi](Tape &t, int self) {
                                   const Tensor &g = t.grad_ref(self);
                                   if (t.needs_grad(ai)) {
                                       t.grad_ref(ai) += g.cwiseProduct(t.value(bi));
                                   }
                                   if (t.needs_grad(bi)) {
                                       t.grad_ref(bi) += g.cwiseProduct(t.value(ai));
                                   }
                               });
    return keep_spatial(out, a);
}

Var scale(Var a, double s) {
    const int ai = a.id();
    Var out = a.tape()->record(a.value() * s, {a}, [ai, s](Tape &t, int self) {
        t.grad_ref(ai) += s * t.grad_ref(self);
    });
    return keep_spatial(out, a);
}

Var add_row_bias(Var x, Var bias) {
    require(bias.rows() == 1 && bias.cols() == x.cols(), "add_row_bias: bias must be 1 x C");
    const int xi = x.id();
    const int bi = bias.id();
    Tensor y = x.value().rowwise() + bias.value().row(0);
    return x.tape()->record(std::move(y), {x, bias}, [xi, bi](Tape &t, int self) {
        const Tensor &g = t.grad_ref(self);
        if (t.needs_grad(xi)) {
            t.grad_ref(xi) += g;
        }
        if (t.needs_grad(bi)) {
            t.grad_ref(bi) += g.colwise().sum();
        }
    });
}

Var add_channel_bias(Var x, Var bias) {
    require(bias.cols() == 1 && bias.rows() == x.rows(), "add_channel_bias: bias must be C x 1");
    const int xi = x.id();
    const int bi = bias.id();
    Tensor y = x.value().colwise() + bias.value().col(0);
    Var out = x.tape()->record(std::move(y), {x, bias}, [xi, bi](Tape &t, int self) {
        const Tensor &g = t.grad_ref(self);
        if (t.needs_grad(xi)) {
            t.grad_ref(xi) += g;
        }
        if (t.needs_grad(bi)) {
            t.grad_ref(bi) += g.rowwise().sum();
        }
    });
    return keep_spatial(out, x);
}

Var mul_channel(Var x, Var gain) {
    require(gain.cols() == 1 && gain.rows() == x.rows(), "mul_channel: gain must be C x 1");
    const int xi = x.id();
    const int gi = gain.id();
    Tensor y = gain.value().col(0).asDiagonal() * x.value();
    Var out = x.tape()->record(std::move(y), {x, gain}, [xi, gi](Tape &t, int self) {
        const Tensor &g = t.grad_ref(self);
        if (t.needs_grad(xi)) {
            t.grad_ref(xi) += t.value(gi).col(0).asDiagonal() * g;
        }
        if (t.needs_grad(gi)) {
            t.grad_ref(gi) += g.cwiseProduct(t.value(xi)).rowwise().sum();
        }
    });
    return keep_spatial(out, x);
}

Var matmul(Var a, Var b) {
    require(a.cols() == b.rows(), "matmul: inner dimensions differ");
    const int ai = a.id();
    const int bi = b.id();
    Tensor y = a.value() * b.value();
    return a.tape()->record(std::move(y), {a, b}, [ai, bi](Tape &t, int self) {
        const Tensor &g = t.grad_ref(self);
        if (t.needs_grad(ai)) {
            t.grad_ref(ai).noalias() += g * t.value(bi).transpose();
        }
        if (t.needs_grad(bi)) {
            t.grad_ref(bi).noalias() += t.value(ai).transpose() * g;
        }
    });
}

Var linear(Var x, Var weight, Var bias) {
    require(weight.cols() == x.cols(), "linear: weight columns must match input width");
    const bool has_bias = bias.valid();
    if (has_bias) {
        require(bias.rows() == 1 && bias.cols() == weight.rows(), "linear: bias must be 1 x out");
    }
    Tensor y = x.value() * weight.value().transpose();
    if (has_bias) {
        y.rowwise() += bias.value().row(0);
    }
    const int xi = x.id();
    const int wi = weight.id();
    const int bi = has_bias ? bias.id() : -1;
    std::vector<Var> inputs = {x, weight};
    if (has_bias) {
        inputs.push_back(bias);
    }
    return x.tape()->record(std::move(y), inputs, [xi, wi, bi](Tape &t, int self) {
        const Tensor &g = t.grad_ref(self);
        if (t.needs_grad(xi)) {
            t.grad_ref(xi).noalias() += g * t.value(wi);
        }
        if (t.needs_grad(wi)) {
            t.grad_ref(wi).noalias() += g.transpose() * t.value(xi);
        }
        if (bi >= 0 && t.needs_grad(bi)) {
            t.grad_ref(bi) += g.colwise().sum();
        }
    });
}

Var concat_cols(const std::vector<Var> &parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    const long rows = parts.front().rows();
    long cols = 0;
    for (const Var &p : parts) {
        require(p.rows() == rows && p.tape() == parts.front().tape(), "concat_cols: row mismatch");
        cols += p.cols();
    }
    Tensor y(rows, cols);
    std::vector<int> ids;
    std::vector<long> offsets;
    long off = 0;
    for (const Var &p : parts) {
        y.middleCols(off, p.cols()) = p.value();
        ids.push_back(p.id());
        offsets.push_back(off);
        off += p.cols();
    }
    return parts.front().tape()->record(std::move(y), parts, [ids, offsets](Tape &t, int self) {
        const Tensor &g = t.grad_ref(self);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (t.needs_grad(ids[i])) {
                Tensor &gi = t.grad_ref(ids[i]);
                gi += g.middleCols(offsets[i], gi.cols());
            }
        }
    });
}

Var concat_rows(const std::vector<Var> &parts) {
    require(!parts.empty(), "concat_rows: no inputs");
    const long cols = parts.front().cols();
    long rows = 0;
    for (const Var &p : parts) {
        require(p.cols() == cols && p.tape() == parts.front().tape(), "concat_rows: column mismatch");
        rows += p.rows();
    }
    Tensor y(rows, cols);
    std::vector<int> ids;
    std::vector<long> offsets;
    long off = 0;
    for (const Var &p : parts) {
        y.middleRows(off, p.rows()) = p.value();
        ids.push_back(p.id());
        offsets.push_back(off);
        off += p.rows();
    }
    Var out = parts.front().tape()->record(std::move(y), parts, [ids, offsets](Tape &t, int self) {
        const Tensor &g = t.grad_ref(self);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (t.needs_grad(ids[i])) {
                Tensor &gi = t.grad_ref(ids[i]);
                gi += g.middleRows(offsets[i], gi.rows());
            }
        }
    });
    return keep_spatial(out, parts.front());
}

Var gather(Var x, std::span<const int> index, long rows, long cols) {
    require(static_cast<long>(index.size()) == rows * cols, "gather: index size must be rows*cols");
    const long n = x.value().size();
    for (int i : index) {
        require(i < n, "gather: index out of range");
    }
    Tensor y(rows, cols);
    const double *src = x.value().data();
    for (std::size_t i = 0; i < index.size(); ++i) {
        y.data()[i] = index[i] >= 0 ? src[index[i]] : 0.0;
    }
    const int xi = x.id();
    std::vector<int> idx(index.begin(), index.end());
    return x.tape()->record(std::move(y), {x}, [xi, idx = std::move(idx)](Tape &t, int self) {
        const Tensor &g = t.grad_ref(self);
        Tensor &gx = t.grad_ref(xi);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] >= 0) {
                gx.data()[idx[i]] += g.data()[i];
            }
        }
    });
}

Var gelu(Var x) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    return unary(
        x, [=](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
        [=](double v, double) {
            return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
        });
}

Var silu(Var x) {
    return unary(
        x, [](double v) { return v / (1.0 + std::exp(-v)); },
        [](double v, double) {
            const double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 + v * (1.0 - s));
        });
}

Var relu(Var x) {
    return unary(
        x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var x) {
    return unary(
        x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
    return unary(
        x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var x) {
    return unary(
        x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    const long n = x.rows();
    const long c = x.cols();
    require(gamma.rows() == 1 && gamma.cols() == c && beta.rows() == 1 && beta.cols() == c,
            "layer_norm: gain and bias must be 1 x C");
    Tensor xhat(n, c);
    Eigen::VectorXd inv_std(n);
    const Tensor &xv = x.value();
    for (long r = 0; r < n; ++r) {
        const double mean = xv.row(r).mean();
        const double var = (xv.row(r).array() - mean).square().mean();
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (xv.row(r).array() - mean) * inv_std[r];
    }
    Tensor y = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();
    const int xi = x.id();
    const int gi = gamma.id();
    const int bi = beta.id();
    return x.tape()->record(std::move(y), {x, gamma, beta},
                            [xi, gi, bi, xhat = std::move(xhat), inv_std](Tape &t, int self) {
                                const Tensor &g = t.grad_ref(self);
                                if (t.needs_grad(gi)) {
                                    t.grad_ref(gi) += g.cwiseProduct(xhat).colwise().sum();
                                }
                                if (t.needs_grad(bi)) {
                                    t.grad_ref(bi) += g.colwise().sum();
                                }
                                if (!t.needs_grad(xi)) {
                                    return;
                                }
                                Tensor &gx = t.grad_ref(xi);
                                const Tensor dxhat =
                                    g.array().rowwise() * t.value(gi).row(0).array();
                                for (long r = 0; r < dxhat.rows(); ++r) {
                                    const double m1 = dxhat.row(r).mean();
                                    const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                                    gx.row(r).array() += inv_std[r] * (dxhat.row(r).array() - m1 -
                                                                       xhat.row(r).array() * m2);
                                }
                            });
}

Var group_norm(Var x, Var gamma, Var beta, int groups, double eps) {
    const long c = x.rows();
    const long p = x.cols();
    require(groups > 0 && c % groups == 0, "group_norm: channels must divide into groups");
    require(gamma.rows() == c && gamma.cols() == 1 && beta.rows() == c && beta.cols() == 1,
            "group_norm: gain and bias must be C x 1");
    const long per = c / groups;
    const Tensor &xv = x.value();
    Tensor xhat(c, p);
    Eigen::VectorXd inv_std(groups);
    for (int gr = 0; gr < groups; ++gr) {
        auto block = xv.middleRows(gr * per, per);
        const double mean = block.mean();
        const double var = (block.array() - mean).square().mean();
        inv_std[gr] = 1.0 / std::sqrt(var + eps);
        xhat.middleRows(gr * per, per) = (block.array() - mean) * inv_std[gr];
    }
    Tensor y = (gamma.value().col(0).asDiagonal() * xhat).colwise() + beta.value().col(0);
    const int xi = x.id();
    const int gi = gamma.id();
    const int bi = beta.id();
    Var out = x.tape()->record(
        std::move(y), {x, gamma, beta},
        [xi, gi, bi, per, groups, xhat = std::move(xhat), inv_std](Tape &t, int self) {
            const Tensor &g = t.grad_ref(self);
            if (t.needs_grad(gi)) {
                t.grad_ref(gi) += g.cwiseProduct(xhat).rowwise().sum();
            }
            if (t.needs_grad(bi)) {
                t.grad_ref(bi) += g.rowwise().sum();
            }
            if (!t.needs_grad(xi)) {
                return;
            }
            Tensor &gx = t.grad_ref(xi);
            const Tensor dxhat = t.value(gi).col(0).asDiagonal() * g;
            for (int gr = 0; gr < groups; ++gr) {
                auto d = dxhat.middleRows(gr * per, per);
                auto xh = xhat.middleRows(gr * per, per);
                const double m1 = d.mean();
                const double m2 = d.cwiseProduct(xh).mean();
                gx.middleRows(gr * per, per).array() += inv_std[gr] * (d.array() - m1 - xh.array() * m2);
            }
        });
    return keep_spatial(out, x);
}

Var attention(Var q, Var k, Var v, int heads) {
    const long d = q.cols();
    require(heads > 0 && d % heads == 0, "attention: width must divide into heads");
    require(k.cols() == d && v.cols() == d && k.rows() == v.rows(), "attention: k/v shape mismatch");
    const long dh = d / heads;
    const double s = 1.0 / std::sqrt(static_cast<double>(dh));
    const long tq = q.rows();
    std::vector<Tensor> probs(static_cast<std::size_t>(heads));
    Tensor out(tq, d);
    for (int h = 0; h < heads; ++h) {
        Tensor logits = (q.value().middleCols(h * dh, dh) * k.value().middleCols(h * dh, dh).transpose()) * s;
        for (long r = 0; r < logits.rows(); ++r) {
            const double mx = logits.row(r).maxCoeff();
            logits.row(r) = (logits.row(r).array() - mx).exp();
            logits.row(r) /= logits.row(r).sum();
        }
        out.middleCols(h * dh, dh).noalias() = logits * v.value().middleCols(h * dh, dh);
        probs[static_cast<std::size_t>(h)] = std::move(logits);
    }
    const int qi = q.id();
    const int ki = k.id();
    const int vi = v.id();
    return q.tape()->record(
        std::move(out), {q, k, v},
        [qi, ki, vi, heads, dh, s, probs = std::move(probs)](Tape &t, int self) {
            const Tensor &g = t.grad_ref(self);
            const Tensor &qv = t.value(qi);
            const Tensor &kv = t.value(ki);
            const Tensor &vv = t.value(vi);
            for (int h = 0; h < heads; ++h) {
                const Tensor &p = probs[static_cast<std::size_t>(h)];
                auto gh = g.middleCols(h * dh, dh);
                if (t.needs_grad(vi)) {
                    t.grad_ref(vi).middleCols(h * dh, dh).noalias() += p.transpose() * gh;
                }
                Tensor dp = gh * vv.middleCols(h * dh, dh).transpose();
                const Eigen::VectorXd row_dot = dp.cwiseProduct(p).rowwise().sum();
                Tensor ds = p.cwiseProduct(dp.colwise() - row_dot) * s;
                if (t.needs_grad(qi)) {
                    t.grad_ref(qi).middleCols(h * dh, dh).noalias() += ds * kv.middleCols(h * dh, dh);
                }
                if (t.needs_grad(ki)) {
                    t.grad_ref(ki).middleCols(h * dh, dh).noalias() +=
                        ds.transpose() * qv.middleCols(h * dh, dh);
                }
            }
        });
}

Var conv2d(Var x, Var weight, Var bias, int kernel, int stride, int padding) {
    require(x.height() > 0, "conv2d: input has no spatial layout");
    require(kernel > 0 && stride > 0 && padding >= 0, "conv2d: bad kernel/stride/padding");
    ConvGeometry g{static_cast<int>(x.rows()), x.height(), x.width(), kernel, stride, padding, 0, 0};
    g.oh = (g.h + 2 * padding - kernel) / stride + 1;
    g.ow = (g.w + 2 * padding - kernel) / stride + 1;
    require(g.oh > 0 && g.ow > 0, "conv2d: output would be empty");
    require(weight.cols() == static_cast<long>(g.cin) * kernel * kernel,
            "conv2d: weight columns must equal Cin*k*k");
    const bool has_bias = bias.valid();
    if (has_bias) {
        require(bias.rows() == weight.rows() && bias.cols() == 1, "conv2d: bias must be Cout x 1");
    }
    Tensor y;
    if (kernel == 1 && stride == 1 && padding == 0) {
        y = weight.value() * x.value();
    } else {
        y = weight.value() * im2col(x.value(), g);
    }
    if (has_bias) {
        y.colwise() += bias.value().col(0);
    }
    const int xi = x.id();
    const int wi = weight.id();
    const int bi = has_bias ? bias.id() : -1;
    std::vector<Var> inputs = {x, weight};
    if (has_bias) {
        inputs.push_back(bias);
    }
    Var out = x.tape()->record(std::move(y), inputs, [xi, wi, bi, g](Tape &t, int self) {
        const Tensor &gy = t.grad_ref(self);
        const bool pointwise = g.k == 1 && g.stride == 1 && g.pad == 0;
        if (bi >= 0 && t.needs_grad(bi)) {
            t.grad_ref(bi) += gy.rowwise().sum();
        }
        if (pointwise) {
            if (t.needs_grad(wi)) {
                t.grad_ref(wi).noalias() += gy * t.value(xi).transpose();
            }
            if (t.needs_grad(xi)) {
                t.grad_ref(xi).noalias() += t.value(wi).transpose() * gy;
            }
            return;
        }
        if (t.needs_grad(wi)) {
            t.grad_ref(wi).noalias() += gy * im2col(t.value(xi), g).transpose();
        }
        if (t.needs_grad(xi)) {
            const Tensor dcols = t.value(wi).transpose() * gy;
            col2im_add(dcols, g, t.grad_ref(xi));
        }
    });
    out.tape()->set_spatial(out, g.oh, g.ow);
    return out;
}

Var upsample2x(Var x) {
    require(x.height() > 0, "upsample2x: input has no spatial layout");
    const int h = x.height();
    const int w = x.width();
    const long c = x.rows();
    Tensor y(c, 4L * h * w);
    const Tensor &xv = x.value();
    for (long ch = 0; ch < c; ++ch) {
        for (int r = 0; r < 2 * h; ++r) {
            for (int col = 0; col < 2 * w; ++col) {
                y(ch, r * 2 * w + col) = xv(ch, (r / 2) * w + col / 2);
            }
        }
    }
    const int xi = x.id();
    Var out = x.tape()->record(std::move(y), {x}, [xi, h, w](Tape &t, int self) {
        const Tensor &g = t.grad_ref(self);
        Tensor &gx = t.grad_ref(xi);
        for (long ch = 0; ch < g.rows(); ++ch) {
            for (int r = 0; r < 2 * h; ++r) {
                for (int col = 0; col < 2 * w; ++col) {
                    gx(ch, (r / 2) * w + col / 2) += g(ch, r * 2 * w + col);
                }
            }
        }
    });
    out.tape()->set_spatial(out, 2 * h, 2 * w);
    return out;
}

Var sum(Var x) {
    Tensor y(1, 1);
    y(0, 0) = x.value().sum();
    const int xi = x.id();
    return x.tape()->record(std::move(y), {x}, [xi](Tape &t, int self) {
        t.grad_ref(xi).array() += t.grad_ref(self)(0, 0);
    });
}

} // namespace duosplat::nn::ops
