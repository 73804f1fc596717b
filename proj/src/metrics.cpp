// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace duosplat {
namespace {

void require_same(const RgbImage &a, const RgbImage &b, const char *what) {
    if (!a.same_shape(b)) {
        throw InvalidInput(std::string(what) + ": image sizes differ");
    }
}

std::array<double, kSsimWindow> gaussian_window() {
    std::array<double, kSsimWindow> w{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double x = i - kSsimWindow / 2;
        w[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (double &v : w) {
        v /= sum;
    }
    return w;
}

/// Separable same-size Gaussian filter with zero padding. Self-adjoint.
ScalarMap filter(const ScalarMap &in) {
    static const auto w = gaussian_window();
    const int h = in.height();
    const int wd = in.width();
    const int r = kSsimWindow / 2;
    ScalarMap tmp(h, wd);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < wd; ++x) {
            double s = 0.0;
            for (int k = -r; k <= r; ++k) {
                const int xx = x + k;
                if (xx >= 0 && xx < wd) {
                    s += w[static_cast<std::size_t>(k + r)] * in(y, xx);
                }
            }
            tmp(y, x) = s;
        }
    }
    ScalarMap out(h, wd);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < wd; ++x) {
            double s = 0.0;
            for (int k = -r; k <= r; ++k) {
                const int yy = y + k;
                if (yy >= 0 && yy < h) {
                    s += w[static_cast<std::size_t>(k + r)] * tmp(yy, x);
                }
            }
            out(y, x) = s;
        }
    }
    return out;
}

ScalarMap channel(const RgbImage &img, int c) {
    ScalarMap m(img.height(), img.width());
    for (std::size_t i = 0; i < img.size(); ++i) {
        m[i] = img[i][c];
    }
    return m;
}

ScalarMap product(const ScalarMap &a, const ScalarMap &b) {
    ScalarMap m(a.height(), a.width());
    for (std::size_t i = 0; i < a.size(); ++i) {
        m[i] = a[i] * b[i];
    }
    return m;
}

SsimGrad ssim_impl(const RgbImage &a, const RgbImage &b, bool want_grad) {
    require_same(a, b, "ssim");
    if (a.empty()) {
        throw InvalidInput("ssim: empty image");
    }
    SsimGrad out;
    if (want_grad) {
        out.d_a = RgbImage(a.height(), a.width(), Vec3::Zero());
    }
    const double n = static_cast<double>(a.size()) * 3.0;
    for (int c = 0; c < 3; ++c) {
        const ScalarMap x = channel(a, c);
        const ScalarMap y = channel(b, c);
        const ScalarMap mx = filter(x);
        const ScalarMap my = filter(y);
        const ScalarMap exx = filter(product(x, x));
        const ScalarMap eyy = filter(product(y, y));
        const ScalarMap exy = filter(product(x, y));
        ScalarMap d_mx(x.height(), x.width());
        ScalarMap d_exx(x.height(), x.width());
        ScalarMap d_exy(x.height(), x.width());
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double a1 = 2.0 * mx[i] * my[i] + kSsimC1;
            const double a2 = 2.0 * (exy[i] - mx[i] * my[i]) + kSsimC2;
            const double b1 = mx[i] * mx[i] + my[i] * my[i] + kSsimC1;
            const double b2 = (exx[i] - mx[i] * mx[i]) + (eyy[i] - my[i] * my[i]) + kSsimC2;
            const double s = (a1 * a2) / (b1 * b2);
            out.value += s;
            if (want_grad) {
                d_mx[i] = s * (2.0 * my[i] / a1 - 2.0 * my[i] / a2 - 2.0 * mx[i] / b1 + 2.0 * mx[i] / b2) / n;
                d_exx[i] = -s / b2 / n;
                d_exy[i] = 2.0 * s / a2 / n;
            }
        }
        if (want_grad) {
            const ScalarMap g_mx = filter(d_mx);
            const ScalarMap g_exx = filter(d_exx);
            const ScalarMap g_exy = filter(d_exy);
            for (std::size_t i = 0; i < x.size(); ++i) {
                out.d_a[i][c] = g_mx[i] + 2.0 * x[i] * g_exx[i] + y[i] * g_exy[i];
            }
        }
    }
    out.value /= n;
    return out;
}

} // namespace

BoundingBox mask_bbox(const Mask &mask, int margin) {
    int r0 = mask.height(), r1 = -1, c0 = mask.width(), c1 = -1;
    for (int r = 0; r < mask.height(); ++r) {
        for (int c = 0; c < mask.width(); ++c) {
            if (mask(r, c)) {
                r0 = std::min(r0, r);
                r1 = std::max(r1, r);
                c0 = std::min(c0, c);
                c1 = std::max(c1, c);
            }
        }
    }
    if (r1 < 0) {
        throw InvalidInput("bounding box of an empty mask");
    }
    r0 = std::max(0, r0 - margin);
    c0 = std::max(0, c0 - margin);
    r1 = std::min(mask.height() - 1, r1 + margin);
    c1 = std::min(mask.width() - 1, c1 + margin);
    return {r0, c0, r1 - r0 + 1, c1 - c0 + 1};
}

BoundingBox full_frame(int height, int width) { return {0, 0, height, width}; }

RgbImage crop(const RgbImage &image, const BoundingBox &box) {
    if (box.empty()) {
        throw InvalidInput("empty crop");
    }
    if (box.row0 < 0 || box.col0 < 0 || box.row0 + box.rows > image.height() ||
        box.col0 + box.cols > image.width()) {
        throw InvalidInput("crop outside the image");
    }
    RgbImage out(box.rows, box.cols);
    for (int r = 0; r < box.rows; ++r) {
        for (int c = 0; c < box.cols; ++c) {
            out(r, c) = image(box.row0 + r, box.col0 + c);
        }
    }
    return out;
}

double mse(const RgbImage &a, const RgbImage &b, const BoundingBox &box) {
    require_same(a, b, "mse");
    const RgbImage ca = crop(a, box);
    const RgbImage cb = crop(b, box);
    double s = 0.0;
    for (std::size_t i = 0; i < ca.size(); ++i) {
        s += (ca[i] - cb[i]).squaredNorm();
    }
    return s / (3.0 * static_cast<double>(ca.size()));
}

double psnr(const RgbImage &a, const RgbImage &b, const BoundingBox &box) {
    const double m = mse(a, b, box);
    return m == 0.0 ? kPsnrIdentical : 10.0 * std::log10(1.0 / m);
}

double psnr(const RgbImage &a, const RgbImage &b) { return psnr(a, b, full_frame(a.height(), a.width())); }

double ssim(const RgbImage &a, const RgbImage &b) { return ssim_impl(a, b, false).value; }

double ssim(const RgbImage &a, const RgbImage &b, const BoundingBox &box) {
    require_same(a, b, "ssim");
    return ssim_impl(crop(a, box), crop(b, box), false).value;
}

SsimGrad ssim_grad(const RgbImage &a, const RgbImage &b) { return ssim_impl(a, b, true); }

double l1(const RgbImage &a, const RgbImage &b) {
    require_same(a, b, "l1");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += (a[i] - b[i]).cwiseAbs().sum();
    }
    return s / (3.0 * static_cast<double>(a.size()));
}

namespace {

void check_beta(double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) {
        throw InvalidInput("beta must lie in [0, 1]");
    }
}

} // namespace

Stage2Loss stage2_loss(const RgbImage &render, const RgbImage &gt, double beta) {
    check_beta(beta);
    Stage2Loss out;
    out.l1 = l1(render, gt);
    out.ssim = ssim(render, gt);
    out.total = beta * out.l1 + (1.0 - beta) * (1.0 - out.ssim);
    return out;
}

Stage2Loss stage2_loss_grad(const RgbImage &render, const RgbImage &gt, double beta) {
    check_beta(beta);
    Stage2Loss out;
    out.l1 = l1(render, gt);
    SsimGrad sg = ssim_grad(render, gt);
    out.ssim = sg.value;
    out.total = beta * out.l1 + (1.0 - beta) * (1.0 - out.ssim);
    const double n = 3.0 * static_cast<double>(render.size());
    out.d_render = RgbImage(render.height(), render.width());
    for (std::size_t i = 0; i < render.size(); ++i) {
        const Vec3 diff = render[i] - gt[i];
        const Vec3 sign(diff.x() > 0 ? 1.0 : (diff.x() < 0 ? -1.0 : 0.0),
                        diff.y() > 0 ? 1.0 : (diff.y() < 0 ? -1.0 : 0.0),
                        diff.z() > 0 ? 1.0 : (diff.z() < 0 ? -1.0 : 0.0));
        out.d_render[i] = beta * sign / n - (1.0 - beta) * sg.d_a[i];
    }
    return out;
}

} // namespace duosplat
