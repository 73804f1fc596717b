// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "duosplat/common.hpp"

#include <limits>

namespace duosplat {

/// Half-open pixel rectangle [row0, row0 + rows) x [col0, col0 + cols).
struct BoundingBox {
    int row0 = 0;
    int col0 = 0;
    int rows = 0;
    int cols = 0;

    bool empty() const { return rows <= 0 || cols <= 0; }
    bool operator==(const BoundingBox &) const = default;
};

/// Tight box around the mask grown by `margin` pixels and clipped to the image.
/// Throws InvalidInput for an empty mask.
BoundingBox mask_bbox(const Mask &mask, int margin = 5);
BoundingBox full_frame(int height, int width);

RgbImage crop(const RgbImage &image, const BoundingBox &box);

/// Reported when two crops are identical.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

double mse(const RgbImage &a, const RgbImage &b, const BoundingBox &box);
/// 10 log10(1 / MSE) over the box and channels; kPsnrIdentical when MSE is 0.
double psnr(const RgbImage &a, const RgbImage &b, const BoundingBox &box);
double psnr(const RgbImage &a, const RgbImage &b);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean SSIM map over pixels and channels. Local statistics use an 11x11 Gaussian window
/// (sigma 1.5) with zero padding, so the output map has the input size.
double ssim(const RgbImage &a, const RgbImage &b);
double ssim(const RgbImage &a, const RgbImage &b, const BoundingBox &box);

struct SsimGrad {
    double value = 0.0;
    RgbImage d_a; ///< d ssim / d a
};
SsimGrad ssim_grad(const RgbImage &a, const RgbImage &b);

/// Mean absolute error over pixels and channels.
double l1(const RgbImage &a, const RgbImage &b);

struct Stage2Loss {
    double total = 0.0;
    double l1 = 0.0;
    double ssim = 0.0;
    RgbImage d_render; ///< filled by stage2_loss_grad only
};

/// beta * L1 + (1 - beta) * (1 - SSIM).
Stage2Loss stage2_loss(const RgbImage &render, const RgbImage &gt, double beta = 0.8);
Stage2Loss stage2_loss_grad(const RgbImage &render, const RgbImage &gt, double beta = 0.8);

} // namespace duosplat
