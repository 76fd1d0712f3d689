#pragma once

#include <span>
#include <utility>
#include <vector>

#include "dlps/operators.hpp"
#include "dlps/tokenspace.hpp"

namespace dlps {

// 10 log10(max^2 / MSE), capped at 99.0 dB (the zero-MSE sentinel).
double psnr(std::span<const double> x, std::span<const double> x_hat, double max_val = 1.0);

// Percent of matching positions.
double token_accuracy(const TokenSequence & z, const TokenSequence & z_hat);

// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5), averaged over
// channels. Requires height and width >= 11.
double ssim(std::span<const double> x, std::span<const double> x_hat, const ImageGrid & grid,
            double max_val = 1.0);

// IoU and F1 over the positive class. Empty union gives IoU 1; zero
// precision + recall gives F1 0.
std::pair<double, double> iou_f1(const std::vector<bool> & b, const std::vector<bool> & b_hat);

}  // namespace dlps
