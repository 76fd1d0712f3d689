#include "dlps/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace dlps {

double psnr(std::span<const double> x, std::span<const double> x_hat, double max_val) {
    if (x.size() != x_hat.size() || x.empty()) {
        throw std::invalid_argument("psnr: length mismatch");
    }
    if (max_val <= 0.0) {
        throw std::invalid_argument("psnr: max_val must be positive");
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - x_hat[i];
        mse += d * d;
    }
    mse /= static_cast<double>(x.size());
    if (mse == 0.0) {
        return 99.0;
    }
    const double db = 10.0 * std::log10(max_val * max_val / mse);
    return db > 99.0 ? 99.0 : db;
}

double token_accuracy(const TokenSequence & z, const TokenSequence & z_hat) {
    if (z.size() != z_hat.size() || z.empty()) {
        throw std::invalid_argument("token_accuracy: length mismatch");
    }
    std::size_t matches = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        matches += z[i] == z_hat[i] ? 1 : 0;
    }
    return 100.0 * static_cast<double>(matches) / static_cast<double>(z.size());
}

namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;

std::vector<double> ssim_window() {
    std::vector<double> w(kWindow * kWindow);
    const int c = kWindow / 2;
    double total = 0.0;
    for (int y = 0; y < kWindow; ++y) {
        for (int x = 0; x < kWindow; ++x) {
            const double dy = y - c;
            const double dx = x - c;
            const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * kWindowSigma * kWindowSigma));
            w[static_cast<std::size_t>(y * kWindow + x)] = v;
            total += v;
        }
    }
    for (double & v : w) {
        v /= total;
    }
    return w;
}

}  // namespace

double ssim(std::span<const double> x, std::span<const double> x_hat, const ImageGrid & grid,
            double max_val) {
    if (x.size() != x_hat.size() || x.size() != static_cast<std::size_t>(grid.size())) {
        throw std::invalid_argument("ssim: length mismatch");
    }
    if (grid.height < kWindow || grid.width < kWindow) {
        throw std::invalid_argument("ssim: image must be at least 11x11");
    }
    static const std::vector<double> window = ssim_window();
    const double c1 = (0.01 * max_val) * (0.01 * max_val);
    const double c2 = (0.03 * max_val) * (0.03 * max_val);
    double acc = 0.0;
    std::size_t count = 0;
    for (int ch = 0; ch < grid.channels; ++ch) {
        for (int py = 0; py + kWindow <= grid.height; ++py) {
            for (int px = 0; px + kWindow <= grid.width; ++px) {
                double mu_a = 0.0;
                double mu_b = 0.0;
                double aa = 0.0;
                double bb = 0.0;
                double ab = 0.0;
                for (int wy = 0; wy < kWindow; ++wy) {
                    for (int wx = 0; wx < kWindow; ++wx) {
                        const double w = window[static_cast<std::size_t>(wy * kWindow + wx)];
                        const double a = x[static_cast<std::size_t>(
                            grid.index(ch, py + wy, px + wx))];
                        const double b = x_hat[static_cast<std::size_t>(
                            grid.index(ch, py + wy, px + wx))];
                        mu_a += w * a;
                        mu_b += w * b;
                        aa += w * a * a;
                        bb += w * b * b;
                        ab += w * a * b;
                    }
                }
                const double var_a = aa - mu_a * mu_a;
                const double var_b = bb - mu_b * mu_b;
                const double cov = ab - mu_a * mu_b;
                acc += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                       ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                count += 1;
            }
        }
    }
    return acc / static_cast<double>(count);
}

std::pair<double, double> iou_f1(const std::vector<bool> & b, const std::vector<bool> & b_hat) {
    if (b.size() != b_hat.size()) {
        throw std::invalid_argument("iou_f1: dimension mismatch");
    }
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        if (b[i] && b_hat[i]) {
            tp += 1;
        } else if (!b[i] && b_hat[i]) {
            fp += 1;
        } else if (b[i] && !b_hat[i]) {
            fn += 1;
        }
    }
    const std::size_t uni = tp + fp + fn;
    const double iou = uni == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(uni);
    const double prec = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double rec = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double f1 = prec + rec == 0.0 ? 0.0 : 2.0 * prec * rec / (prec + rec);
    return { iou, f1 };
}

}  // namespace dlps
