#include "dlps/operators.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dlps {

namespace {

// Symmetric (edge-repeating) reflection keeps column sums of symmetric
// kernels equal to 1, so blurs conserve mean intensity.
int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) {
            i = -i - 1;
        }
        if (i >= n) {
            i = 2 * n - 1 - i;
        }
    }
    return i;
}

class IdentityOp final : public ForwardOp {
  public:
    explicit IdentityOp(ImageGrid grid) : ForwardOp(grid) {}

    std::string name() const override { return "identity"; }
    int output_dim() const override { return grid_.size(); }

    std::vector<double> apply_relaxed(std::span<const double> x) const override {
        check_input(x.size());
        return { x.begin(), x.end() };
    }

    void add_vjp(std::span<const double>, std::span<const double> v,
                 std::span<double> grad) const override {
        for (std::size_t i = 0; i < v.size(); ++i) {
            grad[i] += v[i];
        }
    }
};

class SelectOp final : public ForwardOp {
  public:
    SelectOp(ImageGrid grid, std::vector<bool> observed_spatial, std::string name)
        : ForwardOp(grid), name_(std::move(name)) {
        if (observed_spatial.size() != static_cast<std::size_t>(grid_.height * grid_.width)) {
            throw std::invalid_argument(name_ + ": mask size must equal H*W");
        }
        for (int c = 0; c < grid_.channels; ++c) {
            for (int s = 0; s < grid_.height * grid_.width; ++s) {
                if (observed_spatial[static_cast<std::size_t>(s)]) {
                    retained_.push_back(c * grid_.height * grid_.width + s);
                }
            }
        }
    }

    std::string name() const override { return name_; }
    int output_dim() const override { return static_cast<int>(retained_.size()); }

    std::vector<double> apply_relaxed(std::span<const double> x) const override {
        check_input(x.size());
        std::vector<double> y(retained_.size());
        for (std::size_t i = 0; i < retained_.size(); ++i) {
            y[i] = x[static_cast<std::size_t>(retained_[i])];
        }
        return y;
    }

    void add_vjp(std::span<const double>, std::span<const double> v,
                 std::span<double> grad) const override {
        for (std::size_t i = 0; i < retained_.size(); ++i) {
            grad[static_cast<std::size_t>(retained_[i])] += v[i];
        }
    }

  private:
    std::string name_;
    std::vector<int> retained_;
};

class PairLogicOp final : public ForwardOp {
  public:
    PairLogicOp(ImageGrid grid, std::vector<std::pair<int, int>> pairs, bool is_xor)
        : ForwardOp(grid), pairs_(std::move(pairs)), is_xor_(is_xor) {
        for (auto [i, j] : pairs_) {
            if (i == j || i < 0 || j < 0 || i >= grid_.size() || j >= grid_.size()) {
                throw std::invalid_argument("pair operator: indices must be distinct and in range");
            }
        }
    }

    std::string name() const override { return is_xor_ ? "xor_pairs" : "and_pairs"; }
    int output_dim() const override { return static_cast<int>(pairs_.size()); }

    // Multilinear extensions: XOR(p,q) = p + q - 2pq, AND(p,q) = pq.
    std::vector<double> apply_relaxed(std::span<const double> x) const override {
        check_input(x.size());
        std::vector<double> y(pairs_.size());
        for (std::size_t n = 0; n < pairs_.size(); ++n) {
            const double p = x[static_cast<std::size_t>(pairs_[n].first)];
            const double q = x[static_cast<std::size_t>(pairs_[n].second)];
            y[n] = is_xor_ ? p + q - 2.0 * p * q : p * q;
        }
        return y;
    }

    std::vector<double> apply(std::span<const double> x) const override {
        check_input(x.size());
        std::vector<double> y(pairs_.size());
        for (std::size_t n = 0; n < pairs_.size(); ++n) {
            const bool p = x[static_cast<std::size_t>(pairs_[n].first)] >= 0.5;
            const bool q = x[static_cast<std::size_t>(pairs_[n].second)] >= 0.5;
            y[n] = (is_xor_ ? (p != q) : (p && q)) ? 1.0 : 0.0;
        }
        return y;
    }

    void add_vjp(std::span<const double> x, std::span<const double> v,
                 std::span<double> grad) const override {
        for (std::size_t n = 0; n < pairs_.size(); ++n) {
            const double p = x[static_cast<std::size_t>(pairs_[n].first)];
            const double q = x[static_cast<std::size_t>(pairs_[n].second)];
            if (is_xor_) {
                grad[static_cast<std::size_t>(pairs_[n].first)] += v[n] * (1.0 - 2.0 * q);
                grad[static_cast<std::size_t>(pairs_[n].second)] += v[n] * (1.0 - 2.0 * p);
            } else {
                grad[static_cast<std::size_t>(pairs_[n].first)] += v[n] * q;
                grad[static_cast<std::size_t>(pairs_[n].second)] += v[n] * p;
            }
        }
    }

  private:
    std::vector<std::pair<int, int>> pairs_;
    bool is_xor_;
};

// 2-d correlation with a fixed kernel, reflect boundary, per channel.
class ConvolveOp final : public ForwardOp {
  public:
    ConvolveOp(ImageGrid grid, Matrix kernel, std::string name)
        : ForwardOp(grid), kernel_(std::move(kernel)), name_(std::move(name)) {
        if (kernel_.rows() % 2 == 0 || kernel_.cols() % 2 == 0) {
            throw std::invalid_argument(name_ + ": kernel sides must be odd");
        }
        double total = std::accumulate(kernel_.data().begin(), kernel_.data().end(), 0.0);
        if (total <= 0.0) {
            throw std::invalid_argument(name_ + ": kernel must have positive mass");
        }
        for (double & w : kernel_.data()) {
            w /= total;
        }
    }

    std::string name() const override { return name_; }
    int output_dim() const override { return grid_.size(); }

    std::vector<double> apply_relaxed(std::span<const double> x) const override {
        check_input(x.size());
        std::vector<double> y(x.size(), 0.0);
        const int cy = static_cast<int>(kernel_.rows()) / 2;
        const int cx = static_cast<int>(kernel_.cols()) / 2;
        for (int c = 0; c < grid_.channels; ++c) {
            for (int py = 0; py < grid_.height; ++py) {
                for (int px = 0; px < grid_.width; ++px) {
                    double acc = 0.0;
                    for (std::size_t ky = 0; ky < kernel_.rows(); ++ky) {
                        const int sy = reflect(py + static_cast<int>(ky) - cy, grid_.height);
                        for (std::size_t kx = 0; kx < kernel_.cols(); ++kx) {
                            const int sx = reflect(px + static_cast<int>(kx) - cx, grid_.width);
                            acc += kernel_(ky, kx) *
                                   x[static_cast<std::size_t>(grid_.index(c, sy, sx))];
                        }
                    }
                    y[static_cast<std::size_t>(grid_.index(c, py, px))] = acc;
                }
            }
        }
        return y;
    }

    void add_vjp(std::span<const double>, std::span<const double> v,
                 std::span<double> grad) const override {
        const int cy = static_cast<int>(kernel_.rows()) / 2;
        const int cx = static_cast<int>(kernel_.cols()) / 2;
        for (int c = 0; c < grid_.channels; ++c) {
            for (int py = 0; py < grid_.height; ++py) {
                for (int px = 0; px < grid_.width; ++px) {
                    const double vi = v[static_cast<std::size_t>(grid_.index(c, py, px))];
                    if (vi == 0.0) {
                        continue;
                    }
                    for (std::size_t ky = 0; ky < kernel_.rows(); ++ky) {
                        const int sy = reflect(py + static_cast<int>(ky) - cy, grid_.height);
                        for (std::size_t kx = 0; kx < kernel_.cols(); ++kx) {
                            const int sx = reflect(px + static_cast<int>(kx) - cx, grid_.width);
                            grad[static_cast<std::size_t>(grid_.index(c, sy, sx))] +=
                                kernel_(ky, kx) * vi;
                        }
                    }
                }
            }
        }
    }

  private:
    Matrix kernel_;
    std::string name_;
};

class DownsampleOp final : public ForwardOp {
  public:
    DownsampleOp(ImageGrid grid, int factor) : ForwardOp(grid), factor_(factor) {
        if (factor_ < 1 || grid_.height % factor_ != 0 || grid_.width % factor_ != 0) {
            throw std::invalid_argument("downsample: factor must divide both image sides");
        }
    }

    std::string name() const override { return "downsample"; }
    int output_dim() const override {
        return grid_.channels * (grid_.height / factor_) * (grid_.width / factor_);
    }

    std::vector<double> apply_relaxed(std::span<const double> x) const override {
        check_input(x.size());
        const int oh = grid_.height / factor_;
        const int ow = grid_.width / factor_;
        const double inv = 1.0 / static_cast<double>(factor_ * factor_);
        std::vector<double> y(static_cast<std::size_t>(output_dim()), 0.0);
        for (int c = 0; c < grid_.channels; ++c) {
            for (int by = 0; by < oh; ++by) {
                for (int bx = 0; bx < ow; ++bx) {
                    double acc = 0.0;
                    for (int dy = 0; dy < factor_; ++dy) {
                        for (int dx = 0; dx < factor_; ++dx) {
                            acc += x[static_cast<std::size_t>(
                                grid_.index(c, by * factor_ + dy, bx * factor_ + dx))];
                        }
                    }
                    y[static_cast<std::size_t>((c * oh + by) * ow + bx)] = acc * inv;
                }
            }
        }
        return y;
    }

    void add_vjp(std::span<const double>, std::span<const double> v,
                 std::span<double> grad) const override {
        const int oh = grid_.height / factor_;
        const int ow = grid_.width / factor_;
        const double inv = 1.0 / static_cast<double>(factor_ * factor_);
        for (int c = 0; c < grid_.channels; ++c) {
            for (int by = 0; by < oh; ++by) {
                for (int bx = 0; bx < ow; ++bx) {
                    const double vi = v[static_cast<std::size_t>((c * oh + by) * ow + bx)] * inv;
                    for (int dy = 0; dy < factor_; ++dy) {
                        for (int dx = 0; dx < factor_; ++dx) {
                            grad[static_cast<std::size_t>(
                                grid_.index(c, by * factor_ + dy, bx * factor_ + dx))] += vi;
                        }
                    }
                }
            }
        }
    }

  private:
    int factor_;
};

class HdrOp final : public ForwardOp {
  public:
    explicit HdrOp(ImageGrid grid) : ForwardOp(grid) {}

    std::string name() const override { return "hdr"; }
    int output_dim() const override { return grid_.size(); }

    std::vector<double> apply_relaxed(std::span<const double> x) const override {
        check_input(x.size());
        std::vector<double> y(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            y[i] = std::clamp(2.0 * x[i] - 0.5, 0.0, 1.0);
        }
        return y;
    }

    void add_vjp(std::span<const double> x, std::span<const double> v,
                 std::span<double> grad) const override {
        // Subgradient 0 where the clip saturates.
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double pre = 2.0 * x[i] - 0.5;
            if (pre > 0.0 && pre < 1.0) {
                grad[i] += 2.0 * v[i];
            }
        }
    }
};

Matrix gaussian_kernel_2d(int taps, double sigma) {
    if (taps < 1 || taps % 2 == 0) {
        throw std::invalid_argument("gaussian_blur: taps must be odd and positive");
    }
    if (sigma <= 0.0) {
        throw std::invalid_argument("gaussian_blur: sigma must be positive");
    }
    const int c = taps / 2;
    std::vector<double> w1(static_cast<std::size_t>(taps));
    for (int i = 0; i < taps; ++i) {
        const double d = static_cast<double>(i - c);
        w1[static_cast<std::size_t>(i)] = std::exp(-0.5 * d * d / (sigma * sigma));
    }
    Matrix kernel(static_cast<std::size_t>(taps), static_cast<std::size_t>(taps));
    for (int y = 0; y < taps; ++y) {
        for (int x = 0; x < taps; ++x) {
            kernel(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
                w1[static_cast<std::size_t>(y)] * w1[static_cast<std::size_t>(x)];
        }
    }
    return kernel;  // normalized by ConvolveOp
}

}  // namespace

void ForwardOp::check_input(std::size_t n) const {
    if (n != static_cast<std::size_t>(grid_.size())) {
        throw std::invalid_argument(name() + ": input length does not match the grid");
    }
}

std::unique_ptr<ForwardOp> make_identity(ImageGrid grid) {
    return std::make_unique<IdentityOp>(grid);
}

std::unique_ptr<ForwardOp> make_inpaint(ImageGrid grid, std::vector<bool> observed) {
    return std::make_unique<SelectOp>(grid, std::move(observed), "inpaint");
}

std::unique_ptr<ForwardOp> make_box_inpaint(ImageGrid grid, int x0, int y0, int w, int h) {
    if (x0 < 0 || y0 < 0 || w < 1 || h < 1 || x0 + w > grid.width || y0 + h > grid.height) {
        throw std::invalid_argument("box: rectangle out of bounds");
    }
    std::vector<bool> observed(static_cast<std::size_t>(grid.height * grid.width), true);
    for (int y = y0; y < y0 + h; ++y) {
        for (int x = x0; x < x0 + w; ++x) {
            observed[static_cast<std::size_t>(y * grid.width + x)] = false;
        }
    }
    return std::make_unique<SelectOp>(grid, std::move(observed), "box");
}

std::unique_ptr<ForwardOp> make_xor_pairs(ImageGrid grid,
                                          std::vector<std::pair<int, int>> pairs) {
    return std::make_unique<PairLogicOp>(grid, std::move(pairs), true);
}

std::unique_ptr<ForwardOp> make_and_pairs(ImageGrid grid,
                                          std::vector<std::pair<int, int>> pairs) {
    return std::make_unique<PairLogicOp>(grid, std::move(pairs), false);
}

std::unique_ptr<ForwardOp> make_gaussian_blur(ImageGrid grid, int taps, double sigma) {
    return std::make_unique<ConvolveOp>(grid, gaussian_kernel_2d(taps, sigma), "gaussian_blur");
}

std::unique_ptr<ForwardOp> make_motion_blur(ImageGrid grid, Matrix kernel) {
    return std::make_unique<ConvolveOp>(grid, std::move(kernel), "motion_blur");
}

std::unique_ptr<ForwardOp> make_downsample(ImageGrid grid, int factor) {
    return std::make_unique<DownsampleOp>(grid, factor);
}

std::unique_ptr<ForwardOp> make_hdr(ImageGrid grid) {
    return std::make_unique<HdrOp>(grid);
}

std::vector<double> residual_gradient(const ForwardOp & op, std::span<const double> x,
                                      const Measurement & y, double lambda1, double lambda2) {
    const std::vector<double> out = op.apply_relaxed(x);
    if (out.size() != y.values.size()) {
        throw std::invalid_argument("residual_gradient: measurement length mismatch");
    }
    std::vector<double> v(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double r = out[i] - y.values[i];
        const double sgn = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
        v[i] = -(lambda1 * sgn + 2.0 * lambda2 * r);
    }
    std::vector<double> grad(x.size(), 0.0);
    op.add_vjp(x, v, grad);
    return grad;
}

double data_fit_energy(const ForwardOp & op, std::span<const double> x,
                       const Measurement & y, double lambda1, double lambda2) {
    const std::vector<double> out = op.apply_relaxed(x);
    if (out.size() != y.values.size()) {
        throw std::invalid_argument("data_fit_energy: measurement length mismatch");
    }
    double l1 = 0.0;
    double l2 = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double r = out[i] - y.values[i];
        l1 += std::fabs(r);
        l2 += r * r;
    }
    return lambda1 * l1 + lambda2 * l2;
}

Measurement simulate_measurement(const ForwardOp & op, std::span<const double> x_clean,
                                 double sigma, Rng & rng) {
    Measurement m;
    m.sigma = sigma;
    m.values = op.apply(x_clean);
    if (sigma > 0.0) {
        for (double & v : m.values) {
            v += sigma * rng.gaussian();
        }
    }
    return m;
}

Matrix load_kernel_file(const std::string & path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("load_kernel_file: cannot open " + path);
    }
    int h = 0;
    int w = 0;
    is >> h >> w;
    if (!is || h < 1 || w < 1) {
        throw std::runtime_error("load_kernel_file: bad header in " + path);
    }
    Matrix kernel(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
    for (double & v : kernel.data()) {
        is >> v;
        if (!is) {
            throw std::runtime_error("load_kernel_file: truncated data in " + path);
        }
    }
    const double total = std::accumulate(kernel.data().begin(), kernel.data().end(), 0.0);
    if (total <= 0.0) {
        throw std::runtime_error("load_kernel_file: kernel mass must be positive");
    }
    for (double & v : kernel.data()) {
        v /= total;
    }
    return kernel;
}

std::vector<bool> load_mask_file(const std::string & path, int height, int width) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("load_mask_file: cannot open " + path);
    }
    std::vector<bool> observed(static_cast<std::size_t>(height * width));
    for (std::size_t i = 0; i < observed.size(); ++i) {
        int flag = -1;
        is >> flag;
        if (!is || (flag != 0 && flag != 1)) {
            throw std::runtime_error("load_mask_file: expected a 0/1 grid in " + path);
        }
        observed[i] = flag == 1;
    }
    return observed;
}

void write_mask_file(const std::string & path, const std::vector<bool> & observed,
                     int height, int width) {
    if (observed.size() != static_cast<std::size_t>(height * width)) {
        throw std::invalid_argument("write_mask_file: mask size mismatch");
    }
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("write_mask_file: cannot open " + path);
    }
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            os << (observed[static_cast<std::size_t>(y * width + x)] ? 1 : 0)
               << (x + 1 == width ? '\n' : ' ');
        }
    }
}

std::vector<bool> random_mask(int height, int width, double fraction_hidden, Rng & rng) {
    if (fraction_hidden < 0.0 || fraction_hidden > 1.0) {
        throw std::invalid_argument("random_mask: fraction must lie in [0, 1]");
    }
    const std::size_t n = static_cast<std::size_t>(height * width);
    const std::size_t hidden =
        static_cast<std::size_t>(std::llround(fraction_hidden * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[rng.uniform_index(i)]);
    }
    std::vector<bool> observed(n, true);
    for (std::size_t i = 0; i < hidden; ++i) {
        observed[order[i]] = false;
    }
    return observed;
}

}  // namespace dlps
