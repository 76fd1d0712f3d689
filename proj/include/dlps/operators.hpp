#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dlps/matrix.hpp"
#include "dlps/rng.hpp"

namespace dlps {

// Raster layout: channel-major, then row-major within a channel.
struct ImageGrid {
    int height = 1;
    int width = 1;
    int channels = 1;

    int size() const { return height * width * channels; }
    int index(int channel, int y, int x) const {
        return (channel * height + y) * width + x;
    }
};

struct Measurement {
    std::vector<double> values;
    double sigma = 0.0;
};

// Forward measurement operator A with a differentiable extension.
// apply_relaxed agrees with apply at hard inputs; add_vjp accumulates
// J(x)^T v into grad.
class ForwardOp {
  public:
    virtual ~ForwardOp() = default;

    virtual std::string name() const = 0;
    virtual int output_dim() const = 0;
    virtual std::vector<double> apply_relaxed(std::span<const double> x) const = 0;
    virtual void add_vjp(std::span<const double> x, std::span<const double> v,
                         std::span<double> grad) const = 0;

    virtual std::vector<double> apply(std::span<const double> x) const {
        return apply_relaxed(x);
    }

    const ImageGrid & grid() const { return grid_; }

  protected:
    explicit ForwardOp(ImageGrid grid) : grid_(std::move(grid)) {}
    void check_input(std::size_t n) const;

    ImageGrid grid_;
};

std::unique_ptr<ForwardOp> make_identity(ImageGrid grid);
// `observed` has one flag per spatial location, shared across channels.
std::unique_ptr<ForwardOp> make_inpaint(ImageGrid grid, std::vector<bool> observed);
// Hides the axis-aligned rectangle [x0, x0+w) x [y0, y0+h).
std::unique_ptr<ForwardOp> make_box_inpaint(ImageGrid grid, int x0, int y0, int w, int h);
// Binary pixel pairs; inputs must decode to {0, 1}.
std::unique_ptr<ForwardOp> make_xor_pairs(ImageGrid grid, std::vector<std::pair<int, int>> pairs);
std::unique_ptr<ForwardOp> make_and_pairs(ImageGrid grid, std::vector<std::pair<int, int>> pairs);
std::unique_ptr<ForwardOp> make_gaussian_blur(ImageGrid grid, int taps, double sigma);
std::unique_ptr<ForwardOp> make_motion_blur(ImageGrid grid, Matrix kernel);
std::unique_ptr<ForwardOp> make_downsample(ImageGrid grid, int factor);
// y = clip(2x - 0.5, 0, 1)
std::unique_ptr<ForwardOp> make_hdr(ImageGrid grid);

// Gradient of -(lambda1 ||r||_1 + lambda2 ||r||_2^2) at x, with
// r = apply_relaxed(x) - y. The l1 subgradient at r = 0 is 0.
std::vector<double> residual_gradient(const ForwardOp & op, std::span<const double> x,
                                      const Measurement & y, double lambda1, double lambda2);

// lambda1 ||r||_1 + lambda2 ||r||_2^2 at x.
double data_fit_energy(const ForwardOp & op, std::span<const double> x,
                       const Measurement & y, double lambda1, double lambda2);

Measurement simulate_measurement(const ForwardOp & op, std::span<const double> x_clean,
                                 double sigma, Rng & rng);

// Plain-text kernel file: "h w" on the first line, then h*w reals.
// Normalized to sum 1 on load.
Matrix load_kernel_file(const std::string & path);

// Plain-text 0/1 grid, height rows by width cols; 1 marks an observed
// location.
std::vector<bool> load_mask_file(const std::string & path, int height, int width);
void write_mask_file(const std::string & path, const std::vector<bool> & observed,
                     int height, int width);

// Random spatial mask with round(fraction_hidden * H * W) hidden locations.
std::vector<bool> random_mask(int height, int width, double fraction_hidden, Rng & rng);

}  // namespace dlps
