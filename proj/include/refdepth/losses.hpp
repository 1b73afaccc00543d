#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "refdepth/imaging.hpp"

namespace refdepth {

enum class PassimVariant { kRescaled, kVerbatim };
enum class StructuralMetric { kSsim, kPassim };

struct WindowKernel {
  int size = 5;
  bool gaussian = false;
  std::vector<double> weights;  // size*size, nonnegative, sums to 1

  static WindowKernel uniform(int size);
  // sigma <= 0 picks size/6.
  static WindowKernel gaussian_kernel(int size, double sigma = 0.0);
  int margin() const { return size / 2; }
  double weight(int dx, int dy) const {  // dx, dy in [-margin, margin]
    return weights[(dy + margin()) * size + (dx + margin())];
  }
};

struct WindowStats {
  double mu_x = 0.0;
  double mu_y = 0.0;
  double sigma_x = 0.0;
  double sigma_y = 0.0;
  double sigma_xy = 0.0;
};

struct LossConfig {
  double alpha = 0.75;
  double epsilon = 1e-4;
  WindowKernel kernel = WindowKernel::uniform(5);
  double smoothness_weight = 1e-3;
  PassimVariant passim_variant = PassimVariant::kRescaled;
};

// Weighted mean/stddev/covariance of two equally sized patches.
WindowStats window_stats(std::span<const double> x, std::span<const double> y,
                         const WindowKernel& kernel);

// Structure-only similarity normalized by patch means: invariant to
// multiplicative attenuation of either argument. The verbatim variant keeps
// the published closed form, which evaluates to 1/2 on identical patches; the
// rescaled default doubles the covariance term so identical patches score 1.
double passim(std::span<const double> x, std::span<const double> y, const LossConfig& cfg);

// Standard SSIM with C1 = 0.01^2, C2 = 0.03^2 on [0,1] intensities.
double ssim(std::span<const double> x, std::span<const double> y, const LossConfig& cfg);

// 0.5*d^2 below d=1, |d|-0.5 above; continuous at the joint.
double smooth_l1(double a, double b);

// (alpha/2) * sqrt(clamp(1 - M, 0, 2)) + (1 - alpha) * mean smooth_l1.
double pe(std::span<const double> x, std::span<const double> y, const LossConfig& cfg,
          StructuralMetric metric);

// Binary overlap 2|P.G| / (|P|^2 + |G|^2); 1 when both masks are empty.
double dice_coefficient(const ScalarField& p, const ScalarField& g);
double dice_loss(const ScalarField& p, const ScalarField& g, double epsilon);

// Mean of |dx d*| e^{-|dx I|} + |dy d*| e^{-|dy I|} over valid pixels, where
// d* is inverse depth divided by its mean over the valid set. A difference
// term enters only when both its pixels are valid.
double edge_aware_smoothness(const ScalarField& depth, const ScalarField& gray,
                             const ScalarField& valid_mask);

// Per-center-pixel map of a windowed quantity. valid[i] gates input pixels;
// a center counts only when its window fits the frame and covers valid
// pixels exclusively. Pass empty valid to treat every pixel as usable.
struct MetricMap {
  ScalarField values;
  std::vector<std::uint8_t> center_valid;
  double mean = 0.0;          // over valid centers
  std::size_t count = 0;      // valid centers
};

MetricMap structural_map(const ScalarField& x, const ScalarField& y,
                         std::span<const std::uint8_t> valid, const LossConfig& cfg,
                         StructuralMetric metric);
MetricMap pe_map(const ScalarField& x, const ScalarField& y,
                 std::span<const std::uint8_t> valid, const LossConfig& cfg,
                 StructuralMetric metric);

namespace detail {

// Weighted raw moments of one window; shared by the patch ops, the full-image
// maps, and the solver's gradient pass so all paths agree bit-for-bit.
struct WindowMoments {
  double mx = 0.0;   // weighted mean of x
  double my = 0.0;   // weighted mean of y
  double sxx = 0.0;  // weighted variance of x
  double syy = 0.0;  // weighted variance of y
  double sxy = 0.0;  // weighted covariance
};

WindowMoments window_moments(std::span<const double> x, std::span<const double> y,
                             const WindowKernel& kernel);
// Same, gathered from single-channel images around center (cx, cy); the
// window must fit the frame.
WindowMoments window_moments_at(const ScalarField& x, const ScalarField& y, int cx, int cy,
                                const WindowKernel& kernel);
double structural_from_moments(const WindowMoments& m, StructuralMetric metric,
                               const LossConfig& cfg);
// d(structural)/d(y_i) for a window pixel with kernel weight w.
double structural_deriv_y(const WindowMoments& m, double w, double xi, double yi,
                          StructuralMetric metric, const LossConfig& cfg);
// d(smooth_l1(a,b))/d(b).
double smooth_l1_deriv_b(double a, double b);
// Structural half of pe from the metric value M, and its derivative factor
// d(pe_structural)/dM. The sqrt is clamped to [0,2]; the derivative is 0 in
// the saturated ranges, including the exact-match end where the root's slope
// blows up.
double pe_structural(double metric_value, double alpha);
double pe_structural_deriv(double metric_value, double alpha);

}  // namespace detail

}  // namespace refdepth
