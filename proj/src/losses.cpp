#include "refdepth/losses.hpp"

#include <algorithm>
#include <cmath>

namespace refdepth {

namespace {

constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

// Below this residual the pe square root sits on the exact-match cusp where
// its slope is unbounded; the derivative is defined as 0 there.
constexpr double kRootGuard = 1e-14;

void check_kernel(const WindowKernel& k) {
  if (k.size < 3 || k.size % 2 == 0) {
    throw NumericalError("WindowKernel: size must be odd and >= 3");
  }
  if (k.weights.size() != static_cast<std::size_t>(k.size) * k.size) {
    throw NumericalError("WindowKernel: weight count mismatch");
  }
}

void check_patch(std::span<const double> x, std::span<const double> y, const WindowKernel& k) {
  const std::size_t n = static_cast<std::size_t>(k.size) * k.size;
  if (x.size() != n || y.size() != n) {
    throw NumericalError("patch size does not match kernel");
  }
}

}  // namespace

WindowKernel WindowKernel::uniform(int size) {
  WindowKernel k;
  k.size = size;
  k.gaussian = false;
  k.weights.assign(static_cast<std::size_t>(size) * size, 1.0 / (size * size));
  check_kernel(k);
  return k;
}

WindowKernel WindowKernel::gaussian_kernel(int size, double sigma) {
  WindowKernel k;
  k.size = size;
  k.gaussian = true;
  if (sigma <= 0.0) sigma = size / 6.0;
  k.weights.resize(static_cast<std::size_t>(size) * size);
  const int m = size / 2;
  double sum = 0.0;
  for (int dy = -m; dy <= m; ++dy) {
    for (int dx = -m; dx <= m; ++dx) {
      const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      k.weights[(dy + m) * size + (dx + m)] = w;
      sum += w;
    }
  }
  for (double& w : k.weights) w /= sum;
  check_kernel(k);
  return k;
}

namespace detail {

WindowMoments window_moments(std::span<const double> x, std::span<const double> y,
                             const WindowKernel& kernel) {
  WindowMoments m;
  for (std::size_t i = 0; i < x.size(); ++i) {
    m.mx += kernel.weights[i] * x[i];
    m.my += kernel.weights[i] * y[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - m.mx;
    const double dy = y[i] - m.my;
    m.sxx += kernel.weights[i] * dx * dx;
    m.syy += kernel.weights[i] * dy * dy;
    m.sxy += kernel.weights[i] * dx * dy;
  }
  return m;
}

WindowMoments window_moments_at(const ScalarField& x, const ScalarField& y, int cx, int cy,
                                const WindowKernel& kernel) {
  WindowMoments m;
  const int mg = kernel.margin();
  for (int dy = -mg; dy <= mg; ++dy) {
    for (int dx = -mg; dx <= mg; ++dx) {
      const double w = kernel.weight(dx, dy);
      m.mx += w * x.at(cx + dx, cy + dy);
      m.my += w * y.at(cx + dx, cy + dy);
    }
  }
  for (int dy = -mg; dy <= mg; ++dy) {
    for (int dx = -mg; dx <= mg; ++dx) {
      const double w = kernel.weight(dx, dy);
      const double ex = x.at(cx + dx, cy + dy) - m.mx;
      const double ey = y.at(cx + dx, cy + dy) - m.my;
      m.sxx += w * ex * ex;
      m.syy += w * ey * ey;
      m.sxy += w * ex * ey;
    }
  }
  return m;
}

double structural_from_moments(const WindowMoments& m, StructuralMetric metric,
                               const LossConfig& cfg) {
  if (metric == StructuralMetric::kPassim) {
    const double k = cfg.passim_variant == PassimVariant::kRescaled ? 2.0 : 1.0;
    const double num = k * m.mx * m.my * m.sxy + cfg.epsilon;
    const double den = m.sxx * m.my * m.my + m.syy * m.mx * m.mx + cfg.epsilon;
    return num / den;
  }
  const double a = 2.0 * m.mx * m.my + kSsimC1;
  const double b = 2.0 * m.sxy + kSsimC2;
  const double c = m.mx * m.mx + m.my * m.my + kSsimC1;
  const double e = m.sxx + m.syy + kSsimC2;
  return (a * b) / (c * e);
}

double structural_deriv_y(const WindowMoments& m, double w, double xi, double yi,
                          StructuralMetric metric, const LossConfig& cfg) {
  const double dmy = w;
  const double dsxy = w * (xi - m.mx);
  const double dsyy = 2.0 * w * (yi - m.my);
  if (metric == StructuralMetric::kPassim) {
    const double k = cfg.passim_variant == PassimVariant::kRescaled ? 2.0 : 1.0;
    const double num = k * m.mx * m.my * m.sxy + cfg.epsilon;
    const double den = m.sxx * m.my * m.my + m.syy * m.mx * m.mx + cfg.epsilon;
    const double dnum = k * m.mx * (dmy * m.sxy + m.my * dsxy);
    const double dden = 2.0 * m.sxx * m.my * dmy + dsyy * m.mx * m.mx;
    return (dnum * den - num * dden) / (den * den);
  }
  const double a = 2.0 * m.mx * m.my + kSsimC1;
  const double b = 2.0 * m.sxy + kSsimC2;
  const double c = m.mx * m.mx + m.my * m.my + kSsimC1;
  const double e = m.sxx + m.syy + kSsimC2;
  const double da = 2.0 * m.mx * dmy;
  const double db = 2.0 * dsxy;
  const double dc = 2.0 * m.my * dmy;
  const double de = dsyy;
  const double ce = c * e;
  return ((da * b + a * db) * ce - a * b * (dc * e + c * de)) / (ce * ce);
}

double smooth_l1_deriv_b(double a, double b) {
  const double d = a - b;
  if (std::abs(d) < 1.0) return -d;
  return d > 0.0 ? -1.0 : 1.0;
}

double pe_structural(double metric_value, double alpha) {
  const double t = std::clamp(1.0 - metric_value, 0.0, 2.0);
  return 0.5 * alpha * std::sqrt(t);
}

double pe_structural_deriv(double metric_value, double alpha) {
  const double t = 1.0 - metric_value;
  if (t <= kRootGuard || t >= 2.0) return 0.0;
  return -alpha / (4.0 * std::sqrt(t));
}

}  // namespace detail

WindowStats window_stats(std::span<const double> x, std::span<const double> y,
                         const WindowKernel& kernel) {
  check_kernel(kernel);
  check_patch(x, y, kernel);
  const detail::WindowMoments m = detail::window_moments(x, y, kernel);
  WindowStats s;
  s.mu_x = m.mx;
  s.mu_y = m.my;
  s.sigma_x = std::sqrt(std::max(m.sxx, 0.0));
  s.sigma_y = std::sqrt(std::max(m.syy, 0.0));
  s.sigma_xy = m.sxy;
  return s;
}

double passim(std::span<const double> x, std::span<const double> y, const LossConfig& cfg) {
  check_kernel(cfg.kernel);
  check_patch(x, y, cfg.kernel);
  return detail::structural_from_moments(detail::window_moments(x, y, cfg.kernel),
                                         StructuralMetric::kPassim, cfg);
}

double ssim(std::span<const double> x, std::span<const double> y, const LossConfig& cfg) {
  check_kernel(cfg.kernel);
  check_patch(x, y, cfg.kernel);
  return detail::structural_from_moments(detail::window_moments(x, y, cfg.kernel),
                                         StructuralMetric::kSsim, cfg);
}

double smooth_l1(double a, double b) {
  const double d = std::abs(a - b);
  return d < 1.0 ? 0.5 * d * d : d - 0.5;
}

double pe(std::span<const double> x, std::span<const double> y, const LossConfig& cfg,
          StructuralMetric metric) {
  check_kernel(cfg.kernel);
  check_patch(x, y, cfg.kernel);
  const double m = detail::structural_from_moments(detail::window_moments(x, y, cfg.kernel),
                                                   metric, cfg);
  double l1 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) l1 += smooth_l1(x[i], y[i]);
  l1 /= static_cast<double>(x.size());
  return detail::pe_structural(m, cfg.alpha) + (1.0 - cfg.alpha) * l1;
}

double dice_coefficient(const ScalarField& p, const ScalarField& g) {
  if (!p.same_shape(g)) throw NumericalError("dice_coefficient: shape mismatch");
  double pg = 0.0, pp = 0.0, gg = 0.0;
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    pg += p.data[i] * g.data[i];
    pp += p.data[i] * p.data[i];
    gg += g.data[i] * g.data[i];
  }
  const double den = pp + gg;
  if (den == 0.0) return 1.0;  // two empty masks agree perfectly
  return 2.0 * pg / den;
}

double dice_loss(const ScalarField& p, const ScalarField& g, double epsilon) {
  if (!p.same_shape(g)) throw NumericalError("dice_loss: shape mismatch");
  double pg = 0.0, pp = 0.0, gg = 0.0;
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    pg += p.data[i] * g.data[i];
    pp += p.data[i] * p.data[i];
    gg += g.data[i] * g.data[i];
  }
  return 1.0 - (2.0 * pg + epsilon) / (pp + gg + epsilon);
}

double edge_aware_smoothness(const ScalarField& depth, const ScalarField& gray,
                             const ScalarField& valid_mask) {
  if (!depth.same_shape(gray) || !depth.same_shape(valid_mask)) {
    throw NumericalError("edge_aware_smoothness: shape mismatch");
  }
  const int w = depth.width, h = depth.height;
  std::size_t n_valid = 0;
  double mu = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (valid_mask.at(x, y) <= 0.5) continue;
      const double d = depth.at(x, y);
      if (!(d > 0.0)) throw NumericalError("edge_aware_smoothness: non-positive depth");
      mu += 1.0 / d;
      ++n_valid;
    }
  }
  if (n_valid == 0) throw NumericalError("edge_aware_smoothness: empty valid set");
  mu /= static_cast<double>(n_valid);

  double total = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (valid_mask.at(x, y) <= 0.5) continue;
      const double ds = 1.0 / depth.at(x, y) / mu;
      if (x + 1 < w && valid_mask.at(x + 1, y) > 0.5) {
        const double dd = 1.0 / depth.at(x + 1, y) / mu - ds;
        total += std::abs(dd) * std::exp(-std::abs(gray.at(x + 1, y) - gray.at(x, y)));
      }
      if (y + 1 < h && valid_mask.at(x, y + 1) > 0.5) {
        const double dd = 1.0 / depth.at(x, y + 1) / mu - ds;
        total += std::abs(dd) * std::exp(-std::abs(gray.at(x, y + 1) - gray.at(x, y)));
      }
    }
  }
  return total / static_cast<double>(n_valid);
}

namespace {

template <typename PerCenter>
MetricMap window_map(const ScalarField& x, const ScalarField& y,
                     std::span<const std::uint8_t> valid, const LossConfig& cfg,
                     PerCenter per_center) {
  if (!x.same_shape(y)) throw NumericalError("metric map: shape mismatch");
  if (x.channels != 1) throw NumericalError("metric map: expected single channel");
  if (!valid.empty() && valid.size() != x.pixel_count()) {
    throw NumericalError("metric map: validity size mismatch");
  }
  MetricMap out;
  out.values = ScalarField::zeros(x.width, x.height, 1);
  out.center_valid.assign(x.pixel_count(), 0);
  const int mg = cfg.kernel.margin();
  double sum = 0.0;
  for (int cy = mg; cy < x.height - mg; ++cy) {
    for (int cx = mg; cx < x.width - mg; ++cx) {
      bool ok = true;
      if (!valid.empty()) {
        for (int dy = -mg; dy <= mg && ok; ++dy) {
          for (int dx = -mg; dx <= mg; ++dx) {
            if (!valid[static_cast<std::size_t>(cy + dy) * x.width + (cx + dx)]) {
              ok = false;
              break;
            }
          }
        }
      }
      if (!ok) continue;
      const double v = per_center(cx, cy);
      out.values.at(cx, cy) = v;
      out.center_valid[static_cast<std::size_t>(cy) * x.width + cx] = 1;
      sum += v;
      ++out.count;
    }
  }
  out.mean = out.count ? sum / static_cast<double>(out.count) : 0.0;
  return out;
}

}  // namespace

MetricMap structural_map(const ScalarField& x, const ScalarField& y,
                         std::span<const std::uint8_t> valid, const LossConfig& cfg,
                         StructuralMetric metric) {
  check_kernel(cfg.kernel);
  return window_map(x, y, valid, cfg, [&](int cx, int cy) {
    return detail::structural_from_moments(
        detail::window_moments_at(x, y, cx, cy, cfg.kernel), metric, cfg);
  });
}

MetricMap pe_map(const ScalarField& x, const ScalarField& y,
                 std::span<const std::uint8_t> valid, const LossConfig& cfg,
                 StructuralMetric metric) {
  check_kernel(cfg.kernel);
  const int mg = cfg.kernel.margin();
  const double n = static_cast<double>(cfg.kernel.size) * cfg.kernel.size;
  return window_map(x, y, valid, cfg, [&](int cx, int cy) {
    const double m = detail::structural_from_moments(
        detail::window_moments_at(x, y, cx, cy, cfg.kernel), metric, cfg);
    double l1 = 0.0;
    for (int dy = -mg; dy <= mg; ++dy) {
      for (int dx = -mg; dx <= mg; ++dx) {
        l1 += smooth_l1(x.at(cx + dx, cy + dy), y.at(cx + dx, cy + dy));
      }
    }
    return detail::pe_structural(m, cfg.alpha) + (1.0 - cfg.alpha) * (l1 / n);
  });
}

}  // namespace refdepth
