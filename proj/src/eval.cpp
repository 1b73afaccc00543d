#include "refdepth/eval.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace refdepth {

namespace {

constexpr double kMinDepth = 1e-3;

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (n % 2 == 0) {
    const double lower = *std::max_element(v.begin(), v.begin() + mid);
    m = 0.5 * (lower + m);
  }
  return m;
}

}  // namespace

DepthMetrics evaluate(const ScalarField& pred, const ScalarField& gt, EvalRegion region,
                      const ScalarField* mask, const EvalOptions& opts) {
  if (pred.width != gt.width || pred.height != gt.height) {
    throw NumericalError("evaluate: prediction and ground truth dimensions differ");
  }
  if (region == EvalRegion::kNonReflective) {
    if (mask == nullptr) throw NumericalError("evaluate: region mask missing");
    if (mask->width != gt.width || mask->height != gt.height) {
      throw NumericalError("evaluate: mask dimensions differ");
    }
  }

  std::vector<double> ps, gs;
  ps.reserve(gt.pixel_count());
  gs.reserve(gt.pixel_count());
  for (int y = 0; y < gt.height; ++y) {
    for (int x = 0; x < gt.width; ++x) {
      if (region == EvalRegion::kNonReflective && mask->at(x, y) > 0.5) continue;
      const double g = gt.at(x, y);
      if (!(g > 0.0)) continue;  // hole
      if (opts.exclude_beyond_cap && g > opts.cap) continue;
      ps.push_back(pred.at(x, y));
      gs.push_back(g);
    }
  }
  if (gs.empty()) throw NumericalError("evaluate: empty region");

  DepthMetrics m;
  m.pixel_count = gs.size();
  if (opts.median_scale) {
    const double med_pred = median(ps);
    if (!(med_pred > 0.0)) throw NumericalError("evaluate: non-positive prediction median");
    m.scale = median(gs) / med_pred;
  }

  double abs_rel = 0.0, sq_rel = 0.0, rms = 0.0, rms_log = 0.0;
  std::size_t d1 = 0, d2 = 0, d3 = 0;
  for (std::size_t i = 0; i < gs.size(); ++i) {
    const double p = std::clamp(ps[i] * m.scale, kMinDepth, opts.cap);
    const double g = opts.exclude_beyond_cap ? gs[i] : std::min(gs[i], opts.cap);
    const double diff = g - p;
    abs_rel += std::abs(diff) / g;
    sq_rel += diff * diff / g;
    rms += diff * diff;
    const double dl = std::log(g) - std::log(p);
    rms_log += dl * dl;
    const double ratio = std::max(p / g, g / p);
    if (ratio < 1.25) ++d1;
    if (ratio < 1.25 * 1.25) ++d2;
    if (ratio < 1.25 * 1.25 * 1.25) ++d3;
  }
  const double n = static_cast<double>(gs.size());
  m.abs_rel = abs_rel / n;
  m.sq_rel = sq_rel / n;
  m.rms = std::sqrt(rms / n);
  m.rms_log = std::sqrt(rms_log / n);
  m.delta1 = 100.0 * static_cast<double>(d1) / n;
  m.delta2 = 100.0 * static_cast<double>(d2) / n;
  m.delta3 = 100.0 * static_cast<double>(d3) / n;
  return m;
}

}  // namespace refdepth
