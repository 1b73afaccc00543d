#pragma once

#include <cstddef>

#include "refdepth/imaging.hpp"

namespace refdepth {

enum class EvalRegion { kAll, kNonReflective };

struct EvalOptions {
  double cap = 120.0;
  bool median_scale = true;
  // Clamping both maps to the cap is the default; this switches to dropping
  // pixels whose ground truth exceeds it.
  bool exclude_beyond_cap = false;
};

struct DepthMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rms = 0.0;
  double rms_log = 0.0;   // natural log
  double delta1 = 0.0;    // percent of pixels with max(p/g, g/p) < 1.25
  double delta2 = 0.0;    // < 1.25^2
  double delta3 = 0.0;    // < 1.25^3
  std::size_t pixel_count = 0;
  double scale = 1.0;     // median(gt)/median(pred) when median scaling is on
};

// Depth accuracy over the selected region. Pixels with non-positive ground
// truth are holes and never evaluated. With median scaling the prediction is
// rescaled by median(gt)/median(pred) first, removing the monocular scale
// ambiguity. `mask` (1 = reflective) is required for kNonReflective and
// ignored otherwise. Throws NumericalError on an empty region or a
// non-positive prediction median.
DepthMetrics evaluate(const ScalarField& pred, const ScalarField& gt, EvalRegion region,
                      const ScalarField* mask, const EvalOptions& opts = {});

}  // namespace refdepth
