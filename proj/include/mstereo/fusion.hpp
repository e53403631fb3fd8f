#pragma once

#include <vector>

#include "mstereo/triangulation.hpp"

namespace mstereo {

// Per-pair depth information: inverse depth, confidence and triangulation
// residual per pixel, plus the scale factor applied during alignment.
struct DepthCode {
  ImageD code;  // 3 channels: inverse depth, confidence, residual (px)
  double scale_factor = 1.0;
  bool scale_known = true;

  static constexpr int kInverseDepth = 0;
  static constexpr int kConfidence = 1;
  static constexpr int kResidual = 2;
};

// Triangulates a pair into a depth code. Degenerate, negative-depth and
// invalid-flow pixels get confidence 0.
DepthCode encode_pair(const TriangulationLayer& tri, double flow_noise_px,
                      int threads = 1);

// Rescales every code onto the first one using the confidence-weighted
// median of per-pixel inverse-depth ratios over pixels where both
// confidences exceed 0.5. Throws NoOverlap when a pair shares fewer than
// 100 such pixels with the reference.
std::vector<DepthCode> align_scales(std::vector<DepthCode> codes);

// Pools codes per pixel. Default: confidence-weighted mean of inverse depth
// with the confidence channel averaged plainly. exact_mean: plain unweighted
// mean of all three channels. A single code is returned unchanged.
DepthCode fuse_codes(const std::vector<DepthCode>& codes, bool exact_mean = false);

// Inverts the fused inverse depth where confidence > 0 and fills the rest
// with the shared edge-aware diffusion. Throws AllDegenerate when fewer
// than 1% of the pixels carry confidence.
DepthMap fused_depth(const DepthCode& code, const ImageF& source_image,
                     int threads = 1);

}  // namespace mstereo
