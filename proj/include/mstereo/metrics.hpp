#pragma once

#include <span>
#include <utility>
#include <vector>

#include "mstereo/camera.hpp"
#include "mstereo/pyramid.hpp"
#include "mstereo/triangulation.hpp"

namespace mstereo {

// Sum over levels and jointly valid pixels of the endpoint distance.
double flow_loss(std::span<const FlowField> estimated,
                 std::span<const FlowField> ground_truth);

// Sum over levels of ||r_l - r_gt|| + ||t_l - t_gt||. The ground-truth
// translation is expected to be unit-norm.
double motion_loss(std::span<const std::pair<int, RelativePose>> poses,
                   const RelativePose& ground_truth);

// Log-mean scale aligning `d` to `gt` over jointly valid pixels.
double scale_alpha(const DepthMap& d, const DepthMap& gt);

// Per-pixel scale-invariant log error log(d) + alpha - log(gt); second
// output masks the jointly valid pixels the error is defined on.
std::pair<ImageD, Mask> depth_error_map(const DepthMap& d, const DepthMap& gt);

// Reverse Huber: |x| inside the unit interval, x^2 outside.
double berhu(double x);

// (sum of berhu(error), sum of forward-difference gradient magnitudes),
// accumulated over levels. Gradients count only where both pixels of the
// difference are valid.
std::pair<double, double> depth_loss(std::span<const DepthMap> estimated,
                                     std::span<const DepthMap> ground_truth);

struct DepthMetrics {
  double l1_inv = 0.0;
  double sc_inv = 0.0;
  double l1_rel = 0.0;
};

// Raw metric formulas over jointly valid pixels; callers wanting the
// standard protocol apply optimal scaling first (sc-inv is scale-free).
DepthMetrics depth_metrics(const DepthMap& d, const DepthMap& gt);

// d scaled by exp(scale_alpha(d, gt)).
DepthMap apply_optimal_scale(const DepthMap& d, const DepthMap& gt);

struct PoseErrors {
  double rotation_deg = 0.0;
  double translation_deg = 0.0;
};

// Relative rotation angle and the angle between unit translations, degrees.
PoseErrors pose_errors(const RelativePose& estimated, const RelativePose& ground_truth);

// Mean endpoint error over jointly valid pixels, optionally excluding an
// occlusion mask (nonzero = occluded).
double flow_epe(const FlowField& estimated, const FlowField& ground_truth,
                const Mask* occlusion = nullptr);

}  // namespace mstereo
