#pragma once

#include <optional>
#include <vector>

#include "mstereo/fusion.hpp"
#include "mstereo/metrics.hpp"
#include "mstereo/motion.hpp"
#include "mstereo/synth.hpp"

namespace mstereo {

// Exact ground-truth resampling to a pyramid level: a level-i pixel p sees
// the same ray as level-0 pixel 2^i * p, so flow and depth subsample with
// no interpolation (flow vectors scale by 2^-i).
FlowField subsample_flow_level(const FlowField& level0, int level);
ImageD subsample_depth_level(const ImageD& level0, int level);
Mask subsample_mask_level(const Mask& level0, int level);

struct EstimateOptions {
  int pairs = -1;            // first k targets; -1 = all
  bool epipolar = true;      // false mirrors the no-joint ablation
  bool use_gt_pose = false;  // skip estimation, take poses from the sample
  bool exact_mean = false;   // plain mean pooling instead of weighted
  double flow_noise_px = 0.5;
  int threads = 1;
};

struct PairEstimate {
  FlowField flow;  // level 1
  RelativePose pose;
  std::vector<std::pair<int, RelativePose>> level_poses;
  bool fallback = false;
  std::array<int, 5> candidate_counts = {0, 0, 0, 0, 0};
};

struct EstimateResult {
  std::vector<PairEstimate> pairs;
  DepthCode fused_code;
  DepthMap depth;        // fused, level 1
  CameraIntrinsics K1;   // level-1 intrinsics of the source
  ImageF source_level1;  // level-1 source image (fill-stage guidance)
};

// Full pipeline on one sample: per-pair coarse-to-fine flow with joint pose
// estimation, triangulation encoding, scale alignment and fused depth.
EstimateResult estimate_sample(const SceneSample& sample,
                               const EstimateOptions& options = {});

}  // namespace mstereo
