#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <vector>

#include "mstereo/camera.hpp"
#include "mstereo/pyramid.hpp"

namespace mstereo {

struct Correspondence {
  Eigen::Vector2d source;
  Eigen::Vector2d target;
};

// Deterministic stratified sampling of valid flow pixels: the image is
// divided into ~max_n cells and each cell contributes the pixel nearest its
// center. Throws TooFewCorrespondences when fewer than 8 pixels are valid.
std::vector<Correspondence> sample_correspondences(const FlowField& flow,
                                                   int max_n);

// Hartley-normalized linear solve for the fundamental matrix, projected to
// rank 2, then E = K^T F K with singular values forced to (1, 1, 0).
Eigen::Matrix3d normalized_eight_point(std::span<const Correspondence> pairs,
                                       const CameraIntrinsics& K);

// Picks the (R, t) candidate with the strictly largest number of points in
// front of both cameras. Throws CheiralityAmbiguous on a tie.
RelativePose decompose_essential(const Eigen::Matrix3d& E,
                                 std::span<const Correspondence> pairs,
                                 const CameraIntrinsics& K);

// Sum of squared Sampson distances of the pairs under the pose.
double sampson_cost(const RelativePose& pose,
                    std::span<const Correspondence> pairs,
                    const CameraIntrinsics& K);

struct RefineResult {
  RelativePose pose;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Damped Gauss-Newton over rotation (3 dof) and the translation direction
// (2 dof on the unit sphere), minimizing the Sampson cost. The cost never
// increases; returns the best pose seen.
RefineResult refine_pose(const RelativePose& initial,
                         std::span<const Correspondence> pairs,
                         const CameraIntrinsics& K);

// Full pose pipeline: sample correspondences, then either start from the
// eight-point solution or from `init` when a coarser-level estimate exists,
// and refine. Resulting translation is unit-norm (scale_known = false).
RelativePose estimate_pose_from_flow(const FlowField& flow,
                                     const CameraIntrinsics& K,
                                     const std::optional<RelativePose>& init = {},
                                     int max_correspondences = 4096);

}  // namespace mstereo
