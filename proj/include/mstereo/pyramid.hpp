#pragma once

#include <Eigen/Core>
#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "mstereo/camera.hpp"
#include "mstereo/image.hpp"

namespace mstereo {

// Six-level pyramid; level 0 is the raw 3-channel image and each level
// halves the previous one (sizes round up, intrinsics halve exactly).
struct ImagePyramid {
  static constexpr int kLevels = 6;
  std::vector<ImageF> levels;
  std::vector<CameraIntrinsics> intrinsics;
};

ImagePyramid build_pyramid(const ImageF& image, const CameraIntrinsics& K);

// Zero-mean, unit-norm 5x5 grayscale patch descriptors (dimension 25).
// Patches with variance below 1e-8 yield the zero vector.
struct FeatureMap {
  int level = 0;
  ImageF descriptors;  // 25 channels
};

constexpr int kPatchRadius = 2;
constexpr int kDescriptorDim = 25;

FeatureMap extract_features(const ImagePyramid& pyramid, int level);

// Per-pixel displacement map; `valid` is false where matching failed
// (all candidates off-image or a degenerate epipolar line).
struct FlowField {
  int level = 0;
  ImageD flow;  // 2 channels
  Mask valid;   // 1 = valid

  static FlowField zero(int width, int height, int level);
};

// Snaps every flow endpoint onto its epipolar line (the closest point on
// the line). Pixels whose line is degenerate keep their input flow and are
// flagged invalid.
FlowField regularize_flow(const FlowField& w, const Eigen::Matrix3d& F);

// Candidate target pixels for one source pixel: the regularized endpoint
// plus integer steps h along the line and v across it, both renormalized
// to 1 px per step. Ordered row-major in (v, h).
std::vector<Eigen::Vector2d> candidate_positions(const Eigen::Vector2d& x,
                                                 const Eigen::Vector2d& w_r,
                                                 const EpipolarLine& line,
                                                 int h_max, int v_max);

// Per-pixel search frame: base flow the candidates are centered on plus the
// unit step axes. Covers both the epipolar-aligned and the axis-aligned
// search modes.
struct CandidateGrid {
  int h_max = 0;
  int v_max = 0;
  ImageD base;  // 2 channels: flow at the center candidate
  ImageD axes;  // 4 channels: hx, hy, vx, vy
  Mask ok;      // 0 where the epipolar line was degenerate

  int count() const { return (2 * h_max + 1) * (2 * v_max + 1); }
};

// Regularizes `w` against F and builds per-pixel epipolar search frames.
CandidateGrid build_epipolar_grid(const FlowField& w, const Eigen::Matrix3d& F,
                                  int h_max, int v_max);
// Axis-aligned search around the unmodified flow.
CandidateGrid build_axis_grid(const FlowField& w, int h_max, int v_max);

// Match scores over the candidate grid. Scores are normalized correlations
// in [-1, 1]; candidates outside the target image score -1 and are masked.
struct CostVolume {
  int level = 0;
  CandidateGrid grid;
  Image<float> scores;    // grid.count() channels
  Mask candidate_valid;   // grid.count() channels
};

CostVolume build_cost_volume(const FeatureMap& source, const FeatureMap& target,
                             const CandidateGrid& grid, int threads = 1);

// Winner-take-all over the volume followed by independent 1-D parabolic
// refinement along each search axis. Pixels with no usable candidate keep
// the base flow and are flagged invalid.
FlowField estimate_flow_level(const CostVolume& cost);

// Bilinear 2x upsampling; vectors are doubled.
FlowField upsample_flow(const FlowField& w, int width, int height);

// Pose estimator plugged into the cascade. Receives the current flow, the
// matching intrinsics and the previous (coarser) estimate; returns nullopt
// on failure.
using PoseCallback = std::function<std::optional<RelativePose>(
    const FlowField&, const CameraIntrinsics&, const std::optional<RelativePose>&)>;

struct FlowMotionOptions {
  // Search ranges indexed by level - 1 (levels 1..5).
  std::array<int, 5> h_max = {3, 4, 4, 4, 4};
  std::array<int, 5> v_max = {1, 2, 4, 4, 4};
  bool epipolar = true;  // false: plain grid search everywhere (ablation)
  int threads = 1;
};

struct FlowMotionResult {
  FlowField flow;  // level 1
  std::vector<std::pair<int, RelativePose>> poses;  // (level, pose), coarse to fine
  bool fallback = false;  // grid fallback after a pose failure
  std::array<int, 5> candidate_counts = {0, 0, 0, 0, 0};  // indexed by level - 1
};

// Coarse-to-fine cascade over levels 5..1. Levels 5 and 4 search an
// axis-aligned grid; the pose callback runs after each of levels 3..1 and
// every level below a successful estimate searches along epipolar lines.
// A failed estimate (or zero translation) drops the remaining levels back
// to grid search.
FlowMotionResult coarse_to_fine_flow(const ImagePyramid& source,
                                     const ImagePyramid& target,
                                     const PoseCallback& pose_callback,
                                     const FlowMotionOptions& options = {});

}  // namespace mstereo
