#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <vector>

#include "mstereo/camera.hpp"
#include "mstereo/image.hpp"
#include "mstereo/pyramid.hpp"
#include "mstereo/triangulation.hpp"

namespace mstereo {

enum class MotionPreset { kArc, kLateral, kForward };

struct SceneSpec {
  int width = 320;
  int height = 256;
  double focal = 100.0;
  int primitives = 6;        // textured planes and spheres, alternating
  double depth_min = 4.0;
  double depth_max = 20.0;
  int texture_octaves = 6;
  double texture_detail_px = 4.0;   // finest-octave wavelength on screen
  double texture_persistence = 0.65;
  double motion = 0.5;       // translation scale in scene units
  int num_targets = 2;       // 1..6
  MotionPreset preset = MotionPreset::kArc;
  bool textured = true;      // false: flat albedo stress test
};

// Camera-from-world pose of one frame (X_cam = R r_vec * X_world + t);
// world frame == source camera frame. Stored as the serialized fields so
// camera files round-trip bit-exactly.
struct CameraFrame {
  CameraIntrinsics K;
  Eigen::Vector3d r = Eigen::Vector3d::Zero();  // rotation vector, world -> camera
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Eigen::Matrix3d rotation() const { return rotation_matrix(r); }
  Eigen::Vector3d position() const { return -(rotation().transpose() * t); }
};

RelativePose relative_pose(const CameraFrame& source, const CameraFrame& target);

struct Primitive {
  enum class Kind { kRect, kSphere } kind = Kind::kRect;
  // rect: corner plus two orthogonal edges
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d edge_u = Eigen::Vector3d::Zero();
  Eigen::Vector3d edge_v = Eigen::Vector3d::Zero();
  // sphere
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.0;
  // appearance
  Eigen::Vector3d base_color = Eigen::Vector3d::Ones();
  double texture_scale = 1.0;  // world units per noise cell
  double texture_amp = 1.0;
  std::uint64_t texture_key = 0;
};

// Geometric scene description; images and depths are rendered on demand so
// callers can rasterize any frame at any pyramid resolution.
struct Scene {
  SceneSpec spec;
  std::uint64_t seed = 0;
  std::vector<Primitive> primitives;
  std::vector<CameraFrame> frames;  // frames[0] is the source
};

Scene build_scene(const SceneSpec& spec, std::uint64_t seed);

// Analytic depth at pixel centers (camera-frame z of the nearest hit).
ImageD render_depth(const Scene& scene, int frame, const CameraIntrinsics& K,
                    int threads = 1);
// Shaded color image, 2x2 supersampled.
ImageF render_image(const Scene& scene, int frame, const CameraIntrinsics& K,
                    int threads = 1);

// Flow of every source pixel into the target view from the true depth,
// with an occlusion mask (nonzero = occluded or off-image). Unoccluded flow
// reprojects exactly through the source depth.
std::pair<FlowField, Mask> ground_truth_flow(const ImageD& depth_source,
                                             const RelativePose& pose,
                                             const CameraIntrinsics& K_source,
                                             const CameraIntrinsics& K_target,
                                             const ImageD& depth_target);

// One rendered sample: source frame, its targets, and the per-pair ground
// truth. All float payloads survive export/import bit-exactly.
struct SceneSample {
  std::uint64_t seed = 0;
  SceneSpec spec;
  std::vector<CameraFrame> frames;   // [0] = source
  std::vector<ImageF> images;        // per frame
  std::vector<ImageD> depths;        // per frame
  std::vector<FlowField> flows;      // source -> target i (level 0)
  std::vector<Mask> occlusions;      // per pair, nonzero = occluded

  int num_targets() const { return static_cast<int>(frames.size()) - 1; }
  RelativePose pose_to(int target) const {
    return relative_pose(frames[0], frames[target + 1]);
  }
  DepthMap source_depth_map() const;
};

SceneSample generate_scene(const SceneSpec& spec, std::uint64_t seed,
                           int threads = 1);

// Writes images (PNG), depths (PFM), flows (FLO2 + PGM occlusion), camera
// files and a manifest into `directory`; returns the manifest path.
std::filesystem::path export_sample(const SceneSample& sample,
                                    const std::filesystem::path& directory);
SceneSample import_sample(const std::filesystem::path& manifest_path);

}  // namespace mstereo
