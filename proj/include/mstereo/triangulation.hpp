#pragma once

#include <Eigen/Core>

#include "mstereo/camera.hpp"
#include "mstereo/image.hpp"
#include "mstereo/pyramid.hpp"

namespace mstereo {

// Eight channels per pixel: [0-1] matched target pixel w(x) + x,
// [2-4] rotated ray K R K^-1 [x, 1], [5-7] K t. Carries everything needed
// to triangulate without storing any exceptional per-pixel values.
struct TriangulationLayer {
  ImageD channels;  // 8 channels
  Mask valid;       // mirrors the flow validity mask
  bool scale_known = true;
};

TriangulationLayer make_triangulation_layer(const FlowField& flow,
                                            const CameraIntrinsics& K,
                                            const RelativePose& pose);

enum class TriStatus : std::uint8_t {
  kOk = 0,
  kDegenerateRay = 1,   // pixel at the epipole or zero-parallax ray
  kNegativeDepth = 2,   // solution behind the camera (wrong match)
};

struct PixelDepth {
  double depth = 0.0;
  double residual = 0.0;  // 2D reprojection distance in target pixels
  TriStatus status = TriStatus::kOk;
};

// Least-squares depth from the two linear equations of the projective
// match constraint, plus the reprojection residual of the solution.
PixelDepth triangulate_encoded(const double* tri_pixel);
PixelDepth triangulate_pixel(const Eigen::Vector2d& x, const Eigen::Vector2d& w,
                             const CameraIntrinsics& K, const RelativePose& pose);

// How observable depth is at this pixel: the norm of the derivative of the
// projected target pixel w.r.t. inverse depth, folded against the expected
// flow noise. Exactly 0 at the epipole, near 1 for stereo-like geometry.
double epipole_confidence(const Eigen::Vector2d& x, const CameraIntrinsics& K,
                          const RelativePose& pose, double depth,
                          double flow_noise_px);
double encoded_confidence(const double* tri_pixel, double depth,
                          double flow_noise_px);

// Per-pixel positive depth with validity, confidence and fill metadata.
struct DepthMap {
  ImageD depth;
  Mask valid;         // has a usable value (triangulated or filled)
  ImageD confidence;  // [0, 1]; 0 where filled
  Mask filled;        // synthesized by diffusion rather than triangulated
  bool scale_known = true;
  int fill_iterations = 0;

  static DepthMap constant(int width, int height, double value);
};

// Triangulates every pixel of the layer and fills pixels that are invalid,
// degenerate, negative-depth or low-confidence with edge-aware diffusion of
// log depth (Jacobi, 200 iterations or max update < 1e-6). Throws
// AllDegenerate when fewer than 1% of the pixels triangulate.
DepthMap depth_from_pair(const TriangulationLayer& tri, const ImageF& source_image,
                         double flow_noise_px, int threads = 1);

// Pixels below this confidence are treated as holes and re-synthesized.
constexpr double kFillConfidence = 0.5;

// Shared fill stage: diffuses log depth from fixed pixels (fixed != 0) into
// the rest, weighting neighbor pulls by edge similarity and confidence.
// Returns the iteration count used.
int diffuse_log_depth(const ImageF& source_image, const Mask& fixed,
                      const ImageD& confidence, ImageD* depth, int threads = 1);

}  // namespace mstereo
