#pragma once

#include <Eigen/Core>

#include "mstereo/common.hpp"

namespace mstereo {

// Pinhole calibration. Scaling to pyramid level i halves fx, fy, cx, cy
// i times; image sizes round up.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  Eigen::Matrix3d matrix() const;
  Eigen::Matrix3d inverse_matrix() const;
  CameraIntrinsics scaled(int level) const;
  bool contains(const Eigen::Vector2d& pixel) const {
    return pixel.x() >= 0.0 && pixel.x() <= width - 1.0 && pixel.y() >= 0.0 &&
           pixel.y() <= height - 1.0;
  }
};

// Rigid transform of source-camera points into the target camera frame:
// X_t = R(r) * X_s + t. Estimated poses carry a unit-norm translation and
// scale_known = false; ground-truth poses keep metric scale.
struct RelativePose {
  Eigen::Vector3d r = Eigen::Vector3d::Zero();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  bool scale_known = true;

  Eigen::Matrix3d rotation() const;
};

// Line coefficients in the target image: a point [x', y', 1] lies on the
// line iff e . [x', y', 1] = 0.
struct EpipolarLine {
  Eigen::Vector3d e = Eigen::Vector3d::Zero();

  // Unit step along the line and perpendicular to it.
  Eigen::Vector2d direction() const;
  Eigen::Vector2d normal() const;
  // Closest point on the line to p.
  Eigen::Vector2d project(const Eigen::Vector2d& p) const;
  double signed_distance(const Eigen::Vector2d& p) const;
};

Eigen::Matrix3d cross_matrix(const Eigen::Vector3d& v);

// Rodrigues' formula; falls back to the second-order Taylor expansion for
// tiny angles.
Eigen::Matrix3d rotation_matrix(const Eigen::Vector3d& r);

// Inverse of rotation_matrix with ||r|| <= pi.
Eigen::Vector3d rotation_vector(const Eigen::Matrix3d& R);

// Wraps r so that ||r|| <= pi.
Eigen::Vector3d canonical_rotation_vector(const Eigen::Vector3d& r);

// E = [t]x R.
Eigen::Matrix3d essential_matrix(const RelativePose& pose);

// F = K_t^-T [t]x R K_s^-1. Throws ZeroTranslation if ||t|| < 1e-12.
Eigen::Matrix3d fundamental_matrix(const CameraIntrinsics& source,
                                   const CameraIntrinsics& target,
                                   const RelativePose& pose);

// e = F [x, 1]. Throws DegenerateLine when x is the epipole.
EpipolarLine epipolar_line(const Eigen::Matrix3d& F, const Eigen::Vector2d& x);

// Projection of the target optical center into the source image. Depth is
// unobservable exactly at this pixel.
struct Epipole {
  bool at_infinity = false;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};
Epipole epipole_in_source(const CameraIntrinsics& K, const RelativePose& pose);

// (x/z, y/z). Throws DegenerateRay if |z| is below 1e-12 relative to ||p||.
Eigen::Vector2d dehomogenize(const Eigen::Vector3d& p);
bool try_dehomogenize(const Eigen::Vector3d& p, Eigen::Vector2d* out);

}  // namespace mstereo
