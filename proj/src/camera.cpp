#include "mstereo/camera.hpp"

#include <cmath>

namespace mstereo {

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d K;
  K << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return K;
}

Eigen::Matrix3d CameraIntrinsics::inverse_matrix() const {
  Eigen::Matrix3d Ki;
  Ki << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
  return Ki;
}

CameraIntrinsics CameraIntrinsics::scaled(int level) const {
  CameraIntrinsics out = *this;
  for (int i = 0; i < level; ++i) {
    out.fx *= 0.5;
    out.fy *= 0.5;
    out.cx *= 0.5;
    out.cy *= 0.5;
    out.width = (out.width + 1) / 2;
    out.height = (out.height + 1) / 2;
  }
  return out;
}

Eigen::Matrix3d RelativePose::rotation() const { return rotation_matrix(r); }

Eigen::Vector2d EpipolarLine::direction() const {
  const double n = std::sqrt(e.x() * e.x() + e.y() * e.y());
  return Eigen::Vector2d(e.y() / n, -e.x() / n);
}

Eigen::Vector2d EpipolarLine::normal() const {
  const double n = std::sqrt(e.x() * e.x() + e.y() * e.y());
  return Eigen::Vector2d(e.x() / n, e.y() / n);
}

Eigen::Vector2d EpipolarLine::project(const Eigen::Vector2d& p) const {
  const double n2 = e.x() * e.x() + e.y() * e.y();
  const double r = e.x() * p.x() + e.y() * p.y() + e.z();
  return p - (r / n2) * Eigen::Vector2d(e.x(), e.y());
}

double EpipolarLine::signed_distance(const Eigen::Vector2d& p) const {
  const double n = std::sqrt(e.x() * e.x() + e.y() * e.y());
  return (e.x() * p.x() + e.y() * p.y() + e.z()) / n;
}

Eigen::Matrix3d cross_matrix(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Matrix3d rotation_matrix(const Eigen::Vector3d& r) {
  const double theta = r.norm();
  const Eigen::Matrix3d rx = cross_matrix(r);
  if (theta < 1e-8) {
    // sin(t)/t ~ 1 - t^2/6, (1-cos(t))/t^2 ~ 1/2 - t^2/24
    const double t2 = theta * theta;
    return Eigen::Matrix3d::Identity() + (1.0 - t2 / 6.0) * rx +
           (0.5 - t2 / 24.0) * rx * rx;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Eigen::Matrix3d::Identity() + a * rx + b * rx * rx;
}

Eigen::Vector3d rotation_vector(const Eigen::Matrix3d& R) {
  // Quaternion route: stable over the whole angle range including near pi.
  const double tr = R.trace();
  double qw, qx, qy, qz;
  if (tr > 0.0) {
    double s = std::sqrt(tr + 1.0) * 2.0;
    qw = 0.25 * s;
    qx = (R(2, 1) - R(1, 2)) / s;
    qy = (R(0, 2) - R(2, 0)) / s;
    qz = (R(1, 0) - R(0, 1)) / s;
  } else if (R(0, 0) > R(1, 1) && R(0, 0) > R(2, 2)) {
    double s = std::sqrt(1.0 + R(0, 0) - R(1, 1) - R(2, 2)) * 2.0;
    qw = (R(2, 1) - R(1, 2)) / s;
    qx = 0.25 * s;
    qy = (R(0, 1) + R(1, 0)) / s;
    qz = (R(0, 2) + R(2, 0)) / s;
  } else if (R(1, 1) > R(2, 2)) {
    double s = std::sqrt(1.0 + R(1, 1) - R(0, 0) - R(2, 2)) * 2.0;
    qw = (R(0, 2) - R(2, 0)) / s;
    qx = (R(0, 1) + R(1, 0)) / s;
    qy = 0.25 * s;
    qz = (R(1, 2) + R(2, 1)) / s;
  } else {
    double s = std::sqrt(1.0 + R(2, 2) - R(0, 0) - R(1, 1)) * 2.0;
    qw = (R(1, 0) - R(0, 1)) / s;
    qx = (R(0, 2) + R(2, 0)) / s;
    qy = (R(1, 2) + R(2, 1)) / s;
    qz = 0.25 * s;
  }
  if (qw < 0.0) {
    qw = -qw;
    qx = -qx;
    qy = -qy;
    qz = -qz;
  }
  const Eigen::Vector3d v(qx, qy, qz);
  const double vn = v.norm();
  if (vn < 1e-12) return 2.0 * v;  // angle ~ 0
  const double theta = 2.0 * std::atan2(vn, qw);
  return (theta / vn) * v;
}

Eigen::Vector3d canonical_rotation_vector(const Eigen::Vector3d& r) {
  const double theta = r.norm();
  const double pi = 3.14159265358979323846;
  if (theta <= pi) return r;
  const double wrapped = std::fmod(theta + pi, 2.0 * pi) - pi;
  return r * (wrapped / theta);
}

Eigen::Matrix3d essential_matrix(const RelativePose& pose) {
  return cross_matrix(pose.t) * pose.rotation();
}

Eigen::Matrix3d fundamental_matrix(const CameraIntrinsics& source,
                                   const CameraIntrinsics& target,
                                   const RelativePose& pose) {
  if (pose.t.norm() < 1e-12) throw ZeroTranslation();
  return target.inverse_matrix().transpose() * essential_matrix(pose) *
         source.inverse_matrix();
}

EpipolarLine epipolar_line(const Eigen::Matrix3d& F, const Eigen::Vector2d& x) {
  EpipolarLine line;
  line.e = F * Eigen::Vector3d(x.x(), x.y(), 1.0);
  if (line.e.x() * line.e.x() + line.e.y() * line.e.y() < 1e-18) {
    throw DegenerateLine();
  }
  return line;
}

Epipole epipole_in_source(const CameraIntrinsics& K, const RelativePose& pose) {
  if (pose.t.norm() < 1e-12) throw ZeroTranslation();
  const Eigen::Vector3d c = -(K.matrix() * (pose.rotation().transpose() * pose.t));
  Epipole e;
  if (std::abs(c.z()) <= 1e-12 * c.norm()) {
    e.at_infinity = true;
    return e;
  }
  e.pixel = Eigen::Vector2d(c.x() / c.z(), c.y() / c.z());
  return e;
}

Eigen::Vector2d dehomogenize(const Eigen::Vector3d& p) {
  Eigen::Vector2d out;
  if (!try_dehomogenize(p, &out)) throw DegenerateRay();
  return out;
}

bool try_dehomogenize(const Eigen::Vector3d& p, Eigen::Vector2d* out) {
  if (std::abs(p.z()) <= 1e-12 * p.norm()) return false;
  *out = Eigen::Vector2d(p.x() / p.z(), p.y() / p.z());
  return true;
}

}  // namespace mstereo
