#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "mstereo/camera.hpp"
#include "mstereo/random.hpp"

using namespace mstereo;

namespace {

const double kPi = 3.14159265358979323846;

CameraIntrinsics test_intrinsics() {
  return CameraIntrinsics{100.0, 100.0, 160.0, 128.0, 320, 256};
}

Eigen::Vector3d random_unit(Rng& rng) {
  Eigen::Vector3d v;
  do {
    v = Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  } while (v.norm() < 1e-3);
  return v.normalized();
}

// Independent matrix-log oracle: recovers theta from the trace and the axis
// from the antisymmetric part.
Eigen::Vector3d matrix_log_oracle(const Eigen::Matrix3d& R) {
  const double cos_theta = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  if (theta < 1e-10) return Eigen::Vector3d::Zero();
  Eigen::Vector3d axis(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  axis /= 2.0 * std::sin(theta);
  return theta * axis;
}

}  // namespace

TEST_CASE("rotation_matrix of zero is the identity") {
  CHECK((rotation_matrix(Eigen::Vector3d::Zero()) - Eigen::Matrix3d::Identity())
            .norm() == doctest::Approx(0.0));
}

TEST_CASE("quarter turn about z maps x to y") {
  const Eigen::Matrix3d R = rotation_matrix(Eigen::Vector3d(0, 0, kPi / 2));
  const Eigen::Vector3d y = R * Eigen::Vector3d(1, 0, 0);
  CHECK(y.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(y.y() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(y.z() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("rotation_matrix is orthonormal with the right angle") {
  const Eigen::Vector3d r(0.1, 0.2, 0.3);
  const Eigen::Matrix3d R = rotation_matrix(r);
  CHECK((R.transpose() * R - Eigen::Matrix3d::Identity()).norm() < 1e-12);
  CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  const Eigen::Vector3d log = matrix_log_oracle(R);
  CHECK((log - r).norm() < 1e-12);
}

TEST_CASE("rotation round trip below pi") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d r = random_unit(rng) * rng.uniform(0.0, 0.999 * kPi);
    const Eigen::Vector3d back = rotation_vector(rotation_matrix(r));
    CHECK((back - r).norm() < 1e-10);
  }
}

TEST_CASE("tiny rotations use the series expansion consistently") {
  const Eigen::Vector3d r(1e-10, -2e-10, 0.5e-10);
  const Eigen::Matrix3d R = rotation_matrix(r);
  CHECK((R.transpose() * R - Eigen::Matrix3d::Identity()).norm() < 1e-15);
  CHECK((rotation_vector(R) - r).norm() < 1e-15);
}

TEST_CASE("lateral motion gives horizontal epipolar lines") {
  // Worked out by expanding K^-T [t]x K^-1 for R = I, t = (1, 0, 0): every
  // row is zero except F(1,2) = -1/f and F(2,1) = 1/f.
  const auto K = test_intrinsics();
  RelativePose pose;
  pose.t = Eigen::Vector3d(1, 0, 0);
  Eigen::Matrix3d F = fundamental_matrix(K, K, pose);
  F /= F.norm();

  Eigen::Matrix3d expected = Eigen::Matrix3d::Zero();
  expected(1, 2) = -1.0;
  expected(2, 1) = 1.0;
  expected /= expected.norm();
  const double dist = std::min((F - expected).norm(), (F + expected).norm());
  CHECK(dist < 1e-12);

  // Line through the principal point is y' = 128.
  const EpipolarLine line = epipolar_line(F, Eigen::Vector2d(160, 128));
  CHECK(std::abs(line.e.x()) < 1e-15);
  CHECK(line.e.z() / line.e.y() == doctest::Approx(-128.0));

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(F);
  CHECK(svd.singularValues()(2) < 1e-12);
}

TEST_CASE("zero translation is rejected") {
  const auto K = test_intrinsics();
  RelativePose pose;
  CHECK_THROWS_AS(fundamental_matrix(K, K, pose), ZeroTranslation);
  CHECK_THROWS_AS(epipole_in_source(K, pose), ZeroTranslation);
}

TEST_CASE("zero F has only degenerate lines") {
  CHECK_THROWS_AS(epipolar_line(Eigen::Matrix3d::Zero(), Eigen::Vector2d(3, 4)),
                  DegenerateLine);
}

TEST_CASE("scale of t does not change the normalized F") {
  Rng rng(21);
  const auto K = test_intrinsics();
  for (int i = 0; i < 20; ++i) {
    RelativePose a;
    a.r = random_unit(rng) * rng.uniform(0.0, 0.5);
    a.t = random_unit(rng);
    RelativePose b = a;
    b.t *= 2.0;
    Eigen::Matrix3d Fa = fundamental_matrix(K, K, a);
    Eigen::Matrix3d Fb = fundamental_matrix(K, K, b);
    Fa /= Fa.norm();
    Fb /= Fb.norm();
    CHECK(std::min((Fa - Fb).norm(), (Fa + Fb).norm()) < 1e-14);
  }
}

TEST_CASE("epipole for pure lateral motion is at infinity") {
  RelativePose pose;
  pose.t = Eigen::Vector3d(1, 0, 0);
  const Epipole e = epipole_in_source(test_intrinsics(), pose);
  CHECK(e.at_infinity);
}

TEST_CASE("epipole for forward motion is the principal point") {
  RelativePose pose;
  pose.t = Eigen::Vector3d(0, 0, 1);
  const Epipole e = epipole_in_source(test_intrinsics(), pose);
  REQUIRE_FALSE(e.at_infinity);
  CHECK(e.pixel.x() == doctest::Approx(160.0));
  CHECK(e.pixel.y() == doctest::Approx(128.0));
}

TEST_CASE("dehomogenize") {
  CHECK((dehomogenize(Eigen::Vector3d(2, 4, 2)) - Eigen::Vector2d(1, 2)).norm() ==
        doctest::Approx(0.0));
  CHECK((dehomogenize(Eigen::Vector3d(160, 128, 1)) - Eigen::Vector2d(160, 128))
            .norm() == doctest::Approx(0.0));
  CHECK_THROWS_AS(dehomogenize(Eigen::Vector3d(1, 1, 0)), DegenerateRay);
}

TEST_CASE("source epipole lies on every transposed epipolar line") {
  Rng rng(99);
  const auto K = test_intrinsics();
  RelativePose pose;
  pose.r = Eigen::Vector3d(0.05, -0.1, 0.02);
  pose.t = Eigen::Vector3d(0.4, 0.2, 1.0);
  const Eigen::Matrix3d F = fundamental_matrix(K, K, pose);
  const Epipole e = epipole_in_source(K, pose);
  REQUIRE_FALSE(e.at_infinity);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector2d xt(rng.uniform(0, K.width - 1), rng.uniform(0, K.height - 1));
    const EpipolarLine line = epipolar_line(F.transpose(), xt);
    CHECK(std::abs(line.signed_distance(e.pixel)) < 1e-6);
  }
}

TEST_CASE("intrinsics halve per pyramid level") {
  const auto K = test_intrinsics();
  const auto K2 = K.scaled(2);
  CHECK(K2.fx == doctest::Approx(25.0));
  CHECK(K2.cx == doctest::Approx(40.0));
  CHECK(K2.width == 80);
  CHECK(K2.height == 64);
}

TEST_CASE("pose convention round trip") {
  // X_t = R X_s + t: a point on the optical axis moves as the convention
  // dictates when the target camera sits to the right.
  RelativePose pose;
  pose.t = Eigen::Vector3d(-0.5, 0, 0);  // target 0.5 to the right
  const Eigen::Vector3d X_s(0, 0, 10);
  const Eigen::Vector3d X_t = pose.rotation() * X_s + pose.t;
  CHECK(X_t.x() == doctest::Approx(-0.5));
  CHECK(X_t.z() == doctest::Approx(10.0));
}
