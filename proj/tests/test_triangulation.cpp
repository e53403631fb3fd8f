#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mstereo/pipeline.hpp"
#include "mstereo/random.hpp"
#include "mstereo/synth.hpp"
#include "mstereo/triangulation.hpp"

using namespace mstereo;

namespace {

CameraIntrinsics test_intrinsics() {
  return CameraIntrinsics{100.0, 100.0, 160.0, 128.0, 320, 256};
}

}  // namespace

TEST_CASE("layer channels match the hand-computed encoding") {
  const auto K = test_intrinsics();
  RelativePose pose;
  pose.t = Eigen::Vector3d(0, 0, 1);
  FlowField flow = FlowField::zero(320, 256, 0);
  const TriangulationLayer tri = make_triangulation_layer(flow, K, pose);
  const double* px = tri.channels.pixel(160, 128);
  CHECK(px[0] == doctest::Approx(160.0));
  CHECK(px[1] == doctest::Approx(128.0));
  CHECK(px[2] == doctest::Approx(160.0).epsilon(1e-12));
  CHECK(px[3] == doctest::Approx(128.0).epsilon(1e-12));
  CHECK(px[4] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(px[5] == doctest::Approx(160.0));
  CHECK(px[6] == doctest::Approx(128.0));
  CHECK(px[7] == doctest::Approx(1.0));
}

TEST_CASE("translation channels are constant across pixels") {
  const auto K = test_intrinsics();
  RelativePose pose;
  pose.t = Eigen::Vector3d(1, 0, 0);
  FlowField flow = FlowField::zero(320, 256, 0);
  const TriangulationLayer tri = make_triangulation_layer(flow, K, pose);
  for (int y = 0; y < 256; y += 37) {
    for (int x = 0; x < 320; x += 41) {
      CHECK(tri.channels.at(x, y, 5) == 100.0);
      CHECK(tri.channels.at(x, y, 6) == 0.0);
      CHECK(tri.channels.at(x, y, 7) == 0.0);
    }
  }
}

TEST_CASE("pixel-grid channels minus flow reproduce the grid exactly") {
  const auto K = test_intrinsics();
  RelativePose pose;
  pose.r = Eigen::Vector3d(0.02, -0.01, 0.005);
  pose.t = Eigen::Vector3d(0.3, 0.1, 0.9);
  Rng rng(3);
  FlowField flow = FlowField::zero(320, 256, 0);
  for (int y = 0; y < 256; ++y)
    for (int x = 0; x < 320; ++x)
      for (int c = 0; c < 2; ++c) flow.flow.at(x, y, c) = rng.uniform(-9, 9);
  const TriangulationLayer tri = make_triangulation_layer(flow, K, pose);
  for (int y = 0; y < 256; y += 23) {
    for (int x = 0; x < 320; x += 29) {
      CHECK(tri.channels.at(x, y, 0) - flow.flow.at(x, y, 0) ==
            doctest::Approx(x).epsilon(1e-14));
      CHECK(tri.channels.at(x, y, 1) - flow.flow.at(x, y, 1) ==
            doctest::Approx(y).epsilon(1e-14));
    }
  }
}

TEST_CASE("worked lateral example: d = 10 with zero residual") {
  const auto K = test_intrinsics();
  RelativePose pose;
  pose.t = Eigen::Vector3d(-0.5, 0, 0);
  const PixelDepth pd = triangulate_pixel(Eigen::Vector2d(160, 128),
                                          Eigen::Vector2d(-5, 0), K, pose);
  REQUIRE(pd.status == TriStatus::kOk);
  CHECK(pd.depth == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(pd.residual == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("the epipole pixel is degenerate for any flow") {
  const auto K = test_intrinsics();
  RelativePose pose;
  pose.t = Eigen::Vector3d(0, 0, 1);  // epipole at the principal point
  const Epipole e = epipole_in_source(K, pose);
  REQUIRE_FALSE(e.at_infinity);
  for (const auto& w : {Eigen::Vector2d(0, 0), Eigen::Vector2d(3, -2),
                        Eigen::Vector2d(-10, 5)}) {
    const PixelDepth pd = triangulate_pixel(e.pixel, w, K, pose);
    CHECK(pd.status == TriStatus::kDegenerateRay);
  }
}

TEST_CASE("rotated-pose epipole is degenerate too") {
  const auto K = test_intrinsics();
  RelativePose pose;
  pose.r = Eigen::Vector3d(0.05, 0.12, -0.03);
  pose.t = Eigen::Vector3d(0.2, -0.1, 0.95);
  const Epipole e = epipole_in_source(K, pose);
  REQUIRE_FALSE(e.at_infinity);
  const PixelDepth pd =
      triangulate_pixel(e.pixel, Eigen::Vector2d(1, 1), K, pose);
  CHECK(pd.status == TriStatus::kDegenerateRay);
}

TEST_CASE("wrong matches behind the camera come back flagged") {
  const auto K = test_intrinsics();
  RelativePose pose;
  pose.t = Eigen::Vector3d(-0.5, 0, 0);
  // true disparity is negative (leftward); a positive flow implies d < 0
  const PixelDepth pd = triangulate_pixel(Eigen::Vector2d(160, 128),
                                          Eigen::Vector2d(5, 0), K, pose);
  CHECK(pd.status == TriStatus::kNegativeDepth);
}

TEST_CASE("triangulating true flow recovers true depth away from the epipole") {
  SceneSpec spec;
  spec.num_targets = 1;
  for (std::uint64_t seed : {81u, 82u}) {
    const SceneSample sample = generate_scene(spec, seed);
    const CameraIntrinsics K = sample.frames[0].K;
    const RelativePose pose = sample.pose_to(0);
    Eigen::Vector2d epipole(1e9, 1e9);
    const Epipole e = epipole_in_source(K, pose);
    if (!e.at_infinity) epipole = e.pixel;

    const FlowField& flow = sample.flows[0];
    double worst = 0.0;
    long n = 0;
    for (int y = 0; y < 256; y += 3) {
      for (int x = 0; x < 320; x += 3) {
        if (!flow.valid.at(x, y)) continue;
        if ((Eigen::Vector2d(x, y) - epipole).norm() < 10.0) continue;
        const PixelDepth pd = triangulate_pixel(
            Eigen::Vector2d(x, y),
            Eigen::Vector2d(flow.flow.at(x, y, 0), flow.flow.at(x, y, 1)), K,
            pose);
        REQUIRE(pd.status == TriStatus::kOk);
        worst = std::max(worst,
                         std::abs(pd.depth - sample.depths[0].at(x, y)) /
                             sample.depths[0].at(x, y));
        ++n;
      }
    }
    REQUIRE(n > 5000);
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("round trip: reprojecting the depth reproduces the match point") {
  const auto K = test_intrinsics();
  RelativePose pose;
  pose.r = Eigen::Vector3d(-0.03, 0.07, 0.01);
  pose.t = Eigen::Vector3d(0.4, 0.2, 0.3);
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector2d x(rng.uniform(0, 319), rng.uniform(0, 255));
    const double d_true = rng.uniform(2.0, 30.0);
    // exact forward model
    const Eigen::Vector3d a = K.matrix() * pose.rotation() * K.inverse_matrix() *
                              Eigen::Vector3d(x.x(), x.y(), 1.0);
    const Eigen::Vector3d proj = a * d_true + K.matrix() * pose.t;
    if (std::abs(proj.z()) < 1e-6) continue;
    const Eigen::Vector2d pt(proj.x() / proj.z(), proj.y() / proj.z());
    const PixelDepth pd = triangulate_pixel(x, pt - x, K, pose);
    REQUIRE(pd.status == TriStatus::kOk);
    CHECK(pd.depth == doctest::Approx(d_true).epsilon(1e-9));
    // reported residual bounds the reprojection mismatch
    const Eigen::Vector3d reproj = a * pd.depth + K.matrix() * pose.t;
    const Eigen::Vector2d rp(reproj.x() / reproj.z(), reproj.y() / reproj.z());
    CHECK((rp - pt).norm() <= pd.residual + 1e-9);
  }
}

TEST_CASE("triangulation is scale-equivariant in the translation") {
  const auto K = test_intrinsics();
  RelativePose pose;
  pose.r = Eigen::Vector3d(0.01, 0.04, -0.02);
  pose.t = Eigen::Vector3d(0.5, -0.3, 0.2);
  RelativePose scaled = pose;
  scaled.t *= 3.0;
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector2d x(rng.uniform(0, 319), rng.uniform(0, 255));
    const Eigen::Vector2d w(rng.uniform(-20, 20), rng.uniform(-20, 20));
    const PixelDepth a = triangulate_pixel(x, w, K, pose);
    const PixelDepth b = triangulate_pixel(x, w, K, scaled);
    if (a.status != TriStatus::kOk || b.status != TriStatus::kOk) continue;
    CHECK(b.depth == doctest::Approx(3.0 * a.depth).epsilon(1e-12));
  }
}

TEST_CASE("confidence is high everywhere for lateral motion") {
  const auto K = test_intrinsics();
  RelativePose pose;
  pose.t = Eigen::Vector3d(-1.0, 0, 0);  // one baseline unit
  for (int y = 0; y < 256; y += 19) {
    for (int x = 0; x < 320; x += 17) {
      for (double d : {1.0, 10.0, 50.0}) {  // up to 50 baselines
        const double c =
            epipole_confidence(Eigen::Vector2d(x, y), K, pose, d, 0.5);
        CHECK(c > 0.9);
      }
    }
  }
}

TEST_CASE("confidence vanishes at the epipole and grows along rays") {
  const auto K = test_intrinsics();
  RelativePose pose;
  pose.t = Eigen::Vector3d(0, 0, 1);
  const Eigen::Vector2d e(160, 128);
  CHECK(epipole_confidence(e, K, pose, 8.0, 0.5) == 0.0);
  for (double angle : {0.0, 0.7, 2.1, 4.0}) {
    const Eigen::Vector2d dir(std::cos(angle), std::sin(angle));
    double last = -1.0;
    for (double r = 2.0; r < 120.0; r *= 1.6) {
      const double c = epipole_confidence(e + r * dir, K, pose, 8.0, 0.5);
      CHECK(c > last);
      last = c;
    }
  }
}

TEST_CASE("disparity sensitivity oracle: lateral confidence matches f*b/d form") {
  // For R = I, t = (-b, 0, 0): d(target)/d(1/depth) = f * b exactly.
  const auto K = test_intrinsics();
  RelativePose pose;
  pose.t = Eigen::Vector3d(-0.5, 0, 0);
  const double rho = 100.0 * 0.5;
  for (double noise : {0.25, 0.5, 2.0}) {
    const double expected = rho / (rho + noise);
    const double got =
        epipole_confidence(Eigen::Vector2d(57, 211), K, pose, 12.0, noise);
    CHECK(got == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("noiseless lateral pair needs no filling") {
  SceneSpec spec;
  spec.preset = MotionPreset::kLateral;
  spec.motion = 0.5;
  spec.num_targets = 1;
  const SceneSample sample = generate_scene(spec, 83);
  const CameraIntrinsics K = sample.frames[0].K;
  const TriangulationLayer tri =
      make_triangulation_layer(sample.flows[0], K, sample.pose_to(0));
  const DepthMap dm = depth_from_pair(tri, sample.images[0], 0.5);

  long filled = 0, n = 0;
  double err_sum = 0.0;
  for (int y = 0; y < 256; ++y) {
    for (int x = 0; x < 320; ++x) {
      if (dm.filled.at(x, y)) ++filled;
      if (!sample.flows[0].valid.at(x, y) || sample.occlusions[0].at(x, y))
        continue;
      if (dm.filled.at(x, y)) continue;
      err_sum += std::abs(dm.depth.at(x, y) - sample.depths[0].at(x, y)) /
                 sample.depths[0].at(x, y);
      ++n;
    }
  }
  REQUIRE(n > 50000);
  CHECK(static_cast<double>(filled) / (320 * 256) < 0.05);
  CHECK(err_sum / n < 1e-4);
}

TEST_CASE("forward motion: epipole area is filled, output stays positive") {
  SceneSpec spec;
  spec.preset = MotionPreset::kForward;
  spec.motion = 1.0;
  spec.num_targets = 1;
  const SceneSample sample = generate_scene(spec, 84);
  const CameraIntrinsics K = sample.frames[0].K;
  const TriangulationLayer tri =
      make_triangulation_layer(sample.flows[0], K, sample.pose_to(0));
  const DepthMap dm = depth_from_pair(tri, sample.images[0], 6.0);

  const Epipole e = epipole_in_source(K, sample.pose_to(0));
  REQUIRE_FALSE(e.at_infinity);
  for (int y = 0; y < 256; ++y) {
    for (int x = 0; x < 320; ++x) {
      REQUIRE(std::isfinite(dm.depth.at(x, y)));
      REQUIRE(dm.depth.at(x, y) > 0.0);
      if ((Eigen::Vector2d(x, y) - e.pixel).norm() < 5.0) {
        CHECK(dm.filled.at(x, y));
      }
    }
  }
}

TEST_CASE("the layer is sufficient: encoded and direct paths agree bit for bit") {
  SceneSpec spec;
  spec.num_targets = 1;
  const SceneSample sample = generate_scene(spec, 85);
  const CameraIntrinsics K = sample.frames[0].K;
  const RelativePose pose = sample.pose_to(0);
  const FlowField& flow = sample.flows[0];
  const TriangulationLayer tri = make_triangulation_layer(flow, K, pose);
  for (int y = 0; y < 256; y += 13) {
    for (int x = 0; x < 320; x += 13) {
      const PixelDepth via_layer = triangulate_encoded(tri.channels.pixel(x, y));
      const PixelDepth direct = triangulate_pixel(
          Eigen::Vector2d(x, y),
          Eigen::Vector2d(flow.flow.at(x, y, 0), flow.flow.at(x, y, 1)), K, pose);
      CHECK(via_layer.status == direct.status);
      CHECK(via_layer.depth == direct.depth);
      CHECK(via_layer.residual == direct.residual);
    }
  }
}

TEST_CASE("all-degenerate input is rejected") {
  const auto K = test_intrinsics();
  RelativePose pose;
  pose.t = Eigen::Vector3d(0, 0, 1);
  FlowField flow = FlowField::zero(64, 64, 0);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) flow.valid.at(x, y) = 0;
  const CameraIntrinsics K64{100, 100, 32, 32, 64, 64};
  const TriangulationLayer tri = make_triangulation_layer(flow, K64, pose);
  CHECK_THROWS_AS(depth_from_pair(tri, ImageF(64, 64, 3, 0.5f), 0.5),
                  AllDegenerate);
}

TEST_CASE("noisy flow on a textured plane still yields usable depth") {
  // Monte-Carlo oracle: fronto-parallel plane at d = 5 with a unit lateral
  // baseline (disparity 20 px) and sigma = 0.5 px flow noise.
  const auto K = test_intrinsics();
  RelativePose pose;
  pose.t = Eigen::Vector3d(-1.0, 0, 0);
  const double d_true = 5.0;
  SceneSpec texspec;
  texspec.preset = MotionPreset::kLateral;
  texspec.num_targets = 1;
  const ImageF source = generate_scene(texspec, 301).images[0];

  double total_rel = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(900 + s);
    FlowField noisy = FlowField::zero(320, 256, 0);
    for (int y = 0; y < 256; ++y) {
      for (int x = 0; x < 320; ++x) {
        noisy.flow.at(x, y, 0) = 100.0 * (-1.0) / d_true + 0.5 * rng.normal();
        noisy.flow.at(x, y, 1) = 0.5 * rng.normal();
      }
    }
    const TriangulationLayer tri = make_triangulation_layer(noisy, K, pose);
    const DepthMap dm = depth_from_pair(tri, source, 0.5);
    double rel = 0.0;
    for (int y = 0; y < 256; ++y)
      for (int x = 0; x < 320; ++x)
        rel += std::abs(dm.depth.at(x, y) - d_true) / d_true;
    total_rel += rel / (320.0 * 256.0);
  }
  CHECK(total_rel / seeds < 0.05);
}

TEST_CASE("fill stage is deterministic across thread counts") {
  SceneSpec spec;
  spec.preset = MotionPreset::kForward;
  spec.motion = 1.0;
  spec.num_targets = 1;
  const SceneSample sample = generate_scene(spec, 86);
  const CameraIntrinsics K = sample.frames[0].K;
  const TriangulationLayer tri =
      make_triangulation_layer(sample.flows[0], K, sample.pose_to(0));
  const DepthMap a = depth_from_pair(tri, sample.images[0], 2.0, 1);
  const DepthMap b = depth_from_pair(tri, sample.images[0], 2.0, 3);
  for (std::size_t i = 0; i < a.depth.size(); ++i) {
    REQUIRE(a.depth.data()[i] == b.depth.data()[i]);
  }
}
