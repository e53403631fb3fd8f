#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mstereo/fusion.hpp"
#include "mstereo/metrics.hpp"
#include "mstereo/random.hpp"
#include "mstereo/synth.hpp"

using namespace mstereo;

namespace {

DepthCode make_code(int w, int h, double inv, double conf, double res = 0.0) {
  DepthCode code;
  code.code = ImageD(w, h, 3, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      code.code.at(x, y, DepthCode::kInverseDepth) = inv;
      code.code.at(x, y, DepthCode::kConfidence) = conf;
      code.code.at(x, y, DepthCode::kResidual) = res;
    }
  }
  return code;
}

SceneSample lateral_sample(std::uint64_t seed, int targets = 2) {
  SceneSpec spec;
  spec.preset = MotionPreset::kLateral;
  spec.motion = 0.6;
  spec.num_targets = targets;
  return generate_scene(spec, seed);
}

}  // namespace

TEST_CASE("encoding a noiseless pair leaves near-zero residuals") {
  const SceneSample sample = lateral_sample(120, 1);
  const CameraIntrinsics K = sample.frames[0].K;
  const TriangulationLayer tri =
      make_triangulation_layer(sample.flows[0], K, sample.pose_to(0));
  const DepthCode code = encode_pair(tri, 0.5);
  for (int y = 0; y < 256; y += 7) {
    for (int x = 0; x < 320; x += 7) {
      if (code.code.at(x, y, DepthCode::kConfidence) == 0.0) continue;
      CHECK(code.code.at(x, y, DepthCode::kResidual) < 1e-9);
    }
  }
}

TEST_CASE("forward pair gets zero confidence at the epipole") {
  SceneSpec spec;
  spec.preset = MotionPreset::kForward;
  spec.motion = 1.0;
  spec.num_targets = 1;
  const SceneSample sample = generate_scene(spec, 121);
  const CameraIntrinsics K = sample.frames[0].K;
  const TriangulationLayer tri =
      make_triangulation_layer(sample.flows[0], K, sample.pose_to(0));
  const DepthCode code = encode_pair(tri, 0.5);
  const Epipole e = epipole_in_source(K, sample.pose_to(0));
  REQUIRE_FALSE(e.at_infinity);
  const int ex = static_cast<int>(std::round(e.pixel.x()));
  const int ey = static_cast<int>(std::round(e.pixel.y()));
  CHECK(code.code.at(ex, ey, DepthCode::kConfidence) == 0.0);
}

TEST_CASE("two views of one scene agree after scale alignment") {
  const SceneSample sample = lateral_sample(122, 2);
  const CameraIntrinsics K = sample.frames[0].K;
  std::vector<DepthCode> codes;
  for (int i = 0; i < 2; ++i) {
    RelativePose pose = sample.pose_to(i);
    // simulate estimated poses: unit-norm translation, different true scale
    pose.t.normalize();
    pose.scale_known = false;
    codes.push_back(encode_pair(
        make_triangulation_layer(sample.flows[i], K, pose), 0.5));
  }
  codes = align_scales(std::move(codes));
  CHECK(codes[0].scale_factor == 1.0);  // reference untouched
  double worst = 0.0;
  long n = 0;
  for (int y = 0; y < 256; y += 3) {
    for (int x = 0; x < 320; x += 3) {
      const double ca = codes[0].code.at(x, y, DepthCode::kConfidence);
      const double cb = codes[1].code.at(x, y, DepthCode::kConfidence);
      if (ca <= 0.5 || cb <= 0.5) continue;
      const double ia = codes[0].code.at(x, y, DepthCode::kInverseDepth);
      const double ib = codes[1].code.at(x, y, DepthCode::kInverseDepth);
      worst = std::max(worst, std::abs(ia - ib) / ia);
      ++n;
    }
  }
  REQUIRE(n > 1000);
  CHECK(worst < 1e-6);
}

TEST_CASE("alignment undoes a global factor exactly") {
  DepthCode a = make_code(64, 64, 0.25, 0.9);
  DepthCode b = make_code(64, 64, 0.5, 0.8);  // same scene, double scale
  auto aligned = align_scales({a, b});
  for (int y = 0; y < 64; y += 5) {
    for (int x = 0; x < 64; x += 5) {
      CHECK(aligned[1].code.at(x, y, DepthCode::kInverseDepth) ==
            doctest::Approx(0.25).epsilon(1e-9));
    }
  }
  CHECK(aligned[1].scale_factor == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("single code aligns to itself unchanged") {
  DepthCode a = make_code(32, 32, 0.1, 0.7, 0.2);
  const auto aligned = align_scales({a});
  for (std::size_t i = 0; i < a.code.size(); ++i) {
    CHECK(aligned[0].code.data()[i] == a.code.data()[i]);
  }
}

TEST_CASE("alignment without overlap fails") {
  DepthCode a = make_code(32, 32, 0.25, 0.9);
  DepthCode b = make_code(32, 32, 0.5, 0.1);  // never above the 0.5 gate
  CHECK_THROWS_AS(align_scales({a, b}), NoOverlap);
}

TEST_CASE("equal-confidence fusion averages inverse depth") {
  DepthCode a = make_code(16, 16, 1.0, 0.8);
  DepthCode b = make_code(16, 16, 3.0, 0.8);
  const DepthCode fused = fuse_codes({a, b});
  CHECK(fused.code.at(7, 9, DepthCode::kInverseDepth) == doctest::Approx(2.0));
  CHECK(fused.code.at(7, 9, DepthCode::kConfidence) == doctest::Approx(0.8));
}

TEST_CASE("fusing one code is the identity, bit for bit") {
  DepthCode a = make_code(16, 16, 0.31, 0.67, 0.11);
  a.code.at(3, 4, DepthCode::kInverseDepth) = 0.777;
  const DepthCode fused = fuse_codes({a});
  for (std::size_t i = 0; i < a.code.size(); ++i) {
    REQUIRE(fused.code.data()[i] == a.code.data()[i]);
  }
}

TEST_CASE("fusion is permutation invariant") {
  Rng rng(13);
  std::vector<DepthCode> codes;
  for (int k = 0; k < 5; ++k) {
    DepthCode c = make_code(24, 24, 0.0, 0.0);
    for (int y = 0; y < 24; ++y) {
      for (int x = 0; x < 24; ++x) {
        c.code.at(x, y, DepthCode::kInverseDepth) = rng.uniform(0.05, 0.5);
        c.code.at(x, y, DepthCode::kConfidence) = rng.uniform(0.0, 1.0);
        c.code.at(x, y, DepthCode::kResidual) = rng.uniform(0.0, 2.0);
      }
    }
    codes.push_back(std::move(c));
  }
  const DepthCode forward = fuse_codes(codes);
  std::reverse(codes.begin(), codes.end());
  std::swap(codes[1], codes[3]);
  const DepthCode shuffled = fuse_codes(codes);
  for (std::size_t i = 0; i < forward.code.size(); ++i) {
    CHECK(std::abs(forward.code.data()[i] - shuffled.code.data()[i]) < 1e-12);
  }
}

TEST_CASE("fused confidence never exceeds the largest input confidence") {
  Rng rng(14);
  std::vector<DepthCode> codes;
  for (int k = 0; k < 4; ++k) {
    DepthCode c = make_code(16, 16, 0.0, 0.0);
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        c.code.at(x, y, DepthCode::kInverseDepth) = rng.uniform(0.1, 0.4);
        c.code.at(x, y, DepthCode::kConfidence) = rng.uniform(0.0, 1.0);
      }
    }
    codes.push_back(std::move(c));
  }
  for (bool exact : {false, true}) {
    const DepthCode fused = fuse_codes(codes, exact);
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        double max_conf = 0.0;
        for (const auto& c : codes)
          max_conf = std::max(max_conf, c.code.at(x, y, DepthCode::kConfidence));
        CHECK(fused.code.at(x, y, DepthCode::kConfidence) <= max_conf + 1e-12);
      }
    }
  }
}

TEST_CASE("exact-mean mode reproduces the plain average of all channels") {
  DepthCode a = make_code(8, 8, 1.0, 0.2, 0.4);
  DepthCode b = make_code(8, 8, 3.0, 0.6, 0.0);
  const DepthCode fused = fuse_codes({a, b}, true);
  CHECK(fused.code.at(2, 2, DepthCode::kInverseDepth) == doctest::Approx(2.0));
  CHECK(fused.code.at(2, 2, DepthCode::kConfidence) == doctest::Approx(0.4));
  CHECK(fused.code.at(2, 2, DepthCode::kResidual) == doctest::Approx(0.2));
}

TEST_CASE("full-confidence code inverts without filling") {
  DepthCode code = make_code(64, 48, 0.2, 0.9);
  const DepthMap dm = fused_depth(code, ImageF(64, 48, 3, 0.5f));
  for (int y = 0; y < 48; ++y) {
    for (int x = 0; x < 64; ++x) {
      CHECK(dm.depth.at(x, y) == doctest::Approx(5.0).epsilon(1e-12));
      CHECK_FALSE(dm.filled.at(x, y));
    }
  }
}

TEST_CASE("an epipole hole in the fused code is filled positive") {
  DepthCode code = make_code(64, 48, 0.125, 0.9);
  for (int y = 16; y < 32; ++y) {
    for (int x = 24; x < 40; ++x) {
      code.code.at(x, y, DepthCode::kConfidence) = 0.0;
      code.code.at(x, y, DepthCode::kInverseDepth) = 0.0;
    }
  }
  const DepthMap dm = fused_depth(code, ImageF(64, 48, 3, 0.5f));
  for (int y = 0; y < 48; ++y) {
    for (int x = 0; x < 64; ++x) {
      REQUIRE(std::isfinite(dm.depth.at(x, y)));
      REQUIRE(dm.depth.at(x, y) > 0.0);
      const bool hole = x >= 24 && x < 40 && y >= 16 && y < 32;
      CHECK(static_cast<bool>(dm.filled.at(x, y)) == hole);
      if (hole) CHECK(dm.depth.at(x, y) == doctest::Approx(8.0).epsilon(0.01));
    }
  }
}

TEST_CASE("multiview fusion under flow noise improves with more views") {
  // Six lateral targets, noisy true flow; fused depth error should not grow
  // as views accumulate, and fusing all six beats the mean single pair.
  const int kScenes = 4;
  double mean_rel[7] = {0, 0, 0, 0, 0, 0, 0};
  double single_pair_rel = 0.0;
  long single_count = 0;
  for (int s = 0; s < kScenes; ++s) {
    SceneSpec spec;
    spec.preset = MotionPreset::kArc;
    spec.motion = 1.0;
    spec.num_targets = 6;
    const SceneSample sample = generate_scene(spec, 700 + s);
    const CameraIntrinsics K = sample.frames[0].K;
    Rng rng(7700 + s);

    std::vector<DepthCode> codes;
    for (int i = 0; i < 6; ++i) {
      FlowField noisy = sample.flows[i];
      for (int y = 0; y < 256; ++y)
        for (int x = 0; x < 320; ++x)
          for (int c = 0; c < 2; ++c) noisy.flow.at(x, y, c) += 0.5 * rng.normal();
      codes.push_back(encode_pair(
          make_triangulation_layer(noisy, K, sample.pose_to(i)), 0.5));
    }
    codes = align_scales(std::move(codes));

    const DepthMap gt = sample.source_depth_map();
    for (int k = 1; k <= 6; ++k) {
      const std::vector<DepthCode> subset(codes.begin(), codes.begin() + k);
      const DepthMap dm = fused_depth(fuse_codes(subset), sample.images[0]);
      const DepthMap scaled = apply_optimal_scale(dm, gt);
      mean_rel[k] += depth_metrics(scaled, gt).l1_rel / kScenes;
    }
    for (int i = 0; i < 6; ++i) {
      const DepthMap dm = fused_depth(fuse_codes({codes[i]}), sample.images[0]);
      const DepthMap scaled = apply_optimal_scale(dm, gt);
      single_pair_rel += depth_metrics(scaled, gt).l1_rel;
      ++single_count;
    }
  }
  single_pair_rel /= single_count;
  CHECK(mean_rel[6] < mean_rel[2]);
  CHECK(mean_rel[6] <= single_pair_rel);
  CHECK(mean_rel[6] < 0.05);
}
