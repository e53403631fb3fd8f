#include "mstereo/pipeline.hpp"

#include <algorithm>

namespace mstereo {

namespace {

int level_size(int size, int level) {
  for (int i = 0; i < level; ++i) size = (size + 1) / 2;
  return size;
}

}  // namespace

FlowField subsample_flow_level(const FlowField& level0, int level) {
  const int w = level_size(level0.flow.width(), level);
  const int h = level_size(level0.flow.height(), level);
  const int stride = 1 << level;
  const double scale = 1.0 / stride;
  FlowField out;
  out.level = level;
  out.flow = ImageD(w, h, 2);
  out.valid = Mask(w, h, 1, 0);
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(y * stride, level0.flow.height() - 1);
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(x * stride, level0.flow.width() - 1);
      out.flow.at(x, y, 0) = level0.flow.at(sx, sy, 0) * scale;
      out.flow.at(x, y, 1) = level0.flow.at(sx, sy, 1) * scale;
      out.valid.at(x, y) = level0.valid.at(sx, sy);
    }
  }
  return out;
}

ImageD subsample_depth_level(const ImageD& level0, int level) {
  const int w = level_size(level0.width(), level);
  const int h = level_size(level0.height(), level);
  const int stride = 1 << level;
  ImageD out(w, h, level0.channels());
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(y * stride, level0.height() - 1);
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(x * stride, level0.width() - 1);
      for (int c = 0; c < level0.channels(); ++c) {
        out.at(x, y, c) = level0.at(sx, sy, c);
      }
    }
  }
  return out;
}

Mask subsample_mask_level(const Mask& level0, int level) {
  const int w = level_size(level0.width(), level);
  const int h = level_size(level0.height(), level);
  const int stride = 1 << level;
  Mask out(w, h, 1);
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(y * stride, level0.height() - 1);
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(x * stride, level0.width() - 1);
      out.at(x, y) = level0.at(sx, sy);
    }
  }
  return out;
}

EstimateResult estimate_sample(const SceneSample& sample,
                               const EstimateOptions& options) {
  const int available = sample.num_targets();
  const int use = options.pairs < 0 ? available
                                    : std::min(options.pairs, available);
  if (use < 1) throw InvalidSpec("estimation needs at least one target");

  EstimateResult result;
  const CameraIntrinsics K0 = sample.frames[0].K;
  result.K1 = K0.scaled(1);

  const ImagePyramid source_pyr = build_pyramid(sample.images[0], K0);
  result.source_level1 = source_pyr.levels[1];

  std::vector<DepthCode> codes;
  for (int i = 0; i < use; ++i) {
    const ImagePyramid target_pyr = build_pyramid(sample.images[i + 1], K0);

    PoseCallback callback;
    if (options.use_gt_pose) {
      const RelativePose gt = sample.pose_to(i);
      callback = [gt](const FlowField&, const CameraIntrinsics&,
                      const std::optional<RelativePose>&)
          -> std::optional<RelativePose> { return gt; };
    } else {
      callback = [](const FlowField& flow, const CameraIntrinsics& K,
                    const std::optional<RelativePose>& prev)
          -> std::optional<RelativePose> {
        try {
          return estimate_pose_from_flow(flow, K, prev);
        } catch (const Error&) {
          return std::nullopt;
        }
      };
    }

    FlowMotionOptions fm;
    fm.epipolar = options.epipolar;
    fm.threads = options.threads;
    FlowMotionResult fmr =
        coarse_to_fine_flow(source_pyr, target_pyr, callback, fm);
    if (fmr.poses.empty()) {
      throw DegenerateConfiguration("pose estimation failed for pair " +
                                    std::to_string(i));
    }

    PairEstimate pair;
    pair.flow = fmr.flow;
    pair.pose = fmr.poses.back().second;
    pair.level_poses = fmr.poses;
    pair.fallback = fmr.fallback;
    pair.candidate_counts = fmr.candidate_counts;

    const TriangulationLayer tri =
        make_triangulation_layer(pair.flow, result.K1, pair.pose);
    codes.push_back(encode_pair(tri, options.flow_noise_px, options.threads));
    result.pairs.push_back(std::move(pair));
  }

  codes = align_scales(std::move(codes));
  result.fused_code = fuse_codes(codes, options.exact_mean);
  result.depth = fused_depth(result.fused_code, result.source_level1,
                             options.threads);
  return result;
}

}  // namespace mstereo
