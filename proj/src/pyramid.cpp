#include "mstereo/pyramid.hpp"

#include <algorithm>
#include <cmath>

#include "mstereo/parallel.hpp"

namespace mstereo {

ImagePyramid build_pyramid(const ImageF& image, const CameraIntrinsics& K) {
  if (image.width() < 32 || image.height() < 32) {
    throw ImageTooSmall("pyramid input must be at least 32x32, got " +
                        std::to_string(image.width()) + "x" +
                        std::to_string(image.height()));
  }
  int w = image.width(), h = image.height();
  for (int i = 0; i < ImagePyramid::kLevels - 1; ++i) {
    w = (w + 1) / 2;
    h = (h + 1) / 2;
  }
  if (w < 4 || h < 4) {
    throw ImageTooSmall("coarsest pyramid level would be " + std::to_string(w) +
                        "x" + std::to_string(h) + ", need at least 4x4");
  }

  ImagePyramid pyr;
  pyr.levels.reserve(ImagePyramid::kLevels);
  pyr.intrinsics.reserve(ImagePyramid::kLevels);
  pyr.levels.push_back(image);
  pyr.intrinsics.push_back(K);
  for (int i = 1; i < ImagePyramid::kLevels; ++i) {
    pyr.levels.push_back(box_downsample(pyr.levels.back()));
    pyr.intrinsics.push_back(K.scaled(i));
  }
  return pyr;
}

FeatureMap extract_features(const ImagePyramid& pyramid, int level) {
  const ImageF gray = rgb_to_gray(pyramid.levels.at(level));
  const int w = gray.width(), h = gray.height();
  FeatureMap map;
  map.level = level;
  map.descriptors = ImageF(w, h, kDescriptorDim);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double patch[kDescriptorDim];
      double mean = 0.0;
      int idx = 0;
      for (int dy = -kPatchRadius; dy <= kPatchRadius; ++dy) {
        const int sy = std::clamp(y + dy, 0, h - 1);
        for (int dx = -kPatchRadius; dx <= kPatchRadius; ++dx) {
          const int sx = std::clamp(x + dx, 0, w - 1);
          patch[idx] = gray.at(sx, sy);
          mean += patch[idx];
          ++idx;
        }
      }
      mean /= kDescriptorDim;
      double ss = 0.0;
      for (int i = 0; i < kDescriptorDim; ++i) {
        patch[i] -= mean;
        ss += patch[i] * patch[i];
      }
      float* out = map.descriptors.pixel(x, y);
      if (ss / kDescriptorDim < 1e-8) {
        for (int i = 0; i < kDescriptorDim; ++i) out[i] = 0.0f;
      } else {
        const double inv = 1.0 / std::sqrt(ss);
        for (int i = 0; i < kDescriptorDim; ++i) {
          out[i] = static_cast<float>(patch[i] * inv);
        }
      }
    }
  }
  return map;
}

FlowField FlowField::zero(int width, int height, int level) {
  FlowField f;
  f.level = level;
  f.flow = ImageD(width, height, 2, 0.0);
  f.valid = Mask(width, height, 1, 1);
  return f;
}

FlowField regularize_flow(const FlowField& w, const Eigen::Matrix3d& F) {
  FlowField out = w;
  const int width = w.flow.width(), height = w.flow.height();
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector3d e = F * Eigen::Vector3d(x, y, 1.0);
      const double n2 = e.x() * e.x() + e.y() * e.y();
      if (n2 < 1e-18) {
        out.valid.at(x, y) = 0;  // epipole pixel: keep input flow
        continue;
      }
      const double px = x + w.flow.at(x, y, 0);
      const double py = y + w.flow.at(x, y, 1);
      const double r = (e.x() * px + e.y() * py + e.z()) / n2;
      out.flow.at(x, y, 0) = px - r * e.x() - x;
      out.flow.at(x, y, 1) = py - r * e.y() - y;
    }
  }
  return out;
}

std::vector<Eigen::Vector2d> candidate_positions(const Eigen::Vector2d& x,
                                                 const Eigen::Vector2d& w_r,
                                                 const EpipolarLine& line,
                                                 int h_max, int v_max) {
  const double n2 = line.e.x() * line.e.x() + line.e.y() * line.e.y();
  if (n2 < 1e-18) throw DegenerateLine();
  const Eigen::Vector2d hdir = line.direction();
  const Eigen::Vector2d vdir = line.normal();
  const Eigen::Vector2d base = x + w_r;
  std::vector<Eigen::Vector2d> out;
  out.reserve((2 * h_max + 1) * (2 * v_max + 1));
  for (int v = -v_max; v <= v_max; ++v) {
    for (int h = -h_max; h <= h_max; ++h) {
      out.push_back(base + h * hdir + v * vdir);
    }
  }
  return out;
}

CandidateGrid build_epipolar_grid(const FlowField& w, const Eigen::Matrix3d& F,
                                  int h_max, int v_max) {
  const int width = w.flow.width(), height = w.flow.height();
  CandidateGrid grid;
  grid.h_max = h_max;
  grid.v_max = v_max;
  grid.base = ImageD(width, height, 2);
  grid.axes = ImageD(width, height, 4);
  grid.ok = Mask(width, height, 1, 1);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector3d e = F * Eigen::Vector3d(x, y, 1.0);
      const double n2 = e.x() * e.x() + e.y() * e.y();
      grid.base.at(x, y, 0) = w.flow.at(x, y, 0);
      grid.base.at(x, y, 1) = w.flow.at(x, y, 1);
      if (n2 < 1e-18) {
        grid.ok.at(x, y) = 0;
        grid.axes.at(x, y, 0) = 1.0;
        grid.axes.at(x, y, 1) = 0.0;
        grid.axes.at(x, y, 2) = 0.0;
        grid.axes.at(x, y, 3) = 1.0;
        continue;
      }
      const double n = std::sqrt(n2);
      // Project the endpoint onto the line, then step 1 px along/across it.
      const double px = x + w.flow.at(x, y, 0);
      const double py = y + w.flow.at(x, y, 1);
      const double r = (e.x() * px + e.y() * py + e.z()) / n2;
      grid.base.at(x, y, 0) = px - r * e.x() - x;
      grid.base.at(x, y, 1) = py - r * e.y() - y;
      grid.axes.at(x, y, 0) = e.y() / n;
      grid.axes.at(x, y, 1) = -e.x() / n;
      grid.axes.at(x, y, 2) = e.x() / n;
      grid.axes.at(x, y, 3) = e.y() / n;
    }
  }
  return grid;
}

CandidateGrid build_axis_grid(const FlowField& w, int h_max, int v_max) {
  const int width = w.flow.width(), height = w.flow.height();
  CandidateGrid grid;
  grid.h_max = h_max;
  grid.v_max = v_max;
  grid.base = w.flow;
  grid.axes = ImageD(width, height, 4);
  grid.ok = Mask(width, height, 1, 1);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      grid.axes.at(x, y, 0) = 1.0;
      grid.axes.at(x, y, 1) = 0.0;
      grid.axes.at(x, y, 2) = 0.0;
      grid.axes.at(x, y, 3) = 1.0;
    }
  }
  return grid;
}

namespace {

// Descriptor correlation with bilinear target sampling. Accumulates in
// double so scores stay inside [-1, 1] up to a few ulp.
double sample_score(const ImageF& desc_s, int xs, int ys, const ImageF& desc_t,
                    double xt, double yt) {
  const int w = desc_t.width(), h = desc_t.height();
  const double fx = std::clamp(xt, 0.0, w - 1.0);
  const double fy = std::clamp(yt, 0.0, h - 1.0);
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const int x1 = x0 + 1 < w ? x0 + 1 : w - 1;
  const int y1 = y0 + 1 < h ? y0 + 1 : h - 1;
  const double ax = fx - x0, ay = fy - y0;
  const double w00 = (1.0 - ax) * (1.0 - ay);
  const double w01 = ax * (1.0 - ay);
  const double w10 = (1.0 - ax) * ay;
  const double w11 = ax * ay;
  const float* s = desc_s.pixel(xs, ys);
  const float* t00 = desc_t.pixel(x0, y0);
  const float* t01 = desc_t.pixel(x1, y0);
  const float* t10 = desc_t.pixel(x0, y1);
  const float* t11 = desc_t.pixel(x1, y1);
  double dot = 0.0;
  for (int i = 0; i < kDescriptorDim; ++i) {
    const double tv = w00 * t00[i] + w01 * t01[i] + w10 * t10[i] + w11 * t11[i];
    dot += s[i] * tv;
  }
  return dot;
}

}  // namespace

CostVolume build_cost_volume(const FeatureMap& source, const FeatureMap& target,
                             const CandidateGrid& grid, int threads) {
  CostVolume cost;
  cost.level = source.level;
  cost.grid = grid;
  const int width = source.descriptors.width();
  const int height = source.descriptors.height();
  const int count = grid.count();
  cost.scores = Image<float>(width, height, count, -1.0f);
  cost.candidate_valid = Mask(width, height, count, 0);

  const ImageF& ft = target.descriptors;
  parallel_for(0, height, threads, [&](int y) {
    for (int x = 0; x < width; ++x) {
      if (!grid.ok.at(x, y)) continue;
      const double bx = x + grid.base.at(x, y, 0);
      const double by = y + grid.base.at(x, y, 1);
      const double hx = grid.axes.at(x, y, 0), hy = grid.axes.at(x, y, 1);
      const double vx = grid.axes.at(x, y, 2), vy = grid.axes.at(x, y, 3);
      float* scores = cost.scores.pixel(x, y);
      std::uint8_t* cv = cost.candidate_valid.pixel(x, y);
      int idx = 0;
      for (int v = -grid.v_max; v <= grid.v_max; ++v) {
        for (int h = -grid.h_max; h <= grid.h_max; ++h, ++idx) {
          const double cxp = bx + h * hx + v * vx;
          const double cyp = by + h * hy + v * vy;
          if (cxp < 0.0 || cxp > ft.width() - 1.0 || cyp < 0.0 ||
              cyp > ft.height() - 1.0) {
            continue;  // stays masked with score -1
          }
          scores[idx] = static_cast<float>(
              sample_score(source.descriptors, x, y, ft, cxp, cyp));
          cv[idx] = 1;
        }
      }
    }
  });
  return cost;
}

namespace {

// 1-D parabola through three equally spaced scores; offset of the vertex
// from the center sample, clamped to half a step. A center at the
// correlation ceiling is already a perfect match: moving off it would put
// the vertex above 1, which no correlation can reach.
double parabolic_offset(double left, double center, double right) {
  if (center >= 1.0 - 1e-6) return 0.0;
  const double denom = left - 2.0 * center + right;
  if (denom >= -1e-12) return 0.0;  // not a strict local maximum
  const double offset = 0.5 * (left - right) / denom;
  return std::clamp(offset, -0.5, 0.5);
}

}  // namespace

// Matches with a weaker correlation peak than this carry no evidence; the
// pixel keeps its initialization instead of a near-random winner.
constexpr float kMinPeakScore = 0.5f;

FlowField estimate_flow_level(const CostVolume& cost) {
  const CandidateGrid& grid = cost.grid;
  const int width = cost.scores.width(), height = cost.scores.height();
  const int nh = 2 * grid.h_max + 1;
  FlowField out;
  out.level = cost.level;
  out.flow = ImageD(width, height, 2);
  out.valid = Mask(width, height, 1, 0);

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      out.flow.at(x, y, 0) = grid.base.at(x, y, 0);
      out.flow.at(x, y, 1) = grid.base.at(x, y, 1);
      if (!grid.ok.at(x, y)) continue;

      const float* scores = cost.scores.pixel(x, y);
      const std::uint8_t* cv = cost.candidate_valid.pixel(x, y);
      int best_h = 0, best_v = 0;
      float best = -2.0f;
      bool found = false;
      int idx = 0;
      for (int v = -grid.v_max; v <= grid.v_max; ++v) {
        for (int h = -grid.h_max; h <= grid.h_max; ++h, ++idx) {
          if (!cv[idx]) continue;
          const float s = scores[idx];
          bool better = false;
          if (!found || s > best) {
            better = true;
          } else if (s == best) {
            // Deterministic tie-breaking: |h|, then |v|, then negative first.
            const int ah = std::abs(h), av = std::abs(v);
            const int bh = std::abs(best_h), bv = std::abs(best_v);
            better = ah < bh ||
                     (ah == bh && (av < bv ||
                                   (av == bv && (h < best_h ||
                                                 (h == best_h && v < best_v)))));
          }
          if (better) {
            best = s;
            best_h = h;
            best_v = v;
            found = true;
          }
        }
      }
      if (!found || best < kMinPeakScore) continue;

      const auto score_at = [&](int h, int v, double* value) {
        if (h < -grid.h_max || h > grid.h_max || v < -grid.v_max || v > grid.v_max)
          return false;
        const int i = (v + grid.v_max) * nh + (h + grid.h_max);
        if (!cv[i]) return false;
        *value = scores[i];
        return true;
      };

      double dh = 0.0, dv = 0.0;
      double left, right;
      if (score_at(best_h - 1, best_v, &left) && score_at(best_h + 1, best_v, &right)) {
        dh = parabolic_offset(left, best, right);
      }
      if (score_at(best_h, best_v - 1, &left) && score_at(best_h, best_v + 1, &right)) {
        dv = parabolic_offset(left, best, right);
      }

      const double sh = best_h + dh, sv = best_v + dv;
      out.flow.at(x, y, 0) = grid.base.at(x, y, 0) + sh * grid.axes.at(x, y, 0) +
                             sv * grid.axes.at(x, y, 2);
      out.flow.at(x, y, 1) = grid.base.at(x, y, 1) + sh * grid.axes.at(x, y, 1) +
                             sv * grid.axes.at(x, y, 3);
      out.valid.at(x, y) = 1;
    }
  }
  return out;
}

namespace {

// 3x3 per-component median. Outlier matches at a coarse level otherwise
// land outside the next level's search range and can never be corrected.
FlowField median_filter_flow(const FlowField& w) {
  const int width = w.flow.width(), height = w.flow.height();
  FlowField out = w;
  std::array<double, 9> window;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 2; ++c) {
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = std::clamp(x + dx, 0, width - 1);
            const int ny = std::clamp(y + dy, 0, height - 1);
            window[n++] = w.flow.at(nx, ny, c);
          }
        }
        std::nth_element(window.begin(), window.begin() + 4, window.begin() + n);
        out.flow.at(x, y, c) = window[4];
      }
    }
  }
  return out;
}

}  // namespace

FlowField upsample_flow(const FlowField& w, int width, int height) {
  FlowField out;
  out.level = w.level - 1;
  out.flow = ImageD(width, height, 2);
  out.valid = Mask(width, height, 1, 1);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double sx = 0.5 * x, sy = 0.5 * y;
      out.flow.at(x, y, 0) = 2.0 * bilinear(w.flow, sx, sy, 0);
      out.flow.at(x, y, 1) = 2.0 * bilinear(w.flow, sx, sy, 1);
      const int nx = std::min(static_cast<int>(sx + 0.5), w.valid.width() - 1);
      const int ny = std::min(static_cast<int>(sy + 0.5), w.valid.height() - 1);
      out.valid.at(x, y) = w.valid.at(nx, ny);
    }
  }
  return out;
}

FlowMotionResult coarse_to_fine_flow(const ImagePyramid& source,
                                     const ImagePyramid& target,
                                     const PoseCallback& pose_callback,
                                     const FlowMotionOptions& options) {
  if (source.levels[0].width() != target.levels[0].width() ||
      source.levels[0].height() != target.levels[0].height()) {
    throw ShapeMismatch("pyramids built from differently sized images");
  }

  FlowMotionResult result;
  std::optional<RelativePose> pose;

  FlowField flow;
  for (int level = 5; level >= 1; --level) {
    const ImageF& img = source.levels[level];
    if (level == 5) {
      flow = FlowField::zero(img.width(), img.height(), level);
    } else {
      flow = upsample_flow(median_filter_flow(flow), img.width(), img.height());
      flow.level = level;
    }

    const FeatureMap fs = extract_features(source, level);
    const FeatureMap ft = extract_features(target, level);

    const bool use_epipolar =
        options.epipolar && !result.fallback && pose.has_value();
    CandidateGrid grid;
    if (use_epipolar) {
      Eigen::Matrix3d F;
      try {
        F = fundamental_matrix(source.intrinsics[level], target.intrinsics[level],
                               *pose);
        grid = build_epipolar_grid(flow, F, options.h_max[level - 1],
                                   options.v_max[level - 1]);
      } catch (const ZeroTranslation&) {
        result.fallback = true;
        grid = build_axis_grid(flow, 4, 4);
      }
    } else {
      grid = build_axis_grid(flow, 4, 4);
    }
    result.candidate_counts[level - 1] = grid.count();

    const CostVolume cost = build_cost_volume(fs, ft, grid, options.threads);
    flow = estimate_flow_level(cost);

    const bool estimate_here =
        options.epipolar ? level <= 3 : level == 1;
    if (estimate_here && pose_callback) {
      const auto estimated = pose_callback(flow, source.intrinsics[level], pose);
      if (estimated.has_value()) {
        pose = estimated;
        result.poses.emplace_back(level, *estimated);
      } else {
        result.fallback = true;
      }
    }
  }

  result.flow = flow;
  return result;
}

}  // namespace mstereo
