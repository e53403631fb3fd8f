#include "mstereo/metrics.hpp"

#include <cmath>

#include "mstereo/parallel.hpp"

namespace mstereo {

namespace {

void require_same_shape(const ImageD& a, const ImageD& b, const char* what) {
  if (!a.same_shape(b)) throw ShapeMismatch(what);
}

}  // namespace

double flow_loss(std::span<const FlowField> estimated,
                 std::span<const FlowField> ground_truth) {
  if (estimated.size() != ground_truth.size()) {
    throw ShapeMismatch("flow level counts differ");
  }
  std::vector<double> terms;
  for (std::size_t l = 0; l < estimated.size(); ++l) {
    const FlowField& w = estimated[l];
    const FlowField& gt = ground_truth[l];
    require_same_shape(w.flow, gt.flow, "flow resolutions differ");
    for (int y = 0; y < w.flow.height(); ++y) {
      for (int x = 0; x < w.flow.width(); ++x) {
        if (!w.valid.at(x, y) || !gt.valid.at(x, y)) continue;
        const double dx = w.flow.at(x, y, 0) - gt.flow.at(x, y, 0);
        const double dy = w.flow.at(x, y, 1) - gt.flow.at(x, y, 1);
        terms.push_back(std::sqrt(dx * dx + dy * dy));
      }
    }
  }
  return pairwise_sum(terms);
}

double motion_loss(std::span<const std::pair<int, RelativePose>> poses,
                   const RelativePose& ground_truth) {
  double loss = 0.0;
  for (const auto& [level, pose] : poses) {
    loss += (pose.r - ground_truth.r).norm();
    loss += (pose.t - ground_truth.t).norm();
  }
  return loss;
}

double scale_alpha(const DepthMap& d, const DepthMap& gt) {
  require_same_shape(d.depth, gt.depth, "depth resolutions differ");
  std::vector<double> terms;
  for (int y = 0; y < d.depth.height(); ++y) {
    for (int x = 0; x < d.depth.width(); ++x) {
      if (!d.valid.at(x, y) || !gt.valid.at(x, y)) continue;
      terms.push_back(std::log(gt.depth.at(x, y)) - std::log(d.depth.at(x, y)));
    }
  }
  if (terms.empty()) throw EmptyOverlap();
  return pairwise_sum(terms) / static_cast<double>(terms.size());
}

std::pair<ImageD, Mask> depth_error_map(const DepthMap& d, const DepthMap& gt) {
  const double alpha = scale_alpha(d, gt);  // throws EmptyOverlap
  const int w = d.depth.width(), h = d.depth.height();
  ImageD err(w, h, 1, 0.0);
  Mask mask(w, h, 1, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!d.valid.at(x, y) || !gt.valid.at(x, y)) continue;
      err.at(x, y) =
          std::log(d.depth.at(x, y)) + alpha - std::log(gt.depth.at(x, y));
      mask.at(x, y) = 1;
    }
  }
  return {std::move(err), std::move(mask)};
}

double berhu(double x) {
  const double a = std::abs(x);
  return a <= 1.0 ? a : x * x;
}

std::pair<double, double> depth_loss(std::span<const DepthMap> estimated,
                                     std::span<const DepthMap> ground_truth) {
  if (estimated.size() != ground_truth.size()) {
    throw ShapeMismatch("depth level counts differ");
  }
  std::vector<double> value_terms, grad_terms;
  for (std::size_t l = 0; l < estimated.size(); ++l) {
    const auto [err, mask] = depth_error_map(estimated[l], ground_truth[l]);
    const int w = err.width(), h = err.height();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!mask.at(x, y)) continue;
        value_terms.push_back(berhu(err.at(x, y)));
        double g = 0.0;
        if (x + 1 < w && mask.at(x + 1, y)) {
          g += std::abs(err.at(x + 1, y) - err.at(x, y));
        }
        if (y + 1 < h && mask.at(x, y + 1)) {
          g += std::abs(err.at(x, y + 1) - err.at(x, y));
        }
        grad_terms.push_back(g);
      }
    }
  }
  return {pairwise_sum(value_terms), pairwise_sum(grad_terms)};
}

DepthMetrics depth_metrics(const DepthMap& d, const DepthMap& gt) {
  require_same_shape(d.depth, gt.depth, "depth resolutions differ");
  std::vector<double> inv_terms, rel_terms, z_terms, z2_terms;
  for (int y = 0; y < d.depth.height(); ++y) {
    for (int x = 0; x < d.depth.width(); ++x) {
      if (!d.valid.at(x, y) || !gt.valid.at(x, y)) continue;
      const double dv = d.depth.at(x, y);
      const double gv = gt.depth.at(x, y);
      inv_terms.push_back(std::abs(1.0 / dv - 1.0 / gv));
      rel_terms.push_back(std::abs(dv - gv) / gv);
      const double z = std::log(dv) - std::log(gv);
      z_terms.push_back(z);
      z2_terms.push_back(z * z);
    }
  }
  if (inv_terms.empty()) throw EmptyOverlap();
  const double n = static_cast<double>(inv_terms.size());
  DepthMetrics m;
  m.l1_inv = pairwise_sum(inv_terms) / n;
  m.l1_rel = pairwise_sum(rel_terms) / n;
  const double mean_z = pairwise_sum(z_terms) / n;
  const double mean_z2 = pairwise_sum(z2_terms) / n;
  m.sc_inv = std::sqrt(std::max(0.0, mean_z2 - mean_z * mean_z));
  return m;
}

DepthMap apply_optimal_scale(const DepthMap& d, const DepthMap& gt) {
  const double s = std::exp(scale_alpha(d, gt));
  DepthMap out = d;
  for (int y = 0; y < out.depth.height(); ++y)
    for (int x = 0; x < out.depth.width(); ++x)
      out.depth.at(x, y) *= s;
  return out;
}

PoseErrors pose_errors(const RelativePose& estimated,
                       const RelativePose& ground_truth) {
  if (estimated.t.norm() < 1e-12) throw ZeroTranslation();
  if (ground_truth.t.norm() < 1e-12) throw ZeroTranslation();
  PoseErrors e;
  const Eigen::Matrix3d dR =
      estimated.rotation() * ground_truth.rotation().transpose();
  constexpr double kRadToDeg = 57.295779513082320877;
  e.rotation_deg = rotation_vector(dR).norm() * kRadToDeg;
  const double dot = estimated.t.normalized().dot(ground_truth.t.normalized());
  e.translation_deg = std::acos(std::clamp(dot, -1.0, 1.0)) * kRadToDeg;
  return e;
}

double flow_epe(const FlowField& estimated, const FlowField& ground_truth,
                const Mask* occlusion) {
  require_same_shape(estimated.flow, ground_truth.flow, "flow resolutions differ");
  std::vector<double> terms;
  for (int y = 0; y < estimated.flow.height(); ++y) {
    for (int x = 0; x < estimated.flow.width(); ++x) {
      if (!estimated.valid.at(x, y) || !ground_truth.valid.at(x, y)) continue;
      if (occlusion && occlusion->at(x, y)) continue;
      const double dx = estimated.flow.at(x, y, 0) - ground_truth.flow.at(x, y, 0);
      const double dy = estimated.flow.at(x, y, 1) - ground_truth.flow.at(x, y, 1);
      terms.push_back(std::sqrt(dx * dx + dy * dy));
    }
  }
  if (terms.empty()) throw EmptyOverlap();
  return pairwise_sum(terms) / static_cast<double>(terms.size());
}

}  // namespace mstereo
