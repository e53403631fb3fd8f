#include "mstereo/motion.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "mstereo/parallel.hpp"

namespace mstereo {

namespace {

// Splits n into rows x cols >= strata with cols/rows tracking the image
// aspect; prefers exact divisors of n so a fully valid flow yields exactly
// n samples on a uniform grid.
void stratum_shape(int n, int width, int height, int* rows, int* cols) {
  const double aspect = static_cast<double>(width) / height;
  double best_score = 1e300;
  int best_r = 1;
  for (int r = 1; r <= n; ++r) {
    if (n % r != 0) continue;
    const int c = n / r;
    const double score = std::abs(std::log((static_cast<double>(c) / r) / aspect));
    if (score < best_score) {
      best_score = score;
      best_r = r;
    }
  }
  *rows = best_r;
  *cols = n / best_r;
}

}  // namespace

std::vector<Correspondence> sample_correspondences(const FlowField& flow,
                                                   int max_n) {
  const int w = flow.flow.width(), h = flow.flow.height();
  int valid = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) valid += flow.valid.at(x, y) ? 1 : 0;
  if (valid < 8) {
    throw TooFewCorrespondences("need 8 valid flow pixels, have " +
                                std::to_string(valid));
  }

  int n = std::max(16, std::min(max_n, valid));
  n = std::min(n, w * h);
  int rows, cols;
  stratum_shape(n, w, h, &rows, &cols);

  std::vector<Correspondence> out;
  out.reserve(n);
  for (int r = 0; r < rows && static_cast<int>(out.size()) < max_n; ++r) {
    const int y0 = static_cast<int>(static_cast<std::int64_t>(r) * h / rows);
    const int y1 = static_cast<int>(static_cast<std::int64_t>(r + 1) * h / rows);
    for (int c = 0; c < cols && static_cast<int>(out.size()) < max_n; ++c) {
      const int x0 = static_cast<int>(static_cast<std::int64_t>(c) * w / cols);
      const int x1 = static_cast<int>(static_cast<std::int64_t>(c + 1) * w / cols);
      // Pixel nearest the cell center, in scan order on ties.
      const double cx = 0.5 * (x0 + x1 - 1);
      const double cy = 0.5 * (y0 + y1 - 1);
      int best_x = -1, best_y = -1;
      double best_d = 1e300;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          if (!flow.valid.at(x, y)) continue;
          const double d = (x - cx) * (x - cx) + (y - cy) * (y - cy);
          if (d < best_d) {
            best_d = d;
            best_x = x;
            best_y = y;
          }
        }
      }
      if (best_x < 0) continue;
      Correspondence cor;
      cor.source = Eigen::Vector2d(best_x, best_y);
      cor.target = cor.source + Eigen::Vector2d(flow.flow.at(best_x, best_y, 0),
                                                flow.flow.at(best_x, best_y, 1));
      out.push_back(cor);
    }
  }
  if (static_cast<int>(out.size()) < 8) {
    throw TooFewCorrespondences("stratified sampling produced " +
                                std::to_string(out.size()) + " pairs");
  }
  return out;
}

namespace {

Eigen::Matrix3d hartley_normalization(std::span<const Eigen::Vector2d> pts) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double dist = 0.0;
  for (const auto& p : pts) dist += (p - mean).norm();
  dist /= static_cast<double>(pts.size());
  const double scale = dist > 1e-12 ? std::sqrt(2.0) / dist : 1.0;
  Eigen::Matrix3d T;
  T << scale, 0.0, -scale * mean.x(), 0.0, scale, -scale * mean.y(), 0.0, 0.0, 1.0;
  return T;
}

}  // namespace

Eigen::Matrix3d normalized_eight_point(std::span<const Correspondence> pairs,
                                       const CameraIntrinsics& K) {
  if (pairs.size() < 8) {
    throw TooFewCorrespondences("eight-point needs 8 pairs, got " +
                                std::to_string(pairs.size()));
  }
  std::vector<Eigen::Vector2d> src, tgt;
  src.reserve(pairs.size());
  tgt.reserve(pairs.size());
  for (const auto& p : pairs) {
    src.push_back(p.source);
    tgt.push_back(p.target);
  }
  const Eigen::Matrix3d Ts = hartley_normalization(src);
  const Eigen::Matrix3d Tt = hartley_normalization(tgt);

  Eigen::MatrixXd A(pairs.size(), 9);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Eigen::Vector3d s = Ts * Eigen::Vector3d(src[i].x(), src[i].y(), 1.0);
    const Eigen::Vector3d t = Tt * Eigen::Vector3d(tgt[i].x(), tgt[i].y(), 1.0);
    A.row(i) << t.x() * s.x(), t.x() * s.y(), t.x(), t.y() * s.x(), t.y() * s.y(),
        t.y(), s.x(), s.y(), 1.0;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // The nullspace must be one-dimensional: with sigma_8 ~ 0 the solution is
  // ambiguous (zero motion, or points coplanar with both centers).
  if (sv(7) < 1e-8 * sv(0)) {
    throw DegenerateConfiguration("epipolar design matrix is rank-deficient");
  }
  const Eigen::VectorXd f = svd.matrixV().col(8);
  Eigen::Matrix3d F;
  F << f(0), f(1), f(2), f(3), f(4), f(5), f(6), f(7), f(8);

  // Rank-2 projection before denormalization.
  Eigen::JacobiSVD<Eigen::Matrix3d> fsvd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d s = fsvd.singularValues();
  s(2) = 0.0;
  F = fsvd.matrixU() * s.asDiagonal() * fsvd.matrixV().transpose();
  F = Tt.transpose() * F * Ts;

  Eigen::Matrix3d E = K.matrix().transpose() * F * K.matrix();
  Eigen::JacobiSVD<Eigen::Matrix3d> esvd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
  E = esvd.matrixU() * Eigen::Vector3d(1.0, 1.0, 0.0).asDiagonal() *
      esvd.matrixV().transpose();
  return E;
}

namespace {

// Triangulates in normalized camera coordinates with P1 = [I|0], P2 = [R|t]
// and reports the depths in both cameras.
void triangulate_normalized(const Eigen::Matrix3d& R, const Eigen::Vector3d& t,
                            const Eigen::Vector3d& xs, const Eigen::Vector3d& xt,
                            double* depth_s, double* depth_t) {
  Eigen::Matrix<double, 3, 4> P2;
  P2.block<3, 3>(0, 0) = R;
  P2.col(3) = t;
  Eigen::Matrix4d A;
  A.row(0) << -1.0, 0.0, xs.x() / xs.z(), 0.0;
  A.row(1) << 0.0, -1.0, xs.y() / xs.z(), 0.0;
  A.row(2) = (xt.x() / xt.z()) * P2.row(2) - P2.row(0);
  A.row(3) = (xt.y() / xt.z()) * P2.row(2) - P2.row(1);
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(A, Eigen::ComputeFullV);
  Eigen::Vector4d X = svd.matrixV().col(3);
  if (std::abs(X(3)) < 1e-15) {
    *depth_s = 0.0;
    *depth_t = 0.0;
    return;
  }
  const Eigen::Vector3d Xs = X.head<3>() / X(3);
  *depth_s = Xs.z();
  *depth_t = (R * Xs + t).z();
}

}  // namespace

RelativePose decompose_essential(const Eigen::Matrix3d& E,
                                 std::span<const Correspondence> pairs,
                                 const CameraIntrinsics& K) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d U = svd.matrixU();
  Eigen::Matrix3d V = svd.matrixV();
  if (U.determinant() < 0.0) U.col(2) *= -1.0;
  if (V.determinant() < 0.0) V.col(2) *= -1.0;
  Eigen::Matrix3d W;
  W << 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0;

  const Eigen::Matrix3d R1 = U * W * V.transpose();
  const Eigen::Matrix3d R2 = U * W.transpose() * V.transpose();
  const Eigen::Vector3d tu = U.col(2);

  const Eigen::Matrix3d Ki = K.inverse_matrix();
  std::array<Eigen::Matrix3d, 4> Rs = {R1, R1, R2, R2};
  std::array<Eigen::Vector3d, 4> ts = {tu, -tu, tu, -tu};
  std::array<int, 4> votes = {0, 0, 0, 0};

  for (const auto& pair : pairs) {
    const Eigen::Vector3d xs = Ki * Eigen::Vector3d(pair.source.x(), pair.source.y(), 1.0);
    const Eigen::Vector3d xt = Ki * Eigen::Vector3d(pair.target.x(), pair.target.y(), 1.0);
    for (int i = 0; i < 4; ++i) {
      double ds, dt;
      triangulate_normalized(Rs[i], ts[i], xs, xt, &ds, &dt);
      if (ds > 0.0 && dt > 0.0) ++votes[i];
    }
  }

  int best = 0;
  for (int i = 1; i < 4; ++i)
    if (votes[i] > votes[best]) best = i;
  for (int i = 0; i < 4; ++i) {
    if (i != best && votes[i] >= votes[best]) throw CheiralityAmbiguous();
  }
  if (votes[best] == 0) throw CheiralityAmbiguous();

  RelativePose pose;
  pose.r = canonical_rotation_vector(rotation_vector(Rs[best]));
  pose.t = ts[best].normalized();
  pose.scale_known = false;
  return pose;
}

namespace {

double sampson_cost_matrix(const Eigen::Matrix3d& F,
                           std::span<const Correspondence> pairs) {
  std::vector<double> terms;
  terms.reserve(pairs.size());
  for (const auto& p : pairs) {
    const Eigen::Vector3d xs(p.source.x(), p.source.y(), 1.0);
    const Eigen::Vector3d xt(p.target.x(), p.target.y(), 1.0);
    const Eigen::Vector3d Fs = F * xs;
    const Eigen::Vector3d Ft = F.transpose() * xt;
    const double err = xt.dot(Fs);
    const double denom =
        Fs.x() * Fs.x() + Fs.y() * Fs.y() + Ft.x() * Ft.x() + Ft.y() * Ft.y();
    terms.push_back(denom > 1e-300 ? err * err / denom : 0.0);
  }
  return pairwise_sum(terms);
}

// Orthonormal basis of the plane perpendicular to unit vector t.
Eigen::Matrix<double, 3, 2> tangent_basis(const Eigen::Vector3d& t) {
  const Eigen::Vector3d pick = std::abs(t.x()) < 0.9 ? Eigen::Vector3d::UnitX()
                                                     : Eigen::Vector3d::UnitY();
  Eigen::Matrix<double, 3, 2> B;
  B.col(0) = t.cross(pick).normalized();
  B.col(1) = t.cross(B.col(0)).normalized();
  return B;
}

RelativePose apply_step(const RelativePose& pose, const Eigen::Matrix<double, 5, 1>& delta) {
  RelativePose out = pose;
  out.r = canonical_rotation_vector(
      rotation_vector(rotation_matrix(delta.head<3>()) * pose.rotation()));
  const Eigen::Matrix<double, 3, 2> B = tangent_basis(pose.t.normalized());
  out.t = (pose.t.normalized() + B * delta.tail<2>()).normalized();
  return out;
}

}  // namespace

double sampson_cost(const RelativePose& pose,
                    std::span<const Correspondence> pairs,
                    const CameraIntrinsics& K) {
  return sampson_cost_matrix(fundamental_matrix(K, K, pose), pairs);
}

RefineResult refine_pose(const RelativePose& initial,
                         std::span<const Correspondence> pairs,
                         const CameraIntrinsics& K) {
  RefineResult result;
  RelativePose pose = initial;
  pose.t = pose.t.normalized();
  pose.scale_known = false;

  // Signed Sampson residuals per pair for the Jacobian.
  const auto residuals = [&](const RelativePose& p, Eigen::VectorXd* r) {
    const Eigen::Matrix3d F = fundamental_matrix(K, K, p);
    r->resize(static_cast<Eigen::Index>(pairs.size()));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const Eigen::Vector3d xs(pairs[i].source.x(), pairs[i].source.y(), 1.0);
      const Eigen::Vector3d xt(pairs[i].target.x(), pairs[i].target.y(), 1.0);
      const Eigen::Vector3d Fs = F * xs;
      const Eigen::Vector3d Ft = F.transpose() * xt;
      const double err = xt.dot(Fs);
      const double denom =
          Fs.x() * Fs.x() + Fs.y() * Fs.y() + Ft.x() * Ft.x() + Ft.y() * Ft.y();
      (*r)(static_cast<Eigen::Index>(i)) =
          denom > 1e-300 ? err / std::sqrt(denom) : 0.0;
    }
  };

  double cost = sampson_cost(pose, pairs, K);
  result.initial_cost = cost;

  constexpr int kMaxIterations = 20;
  constexpr double kStepEps = 1e-9;
  Eigen::VectorXd r0, rp;
  for (int it = 0; it < kMaxIterations; ++it) {
    result.iterations = it + 1;
    residuals(pose, &r0);

    // Central-difference Jacobian over the 5 local parameters.
    Eigen::MatrixXd J(r0.size(), 5);
    for (int k = 0; k < 5; ++k) {
      Eigen::Matrix<double, 5, 1> d = Eigen::Matrix<double, 5, 1>::Zero();
      d(k) = kStepEps;
      residuals(apply_step(pose, d), &rp);
      Eigen::VectorXd rm;
      d(k) = -kStepEps;
      residuals(apply_step(pose, d), &rm);
      J.col(k) = (rp - rm) / (2.0 * kStepEps);
    }

    const Eigen::Matrix<double, 5, 5> JtJ = J.transpose() * J;
    const Eigen::Matrix<double, 5, 1> g = J.transpose() * r0;
    Eigen::Matrix<double, 5, 1> delta =
        (JtJ + 1e-12 * Eigen::Matrix<double, 5, 5>::Identity()).ldlt().solve(-g);

    // Halve the step until the cost stops increasing.
    bool accepted = false;
    for (int half = 0; half < 12; ++half) {
      const RelativePose trial = apply_step(pose, delta);
      const double trial_cost = sampson_cost(trial, pairs, K);
      if (trial_cost <= cost) {
        const double drop = cost - trial_cost;
        pose = trial;
        const double before = cost;
        cost = trial_cost;
        accepted = true;
        if (drop < 1e-10 * std::max(before, 1e-300)) {
          result.converged = true;
        }
        break;
      }
      delta *= 0.5;
    }
    if (!accepted || result.converged) {
      result.converged = result.converged || !accepted;
      break;
    }
  }

  result.pose = pose;
  result.final_cost = cost;
  return result;
}

namespace {

// Drops pairs whose Sampson distance exceeds three times the median under
// the given pose. Matches on occluders and at image borders are gross
// outliers that a plain least-squares fit cannot absorb.
std::vector<Correspondence> trim_outliers(const RelativePose& pose,
                                          std::span<const Correspondence> pairs,
                                          const CameraIntrinsics& K) {
  const Eigen::Matrix3d F = fundamental_matrix(K, K, pose);
  std::vector<double> dist2(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Eigen::Vector3d xs(pairs[i].source.x(), pairs[i].source.y(), 1.0);
    const Eigen::Vector3d xt(pairs[i].target.x(), pairs[i].target.y(), 1.0);
    const Eigen::Vector3d Fs = F * xs;
    const Eigen::Vector3d Ft = F.transpose() * xt;
    const double err = xt.dot(Fs);
    const double denom =
        Fs.x() * Fs.x() + Fs.y() * Fs.y() + Ft.x() * Ft.x() + Ft.y() * Ft.y();
    dist2[i] = denom > 1e-300 ? err * err / denom : 0.0;
  }
  std::vector<double> sorted = dist2;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2,
                   sorted.end());
  const double cutoff = std::max(9.0 * sorted[sorted.size() / 2], 1e-12);
  std::vector<Correspondence> kept;
  kept.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (dist2[i] <= cutoff) kept.push_back(pairs[i]);
  }
  return kept;
}

}  // namespace

RelativePose estimate_pose_from_flow(const FlowField& flow,
                                     const CameraIntrinsics& K,
                                     const std::optional<RelativePose>& init,
                                     int max_correspondences) {
  std::vector<Correspondence> pairs =
      sample_correspondences(flow, max_correspondences);
  // Sub-pixel apparent motion carries no usable signal; a pose fitted to it
  // would be matching noise. Gate on an upper quantile so a handful of
  // outlier pixels cannot fake motion.
  std::vector<double> disps;
  disps.reserve(pairs.size());
  for (const auto& p : pairs) disps.push_back((p.target - p.source).norm());
  std::nth_element(disps.begin(), disps.begin() + disps.size() * 9 / 10,
                   disps.end());
  if (disps[disps.size() * 9 / 10] < 0.5) {
    throw DegenerateConfiguration("apparent motion below half a pixel");
  }

  RelativePose start;
  if (init.has_value()) {
    start = *init;
    if (start.t.norm() < 1e-12) throw ZeroTranslation();
    start.t.normalize();
  } else {
    const Eigen::Matrix3d E = normalized_eight_point(pairs, K);
    start = decompose_essential(E, pairs, K);
  }

  RefineResult refined = refine_pose(start, pairs, K);
  for (int round = 0; round < 2; ++round) {
    std::vector<Correspondence> kept = trim_outliers(refined.pose, pairs, K);
    if (kept.size() == pairs.size() || kept.size() < 16) break;
    pairs = std::move(kept);
    if (!init.has_value()) {
      // Re-solve on the cleaned set; the initial fit may have been dragged
      // far enough that refinement alone cannot come back.
      try {
        const Eigen::Matrix3d E = normalized_eight_point(pairs, K);
        const RelativePose fresh = decompose_essential(E, pairs, K);
        if (sampson_cost(fresh, pairs, K) <
            sampson_cost(refined.pose, pairs, K)) {
          refined.pose = fresh;
        }
      } catch (const Error&) {
        // keep the current pose
      }
    }
    refined = refine_pose(refined.pose, pairs, K);
  }
  return refined.pose;
}

}  // namespace mstereo
