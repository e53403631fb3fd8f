#include "mstereo/triangulation.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mstereo/parallel.hpp"

namespace mstereo {

TriangulationLayer make_triangulation_layer(const FlowField& flow,
                                            const CameraIntrinsics& K,
                                            const RelativePose& pose) {
  const int w = flow.flow.width(), h = flow.flow.height();
  const Eigen::Matrix3d M =
      K.matrix() * pose.rotation() * K.inverse_matrix();  // rotated-ray map
  const Eigen::Vector3d Kt = K.matrix() * pose.t;

  TriangulationLayer tri;
  tri.channels = ImageD(w, h, 8);
  tri.valid = flow.valid;
  tri.scale_known = pose.scale_known;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double* px = tri.channels.pixel(x, y);
      px[0] = x + flow.flow.at(x, y, 0);
      px[1] = y + flow.flow.at(x, y, 1);
      const Eigen::Vector3d ray = M * Eigen::Vector3d(x, y, 1.0);
      px[2] = ray.x();
      px[3] = ray.y();
      px[4] = ray.z();
      px[5] = Kt.x();
      px[6] = Kt.y();
      px[7] = Kt.z();
    }
  }
  return tri;
}

PixelDepth triangulate_encoded(const double* tri_pixel) {
  const Eigen::Vector2d p(tri_pixel[0], tri_pixel[1]);
  const Eigen::Vector3d a(tri_pixel[2], tri_pixel[3], tri_pixel[4]);
  const Eigen::Vector3d b(tri_pixel[5], tri_pixel[6], tri_pixel[7]);

  PixelDepth out;
  // The match point is independent of depth exactly when the rotated ray is
  // parallel to the translation column (the pixel sits on the epipole).
  const double cross_ab = a.cross(b).norm();
  if (cross_ab <= 1e-12 * a.norm() * b.norm()) {
    out.status = TriStatus::kDegenerateRay;
    return out;
  }

  // Cross-multiplied projective constraint: c * d = r, solved in least
  // squares over the two image coordinates.
  const double c1 = a.x() - p.x() * a.z();
  const double c2 = a.y() - p.y() * a.z();
  const double r1 = p.x() * b.z() - b.x();
  const double r2 = p.y() * b.z() - b.y();
  const double cc = c1 * c1 + c2 * c2;
  const double scale = a.norm() * (1.0 + p.norm());
  if (cc <= 1e-24 * scale * scale) {
    out.status = TriStatus::kDegenerateRay;  // zero-parallax direction
    return out;
  }
  const double d = (c1 * r1 + c2 * r2) / cc;
  if (!(d >= 0.0)) {
    out.status = TriStatus::kNegativeDepth;
    out.depth = d;
    return out;
  }

  const Eigen::Vector3d proj = a * d + b;
  Eigen::Vector2d reproj;
  if (!try_dehomogenize(proj, &reproj)) {
    out.status = TriStatus::kDegenerateRay;
    return out;
  }
  out.depth = d;
  out.residual = (p - reproj).norm();
  return out;
}

PixelDepth triangulate_pixel(const Eigen::Vector2d& x, const Eigen::Vector2d& w,
                             const CameraIntrinsics& K, const RelativePose& pose) {
  const Eigen::Matrix3d M = K.matrix() * pose.rotation() * K.inverse_matrix();
  const Eigen::Vector3d ray = M * Eigen::Vector3d(x.x(), x.y(), 1.0);
  const Eigen::Vector3d Kt = K.matrix() * pose.t;
  const double enc[8] = {x.x() + w.x(), x.y() + w.y(), ray.x(), ray.y(),
                         ray.z(),       Kt.x(),        Kt.y(),  Kt.z()};
  return triangulate_encoded(enc);
}

double encoded_confidence(const double* tri_pixel, double depth,
                          double flow_noise_px) {
  const Eigen::Vector3d a(tri_pixel[2], tri_pixel[3], tri_pixel[4]);
  const Eigen::Vector3d b(tri_pixel[5], tri_pixel[6], tri_pixel[7]);
  // Derivative of the projected pixel w.r.t. inverse depth u at u = 1/d.
  const double u = depth > 1e-12 ? 1.0 / depth : 0.0;
  const double den = a.z() + b.z() * u;
  if (std::abs(den) < 1e-12) return 0.0;
  const double dx = (b.x() * a.z() - a.x() * b.z()) / (den * den);
  const double dy = (b.y() * a.z() - a.y() * b.z()) / (den * den);
  const double rho = std::sqrt(dx * dx + dy * dy);
  const double denom = rho + flow_noise_px;
  if (denom <= 0.0) return 0.0;
  return std::clamp(rho / denom, 0.0, 1.0);
}

double epipole_confidence(const Eigen::Vector2d& x, const CameraIntrinsics& K,
                          const RelativePose& pose, double depth,
                          double flow_noise_px) {
  const Eigen::Matrix3d M = K.matrix() * pose.rotation() * K.inverse_matrix();
  const Eigen::Vector3d ray = M * Eigen::Vector3d(x.x(), x.y(), 1.0);
  const Eigen::Vector3d Kt = K.matrix() * pose.t;
  const double enc[8] = {0.0,     0.0,    ray.x(), ray.y(),
                         ray.z(), Kt.x(), Kt.y(),  Kt.z()};
  return encoded_confidence(enc, depth, flow_noise_px);
}

DepthMap DepthMap::constant(int width, int height, double value) {
  DepthMap d;
  d.depth = ImageD(width, height, 1, value);
  d.valid = Mask(width, height, 1, 1);
  return d;
}

int diffuse_log_depth(const ImageF& source_image, const Mask& fixed,
                      const ImageD& confidence, ImageD* depth, int threads) {
  const int w = depth->width(), h = depth->height();

  // Log-depth state; holes start from the confidence-weighted mean so
  // regions unreachable from any fixed pixel still end up positive.
  ImageD u(w, h, 1);
  double mean_num = 0.0, mean_den = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (fixed.at(x, y)) {
        const double lg = std::log(depth->at(x, y));
        u.at(x, y) = lg;
        const double c = confidence.empty() ? 1.0 : confidence.at(x, y);
        mean_num += c * lg;
        mean_den += c;
      }
    }
  }
  const double mean = mean_den > 0.0 ? mean_num / mean_den : 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (!fixed.at(x, y)) u.at(x, y) = mean;

  // Edge weights from the source image gradient; a strong edge cuts the
  // diffusion between its two sides.
  const ImageF gray = rgb_to_gray(source_image);
  constexpr double kEdgeScale = 0.03;
  const auto edge_weight = [&](int x0, int y0, int x1, int y1) {
    const double g = std::abs(static_cast<double>(gray.at(x0, y0)) - gray.at(x1, y1));
    return std::exp(-g / kEdgeScale);
  };

  constexpr int kMaxIterations = 200;
  constexpr double kTolerance = 1e-6;
  ImageD next = u;
  int iterations = 0;
  for (int it = 0; it < kMaxIterations; ++it) {
    iterations = it + 1;
    std::vector<double> max_update(h, 0.0);
    parallel_for(0, h, threads, [&](int y) {
      for (int x = 0; x < w; ++x) {
        if (fixed.at(x, y)) continue;
        double num = 0.0, den = 0.0;
        const auto pull = [&](int nx, int ny) {
          double wgt = edge_weight(x, y, nx, ny);
          if (fixed.at(nx, ny) && !confidence.empty()) {
            wgt *= std::max(confidence.at(nx, ny), 1e-3);
          }
          num += wgt * u.at(nx, ny);
          den += wgt;
        };
        if (x > 0) pull(x - 1, y);
        if (x + 1 < w) pull(x + 1, y);
        if (y > 0) pull(x, y - 1);
        if (y + 1 < h) pull(x, y + 1);
        const double value = den > 0.0 ? num / den : u.at(x, y);
        next.at(x, y) = value;
        max_update[y] = std::max(max_update[y], std::abs(value - u.at(x, y)));
      }
    });
    std::swap(u, next);
    double delta = 0.0;
    for (double m : max_update) delta = std::max(delta, m);
    if (delta < kTolerance) break;
  }

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (!fixed.at(x, y)) depth->at(x, y) = std::exp(u.at(x, y));
  return iterations;
}

DepthMap depth_from_pair(const TriangulationLayer& tri, const ImageF& source_image,
                         double flow_noise_px, int threads) {
  const int w = tri.channels.width(), h = tri.channels.height();
  DepthMap out;
  out.depth = ImageD(w, h, 1, 0.0);
  out.valid = Mask(w, h, 1, 0);
  out.confidence = ImageD(w, h, 1, 0.0);
  out.filled = Mask(w, h, 1, 0);
  out.scale_known = tri.scale_known;

  std::vector<int> row_ok(h, 0);
  parallel_for(0, h, threads, [&](int y) {
    for (int x = 0; x < w; ++x) {
      if (!tri.valid.at(x, y)) continue;
      const PixelDepth pd = triangulate_encoded(tri.channels.pixel(x, y));
      if (pd.status != TriStatus::kOk || pd.depth <= 1e-12) continue;
      const double conf =
          encoded_confidence(tri.channels.pixel(x, y), pd.depth, flow_noise_px);
      ++row_ok[y];
      if (conf < kFillConfidence) continue;  // noise-prone: refill below
      out.depth.at(x, y) = pd.depth;
      out.confidence.at(x, y) = conf;
      out.valid.at(x, y) = 1;
    }
  });

  long triangulated = 0;
  for (int y = 0; y < h; ++y) triangulated += row_ok[y];
  if (triangulated < static_cast<long>(w) * h / 100) {
    throw AllDegenerate("only " + std::to_string(triangulated) + " of " +
                        std::to_string(static_cast<long>(w) * h) +
                        " pixels triangulate");
  }

  Mask anchor = out.valid;
  out.fill_iterations =
      diffuse_log_depth(source_image, anchor, out.confidence, &out.depth, threads);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!anchor.at(x, y)) {
        out.filled.at(x, y) = 1;
        out.valid.at(x, y) = 1;
      }
    }
  }
  return out;
}

}  // namespace mstereo
