#include "mstereo/synth.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mstereo/io.hpp"
#include "mstereo/parallel.hpp"
#include "mstereo/random.hpp"

namespace mstereo {

RelativePose relative_pose(const CameraFrame& source, const CameraFrame& target) {
  RelativePose pose;
  const Eigen::Matrix3d Rs = source.rotation();
  const Eigen::Matrix3d Rt = target.rotation();
  const Eigen::Matrix3d R = Rt * Rs.transpose();
  pose.r = canonical_rotation_vector(rotation_vector(R));
  pose.t = target.t - R * source.t;
  pose.scale_known = true;
  return pose;
}

namespace {

void validate_spec(const SceneSpec& spec) {
  if (spec.primitives < 1) throw InvalidSpec("scene needs at least one primitive");
  if (spec.depth_min <= 0.0) throw InvalidSpec("depth_min must be positive");
  if (spec.depth_min >= spec.depth_max)
    throw InvalidSpec("depth_min must be smaller than depth_max");
  if (spec.num_targets < 1 || spec.num_targets > 6)
    throw InvalidSpec("num_targets must be between 1 and 6");
  if (spec.width < 32 || spec.height < 32)
    throw InvalidSpec("image size must be at least 32x32");
  if (spec.texture_octaves < 1) throw InvalidSpec("texture_octaves must be >= 1");
  if (spec.texture_detail_px <= 0.5)
    throw InvalidSpec("texture_detail_px must exceed half a pixel");
  if (spec.texture_persistence <= 0.0 || spec.texture_persistence > 1.0)
    throw InvalidSpec("texture_persistence must be in (0, 1]");
  if (spec.motion <= 0.0) throw InvalidSpec("motion must be positive");
}

// Camera orientation looking from `position` toward `at`, world y as the
// image-down hint (world frame equals the source camera frame).
Eigen::Matrix3d look_at(const Eigen::Vector3d& position, const Eigen::Vector3d& at) {
  const Eigen::Vector3d z = (at - position).normalized();
  Eigen::Vector3d x = Eigen::Vector3d(0.0, 1.0, 0.0).cross(z).normalized();
  const Eigen::Vector3d y = z.cross(x).normalized();
  Eigen::Matrix3d R;
  R.row(0) = x;
  R.row(1) = y;
  R.row(2) = z;
  return R;
}

struct Hit {
  double depth = 0.0;
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  double u = 0.0, v = 0.0, w = 0.0;  // texture coordinates, world units
  const Primitive* prim = nullptr;
};

// Intersects the world-space ray origin + s * dir; s equals the camera
// depth because dir has unit z in the camera frame.
bool intersect(const Primitive& p, const Eigen::Vector3d& origin,
               const Eigen::Vector3d& dir, Hit* hit) {
  if (p.kind == Primitive::Kind::kRect) {
    const Eigen::Vector3d n = p.edge_u.cross(p.edge_v);
    const double denom = dir.dot(n);
    if (std::abs(denom) < 1e-12) return false;
    const double s = (p.origin - origin).dot(n) / denom;
    if (s <= 1e-9) return false;
    const Eigen::Vector3d q = origin + s * dir - p.origin;
    const double u = q.dot(p.edge_u) / p.edge_u.squaredNorm();
    const double v = q.dot(p.edge_v) / p.edge_v.squaredNorm();
    if (u < 0.0 || u > 1.0 || v < 0.0 || v > 1.0) return false;
    hit->depth = s;
    hit->normal = n.normalized();
    hit->u = u * p.edge_u.norm();
    hit->v = v * p.edge_v.norm();
    hit->prim = &p;
    return true;
  }
  // sphere
  const Eigen::Vector3d oc = origin - p.center;
  const double a = dir.squaredNorm();
  const double b = 2.0 * oc.dot(dir);
  const double c = oc.squaredNorm() - p.radius * p.radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return false;
  const double sq = std::sqrt(disc);
  double s = (-b - sq) / (2.0 * a);
  if (s <= 1e-9) s = (-b + sq) / (2.0 * a);
  if (s <= 1e-9) return false;
  const Eigen::Vector3d q = origin + s * dir;
  const Eigen::Vector3d n = (q - p.center) / p.radius;
  hit->depth = s;
  hit->normal = n;
  // metric surface point; sampled with seam-free volume noise
  hit->u = n.x() * p.radius;
  hit->v = n.y() * p.radius;
  hit->w = n.z() * p.radius;
  hit->prim = &p;
  return true;
}

bool trace(const Scene& scene, const Eigen::Vector3d& origin,
           const Eigen::Vector3d& dir, Hit* best) {
  bool any = false;
  Hit h;
  for (const Primitive& p : scene.primitives) {
    if (!intersect(p, origin, dir, &h)) continue;
    if (!any || h.depth < best->depth) {
      *best = h;
      any = true;
    }
  }
  return any;
}

const Eigen::Vector3d kLightDir = Eigen::Vector3d(0.35, -0.5, -0.79).normalized();

Eigen::Vector3d shade(const Scene& scene, const Hit& hit) {
  const Primitive& p = *hit.prim;
  double albedo = 1.0;
  if (scene.spec.textured) {
    const double n =
        p.kind == Primitive::Kind::kSphere
            ? fractal_noise3(p.texture_key, hit.u / p.texture_scale,
                             hit.v / p.texture_scale, hit.w / p.texture_scale,
                             scene.spec.texture_octaves,
                             scene.spec.texture_persistence)
            : fractal_noise(p.texture_key, hit.u / p.texture_scale,
                            hit.v / p.texture_scale, scene.spec.texture_octaves,
                            scene.spec.texture_persistence);
    albedo = 1.0 - p.texture_amp * (1.0 - n);
  }
  const double light = 0.45 + 0.55 * std::abs(hit.normal.dot(kLightDir));
  return p.base_color * (albedo * light * 0.92 + 0.05);
}

}  // namespace

Scene build_scene(const SceneSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  Scene scene;
  scene.spec = spec;
  scene.seed = seed;
  Rng rng(hash_mix(seed, 0x5ce9eULL));

  const double span_x = spec.width / spec.focal;   // frustum width per depth
  const double span_y = spec.height / spec.focal;
  const double mid = 0.5 * (spec.depth_min + spec.depth_max);

  // Backdrop: a large tilted wall behind the scene so every ray hits.
  {
    Primitive wall;
    wall.kind = Primitive::Kind::kRect;
    const double d = spec.depth_max;
    const double ex = 4.0 * d * span_x;
    const double ey = 4.0 * d * span_y;
    const double tilt = rng.uniform(-0.12, 0.12);
    Eigen::Vector3d n(std::sin(tilt), rng.uniform(-0.1, 0.1), -1.0);
    n.normalize();
    Eigen::Vector3d u = Eigen::Vector3d(0.0, 1.0, 0.0).cross(n).normalized() * ex;
    Eigen::Vector3d v = n.cross(u.normalized()).normalized() * ey;
    wall.origin = Eigen::Vector3d(0.0, 0.0, d) - 0.5 * u - 0.5 * v;
    wall.edge_u = u;
    wall.edge_v = v;
    wall.base_color =
        Eigen::Vector3d(rng.uniform(0.55, 0.95), rng.uniform(0.55, 0.95),
                        rng.uniform(0.55, 0.95));
    wall.texture_scale = spec.texture_detail_px * (1 << (spec.texture_octaves - 1)) *
                         d / spec.focal * rng.uniform(0.8, 1.25);
    wall.texture_amp = rng.uniform(0.55, 0.8);
    wall.texture_key = rng.next();
    scene.primitives.push_back(wall);
  }

  for (int i = 0; i < spec.primitives; ++i) {
    const double depth = rng.uniform(spec.depth_min * 1.1, spec.depth_max * 0.8);
    const double px = rng.uniform(0.12, 0.88) * spec.width;
    const double py = rng.uniform(0.12, 0.88) * spec.height;
    const Eigen::Vector3d anchor =
        depth * Eigen::Vector3d((px - 0.5 * spec.width) / spec.focal,
                                (py - 0.5 * spec.height) / spec.focal, 1.0);
    Primitive prim;
    prim.base_color = Eigen::Vector3d(rng.uniform(0.35, 0.95), rng.uniform(0.35, 0.95),
                                      rng.uniform(0.35, 0.95));
    prim.texture_amp = rng.uniform(0.5, 0.85);
    prim.texture_key = rng.next();
    if (i % 2 == 0) {
      prim.kind = Primitive::Kind::kRect;
      const double ex = rng.uniform(0.18, 0.42) * depth * span_x;
      const double ey = rng.uniform(0.18, 0.42) * depth * span_y;
      // toward the camera with a bounded random tilt
      Eigen::Vector3d n(rng.uniform(-0.55, 0.55), rng.uniform(-0.55, 0.55), -1.0);
      n.normalize();
      Eigen::Vector3d u = Eigen::Vector3d(0.0, 1.0, 0.0).cross(n).normalized() * ex;
      Eigen::Vector3d v = n.cross(u.normalized()).normalized() * ey;
      const double spin = rng.uniform(0.0, 3.14159265358979323846);
      const Eigen::Vector3d u2 = u * std::cos(spin) + v * std::sin(spin) * (ex / ey);
      const Eigen::Vector3d v2 = v * std::cos(spin) - u * std::sin(spin) * (ey / ex);
      prim.origin = anchor - 0.5 * u2 - 0.5 * v2;
      prim.edge_u = u2;
      prim.edge_v = v2;
      prim.texture_scale = spec.texture_detail_px * (1 << (spec.texture_octaves - 1)) *
                           depth / spec.focal * rng.uniform(0.8, 1.25);
    } else {
      prim.kind = Primitive::Kind::kSphere;
      prim.center = anchor;
      prim.radius = rng.uniform(0.10, 0.22) * depth * std::min(span_x, span_y);
      prim.texture_scale = spec.texture_detail_px * (1 << (spec.texture_octaves - 1)) *
                           depth / spec.focal * rng.uniform(0.8, 1.25);
    }
    scene.primitives.push_back(prim);
  }

  // Cameras. The source sits at the world origin looking down +z; targets
  // swing around the scene center on alternating sides with growing
  // baselines, re-aimed at the center (translation plus rotation).
  CameraFrame source;
  source.K = CameraIntrinsics{spec.focal, spec.focal, 0.5 * spec.width,
                              0.5 * spec.height, spec.width, spec.height};
  scene.frames.push_back(source);

  const Eigen::Vector3d center(0.0, 0.0, mid);
  for (int k = 0; k < spec.num_targets; ++k) {
    CameraFrame frame;
    frame.K = source.K;
    const int ring = k / 2 + 1;
    const double side = (k % 2 == 0) ? 1.0 : -1.0;
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    switch (spec.preset) {
      case MotionPreset::kLateral: {
        position = Eigen::Vector3d(spec.motion * ring * side, 0.0, 0.0);
        break;
      }
      case MotionPreset::kForward: {
        position = Eigen::Vector3d(0.0, 0.0, spec.motion * ring * 0.6);
        break;
      }
      case MotionPreset::kArc: {
        const double angle =
            side * (spec.motion / mid) * (0.8 + 0.4 * ring + rng.uniform(-0.1, 0.1));
        const double lift = rng.uniform(-0.25, 0.25) * spec.motion;
        position = center + Eigen::Vector3d(std::sin(angle) * mid, lift,
                                            -std::cos(angle) * mid);
        const Eigen::Vector3d aim =
            center + Eigen::Vector3d(rng.uniform(-0.02, 0.02) * mid,
                                     rng.uniform(-0.02, 0.02) * mid, 0.0);
        R = look_at(position, aim);
        break;
      }
    }
    frame.r = canonical_rotation_vector(rotation_vector(R));
    frame.t = -(R * position);
    scene.frames.push_back(frame);
  }
  return scene;
}

ImageD render_depth(const Scene& scene, int frame, const CameraIntrinsics& K,
                    int threads) {
  const CameraFrame& cam = scene.frames.at(frame);
  const Eigen::Matrix3d Rt = cam.rotation().transpose();
  const Eigen::Vector3d origin = cam.position();
  const Eigen::Matrix3d Ki = K.inverse_matrix();
  ImageD depth(K.width, K.height, 1, 0.0);
  parallel_for(0, K.height, threads, [&](int y) {
    for (int x = 0; x < K.width; ++x) {
      const Eigen::Vector3d dir = Rt * (Ki * Eigen::Vector3d(x, y, 1.0));
      Hit hit;
      depth.at(x, y) = trace(scene, origin, dir, &hit)
                           ? hit.depth
                           : scene.spec.depth_max * 8.0;
    }
  });
  return depth;
}

ImageF render_image(const Scene& scene, int frame, const CameraIntrinsics& K,
                    int threads) {
  const CameraFrame& cam = scene.frames.at(frame);
  const Eigen::Matrix3d Rt = cam.rotation().transpose();
  const Eigen::Vector3d origin = cam.position();
  const Eigen::Matrix3d Ki = K.inverse_matrix();
  ImageF image(K.width, K.height, 3);
  constexpr double kOffsets[2] = {-0.25, 0.25};
  parallel_for(0, K.height, threads, [&](int y) {
    for (int x = 0; x < K.width; ++x) {
      Eigen::Vector3d color = Eigen::Vector3d::Zero();
      for (double oy : kOffsets) {
        for (double ox : kOffsets) {
          const Eigen::Vector3d dir =
              Rt * (Ki * Eigen::Vector3d(x + ox, y + oy, 1.0));
          Hit hit;
          if (trace(scene, origin, dir, &hit)) {
            color += shade(scene, hit);
          } else {
            color += Eigen::Vector3d(0.04, 0.04, 0.05);  // void
          }
        }
      }
      color *= 0.25;
      for (int c = 0; c < 3; ++c) {
        image.at(x, y, c) = static_cast<float>(std::clamp(color[c], 0.0, 1.0));
      }
    }
  });
  return image;
}

std::pair<FlowField, Mask> ground_truth_flow(const ImageD& depth_source,
                                             const RelativePose& pose,
                                             const CameraIntrinsics& K_source,
                                             const CameraIntrinsics& K_target,
                                             const ImageD& depth_target) {
  const int w = depth_source.width(), h = depth_source.height();
  FlowField flow;
  flow.level = 0;
  flow.flow = ImageD(w, h, 2, 0.0);
  flow.valid = Mask(w, h, 1, 0);
  Mask occluded(w, h, 1, 1);

  const Eigen::Matrix3d R = pose.rotation();
  const Eigen::Matrix3d Ki = K_source.inverse_matrix();
  const Eigen::Matrix3d Kt = K_target.matrix();

  // Depth edges and creases break the constant-surface assumption inside a
  // pixel footprint, so pixels touching one are flagged along with truly
  // hidden surface: a mask that guarantees photo-consistency has to cover
  // both. Creases (intersecting surfaces, silhouette rims) show up as
  // second-difference spikes with continuous depth.
  const auto surface_break = [](const ImageD& depth, int x, int y) {
    const int w = depth.width(), h = depth.height();
    const double d = depth.at(x, y);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = std::clamp(x + dx, 0, w - 1);
        const int ny = std::clamp(y + dy, 0, h - 1);
        if (std::abs(depth.at(nx, ny) - d) > 0.01 * d) return true;
      }
    }
    const int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
    const int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
    const double kink_x = depth.at(xl, y) + depth.at(xr, y) - 2.0 * d;
    const double kink_y = depth.at(x, yu) + depth.at(x, yd) - 2.0 * d;
    return std::abs(kink_x) > 0.002 * d || std::abs(kink_y) > 0.002 * d;
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = depth_source.at(x, y);
      if (!(d > 0.0)) continue;
      const Eigen::Vector3d X = d * (Ki * Eigen::Vector3d(x, y, 1.0));
      const Eigen::Vector3d Xt = R * X + pose.t;
      if (Xt.z() <= 1e-9) continue;  // behind the target camera
      const Eigen::Vector3d p = Kt * Xt;
      const Eigen::Vector2d pt(p.x() / p.z(), p.y() / p.z());
      flow.flow.at(x, y, 0) = pt.x() - x;
      flow.flow.at(x, y, 1) = pt.y() - y;
      flow.valid.at(x, y) = 1;
      if (pt.x() < 0.0 || pt.x() > K_target.width - 1.0 || pt.y() < 0.0 ||
          pt.y() > K_target.height - 1.0) {
        continue;  // off-image: flow defined but occluded
      }
      const double zbuf = bilinear(depth_target, pt.x(), pt.y());
      if (Xt.z() > 1.01 * zbuf) continue;  // hidden behind the target surface
      if (surface_break(depth_source, x, y)) continue;
      // Landing in the blend zone of a broken target surface counts too:
      // the bilinear support plus the anti-aliasing footprint spans the
      // four pixels around the landing point.
      const int tx = static_cast<int>(pt.x());
      const int ty = static_cast<int>(pt.y());
      bool target_break = false;
      for (int dy = 0; dy <= 1 && !target_break; ++dy) {
        for (int dx = 0; dx <= 1 && !target_break; ++dx) {
          const int nx = std::min(tx + dx, depth_target.width() - 1);
          const int ny = std::min(ty + dy, depth_target.height() - 1);
          target_break = surface_break(depth_target, nx, ny);
        }
      }
      if (target_break) continue;
      occluded.at(x, y) = 0;
    }
  }
  return {std::move(flow), std::move(occluded)};
}

DepthMap SceneSample::source_depth_map() const {
  DepthMap d;
  d.depth = depths.at(0);
  d.valid = Mask(d.depth.width(), d.depth.height(), 1, 1);
  d.scale_known = true;
  return d;
}

SceneSample generate_scene(const SceneSpec& spec, std::uint64_t seed,
                           int threads) {
  const Scene scene = build_scene(spec, seed);
  SceneSample sample;
  sample.seed = seed;
  sample.spec = spec;
  sample.frames = scene.frames;
  const int n = static_cast<int>(scene.frames.size());
  sample.images.reserve(n);
  sample.depths.reserve(n);
  for (int i = 0; i < n; ++i) {
    sample.images.push_back(render_image(scene, i, scene.frames[i].K, threads));
    sample.depths.push_back(render_depth(scene, i, scene.frames[i].K, threads));
  }
  for (int i = 1; i < n; ++i) {
    auto [flow, occ] = ground_truth_flow(
        sample.depths[0], relative_pose(scene.frames[0], scene.frames[i]),
        scene.frames[0].K, scene.frames[i].K, sample.depths[i]);
    sample.flows.push_back(std::move(flow));
    sample.occlusions.push_back(std::move(occ));
  }
  return sample;
}

namespace {

std::string frame_stem(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%02d", index);
  return buf;
}

std::string pair_stem(int target) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "pair_00_%02d", target);
  return buf;
}

}  // namespace

std::filesystem::path export_sample(const SceneSample& sample,
                                    const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory.string() + ": " + ec.message());

  const int frames = static_cast<int>(sample.frames.size());
  for (int i = 0; i < frames; ++i) {
    const std::string stem = frame_stem(i);
    write_png(directory / (stem + ".png"), sample.images[i]);
    write_pfm(directory / (stem + ".pfm"), sample.depths[i]);
    CameraFile cam;
    cam.intrinsics = sample.frames[i].K;
    cam.pose.r = sample.frames[i].r;
    cam.pose.t = sample.frames[i].t;
    cam.pose.scale_known = true;
    write_camera_file(directory / (stem + ".cam"), cam);
  }
  for (int i = 0; i < sample.num_targets(); ++i) {
    const std::string stem = pair_stem(i + 1);
    write_flo2(directory / (stem + ".flo2"), sample.flows[i].flow);
    Mask valid = sample.flows[i].valid;
    for (std::size_t k = 0; k < valid.size(); ++k) {
      valid.data()[k] = valid.data()[k] ? 255 : 0;
    }
    write_pgm(directory / (stem + ".valid.pgm"), valid);
    Mask occ = sample.occlusions[i];
    for (std::size_t k = 0; k < occ.size(); ++k) {
      occ.data()[k] = occ.data()[k] ? 255 : 0;
    }
    write_pgm(directory / (stem + ".occ.pgm"), occ);
  }

  const std::filesystem::path manifest = directory / "manifest.txt";
  auto out = std::ofstream(manifest);
  if (!out) throw IoError("cannot open " + manifest.string() + " for writing");
  out << "mstereo_manifest 1\n";
  out << "seed " << sample.seed << "\n";
  out << "frames " << frames << "\n";
  for (int i = 0; i < frames; ++i) {
    const std::string stem = frame_stem(i);
    out << "frame " << i << " " << stem << ".png " << stem << ".pfm " << stem
        << ".cam\n";
  }
  out << "source 0\n";
  for (int i = 0; i < sample.num_targets(); ++i) {
    const std::string stem = pair_stem(i + 1);
    out << "pair 0 " << (i + 1) << " " << stem << ".flo2 " << stem
        << ".valid.pgm " << stem << ".occ.pgm\n";
  }
  if (!out) throw IoError("failed writing " + manifest.string());
  return manifest;
}

SceneSample import_sample(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open " + manifest_path.string());
  const std::filesystem::path dir = manifest_path.parent_path();

  SceneSample sample;
  int frames = -1;
  std::string line;
  std::getline(in, line);
  if (line != "mstereo_manifest 1") {
    throw IoError(manifest_path.string() + " is not a manifest");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "seed") {
      ls >> sample.seed;
    } else if (key == "frames") {
      ls >> frames;
    } else if (key == "frame") {
      int idx;
      std::string image, depth, cam;
      ls >> idx >> image >> depth >> cam;
      if (!ls) throw IoError(manifest_path.string() + ": bad frame line");
      sample.images.push_back(read_png(dir / image));
      sample.depths.push_back(read_pfm(dir / depth));
      const CameraFile cf = read_camera_file(dir / cam);
      CameraFrame frame;
      frame.K = cf.intrinsics;
      frame.r = cf.pose.r;
      frame.t = cf.pose.t;
      sample.frames.push_back(frame);
    } else if (key == "source") {
      int idx;
      ls >> idx;
      if (idx != 0) throw IoError("manifest source frame must be 0");
    } else if (key == "pair") {
      int s, t;
      std::string flow_name, valid_name, occ_name;
      ls >> s >> t >> flow_name >> valid_name >> occ_name;
      if (!ls) throw IoError(manifest_path.string() + ": bad pair line");
      FlowField flow;
      flow.level = 0;
      flow.flow = read_flo2(dir / flow_name);
      flow.valid = read_pgm(dir / valid_name);
      Mask occ = read_pgm(dir / occ_name);
      sample.flows.push_back(std::move(flow));
      sample.occlusions.push_back(std::move(occ));
    } else {
      throw IoError(manifest_path.string() + ": unknown manifest key '" + key + "'");
    }
  }
  if (frames != static_cast<int>(sample.frames.size()) || frames < 2) {
    throw IoError(manifest_path.string() + ": frame count mismatch");
  }
  if (!sample.depths.empty()) {
    sample.spec.width = sample.depths[0].width();
    sample.spec.height = sample.depths[0].height();
    sample.spec.num_targets = frames - 1;
  }
  return sample;
}

}  // namespace mstereo
