#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mstereo/io.hpp"
#include "mstereo/random.hpp"
#include "mstereo/metrics.hpp"
#include "mstereo/pipeline.hpp"
#include "mstereo/synth.hpp"

namespace fs = std::filesystem;
using namespace mstereo;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitEstimation = 4;
constexpr int kExitMissing = 5;

struct GenerateConfig {
  int scenes = 1;
  std::uint64_t seed = 1;
  SceneSpec spec;
};

GenerateConfig parse_generate_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  GenerateConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key, value;
    ls >> key >> value;
    if (key.empty()) continue;
    if (value.empty()) {
      throw InvalidSpec("config line " + std::to_string(lineno) + ": key '" +
                        key + "' has no value");
    }
    try {
      if (key == "scenes") cfg.scenes = std::stoi(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "width") cfg.spec.width = std::stoi(value);
      else if (key == "height") cfg.spec.height = std::stoi(value);
      else if (key == "focal") cfg.spec.focal = parse_double(value);
      else if (key == "targets") cfg.spec.num_targets = std::stoi(value);
      else if (key == "primitives") cfg.spec.primitives = std::stoi(value);
      else if (key == "depth_min") cfg.spec.depth_min = parse_double(value);
      else if (key == "depth_max") cfg.spec.depth_max = parse_double(value);
      else if (key == "texture_octaves") cfg.spec.texture_octaves = std::stoi(value);
      else if (key == "motion") cfg.spec.motion = parse_double(value);
      else if (key == "textured") cfg.spec.textured = value != "0";
      else if (key == "preset") {
        if (value == "arc") cfg.spec.preset = MotionPreset::kArc;
        else if (value == "lateral") cfg.spec.preset = MotionPreset::kLateral;
        else if (value == "forward") cfg.spec.preset = MotionPreset::kForward;
        else throw InvalidSpec("unknown preset '" + value + "'");
      } else {
        throw InvalidSpec("unknown config key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw InvalidSpec("config key '" + key + "' has a malformed value '" +
                        value + "'");
    }
  }
  if (cfg.scenes < 1) throw InvalidSpec("config key 'scenes' must be >= 1");
  return cfg;
}

int cmd_generate(const fs::path& config_path, const fs::path& out_dir,
                 int threads) {
  GenerateConfig cfg;
  try {
    cfg = parse_generate_config(config_path);
  } catch (const InvalidSpec& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << e.what() << "\n";
    return kExitIo;
  }
  try {
    for (int i = 0; i < cfg.scenes; ++i) {
      const std::uint64_t scene_seed = hash_mix(cfg.seed, static_cast<std::uint64_t>(i));
      const SceneSample sample = generate_scene(cfg.spec, scene_seed, threads);
      char name[32];
      std::snprintf(name, sizeof(name), "scene_%04d", i);
      const fs::path manifest = export_sample(sample, out_dir / name);
      std::cout << "scene " << i << " seed " << scene_seed << " manifest "
                << manifest.string() << "\n";
    }
  } catch (const InvalidSpec& e) {
    std::cerr << "invalid scene spec: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << e.what() << "\n";
    return kExitIo;
  }
  return 0;
}

struct PairReport {
  int target = 0;
  double epe = 0.0;
  double rotation_deg = 0.0;
  double translation_deg = 0.0;
};

struct Report {
  std::vector<PairReport> pairs;
  bool has_depth = false;
  DepthMetrics depth;
};

void write_report(std::ostream& out, const Report& report) {
  out << "mstereo_report 1\n";
  double epe = 0.0, rot = 0.0, trans = 0.0;
  for (const auto& p : report.pairs) {
    out << "pair " << p.target << " epe " << format_double(p.epe)
        << " rotation_deg " << format_double(p.rotation_deg)
        << " translation_deg " << format_double(p.translation_deg) << "\n";
    epe += p.epe;
    rot += p.rotation_deg;
    trans += p.translation_deg;
  }
  if (report.has_depth) {
    out << "depth 0 l1_inv " << format_double(report.depth.l1_inv) << " sc_inv "
        << format_double(report.depth.sc_inv) << " l1_rel "
        << format_double(report.depth.l1_rel) << "\n";
  }
  const double n = report.pairs.empty() ? 1.0 : report.pairs.size();
  out << "aggregate epe " << format_double(epe / n) << " rotation_deg "
      << format_double(rot / n) << " translation_deg " << format_double(trans / n);
  if (report.has_depth) {
    out << " l1_inv " << format_double(report.depth.l1_inv) << " sc_inv "
        << format_double(report.depth.sc_inv) << " l1_rel "
        << format_double(report.depth.l1_rel);
  }
  out << "\n";
}

Mask binarize(const Mask& mask) {
  Mask out = mask;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = out.data()[i] ? 1 : 0;
  return out;
}

// Flow EPE against the manifest ground truth at the estimate's pyramid
// level, over valid unoccluded pixels.
double eval_flow_epe(const ImageD& est_flow, const SceneSample& sample,
                     int pair, int level) {
  FlowField est;
  est.level = level;
  est.flow = est_flow;
  est.valid = Mask(est_flow.width(), est_flow.height(), 1, 1);
  const FlowField gt = subsample_flow_level(sample.flows[pair], level);
  const Mask occ = subsample_mask_level(sample.occlusions[pair], level);
  return flow_epe(est, gt, &occ);
}

DepthMap gt_depth_level(const SceneSample& sample, int level) {
  DepthMap gt;
  gt.depth = subsample_depth_level(sample.depths[0], level);
  gt.valid = Mask(gt.depth.width(), gt.depth.height(), 1, 1);
  gt.scale_known = true;
  return gt;
}

int level_from_sizes(int full, int small_size) {
  int level = 0;
  int w = full;
  while (w > small_size && level < 8) {
    w = (w + 1) / 2;
    ++level;
  }
  return w == small_size ? level : -1;
}

int cmd_estimate(const fs::path& manifest, const fs::path& out_dir,
                 const EstimateOptions& options) {
  SceneSample sample;
  try {
    sample = import_sample(manifest);
  } catch (const IoError& e) {
    std::cerr << e.what() << "\n";
    return kExitMissing;
  }

  EstimateResult result;
  try {
    result = estimate_sample(sample, options);
  } catch (const Error& e) {
    std::cerr << "estimation failed: " << e.what() << "\n";
    return kExitEstimation;
  }

  try {
    fs::create_directories(out_dir);
    Report report;
    for (std::size_t i = 0; i < result.pairs.size(); ++i) {
      const PairEstimate& pair = result.pairs[i];
      char stem[32];
      std::snprintf(stem, sizeof(stem), "flow_%02zu", i + 1);
      write_flo2(out_dir / (std::string(stem) + ".flo2"), pair.flow.flow);
      Mask valid = pair.flow.valid;
      for (std::size_t k = 0; k < valid.size(); ++k)
        valid.data()[k] = valid.data()[k] ? 255 : 0;
      write_pgm(out_dir / (std::string(stem) + ".valid.pgm"), valid);

      CameraFile cam;
      cam.intrinsics = sample.frames[0].K;
      cam.pose = pair.pose;
      std::snprintf(stem, sizeof(stem), "pose_%02zu.cam", i + 1);
      write_camera_file(out_dir / stem, cam);

      PairReport pr;
      pr.target = static_cast<int>(i) + 1;
      pr.epe = eval_flow_epe(pair.flow.flow, sample, static_cast<int>(i), 1);
      const PoseErrors pe =
          pose_errors(pair.pose, sample.pose_to(static_cast<int>(i)));
      pr.rotation_deg = pe.rotation_deg;
      pr.translation_deg = pe.translation_deg;
      report.pairs.push_back(pr);
    }

    write_pfm(out_dir / "depth.pfm", result.depth.depth);
    write_pgm(out_dir / "depth_valid.pgm", [&] {
      Mask m = result.depth.valid;
      for (std::size_t k = 0; k < m.size(); ++k) m.data()[k] = m.data()[k] ? 255 : 0;
      return m;
    }());
    write_pgm(out_dir / "depth_filled.pgm", [&] {
      Mask m = result.depth.filled;
      for (std::size_t k = 0; k < m.size(); ++k) m.data()[k] = m.data()[k] ? 255 : 0;
      return m;
    }());
    write_ply(out_dir / "cloud.ply", result.depth.depth, result.depth.valid,
              result.source_level1, result.K1);

    const DepthMap gt = gt_depth_level(sample, 1);
    const DepthMap scaled = apply_optimal_scale(result.depth, gt);
    report.depth = depth_metrics(scaled, gt);
    report.has_depth = true;

    std::ofstream rep(out_dir / "report.txt");
    write_report(rep, report);
    write_report(std::cout, report);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return kExitIo;
  }
  return 0;
}

int cmd_eval(const fs::path& estimate_dir, const fs::path& manifest) {
  SceneSample sample;
  try {
    sample = import_sample(manifest);
  } catch (const IoError& e) {
    std::cerr << e.what() << "\n";
    return kExitMissing;
  }

  Report report;
  try {
    for (int i = 0; i < sample.num_targets(); ++i) {
      char stem[32];
      std::snprintf(stem, sizeof(stem), "flow_%02d.flo2", i + 1);
      const fs::path flow_path = estimate_dir / stem;
      std::snprintf(stem, sizeof(stem), "pose_%02d.cam", i + 1);
      const fs::path pose_path = estimate_dir / stem;
      if (!fs::exists(flow_path) || !fs::exists(pose_path)) {
        std::cerr << "missing estimate files for pair " << (i + 1) << "\n";
        return kExitMissing;
      }
      const ImageD est_flow = read_flo2(flow_path);
      const int level =
          level_from_sizes(sample.frames[0].K.width, est_flow.width());
      if (level < 0) {
        std::cerr << flow_path << " resolution does not match the manifest\n";
        return kExitMissing;
      }
      PairReport pr;
      pr.target = i + 1;
      pr.epe = eval_flow_epe(est_flow, sample, i, level);
      const CameraFile cam = read_camera_file(pose_path);
      const PoseErrors pe = pose_errors(cam.pose, sample.pose_to(i));
      pr.rotation_deg = pe.rotation_deg;
      pr.translation_deg = pe.translation_deg;
      report.pairs.push_back(pr);
    }

    const fs::path depth_path = estimate_dir / "depth.pfm";
    if (!fs::exists(depth_path)) {
      std::cerr << "missing estimate file " << depth_path << "\n";
      return kExitMissing;
    }
    DepthMap est;
    est.depth = read_pfm(depth_path);
    const fs::path valid_path = estimate_dir / "depth_valid.pgm";
    est.valid = fs::exists(valid_path)
                    ? binarize(read_pgm(valid_path))
                    : Mask(est.depth.width(), est.depth.height(), 1, 1);
    const int level = level_from_sizes(sample.frames[0].K.width, est.depth.width());
    if (level < 0) {
      std::cerr << depth_path << " resolution does not match the manifest\n";
      return kExitMissing;
    }
    const DepthMap gt = gt_depth_level(sample, level);
    const DepthMap scaled = apply_optimal_scale(est, gt);
    report.depth = depth_metrics(scaled, gt);
    report.has_depth = true;
  } catch (const IoError& e) {
    std::cerr << e.what() << "\n";
    return kExitMissing;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return kExitMissing;
  }

  write_report(std::cout, report);
  std::ofstream rep(estimate_dir / "eval_report.txt");
  write_report(rep, report);
  return 0;
}

int cmd_flow(const fs::path& manifest, int target, const fs::path& out_path,
             bool no_epipolar, int threads) {
  SceneSample sample;
  try {
    sample = import_sample(manifest);
  } catch (const IoError& e) {
    std::cerr << e.what() << "\n";
    return kExitMissing;
  }
  if (target < 1 || target > sample.num_targets()) {
    std::cerr << "target " << target << " out of range\n";
    return kExitConfig;
  }
  EstimateOptions options;
  options.pairs = 1;
  options.epipolar = !no_epipolar;
  options.threads = threads;
  // reorder so the requested target is the only pair
  SceneSample single = sample;
  single.frames = {sample.frames[0], sample.frames[target]};
  single.images = {sample.images[0], sample.images[target]};
  single.depths = {sample.depths[0], sample.depths[target]};
  single.flows = {sample.flows[target - 1]};
  single.occlusions = {sample.occlusions[target - 1]};
  try {
    const EstimateResult result = estimate_sample(single, options);
    write_flo2(out_path, result.pairs[0].flow.flow);
    const double epe =
        eval_flow_epe(result.pairs[0].flow.flow, single, 0, 1);
    std::cout << "flow written to " << out_path.string() << " epe "
              << format_double(epe) << "\n";
  } catch (const Error& e) {
    std::cerr << "estimation failed: " << e.what() << "\n";
    return kExitEstimation;
  }
  return 0;
}

int cmd_pose(const fs::path& manifest, int target, bool use_gt_flow,
             int threads) {
  SceneSample sample;
  try {
    sample = import_sample(manifest);
  } catch (const IoError& e) {
    std::cerr << e.what() << "\n";
    return kExitMissing;
  }
  if (target < 1 || target > sample.num_targets()) {
    std::cerr << "target " << target << " out of range\n";
    return kExitConfig;
  }
  try {
    RelativePose pose;
    if (use_gt_flow) {
      pose = estimate_pose_from_flow(sample.flows[target - 1],
                                     sample.frames[0].K);
    } else {
      SceneSample single = sample;
      single.frames = {sample.frames[0], sample.frames[target]};
      single.images = {sample.images[0], sample.images[target]};
      single.depths = {sample.depths[0], sample.depths[target]};
      single.flows = {sample.flows[target - 1]};
      single.occlusions = {sample.occlusions[target - 1]};
      EstimateOptions options;
      options.pairs = 1;
      options.threads = threads;
      pose = estimate_sample(single, options).pairs[0].pose;
    }
    const PoseErrors err = pose_errors(pose, sample.pose_to(target - 1));
    std::cout << "rotation " << format_double(pose.r.x()) << " "
              << format_double(pose.r.y()) << " " << format_double(pose.r.z())
              << "\n";
    std::cout << "translation " << format_double(pose.t.x()) << " "
              << format_double(pose.t.y()) << " " << format_double(pose.t.z())
              << "\n";
    std::cout << "rotation_error_deg " << format_double(err.rotation_deg)
              << "\n";
    std::cout << "translation_error_deg " << format_double(err.translation_deg)
              << "\n";
  } catch (const Error& e) {
    std::cerr << "estimation failed: " << e.what() << "\n";
    return kExitEstimation;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monocular motion-stereo pipeline: synthetic scenes, "
               "epipolar-guided flow, pose estimation, and multiview depth"};
  app.require_subcommand(1);

  std::string root = ".";
  int threads = 1;
  app.add_option("--root", root, "Base directory all paths are relative to");
  app.add_option("--threads", threads, "Worker thread cap")->check(CLI::Range(1, 256));

  auto* gen = app.add_subcommand("generate", "Render synthetic scene samples");
  std::string gen_config, gen_out = "dataset";
  gen->add_option("--config", gen_config, "Flat key-value config file")->required();
  gen->add_option("--out", gen_out, "Output dataset directory");

  auto* est = app.add_subcommand("estimate", "Run the full pipeline on one sample");
  std::string est_manifest, est_out = "estimate";
  EstimateOptions est_options;
  bool no_epipolar = false;
  est->add_option("manifest", est_manifest, "Scene manifest path")->required();
  est->add_option("--out", est_out, "Output directory");
  est->add_option("--pairs", est_options.pairs, "Use only the first k targets");
  est->add_flag("--no-epipolar", no_epipolar,
                "Disable flow regularization and pose-guided search");
  est->add_flag("--gt-pose", est_options.use_gt_pose,
                "Use ground-truth poses instead of estimating");
  est->add_flag("--exact-mean", est_options.exact_mean,
                "Fuse depth codes with a plain unweighted mean");
  est->add_option("--flow-noise", est_options.flow_noise_px,
                  "Expected matching noise in pixels (confidence scale)");

  auto* ev = app.add_subcommand("eval", "Score an estimate directory against a manifest");
  std::string ev_estimate, ev_manifest;
  ev->add_option("--estimate", ev_estimate, "Estimate directory")->required();
  ev->add_option("--manifest", ev_manifest, "Scene manifest path")->required();

  auto* fl = app.add_subcommand("flow", "Debug: estimate flow for one pair");
  std::string fl_manifest, fl_out = "flow.flo2";
  int fl_target = 1;
  bool fl_no_epipolar = false;
  fl->add_option("manifest", fl_manifest, "Scene manifest path")->required();
  fl->add_option("--target", fl_target, "Target frame index (1-based)");
  fl->add_option("--out", fl_out, "Output FLO2 path");
  fl->add_flag("--no-epipolar", fl_no_epipolar, "Disable epipolar guidance");

  auto* po = app.add_subcommand("pose", "Debug: estimate the pose for one pair");
  std::string po_manifest;
  int po_target = 1;
  bool po_gt_flow = false;
  po->add_option("manifest", po_manifest, "Scene manifest path")->required();
  po->add_option("--target", po_target, "Target frame index (1-based)");
  po->add_flag("--gt-flow", po_gt_flow, "Estimate from the ground-truth flow");

  CLI11_PARSE(app, argc, argv);

  const fs::path base(root);
  est_options.epipolar = !no_epipolar;
  est_options.threads = threads;

  if (gen->parsed()) {
    return cmd_generate(base / gen_config, base / gen_out, threads);
  }
  if (est->parsed()) {
    return cmd_estimate(base / est_manifest, base / est_out, est_options);
  }
  if (ev->parsed()) {
    return cmd_eval(base / ev_estimate, base / ev_manifest);
  }
  if (fl->parsed()) {
    return cmd_flow(base / fl_manifest, fl_target, base / fl_out, fl_no_epipolar,
                    threads);
  }
  if (po->parsed()) {
    return cmd_pose(base / po_manifest, po_target, po_gt_flow, threads);
  }
  return 0;
}
