#include "mstereo/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mstereo/parallel.hpp"

namespace mstereo {

DepthCode encode_pair(const TriangulationLayer& tri, double flow_noise_px,
                      int threads) {
  const int w = tri.channels.width(), h = tri.channels.height();
  DepthCode out;
  out.code = ImageD(w, h, 3, 0.0);
  out.scale_known = tri.scale_known;
  parallel_for(0, h, threads, [&](int y) {
    for (int x = 0; x < w; ++x) {
      if (!tri.valid.at(x, y)) continue;
      const double* enc = tri.channels.pixel(x, y);
      const PixelDepth pd = triangulate_encoded(enc);
      if (pd.status != TriStatus::kOk || pd.depth <= 1e-12) continue;
      out.code.at(x, y, DepthCode::kInverseDepth) = 1.0 / pd.depth;
      out.code.at(x, y, DepthCode::kConfidence) =
          encoded_confidence(enc, pd.depth, flow_noise_px);
      out.code.at(x, y, DepthCode::kResidual) = pd.residual;
    }
  });
  return out;
}

namespace {

// Weighted median: smallest value whose cumulative weight reaches half of
// the total.
double weighted_median(std::vector<std::pair<double, double>>* samples) {
  std::sort(samples->begin(), samples->end());
  double total = 0.0;
  for (const auto& s : *samples) total += s.second;
  double acc = 0.0;
  for (const auto& s : *samples) {
    acc += s.second;
    if (acc >= 0.5 * total) return s.first;
  }
  return samples->back().first;
}

}  // namespace

std::vector<DepthCode> align_scales(std::vector<DepthCode> codes) {
  if (codes.empty()) throw NoOverlap("no codes to align");
  const DepthCode& ref = codes[0];
  const int w = ref.code.width(), h = ref.code.height();
  for (std::size_t i = 1; i < codes.size(); ++i) {
    DepthCode& code = codes[i];
    if (!code.code.same_shape(ref.code)) {
      throw ShapeMismatch("depth codes have different resolutions");
    }
    std::vector<std::pair<double, double>> ratios;  // (ratio, weight)
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double c_ref = ref.code.at(x, y, DepthCode::kConfidence);
        const double c_i = code.code.at(x, y, DepthCode::kConfidence);
        if (c_ref <= 0.5 || c_i <= 0.5) continue;
        const double inv_i = code.code.at(x, y, DepthCode::kInverseDepth);
        if (inv_i <= 0.0) continue;
        const double ratio = ref.code.at(x, y, DepthCode::kInverseDepth) / inv_i;
        ratios.emplace_back(ratio, c_ref * c_i);
      }
    }
    if (ratios.size() < 100) {
      throw NoOverlap("pair " + std::to_string(i) + " shares only " +
                      std::to_string(ratios.size()) +
                      " confident pixels with the reference");
    }
    const double factor = weighted_median(&ratios);
    code.scale_factor = factor;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        code.code.at(x, y, DepthCode::kInverseDepth) *= factor;
  }
  return codes;
}

DepthCode fuse_codes(const std::vector<DepthCode>& codes, bool exact_mean) {
  if (codes.empty()) throw NoOverlap("no codes to fuse");
  if (codes.size() == 1) return codes[0];
  const int w = codes[0].code.width(), h = codes[0].code.height();
  for (const auto& c : codes) {
    if (!c.code.same_shape(codes[0].code)) {
      throw ShapeMismatch("depth codes have different resolutions");
    }
  }

  DepthCode out;
  out.code = ImageD(w, h, 3, 0.0);
  out.scale_known = codes[0].scale_known;
  const double inv_n = 1.0 / static_cast<double>(codes.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (exact_mean) {
        for (int c = 0; c < 3; ++c) {
          double sum = 0.0;
          for (const auto& code : codes) sum += code.code.at(x, y, c);
          out.code.at(x, y, c) = sum * inv_n;
        }
        continue;
      }
      double wsum = 0.0, inv = 0.0, conf = 0.0, res = 0.0;
      for (const auto& code : codes) {
        const double cw = code.code.at(x, y, DepthCode::kConfidence);
        conf += cw;
        wsum += cw;
        inv += cw * code.code.at(x, y, DepthCode::kInverseDepth);
        res += cw * code.code.at(x, y, DepthCode::kResidual);
      }
      if (wsum > 0.0) {
        out.code.at(x, y, DepthCode::kInverseDepth) = inv / wsum;
        out.code.at(x, y, DepthCode::kResidual) = res / wsum;
      }
      out.code.at(x, y, DepthCode::kConfidence) = conf * inv_n;
    }
  }
  return out;
}

DepthMap fused_depth(const DepthCode& code, const ImageF& source_image,
                     int threads) {
  const int w = code.code.width(), h = code.code.height();
  DepthMap out;
  out.depth = ImageD(w, h, 1, 0.0);
  out.valid = Mask(w, h, 1, 0);
  out.confidence = ImageD(w, h, 1, 0.0);
  out.filled = Mask(w, h, 1, 0);
  out.scale_known = code.scale_known;

  long usable = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double conf = code.code.at(x, y, DepthCode::kConfidence);
      const double inv = code.code.at(x, y, DepthCode::kInverseDepth);
      if (conf > 0.0 && inv > 0.0) {
        out.depth.at(x, y) = 1.0 / inv;
        out.confidence.at(x, y) = conf;
        out.valid.at(x, y) = 1;
        ++usable;
      }
    }
  }
  if (usable < static_cast<long>(w) * h / 100) {
    throw AllDegenerate("fused code carries confidence on only " +
                        std::to_string(usable) + " pixels");
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
