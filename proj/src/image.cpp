#include "mstereo/image.hpp"

namespace mstereo {

ImageF box_downsample(const ImageF& src) {
  const int w = (src.width() + 1) / 2;
  const int h = (src.height() + 1) / 2;
  const int c = src.channels();
  ImageF dst(w, h, c);
  for (int y = 0; y < h; ++y) {
    const int y0 = 2 * y;
    const int y1 = y0 + 1 < src.height() ? y0 + 1 : y0;
    for (int x = 0; x < w; ++x) {
      const int x0 = 2 * x;
      const int x1 = x0 + 1 < src.width() ? x0 + 1 : x0;
      for (int k = 0; k < c; ++k) {
        const double sum = static_cast<double>(src.at(x0, y0, k)) +
                           src.at(x1, y0, k) + src.at(x0, y1, k) +
                           src.at(x1, y1, k);
        dst.at(x, y, k) = static_cast<float>(0.25 * sum);
      }
    }
  }
  return dst;
}

ImageF rgb_to_gray(const ImageF& src) {
  if (src.channels() == 1) return src;
  ImageF gray(src.width(), src.height(), 1);
  const double inv = 1.0 / src.channels();
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      double sum = 0.0;
      for (int k = 0; k < src.channels(); ++k) sum += src.at(x, y, k);
      gray.at(x, y) = static_cast<float>(sum * inv);
    }
  }
  return gray;
}

}  // namespace mstereo
