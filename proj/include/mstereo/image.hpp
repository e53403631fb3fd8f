#pragma once

#include <cstdint>
#include <vector>

namespace mstereo {

// Dense row-major raster with interleaved channels.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, T fill = T{})
      : width_(width),
        height_(height),
        channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  T& at(int x, int y, int c = 0) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  const T& at(int x, int y, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  T* pixel(int x, int y) {
    return data_.data() + (static_cast<std::size_t>(y) * width_ + x) * channels_;
  }
  const T* pixel(int x, int y) const {
    return data_.data() + (static_cast<std::size_t>(y) * width_ + x) * channels_;
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::size_t size() const { return data_.size(); }

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ &&
           channels_ == other.channels_;
  }
  bool contains(double x, double y) const {
    return x >= 0.0 && x <= width_ - 1.0 && y >= 0.0 && y <= height_ - 1.0;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

using ImageF = Image<float>;
using ImageD = Image<double>;
using Mask = Image<std::uint8_t>;

// Bilinear lookup at pixel coordinates (x, y); neighbor indices are clamped
// to the image border.
template <typename T>
double bilinear(const Image<T>& img, double x, double y, int c = 0) {
  const int w = img.width(), h = img.height();
  double fx = x < 0 ? 0 : (x > w - 1 ? w - 1 : x);
  double fy = y < 0 ? 0 : (y > h - 1 ? h - 1 : y);
  int x0 = static_cast<int>(fx);
  int y0 = static_cast<int>(fy);
  int x1 = x0 + 1 < w ? x0 + 1 : w - 1;
  int y1 = y0 + 1 < h ? y0 + 1 : h - 1;
  const double ax = fx - x0, ay = fy - y0;
  const double v00 = img.at(x0, y0, c), v01 = img.at(x1, y0, c);
  const double v10 = img.at(x0, y1, c), v11 = img.at(x1, y1, c);
  return (1.0 - ay) * ((1.0 - ax) * v00 + ax * v01) +
         ay * ((1.0 - ax) * v10 + ax * v11);
}

// 2x2 box-filter downsampling to ceil(n/2) per dimension; blocks that stick
// out of the image average the pixels that exist.
ImageF box_downsample(const ImageF& src);

// Channel mean; returns the input unchanged if it is already single-channel.
ImageF rgb_to_gray(const ImageF& src);

}  // namespace mstereo
