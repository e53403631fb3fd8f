#pragma once

#include <filesystem>
#include <string>

#include "mstereo/camera.hpp"
#include "mstereo/image.hpp"

namespace mstereo {

// Two-channel float32 flow raster. 12-byte header: magic "FLO2" then width
// and height as little-endian unsigned 32-bit; data row-major interleaved
// (wx, wy). Validity masks travel separately as PGM.
void write_flo2(const std::filesystem::path& path, const ImageD& flow);
ImageD read_flo2(const std::filesystem::path& path);

// Grayscale PFM, float32, scale header -1.0 (little-endian), rows stored
// bottom-up.
void write_pfm(const std::filesystem::path& path, const ImageD& image);
ImageD read_pfm(const std::filesystem::path& path);

// Binary 8-bit PGM; used for masks (255 = set).
void write_pgm(const std::filesystem::path& path, const Mask& mask);
Mask read_pgm(const std::filesystem::path& path);

// 8-bit RGB PNG; float channels are clamped to [0, 1] and quantized.
void write_png(const std::filesystem::path& path, const ImageF& image);
ImageF read_png(const std::filesystem::path& path);

// ASCII point cloud of the valid depth pixels, colored from the source
// image, back-projected through K.
void write_ply(const std::filesystem::path& path, const ImageD& depth,
               const Mask& valid, const ImageF& image, const CameraIntrinsics& K);

// Per-frame camera file: calibration plus a pose, serialized as
// locale-independent key/value text with round-trip exact doubles.
struct CameraFile {
  CameraIntrinsics intrinsics;
  RelativePose pose;
};
void write_camera_file(const std::filesystem::path& path, const CameraFile& cam);
CameraFile read_camera_file(const std::filesystem::path& path);

// Round-trip exact double <-> text helpers shared by the text formats.
std::string format_double(double value);
double parse_double(const std::string& token);

}  // namespace mstereo
