#include "mstereo/io.hpp"

#include <png.h>

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "mstereo/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "raster formats are little-endian");

namespace mstereo {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return in;
}

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& token) {
  double value = 0.0;
  const auto res =
      std::from_chars(token.data(), token.data() + token.size(), value);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw IoError("malformed number: '" + token + "'");
  }
  return value;
}

void write_flo2(const std::filesystem::path& path, const ImageD& flow) {
  if (flow.channels() != 2) throw IoError("flow raster must have 2 channels");
  auto out = open_out(path);
  out.write("FLO2", 4);
  write_u32(out, static_cast<std::uint32_t>(flow.width()));
  write_u32(out, static_cast<std::uint32_t>(flow.height()));
  std::vector<float> row(static_cast<std::size_t>(flow.width()) * 2);
  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      row[2 * x] = static_cast<float>(flow.at(x, y, 0));
      row[2 * x + 1] = static_cast<float>(flow.at(x, y, 1));
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

ImageD read_flo2(const std::filesystem::path& path) {
  auto in = open_in(path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "FLO2", 4) != 0) {
    throw IoError(path.string() + " is not a FLO2 file");
  }
  const std::uint32_t w = read_u32(in);
  const std::uint32_t h = read_u32(in);
  if (!in || w == 0 || h == 0 || w > 1u << 20 || h > 1u << 20) {
    throw IoError(path.string() + " has a corrupt FLO2 header");
  }
  ImageD flow(static_cast<int>(w), static_cast<int>(h), 2);
  std::vector<float> row(static_cast<std::size_t>(w) * 2);
  for (std::uint32_t y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw IoError(path.string() + " is truncated");
    for (std::uint32_t x = 0; x < w; ++x) {
      flow.at(static_cast<int>(x), static_cast<int>(y), 0) = row[2 * x];
      flow.at(static_cast<int>(x), static_cast<int>(y), 1) = row[2 * x + 1];
    }
  }
  return flow;
}

void write_pfm(const std::filesystem::path& path, const ImageD& image) {
  if (image.channels() != 1) throw IoError("PFM writer expects 1 channel");
  auto out = open_out(path);
  out << "Pf\n" << image.width() << " " << image.height() << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(image.width()));
  for (int y = image.height() - 1; y >= 0; --y) {  // bottom-up
    for (int x = 0; x < image.width(); ++x) {
      row[x] = static_cast<float>(image.at(x, y));
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

ImageD read_pfm(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  if (!in || magic != "Pf" || w <= 0 || h <= 0 || scale >= 0.0) {
    throw IoError(path.string() + " is not a little-endian grayscale PFM");
  }
  in.get();  // single whitespace after the header
  ImageD image(w, h, 1);
  std::vector<float> row(static_cast<std::size_t>(w));
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw IoError(path.string() + " is truncated");
    for (int x = 0; x < w; ++x) image.at(x, y) = row[x];
  }
  return image;
}

void write_pgm(const std::filesystem::path& path, const Mask& mask) {
  if (mask.channels() != 1) throw IoError("PGM writer expects 1 channel");
  auto out = open_out(path);
  out << "P5\n" << mask.width() << " " << mask.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(mask.data()),
            static_cast<std::streamsize>(mask.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Mask read_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (!in || magic != "P5" || w <= 0 || h <= 0 || maxval != 255) {
    throw IoError(path.string() + " is not an 8-bit binary PGM");
  }
  in.get();
  Mask mask(w, h, 1);
  in.read(reinterpret_cast<char*>(mask.data()),
          static_cast<std::streamsize>(mask.size()));
  if (!in) throw IoError(path.string() + " is truncated");
  return mask;
}

void write_png(const std::filesystem::path& path, const ImageF& image) {
  if (image.channels() != 3) throw IoError("PNG writer expects 3 channels");
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, image.width(), image.height(), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(image.width()) * 3);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        float v = image.at(x, y, c);
        v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        row[3 * x + c] = static_cast<png_byte>(v * 255.0f + 0.5f);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

ImageF read_png(const std::filesystem::path& path) {
  FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw IoError("cannot open " + path.string() + " for reading");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw IoError("libpng failed reading " + path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  ImageF image(w, h, 3);
  std::vector<png_byte> row(static_cast<std::size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        image.at(x, y, c) = static_cast<float>(row[3 * x + c]) / 255.0f;
      }
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return image;
}

void write_ply(const std::filesystem::path& path, const ImageD& depth,
               const Mask& valid, const ImageF& image, const CameraIntrinsics& K) {
  long count = 0;
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x) count += valid.at(x, y) ? 1 : 0;

  auto out = open_out(path);
  out << "ply\nformat ascii 1.0\nelement vertex " << count
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\n"
         "end_header\n";
  const Eigen::Matrix3d Ki = K.inverse_matrix();
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (!valid.at(x, y)) continue;
      const Eigen::Vector3d p = depth.at(x, y) * (Ki * Eigen::Vector3d(x, y, 1.0));
      int rgb[3] = {128, 128, 128};
      if (!image.empty()) {
        for (int c = 0; c < 3; ++c) {
          float v = image.at(x, y, image.channels() == 3 ? c : 0);
          v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
          rgb[c] = static_cast<int>(v * 255.0f + 0.5f);
        }
      }
      out << static_cast<float>(p.x()) << " " << static_cast<float>(p.y()) << " "
          << static_cast<float>(p.z()) << " " << rgb[0] << " " << rgb[1] << " "
          << rgb[2] << "\n";
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_camera_file(const std::filesystem::path& path, const CameraFile& cam) {
  auto out = open_out(path);
  out << "fx " << format_double(cam.intrinsics.fx) << "\n";
  out << "fy " << format_double(cam.intrinsics.fy) << "\n";
  out << "cx " << format_double(cam.intrinsics.cx) << "\n";
  out << "cy " << format_double(cam.intrinsics.cy) << "\n";
  out << "width " << cam.intrinsics.width << "\n";
  out << "height " << cam.intrinsics.height << "\n";
  out << "rotation " << format_double(cam.pose.r.x()) << " "
      << format_double(cam.pose.r.y()) << " " << format_double(cam.pose.r.z())
      << "\n";
  out << "translation " << format_double(cam.pose.t.x()) << " "
      << format_double(cam.pose.t.y()) << " " << format_double(cam.pose.t.z())
      << "\n";
  out << "scale_known " << (cam.pose.scale_known ? 1 : 0) << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

CameraFile read_camera_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  CameraFile cam;
  std::map<std::string, bool> seen;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    std::vector<std::string> tokens;
    std::string tok;
    while (ls >> tok) tokens.push_back(tok);
    const auto one = [&]() -> const std::string& {
      if (tokens.size() != 1)
        throw IoError(path.string() + ": key '" + key + "' expects one value");
      return tokens[0];
    };
    const auto three = [&](Eigen::Vector3d* v) {
      if (tokens.size() != 3)
        throw IoError(path.string() + ": key '" + key + "' expects three values");
      *v = Eigen::Vector3d(parse_double(tokens[0]), parse_double(tokens[1]),
                           parse_double(tokens[2]));
    };
    if (key == "fx") cam.intrinsics.fx = parse_double(one());
    else if (key == "fy") cam.intrinsics.fy = parse_double(one());
    else if (key == "cx") cam.intrinsics.cx = parse_double(one());
    else if (key == "cy") cam.intrinsics.cy = parse_double(one());
    else if (key == "width") cam.intrinsics.width = static_cast<int>(parse_double(one()));
    else if (key == "height") cam.intrinsics.height = static_cast<int>(parse_double(one()));
    else if (key == "rotation") three(&cam.pose.r);
    else if (key == "translation") three(&cam.pose.t);
    else if (key == "scale_known") cam.pose.scale_known = parse_double(one()) != 0.0;
    else throw IoError(path.string() + ": unknown camera key '" + key + "'");
    seen[key] = true;
  }
  for (const char* key : {"fx", "fy", "cx", "cy", "width", "height", "rotation",
                          "translation", "scale_known"}) {
    if (!seen.count(key)) {
      throw IoError(path.string() + ": missing camera key '" + key + "'");
    }
  }
  return cam;
}

}  // namespace mstereo
