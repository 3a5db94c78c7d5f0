#pragma once

// Per-pixel depth and normal maps bound to a posed pinhole camera, and their
// PFM serialization.
//
// Pixel (col, row) covers [col, col + 1) x [row, row + 1) in image
// coordinates, so its center is at (col + 0.5, row + 0.5).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tilerecon/error.hpp"
#include "tilerecon/geometry.hpp"

namespace tilerecon {

class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(Camera camera, Rigid3 pose)
      : camera_(std::move(camera)),
        pose_(pose),
        width_(static_cast<int>(camera_.width)),
        height_(static_cast<int>(camera_.height)),
        depth_(static_cast<std::size_t>(width_) * height_, 0.0) {}

  int width() const { return width_; }
  int height() const { return height_; }
  const Camera& camera() const { return camera_; }
  const Rigid3& pose() const { return pose_; }

  std::size_t Index(int col, int row) const {
    return static_cast<std::size_t>(row) * width_ + col;
  }
  bool InBounds(int col, int row) const {
    return col >= 0 && row >= 0 && col < width_ && row < height_;
  }

  double At(int col, int row) const { return depth_[Index(col, row)]; }
  // Valid pixels carry a finite, strictly positive depth.
  bool Valid(int col, int row) const { return IsValidDepth(At(col, row)); }

  void Set(int col, int row, double depth) { depth_[Index(col, row)] = depth; }
  void Invalidate(int col, int row) { depth_[Index(col, row)] = 0.0; }

  const std::vector<double>& values() const { return depth_; }
  std::vector<double>& values() { return depth_; }

  std::size_t CountValid() const {
    std::size_t n = 0;
    for (double d : depth_) n += IsValidDepth(d) ? 1 : 0;
    return n;
  }

  static bool IsValidDepth(double d) { return std::isfinite(d) && d > 0.0; }

 private:
  Camera camera_;
  Rigid3 pose_;
  int width_ = 0;
  int height_ = 0;
  std::vector<double> depth_;
};

class NormalMap {
 public:
  NormalMap() = default;
  NormalMap(int width, int height)
      : width_(width),
        height_(height),
        normals_(static_cast<std::size_t>(width) * height, Vec3::Zero()) {}

  int width() const { return width_; }
  int height() const { return height_; }
  const Vec3& At(int col, int row) const {
    return normals_[static_cast<std::size_t>(row) * width_ + col];
  }
  // Zero vectors mark invalid pixels; valid ones are stored normalized.
  void Set(int col, int row, const Vec3& n) {
    const double len = n.norm();
    normals_[static_cast<std::size_t>(row) * width_ + col] =
        len > 0.0 ? Vec3(n / len) : Vec3::Zero();
  }
  bool Valid(int col, int row) const { return At(col, row).squaredNorm() > 0.0; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<Vec3> normals_;
};

// ---------------------------------------------------------------------------
// PFM: "Pf" (1 channel) or "PF" (3 channels), negative scale for
// little-endian, rows stored bottom to top.

struct PfmImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> data;  // top-to-bottom rows, interleaved channels

  float At(int col, int row, int c = 0) const {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + c];
  }
};

inline void WritePfm(const std::filesystem::path& path, const PfmImage& image) {
  TILERECON_CHECK(image.channels == 1 || image.channels == 3,
                  ErrorCode::kInvalidArgument, "PFM supports 1 or 3 channels");
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  TILERECON_CHECK(file.is_open(), ErrorCode::kIoFailure,
                  "cannot write " + path.string());
  file << (image.channels == 1 ? "Pf" : "PF") << "\n"
       << image.width << " " << image.height << "\n-1.0\n";
  const std::size_t row_len = static_cast<std::size_t>(image.width) * image.channels;
  for (int row = image.height - 1; row >= 0; --row) {
    file.write(reinterpret_cast<const char*>(image.data.data() + row * row_len),
               static_cast<std::streamsize>(row_len * sizeof(float)));
  }
  TILERECON_CHECK(file.good(), ErrorCode::kIoFailure,
                  "write failed for " + path.string());
}

inline PfmImage ReadPfm(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  TILERECON_CHECK(file.is_open(), ErrorCode::kMissingFile,
                  "cannot open " + path.string());
  std::string magic;
  PfmImage image;
  double scale = 0.0;
  file >> magic >> image.width >> image.height >> scale;
  TILERECON_CHECK(file.good() && (magic == "Pf" || magic == "PF"),
                  ErrorCode::kParseError, path.string() + ": not a PFM file");
  TILERECON_CHECK(image.width > 0 && image.height > 0, ErrorCode::kParseError,
                  path.string() + ": invalid PFM size");
  TILERECON_CHECK(scale < 0.0, ErrorCode::kParseError,
                  path.string() + ": big-endian PFM is not supported");
  file.get();  // single whitespace after the scale
  image.channels = magic == "Pf" ? 1 : 3;
  const std::size_t row_len = static_cast<std::size_t>(image.width) * image.channels;
  image.data.resize(row_len * image.height);
  for (int row = image.height - 1; row >= 0; --row) {
    file.read(reinterpret_cast<char*>(image.data.data() + row * row_len),
              static_cast<std::streamsize>(row_len * sizeof(float)));
    if (!file) {
      throw Error(ErrorCode::kTruncatedRecord,
                  path.string() + ": pixel data truncated",
                  static_cast<std::uint64_t>(file.gcount()));
    }
  }
  return image;
}

inline void WriteDepthPfm(const std::filesystem::path& path, const DepthMap& depth) {
  PfmImage image{depth.width(), depth.height(), 1, {}};
  image.data.reserve(depth.values().size());
  for (double d : depth.values()) {
    image.data.push_back(DepthMap::IsValidDepth(d) ? static_cast<float>(d) : 0.0f);
  }
  WritePfm(path, image);
}

// Reads depth values and binds them to the given camera and pose.
inline DepthMap ReadDepthPfm(const std::filesystem::path& path, const Camera& camera,
                             const Rigid3& pose) {
  const PfmImage image = ReadPfm(path);
  TILERECON_CHECK(image.channels == 1, ErrorCode::kParseError,
                  path.string() + ": depth PFM must have one channel");
  TILERECON_CHECK(static_cast<std::uint64_t>(image.width) == camera.width &&
                      static_cast<std::uint64_t>(image.height) == camera.height,
                  ErrorCode::kDimensionMismatch,
                  path.string() + ": size differs from camera " +
                      std::to_string(camera.camera_id));
  DepthMap depth(camera, pose);
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    const double d = image.data[i];
    depth.values()[i] = DepthMap::IsValidDepth(d) ? d : 0.0;
  }
  return depth;
}

inline void WriteNormalPfm(const std::filesystem::path& path, const NormalMap& normals) {
  PfmImage image{normals.width(), normals.height(), 3, {}};
  image.data.reserve(static_cast<std::size_t>(normals.width()) * normals.height() * 3);
  for (int row = 0; row < normals.height(); ++row) {
    for (int col = 0; col < normals.width(); ++col) {
      const Vec3& n = normals.At(col, row);
      for (int c = 0; c < 3; ++c) image.data.push_back(static_cast<float>(n[c]));
    }
  }
  WritePfm(path, image);
}

inline NormalMap ReadNormalPfm(const std::filesystem::path& path) {
  const PfmImage image = ReadPfm(path);
  TILERECON_CHECK(image.channels == 3, ErrorCode::kParseError,
                  path.string() + ": normal PFM must have three channels");
  NormalMap normals(image.width, image.height);
  for (int row = 0; row < image.height; ++row) {
    for (int col = 0; col < image.width; ++col) {
      normals.Set(col, row, Vec3(image.At(col, row, 0), image.At(col, row, 1),
                                 image.At(col, row, 2)));
    }
  }
  return normals;
}

}  // namespace tilerecon
