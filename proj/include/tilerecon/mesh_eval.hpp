#pragma once

// Geometry and image evaluation: exact nearest-neighbor index, overlap crop,
// point-to-point ICP, area-uniform surface sampling, threshold
// precision/recall/F1, PSNR/SSIM and DSM rasterization.

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "tilerecon/depth_map.hpp"
#include "tilerecon/error.hpp"
#include "tilerecon/geometry.hpp"
#include "tilerecon/mesh.hpp"

namespace tilerecon {

// ---------------------------------------------------------------------------
// Exact kd-tree

class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points)
      : points_(points.begin(), points.end()), order_(points.size()) {
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.reserve(points.size() / kLeafSize * 2 + 2);
    if (!points_.empty()) Build(0, static_cast<std::uint32_t>(points_.size()));
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }

  struct Hit {
    std::uint32_t index = 0;
    double squared_distance = std::numeric_limits<double>::infinity();
  };

  Hit Nearest(const Vec3& q) const {
    Hit best;
    if (!nodes_.empty()) Search(0, q, best);
    return best;
  }

 private:
  static constexpr std::uint32_t kLeafSize = 12;

  struct Node {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
  };

  std::uint32_t Build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize) return id;
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (std::uint32_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       return points_[a][axis] < points_[b][axis];
                     });
    const double split = points_[order_[mid]][axis];
    const std::uint32_t left = Build(begin, mid);
    const std::uint32_t right = Build(mid, end);
    Node& node = nodes_[id];
    node.axis = axis;
    node.split = split;
    node.left = left;
    node.right = right;
    return id;
  }

  void Search(std::uint32_t id, const Vec3& q, Hit& best) const {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::uint32_t p = order_[i];
        const double d = (points_[p] - q).squaredNorm();
        if (d < best.squared_distance || (d == best.squared_distance && p < best.index)) {
          best = {p, d};
        }
      }
      return;
    }
    // Left holds values <= split, right holds values >= split.
    const double diff = q[node.axis] - node.split;
    const std::uint32_t near = diff < 0.0 ? node.left : node.right;
    const std::uint32_t far = diff < 0.0 ? node.right : node.left;
    Search(near, q, best);
    if (diff * diff <= best.squared_distance) Search(far, q, best);
  }

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

// Distance from every query point to its nearest neighbor in `tree`.
inline std::vector<double> NearestDistances(std::span<const Vec3> queries,
                                            const KdTree& tree) {
  std::vector<double> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    out[i] = std::sqrt(tree.Nearest(queries[i]).squared_distance);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Overlap crop

struct OverlapCropResult {
  std::vector<Vec3> rec;
  std::vector<Vec3> gt;
  SceneBounds box;
};

inline std::vector<Vec3> CropPoints(std::span<const Vec3> points, const SceneBounds& box) {
  std::vector<Vec3> out;
  for (const auto& p : points) {
    if (box.Contains(p)) out.push_back(p);
  }
  return out;
}

inline OverlapCropResult OverlapCrop(std::span<const Vec3> rec, std::span<const Vec3> gt) {
  TILERECON_CHECK(!rec.empty() && !gt.empty(), ErrorCode::kNoOverlap,
                  "overlap crop needs two non-empty point sets");
  OverlapCropResult out;
  out.box = BoundsOf(rec).Intersect(BoundsOf(gt));
  TILERECON_CHECK(!out.box.Empty(), ErrorCode::kNoOverlap,
                  "bounding boxes do not overlap");
  out.rec = CropPoints(rec, out.box);
  out.gt = CropPoints(gt, out.box);
  return out;
}

// ---------------------------------------------------------------------------
// ICP

struct IcpConfig {
  int max_iterations = 50;
  double tolerance = 1e-6;      // relative RMS change
  double reject_factor = 3.0;   // drop pairs beyond this multiple of the median
};

struct IcpResult {
  Mat4 transform = Mat4::Identity();  // maps src into tgt
  int iterations = 0;
  double rms_before = 0.0;
  double rms_after = 0.0;
  bool converged = false;
};

inline void RequireNonDegenerate(std::span<const Vec3> points, const char* what) {
  TILERECON_CHECK(points.size() >= 3, ErrorCode::kDegenerateGeometry,
                  std::string(what) + " has fewer than 3 points");
  Vec3 mean = Vec3::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) cov += (p - mean) * (p - mean).transpose();
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Vec3 ev = eig.eigenvalues();  // ascending
  TILERECON_CHECK(ev[2] > 0.0 && ev[1] > 1e-12 * ev[2], ErrorCode::kDegenerateGeometry,
                  std::string(what) + " is collinear");
}

// Least-squares rigid transform taking src[i] onto dst[i].
inline Mat4 KabschTransform(std::span<const Vec3> src, std::span<const Vec3> dst) {
  Vec3 cs = Vec3::Zero();
  Vec3 cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(src.size());
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    h += (src[i] - cs) * (dst[i] - cd).transpose();
  }
  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 r = svd.matrixV() * d * svd.matrixU().transpose();
  Mat4 t = Mat4::Identity();
  t.topLeftCorner<3, 3>() = r;
  t.topRightCorner<3, 1>() = cd - r * cs;
  return t;
}

inline Vec3 ApplyTransform(const Mat4& t, const Vec3& p) {
  return t.topLeftCorner<3, 3>() * p + t.topRightCorner<3, 1>();
}

inline std::vector<Vec3> ApplyTransform(const Mat4& t, std::span<const Vec3> points) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(ApplyTransform(t, p));
  return out;
}

inline double NearestRms(std::span<const Vec3> src, const KdTree& tgt) {
  double sum = 0.0;
  for (const auto& p : src) sum += tgt.Nearest(p).squared_distance;
  return std::sqrt(sum / static_cast<double>(src.size()));
}

// Point-to-point ICP. Returns the iterate with the lowest nearest-neighbor RMS,
// so the result is never worse than the starting alignment.
inline IcpResult IcpAlign(std::span<const Vec3> src, std::span<const Vec3> tgt,
                          const IcpConfig& cfg = {}) {
  RequireNonDegenerate(src, "source cloud");
  RequireNonDegenerate(tgt, "target cloud");
  const KdTree tree(tgt);

  IcpResult result;
  Mat4 current = Mat4::Identity();
  std::vector<Vec3> moved(src.begin(), src.end());
  std::vector<Vec3> from;
  std::vector<Vec3> to;
  std::vector<double> dist(src.size());
  std::vector<std::uint32_t> match(src.size());
  double best_rms = std::numeric_limits<double>::infinity();
  double prev_rms = std::numeric_limits<double>::infinity();

  for (int iter = 0;; ++iter) {
    double sum = 0.0;
    for (std::size_t i = 0; i < moved.size(); ++i) {
      const auto hit = tree.Nearest(moved[i]);
      match[i] = hit.index;
      dist[i] = std::sqrt(hit.squared_distance);
      sum += hit.squared_distance;
    }
    const double rms = std::sqrt(sum / static_cast<double>(moved.size()));
    if (iter == 0) result.rms_before = rms;
    if (rms < best_rms) {
      best_rms = rms;
      result.transform = current;
    }
    result.iterations = iter;
    if (rms == 0.0 || (iter > 0 && std::abs(prev_rms - rms) <= cfg.tolerance * prev_rms)) {
      result.converged = true;
      break;
    }
    if (iter >= cfg.max_iterations) break;
    prev_rms = rms;

    std::vector<double> sorted = dist;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double cutoff = cfg.reject_factor * sorted[sorted.size() / 2];
    from.clear();
    to.clear();
    for (std::size_t i = 0; i < moved.size(); ++i) {
      if (dist[i] > cutoff) continue;
      from.push_back(moved[i]);
      to.push_back(tree.point(match[i]));
    }
    if (from.size() < 3) break;
    const Mat4 step = KabschTransform(from, to);
    current = step * current;
    for (std::size_t i = 0; i < moved.size(); ++i) moved[i] = ApplyTransform(current, src[i]);
  }
  result.rms_after = best_rms;
  return result;
}

// ---------------------------------------------------------------------------
// Surface sampling

// Area-proportional triangle choice, uniform barycentric point within it.
inline std::vector<Vec3> SampleMeshPoints(const Mesh& mesh, std::size_t n, std::uint64_t seed,
                                          std::vector<std::uint32_t>* triangle_index = nullptr) {
  if (triangle_index) triangle_index->clear();
  if (n == 0) return {};
  TILERECON_CHECK(!mesh.triangles.empty(), ErrorCode::kEmptyMesh, "mesh has no triangles");
  std::vector<double> cdf(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    total += mesh.TriangleArea(t);
    cdf[t] = total;
  }
  TILERECON_CHECK(total > 0.0, ErrorCode::kEmptyMesh, "mesh has zero surface area");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(n);
  if (triangle_index) triangle_index->reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pick = unit(rng) * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), pick);
    if (it == cdf.end()) --it;
    const auto t = static_cast<std::uint32_t>(it - cdf.begin());
    const double r1 = std::sqrt(unit(rng));
    const double r2 = unit(rng);
    const auto& tri = mesh.triangles[t];
    out.push_back((1.0 - r1) * mesh.vertices[tri[0]] + r1 * (1.0 - r2) * mesh.vertices[tri[1]] +
                  r1 * r2 * mesh.vertices[tri[2]]);
    if (triangle_index) triangle_index->push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Precision / recall / F1

struct PrfScore {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline double F1Score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

// Fractions of each distance list strictly below tau.
inline PrfScore PrfFromDistances(std::span<const double> rec_to_gt,
                                 std::span<const double> gt_to_rec, double tau) {
  const auto frac = [tau](std::span<const double> d) {
    if (d.empty()) return 0.0;
    const auto hits = std::count_if(d.begin(), d.end(), [tau](double x) { return x < tau; });
    return static_cast<double>(hits) / static_cast<double>(d.size());
  };
  PrfScore s;
  s.threshold = tau;
  s.precision = frac(rec_to_gt);
  s.recall = frac(gt_to_rec);
  s.f1 = F1Score(s.precision, s.recall);
  return s;
}

inline PrfScore PrecisionRecallF1(std::span<const Vec3> rec, std::span<const Vec3> gt,
                                  double tau) {
  TILERECON_CHECK(tau > 0.0, ErrorCode::kInvalidArgument, "threshold must be positive");
  TILERECON_CHECK(!rec.empty() && !gt.empty(), ErrorCode::kInvalidArgument,
                  "precision/recall needs non-empty point sets");
  const KdTree gt_tree(gt);
  const KdTree rec_tree(rec);
  return PrfFromDistances(NearestDistances(rec, gt_tree), NearestDistances(gt, rec_tree), tau);
}

// ---------------------------------------------------------------------------
// Images

struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;  // row-major, interleaved channels

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  double& At(int col, int row, int c = 0) {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + c];
  }
  double At(int col, int row, int c = 0) const {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + c];
  }
};

inline void RequireSameShape(const Image& a, const Image& b) {
  TILERECON_CHECK(a.width == b.width && a.height == b.height && a.channels == b.channels,
                  ErrorCode::kDimensionMismatch,
                  "image shapes differ: " + std::to_string(a.width) + "x" +
                      std::to_string(a.height) + "x" + std::to_string(a.channels) + " vs " +
                      std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                      std::to_string(b.channels));
}

inline constexpr double kPsnrCap = 99.0;

inline double Psnr(const Image& a, const Image& b, double max_value = 1.0) {
  RequireSameShape(a, b);
  TILERECON_CHECK(!a.data.empty(), ErrorCode::kDimensionMismatch, "empty images");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.data.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(max_value * max_value / mse));
}

namespace internal {

// Separable Gaussian blur with the window truncated at the border and its
// weights renormalized over the pixels that remain.
inline std::vector<double> GaussianFilter(const std::vector<double>& in, int w, int h,
                                          int radius, double sigma) {
  std::vector<double> kernel(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
  }
  const auto pass = [&](const std::vector<double>& src, bool horizontal) {
    std::vector<double> dst(src.size());
    for (int row = 0; row < h; ++row) {
      for (int col = 0; col < w; ++col) {
        double sum = 0.0;
        double norm = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int c = horizontal ? col + k : col;
          const int r = horizontal ? row : row + k;
          if (c < 0 || r < 0 || c >= w || r >= h) continue;
          sum += kernel[k + radius] * src[static_cast<std::size_t>(r) * w + c];
          norm += kernel[k + radius];
        }
        dst[static_cast<std::size_t>(row) * w + col] = sum / norm;
      }
    }
    return dst;
  };
  return pass(pass(in, true), false);
}

}  // namespace internal

// Mean local SSIM over an 11x11 Gaussian window (sigma 1.5), averaged over
// channels.
inline double Ssim(const Image& a, const Image& b, double max_value = 1.0) {
  RequireSameShape(a, b);
  TILERECON_CHECK(!a.data.empty(), ErrorCode::kDimensionMismatch, "empty images");
  const double c1 = (0.01 * max_value) * (0.01 * max_value);
  const double c2 = (0.03 * max_value) * (0.03 * max_value);
  const int w = a.width;
  const int h = a.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = a.data[i * a.channels + c];
      y[i] = b.data[i * b.channels + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = internal::GaussianFilter(x, w, h, 5, 1.5);
    const auto my = internal::GaussianFilter(y, w, h, 5, 1.5);
    const auto sxx = internal::GaussianFilter(xx, w, h, 5, 1.5);
    const auto syy = internal::GaussianFilter(yy, w, h, 5, 1.5);
    const auto sxy = internal::GaussianFilter(xy, w, h, 5, 1.5);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      sum += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += sum / static_cast<double>(n);
  }
  return total / a.channels;
}

// Binary PGM (P5) / PPM (P6) with 8-bit samples, scaled to [0, 1].
inline Image ReadPnm(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  TILERECON_CHECK(file.is_open(), ErrorCode::kMissingFile, "cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  file >> magic >> w >> h >> maxval;
  TILERECON_CHECK(file.good() && (magic == "P5" || magic == "P6") && w > 0 && h > 0 &&
                      maxval > 0 && maxval < 256,
                  ErrorCode::kParseError, path.string() + ": unsupported PNM header");
  file.get();
  Image img(w, h, magic == "P5" ? 1 : 3);
  std::vector<unsigned char> raw(img.data.size());
  file.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  TILERECON_CHECK(static_cast<std::size_t>(file.gcount()) == raw.size(),
                  ErrorCode::kTruncatedRecord, path.string() + ": pixel data truncated");
  for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / double(maxval);
  return img;
}

inline void WritePnm(const std::filesystem::path& path, const Image& img) {
  TILERECON_CHECK(img.channels == 1 || img.channels == 3, ErrorCode::kInvalidArgument,
                  "PNM supports 1 or 3 channels");
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  TILERECON_CHECK(file.is_open(), ErrorCode::kIoFailure, "cannot write " + path.string());
  file << (img.channels == 1 ? "P5" : "P6") << "\n" << img.width << " " << img.height << "\n255\n";
  for (double v : img.data) {
    file.put(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
}

// PFM, PGM or PPM by extension.
inline Image ReadImage(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".pfm") {
    const PfmImage pfm = ReadPfm(path);
    Image img(pfm.width, pfm.height, pfm.channels);
    for (std::size_t i = 0; i < pfm.data.size(); ++i) img.data[i] = pfm.data[i];
    return img;
  }
  return ReadPnm(path);
}

// ---------------------------------------------------------------------------
// DSM

inline constexpr float kDsmNoData = -9999.0f;

struct Dsm {
  double origin_x = 0.0;  // center of cell (0, 0) is origin + cell / 2
  double origin_z = 0.0;
  double cell = 1.0;
  int cols = 0;  // along x
  int rows = 0;  // along z
  std::vector<float> height;

  float At(int col, int row) const { return height[static_cast<std::size_t>(row) * cols + col]; }
};

// Highest y per xz cell over the points' bounding box.
inline Dsm GenerateDsm(std::span<const Vec3> points, double cell) {
  TILERECON_CHECK(std::isfinite(cell) && cell > 0.0, ErrorCode::kInvalidArgument,
                  "DSM cell size must be positive");
  Dsm dsm;
  dsm.cell = cell;
  if (points.empty()) return dsm;
  const SceneBounds box = BoundsOf(points);
  dsm.origin_x = box.min.x();
  dsm.origin_z = box.min.z();
  dsm.cols = static_cast<int>(std::floor((box.max.x() - box.min.x()) / cell)) + 1;
  dsm.rows = static_cast<int>(std::floor((box.max.z() - box.min.z()) / cell)) + 1;
  dsm.height.assign(static_cast<std::size_t>(dsm.cols) * dsm.rows, kDsmNoData);
  for (const auto& p : points) {
    const int col = std::min(dsm.cols - 1, static_cast<int>((p.x() - box.min.x()) / cell));
    const int row = std::min(dsm.rows - 1, static_cast<int>((p.z() - box.min.z()) / cell));
    float& h = dsm.height[static_cast<std::size_t>(row) * dsm.cols + col];
    const auto y = static_cast<float>(p.y());
    if (h == kDsmNoData || y > h) h = y;
  }
  return dsm;
}

inline void WriteDsmPfm(const std::filesystem::path& path, const Dsm& dsm) {
  PfmImage image{dsm.cols, dsm.rows, 1, dsm.height};
  WritePfm(path, image);
}

namespace internal {

inline void PngChunk(std::string& out, const char* type, const std::string& payload) {
  const auto put32 = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xFF));
  };
  put32(static_cast<std::uint32_t>(payload.size()));
  const std::string body = std::string(type, 4) + payload;
  out += body;
  put32(static_cast<std::uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

}  // namespace internal

// 8-bit RGB PNG; `rgb` holds width * height * 3 bytes, top row first.
inline void WritePng(const std::filesystem::path& path, int width, int height,
                     const std::vector<std::uint8_t>& rgb) {
  std::string raw;
  raw.reserve(static_cast<std::size_t>(height) * (width * 3 + 1));
  for (int row = 0; row < height; ++row) {
    raw.push_back(0);
    raw.append(reinterpret_cast<const char*>(rgb.data()) + static_cast<std::size_t>(row) * width * 3,
               static_cast<std::size_t>(width) * 3);
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::string packed(packed_size, '\0');
  TILERECON_CHECK(compress2(reinterpret_cast<Bytef*>(packed.data()), &packed_size,
                            reinterpret_cast<const Bytef*>(raw.data()),
                            static_cast<uLong>(raw.size()), 9) == Z_OK,
                  ErrorCode::kIoFailure, "PNG compression failed");
  packed.resize(packed_size);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  for (std::uint32_t v : {static_cast<std::uint32_t>(width), static_cast<std::uint32_t>(height)}) {
    for (int s = 24; s >= 0; s -= 8) ihdr.push_back(static_cast<char>((v >> s) & 0xFF));
  }
  ihdr += std::string("\x08\x02\x00\x00\x00", 5);  // 8-bit RGB, no interlace
  internal::PngChunk(out, "IHDR", ihdr);
  internal::PngChunk(out, "IDAT", packed);
  internal::PngChunk(out, "IEND", "");
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  TILERECON_CHECK(file.is_open(), ErrorCode::kIoFailure, "cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

// Blue-to-red ramp over the valid height range; no-data cells are black.
// Row 0 of the image is the max-z edge so north is up when z points south.
inline void WriteDsmPng(const std::filesystem::path& path, const Dsm& dsm) {
  float lo = std::numeric_limits<float>::infinity();
  float hi = -lo;
  for (float h : dsm.height) {
    if (h == kDsmNoData) continue;
    lo = std::min(lo, h);
    hi = std::max(hi, h);
  }
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(dsm.cols) * dsm.rows * 3, 0);
  for (int row = 0; row < dsm.rows; ++row) {
    for (int col = 0; col < dsm.cols; ++col) {
      const float h = dsm.At(col, dsm.rows - 1 - row);
      if (h == kDsmNoData) continue;
      const double t = hi > lo ? (h - lo) / double(hi - lo) : 0.5;
      const std::array<double, 3> c{std::clamp(1.5 - std::abs(4.0 * t - 3.0), 0.0, 1.0),
                                    std::clamp(1.5 - std::abs(4.0 * t - 2.0), 0.0, 1.0),
                                    std::clamp(1.5 - std::abs(4.0 * t - 1.0), 0.0, 1.0)};
      for (int k = 0; k < 3; ++k) {
        rgb[(static_cast<std::size_t>(row) * dsm.cols + col) * 3 + k] =
            static_cast<std::uint8_t>(std::lround(c[k] * 255.0));
      }
    }
  }
  WritePng(path, dsm.cols, dsm.rows, rgb);
}

// ---------------------------------------------------------------------------
// Mesh evaluation

struct EvalConfig {
  std::vector<double> thresholds{0.5, 1.0};
  bool relative = false;  // thresholds as fractions of the crop-box diagonal
  std::size_t sample_count = 500000;
  int icp_max_iter = 50;
  double icp_tolerance = 1e-6;
  bool align = true;
  std::uint64_t seed = 0;

  void Validate() const {
    TILERECON_CHECK(!thresholds.empty(), ErrorCode::kInvalidArgument,
                    "at least one threshold is required");
    for (double t : thresholds) {
      TILERECON_CHECK(std::isfinite(t) && t > 0.0, ErrorCode::kInvalidArgument,
                      "thresholds must be positive");
    }
    TILERECON_CHECK(sample_count > 0, ErrorCode::kInvalidArgument,
                    "sample_count must be positive");
    TILERECON_CHECK(icp_max_iter >= 0, ErrorCode::kInvalidArgument,
                    "icp_max_iter must be non-negative");
    TILERECON_CHECK(icp_tolerance >= 0.0, ErrorCode::kInvalidArgument,
                    "icp_tolerance must be non-negative");
  }
};

struct EvalReport {
  std::vector<PrfScore> scores;  // thresholds in scene units
  Mat4 alignment = Mat4::Identity();
  double icp_rms_before = 0.0;
  double icp_rms_after = 0.0;
  std::size_t rec_samples = 0;
  std::size_t gt_samples = 0;
  SceneBounds crop_box;

  nlohmann::ordered_json ToJson() const {
    nlohmann::ordered_json j;
    j["scores"] = nlohmann::ordered_json::array();
    for (const auto& s : scores) {
      j["scores"].push_back({{"threshold", s.threshold},
                             {"precision", s.precision},
                             {"recall", s.recall},
                             {"f1", s.f1}});
    }
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (int r = 0; r < 4; ++r) {
      rows.push_back({alignment(r, 0), alignment(r, 1), alignment(r, 2), alignment(r, 3)});
    }
    j["alignment"] = rows;
    j["icp_rms_before"] = icp_rms_before;
    j["icp_rms_after"] = icp_rms_after;
    j["rec_samples"] = rec_samples;
    j["gt_samples"] = gt_samples;
    j["crop_box"] = {{"min", {crop_box.min.x(), crop_box.min.y(), crop_box.min.z()}},
                     {"max", {crop_box.max.x(), crop_box.max.y(), crop_box.max.z()}}};
    return j;
  }
};

// Surface points of a mesh, or its vertices when it has no faces.
inline std::vector<Vec3> SurfacePoints(const Mesh& mesh, std::size_t n, std::uint64_t seed) {
  if (mesh.triangles.empty()) {
    TILERECON_CHECK(!mesh.vertices.empty(), ErrorCode::kEmptyMesh, "mesh is empty");
    return mesh.vertices;
  }
  return SampleMeshPoints(mesh, n, seed);
}

// Crop both clouds to their common box, align rec onto gt, then score.
inline EvalReport EvaluatePoints(std::span<const Vec3> rec, std::span<const Vec3> gt,
                                 const EvalConfig& cfg) {
  cfg.Validate();
  OverlapCropResult crop = OverlapCrop(rec, gt);
  EvalReport report;
  report.crop_box = crop.box;
  report.rec_samples = crop.rec.size();
  report.gt_samples = crop.gt.size();
  TILERECON_CHECK(!crop.rec.empty() && !crop.gt.empty(), ErrorCode::kNoOverlap,
                  "no points inside the overlap box");
  if (cfg.align) {
    IcpConfig icp;
    icp.max_iterations = cfg.icp_max_iter;
    icp.tolerance = cfg.icp_tolerance;
    const IcpResult r = IcpAlign(crop.rec, crop.gt, icp);
    report.alignment = r.transform;
    report.icp_rms_before = r.rms_before;
    report.icp_rms_after = r.rms_after;
    crop.rec = ApplyTransform(r.transform, crop.rec);
  }
  const KdTree gt_tree(crop.gt);
  const KdTree rec_tree(crop.rec);
  const auto d_rec = NearestDistances(crop.rec, gt_tree);
  const auto d_gt = NearestDistances(crop.gt, rec_tree);
  const double scale = cfg.relative ? crop.box.Diagonal() : 1.0;
  for (double t : cfg.thresholds) report.scores.push_back(PrfFromDistances(d_rec, d_gt, t * scale));
  return report;
}

inline EvalReport EvaluateMesh(const Mesh& rec, const Mesh& gt, const EvalConfig& cfg) {
  cfg.Validate();
  const auto rec_pts = SurfacePoints(rec, cfg.sample_count, cfg.seed);
  const auto gt_pts = SurfacePoints(gt, cfg.sample_count, cfg.seed + 1);
  return EvaluatePoints(rec_pts, gt_pts, cfg);
}

}  // namespace tilerecon
