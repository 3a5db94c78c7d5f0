#pragma once

// Brute-force reference implementations. Each one is written from the
// definitions directly, with no shared code paths beyond the model types.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <tuple>
#include <vector>

#include "tilerecon/colmap_io.hpp"
#include "tilerecon/depth_map.hpp"
#include "tilerecon/mesh_eval.hpp"

namespace tilerecon::oracle {

// --- ray aggregation --------------------------------------------------------

inline double RayMean(const std::vector<double>& z, const std::vector<double>& w, double eps) {
  long double num = 0.0L;
  long double den = 0.0L;
  for (std::size_t i = 0; i < z.size(); ++i) {
    num += static_cast<long double>(w[i]) * z[i];
    den += w[i];
  }
  return static_cast<double>(num / (den + eps));
}

inline std::optional<double> RayMedian(const std::vector<double>& z, const std::vector<double>& t) {
  std::vector<std::pair<double, double>> s;
  for (std::size_t i = 0; i < z.size(); ++i) s.emplace_back(z[i], t[i]);
  std::sort(s.rbegin(), s.rend());
  for (const auto& [depth, vis] : s) {
    if (vis > 0.5) return depth;
  }
  return std::nullopt;
}

// --- pair scoring -----------------------------------------------------------

struct PairParams {
  double theta0 = 5.0;
  double sigma1 = 1.0;
  double sigma2 = 10.0;
  double theta_min = 90.0;
  bool hard_cutoff = true;
};

inline double AngleDeg(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 u = (a - p).normalized();
  const Vec3 v = (b - p).normalized();
  const double c = std::clamp(u.x() * v.x() + u.y() * v.y() + u.z() * v.z(), -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

inline double Gauss(double theta, const PairParams& p) {
  const double s = theta > p.theta0 ? p.sigma2 : p.sigma1;
  const double x = (theta - p.theta0) / s;
  return std::exp(-0.5 * x * x);
}

// Sum over every model point whose track names both images.
inline double PairScore(const SparseModel& model, std::uint32_t i, std::uint32_t j,
                        const PairParams& p, double d_max) {
  const Vec3 ci = model.images.at(i).Center();
  const Vec3 cj = model.images.at(j).Center();
  if ((ci - cj).norm() > d_max) return 0.0;
  double sum = 0.0;
  for (const Point3D& point : model.points) {
    bool has_i = false;
    bool has_j = false;
    for (const auto& el : point.track) {
      has_i |= el.image_id == i;
      has_j |= el.image_id == j;
    }
    if (!has_i || !has_j) continue;
    if (point.xyz == ci || point.xyz == cj) continue;
    const double theta = AngleDeg(point.xyz, ci, cj);
    if (p.hard_cutoff && theta > p.theta_min) continue;
    sum += Gauss(theta, p);
  }
  return sum;
}

// --- adaptive window ----------------------------------------------------------

inline double MeanGradient(const DepthMap& d) {
  const int w = d.width();
  const int h = d.height();
  if (w == 0 || h == 0) return 0.0;
  const auto ok = [&](int c, int r) {
    return c >= 0 && r >= 0 && c < w && r < h && d.At(c, r) > 0.0 && std::isfinite(d.At(c, r));
  };
  double total = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!ok(c, r)) continue;
      double g[2] = {0.0, 0.0};
      const int dc[2] = {1, 0};
      const int dr[2] = {0, 1};
      for (int a = 0; a < 2; ++a) {
        const bool fwd = ok(c + dc[a], r + dr[a]);
        const bool bwd = ok(c - dc[a], r - dr[a]);
        if (fwd && bwd) {
          g[a] = (d.At(c + dc[a], r + dr[a]) - d.At(c - dc[a], r - dr[a])) / 2.0;
        } else if (fwd) {
          g[a] = d.At(c + dc[a], r + dr[a]) - d.At(c, r);
        } else if (bwd) {
          g[a] = d.At(c, r) - d.At(c - dc[a], r - dr[a]);
        }
      }
      total += std::sqrt(g[0] * g[0] + g[1] * g[1]);
    }
  }
  return total / (static_cast<double>(w) * h);
}

// (height, width) after round-half-up and clamping to [1, size].
inline std::pair<int, int> Window(double g, int h, int w, double k, double eps) {
  const double s = k / (g + eps);
  const auto fit = [](double raw, int size) {
    const double r = std::floor(raw + 0.5);
    if (r >= size) return size;
    if (r < 1) return 1;
    return static_cast<int>(r);
  };
  return {fit(s * h / 2.0, h), fit(s * w / 2.0, w)};
}

// --- normal error and loss ----------------------------------------------------

inline double NormalError(const Vec3& a, const Vec3& b) {
  const Vec3 u = a / std::sqrt(a.x() * a.x() + a.y() * a.y() + a.z() * a.z());
  const Vec3 v = b / std::sqrt(b.x() * b.x() + b.y() * b.y() + b.z() * b.z());
  return 1.0 - (u.x() * v.x() + u.y() * v.y() + u.z() * v.z());
}

inline double Loss(double ed, double en, double lg, double lr, double alpha, double beta) {
  return lg + lr + alpha * ed + beta * en;
}

// --- depth fusion -------------------------------------------------------------

// Bilinear lookup over the valid members of the 2x2 neighborhood.
inline std::optional<double> Bilinear(const DepthMap& d, double u, double v) {
  const double x = u - 0.5;
  const double y = v - 0.5;
  const double x0 = std::floor(x);
  const double y0 = std::floor(y);
  double num = 0.0;
  double den = 0.0;
  double plain = 0.0;
  int count = 0;
  for (const auto& [c, r] : {std::pair{x0, y0}, std::pair{x0 + 1, y0}, std::pair{x0, y0 + 1},
                             std::pair{x0 + 1, y0 + 1}}) {
    const int ci = static_cast<int>(c);
    const int ri = static_cast<int>(r);
    if (ci < 0 || ri < 0 || ci >= d.width() || ri >= d.height()) continue;
    const double z = d.At(ci, ri);
    if (!(z > 0.0) || !std::isfinite(z)) continue;
    const double w = (1.0 - std::abs(x - c)) * (1.0 - std::abs(y - r));
    num += w * z;
    den += w;
    plain += z;
    ++count;
  }
  if (count == 0) return std::nullopt;
  if (den <= 1e-12) return plain / count;
  return num / den;
}

struct FusedPixel {
  bool valid = false;
  double depth = 0.0;
  double weight = 0.0;
  double min_sample = 0.0;  // range of the surviving source samples
  double max_sample = 0.0;
};

// Per-pixel weighted fusion with raw depth comparison, using explicit
// intrinsic and extrinsic matrices.
inline std::vector<FusedPixel> Fuse(const DepthMap& ref, const std::vector<DepthMap>& srcs,
                                    double sigma, double max_error) {
  const Mat3 k_ref_inv = ref.camera().K().inverse();
  const Mat3 r_ref = ref.pose().rotation.toRotationMatrix();
  const Vec3 t_ref = ref.pose().translation;
  std::vector<FusedPixel> out(static_cast<std::size_t>(ref.width()) * ref.height());
  for (int row = 0; row < ref.height(); ++row) {
    for (int col = 0; col < ref.width(); ++col) {
      const double d = ref.At(col, row);
      if (!(d > 0.0) || !std::isfinite(d)) continue;
      const Vec3 cam = d * (k_ref_inv * Vec3(col + 0.5, row + 0.5, 1.0));
      const Vec3 world = r_ref.transpose() * (cam - t_ref);
      double num = 0.0;
      double den = 0.0;
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (const DepthMap& s : srcs) {
        const Vec3 x = s.camera().K() * (s.pose().rotation.toRotationMatrix() * world +
                                         s.pose().translation);
        if (!(x.z() > 0.0)) continue;
        const double u = x.x() / x.z();
        const double v = x.y() / x.z();
        if (u < 0.0 || v < 0.0 || u >= s.width() || v >= s.height()) continue;
        const auto z = Bilinear(s, u, v);
        if (!z) continue;
        const double e = std::abs(d - *z);
        if (e > max_error) continue;
        const double w = std::exp(-e / (sigma * sigma));
        num += w * *z;
        den += w;
        lo = std::min(lo, *z);
        hi = std::max(hi, *z);
      }
      if (den > 0.0) {
        auto& px = out[static_cast<std::size_t>(row) * ref.width() + col];
        px.valid = true;
        px.depth = num / den;
        px.weight = den;
        px.min_sample = lo;
        px.max_sample = hi;
      }
    }
  }
  return out;
}

// --- evaluation -----------------------------------------------------------------

inline double NearestSq(const Vec3& q, const std::vector<Vec3>& pts) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec3& p : pts) best = std::min(best, (p - q).squaredNorm());
  return best;
}

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline Prf PrecisionRecall(const std::vector<Vec3>& rec, const std::vector<Vec3>& gt, double tau) {
  std::size_t hit_rec = 0;
  std::size_t hit_gt = 0;
  for (const Vec3& p : rec) hit_rec += std::sqrt(NearestSq(p, gt)) < tau ? 1 : 0;
  for (const Vec3& p : gt) hit_gt += std::sqrt(NearestSq(p, rec)) < tau ? 1 : 0;
  Prf r;
  r.precision = static_cast<double>(hit_rec) / static_cast<double>(rec.size());
  r.recall = static_cast<double>(hit_gt) / static_cast<double>(gt.size());
  r.f1 = r.precision + r.recall > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

inline double Psnr(const Image& a, const Image& b, double max_value) {
  long double se = 0.0L;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    se += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  }
  const double mse = static_cast<double>(se / a.data.size());
  if (mse == 0.0) return 99.0;
  return std::min(99.0, 20.0 * std::log10(max_value) - 10.0 * std::log10(mse));
}

// Direct 2-D 11x11 Gaussian window, truncated and renormalized at borders.
inline double Ssim(const Image& a, const Image& b, double max_value) {
  const double c1 = std::pow(0.01 * max_value, 2);
  const double c2 = std::pow(0.03 * max_value, 2);
  double total = 0.0;
  for (int ch = 0; ch < a.channels; ++ch) {
    double sum = 0.0;
    for (int r = 0; r < a.height; ++r) {
      for (int c = 0; c < a.width; ++c) {
        double wsum = 0, mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (int dr = -5; dr <= 5; ++dr) {
          for (int dc = -5; dc <= 5; ++dc) {
            const int rr = r + dr;
            const int cc = c + dc;
            if (rr < 0 || cc < 0 || rr >= a.height || cc >= a.width) continue;
            const double w = std::exp(-(dr * dr + dc * dc) / (2.0 * 1.5 * 1.5));
            const double x = a.At(cc, rr, ch);
            const double y = b.At(cc, rr, ch);
            wsum += w;
            mx += w * x;
            my += w * y;
            xx += w * x * x;
            yy += w * y * y;
            xy += w * x * y;
          }
        }
        mx /= wsum;
        my /= wsum;
        const double vx = xx / wsum - mx * mx;
        const double vy = yy / wsum - my * my;
        const double cov = xy / wsum - mx * my;
        sum += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
    }
    total += sum / (static_cast<double>(a.width) * a.height);
  }
  return total / a.channels;
}

// --- partition ----------------------------------------------------------------

// Cell of v among n equal cells over [lo, hi]: half-open, last one closed.
inline int Cell(double v, double lo, double hi, int n) {
  for (int c = 0; c < n; ++c) {
    const double a = lo + (hi - lo) * c / n;
    const double b = c == n - 1 ? hi : lo + (hi - lo) * (c + 1) / n;
    if (v >= a && (v < b || (c == n - 1 && v <= b))) return c;
  }
  return -1;
}

// Bounds of points in voxels holding more than fraction * max points.
inline std::optional<std::pair<Vec3, Vec3>> DenseBounds(const std::vector<Vec3>& pts, double s,
                                                        double fraction) {
  std::map<std::tuple<long, long, long>, int> count;
  const auto key = [&](const Vec3& p) {
    return std::tuple<long, long, long>{static_cast<long>(std::floor(p.x() / s)),
                                        static_cast<long>(std::floor(p.y() / s)),
                                        static_cast<long>(std::floor(p.z() / s))};
  };
  for (const Vec3& p : pts) ++count[key(p)];
  int most = 0;
  for (const auto& [k, n] : count) most = std::max(most, n);
  std::optional<std::pair<Vec3, Vec3>> box;
  for (const Vec3& p : pts) {
    if (!(count[key(p)] > fraction * most)) continue;
    if (!box) {
      box = std::pair{p, p};
    } else {
      box->first = box->first.cwiseMin(p);
      box->second = box->second.cwiseMax(p);
    }
  }
  return box;
}

}  // namespace tilerecon::oracle
