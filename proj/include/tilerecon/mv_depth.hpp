#pragma once

// Multi-view depth geometry: per-ray depth aggregation, cross-view depth
// reprojection error, consistency-weighted fusion of source depths, the
// gradient-adaptive densification window and its back-projection, normal
// consistency and loss composition.

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "tilerecon/depth_map.hpp"

namespace tilerecon {

// ---------------------------------------------------------------------------
// Per-ray aggregation

struct RaySample {
  double depth = 0.0;          // z_i, scene units
  double weight = 0.0;         // omega_i >= 0
  double transmittance = 1.0;  // T_i in [0, 1]
};

struct RaySamples {
  std::vector<RaySample> samples;  // ascending depth
  double epsilon = 1e-8;
};

// sum(w_i z_i) / (sum(w_i) + eps); zero for an empty or all-zero-weight ray.
inline double RayDepthMean(const RaySamples& ray) {
  double num = 0.0;
  double den = 0.0;
  for (const RaySample& s : ray.samples) {
    num += s.weight * s.depth;
    den += s.weight;
  }
  return num / (den + ray.epsilon);
}

// Largest depth whose visibility is still above one half; nullopt when no
// sample qualifies.
inline std::optional<double> RayDepthMedian(const RaySamples& ray) {
  std::optional<double> best;
  for (const RaySample& s : ray.samples) {
    if (s.transmittance > 0.5 && (!best || s.depth > *best)) best = s.depth;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Cross-view depth consistency

// How a source depth sample is compared against the reference depth.
enum class DepthComparison {
  // |D_ref(p_ref) - D_src(p_src)|: raw per-view depth values, as written.
  kRaw,
  // The source sample is lifted to 3D and its z in the reference camera is
  // compared instead, which stays meaningful when the two cameras sit at
  // different distances from the surface.
  kReferenceFrame,
};

struct FusionConfig {
  double sigma = 1.0;  // scene units
  std::optional<double> max_error;  // scene units; defaults to 3 sigma
  double k = 0.01;
  double window_eps = 1e-4;
  bool squared_error = false;  // exp(-E^2 / sigma^2) instead of exp(-E / sigma^2)
  DepthComparison comparison = DepthComparison::kRaw;

  double MaxError() const { return max_error.value_or(3.0 * sigma); }

  void Validate() const {
    TILERECON_CHECK(sigma > 0.0, ErrorCode::kInvalidValue, "sigma must be positive");
    TILERECON_CHECK(k > 0.0, ErrorCode::kInvalidValue, "k must be positive");
    TILERECON_CHECK(window_eps > 0.0, ErrorCode::kInvalidValue,
                    "window epsilon must be positive");
    TILERECON_CHECK(MaxError() >= 0.0, ErrorCode::kInvalidValue,
                    "max_error must be non-negative");
  }
};

// Bilinear lookup at continuous image coordinates, using only valid
// neighbors. nullopt when none of the four neighbors is valid.
inline std::optional<double> SampleDepthBilinear(const DepthMap& depth, double u,
                                                 double v) {
  const double x = u - 0.5;
  const double y = v - 0.5;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  double num = 0.0;
  double den = 0.0;
  double plain_sum = 0.0;
  int plain_count = 0;
  for (int dy = 0; dy <= 1; ++dy) {
    for (int dx = 0; dx <= 1; ++dx) {
      const int col = x0 + dx;
      const int row = y0 + dy;
      if (!depth.InBounds(col, row) || !depth.Valid(col, row)) continue;
      const double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy);
      const double d = depth.At(col, row);
      num += w * d;
      den += w;
      plain_sum += d;
      ++plain_count;
    }
  }
  if (plain_count == 0) return std::nullopt;
  if (den <= 1e-12) return plain_sum / plain_count;
  return num / den;
}

enum class ReprojectionStatus { kOk, kOutOfSourceFrustum, kInvalidSourceDepth };

struct DepthReprojection {
  ReprojectionStatus status = ReprojectionStatus::kOk;
  Vec2 src_pixel = Vec2::Zero();  // continuous source image coordinates
  double src_sample = 0.0;        // D_src(p_src) as stored in the source map
  double src_depth = 0.0;         // value compared with and fused into ref
  double error = 0.0;             // E_depth
};

// Non-throwing reprojection of reference pixel (col, row) into `src`.
inline DepthReprojection TryReprojectDepth(
    const DepthMap& ref, const DepthMap& src, int col, int row,
    DepthComparison comparison = DepthComparison::kRaw) {
  DepthReprojection r;
  const double d_ref = ref.At(col, row);
  const Vec3 world = BackprojectToWorld(ref.camera(), ref.pose(), col + 0.5,
                                        row + 0.5, d_ref);
  const auto uv = TryProjectPoint(src.camera(), src.pose(), world);
  if (!uv || !InsideImage(src.camera(), *uv)) {
    r.status = ReprojectionStatus::kOutOfSourceFrustum;
    return r;
  }
  r.src_pixel = *uv;
  const auto sample = SampleDepthBilinear(src, uv->x(), uv->y());
  if (!sample) {
    r.status = ReprojectionStatus::kInvalidSourceDepth;
    return r;
  }
  r.src_sample = *sample;
  if (comparison == DepthComparison::kRaw) {
    r.src_depth = *sample;
  } else {
    const Vec3 lifted =
        BackprojectToWorld(src.camera(), src.pose(), uv->x(), uv->y(), *sample);
    r.src_depth = (ref.pose() * lifted).z();
  }
  r.error = std::abs(d_ref - r.src_depth);
  return r;
}

inline DepthReprojection DepthReprojectionError(
    const DepthMap& ref, const DepthMap& src, int col, int row,
    DepthComparison comparison = DepthComparison::kRaw) {
  ref.camera().RequirePinhole();
  src.camera().RequirePinhole();
  TILERECON_CHECK(ref.InBounds(col, row) && ref.Valid(col, row),
                  ErrorCode::kInvalidArgument, "reference pixel is not valid");
  DepthReprojection r = TryReprojectDepth(ref, src, col, row, comparison);
  TILERECON_CHECK(r.status != ReprojectionStatus::kOutOfSourceFrustum,
                  ErrorCode::kOutOfSourceFrustum,
                  "pixel reprojects outside the source view");
  TILERECON_CHECK(r.status != ReprojectionStatus::kInvalidSourceDepth,
                  ErrorCode::kInvalidSourceDepth,
                  "source depth is invalid around the reprojected pixel");
  return r;
}

struct FusedDepth {
  DepthMap depth;                 // D_final, invalid where nothing survived
  std::vector<double> weight;     // aggregate weight per pixel
  // E_depth per source and pixel; NaN where the source gave no sample.
  std::vector<std::vector<double>> errors;

  double ValidFraction() const {
    const std::size_t n = depth.values().size();
    return n == 0 ? 0.0 : static_cast<double>(depth.CountValid()) / n;
  }
};

inline double ConsistencyWeight(double error, const FusionConfig& cfg) {
  const double e = cfg.squared_error ? error * error : error;
  return std::exp(-e / (cfg.sigma * cfg.sigma));
}

// Weighted average of the consistent source depths at every reference pixel.
inline FusedDepth FuseDepth(const DepthMap& ref, std::span<const DepthMap> sources,
                            const FusionConfig& cfg) {
  cfg.Validate();
  ref.camera().RequirePinhole();
  for (const DepthMap& src : sources) src.camera().RequirePinhole();

  const std::size_t num_pixels = ref.values().size();
  FusedDepth fused{DepthMap(ref.camera(), ref.pose()),
                   std::vector<double>(num_pixels, 0.0),
                   std::vector<std::vector<double>>(
                       sources.size(),
                       std::vector<double>(num_pixels,
                                           std::numeric_limits<double>::quiet_NaN()))};
  const double max_error = cfg.MaxError();
  for (int row = 0; row < ref.height(); ++row) {
    for (int col = 0; col < ref.width(); ++col) {
      if (!ref.Valid(col, row)) continue;
      const std::size_t idx = ref.Index(col, row);
      double num = 0.0;
      double den = 0.0;
      for (std::size_t s = 0; s < sources.size(); ++s) {
        const DepthReprojection r =
            TryReprojectDepth(ref, sources[s], col, row, cfg.comparison);
        if (r.status != ReprojectionStatus::kOk) continue;
        fused.errors[s][idx] = r.error;
        if (r.error > max_error) continue;
        const double w = ConsistencyWeight(r.error, cfg);
        num += w * r.src_depth;
        den += w;
      }
      if (den > 0.0) {
        fused.depth.Set(col, row, num / den);
        fused.weight[idx] = den;
      }
    }
  }
  return fused;
}

struct FusionStats {
  double valid_fraction = 0.0;
  double mean_weight = 0.0;  // over fused pixels
  double mean_error = 0.0;   // over available per-source errors
};

inline FusionStats ComputeFusionStats(const FusedDepth& fused) {
  FusionStats stats;
  stats.valid_fraction = fused.ValidFraction();
  double weight_sum = 0.0;
  std::size_t weight_count = 0;
  for (std::size_t i = 0; i < fused.weight.size(); ++i) {
    if (fused.weight[i] > 0.0) {
      weight_sum += fused.weight[i];
      ++weight_count;
    }
  }
  double error_sum = 0.0;
  std::size_t error_count = 0;
  for (const auto& per_source : fused.errors) {
    for (double e : per_source) {
      if (!std::isnan(e)) {
        error_sum += e;
        ++error_count;
      }
    }
  }
  if (weight_count > 0) stats.mean_weight = weight_sum / weight_count;
  if (error_count > 0) stats.mean_error = error_sum / error_count;
  return stats;
}

// ---------------------------------------------------------------------------
// Adaptive densification window

// Mean gradient magnitude over all h*w pixels. Central differences where both
// neighbors are valid, one-sided where only one is; invalid pixels add 0.
inline double MeanDepthGradient(const DepthMap& depth) {
  const int w = depth.width();
  const int h = depth.height();
  if (w == 0 || h == 0) return 0.0;
  const auto axis_gradient = [&](int col, int row, int dc, int dr) {
    const double center = depth.At(col, row);
    const bool has_next = depth.InBounds(col + dc, row + dr) &&
                          depth.Valid(col + dc, row + dr);
    const bool has_prev = depth.InBounds(col - dc, row - dr) &&
                          depth.Valid(col - dc, row - dr);
    if (has_next && has_prev) {
      return 0.5 * (depth.At(col + dc, row + dr) - depth.At(col - dc, row - dr));
    }
    if (has_next) return depth.At(col + dc, row + dr) - center;
    if (has_prev) return center - depth.At(col - dc, row - dr);
    return 0.0;
  };
  double sum = 0.0;
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      if (!depth.Valid(col, row)) continue;
      sum += std::hypot(axis_gradient(col, row, 1, 0), axis_gradient(col, row, 0, 1));
    }
  }
  return sum / (static_cast<double>(w) * h);
}

struct DensifyWindow {
  int height = 0;
  int width = 0;
  int row0 = 0;
  int col0 = 0;
  // k / (g + eps) * (h, w) / 2 before rounding and clamping.
  double raw_height = 0.0;
  double raw_width = 0.0;

  bool Contains(int col, int row) const {
    return row >= row0 && row < row0 + height && col >= col0 && col < col0 + width;
  }
};

inline DensifyWindow AdaptiveWindowFromGradient(double mean_gradient, int height,
                                                int width, const FusionConfig& cfg) {
  cfg.Validate();
  const double scale = cfg.k / (mean_gradient + cfg.window_eps);
  DensifyWindow win;
  win.raw_height = scale * height / 2.0;
  win.raw_width = scale * width / 2.0;
  const auto round_clamp = [](double v, int limit) {
    const double r = std::floor(v + 0.5);
    if (!(r < limit)) return limit;  // also catches inf
    return std::max(1, static_cast<int>(r));
  };
  win.height = round_clamp(win.raw_height, std::max(1, height));
  win.width = round_clamp(win.raw_width, std::max(1, width));
  win.row0 = (height - win.height) / 2;
  win.col0 = (width - win.width) / 2;
  return win;
}

inline DensifyWindow AdaptiveWindow(const DepthMap& depth, const FusionConfig& cfg) {
  return AdaptiveWindowFromGradient(MeanDepthGradient(depth), depth.height(),
                                    depth.width(), cfg);
}

struct WindowPoint {
  Vec3 world;
  int col = 0;
  int row = 0;
  std::array<std::uint8_t, 3> color{0, 0, 0};
};

// Lifts every valid pixel inside the window to world coordinates.
// `rgb`, when non-empty, is an interleaved 8-bit image of the same size.
inline std::vector<WindowPoint> BackprojectWindow(
    const DepthMap& depth, const DensifyWindow& window,
    std::span<const std::uint8_t> rgb = {}) {
  depth.camera().RequirePinhole();
  TILERECON_CHECK(rgb.empty() || rgb.size() == depth.values().size() * 3,
                  ErrorCode::kDimensionMismatch, "color image size mismatch");
  std::vector<WindowPoint> points;
  for (int row = window.row0; row < window.row0 + window.height; ++row) {
    for (int col = window.col0; col < window.col0 + window.width; ++col) {
      if (!depth.InBounds(col, row) || !depth.Valid(col, row)) continue;
      WindowPoint p;
      p.world = BackprojectToWorld(depth.camera(), depth.pose(), col + 0.5,
                                   row + 0.5, depth.At(col, row));
      p.col = col;
      p.row = row;
      if (!rgb.empty()) {
        const std::size_t i = depth.Index(col, row) * 3;
        p.color = {rgb[i], rgb[i + 1], rgb[i + 2]};
      }
      points.push_back(p);
    }
  }
  return points;
}

// ---------------------------------------------------------------------------
// Normal consistency and loss

// 1 - cos(angle) between the two normals, in [0, 2].
inline double NormalConsistencyError(const Vec3& n_ref, const Vec3& n_src) {
  const double a = n_ref.norm();
  const double b = n_src.norm();
  TILERECON_CHECK(a > 0.0 && b > 0.0, ErrorCode::kZeroNormal, "zero-length normal");
  return 1.0 - n_ref.dot(n_src) / (a * b);
}

struct LossWeights {
  double alpha = 0.01;
  double beta = 0.1;

  void Validate() const {
    TILERECON_CHECK(alpha >= 0.0 && beta >= 0.0, ErrorCode::kInvalidValue,
                    "loss weights must be non-negative");
  }
};

// alpha * e_depth + beta * e_normal + l_geo + l_rgb. The last two terms are
// produced by the renderer's own losses and enter as plain scalars.
inline double ComposeLoss(double e_depth, double e_normal, double l_geo, double l_rgb,
                          const LossWeights& w = {}) {
  w.Validate();
  TILERECON_CHECK(std::isfinite(e_depth) && std::isfinite(e_normal) &&
                      std::isfinite(l_geo) && std::isfinite(l_rgb),
                  ErrorCode::kNonFinite, "loss term is not finite");
  return w.alpha * e_depth + w.beta * e_normal + l_geo + l_rgb;
}

}  // namespace tilerecon
