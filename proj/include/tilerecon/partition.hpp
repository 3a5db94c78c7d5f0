#pragma once

// Spatial partitioning of a sparse model: reprojection-error filtering,
// voxel-density boundary refinement, n x n gridding on the xz ground plane,
// sub-region retention and boundary expansion.

#include <algorithm>
#include <set>
#include <span>
#include <unordered_map>

#include "tilerecon/colmap_io.hpp"
#include "tilerecon/scene_types.hpp"

namespace tilerecon {

struct DensityFilterConfig {
  double error_threshold = 1.5;        // pixels
  double voxel_size = 2.0;             // scene units
  double density_fraction = 1.0 / 3.0;

  void Validate() const {
    TILERECON_CHECK(error_threshold > 0.0, ErrorCode::kInvalidValue,
                    "error_threshold must be positive");
    TILERECON_CHECK(voxel_size > 0.0, ErrorCode::kInvalidValue,
                    "voxel_size must be positive");
    TILERECON_CHECK(density_fraction > 0.0 && density_fraction <= 1.0,
                    ErrorCode::kInvalidValue,
                    "density_fraction must be in (0, 1]");
  }
};

struct VoxelKey {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;

  auto operator<=>(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4Full + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

inline VoxelKey VoxelOf(const Vec3& p, double voxel_size) {
  return {static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
}

struct VoxelGridSummary {
  std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> occupancy;
  std::size_t max_occupancy = 0;
};

// Ids of points whose reprojection error does not exceed the threshold, in
// model order.
inline std::vector<std::uint64_t> FilterPointsByError(const SparseModel& model,
                                                      double error_threshold) {
  TILERECON_CHECK(error_threshold > 0.0, ErrorCode::kInvalidValue,
                  "error threshold must be positive");
  std::vector<std::uint64_t> kept;
  kept.reserve(model.points.size());
  for (const Point3D& p : model.points) {
    if (p.error <= error_threshold) kept.push_back(p.point_id);
  }
  return kept;
}

inline VoxelGridSummary ComputeVoxelOccupancy(std::span<const Vec3> points,
                                              double voxel_size) {
  TILERECON_CHECK(voxel_size > 0.0, ErrorCode::kInvalidValue,
                  "voxel size must be positive");
  VoxelGridSummary summary;
  for (const Vec3& p : points) {
    const std::size_t n = ++summary.occupancy[VoxelOf(p, voxel_size)];
    summary.max_occupancy = std::max(summary.max_occupancy, n);
  }
  return summary;
}

// Bounds of the points that fall in dense voxels, i.e. voxels holding
// strictly more than density_fraction * max_occupancy points.
inline SceneBounds RefineBounds(const VoxelGridSummary& summary,
                                std::span<const Vec3> points,
                                double density_fraction, double voxel_size) {
  TILERECON_CHECK(!summary.occupancy.empty(), ErrorCode::kInvalidArgument,
                  "empty voxel summary");
  const double threshold =
      density_fraction * static_cast<double>(summary.max_occupancy);
  SceneBounds bounds;
  for (const Vec3& p : points) {
    const auto it = summary.occupancy.find(VoxelOf(p, voxel_size));
    if (it != summary.occupancy.end() &&
        static_cast<double>(it->second) > threshold) {
      bounds.Extend(p);
    }
  }
  TILERECON_CHECK(!bounds.Empty(), ErrorCode::kEmptyAfterFilter,
                  "no voxel exceeds the density threshold");
  return bounds;
}

// Grid size from the image count: 4 below 1000 images, 6 below 3000, else 8.
inline int ChooseGridSize(std::size_t num_images) {
  TILERECON_CHECK(num_images >= 1, ErrorCode::kInvalidArgument,
                  "need at least one image");
  if (num_images < 1000) return 4;
  if (num_images < 3000) return 6;
  return 8;
}

namespace internal {

inline std::vector<double> GridEdges(double lo, double hi, int n) {
  std::vector<double> edges(n + 1);
  for (int k = 0; k <= n; ++k) edges[k] = lo + (hi - lo) * k / n;
  edges[n] = hi;
  return edges;
}

// Cell index under the [lo, hi) convention with the last cell closed.
inline int CellOf(const std::vector<double>& edges, double v) {
  const int n = static_cast<int>(edges.size()) - 1;
  const int idx = static_cast<int>(
      std::upper_bound(edges.begin(), edges.end(), v) - edges.begin() - 1);
  return std::clamp(idx, 0, n - 1);
}

}  // namespace internal

// Assigns each point lying inside `bounds` to one grid cell by its xz position.
// Non-empty cells become regions in row-major order; empty cells are recorded
// as dropped with reason "empty".
inline PartitionResult PartitionPoints(const SparseModel& model,
                                       std::span<const std::uint64_t> point_ids,
                                       const SceneBounds& bounds, int n) {
  TILERECON_CHECK(n >= 1, ErrorCode::kInvalidArgument, "grid size must be >= 1");
  TILERECON_CHECK(!bounds.Empty() && bounds.max.x() > bounds.min.x() &&
                      bounds.max.z() > bounds.min.z(),
                  ErrorCode::kDegenerateBounds,
                  "bounds have no extent in x or z");
  const auto xs = internal::GridEdges(bounds.min.x(), bounds.max.x(), n);
  const auto zs = internal::GridEdges(bounds.min.z(), bounds.max.z(), n);

  std::vector<std::vector<std::uint64_t>> cell_points(n * n);
  PartitionResult result;
  result.grid_n = n;
  result.scene_bounds = bounds;
  for (const std::uint64_t id : point_ids) {
    const Vec3& p = model.points.at(id).xyz;
    if (!bounds.Contains(p)) {
      ++result.discarded_points;
      continue;
    }
    const int col = internal::CellOf(xs, p.x());
    const int row = internal::CellOf(zs, p.z());
    cell_points[row * n + col].push_back(id);
  }

  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      auto& ids = cell_points[row * n + col];
      if (ids.empty()) {
        result.dropped.push_back({{row, col}, "empty", 0, 0});
        continue;
      }
      SubRegion region;
      region.grid_index = {row, col};
      region.bounds = SceneBounds::Of(
          Vec3(xs[col], bounds.min.y(), zs[row]),
          Vec3(xs[col + 1], bounds.max.y(), zs[row + 1]));
      region.closed_max_x = col == n - 1;
      region.closed_max_z = row == n - 1;
      std::sort(ids.begin(), ids.end());
      std::set<std::uint32_t> images;
      for (const std::uint64_t id : ids) {
        for (const TrackElement& el : model.points.at(id).track) {
          if (model.images.Contains(el.image_id)) images.insert(el.image_id);
        }
      }
      region.point_ids = std::move(ids);
      region.matched_image_ids.assign(images.begin(), images.end());
      region.init_bounds = region.bounds;
      result.regions.push_back(std::move(region));
    }
  }
  return result;
}

struct RetentionTotals {
  std::size_t total_points = 0;
  std::size_t total_images = 0;
};

// Keeps a region only if both its point count and matched-image count reach
// 10 % of the per-cell average (total / n^2).
inline PartitionResult RetainSubregions(PartitionResult result,
                                        const RetentionTotals& totals) {
  TILERECON_CHECK(result.grid_n >= 1, ErrorCode::kInvalidArgument,
                  "grid size unknown");
  const double cells = static_cast<double>(result.grid_n) * result.grid_n;
  const double min_points = 0.10 * static_cast<double>(totals.total_points) / cells;
  const double min_images = 0.10 * static_cast<double>(totals.total_images) / cells;

  std::vector<SubRegion> kept;
  for (SubRegion& region : result.regions) {
    const bool points_ok =
        static_cast<double>(region.point_ids.size()) >= min_points;
    const bool images_ok =
        static_cast<double>(region.matched_image_ids.size()) >= min_images;
    if (points_ok && images_ok) {
      kept.push_back(std::move(region));
      continue;
    }
    std::string reason = !points_ok && !images_ok ? "points+images"
                         : !points_ok             ? "points"
                                                  : "images";
    result.dropped.push_back({region.grid_index, std::move(reason),
                              region.point_ids.size(),
                              region.matched_image_ids.size()});
  }
  result.regions = std::move(kept);
  std::sort(result.dropped.begin(), result.dropped.end(),
            [](const DroppedCell& a, const DroppedCell& b) {
              return a.grid_index < b.grid_index;
            });
  return result;
}

// Scales the xz extent about its center; y is left unchanged.
inline SubRegion ExpandRegionBounds(SubRegion region, double factor = 2.0) {
  TILERECON_CHECK(factor >= 1.0, ErrorCode::kInvalidValue,
                  "expansion factor must be >= 1");
  const Vec3 center = region.bounds.Center();
  const Vec3 half = 0.5 * region.bounds.Extent();
  SceneBounds expanded = region.bounds;
  for (const int axis : {0, 2}) {
    expanded.min[axis] = center[axis] - factor * half[axis];
    expanded.max[axis] = center[axis] + factor * half[axis];
  }
  region.init_bounds = expanded;
  return region;
}

struct PartitionOptions {
  DensityFilterConfig density;
  int grid_n = 0;  // 0 picks the size from the image count
  double expand_factor = 2.0;
};

// Full spatial stage: filter, refine, grid, retain, expand.
inline PartitionResult PartitionScene(const SparseModel& model,
                                      const PartitionOptions& options) {
  options.density.Validate();
  const auto filtered = FilterPointsByError(model, options.density.error_threshold);
  TILERECON_CHECK(!filtered.empty(), ErrorCode::kEmptyAfterFilter,
                  "no point passes the reprojection error filter");
  std::vector<Vec3> positions;
  positions.reserve(filtered.size());
  for (const auto id : filtered) positions.push_back(model.points.at(id).xyz);

  const auto summary = ComputeVoxelOccupancy(positions, options.density.voxel_size);
  const SceneBounds bounds =
      RefineBounds(summary, positions, options.density.density_fraction,
                   options.density.voxel_size);
  const int n = options.grid_n > 0 ? options.grid_n
                                   : ChooseGridSize(model.images.size());
  PartitionResult result = PartitionPoints(model, filtered, bounds, n);
  result = RetainSubregions(std::move(result),
                            {filtered.size(), model.images.size()});
  for (SubRegion& region : result.regions) {
    region = ExpandRegionBounds(std::move(region), options.expand_factor);
  }
  return result;
}

}  // namespace tilerecon
