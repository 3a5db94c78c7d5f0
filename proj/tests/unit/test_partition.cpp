#include <gtest/gtest.h>

#include <random>

#include "oracles/oracles.hpp"
#include "support/test_support.hpp"
#include "tilerecon/partition.hpp"

namespace tilerecon {
namespace {

// Points seen by images 1 and 2; images exist so tracks are not dangling.
SparseModel PointsModel(const std::vector<Vec3>& xyz, const std::vector<double>& errors = {}) {
  SparseModel model;
  model.cameras.Add(1, Camera::Pinhole(1, 100, 100, 100, 100, 50, 50));
  for (std::uint32_t i = 1; i <= 2; ++i) {
    ImageRecord image;
    image.image_id = i;
    image.camera_id = 1;
    image.name = std::to_string(i);
    model.images.Add(i, image);
  }
  for (std::size_t k = 0; k < xyz.size(); ++k) {
    Point3D p;
    p.point_id = k + 1;
    p.xyz = xyz[k];
    p.error = errors.empty() ? 0.5 : errors[k];
    p.track = {{1, 0}, {2, 0}};
    model.points.Add(p.point_id, p);
  }
  return model;
}

std::vector<std::uint64_t> AllIds(const SparseModel& model) {
  std::vector<std::uint64_t> ids;
  for (const auto& p : model.points) ids.push_back(p.point_id);
  return ids;
}

TEST(FilterPointsByError, KeepsPointsAtOrBelowThreshold) {
  const auto model = PointsModel({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}, {0.5, 2.0, 1.5});
  EXPECT_EQ(FilterPointsByError(model, 1.5), (std::vector<std::uint64_t>{1, 3}));
}

TEST(FilterPointsByError, AllBelowIsIdentityAndEmptyStaysEmpty) {
  const auto model = PointsModel({{0, 0, 0}, {1, 0, 0}}, {0.1, 0.2});
  EXPECT_EQ(FilterPointsByError(model, 1.5), AllIds(model));
  EXPECT_TRUE(FilterPointsByError(SparseModel{}, 1.5).empty());
  EXPECT_THROW(FilterPointsByError(model, 0.0), Error);
}

TEST(VoxelOccupancy, FloorIndexing) {
  const VoxelKey k = VoxelOf({3.5, -1.2, 4.0}, 2.0);
  EXPECT_EQ(k, (VoxelKey{1, -1, 2}));
}

TEST(VoxelOccupancy, CountsAndEmptyInput) {
  const std::vector<Vec3> pts{{0.1, 0.1, 0.1}, {0.2, 0.3, 0.4}, {5, 5, 5}};
  const auto s = ComputeVoxelOccupancy(pts, 1.0);
  EXPECT_EQ(s.occupancy.at(VoxelKey{0, 0, 0}), 2u);
  EXPECT_EQ(s.max_occupancy, 2u);
  const auto empty = ComputeVoxelOccupancy(std::vector<Vec3>{}, 1.0);
  EXPECT_TRUE(empty.occupancy.empty());
  EXPECT_EQ(empty.max_occupancy, 0u);
}

TEST(RefineBounds, SingleVoxelGivesExactBounds) {
  const std::vector<Vec3> pts{{0.1, 0.2, 0.3}, {0.9, 0.5, 0.4}, {0.4, 0.8, 0.95}};
  const auto s = ComputeVoxelOccupancy(pts, 1.0);
  const SceneBounds b = RefineBounds(s, pts, 1.0 / 3, 1.0);
  EXPECT_EQ(b.min, Vec3(0.1, 0.2, 0.3));
  EXPECT_EQ(b.max, Vec3(0.9, 0.8, 0.95));
}

TEST(RefineBounds, OutlierVoxelExcluded) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < 100; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  pts.emplace_back(50.5, 0.5, 50.5);
  const auto s = ComputeVoxelOccupancy(pts, 2.0);
  const SceneBounds b = RefineBounds(s, pts, 1.0 / 3, 2.0);
  EXPECT_LT(b.max.x(), 2.0);
  EXPECT_LT(b.max.z(), 2.0);
  const auto want = oracle::DenseBounds(pts, 2.0, 1.0 / 3);
  ASSERT_TRUE(want);
  EXPECT_EQ(b.min, want->first);
  EXPECT_EQ(b.max, want->second);
}

TEST(RefineBounds, StrictThresholdAtOneThirdOfNine) {
  // Voxel occupancies 9, 4 and 3; threshold 3 keeps 9 and 4 only.
  std::vector<Vec3> pts;
  for (int i = 0; i < 9; ++i) pts.emplace_back(0.5, 0.5, 0.5);
  for (int i = 0; i < 4; ++i) pts.emplace_back(10.5, 0.5, 0.5);
  for (int i = 0; i < 3; ++i) pts.emplace_back(20.5, 0.5, 0.5);
  const auto s = ComputeVoxelOccupancy(pts, 1.0);
  const SceneBounds b = RefineBounds(s, pts, 1.0 / 3, 1.0);
  EXPECT_EQ(b.max.x(), 10.5);
}

TEST(RefineBounds, FullFractionLeavesNothing) {
  const std::vector<Vec3> pts{{0, 0, 0}};
  const auto s = ComputeVoxelOccupancy(pts, 1.0);
  try {
    RefineBounds(s, pts, 1.0, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyAfterFilter);
  }
}

TEST(RefineBounds, MonotoneInFraction) {
  std::mt19937_64 rng(2);
  std::exponential_distribution<double> e(0.3);
  std::vector<Vec3> pts;
  for (int i = 0; i < 3000; ++i) pts.emplace_back(e(rng), e(rng), e(rng));
  const auto s = ComputeVoxelOccupancy(pts, 1.0);
  SceneBounds prev = RefineBounds(s, pts, 0.01, 1.0);
  for (double tau = 0.05; tau < 0.95; tau += 0.05) {
    const SceneBounds b = RefineBounds(s, pts, tau, 1.0);
    EXPECT_TRUE(prev.ContainsBox(b)) << tau;
    prev = b;
  }
}

TEST(ChooseGridSize, TableAndBreakpoints) {
  EXPECT_EQ(ChooseGridSize(670), 4);
  EXPECT_EQ(ChooseGridSize(1500), 6);
  EXPECT_EQ(ChooseGridSize(2582), 6);
  EXPECT_EQ(ChooseGridSize(5871), 8);
  EXPECT_EQ(ChooseGridSize(1), 4);
  EXPECT_EQ(ChooseGridSize(999), 4);
  EXPECT_EQ(ChooseGridSize(1000), 6);
  EXPECT_EQ(ChooseGridSize(2999), 6);
  EXPECT_EQ(ChooseGridSize(3000), 8);
  EXPECT_THROW(ChooseGridSize(0), Error);
}

TEST(PartitionPoints, OnePointPerCellOfTwoByTwo) {
  const auto model = PointsModel({{1, 0, 1}, {3, 0, 1}, {1, 0, 3}, {3, 0, 3}});
  const SceneBounds b = SceneBounds::Of({0, -1, 0}, {4, 1, 4});
  const PartitionResult r = PartitionPoints(model, AllIds(model), b, 2);
  ASSERT_EQ(r.regions.size(), 4u);
  for (const auto& region : r.regions) EXPECT_EQ(region.point_ids.size(), 1u);
  EXPECT_EQ(r.regions[1].grid_index, (GridIndex{0, 1}));
  EXPECT_EQ(r.regions[1].point_ids.front(), 2u);
  EXPECT_EQ(r.regions[2].point_ids.front(), 3u);
  EXPECT_EQ(r.regions[0].matched_image_ids, (std::vector<std::uint32_t>{1, 2}));
}

TEST(PartitionPoints, InternalBoundaryGoesToUpperCellLastEdgeClosed) {
  // Cells are [lo, hi) except the last, which also holds its max edge.
  const auto model = PointsModel({{2, 0, 1}, {4, 0, 4}, {0, 0, 0}});
  const SceneBounds b = SceneBounds::Of({0, -1, 0}, {4, 1, 4});
  const PartitionResult r = PartitionPoints(model, AllIds(model), b, 2);
  std::map<std::uint64_t, GridIndex> cell;
  for (const auto& region : r.regions) {
    for (auto id : region.point_ids) cell[id] = region.grid_index;
  }
  EXPECT_EQ(cell.at(1), (GridIndex{0, 1}));
  EXPECT_EQ(cell.at(2), (GridIndex{1, 1}));
  EXPECT_EQ(cell.at(3), (GridIndex{0, 0}));
  EXPECT_EQ(oracle::Cell(2.0, 0.0, 4.0, 2), 1);
}

TEST(PartitionPoints, OutsidePointsDiscardedAndEmptyCellsDropped) {
  const auto model = PointsModel({{1, 0, 1}, {9, 0, 9}});
  const SceneBounds b = SceneBounds::Of({0, -1, 0}, {4, 1, 4});
  const PartitionResult r = PartitionPoints(model, AllIds(model), b, 2);
  EXPECT_EQ(r.discarded_points, 1u);
  ASSERT_EQ(r.regions.size(), 1u);
  EXPECT_EQ(r.dropped.size(), 3u);
  for (const auto& d : r.dropped) EXPECT_EQ(d.reason, "empty");
}

TEST(PartitionPoints, DegenerateBoundsRejected) {
  const auto model = PointsModel({{1, 0, 1}});
  try {
    PartitionPoints(model, AllIds(model), SceneBounds::Of({1, 0, 0}, {1, 1, 4}), 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateBounds);
  }
}

TEST(PartitionPoints, RegionYExtentIsGlobal) {
  const auto model = PointsModel({{1, 0.2, 1}, {3, 0.4, 3}});
  const SceneBounds b = SceneBounds::Of({0, -1, 0}, {4, 2, 4});
  const PartitionResult r = PartitionPoints(model, AllIds(model), b, 2);
  for (const auto& region : r.regions) {
    EXPECT_EQ(region.bounds.min.y(), -1.0);
    EXPECT_EQ(region.bounds.max.y(), 2.0);
  }
}

PartitionResult CountsResult(int n, const std::vector<std::pair<std::size_t, std::size_t>>& counts) {
  PartitionResult r;
  r.grid_n = n;
  int k = 0;
  for (const auto& [points, images] : counts) {
    SubRegion region;
    region.grid_index = {k / n, k % n};
    ++k;
    for (std::size_t i = 0; i < points; ++i) region.point_ids.push_back(i + 1);
    for (std::size_t i = 0; i < images; ++i) region.matched_image_ids.push_back(i + 1);
    r.regions.push_back(region);
  }
  return r;
}

TEST(RetainSubregions, TenPercentOfAverage) {
  // n = 2, 100 points and 80 images: thresholds 2.5 points and 2 images.
  const auto r = RetainSubregions(CountsResult(2, {{2, 10}, {30, 10}, {3, 10}, {65, 1}}), {100, 80});
  ASSERT_EQ(r.regions.size(), 2u);
  EXPECT_EQ(r.regions[0].point_ids.size(), 30u);
  EXPECT_EQ(r.regions[1].point_ids.size(), 3u);
  ASSERT_EQ(r.dropped.size(), 2u);
  EXPECT_EQ(r.dropped[0].reason, "points");
  EXPECT_EQ(r.dropped[1].reason, "images");
}

TEST(RetainSubregions, InvariantUnderRegionOrder) {
  auto a = CountsResult(2, {{2, 10}, {30, 10}, {3, 0}, {65, 1}});
  auto b = a;
  std::reverse(b.regions.begin(), b.regions.end());
  const auto ra = RetainSubregions(a, {100, 40});
  const auto rb = RetainSubregions(b, {100, 40});
  std::set<GridIndex> ka, kb;
  for (const auto& r : ra.regions) ka.insert(r.grid_index);
  for (const auto& r : rb.regions) kb.insert(r.grid_index);
  EXPECT_EQ(ka, kb);
  ASSERT_EQ(ra.dropped.size(), rb.dropped.size());
  for (std::size_t i = 0; i < ra.dropped.size(); ++i) {
    EXPECT_EQ(ra.dropped[i].grid_index, rb.dropped[i].grid_index);
    EXPECT_EQ(ra.dropped[i].reason, rb.dropped[i].reason);
  }
}

TEST(ExpandRegionBounds, ScalesXzAboutCenter) {
  SubRegion region;
  region.bounds = SceneBounds::Of({0, 1, 0}, {10, 2, 10});
  auto e = ExpandRegionBounds(region, 2.0).init_bounds;
  EXPECT_EQ(e.min, Vec3(-5, 1, -5));
  EXPECT_EQ(e.max, Vec3(15, 2, 15));
  EXPECT_EQ(ExpandRegionBounds(region, 1.0).init_bounds.min, region.bounds.min);
  EXPECT_EQ(ExpandRegionBounds(region, 1.0).init_bounds.max, region.bounds.max);
  region.bounds = SceneBounds::Of({0, 0, 0}, {4, 1, 8});
  e = ExpandRegionBounds(region, 2.0).init_bounds;
  EXPECT_EQ(e.min, Vec3(-2, 0, -4));
  EXPECT_EQ(e.max, Vec3(6, 1, 12));
  EXPECT_THROW(ExpandRegionBounds(region, 0.5), Error);
}

TEST(PartitionScene, EveryFilteredPointInExactlyOneRegion) {
  std::mt19937_64 rng(3);
  test::RandomModelOptions opt;
  opt.num_images = 30;
  opt.num_points = 2000;
  const auto model = test::RandomModel(rng, opt);
  PartitionOptions po;
  po.grid_n = 3;
  po.density.voxel_size = 4.0;
  po.density.density_fraction = 0.05;
  const auto r = PartitionScene(model, po);
  std::map<std::uint64_t, int> seen;
  for (const auto& region : r.regions) {
    EXPECT_TRUE(region.init_bounds.ContainsBox(region.bounds));
    for (auto id : region.point_ids) ++seen[id];
  }
  for (const auto& [id, count] : seen) EXPECT_EQ(count, 1) << id;
  EXPECT_EQ(r.regions.size() + r.dropped.size(), 9u);
}

}  // namespace
}  // namespace tilerecon
