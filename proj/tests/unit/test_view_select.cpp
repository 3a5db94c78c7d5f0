#include <gtest/gtest.h>

#include <random>

#include "oracles/oracles.hpp"
#include "support/test_support.hpp"
#include "tilerecon/view_select.hpp"

namespace tilerecon {
namespace {

// Cameras at the given centers looking at `target`; every point is observed
// by every camera.
SparseModel Rig(const std::vector<Vec3>& centers, const std::vector<Vec3>& points,
                const Vec3& target = Vec3::Zero()) {
  SparseModel model;
  const Camera cam = Camera::Pinhole(1, 200, 200, 100, 100, 100, 100);
  model.cameras.Add(1, cam);
  for (std::size_t i = 0; i < centers.size(); ++i) {
    ImageRecord image;
    image.image_id = static_cast<std::uint32_t>(i + 1);
    image.camera_id = 1;
    image.name = std::to_string(i + 1);
    image.SetPose(Rigid3::LookAt(centers[i], target));
    model.images.Add(image.image_id, image);
  }
  for (std::size_t k = 0; k < points.size(); ++k) {
    Point3D p;
    p.point_id = k + 1;
    p.xyz = points[k];
    for (auto& image : model.images) {
      const Vec2 uv = ProjectPoint(p.xyz, cam, image.Pose());
      p.track.push_back({image.image_id, static_cast<std::uint32_t>(image.observations.size())});
      image.observations.push_back({uv.x(), uv.y(), static_cast<std::int64_t>(p.point_id)});
    }
    model.points.Add(p.point_id, p);
  }
  return model;
}

TEST(BaselineAngle, OrthogonalAndIdentical) {
  EXPECT_NEAR(BaselineAngle({0, 0, 1}, {1, 0, 0}, {-1, 0, 0}), 90.0, 1e-12);
  EXPECT_EQ(BaselineAngle({0, 0, 1}, {1, 0, 0}, {1, 0, 0}), 0.0);
  EXPECT_THROW(BaselineAngle({1, 0, 0}, {1, 0, 0}, {0, 1, 0}), Error);
}

TEST(BaselineAngle, SymmetricAndMatchesAcos) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int t = 0; t < 200; ++t) {
    const Vec3 p(g(rng), g(rng), g(rng)), a(g(rng), g(rng), g(rng)), b(g(rng), g(rng), g(rng));
    EXPECT_EQ(BaselineAngle(p, a, b), BaselineAngle(p, b, a));
    EXPECT_NEAR(BaselineAngle(p, a, b), oracle::AngleDeg(p, a, b), 1e-6);
  }
}

TEST(BaselineWeight, PeakAndBranches) {
  const PairScoreConfig cfg;
  EXPECT_EQ(BaselineWeight(5.0, cfg), 1.0);
  EXPECT_NEAR(BaselineWeight(4.0, cfg), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(BaselineWeight(15.0, cfg), std::exp(-0.5), 1e-15);
  EXPECT_EQ(PointPairContribution(91.0, cfg), 0.0);
  PairScoreConfig soft;
  soft.hard_cutoff = false;
  EXPECT_GT(PointPairContribution(91.0, soft), 0.0);
}

TEST(PairScore, PointsAtPreferredAngleCountOne) {
  // Centers placed so every point sees them 5 degrees apart.
  const double half = DegToRad(2.5);
  const std::vector<Vec3> centers{{-10 * std::sin(half), 10 * std::cos(half), 0},
                                  {10 * std::sin(half), 10 * std::cos(half), 0}};
  const SparseModel model = Rig(centers, {{0, 0, 0}});
  EXPECT_NEAR(PairScore(1, 2, model, {}, 100.0), 1.0, 1e-12);
}

TEST(PairScore, DistanceGateAndNoSharedPoints) {
  const SparseModel model = Rig({{-1, 10, 0}, {1, 10, 0}}, {{0, 0, 0}, {0.1, 0, 0.2}});
  EXPECT_GT(PairScore(1, 2, model, {}, 2.0), 0.0);
  EXPECT_EQ(PairScore(1, 2, model, {}, 1.999), 0.0);
  const SparseModel lonely = Rig({{-1, 10, 0}, {1, 10, 0}}, {});
  EXPECT_EQ(PairScore(1, 2, lonely, {}, 100.0), 0.0);
  EXPECT_THROW(PairScore(1, 1, model, {}, 100.0), Error);
}

TEST(PairScore, TableAndDirectAgreeWithOracle) {
  std::mt19937_64 rng(2);
  const SparseModel model = test::RandomModel(rng);
  const PairScoreTable table = PairScoreTable::Build(model, {});
  for (std::uint32_t i = 1; i <= 12; ++i) {
    for (std::uint32_t j = 1; j <= 12; ++j) {
      if (i == j) continue;
      const double want = oracle::PairScore(model, i, j, {}, 15.0);
      EXPECT_TRUE(test::NearRel(PairScore(i, j, model, {}, 15.0), want, 1e-9));
      EXPECT_TRUE(test::NearRel(table.Score(i, j, 15.0), want, 1e-9));
      EXPECT_EQ(table.Score(i, j, 15.0), table.Score(j, i, 15.0));
    }
  }
}

TEST(SelectSourceViews, TopThreeTiesAndShortLists) {
  const std::vector<std::uint32_t> cands{1, 2, 3, 4, 5, 6};
  const auto by_table = [](std::map<std::uint32_t, double> s) {
    return [s](std::uint32_t, std::uint32_t j) { return s.count(j) ? s.at(j) : 0.0; };
  };
  ViewGroup g = SelectSourceViews(1, cands, by_table({{2, 5}, {3, 4}, {4, 3}, {5, 2}, {6, 1}}));
  EXPECT_EQ(g.src_image_ids, (std::vector<std::uint32_t>{2, 3, 4}));
  g = SelectSourceViews(1, cands, by_table({{4, 2}, {6, 1}}));
  EXPECT_EQ(g.src_image_ids, (std::vector<std::uint32_t>{4, 6}));
  g = SelectSourceViews(1, cands, by_table({{6, 1}, {3, 1}, {5, 1}, {2, 1}}));
  EXPECT_EQ(g.src_image_ids, (std::vector<std::uint32_t>{2, 3, 5}));
  g = SelectSourceViews(1, cands, by_table({}));
  EXPECT_TRUE(g.src_image_ids.empty());
  EXPECT_EQ(g.ref_image_id, 1u);
}

TEST(ProjectPoint, OpticalAxisAndOffset) {
  const Camera cam = Camera::Pinhole(1, 100, 100, 100, 100, 50, 50);
  EXPECT_EQ(ProjectPoint({0, 0, 3}, cam, Rigid3{}), Vec2(50, 50));
  EXPECT_EQ(ProjectPoint({1, 0, 2}, cam, Rigid3{}), Vec2(100, 50));
  try {
    ProjectPoint({0, 0, -1}, cam, Rigid3{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBehindCamera);
  }
  Camera radial = cam;
  radial.model = CameraModel::kSimpleRadial;
  radial.params = {100, 50, 50, 0.1};
  try {
    ProjectPoint({0, 0, 1}, radial, Rigid3{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnsupportedCamera);
  }
}

TEST(OptimalGroupForPoint, PrincipalPointGroupWinsAndTiesGoLow) {
  const SparseModel model =
      Rig({{0, 10, 0.01}, {0.5, 10, 0}, {-0.5, 10, 0}, {0, 10, 0.5}, {3, 10, 0}}, {{0, 0, 0}});
  // Images 1..4 look at the origin, so the point sits on every principal point.
  const std::vector<ViewGroup> groups{{4, {1, 2, 3}}, {1, {2, 3, 4}}, {5, {1}}};
  EXPECT_EQ(OptimalGroupForPoint(1, groups, model).ref_image_id, 1u);
  EXPECT_NEAR(MeanPrincipalDistance({0, 0, 0}, groups[1], model).value(), 0.0, 1e-9);
}

TEST(OptimalGroupForPoint, BehindCameraMemberExcludesGroup) {
  SparseModel model = Rig({{0, 10, 0.01}, {1, 10, 0}, {0, -10, 0.01}}, {{0, 0, 0}});
  // Turn image 3 away from the point.
  model.images.at(3).SetPose(Rigid3::LookAt({0, -10, 0.01}, {0, -20, 0}));
  const std::vector<ViewGroup> groups{{3, {1}}, {2, {1}}};
  EXPECT_EQ(OptimalGroupForPoint(1, groups, model).ref_image_id, 2u);
  try {
    OptimalGroupForPoint(1, std::vector<ViewGroup>{{3, {1}}}, model);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoVisibleGroup);
  }
}

SubRegion RegionOf(const SparseModel& model) {
  SubRegion region;
  region.bounds = SceneBounds::Of({-5, -1, -5}, {5, 1, 5});
  for (const auto& p : model.points) region.point_ids.push_back(p.point_id);
  for (const auto& image : model.images) region.matched_image_ids.push_back(image.image_id);
  return region;
}

TEST(AssignViewsToRegion, SinglePointUsesItsGroup) {
  const SparseModel model =
      Rig({{0, 10, 0.01}, {0.4, 10, 0}, {-0.4, 10, 0}, {0, 10, 0.4}}, {{0, 0, 0}});
  const auto table = PairScoreTable::Build(model, {});
  const auto a = AssignViewsToRegion(RegionOf(model), model, {}, table);
  EXPECT_EQ(a.used_image_ids, (std::vector<std::uint32_t>{1, 2, 3, 4}));
  EXPECT_TRUE(a.excluded_image_ids.empty());
  ASSERT_EQ(a.groups.size(), 1u);
  EXPECT_EQ(a.groups.at(1).Members().size(), 4u);
}

TEST(AssignViewsToRegion, UnusedImageExcluded) {
  const SparseModel model = Rig({{0, 10, 0.01}, {0.4, 10, 0}, {-0.4, 10, 0}, {0, 10, 0.4},
                                 {0.2, 10, 0.2}, {-0.2, 10, -0.2}},
                                {{0, 0, 0}});
  const auto table = PairScoreTable::Build(model, {});
  const auto a = AssignViewsToRegion(RegionOf(model), model, {}, table);
  EXPECT_EQ(a.used_image_ids.size(), 4u);
  EXPECT_EQ(a.excluded_image_ids.size(), 2u);
  std::set<std::uint32_t> all(a.used_image_ids.begin(), a.used_image_ids.end());
  for (auto id : a.excluded_image_ids) EXPECT_TRUE(all.insert(id).second);
  EXPECT_EQ(all.size(), 6u);
}

TEST(AssignViewsToRegion, RemovingUnusedImageKeepsChoices) {
  std::mt19937_64 rng(3);
  test::RandomModelOptions opt;
  opt.num_images = 20;
  opt.num_points = 300;
  opt.extent = 4.0;
  const SparseModel model = test::RandomModel(rng, opt);
  SubRegion region = RegionOf(model);
  const auto table = PairScoreTable::Build(model, {});
  const auto a = AssignViewsToRegion(region, model, {}, table);
  ASSERT_FALSE(a.excluded_image_ids.empty());
  const std::uint32_t drop = a.excluded_image_ids.front();
  std::vector<std::uint32_t> keep;
  for (const auto& image : model.images) {
    if (image.image_id != drop) keep.push_back(image.image_id);
  }
  std::vector<std::uint64_t> points;
  for (const auto& p : model.points) points.push_back(p.point_id);
  const SparseModel reduced = ExtractSubModel(model, keep, points);
  SubRegion reduced_region = region;
  std::erase(reduced_region.matched_image_ids, drop);
  const auto b = AssignViewsToRegion(reduced_region, reduced,
                                     {}, PairScoreTable::Build(reduced, {}));
  EXPECT_EQ(a.groups, b.groups);
  EXPECT_EQ(a.used_image_ids, b.used_image_ids);
}

}  // namespace
}  // namespace tilerecon
