#include <gtest/gtest.h>

#include <random>

#include "oracles/oracles.hpp"
#include "support/test_support.hpp"
#include "tilerecon/mv_depth.hpp"

namespace tilerecon {
namespace {

Camera SmallCamera(int w = 32, int h = 24) {
  return Camera::Pinhole(1, w, h, 30.0, 30.0, 0.5 * w, 0.5 * h);
}

DepthMap Constant(const Camera& cam, const Rigid3& pose, double d) {
  DepthMap m(cam, pose);
  for (double& v : m.values()) v = d;
  return m;
}

RaySamples Ray(std::vector<RaySample> s) {
  RaySamples r;
  r.samples = std::move(s);
  return r;
}

TEST(RayDepthMean, WeightedMeanWithEpsilonGuard) {
  EXPECT_NEAR(RayDepthMean(Ray({{1, 0.5, 1}, {3, 0.5, 1}})), 2.0, 1e-7);
  EXPECT_NEAR(RayDepthMean(Ray({{5, 1, 1}})), 5.0 / (1 + 1e-8), 1e-15);
  EXPECT_EQ(RayDepthMean(Ray({{1, 0, 1}, {2, 0, 1}})), 0.0);
  EXPECT_EQ(RayDepthMean(Ray({})), 0.0);
}

TEST(RayDepthMean, ScaleInvariantUpToEpsilon) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    RaySamples a;
    double z = 0.0;
    for (int i = 0; i < 6; ++i) a.samples.push_back({z += u(rng), u(rng), u(rng)});
    RaySamples b = a;
    for (auto& s : b.samples) s.weight *= 7.5;
    EXPECT_NEAR(RayDepthMean(a), RayDepthMean(b), a.epsilon * 1e3 * z);
  }
}

TEST(RayDepthMedian, LastSampleAboveHalfTransmittance) {
  EXPECT_EQ(RayDepthMedian(Ray({{1, 1, 0.9}, {2, 1, 0.6}, {3, 1, 0.4}})), 2.0);
  EXPECT_EQ(RayDepthMedian(Ray({{7, 1, 1.0}})), 7.0);
  EXPECT_FALSE(RayDepthMedian(Ray({{1, 1, 0.5}, {2, 1, 0.2}})).has_value());
}

TEST(DepthReprojectionError, IdenticalViewsGiveZero) {
  const Camera cam = SmallCamera();
  const DepthMap d = test::RenderPlane(cam, Rigid3{}, Vec3(0.1, 0.2, 1).normalized(), 4.0);
  for (int row = 0; row < d.height(); ++row) {
    for (int col = 0; col < d.width(); ++col) {
      EXPECT_NEAR(DepthReprojectionError(d, d, col, row).error, 0.0, 1e-12);
    }
  }
}

TEST(DepthReprojectionError, ConstantOffset) {
  const Camera cam = SmallCamera();
  const DepthMap ref = Constant(cam, Rigid3{}, 3.0);
  const DepthMap src = Constant(cam, Rigid3{}, 3.25);
  EXPECT_NEAR(DepthReprojectionError(ref, src, 5, 7).error, 0.25, 1e-12);
}

TEST(DepthReprojectionError, FrontoParallelPlaneTwoCameras) {
  const Camera cam = SmallCamera(64, 48);
  Rigid3 shifted;
  shifted.translation = Vec3(-0.2, 0, 0);
  const DepthMap ref = test::RenderPlane(cam, Rigid3{}, Vec3::UnitZ(), 5.0);
  const DepthMap src = test::RenderPlane(cam, shifted, Vec3::UnitZ(), 5.0);
  int checked = 0;
  for (int row = 0; row < ref.height(); ++row) {
    for (int col = 0; col < ref.width(); ++col) {
      const auto r = TryReprojectDepth(ref, src, col, row);
      if (r.status != ReprojectionStatus::kOk) continue;
      EXPECT_NEAR(r.error, 0.0, 1e-5);
      ++checked;
    }
  }
  EXPECT_GT(checked, 2000);
}

TEST(DepthReprojectionError, FrustumAndInvalidDepthErrors) {
  const Camera cam = SmallCamera();
  const DepthMap ref = Constant(cam, Rigid3{}, 3.0);
  Rigid3 away;
  away.translation = Vec3(100, 0, 0);
  try {
    DepthReprojectionError(ref, Constant(cam, away, 3.0), 3, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOutOfSourceFrustum);
  }
  try {
    DepthReprojectionError(ref, DepthMap(cam, Rigid3{}), 3, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidSourceDepth);
  }
}

TEST(FuseDepth, ConsistentSourcesReproduceDepthWithUnitWeights) {
  const Camera cam = SmallCamera();
  const DepthMap ref = Constant(cam, Rigid3{}, 2.0);
  const std::vector<DepthMap> srcs(3, ref);
  const FusedDepth f = FuseDepth(ref, srcs, {});
  for (int row = 0; row < ref.height(); ++row) {
    for (int col = 0; col < ref.width(); ++col) {
      EXPECT_DOUBLE_EQ(f.depth.At(col, row), 2.0);
      EXPECT_DOUBLE_EQ(f.weight[ref.Index(col, row)], 3.0);
    }
  }
}

TEST(FuseDepth, ExponentialWeightsOfTwoSurvivors) {
  const Camera cam = SmallCamera();
  Rigid3 away;
  away.translation = Vec3(100, 0, 0);
  const DepthMap ref = Constant(cam, Rigid3{}, 2.0);
  const std::vector<DepthMap> srcs{Constant(cam, Rigid3{}, 2.0), Constant(cam, Rigid3{}, 4.0),
                                   Constant(cam, away, 2.0)};
  FusionConfig cfg;
  cfg.sigma = std::sqrt(2.0);  // sigma^2 equals the second source's error
  const FusedDepth f = FuseDepth(ref, srcs, cfg);
  const double e = std::exp(-1.0);
  EXPECT_NEAR(f.depth.At(4, 4), (2.0 + e * 4.0) / (1.0 + e), 1e-12);
}

TEST(FuseDepth, AllSourcesOutsideInvalidatesPixel) {
  const Camera cam = SmallCamera();
  Rigid3 away;
  away.translation = Vec3(100, 0, 0);
  const DepthMap ref = Constant(cam, Rigid3{}, 2.0);
  const std::vector<DepthMap> srcs(3, Constant(cam, away, 2.0));
  const FusedDepth f = FuseDepth(ref, srcs, {});
  EXPECT_EQ(f.depth.CountValid(), 0u);
}

TEST(FuseDepth, ConvexCombinationAndOracle) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Camera cam = Camera::Pinhole(1, 16, 16, 15, 15, 8, 8);
  for (int t = 0; t < 20; ++t) {
    const auto pose = [&] {
      return Rigid3::LookAt(Vec3(u(rng) - 0.5, u(rng) - 0.5, 0), Vec3(0, 0, 4), -Vec3::UnitY());
    };
    const auto noisy = [&](DepthMap m) {
      for (double& v : m.values()) v += 0.05 * (u(rng) - 0.5);
      return m;
    };
    const DepthMap ref = noisy(test::RenderPlane(cam, pose(), Vec3::UnitZ(), 4.0));
    std::vector<DepthMap> srcs;
    for (int s = 0; s < 3; ++s) srcs.push_back(noisy(test::RenderPlane(cam, pose(), Vec3::UnitZ(), 4.0)));
    FusionConfig cfg;
    cfg.sigma = 0.1;
    const FusedDepth f = FuseDepth(ref, srcs, cfg);
    const auto want = oracle::Fuse(ref, srcs, cfg.sigma, cfg.MaxError());
    for (int row = 0; row < 16; ++row) {
      for (int col = 0; col < 16; ++col) {
        const auto& w = want[ref.Index(col, row)];
        ASSERT_EQ(f.depth.Valid(col, row), w.valid);
        if (!w.valid) continue;
        EXPECT_NEAR(f.depth.At(col, row), w.depth, 1e-9);
        EXPECT_GE(f.depth.At(col, row), w.min_sample - 1e-12);
        EXPECT_LE(f.depth.At(col, row), w.max_sample + 1e-12);
      }
    }
  }
}

TEST(MeanDepthGradient, ConstantRampAndSinglePixel) {
  const Camera cam = Camera::Pinhole(1, 4, 4, 10, 10, 2, 2);
  EXPECT_EQ(MeanDepthGradient(Constant(cam, Rigid3{}, 3.0)), 0.0);
  DepthMap ramp(cam, Rigid3{});
  for (int row = 0; row < 4; ++row) {
    for (int col = 0; col < 4; ++col) ramp.Set(col, row, 1.0 + 0.25 * col);
  }
  EXPECT_NEAR(MeanDepthGradient(ramp), 0.25, 1e-15);
  EXPECT_NEAR(oracle::MeanGradient(ramp), 0.25, 1e-15);
  EXPECT_EQ(MeanDepthGradient(Constant(Camera::Pinhole(1, 1, 1, 1, 1, 0.5, 0.5), Rigid3{}, 2.0)),
            0.0);
}

TEST(AdaptiveWindow, FlatMapGivesFullImage) {
  const DepthMap d = Constant(SmallCamera(), Rigid3{}, 3.0);
  const DensifyWindow w = AdaptiveWindow(d, {});
  EXPECT_EQ(w.height, 24);
  EXPECT_EQ(w.width, 32);
}

TEST(AdaptiveWindow, ArithmeticExample) {
  const DensifyWindow w = AdaptiveWindowFromGradient(0.0099, 100, 100, {});
  EXPECT_EQ(w.height, 50);
  EXPECT_EQ(w.width, 50);
  EXPECT_EQ(w.row0, 25);
  EXPECT_EQ(w.col0, 25);
}

TEST(AdaptiveWindow, MonotoneInGradient) {
  double prev_h = std::numeric_limits<double>::infinity();
  for (double g = 0.0; g < 1.0; g += 0.01) {
    const DensifyWindow w = AdaptiveWindowFromGradient(g, 80, 60, {});
    EXPECT_LE(w.raw_height, prev_h);
    prev_h = w.raw_height;
    EXPECT_GE(w.height, 1);
    EXPECT_GE(w.width, 1);
  }
}

TEST(BackprojectWindow, OpticalAxisRoundTripAndMask) {
  const Camera cam = Camera::Pinhole(1, 9, 9, 10, 10, 4.5, 4.5);
  DepthMap d = Constant(cam, Rigid3{}, 2.0);
  DensifyWindow center;
  center.row0 = 4;
  center.col0 = 4;
  center.height = center.width = 1;
  const auto pts = BackprojectWindow(d, center);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_NEAR((pts[0].world - Vec3(0, 0, 2)).norm(), 0.0, 1e-15);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Rigid3 pose = Rigid3::LookAt({1, 2, 3}, {0, 0, 0});
  DepthMap posed(cam, pose);
  for (double& v : posed.values()) v = 1.0 + 3.0 * u(rng);
  const DensifyWindow all = AdaptiveWindowFromGradient(0.0, 9, 9, {});
  for (const auto& p : BackprojectWindow(posed, all)) {
    const Vec2 uv = ProjectPoint(p.world, cam, pose);
    EXPECT_NEAR(uv.x(), p.col + 0.5, 1e-6);
    EXPECT_NEAR(uv.y(), p.row + 0.5, 1e-6);
  }
  DensifyWindow corner;
  corner.height = corner.width = 2;
  EXPECT_EQ(BackprojectWindow(posed, corner).size(), 4u);
}

TEST(NormalConsistencyError, CasesAndProperties) {
  EXPECT_EQ(NormalConsistencyError({0, 0, 1}, {0, 0, 1}), 0.0);
  EXPECT_EQ(NormalConsistencyError({0, 0, 1}, {0, 0, -1}), 2.0);
  EXPECT_EQ(NormalConsistencyError({0, 1, 0}, {1, 0, 0}), 1.0);
  const Vec3 a(0.3, -0.4, 0.8), b(0.1, 0.9, -0.2);
  EXPECT_NEAR(NormalConsistencyError(a, b), NormalConsistencyError(b, a), 1e-15);
  EXPECT_NEAR(NormalConsistencyError(5 * a, 0.1 * b), NormalConsistencyError(a, b), 1e-15);
  try {
    NormalConsistencyError(Vec3::Zero(), b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroNormal);
  }
}

TEST(ComposeLoss, DefaultWeightsAndLinearity) {
  EXPECT_NEAR(ComposeLoss(1, 1, 0, 0), 0.11, 1e-15);
  EXPECT_EQ(ComposeLoss(0, 0, 0, 0), 0.0);
  EXPECT_NEAR(ComposeLoss(2.4, 1.2, 0.6, 2.2), 2 * ComposeLoss(1.2, 0.6, 0.3, 1.1), 1e-15);
  try {
    ComposeLoss(std::nan(""), 0, 0, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFinite);
  }
}

TEST(DepthPfm, RoundTripKeepsValidity) {
  const Camera cam = SmallCamera(7, 5);
  DepthMap d(cam, Rigid3{});
  d.Set(1, 2, 3.5);
  d.Set(6, 4, 0.25);
  test::TempDir dir("pfm");
  WriteDepthPfm(dir / "d.pfm", d);
  const DepthMap back = ReadDepthPfm(dir / "d.pfm", cam, Rigid3{});
  EXPECT_EQ(back.values(), d.values());
  const std::string bytes = test::ReadBytes(dir / "d.pfm");
  EXPECT_EQ(bytes.substr(0, 3), "Pf\n");
  EXPECT_NE(bytes.find("-1"), std::string::npos);
}

}  // namespace
}  // namespace tilerecon
