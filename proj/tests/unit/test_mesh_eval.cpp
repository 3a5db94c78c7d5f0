#include <gtest/gtest.h>

#include <random>

#include "oracles/oracles.hpp"
#include "support/test_support.hpp"
#include "tilerecon/mesh_eval.hpp"

namespace tilerecon {
namespace {

std::vector<Vec3> RandomCloud(std::mt19937_64& rng, std::size_t n, double extent) {
  std::uniform_real_distribution<double> u(-extent, extent);
  std::vector<Vec3> out(n);
  for (auto& p : out) p = Vec3(u(rng), u(rng), u(rng));
  return out;
}

Mesh Square(double x0, double x1, double z0, double z1) {
  Mesh m;
  m.vertices = {{x0, 0, z0}, {x1, 0, z0}, {x1, 0, z1}, {x0, 0, z1}};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

Image Noise(std::mt19937_64& rng, int w, int h, int c) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(w, h, c);
  for (auto& v : img.data) v = u(rng);
  return img;
}

TEST(KdTree, MatchesBruteForce) {
  std::mt19937_64 rng(1);
  const auto pts = RandomCloud(rng, 2000, 1.0);
  const KdTree tree(pts);
  for (const auto& q : RandomCloud(rng, 300, 1.5)) {
    EXPECT_EQ(tree.Nearest(q).squared_distance, oracle::NearestSq(q, pts));
  }
  EXPECT_TRUE(std::isinf(KdTree().Nearest(Vec3::Zero()).squared_distance));
}

TEST(OverlapCrop, IdenticalDisjointAndSubset) {
  std::mt19937_64 rng(2);
  const auto a = RandomCloud(rng, 500, 1.0);
  const auto same = OverlapCrop(a, a);
  EXPECT_EQ(same.rec.size(), a.size());
  EXPECT_EQ(same.gt.size(), a.size());

  auto far = a;
  for (auto& p : far) p.x() += 10.0;
  try {
    OverlapCrop(a, far);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoOverlap);
  }

  std::vector<Vec3> inner;
  for (const auto& p : a) {
    if (p.cwiseAbs().maxCoeff() < 0.5) inner.push_back(p);
  }
  const auto sub = OverlapCrop(a, inner);
  EXPECT_EQ(sub.gt.size(), inner.size());
  for (const auto& p : sub.rec) EXPECT_TRUE(sub.box.Contains(p));
  EXPECT_LT(sub.rec.size(), a.size());
}

TEST(IcpAlign, IdentityOnAlignedClouds) {
  std::mt19937_64 rng(3);
  const auto a = RandomCloud(rng, 1000, 1.0);
  const IcpResult r = IcpAlign(a, a);
  EXPECT_TRUE(r.transform.isApprox(Mat4::Identity(), 1e-9));
  EXPECT_EQ(r.rms_after, 0.0);
  EXPECT_TRUE(r.converged);
}

TEST(IcpAlign, RecoversSmallRigidMotion) {
  std::mt19937_64 rng(4);
  const auto tgt = RandomCloud(rng, 3000, 1.0);
  Mat4 motion = Mat4::Identity();
  motion.topLeftCorner<3, 3>() =
      Eigen::AngleAxisd(DegToRad(5.0), Vec3(1, 2, 3).normalized()).toRotationMatrix();
  motion.topRightCorner<3, 1>() = Vec3(0.05, -0.03, 0.02);
  const auto src = ApplyTransform(motion, tgt);
  IcpConfig cfg;
  cfg.max_iterations = 200;
  cfg.tolerance = 1e-12;
  const IcpResult r = IcpAlign(src, tgt, cfg);
  EXPECT_TRUE((r.transform * motion).isApprox(Mat4::Identity(), 1e-6));
  EXPECT_LE(r.rms_after, r.rms_before);
  EXPECT_LT(r.rms_after, 1e-6);
}

TEST(IcpAlign, DegenerateInputs) {
  const std::vector<Vec3> two{{0, 0, 0}, {1, 0, 0}};
  const std::vector<Vec3> line{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  std::mt19937_64 rng(5);
  const auto ok = RandomCloud(rng, 50, 1.0);
  for (const auto* bad : {&two, &line}) {
    try {
      IcpAlign(*bad, ok);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kDegenerateGeometry);
    }
  }
}

TEST(IcpAlign, NeverWorseThanStart) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 5; ++t) {
    const auto a = RandomCloud(rng, 300, 1.0);
    const auto b = RandomCloud(rng, 300, 1.0);
    const IcpResult r = IcpAlign(a, b);
    EXPECT_LE(r.rms_after, r.rms_before);
  }
}

TEST(SampleMeshPoints, StaysOnSurface) {
  const auto pts = SampleMeshPoints(Square(0, 1, 0, 1), 5000, 7);
  ASSERT_EQ(pts.size(), 5000u);
  for (const auto& p : pts) {
    EXPECT_EQ(p.y(), 0.0);
    EXPECT_GE(p.x(), 0.0);
    EXPECT_LE(p.x(), 1.0);
    EXPECT_GE(p.z(), 0.0);
    EXPECT_LE(p.z(), 1.0);
  }
  EXPECT_EQ(SampleMeshPoints(Square(0, 1, 0, 1), 5000, 7), pts);
}

TEST(SampleMeshPoints, AreaProportional) {
  // Two disjoint squares with areas 1 and 3.
  Mesh m = Square(0, 1, 0, 1);
  const Mesh big = Square(2, 5, 0, 1);
  for (const auto& tri : big.triangles) {
    m.triangles.push_back({tri[0] + 4, tri[1] + 4, tri[2] + 4});
  }
  m.vertices.insert(m.vertices.end(), big.vertices.begin(), big.vertices.end());
  const std::size_t n = 40000;
  const auto pts = SampleMeshPoints(m, n, 8);
  const double small = static_cast<double>(
      std::count_if(pts.begin(), pts.end(), [](const Vec3& p) { return p.x() <= 1.0; }));
  const double sd = std::sqrt(n * 0.25 * 0.75);
  EXPECT_NEAR(small, n * 0.25, 3 * sd);
}

TEST(SampleMeshPoints, ZeroAndEmpty) {
  EXPECT_TRUE(SampleMeshPoints(Mesh{}, 0, 1).empty());
  try {
    SampleMeshPoints(Mesh{}, 10, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyMesh);
  }
}

TEST(PrecisionRecallF1, IdenticalSetsScoreOne) {
  std::mt19937_64 rng(9);
  const auto a = RandomCloud(rng, 500, 1.0);
  const PrfScore s = PrecisionRecallF1(a, a, 1e-3);
  EXPECT_EQ(s.precision, 1.0);
  EXPECT_EQ(s.recall, 1.0);
  EXPECT_EQ(s.f1, 1.0);
}

TEST(PrecisionRecallF1, OutliersLowerPrecisionOnly) {
  std::mt19937_64 rng(10);
  const auto gt = RandomCloud(rng, 400, 1.0);
  auto rec = gt;
  const std::size_t m = 100;
  for (std::size_t i = 0; i < m; ++i) rec.push_back(Vec3(50.0 + i, 50, 50));
  const PrfScore s = PrecisionRecallF1(rec, gt, 0.01);
  EXPECT_DOUBLE_EQ(s.precision, 400.0 / 500.0);
  EXPECT_EQ(s.recall, 1.0);
}

TEST(PrecisionRecallF1, TinyThresholdAndSymmetry) {
  std::mt19937_64 rng(11);
  const auto a = RandomCloud(rng, 300, 1.0);
  const auto b = RandomCloud(rng, 200, 1.0);
  const PrfScore zero = PrecisionRecallF1(a, b, 1e-12);
  EXPECT_EQ(zero.f1, 0.0);
  const PrfScore ab = PrecisionRecallF1(a, b, 0.2);
  const PrfScore ba = PrecisionRecallF1(b, a, 0.2);
  EXPECT_EQ(ab.precision, ba.recall);
  EXPECT_EQ(ab.recall, ba.precision);
  EXPECT_LE(ab.f1, std::max(ab.precision, ab.recall));
  EXPECT_GE(ab.f1, std::min(ab.precision, ab.recall));
  const oracle::Prf want = oracle::PrecisionRecall(a, b, 0.2);
  EXPECT_EQ(ab.precision, want.precision);
  EXPECT_EQ(ab.recall, want.recall);
  EXPECT_NEAR(ab.f1, want.f1, 1e-15);
  EXPECT_THROW(PrecisionRecallF1(a, b, 0.0), Error);
}

TEST(Psnr, CapKnownValuesAndErrors) {
  std::mt19937_64 rng(12);
  const Image a = Noise(rng, 16, 12, 3);
  EXPECT_EQ(Psnr(a, a), kPsnrCap);
  const Image zeros(8, 8, 1, 0.0);
  const Image tenth(8, 8, 1, 0.1);
  const Image ones(8, 8, 1, 1.0);
  EXPECT_NEAR(Psnr(zeros, tenth), 20.0, 1e-9);
  EXPECT_NEAR(Psnr(zeros, ones), 0.0, 1e-12);
  const Image b = Noise(rng, 16, 12, 3);
  EXPECT_EQ(Psnr(a, b), Psnr(b, a));
  EXPECT_NEAR(Psnr(a, b), oracle::Psnr(a, b, 1.0), 1e-9);
  try {
    Psnr(a, Image(16, 12, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(Ssim, IdenticalConstantAndInverted) {
  std::mt19937_64 rng(13);
  const Image a = Noise(rng, 24, 20, 1);
  EXPECT_NEAR(Ssim(a, a), 1.0, 1e-12);

  // Constant images have zero variance, leaving only the luminance term.
  const double c1 = 1e-4;
  const Image x(10, 10, 1, 0.2);
  const Image y(10, 10, 1, 0.6);
  EXPECT_NEAR(Ssim(x, y), (2 * 0.2 * 0.6 + c1) / (0.04 + 0.36 + c1), 1e-12);

  Image inv = a;
  for (auto& v : inv.data) v = 1.0 - v;
  EXPECT_LT(Ssim(a, inv), 0.1);
}

TEST(Ssim, AgreesWithOracle) {
  std::mt19937_64 rng(14);
  const Image a = Noise(rng, 20, 17, 3);
  Image b = a;
  std::normal_distribution<double> g(0.0, 0.1);
  for (auto& v : b.data) v += g(rng);
  EXPECT_NEAR(Ssim(a, b), oracle::Ssim(a, b, 1.0), 1e-9);
  EXPECT_NEAR(Ssim(a, b, 2.0), oracle::Ssim(a, b, 2.0), 1e-9);
}

TEST(GenerateDsm, FlatPlaneMaxRuleAndNoData) {
  std::vector<Vec3> flat;
  for (int i = 0; i < 10; ++i) {
    for (int k = 0; k < 10; ++k) flat.push_back({i + 0.5, 2.0, k + 0.5});
  }
  const Dsm d = GenerateDsm(flat, 1.0);
  EXPECT_EQ(d.cols, 10);
  EXPECT_EQ(d.rows, 10);
  for (float h : d.height) EXPECT_EQ(h, 2.0f);

  const std::vector<Vec3> stack{{0.1, 1, 0.1}, {0.2, 5, 0.2}, {0.3, 3, 0.3}, {2.5, -1, 2.5}};
  const Dsm s = GenerateDsm(stack, 1.0);
  ASSERT_EQ(s.cols, 3);
  ASSERT_EQ(s.rows, 3);
  EXPECT_EQ(s.At(0, 0), 5.0f);
  EXPECT_EQ(s.At(2, 2), -1.0f);
  EXPECT_EQ(s.At(1, 1), kDsmNoData);
  EXPECT_EQ(s.At(2, 0), kDsmNoData);
  EXPECT_THROW(GenerateDsm(stack, 0.0), Error);
}

TEST(EvaluatePoints, ShiftedCopyAlignsToPerfectScore) {
  std::mt19937_64 rng(15);
  const auto gt = RandomCloud(rng, 2000, 1.0);
  Mat4 shift = Mat4::Identity();
  shift.topRightCorner<3, 1>() = Vec3(0.01, 0, 0);
  const auto rec = ApplyTransform(shift, gt);
  EvalConfig cfg;
  cfg.thresholds = {1e-4};
  cfg.icp_max_iter = 100;
  cfg.icp_tolerance = 1e-12;
  const EvalReport aligned = EvaluatePoints(rec, gt, cfg);
  EXPECT_GT(aligned.scores[0].f1, 0.95);
  EXPECT_LT(aligned.icp_rms_after, aligned.icp_rms_before);
  cfg.align = false;
  const EvalReport raw = EvaluatePoints(rec, gt, cfg);
  EXPECT_LT(raw.scores[0].f1, aligned.scores[0].f1);
  EXPECT_EQ(raw.alignment, Mat4::Identity());
}

}  // namespace
}  // namespace tilerecon
