#pragma once

// View selection for a sub-region: baseline-angle pair scoring with a camera
// distance gate, top-3 source views per reference image, and per-point choice
// of the group whose projections sit closest to the principal points.

#include <algorithm>
#include <functional>
#include <set>
#include <span>
#include <unordered_map>

#include "tilerecon/colmap_io.hpp"
#include "tilerecon/scene_types.hpp"

namespace tilerecon {

struct PairScoreConfig {
  double theta0 = 5.0;      // degrees, preferred baseline angle
  double sigma1 = 1.0;      // degrees, spread below theta0
  double sigma2 = 10.0;     // degrees, spread above theta0
  double theta_min = 90.0;  // degrees, angles above it contribute nothing
  bool hard_cutoff = true;  // false lets large angles fall through to sigma2
  std::optional<double> d_max;  // scene units; defaults per region

  void Validate() const {
    TILERECON_CHECK(sigma1 > 0.0 && sigma2 > 0.0, ErrorCode::kInvalidValue,
                    "sigma1 and sigma2 must be positive");
    TILERECON_CHECK(theta0 > 0.0 && theta0 < theta_min, ErrorCode::kInvalidValue,
                    "theta0 must lie in (0, theta_min)");
    TILERECON_CHECK(!d_max || *d_max > 0.0, ErrorCode::kInvalidValue,
                    "d_max must be positive");
  }
};

// Angle in degrees at `point` between the rays to the two camera centers.
inline double BaselineAngle(const Vec3& point, const Vec3& center_i,
                            const Vec3& center_j) {
  const Vec3 a = center_i - point;
  const Vec3 b = center_j - point;
  TILERECON_CHECK(a.squaredNorm() > 0.0 && b.squaredNorm() > 0.0,
                  ErrorCode::kDegenerateRay,
                  "point coincides with a camera center");
  // atan2 keeps precision for nearly parallel rays.
  return RadToDeg(std::atan2(a.cross(b).norm(), a.dot(b)));
}

// Piecewise Gaussian peaking at theta0, with separate spreads on each side.
inline double BaselineWeight(double theta, const PairScoreConfig& cfg) {
  const double d = theta - cfg.theta0;
  const double sigma = theta <= cfg.theta0 ? cfg.sigma1 : cfg.sigma2;
  return std::exp(-(d * d) / (2.0 * sigma * sigma));
}

// Contribution of one shared point, zero past the angular cutoff.
inline double PointPairContribution(double theta, const PairScoreConfig& cfg) {
  if (cfg.hard_cutoff && theta > cfg.theta_min) return 0.0;
  return BaselineWeight(theta, cfg);
}

// Geometric mean of the region's x and z edge lengths.
inline double RegionDMax(const SubRegion& region) {
  const Vec3 e = region.bounds.Extent();
  return std::sqrt(e.x() * e.z());
}

namespace internal {

inline std::vector<std::uint32_t> DistinctTrackImages(const Point3D& point,
                                                      const SparseModel& model) {
  std::vector<std::uint32_t> ids;
  ids.reserve(point.track.size());
  for (const TrackElement& el : point.track) {
    if (model.images.Contains(el.image_id)) ids.push_back(el.image_id);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

inline bool TrackContains(const Point3D& point, std::uint32_t image_id) {
  return std::any_of(point.track.begin(), point.track.end(),
                     [&](const TrackElement& el) { return el.image_id == image_id; });
}

}  // namespace internal

// Direct evaluation of S_ij from the model: the gated sum of baseline weights
// over every 3D point whose track holds both images.
inline double PairScore(std::uint32_t i, std::uint32_t j, const SparseModel& model,
                        const PairScoreConfig& cfg, double d_max) {
  TILERECON_CHECK(i != j, ErrorCode::kInvalidArgument, "pair of identical images");
  const ImageRecord& image_i = model.images.at(i);
  const ImageRecord& image_j = model.images.at(j);
  const Vec3 ci = image_i.Center();
  const Vec3 cj = image_j.Center();
  if ((ci - cj).norm() > d_max) return 0.0;

  std::set<std::uint64_t> shared;
  for (const Observation& obs : image_i.observations) {
    if (!obs.HasPoint()) continue;
    const auto id = static_cast<std::uint64_t>(obs.point3d_id);
    const Point3D* point = model.points.Find(id);
    if (point != nullptr && internal::TrackContains(*point, i) &&
        internal::TrackContains(*point, j)) {
      shared.insert(id);
    }
  }
  double score = 0.0;
  for (const std::uint64_t id : shared) {
    const Vec3& p = model.points.at(id).xyz;
    if ((p - ci).squaredNorm() == 0.0 || (p - cj).squaredNorm() == 0.0) continue;
    score += PointPairContribution(BaselineAngle(p, ci, cj), cfg);
  }
  return score;
}

// Ungated baseline sums for every co-observed image pair, accumulated in one
// pass over the points. The distance gate is applied at lookup time because
// D_max differs between regions. Read-only after Build, so safe to share.
class PairScoreTable {
 public:
  static PairScoreTable Build(const SparseModel& model, const PairScoreConfig& cfg) {
    cfg.Validate();
    PairScoreTable table;
    for (const ImageRecord& image : model.images) {
      table.centers_.emplace(image.image_id, image.Center());
    }
    for (const Point3D& point : model.points) {
      const auto ids = internal::DistinctTrackImages(point, model);
      for (std::size_t a = 0; a < ids.size(); ++a) {
        const Vec3& ca = table.centers_.at(ids[a]);
        if ((point.xyz - ca).squaredNorm() == 0.0) continue;
        for (std::size_t b = a + 1; b < ids.size(); ++b) {
          const Vec3& cb = table.centers_.at(ids[b]);
          if ((point.xyz - cb).squaredNorm() == 0.0) continue;
          table.sums_[Key(ids[a], ids[b])] +=
              PointPairContribution(BaselineAngle(point.xyz, ca, cb), cfg);
        }
      }
    }
    return table;
  }

  double Score(std::uint32_t i, std::uint32_t j, double d_max) const {
    if (i == j) return 0.0;
    const auto ci = centers_.find(i);
    const auto cj = centers_.find(j);
    if (ci == centers_.end() || cj == centers_.end()) return 0.0;
    if ((ci->second - cj->second).norm() > d_max) return 0.0;
    const auto it = sums_.find(Key(i, j));
    return it == sums_.end() ? 0.0 : it->second;
  }

  std::size_t num_pairs() const { return sums_.size(); }

 private:
  static std::uint64_t Key(std::uint32_t i, std::uint32_t j) {
    if (i > j) std::swap(i, j);
    return (static_cast<std::uint64_t>(i) << 32) | j;
  }

  std::unordered_map<std::uint32_t, Vec3> centers_;
  std::unordered_map<std::uint64_t, double> sums_;
};

using PairScorer = std::function<double(std::uint32_t, std::uint32_t)>;

// Top three candidates by score, positive scores only, ties broken by
// ascending image id. An empty source list means no candidate scored.
inline ViewGroup SelectSourceViews(std::uint32_t ref,
                                   std::span<const std::uint32_t> candidates,
                                   const PairScorer& score) {
  std::vector<std::pair<double, std::uint32_t>> scored;
  for (const std::uint32_t c : candidates) {
    if (c == ref) continue;
    const double s = score(ref, c);
    if (s > 0.0) scored.emplace_back(s, c);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  scored.erase(std::unique(scored.begin(), scored.end(),
                           [](const auto& a, const auto& b) {
                             return a.second == b.second;
                           }),
               scored.end());
  ViewGroup group;
  group.ref_image_id = ref;
  for (std::size_t k = 0; k < scored.size() && k < 3; ++k) {
    group.src_image_ids.push_back(scored[k].second);
  }
  return group;
}

inline ViewGroup SelectSourceViews(std::uint32_t ref,
                                   std::span<const std::uint32_t> candidates,
                                   const SparseModel& model,
                                   const PairScoreConfig& cfg, double d_max) {
  TILERECON_CHECK(model.images.Contains(ref), ErrorCode::kInvalidArgument,
                  "unknown reference image " + std::to_string(ref));
  return SelectSourceViews(ref, candidates, [&](std::uint32_t i, std::uint32_t j) {
    return PairScore(i, j, model, cfg, d_max);
  });
}

// Mean pixel distance between the point's projections and the principal
// points of the group members; nullopt if some member does not see the point
// (behind the camera or outside the image rectangle).
inline std::optional<double> MeanPrincipalDistance(const Vec3& point,
                                                   const ViewGroup& group,
                                                   const SparseModel& model) {
  // Summed in id order so groups sharing a member set tie exactly.
  auto members = group.Members();
  std::sort(members.begin(), members.end());
  double sum = 0.0;
  for (const std::uint32_t id : members) {
    const ImageRecord& image = model.images.at(id);
    const Camera& camera = model.cameras.at(image.camera_id);
    camera.RequirePinhole();
    const auto uv = TryProjectPoint(camera, image.Pose(), point);
    if (!uv || !InsideImage(camera, *uv)) return std::nullopt;
    sum += std::hypot(uv->x() - camera.cx(), uv->y() - camera.cy());
  }
  return sum / static_cast<double>(members.size());
}

// Group minimizing the mean principal-point distance; ties go to the lowest
// reference id.
inline ViewGroup OptimalGroupForPoint(std::uint64_t point_id,
                                      std::span<const ViewGroup> candidates,
                                      const SparseModel& model) {
  const Vec3& point = model.points.at(point_id).xyz;
  const ViewGroup* best = nullptr;
  double best_distance = std::numeric_limits<double>::infinity();
  for (const ViewGroup& group : candidates) {
    const auto d = MeanPrincipalDistance(point, group, model);
    if (!d) continue;
    if (best == nullptr || *d < best_distance ||
        (*d == best_distance && group.ref_image_id < best->ref_image_id)) {
      best = &group;
      best_distance = *d;
    }
  }
  TILERECON_CHECK(best != nullptr, ErrorCode::kNoVisibleGroup,
                  "no candidate group sees point " + std::to_string(point_id));
  return *best;
}

struct AssignmentStats {
  std::size_t groups_without_sources = 0;
};

// Builds a group for every matched image, picks the best group per point
// among the groups whose reference observes it, and splits the matched
// images into used and excluded sets.
inline RegionViewAssignment AssignViewsToRegion(const SubRegion& region,
                                                const SparseModel& model,
                                                const PairScoreConfig& cfg,
                                                const PairScoreTable& table,
                                                AssignmentStats* stats = nullptr) {
  cfg.Validate();
  TILERECON_CHECK(!region.point_ids.empty(), ErrorCode::kInvalidArgument,
                  "region has no points");
  const double d_max = cfg.d_max.value_or(RegionDMax(region));
  const auto& matched = region.matched_image_ids;

  std::unordered_map<std::uint32_t, ViewGroup> groups;
  groups.reserve(matched.size());
  for (const std::uint32_t ref : matched) {
    ViewGroup group =
        SelectSourceViews(ref, matched, [&](std::uint32_t i, std::uint32_t j) {
          return table.Score(i, j, d_max);
        });
    if (group.src_image_ids.empty() && stats != nullptr) {
      ++stats->groups_without_sources;
    }
    groups.emplace(ref, std::move(group));
  }

  RegionViewAssignment assignment;
  std::set<std::uint32_t> used;
  std::vector<ViewGroup> candidates;
  for (const std::uint64_t point_id : region.point_ids) {
    const Point3D& point = model.points.at(point_id);
    candidates.clear();
    for (const std::uint32_t ref : internal::DistinctTrackImages(point, model)) {
      const auto it = groups.find(ref);
      if (it != groups.end() && !it->second.src_image_ids.empty()) {
        candidates.push_back(it->second);
      }
    }
    try {
      ViewGroup best = OptimalGroupForPoint(point_id, candidates, model);
      for (const std::uint32_t id : best.Members()) used.insert(id);
      assignment.groups.emplace(point_id, std::move(best));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNoVisibleGroup) throw;
      assignment.skipped_point_ids.push_back(point_id);
    }
  }
  assignment.used_image_ids.assign(used.begin(), used.end());
  for (const std::uint32_t id : matched) {
    if (!used.count(id)) assignment.excluded_image_ids.push_back(id);
  }
  return assignment;
}

// Reference-to-sources groups for the region's used images, as consumed by
// depth fusion.
inline std::vector<ViewGroup> FusionGroups(const SubRegion& region,
                                           const RegionViewAssignment& assignment,
                                           const PairScoreConfig& cfg,
                                           const PairScoreTable& table) {
  const double d_max = cfg.d_max.value_or(RegionDMax(region));
  std::vector<ViewGroup> groups;
  for (const std::uint32_t ref : assignment.used_image_ids) {
    groups.push_back(SelectSourceViews(
        ref, region.matched_image_ids,
        [&](std::uint32_t i, std::uint32_t j) { return table.Score(i, j, d_max); }));
  }
  return groups;
}

}  // namespace tilerecon
