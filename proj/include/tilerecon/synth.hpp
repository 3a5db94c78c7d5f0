#pragma once

// Synthetic scenes of axis-aligned boxes on a ground plane, observed by rings
// of pinhole cameras. Depth maps, sparse points and tracks are computed by
// exact ray casting, so they serve as ground truth for the other stages.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "tilerecon/colmap_io.hpp"
#include "tilerecon/depth_map.hpp"
#include "tilerecon/error.hpp"
#include "tilerecon/geometry.hpp"
#include "tilerecon/mesh.hpp"

namespace tilerecon {

struct SynthBox {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
};

struct CameraRing {
  int count = 0;
  double radius = 1.0;
  double height = 1.0;
  double phase_deg = 0.0;
};

struct SynthSpec {
  std::vector<SynthBox> boxes;
  bool ground = true;
  double ground_y = 0.0;
  double ground_half_extent = 2.0;  // square centered on the ring center
  Vec3 center = Vec3::Zero();       // ring center and look-at target
  std::vector<CameraRing> rings;
  int image_width = 160;
  int image_height = 120;
  double fov_deg = 60.0;  // horizontal
  std::size_t num_points = 10000;
  int max_track_length = 12;
  double pixel_noise = 0.0;        // std of observation noise in pixels
  double outlier_fraction = 0.0;   // points pushed off the surface, high error
  std::size_t gt_sample_count = 100000;
  bool render_depth = true;
  std::uint64_t seed = 0;

  void Validate() const {
    TILERECON_CHECK(!boxes.empty() || ground, ErrorCode::kDegenerateSpec,
                    "scene needs at least one primitive");
    int cams = 0;
    for (const auto& r : rings) {
      TILERECON_CHECK(r.count >= 0 && r.radius > 0.0, ErrorCode::kDegenerateSpec,
                      "camera ring needs a non-negative count and positive radius");
      cams += r.count;
    }
    TILERECON_CHECK(cams >= 2, ErrorCode::kDegenerateSpec, "scene needs at least 2 cameras");
    TILERECON_CHECK(image_width > 0 && image_height > 0, ErrorCode::kDegenerateSpec,
                    "image size must be positive");
    TILERECON_CHECK(fov_deg > 0.0 && fov_deg < 180.0, ErrorCode::kDegenerateSpec,
                    "field of view must be in (0, 180)");
    TILERECON_CHECK(ground_half_extent > 0.0, ErrorCode::kDegenerateSpec,
                    "ground extent must be positive");
    TILERECON_CHECK(max_track_length >= 2, ErrorCode::kDegenerateSpec,
                    "tracks need at least 2 views");
    TILERECON_CHECK(pixel_noise >= 0.0 && outlier_fraction >= 0.0 && outlier_fraction <= 1.0,
                    ErrorCode::kDegenerateSpec, "noise parameters out of range");
    for (const auto& b : boxes) {
      TILERECON_CHECK((b.max.array() > b.min.array()).all(), ErrorCode::kDegenerateSpec,
                      "box has non-positive extent");
    }
  }
};

struct SynthScene {
  SparseModel model;
  std::map<std::uint32_t, DepthMap> depth;  // by image id
  Mesh gt_mesh;
  std::vector<Vec3> gt_samples;
};

// Six buildings on a 4 x 4 ground, two camera rings of 30.
inline SynthSpec CitySpec(std::uint64_t seed = 0) {
  SynthSpec spec;
  spec.boxes = {
      {Vec3(-1.6, 0.0, -1.5), Vec3(-0.9, 0.9, -0.8)},
      {Vec3(-0.3, 0.0, -1.6), Vec3(0.4, 0.5, -0.9)},
      {Vec3(0.9, 0.0, -1.4), Vec3(1.5, 1.1, -0.7)},
      {Vec3(-1.5, 0.0, 0.6), Vec3(-0.8, 0.6, 1.4)},
      {Vec3(-0.2, 0.0, 0.5), Vec3(0.5, 1.0, 1.2)},
      {Vec3(0.9, 0.0, 0.8), Vec3(1.6, 0.4, 1.5)},
  };
  spec.ground_half_extent = 2.0;
  spec.rings = {{30, 3.2, 2.2, 0.0}, {30, 2.0, 3.4, 6.0}};
  spec.seed = seed;
  return spec;
}

namespace internal {

inline std::optional<double> IntersectBox(const Vec3& o, const Vec3& d, const SynthBox& b,
                                          double t_min) {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < b.min[a] || o[a] > b.max[a]) return std::nullopt;
      continue;
    }
    double t0 = (b.min[a] - o[a]) / d[a];
    double t1 = (b.max[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
  }
  if (lo > hi) return std::nullopt;
  if (lo > t_min) return lo;
  return std::nullopt;  // origin inside or box behind
}

}  // namespace internal

class SynthRaycaster {
 public:
  explicit SynthRaycaster(const SynthSpec& spec) : spec_(spec) {}

  // Smallest t > t_min along o + t d, if any.
  std::optional<double> Cast(const Vec3& o, const Vec3& d, double t_min = 1e-9) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : spec_.boxes) {
      if (const auto t = internal::IntersectBox(o, d, b, t_min)) best = std::min(best, *t);
    }
    if (spec_.ground && d.y() != 0.0) {
      const double t = (spec_.ground_y - o.y()) / d.y();
      if (t > t_min && t < best) {
        const Vec3 p = o + t * d;
        if (OnGround(p)) best = t;
      }
    }
    if (!std::isfinite(best)) return std::nullopt;
    return best;
  }

  bool OnGround(const Vec3& p) const {
    return std::abs(p.x() - spec_.center.x()) <= spec_.ground_half_extent &&
           std::abs(p.z() - spec_.center.z()) <= spec_.ground_half_extent;
  }

  // True when p lies inside a box or on ground covered by one. Points within
  // `eps` of a face count as outside.
  bool Hidden(const Vec3& p, double eps = 1e-9) const {
    for (const auto& b : spec_.boxes) {
      const bool in_xz = p.x() > b.min.x() + eps && p.x() < b.max.x() - eps &&
                         p.z() > b.min.z() + eps && p.z() < b.max.z() - eps;
      if (!in_xz) continue;
      if (p.y() > b.min.y() + eps && p.y() < b.max.y() - eps) return true;
      if (spec_.ground && b.min.y() <= spec_.ground_y + eps &&
          std::abs(p.y() - spec_.ground_y) <= eps) {
        return true;
      }
    }
    return false;
  }

  bool Visible(const Vec3& center, const Vec3& p) const {
    const Vec3 d = p - center;
    const auto t = Cast(center, d);
    return t.has_value() && *t >= 1.0 - 1e-9;
  }

 private:
  const SynthSpec& spec_;
};

// Triangulated scene surfaces with outward normals. Box faces resting on the
// ground are omitted; ground under boxes is kept and filtered when sampling.
inline Mesh SynthMesh(const SynthSpec& spec) {
  Mesh mesh;
  const auto quad = [&](const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
    mesh.vertices.insert(mesh.vertices.end(), {a, b, c, d});
    mesh.triangles.push_back({base, base + 1, base + 2});
    mesh.triangles.push_back({base, base + 2, base + 3});
  };
  for (const auto& b : spec.boxes) {
    const Vec3& l = b.min;
    const Vec3& h = b.max;
    quad({l.x(), h.y(), l.z()}, {l.x(), h.y(), h.z()}, {h.x(), h.y(), h.z()}, {h.x(), h.y(), l.z()});
    if (!(spec.ground && l.y() <= spec.ground_y)) {
      quad({l.x(), l.y(), l.z()}, {h.x(), l.y(), l.z()}, {h.x(), l.y(), h.z()}, {l.x(), l.y(), h.z()});
    }
    quad({l.x(), l.y(), l.z()}, {l.x(), l.y(), h.z()}, {l.x(), h.y(), h.z()}, {l.x(), h.y(), l.z()});
    quad({h.x(), l.y(), l.z()}, {h.x(), h.y(), l.z()}, {h.x(), h.y(), h.z()}, {h.x(), l.y(), h.z()});
    quad({l.x(), l.y(), l.z()}, {l.x(), h.y(), l.z()}, {h.x(), h.y(), l.z()}, {h.x(), l.y(), l.z()});
    quad({l.x(), l.y(), h.z()}, {h.x(), l.y(), h.z()}, {h.x(), h.y(), h.z()}, {l.x(), h.y(), h.z()});
  }
  if (spec.ground) {
    const double e = spec.ground_half_extent;
    const double cx = spec.center.x();
    const double cz = spec.center.z();
    const double y = spec.ground_y;
    quad({cx - e, y, cz - e}, {cx - e, y, cz + e}, {cx + e, y, cz + e}, {cx + e, y, cz - e});
  }
  mesh.ComputeVertexNormals();
  return mesh;
}

namespace internal {

// Area-uniform points on the exposed scene surface.
class ExposedSampler {
 public:
  ExposedSampler(const Mesh& mesh, const SynthRaycaster& caster)
      : mesh_(mesh), caster_(caster), cdf_(mesh.triangles.size()) {
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
      total_ += mesh.TriangleArea(t);
      cdf_[t] = total_;
    }
  }

  Vec3 Next(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (true) {
      auto it = std::upper_bound(cdf_.begin(), cdf_.end(), unit(rng) * total_);
      if (it == cdf_.end()) --it;
      const auto& tri = mesh_.triangles[it - cdf_.begin()];
      const double r1 = std::sqrt(unit(rng));
      const double r2 = unit(rng);
      const Vec3 p = (1.0 - r1) * mesh_.vertices[tri[0]] +
                     r1 * (1.0 - r2) * mesh_.vertices[tri[1]] + r1 * r2 * mesh_.vertices[tri[2]];
      if (!caster_.Hidden(p)) return p;
    }
  }

 private:
  const Mesh& mesh_;
  const SynthRaycaster& caster_;
  std::vector<double> cdf_;
  double total_ = 0.0;
};

}  // namespace internal

inline SynthScene SynthesizeScene(const SynthSpec& spec) {
  spec.Validate();
  SynthScene scene;
  const SynthRaycaster caster(spec);
  std::mt19937_64 rng(spec.seed);

  const double fx = 0.5 * spec.image_width / std::tan(DegToRad(spec.fov_deg) / 2.0);
  const Camera camera = Camera::Pinhole(1, spec.image_width, spec.image_height, fx, fx,
                                        0.5 * spec.image_width, 0.5 * spec.image_height);
  scene.model.cameras.Add(1, camera);

  std::uint32_t next_id = 1;
  for (const auto& ring : spec.rings) {
    for (int c = 0; c < ring.count; ++c) {
      const double angle = DegToRad(ring.phase_deg + 360.0 * c / ring.count);
      const Vec3 center = spec.center + Vec3(ring.radius * std::cos(angle), ring.height,
                                             ring.radius * std::sin(angle));
      ImageRecord image;
      image.image_id = next_id;
      image.camera_id = 1;
      char name[32];
      std::snprintf(name, sizeof(name), "img_%04u.png", next_id);
      image.name = name;
      image.SetPose(Rigid3::LookAt(center, spec.center));
      scene.model.images.Add(next_id, std::move(image));
      ++next_id;
    }
  }

  if (spec.render_depth) {
    for (const auto& image : scene.model.images) {
      const Rigid3 pose = image.Pose();
      const Vec3 origin = pose.Center();
      const Mat3 to_world = pose.rotation.conjugate().toRotationMatrix();
      DepthMap depth(camera, pose);
      for (int row = 0; row < spec.image_height; ++row) {
        for (int col = 0; col < spec.image_width; ++col) {
          const Vec3 dir_cam((col + 0.5 - camera.cx()) / camera.fx(),
                             (row + 0.5 - camera.cy()) / camera.fy(), 1.0);
          // With unit camera z, the ray parameter equals the z-depth.
          if (const auto t = caster.Cast(origin, to_world * dir_cam)) depth.Set(col, row, *t);
        }
      }
      scene.depth.emplace(image.image_id, std::move(depth));
    }
  }

  scene.gt_mesh = SynthMesh(spec);

  // Sparse points with visibility tracks.
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::uint32_t> image_ids;
  std::vector<Rigid3> poses;
  for (const auto& image : scene.model.images) {
    image_ids.push_back(image.image_id);
    poses.push_back(image.Pose());
  }
  const internal::ExposedSampler sampler(scene.gt_mesh, caster);
  std::uint64_t point_id = 1;
  std::vector<std::size_t> visible;
  while (scene.model.points.size() < spec.num_points) {
    const Vec3 surface = sampler.Next(rng);
    visible.clear();
    for (std::size_t i = 0; i < poses.size(); ++i) {
      const auto uv = TryProjectPoint(camera, poses[i], surface);
      if (!uv || !InsideImage(camera, *uv)) continue;
      if (!caster.Visible(poses[i].Center(), surface)) continue;
      visible.push_back(i);
    }
    if (visible.size() < 2) continue;
    std::shuffle(visible.begin(), visible.end(), rng);
    if (visible.size() > static_cast<std::size_t>(spec.max_track_length)) {
      visible.resize(spec.max_track_length);
    }
    std::sort(visible.begin(), visible.end());

    Point3D point;
    point.point_id = point_id++;
    point.xyz = surface;
    const bool outlier = unit(rng) < spec.outlier_fraction;
    if (outlier) point.xyz += Vec3(noise(rng), noise(rng), noise(rng)) * 0.2;
    double err_sum = 0.0;
    for (std::size_t i : visible) {
      const Vec2 uv = *TryProjectPoint(camera, poses[i], surface);
      const Vec2 obs = uv + spec.pixel_noise * Vec2(noise(rng), noise(rng));
      ImageRecord* image = scene.model.images.Find(image_ids[i]);
      point.track.push_back(
          {image_ids[i], static_cast<std::uint32_t>(image->observations.size())});
      image->observations.push_back({obs.x(), obs.y(), static_cast<std::int64_t>(point.point_id)});
      const auto proj = TryProjectPoint(camera, poses[i], point.xyz);
      err_sum += proj ? (*proj - obs).norm() : 1e3;
    }
    point.error = err_sum / static_cast<double>(visible.size());
    const double shade = 0.3 + 0.7 * std::clamp(surface.y() / 1.5, 0.0, 1.0);
    point.color = {static_cast<std::uint8_t>(255 * shade), static_cast<std::uint8_t>(200 * shade),
                   static_cast<std::uint8_t>(160 * shade)};
    scene.model.points.Add(point.point_id, std::move(point));
  }

  scene.gt_samples.reserve(spec.gt_sample_count);
  for (std::size_t i = 0; i < spec.gt_sample_count; ++i) scene.gt_samples.push_back(sampler.Next(rng));
  return scene;
}

// ---------------------------------------------------------------------------
// JSON form of the spec, used by the CLI.

inline SynthSpec SynthSpecFromJson(const nlohmann::json& j) {
  SynthSpec spec;
  const auto vec3 = [](const nlohmann::json& a) {
    return Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>());
  };
  if (j.contains("preset") && j["preset"] == "city") spec = CitySpec();
  if (j.contains("boxes")) {
    spec.boxes.clear();
    for (const auto& b : j["boxes"]) spec.boxes.push_back({vec3(b.at("min")), vec3(b.at("max"))});
  }
  spec.ground = j.value("ground", spec.ground);
  spec.ground_y = j.value("ground_y", spec.ground_y);
  spec.ground_half_extent = j.value("ground_half_extent", spec.ground_half_extent);
  if (j.contains("center")) spec.center = vec3(j["center"]);
  if (j.contains("rings")) {
    spec.rings.clear();
    for (const auto& r : j["rings"]) {
      spec.rings.push_back({r.at("count").get<int>(), r.at("radius").get<double>(),
                            r.at("height").get<double>(), r.value("phase_deg", 0.0)});
    }
  }
  spec.image_width = j.value("image_width", spec.image_width);
  spec.image_height = j.value("image_height", spec.image_height);
  spec.fov_deg = j.value("fov_deg", spec.fov_deg);
  spec.num_points = j.value("num_points", spec.num_points);
  spec.max_track_length = j.value("max_track_length", spec.max_track_length);
  spec.pixel_noise = j.value("pixel_noise", spec.pixel_noise);
  spec.outlier_fraction = j.value("outlier_fraction", spec.outlier_fraction);
  spec.gt_sample_count = j.value("gt_sample_count", spec.gt_sample_count);
  spec.render_depth = j.value("render_depth", spec.render_depth);
  spec.seed = j.value("seed", spec.seed);
  return spec;
}

}  // namespace tilerecon
