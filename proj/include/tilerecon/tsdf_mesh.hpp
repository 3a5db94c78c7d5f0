#pragma once

// Sparse truncated signed distance volume, marching-cubes extraction, and
// crop/stitch of per-region meshes.
//
// Grid points live on a global lattice origin + voxel_size * (i, j, k) and are
// stored in 16^3 blocks allocated on demand. Positive sdf is in front of the
// observed surface (free space), negative behind it.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "tilerecon/depth_map.hpp"
#include "tilerecon/error.hpp"
#include "tilerecon/geometry.hpp"
#include "tilerecon/marching_cubes.hpp"
#include "tilerecon/mesh.hpp"
#include "tilerecon/scene_types.hpp"

namespace tilerecon {

struct TsdfConfig {
  double voxel_size = 0.4;
  std::optional<double> truncation;  // default 4 voxels
  // Only grid points inside these bounds are allocated and updated.
  std::optional<SceneBounds> bounds;

  double Truncation() const { return truncation.value_or(4.0 * voxel_size); }

  void Validate() const {
    TILERECON_CHECK(std::isfinite(voxel_size) && voxel_size > 0.0,
                    ErrorCode::kInvalidArgument, "voxel_size must be positive");
    TILERECON_CHECK(std::isfinite(Truncation()) && Truncation() > 0.0,
                    ErrorCode::kInvalidArgument, "truncation must be positive");
    TILERECON_CHECK(!bounds || !bounds->Empty(), ErrorCode::kInvalidArgument,
                    "volume bounds are empty");
  }
};

struct GridKey {
  std::int64_t i = 0;
  std::int64_t j = 0;
  std::int64_t k = 0;
  bool operator==(const GridKey&) const = default;
  auto operator<=>(const GridKey&) const = default;
};

struct GridKeyHash {
  std::size_t operator()(const GridKey& key) const {
    std::uint64_t h = static_cast<std::uint64_t>(key.i) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::uint64_t>(key.j) * 0xC2B2AE3D27D4EB4Full + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(key.k) * 0x165667B19E3779F9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

class TsdfVolume {
 public:
  static constexpr int kBlockSize = 16;
  static constexpr int kBlockVoxels = kBlockSize * kBlockSize * kBlockSize;

  struct Block {
    std::array<float, kBlockVoxels> sdf{};
    std::array<float, kBlockVoxels> weight{};
  };

  struct Voxel {
    float sdf = 0.0f;
    float weight = 0.0f;
  };

  explicit TsdfVolume(TsdfConfig config = {}) : config_(std::move(config)) {
    config_.Validate();
    truncation_ = config_.Truncation();
  }

  double voxel_size() const { return config_.voxel_size; }
  double truncation() const { return truncation_; }
  const TsdfConfig& config() const { return config_; }
  std::size_t num_blocks() const { return blocks_.size(); }

  Vec3 Position(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return Vec3(i, j, k) * config_.voxel_size;
  }
  Vec3 Position(const GridKey& g) const { return Position(g.i, g.j, g.k); }

  std::optional<Voxel> Find(const GridKey& g) const {
    const auto it = blocks_.find(BlockOf(g));
    if (it == blocks_.end()) return std::nullopt;
    const int l = LocalIndex(g);
    return Voxel{it->second->sdf[l], it->second->weight[l]};
  }

  std::size_t CountObserved() const {
    std::size_t n = 0;
    for (const auto& [key, block] : blocks_) {
      for (float w : block->weight) n += w > 0.0f ? 1 : 0;
    }
    return n;
  }

  // Block keys in ascending order.
  std::vector<GridKey> SortedBlockKeys() const {
    std::vector<GridKey> keys;
    keys.reserve(blocks_.size());
    for (const auto& [key, block] : blocks_) keys.push_back(key);
    std::sort(keys.begin(), keys.end());
    return keys;
  }

  const Block* FindBlock(const GridKey& block_key) const {
    const auto it = blocks_.find(block_key);
    return it == blocks_.end() ? nullptr : it->second.get();
  }

  static GridKey BlockOf(const GridKey& g) {
    return {FloorDiv(g.i), FloorDiv(g.j), FloorDiv(g.k)};
  }
  static int LocalIndex(const GridKey& g) {
    const auto m = [](std::int64_t v) {
      return static_cast<int>(v - FloorDiv(v) * kBlockSize);
    };
    return (m(g.k) * kBlockSize + m(g.j)) * kBlockSize + m(g.i);
  }

  void Integrate(const DepthMap& depth) {
    const Camera& camera = depth.camera();
    camera.RequirePinhole();
    if (depth.CountValid() == 0) return;

    const Rigid3& pose = depth.pose();
    const double voxel = config_.voxel_size;
    const double step = 0.5 * voxel;
    std::unordered_set<GridKey, GridKeyHash> touched;
    for (int row = 0; row < depth.height(); ++row) {
      for (int col = 0; col < depth.width(); ++col) {
        if (!depth.Valid(col, row)) continue;
        const double d = depth.At(col, row);
        const double near = std::max(d - truncation_, 1e-9);
        const double far = d + truncation_;
        for (double s = near;; s += step) {
          const double z = std::min(s, far);
          const Vec3 p = BackprojectToWorld(camera, pose, col + 0.5, row + 0.5, z);
          touched.insert(BlockOf(NearestGrid(p)));
          if (z >= far) break;
        }
      }
    }

    std::vector<GridKey> keys(touched.begin(), touched.end());
    std::sort(keys.begin(), keys.end());
    for (const GridKey& bk : keys) {
      if (!BlockIntersectsBounds(bk)) continue;
      Block* block = nullptr;
      for (int lk = 0; lk < kBlockSize; ++lk) {
        for (int lj = 0; lj < kBlockSize; ++lj) {
          for (int li = 0; li < kBlockSize; ++li) {
            const GridKey g{bk.i * kBlockSize + li, bk.j * kBlockSize + lj,
                            bk.k * kBlockSize + lk};
            const Vec3 world = Position(g);
            if (config_.bounds && !config_.bounds->Contains(world)) continue;
            const Vec3 cam = pose * world;
            if (!(cam.z() > 0.0)) continue;
            const double u = camera.fx() * cam.x() / cam.z() + camera.cx();
            const double v = camera.fy() * cam.y() / cam.z() + camera.cy();
            const auto observed = LookupDepth(depth, u, v);
            if (!observed) continue;
            const double sd = *observed - cam.z();
            if (!(sd > -truncation_ && sd <= truncation_)) continue;
            if (block == nullptr) block = &Allocate(bk);
            const int l = (lk * kBlockSize + lj) * kBlockSize + li;
            float& w = block->weight[l];
            float& f = block->sdf[l];
            f = (f * w + static_cast<float>(sd)) / (w + 1.0f);
            w += 1.0f;
          }
        }
      }
    }
  }

  // Sets every grid point in `bounds` to the clamped value of `sdf` with unit
  // weight. Intended for analytic test volumes.
  void FillAnalytic(const SceneBounds& bounds,
                    const std::function<double(const Vec3&)>& sdf) {
    TILERECON_CHECK(!bounds.Empty(), ErrorCode::kInvalidArgument,
                    "fill bounds are empty");
    const double voxel = config_.voxel_size;
    const GridKey lo{static_cast<std::int64_t>(std::ceil(bounds.min.x() / voxel)),
                     static_cast<std::int64_t>(std::ceil(bounds.min.y() / voxel)),
                     static_cast<std::int64_t>(std::ceil(bounds.min.z() / voxel))};
    const GridKey hi{static_cast<std::int64_t>(std::floor(bounds.max.x() / voxel)),
                     static_cast<std::int64_t>(std::floor(bounds.max.y() / voxel)),
                     static_cast<std::int64_t>(std::floor(bounds.max.z() / voxel))};
    for (std::int64_t k = lo.k; k <= hi.k; ++k) {
      for (std::int64_t j = lo.j; j <= hi.j; ++j) {
        for (std::int64_t i = lo.i; i <= hi.i; ++i) {
          const GridKey g{i, j, k};
          const Vec3 p = Position(g);
          if (config_.bounds && !config_.bounds->Contains(p)) continue;
          Block& block = Allocate(BlockOf(g));
          const int l = LocalIndex(g);
          block.sdf[l] = static_cast<float>(std::clamp(sdf(p), -truncation_, truncation_));
          block.weight[l] = 1.0f;
        }
      }
    }
  }

 private:
  static std::int64_t FloorDiv(std::int64_t v) {
    return v >= 0 ? v / kBlockSize : -((-v + kBlockSize - 1) / kBlockSize);
  }

  GridKey NearestGrid(const Vec3& p) const {
    const double voxel = config_.voxel_size;
    return {static_cast<std::int64_t>(std::floor(p.x() / voxel + 0.5)),
            static_cast<std::int64_t>(std::floor(p.y() / voxel + 0.5)),
            static_cast<std::int64_t>(std::floor(p.z() / voxel + 0.5))};
  }

  bool BlockIntersectsBounds(const GridKey& bk) const {
    if (!config_.bounds) return true;
    const Vec3 lo = Position(bk.i * kBlockSize, bk.j * kBlockSize, bk.k * kBlockSize);
    const Vec3 hi = lo + Vec3::Constant((kBlockSize - 1) * config_.voxel_size);
    return !SceneBounds::Of(lo, hi).Intersect(*config_.bounds).Empty();
  }

  Block& Allocate(const GridKey& bk) {
    auto& slot = blocks_[bk];
    if (!slot) slot = std::make_unique<Block>();
    return *slot;
  }

  // Bilinear depth when the four surrounding pixel centers are valid and
  // agree within the truncation band; otherwise the containing pixel.
  std::optional<double> LookupDepth(const DepthMap& depth, double u, double v) const {
    if (!(u >= 0.0 && v >= 0.0 && u < depth.width() && v < depth.height())) {
      return std::nullopt;
    }
    const double x = u - 0.5;
    const double y = v - 0.5;
    const int c0 = static_cast<int>(std::floor(x));
    const int r0 = static_cast<int>(std::floor(y));
    if (c0 >= 0 && r0 >= 0 && c0 + 1 < depth.width() && r0 + 1 < depth.height() &&
        depth.Valid(c0, r0) && depth.Valid(c0 + 1, r0) && depth.Valid(c0, r0 + 1) &&
        depth.Valid(c0 + 1, r0 + 1)) {
      const double d00 = depth.At(c0, r0);
      const double d10 = depth.At(c0 + 1, r0);
      const double d01 = depth.At(c0, r0 + 1);
      const double d11 = depth.At(c0 + 1, r0 + 1);
      const double lo = std::min({d00, d10, d01, d11});
      const double hi = std::max({d00, d10, d01, d11});
      if (hi - lo <= truncation_) {
        const double a = x - c0;
        const double b = y - r0;
        return (1 - a) * (1 - b) * d00 + a * (1 - b) * d10 + (1 - a) * b * d01 +
               a * b * d11;
      }
    }
    const int col = static_cast<int>(u);
    const int row = static_cast<int>(v);
    if (!depth.Valid(col, row)) return std::nullopt;
    return depth.At(col, row);
  }

  TsdfConfig config_;
  double truncation_ = 0.0;
  std::unordered_map<GridKey, std::unique_ptr<Block>, GridKeyHash> blocks_;
};

// Marching cubes over every cube whose eight corners are observed. Vertices on
// shared cube edges are emitted once.
inline Mesh ExtractMesh(const TsdfVolume& volume) {
  TILERECON_CHECK(volume.CountObserved() > 0, ErrorCode::kEmptyVolume,
                  "volume has no observed voxels");
  constexpr int B = TsdfVolume::kBlockSize;
  const auto& table = mc::CaseTable();
  const auto& edges = mc::Edges();

  struct EdgeKey {
    GridKey g;
    int axis;
    bool operator==(const EdgeKey&) const = default;
  };
  struct EdgeKeyHash {
    std::size_t operator()(const EdgeKey& e) const {
      return GridKeyHash{}(e.g) * 3 + static_cast<std::size_t>(e.axis);
    }
  };
  std::unordered_map<EdgeKey, std::uint32_t, EdgeKeyHash> edge_vertex;
  Mesh mesh;

  // Corner lookup with a one-entry block cache.
  GridKey cached_key{INT64_MIN, 0, 0};
  const TsdfVolume::Block* cached = nullptr;
  const auto corner = [&](const GridKey& g, float& sdf) {
    const GridKey bk = TsdfVolume::BlockOf(g);
    if (!(bk == cached_key)) {
      cached_key = bk;
      cached = volume.FindBlock(bk);
    }
    if (cached == nullptr) return false;
    const int l = TsdfVolume::LocalIndex(g);
    if (!(cached->weight[l] > 0.0f)) return false;
    sdf = cached->sdf[l];
    return true;
  };

  for (const GridKey& bk : volume.SortedBlockKeys()) {
    const TsdfVolume::Block* block = volume.FindBlock(bk);
    for (int lk = 0; lk < B; ++lk) {
      for (int lj = 0; lj < B; ++lj) {
        for (int li = 0; li < B; ++li) {
          if (!(block->weight[(lk * B + lj) * B + li] > 0.0f)) continue;
          const GridKey base{bk.i * B + li, bk.j * B + lj, bk.k * B + lk};
          std::array<float, 8> value{};
          int inside = 0;
          bool complete = true;
          for (int c = 0; c < 8 && complete; ++c) {
            const GridKey g{base.i + (c & 1), base.j + ((c >> 1) & 1),
                            base.k + ((c >> 2) & 1)};
            complete = corner(g, value[c]);
            if (value[c] < 0.0f) inside |= 1 << c;
          }
          if (!complete || inside == 0 || inside == 255) continue;

          const auto vertex_on = [&](int e) {
            const mc::CubeEdge& edge = edges[e];
            const GridKey ga{base.i + (edge.a & 1), base.j + ((edge.a >> 1) & 1),
                             base.k + ((edge.a >> 2) & 1)};
            const EdgeKey key{ga, edge.axis};
            const auto it = edge_vertex.find(key);
            if (it != edge_vertex.end()) return it->second;
            const double fa = value[edge.a];
            const double fb = value[edge.b];
            const double t = fa / (fa - fb);
            Vec3 p = volume.Position(ga);
            p[edge.axis] += t * volume.voxel_size();
            const auto index = static_cast<std::uint32_t>(mesh.vertices.size());
            mesh.vertices.push_back(p);
            edge_vertex.emplace(key, index);
            return index;
          };
          for (const auto& tri : table[inside]) {
            mesh.triangles.push_back({vertex_on(tri[0]), vertex_on(tri[1]),
                                      vertex_on(tri[2])});
          }
        }
      }
    }
  }
  // Grid points with sdf exactly zero make several edges yield the same
  // vertex; merging them keeps the surface closed once slivers are dropped.
  std::unordered_map<GridKey, std::uint32_t, GridKeyHash> by_position;
  std::vector<std::uint32_t> remap(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& p = mesh.vertices[i];
    const GridKey bits{std::bit_cast<std::int64_t>(p.x()), std::bit_cast<std::int64_t>(p.y()),
                       std::bit_cast<std::int64_t>(p.z())};
    remap[i] = by_position.emplace(bits, static_cast<std::uint32_t>(i)).first->second;
  }
  for (auto& tri : mesh.triangles) {
    for (auto& v : tri) v = remap[v];
  }
  mesh.RemoveDegenerateTriangles();
  mesh.ComputeVertexNormals();
  return mesh;
}

// ---------------------------------------------------------------------------
// Crop and stitch

struct CropBox {
  SceneBounds bounds;
  std::array<bool, 3> clip_axis{true, true, true};
  // An open max side excludes the plane itself so neighboring boxes tile.
  std::array<bool, 3> closed_max{true, true, true};
};

// Partition cells are gridded on x and z; y stays unbounded.
inline CropBox CropBoxForRegion(const SubRegion& region) {
  CropBox box;
  box.bounds = region.bounds;
  box.clip_axis = {true, false, true};
  box.closed_max = {region.closed_max_x, true, region.closed_max_z};
  return box;
}

// Clips each triangle to the box, splitting triangles that cross a plane.
// Points on a plane count as inside during clipping; faces lying entirely on
// an open max plane are then removed.
inline Mesh CropMesh(const Mesh& mesh, const CropBox& box) {
  Mesh out;
  std::vector<std::int64_t> remap(mesh.vertices.size(), -1);
  const auto original = [&](std::uint32_t i) {
    if (remap[i] < 0) {
      remap[i] = static_cast<std::int64_t>(out.vertices.size());
      out.vertices.push_back(mesh.vertices[i]);
    }
    return static_cast<std::uint32_t>(remap[i]);
  };

  struct PolyVertex {
    Vec3 p;
    std::int64_t source;  // original index or -1 for a new point
  };
  std::vector<PolyVertex> poly;
  std::vector<PolyVertex> next;
  for (const auto& tri : mesh.triangles) {
    poly.clear();
    for (auto i : tri) poly.push_back({mesh.vertices[i], i});
    for (int axis = 0; axis < 3 && !poly.empty(); ++axis) {
      if (!box.clip_axis[axis]) continue;
      for (int side = 0; side < 2 && !poly.empty(); ++side) {
        const double plane = side == 0 ? box.bounds.min[axis] : box.bounds.max[axis];
        const auto in = [&](const Vec3& p) {
          return side == 0 ? p[axis] >= plane : p[axis] <= plane;
        };
        next.clear();
        for (std::size_t k = 0; k < poly.size(); ++k) {
          const PolyVertex& s = poly[(k + poly.size() - 1) % poly.size()];
          const PolyVertex& e = poly[k];
          const bool s_in = in(s.p);
          const bool e_in = in(e.p);
          if (s_in != e_in) {
            const double t = (plane - s.p[axis]) / (e.p[axis] - s.p[axis]);
            Vec3 q = s.p + t * (e.p - s.p);
            q[axis] = plane;
            next.push_back({q, -1});
          }
          if (e_in) next.push_back(e);
        }
        std::swap(poly, next);
      }
    }
    if (poly.size() < 3) continue;

    bool on_open_face = false;
    for (int axis = 0; axis < 3; ++axis) {
      if (!box.clip_axis[axis] || box.closed_max[axis]) continue;
      const double plane = box.bounds.max[axis];
      on_open_face |= std::all_of(poly.begin(), poly.end(),
                                  [&](const PolyVertex& v) { return v.p[axis] == plane; });
    }
    if (on_open_face) continue;

    std::vector<std::uint32_t> ids;
    ids.reserve(poly.size());
    for (const auto& v : poly) {
      if (v.source >= 0) {
        ids.push_back(original(static_cast<std::uint32_t>(v.source)));
      } else {
        ids.push_back(static_cast<std::uint32_t>(out.vertices.size()));
        out.vertices.push_back(v.p);
      }
    }
    for (std::size_t k = 1; k + 1 < ids.size(); ++k) {
      out.triangles.push_back({ids[0], ids[k], ids[k + 1]});
    }
  }
  out.RemoveDegenerateTriangles();
  return out;
}

// Merges vertices closer than `tolerance` (first occurrence wins) and drops
// faces that collapse or duplicate an earlier face.
inline Mesh WeldVertices(const Mesh& mesh, double tolerance) {
  TILERECON_CHECK(tolerance > 0.0, ErrorCode::kInvalidArgument,
                  "weld tolerance must be positive");
  Mesh out;
  std::unordered_map<GridKey, std::vector<std::uint32_t>, GridKeyHash> cells;
  const auto cell_of = [&](const Vec3& p) {
    return GridKey{static_cast<std::int64_t>(std::floor(p.x() / tolerance)),
                   static_cast<std::int64_t>(std::floor(p.y() / tolerance)),
                   static_cast<std::int64_t>(std::floor(p.z() / tolerance))};
  };
  const double tol2 = tolerance * tolerance;
  std::vector<std::uint32_t> remap(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& p = mesh.vertices[i];
    const GridKey c = cell_of(p);
    std::optional<std::uint32_t> found;
    for (std::int64_t dk = -1; dk <= 1 && !found; ++dk) {
      for (std::int64_t dj = -1; dj <= 1 && !found; ++dj) {
        for (std::int64_t di = -1; di <= 1 && !found; ++di) {
          const auto it = cells.find({c.i + di, c.j + dj, c.k + dk});
          if (it == cells.end()) continue;
          for (std::uint32_t r : it->second) {
            if ((out.vertices[r] - p).squaredNorm() <= tol2) {
              found = r;
              break;
            }
          }
        }
      }
    }
    if (!found) {
      found = static_cast<std::uint32_t>(out.vertices.size());
      out.vertices.push_back(p);
      cells[c].push_back(*found);
    }
    remap[i] = *found;
  }

  std::unordered_set<GridKey, GridKeyHash> seen;
  for (const auto& tri : mesh.triangles) {
    const Triangle t{remap[tri[0]], remap[tri[1]], remap[tri[2]]};
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
    std::array<std::uint32_t, 3> sorted = t;
    std::sort(sorted.begin(), sorted.end());
    if (!seen.insert({sorted[0], sorted[1], sorted[2]}).second) continue;
    out.triangles.push_back(t);
  }
  out.RemoveUnreferencedVertices();
  return out;
}

struct RegionMesh {
  Mesh mesh;
  CropBox box;
};

inline Mesh CropAndStitch(std::span<const RegionMesh> parts, double weld_tolerance) {
  Mesh merged;
  for (const auto& part : parts) merged.Append(CropMesh(part.mesh, part.box));
  merged.normals.clear();
  if (merged.vertices.empty()) return merged;
  Mesh out = WeldVertices(merged, weld_tolerance);
  out.ComputeVertexNormals();
  return out;
}

// Distance from each vertex of `mesh` lying on the plane axis = value to the
// nearest other on-plane vertex from a different source part. Used to measure
// seam gaps between stitched parts.
inline double MaxSeamGap(const Mesh& a, const Mesh& b, int axis, double value,
                         double plane_tol) {
  std::vector<Vec3> pa;
  std::vector<Vec3> pb;
  for (const auto& p : a.vertices) {
    if (std::abs(p[axis] - value) <= plane_tol) pa.push_back(p);
  }
  for (const auto& p : b.vertices) {
    if (std::abs(p[axis] - value) <= plane_tol) pb.push_back(p);
  }
  if (pa.empty() || pb.empty()) return 0.0;
  double worst = 0.0;
  for (const auto& p : pa) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : pb) best = std::min(best, (p - q).squaredNorm());
    worst = std::max(worst, std::sqrt(best));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Debug dump: <stem>.json header plus <stem>.raw with float32 sdf then weight
// over the dense bounding grid of allocated blocks (x fastest).

inline void DumpVolume(const TsdfVolume& volume, const std::filesystem::path& stem) {
  const auto keys = volume.SortedBlockKeys();
  TILERECON_CHECK(!keys.empty(), ErrorCode::kEmptyVolume, "volume has no blocks");
  constexpr int B = TsdfVolume::kBlockSize;
  GridKey lo = keys.front();
  GridKey hi = keys.front();
  for (const auto& k : keys) {
    lo = {std::min(lo.i, k.i), std::min(lo.j, k.j), std::min(lo.k, k.k)};
    hi = {std::max(hi.i, k.i), std::max(hi.j, k.j), std::max(hi.k, k.k)};
  }
  const std::array<std::int64_t, 3> dims{(hi.i - lo.i + 1) * B, (hi.j - lo.j + 1) * B,
                                         (hi.k - lo.k + 1) * B};
  const std::size_t n = static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
  std::vector<float> sdf(n, 0.0f);
  std::vector<float> weight(n, 0.0f);
  for (std::int64_t k = 0; k < dims[2]; ++k) {
    for (std::int64_t j = 0; j < dims[1]; ++j) {
      for (std::int64_t i = 0; i < dims[0]; ++i) {
        const GridKey g{lo.i * B + i, lo.j * B + j, lo.k * B + k};
        if (const auto v = volume.Find(g)) {
          const std::size_t idx = static_cast<std::size_t>((k * dims[1] + j) * dims[0] + i);
          sdf[idx] = v->sdf;
          weight[idx] = v->weight;
        }
      }
    }
  }
  const Vec3 origin = volume.Position(lo.i * B, lo.j * B, lo.k * B);
  nlohmann::ordered_json header;
  header["format"] = "float32-le";
  header["layout"] = "sdf then weight, x fastest";
  header["origin"] = {origin.x(), origin.y(), origin.z()};
  header["voxel_size"] = volume.voxel_size();
  header["truncation"] = volume.truncation();
  header["dims"] = dims;
  std::filesystem::path json_path = stem;
  json_path += ".json";
  std::filesystem::path raw_path = stem;
  raw_path += ".raw";
  {
    std::ofstream f(json_path, std::ios::trunc);
    TILERECON_CHECK(f.is_open(), ErrorCode::kIoFailure, "cannot write " + json_path.string());
    f << header.dump(2) << "\n";
  }
  std::ofstream f(raw_path, std::ios::binary | std::ios::trunc);
  TILERECON_CHECK(f.is_open(), ErrorCode::kIoFailure, "cannot write " + raw_path.string());
  f.write(reinterpret_cast<const char*>(sdf.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  f.write(reinterpret_cast<const char*>(weight.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
}

}  // namespace tilerecon
