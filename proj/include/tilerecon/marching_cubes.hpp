#pragma once

// Marching-cubes case table, derived at startup instead of hand-typed.
//
// For each of the 256 sign configurations the iso-surface polygons are traced
// face by face: on every cube face the sign-changing edges are paired, each
// edge belongs to two faces, so the pairings close into cycles. Faces with
// four crossings separate the inside corners, a rule that only looks at the
// face itself, so neighboring cubes always agree and the surface is closed.

#include <algorithm>
#include <array>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace tilerecon {
namespace mc {

// Corner c sits at (c & 1, (c >> 1) & 1, (c >> 2) & 1).
inline Eigen::Vector3d CornerOffset(int c) {
  return Eigen::Vector3d(c & 1, (c >> 1) & 1, (c >> 2) & 1);
}

struct CubeEdge {
  int a;     // corner with the lower coordinate along `axis`
  int b;
  int axis;
};

// Edges 0-3 run along x, 4-7 along y, 8-11 along z.
inline const std::array<CubeEdge, 12>& Edges() {
  static const std::array<CubeEdge, 12> edges = [] {
    std::array<CubeEdge, 12> out{};
    int e = 0;
    for (int axis = 0; axis < 3; ++axis) {
      const int bit = 1 << axis;
      for (int c = 0; c < 8; ++c) {
        if (c & bit) continue;
        out[e++] = {c, c | bit, axis};
      }
    }
    return out;
  }();
  return edges;
}

inline int EdgeBetween(int a, int b) {
  const auto& edges = Edges();
  for (int e = 0; e < 12; ++e) {
    if ((edges[e].a == a && edges[e].b == b) || (edges[e].a == b && edges[e].b == a)) {
      return e;
    }
  }
  return -1;
}

inline bool ShareFace(int e0, int e1) {
  const auto& edges = Edges();
  for (int d = 0; d < 3; ++d) {
    if (d == edges[e0].axis || d == edges[e1].axis) continue;
    if (((edges[e0].a >> d) & 1) == ((edges[e1].a >> d) & 1)) return true;
  }
  return false;
}

using CaseTriangles = std::vector<std::array<int, 3>>;

// Triangles (as edge indices) for a configuration where bit c of `inside`
// marks corner c as inside the surface. Winding puts the normal on the
// outside.
inline CaseTriangles BuildCase(int inside) {
  const auto& edges = Edges();
  const auto is_in = [&](int c) { return ((inside >> c) & 1) != 0; };

  std::array<std::vector<int>, 12> links;
  // Face (axis, side) each pairing lies on, keyed by the ordered edge pair.
  std::array<std::array<int, 12>, 12> link_face{};
  for (int axis = 0; axis < 3; ++axis) {
    const int u = 1 << ((axis + 1) % 3);
    const int w = 1 << ((axis + 2) % 3);
    for (int side = 0; side < 2; ++side) {
      const int base = side ? (1 << axis) : 0;
      const std::array<int, 4> ring{base, base | u, base | u | w, base | w};
      std::array<int, 4> face_edge{};
      std::array<bool, 4> crossing{};
      int num_crossing = 0;
      for (int k = 0; k < 4; ++k) {
        face_edge[k] = EdgeBetween(ring[k], ring[(k + 1) % 4]);
        crossing[k] = is_in(ring[k]) != is_in(ring[(k + 1) % 4]);
        num_crossing += crossing[k];
      }
      const auto link = [&](int e0, int e1) {
        links[e0].push_back(e1);
        links[e1].push_back(e0);
        link_face[e0][e1] = link_face[e1][e0] = 2 * axis + side;
      };
      if (num_crossing == 2) {
        int first = -1;
        for (int k = 0; k < 4; ++k) {
          if (!crossing[k]) continue;
          if (first < 0) {
            first = face_edge[k];
          } else {
            link(first, face_edge[k]);
          }
        }
      } else if (num_crossing == 4) {
        // Cut off each inside corner on its own.
        if (is_in(ring[0])) {
          link(face_edge[3], face_edge[0]);
          link(face_edge[1], face_edge[2]);
        } else {
          link(face_edge[0], face_edge[1]);
          link(face_edge[2], face_edge[3]);
        }
      }
    }
  }

  CaseTriangles triangles;
  std::array<bool, 12> visited{};
  for (int start = 0; start < 12; ++start) {
    if (visited[start] || links[start].empty()) continue;
    std::vector<int> cycle{start};
    visited[start] = true;
    int prev = -1;
    int cur = start;
    while (true) {
      const int next = links[cur][0] != prev ? links[cur][0] : links[cur][1];
      if (next == start) break;
      visited[next] = true;
      cycle.push_back(next);
      prev = cur;
      cur = next;
    }

    // Seen from outside the cube, the inside corner of a face segment lies
    // to the right of the walking direction when the normal points outward.
    const auto midpoint = [&](int e) -> Eigen::Vector3d {
      return 0.5 * (CornerOffset(edges[e].a) + CornerOffset(edges[e].b));
    };
    const int e0 = cycle[0];
    const int e1 = cycle[1];
    const int face = link_face[e0][e1];
    Eigen::Vector3d face_normal = Eigen::Vector3d::Zero();
    face_normal[face / 2] = face % 2 ? 1.0 : -1.0;
    const Eigen::Vector3d dir = midpoint(e1) - midpoint(e0);
    const int in_corner = is_in(edges[e0].a) ? edges[e0].a : edges[e0].b;
    const double side = (CornerOffset(in_corner) - midpoint(e0)).dot(face_normal.cross(dir));
    if (side > 0.0) std::reverse(cycle.begin() + 1, cycle.end());
    // A fan diagonal joining two points on one cube face would lie in that
    // face and overlap the neighbor's triangles, so pick a fan apex free of
    // such diagonals.
    const std::size_t n = cycle.size();
    std::size_t apex = 0;
    for (std::size_t a = 0; a < n; ++a) {
      bool ok = true;
      for (std::size_t k = 2; k + 1 < n && ok; ++k) {
        ok = !ShareFace(cycle[a], cycle[(a + k) % n]);
      }
      if (ok) {
        apex = a;
        break;
      }
    }
    for (std::size_t k = 1; k + 1 < n; ++k) {
      triangles.push_back({cycle[apex], cycle[(apex + k) % n], cycle[(apex + k + 1) % n]});
    }
  }
  return triangles;
}

inline const std::array<CaseTriangles, 256>& CaseTable() {
  static const std::array<CaseTriangles, 256> table = [] {
    std::array<CaseTriangles, 256> out;
    for (int c = 0; c < 256; ++c) out[c] = BuildCase(c);
    return out;
  }();
  return table;
}

}  // namespace mc
}  // namespace tilerecon
