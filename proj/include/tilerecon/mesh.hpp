#pragma once

// Triangle mesh container with PLY/OBJ serialization.

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tilerecon/error.hpp"
#include "tilerecon/geometry.hpp"

namespace tilerecon {

using Triangle = std::array<std::uint32_t, 3>;

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<Vec3> normals;  // per vertex, empty when absent

  bool Empty() const { return triangles.empty(); }

  double TriangleArea(std::size_t t) const {
    const auto& tri = triangles[t];
    return 0.5 * (vertices[tri[1]] - vertices[tri[0]])
                     .cross(vertices[tri[2]] - vertices[tri[0]])
                     .norm();
  }

  double SurfaceArea() const {
    double area = 0.0;
    for (std::size_t t = 0; t < triangles.size(); ++t) area += TriangleArea(t);
    return area;
  }

  bool IndicesInRange() const {
    for (const auto& tri : triangles) {
      for (auto i : tri) {
        if (i >= vertices.size()) return false;
      }
    }
    return true;
  }

  // Area-weighted vertex normals from the triangle winding.
  void ComputeVertexNormals() {
    normals.assign(vertices.size(), Vec3::Zero());
    for (const auto& tri : triangles) {
      const Vec3 n = (vertices[tri[1]] - vertices[tri[0]])
                         .cross(vertices[tri[2]] - vertices[tri[0]]);
      for (auto i : tri) normals[i] += n;
    }
    for (Vec3& n : normals) {
      const double len = n.norm();
      if (len > 0.0) n /= len;
    }
  }

  // Drops triangles with repeated indices or area below `min_area`, then
  // removes vertices no longer referenced.
  void RemoveDegenerateTriangles(double min_area = 0.0) {
    std::vector<Triangle> kept;
    kept.reserve(triangles.size());
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      const auto& tri = triangles[t];
      if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) continue;
      if (!(TriangleArea(t) > min_area)) continue;
      kept.push_back(tri);
    }
    triangles = std::move(kept);
    RemoveUnreferencedVertices();
  }

  void RemoveUnreferencedVertices() {
    std::vector<std::int64_t> remap(vertices.size(), -1);
    std::vector<Vec3> new_vertices;
    std::vector<Vec3> new_normals;
    for (auto& tri : triangles) {
      for (auto& i : tri) {
        if (remap[i] < 0) {
          remap[i] = static_cast<std::int64_t>(new_vertices.size());
          new_vertices.push_back(vertices[i]);
          if (!normals.empty()) new_normals.push_back(normals[i]);
        }
        i = static_cast<std::uint32_t>(remap[i]);
      }
    }
    vertices = std::move(new_vertices);
    normals = std::move(new_normals);
  }

  void Append(const Mesh& other) {
    const auto offset = static_cast<std::uint32_t>(vertices.size());
    const bool keep_normals = normals.size() == vertices.size() &&
                              other.normals.size() == other.vertices.size() &&
                              (!vertices.empty() || !other.normals.empty());
    vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
    if (keep_normals) {
      normals.insert(normals.end(), other.normals.begin(), other.normals.end());
    } else {
      normals.clear();
    }
    for (auto tri : other.triangles) {
      for (auto& i : tri) i += offset;
      triangles.push_back(tri);
    }
  }
};

// ---------------------------------------------------------------------------
// PLY

// Binary little-endian PLY with float32 positions (and normals when present)
// and uint32 face indices. A mesh without triangles is written as a point
// cloud (no face element).
inline void WritePly(const std::filesystem::path& path, const Mesh& mesh) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  TILERECON_CHECK(file.is_open(), ErrorCode::kIoFailure,
                  "cannot write " + path.string());
  const bool with_normals =
      !mesh.normals.empty() && mesh.normals.size() == mesh.vertices.size();
  file << "ply\nformat binary_little_endian 1.0\n";
  file << "element vertex " << mesh.vertices.size() << "\n";
  file << "property float x\nproperty float y\nproperty float z\n";
  if (with_normals) {
    file << "property float nx\nproperty float ny\nproperty float nz\n";
  }
  if (!mesh.triangles.empty()) {
    file << "element face " << mesh.triangles.size() << "\n";
    file << "property list uchar uint vertex_indices\n";
  }
  file << "end_header\n";
  std::string buffer;
  const auto put_float = [&](double v) {
    const float f = static_cast<float>(v);
    buffer.append(reinterpret_cast<const char*>(&f), sizeof(float));
  };
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    for (int c = 0; c < 3; ++c) put_float(mesh.vertices[i][c]);
    if (with_normals) {
      for (int c = 0; c < 3; ++c) put_float(mesh.normals[i][c]);
    }
  }
  for (const auto& tri : mesh.triangles) {
    buffer.push_back(3);
    buffer.append(reinterpret_cast<const char*>(tri.data()), 3 * sizeof(std::uint32_t));
  }
  file.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  TILERECON_CHECK(file.good(), ErrorCode::kIoFailure,
                  "write failed for " + path.string());
}

inline void WritePointsPly(const std::filesystem::path& path,
                           const std::vector<Vec3>& points) {
  Mesh cloud;
  cloud.vertices = points;
  WritePly(path, cloud);
}

namespace internal {

enum class PlyType { kInt8, kUInt8, kInt16, kUInt16, kInt32, kUInt32, kFloat32, kFloat64 };

inline PlyType ParsePlyType(const std::string& name) {
  if (name == "char" || name == "int8") return PlyType::kInt8;
  if (name == "uchar" || name == "uint8") return PlyType::kUInt8;
  if (name == "short" || name == "int16") return PlyType::kInt16;
  if (name == "ushort" || name == "uint16") return PlyType::kUInt16;
  if (name == "int" || name == "int32") return PlyType::kInt32;
  if (name == "uint" || name == "uint32") return PlyType::kUInt32;
  if (name == "float" || name == "float32") return PlyType::kFloat32;
  if (name == "double" || name == "float64") return PlyType::kFloat64;
  Fail(ErrorCode::kParseError, "unknown PLY type " + name);
}

inline std::size_t PlyTypeSize(PlyType t) {
  switch (t) {
    case PlyType::kInt8:
    case PlyType::kUInt8: return 1;
    case PlyType::kInt16:
    case PlyType::kUInt16: return 2;
    case PlyType::kInt32:
    case PlyType::kUInt32:
    case PlyType::kFloat32: return 4;
    case PlyType::kFloat64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::kFloat32;
  bool is_list = false;
  PlyType count_type = PlyType::kUInt8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

class PlyValueReader {
 public:
  PlyValueReader(std::istream& in, bool binary) : in_(in), binary_(binary) {}

  double Read(PlyType type) {
    if (!binary_) {
      double v = 0.0;
      in_ >> v;
      TILERECON_CHECK(!in_.fail(), ErrorCode::kTruncatedRecord,
                      "PLY ascii data ended early");
      return v;
    }
    char buf[8];
    const std::size_t n = PlyTypeSize(type);
    in_.read(buf, static_cast<std::streamsize>(n));
    TILERECON_CHECK(static_cast<std::size_t>(in_.gcount()) == n,
                    ErrorCode::kTruncatedRecord, "PLY binary data ended early");
    switch (type) {
      case PlyType::kInt8: return Cast<std::int8_t>(buf);
      case PlyType::kUInt8: return Cast<std::uint8_t>(buf);
      case PlyType::kInt16: return Cast<std::int16_t>(buf);
      case PlyType::kUInt16: return Cast<std::uint16_t>(buf);
      case PlyType::kInt32: return Cast<std::int32_t>(buf);
      case PlyType::kUInt32: return Cast<std::uint32_t>(buf);
      case PlyType::kFloat32: return Cast<float>(buf);
      case PlyType::kFloat64: return Cast<double>(buf);
    }
    return 0.0;
  }

 private:
  template <typename T>
  static double Cast(const char* buf) {
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return static_cast<double>(v);
  }

  std::istream& in_;
  bool binary_;
};

}  // namespace internal

// Reads vertices (x, y, z and optional nx, ny, nz) and polygon faces from an
// ascii or binary little-endian PLY. Polygons are fan-triangulated.
inline Mesh ReadPly(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  TILERECON_CHECK(file.is_open(), ErrorCode::kMissingFile,
                  "cannot open " + path.string());
  std::string line;
  std::getline(file, line);
  TILERECON_CHECK(line.rfind("ply", 0) == 0, ErrorCode::kParseError,
                  path.string() + ": missing ply magic");
  bool binary = false;
  std::vector<internal::PlyElement> elements;
  while (std::getline(file, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string keyword;
    ls >> keyword;
    if (keyword == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") {
        binary = true;
      } else {
        TILERECON_CHECK(fmt == "ascii", ErrorCode::kParseError,
                        path.string() + ": unsupported PLY format " + fmt);
      }
    } else if (keyword == "element") {
      internal::PlyElement el;
      ls >> el.name >> el.count;
      elements.push_back(el);
    } else if (keyword == "property") {
      TILERECON_CHECK(!elements.empty(), ErrorCode::kParseError,
                      path.string() + ": property before element");
      internal::PlyProperty prop;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ls >> count_type >> item_type >> prop.name;
        prop.is_list = true;
        prop.count_type = internal::ParsePlyType(count_type);
        prop.type = internal::ParsePlyType(item_type);
      } else {
        prop.type = internal::ParsePlyType(type);
        ls >> prop.name;
      }
      elements.back().properties.push_back(prop);
    } else if (keyword == "end_header") {
      break;
    }
  }

  Mesh mesh;
  internal::PlyValueReader reader(file, binary);
  for (const auto& el : elements) {
    const bool is_vertex = el.name == "vertex";
    const bool is_face = el.name == "face";
    if (is_vertex) mesh.vertices.reserve(el.count);
    bool has_normals = false;
    for (std::size_t i = 0; i < el.count; ++i) {
      Vec3 pos = Vec3::Zero();
      Vec3 normal = Vec3::Zero();
      for (const auto& prop : el.properties) {
        if (prop.is_list) {
          const auto n = static_cast<std::size_t>(reader.Read(prop.count_type));
          std::vector<std::uint32_t> ids(n);
          for (auto& id : ids) id = static_cast<std::uint32_t>(reader.Read(prop.type));
          if (is_face && (prop.name == "vertex_indices" || prop.name == "vertex_index")) {
            for (std::size_t k = 2; k < n; ++k) {
              mesh.triangles.push_back({ids[0], ids[k - 1], ids[k]});
            }
          }
          continue;
        }
        const double v = reader.Read(prop.type);
        if (!is_vertex) continue;
        if (prop.name == "x") pos.x() = v;
        else if (prop.name == "y") pos.y() = v;
        else if (prop.name == "z") pos.z() = v;
        else if (prop.name == "nx") { normal.x() = v; has_normals = true; }
        else if (prop.name == "ny") normal.y() = v;
        else if (prop.name == "nz") normal.z() = v;
      }
      if (is_vertex) {
        mesh.vertices.push_back(pos);
        if (has_normals) mesh.normals.push_back(normal);
      }
    }
  }
  TILERECON_CHECK(mesh.IndicesInRange(), ErrorCode::kParseError,
                  path.string() + ": face index out of range");
  return mesh;
}

inline void WriteObj(const std::filesystem::path& path, const Mesh& mesh) {
  std::ofstream file(path, std::ios::trunc);
  TILERECON_CHECK(file.is_open(), ErrorCode::kIoFailure,
                  "cannot write " + path.string());
  file.precision(9);
  const bool with_normals =
      !mesh.normals.empty() && mesh.normals.size() == mesh.vertices.size();
  for (const Vec3& v : mesh.vertices) {
    file << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
  }
  if (with_normals) {
    for (const Vec3& n : mesh.normals) {
      file << "vn " << n.x() << " " << n.y() << " " << n.z() << "\n";
    }
  }
  for (const auto& tri : mesh.triangles) {
    file << "f";
    for (auto i : tri) {
      file << " " << i + 1;
      if (with_normals) file << "//" << i + 1;
    }
    file << "\n";
  }
  TILERECON_CHECK(file.good(), ErrorCode::kIoFailure,
                  "write failed for " + path.string());
}

}  // namespace tilerecon
