#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "tilerecon/error.hpp"

namespace tilerecon {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline double RadToDeg(double rad) { return rad * 180.0 / M_PI; }
inline double DegToRad(double deg) { return deg * M_PI / 180.0; }

// Model ids follow the public sparse-model numbering.
enum class CameraModel : int {
  kSimplePinhole = 0,
  kPinhole = 1,
  kSimpleRadial = 2,
};

inline std::optional<CameraModel> CameraModelFromId(int id) {
  switch (id) {
    case 0: return CameraModel::kSimplePinhole;
    case 1: return CameraModel::kPinhole;
    case 2: return CameraModel::kSimpleRadial;
    default: return std::nullopt;
  }
}

inline std::optional<CameraModel> CameraModelFromName(const std::string& name) {
  if (name == "SIMPLE_PINHOLE") return CameraModel::kSimplePinhole;
  if (name == "PINHOLE") return CameraModel::kPinhole;
  if (name == "SIMPLE_RADIAL") return CameraModel::kSimpleRadial;
  return std::nullopt;
}

inline const char* CameraModelName(CameraModel model) {
  switch (model) {
    case CameraModel::kSimplePinhole: return "SIMPLE_PINHOLE";
    case CameraModel::kPinhole: return "PINHOLE";
    case CameraModel::kSimpleRadial: return "SIMPLE_RADIAL";
  }
  return "UNKNOWN";
}

inline std::size_t CameraModelNumParams(CameraModel model) {
  switch (model) {
    case CameraModel::kSimplePinhole: return 3;  // f, cx, cy
    case CameraModel::kPinhole: return 4;        // fx, fy, cx, cy
    case CameraModel::kSimpleRadial: return 4;   // f, cx, cy, k
  }
  return 0;
}

// Intrinsics are kept in the raw parameter layout of the model so that a
// parsed camera writes back bit-for-bit.
struct Camera {
  std::uint32_t camera_id = 0;
  CameraModel model = CameraModel::kPinhole;
  std::uint64_t width = 0;
  std::uint64_t height = 0;
  std::vector<double> params;

  static Camera Pinhole(std::uint32_t id, std::uint64_t width,
                        std::uint64_t height, double fx, double fy, double cx,
                        double cy) {
    return Camera{id, CameraModel::kPinhole, width, height, {fx, fy, cx, cy}};
  }

  double fx() const { return params.at(0); }
  double fy() const {
    return model == CameraModel::kPinhole ? params.at(1) : params.at(0);
  }
  double cx() const {
    return model == CameraModel::kPinhole ? params.at(2) : params.at(1);
  }
  double cy() const {
    return model == CameraModel::kPinhole ? params.at(3) : params.at(2);
  }

  bool IsPinholeGeometry() const {
    return model == CameraModel::kPinhole ||
           model == CameraModel::kSimplePinhole;
  }

  void RequirePinhole() const {
    TILERECON_CHECK(IsPinholeGeometry(), ErrorCode::kUnsupportedCamera,
                    "camera " + std::to_string(camera_id) + " has model " +
                        CameraModelName(model));
  }

  // Empty when the camera satisfies its invariants.
  std::string InvariantViolation() const {
    if (params.size() != CameraModelNumParams(model)) {
      return "wrong parameter count";
    }
    if (width == 0 || height == 0) return "zero image size";
    if (!(fx() > 0.0) || !(fy() > 0.0)) return "non-positive focal length";
    if (cx() < 0.0 || cx() > static_cast<double>(width) || cy() < 0.0 ||
        cy() > static_cast<double>(height)) {
      return "principal point outside image";
    }
    return {};
  }

  Mat3 K() const {
    Mat3 k = Mat3::Identity();
    k(0, 0) = fx();
    k(1, 1) = fy();
    k(0, 2) = cx();
    k(1, 2) = cy();
    return k;
  }

  bool operator==(const Camera&) const = default;
};

// World-to-camera rigid transform.
struct Rigid3 {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 operator*(const Vec3& x) const { return rotation * x + translation; }

  Rigid3 Inverse() const {
    const Eigen::Quaterniond inv = rotation.conjugate();
    return Rigid3{inv, -(inv * translation)};
  }

  // Camera center in world coordinates.
  Vec3 Center() const { return -(rotation.conjugate() * translation); }

  Mat4 Matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation.toRotationMatrix();
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  static Rigid3 FromMatrix(const Mat4& m) {
    Rigid3 pose;
    pose.rotation = Eigen::Quaterniond(Mat3(m.topLeftCorner<3, 3>()));
    pose.rotation.normalize();
    pose.translation = m.topRightCorner<3, 1>();
    return pose;
  }

  // Pose of a camera at `center` looking at `target`, with world `up`
  // mapping to image up (camera frame: x right, y down, z forward).
  static Rigid3 LookAt(const Vec3& center, const Vec3& target,
                       const Vec3& up = Vec3::UnitY()) {
    const Vec3 forward = (target - center).normalized();
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-12) right = forward.cross(Vec3::UnitX());
    right.normalize();
    const Vec3 down = forward.cross(right);
    Mat3 r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    Rigid3 pose;
    pose.rotation = Eigen::Quaterniond(r);
    pose.rotation.normalize();
    pose.translation = -(r * center);
    return pose;
  }
};

// Perspective projection of a world point; nullopt when the camera-frame depth
// is not positive. The result may fall outside the image rectangle.
inline std::optional<Vec2> TryProjectPoint(const Camera& camera,
                                           const Rigid3& pose,
                                           const Vec3& world) {
  const Vec3 cam = pose * world;
  if (!(cam.z() > 0.0)) return std::nullopt;
  return Vec2(camera.fx() * cam.x() / cam.z() + camera.cx(),
              camera.fy() * cam.y() / cam.z() + camera.cy());
}

inline Vec2 ProjectPoint(const Vec3& world, const Camera& camera,
                         const Rigid3& pose) {
  camera.RequirePinhole();
  const auto uv = TryProjectPoint(camera, pose, world);
  TILERECON_CHECK(uv.has_value(), ErrorCode::kBehindCamera,
                  "point has non-positive camera depth");
  return *uv;
}

inline bool InsideImage(const Camera& camera, const Vec2& uv) {
  return uv.x() >= 0.0 && uv.y() >= 0.0 &&
         uv.x() < static_cast<double>(camera.width) &&
         uv.y() < static_cast<double>(camera.height);
}

// Camera-frame point at pixel coordinate (u, v) with z-depth `depth`.
inline Vec3 BackprojectToCamera(const Camera& camera, double u, double v,
                                double depth) {
  return Vec3(depth * (u - camera.cx()) / camera.fx(),
              depth * (v - camera.cy()) / camera.fy(), depth);
}

inline Vec3 BackprojectToWorld(const Camera& camera, const Rigid3& pose,
                               double u, double v, double depth) {
  return pose.rotation.conjugate() *
         (BackprojectToCamera(camera, u, v, depth) - pose.translation);
}

// Axis-aligned box. A default-constructed box is empty (min > max).
struct SceneBounds {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  static SceneBounds Of(const Vec3& lo, const Vec3& hi) {
    SceneBounds b;
    b.min = lo;
    b.max = hi;
    return b;
  }

  bool Empty() const {
    return !(min.x() <= max.x() && min.y() <= max.y() && min.z() <= max.z());
  }

  void Extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }

  bool Contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }

  bool ContainsBox(const SceneBounds& other) const {
    return (other.min.array() >= min.array()).all() &&
           (other.max.array() <= max.array()).all();
  }

  SceneBounds Intersect(const SceneBounds& other) const {
    return Of(min.cwiseMax(other.min), max.cwiseMin(other.max));
  }

  SceneBounds Padded(double margin) const {
    return Of(min - Vec3::Constant(margin), max + Vec3::Constant(margin));
  }

  Vec3 Extent() const { return max - min; }
  Vec3 Center() const { return 0.5 * (min + max); }
  double Diagonal() const { return Empty() ? 0.0 : Extent().norm(); }

  bool operator==(const SceneBounds& other) const {
    return min == other.min && max == other.max;
  }
};

template <typename Range>
SceneBounds BoundsOf(const Range& points) {
  SceneBounds b;
  for (const Vec3& p : points) b.Extend(p);
  return b;
}

}  // namespace tilerecon
