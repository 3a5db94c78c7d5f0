#pragma once

// Reader/writer for sparse SfM models in the public COLMAP layout
// (cameras/images/points3D, binary or text).

#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tilerecon/error.hpp"
#include "tilerecon/geometry.hpp"

namespace tilerecon {

inline constexpr std::int64_t kInvalidPoint3DId = -1;

struct Observation {
  double x = 0.0;
  double y = 0.0;
  // kInvalidPoint3DId when the feature is not triangulated.
  std::int64_t point3d_id = kInvalidPoint3DId;

  bool HasPoint() const { return point3d_id != kInvalidPoint3DId; }
  bool operator==(const Observation&) const = default;
};

struct ImageRecord {
  std::uint32_t image_id = 0;
  // World-to-camera rotation as (w, x, y, z), stored exactly as read.
  std::array<double, 4> qvec{1.0, 0.0, 0.0, 0.0};
  Vec3 tvec = Vec3::Zero();
  std::uint32_t camera_id = 0;
  std::string name;
  std::vector<Observation> observations;

  Rigid3 Pose() const {
    Rigid3 pose;
    pose.rotation = Eigen::Quaterniond(qvec[0], qvec[1], qvec[2], qvec[3]);
    pose.rotation.normalize();
    pose.translation = tvec;
    return pose;
  }

  void SetPose(const Rigid3& pose) {
    const Eigen::Quaterniond q = pose.rotation.normalized();
    qvec = {q.w(), q.x(), q.y(), q.z()};
    tvec = pose.translation;
  }

  Vec3 Center() const { return Pose().Center(); }

  bool operator==(const ImageRecord& o) const {
    return image_id == o.image_id && qvec == o.qvec && tvec == o.tvec &&
           camera_id == o.camera_id && name == o.name &&
           observations == o.observations;
  }
};

struct TrackElement {
  std::uint32_t image_id = 0;
  std::uint32_t point2d_idx = 0;
  bool operator==(const TrackElement&) const = default;
};

struct Point3D {
  std::uint64_t point_id = 0;
  Vec3 xyz = Vec3::Zero();
  std::array<std::uint8_t, 3> color{0, 0, 0};
  double error = 0.0;
  std::vector<TrackElement> track;

  bool operator==(const Point3D& o) const {
    return point_id == o.point_id && xyz == o.xyz && color == o.color &&
           error == o.error && track == o.track;
  }
};

// Id-addressable container that keeps insertion (file) order, so that a
// parsed model is written back in the same record order.
template <typename Id, typename T>
class IndexedStore {
 public:
  using value_type = T;

  bool Contains(Id id) const { return index_.count(id) > 0; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }

  // Returns false if the id already exists.
  bool Add(Id id, T item) {
    if (!index_.emplace(id, items_.size()).second) return false;
    items_.push_back(std::move(item));
    return true;
  }

  const T* Find(Id id) const {
    const auto it = index_.find(id);
    return it == index_.end() ? nullptr : &items_[it->second];
  }
  T* Find(Id id) {
    const auto it = index_.find(id);
    return it == index_.end() ? nullptr : &items_[it->second];
  }

  const T& at(Id id) const {
    const T* item = Find(id);
    TILERECON_CHECK(item != nullptr, ErrorCode::kInvalidArgument,
                    "unknown id " + std::to_string(id));
    return *item;
  }
  T& at(Id id) {
    T* item = Find(id);
    TILERECON_CHECK(item != nullptr, ErrorCode::kInvalidArgument,
                    "unknown id " + std::to_string(id));
    return *item;
  }

  void Reserve(std::size_t n) {
    items_.reserve(n);
    index_.reserve(n);
  }

  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }

  bool operator==(const IndexedStore& o) const { return items_ == o.items_; }

 private:
  std::vector<T> items_;
  std::unordered_map<Id, std::size_t> index_;
};

struct SparseModel {
  IndexedStore<std::uint32_t, Camera> cameras;
  IndexedStore<std::uint32_t, ImageRecord> images;
  IndexedStore<std::uint64_t, Point3D> points;

  bool operator==(const SparseModel&) const = default;
};

enum class ModelFormat { kBinary, kText, kAuto };

// ---------------------------------------------------------------------------
// Validation

struct DanglingReference {
  enum class Kind {
    kImageCamera,       // image -> missing camera
    kObservationPoint,  // image observation -> missing 3D point
    kTrackImage,        // point track -> missing image
    kTrackObservation,  // point track -> observation index out of range
  };
  Kind kind;
  std::uint64_t owner_id;   // image id or point id holding the reference
  std::uint64_t target_id;  // referenced id
  std::uint64_t index;      // observation / track slot

  bool operator==(const DanglingReference&) const = default;
};

inline const char* DanglingKindName(DanglingReference::Kind kind) {
  switch (kind) {
    case DanglingReference::Kind::kImageCamera: return "image_camera";
    case DanglingReference::Kind::kObservationPoint: return "observation_point";
    case DanglingReference::Kind::kTrackImage: return "track_image";
    case DanglingReference::Kind::kTrackObservation: return "track_observation";
  }
  return "unknown";
}

struct ValidationReport {
  std::vector<DanglingReference> dangling;
  std::vector<std::uint64_t> degenerate_tracks;  // point ids, track < 2
  std::vector<std::uint32_t> invalid_cameras;
  std::vector<std::uint32_t> non_unit_quaternions;

  bool ReferentiallyIntact() const { return dangling.empty(); }
};

// One entry per referencing site; nothing is deduplicated across sites and
// nothing is reported twice.
inline ValidationReport ValidateModel(const SparseModel& model) {
  ValidationReport report;
  for (const Camera& camera : model.cameras) {
    if (!camera.InvariantViolation().empty()) {
      report.invalid_cameras.push_back(camera.camera_id);
    }
  }
  for (const ImageRecord& image : model.images) {
    if (!model.cameras.Contains(image.camera_id)) {
      report.dangling.push_back({DanglingReference::Kind::kImageCamera,
                                 image.image_id, image.camera_id, 0});
    }
    const double qnorm =
        std::sqrt(image.qvec[0] * image.qvec[0] + image.qvec[1] * image.qvec[1] +
                  image.qvec[2] * image.qvec[2] + image.qvec[3] * image.qvec[3]);
    if (std::abs(qnorm - 1.0) > 1e-9) {
      report.non_unit_quaternions.push_back(image.image_id);
    }
    for (std::size_t i = 0; i < image.observations.size(); ++i) {
      const Observation& obs = image.observations[i];
      if (obs.HasPoint() &&
          !model.points.Contains(static_cast<std::uint64_t>(obs.point3d_id))) {
        report.dangling.push_back({DanglingReference::Kind::kObservationPoint,
                                   image.image_id,
                                   static_cast<std::uint64_t>(obs.point3d_id),
                                   i});
      }
    }
  }
  for (const Point3D& point : model.points) {
    if (point.track.size() < 2) report.degenerate_tracks.push_back(point.point_id);
    for (std::size_t i = 0; i < point.track.size(); ++i) {
      const TrackElement& el = point.track[i];
      const ImageRecord* image = model.images.Find(el.image_id);
      if (image == nullptr) {
        report.dangling.push_back({DanglingReference::Kind::kTrackImage,
                                   point.point_id, el.image_id, i});
      } else if (el.point2d_idx >= image->observations.size()) {
        report.dangling.push_back({DanglingReference::Kind::kTrackObservation,
                                   point.point_id, el.point2d_idx, i});
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Statistics

struct ModelStats {
  std::size_t num_cameras = 0;
  std::size_t num_images = 0;
  std::size_t num_points = 0;
  double mean_reproj_error = 0.0;
  double mean_track_length = 0.0;
  // Empty() when the model has no points.
  SceneBounds bounds;
};

inline ModelStats ComputeModelStats(const SparseModel& model) {
  ModelStats stats;
  stats.num_cameras = model.cameras.size();
  stats.num_images = model.images.size();
  stats.num_points = model.points.size();
  double error_sum = 0.0;
  double track_sum = 0.0;
  for (const Point3D& p : model.points) {
    error_sum += p.error;
    track_sum += static_cast<double>(p.track.size());
    stats.bounds.Extend(p.xyz);
  }
  if (stats.num_points > 0) {
    stats.mean_reproj_error = error_sum / static_cast<double>(stats.num_points);
    stats.mean_track_length = track_sum / static_cast<double>(stats.num_points);
  }
  return stats;
}

// Applies a rigid world transform to every 3D point and camera pose.
inline SparseModel TransformModel(SparseModel model, const Mat4& world_from_old) {
  const Rigid3 transform = Rigid3::FromMatrix(world_from_old);
  for (Point3D& point : model.points) point.xyz = transform * point.xyz;
  const Rigid3 inverse = transform.Inverse();
  for (ImageRecord& image : model.images) {
    const Rigid3 pose = image.Pose();
    Rigid3 updated;
    updated.rotation = pose.rotation * inverse.rotation;
    updated.translation = pose.rotation * inverse.translation + pose.translation;
    image.SetPose(updated);
  }
  return model;
}

namespace internal {

inline std::string ReadWholeFile(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  TILERECON_CHECK(file.is_open(), ErrorCode::kMissingFile,
                  "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return std::move(buffer).str();
}

class ByteReader {
 public:
  ByteReader(std::string_view data, std::string file)
      : data_(data), file_(std::move(file)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  void BeginRecord() { record_start_ = pos_; }

  template <typename T>
  T Read() {
    if (remaining() < sizeof(T)) Truncated();
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string ReadCString() {
    const std::size_t end = data_.find('\0', pos_);
    if (end == std::string_view::npos) Truncated();
    std::string s(data_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return s;
  }

  // Guards a count read from the file before anything is allocated for it.
  void RequireBytes(std::uint64_t count, std::uint64_t bytes_each) {
    if (bytes_each != 0 && count > remaining() / bytes_each) Truncated();
  }

  void RequireEnd() const {
    TILERECON_CHECK(remaining() == 0, ErrorCode::kParseError,
                    file_ + ": trailing bytes at offset " + std::to_string(pos_));
  }

  [[noreturn]] void Truncated() const {
    throw Error(ErrorCode::kTruncatedRecord,
                file_ + ": record at byte offset " +
                    std::to_string(record_start_) + " is truncated",
                record_start_);
  }

 private:
  std::string_view data_;
  std::string file_;
  std::size_t pos_ = 0;
  std::size_t record_start_ = 0;
};

class ByteWriter {
 public:
  template <typename T>
  void Write(T value) {
    const auto* bytes = reinterpret_cast<const char*>(&value);
    buffer_.append(bytes, sizeof(T));
  }
  void WriteCString(const std::string& s) {
    buffer_.append(s);
    buffer_.push_back('\0');
  }
  const std::string& data() const { return buffer_; }

 private:
  std::string buffer_;
};

inline void WriteWholeFile(const std::filesystem::path& path,
                           const std::string& data) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  TILERECON_CHECK(file.is_open(), ErrorCode::kIoFailure,
                  "cannot write " + path.string());
  file.write(data.data(), static_cast<std::streamsize>(data.size()));
  TILERECON_CHECK(file.good(), ErrorCode::kIoFailure,
                  "write failed for " + path.string());
}

static_assert(std::endian::native == std::endian::little,
              "the binary model layout is little-endian");

// -- binary ------------------------------------------------------------------

inline void ReadCamerasBinary(const std::string& data, SparseModel& model) {
  ByteReader in(data, "cameras.bin");
  const auto count = in.Read<std::uint64_t>();
  in.RequireBytes(count, 24);
  model.cameras.Reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    in.BeginRecord();
    Camera camera;
    camera.camera_id = in.Read<std::uint32_t>();
    const auto model_id = in.Read<std::int32_t>();
    const auto kind = CameraModelFromId(model_id);
    if (!kind) {
      throw Error(ErrorCode::kUnknownCameraModel,
                  "cameras.bin: model id " + std::to_string(model_id) +
                      " for camera " + std::to_string(camera.camera_id),
                  in.offset());
    }
    camera.model = *kind;
    camera.width = in.Read<std::uint64_t>();
    camera.height = in.Read<std::uint64_t>();
    camera.params.resize(CameraModelNumParams(camera.model));
    for (double& p : camera.params) p = in.Read<double>();
    TILERECON_CHECK(model.cameras.Add(camera.camera_id, std::move(camera)),
                    ErrorCode::kParseError, "cameras.bin: duplicate camera id");
  }
  in.RequireEnd();
}

inline void ReadImagesBinary(const std::string& data, SparseModel& model) {
  ByteReader in(data, "images.bin");
  const auto count = in.Read<std::uint64_t>();
  in.RequireBytes(count, 73);
  model.images.Reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    in.BeginRecord();
    ImageRecord image;
    image.image_id = in.Read<std::uint32_t>();
    for (double& q : image.qvec) q = in.Read<double>();
    for (int k = 0; k < 3; ++k) image.tvec[k] = in.Read<double>();
    image.camera_id = in.Read<std::uint32_t>();
    image.name = in.ReadCString();
    const auto num_points2d = in.Read<std::uint64_t>();
    in.RequireBytes(num_points2d, 24);
    image.observations.resize(num_points2d);
    for (Observation& obs : image.observations) {
      obs.x = in.Read<double>();
      obs.y = in.Read<double>();
      obs.point3d_id = static_cast<std::int64_t>(in.Read<std::uint64_t>());
    }
    TILERECON_CHECK(model.images.Add(image.image_id, std::move(image)),
                    ErrorCode::kParseError, "images.bin: duplicate image id");
  }
  in.RequireEnd();
}

inline void ReadPointsBinary(const std::string& data, SparseModel& model) {
  ByteReader in(data, "points3D.bin");
  const auto count = in.Read<std::uint64_t>();
  in.RequireBytes(count, 51);
  model.points.Reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    in.BeginRecord();
    Point3D point;
    point.point_id = in.Read<std::uint64_t>();
    for (int k = 0; k < 3; ++k) point.xyz[k] = in.Read<double>();
    for (auto& c : point.color) c = in.Read<std::uint8_t>();
    point.error = in.Read<double>();
    const auto track_length = in.Read<std::uint64_t>();
    in.RequireBytes(track_length, 8);
    point.track.resize(track_length);
    for (TrackElement& el : point.track) {
      el.image_id = in.Read<std::uint32_t>();
      el.point2d_idx = in.Read<std::uint32_t>();
    }
    TILERECON_CHECK(model.points.Add(point.point_id, std::move(point)),
                    ErrorCode::kParseError, "points3D.bin: duplicate point id");
  }
  in.RequireEnd();
}

inline std::string WriteCamerasBinary(const SparseModel& model) {
  ByteWriter out;
  out.Write<std::uint64_t>(model.cameras.size());
  for (const Camera& camera : model.cameras) {
    out.Write<std::uint32_t>(camera.camera_id);
    out.Write<std::int32_t>(static_cast<std::int32_t>(camera.model));
    out.Write<std::uint64_t>(camera.width);
    out.Write<std::uint64_t>(camera.height);
    for (double p : camera.params) out.Write<double>(p);
  }
  return out.data();
}

inline std::string WriteImagesBinary(const SparseModel& model) {
  ByteWriter out;
  out.Write<std::uint64_t>(model.images.size());
  for (const ImageRecord& image : model.images) {
    out.Write<std::uint32_t>(image.image_id);
    for (double q : image.qvec) out.Write<double>(q);
    for (int k = 0; k < 3; ++k) out.Write<double>(image.tvec[k]);
    out.Write<std::uint32_t>(image.camera_id);
    out.WriteCString(image.name);
    out.Write<std::uint64_t>(image.observations.size());
    for (const Observation& obs : image.observations) {
      out.Write<double>(obs.x);
      out.Write<double>(obs.y);
      out.Write<std::uint64_t>(static_cast<std::uint64_t>(obs.point3d_id));
    }
  }
  return out.data();
}

inline std::string WritePointsBinary(const SparseModel& model) {
  ByteWriter out;
  out.Write<std::uint64_t>(model.points.size());
  for (const Point3D& point : model.points) {
    out.Write<std::uint64_t>(point.point_id);
    for (int k = 0; k < 3; ++k) out.Write<double>(point.xyz[k]);
    for (auto c : point.color) out.Write<std::uint8_t>(c);
    out.Write<double>(point.error);
    out.Write<std::uint64_t>(point.track.size());
    for (const TrackElement& el : point.track) {
      out.Write<std::uint32_t>(el.image_id);
      out.Write<std::uint32_t>(el.point2d_idx);
    }
  }
  return out.data();
}

// -- text --------------------------------------------------------------------

inline std::string FormatDouble(double value) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

struct TextLine {
  std::string_view text;
  std::size_t offset;
  std::size_t number;
};

// Splits into lines, remembering the byte offset and 1-based line number.
inline std::vector<TextLine> SplitLines(std::string_view data) {
  std::vector<TextLine> lines;
  std::size_t pos = 0;
  std::size_t number = 1;
  while (pos < data.size()) {
    std::size_t end = data.find('\n', pos);
    if (end == std::string_view::npos) end = data.size();
    std::string_view line = data.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back({line, pos, number});
    pos = end + 1;
    ++number;
  }
  return lines;
}

inline bool IsSkippable(std::string_view line) {
  const std::size_t first = line.find_first_not_of(" \t");
  return first == std::string_view::npos || line[first] == '#';
}

class TokenReader {
 public:
  TokenReader(std::string_view text, std::string file, std::size_t line)
      : text_(text), file_(std::move(file)), line_(line) {}

  bool AtEnd() {
    SkipSpace();
    return pos_ >= text_.size();
  }

  std::string_view Next() {
    SkipSpace();
    if (pos_ >= text_.size()) Malformed("missing field");
    const std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] != ' ' && text_[pos_] != '\t') {
      ++pos_;
    }
    return text_.substr(start, pos_ - start);
  }

  std::string_view Rest() {
    SkipSpace();
    std::string_view rest = text_.substr(std::min(pos_, text_.size()));
    while (!rest.empty() && (rest.back() == ' ' || rest.back() == '\t')) {
      rest.remove_suffix(1);
    }
    pos_ = text_.size();
    return rest;
  }

  template <typename T>
  T Number() {
    const std::string_view token = Next();
    T value{};
    const auto result =
        std::from_chars(token.data(), token.data() + token.size(), value);
    if (result.ec != std::errc() || result.ptr != token.data() + token.size()) {
      Malformed("invalid number '" + std::string(token) + "'");
    }
    return value;
  }

  [[noreturn]] void Malformed(const std::string& what) const {
    Fail(ErrorCode::kParseError,
         file_ + ":" + std::to_string(line_) + ": " + what);
  }

 private:
  void SkipSpace() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) {
      ++pos_;
    }
  }

  std::string_view text_;
  std::string file_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

inline void ReadCamerasText(const std::string& data, SparseModel& model) {
  for (const TextLine& line : SplitLines(data)) {
    if (IsSkippable(line.text)) continue;
    TokenReader in(line.text, "cameras.txt", line.number);
    Camera camera;
    camera.camera_id = in.Number<std::uint32_t>();
    const std::string model_name(in.Next());
    const auto kind = CameraModelFromName(model_name);
    if (!kind) {
      throw Error(ErrorCode::kUnknownCameraModel,
                  "cameras.txt:" + std::to_string(line.number) + ": model " +
                      model_name + " for camera " +
                      std::to_string(camera.camera_id),
                  line.offset);
    }
    camera.model = *kind;
    camera.width = in.Number<std::uint64_t>();
    camera.height = in.Number<std::uint64_t>();
    camera.params.resize(CameraModelNumParams(camera.model));
    for (double& p : camera.params) p = in.Number<double>();
    if (!in.AtEnd()) in.Malformed("unexpected trailing fields");
    TILERECON_CHECK(model.cameras.Add(camera.camera_id, std::move(camera)),
                    ErrorCode::kParseError, "cameras.txt: duplicate camera id");
  }
}

inline void ReadImagesText(const std::string& data, SparseModel& model) {
  const auto lines = SplitLines(data);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (IsSkippable(lines[i].text)) continue;
    TokenReader in(lines[i].text, "images.txt", lines[i].number);
    ImageRecord image;
    image.image_id = in.Number<std::uint32_t>();
    for (double& q : image.qvec) q = in.Number<double>();
    for (int k = 0; k < 3; ++k) image.tvec[k] = in.Number<double>();
    image.camera_id = in.Number<std::uint32_t>();
    image.name = std::string(in.Rest());
    if (image.name.empty()) in.Malformed("missing image name");
    // The observation line always follows, even when empty.
    if (i + 1 >= lines.size()) {
      throw Error(ErrorCode::kTruncatedRecord,
                  "images.txt: record at byte offset " +
                      std::to_string(lines[i].offset) +
                      " is missing its observation line",
                  lines[i].offset);
    }
    ++i;
    TokenReader obs_in(lines[i].text, "images.txt", lines[i].number);
    while (!obs_in.AtEnd()) {
      Observation obs;
      obs.x = obs_in.Number<double>();
      obs.y = obs_in.Number<double>();
      obs.point3d_id = obs_in.Number<std::int64_t>();
      image.observations.push_back(obs);
    }
    TILERECON_CHECK(model.images.Add(image.image_id, std::move(image)),
                    ErrorCode::kParseError, "images.txt: duplicate image id");
  }
}

inline void ReadPointsText(const std::string& data, SparseModel& model) {
  for (const TextLine& line : SplitLines(data)) {
    if (IsSkippable(line.text)) continue;
    TokenReader in(line.text, "points3D.txt", line.number);
    Point3D point;
    point.point_id = in.Number<std::uint64_t>();
    for (int k = 0; k < 3; ++k) point.xyz[k] = in.Number<double>();
    for (auto& c : point.color) {
      const auto v = in.Number<unsigned>();
      if (v > 255) in.Malformed("color component out of range");
      c = static_cast<std::uint8_t>(v);
    }
    point.error = in.Number<double>();
    while (!in.AtEnd()) {
      TrackElement el;
      el.image_id = in.Number<std::uint32_t>();
      el.point2d_idx = in.Number<std::uint32_t>();
      point.track.push_back(el);
    }
    TILERECON_CHECK(model.points.Add(point.point_id, std::move(point)),
                    ErrorCode::kParseError, "points3D.txt: duplicate point id");
  }
}

inline std::string WriteCamerasText(const SparseModel& model) {
  std::string out;
  out += "# Camera list with one line of data per camera:\n";
  out += "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n";
  out += "# Number of cameras: " + std::to_string(model.cameras.size()) + "\n";
  for (const Camera& camera : model.cameras) {
    out += std::to_string(camera.camera_id) + " " +
           CameraModelName(camera.model) + " " + std::to_string(camera.width) +
           " " + std::to_string(camera.height);
    for (double p : camera.params) out += " " + FormatDouble(p);
    out += "\n";
  }
  return out;
}

inline std::string WriteImagesText(const SparseModel& model) {
  std::size_t num_obs = 0;
  for (const ImageRecord& image : model.images) {
    num_obs += image.observations.size();
  }
  const double mean_obs =
      model.images.empty() ? 0.0
                           : static_cast<double>(num_obs) /
                                 static_cast<double>(model.images.size());
  std::string out;
  out += "# Image list with two lines of data per image:\n";
  out += "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n";
  out += "#   POINTS2D[] as (X, Y, POINT3D_ID)\n";
  out += "# Number of images: " + std::to_string(model.images.size()) +
         ", mean observations per image: " + FormatDouble(mean_obs) + "\n";
  for (const ImageRecord& image : model.images) {
    out += std::to_string(image.image_id);
    for (double q : image.qvec) out += " " + FormatDouble(q);
    for (int k = 0; k < 3; ++k) out += " " + FormatDouble(image.tvec[k]);
    out += " " + std::to_string(image.camera_id) + " " + image.name + "\n";
    for (std::size_t i = 0; i < image.observations.size(); ++i) {
      const Observation& obs = image.observations[i];
      if (i > 0) out += " ";
      out += FormatDouble(obs.x) + " " + FormatDouble(obs.y) + " " +
             std::to_string(obs.point3d_id);
    }
    out += "\n";
  }
  return out;
}

inline std::string WritePointsText(const SparseModel& model) {
  std::size_t track_total = 0;
  for (const Point3D& p : model.points) track_total += p.track.size();
  const double mean_track =
      model.points.empty() ? 0.0
                           : static_cast<double>(track_total) /
                                 static_cast<double>(model.points.size());
  std::string out;
  out += "# 3D point list with one line of data per point:\n";
  out += "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, "
         "TRACK[] as (IMAGE_ID, POINT2D_IDX)\n";
  out += "# Number of points: " + std::to_string(model.points.size()) +
         ", mean track length: " + FormatDouble(mean_track) + "\n";
  for (const Point3D& point : model.points) {
    out += std::to_string(point.point_id);
    for (int k = 0; k < 3; ++k) out += " " + FormatDouble(point.xyz[k]);
    for (auto c : point.color) out += " " + std::to_string(c);
    out += " " + FormatDouble(point.error);
    for (const TrackElement& el : point.track) {
      out += " " + std::to_string(el.image_id) + " " +
             std::to_string(el.point2d_idx);
    }
    out += "\n";
  }
  return out;
}

inline ModelFormat DetectFormat(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (fs::exists(dir / "cameras.bin") && fs::exists(dir / "images.bin") &&
      fs::exists(dir / "points3D.bin")) {
    return ModelFormat::kBinary;
  }
  if (fs::exists(dir / "cameras.txt") && fs::exists(dir / "images.txt") &&
      fs::exists(dir / "points3D.txt")) {
    return ModelFormat::kText;
  }
  Fail(ErrorCode::kMissingFile,
       "no complete binary or text model in " + dir.string());
}

}  // namespace internal

// Parses a model directory. Dangling references do not fail the parse; they
// are returned through `report` when given.
inline SparseModel ParseSparseModel(const std::filesystem::path& dir,
                                    ModelFormat format = ModelFormat::kAuto,
                                    ValidationReport* report = nullptr) {
  if (format == ModelFormat::kAuto) format = internal::DetectFormat(dir);
  const bool binary = format == ModelFormat::kBinary;
  const std::string ext = binary ? ".bin" : ".txt";

  // All three files are read before any record is decoded.
  const std::string cameras = internal::ReadWholeFile(dir / ("cameras" + ext));
  const std::string images = internal::ReadWholeFile(dir / ("images" + ext));
  const std::string points = internal::ReadWholeFile(dir / ("points3D" + ext));

  SparseModel model;
  if (binary) {
    internal::ReadCamerasBinary(cameras, model);
    internal::ReadImagesBinary(images, model);
    internal::ReadPointsBinary(points, model);
  } else {
    internal::ReadCamerasText(cameras, model);
    internal::ReadImagesText(images, model);
    internal::ReadPointsText(points, model);
  }
  if (report != nullptr) *report = ValidateModel(model);
  return model;
}

struct WriteOptions {
  // When false, models with dangling references are written as-is, which
  // keeps parse -> write byte-identical for real-world inputs.
  bool require_integrity = true;
};

inline void WriteSparseModel(const SparseModel& model,
                             const std::filesystem::path& dir,
                             ModelFormat format = ModelFormat::kBinary,
                             const WriteOptions& options = {}) {
  TILERECON_CHECK(format != ModelFormat::kAuto, ErrorCode::kInvalidArgument,
                  "write format must be binary or text");
  if (options.require_integrity) {
    const ValidationReport report = ValidateModel(model);
    if (!report.ReferentiallyIntact()) {
      const DanglingReference& d = report.dangling.front();
      Fail(ErrorCode::kIntegrityViolation,
           std::to_string(report.dangling.size()) +
               " dangling reference(s), first: " + DanglingKindName(d.kind) +
               " " + std::to_string(d.owner_id) + " -> " +
               std::to_string(d.target_id));
    }
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  TILERECON_CHECK(!ec, ErrorCode::kIoFailure,
                  "cannot create " + dir.string() + ": " + ec.message());
  if (format == ModelFormat::kBinary) {
    internal::WriteWholeFile(dir / "cameras.bin", internal::WriteCamerasBinary(model));
    internal::WriteWholeFile(dir / "images.bin", internal::WriteImagesBinary(model));
    internal::WriteWholeFile(dir / "points3D.bin", internal::WritePointsBinary(model));
  } else {
    internal::WriteWholeFile(dir / "cameras.txt", internal::WriteCamerasText(model));
    internal::WriteWholeFile(dir / "images.txt", internal::WriteImagesText(model));
    internal::WriteWholeFile(dir / "points3D.txt", internal::WritePointsText(model));
  }
}

// Restricts a model to the given images and points. Observations keep their
// slots (so track indices stay valid) but lose links to dropped points; tracks
// lose entries for dropped images. Only cameras in use are kept.
inline SparseModel ExtractSubModel(const SparseModel& model,
                                   const std::vector<std::uint32_t>& image_ids,
                                   const std::vector<std::uint64_t>& point_ids) {
  const std::unordered_set<std::uint32_t> keep_images(image_ids.begin(),
                                                      image_ids.end());
  const std::unordered_set<std::uint64_t> keep_points(point_ids.begin(),
                                                      point_ids.end());
  std::unordered_set<std::uint32_t> keep_cameras;
  SparseModel sub;
  for (const ImageRecord& image : model.images) {
    if (!keep_images.count(image.image_id)) continue;
    ImageRecord copy = image;
    for (Observation& obs : copy.observations) {
      if (obs.HasPoint() &&
          !keep_points.count(static_cast<std::uint64_t>(obs.point3d_id))) {
        obs.point3d_id = kInvalidPoint3DId;
      }
    }
    keep_cameras.insert(copy.camera_id);
    sub.images.Add(copy.image_id, std::move(copy));
  }
  for (const Camera& camera : model.cameras) {
    if (keep_cameras.count(camera.camera_id)) sub.cameras.Add(camera.camera_id, camera);
  }
  for (const Point3D& point : model.points) {
    if (!keep_points.count(point.point_id)) continue;
    Point3D copy = point;
    std::erase_if(copy.track, [&](const TrackElement& el) {
      return !keep_images.count(el.image_id);
    });
    sub.points.Add(copy.point_id, std::move(copy));
  }
  return sub;
}

}  // namespace tilerecon
