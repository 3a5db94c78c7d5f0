#pragma once

// Batch pipeline: partition -> view assignment -> sub-model export -> depth
// fusion -> TSDF -> crop/stitch -> evaluation. Regions are the unit of work;
// each runs single-threaded on a worker and failures stay local to it.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "tilerecon/colmap_io.hpp"
#include "tilerecon/depth_map.hpp"
#include "tilerecon/error.hpp"
#include "tilerecon/mesh.hpp"
#include "tilerecon/mesh_eval.hpp"
#include "tilerecon/mv_depth.hpp"
#include "tilerecon/partition.hpp"
#include "tilerecon/synth.hpp"
#include "tilerecon/tsdf_mesh.hpp"
#include "tilerecon/view_select.hpp"

namespace tilerecon {

using Json = nlohmann::ordered_json;

enum class Stage { kPartition, kAssign, kExport, kFuse, kTsdf, kStitch, kEval };

inline const char* StageName(Stage s) {
  switch (s) {
    case Stage::kPartition: return "partition";
    case Stage::kAssign: return "assign";
    case Stage::kExport: return "export";
    case Stage::kFuse: return "fuse";
    case Stage::kTsdf: return "tsdf";
    case Stage::kStitch: return "stitch";
    case Stage::kEval: return "eval";
  }
  return "?";
}

inline Stage StageFromName(const std::string& name) {
  for (Stage s : {Stage::kPartition, Stage::kAssign, Stage::kExport, Stage::kFuse,
                  Stage::kTsdf, Stage::kStitch, Stage::kEval}) {
    if (name == StageName(s)) return s;
  }
  Fail(ErrorCode::kInvalidValue, "unknown stage '" + name + "'");
}

// Environment variable that overrides the configured worker count.
inline constexpr const char* kWorkersEnv = "TILERECON_WORKERS";

struct PipelineConfig {
  std::filesystem::path model_dir;
  ModelFormat model_format = ModelFormat::kAuto;
  std::filesystem::path depth_dir;  // <image name with .pfm extension>
  std::filesystem::path gt_path;    // PLY mesh or point cloud
  std::filesystem::path out_dir;
  std::optional<SynthSpec> synth;   // replaces model/depth/gt inputs
  Stage stop_after = Stage::kEval;
  int workers = 0;  // 0 means hardware concurrency
  std::uint64_t seed = 0;
  bool quiet = false;

  PartitionOptions partition;
  PairScoreConfig view_select;
  FusionConfig fusion{.comparison = DepthComparison::kReferenceFrame};
  bool integrate_fused = true;  // false integrates the input depth maps
  TsdfConfig tsdf;
  EvalConfig eval;
  LossWeights loss;
  bool write_fused_depth = true;

  void Validate() const {
    partition.density.Validate();
    TILERECON_CHECK(partition.grid_n >= 0, ErrorCode::kInvalidValue, "grid_n must be >= 0");
    TILERECON_CHECK(partition.expand_factor >= 1.0, ErrorCode::kInvalidValue,
                    "expand_factor must be >= 1");
    view_select.Validate();
    fusion.Validate();
    TILERECON_CHECK(tsdf.voxel_size > 0.0 && std::isfinite(tsdf.voxel_size),
                    ErrorCode::kInvalidValue, "voxel must be positive");
    TILERECON_CHECK(!tsdf.truncation || *tsdf.truncation > 0.0, ErrorCode::kInvalidValue,
                    "truncation must be positive");
    try {
      eval.Validate();
    } catch (const Error& e) {
      Fail(ErrorCode::kInvalidValue, e.what());
    }
    loss.Validate();
    TILERECON_CHECK(workers >= 0, ErrorCode::kInvalidValue, "workers must be >= 0");
    if (synth) {
      synth->Validate();
    } else {
      TILERECON_CHECK(!model_dir.empty(), ErrorCode::kMissingRequired,
                      "model path is required");
      if (stop_after >= Stage::kFuse) {
        TILERECON_CHECK(!depth_dir.empty(), ErrorCode::kMissingRequired,
                        "depth directory is required from the fuse stage on");
      }
    }
    TILERECON_CHECK(!out_dir.empty(), ErrorCode::kMissingRequired, "output path is required");
  }
};

// ---------------------------------------------------------------------------
// JSON config

namespace internal {

template <typename T>
void ReadIf(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    Fail(ErrorCode::kInvalidValue, std::string("config key '") + key + "' has the wrong type");
  }
}

template <typename T>
void ReadIf(const Json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  T value{};
  ReadIf(j, key, value);
  out = value;
}

inline Json BoundsJson(const SceneBounds& b) {
  if (b.Empty()) return nullptr;
  return {{"min", {b.min.x(), b.min.y(), b.min.z()}}, {"max", {b.max.x(), b.max.y(), b.max.z()}}};
}

}  // namespace internal

inline PipelineConfig PipelineConfigFromJson(const Json& j) {
  using internal::ReadIf;
  PipelineConfig cfg;
  std::string path;
  if (j.contains("model")) cfg.model_dir = j["model"].get<std::string>();
  if (j.contains("depth_dir")) cfg.depth_dir = j["depth_dir"].get<std::string>();
  if (j.contains("gt")) cfg.gt_path = j["gt"].get<std::string>();
  if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
  if (j.contains("model_format")) {
    const auto f = j["model_format"].get<std::string>();
    TILERECON_CHECK(f == "auto" || f == "bin" || f == "txt", ErrorCode::kInvalidValue,
                    "model_format must be auto, bin or txt");
    cfg.model_format = f == "bin" ? ModelFormat::kBinary
                                  : f == "txt" ? ModelFormat::kText : ModelFormat::kAuto;
  }
  if (j.contains("synth")) cfg.synth = SynthSpecFromJson(j["synth"]);
  if (j.contains("stop_after")) cfg.stop_after = StageFromName(j["stop_after"].get<std::string>());
  ReadIf(j, "workers", cfg.workers);
  ReadIf(j, "seed", cfg.seed);
  ReadIf(j, "quiet", cfg.quiet);
  if (j.contains("partition")) {
    const Json& p = j["partition"];
    ReadIf(p, "error_threshold", cfg.partition.density.error_threshold);
    ReadIf(p, "voxel_size", cfg.partition.density.voxel_size);
    ReadIf(p, "density_fraction", cfg.partition.density.density_fraction);
    ReadIf(p, "grid_n", cfg.partition.grid_n);
    ReadIf(p, "expand_factor", cfg.partition.expand_factor);
  }
  if (j.contains("view_select")) {
    const Json& v = j["view_select"];
    ReadIf(v, "theta0", cfg.view_select.theta0);
    ReadIf(v, "sigma1", cfg.view_select.sigma1);
    ReadIf(v, "sigma2", cfg.view_select.sigma2);
    ReadIf(v, "theta_min", cfg.view_select.theta_min);
    ReadIf(v, "hard_cutoff", cfg.view_select.hard_cutoff);
    ReadIf(v, "d_max", cfg.view_select.d_max);
  }
  if (j.contains("fusion")) {
    const Json& f = j["fusion"];
    ReadIf(f, "sigma", cfg.fusion.sigma);
    ReadIf(f, "max_error", cfg.fusion.max_error);
    ReadIf(f, "k", cfg.fusion.k);
    ReadIf(f, "window_eps", cfg.fusion.window_eps);
    ReadIf(f, "squared_error", cfg.fusion.squared_error);
    if (f.contains("comparison")) {
      const auto c = f["comparison"].get<std::string>();
      TILERECON_CHECK(c == "raw" || c == "reference_frame", ErrorCode::kInvalidValue,
                      "fusion.comparison must be raw or reference_frame");
      cfg.fusion.comparison =
          c == "raw" ? DepthComparison::kRaw : DepthComparison::kReferenceFrame;
    }
    ReadIf(f, "integrate_fused", cfg.integrate_fused);
    ReadIf(f, "write_depth", cfg.write_fused_depth);
  }
  if (j.contains("tsdf")) {
    const Json& t = j["tsdf"];
    ReadIf(t, "voxel_size", cfg.tsdf.voxel_size);
    ReadIf(t, "truncation", cfg.tsdf.truncation);
  }
  if (j.contains("eval")) {
    const Json& e = j["eval"];
    ReadIf(e, "thresholds", cfg.eval.thresholds);
    ReadIf(e, "relative", cfg.eval.relative);
    ReadIf(e, "sample_count", cfg.eval.sample_count);
    ReadIf(e, "icp_max_iter", cfg.eval.icp_max_iter);
    ReadIf(e, "icp_tolerance", cfg.eval.icp_tolerance);
    ReadIf(e, "align", cfg.eval.align);
  }
  if (j.contains("loss")) {
    ReadIf(j["loss"], "alpha", cfg.loss.alpha);
    ReadIf(j["loss"], "beta", cfg.loss.beta);
  }
  cfg.eval.seed = cfg.seed;
  return cfg;
}

inline Json PipelineConfigToJson(const PipelineConfig& cfg) {
  Json j;
  j["model"] = cfg.model_dir.string();
  j["depth_dir"] = cfg.depth_dir.string();
  j["gt"] = cfg.gt_path.string();
  j["out"] = cfg.out_dir.string();
  j["stop_after"] = StageName(cfg.stop_after);
  j["seed"] = cfg.seed;
  j["synth"] = cfg.synth.has_value();
  j["partition"] = {{"error_threshold", cfg.partition.density.error_threshold},
                    {"voxel_size", cfg.partition.density.voxel_size},
                    {"density_fraction", cfg.partition.density.density_fraction},
                    {"grid_n", cfg.partition.grid_n},
                    {"expand_factor", cfg.partition.expand_factor}};
  j["view_select"] = {{"theta0", cfg.view_select.theta0},
                      {"sigma1", cfg.view_select.sigma1},
                      {"sigma2", cfg.view_select.sigma2},
                      {"theta_min", cfg.view_select.theta_min},
                      {"hard_cutoff", cfg.view_select.hard_cutoff}};
  if (cfg.view_select.d_max) j["view_select"]["d_max"] = *cfg.view_select.d_max;
  j["fusion"] = {{"sigma", cfg.fusion.sigma},
                 {"max_error", cfg.fusion.MaxError()},
                 {"k", cfg.fusion.k},
                 {"window_eps", cfg.fusion.window_eps},
                 {"squared_error", cfg.fusion.squared_error},
                 {"comparison", cfg.fusion.comparison == DepthComparison::kRaw
                                    ? "raw" : "reference_frame"},
                 {"integrate_fused", cfg.integrate_fused}};
  j["tsdf"] = {{"voxel_size", cfg.tsdf.voxel_size}, {"truncation", cfg.tsdf.Truncation()}};
  j["eval"] = {{"thresholds", cfg.eval.thresholds},
               {"relative", cfg.eval.relative},
               {"sample_count", cfg.eval.sample_count},
               {"icp_max_iter", cfg.eval.icp_max_iter},
               {"icp_tolerance", cfg.eval.icp_tolerance},
               {"align", cfg.eval.align}};
  j["loss"] = {{"alpha", cfg.loss.alpha}, {"beta", cfg.loss.beta}};
  return j;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string RegionTag(const GridIndex& g) {
  return "r" + std::to_string(g.row) + "c" + std::to_string(g.col);
}

inline Json PartitionJson(const PartitionResult& p) {
  Json j;
  j["grid_n"] = p.grid_n;
  j["scene_bounds"] = internal::BoundsJson(p.scene_bounds);
  j["discarded_points"] = p.discarded_points;
  j["regions"] = Json::array();
  for (const auto& r : p.regions) {
    j["regions"].push_back({{"tag", RegionTag(r.grid_index)},
                            {"row", r.grid_index.row},
                            {"col", r.grid_index.col},
                            {"bounds", internal::BoundsJson(r.bounds)},
                            {"closed_max_x", r.closed_max_x},
                            {"closed_max_z", r.closed_max_z},
                            {"init_bounds", internal::BoundsJson(r.init_bounds)},
                            {"num_points", r.point_ids.size()},
                            {"num_images", r.matched_image_ids.size()}});
  }
  j["dropped"] = Json::array();
  for (const auto& d : p.dropped) {
    j["dropped"].push_back({{"row", d.grid_index.row},
                            {"col", d.grid_index.col},
                            {"reason", d.reason},
                            {"num_points", d.num_points},
                            {"num_images", d.num_images}});
  }
  return j;
}

inline Json AssignmentJson(const SubRegion& region, const RegionViewAssignment& a,
                           const std::vector<ViewGroup>& fusion_groups) {
  Json j;
  j["tag"] = RegionTag(region.grid_index);
  j["used_image_ids"] = a.used_image_ids;
  j["excluded_image_ids"] = a.excluded_image_ids;
  j["num_assigned_points"] = a.groups.size();
  j["num_skipped_points"] = a.skipped_point_ids.size();
  j["groups"] = Json::array();
  for (const auto& g : fusion_groups) {
    j["groups"].push_back({{"ref", g.ref_image_id}, {"src", g.src_image_ids}});
  }
  return j;
}

inline Json CropBoxJson(const CropBox& box) {
  return {{"bounds", internal::BoundsJson(box.bounds)},
          {"clip_axis", box.clip_axis},
          {"closed_max", box.closed_max}};
}

inline CropBox CropBoxFromJson(const Json& j) {
  CropBox box;
  const auto& b = j.at("bounds");
  for (int a = 0; a < 3; ++a) {
    box.bounds.min[a] = b.at("min").at(a).get<double>();
    box.bounds.max[a] = b.at("max").at(a).get<double>();
  }
  box.clip_axis = j.at("clip_axis").get<std::array<bool, 3>>();
  box.closed_max = j.at("closed_max").get<std::array<bool, 3>>();
  return box;
}

inline void WriteJson(const std::filesystem::path& path, const Json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  TILERECON_CHECK(f.is_open(), ErrorCode::kIoFailure, "cannot write " + path.string());
  f << j.dump(2) << "\n";
}

inline Json ReadJsonFile(const std::filesystem::path& path) {
  std::ifstream f(path);
  TILERECON_CHECK(f.is_open(), ErrorCode::kMissingFile, "cannot open " + path.string());
  try {
    return Json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    Fail(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Logging and workers

class Logger {
 public:
  explicit Logger(bool quiet) : quiet_(quiet) {}
  void Log(const std::string& tag, const std::string& message) {
    if (quiet_) return;
    std::lock_guard<std::mutex> lock(mutex_);
    std::clog << "[" << tag << "] " << message << "\n";
  }

 private:
  bool quiet_;
  std::mutex mutex_;
};

inline int ResolveWorkerCount(int configured) {
  if (const char* env = std::getenv(kWorkersEnv)) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  if (configured > 0) return configured;
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs task(i) for i in [0, n) on `workers` threads pulling from a shared
// counter. Results must be written to per-index slots by the task.
inline void ParallelFor(std::size_t n, int workers, const std::function<void(std::size_t)>& task) {
  const int threads = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) task(i);
    });
  }
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Inputs

// Supplies the depth map of an image; nullopt when none exists.
using DepthSource = std::function<std::optional<DepthMap>(const ImageRecord&, const Camera&)>;

inline std::filesystem::path DepthFileName(const std::string& image_name) {
  std::filesystem::path p(image_name);
  p.replace_extension(".pfm");
  return p;
}

inline DepthSource DepthDirectorySource(std::filesystem::path dir) {
  return [dir = std::move(dir)](const ImageRecord& image,
                                const Camera& camera) -> std::optional<DepthMap> {
    const auto path = dir / DepthFileName(image.name);
    if (!std::filesystem::exists(path)) return std::nullopt;
    return ReadDepthPfm(path, camera, image.Pose());
  };
}

inline DepthSource InMemoryDepthSource(const std::map<std::uint32_t, DepthMap>* maps) {
  return [maps](const ImageRecord& image, const Camera&) -> std::optional<DepthMap> {
    const auto it = maps->find(image.image_id);
    if (it == maps->end()) return std::nullopt;
    return it->second;
  };
}

struct PipelineInputs {
  SparseModel model;
  DepthSource depth;
  std::optional<std::vector<Vec3>> gt_points;
};

// Points to score against: surface samples of a GT mesh, or its vertices.
inline std::vector<Vec3> LoadGtPoints(const std::filesystem::path& path, const EvalConfig& cfg) {
  const Mesh gt = ReadPly(path);
  return SurfacePoints(gt, cfg.sample_count, cfg.seed + 1);
}

// ---------------------------------------------------------------------------
// Region task

struct RegionOutcome {
  std::string tag;
  GridIndex grid_index;
  bool ok = false;
  std::string failed_stage;
  std::string error_code;
  std::string error_message;
  RegionViewAssignment assignment;
  std::vector<ViewGroup> fusion_groups;
  std::size_t fused_views = 0;
  double mean_fused_fraction = 0.0;
  std::size_t integrated_views = 0;
  std::size_t raw_triangles = 0;
  std::size_t cropped_triangles = 0;
  CropBox crop;
  Mesh mesh;  // cropped

  Json ToJson() const {
    Json j;
    j["tag"] = tag;
    j["status"] = ok ? "ok" : "failed";
    if (!ok) {
      j["failed_stage"] = failed_stage;
      j["error"] = {{"code", error_code}, {"message", error_message}};
    }
    j["num_used_images"] = assignment.used_image_ids.size();
    j["num_excluded_images"] = assignment.excluded_image_ids.size();
    j["fused_views"] = fused_views;
    j["mean_fused_fraction"] = mean_fused_fraction;
    j["integrated_views"] = integrated_views;
    j["raw_triangles"] = raw_triangles;
    j["cropped_triangles"] = cropped_triangles;
    return j;
  }
};

struct PipelineResult {
  int exit_code = 0;  // 0 success, 1 partial, 3 fatal
  PartitionResult partition;
  std::vector<RegionOutcome> regions;
  Mesh mesh;
  std::optional<EvalReport> eval;
  Json summary;
};

namespace internal {

inline void RunRegion(const PipelineConfig& cfg, const PipelineInputs& inputs,
                      const PairScoreTable& table, const SubRegion& region,
                      RegionOutcome& out, Logger& log) {
  const auto dir = cfg.out_dir / "regions" / out.tag;
  std::string stage = StageName(Stage::kAssign);
  try {
    AssignmentStats stats;
    out.assignment = AssignViewsToRegion(region, inputs.model, cfg.view_select, table, &stats);
    out.fusion_groups = FusionGroups(region, out.assignment, cfg.view_select, table);
    WriteJson(dir / "assignment.json", AssignmentJson(region, out.assignment, out.fusion_groups));
    log.Log(out.tag, std::to_string(out.assignment.used_image_ids.size()) + " used, " +
                         std::to_string(out.assignment.excluded_image_ids.size()) + " excluded");
    if (cfg.stop_after == Stage::kAssign) {
      out.ok = true;
      return;
    }

    stage = StageName(Stage::kExport);
    const SparseModel sub =
        ExtractSubModel(inputs.model, out.assignment.used_image_ids, region.point_ids);
    WriteSparseModel(sub, dir / "sparse", ModelFormat::kBinary, {.require_integrity = false});
    if (cfg.stop_after == Stage::kExport) {
      out.ok = true;
      return;
    }

    stage = StageName(Stage::kFuse);
    const auto load = [&](std::uint32_t id) {
      const ImageRecord& image = inputs.model.images.at(id);
      const Camera& camera = inputs.model.cameras.at(image.camera_id);
      auto depth = inputs.depth(image, camera);
      TILERECON_CHECK(depth.has_value(), ErrorCode::kMissingFile,
                      "no depth map for image " + std::to_string(id) + " (" + image.name + ")");
      return std::move(*depth);
    };
    std::map<std::uint32_t, DepthMap> cache;
    const auto get = [&](std::uint32_t id) -> const DepthMap& {
      auto it = cache.find(id);
      if (it == cache.end()) it = cache.emplace(id, load(id)).first;
      return it->second;
    };
    std::vector<DepthMap> to_integrate;
    double fraction_sum = 0.0;
    for (const ViewGroup& g : out.fusion_groups) {
      const DepthMap& ref = get(g.ref_image_id);
      if (!cfg.integrate_fused || g.src_image_ids.empty()) {
        to_integrate.push_back(ref);
        continue;
      }
      std::vector<DepthMap> sources;
      for (auto id : g.src_image_ids) sources.push_back(get(id));
      FusedDepth fused = FuseDepth(ref, sources, cfg.fusion);
      fraction_sum += fused.ValidFraction();
      ++out.fused_views;
      if (cfg.write_fused_depth) {
        const auto& name = inputs.model.images.at(g.ref_image_id).name;
        const auto path = dir / "fused" / DepthFileName(name);
        std::filesystem::create_directories(path.parent_path());
        WriteDepthPfm(path, fused.depth);
      }
      to_integrate.push_back(std::move(fused.depth));
    }
    if (out.fused_views > 0) out.mean_fused_fraction = fraction_sum / out.fused_views;
    cache.clear();
    log.Log(out.tag, "fused " + std::to_string(out.fused_views) + " views");
    if (cfg.stop_after == Stage::kFuse) {
      out.ok = true;
      return;
    }

    stage = StageName(Stage::kTsdf);
    TsdfConfig tsdf = cfg.tsdf;
    tsdf.bounds = region.init_bounds.Padded(tsdf.Truncation());
    TsdfVolume volume(tsdf);
    for (const DepthMap& d : to_integrate) volume.Integrate(d);
    out.integrated_views = to_integrate.size();
    to_integrate.clear();
    Mesh raw = ExtractMesh(volume);
    out.raw_triangles = raw.triangles.size();
    WritePly(dir / "mesh.ply", raw);
    out.crop = CropBoxForRegion(region);
    WriteJson(dir / "crop.json", CropBoxJson(out.crop));
    out.mesh = CropMesh(raw, out.crop);
    out.cropped_triangles = out.mesh.triangles.size();
    log.Log(out.tag, std::to_string(out.raw_triangles) + " triangles, " +
                         std::to_string(out.cropped_triangles) + " after crop");
    out.ok = true;
  } catch (const Error& e) {
    out.ok = false;
    out.failed_stage = stage;
    out.error_code = ErrorCodeName(e.code());
    out.error_message = e.what();
    log.Log(out.tag, "failed in " + stage + ": " + out.error_code + ": " + e.what());
  } catch (const std::exception& e) {
    out.ok = false;
    out.failed_stage = stage;
    out.error_code = "Internal";
    out.error_message = e.what();
    log.Log(out.tag, "failed in " + stage + ": " + e.what());
  }
}

}  // namespace internal

inline PipelineResult RunPipeline(const PipelineConfig& cfg, const PipelineInputs& inputs) {
  cfg.Validate();
  Logger log(cfg.quiet);
  PipelineResult result;
  std::filesystem::create_directories(cfg.out_dir);

  result.partition = PartitionScene(inputs.model, cfg.partition);
  WriteJson(cfg.out_dir / "partition.json", PartitionJson(result.partition));
  log.Log("pipeline", "grid " + std::to_string(result.partition.grid_n) + ", " +
                          std::to_string(result.partition.regions.size()) + " regions");

  // The output path is left out so reports match wherever they are written.
  result.summary["config"] = PipelineConfigToJson(cfg);
  result.summary["config"].erase("out");
  result.summary["partition"] = {{"grid_n", result.partition.grid_n},
                                 {"regions", result.partition.regions.size()},
                                 {"dropped", result.partition.dropped.size()}};
  if (cfg.stop_after == Stage::kPartition) {
    result.summary["status"] = "ok";
    WriteJson(cfg.out_dir / "summary.json", result.summary);
    return result;
  }

  const PairScoreTable table = PairScoreTable::Build(inputs.model, cfg.view_select);
  const auto& regions = result.partition.regions;
  result.regions.resize(regions.size());
  for (std::size_t i = 0; i < regions.size(); ++i) {
    result.regions[i].tag = RegionTag(regions[i].grid_index);
    result.regions[i].grid_index = regions[i].grid_index;
  }
  ParallelFor(regions.size(), ResolveWorkerCount(cfg.workers), [&](std::size_t i) {
    internal::RunRegion(cfg, inputs, table, regions[i], result.regions[i], log);
  });

  std::size_t failed = 0;
  Json region_reports = Json::array();
  for (const auto& r : result.regions) {
    failed += r.ok ? 0 : 1;
    region_reports.push_back(r.ToJson());
  }
  result.summary["regions"] = region_reports;
  const bool any_ok = failed < result.regions.size();

  if (cfg.stop_after >= Stage::kStitch && any_ok) {
    Mesh merged;
    for (const auto& r : result.regions) {
      if (r.ok) merged.Append(r.mesh);
    }
    merged.normals.clear();
    if (!merged.vertices.empty()) {
      result.mesh = WeldVertices(merged, cfg.tsdf.voxel_size / 10.0);
      result.mesh.ComputeVertexNormals();
    }
    WritePly(cfg.out_dir / "mesh.ply", result.mesh);
    result.summary["mesh"] = {{"vertices", result.mesh.vertices.size()},
                              {"triangles", result.mesh.triangles.size()}};
    log.Log("pipeline", "stitched " + std::to_string(result.mesh.triangles.size()) + " triangles");
  }

  if (cfg.stop_after >= Stage::kEval && inputs.gt_points && !result.mesh.triangles.empty()) {
    const auto rec = SampleMeshPoints(result.mesh, cfg.eval.sample_count, cfg.eval.seed);
    result.eval = EvaluatePoints(rec, *inputs.gt_points, cfg.eval);
    WriteJson(cfg.out_dir / "eval.json", result.eval->ToJson());
    result.summary["eval"] = result.eval->ToJson()["scores"];
  }

  if (failed == 0) {
    result.exit_code = 0;
    result.summary["status"] = "ok";
  } else if (any_ok) {
    result.exit_code = 1;
    result.summary["status"] = "partial";
  } else {
    result.exit_code = 3;
    result.summary["status"] = "failed";
  }
  result.summary["failed_regions"] = failed;
  WriteJson(cfg.out_dir / "summary.json", result.summary);
  return result;
}

// Loads inputs named by the config (or synthesizes them) and runs.
inline PipelineResult RunPipeline(const PipelineConfig& cfg) {
  cfg.Validate();
  PipelineInputs inputs;
  std::shared_ptr<SynthScene> scene;
  if (cfg.synth) {
    scene = std::make_shared<SynthScene>(SynthesizeScene(*cfg.synth));
    inputs.model = scene->model;
    inputs.depth = [scene](const ImageRecord& image, const Camera&) -> std::optional<DepthMap> {
      const auto it = scene->depth.find(image.image_id);
      if (it == scene->depth.end()) return std::nullopt;
      return it->second;
    };
    inputs.gt_points = scene->gt_samples;
  } else {
    inputs.model = ParseSparseModel(cfg.model_dir, cfg.model_format);
    if (!cfg.depth_dir.empty()) inputs.depth = DepthDirectorySource(cfg.depth_dir);
    if (!cfg.gt_path.empty()) inputs.gt_points = LoadGtPoints(cfg.gt_path, cfg.eval);
  }
  return RunPipeline(cfg, inputs);
}

}  // namespace tilerecon
