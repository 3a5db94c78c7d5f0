#pragma once

// Command-line front end. Every pipeline stage is a subcommand; stages run the
// pipeline up to and including themselves. A JSON config supplies defaults
// that explicit flags override.

#include <deque>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tilerecon/colmap_io.hpp"
#include "tilerecon/error.hpp"
#include "tilerecon/mesh.hpp"
#include "tilerecon/mesh_eval.hpp"
#include "tilerecon/pipeline.hpp"
#include "tilerecon/synth.hpp"
#include "tilerecon/tsdf_mesh.hpp"

namespace tilerecon {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitFatal = 3;

struct Command {
  std::string name;
  PipelineConfig pipeline;

  // stitch
  std::filesystem::path regions_dir;
  std::optional<double> weld_tolerance;
  // eval-mesh, eval-render, dsm, stitch: output file
  std::filesystem::path out_file;
  std::filesystem::path rec_path;
  std::filesystem::path gt_path;
  // eval-render
  std::filesystem::path image_a;
  std::filesystem::path image_b;
  double max_value = 1.0;
  // dsm
  std::filesystem::path points_path;
  double cell = 1.0;
  std::filesystem::path png_path;
  // synth
  SynthSpec synth;
};

inline bool IsUsageError(ErrorCode code) {
  return code == ErrorCode::kUnknownFlag || code == ErrorCode::kMissingRequired ||
         code == ErrorCode::kInvalidValue;
}

namespace internal {

// Options bound to shared storage; each applies itself to the config only
// when it appeared on the command line.
class FlagSet {
 public:
  explicit FlagSet(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* Add(const std::string& name, const std::string& help,
                   std::function<void(PipelineConfig&, const T&)> set,
                   std::function<bool(const T&)> valid = nullptr,
                   const std::string& requirement = "") {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app_->add_option(name, *value, help);
    const std::string flag = name.substr(0, name.find(','));
    setters_.push_back([opt, value, set, valid, flag, requirement](PipelineConfig& cfg) {
      if (opt->count() == 0) return;
      if (valid && !valid(*value)) {
        Fail(ErrorCode::kInvalidValue,
             flag + ": invalid value '" + opt->as<std::string>() + "'" +
                 (requirement.empty() ? "" : " (" + requirement + ")"));
      }
      set(cfg, *value);
    });
    return opt;
  }

  void Apply(PipelineConfig& cfg) const {
    for (const auto& s : setters_) s(cfg);
  }

 private:
  CLI::App* app_;
  std::vector<std::function<void(PipelineConfig&)>> setters_;
};

inline bool Positive(const double& v) { return std::isfinite(v) && v > 0.0; }

inline void AddInputFlags(FlagSet& f) {
  f.Add<std::string>("--model", "sparse model directory (COLMAP bin or txt)",
                     [](PipelineConfig& c, const std::string& v) { c.model_dir = v; });
  f.Add<std::string>(
      "--model-format", "auto, bin or txt",
      [](PipelineConfig& c, const std::string& v) {
        c.model_format = v == "bin" ? ModelFormat::kBinary
                                    : v == "txt" ? ModelFormat::kText : ModelFormat::kAuto;
      },
      [](const std::string& v) { return v == "auto" || v == "bin" || v == "txt"; },
      "auto, bin or txt");
  f.Add<std::string>("--out", "output directory",
                     [](PipelineConfig& c, const std::string& v) { c.out_dir = v; });
  f.Add<int>(
      "--workers", "region workers (0 = all cores)",
      [](PipelineConfig& c, const int& v) { c.workers = v; },
      [](const int& v) { return v >= 0; }, "must be >= 0");
  f.Add<std::uint64_t>("--seed", "random seed",
                       [](PipelineConfig& c, const std::uint64_t& v) {
                         c.seed = v;
                         c.eval.seed = v;
                       });
}

inline void AddPartitionFlags(FlagSet& f) {
  f.Add<double>(
      "--error-threshold", "max reprojection error in pixels",
      [](PipelineConfig& c, const double& v) { c.partition.density.error_threshold = v; },
      Positive, "must be positive");
  f.Add<double>(
      "--density-voxel", "density voxel size",
      [](PipelineConfig& c, const double& v) { c.partition.density.voxel_size = v; }, Positive,
      "must be positive");
  f.Add<double>(
      "--density-fraction", "kept voxel density as a fraction of the maximum",
      [](PipelineConfig& c, const double& v) { c.partition.density.density_fraction = v; },
      [](const double& v) { return v > 0.0 && v <= 1.0; }, "must be in (0, 1]");
  f.Add<int>(
      "--grid", "grid size n (0 picks from the image count)",
      [](PipelineConfig& c, const int& v) { c.partition.grid_n = v; },
      [](const int& v) { return v >= 0; }, "must be >= 0");
  f.Add<double>(
      "--expand", "region expansion factor",
      [](PipelineConfig& c, const double& v) { c.partition.expand_factor = v; },
      [](const double& v) { return std::isfinite(v) && v >= 1.0; }, "must be >= 1");
}

inline void AddViewFlags(FlagSet& f) {
  f.Add<double>(
      "--theta0", "preferred baseline angle in degrees",
      [](PipelineConfig& c, const double& v) { c.view_select.theta0 = v; }, Positive,
      "must be positive");
  f.Add<double>(
      "--sigma1", "angle spread below theta0",
      [](PipelineConfig& c, const double& v) { c.view_select.sigma1 = v; }, Positive,
      "must be positive");
  f.Add<double>(
      "--sigma2", "angle spread above theta0",
      [](PipelineConfig& c, const double& v) { c.view_select.sigma2 = v; }, Positive,
      "must be positive");
  f.Add<double>(
      "--theta-min", "largest useful baseline angle in degrees",
      [](PipelineConfig& c, const double& v) { c.view_select.theta_min = v; }, Positive,
      "must be positive");
  f.Add<double>(
      "--d-max", "camera distance gate (default per region)",
      [](PipelineConfig& c, const double& v) { c.view_select.d_max = v; }, Positive,
      "must be positive");
}

inline void AddFusionFlags(FlagSet& f) {
  f.Add<std::string>("--depth-dir", "input depth maps (<image name>.pfm)",
                     [](PipelineConfig& c, const std::string& v) { c.depth_dir = v; });
  f.Add<double>(
      "--sigma", "fusion weight bandwidth",
      [](PipelineConfig& c, const double& v) { c.fusion.sigma = v; }, Positive,
      "must be positive");
  f.Add<double>(
      "--max-error", "largest depth error a source may have",
      [](PipelineConfig& c, const double& v) { c.fusion.max_error = v; },
      [](const double& v) { return std::isfinite(v) && v >= 0.0; }, "must be >= 0");
  f.Add<std::string>(
      "--comparison", "raw or reference_frame",
      [](PipelineConfig& c, const std::string& v) {
        c.fusion.comparison = v == "raw" ? DepthComparison::kRaw : DepthComparison::kReferenceFrame;
      },
      [](const std::string& v) { return v == "raw" || v == "reference_frame"; },
      "raw or reference_frame");
}

inline void AddTsdfFlags(FlagSet& f) {
  f.Add<double>(
      "--voxel", "TSDF voxel size",
      [](PipelineConfig& c, const double& v) { c.tsdf.voxel_size = v; }, Positive,
      "must be positive");
  f.Add<double>(
      "--truncation", "TSDF truncation distance (default 4 voxels)",
      [](PipelineConfig& c, const double& v) { c.tsdf.truncation = v; }, Positive,
      "must be positive");
}

inline void AddEvalFlags(FlagSet& f) {
  f.Add<std::string>("--gt", "ground-truth PLY (mesh or points)",
                     [](PipelineConfig& c, const std::string& v) { c.gt_path = v; });
  f.Add<std::vector<double>>(
      "--thresholds", "distance thresholds",
      [](PipelineConfig& c, const std::vector<double>& v) { c.eval.thresholds = v; },
      [](const std::vector<double>& v) {
        return !v.empty() && std::all_of(v.begin(), v.end(), [](double t) { return Positive(t); });
      },
      "must be positive");
  f.Add<bool>("--relative", "thresholds are fractions of the crop-box diagonal",
              [](PipelineConfig& c, const bool& v) { c.eval.relative = v; });
  f.Add<std::size_t>(
      "--samples", "surface samples per mesh",
      [](PipelineConfig& c, const std::size_t& v) { c.eval.sample_count = v; },
      [](const std::size_t& v) { return v > 0; }, "must be positive");
  f.Add<int>(
      "--icp-iters", "ICP iteration limit",
      [](PipelineConfig& c, const int& v) { c.eval.icp_max_iter = v; },
      [](const int& v) { return v >= 0; }, "must be >= 0");
  f.Add<bool>("--align", "run ICP before scoring",
              [](PipelineConfig& c, const bool& v) { c.eval.align = v; });
}

inline PipelineConfig LoadConfigFile(const std::string& path) {
  try {
    return PipelineConfigFromJson(ReadJsonFile(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kMissingFile || e.code() == ErrorCode::kParseError) {
      Fail(ErrorCode::kInvalidValue, "--config: " + std::string(e.what()));
    }
    throw;
  }
}

inline std::string FirstExtra(const CLI::App& app) {
  for (const CLI::App* sub : app.get_subcommands()) {
    const auto extras = sub->remaining();
    if (!extras.empty()) return extras.front();
  }
  const auto extras = app.remaining();
  return extras.empty() ? std::string() : extras.front();
}

}  // namespace internal

// Parses argv (without the program name) into a validated command.
inline Command ParseCommand(const std::vector<std::string>& args) {
  CLI::App app{"tilerecon: tiled surface reconstruction from a sparse model", "tilerecon"};
  app.require_subcommand(1);
  app.allow_extras(false);

  struct Sub {
    CLI::App* app;
    std::unique_ptr<internal::FlagSet> flags;
    std::string config;
  };
  std::deque<Sub> subs;  // stable addresses: options bind into each Sub
  const auto add = [&](const std::string& name, const std::string& help) -> Sub& {
    CLI::App* a = app.add_subcommand(name, help);
    subs.push_back({a, std::make_unique<internal::FlagSet>(a), {}});
    a->add_option("--config", subs.back().config, "JSON config file");
    return subs.back();
  };
  const auto pipeline_sub = [&](const std::string& name, const std::string& help,
                                Stage stage) -> Sub& {
    Sub& s = add(name, help);
    internal::AddInputFlags(*s.flags);
    internal::AddPartitionFlags(*s.flags);
    if (stage >= Stage::kAssign) internal::AddViewFlags(*s.flags);
    if (stage >= Stage::kFuse) internal::AddFusionFlags(*s.flags);
    if (stage >= Stage::kTsdf) internal::AddTsdfFlags(*s.flags);
    if (stage >= Stage::kEval) internal::AddEvalFlags(*s.flags);
    return s;
  };

  pipeline_sub("partition", "filter, refine and grid the sparse model", Stage::kPartition);
  pipeline_sub("assign-views", "select training views per region", Stage::kAssign);
  pipeline_sub("export-regions", "write per-region sub-models", Stage::kExport);
  pipeline_sub("fuse-depth", "fuse multi-view depth maps per region", Stage::kFuse);
  pipeline_sub("tsdf", "integrate fused depth and extract region meshes", Stage::kTsdf);
  Sub& run = pipeline_sub("run", "full pipeline", Stage::kEval);
  std::string synth_spec_path;
  std::string preset;
  run.app->add_option("--synth", synth_spec_path, "synthetic scene spec (JSON) used as input");
  run.app->add_option("--preset", preset, "synthetic preset: city");

  Command cmd;
  Sub& stitch = add("stitch", "crop region meshes and weld them into one");
  std::string regions_dir, stitch_out;
  double weld = 0.0;
  stitch.app->add_option("--regions", regions_dir, "directory with <tag>/mesh.ply and crop.json");
  stitch.app->add_option("--out", stitch_out, "output PLY");
  CLI::Option* weld_opt = stitch.app->add_option("--weld", weld, "weld tolerance");
  internal::AddTsdfFlags(*stitch.flags);

  Sub& eval_mesh = add("eval-mesh", "precision/recall/F1 of a mesh against ground truth");
  std::string rec_path, eval_out;
  eval_mesh.app->add_option("--rec", rec_path, "reconstructed PLY");
  eval_mesh.app->add_option("--out", eval_out, "report JSON (default stdout)");
  internal::AddEvalFlags(*eval_mesh.flags);
  eval_mesh.flags->Add<std::uint64_t>("--seed", "random seed",
                                      [](PipelineConfig& c, const std::uint64_t& v) {
                                        c.eval.seed = v;
                                      });

  Sub& eval_render = add("eval-render", "PSNR and SSIM of two images");
  std::string image_a, image_b, render_out;
  double max_value = 1.0;
  eval_render.app->add_option("--a", image_a, "first image (PFM, PGM or PPM)");
  eval_render.app->add_option("--b", image_b, "second image");
  CLI::Option* max_opt = eval_render.app->add_option("--max-value", max_value, "intensity range");
  eval_render.app->add_option("--out", render_out, "report JSON (default stdout)");

  Sub& dsm = add("dsm", "rasterize a digital surface model from a point cloud");
  std::string points_path, dsm_out, png_path;
  double cell = 0.0;
  dsm.app->add_option("--points", points_path, "PLY point cloud or mesh");
  CLI::Option* cell_opt = dsm.app->add_option("--cell", cell, "cell size");
  dsm.app->add_option("--out", dsm_out, "output PFM");
  dsm.app->add_option("--png", png_path, "optional color-ramp PNG");

  Sub& synth = add("synth", "generate a synthetic scene");
  std::string synth_spec, synth_out, synth_preset;
  std::size_t synth_points = 0;
  std::uint64_t synth_seed = 0;
  synth.app->add_option("--spec", synth_spec, "scene spec JSON");
  synth.app->add_option("--preset", synth_preset, "preset: city");
  CLI::Option* synth_points_opt = synth.app->add_option("--points", synth_points, "sparse points");
  CLI::Option* synth_seed_opt = synth.app->add_option("--seed", synth_seed, "random seed");
  synth.app->add_option("--out", synth_out, "output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    Fail(ErrorCode::kMissingRequired, app.help());
  } catch (const CLI::ExtrasError& e) {
    Fail(ErrorCode::kUnknownFlag, "unknown argument '" + internal::FirstExtra(app) + "'");
  } catch (const CLI::RequiredError& e) {
    Fail(ErrorCode::kMissingRequired, e.what());
  } catch (const CLI::ParseError& e) {
    const std::string name = e.get_name();
    if (name == "ConversionError" || name == "ValidationError" || name == "ArgumentMismatch") {
      Fail(ErrorCode::kInvalidValue, e.what());
    }
    if (name == "RequiredError") Fail(ErrorCode::kMissingRequired, e.what());
    Fail(ErrorCode::kUnknownFlag, e.what());
  }

  const Sub* chosen = nullptr;
  for (const Sub& s : subs) {
    if (s.app->parsed()) chosen = &s;
  }
  TILERECON_CHECK(chosen != nullptr, ErrorCode::kMissingRequired, "a subcommand is required");
  cmd.name = chosen->app->get_name();
  if (!chosen->config.empty()) cmd.pipeline = internal::LoadConfigFile(chosen->config);
  chosen->flags->Apply(cmd.pipeline);

  const auto require = [](bool ok, const std::string& flag) {
    TILERECON_CHECK(ok, ErrorCode::kMissingRequired, flag + " is required");
  };
  const std::map<std::string, Stage> stages{{"partition", Stage::kPartition},
                                            {"assign-views", Stage::kAssign},
                                            {"export-regions", Stage::kExport},
                                            {"fuse-depth", Stage::kFuse},
                                            {"tsdf", Stage::kTsdf},
                                            {"run", Stage::kEval}};
  if (const auto it = stages.find(cmd.name); it != stages.end()) {
    PipelineConfig& p = cmd.pipeline;
    if (cmd.name != "run" || !chosen->config.empty() || p.stop_after == Stage::kEval) {
      p.stop_after = cmd.name == "run" ? p.stop_after : it->second;
    }
    if (cmd.name == "run") {
      if (!synth_spec_path.empty()) {
        try {
          p.synth = SynthSpecFromJson(ReadJsonFile(synth_spec_path));
        } catch (const Error& e) {
          Fail(ErrorCode::kInvalidValue, "--synth: " + std::string(e.what()));
        }
      } else if (!preset.empty()) {
        TILERECON_CHECK(preset == "city", ErrorCode::kInvalidValue,
                        "--preset: unknown preset '" + preset + "'");
        p.synth = CitySpec(p.seed);
      }
    }
    if (!p.synth) require(!p.model_dir.empty(), "--model");
    require(!p.out_dir.empty(), "--out");
    if (!p.synth && p.stop_after >= Stage::kFuse) require(!p.depth_dir.empty(), "--depth-dir");
    try {
      p.Validate();
    } catch (const Error& e) {
      if (IsUsageError(e.code())) throw;
      Fail(ErrorCode::kInvalidValue, e.what());
    }
  } else if (cmd.name == "stitch") {
    require(!regions_dir.empty(), "--regions");
    require(!stitch_out.empty(), "--out");
    cmd.regions_dir = regions_dir;
    cmd.out_file = stitch_out;
    if (weld_opt->count() > 0) {
      TILERECON_CHECK(internal::Positive(weld), ErrorCode::kInvalidValue,
                      "--weld: must be positive");
      cmd.weld_tolerance = weld;
    }
  } else if (cmd.name == "eval-mesh") {
    require(!rec_path.empty(), "--rec");
    require(!cmd.pipeline.gt_path.empty(), "--gt");
    cmd.rec_path = rec_path;
    cmd.gt_path = cmd.pipeline.gt_path;
    cmd.out_file = eval_out;
  } else if (cmd.name == "eval-render") {
    require(!image_a.empty(), "--a");
    require(!image_b.empty(), "--b");
    TILERECON_CHECK(max_opt->count() == 0 || internal::Positive(max_value),
                    ErrorCode::kInvalidValue, "--max-value: must be positive");
    cmd.image_a = image_a;
    cmd.image_b = image_b;
    cmd.max_value = max_value;
    cmd.out_file = render_out;
  } else if (cmd.name == "dsm") {
    require(!points_path.empty(), "--points");
    require(cell_opt->count() > 0, "--cell");
    require(!dsm_out.empty(), "--out");
    TILERECON_CHECK(internal::Positive(cell), ErrorCode::kInvalidValue,
                    "--cell: must be positive");
    cmd.points_path = points_path;
    cmd.cell = cell;
    cmd.out_file = dsm_out;
    cmd.png_path = png_path;
  } else if (cmd.name == "synth") {
    require(!synth_out.empty(), "--out");
    if (!synth_spec.empty()) {
      cmd.synth = SynthSpecFromJson(ReadJsonFile(synth_spec));
    } else {
      TILERECON_CHECK(synth_preset.empty() || synth_preset == "city", ErrorCode::kInvalidValue,
                      "--preset: unknown preset '" + synth_preset + "'");
      cmd.synth = CitySpec();
    }
    if (synth_points_opt->count() > 0) cmd.synth.num_points = synth_points;
    if (synth_seed_opt->count() > 0) cmd.synth.seed = synth_seed;
    cmd.out_file = synth_out;
  }
  return cmd;
}

// ---------------------------------------------------------------------------
// Execution

namespace internal {

inline void EmitJson(const Json& j, const std::filesystem::path& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    WriteJson(out, j);
  }
}

inline int RunStitch(const Command& cmd) {
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(cmd.regions_dir)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "mesh.ply") &&
        std::filesystem::exists(entry.path() / "crop.json")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  TILERECON_CHECK(!dirs.empty(), ErrorCode::kMissingFile,
                  "no region meshes under " + cmd.regions_dir.string());
  std::vector<RegionMesh> parts;
  for (const auto& d : dirs) {
    parts.push_back({ReadPly(d / "mesh.ply"), CropBoxFromJson(ReadJsonFile(d / "crop.json"))});
  }
  const double tol = cmd.weld_tolerance.value_or(cmd.pipeline.tsdf.voxel_size / 10.0);
  const Mesh mesh = CropAndStitch(parts, tol);
  WritePly(cmd.out_file, mesh);
  std::cout << Json{{"regions", parts.size()},
                    {"vertices", mesh.vertices.size()},
                    {"triangles", mesh.triangles.size()}}
                   .dump(2)
            << "\n";
  return kExitOk;
}

inline int RunSynth(const Command& cmd) {
  const SynthScene scene = SynthesizeScene(cmd.synth);
  const auto& out = cmd.out_file;
  WriteSparseModel(scene.model, out / "sparse");
  std::filesystem::create_directories(out / "depth");
  for (const auto& [id, depth] : scene.depth) {
    WriteDepthPfm(out / "depth" / DepthFileName(scene.model.images.at(id).name), depth);
  }
  WritePly(out / "gt_mesh.ply", scene.gt_mesh);
  WritePointsPly(out / "gt_points.ply", scene.gt_samples);
  std::cout << Json{{"images", scene.model.images.size()},
                    {"points", scene.model.points.size()},
                    {"depth_maps", scene.depth.size()}}
                   .dump(2)
            << "\n";
  return kExitOk;
}

}  // namespace internal

inline int ExecuteCommand(const Command& cmd) {
  if (cmd.name == "stitch") return internal::RunStitch(cmd);
  if (cmd.name == "synth") return internal::RunSynth(cmd);
  if (cmd.name == "eval-mesh") {
    const Mesh rec = ReadPly(cmd.rec_path);
    const Mesh gt = ReadPly(cmd.gt_path);
    internal::EmitJson(EvaluateMesh(rec, gt, cmd.pipeline.eval).ToJson(), cmd.out_file);
    return kExitOk;
  }
  if (cmd.name == "eval-render") {
    const Image a = ReadImage(cmd.image_a);
    const Image b = ReadImage(cmd.image_b);
    internal::EmitJson({{"psnr", Psnr(a, b, cmd.max_value)}, {"ssim", Ssim(a, b, cmd.max_value)}},
                       cmd.out_file);
    return kExitOk;
  }
  if (cmd.name == "dsm") {
    const Mesh cloud = ReadPly(cmd.points_path);
    const Dsm dsm = GenerateDsm(cloud.vertices, cmd.cell);
    TILERECON_CHECK(dsm.cols > 0, ErrorCode::kEmptyMesh, "point cloud is empty");
    WriteDsmPfm(cmd.out_file, dsm);
    if (!cmd.png_path.empty()) WriteDsmPng(cmd.png_path, dsm);
    std::cout << Json{{"cols", dsm.cols},
                      {"rows", dsm.rows},
                      {"cell", dsm.cell},
                      {"origin_x", dsm.origin_x},
                      {"origin_z", dsm.origin_z}}
                     .dump(2)
              << "\n";
    return kExitOk;
  }
  const PipelineResult result = RunPipeline(cmd.pipeline);
  return result.exit_code;
}

// Entry point shared by the binary and the tests.
inline int RunCli(const std::vector<std::string>& args) {
  Command cmd;
  try {
    cmd = ParseCommand(args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return IsUsageError(e.code()) ? kExitUsage : kExitFatal;
  }
  try {
    return ExecuteCommand(cmd);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFatal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFatal;
  }
}

}  // namespace tilerecon
