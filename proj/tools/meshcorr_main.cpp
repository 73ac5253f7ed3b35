#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "meshcorr/config.hpp"
#include "meshcorr/datagen.hpp"
#include "meshcorr/io.hpp"
#include "meshcorr/mesh.hpp"
#include "meshcorr/metrics.hpp"
#include "meshcorr/trainer.hpp"
#include "meshcorr/warp.hpp"

namespace fs = std::filesystem;
using namespace meshcorr;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "config file (key = value with [sections])");
  cmd->add_option("--set", args.overrides, "override a config key: section.key=value")
      ->take_all();
  cmd->add_option("--seed", args.seed, "override train.seed")->each([&args](const std::string&) {
    args.seed_set = true;
  });
}

RunConfig make_config(const CommonArgs& args) {
  RunConfig config = args.config_path.empty() ? RunConfig{} : load_config_file(args.config_path);
  for (const std::string& kv : args.overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects section.key=value, got '" + kv + "'");
    apply_config_override(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed_set) config.seed = args.seed;
  validate_config(config);
  return config;
}

int run_generate(const CommonArgs& args, const std::string& out_dir) {
  const RunConfig config = make_config(args);
  BuildReport report;
  const DatasetManifest manifest = build_dataset(config, out_dir, &report);
  const std::uint64_t digest = fnv1a_file_digest((fs::path(out_dir) / "manifest.tsv").string());
  std::printf("generated %d scenes, %d view groups, %d samples\n", report.scenes, report.groups,
              report.samples);
  std::printf("hq triangles %zu, lq triangles %zu\n", report.hq_triangles, report.lq_triangles);
  std::printf("manifest %s (digest %016llx)\n",
              (fs::path(out_dir) / "manifest.tsv").string().c_str(),
              static_cast<unsigned long long>(digest));
  return 0;
}

int run_train(const CommonArgs& args, const std::string& manifest_path, const std::string& out_dir,
              const std::string& resume) {
  const RunConfig config = make_config(args);
  const DatasetManifest manifest = read_manifest(manifest_path);
  Trainer trainer(config, manifest);
  const std::uint64_t digest = trainer.run(out_dir, resume);
  std::printf("trained to step %lld, %zu parameters\n",
              static_cast<long long>(trainer.current_step()), trainer.net().param_count());
  std::printf("checkpoint %s\n", (fs::path(out_dir) / "checkpoint.mcp").string().c_str());
  std::printf("log digest %016llx\n", static_cast<unsigned long long>(digest));
  return 0;
}

int run_eval(const CommonArgs& args, const std::string& manifest_path,
             const std::string& checkpoint, const std::string& split, const std::string& out_dir) {
  const RunConfig config = make_config(args);
  const DatasetManifest manifest = read_manifest(manifest_path);
  SampleStore store(manifest, config);

  CorrectionNetF net(NetConfig{config.multiplier, 7, config.camera.height, config.camera.width,
                               config.seed});
  if (checkpoint.empty()) {
    // zero-parameter network: identity correction
    std::vector<float> zeros(net.param_count(), 0.0f);
    net.set_params(zeros);
  } else {
    load_checkpoint(checkpoint, net, nullptr);
  }

  const EvalResult result = evaluate(net, store, split, config);
  const std::string text = metric_report_to_text(result.metrics);
  const std::string csv = metric_report_to_csv(result.metrics);

  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "metrics.txt");
    out << text;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "gc_residual_mean %.10g\ngc_pixels %zu\n",
                  result.gc_residual_mean, result.gc_pixels);
    out << buf;
  }
  {
    std::ofstream out(fs::path(out_dir) / "gross_errors.csv");
    out << csv;
  }
  std::fputs(text.c_str(), stdout);
  std::printf("gc_residual_mean %.10g\ngc_pixels %zu\n", result.gc_residual_mean, result.gc_pixels);
  return 0;
}

int run_warp_debug(const CommonArgs& args, const std::string& manifest_path, int target_index,
                   int nearby_index, const std::string& out_dir) {
  const RunConfig config = make_config(args);
  const DatasetManifest manifest = read_manifest(manifest_path);
  if (target_index < 0 || nearby_index < 0 ||
      target_index >= static_cast<int>(manifest.samples.size()) ||
      nearby_index >= static_cast<int>(manifest.samples.size()))
    throw std::runtime_error("warp-debug: sample index out of range");
  const DataSample& rec_t = manifest.samples[static_cast<std::size_t>(target_index)];
  const DataSample& rec_n = manifest.samples[static_cast<std::size_t>(nearby_index)];
  if (rec_t.scene_id != rec_n.scene_id)
    throw std::runtime_error("warp-debug: samples come from different scenes");

  const fs::path root(manifest.root);
  const MeshFeatureStack hq_t = read_stack((root / rec_t.hq_stack).string());
  const MeshFeatureStack hq_n = read_stack((root / rec_n.hq_stack).string());
  const RigidTransform t_nt = compose(hq_n.pose, invert(hq_t.pose));
  const Inconsistency inc =
      inconsistency(hq_t.inverse_depth, hq_n.inverse_depth, hq_t.triangle_id, hq_n.triangle_id,
                    t_nt, config.camera, config.warp_eps);

  std::size_t unoccluded = 0, inside = 0;
  double residual_sum = 0.0, residual_max = 0.0;
  for (int v = 0; v < inc.residual.height(); ++v)
    for (int u = 0; u < inc.residual.width(); ++u) {
      if (inc.warp.in_bounds.at(u, v)) ++inside;
      if (inc.warp.unoccluded.at(u, v)) {
        ++unoccluded;
        residual_sum += inc.residual.at(u, v);
        residual_max = std::max(residual_max, double(inc.residual.at(u, v)));
      }
    }

  fs::create_directories(out_dir);
  write_float_image((fs::path(out_dir) / "d_nt.mci").string(), inc.warp.d_nt);
  write_float_image((fs::path(out_dir) / "d_tilde.mci").string(), inc.warp.d_tilde);
  write_float_image((fs::path(out_dir) / "residual.mci").string(), inc.residual);
  ImageF coords_u(inc.residual.width(), inc.residual.height());
  ImageF coords_v(inc.residual.width(), inc.residual.height());
  for (int v = 0; v < coords_u.height(); ++v)
    for (int u = 0; u < coords_u.width(); ++u) {
      coords_u.at(u, v) = inc.warp.sample_coords.at(u, v).u;
      coords_v.at(u, v) = inc.warp.sample_coords.at(u, v).v;
    }
  write_float_image((fs::path(out_dir) / "sample_coords.mci").string(),
                    std::vector<const ImageF*>{&coords_u, &coords_v});
  write_pgm((fs::path(out_dir) / "unoccluded.pgm").string(), inc.warp.unoccluded);
  write_pgm((fs::path(out_dir) / "in_bounds.pgm").string(), inc.warp.in_bounds);
  write_pgm((fs::path(out_dir) / "residual.pgm").string(), inc.residual);
  write_pgm((fs::path(out_dir) / "d_nt.pgm").string(), inc.warp.d_nt);
  write_pgm((fs::path(out_dir) / "d_tilde.pgm").string(), inc.warp.d_tilde);

  if (unoccluded == 0) std::printf("warning: U_n is empty (no view overlap)\n");
  std::printf("in_bounds %zu, unoccluded %zu\n", inside, unoccluded);
  std::printf("residual mean %.10g, max %.10g\n",
              unoccluded ? residual_sum / double(unoccluded) : 0.0, residual_max);
  return 0;
}

int run_render(const CommonArgs& args, const std::string& mesh_path, const std::string& out_prefix,
               double px, double py, double pz, double yaw_deg, double pitch_deg) {
  const RunConfig config = make_config(args);
  MeshBuildReport report;
  const TriangleMesh mesh = load_obj(mesh_path, &report);
  if (report.dropped_degenerate)
    std::printf("dropped %zu degenerate triangles\n", report.dropped_degenerate);

  const double yaw = yaw_deg * 3.14159265358979323846 / 180.0;
  const double pitch = pitch_deg * 3.14159265358979323846 / 180.0;
  const Vec3 heading = {std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw),
                        std::sin(pitch)};
  const RigidTransform pose = look_pose({px, py, pz}, heading);
  const MeshFeatureStack stack = rasterize(mesh, config.camera, pose);

  write_stack(out_prefix + ".mcs", stack);
  write_pgm(out_prefix + "_idepth.pgm", stack.inverse_depth);
  write_pgm(out_prefix + "_angle.pgm", stack.cam_angle);
  write_pgm(out_prefix + "_valid.pgm", stack.valid);

  std::size_t covered = 0;
  for (int v = 0; v < stack.height(); ++v)
    for (int u = 0; u < stack.width(); ++u)
      if (stack.valid.at(u, v)) ++covered;
  std::printf("rendered %zu triangles, %zu/%d covered pixels -> %s.mcs\n", mesh.triangles.size(),
              covered, stack.width() * stack.height(), out_prefix.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mesh-view correction toolkit"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, warp_args, render_args;
  std::string out_dir = "out";
  std::string manifest_path, checkpoint, resume, split = "test";
  std::string mesh_path, out_prefix = "render";
  int target_index = 0, nearby_index = 1;
  double px = 0, py = 0, pz = 1.5, yaw_deg = 0, pitch_deg = 0;

  CLI::App* generate = app.add_subcommand("generate", "build a synthetic paired-mesh dataset");
  add_common(generate, gen_args);
  generate->add_option("--out", out_dir, "output directory")->required();

  CLI::App* train = app.add_subcommand("train", "train the correction network");
  add_common(train, train_args);
  train->add_option("--manifest", manifest_path, "dataset manifest")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--resume", resume, "checkpoint to resume from");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  add_common(eval, eval_args);
  eval->add_option("--manifest", manifest_path, "dataset manifest")->required();
  eval->add_option("--checkpoint", checkpoint, "checkpoint file (omit for the zero network)");
  eval->add_option("--split", split, "train | val | test");
  eval->add_option("--out", out_dir, "output directory")->required();

  CLI::App* warp_debug = app.add_subcommand("warp-debug", "emit warp residual and mask images");
  add_common(warp_debug, warp_args);
  warp_debug->add_option("--manifest", manifest_path, "dataset manifest")->required();
  warp_debug->add_option("--target", target_index, "target sample index (manifest order)");
  warp_debug->add_option("--nearby", nearby_index, "nearby sample index");
  warp_debug->add_option("--out", out_dir, "output directory")->required();

  CLI::App* render = app.add_subcommand("render", "rasterize one mesh to a feature stack");
  add_common(render, render_args);
  render->add_option("--mesh", mesh_path, "OBJ mesh")->required();
  render->add_option("--out", out_prefix, "output file prefix");
  render->add_option("--pos-x", px, "camera x");
  render->add_option("--pos-y", py, "camera y");
  render->add_option("--pos-z", pz, "camera z");
  render->add_option("--yaw", yaw_deg, "heading yaw, degrees");
  render->add_option("--pitch", pitch_deg, "heading pitch, degrees");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (generate->parsed()) return run_generate(gen_args, out_dir);
    if (train->parsed()) return run_train(train_args, manifest_path, out_dir, resume);
    if (eval->parsed()) return run_eval(eval_args, manifest_path, checkpoint, split, out_dir);
    if (warp_debug->parsed())
      return run_warp_debug(warp_args, manifest_path, target_index, nearby_index, out_dir);
    if (render->parsed())
      return run_render(render_args, mesh_path, out_prefix, px, py, pz, yaw_deg, pitch_deg);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    std::fprintf(stderr, "error: %s\n", what.c_str());
    return what.find("non-finite") != std::string::npos ? 3 : 2;
  }
  return 1;
}
