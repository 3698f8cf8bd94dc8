// Command-line frontend: synthetic scene generation, training, image
// rendering, mesh extraction and evaluation. Every command writes a
// manifest.json into its output directory listing the artifacts produced.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "ndr/checkpoint.hpp"
#include "ndr/metrics.hpp"
#include "ndr/synth.hpp"
#include "ndr/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ndr;

namespace {

struct Manifest {
  std::string command;
  fs::path out_dir;
  json artifacts = json::array();

  void add(const fs::path& p, const std::string& kind) {
    artifacts.push_back({{"path", p.string()}, {"kind", kind}});
  }
  void write(const json& extra = json::object()) {
    json m = extra;
    m["command"] = command;
    m["out"] = out_dir.string();
    m["artifacts"] = artifacts;
    std::ofstream f(out_dir / "manifest.json");
    f << m.dump(2) << "\n";
  }
};

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  bool quiet = false;
};

TrainConfig effective_config(const CommonOpts& o) {
  ConfigMap c;
  if (!o.config_path.empty()) c = ConfigMap::load(o.config_path);
  for (const auto& s : o.overrides) c.apply_override(s);
  return TrainConfig::from_config(c);
}

// Trainer shell around a finished checkpoint, ready for rendering and
// evaluation at the stored iteration's encoding schedule.
std::unique_ptr<Trainer<double>> load_trained(const fs::path& data,
                                              const fs::path& ckpt,
                                              const TrainConfig& cfg) {
  Dataset<double> ds = load_dataset<double>(data);
  auto tr = std::make_unique<Trainer<double>>(std::move(ds), cfg, false);
  uint64_t hash = 0;
  int64_t it = load_checkpoint(ckpt, tr->store(), &hash);
  tr->set_iteration(it);
  uint64_t want = to_config_map(cfg).hash();
  if (hash != want)
    std::cerr << "warning: checkpoint config hash " << hash
              << " differs from the effective configuration (" << want
              << "); results may not match the training run\n";
  return tr;
}

// Whole-frame render through the differentiable pipeline (values only),
// chunked to bound tape memory.
void render_frame_images(Trainer<double>& tr, int frame, ImageRgb8& color,
                         ImageGray16& depth, ImageRgb8& mask, Rng& rng) {
  const Dataset<double>& ds = tr.dataset();
  Camera<double> cam = tr.camera(frame, CameraRole::Rgb);
  int w = cam.intr.width, h = cam.intr.height;
  color.width = mask.width = depth.width = w;
  color.height = mask.height = depth.height = h;
  color.data.assign(static_cast<size_t>(w) * h * 3, 0);
  mask.data.assign(static_cast<size_t>(w) * h * 3, 0);
  depth.data.assign(static_cast<size_t>(w) * h, 0);

  Vec<double> code = tr.deform_code(frame);
  auto sdf_fn = [&](const Mat<double>& p) {
    return fields_raw::sdf_at_observed(tr.store(), tr.config().fields, p, code,
                                       tr.pe_block(), tr.pe_point(), tr.pe_hyper());
  };

  const int chunk = 64;
  std::vector<std::pair<int, int>> pix;
  pix.reserve(chunk);
  auto flush = [&]() {
    if (pix.empty()) return;
    auto rays = generate_rays(cam, pix, frame);
    Mat<double> t = sample_rays(rays, tr.config().samples, sdf_fn, rng);
    int n = static_cast<int>(rays.size());
    Mat<double> o(3, n), d(3, n);
    for (int j = 0; j < n; ++j) {
      o.col(j) = rays[static_cast<size_t>(j)].origin;
      d.col(j) = rays[static_cast<size_t>(j)].dir;
    }
    ad::Tape<double> tape;
    tr.store().clear_bindings();
    ad::Var<double> dcode =
        tr.store().use(tape, detail::deform_code_name(frame));
    ad::Var<double> acode =
        tr.store().use(tape, detail::appear_code_name(frame));
    auto out = render_ad::render_bundle(
        tape, tr.store(), tr.config().fields, tr.pe_block(), tr.pe_point(),
        tr.pe_hyper(), tr.pe_color(), tape.constant(o), tape.constant(d), t,
        dcode, acode);
    const Mat<double>& c = out.ray.color.value();
    const Mat<double>& s = out.ray.depth.value();
    const Mat<double>& m = out.ray.mask.value();
    for (int j = 0; j < n; ++j) {
      auto [x, y] = pix[static_cast<size_t>(j)];
      for (int ch = 0; ch < 3; ++ch) {
        color.px(x, y)[ch] = static_cast<uint8_t>(
            std::clamp(c(ch, j), 0.0, 1.0) * 255.0 + 0.5);
        mask.px(x, y)[ch] =
            static_cast<uint8_t>(std::clamp(m(0, j), 0.0, 1.0) * 255.0 + 0.5);
      }
      // ray parameter -> z -> raw units -> stored depth value
      double z = s(0, j) / cam.depth_to_s(static_cast<double>(x),
                                          static_cast<double>(y));
      double raw = z * ds.norm.radius * ds.norm.depth_scale;
      depth.at(x, y) = static_cast<uint16_t>(std::clamp(raw, 0.0, 65535.0));
    }
    pix.clear();
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      pix.emplace_back(x, y);
      if (static_cast<int>(pix.size()) == chunk) flush();
    }
  flush();
}

// Topology coordinate of the reference frame's surface centroid; anchors the
// canonical-space slice used for mesh extraction.
Vec<double> reference_topo(const Trainer<double>& tr, int ref_frame) {
  const Dataset<double>& ds = tr.dataset();
  Camera<double> cam = tr.camera(ref_frame, CameraRole::Depth);
  const FrameRecord<double>& fr = ds.frames[static_cast<size_t>(ref_frame)];
  Vec3<double> centroid = Vec3<double>::Zero();
  int count = 0;
  for (auto [x, y] : masked_pixels(fr))
    if (fr.depth_at(x, y) > 0) {
      centroid += cam.back_project(static_cast<double>(x),
                                   static_cast<double>(y), fr.depth_at(x, y));
      count++;
    }
  NDR_CHECK(count > 0, "extract: reference frame has no masked depth");
  centroid /= count;
  Mat<double> p(3, 1);
  p.col(0) = centroid;
  Mat<double> q = fields_raw::topo_coords(tr.store(), tr.config().fields, p,
                                          tr.deform_code(ref_frame), tr.pe_point());
  return q.col(0);
}

int cmd_synth(const std::string& out, const std::string& shape, int frames,
              int width, int height, double twist, double noise, double dropout,
              int gt_res, unsigned seed, bool quiet) {
  SyntheticSceneSpec<double> spec;
  if (shape == "sphere") spec.shape = BaseShape::Sphere;
  else if (shape == "torus") spec.shape = BaseShape::Torus;
  else if (shape == "two_spheres") spec.shape = BaseShape::TwoSpheres;
  else throw Error("synth: unknown shape " + shape);
  spec.frames = frames;
  spec.width = width;
  spec.height = height;
  spec.twist_amplitude = twist;
  spec.depth_noise_std = noise;
  spec.depth_dropout = dropout;
  spec.gt_mesh_res = gt_res;
  spec.seed = seed;
  synth_generate(spec, out);

  Manifest man{"synth", out};
  man.add(fs::path(out) / "intrinsics.txt", "intrinsics");
  man.add(fs::path(out) / "poses.txt", "poses");
  for (const char* d : {"color", "depth", "mask"})
    man.add(fs::path(out) / d, "image_dir");
  man.add(fs::path(out) / "gt", "ground_truth");
  man.write({{"frames", frames}, {"shape", shape}});
  if (!quiet) std::cout << "wrote synthetic scene to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& data, const std::string& out,
              const CommonOpts& opts, const std::string& resume,
              double pose_noise_deg) {
  TrainConfig cfg = effective_config(opts);
  fs::create_directories(out);
  uint64_t cfg_hash = to_config_map(cfg).hash();

  Dataset<double> ds = load_dataset<double>(data);
  if (pose_noise_deg > 0) {
    Rng nrng(cfg.seed + 0x9e3779b9u);
    perturb_poses(ds, pose_noise_deg, nrng);
  }
  Trainer<double> tr(std::move(ds), cfg);
  if (!resume.empty()) tr.set_iteration(load_checkpoint(resume, tr.store()));

  {
    std::ofstream f(fs::path(out) / "config_used.cfg");
    f << to_config_map(cfg).serialize();
  }

  std::ofstream log(fs::path(out) / "train_log.txt");
  Manifest man{"train", out};
  auto ckpt_name = [&](int64_t it) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "checkpoint_%06lld.ckpt",
                  static_cast<long long>(it));
    return fs::path(out) / buf;
  };

  tr.train([&](const TrainLogRecord<double>& rec) {
    log << rec.line() << "\n";
    if (!opts.quiet && (rec.iteration % 50 == 0 ||
                        rec.iteration + 1 == cfg.iterations))
      std::cout << rec.line() << "\n";
    if (cfg.checkpoint_every > 0 && rec.iteration > 0 &&
        rec.iteration % cfg.checkpoint_every == 0) {
      fs::path p = ckpt_name(rec.iteration);
      save_checkpoint(p, tr.store(), tr.iteration(), cfg_hash);
      man.add(p, "checkpoint");
    }
  });

  fs::path final_path = fs::path(out) / "final.ckpt";
  save_checkpoint(final_path, tr.store(), tr.iteration(), cfg_hash);
  man.add(final_path, "checkpoint");
  man.add(fs::path(out) / "train_log.txt", "log");
  man.add(fs::path(out) / "config_used.cfg", "config");
  man.write({{"iterations", tr.iteration()}, {"config_hash", cfg_hash}});
  if (!opts.quiet)
    std::cout << "training finished at iteration " << tr.iteration() << "\n";
  return 0;
}

int cmd_render(const std::string& data, const std::string& ckpt, int frame,
               const std::string& out, const CommonOpts& opts, unsigned seed) {
  TrainConfig cfg = effective_config(opts);
  auto tr = load_trained(data, ckpt, cfg);
  NDR_CHECK(frame >= 0 && frame < tr->dataset().frame_count(),
            "render: frame out of range");
  fs::create_directories(out);

  ImageRgb8 color, mask;
  ImageGray16 depth;
  Rng rng(seed);
  render_frame_images(*tr, frame, color, depth, mask, rng);

  char stem[32];
  std::snprintf(stem, sizeof(stem), "%06d", frame);
  fs::path cp = fs::path(out) / (std::string("color_") + stem + ".png");
  fs::path dp = fs::path(out) / (std::string("depth_") + stem + ".png");
  fs::path mp = fs::path(out) / (std::string("mask_") + stem + ".png");
  write_png_rgb8(cp.string(), color);
  write_png_gray16(dp.string(), depth);
  write_png_rgb8(mp.string(), mask);

  Manifest man{"render", out};
  man.add(cp, "color");
  man.add(dp, "depth");
  man.add(mp, "mask");
  man.write({{"frame", frame}});
  if (!opts.quiet) std::cout << "rendered frame " << frame << " to " << out << "\n";
  return 0;
}

int cmd_extract(const std::string& data, const std::string& ckpt,
                const std::string& out, const CommonOpts& opts, bool canonical,
                int frame, int ref_frame, int res, const std::string& format) {
  TrainConfig cfg = effective_config(opts);
  auto tr = load_trained(data, ckpt, cfg);
  fs::create_directories(out);

  TriangleMesh<double> mesh;
  std::string stem;
  if (canonical) {
    Vec<double> q_ref = reference_topo(*tr, ref_frame);
    mesh = extract_canonical_mesh(tr->store(), cfg.fields, tr->pe_hyper(),
                                  q_ref, res);
    stem = "canonical";
  } else {
    NDR_CHECK(frame >= 0 && frame < tr->dataset().frame_count(),
              "extract: frame out of range");
    mesh = extract_frame_mesh(tr->store(), cfg.fields, tr->pe_block(),
                              tr->pe_point(), tr->pe_hyper(),
                              tr->deform_code(frame), res);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%06d", frame);
    stem = buf;
  }
  if (mesh.empty())
    std::cerr << "warning: extracted mesh is empty (no zero crossing)\n";

  fs::path mesh_path = fs::path(out) / (stem + "." + format);
  if (format == "obj") write_obj(mesh, mesh_path.string());
  else if (format == "ply") write_ply(mesh, mesh_path.string());
  else throw Error("extract: unknown format " + format);

  Manifest man{"extract", out};
  man.add(mesh_path, "mesh");
  man.write({{"vertices", mesh.vertices.size()},
             {"faces", mesh.faces.size()},
             {"resolution", res}});
  if (!opts.quiet)
    std::cout << "extracted " << mesh.vertices.size() << " vertices, "
              << mesh.faces.size() << " faces to " << mesh_path << "\n";
  return 0;
}

int cmd_eval(const std::string& data, const std::string& ckpt,
             const std::string& out, const CommonOpts& opts, int triples,
             int stride, bool with_chamfer, int res, unsigned seed) {
  TrainConfig cfg = effective_config(opts);
  auto tr = load_trained(data, ckpt, cfg);
  const Dataset<double>& ds = tr->dataset();
  fs::create_directories(out);

  std::ofstream rep(fs::path(out) / "metrics.txt");
  json summary;

  auto geo = geometry_error<double>(
      tr->store(), cfg.fields, tr->pe_block(), tr->pe_point(), tr->pe_hyper(),
      ds, cfg.samples, stride, seed,
      [&](int f) { return tr->camera(f, CameraRole::Depth); });
  rep << geo.str() << "\n";
  summary["geometry_error_mm"] = {{"mean", geo.mean}, {"median", geo.median}};

  auto cyc = eval_cycle_consistency(tr->store(), cfg.fields, tr->pe_block(), ds,
                                    triples, 16, seed + 1);
  rep << cyc.str() << "\n";
  summary["cycle_consistency"] = {{"mean", cyc.mean}, {"median", cyc.median}};

  if (with_chamfer) {
    fs::path gt_dir = fs::path(data) / "gt";
    NDR_CHECK(fs::is_directory(gt_dir),
              "eval: --chamfer requires ground-truth meshes under " +
                  gt_dir.string() + " (synthetic scenes only)");
    std::vector<double> per_frame;
    for (int f = 0; f < ds.frame_count(); ++f) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "mesh_%06d.obj", f);
      fs::path gt_path = gt_dir / buf;
      NDR_CHECK(fs::exists(gt_path), "eval: missing " + gt_path.string());
      auto gt = read_obj<double>(gt_path.string());
      // ground truth is stored raw; compare in normalized units
      for (auto& v : gt.vertices) v = ds.norm.to_unit(v);
      auto mesh = extract_frame_mesh(tr->store(), cfg.fields, tr->pe_block(),
                                     tr->pe_point(), tr->pe_hyper(),
                                     tr->deform_code(f), res);
      per_frame.push_back(chamfer(mesh, gt, 4000, seed + 2));
    }
    auto ch = MetricReport<double>::from("chamfer", std::move(per_frame));
    rep << ch.str() << "\n";
    summary["chamfer"] = {{"mean", ch.mean}, {"median", ch.median}};
  }

  Manifest man{"eval", out};
  man.add(fs::path(out) / "metrics.txt", "metrics");
  man.write({{"summary", summary}});
  if (!opts.quiet) {
    std::cout << "geometry error mean " << geo.mean << " mm, cycle mean "
              << cyc.mean << "\n";
    if (summary.contains("chamfer"))
      std::cout << "chamfer mean " << summary["chamfer"]["mean"] << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynamic RGB-D surface reconstruction"};
  app.require_subcommand(1);

  CommonOpts opts;
  unsigned seed = 1;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "configuration file");
    sub->add_option("--set", opts.overrides, "key=value overrides");
    sub->add_flag("--quiet", opts.quiet, "suppress progress output");
  };

  // synth
  std::string out, data, shape = "sphere", resume, ckpt, format = "obj";
  int frames = 20, width = 96, height = 96, gt_res = 64, frame = 0, ref_frame = 0;
  int triples = 1000, stride = 4, res = 128;
  double twist = 0.8, noise = 0.0, dropout = 0.0, pose_noise = 0.0;
  bool canonical = false, with_chamfer = false;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic scene");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--shape", shape, "sphere|torus|two_spheres");
  synth->add_option("--frames", frames);
  synth->add_option("--width", width);
  synth->add_option("--height", height);
  synth->add_option("--twist", twist, "twist amplitude (radians)");
  synth->add_option("--depth-noise", noise, "depth noise sigma (raw units)");
  synth->add_option("--depth-dropout", dropout, "invalid-pixel probability");
  synth->add_option("--gt-res", gt_res, "ground-truth mesh resolution");
  synth->add_option("--seed", seed);
  synth->add_flag("--quiet", opts.quiet);

  CLI::App* train = app.add_subcommand("train", "optimize a model");
  train->add_option("--data", data, "dataset directory")->required();
  train->add_option("--out", out, "run directory")->required();
  train->add_option("--resume", resume, "checkpoint to resume from");
  train->add_option("--pose-noise", pose_noise, "perturb poses (degrees)");
  add_common(train);

  CLI::App* render = app.add_subcommand("render", "render a trained frame");
  render->add_option("--data", data)->required();
  render->add_option("--checkpoint", ckpt)->required();
  render->add_option("--frame", frame)->required();
  render->add_option("--out", out)->required();
  render->add_option("--seed", seed);
  add_common(render);

  CLI::App* extract = app.add_subcommand("extract", "extract a surface mesh");
  extract->add_option("--data", data)->required();
  extract->add_option("--checkpoint", ckpt)->required();
  extract->add_option("--out", out)->required();
  extract->add_flag("--canonical", canonical, "canonical-space mesh");
  extract->add_option("--frame", frame, "observation-space frame");
  extract->add_option("--ref-frame", ref_frame, "reference frame for the canonical slice");
  extract->add_option("--res", res, "grid resolution");
  extract->add_option("--format", format, "obj|ply");
  add_common(extract);

  CLI::App* evalc = app.add_subcommand("eval", "evaluate a trained model");
  evalc->add_option("--data", data)->required();
  evalc->add_option("--checkpoint", ckpt)->required();
  evalc->add_option("--out", out)->required();
  evalc->add_option("--triples", triples, "cycle-consistency triples");
  evalc->add_option("--stride", stride, "pixel stride for depth error");
  evalc->add_flag("--chamfer", with_chamfer, "compare against gt meshes");
  evalc->add_option("--res", res, "extraction resolution for chamfer");
  evalc->add_option("--seed", seed);
  add_common(evalc);

  CLI11_PARSE(app, argc, argv);
  try {
    if (synth->parsed())
      return cmd_synth(out, shape, frames, width, height, twist, noise,
                       dropout, gt_res, seed, opts.quiet);
    if (train->parsed()) return cmd_train(data, out, opts, resume, pose_noise);
    if (render->parsed())
      return cmd_render(data, ckpt, frame, out, opts, seed);
    if (extract->parsed())
      return cmd_extract(data, ckpt, out, opts, canonical, frame, ref_frame,
                         res, format);
    if (evalc->parsed())
      return cmd_eval(data, ckpt, out, opts, triples, stride, with_chamfer,
                      res, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
