#pragma once

// Joint optimization: per-iteration batches are frozen (frame choice, pixel
// selection, sample depths), then a differentiable graph from camera
// parameters through deformation, SDF and rendering to the weighted loss is
// evaluated and backpropagated. The frozen-batch split keeps the full
// gradient finite-difference checkable.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ndr/camera.hpp"
#include "ndr/common.hpp"
#include "ndr/config.hpp"
#include "ndr/dataset.hpp"
#include "ndr/fields.hpp"
#include "ndr/losses.hpp"
#include "ndr/render.hpp"
#include "ndr/sampling.hpp"

namespace ndr {

struct TrainConfig {
  int iterations = 10000;
  int rays_per_batch = 2048;
  int depth_points_per_batch = 2048;
  double lr = 5e-4;
  double lr_decay = 1.0;   // final lr = lr * lr_decay, cosine interpolation
  double s_lr_mult = 1.0;    // learning-rate multiplier for the sharpness param
  double cam_lr_mult = 1.0;  // learning-rate multiplier for camera parameters
  // stop camera updates after this many iterations (0 = refine throughout).
  // Poses align fastest while the coarse-to-fine encoding is still closed;
  // afterwards continued refinement is a gauge random walk against the
  // co-adapting deformation field.
  int cam_refine_iters = 0;
  uint64_t seed = 1;
  int checkpoint_every = 0;  // 0 = final only
  bool refine_cameras = true;
  bool refine_intrinsics = false;
  double s_scale_init = 20.0;
  double sphere_radius = 0.5;
  int sphere_iters = 800;
  double sphere_tol = 0.05;
  int pe_ramp_iters = -1;  // -1: ramp over the first half of the run
  FieldsConfig fields;
  SampleConfig samples;
  LossWeights weights;

  int ramp_iters() const {
    return pe_ramp_iters >= 0 ? pe_ramp_iters : iterations / 2;
  }

  static TrainConfig from_config(const ConfigMap& c) {
    TrainConfig t;
    t.iterations = c.get_int("train.iterations", t.iterations);
    t.rays_per_batch = c.get_int("train.rays", t.rays_per_batch);
    t.depth_points_per_batch = c.get_int("train.depth_points", t.depth_points_per_batch);
    t.lr = c.get_double("train.lr", t.lr);
    t.lr_decay = c.get_double("train.lr_decay", t.lr_decay);
    t.s_lr_mult = c.get_double("train.s_lr_mult", t.s_lr_mult);
    t.cam_lr_mult = c.get_double("train.cam_lr_mult", t.cam_lr_mult);
    t.cam_refine_iters = c.get_int("train.cam_refine_iters", t.cam_refine_iters);
    t.seed = static_cast<uint64_t>(c.get_double("train.seed", static_cast<double>(t.seed)));
    t.checkpoint_every = c.get_int("train.checkpoint_every", t.checkpoint_every);
    t.refine_cameras = c.get_bool("train.refine_cameras", t.refine_cameras);
    t.refine_intrinsics = c.get_bool("train.refine_intrinsics", t.refine_intrinsics);
    t.s_scale_init = c.get_double("train.s_scale_init", t.s_scale_init);
    t.sphere_radius = c.get_double("train.sphere_radius", t.sphere_radius);
    t.sphere_iters = c.get_int("train.sphere_iters", t.sphere_iters);
    t.sphere_tol = c.get_double("train.sphere_tol", t.sphere_tol);
    t.pe_ramp_iters = c.get_int("train.pe_ramp_iters", t.pe_ramp_iters);

    FieldsConfig& f = t.fields;
    f.topo_dim = c.get_int("fields.topo_dim", f.topo_dim);
    f.num_blocks = c.get_int("fields.num_blocks", f.num_blocks);
    f.deform_code_dim = c.get_int("fields.deform_code_dim", f.deform_code_dim);
    f.appear_code_dim = c.get_int("fields.appear_code_dim", f.appear_code_dim);
    f.geo_feature_dim = c.get_int("fields.geo_feature_dim", f.geo_feature_dim);
    f.block_hidden_layers = c.get_int("fields.block_hidden_layers", f.block_hidden_layers);
    f.block_hidden_width = c.get_int("fields.block_hidden_width", f.block_hidden_width);
    f.fq_hidden_layers = c.get_int("fields.fq_hidden_layers", f.fq_hidden_layers);
    f.fq_hidden_width = c.get_int("fields.fq_hidden_width", f.fq_hidden_width);
    f.fd_hidden_layers = c.get_int("fields.fd_hidden_layers", f.fd_hidden_layers);
    f.fd_hidden_width = c.get_int("fields.fd_hidden_width", f.fd_hidden_width);
    f.fc_hidden_layers = c.get_int("fields.fc_hidden_layers", f.fc_hidden_layers);
    f.fc_hidden_width = c.get_int("fields.fc_hidden_width", f.fc_hidden_width);
    f.pe_bands_block = c.get_int("fields.pe_bands_block", f.pe_bands_block);
    f.pe_bands_point = c.get_int("fields.pe_bands_point", f.pe_bands_point);
    f.pe_bands_hyper = c.get_int("fields.pe_bands_hyper", f.pe_bands_hyper);
    f.pe_bands_color = c.get_int("fields.pe_bands_color", f.pe_bands_color);

    SampleConfig& s = t.samples;
    s.n_stratified = c.get_int("samples.stratified", s.n_stratified);
    s.importance_rounds = c.get_int("samples.importance_rounds", s.importance_rounds);
    s.n_importance = c.get_int("samples.importance", s.n_importance);
    s.coarse_scale = c.get_double("samples.coarse_scale", s.coarse_scale);

    LossWeights& w = t.weights;
    w.mask = c.get_double("loss.mask", w.mask);
    w.color = c.get_double("loss.color", w.color);
    w.depth = c.get_double("loss.depth", w.depth);
    w.eikonal = c.get_double("loss.eikonal", w.eikonal);
    w.sdf = c.get_double("loss.sdf", w.sdf);
    w.visible = c.get_double("loss.visible", w.visible);
    return t;
  }
};

// Effective configuration as key=value entries; its hash stamps checkpoints
// so a reload under different settings is detectable.
inline ConfigMap to_config_map(const TrainConfig& t) {
  ConfigMap c;
  auto setd = [&](const char* k, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    c.set(k, buf);
  };
  auto seti = [&](const char* k, long long v) { c.set(k, std::to_string(v)); };
  auto setb = [&](const char* k, bool v) { c.set(k, v ? "true" : "false"); };

  seti("train.iterations", t.iterations);
  seti("train.rays", t.rays_per_batch);
  seti("train.depth_points", t.depth_points_per_batch);
  setd("train.lr", t.lr);
  setd("train.lr_decay", t.lr_decay);
  setd("train.s_lr_mult", t.s_lr_mult);
  setd("train.cam_lr_mult", t.cam_lr_mult);
  seti("train.cam_refine_iters", t.cam_refine_iters);
  seti("train.seed", static_cast<long long>(t.seed));
  seti("train.checkpoint_every", t.checkpoint_every);
  setb("train.refine_cameras", t.refine_cameras);
  setb("train.refine_intrinsics", t.refine_intrinsics);
  setd("train.s_scale_init", t.s_scale_init);
  setd("train.sphere_radius", t.sphere_radius);
  seti("train.sphere_iters", t.sphere_iters);
  setd("train.sphere_tol", t.sphere_tol);
  seti("train.pe_ramp_iters", t.pe_ramp_iters);
  seti("fields.topo_dim", t.fields.topo_dim);
  seti("fields.num_blocks", t.fields.num_blocks);
  seti("fields.deform_code_dim", t.fields.deform_code_dim);
  seti("fields.appear_code_dim", t.fields.appear_code_dim);
  seti("fields.geo_feature_dim", t.fields.geo_feature_dim);
  seti("fields.block_hidden_layers", t.fields.block_hidden_layers);
  seti("fields.block_hidden_width", t.fields.block_hidden_width);
  seti("fields.fq_hidden_layers", t.fields.fq_hidden_layers);
  seti("fields.fq_hidden_width", t.fields.fq_hidden_width);
  seti("fields.fd_hidden_layers", t.fields.fd_hidden_layers);
  seti("fields.fd_hidden_width", t.fields.fd_hidden_width);
  seti("fields.fc_hidden_layers", t.fields.fc_hidden_layers);
  seti("fields.fc_hidden_width", t.fields.fc_hidden_width);
  seti("fields.pe_bands_block", t.fields.pe_bands_block);
  seti("fields.pe_bands_point", t.fields.pe_bands_point);
  seti("fields.pe_bands_hyper", t.fields.pe_bands_hyper);
  seti("fields.pe_bands_color", t.fields.pe_bands_color);
  seti("samples.stratified", t.samples.n_stratified);
  seti("samples.importance_rounds", t.samples.importance_rounds);
  seti("samples.importance", t.samples.n_importance);
  setd("samples.coarse_scale", t.samples.coarse_scale);
  setd("loss.mask", t.weights.mask);
  setd("loss.color", t.weights.color);
  setd("loss.depth", t.weights.depth);
  setd("loss.eikonal", t.weights.eikonal);
  setd("loss.sdf", t.weights.sdf);
  setd("loss.visible", t.weights.visible);
  return c;
}

// Fits the canonical SDF to a centered sphere by supervising values and
// spatial gradients at random points, then probes the fit; a probe failure
// aborts since training from a broken geometry prior diverges.
template <class T>
void init_sphere_sdf(ParameterStore<T>& store, const FieldsConfig& cfg,
                     const EncodingSchedule& pe_hyper, T radius, int iters,
                     T probe_tol, Rng& rng) {
  NDR_CHECK(radius > 0, "init_sphere_sdf: radius must be positive");
  AdamConfig ac;
  ac.lr = 1e-3;
  std::vector<std::string> fd_names = store.names_with_prefix("fd.");
  const int batch = 128;

  auto sample_point = [&]() {
    Vec3<T> p;
    do {
      p = rng.ball<T>() * T(1.2);
    } while (p.norm() < T(0.05));
    return p;
  };

  for (int it = 0; it < iters; ++it) {
    Mat<T> p(3, batch), tgt(1, batch), tn(3, batch);
    for (int i = 0; i < batch; ++i) {
      Vec3<T> pt = sample_point();
      p.col(i) = pt;
      tgt(0, i) = pt.norm() - radius;
      tn.col(i) = pt / pt.norm();
    }
    ad::Tape<T> tape;
    store.clear_bindings();
    ad::Var<T> pv = tape.leaf(p);
    ad::Var<T> x = ad::vconcat(
        {pv, tape.constant(Mat<T>::Zero(cfg.topo_dim, batch))});
    fields_ad::SdfOut<T> sd = fields_ad::sdf_eval(tape, store, cfg, x, pe_hyper);
    ad::Var<T> lv = ad::mean_all(ad::square(ad::sub(sd.d, tape.constant(tgt))));
    ad::Var<T> n = fields_ad::per_column_grad(tape, sd.d, pv);
    ad::Var<T> ln = ad::mean_all(ad::square(ad::sub(n, tape.constant(tn))));
    ad::Var<T> total = ad::add(lv, ad::scalar_mul(ln, T(0.1)));
    store.zero_grad();
    store.accumulate_grads(tape, total);
    store.adam_step(ac, fd_names);
  }

  // probe: mean absolute deviation from the analytic sphere
  const int probes = 1000;
  Mat<T> p(3 + cfg.topo_dim, probes);
  p.setZero();
  Mat<T> tgt(1, probes);
  for (int i = 0; i < probes; ++i) {
    Vec3<T> pt = sample_point();
    p.col(i).head(3) = pt;
    tgt(0, i) = pt.norm() - radius;
  }
  Mat<T> d = fields_raw::sdf_value(store, cfg, p, pe_hyper);
  T err = (d - tgt).cwiseAbs().mean();
  NDR_CHECK(err < probe_tol,
            "init_sphere_sdf: probe error " + std::to_string(static_cast<double>(err)) +
                " exceeds tolerance " + std::to_string(static_cast<double>(probe_tol)));
}

// Gaussian noise on the per-frame Euler angles of the base rotations;
// translations are left untouched.
template <class T>
void perturb_poses(Dataset<T>& ds, T sigma_deg, Rng& rng) {
  T s = sigma_deg * static_cast<T>(M_PI / 180.0);
  for (auto& fr : ds.frames) {
    T rz = static_cast<T>(rng.normal()) * s;
    T ry = static_cast<T>(rng.normal()) * s;
    T rx = static_cast<T>(rng.normal()) * s;
    fr.base_pose.rot = Mat3<T>(fr.base_pose.rot * euler_zyx(rz, ry, rx));
  }
}

template <class T>
struct FrozenBatch {
  int frame = 0;
  Mat<T> px, py;         // 1xN pixel centers
  Mat<T> color_obs;      // 3xN
  Mat<T> depth_obs_s;    // 1xN observed depth as ray parameter
  Mat<T> valid;          // 1xN depth validity {0,1}
  Mat<T> mask_obs;       // 1xN
  Mat<T> t;              // KxN frozen sample depths
  Mat<T> spx, spy, sz;   // 1xM depth surface pixels and normalized z
};

template <class T>
struct EvalResult {
  LossBreakdown<T> loss;
  int backfacing = 0;  // depth points whose normal faces away from the camera
  int depth_points = 0;
};

template <class T>
struct TrainLogRecord {
  int64_t iteration = 0;
  int frame = 0;
  LossBreakdown<T> loss;
  T alpha_ratio = 0;
  T s_scale = 0;
  int backfacing = 0;
  int depth_points = 0;

  std::string line() const {
    char buf[320];
    std::snprintf(buf, sizeof(buf),
                  "iter=%lld frame=%d color=%.6g depth=%.6g mask=%.6g "
                  "eikonal=%.6g sdf=%.6g visible=%.6g total=%.6g alpha=%.4g "
                  "s_scale=%.6g backfacing=%d/%d",
                  static_cast<long long>(iteration), frame,
                  static_cast<double>(loss.color), static_cast<double>(loss.depth),
                  static_cast<double>(loss.mask), static_cast<double>(loss.eikonal),
                  static_cast<double>(loss.sdf), static_cast<double>(loss.visible),
                  static_cast<double>(loss.total), static_cast<double>(alpha_ratio),
                  static_cast<double>(s_scale), backfacing, depth_points);
    return buf;
  }
};

inline std::string pose_param_name(int frame) {
  return "cam.pose." + std::to_string(frame);
}
inline const char* kIntrName = "cam.intr";

template <class T>
class Trainer {
 public:
  // `fit_geometry` skips the sphere prior; used when a checkpoint will
  // overwrite every parameter right after construction.
  explicit Trainer(Dataset<T> ds, TrainConfig cfg, bool fit_geometry = true)
      : ds_(std::move(ds)), cfg_(cfg), rng_(cfg.seed) {
    NDR_CHECK(ds_.frame_count() > 0, "trainer: empty dataset");
    NDR_CHECK(!ds_.two_cameras &&
                  ds_.intr_rgb.width == ds_.intr_depth.width &&
                  ds_.intr_rgb.height == ds_.intr_depth.height,
              "trainer: requires pre-aligned RGB-D (one shared camera)");
    adam_.lr = cfg_.lr;

    pe_block_.bands = cfg_.fields.pe_bands_block;
    pe_point_.bands = cfg_.fields.pe_bands_point;
    pe_hyper_.bands = cfg_.fields.pe_bands_hyper;
    pe_color_.bands = cfg_.fields.pe_bands_color;
    set_alpha(0);

    fields_init(store_, cfg_.fields, ds_.frame_count(), rng_);
    render_init(store_, cfg_.s_scale_init);
    ParamEntry<T>& intr = store_.add(kIntrName, 4, 1);
    intr.value << ds_.intr_depth.fx, ds_.intr_depth.fy, ds_.intr_depth.cx,
        ds_.intr_depth.cy;
    for (int i = 0; i < ds_.frame_count(); ++i)
      store_.add(pose_param_name(i), 6, 1);

    for (const auto& [name, e] : store_.entries()) {
      if (!cfg_.refine_cameras && name.rfind("cam.pose.", 0) == 0) continue;
      if (!cfg_.refine_intrinsics && name == kIntrName) continue;
      if (name == kLogSScaleName)
        trainable_s_.push_back(name);
      else if (name.rfind("cam.", 0) == 0)
        trainable_cam_.push_back(name);
      else
        trainable_.push_back(name);
    }

    pool_.resize(static_cast<size_t>(ds_.frame_count()));
    for (int f = 0; f < ds_.frame_count(); ++f) {
      const FrameRecord<T>& fr = ds_.frames[static_cast<size_t>(f)];
      for (int y = 0; y < ds_.intr_depth.height; ++y)
        for (int x = 0; x < ds_.intr_depth.width; ++x)
          if (fr.mask_at(x, y) && fr.depth_at(x, y) > T(0))
            pool_[static_cast<size_t>(f)].push_back({x, y});
    }

    if (fit_geometry)
      init_sphere_sdf(store_, cfg_.fields, pe_hyper_,
                      static_cast<T>(cfg_.sphere_radius), cfg_.sphere_iters,
                      static_cast<T>(cfg_.sphere_tol), rng_);
  }

  ParameterStore<T>& store() { return store_; }
  const ParameterStore<T>& store() const { return store_; }
  const Dataset<T>& dataset() const { return ds_; }
  const TrainConfig& config() const { return cfg_; }
  int64_t iteration() const { return iter_; }
  void set_iteration(int64_t it) {
    iter_ = it;
    set_alpha(it);
  }
  const std::vector<TrainLogRecord<T>>& log() const { return log_; }

  // Ablation hook: swap loss weights without rebuilding the trainer.
  void set_loss_weights(const LossWeights& w) { cfg_.weights = w; }

  const EncodingSchedule& pe_block() const { return pe_block_; }
  const EncodingSchedule& pe_point() const { return pe_point_; }
  const EncodingSchedule& pe_hyper() const { return pe_hyper_; }
  const EncodingSchedule& pe_color() const { return pe_color_; }

  // Cosine interpolation from 1 down to lr_decay over the run.
  double lr_factor(int64_t iter) const {
    if (cfg_.lr_decay >= 1.0 || cfg_.iterations <= 1) return 1.0;
    double p = std::min(1.0, static_cast<double>(iter) / (cfg_.iterations - 1));
    return cfg_.lr_decay +
           (1.0 - cfg_.lr_decay) * 0.5 * (1.0 + std::cos(M_PI * p));
  }

  T alpha_ratio(int64_t iter) const {
    int ramp = cfg_.ramp_iters();
    if (ramp <= 0) return T(1);
    return std::min(T(1), static_cast<T>(iter) / static_cast<T>(ramp));
  }

  // Camera for a frame under the current intrinsics and pose delta.
  Camera<T> camera(int frame, CameraRole role) const {
    Camera<T> cam = make_camera(ds_, frame, role);
    const Mat<T>& iv = store_.at(kIntrName).value;
    cam.intr.fx = iv(0, 0);
    cam.intr.fy = iv(1, 0);
    cam.intr.cx = iv(2, 0);
    cam.intr.cy = iv(3, 0);
    const Mat<T>& pv = store_.at(pose_param_name(frame)).value;
    cam.delta_rot = pv.col(0).head(3);
    cam.delta_trans = pv.col(0).tail(3);
    return cam;
  }

  Vec<T> deform_code(int frame) const {
    return store_.at(detail::deform_code_name(frame)).value.col(0);
  }

  // Frame choice, pixel selection, observations and sample depths, all
  // frozen at current parameter values.
  FrozenBatch<T> freeze_batch() {
    int frames = ds_.frame_count();
    int f = rng_.uniform_int(frames);
    for (int tries = 0; tries < frames && pool_[static_cast<size_t>(f)].empty();
         ++tries)
      f = rng_.uniform_int(frames);

    FrozenBatch<T> b;
    b.frame = f;
    Camera<T> cam = camera(f, CameraRole::Depth);
    const FrameRecord<T>& fr = ds_.frames[static_cast<size_t>(f)];
    int n = cfg_.rays_per_batch;

    std::vector<std::pair<int, int>> pix(static_cast<size_t>(n));
    b.px.resize(1, n);
    b.py.resize(1, n);
    b.color_obs.resize(3, n);
    b.depth_obs_s.resize(1, n);
    b.valid.resize(1, n);
    b.mask_obs.resize(1, n);
    for (int j = 0; j < n; ++j) {
      int x = rng_.uniform_int(ds_.intr_depth.width);
      int y = rng_.uniform_int(ds_.intr_depth.height);
      pix[static_cast<size_t>(j)] = {x, y};
      b.px(0, j) = static_cast<T>(x);
      b.py(0, j) = static_cast<T>(y);
      b.color_obs.col(j) = fr.color_at(x, y);
      T z = fr.depth_at(x, y);
      b.valid(0, j) = z > T(0) ? T(1) : T(0);
      b.depth_obs_s(0, j) =
          z > T(0) ? z * cam.depth_to_s(static_cast<T>(x), static_cast<T>(y)) : T(0);
      b.mask_obs(0, j) = fr.mask_at(x, y) ? T(1) : T(0);
    }

    auto rays = generate_rays(cam, pix, f);
    Vec<T> code = deform_code(f);
    auto sdf_fn = [&](const Mat<T>& p) {
      return fields_raw::sdf_at_observed(store_, cfg_.fields, p, code, pe_block_,
                                         pe_point_, pe_hyper_);
    };
    b.t = sample_rays(rays, cfg_.samples, sdf_fn, rng_);

    const auto& pool = pool_[static_cast<size_t>(f)];
    int m = pool.empty() ? 0 : cfg_.depth_points_per_batch;
    b.spx.resize(1, m);
    b.spy.resize(1, m);
    b.sz.resize(1, m);
    for (int j = 0; j < m; ++j) {
      auto [x, y] = pool[static_cast<size_t>(
          rng_.uniform_int(static_cast<int>(pool.size())))];
      b.spx(0, j) = static_cast<T>(x);
      b.spy(0, j) = static_cast<T>(y);
      b.sz(0, j) = fr.depth_at(x, y);
    }
    return b;
  }

  // Differentiable pass over a frozen batch; optionally accumulates
  // parameter gradients.
  EvalResult<T> evaluate(const FrozenBatch<T>& b, bool backward) {
    using ad::Var;
    ad::Tape<T> tape;
    store_.clear_bindings();
    CameraGraph<T> g = build_camera_graph(
        tape, store_, kIntrName, pose_param_name(b.frame),
        ds_.frames[static_cast<size_t>(b.frame)].base_pose);

    int n = static_cast<int>(b.px.cols());
    Var<T> dir = ray_dirs_graph(g, tape.constant(b.px), tape.constant(b.py));
    Var<T> origin = ad::rep_cols(g.origin, n);
    Var<T> dcode = store_.use(tape, detail::deform_code_name(b.frame));
    Var<T> acode = store_.use(tape, detail::appear_code_name(b.frame));

    render_ad::RenderResult<T> out = render_ad::render_bundle(
        tape, store_, cfg_.fields, pe_block_, pe_point_, pe_hyper_, pe_color_,
        origin, dir, b.t, dcode, acode);

    LossTerms<T> terms;
    terms.color = loss_color(tape, out.ray.color, b.color_obs, b.mask_obs);
    terms.depth = loss_depth(tape, out.ray.depth, b.depth_obs_s, b.mask_obs, b.valid);
    terms.mask = loss_mask(tape, out.ray.mask, b.mask_obs);
    terms.eikonal = loss_eikonal(tape, out.normal_obs);

    EvalResult<T> res;
    int m = static_cast<int>(b.spx.cols());
    res.depth_points = m;
    if (m > 0) {
      Var<T> sp = back_project_graph(g, tape.constant(b.spx),
                                     tape.constant(b.spy), tape.constant(b.sz));
      Var<T> code_rep = ad::rep_cols(dcode, m);
      Var<T> fwd =
          fields_ad::hmap_forward(tape, store_, cfg_.fields, sp, code_rep, pe_block_);
      Var<T> q =
          fields_ad::topo_coords(tape, store_, cfg_.fields, sp, code_rep, pe_point_);
      fields_ad::SdfOut<T> sd = fields_ad::sdf_eval(
          tape, store_, cfg_.fields, ad::vconcat({fwd, q}), pe_hyper_);
      terms.sdf = loss_sdf(sd.d);

      Var<T> n_canon = fields_ad::per_column_grad(tape, sd.d, fwd);
      auto jr = fields_ad::jacobian_rows(tape, fwd, sp);
      Var<T> vdir = ad::sub(sp, ad::rep_cols(g.origin, m));
      Var<T> v_canon = fields_ad::jacobian_apply(jr, vdir);
      terms.visible = loss_visible(tape, n_canon, v_canon);

      const Mat<T>& nv = n_canon.value();
      const Mat<T>& vv = v_canon.value();
      for (int j = 0; j < m; ++j)
        if (nv.col(j).dot(vv.col(j)) > T(0)) res.backfacing++;
    } else {
      terms.sdf = tape.constant(Mat<T>::Zero(1, 1));
      terms.visible = tape.constant(Mat<T>::Zero(1, 1));
    }

    auto [total, breakdown] = loss_total(terms, cfg_.weights);
    res.loss = breakdown;
    if (backward) store_.accumulate_grads(tape, total);
    return res;
  }

  TrainLogRecord<T> step() {
    set_alpha(iter_);
    TrainLogRecord<T> rec;
    try {
      FrozenBatch<T> b = freeze_batch();
      store_.zero_grad();
      EvalResult<T> r = evaluate(b, true);
      AdamConfig ac = adam_;
      const double base_lr = cfg_.lr * lr_factor(iter_);
      ac.lr = base_lr;
      store_.adam_step(ac, trainable_);
      ac.lr = base_lr * cfg_.s_lr_mult;
      store_.adam_step(ac, trainable_s_);
      // an empty subset means "all parameters" to adam_step; skip it when no
      // camera parameter is refined
      if (!trainable_cam_.empty() &&
          (cfg_.cam_refine_iters <= 0 || iter_ < cfg_.cam_refine_iters)) {
        ac.lr = base_lr * cfg_.cam_lr_mult;
        store_.adam_step(ac, trainable_cam_);
      }
      rec.frame = b.frame;
      rec.loss = r.loss;
      rec.backfacing = r.backfacing;
      rec.depth_points = r.depth_points;
    } catch (const Error& e) {
      throw Error("train iteration " + std::to_string(iter_) + ": " + e.what());
    }
    rec.iteration = iter_;
    rec.alpha_ratio = alpha_ratio(iter_);
    rec.s_scale = current_s_scale(store_);
    log_.push_back(rec);
    ++iter_;
    return rec;
  }

  // Runs to cfg.iterations; the callback sees every record (logging,
  // checkpoint cadence).
  void train(const std::function<void(const TrainLogRecord<T>&)>& on_record = {}) {
    while (iter_ < cfg_.iterations) {
      TrainLogRecord<T> rec = step();
      if (on_record) on_record(rec);
    }
  }

  // Aligns the coarse-to-fine encoding windows with an iteration count.
  void set_alpha(int64_t iter) {
    T r = alpha_ratio(iter);
    pe_block_.alpha = static_cast<double>(r) * pe_block_.bands;
    pe_point_.alpha = static_cast<double>(r) * pe_point_.bands;
    pe_hyper_.alpha = static_cast<double>(r) * pe_hyper_.bands;
    pe_color_.alpha = static_cast<double>(r) * pe_color_.bands;
  }

 private:
  Dataset<T> ds_;
  TrainConfig cfg_;
  Rng rng_;
  ParameterStore<T> store_;
  AdamConfig adam_;
  std::vector<std::string> trainable_;    // everything but the sharpness param
  std::vector<std::string> trainable_s_;    // sharpness param, separate lr
  std::vector<std::string> trainable_cam_;  // camera params, separate lr
  std::vector<std::vector<std::pair<int, int>>> pool_;
  EncodingSchedule pe_block_, pe_point_, pe_hyper_, pe_color_;
  int64_t iter_ = 0;
  std::vector<TrainLogRecord<T>> log_;
};

}  // namespace ndr
