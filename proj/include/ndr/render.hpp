#pragma once

// Differentiable volume rendering: SDF-to-alpha conversion, transmittance
// accumulation and color/depth/mask integration over frozen sample depths.
// The sample layout is samples-as-rows (K x N); flattened network batches use
// column index ray*K + sample.

#include <string>

#include "ndr/autodiff.hpp"
#include "ndr/common.hpp"
#include "ndr/fields.hpp"
#include "ndr/sampling.hpp"
#include "ndr/se3.hpp"

namespace ndr {

// Global SDF sharpness, stored as a log so positivity is unconstrained.
inline const char* kLogSScaleName = "render.log_s_scale";

template <class T>
void render_init(ParameterStore<T>& store, double s_scale_init = 20.0) {
  NDR_CHECK(s_scale_init > 0, "render_init: s_scale must be positive");
  store.add(kLogSScaleName, 1, 1).value(0, 0) =
      static_cast<T>(std::log(s_scale_init));
}

template <class T>
T current_s_scale(const ParameterStore<T>& store) {
  return std::exp(store.at(kLogSScaleName).value(0, 0));
}

namespace render_ad {

// Unit-normalize columns of a 3xN var (epsilon-guarded).
template <class T>
ad::Var<T> normalize_cols(ad::Var<T> v) {
  ad::Var<T> n2 = ad::sum_rows(ad::square(v));
  ad::Var<T> inv = ad::sqrt(ad::scalar_add(n2, T(1e-12)));
  return ad::div(v, ad::rep_rows(inv, static_cast<int>(v.rows())));
}

template <class T>
struct Integrated {
  ad::Var<T> alpha;    // (K-1) x N
  ad::Var<T> trans;    // (K-1) x N, T_0 = 1 per column
  ad::Var<T> weights;  // (K-1) x N, T_k alpha_k
  ad::Var<T> color;    // 3 x N
  ad::Var<T> depth;    // 1 x N
  ad::Var<T> mask;     // 1 x N
};

// d_flat: 1 x NK signed distances in ray-major sample order; colors 3 x NK;
// t: K x N frozen sample depths; s_scale: 1x1 positive var.
template <class T>
Integrated<T> integrate_sdf(ad::Tape<T>& tape, ad::Var<T> d_flat,
                            ad::Var<T> colors, const Mat<T>& t,
                            ad::Var<T> s_scale) {
  int k = static_cast<int>(t.rows()), n = static_cast<int>(t.cols());
  NDR_CHECK(k >= 2, "integrate_sdf: need at least two samples");
  NDR_CHECK(d_flat.rows() == 1 && d_flat.cols() == Eigen::Index(k) * n,
            "integrate_sdf: sdf shape");
  NDR_CHECK(colors.rows() == 3 && colors.cols() == Eigen::Index(k) * n,
            "integrate_sdf: color shape");

  using ad::Var;
  Var<T> d = ad::reshape(d_flat, k, n);
  Var<T> sd = ad::mul(d, ad_se3::rep_scalar(s_scale, k, n));
  Var<T> a = ad::rows(sd, 0, k - 1);
  Var<T> b = ad::rows(sd, 1, k - 1);
  // log(1 - alpha) = log Phi(s d_{k+1}) - log Phi(s d_k), clamped to <= 0
  Var<T> log_one_minus =
      ad::clamp_max(ad::sub(ad::softplus(ad::neg(a)), ad::softplus(ad::neg(b))),
                    T(0));
  Integrated<T> out;
  out.alpha = ad::sub(tape.constant(Mat<T>::Ones(k - 1, n)),
                      ad::exp(log_one_minus));
  out.trans = ad::exp(ad::cumsum_excl_rows(log_one_minus));
  out.weights = ad::mul(out.trans, out.alpha);

  // interval midpoints: the expected crossing position for a linear SDF,
  // avoiding the near-bias of the left endpoint at coarse sampling
  Mat<T> t_mid = (t.topRows(k - 1) + t.bottomRows(k - 1)) / T(2);
  out.depth = ad::sum_rows(ad::mul(out.weights, tape.constant(t_mid)));
  out.mask = ad::sum_rows(out.weights);

  // pad a zero weight for the last sample, flatten to ray-major order
  Var<T> w_full =
      ad::vconcat({out.weights, tape.constant(Mat<T>::Zero(1, n))});
  Var<T> w_flat = ad::reshape(w_full, 1, k * n);
  out.color = ad::sum_col_groups(ad::mul(colors, ad::rep_rows(w_flat, 3)), k);
  return out;
}

template <class T>
struct RenderResult {
  Integrated<T> ray;       // per-ray integrated quantities
  ad::Var<T> points;       // 3 x NK observed sample points
  ad::Var<T> hyper;        // (3+m) x NK hyper coordinates
  ad::Var<T> sdf;          // 1 x NK
  ad::Var<T> normal_obs;   // 3 x NK, gradient of d w.r.t. observed point
  ad::Var<T> view_canon;   // 3 x NK, deformed (unnormalized) view direction
  int samples_per_ray = 0;
  int rays = 0;
};

// Full differentiable pipeline for one frame's ray batch. `origin` and `dir`
// are 3xN (constants or camera-graph outputs), `t` the frozen sample depths,
// codes are column vars (replicated internally).
template <class T>
RenderResult<T> render_bundle(ad::Tape<T>& tape, ParameterStore<T>& store,
                              const FieldsConfig& cfg,
                              const EncodingSchedule& pe_block,
                              const EncodingSchedule& pe_point,
                              const EncodingSchedule& pe_hyper,
                              const EncodingSchedule& pe_color,
                              ad::Var<T> origin, ad::Var<T> dir,
                              const Mat<T>& t, ad::Var<T> deform_code,
                              ad::Var<T> appear_code) {
  using ad::Var;
  int k = static_cast<int>(t.rows()), n = static_cast<int>(t.cols());
  NDR_CHECK(origin.rows() == 3 && origin.cols() == n, "render_bundle: origins");
  NDR_CHECK(dir.rows() == 3 && dir.cols() == n, "render_bundle: directions");
  int nk = n * k;

  Mat<T> t_flat = Eigen::Map<const Mat<T>>(t.data(), 1, nk);
  Var<T> tf = ad::rep_rows(tape.constant(t_flat), 3);
  Var<T> o_rep = ad::rep_each_col(origin, k);
  Var<T> d_rep = ad::rep_each_col(dir, k);
  Var<T> p = ad::add(o_rep, ad::mul(d_rep, tf));

  Var<T> code_rep = ad::rep_cols(deform_code, nk);
  Var<T> psi_rep = ad::rep_cols(appear_code, nk);

  Var<T> fwd = fields_ad::hmap_forward(tape, store, cfg, p, code_rep, pe_block);
  Var<T> q = fields_ad::topo_coords(tape, store, cfg, p, code_rep, pe_point);
  Var<T> x = ad::vconcat({fwd, q});
  fields_ad::SdfOut<T> sd = fields_ad::sdf_eval(tape, store, cfg, x, pe_hyper);

  // canonical normal for shading, observation normal for the Eikonal term
  Var<T> n_canon = fields_ad::per_column_grad(tape, sd.d, fwd);
  Var<T> n_obs = fields_ad::per_column_grad(tape, sd.d, p);
  auto jr = fields_ad::jacobian_rows(tape, fwd, p);
  Var<T> v_canon = fields_ad::jacobian_apply(jr, d_rep);

  Var<T> colors = fields_ad::color_eval(
      tape, store, cfg, fwd, normalize_cols(n_canon), normalize_cols(v_canon),
      sd.z, psi_rep, pe_color);

  Var<T> s_scale = ad::exp(store.use(tape, kLogSScaleName));

  RenderResult<T> out;
  out.ray = integrate_sdf(tape, sd.d, colors, t, s_scale);
  out.points = p;
  out.hyper = x;
  out.sdf = sd.d;
  out.normal_obs = n_obs;
  out.view_canon = v_canon;
  out.samples_per_ray = k;
  out.rays = n;
  return out;
}

}  // namespace render_ad
}  // namespace ndr
