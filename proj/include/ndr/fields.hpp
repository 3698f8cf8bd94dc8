#pragma once

// Deformation and canonical networks: the bijective map (axis-split invertible
// blocks), the topology network, the canonical SDF with geometry feature, the
// appearance network, and per-frame latent codes.
//
// Each block picks an axis, predicts a displacement along it from the
// in-plane coordinates, then a rigid in-plane motion (rotation + translation)
// from the displaced axis coordinate. Both stages are conditioned on the
// frame's deformation code and invert in closed form, so the composed map has
// an exact algebraic inverse.

#include <array>
#include <string>
#include <vector>

#include "ndr/autodiff.hpp"
#include "ndr/common.hpp"
#include "ndr/encoding.hpp"
#include "ndr/mlp.hpp"
#include "ndr/params.hpp"

namespace ndr {

struct FieldsConfig {
  int topo_dim = 2;           // m
  int num_blocks = 3;
  int deform_code_dim = 64;
  int appear_code_dim = 256;
  int geo_feature_dim = 256;

  int block_hidden_layers = 2, block_hidden_width = 64;
  int fq_hidden_layers = 7, fq_hidden_width = 64;
  int fd_hidden_layers = 8, fd_hidden_width = 256;
  int fc_hidden_layers = 4, fc_hidden_width = 256;

  int pe_bands_block = 4;  // inside bijective blocks
  int pe_bands_point = 6;  // F_q input
  int pe_bands_hyper = 6;  // F_d input
  int pe_bands_color = 4;  // F_c position input

  MlpSpec block_a_spec() const {
    return MlpSpec{2 * (1 + 2 * pe_bands_block) + deform_code_dim, 1,
                   block_hidden_layers, block_hidden_width, Activation::Tanh,
                   0.0};
  }
  MlpSpec block_b_spec() const {
    return MlpSpec{1 * (1 + 2 * pe_bands_block) + deform_code_dim, 3,
                   block_hidden_layers, block_hidden_width, Activation::Tanh,
                   0.0};
  }
  MlpSpec fq_spec() const {
    return MlpSpec{3 * (1 + 2 * pe_bands_point) + deform_code_dim, topo_dim,
                   fq_hidden_layers, fq_hidden_width, Activation::Tanh, 0.0};
  }
  MlpSpec fd_spec() const {
    return MlpSpec{(3 + topo_dim) * (1 + 2 * pe_bands_hyper),
                   1 + geo_feature_dim, fd_hidden_layers, fd_hidden_width,
                   Activation::Softplus100, 1.0};
  }
  MlpSpec fc_spec() const {
    return MlpSpec{3 * (1 + 2 * pe_bands_color) + 3 + 3 + geo_feature_dim +
                       appear_code_dim,
                   3, fc_hidden_layers, fc_hidden_width, Activation::Tanh, 1.0};
  }

  // Block axis order is fixed cyclic: w (z), then v (y), then u (x).
  int block_axis(int block) const { return (2 - block % 3 + 3) % 3; }
};

namespace detail {
inline std::string block_a_name(int b) {
  return "fh.b" + std::to_string(b) + ".a";
}
inline std::string block_b_name(int b) {
  return "fh.b" + std::to_string(b) + ".b";
}
inline std::string deform_code_name(int frame) {
  return "code.deform." + std::to_string(frame);
}
inline std::string appear_code_name(int frame) {
  return "code.appear." + std::to_string(frame);
}
}  // namespace detail

// Allocates all field parameters. Block sub-network and F_q final layers are
// zero-initialized, so the deformation starts as the exact identity.
template <class T>
void fields_init(ParameterStore<T>& store, const FieldsConfig& cfg, int frames,
                 Rng& rng) {
  for (int b = 0; b < cfg.num_blocks; ++b) {
    mlp_init(store, detail::block_a_name(b), cfg.block_a_spec(), rng);
    mlp_init(store, detail::block_b_name(b), cfg.block_b_spec(), rng);
  }
  mlp_init(store, "fq", cfg.fq_spec(), rng);
  mlp_init(store, "fd", cfg.fd_spec(), rng);
  mlp_init(store, "fc", cfg.fc_spec(), rng);
  for (int i = 0; i < frames; ++i) {
    store.add(detail::deform_code_name(i), cfg.deform_code_dim, 1);
    store.add(detail::appear_code_name(i), cfg.appear_code_dim, 1);
  }
}

// ---------------------------------------------------------------------------
// Tape versions. Points are 3xN, codes (c x 1), outputs per column.

namespace fields_ad {

template <class T>
struct BlockStage {
  ad::Var<T> theta, du, dv;  // 1xN each
};

// theta and in-plane translation from the displaced axis coordinate.
template <class T>
BlockStage<T> block_stage_b(ad::Tape<T>& tape, ParameterStore<T>& store,
                            const FieldsConfig& cfg, int block, ad::Var<T> w,
                            ad::Var<T> code_rep, const EncodingSchedule& pe) {
  using ad::Var;
  Var<T> in = ad::vconcat({positional_encode(w, pe), code_rep});
  Var<T> out = mlp_forward(tape, store, detail::block_b_name(block),
                           cfg.block_b_spec(), in);
  BlockStage<T> s;
  // bounded rotation angle, one wrap at most
  s.theta = ad::scalar_mul(ad::tanh(ad::rows(out, 0, 1)), static_cast<T>(M_PI));
  s.du = ad::rows(out, 1, 1);
  s.dv = ad::rows(out, 2, 1);
  return s;
}

template <class T>
ad::Var<T> block_delta_w(ad::Tape<T>& tape, ParameterStore<T>& store,
                         const FieldsConfig& cfg, int block, ad::Var<T> u,
                         ad::Var<T> v, ad::Var<T> code_rep,
                         const EncodingSchedule& pe) {
  ad::Var<T> uv = ad::vconcat({u, v});
  ad::Var<T> in = ad::vconcat({positional_encode(uv, pe), code_rep});
  return mlp_forward(tape, store, detail::block_a_name(block),
                     cfg.block_a_spec(), in);
}

template <class T>
ad::Var<T> assemble_axes(std::array<ad::Var<T>, 3> rows_by_axis) {
  return ad::vconcat({rows_by_axis[0], rows_by_axis[1], rows_by_axis[2]});
}

template <class T>
ad::Var<T> block_forward(ad::Tape<T>& tape, ParameterStore<T>& store,
                         const FieldsConfig& cfg, int block, ad::Var<T> p,
                         ad::Var<T> code_rep, const EncodingSchedule& pe) {
  using ad::Var;
  int a = cfg.block_axis(block);
  int ui = (a + 1) % 3, vi = (a + 2) % 3;
  Var<T> w = ad::rows(p, a, 1), u = ad::rows(p, ui, 1), v = ad::rows(p, vi, 1);

  Var<T> wp = ad::add(w, block_delta_w(tape, store, cfg, block, u, v, code_rep, pe));
  BlockStage<T> s = block_stage_b(tape, store, cfg, block, wp, code_rep, pe);
  Var<T> c = ad::cos(s.theta), sn = ad::sin(s.theta);
  Var<T> up = ad::add(ad::sub(ad::mul(c, u), ad::mul(sn, v)), s.du);
  Var<T> vp = ad::add(ad::add(ad::mul(sn, u), ad::mul(c, v)), s.dv);

  std::array<Var<T>, 3> out;
  out[a] = wp;
  out[ui] = up;
  out[vi] = vp;
  return assemble_axes(out);
}

// Exact algebraic inverse of block_forward: recompute the in-plane motion
// from w' (which the forward left untouched by stage B), undo it, then undo
// the axis displacement.
template <class T>
ad::Var<T> block_inverse(ad::Tape<T>& tape, ParameterStore<T>& store,
                         const FieldsConfig& cfg, int block, ad::Var<T> pp,
                         ad::Var<T> code_rep, const EncodingSchedule& pe) {
  using ad::Var;
  int a = cfg.block_axis(block);
  int ui = (a + 1) % 3, vi = (a + 2) % 3;
  Var<T> wp = ad::rows(pp, a, 1), up = ad::rows(pp, ui, 1),
         vp = ad::rows(pp, vi, 1);

  BlockStage<T> s = block_stage_b(tape, store, cfg, block, wp, code_rep, pe);
  Var<T> c = ad::cos(s.theta), sn = ad::sin(s.theta);
  Var<T> du = ad::sub(up, s.du), dv = ad::sub(vp, s.dv);
  Var<T> u = ad::add(ad::mul(c, du), ad::mul(sn, dv));
  Var<T> v = ad::sub(ad::mul(c, dv), ad::mul(sn, du));
  Var<T> w = ad::sub(wp, block_delta_w(tape, store, cfg, block, u, v, code_rep, pe));

  std::array<Var<T>, 3> out;
  out[a] = w;
  out[ui] = u;
  out[vi] = v;
  return assemble_axes(out);
}

// Observation -> canonical 3D position (composition of all blocks).
template <class T>
ad::Var<T> hmap_forward(ad::Tape<T>& tape, ParameterStore<T>& store,
                        const FieldsConfig& cfg, ad::Var<T> p,
                        ad::Var<T> code_rep, const EncodingSchedule& pe) {
  NDR_CHECK(cfg.num_blocks > 0, "hmap_forward: no blocks configured");
  ad::Var<T> x = p;
  for (int b = 0; b < cfg.num_blocks; ++b)
    x = block_forward(tape, store, cfg, b, x, code_rep, pe);
  return x;
}

template <class T>
ad::Var<T> hmap_inverse(ad::Tape<T>& tape, ParameterStore<T>& store,
                        const FieldsConfig& cfg, ad::Var<T> p,
                        ad::Var<T> code_rep, const EncodingSchedule& pe) {
  ad::Var<T> x = p;
  for (int b = cfg.num_blocks - 1; b >= 0; --b)
    x = block_inverse(tape, store, cfg, b, x, code_rep, pe);
  return x;
}

// Topology coordinates q(p_i) of observed points.
template <class T>
ad::Var<T> topo_coords(ad::Tape<T>& tape, ParameterStore<T>& store,
                       const FieldsConfig& cfg, ad::Var<T> p,
                       ad::Var<T> code_rep, const EncodingSchedule& pe_point) {
  ad::Var<T> in = ad::vconcat({positional_encode(p, pe_point), code_rep});
  return mlp_forward(tape, store, "fq", cfg.fq_spec(), in);
}

template <class T>
struct SdfOut {
  ad::Var<T> d;  // 1xN signed distance
  ad::Var<T> z;  // feat x N geometry feature
};

template <class T>
SdfOut<T> sdf_eval(ad::Tape<T>& tape, ParameterStore<T>& store,
                   const FieldsConfig& cfg, ad::Var<T> x,
                   const EncodingSchedule& pe_hyper) {
  ad::Var<T> out =
      mlp_forward(tape, store, "fd", cfg.fd_spec(), positional_encode(x, pe_hyper));
  return SdfOut<T>{ad::rows(out, 0, 1), ad::rows(out, 1, cfg.geo_feature_dim)};
}

// Sigmoid-bounded color from canonical position, normal, canonical view
// direction, geometry feature and appearance code.
template <class T>
ad::Var<T> color_eval(ad::Tape<T>& tape, ParameterStore<T>& store,
                      const FieldsConfig& cfg, ad::Var<T> p, ad::Var<T> n,
                      ad::Var<T> vp, ad::Var<T> z, ad::Var<T> psi_rep,
                      const EncodingSchedule& pe_color) {
  ad::Var<T> in =
      ad::vconcat({positional_encode(p, pe_color), n, vp, z, psi_rep});
  return ad::sigmoid(mlp_forward(tape, store, "fc", cfg.fc_spec(), in));
}

// Per-sample gradient of a scalar-per-column output w.r.t. an upstream 3xN
// node, holding all other paths fixed. Returns a 3xN differentiable var.
template <class T>
ad::Var<T> per_column_grad(ad::Tape<T>& tape, ad::Var<T> scalar_row,
                           ad::Var<T> wrt) {
  ad::Var<T> s = ad::sum_all(scalar_row);
  return tape.grad(s, {wrt})[0];
}

// Rows of the Jacobian d(canonical p)/d(observed p_i): three 3xN vars; row r,
// column j holds the gradient of output component r for sample j.
template <class T>
std::array<ad::Var<T>, 3> jacobian_rows(ad::Tape<T>& tape, ad::Var<T> p_canon,
                                        ad::Var<T> p_obs) {
  std::array<ad::Var<T>, 3> out;
  for (int r = 0; r < 3; ++r)
    out[r] = per_column_grad(tape, ad::rows(p_canon, r, 1), p_obs);
  return out;
}

// v_p = J v per sample: rows[r] dot v, stacked to 3xN.
template <class T>
ad::Var<T> jacobian_apply(const std::array<ad::Var<T>, 3>& j_rows,
                          ad::Var<T> v) {
  return ad::vconcat({ad::sum_rows(ad::mul(j_rows[0], v)),
                      ad::sum_rows(ad::mul(j_rows[1], v)),
                      ad::sum_rows(ad::mul(j_rows[2], v))});
}

}  // namespace fields_ad

// ---------------------------------------------------------------------------
// Raw (tapeless) mirrors, used by sampling, meshing and metrics.

namespace fields_raw {

template <class T>
Mat<T> block_forward(const ParameterStore<T>& store, const FieldsConfig& cfg,
                     int block, const Mat<T>& p, const Vec<T>& code,
                     const EncodingSchedule& pe) {
  int a = cfg.block_axis(block);
  int ui = (a + 1) % 3, vi = (a + 2) % 3;
  int n = static_cast<int>(p.cols());
  Mat<T> code_rep = code.replicate(1, n);

  Mat<T> uv(2, n);
  uv.row(0) = p.row(ui);
  uv.row(1) = p.row(vi);
  Mat<T> a_in(cfg.block_a_spec().input, n);
  a_in << positional_encode(uv, pe), code_rep;
  Mat<T> wp = p.row(a) + mlp_eval(store, detail::block_a_name(block),
                                  cfg.block_a_spec(), a_in);

  Mat<T> b_in(cfg.block_b_spec().input, n);
  b_in << positional_encode(wp, pe), code_rep;
  Mat<T> b_out =
      mlp_eval(store, detail::block_b_name(block), cfg.block_b_spec(), b_in);
  Eigen::Array<T, 1, Eigen::Dynamic> t0 = b_out.row(0).array();
  Eigen::Array<T, 1, Eigen::Dynamic> theta =
      (T(1) - T(2) / (T(1) + (T(2) * t0).exp())) * static_cast<T>(M_PI);
  Eigen::Array<T, 1, Eigen::Dynamic> c = theta.cos(), s = theta.sin();

  Mat<T> out(3, n);
  out.row(a) = wp;
  out.row(ui) = (c * p.row(ui).array() - s * p.row(vi).array()).matrix() +
                b_out.row(1);
  out.row(vi) = (s * p.row(ui).array() + c * p.row(vi).array()).matrix() +
                b_out.row(2);
  return out;
}

template <class T>
Mat<T> block_inverse(const ParameterStore<T>& store, const FieldsConfig& cfg,
                     int block, const Mat<T>& pp, const Vec<T>& code,
                     const EncodingSchedule& pe) {
  int a = cfg.block_axis(block);
  int ui = (a + 1) % 3, vi = (a + 2) % 3;
  int n = static_cast<int>(pp.cols());
  Mat<T> code_rep = code.replicate(1, n);

  Mat<T> wp = pp.row(a);
  Mat<T> b_in(cfg.block_b_spec().input, n);
  b_in << positional_encode(wp, pe), code_rep;
  Mat<T> b_out =
      mlp_eval(store, detail::block_b_name(block), cfg.block_b_spec(), b_in);
  Eigen::Array<T, 1, Eigen::Dynamic> t0 = b_out.row(0).array();
  Eigen::Array<T, 1, Eigen::Dynamic> theta =
      (T(1) - T(2) / (T(1) + (T(2) * t0).exp())) * static_cast<T>(M_PI);
  Eigen::Array<T, 1, Eigen::Dynamic> c = theta.cos(), s = theta.sin();

  Eigen::Array<T, 1, Eigen::Dynamic> du = pp.row(ui) - b_out.row(1);
  Eigen::Array<T, 1, Eigen::Dynamic> dv = pp.row(vi) - b_out.row(2);
  Mat<T> uv(2, n);
  uv.row(0) = (c * du + s * dv).matrix();
  uv.row(1) = (c * dv - s * du).matrix();

  Mat<T> a_in(cfg.block_a_spec().input, n);
  a_in << positional_encode(uv, pe), code_rep;
  Mat<T> w = wp - mlp_eval(store, detail::block_a_name(block),
                           cfg.block_a_spec(), a_in);

  Mat<T> out(3, n);
  out.row(a) = w;
  out.row(ui) = uv.row(0);
  out.row(vi) = uv.row(1);
  return out;
}

template <class T>
Mat<T> hmap_forward(const ParameterStore<T>& store, const FieldsConfig& cfg,
                    const Mat<T>& p, const Vec<T>& code,
                    const EncodingSchedule& pe) {
  Mat<T> x = p;
  for (int b = 0; b < cfg.num_blocks; ++b)
    x = block_forward(store, cfg, b, x, code, pe);
  return x;
}

template <class T>
Mat<T> hmap_inverse(const ParameterStore<T>& store, const FieldsConfig& cfg,
                    const Mat<T>& p, const Vec<T>& code,
                    const EncodingSchedule& pe) {
  Mat<T> x = p;
  for (int b = cfg.num_blocks - 1; b >= 0; --b)
    x = block_inverse(store, cfg, b, x, code, pe);
  return x;
}

// Frame-to-frame correspondence G_ij = H_j^-1 . H_i.
template <class T>
Mat<T> correspondence(const ParameterStore<T>& store, const FieldsConfig& cfg,
                      const Mat<T>& p_i, const Vec<T>& code_i,
                      const Vec<T>& code_j, const EncodingSchedule& pe) {
  return hmap_inverse(store, cfg, hmap_forward(store, cfg, p_i, code_i, pe),
                      code_j, pe);
}

template <class T>
Mat<T> topo_coords(const ParameterStore<T>& store, const FieldsConfig& cfg,
                   const Mat<T>& p, const Vec<T>& code,
                   const EncodingSchedule& pe_point) {
  int n = static_cast<int>(p.cols());
  Mat<T> in(cfg.fq_spec().input, n);
  in << positional_encode(p, pe_point), code.replicate(1, n);
  return mlp_eval(store, "fq", cfg.fq_spec(), in);
}

// Hyper-space coordinates [H(p), q(p)] of observed points; (3+m) x N.
template <class T>
Mat<T> deform_to_hyper(const ParameterStore<T>& store, const FieldsConfig& cfg,
                       const Mat<T>& p, const Vec<T>& code,
                       const EncodingSchedule& pe_block,
                       const EncodingSchedule& pe_point) {
  int n = static_cast<int>(p.cols());
  Mat<T> x(3 + cfg.topo_dim, n);
  x.topRows(3) = hmap_forward(store, cfg, p, code, pe_block);
  x.bottomRows(cfg.topo_dim) = topo_coords(store, cfg, p, code, pe_point);
  return x;
}

// SDF value (row 0 of F_d) at hyper points.
template <class T>
Mat<T> sdf_value(const ParameterStore<T>& store, const FieldsConfig& cfg,
                 const Mat<T>& x, const EncodingSchedule& pe_hyper) {
  Mat<T> out = mlp_eval(store, "fd", cfg.fd_spec(), positional_encode(x, pe_hyper));
  return out.topRows(1);
}

// SDF at observed points through the full deformation; 1 x N.
template <class T>
Mat<T> sdf_at_observed(const ParameterStore<T>& store, const FieldsConfig& cfg,
                       const Mat<T>& p, const Vec<T>& code,
                       const EncodingSchedule& pe_block,
                       const EncodingSchedule& pe_point,
                       const EncodingSchedule& pe_hyper) {
  return sdf_value(store, cfg,
                   deform_to_hyper(store, cfg, p, code, pe_block, pe_point),
                   pe_hyper);
}

}  // namespace fields_raw
}  // namespace ndr
