#pragma once

// Supervision terms and the weighted objective. All reductions are means so
// the weights stay batch-size independent. Each term is a scalar tape var;
// the total aborts with the offending term's name on non-finite values.

#include <string>

#include "ndr/autodiff.hpp"
#include "ndr/common.hpp"
#include "ndr/render.hpp"

namespace ndr {

struct LossWeights {
  double mask = 0.1;
  double color = 1.0;
  double depth = 0.5;
  double eikonal = 0.1;
  double sdf = 0.5;
  double visible = 0.1;
};

// Masked per-channel-mean L1 between rendered and observed colors.
// c_hat: 3xN var; c_obs: 3xN; m_obs: 1xN in {0,1}.
template <class T>
ad::Var<T> loss_color(ad::Tape<T>& tape, ad::Var<T> c_hat, const Mat<T>& c_obs,
                      const Mat<T>& m_obs) {
  NDR_CHECK(c_hat.rows() == 3 && c_hat.cols() == c_obs.cols() &&
                c_obs.rows() == 3 && m_obs.cols() == c_obs.cols(),
            "loss_color: shape mismatch");
  ad::Var<T> diff = ad::sub(c_hat, tape.constant(c_obs));
  ad::Var<T> masked =
      ad::mul(diff, tape.constant(Mat<T>(m_obs.replicate(3, 1))));
  return ad::mean_all(ad::abs(masked));
}

// Masked L1 on ray-parameter depth; rays with valid(j) = 0 are excluded from
// the mean entirely (no value, no gradient).
template <class T>
ad::Var<T> loss_depth(ad::Tape<T>& tape, ad::Var<T> d_hat, const Mat<T>& d_obs,
                      const Mat<T>& m_obs, const Mat<T>& valid) {
  NDR_CHECK(d_hat.rows() == 1 && d_hat.cols() == d_obs.cols() &&
                m_obs.cols() == d_obs.cols() && valid.cols() == d_obs.cols(),
            "loss_depth: shape mismatch");
  T count = valid.sum();
  if (count <= T(0)) return tape.constant(Mat<T>::Zero(1, 1));
  Mat<T> gate = m_obs.cwiseProduct(valid);
  ad::Var<T> diff = ad::mul(ad::sub(d_hat, tape.constant(d_obs)),
                            tape.constant(gate));
  return ad::scalar_mul(ad::sum_all(ad::abs(diff)), T(1) / count);
}

// Binary cross entropy on accumulated opacity against the observed mask.
template <class T>
ad::Var<T> loss_mask(ad::Tape<T>& tape, ad::Var<T> m_hat, const Mat<T>& m_obs,
                     T eps = T(1e-5)) {
  NDR_CHECK(m_hat.rows() == 1 && m_hat.cols() == m_obs.cols(),
            "loss_mask: shape mismatch");
  ad::Var<T> p = ad::clamp(m_hat, eps, T(1) - eps);
  ad::Var<T> m = tape.constant(m_obs);
  ad::Var<T> one_minus_m =
      tape.constant(Mat<T>((T(1) - m_obs.array()).matrix()));
  ad::Var<T> ce = ad::add(
      ad::mul(m, ad::log(p)),
      ad::mul(one_minus_m, ad::log(ad::sub(tape.constant(Mat<T>::Ones(
                                               1, m_obs.cols())),
                                           p))));
  return ad::neg(ad::mean_all(ce));
}

// (|grad d| - 1)^2 over free-space samples; `n` holds per-sample SDF
// gradients (3xM).
template <class T>
ad::Var<T> loss_eikonal(ad::Tape<T>& tape, ad::Var<T> n) {
  NDR_CHECK(n.rows() == 3, "loss_eikonal: gradients must be 3xM");
  ad::Var<T> norm = ad::sqrt(ad::scalar_add(ad::sum_rows(ad::square(n)), T(1e-12)));
  ad::Var<T> ones = tape.constant(Mat<T>::Ones(1, n.cols()));
  return ad::mean_all(ad::square(ad::sub(norm, ones)));
}

// Mean |d| over surface points back-projected from depth.
template <class T>
ad::Var<T> loss_sdf(ad::Var<T> d) {
  NDR_CHECK(d.rows() == 1, "loss_sdf: expects a 1xM row");
  return ad::mean_all(ad::abs(d));
}

// Penalizes surface normals facing along the viewing direction (a visible
// surface point must face the camera). Both inputs are normalized, so the
// term is invariant to positive rescaling.
template <class T>
ad::Var<T> loss_visible(ad::Tape<T>& tape, ad::Var<T> n, ad::Var<T> v) {
  NDR_CHECK(n.rows() == 3 && v.rows() == 3 && n.cols() == v.cols(),
            "loss_visible: shape mismatch");
  ad::Var<T> nh = render_ad::normalize_cols(n);
  ad::Var<T> vh = render_ad::normalize_cols(v);
  ad::Var<T> dot = ad::sum_rows(ad::mul(nh, vh));
  return ad::mean_all(ad::clamp_min(dot, T(0)));
}

template <class T>
struct LossTerms {
  ad::Var<T> color, depth, mask, eikonal, sdf, visible;
};

template <class T>
struct LossBreakdown {
  T color = 0, depth = 0, mask = 0, eikonal = 0, sdf = 0, visible = 0;
  T total = 0;
};

// Weighted sum; throws naming the first non-finite term.
template <class T>
std::pair<ad::Var<T>, LossBreakdown<T>> loss_total(const LossTerms<T>& terms,
                                                   const LossWeights& w) {
  auto value = [](ad::Var<T> v, const char* name) {
    T x = v.value()(0, 0);
    NDR_CHECK(std::isfinite(x), std::string("loss_total: non-finite term ") + name);
    return x;
  };
  LossBreakdown<T> b;
  b.color = value(terms.color, "color");
  b.depth = value(terms.depth, "depth");
  b.mask = value(terms.mask, "mask");
  b.eikonal = value(terms.eikonal, "eikonal");
  b.sdf = value(terms.sdf, "sdf");
  b.visible = value(terms.visible, "visible");

  ad::Var<T> total = ad::add(
      ad::add(ad::add(ad::scalar_mul(terms.color, static_cast<T>(w.color)),
                      ad::scalar_mul(terms.depth, static_cast<T>(w.depth))),
              ad::add(ad::scalar_mul(terms.mask, static_cast<T>(w.mask)),
                      ad::scalar_mul(terms.eikonal, static_cast<T>(w.eikonal)))),
      ad::add(ad::scalar_mul(terms.sdf, static_cast<T>(w.sdf)),
              ad::scalar_mul(terms.visible, static_cast<T>(w.visible))));
  b.total = static_cast<T>(w.color) * b.color + static_cast<T>(w.depth) * b.depth +
            static_cast<T>(w.mask) * b.mask +
            static_cast<T>(w.eikonal) * b.eikonal +
            static_cast<T>(w.sdf) * b.sdf +
            static_cast<T>(w.visible) * b.visible;
  return {total, b};
}

}  // namespace ndr
