#pragma once

// Windowed sinusoidal positional encoding with a coarse-to-fine schedule.
// Band k carries weight w_k(alpha) = (1 - cos(pi * clamp(alpha - k, 0, 1))) / 2,
// so alpha = 0 closes every band and alpha = L opens the full encoding.

#include <cmath>
#include <vector>

#include "ndr/autodiff.hpp"
#include "ndr/common.hpp"

namespace ndr {

struct EncodingSchedule {
  int bands = 0;        // L
  double alpha = 0.0;   // in [0, L]

  double window(int k) const {
    double a = alpha - k;
    if (a < 0) a = 0;
    if (a > 1) a = 1;
    return (1.0 - std::cos(M_PI * a)) / 2.0;
  }

  // Linear ramp from 0 to L over the first `ramp_iters` iterations.
  static double alpha_at(int iter, int ramp_iters, int bands) {
    if (ramp_iters <= 0) return bands;
    double a = static_cast<double>(bands) * iter / ramp_iters;
    return a > bands ? bands : a;
  }

  int encoded_dim(int input_dim) const { return input_dim * (1 + 2 * bands); }
};

// Raw (tapeless) encoding of a d x N batch -> d(1+2L) x N.
template <class T>
Mat<T> positional_encode(const Mat<T>& x, const EncodingSchedule& s) {
  Mat<T> out(x.rows() * (1 + 2 * s.bands), x.cols());
  out.topRows(x.rows()) = x;
  if (s.bands == 0) return out;
  // only the base octave calls libm; higher octaves follow from double-angle
  // identities, which dominates batched evaluation cost otherwise
  using Arr = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic>;
  Arr sk = (x.array() * static_cast<T>(M_PI)).sin();
  Arr ck = (x.array() * static_cast<T>(M_PI)).cos();
  Eigen::Index r = x.rows();
  for (int k = 0; k < s.bands; ++k) {
    T w = static_cast<T>(s.window(k));
    out.middleRows(r, x.rows()) = (sk * w).matrix();
    out.middleRows(r + x.rows(), x.rows()) = (ck * w).matrix();
    r += 2 * x.rows();
    if (k + 1 < s.bands) {
      Arr s2 = T(2) * sk * ck;
      ck = ck * ck - sk * sk;
      sk = s2;
    }
  }
  return out;
}

template <class T>
ad::Var<T> positional_encode(ad::Var<T> x, const EncodingSchedule& s) {
  std::vector<ad::Var<T>> parts;
  parts.push_back(x);
  if (s.bands > 0) {
    // mirror the raw version: base-octave trig, double-angle recurrences above
    ad::Var<T> xs = ad::scalar_mul(x, static_cast<T>(M_PI));
    ad::Var<T> sk = ad::sin(xs), ck = ad::cos(xs);
    for (int k = 0; k < s.bands; ++k) {
      T w = static_cast<T>(s.window(k));
      parts.push_back(ad::scalar_mul(sk, w));
      parts.push_back(ad::scalar_mul(ck, w));
      if (k + 1 < s.bands) {
        ad::Var<T> s2 = ad::scalar_mul(ad::mul(sk, ck), T(2));
        ck = ad::sub(ad::mul(ck, ck), ad::mul(sk, sk));
        sk = s2;
      }
    }
  }
  return ad::vconcat(std::span<const ad::Var<T>>(parts));
}

}  // namespace ndr
