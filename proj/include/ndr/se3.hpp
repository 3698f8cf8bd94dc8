#pragma once

// Axis-angle rotations and rigid transforms, raw and on-tape. The on-tape
// variant is built from analytic even-series functions of theta^2 so it is
// smooth through the zero rotation (pose deltas start at exactly zero).

#include "ndr/autodiff.hpp"
#include "ndr/common.hpp"

namespace ndr {

template <class T>
Mat3<T> skew(const Vec3<T>& w) {
  Mat3<T> s;
  s << T(0), -w.z(), w.y(), w.z(), T(0), -w.x(), -w.y(), w.x(), T(0);
  return s;
}

template <class T>
Mat3<T> rodrigues(const Vec3<T>& w) {
  T t = w.squaredNorm();
  T f = static_cast<T>(ad::detail::series_eval(ad::SeriesFn::SincSq, t));
  T g = static_cast<T>(ad::detail::series_eval(ad::SeriesFn::CoscSq, t));
  Mat3<T> s = skew(w);
  return Mat3<T>::Identity() + f * s + g * (s * s);
}

// Log map: rotation matrix -> axis-angle vector.
template <class T>
Vec3<T> rotation_log(const Mat3<T>& r) {
  T c = (r.trace() - T(1)) / T(2);
  c = std::min(T(1), std::max(T(-1), c));
  T angle = std::acos(c);
  Vec3<T> axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  T s = axis.norm();
  if (s < T(1e-10)) {
    if (angle < T(1e-6)) return Vec3<T>::Zero();
    // angle near pi: recover axis from the symmetric part
    Vec3<T> a;
    Mat3<T> m = (r + Mat3<T>::Identity()) / T(2);
    a = m.diagonal().cwiseMax(T(0)).cwiseSqrt();
    if (a.norm() < T(1e-10)) return Vec3<T>::Zero();
    return angle * a / a.norm();
  }
  return (angle / s) * axis;
}

template <class T>
T rotation_angle_between(const Mat3<T>& a, const Mat3<T>& b) {
  return rotation_log<T>(a.transpose() * b).norm();
}

// Rigid transform, world_from_camera convention.
template <class T>
struct Pose {
  Mat3<T> rot = Mat3<T>::Identity();
  Vec3<T> trans = Vec3<T>::Zero();

  Vec3<T> apply(const Vec3<T>& p) const { return rot * p + trans; }
  Pose inverse() const {
    return Pose{rot.transpose(), -(rot.transpose() * trans)};
  }
  Pose compose(const Pose& other) const {  // this * other
    return Pose{rot * other.rot, rot * other.trans + trans};
  }
  // Compose with a 6-vector delta [axis-angle | translation] on the right.
  Pose refined(const Vec3<T>& w, const Vec3<T>& u) const {
    return compose(Pose{rodrigues(w), u});
  }
};

template <class T>
Mat3<T> euler_zyx(T rz, T ry, T rx) {
  return (Eigen::AngleAxis<T>(rz, Vec3<T>::UnitZ()) *
          Eigen::AngleAxis<T>(ry, Vec3<T>::UnitY()) *
          Eigen::AngleAxis<T>(rx, Vec3<T>::UnitX()))
      .toRotationMatrix();
}

// Inverse of euler_zyx away from the ry = +-pi/2 singularity; returns
// (rz, ry, rx).
template <class T>
Vec3<T> euler_zyx_angles(const Mat3<T>& r) {
  T sy = std::min(T(1), std::max(T(-1), -r(2, 0)));
  return Vec3<T>(std::atan2(r(1, 0), r(0, 0)), std::asin(sy),
                 std::atan2(r(2, 1), r(2, 2)));
}

namespace ad_se3 {

template <class T>
ad::Var<T> rep_scalar(ad::Var<T> s, int m, int n) {
  return ad::rep_rows(ad::rep_cols(s, n), m);
}

// 3x3 skew matrix from a 3x1 var.
template <class T>
ad::Var<T> skew(ad::Var<T> w) {
  using ad::Var;
  ad::Tape<T>& t = *w.tape;
  Var<T> z = t.constant(Mat<T>::Zero(1, 1));
  Var<T> wx = ad::rows(w, 0, 1), wy = ad::rows(w, 1, 1), wz = ad::rows(w, 2, 1);
  Var<T> r0 = ad::hconcat({z, ad::neg(wz), wy});
  Var<T> r1 = ad::hconcat({wz, z, ad::neg(wx)});
  Var<T> r2 = ad::hconcat({ad::neg(wy), wx, z});
  return ad::vconcat({r0, r1, r2});
}

// Rodrigues' formula as a differentiable graph: w (3x1) -> R (3x3).
template <class T>
ad::Var<T> rodrigues(ad::Var<T> w) {
  using ad::Var;
  ad::Tape<T>& t = *w.tape;
  Var<T> t2 = ad::sum_all(ad::square(w));
  Var<T> f = ad::series_fn(t2, ad::SeriesFn::SincSq);
  Var<T> g = ad::series_fn(t2, ad::SeriesFn::CoscSq);
  Var<T> s = skew(w);
  Var<T> s2 = ad::matmul(s, s);
  Var<T> eye = t.constant(Mat<T>(Mat3<T>::Identity()));
  return ad::add(eye, ad::add(ad::mul(rep_scalar(f, 3, 3), s),
                              ad::mul(rep_scalar(g, 3, 3), s2)));
}

}  // namespace ad_se3
}  // namespace ndr
