#pragma once

// Finite-difference verification of reverse-mode gradients.

#include <functional>
#include <sstream>
#include <string>

#include "ndr/autodiff.hpp"
#include "ndr/common.hpp"

namespace ndr {

struct GradCheckReport {
  double max_rel_error = 0.0;
  int worst_index = -1;
  double tol = 0.0;
  bool passed = false;

  std::string str() const {
    std::ostringstream os;
    os << "grad_check: max_rel_error=" << max_rel_error << " at component "
       << worst_index << " tol=" << tol << " -> "
       << (passed ? "pass" : "FAIL");
    return os.str();
  }
};

// fn builds a scalar graph from a leaf var at `point` (n x 1). Compares the
// reverse-mode gradient against central differences componentwise. Only
// meaningful where fn is differentiable; discontinuous functions are the
// caller's problem.
template <class T>
GradCheckReport grad_check(
    const std::function<ad::Var<T>(ad::Tape<T>&, ad::Var<T>)>& fn,
    const Mat<T>& point, double tol, double h = 1e-4) {
  GradCheckReport rep;
  rep.tol = tol;

  ad::Tape<T> tape;
  ad::Var<T> x = tape.leaf(point);
  ad::Var<T> y = fn(tape, x);
  NDR_CHECK(y.rows() == 1 && y.cols() == 1, "grad_check: fn must be scalar");
  Mat<T> g = tape.grad(y, {x})[0].value();

  auto eval = [&](const Mat<T>& p) -> double {
    ad::Tape<T> t2;
    ad::Var<T> xv = t2.leaf(p);
    return static_cast<double>(fn(t2, xv).value()(0, 0));
  };

  double gnorm = static_cast<double>(g.norm());
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    Mat<T> p = point;
    p.data()[i] += static_cast<T>(h);
    double fp = eval(p);
    p.data()[i] -= static_cast<T>(2 * h);
    double fm = eval(p);
    double fd = (fp - fm) / (2 * h);
    double an = static_cast<double>(g.data()[i]);
    double denom = std::max({std::abs(fd), std::abs(an), gnorm * 1e-3, 1e-8});
    double rel = std::abs(fd - an) / denom;
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_index = static_cast<int>(i);
    }
  }
  rep.passed = rep.max_rel_error < tol;
  return rep;
}

// Directional variant: compares <grad, dir> with a central difference along
// `dir`. Used where componentwise sweeps are too slow.
template <class T>
double directional_fd(const std::function<double(const Mat<T>&)>& eval,
                      const Mat<T>& point, const Mat<T>& dir, double h = 1e-4) {
  Mat<T> d = dir / dir.norm();
  double fp = eval(point + static_cast<T>(h) * d);
  double fm = eval(point - static_cast<T>(h) * d);
  return (fp - fm) / (2 * h);
}

}  // namespace ndr
