#pragma once

// Multilayer perceptrons over the tape, plus a tapeless fast path used by
// sampling, meshing and image rendering.

#include <string>
#include <vector>

#include "ndr/autodiff.hpp"
#include "ndr/common.hpp"
#include "ndr/params.hpp"

namespace ndr {

enum class Activation { Tanh, Softplus100, None };

struct MlpSpec {
  int input = 0;
  int output = 0;
  int hidden_layers = 0;  // count of hidden layers
  int hidden_width = 0;
  Activation activation = Activation::Tanh;
  double final_scale = 1.0;  // scales the final layer's random init; 0 = zero map

  void validate() const {
    NDR_CHECK(input >= 1 && output >= 1, "MlpSpec: widths must be >= 1");
    NDR_CHECK(hidden_layers >= 0, "MlpSpec: negative hidden layer count");
    NDR_CHECK(hidden_layers == 0 || hidden_width >= 1, "MlpSpec: hidden width");
    NDR_CHECK(final_scale >= 0.0, "MlpSpec: final scale must be >= 0");
  }

  int layer_count() const { return hidden_layers + 1; }
  int in_width(int layer) const { return layer == 0 ? input : hidden_width; }
  int out_width(int layer) const {
    return layer == hidden_layers ? output : hidden_width;
  }
};

namespace detail {
inline std::string wname(const std::string& prefix, int l) {
  return prefix + ".w" + std::to_string(l);
}
inline std::string bname(const std::string& prefix, int l) {
  return prefix + ".b" + std::to_string(l);
}
}  // namespace detail

// Allocate parameters with layer-scaled random init (biases zero).
template <class T>
void mlp_init(ParameterStore<T>& store, const std::string& prefix,
              const MlpSpec& spec, Rng& rng) {
  spec.validate();
  for (int l = 0; l < spec.layer_count(); ++l) {
    int fin = spec.in_width(l), fout = spec.out_width(l);
    ParamEntry<T>& w = store.add(detail::wname(prefix, l), fout, fin);
    double scale = std::sqrt(2.0 / (fin + fout));
    if (l == spec.layer_count() - 1) scale *= spec.final_scale;
    for (Eigen::Index i = 0; i < w.value.size(); ++i)
      w.value.data()[i] = static_cast<T>(rng.normal() * scale);
    store.add(detail::bname(prefix, l), fout, 1);
  }
}

template <class T>
ad::Var<T> apply_activation(ad::Var<T> x, Activation a) {
  switch (a) {
    case Activation::Tanh: return ad::tanh(x);
    case Activation::Softplus100: return ad::softplus(x, T(100));
    case Activation::None: return x;
  }
  return x;
}

template <class T>
Mat<T> apply_activation(const Mat<T>& x, Activation a) {
  switch (a) {
    case Activation::Tanh: {
      // exp-based form; Eigen vectorizes exp (not tanh) for double, and this
      // layer dominates batched raw evaluation. Safe at both ends: exp
      // saturates to 0 and inf, giving exactly -1 and 1.
      auto v = x.array();
      return (T(1) - T(2) / (T(1) + (T(2) * v).exp())).matrix();
    }
    case Activation::Softplus100:
      return x.unaryExpr([](T v) {
        T bv = T(100) * v;
        if (bv > T(30)) return v;
        return static_cast<T>(std::log1p(std::exp(bv)) / T(100));
      });
    case Activation::None: return x;
  }
  return x;
}

// Tape forward: input is (spec.input x N), output (spec.output x N).
template <class T>
ad::Var<T> mlp_forward(ad::Tape<T>& tape, ParameterStore<T>& store,
                       const std::string& prefix, const MlpSpec& spec,
                       ad::Var<T> input) {
  NDR_CHECK(input.rows() == spec.input,
            "mlp_forward(" + prefix + "): input width " +
                std::to_string(input.rows()) + " != spec " +
                std::to_string(spec.input));
  ad::Var<T> h = input;
  for (int l = 0; l < spec.layer_count(); ++l) {
    ad::Var<T> w = store.use(tape, detail::wname(prefix, l));
    ad::Var<T> b = store.use(tape, detail::bname(prefix, l));
    h = ad::add(ad::matmul(w, h), ad::rep_cols(b, static_cast<int>(h.cols())));
    if (l < spec.layer_count() - 1) h = apply_activation(h, spec.activation);
  }
  return h;
}

// Tapeless forward on current parameter values.
template <class T>
Mat<T> mlp_eval(const ParameterStore<T>& store, const std::string& prefix,
                const MlpSpec& spec, const Mat<T>& input) {
  NDR_CHECK(input.rows() == spec.input, "mlp_eval(" + prefix + "): input width");
  Mat<T> h = input;
  for (int l = 0; l < spec.layer_count(); ++l) {
    const Mat<T>& w = store.at(detail::wname(prefix, l)).value;
    const Mat<T>& b = store.at(detail::bname(prefix, l)).value;
    h = (w * h).colwise() + Vec<T>(b.col(0));
    if (l < spec.layer_count() - 1) h = apply_activation(h, spec.activation);
  }
  return h;
}

}  // namespace ndr
