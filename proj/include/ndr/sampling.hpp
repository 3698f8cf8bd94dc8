#pragma once

// Ray sampling: stratified base samples plus iterative importance rounds
// against a coarse opacity estimate. Sampling is frozen (not differentiated);
// the renderer treats the returned depths as constants.

#include <algorithm>
#include <vector>

#include "ndr/camera.hpp"
#include "ndr/common.hpp"

namespace ndr {

struct SampleConfig {
  int n_stratified = 64;
  int importance_rounds = 4;
  int n_importance = 16;       // per round
  double coarse_scale = 32.0;  // sharpness of round 0, doubled each round

  int total() const { return n_stratified + importance_rounds * n_importance; }
};

// alpha_k from consecutive signed distances, computed in log space:
// alpha = 1 - Phi(s d_{k+1}) / Phi(s d_k), clamped to [0, 1).
// Input (K x N) per-sample SDF, output (K-1 x N) per-interval alpha.
template <class T>
Mat<T> alpha_from_sdf(const Mat<T>& d, T s_scale) {
  auto sp = [](T x) {  // softplus, overflow safe
    return x > T(30) ? x : static_cast<T>(std::log1p(std::exp(x)));
  };
  Eigen::Index k = d.rows() - 1, n = d.cols();
  Mat<T> a(k, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < k; ++i) {
      T e = sp(-s_scale * d(i, j)) - sp(-s_scale * d(i + 1, j));
      a(i, j) = T(1) - std::exp(std::min(e, T(0)));
    }
  return a;
}

// T_k alpha_k per interval; same shape as alpha.
template <class T>
Mat<T> weights_from_alpha(const Mat<T>& alpha) {
  Mat<T> w(alpha.rows(), alpha.cols());
  for (Eigen::Index j = 0; j < alpha.cols(); ++j) {
    T trans = T(1);
    for (Eigen::Index i = 0; i < alpha.rows(); ++i) {
      w(i, j) = trans * alpha(i, j);
      trans *= T(1) - alpha(i, j);
    }
  }
  return w;
}

// Near/far band for rays that miss the content sphere; keeps batch shapes
// uniform and feeds the mask loss with (near-)empty space.
template <class T>
std::pair<T, T> miss_band(const Ray<T>& ray) {
  T dist = ray.origin.norm();
  T near = std::max(dist - T(1), T(0.05));
  return {near, dist + T(1)};
}

// Sorted sample depths for a ray batch, (K x N) with K = cfg.total().
// `sdf_fn` maps world points (3 x M) to signed distances (1 x M) and is
// evaluated batched once per importance round.
template <class T, class SdfFn>
Mat<T> sample_rays(const std::vector<Ray<T>>& rays, const SampleConfig& cfg,
                   SdfFn&& sdf_fn, Rng& rng) {
  NDR_CHECK(!rays.empty(), "sample_rays: empty batch");
  NDR_CHECK(cfg.n_stratified >= 2, "sample_rays: need >= 2 stratified samples");
  int n = static_cast<int>(rays.size());

  std::vector<std::vector<T>> t(n);
  std::vector<std::pair<T, T>> band(n);
  for (int j = 0; j < n; ++j) {
    band[j] = rays[j].hits_bound
                  ? std::make_pair(rays[j].s_near, rays[j].s_far)
                  : miss_band(rays[j]);
    auto [s0, s1] = band[j];
    NDR_CHECK(s1 > s0, "sample_rays: degenerate depth band");
    T step = (s1 - s0) / static_cast<T>(cfg.n_stratified);
    t[j].reserve(cfg.total());
    for (int i = 0; i < cfg.n_stratified; ++i)
      t[j].push_back(s0 + step * (static_cast<T>(i) +
                                  static_cast<T>(rng.uniform(0.0, 1.0))));
  }

  for (int round = 0; round < cfg.importance_rounds; ++round) {
    // one batched SDF evaluation over every current sample
    int k = static_cast<int>(t[0].size());
    Mat<T> pts(3, static_cast<Eigen::Index>(n) * k);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < k; ++i)
        pts.col(static_cast<Eigen::Index>(j) * k + i) =
            rays[j].origin + t[j][i] * rays[j].dir;
    Mat<T> d_flat = sdf_fn(pts);
    NDR_CHECK(d_flat.rows() == 1 && d_flat.cols() == pts.cols(),
              "sample_rays: sdf evaluator shape");

    T scale = static_cast<T>(cfg.coarse_scale * std::pow(2.0, round));
    for (int j = 0; j < n; ++j) {
      Mat<T> d = Eigen::Map<const Mat<T>>(
          d_flat.data() + static_cast<Eigen::Index>(j) * k, k, 1);
      Mat<T> w = weights_from_alpha(alpha_from_sdf(d, scale));

      // floor keeps the pdf proper when the field is empty
      T floor = T(1e-3) / static_cast<T>(k);
      std::vector<T> cdf(static_cast<size_t>(k - 1) + 1, T(0));
      for (int i = 0; i < k - 1; ++i) cdf[i + 1] = cdf[i] + w(i, 0) + floor;
      T total = cdf.back();

      std::vector<T> fresh;
      fresh.reserve(cfg.n_importance);
      for (int s = 0; s < cfg.n_importance; ++s) {
        T u = static_cast<T>(rng.uniform(0.0, 1.0)) * total;
        int lo = static_cast<int>(
            std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin() - 1);
        lo = std::clamp(lo, 0, k - 2);
        T frac = (u - cdf[lo]) / std::max(cdf[lo + 1] - cdf[lo], T(1e-30));
        fresh.push_back(t[j][lo] + frac * (t[j][lo + 1] - t[j][lo]));
      }
      t[j].insert(t[j].end(), fresh.begin(), fresh.end());
      std::sort(t[j].begin(), t[j].end());
    }
  }

  Mat<T> out(cfg.total(), n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < cfg.total(); ++i) out(i, j) = t[j][i];
  return out;
}

}  // namespace ndr
