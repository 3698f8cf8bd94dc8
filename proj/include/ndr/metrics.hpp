#pragma once

// Evaluation against trained fields: surface extraction in canonical and
// observation space, depth-based geometry error, and correspondence cycle
// consistency. All evaluation paths are tapeless.

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "ndr/chamfer.hpp"
#include "ndr/dataset.hpp"
#include "ndr/fields.hpp"
#include "ndr/mesh.hpp"
#include "ndr/render.hpp"

namespace ndr {

template <class T>
struct MetricReport {
  std::string name;
  std::vector<T> per_frame;
  T mean = 0, median = 0;

  static MetricReport from(const std::string& name, std::vector<T> values) {
    MetricReport r;
    r.name = name;
    r.per_frame = std::move(values);
    if (!r.per_frame.empty()) {
      std::vector<T> sorted = r.per_frame;
      std::sort(sorted.begin(), sorted.end());
      T sum = 0;
      for (T v : sorted) sum += v;
      r.mean = sum / static_cast<T>(sorted.size());
      size_t h = sorted.size() / 2;
      r.median = sorted.size() % 2 ? sorted[h]
                                   : (sorted[h - 1] + sorted[h]) / T(2);
    }
    return r;
  }

  std::string str() const {
    std::string s = r_name();
    for (size_t i = 0; i < per_frame.size(); ++i)
      s += " " + std::to_string(static_cast<double>(per_frame[i]));
    s += "\n" + r_name() + ".mean " + std::to_string(static_cast<double>(mean));
    s += "\n" + r_name() + ".median " +
         std::to_string(static_cast<double>(median));
    return s;
  }

 private:
  std::string r_name() const { return name.empty() ? "metric" : name; }
};

// Zero level set of the canonical SDF at a fixed topology coordinate q_ref.
template <class T>
TriangleMesh<T> extract_canonical_mesh(const ParameterStore<T>& store,
                                       const FieldsConfig& cfg,
                                       const EncodingSchedule& pe_hyper,
                                       const Vec<T>& q_ref, int res) {
  NDR_CHECK(q_ref.size() == cfg.topo_dim, "extract_canonical_mesh: q_ref size");
  auto field = [&](const Mat<T>& p) {
    Mat<T> x(3 + cfg.topo_dim, p.cols());
    x.topRows(3) = p;
    x.bottomRows(cfg.topo_dim) = q_ref.replicate(1, p.cols());
    return fields_raw::sdf_value(store, cfg, x, pe_hyper);
  };
  return extract_isosurface<T>(field, Vec3<T>(-1, -1, -1), Vec3<T>(1, 1, 1), res);
}

// Zero level set of the observation-space composed SDF for one frame.
template <class T>
TriangleMesh<T> extract_frame_mesh(const ParameterStore<T>& store,
                                   const FieldsConfig& cfg,
                                   const EncodingSchedule& pe_block,
                                   const EncodingSchedule& pe_point,
                                   const EncodingSchedule& pe_hyper,
                                   const Vec<T>& deform_code, int res) {
  auto field = [&](const Mat<T>& p) {
    return fields_raw::sdf_at_observed(store, cfg, p, deform_code, pe_block,
                                       pe_point, pe_hyper);
  };
  return extract_isosurface<T>(field, Vec3<T>(-1, -1, -1), Vec3<T>(1, 1, 1), res);
}

// Model z-depth (normalized units) for the given pixels of a frame; tapeless
// rendering of the depth integral only.
template <class T>
Mat<T> render_depth_raw(const ParameterStore<T>& store, const FieldsConfig& cfg,
                        const EncodingSchedule& pe_block,
                        const EncodingSchedule& pe_point,
                        const EncodingSchedule& pe_hyper, const Camera<T>& cam,
                        const std::vector<std::pair<int, int>>& pixels,
                        const Vec<T>& deform_code, const SampleConfig& scfg,
                        Rng& rng) {
  auto rays = generate_rays(cam, pixels, 0);
  auto sdf_fn = [&](const Mat<T>& p) {
    return fields_raw::sdf_at_observed(store, cfg, p, deform_code, pe_block,
                                       pe_point, pe_hyper);
  };
  Mat<T> t = sample_rays(rays, scfg, sdf_fn, rng);
  int k = static_cast<int>(t.rows()), n = static_cast<int>(rays.size());

  Mat<T> pts(3, static_cast<Eigen::Index>(n) * k);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < k; ++i)
      pts.col(static_cast<Eigen::Index>(j) * k + i) =
          rays[static_cast<size_t>(j)].origin +
          t(i, j) * rays[static_cast<size_t>(j)].dir;
  Mat<T> d_flat = sdf_fn(pts);

  T s_scale = current_s_scale(store);
  Mat<T> z(1, n);
  for (int j = 0; j < n; ++j) {
    Mat<T> d = Eigen::Map<const Mat<T>>(d_flat.data() + static_cast<Eigen::Index>(j) * k,
                                        k, 1);
    Mat<T> w = weights_from_alpha(alpha_from_sdf(d, s_scale));
    T s = 0;
    for (int i = 0; i < k - 1; ++i)
      s += w(i, 0) * (t(i, j) + t(i + 1, j)) / T(2);
    z(0, j) = s / cam.depth_to_s(static_cast<T>(pixels[static_cast<size_t>(j)].first),
                                 static_cast<T>(pixels[static_cast<size_t>(j)].second));
  }
  return z;
}

// Per-pixel |model z - observed z| in millimeters over masked valid pixels.
// `pred_z` pairs with `pixels`; both in normalized units.
template <class T>
std::vector<T> depth_errors_mm(const Mat<T>& pred_z,
                               const std::vector<std::pair<int, int>>& pixels,
                               const FrameRecord<T>& frame,
                               const SceneNormalization<T>& norm) {
  std::vector<T> out;
  for (size_t i = 0; i < pixels.size(); ++i) {
    auto [x, y] = pixels[i];
    T obs = frame.depth_at(x, y);
    if (!frame.mask_at(x, y) || obs <= T(0)) continue;
    out.push_back(std::abs(pred_z(0, static_cast<Eigen::Index>(i)) - obs) *
                  norm.unit_to_mm());
  }
  return out;
}

// Masked valid pixels of a frame, optionally strided for speed. With
// `erode`, only interior pixels (whole 8-neighborhood masked and valid) are
// kept; silhouette-boundary pixels mix surface and background depth in both
// the observation and the rendering.
template <class T>
std::vector<std::pair<int, int>> masked_pixels(const FrameRecord<T>& frame,
                                               int stride = 1,
                                               bool erode = false) {
  auto ok = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < frame.depth.cols() &&
           y < frame.depth.rows() && frame.mask_at(x, y) &&
           frame.depth_at(x, y) > T(0);
  };
  std::vector<std::pair<int, int>> out;
  for (int y = 0; y < frame.depth.rows(); y += stride)
    for (int x = 0; x < frame.depth.cols(); x += stride) {
      if (!ok(x, y)) continue;
      if (erode) {
        bool interior = true;
        for (int dy = -1; dy <= 1 && interior; ++dy)
          for (int dx = -1; dx <= 1 && interior; ++dx)
            if (!ok(x + dx, y + dy)) interior = false;
        if (!interior) continue;
      }
      out.emplace_back(x, y);
    }
  return out;
}

// Mean per-frame geometry error (mm) from rendered model depth. `cam_fn`
// supplies the camera per frame so learned pose/intrinsics refinements can
// be applied.
template <class T>
MetricReport<T> geometry_error(const ParameterStore<T>& store,
                               const FieldsConfig& cfg,
                               const EncodingSchedule& pe_block,
                               const EncodingSchedule& pe_point,
                               const EncodingSchedule& pe_hyper,
                               const Dataset<T>& ds, const SampleConfig& scfg,
                               int pixel_stride, unsigned seed,
                               const std::function<Camera<T>(int)>& cam_fn,
                               bool erode = false) {
  std::vector<T> per_frame;
  Rng rng(seed);
  for (int f = 0; f < ds.frame_count(); ++f) {
    auto pixels = masked_pixels(ds.frames[static_cast<size_t>(f)], pixel_stride,
                                erode);
    if (pixels.empty()) continue;  // nothing to measure on this frame
    Camera<T> cam = cam_fn(f);
    Vec<T> code =
        store.at(detail::deform_code_name(f)).value.col(0);
    Mat<T> z = render_depth_raw(store, cfg, pe_block, pe_point, pe_hyper, cam,
                                pixels, code, scfg, rng);
    auto errs = depth_errors_mm(z, pixels, ds.frames[static_cast<size_t>(f)],
                                ds.norm);
    T sum = 0;
    for (T e : errs) sum += e;
    per_frame.push_back(sum / static_cast<T>(errs.size()));
  }
  return MetricReport<T>::from("geometry_error_mm", std::move(per_frame));
}

// Convenience: base poses without refinement.
template <class T>
MetricReport<T> geometry_error(const ParameterStore<T>& store,
                               const FieldsConfig& cfg,
                               const EncodingSchedule& pe_block,
                               const EncodingSchedule& pe_point,
                               const EncodingSchedule& pe_hyper,
                               const Dataset<T>& ds, const SampleConfig& scfg,
                               int pixel_stride, unsigned seed) {
  return geometry_error<T>(store, cfg, pe_block, pe_point, pe_hyper, ds, scfg,
                           pixel_stride, seed,
                           [&](int f) { return make_camera(ds, f, CameraRole::Depth); });
}

// Mean norm of f_ij + f_jk - f_ik over random frame triples, flows through
// the bijective map only (the topology network has no inverse).
template <class T>
MetricReport<T> eval_cycle_consistency(const ParameterStore<T>& store,
                                       const FieldsConfig& cfg,
                                       const EncodingSchedule& pe_block,
                                       const Dataset<T>& ds, int n_triples,
                                       int points_per_triple, unsigned seed) {
  NDR_CHECK(ds.frame_count() >= 1, "eval_cycle_consistency: empty dataset");
  Rng rng(seed);
  std::vector<T> per_triple;

  // surface point pools per frame, back-projected from masked depth
  std::vector<std::vector<Vec3<T>>> pool(static_cast<size_t>(ds.frame_count()));
  for (int f = 0; f < ds.frame_count(); ++f) {
    Camera<T> cam = make_camera(ds, f, CameraRole::Depth);
    for (auto [x, y] : masked_pixels(ds.frames[static_cast<size_t>(f)]))
      pool[static_cast<size_t>(f)].push_back(cam.back_project(
          static_cast<T>(x), static_cast<T>(y),
          ds.frames[static_cast<size_t>(f)].depth_at(x, y)));
  }

  auto code = [&](int f) {
    return Vec<T>(store.at(detail::deform_code_name(f)).value.col(0));
  };
  for (int trial = 0; trial < n_triples; ++trial) {
    int i = rng.uniform_int(ds.frame_count());
    int j = rng.uniform_int(ds.frame_count());
    int k = rng.uniform_int(ds.frame_count());
    if (pool[static_cast<size_t>(i)].empty()) continue;
    Mat<T> p(3, points_per_triple);
    for (int c = 0; c < points_per_triple; ++c)
      p.col(c) = pool[static_cast<size_t>(i)][static_cast<size_t>(
          rng.uniform_int(static_cast<int>(pool[static_cast<size_t>(i)].size())))];

    Mat<T> pj = fields_raw::correspondence(store, cfg, p, code(i), code(j), pe_block);
    Mat<T> pk_via = fields_raw::correspondence(store, cfg, pj, code(j), code(k), pe_block);
    Mat<T> pk = fields_raw::correspondence(store, cfg, p, code(i), code(k), pe_block);
    // f_ij + f_jk - f_ik telescopes to the via/direct endpoint difference
    T sum = 0;
    for (int c = 0; c < points_per_triple; ++c)
      sum += (pk_via.col(c) - pk.col(c)).norm();
    per_triple.push_back(sum / static_cast<T>(points_per_triple));
  }
  return MetricReport<T>::from("cycle_consistency", std::move(per_triple));
}

}  // namespace ndr
