#pragma once

// Pinhole camera with learnable intrinsics and a learnable SE(3) delta on top
// of a fixed base pose. Raw helpers serve sampling and evaluation; the graph
// builder makes rays differentiable w.r.t. intrinsics and the pose delta.

#include <optional>
#include <vector>

#include "ndr/autodiff.hpp"
#include "ndr/common.hpp"
#include "ndr/params.hpp"
#include "ndr/se3.hpp"

namespace ndr {

template <class T>
struct Intrinsics {
  T fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const {
    NDR_CHECK(fx > 0 && fy > 0, "intrinsics: focal lengths must be positive");
    NDR_CHECK(width > 0 && height > 0, "intrinsics: image size");
  }
};

enum class CameraRole { Rgb, Depth };

template <class T>
struct Camera {
  Intrinsics<T> intr;
  Pose<T> base;                       // fixed initial world_from_camera
  Vec3<T> delta_rot = Vec3<T>::Zero();    // learnable axis-angle
  Vec3<T> delta_trans = Vec3<T>::Zero();  // learnable translation
  CameraRole role = CameraRole::Rgb;

  Pose<T> pose() const { return base.refined(delta_rot, delta_trans); }

  // Unnormalized camera-frame direction through a pixel.
  Vec3<T> pixel_dir(T px, T py) const {
    return Vec3<T>((px - intr.cx) / intr.fx, (py - intr.cy) / intr.fy, T(1));
  }

  // Conversion factor from a depth-map z value to ray parameter s.
  T depth_to_s(T px, T py) const { return pixel_dir(px, py).norm(); }

  Vec3<T> back_project(T px, T py, T z) const {
    NDR_CHECK(z > 0, "back_project: depth must be positive");
    return pose().apply(z * pixel_dir(px, py));
  }

  // Returns (px, py, z) in pixel coordinates; z in camera units.
  Vec3<T> project(const Vec3<T>& p_world) const {
    Vec3<T> c = pose().inverse().apply(p_world);
    return Vec3<T>(intr.fx * c.x() / c.z() + intr.cx,
                   intr.fy * c.y() / c.z() + intr.cy, c.z());
  }
};

template <class T>
struct Ray {
  Vec3<T> origin;
  Vec3<T> dir;          // unit
  T s_near = 0, s_far = 0;
  int px = 0, py = 0;
  int frame = -1;
  Vec3<T> color = Vec3<T>::Zero();  // observed
  T depth_s = 0;                    // observed depth as ray parameter; 0 = invalid
  T mask = 0;                       // observed mask value in {0,1}
  bool hits_bound = false;          // intersects the unit content sphere
};

// Intersection of o + s v with the sphere |p| = r; empty when the ray misses.
template <class T>
std::optional<std::pair<T, T>> sphere_bounds(const Vec3<T>& o, const Vec3<T>& v,
                                             T radius = T(1)) {
  T b = o.dot(v);
  T c = o.squaredNorm() - radius * radius;
  T disc = b * b - c;
  if (disc <= T(0)) return std::nullopt;
  T sd = std::sqrt(disc);
  T s0 = -b - sd, s1 = -b + sd;
  if (s1 <= T(0)) return std::nullopt;
  return std::make_pair(std::max(s0, T(0)), s1);
}

// Rays through the given pixel centers under the camera's refined pose.
// Out-of-bounds pixels are rejected with their index.
template <class T>
std::vector<Ray<T>> generate_rays(const Camera<T>& cam,
                                  const std::vector<std::pair<int, int>>& pixels,
                                  int frame) {
  Pose<T> pose = cam.pose();
  std::vector<Ray<T>> out;
  out.reserve(pixels.size());
  for (size_t i = 0; i < pixels.size(); ++i) {
    auto [px, py] = pixels[i];
    NDR_CHECK(px >= 0 && px < cam.intr.width && py >= 0 && py < cam.intr.height,
              "generate_rays: pixel index " + std::to_string(i) +
                  " out of bounds");
    Ray<T> r;
    Vec3<T> d = cam.pixel_dir(static_cast<T>(px), static_cast<T>(py));
    r.origin = pose.trans;
    r.dir = (pose.rot * d).normalized();
    r.px = px;
    r.py = py;
    r.frame = frame;
    if (auto b = sphere_bounds<T>(r.origin, r.dir)) {
      r.s_near = b->first;
      r.s_far = b->second;
      r.hits_bound = true;
    }
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Differentiable camera graph

template <class T>
struct CameraGraph {
  ad::Var<T> rot;     // 3x3 effective rotation
  ad::Var<T> origin;  // 3x1 effective camera center
  ad::Var<T> fx, fy, cx, cy;  // 1x1 each
};

// Parameters: `intr_name` is a 4x1 entry (fx fy cx cy), `pose_name` a 6x1
// entry (axis-angle | translation) composed on the right of `base`.
template <class T>
CameraGraph<T> build_camera_graph(ad::Tape<T>& tape, ParameterStore<T>& store,
                                  const std::string& intr_name,
                                  const std::string& pose_name,
                                  const Pose<T>& base) {
  using ad::Var;
  Var<T> intr = store.use(tape, intr_name);
  Var<T> delta = store.use(tape, pose_name);
  Var<T> r_delta = ad_se3::rodrigues(ad::rows(delta, 0, 3));
  Var<T> r_base = tape.constant(Mat<T>(base.rot));
  Var<T> t_base = tape.constant(Mat<T>(base.trans));
  CameraGraph<T> g;
  g.rot = ad::matmul(r_base, r_delta);
  g.origin = ad::add(ad::matmul(r_base, ad::rows(delta, 3, 3)), t_base);
  g.fx = ad::rows(intr, 0, 1);
  g.fy = ad::rows(intr, 1, 1);
  g.cx = ad::rows(intr, 2, 1);
  g.cy = ad::rows(intr, 3, 1);
  return g;
}

// Unit ray directions (3xN) for pixel centers px, py (1xN constants).
template <class T>
ad::Var<T> ray_dirs_graph(const CameraGraph<T>& g, ad::Var<T> px, ad::Var<T> py) {
  using ad::Var;
  ad::Tape<T>& tape = *px.tape;
  int n = static_cast<int>(px.cols());
  Var<T> xn = ad::div(ad::sub(px, ad::rep_cols(g.cx, n)), ad::rep_cols(g.fx, n));
  Var<T> yn = ad::div(ad::sub(py, ad::rep_cols(g.cy, n)), ad::rep_cols(g.fy, n));
  Var<T> ones = tape.constant(Mat<T>::Ones(1, n));
  Var<T> d = ad::vconcat({xn, yn, ones});
  Var<T> norm = ad::sqrt(ad::sum_rows(ad::square(d)));
  return ad::matmul(g.rot, ad::div(d, ad::rep_rows(norm, 3)));
}

// World points from pixels and depth-map z values (1xN constants); 3xN.
template <class T>
ad::Var<T> back_project_graph(const CameraGraph<T>& g, ad::Var<T> px,
                              ad::Var<T> py, ad::Var<T> z) {
  using ad::Var;
  int n = static_cast<int>(px.cols());
  Var<T> xn = ad::div(ad::sub(px, ad::rep_cols(g.cx, n)), ad::rep_cols(g.fx, n));
  Var<T> yn = ad::div(ad::sub(py, ad::rep_cols(g.cy, n)), ad::rep_cols(g.fy, n));
  Var<T> pc = ad::vconcat({ad::mul(z, xn), ad::mul(z, yn), z});
  return ad::add(ad::matmul(g.rot, pc), ad::rep_cols(g.origin, n));
}

}  // namespace ndr
