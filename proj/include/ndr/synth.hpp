#pragma once

// Synthetic deforming RGB-D scenes with exact ground truth. The deformation
// program is built from closed-form invertible primitives (a bounded axis
// twist followed by a rigid motion), so observed SDFs, depth, masks, per-frame
// meshes, and frame-to-frame flow are all exact.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ndr/camera.hpp"
#include "ndr/common.hpp"
#include "ndr/dataset.hpp"
#include "ndr/mesh.hpp"
#include "ndr/png_io.hpp"
#include "ndr/se3.hpp"

namespace ndr {

enum class BaseShape { Sphere, Torus, TwoSpheres };

template <class T>
struct SyntheticSceneSpec {
  BaseShape shape = BaseShape::Sphere;
  T sphere_radius = T(0.5);
  T torus_major = T(0.4), torus_minor = T(0.15);
  T two_sphere_gap = T(0.5);  // center offset along x, each radius/1.6

  int frames = 20;
  int width = 96, height = 96;
  T fov_deg = T(50);

  // deformation program amplitudes; all reach their peak mid-sequence
  T twist_amplitude = T(0.8);          // radians per unit height
  Vec3<T> rot_axis = Vec3<T>(0, 1, 0);
  T rot_amplitude = T(0.3);            // radians
  Vec3<T> trans_amplitude = Vec3<T>(0.1, 0.05, 0);

  T cam_distance = T(2);
  T cam_orbit = T(0.4);   // radians of azimuth sweep over the sequence
  T cam_height = T(0.25);

  T depth_scale = T(10000);  // png value per raw unit
  T depth_noise_std = T(0);  // raw units, before quantization
  T depth_dropout = T(0);

  int gt_mesh_res = 64;
  unsigned seed = 1;

  void validate() const {
    NDR_CHECK(frames >= 1, "synth: need at least one frame");
    NDR_CHECK(width > 0 && height > 0, "synth: image size");
    NDR_CHECK(depth_scale > 0, "synth: depth scale");
    NDR_CHECK(twist_amplitude >= 0 && rot_amplitude >= 0, "synth: amplitudes");
  }

  T time_of(int frame) const {
    return frames > 1 ? static_cast<T>(frame) / static_cast<T>(frames - 1) : T(0);
  }
  // smooth ramp, identity at the sequence start
  T envelope(int frame) const {
    return std::sin(static_cast<T>(M_PI) * time_of(frame) / T(2));
  }

  T canonical_sdf(const Vec3<T>& p) const {
    switch (shape) {
      case BaseShape::Sphere:
        return p.norm() - sphere_radius;
      case BaseShape::Torus: {
        T q = std::hypot(std::hypot(p.x(), p.y()) - torus_major, p.z());
        return q - torus_minor;
      }
      case BaseShape::TwoSpheres: {
        T r = sphere_radius / T(1.6);
        Vec3<T> off(two_sphere_gap / T(2), T(0), T(0));
        return std::min((p - off).norm() - r, (p + off).norm() - r);
      }
    }
    return T(0);
  }

  // canonical-space albedo; deforms with the surface
  Vec3<T> albedo(const Vec3<T>& p) const {
    auto band = [](T x) { return T(0.55) + T(0.45) * std::sin(x); };
    return Vec3<T>(band(T(7) * p.x() + T(1)), band(T(5) * p.y() + T(2)),
                   band(T(6) * p.z() + T(3)));
  }

  // deformation program: observed = rigid(twist(canonical))
  Vec3<T> deform(const Vec3<T>& p, int frame) const {
    T e = envelope(frame);
    T phi = twist_amplitude * e * p.z();
    Vec3<T> tw(std::cos(phi) * p.x() - std::sin(phi) * p.y(),
               std::sin(phi) * p.x() + std::cos(phi) * p.y(), p.z());
    Mat3<T> rot = rodrigues<T>(rot_axis.normalized() * (rot_amplitude * e));
    return rot * tw + trans_amplitude * e;
  }

  Vec3<T> deform_inverse(const Vec3<T>& p, int frame) const {
    T e = envelope(frame);
    Mat3<T> rot = rodrigues<T>(rot_axis.normalized() * (rot_amplitude * e));
    Vec3<T> tw = rot.transpose() * (p - trans_amplitude * e);
    T phi = twist_amplitude * e * tw.z();  // z is untouched by the twist
    return Vec3<T>(std::cos(phi) * tw.x() + std::sin(phi) * tw.y(),
                   -std::sin(phi) * tw.x() + std::cos(phi) * tw.y(), tw.z());
  }

  T observed_sdf(const Vec3<T>& p, int frame) const {
    return canonical_sdf(deform_inverse(p, frame));
  }

  Pose<T> camera_pose(int frame) const {
    T az = cam_orbit * (time_of(frame) - T(0.5));
    Vec3<T> eye(cam_distance * std::sin(az), cam_height,
                -cam_distance * std::cos(az));
    Vec3<T> forward = (-eye).normalized();
    Vec3<T> right = Vec3<T>(0, 1, 0).cross(forward).normalized();
    Vec3<T> down = forward.cross(right);
    Pose<T> pose;
    pose.rot.col(0) = right;
    pose.rot.col(1) = down;
    pose.rot.col(2) = forward;
    pose.trans = eye;
    return pose;
  }

  Intrinsics<T> intrinsics() const {
    T f = static_cast<T>(width) /
          (T(2) * std::tan(fov_deg * static_cast<T>(M_PI) / T(360)));
    return Intrinsics<T>{f, f, static_cast<T>(width - 1) / T(2),
                         static_cast<T>(height - 1) / T(2), width, height};
  }
};

// Exact correspondence of frame-i surface points into frame j; 3xN in, 3xN out
// of displacement vectors.
template <class T>
Mat<T> ground_truth_flow(const SyntheticSceneSpec<T>& spec, int i, int j,
                         const Mat<T>& points) {
  NDR_CHECK(points.rows() == 3, "ground_truth_flow: points must be 3xN");
  Mat<T> flow(3, points.cols());
  for (Eigen::Index c = 0; c < points.cols(); ++c) {
    Vec3<T> p = points.col(c);
    flow.col(c) = spec.deform(spec.deform_inverse(p, i), j) - p;
  }
  return flow;
}

namespace detail {

// Sphere tracing against the observed SDF; returns ray parameter or -1 on
// miss, 0 on non-convergence (invalid depth).
template <class T>
T trace_ray(const SyntheticSceneSpec<T>& spec, int frame, const Vec3<T>& origin,
            const Vec3<T>& dir, T s_far) {
  T s = T(0.05);
  for (int it = 0; it < 512; ++it) {
    T d = spec.observed_sdf(origin + s * dir, frame);
    if (d < T(1e-7)) return s;
    s += d * T(0.5);  // conservative: the twisted field is not 1-Lipschitz
    if (s > s_far) return T(-1);
  }
  return T(0);
}

template <class T>
Vec3<T> surface_normal(const SyntheticSceneSpec<T>& spec, int frame,
                       const Vec3<T>& p) {
  T h = T(1e-4);
  Vec3<T> n;
  for (int a = 0; a < 3; ++a) {
    Vec3<T> e = Vec3<T>::Zero();
    e[a] = h;
    n[a] = spec.observed_sdf(p + e, frame) - spec.observed_sdf(p - e, frame);
  }
  return n.normalized();
}

}  // namespace detail

// Renders the full synthetic dataset plus the ground-truth bundle (per-frame
// meshes and consecutive-frame flow fields) under `out`.
template <class T>
void synth_generate(const SyntheticSceneSpec<T>& spec,
                    const std::filesystem::path& out) {
  namespace fs = std::filesystem;
  spec.validate();
  for (const char* d : {"color", "depth", "mask", "gt"})
    fs::create_directories(out / d);

  Intrinsics<T> intr = spec.intrinsics();
  {
    std::ofstream f(out / "intrinsics.txt");
    f.precision(12);
    f << intr.fx << " " << intr.fy << " " << intr.cx << " " << intr.cy << " "
      << intr.width << " " << intr.height << " " << spec.depth_scale << "\n";
    NDR_CHECK(f.good(), "synth_generate: cannot write intrinsics");
  }
  {
    std::ofstream f(out / "poses.txt");
    f.precision(15);
    for (int i = 0; i < spec.frames; ++i) {
      Pose<T> pose = spec.camera_pose(i);
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
          T v = r < 3 ? (c < 3 ? pose.rot(r, c) : pose.trans[r])
                      : (c == 3 ? T(1) : T(0));
          f << v << (c == 3 ? "" : " ");
        }
        f << "\n";
      }
    }
    NDR_CHECK(f.good(), "synth_generate: cannot write poses");
  }

  Rng rng(spec.seed);
  Camera<T> cam;
  cam.intr = intr;
  for (int frame = 0; frame < spec.frames; ++frame) {
    cam.base = spec.camera_pose(frame);
    Pose<T> pose = cam.pose();
    Pose<T> inv = pose.inverse();

    ImageRgb8 color, mask;
    color.width = mask.width = spec.width;
    color.height = mask.height = spec.height;
    color.data.assign(static_cast<size_t>(spec.width) * spec.height * 3, 0);
    mask.data.assign(static_cast<size_t>(spec.width) * spec.height * 3, 0);
    ImageGray16 depth;
    depth.width = spec.width;
    depth.height = spec.height;
    depth.data.assign(static_cast<size_t>(spec.width) * spec.height, 0);

    T s_far = spec.cam_distance + T(2);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        Vec3<T> dir =
            (pose.rot * cam.pixel_dir(static_cast<T>(x), static_cast<T>(y)))
                .normalized();
        T s = detail::trace_ray(spec, frame, pose.trans, dir, s_far);
        if (s < T(0)) continue;  // miss
        for (int c = 0; c < 3; ++c) mask.px(x, y)[c] = 255;
        if (s == T(0)) continue;  // hit without convergence: invalid depth

        Vec3<T> hit = pose.trans + s * dir;
        T z = inv.apply(hit).z();
        if (static_cast<T>(rng.uniform(0.0, 1.0)) < spec.depth_dropout) {
          // dropped depth sample, mask stays set
        } else {
          T zn = z + (spec.depth_noise_std > T(0)
                          ? static_cast<T>(rng.normal()) * spec.depth_noise_std
                          : T(0));
          long v = std::lround(static_cast<double>(zn * spec.depth_scale));
          if (v > 0 && v <= 65535)
            depth.at(x, y) = static_cast<uint16_t>(v);
        }

        Vec3<T> n = detail::surface_normal(spec, frame, hit);
        T shade = T(0.25) + T(0.75) * std::max(n.dot(-dir), T(0));
        Vec3<T> rgb = spec.albedo(spec.deform_inverse(hit, frame)) * shade;
        for (int c = 0; c < 3; ++c)
          color.px(x, y)[c] = static_cast<uint8_t>(
              std::clamp(static_cast<int>(rgb[c] * T(255) + T(0.5)), 0, 255));
      }
    }
    write_png_rgb8((out / ndr::detail::frame_file("color", frame)).string(), color);
    write_png_gray16((out / ndr::detail::frame_file("depth", frame)).string(), depth);
    write_png_rgb8((out / ndr::detail::frame_file("mask", frame)).string(), mask);
  }

  // ground truth: canonical mesh deformed per frame, flow for consecutive pairs
  TriangleMesh<T> canon = extract_isosurface<T>(
      [&](const Mat<T>& p) {
        Mat<T> d(1, p.cols());
        for (Eigen::Index c = 0; c < p.cols(); ++c)
          d(0, c) = spec.canonical_sdf(p.col(c));
        return d;
      },
      Vec3<T>(-1, -1, -1), Vec3<T>(1, 1, 1), spec.gt_mesh_res);
  NDR_CHECK(!canon.empty(), "synth_generate: empty canonical surface");

  std::vector<TriangleMesh<T>> frame_meshes(static_cast<size_t>(spec.frames));
  for (int i = 0; i < spec.frames; ++i) {
    TriangleMesh<T>& m = frame_meshes[static_cast<size_t>(i)];
    m = canon;
    for (auto& v : m.vertices) v = spec.deform(v, i);
    char name[32];
    std::snprintf(name, sizeof(name), "mesh_%06d.obj", i);
    write_obj(m, (out / "gt" / name).string());
  }
  for (int i = 0; i + 1 < spec.frames; ++i) {
    const auto& m = frame_meshes[static_cast<size_t>(i)];
    Mat<T> pts(3, static_cast<Eigen::Index>(m.vertices.size()));
    for (size_t v = 0; v < m.vertices.size(); ++v)
      pts.col(static_cast<Eigen::Index>(v)) = m.vertices[v];
    Mat<T> flow = ground_truth_flow(spec, i, i + 1, pts);
    char name[40];
    std::snprintf(name, sizeof(name), "flow_%06d_%06d.bin", i, i + 1);
    std::ofstream f(out / "gt" / name, std::ios::binary);
    for (Eigen::Index c = 0; c < flow.cols(); ++c)
      for (int r = 0; r < 3; ++r) {
        float v = static_cast<float>(flow(r, c));
        f.write(reinterpret_cast<const char*>(&v), sizeof(float));
      }
    NDR_CHECK(f.good(), "synth_generate: cannot write flow");
  }
}

}  // namespace ndr
