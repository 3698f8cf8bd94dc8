#pragma once

// Dataset ingestion: the on-disk layout is color/depth/mask PNG triples plus
// intrinsics.txt (fx fy cx cy width height depth_scale, optional second line
// for a distinct depth camera) and poses.txt (per-frame 4x4 row-major,
// world-from-camera). Loading computes a scene normalization that maps all
// masked back-projected depth points into the unit ball.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ndr/camera.hpp"
#include "ndr/common.hpp"
#include "ndr/png_io.hpp"
#include "ndr/se3.hpp"

namespace ndr {

template <class T>
struct SceneNormalization {
  Vec3<T> center = Vec3<T>::Zero();  // raw units
  T radius = T(1);                   // raw units
  T depth_scale = T(1000);           // png value per raw unit

  Vec3<T> to_unit(const Vec3<T>& p_raw) const { return (p_raw - center) / radius; }
  Vec3<T> to_raw(const Vec3<T>& p_unit) const { return p_unit * radius + center; }
  // millimeters per normalized unit, raw units taken as meters
  T unit_to_mm() const { return radius * T(1000); }
};

template <class T>
struct FrameRecord {
  int index = 0;
  ImageRgb8 color;
  Mat<T> depth;  // normalized z per pixel (height x width); 0 = invalid
  Mat<T> mask;   // {0,1} (height x width)
  Pose<T> base_pose;  // world-from-camera in normalized units

  Vec3<T> color_at(int x, int y) const {
    const uint8_t* p = color.px(x, y);
    return Vec3<T>(p[0], p[1], p[2]) / T(255);
  }
  T depth_at(int x, int y) const { return depth(y, x); }
  bool mask_at(int x, int y) const { return mask(y, x) > T(0.5); }
};

template <class T>
struct Dataset {
  std::filesystem::path root;
  Intrinsics<T> intr_rgb;
  Intrinsics<T> intr_depth;
  bool two_cameras = false;
  SceneNormalization<T> norm;
  std::vector<FrameRecord<T>> frames;

  int frame_count() const { return static_cast<int>(frames.size()); }
};

namespace detail {

inline std::string frame_file(const std::string& stem, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.png", index);
  return stem + "/" + buf;
}

template <class T>
Intrinsics<T> parse_intrinsics_line(const std::string& line, T& depth_scale,
                                    const std::string& path) {
  std::istringstream ss(line);
  double fx, fy, cx, cy, ds;
  int w, h;
  NDR_CHECK(static_cast<bool>(ss >> fx >> fy >> cx >> cy >> w >> h >> ds),
            "load_dataset: malformed intrinsics line in " + path);
  depth_scale = static_cast<T>(ds);
  Intrinsics<T> intr{static_cast<T>(fx), static_cast<T>(fy),
                     static_cast<T>(cx), static_cast<T>(cy), w, h};
  intr.validate();
  return intr;
}

}  // namespace detail

template <class T>
Dataset<T> load_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  Dataset<T> ds;
  ds.root = root;

  std::vector<std::string> problems;
  auto require = [&](const fs::path& p) {
    if (!fs::exists(p)) problems.push_back("missing: " + p.string());
    return fs::exists(p);
  };
  bool have_meta = require(root / "intrinsics.txt") & require(root / "poses.txt");
  for (const char* d : {"color", "depth", "mask"})
    if (!fs::is_directory(root / d)) problems.push_back("missing dir: " + (root / d).string());
  if (!problems.empty()) {
    std::string msg = "load_dataset: " + root.string();
    for (const auto& p : problems) msg += "\n  " + p;
    throw Error(msg);
  }
  (void)have_meta;

  // intrinsics (+ optional separate depth camera)
  T ds_rgb = 0, ds_depth = 0;
  {
    std::ifstream f(root / "intrinsics.txt");
    std::string line;
    NDR_CHECK(static_cast<bool>(std::getline(f, line)),
              "load_dataset: empty intrinsics.txt");
    ds.intr_rgb = detail::parse_intrinsics_line<T>(line, ds_rgb,
                                                   (root / "intrinsics.txt").string());
    if (std::getline(f, line) && !line.empty()) {
      ds.intr_depth = detail::parse_intrinsics_line<T>(
          line, ds_depth, (root / "intrinsics.txt").string());
      ds.two_cameras = true;
    } else {
      ds.intr_depth = ds.intr_rgb;
      ds_depth = ds_rgb;
    }
  }
  ds.norm.depth_scale = ds_depth;

  // raw poses
  std::vector<Pose<T>> poses;
  {
    std::ifstream f(root / "poses.txt");
    std::vector<double> nums;
    double v;
    while (f >> v) nums.push_back(v);
    NDR_CHECK(!nums.empty() && nums.size() % 16 == 0,
              "load_dataset: poses.txt must hold 4x4 matrices (16 values each)");
    for (size_t i = 0; i < nums.size(); i += 16) {
      Pose<T> p;
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c)
          p.rot(r, c) = static_cast<T>(nums[i + static_cast<size_t>(r) * 4 + c]);
        p.trans[r] = static_cast<T>(nums[i + static_cast<size_t>(r) * 4 + 3]);
      }
      Mat3<T> rtr = p.rot.transpose() * p.rot - Mat3<T>::Identity();
      NDR_CHECK(rtr.cwiseAbs().maxCoeff() < T(1e-4),
                "load_dataset: non-orthonormal rotation in poses.txt");
      poses.push_back(p);
    }
  }
  int n_frames = static_cast<int>(poses.size());

  // first pass: raw images, collect masked surface points for normalization
  struct RawFrame {
    ImageRgb8 color;
    ImageGray16 depth;
    ImageRgb8 mask;
  };
  std::vector<RawFrame> raw(static_cast<size_t>(n_frames));
  for (int i = 0; i < n_frames; ++i) {
    auto color_p = root / detail::frame_file("color", i);
    auto depth_p = root / detail::frame_file("depth", i);
    auto mask_p = root / detail::frame_file("mask", i);
    for (const auto& p : {color_p, depth_p, mask_p})
      if (!fs::exists(p)) problems.push_back("missing: " + p.string());
    if (!problems.empty()) continue;
    auto& rf = raw[static_cast<size_t>(i)];
    rf.color = read_png_rgb8(color_p.string());
    rf.depth = read_png_gray16(depth_p.string());
    rf.mask = read_png_rgb8(mask_p.string());
    if (rf.color.width != ds.intr_rgb.width || rf.color.height != ds.intr_rgb.height)
      problems.push_back("color size mismatch: " + color_p.string());
    if (rf.depth.width != ds.intr_depth.width ||
        rf.depth.height != ds.intr_depth.height)
      problems.push_back("depth size mismatch: " + depth_p.string());
    if (rf.mask.width != ds.intr_depth.width || rf.mask.height != ds.intr_depth.height)
      problems.push_back("mask size mismatch: " + mask_p.string());
  }
  if (!problems.empty()) {
    std::string msg = "load_dataset: " + root.string();
    for (const auto& p : problems) msg += "\n  " + p;
    throw Error(msg);
  }

  // normalization from masked, valid back-projected depth
  Camera<T> cam0;
  cam0.intr = ds.intr_depth;
  std::vector<Vec3<T>> pts;
  for (int i = 0; i < n_frames; ++i) {
    const auto& rf = raw[static_cast<size_t>(i)];
    cam0.base = poses[static_cast<size_t>(i)];
    for (int y = 0; y < rf.depth.height; ++y)
      for (int x = 0; x < rf.depth.width; ++x) {
        if (rf.mask.px(x, y)[0] < 128 || rf.depth.at(x, y) == 0) continue;
        T z = static_cast<T>(rf.depth.at(x, y)) / ds_depth;
        pts.push_back(cam0.back_project(static_cast<T>(x), static_cast<T>(y), z));
      }
  }
  NDR_CHECK(!pts.empty(), "load_dataset: no valid masked depth in " + root.string());
  Vec3<T> center = Vec3<T>::Zero();
  for (const auto& p : pts) center += p;
  center /= static_cast<T>(pts.size());
  T radius = T(0);
  for (const auto& p : pts) radius = std::max(radius, (p - center).norm());
  ds.norm.center = center;
  ds.norm.radius = radius * T(1.001) + T(1e-9);

  // second pass: normalized frames
  ds.frames.reserve(static_cast<size_t>(n_frames));
  for (int i = 0; i < n_frames; ++i) {
    auto& rf = raw[static_cast<size_t>(i)];
    FrameRecord<T> fr;
    fr.index = i;
    fr.color = std::move(rf.color);
    fr.depth = Mat<T>::Zero(ds.intr_depth.height, ds.intr_depth.width);
    fr.mask = Mat<T>::Zero(ds.intr_depth.height, ds.intr_depth.width);
    for (int y = 0; y < ds.intr_depth.height; ++y)
      for (int x = 0; x < ds.intr_depth.width; ++x) {
        fr.mask(y, x) = rf.mask.px(x, y)[0] >= 128 ? T(1) : T(0);
        uint16_t dv = rf.depth.at(x, y);
        if (dv != 0)
          fr.depth(y, x) = static_cast<T>(dv) / ds_depth / ds.norm.radius;
      }
    fr.base_pose.rot = poses[static_cast<size_t>(i)].rot;
    fr.base_pose.trans = ds.norm.to_unit(poses[static_cast<size_t>(i)].trans);
    ds.frames.push_back(std::move(fr));
  }
  return ds;
}

// Camera for a frame's base pose in normalized units; learnable deltas are
// applied by the caller.
template <class T>
Camera<T> make_camera(const Dataset<T>& ds, int frame, CameraRole role) {
  NDR_CHECK(frame >= 0 && frame < ds.frame_count(),
            "make_camera: frame out of range");
  Camera<T> cam;
  cam.intr = role == CameraRole::Depth ? ds.intr_depth : ds.intr_rgb;
  cam.base = ds.frames[static_cast<size_t>(frame)].base_pose;
  cam.role = role;
  return cam;
}

}  // namespace ndr
