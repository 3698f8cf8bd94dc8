#pragma once

// Symmetric Chamfer distance between triangle meshes: exact point-to-triangle
// distances from area-weighted surface samples, accelerated by a uniform grid
// over triangle bounding boxes.

#include <limits>
#include <vector>

#include "ndr/common.hpp"
#include "ndr/mesh.hpp"

namespace ndr {

// Exact closest distance from p to triangle (a, b, c).
template <class T>
T point_triangle_distance(const Vec3<T>& p, const Vec3<T>& a, const Vec3<T>& b,
                          const Vec3<T>& c) {
  // region classification after Ericson
  Vec3<T> ab = b - a, ac = c - a, ap = p - a;
  T d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= T(0) && d2 <= T(0)) return (p - a).norm();

  Vec3<T> bp = p - b;
  T d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= T(0) && d4 <= d3) return (p - b).norm();

  T vc = d1 * d4 - d3 * d2;
  if (vc <= T(0) && d1 >= T(0) && d3 <= T(0)) {
    T v = d1 / (d1 - d3);
    return (p - (a + v * ab)).norm();
  }

  Vec3<T> cp = p - c;
  T d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= T(0) && d5 <= d6) return (p - c).norm();

  T vb = d5 * d2 - d1 * d6;
  if (vb <= T(0) && d2 >= T(0) && d6 <= T(0)) {
    T w = d2 / (d2 - d6);
    return (p - (a + w * ac)).norm();
  }

  T va = d3 * d6 - d5 * d4;
  if (va <= T(0) && (d4 - d3) >= T(0) && (d5 - d6) >= T(0)) {
    T w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (p - (b + w * (c - b))).norm();
  }

  T denom = T(1) / (va + vb + vc);
  T v = vb * denom, w = vc * denom;
  return (p - (a + v * ab + w * ac)).norm();
}

// Uniform-grid spatial index over mesh triangles.
template <class T>
class MeshDistanceIndex {
 public:
  explicit MeshDistanceIndex(const TriangleMesh<T>& mesh, int cells = 48)
      : mesh_(mesh), cells_(cells) {
    NDR_CHECK(!mesh.faces.empty(), "MeshDistanceIndex: empty mesh");
    lo_ = hi_ = mesh.vertices[0];
    for (const auto& v : mesh.vertices) {
      lo_ = lo_.cwiseMin(v);
      hi_ = hi_.cwiseMax(v);
    }
    Vec3<T> span = (hi_ - lo_).cwiseMax(T(1e-9));
    lo_ -= T(1e-6) * span;
    hi_ += T(1e-6) * span;
    cell_ = (hi_ - lo_) / static_cast<T>(cells_);
    grid_.resize(static_cast<size_t>(cells_) * cells_ * cells_);
    for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
      Vec3<T> tlo = tri_vertex(f, 0), thi = tlo;
      for (int i = 1; i < 3; ++i) {
        tlo = tlo.cwiseMin(tri_vertex(f, i));
        thi = thi.cwiseMax(tri_vertex(f, i));
      }
      auto c0 = cell_of(tlo), c1 = cell_of(thi);
      for (int z = c0[2]; z <= c1[2]; ++z)
        for (int y = c0[1]; y <= c1[1]; ++y)
          for (int x = c0[0]; x <= c1[0]; ++x)
            grid_[index(x, y, z)].push_back(f);
    }
  }

  // Exact closest distance from p to the mesh surface.
  T distance(const Vec3<T>& p) const {
    auto center = cell_of(p);
    T best = std::numeric_limits<T>::infinity();
    T min_cell = cell_.minCoeff();
    for (int ring = 0; ring < cells_; ++ring) {
      // all candidate triangles within `ring` cells of p
      bool any = false;
      for (int z = center[2] - ring; z <= center[2] + ring; ++z) {
        if (z < 0 || z >= cells_) continue;
        for (int y = center[1] - ring; y <= center[1] + ring; ++y) {
          if (y < 0 || y >= cells_) continue;
          for (int x = center[0] - ring; x <= center[0] + ring; ++x) {
            if (x < 0 || x >= cells_) continue;
            bool shell = ring == 0 ||
                         std::abs(x - center[0]) == ring ||
                         std::abs(y - center[1]) == ring ||
                         std::abs(z - center[2]) == ring;
            if (!shell) continue;
            any = true;
            for (int f : grid_[index(x, y, z)]) {
              T d = point_triangle_distance(p, tri_vertex(f, 0),
                                            tri_vertex(f, 1), tri_vertex(f, 2));
              best = std::min(best, d);
            }
          }
        }
      }
      // a hit within `ring` cells rules out anything beyond ring+1
      if (std::isfinite(best) && best < static_cast<T>(ring) * min_cell) break;
      if (!any && ring > 0 && std::isfinite(best)) break;
    }
    return best;
  }

 private:
  Vec3<T> tri_vertex(int face, int i) const {
    return mesh_.vertices[static_cast<size_t>(
        mesh_.faces[static_cast<size_t>(face)][static_cast<size_t>(i)])];
  }
  std::array<int, 3> cell_of(const Vec3<T>& p) const {
    std::array<int, 3> c;
    for (int i = 0; i < 3; ++i)
      c[static_cast<size_t>(i)] = std::clamp(
          static_cast<int>((p[i] - lo_[i]) / cell_[i]), 0, cells_ - 1);
    return c;
  }
  size_t index(int x, int y, int z) const {
    return (static_cast<size_t>(z) * cells_ + static_cast<size_t>(y)) * cells_ +
           static_cast<size_t>(x);
  }

  const TriangleMesh<T>& mesh_;
  int cells_;
  Vec3<T> lo_, hi_, cell_;
  std::vector<std::vector<int>> grid_;
};

// Deterministic area-weighted surface samples.
template <class T>
std::vector<Vec3<T>> sample_surface(const TriangleMesh<T>& mesh, int n,
                                    Rng& rng) {
  NDR_CHECK(!mesh.faces.empty(), "sample_surface: empty mesh");
  std::vector<T> cdf(mesh.faces.size() + 1, T(0));
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& face = mesh.faces[f];
    Vec3<T> a = mesh.vertices[static_cast<size_t>(face[0])];
    Vec3<T> b = mesh.vertices[static_cast<size_t>(face[1])];
    Vec3<T> c = mesh.vertices[static_cast<size_t>(face[2])];
    cdf[f + 1] = cdf[f] + (b - a).cross(c - a).norm() / T(2);
  }
  NDR_CHECK(cdf.back() > T(0), "sample_surface: degenerate mesh");

  std::vector<Vec3<T>> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    T u = static_cast<T>(rng.uniform(0.0, 1.0)) * cdf.back();
    size_t f = static_cast<size_t>(
        std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    f = std::min(f > 0 ? f - 1 : 0, mesh.faces.size() - 1);
    const auto& face = mesh.faces[f];
    T r1 = std::sqrt(static_cast<T>(rng.uniform(0.0, 1.0)));
    T r2 = static_cast<T>(rng.uniform(0.0, 1.0));
    Vec3<T> a = mesh.vertices[static_cast<size_t>(face[0])];
    Vec3<T> b = mesh.vertices[static_cast<size_t>(face[1])];
    Vec3<T> c = mesh.vertices[static_cast<size_t>(face[2])];
    out.push_back((T(1) - r1) * a + r1 * (T(1) - r2) * b + r1 * r2 * c);
  }
  return out;
}

// Symmetric mean closest-point distance; infinity when either mesh is empty.
template <class T>
T chamfer(const TriangleMesh<T>& a, const TriangleMesh<T>& b, int n_samples,
          unsigned seed = 1) {
  if (a.faces.empty() || b.faces.empty())
    return std::numeric_limits<T>::infinity();
  Rng rng(seed);
  MeshDistanceIndex<T> ia(a), ib(b);
  auto mean_dist = [&](const TriangleMesh<T>& from,
                       const MeshDistanceIndex<T>& to) {
    auto pts = sample_surface(from, n_samples, rng);
    T sum = T(0);
    for (const auto& p : pts) sum += to.distance(p);
    return sum / static_cast<T>(n_samples);
  };
  return (mean_dist(a, ib) + mean_dist(b, ia)) / T(2);
}

}  // namespace ndr
