#pragma once

// Triangle meshes: iso-surface extraction on a regular grid, OBJ/PLY output,
// OBJ input. Extraction splits every cell into six tetrahedra sharing the
// same main diagonal, so neighboring cells agree on shared faces and the
// result is a welded, consistently oriented surface with no ambiguous cases.

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ndr/common.hpp"

namespace ndr {

template <class T>
struct TriangleMesh {
  std::vector<Vec3<T>> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<Vec3<T>> colors;  // optional, per-vertex, empty or |vertices|

  bool empty() const { return faces.empty(); }

  void validate() const {
    int n = static_cast<int>(vertices.size());
    for (const auto& v : vertices)
      NDR_CHECK(v.allFinite(), "mesh: non-finite vertex");
    for (const auto& f : faces)
      for (int i : f)
        NDR_CHECK(i >= 0 && i < n, "mesh: face index out of range");
    NDR_CHECK(colors.empty() || colors.size() == vertices.size(),
              "mesh: color count mismatch");
  }
};

namespace detail {

// Corner offsets of a cell, and the six-tetra split around diagonal 0-6.
inline constexpr std::array<std::array<int, 3>, 8> kCorner = {{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};
inline constexpr std::array<std::array<int, 4>, 6> kTets = {{
    {0, 1, 2, 6}, {0, 2, 3, 6}, {0, 3, 7, 6},
    {0, 7, 4, 6}, {0, 4, 5, 6}, {0, 5, 1, 6},
}};

}  // namespace detail

// Extracts the zero level set of `field` over the axis-aligned box [lo, hi]
// sampled at (res+1)^3 lattice points. `field` maps 3xM points to a 1xM row
// and is called once per z-slab. An empty zero set yields an empty mesh.
template <class T, class Field>
TriangleMesh<T> extract_isosurface(Field&& field, const Vec3<T>& lo,
                                   const Vec3<T>& hi, int res) {
  NDR_CHECK(res >= 2, "extract_isosurface: resolution must be >= 2");
  NDR_CHECK((hi - lo).minCoeff() > T(0), "extract_isosurface: empty box");
  int n = res + 1;
  Vec3<T> step = (hi - lo) / static_cast<T>(res);

  auto lattice = [&](int i, int j, int k) {
    return Vec3<T>(lo.x() + step.x() * i, lo.y() + step.y() * j,
                   lo.z() + step.z() * k);
  };
  auto vid = [&](int i, int j, int k) -> int64_t {
    return (static_cast<int64_t>(k) * n + j) * n + i;
  };

  // two slabs of field values, rolled along z
  Mat<T> slab_lo(n, n), slab_hi(n, n);
  auto eval_slab = [&](int k, Mat<T>& out) {
    Mat<T> pts(3, static_cast<Eigen::Index>(n) * n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        pts.col(static_cast<Eigen::Index>(j) * n + i) = lattice(i, j, k);
    Mat<T> d = field(pts);
    NDR_CHECK(d.rows() == 1 && d.cols() == pts.cols(),
              "extract_isosurface: field shape");
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) out(i, j) = d(0, static_cast<Eigen::Index>(j) * n + i);
  };

  TriangleMesh<T> mesh;
  std::map<std::pair<int64_t, int64_t>, int> edge_vertex;

  auto edge_point = [&](int64_t ida, int64_t idb, const Vec3<T>& pa,
                        const Vec3<T>& pb, T da, T db) {
    auto key = ida < idb ? std::make_pair(ida, idb) : std::make_pair(idb, ida);
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    T t = da / (da - db);  // da, db have opposite signs
    t = std::clamp(t, T(0), T(1));
    mesh.vertices.push_back(pa + t * (pb - pa));
    int idx = static_cast<int>(mesh.vertices.size()) - 1;
    edge_vertex.emplace(key, idx);
    return idx;
  };

  eval_slab(0, slab_lo);
  for (int k = 0; k < res; ++k) {
    eval_slab(k + 1, slab_hi);
    for (int j = 0; j < res; ++j) {
      for (int i = 0; i < res; ++i) {
        T val[8];
        Vec3<T> pos[8];
        int64_t id[8];
        for (int c = 0; c < 8; ++c) {
          auto [di, dj, dk] = detail::kCorner[static_cast<size_t>(c)];
          const Mat<T>& slab = dk ? slab_hi : slab_lo;
          val[c] = slab(i + di, j + dj);
          pos[c] = lattice(i + di, j + dj, k + dk);
          id[c] = vid(i + di, j + dj, k + dk);
        }
        for (const auto& tet : detail::kTets) {
          // inside = d < 0
          int inside[4], n_in = 0, outside[4], n_out = 0;
          for (int c = 0; c < 4; ++c) {
            if (val[tet[static_cast<size_t>(c)]] < T(0))
              inside[n_in++] = tet[static_cast<size_t>(c)];
            else
              outside[n_out++] = tet[static_cast<size_t>(c)];
          }
          auto ept = [&](int a, int b) {
            return edge_point(id[a], id[b], pos[a], pos[b], val[a], val[b]);
          };
          auto emit = [&](int a, int b, int c) {
            if (a == b || b == c || a == c) return;
            // orient the face outward (normal toward positive field)
            Vec3<T> normal = (mesh.vertices[static_cast<size_t>(b)] -
                              mesh.vertices[static_cast<size_t>(a)])
                                 .cross(mesh.vertices[static_cast<size_t>(c)] -
                                        mesh.vertices[static_cast<size_t>(a)]);
            Vec3<T> out_dir = pos[outside[0]] - pos[inside[0]];
            if (normal.dot(out_dir) >= T(0))
              mesh.faces.push_back({a, b, c});
            else
              mesh.faces.push_back({a, c, b});
          };
          if (n_in == 1) {
            emit(ept(inside[0], outside[0]), ept(inside[0], outside[1]),
                 ept(inside[0], outside[2]));
          } else if (n_in == 3) {
            emit(ept(inside[0], outside[0]), ept(inside[1], outside[0]),
                 ept(inside[2], outside[0]));
          } else if (n_in == 2) {
            int v00 = ept(inside[0], outside[0]), v01 = ept(inside[0], outside[1]);
            int v10 = ept(inside[1], outside[0]), v11 = ept(inside[1], outside[1]);
            emit(v00, v01, v11);
            emit(v00, v11, v10);
          }
        }
      }
    }
    std::swap(slab_lo, slab_hi);
  }
  return mesh;
}

// ---------------------------------------------------------------------------
// File formats

template <class T>
void write_obj(const TriangleMesh<T>& mesh, const std::string& path) {
  mesh.validate();
  std::ofstream f(path);
  NDR_CHECK(f.good(), "write_obj: cannot open " + path);
  f.precision(9);
  bool colored = !mesh.colors.empty();
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    const auto& v = mesh.vertices[i];
    f << "v " << v.x() << " " << v.y() << " " << v.z();
    if (colored) {
      const auto& c = mesh.colors[i];
      f << " " << c.x() << " " << c.y() << " " << c.z();
    }
    f << "\n";
  }
  for (const auto& face : mesh.faces)
    f << "f " << face[0] + 1 << " " << face[1] + 1 << " " << face[2] + 1 << "\n";
  NDR_CHECK(f.good(), "write_obj: write failed for " + path);
}

template <class T>
TriangleMesh<T> read_obj(const std::string& path) {
  std::ifstream f(path);
  NDR_CHECK(f.good(), "read_obj: cannot open " + path);
  TriangleMesh<T> mesh;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      double x, y, z;
      NDR_CHECK(static_cast<bool>(ss >> x >> y >> z),
                "read_obj: malformed vertex in " + path);
      mesh.vertices.emplace_back(static_cast<T>(x), static_cast<T>(y),
                                 static_cast<T>(z));
      double r, g, b;
      if (ss >> r >> g >> b)
        mesh.colors.emplace_back(static_cast<T>(r), static_cast<T>(g),
                                 static_cast<T>(b));
    } else if (tag == "f") {
      std::array<int, 3> face{};
      for (int i = 0; i < 3; ++i) {
        std::string tok;
        NDR_CHECK(static_cast<bool>(ss >> tok), "read_obj: malformed face");
        face[static_cast<size_t>(i)] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      mesh.faces.push_back(face);
    }
  }
  if (!mesh.colors.empty())
    NDR_CHECK(mesh.colors.size() == mesh.vertices.size(),
              "read_obj: partial vertex colors in " + path);
  mesh.validate();
  return mesh;
}

template <class T>
void write_ply(const TriangleMesh<T>& mesh, const std::string& path) {
  mesh.validate();
  std::ofstream f(path);
  NDR_CHECK(f.good(), "write_ply: cannot open " + path);
  bool colored = !mesh.colors.empty();
  f << "ply\nformat ascii 1.0\n";
  f << "element vertex " << mesh.vertices.size() << "\n";
  f << "property float x\nproperty float y\nproperty float z\n";
  if (colored)
    f << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  f << "element face " << mesh.faces.size() << "\n";
  f << "property list uchar int vertex_indices\nend_header\n";
  f.precision(9);
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    const auto& v = mesh.vertices[i];
    f << v.x() << " " << v.y() << " " << v.z();
    if (colored) {
      auto q = [](T x) {
        return std::clamp(static_cast<int>(x * T(255) + T(0.5)), 0, 255);
      };
      const auto& c = mesh.colors[i];
      f << " " << q(c.x()) << " " << q(c.y()) << " " << q(c.z());
    }
    f << "\n";
  }
  for (const auto& face : mesh.faces)
    f << "3 " << face[0] << " " << face[1] << " " << face[2] << "\n";
  NDR_CHECK(f.good(), "write_ply: write failed for " + path);
}

// Euler characteristic V - E + F of a welded mesh; 2 for a closed genus-0
// surface. Edges counted as unordered vertex pairs.
template <class T>
int64_t euler_characteristic(const TriangleMesh<T>& mesh) {
  std::map<std::pair<int, int>, int> edges;
  for (const auto& f : mesh.faces)
    for (int i = 0; i < 3; ++i) {
      int a = f[static_cast<size_t>(i)], b = f[static_cast<size_t>((i + 1) % 3)];
      edges[a < b ? std::make_pair(a, b) : std::make_pair(b, a)]++;
    }
  return static_cast<int64_t>(mesh.vertices.size()) -
         static_cast<int64_t>(edges.size()) +
         static_cast<int64_t>(mesh.faces.size());
}

}  // namespace ndr
