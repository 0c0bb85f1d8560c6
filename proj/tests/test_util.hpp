#pragma once

#include <random>

#include "cctune/mesh.hpp"

namespace cctune::testutil {

// Tensor-product grid of nx x ny cells over [0,Lx] x [0,Ly].
inline ControlMesh make_grid(int nx, int ny, double Lx = 10.0, double Ly = 10.0) {
  ControlMesh m;
  m.vertices.resize((nx + 1) * (ny + 1), 3);
  auto vid = [&](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      m.vertices.row(vid(i, j)) << Lx * i / nx, Ly * j / ny, 0.0;
  m.faces.resize(nx * ny, 4);
  int f = 0;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i, ++f) {
      m.faces(f, 0) = vid(i, j);
      m.faces(f, 1) = vid(i + 1, j);
      m.faces(f, 2) = vid(i + 1, j + 1);
      m.faces(f, 3) = vid(i, j + 1);
    }
  return m;
}

// Disk-like mesh with a single interior vertex of the given valence at the
// origin, surrounded by `rings` rings of faces. Vertex (s, i, j) sits at
// i*u_s + j*u_{s+1} with u_s the unit spine directions, which embeds each
// wedge linearly in its angular sector.
inline ControlMesh make_wedge_mesh(int valence, int rings, double z_jitter = 0.0,
                                   double xy_jitter = 0.0, unsigned seed = 42) {
  const int v = valence, R = rings;
  auto id = [&](int s, int i, int j) {
    // i in 1..R, j in 0..R
    return 1 + ((s % v + v) % v) * (R * (R + 1)) + (i - 1) * (R + 1) + j;
  };
  auto resolve = [&](int s, int i, int j) -> Index {
    if (i == 0 && j == 0) return 0;
    if (i == 0) return id(s + 1, j, 0);
    return id(s, i, j);
  };
  ControlMesh m;
  m.vertices.resize(1 + v * R * (R + 1), 3);
  m.vertices.row(0).setZero();
  for (int s = 0; s < v; ++s) {
    double t0 = 2.0 * M_PI * s / v, t1 = 2.0 * M_PI * (s + 1) / v;
    Eigen::RowVector3d u0(std::cos(t0), std::sin(t0), 0.0);
    Eigen::RowVector3d u1(std::cos(t1), std::sin(t1), 0.0);
    for (int i = 1; i <= R; ++i)
      for (int j = 0; j <= R; ++j) m.vertices.row(id(s, i, j)) = i * u0 + j * u1;
  }
  m.faces.resize(v * R * R, 4);
  int f = 0;
  for (int s = 0; s < v; ++s)
    for (int ci = 0; ci < R; ++ci)
      for (int cj = 0; cj < R; ++cj, ++f) {
        m.faces(f, 0) = resolve(s, ci, cj);
        m.faces(f, 1) = resolve(s, ci + 1, cj);
        m.faces(f, 2) = resolve(s, ci + 1, cj + 1);
        m.faces(f, 3) = resolve(s, ci, cj + 1);
      }
  if (z_jitter > 0 || xy_jitter > 0) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dz(-z_jitter, z_jitter);
    std::uniform_real_distribution<double> dxy(-xy_jitter, xy_jitter);
    for (Index i = 0; i < m.vertex_count(); ++i) {
      m.vertices(i, 0) += dxy(rng);
      m.vertices(i, 1) += dxy(rng);
      m.vertices(i, 2) += dz(rng);
    }
  }
  return m;
}

// 4x4-cell grid with one interior edge rotated, producing a v3/v5 dipole
// pair (adjacent extraordinary vertices).
inline ControlMesh make_edge_rotated_grid() {
  ControlMesh m = make_grid(4, 4);
  auto vid = [&](int i, int j) { return j * 5 + i; };
  // cells [1,2]x[1,2] and [2,3]x[1,2] share the edge vid(2,1)-vid(2,2);
  // replace them by the two quads of the hexagon split along the other
  // diagonal (vid(1,1) -> vid(3,2)).
  // Hexagon (1,1)(2,1)(3,1)(3,2)(2,2)(1,2) re-split along the diagonal
  // (1,1)-(3,2): v5 at (1,1) and (3,2), v3 at (2,1) and (2,2).
  std::vector<std::array<Index, 4>> faces;
  for (Index f = 0; f < m.face_count(); ++f) {
    std::array<Index, 4> q = {m.faces(f, 0), m.faces(f, 1), m.faces(f, 2),
                              m.faces(f, 3)};
    bool is_left = q[0] == vid(1, 1) && q[1] == vid(2, 1);
    bool is_right = q[0] == vid(2, 1) && q[1] == vid(3, 1);
    if (is_left || is_right) continue;
    faces.push_back(q);
  }
  faces.push_back({vid(1, 1), vid(2, 1), vid(3, 1), vid(3, 2)});
  faces.push_back({vid(1, 1), vid(3, 2), vid(2, 2), vid(1, 2)});
  ControlMesh out;
  out.vertices = m.vertices;
  out.faces.resize(static_cast<Index>(faces.size()), 4);
  for (Index f = 0; f < out.face_count(); ++f)
    for (int k = 0; k < 4; ++k) out.faces(f, k) = faces[f][k];
  return out;
}

inline Eigen::MatrixX3d random_affine_image(const Eigen::MatrixX3d& P,
                                            unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Eigen::Matrix3d A;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) A(i, j) = d(rng) + (i == j ? 1.5 : 0.0);
  Eigen::RowVector3d b(d(rng), d(rng), d(rng));
  return (P * A.transpose()).rowwise() + b;
}

}  // namespace cctune::testutil
