#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cctune/core.hpp"

namespace cctune {

// Tunable refinement weights of one extraordinary vertex. gamma enters the
// face rule, beta the edge rule and alpha the vertex rule; all three weigh
// the extraordinary vertex itself against its regular neighbours.
struct Weights {
  double alpha = 0;
  double beta = 1;
  double gamma = 1;
  bool operator==(const Weights&) const = default;
};

inline Weights default_weights(int valence) {
  return {static_cast<double>(valence) * (valence - 2), 1.0, 1.0};
}

inline bool is_default(const Weights& w, int valence) {
  const Weights d = default_weights(valence);
  return w.alpha == d.alpha && w.beta == d.beta && w.gamma == d.gamma;
}

// Map extraordinary-vertex id -> (alpha, beta, gamma). Vertices without an
// entry fall back to the classic Catmull-Clark weights v(v-2), 1, 1; at
// valence 4 that reduces to the bicubic B-spline masks.
class WeightAssignment {
 public:
  void set(Index v, const Weights& w) {
    if (!(w.alpha > 0 && w.beta > 0 && w.gamma > 0))
      throw PreconditionError("weights must be strictly positive");
    map_[v] = w;
  }
  bool has(Index v) const { return map_.count(v) != 0; }
  Weights get(Index v, int valence) const {
    auto it = map_.find(v);
    return it == map_.end() ? default_weights(valence) : it->second;
  }
  bool empty() const { return map_.empty(); }

 private:
  std::unordered_map<Index, Weights> map_;
};

// Quad control mesh. Faces are counter-clockwise quadruples. Ghost metadata
// is populated only by attach_ghost_ring.
struct ControlMesh {
  Eigen::MatrixX3d vertices;                        // V x 3
  Eigen::Matrix<Index, Eigen::Dynamic, 4> faces;    // F x 4

  struct GhostSlave {
    Index mirror = -1;  // -1: slaved to zero
    double sign = -1.0;
  };
  Index n_physical = -1;  // < 0: no ghosts attached
  std::unordered_map<Index, GhostSlave> ghost_slaves;

  Index vertex_count() const { return static_cast<Index>(vertices.rows()); }
  Index face_count() const { return static_cast<Index>(faces.rows()); }
  bool has_ghosts() const { return n_physical >= 0; }
  bool is_ghost(Index v) const { return has_ghosts() && v >= n_physical; }
};

// Half-edge style adjacency on an immutable ControlMesh. Half-edge handles
// are h = 4*face + slot, directed corner[slot] -> corner[slot+1].
class Topology {
 public:
  explicit Topology(const ControlMesh& mesh) : mesh_(&mesh) { build(); }

  Index face_count() const { return mesh_->face_count(); }
  Index vertex_count() const { return mesh_->vertex_count(); }
  Index edge_count() const { return static_cast<Index>(edge_verts_.size()); }

  static Index face_of(Index h) { return h >> 2; }
  static Index slot_of(Index h) { return h & 3; }
  static Index next(Index h) { return (h & ~3) | ((h + 1) & 3); }
  static Index prev(Index h) { return (h & ~3) | ((h + 3) & 3); }
  Index from(Index h) const { return mesh_->faces(face_of(h), slot_of(h)); }
  Index to(Index h) const { return mesh_->faces(face_of(h), (slot_of(h) + 1) & 3); }
  Index twin(Index h) const { return twin_[h]; }
  Index edge_of_halfedge(Index h) const { return hedge_edge_[h]; }

  std::pair<Index, Index> edge_vertices(Index e) const { return edge_verts_[e]; }
  Index edge_id(Index u, Index v) const {
    auto it = edge_lookup_.find(key(u, v));
    return it == edge_lookup_.end() ? -1 : it->second;
  }
  // One or two incident faces; second is -1 on the boundary.
  std::pair<Index, Index> edge_faces(Index e) const { return edge_faces_[e]; }
  bool is_boundary_edge(Index e) const { return edge_faces_[e].second < 0; }

  int valence(Index v) const { return valence_[v]; }
  bool is_boundary_vertex(Index v) const { return boundary_vertex_[v]; }
  bool is_interior_regular(Index v) const {
    return !boundary_vertex_[v] && valence_[v] == 4;
  }
  bool is_extraordinary(Index v) const {
    return !boundary_vertex_[v] && valence_[v] != 4;
  }
  std::vector<Index> extraordinary_vertices() const {
    std::vector<Index> evs;
    Index n = mesh_->has_ghosts() ? mesh_->n_physical : vertex_count();
    for (Index v = 0; v < n; ++v)
      if (is_extraordinary(v)) evs.push_back(v);
    return evs;
  }

  Index halfedge_from_to(Index u, Index v) const {
    auto it = directed_.find(key_dir(u, v));
    return it == directed_.end() ? -1 : it->second;
  }

  // CCW rotation of an outgoing half-edge about its source vertex.
  // Returns -1 when the rotation crosses the mesh boundary.
  Index rot_ccw(Index h) const {
    Index p = prev(h);
    return twin_[p];
  }
  Index rot_cw(Index h) const {
    Index t = twin_[h];
    return t < 0 ? -1 : next(t);
  }

  // Outgoing half-edges of an interior vertex in CCW order, starting with
  // the edge towards first_neighbor (smallest neighbour id if negative).
  std::vector<Index> outgoing_ccw(Index v, Index first_neighbor = -1) const {
    if (boundary_vertex_[v])
      throw PreconditionError("outgoing_ccw: boundary vertex");
    Index h0 = -1;
    if (first_neighbor >= 0) {
      h0 = halfedge_from_to(v, first_neighbor);
      if (h0 < 0) throw PreconditionError("outgoing_ccw: no such neighbour");
    } else {
      Index best = std::numeric_limits<Index>::max();
      Index h = vertex_halfedge_[v];
      for (int k = 0; k < valence_[v]; ++k) {
        if (to(h) < best) {
          best = to(h);
          h0 = h;
        }
        h = rot_ccw(h);
      }
    }
    std::vector<Index> out;
    Index h = h0;
    for (int k = 0; k < valence_[v]; ++k) {
      out.push_back(h);
      h = rot_ccw(h);
      if (h < 0) throw PreconditionError("outgoing_ccw: boundary reached");
    }
    if (h != h0) throw NumericalError("one-ring traversal did not close");
    return out;
  }

 private:
  static std::uint64_t key(Index u, Index v) {
    if (u > v) std::swap(u, v);
    return (static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint32_t>(v);
  }
  static std::uint64_t key_dir(Index u, Index v) {
    return (static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint32_t>(v);
  }

  void build() {
    const auto& F = mesh_->faces;
    Index nV = mesh_->vertex_count();
    Index nF = mesh_->face_count();
    for (Index f = 0; f < nF; ++f) {
      for (int s = 0; s < 4; ++s) {
        Index u = F(f, s);
        if (u < 0 || u >= nV) throw PreconditionError("face index out of range");
        for (int t = s + 1; t < 4; ++t)
          if (F(f, t) == u) throw PreconditionError("face with repeated vertex");
      }
    }
    twin_.assign(4 * nF, -1);
    hedge_edge_.assign(4 * nF, -1);
    valence_.assign(nV, 0);
    boundary_vertex_.assign(nV, false);
    vertex_halfedge_.assign(nV, -1);
    directed_.reserve(4 * nF);
    for (Index f = 0; f < nF; ++f) {
      for (int s = 0; s < 4; ++s) {
        Index h = 4 * f + s;
        Index u = from(h), v = to(h);
        if (!directed_.emplace(key_dir(u, v), h).second)
          throw PreconditionError(
              "non-manifold edge (duplicate directed edge / inconsistent "
              "winding)");
        valence_[u]++;
        vertex_halfedge_[u] = h;
      }
    }
    for (Index f = 0; f < nF; ++f) {
      for (int s = 0; s < 4; ++s) {
        Index h = 4 * f + s;
        Index u = from(h), v = to(h);
        auto it = directed_.find(key_dir(v, u));
        twin_[h] = (it == directed_.end()) ? -1 : it->second;
        auto ek = key(u, v);
        auto eit = edge_lookup_.find(ek);
        if (eit == edge_lookup_.end()) {
          Index e = static_cast<Index>(edge_verts_.size());
          edge_lookup_.emplace(ek, e);
          edge_verts_.emplace_back(std::min(u, v), std::max(u, v));
          edge_faces_.emplace_back(f, -1);
          hedge_edge_[h] = e;
        } else {
          Index e = eit->second;
          if (edge_faces_[e].first != f) {
            if (edge_faces_[e].second >= 0)
              throw PreconditionError("non-manifold edge (more than 2 faces)");
            edge_faces_[e].second = f;
          }
          hedge_edge_[h] = e;
        }
      }
    }
    for (Index e = 0; e < edge_count(); ++e) {
      if (edge_faces_[e].second < 0) {
        boundary_vertex_[edge_verts_[e].first] = true;
        boundary_vertex_[edge_verts_[e].second] = true;
      }
    }
  }

  const ControlMesh* mesh_;
  std::vector<Index> twin_;
  std::vector<Index> hedge_edge_;
  std::vector<int> valence_;
  std::vector<bool> boundary_vertex_;
  std::vector<Index> vertex_halfedge_;
  std::unordered_map<std::uint64_t, Index> directed_;
  std::unordered_map<std::uint64_t, Index> edge_lookup_;
  std::vector<std::pair<Index, Index>> edge_verts_;
  std::vector<std::pair<Index, Index>> edge_faces_;
};

// ---------------------------------------------------------------------------
// OBJ I/O (quads only, 1-based indices)

inline ControlMesh load_mesh(std::istream& in) {
  std::vector<Eigen::Vector3d> verts;
  std::vector<std::array<Index, 4>> faces;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "#" || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ss >> x >> y >> z))
        throw IoError("line " + std::to_string(lineno) + ": malformed vertex");
      verts.push_back({x, y, z});
    } else if (tag == "f") {
      std::vector<long> idx;
      std::string tok;
      while (ss >> tok) {
        // tolerate v/vt/vn syntax, use the vertex index only
        idx.push_back(std::strtol(tok.c_str(), nullptr, 10));
      }
      if (idx.size() != 4)
        throw IoError("line " + std::to_string(lineno) + ": non-quad face");
      std::array<Index, 4> f{};
      for (int k = 0; k < 4; ++k) {
        long i = idx[k];
        if (i < 0) i = static_cast<long>(verts.size()) + 1 + i;
        if (i < 1 || i > static_cast<long>(verts.size()))
          throw IoError("line " + std::to_string(lineno) +
                        ": face index out of range");
        f[k] = static_cast<Index>(i - 1);
      }
      faces.push_back(f);
    }
    // other tags (vn, vt, o, g, s, mtllib, usemtl) ignored
  }
  if (faces.empty()) throw IoError("mesh has no faces");
  ControlMesh mesh;
  mesh.vertices.resize(static_cast<Index>(verts.size()), 3);
  for (Index i = 0; i < mesh.vertex_count(); ++i) mesh.vertices.row(i) = verts[i];
  mesh.faces.resize(static_cast<Index>(faces.size()), 4);
  for (Index f = 0; f < mesh.face_count(); ++f)
    for (int k = 0; k < 4; ++k) mesh.faces(f, k) = faces[f][k];
  Topology check(mesh);  // validates manifoldness and winding
  return mesh;
}

inline ControlMesh load_mesh_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mesh file: " + path);
  try {
    return load_mesh(in);
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  } catch (const PreconditionError& e) {
    throw IoError(path + ": " + e.what());
  }
}

inline void save_mesh(const ControlMesh& mesh, std::ostream& out,
                      bool include_ghosts = false) {
  Index nV = mesh.vertex_count();
  Index limitV = (mesh.has_ghosts() && !include_ghosts) ? mesh.n_physical : nV;
  out << "# cctune quad mesh\n";
  char buf[128];
  for (Index i = 0; i < limitV; ++i) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", mesh.vertices(i, 0),
                  mesh.vertices(i, 1), mesh.vertices(i, 2));
    out << buf;
  }
  for (Index f = 0; f < mesh.face_count(); ++f) {
    bool ghost_face = false;
    for (int k = 0; k < 4; ++k)
      if (mesh.faces(f, k) >= limitV) ghost_face = true;
    if (ghost_face) continue;
    out << "f " << mesh.faces(f, 0) + 1 << ' ' << mesh.faces(f, 1) + 1 << ' '
        << mesh.faces(f, 2) + 1 << ' ' << mesh.faces(f, 3) + 1 << '\n';
  }
  if (include_ghosts && mesh.has_ghosts()) {
    for (Index i = mesh.n_physical; i < nV; ++i) out << "# ghost " << i + 1 << '\n';
  }
}

inline void save_mesh_file(const ControlMesh& mesh, const std::string& path,
                           bool include_ghosts = false) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write mesh file: " + path);
  save_mesh(mesh, out, include_ghosts);
}

// ---------------------------------------------------------------------------
// One Catmull-Clark refinement step (cascaded rules, tunable weights)

// New vertex layout: [vertex points | edge points | face points], so the
// provenance of every new vertex is implicit in its index.
struct SubdivisionResult {
  ControlMesh mesh;
  Index nV = 0, nE = 0, nF = 0;  // counts of the input mesh
  Index vertex_point(Index v) const { return v; }
  Index edge_point(Index e) const { return nV + e; }
  Index face_point(Index f) const { return nV + nE + f; }
};

inline SubdivisionResult subdivide(const ControlMesh& mesh,
                                   const WeightAssignment& weights = {}) {
  Topology topo(mesh);
  const Index nV = mesh.vertex_count();
  const Index nE = topo.edge_count();
  const Index nF = mesh.face_count();

  SubdivisionResult res;
  res.nV = nV;
  res.nE = nE;
  res.nF = nF;
  res.mesh.vertices.resize(nV + nE + nF, 3);
  res.mesh.faces.resize(4 * nF, 4);
  auto& NV = res.mesh.vertices;

  std::vector<Weights> vw(nV);
  for (Index v = 0; v < nV; ++v) vw[v] = weights.get(v, topo.valence(v));

  // face points
  for (Index f = 0; f < nF; ++f) {
    Index tuned = -1;
    for (int k = 0; k < 4; ++k) {
      Index c = mesh.faces(f, k);
      if (!topo.is_boundary_vertex(c) && vw[c].gamma != 1.0) {
        if (tuned >= 0)
          throw PreconditionError(
              "face with two tuned extraordinary corners; refine once first");
        tuned = c;
      }
    }
    Eigen::RowVector3d p = Eigen::RowVector3d::Zero();
    if (tuned < 0) {
      for (int k = 0; k < 4; ++k) p += mesh.vertices.row(mesh.faces(f, k));
      p /= 4.0;
    } else {
      double g = vw[tuned].gamma;
      for (int k = 0; k < 4; ++k) {
        Index c = mesh.faces(f, k);
        p += (c == tuned ? g : 1.0) * mesh.vertices.row(c);
      }
      p /= (g + 3.0);
    }
    NV.row(res.face_point(f)) = p;
  }

  // edge points
  for (Index e = 0; e < nE; ++e) {
    auto [u, v] = topo.edge_vertices(e);
    auto [f1, f2] = topo.edge_faces(e);
    if (f2 < 0) {
      NV.row(res.edge_point(e)) =
          0.5 * (mesh.vertices.row(u) + mesh.vertices.row(v));
      continue;
    }
    Index tuned = -1;
    if (!topo.is_boundary_vertex(u) && vw[u].beta != 1.0) tuned = u;
    if (!topo.is_boundary_vertex(v) && vw[v].beta != 1.0) {
      if (tuned >= 0)
        throw PreconditionError(
            "edge with two tuned extraordinary endpoints; refine once first");
      tuned = v;
    }
    Eigen::RowVector3d fp = NV.row(res.face_point(f1)) + NV.row(res.face_point(f2));
    if (tuned < 0) {
      NV.row(res.edge_point(e)) =
          (mesh.vertices.row(u) + mesh.vertices.row(v) + fp) / 4.0;
    } else {
      double b = vw[tuned].beta;
      Index other = (tuned == u) ? v : u;
      NV.row(res.edge_point(e)) =
          (b * mesh.vertices.row(tuned) + mesh.vertices.row(other) + fp) /
          (b + 3.0);
    }
  }

  // vertex points
  std::vector<Eigen::RowVector3d> nsum(nV, Eigen::RowVector3d::Zero());
  std::vector<Eigen::RowVector3d> fsum(nV, Eigen::RowVector3d::Zero());
  std::vector<Eigen::RowVector3d> bsum(nV, Eigen::RowVector3d::Zero());
  std::vector<int> bcount(nV, 0);
  for (Index e = 0; e < nE; ++e) {
    auto [u, v] = topo.edge_vertices(e);
    nsum[u] += mesh.vertices.row(v);
    nsum[v] += mesh.vertices.row(u);
    if (topo.is_boundary_edge(e)) {
      bsum[u] += mesh.vertices.row(v);
      bsum[v] += mesh.vertices.row(u);
      bcount[u]++;
      bcount[v]++;
    }
  }
  for (Index f = 0; f < nF; ++f)
    for (int k = 0; k < 4; ++k)
      fsum[mesh.faces(f, k)] += NV.row(res.face_point(f));
  for (Index v = 0; v < nV; ++v) {
    int val = topo.valence(v);
    if (!topo.is_boundary_vertex(v)) {
      double a = vw[v].alpha;
      if (!(a + 2.0 * val > 0)) throw NumericalError("non-positive vertex stencil");
      NV.row(res.vertex_point(v)) =
          (a * mesh.vertices.row(v) + nsum[v] + fsum[v]) / (a + 2.0 * val);
    } else if (val == 1) {
      NV.row(res.vertex_point(v)) = mesh.vertices.row(v);  // corner
    } else {
      // cubic spline boundary rule
      NV.row(res.vertex_point(v)) =
          (bsum[v] + 6.0 * mesh.vertices.row(v)) / 8.0;
    }
  }

  // children; child k sits at corner k of the parent
  for (Index f = 0; f < nF; ++f) {
    std::array<Index, 4> ep{};
    for (int k = 0; k < 4; ++k) {
      Index e = topo.edge_of_halfedge(4 * f + k);
      ep[k] = res.edge_point(e);
    }
    for (int k = 0; k < 4; ++k) {
      Index child = 4 * f + k;
      res.mesh.faces(child, 0) = res.vertex_point(mesh.faces(f, k));
      res.mesh.faces(child, 1) = ep[k];
      res.mesh.faces(child, 2) = res.face_point(f);
      res.mesh.faces(child, 3) = ep[(k + 3) & 3];
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Ghost ring by reflection: p_ghost = 2 p_boundary - p_interior; corner
// ghosts by double reflection through the corner vertex. Ghost DOFs carry a
// slaving record (mirror vertex + sign) used by the plate solver.

inline ControlMesh attach_ghost_ring(const ControlMesh& physical) {
  if (physical.has_ghosts()) throw PreconditionError("mesh already has ghosts");
  Topology topo(physical);
  const Index nV = physical.vertex_count();

  std::vector<Eigen::RowVector3d> gverts;
  std::vector<std::array<Index, 4>> gfaces;
  std::unordered_map<std::uint64_t, Index> ghost_of;  // (b,i) pair -> ghost id
  std::unordered_map<Index, ControlMesh::GhostSlave> slaves;
  auto pair_key = [](Index b, Index i) {
    return (static_cast<std::uint64_t>(b) << 32) | static_cast<std::uint32_t>(i);
  };
  auto ghost = [&](Index b, Index i, double sign) {
    auto it = ghost_of.find(pair_key(b, i));
    if (it != ghost_of.end()) return it->second;
    Index g = nV + static_cast<Index>(gverts.size());
    gverts.push_back(2.0 * physical.vertices.row(b) - physical.vertices.row(i));
    ghost_of.emplace(pair_key(b, i), g);
    ControlMesh::GhostSlave s;
    s.mirror = topo.is_boundary_vertex(i) ? -1 : i;
    s.sign = sign;
    slaves[g] = s;
    return g;
  };

  // sanity: boundary vertices must look like a structured frame
  for (Index v = 0; v < nV; ++v) {
    if (!topo.is_boundary_vertex(v)) continue;
    int val = topo.valence(v);
    if (val != 1 && val != 2)
      throw PreconditionError(
          "irregular boundary vertex (need 2 faces on sides, 1 at corners)");
  }

  for (Index f = 0; f < topo.face_count(); ++f) {
    for (int s = 0; s < 4; ++s) {
      Index h = 4 * f + s;
      if (topo.twin(h) >= 0) continue;  // interior edge
      Index u = topo.from(h), v = topo.to(h);
      // face cycle (..., p_u, u, v, n_v, ...)
      Index p_u = topo.from(Topology::prev(h));
      Index n_v = topo.to(Topology::next(h));
      gfaces.push_back({v, u, ghost(u, p_u, -1.0), ghost(v, n_v, -1.0)});
    }
  }
  // corner wedges
  for (Index c = 0; c < nV; ++c) {
    if (!topo.is_boundary_vertex(c) || topo.valence(c) != 1) continue;
    // unique face (c, v1, d, v2)
    Index h = -1;
    for (Index f = 0; f < topo.face_count() && h < 0; ++f)
      for (int s = 0; s < 4; ++s)
        if (physical.faces(f, s) == c) {
          h = 4 * f + s;
          break;
        }
    Index v1 = topo.to(h);
    Index d = topo.to(Topology::next(h));
    Index v2 = topo.from(Topology::prev(h));
    gfaces.push_back({c, ghost(c, v1, -1.0), ghost(c, d, 1.0), ghost(c, v2, -1.0)});
  }

  ControlMesh out;
  out.n_physical = nV;
  out.ghost_slaves = std::move(slaves);
  out.vertices.resize(nV + static_cast<Index>(gverts.size()), 3);
  out.vertices.topRows(nV) = physical.vertices;
  for (std::size_t i = 0; i < gverts.size(); ++i)
    out.vertices.row(nV + static_cast<Index>(i)) = gverts[i];
  out.faces.resize(physical.face_count() + static_cast<Index>(gfaces.size()), 4);
  out.faces.topRows(physical.face_count()) = physical.faces;
  for (std::size_t i = 0; i < gfaces.size(); ++i)
    for (int k = 0; k < 4; ++k)
      out.faces(physical.face_count() + static_cast<Index>(i), k) = gfaces[i][k];
  return out;
}

// Refine the physical mesh one level: attach ghosts, subdivide the augmented
// mesh (so boundary stencils are regular), then keep only the children of
// physical faces. vertex_map reports old physical vid -> new vid.
inline ControlMesh refine_physical(const ControlMesh& physical,
                                   const WeightAssignment& weights = {},
                                   std::vector<Index>* vertex_map = nullptr) {
  ControlMesh aug = attach_ghost_ring(physical);
  Index nPhysF = physical.face_count();
  SubdivisionResult sub = subdivide(aug, weights);

  std::vector<Index> remap(sub.mesh.vertex_count(), -1);
  std::vector<std::array<Index, 4>> faces;
  faces.reserve(4 * nPhysF);
  Index next_id = 0;
  for (Index f = 0; f < 4 * nPhysF; ++f) {
    std::array<Index, 4> q{};
    for (int k = 0; k < 4; ++k) {
      Index v = sub.mesh.faces(f, k);
      if (remap[v] < 0) remap[v] = next_id++;
      q[k] = remap[v];
    }
    faces.push_back(q);
  }
  ControlMesh out;
  out.vertices.resize(next_id, 3);
  for (Index v = 0; v < sub.mesh.vertex_count(); ++v)
    if (remap[v] >= 0) out.vertices.row(remap[v]) = sub.mesh.vertices.row(v);
  out.faces.resize(static_cast<Index>(faces.size()), 4);
  for (Index f = 0; f < out.face_count(); ++f)
    for (int k = 0; k < 4; ++k) out.faces(f, k) = faces[f][k];
  if (vertex_map) {
    vertex_map->assign(physical.vertex_count(), -1);
    for (Index v = 0; v < physical.vertex_count(); ++v)
      (*vertex_map)[v] = remap[sub.vertex_point(v)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Structured grid walking.
//
// extract_grid fills the (nx+1) x (ny+1) vertex grid of an nx x ny block of
// faces. anchor is the half-edge g(0,0) -> g(1,0) of cell (0,0); cells are
// visited east (next(twin(next(a)))) and north (twin(next(next(a)))).

struct GridWalkError : PreconditionError {
  using PreconditionError::PreconditionError;
};

inline std::vector<std::vector<Index>> extract_grid(const Topology& topo,
                                                    Index anchor, int nx, int ny) {
  std::vector<std::vector<Index>> g(nx + 1, std::vector<Index>(ny + 1, -1));
  auto set = [&](int i, int j, Index v) {
    if (g[i][j] >= 0 && g[i][j] != v)
      throw NumericalError("grid walk inconsistency (bad mesh orientation?)");
    g[i][j] = v;
  };
  Index arow = anchor;
  for (int j = 0; j < ny; ++j) {
    Index a = arow;
    for (int i = 0; i < nx; ++i) {
      set(i, j, topo.from(a));
      set(i + 1, j, topo.to(a));
      set(i + 1, j + 1, topo.to(Topology::next(a)));
      set(i, j + 1, topo.to(Topology::next(Topology::next(a))));
      if (i + 1 < nx) {
        Index t = topo.twin(Topology::next(a));
        if (t < 0) throw GridWalkError("insufficient ring depth");
        a = Topology::next(t);
      }
    }
    if (j + 1 < ny) {
      Index t = topo.twin(Topology::next(Topology::next(arow)));
      if (t < 0) throw GridWalkError("insufficient ring depth");
      arow = t;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// LocalPatch: canonical 12v+1 ordering of the 3-neighbourhood.
//
// Index 0 is the extraordinary vertex; segment s (1..v) spans the wedge
// between outgoing spines s and s+1 and contributes 12 vertices, ring-major
// and counter-clockwise within each ring. grid_of_a maps the within-segment
// number a (1..12) to wedge grid coordinates (along spine s, along spine s+1).

inline constexpr std::array<std::array<int, 2>, 12> kGridOfA = {{{1, 0},
                                                                 {1, 1},
                                                                 {2, 0},
                                                                 {2, 1},
                                                                 {2, 2},
                                                                 {1, 2},
                                                                 {3, 0},
                                                                 {3, 1},
                                                                 {3, 2},
                                                                 {3, 3},
                                                                 {2, 3},
                                                                 {1, 3}}};

struct LocalPatch {
  Index ev = -1;
  int valence = 0;
  std::vector<Index> indices;  // size 12v+1
  Index first_neighbor = -1;   // spine-1 ring-1 vertex

  static Index canonical_index(int s, int a) { return 1 + 12 * (s - 1) + (a - 1); }
};

inline LocalPatch local_patch(const ControlMesh& mesh, const Topology& topo,
                              Index ev, Index first_neighbor = -1) {
  (void)mesh;
  if (topo.is_boundary_vertex(ev))
    throw PreconditionError("insufficient ring depth (vertex on boundary)");
  int v = topo.valence(ev);
  if (v < 3) throw PreconditionError("valence < 3");
  std::vector<Index> spines = topo.outgoing_ccw(ev, first_neighbor);

  LocalPatch patch;
  patch.ev = ev;
  patch.valence = v;
  patch.first_neighbor = topo.to(spines[0]);
  patch.indices.assign(12 * v + 1, -1);
  patch.indices[0] = ev;

  // Rings are validated incrementally: each outward walk only crosses
  // vertices already known to be regular and interior, so the grid structure
  // of the next ring is well defined before it is extracted.
  auto check_ring = [&](Index vid) {
    if (vid == ev) return;
    if (topo.is_boundary_vertex(vid))
      throw PreconditionError("insufficient ring depth");
    if (topo.valence(vid) != 4)
      throw PreconditionError("EV separation violated");
  };
  for (int ring = 1; ring <= 2; ++ring) {
    for (int s = 0; s < v; ++s) {
      auto g = extract_grid(topo, spines[s], ring, ring);
      for (int i = 0; i <= ring; ++i)
        for (int j = 0; j <= ring; ++j)
          if (std::max(i, j) == ring) check_ring(g[i][j]);
    }
  }
  std::vector<std::vector<std::vector<Index>>> grids(v);
  for (int s = 0; s < v; ++s) {
    grids[s] = extract_grid(topo, spines[s], 3, 3);
    if (grids[s][0][0] != ev) throw NumericalError("wedge grid lost the centre");
    for (int a = 1; a <= 12; ++a) {
      auto [i, j] = kGridOfA[a - 1];
      patch.indices[LocalPatch::canonical_index(s + 1, a)] = grids[s][i][j];
    }
  }
  // wrap consistency between segments
  for (int s = 0; s < v; ++s) {
    const auto& a = grids[s];
    const auto& b = grids[(s + 1) % v];
    for (int k = 1; k <= 3; ++k)
      if (a[0][k] != b[k][0])
        throw NumericalError("segment wrap mismatch in 3-neighbourhood");
  }
  // a second extraordinary vertex on ring 3 would not affect the refinement
  // of the 3-neighbourhood, but it breaks the single-EV assumption
  for (int s = 1; s <= v; ++s) {
    for (int a = 7; a <= 12; ++a) {
      Index vid = patch.indices[LocalPatch::canonical_index(s, a)];
      if (!topo.is_boundary_vertex(vid) && topo.valence(vid) != 4)
        throw PreconditionError("EV separation violated");
    }
  }
  return patch;
}

// Extract the local patch coordinates as a (12v+1) x 3 block.
inline Eigen::MatrixX3d patch_coordinates(const ControlMesh& mesh,
                                          const LocalPatch& patch) {
  Eigen::MatrixX3d P(patch.indices.size(), 3);
  for (std::size_t i = 0; i < patch.indices.size(); ++i)
    P.row(static_cast<Index>(i)) = mesh.vertices.row(patch.indices[i]);
  return P;
}

// ---------------------------------------------------------------------------
// Per-face evaluation nets

// 16 control points of a regular bicubic patch, ordered i + 4*j with i along
// eta1 (corner0 -> corner1) and j along eta2 (corner0 -> corner3); the face
// corners sit at grid slots (1,1), (2,1), (2,2), (1,2).
inline std::array<Index, 16> regular_patch_net(const Topology& topo, Index face) {
  Index h = 4 * face;  // c0 -> c1
  Index w = topo.twin(Topology::prev(h));
  if (w < 0) throw GridWalkError("insufficient ring depth");
  Index a01 = Topology::prev(w);          // west cell anchor
  Index t = topo.twin(a01);
  if (t < 0) throw GridWalkError("insufficient ring depth");
  Index a00 = Topology::next(Topology::next(t));  // south-west cell anchor
  auto g = extract_grid(topo, a00, 3, 3);
  std::array<Index, 16> net{};
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i) net[i + 4 * j] = g[i][j];
  return net;
}

// 2v+8 control points of an extraordinary patch. ev_slot is the face corner
// holding the extraordinary vertex. Order: [ev, n1, d1, n2, d2, ..., nv, dv,
// (2,0)1, (2,1)1, (2,2)1, (1,2)1, (2,0)2, (2,1)2, (1,2)v]; eta1 runs along
// spine 1 (ev -> next corner), eta2 along spine 2.
inline std::vector<Index> extraordinary_patch_net(const Topology& topo, Index face,
                                                  int ev_slot, int* valence_out) {
  Index ev = topo.from(4 * face + ev_slot);
  if (topo.is_boundary_vertex(ev))
    throw PreconditionError("extraordinary vertex on boundary");
  int v = topo.valence(ev);
  if (valence_out) *valence_out = v;
  std::vector<Index> spines = topo.outgoing_ccw(ev, topo.to(4 * face + ev_slot));
  std::vector<Index> net(2 * v + 8, -1);
  net[0] = ev;
  for (int s = 0; s < v; ++s) {
    net[1 + 2 * s] = topo.to(spines[s]);                   // n_{s+1}
    net[2 + 2 * s] = topo.to(Topology::next(spines[s]));   // d_{s+1}
  }
  auto east = [&](Index a) {
    Index t = topo.twin(Topology::next(a));
    if (t < 0) throw GridWalkError("insufficient ring depth");
    return Topology::next(t);
  };
  auto north = [&](Index a) {
    Index t = topo.twin(Topology::next(Topology::next(a)));
    if (t < 0) throw GridWalkError("insufficient ring depth");
    return t;
  };
  Index a10 = east(spines[0]);  // cell (1,0) of segment 1
  net[2 * v + 1] = topo.to(a10);
  net[2 * v + 2] = topo.to(Topology::next(a10));
  Index a11 = north(a10);
  net[2 * v + 3] = topo.to(Topology::next(a11));  // (2,2)1
  Index a01 = north(spines[0]);
  net[2 * v + 4] = topo.to(Topology::next(a01));  // (1,2)1
  net[2 * v + 5] = topo.to(Topology::next(Topology::next(a01)));  // (2,0)2
  Index b10 = east(spines[1]);
  net[2 * v + 6] = topo.to(Topology::next(b10));  // (2,1)2
  Index c01 = north(spines[v - 1]);
  net[2 * v + 7] = topo.to(Topology::next(c01));  // (1,2)v
  // all non-centre net vertices must be regular for the evaluator to apply
  for (std::size_t i = 1; i < net.size(); ++i) {
    if (net[i] < 0) throw NumericalError("incomplete extraordinary net");
    if (!topo.is_boundary_vertex(net[i]) && topo.valence(net[i]) != 4)
      throw PreconditionError("EV separation violated");
  }
  return net;
}

struct FacePatch {
  enum Kind { Regular, Extraordinary } kind = Regular;
  int ev_slot = -1;  // for Extraordinary
  Index ev = -1;
  int valence = 0;
};

inline FacePatch classify_face(const Topology& topo, const ControlMesh& mesh,
                               Index face) {
  FacePatch fp;
  int n_ev = 0;
  for (int k = 0; k < 4; ++k) {
    Index c = mesh.faces(face, k);
    if (topo.is_extraordinary(c)) {
      ++n_ev;
      fp.ev_slot = k;
      fp.ev = c;
      fp.valence = topo.valence(c);
    }
  }
  if (n_ev == 0) {
    fp.kind = FacePatch::Regular;
  } else if (n_ev == 1) {
    fp.kind = FacePatch::Extraordinary;
  } else {
    throw PreconditionError(
        "face with multiple extraordinary corners; refine the mesh first");
  }
  return fp;
}

}  // namespace cctune
