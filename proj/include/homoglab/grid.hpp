#pragma once

#include <homoglab/common.hpp>

#include <array>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace homoglab {

enum class BoundaryMode { dirichlet_zero, periodic_mean_zero, lateral_dirichlet };

inline std::string to_string(BoundaryMode bc) {
  switch (bc) {
    case BoundaryMode::dirichlet_zero: return "dirichlet";
    case BoundaryMode::periodic_mean_zero: return "periodic";
    case BoundaryMode::lateral_dirichlet: return "lateral_dirichlet";
  }
  return "?";
}

inline BoundaryMode boundary_mode_from_string(const std::string& s) {
  if (s == "dirichlet") return BoundaryMode::dirichlet_zero;
  if (s == "periodic") return BoundaryMode::periodic_mean_zero;
  if (s == "lateral_dirichlet") return BoundaryMode::lateral_dirichlet;
  throw ContractViolation("unknown boundary mode '" + s + "'");
}

/// Per-axis closure of a tensor-product mesh.
enum class AxisBC { dirichlet, periodic, free_ends };

/// Uniform tensor-product mesh with axis-wise boundary treatment. Covers the
/// bulk cell (0,T)^N, the film slab (0,T)^2 x I, and the direct-simulation
/// domains with one indexing scheme.
struct TensorMesh {
  int N = 1;
  std::array<int, 3> elems{1, 1, 1};      // elements per axis
  std::array<Real, 3> h{1.0, 1.0, 1.0};   // element size per axis
  std::array<Real, 3> origin{0.0, 0.0, 0.0};
  std::array<AxisBC, 3> bc{AxisBC::dirichlet, AxisBC::dirichlet, AxisBC::dirichlet};

  int nodes_on_axis(int k) const {
    return bc[std::size_t(k)] == AxisBC::periodic ? elems[std::size_t(k)]
                                                  : elems[std::size_t(k)] + 1;
  }
  std::int64_t node_count() const {
    std::int64_t c = 1;
    for (int k = 0; k < N; ++k) c *= nodes_on_axis(k);
    return c;
  }
  std::int64_t elem_count() const {
    std::int64_t c = 1;
    for (int k = 0; k < N; ++k) c *= elems[std::size_t(k)];
    return c;
  }
  Real volume() const {
    Real v = 1.0;
    for (int k = 0; k < N; ++k) v *= h[std::size_t(k)] * elems[std::size_t(k)];
    return v;
  }

  std::int64_t node_index(const std::array<int, 3>& m) const {
    std::int64_t idx = 0;
    for (int k = N - 1; k >= 0; --k) idx = idx * nodes_on_axis(k) + m[std::size_t(k)];
    return idx;
  }
  std::array<int, 3> node_multi(std::int64_t idx) const {
    std::array<int, 3> m{0, 0, 0};
    for (int k = 0; k < N; ++k) {
      m[std::size_t(k)] = int(idx % nodes_on_axis(k));
      idx /= nodes_on_axis(k);
    }
    return m;
  }
  std::array<int, 3> elem_multi(std::int64_t e) const {
    std::array<int, 3> m{0, 0, 0};
    for (int k = 0; k < N; ++k) {
      m[std::size_t(k)] = int(e % elems[std::size_t(k)]);
      e /= elems[std::size_t(k)];
    }
    return m;
  }

  Point node_position(const std::array<int, 3>& m) const {
    Point p(N);
    for (int k = 0; k < N; ++k)
      p[k] = origin[std::size_t(k)] + h[std::size_t(k)] * m[std::size_t(k)];
    return p;
  }

  /// Global node multi-index of corner `corner` (bit k = offset on axis k)
  /// of element `em`, wrapped on periodic axes.
  std::array<int, 3> elem_node(const std::array<int, 3>& em, int corner) const {
    std::array<int, 3> m{0, 0, 0};
    for (int k = 0; k < N; ++k) {
      int v = em[std::size_t(k)] + ((corner >> k) & 1);
      if (bc[std::size_t(k)] == AxisBC::periodic && v == elems[std::size_t(k)]) v = 0;
      m[std::size_t(k)] = v;
    }
    return m;
  }

  /// True if the node is pinned to zero by a Dirichlet axis.
  bool node_constrained(const std::array<int, 3>& m) const {
    for (int k = 0; k < N; ++k) {
      if (bc[std::size_t(k)] != AxisBC::dirichlet) continue;
      if (m[std::size_t(k)] == 0 || m[std::size_t(k)] == elems[std::size_t(k)]) return true;
    }
    return false;
  }

  bool any_periodic() const {
    for (int k = 0; k < N; ++k)
      if (bc[std::size_t(k)] == AxisBC::periodic) return true;
    return false;
  }
};

/// Cell-problem grid over (0,T)^N with n elements per unit period per axis.
struct CellGrid {
  int N = 1;
  int T = 1;
  int n = 16;
  BoundaryMode bc = BoundaryMode::periodic_mean_zero;

  void validate() const {
    contract(N >= 1 && N <= 3, "cell grid dimension must be 1..3");
    contract(T >= 1, "period count T must be a positive integer");
    contract(n >= 1, "nodes per unit period must be >= 1");
    contract(bc == BoundaryMode::dirichlet_zero || bc == BoundaryMode::periodic_mean_zero,
             "cell grid supports dirichlet/periodic boundary modes");
  }

  TensorMesh mesh() const {
    validate();
    TensorMesh m;
    m.N = N;
    for (int k = 0; k < N; ++k) {
      m.elems[std::size_t(k)] = T * n;
      m.h[std::size_t(k)] = 1.0 / n;
      m.origin[std::size_t(k)] = 0.0;
      m.bc[std::size_t(k)] =
          bc == BoundaryMode::periodic_mean_zero ? AxisBC::periodic : AxisBC::dirichlet;
    }
    return m;
  }
};

/// Film grid over (0,T)^2 x I, I = (-1,1): zero on the four lateral faces,
/// free top/bottom. n3 defaults to 2n so elements stay isotropic.
struct FilmGrid {
  int T = 1;
  int n = 8;
  int n3 = 0;  // 0 -> 2n
  BoundaryMode bc = BoundaryMode::lateral_dirichlet;

  int thickness_elems() const { return n3 > 0 ? n3 : 2 * n; }

  void validate() const {
    contract(T >= 1, "film period count T must be positive");
    contract(n >= 1 && thickness_elems() >= 1, "film grid resolution must be >= 1");
    contract(bc == BoundaryMode::lateral_dirichlet || bc == BoundaryMode::periodic_mean_zero,
             "film grid supports lateral_dirichlet or in-plane periodic modes");
  }

  TensorMesh mesh() const {
    validate();
    TensorMesh m;
    m.N = 3;
    const AxisBC inplane =
        bc == BoundaryMode::lateral_dirichlet ? AxisBC::dirichlet : AxisBC::periodic;
    const int Teff = bc == BoundaryMode::periodic_mean_zero ? 1 : T;
    m.elems = {Teff * n, Teff * n, thickness_elems()};
    m.h = {1.0 / n, 1.0 / n, 2.0 / thickness_elems()};
    m.origin = {0.0, 0.0, -1.0};
    m.bc = {inplane, inplane, AxisBC::free_ends};
    return m;
  }

  /// Normalization 1/(2 T^2): the slab (0,T)^2 x I has measure 2 T^2.
  Real normalization() const {
    const int Teff = bc == BoundaryMode::periodic_mean_zero ? 1 : T;
    return 1.0 / (2.0 * Teff * Teff);
  }
};

/// Nodal d-vector field on a tensor mesh (the corrector).
struct CorrectorField {
  TensorMesh mesh;
  int d = 1;
  Eigen::VectorXd values;  // node-major, d components per node

  CorrectorField() = default;
  CorrectorField(const TensorMesh& m, int d_) : mesh(m), d(d_) {
    values = Eigen::VectorXd::Zero(mesh.node_count() * d);
  }

  Real sup_norm() const { return values.size() ? values.cwiseAbs().maxCoeff() : 0.0; }

  /// Mean of each component over all nodes (gauge diagnostic).
  Eigen::VectorXd component_means() const {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    const std::int64_t nn = mesh.node_count();
    for (std::int64_t i = 0; i < nn; ++i)
      for (int c = 0; c < d; ++c) mean[c] += values[i * d + c];
    return nn ? Eigen::VectorXd(mean / Real(nn)) : mean;
  }
};

}  // namespace homoglab
