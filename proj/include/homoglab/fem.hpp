#pragma once

#include <homoglab/grid.hpp>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <utility>
#include <vector>

namespace homoglab {

/// Multilinear (Q1) elements on a tensor mesh with 2-point Gauss quadrature
/// per axis. Shape data is precomputed once per mesh; gradients are exact
/// for multilinear fields, so discrete mean-gradient identities (Jensen
/// arguments, divergence-free averages) hold to machine precision.
struct ElementRule {
  int N = 1;
  int nq = 2;       // 2^N quadrature points
  int ncorner = 2;  // 2^N corners
  std::vector<Point> offset;                          // [q] local position in element
  std::vector<Real> weight;                           // [q]
  std::vector<std::vector<Real>> shape;               // [q][a]
  std::vector<std::vector<Point>> dshape;             // [q][a], gradient in R^N

  explicit ElementRule(const TensorMesh& mesh) {
    N = mesh.N;
    nq = 1 << N;
    ncorner = 1 << N;
    const Real gauss[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
    offset.resize(nq);
    weight.resize(nq);
    shape.assign(nq, std::vector<Real>(ncorner));
    dshape.assign(nq, std::vector<Point>(ncorner, Point::Zero(N)));
    for (int q = 0; q < nq; ++q) {
      Point u(N);
      Real w = 1.0;
      for (int k = 0; k < N; ++k) {
        const Real hk = mesh.h[std::size_t(k)];
        u[k] = hk * gauss[(q >> k) & 1];
        w *= hk / 2.0;
      }
      offset[q] = u;
      weight[q] = w;
      for (int a = 0; a < ncorner; ++a) {
        Real val = 1.0;
        for (int k = 0; k < N; ++k) {
          const Real t = u[k] / mesh.h[std::size_t(k)];
          val *= ((a >> k) & 1) ? t : (1.0 - t);
        }
        shape[q][a] = val;
        for (int k = 0; k < N; ++k) {
          Real g = ((a >> k) & 1) ? 1.0 : -1.0;
          g /= mesh.h[std::size_t(k)];
          for (int m = 0; m < N; ++m) {
            if (m == k) continue;
            const Real t = u[m] / mesh.h[std::size_t(m)];
            g *= ((a >> m) & 1) ? t : (1.0 - t);
          }
          dshape[q][a][k] = g;
        }
      }
    }
  }
};

/// Node-to-unknown numbering. Dirichlet nodes carry no unknowns; when no
/// axis is Dirichlet the energy is invariant under constant shifts, so one
/// node is pinned and the reported corrector is mean-projected afterwards.
struct DofMap {
  TensorMesh mesh;
  int d = 1;
  std::vector<std::int64_t> node_dof;  // -1 if constrained, else compressed node id
  std::int64_t free_nodes = 0;
  std::int64_t pinned_node = -1;

  DofMap() = default;
  DofMap(const TensorMesh& m, int d_) : mesh(m), d(d_) {
    const std::int64_t nn = mesh.node_count();
    node_dof.assign(std::size_t(nn), -1);
    bool has_dirichlet = false;
    for (int k = 0; k < mesh.N; ++k)
      if (mesh.bc[std::size_t(k)] == AxisBC::dirichlet) has_dirichlet = true;
    std::int64_t next = 0;
    for (std::int64_t i = 0; i < nn; ++i) {
      if (mesh.node_constrained(mesh.node_multi(i))) continue;
      node_dof[std::size_t(i)] = next++;
    }
    free_nodes = next;
    if (!has_dirichlet && free_nodes > 0) {
      // Gauge: pin the first node's components.
      pinned_node = 0;
      node_dof[0] = -1;
      for (std::int64_t i = 1; i < nn; ++i)
        if (node_dof[std::size_t(i)] >= 0) node_dof[std::size_t(i)] -= 1;
      free_nodes -= 1;
    }
  }

  std::int64_t ndofs() const { return free_nodes * d; }

  /// Expand the unknown vector to a full nodal field (constrained -> 0).
  Eigen::VectorXd to_nodes(const Eigen::VectorXd& phi) const {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(mesh.node_count() * d);
    for (std::int64_t i = 0; i < mesh.node_count(); ++i) {
      const std::int64_t dof = node_dof[std::size_t(i)];
      if (dof < 0) continue;
      for (int c = 0; c < d; ++c) full[i * d + c] = phi[dof * d + c];
    }
    return full;
  }

  /// Subtract the per-component mean from a full nodal field.
  void project_mean_zero(Eigen::VectorXd& full) const {
    const std::int64_t nn = mesh.node_count();
    for (int c = 0; c < d; ++c) {
      Real m = 0.0;
      for (std::int64_t i = 0; i < nn; ++i) m += full[i * d + c];
      m /= Real(nn);
      for (std::int64_t i = 0; i < nn; ++i) full[i * d + c] -= m;
    }
  }
};

/// Callable density with combined value+stress evaluation (one lookup per
/// quadrature point when both are needed).
struct PointDensity {
  std::function<Real(const Point&, const GradMat&)> value;
  std::function<std::pair<Real, GradMat>(const Point&, const GradMat&)> value_stress;
};

struct EnergyInfo {
  Real energy = 0.0;        // scaled (volume-averaged when scale = 1/vol)
  GradMat avg_stress;       // same scaling
};

/// Energy (and optionally gradient / average stress) of the discrete field
/// xi + grad(phi). Elements are visited in lexicographic order so sums are
/// bit-reproducible.
inline EnergyInfo cell_energy(const TensorMesh& mesh, const DofMap& dofs, const ElementRule& rule,
                              const GradMat& xi, const Eigen::VectorXd& phi, Real scale,
                              const PointDensity& density, Eigen::VectorXd* grad_out = nullptr,
                              bool want_stress = false) {
  const int N = mesh.N, d = int(xi.rows());
  const bool want_grad = grad_out != nullptr;
  EnergyInfo out;
  out.avg_stress = GradMat::Zero(d, N);
  if (want_grad) grad_out->setZero(dofs.ndofs());

  const std::int64_t ne = mesh.elem_count();
  std::vector<std::int64_t> corner_dof(std::size_t(rule.ncorner));
  Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 8> phi_e(d, rule.ncorner);
  Real energy = 0.0;

  for (std::int64_t e = 0; e < ne; ++e) {
    const auto em = mesh.elem_multi(e);
    Point corner0 = mesh.node_position(em);
    for (int a = 0; a < rule.ncorner; ++a) {
      const auto nm = mesh.elem_node(em, a);
      const std::int64_t node = mesh.node_index(nm);
      const std::int64_t dof = dofs.node_dof[std::size_t(node)];
      corner_dof[std::size_t(a)] = dof;
      if (dof < 0)
        phi_e.col(a).setZero();
      else
        for (int c = 0; c < d; ++c) phi_e(c, a) = phi[dof * d + c];
    }
    for (int q = 0; q < rule.nq; ++q) {
      Point zq = corner0 + rule.offset[q];
      GradMat eta = xi;
      for (int a = 0; a < rule.ncorner; ++a)
        eta.noalias() += phi_e.col(a) * rule.dshape[q][a].transpose();
      const Real w = rule.weight[q] * scale;
      if (want_grad || want_stress) {
        auto [v, s] = density.value_stress(zq, eta);
        energy += w * v;
        if (want_stress) out.avg_stress.noalias() += w * s;
        if (want_grad) {
          for (int a = 0; a < rule.ncorner; ++a) {
            const std::int64_t dof = corner_dof[std::size_t(a)];
            if (dof < 0) continue;
            for (int c = 0; c < d; ++c)
              (*grad_out)[dof * d + c] += w * s.row(c).dot(rule.dshape[q][a]);
          }
        }
      } else {
        energy += w * density.value(zq, eta);
      }
    }
  }
  out.energy = energy;
  return out;
}

/// Assembled second-order problem for quadratic densities
/// f(z; eta) = <A(z) vec(eta), vec(eta)>: K phi = rhs is the stationarity
/// system (common factor 2*scale dropped from both sides).
struct QuadraticProblem {
  Eigen::SparseMatrix<Real> K;
  Eigen::VectorXd rhs;
};

inline QuadraticProblem assemble_quadratic(
    const TensorMesh& mesh, const DofMap& dofs, const ElementRule& rule, const GradMat& xi,
    const std::function<QuadForm(const Point&)>& quad_at, bool check_spd = true) {
  const int N = mesh.N, d = int(xi.rows());
  const int nd = N * d;
  QuadraticProblem prob;
  prob.rhs = Eigen::VectorXd::Zero(dofs.ndofs());
  std::vector<Eigen::Triplet<Real>> trip;
  trip.reserve(std::size_t(mesh.elem_count()) * std::size_t(rule.ncorner * rule.ncorner * d * d));

  const Eigen::Map<const Eigen::VectorXd> xi_vec(xi.data(), nd);
  const std::int64_t ne = mesh.elem_count();
  std::vector<std::int64_t> corner_dof(std::size_t(rule.ncorner));

  for (std::int64_t e = 0; e < ne; ++e) {
    const auto em = mesh.elem_multi(e);
    const Point corner0 = mesh.node_position(em);
    for (int a = 0; a < rule.ncorner; ++a)
      corner_dof[std::size_t(a)] = dofs.node_dof[std::size_t(mesh.node_index(mesh.elem_node(em, a)))];

    for (int q = 0; q < rule.nq; ++q) {
      const Point zq = corner0 + rule.offset[q];
      QuadForm A = quad_at(zq);
      contract(A.rows() == nd && A.cols() == nd, "quadratic form has wrong size");
      if (check_spd) {
        Eigen::LLT<QuadForm> llt(A);
        contract(llt.info() == Eigen::Success,
                 "coefficient form is not symmetric positive definite at z=" + point_to_string(zq));
      }
      const Real w = rule.weight[q];
      // Local gradient-to-vec operator: dof (a,i) perturbs vec index k*d+i by
      // dshape[q][a][k].
      Eigen::VectorXd Axi = A * xi_vec;
      for (int a = 0; a < rule.ncorner; ++a) {
        const std::int64_t da = corner_dof[std::size_t(a)];
        if (da < 0) continue;
        const Point& ga = rule.dshape[q][a];
        for (int i = 0; i < d; ++i) {
          Real r = 0.0;
          for (int k = 0; k < N; ++k) r += ga[k] * Axi[k * d + i];
          prob.rhs[da * d + i] -= w * r;
          for (int b = 0; b < rule.ncorner; ++b) {
            const std::int64_t db = corner_dof[std::size_t(b)];
            if (db < 0) continue;
            const Point& gb = rule.dshape[q][b];
            for (int j = 0; j < d; ++j) {
              Real kij = 0.0;
              for (int k = 0; k < N; ++k)
                for (int l = 0; l < N; ++l) kij += ga[k] * A(k * d + i, l * d + j) * gb[l];
              trip.emplace_back(int(da * d + i), int(db * d + j), w * kij);
            }
          }
        }
      }
    }
  }
  prob.K.resize(int(dofs.ndofs()), int(dofs.ndofs()));
  prob.K.setFromTriplets(trip.begin(), trip.end());
  return prob;
}

/// Direct sparse Cholesky solve of an assembled quadratic problem.
inline Eigen::VectorXd solve_quadratic(const QuadraticProblem& prob) {
  if (prob.rhs.size() == 0) return Eigen::VectorXd();
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<Real>> ldlt;
  ldlt.compute(prob.K);
  if (ldlt.info() != Eigen::Success)
    throw SolverError("sparse Cholesky factorization failed (system not SPD?)");
  Eigen::VectorXd phi = ldlt.solve(prob.rhs);
  if (ldlt.info() != Eigen::Success) throw SolverError("sparse Cholesky solve failed");
  return phi;
}

/// Integral of the in-plane gradient block (columns 0..1) of a nodal field
/// over each element layer along axis 2. Zero for laterally clamped fields.
inline std::vector<GradMat> slice_inplane_gradient_integrals(const TensorMesh& mesh, int d,
                                                             const Eigen::VectorXd& full_nodes) {
  contract(mesh.N == 3, "slice integrals need a 3D mesh");
  const ElementRule rule(mesh);
  std::vector<GradMat> layers(std::size_t(mesh.elems[2]), GradMat::Zero(d, 2));
  const std::int64_t ne = mesh.elem_count();
  for (std::int64_t e = 0; e < ne; ++e) {
    const auto em = mesh.elem_multi(e);
    GradMat acc = GradMat::Zero(d, 3);
    for (int q = 0; q < rule.nq; ++q) {
      GradMat g = GradMat::Zero(d, 3);
      for (int a = 0; a < rule.ncorner; ++a) {
        const std::int64_t node = mesh.node_index(mesh.elem_node(em, a));
        for (int c = 0; c < d; ++c)
          g.row(c) += full_nodes[node * d + c] * rule.dshape[q][a].transpose();
      }
      acc += rule.weight[q] * g;
    }
    layers[std::size_t(em[2])] += acc.leftCols(2);
  }
  return layers;
}

}  // namespace homoglab
