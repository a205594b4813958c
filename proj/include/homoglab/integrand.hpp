#pragma once

#include <homoglab/common.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace homoglab {

using json = nlohmann::json;

/// Two-sided p-growth envelope: (1/beta)|xi|^p - beta <= f <= beta(1+|xi|^p).
struct GrowthSpec {
  Real p = 2.0;
  Real beta = 1.0;

  void validate() const {
    contract(p > 1.0, "growth exponent must satisfy p > 1");
    contract(beta > 0.0, "growth constant beta must be positive");
  }
  Real lower(const GradMat& xi) const {
    return std::pow(xi.norm(), p) / beta - beta;
  }
  Real upper(const GradMat& xi) const {
    return beta * (1.0 + std::pow(xi.norm(), p));
  }
};

namespace detail {

inline void check_known_keys(const json& j, std::vector<std::string> allowed,
                             const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ContractViolation("unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scalar coefficient fields
// ---------------------------------------------------------------------------

/// Which argument of the integrand a coefficient factor reads.
enum class CoeffVar { X, Y, Z };

inline CoeffVar coeff_var_from_string(const std::string& s) {
  if (s == "x") return CoeffVar::X;
  if (s == "y") return CoeffVar::Y;
  if (s == "z") return CoeffVar::Z;
  throw ContractViolation("coefficient factor var must be one of x/y/z, got '" + s + "'");
}

/// One multiplicative factor of a scalar coefficient. Periodic shapes wrap
/// their coordinate to the unit cell; "step" reads the raw (macroscopic)
/// coordinate and is only allowed on the x variable.
struct CoeffFactor {
  enum class Shape { Constant, Laminate, Checkerboard, Trig, Step };

  CoeffVar var = CoeffVar::Z;
  Shape shape = Shape::Constant;
  int axis = 0;
  Real constant = 1.0;
  std::vector<Real> fractions;   // laminate
  std::vector<Real> values;      // laminate / checkerboard / step
  Real base = 1.0, amplitude = 0.0;  // trig
  std::vector<int> freq;             // trig, per axis
  std::vector<Real> phase;           // trig, per axis
  Real threshold = 0.0;              // step

  Real eval(const Point& u) const {
    switch (shape) {
      case Shape::Constant:
        return constant;
      case Shape::Laminate: {
        const Real t = wrap_unit(u[axis]);
        Real acc = 0.0;
        for (std::size_t i = 0; i < fractions.size(); ++i) {
          acc += fractions[i];
          if (t < acc) return values[i];
        }
        return values.back();
      }
      case Shape::Checkerboard: {
        const long i = long(std::floor(2.0 * wrap_unit(u[0])));
        const long j = long(std::floor(2.0 * wrap_unit(u[1])));
        return values[std::size_t((i + j) % 2)];
      }
      case Shape::Trig: {
        Real prod = 1.0;
        for (int k = 0; k < u.size(); ++k) {
          const Real fk = k < int(freq.size()) ? Real(freq[k]) : 0.0;
          if (fk == 0.0) continue;
          const Real ph = k < int(phase.size()) ? phase[k] : 0.0;
          prod *= std::cos(2.0 * M_PI * (fk * wrap_unit(u[k]) + ph));
        }
        return base + amplitude * prod;
      }
      case Shape::Step:
        return u[axis] < threshold ? values[0] : values[1];
    }
    return constant;
  }

  Real min_value() const {
    switch (shape) {
      case Shape::Constant: return constant;
      case Shape::Laminate:
      case Shape::Checkerboard:
      case Shape::Step: return *std::min_element(values.begin(), values.end());
      case Shape::Trig: return base - std::abs(amplitude);
    }
    return constant;
  }
  Real max_value() const {
    switch (shape) {
      case Shape::Constant: return constant;
      case Shape::Laminate:
      case Shape::Checkerboard:
      case Shape::Step: return *std::max_element(values.begin(), values.end());
      case Shape::Trig: return base + std::abs(amplitude);
    }
    return constant;
  }
  bool is_constant() const { return shape == Shape::Constant; }

  static CoeffFactor parse(const json& j) {
    detail::check_known_keys(j, {"var", "type", "axis", "value", "fractions", "values",
                                 "base", "amplitude", "freq", "phase", "threshold"},
                             "coefficient factor");
    CoeffFactor f;
    f.var = coeff_var_from_string(j.value("var", std::string("z")));
    const std::string type = j.at("type").get<std::string>();
    f.axis = j.value("axis", 0);
    contract(f.axis >= 0 && f.axis < 3, "coefficient factor axis out of range");
    if (type == "constant") {
      f.shape = Shape::Constant;
      f.constant = j.at("value").get<Real>();
      contract(f.constant > 0.0, "constant coefficient must be positive");
    } else if (type == "laminate") {
      f.shape = Shape::Laminate;
      f.fractions = j.at("fractions").get<std::vector<Real>>();
      f.values = j.at("values").get<std::vector<Real>>();
      contract(f.fractions.size() == f.values.size() && !f.values.empty(),
               "laminate fractions/values must be non-empty and equal length");
      Real sum = 0.0;
      for (Real t : f.fractions) {
        contract(t > 0.0, "laminate fractions must be positive");
        sum += t;
      }
      contract(std::abs(sum - 1.0) < 1e-12, "laminate fractions must sum to 1");
      for (Real v : f.values) contract(v > 0.0, "laminate values must be positive");
    } else if (type == "checkerboard") {
      f.shape = Shape::Checkerboard;
      f.values = j.at("values").get<std::vector<Real>>();
      contract(f.values.size() == 2, "checkerboard needs exactly two values");
      for (Real v : f.values) contract(v > 0.0, "checkerboard values must be positive");
    } else if (type == "trig") {
      f.shape = Shape::Trig;
      f.base = j.at("base").get<Real>();
      f.amplitude = j.value("amplitude", 0.0);
      f.freq = j.value("freq", std::vector<int>{1});
      f.phase = j.value("phase", std::vector<Real>{});
      contract(f.base - std::abs(f.amplitude) > 0.0,
               "trig coefficient must stay positive: need |amplitude| < base");
    } else if (type == "step") {
      f.shape = Shape::Step;
      contract(f.var == CoeffVar::X, "step coefficients are only allowed on the x variable");
      f.threshold = j.value("threshold", 0.0);
      f.values = j.at("values").get<std::vector<Real>>();
      contract(f.values.size() == 2, "step needs exactly two values");
      for (Real v : f.values) contract(v > 0.0, "step values must be positive");
    } else {
      throw ContractViolation("unknown coefficient factor type '" + type + "'");
    }
    return f;
  }
};

/// Product of factors, each bound to one of the x/y/z arguments.
struct CoefficientField {
  std::vector<CoeffFactor> factors;

  Real eval(const Point& x, const Point& y, const Point& z) const {
    Real prod = 1.0;
    for (const auto& f : factors) {
      switch (f.var) {
        case CoeffVar::X: prod *= f.eval(x); break;
        case CoeffVar::Y: prod *= f.eval(y); break;
        case CoeffVar::Z: prod *= f.eval(z); break;
      }
    }
    return prod;
  }
  Real min_value() const {
    Real m = 1.0;
    for (const auto& f : factors) m *= f.min_value();
    return m;
  }
  Real max_value() const {
    Real m = 1.0;
    for (const auto& f : factors) m *= f.max_value();
    return m;
  }
  bool depends_on(CoeffVar v) const {
    for (const auto& f : factors)
      if (f.var == v && !f.is_constant()) return true;
    return false;
  }
  /// True when some non-constant factor reads the given axis of `v`.
  bool depends_on_axis(CoeffVar v, int axis) const {
    for (const auto& f : factors) {
      if (f.var != v || f.is_constant()) continue;
      if (f.shape == CoeffFactor::Shape::Checkerboard) {
        if (axis <= 1) return true;
      } else if (f.shape == CoeffFactor::Shape::Trig) {
        if (axis < int(f.freq.size()) && f.freq[axis] != 0) return true;
      } else if (f.axis == axis) {
        return true;
      }
    }
    return false;
  }

  static CoefficientField parse(const json& j) {
    CoefficientField c;
    if (j.is_null()) return c;
    detail::check_known_keys(j, {"factors"}, "coefficient");
    for (const auto& jf : j.at("factors")) c.factors.push_back(CoeffFactor::parse(jf));
    return c;
  }
};

// ---------------------------------------------------------------------------
// Bulk multiscale integrand f(x, y, z; xi)
// ---------------------------------------------------------------------------

/// Stored-energy density with two oscillating arguments, unit-cell periodic
/// in each of them. Immutable after construction; evaluation is pure.
class MultiscaleIntegrand {
 public:
  using EvalFn = std::function<Real(const Point&, const Point&, const Point&, const GradMat&)>;
  using StressFn = std::function<GradMat(const Point&, const Point&, const Point&, const GradMat&)>;
  using QuadFn = std::function<QuadForm(const Point&, const Point&, const Point&)>;

  int N = 1;
  int d = 1;
  GrowthSpec growth;
  bool convex = false;
  bool quadratic = false;
  bool depends_on_x = false, depends_on_y = false, depends_on_z = false;
  std::string family;
  json params;

  MultiscaleIntegrand() = default;

  /// Energy density at (x, wrapped y, wrapped z; xi).
  Real eval(const Point& x, const Point& y, const Point& z, const GradMat& xi) const {
    check_dims(x, y, z, xi);
    const Real v = eval_(x, wrap_unit(y), wrap_unit(z), xi);
    if (!std::isfinite(v))
      throw EvalError("integrand '" + family + "' returned a non-finite value at y=" +
                      point_to_string(y) + " z=" + point_to_string(z));
    return v;
  }

  /// dF/dxi at the wrapped point; analytic when the family provides one,
  /// central differences with relative step 1e-6*(1+|xi|) otherwise.
  GradMat stress(const Point& x, const Point& y, const Point& z, const GradMat& xi) const {
    check_dims(x, y, z, xi);
    const Point yw = wrap_unit(y), zw = wrap_unit(z);
    if (stress_) {
      GradMat s = stress_(x, yw, zw, xi);
      if (!s.allFinite())
        throw EvalError("integrand '" + family + "' stress is non-finite at y=" +
                        point_to_string(y) + " z=" + point_to_string(z));
      return s;
    }
    return fd_stress(x, yw, zw, xi);
  }

  bool has_analytic_stress() const { return bool(stress_); }

  /// Quadratic families only: SPD form A with f = <A vec(xi), vec(xi)>.
  QuadForm quad_form(const Point& x, const Point& y, const Point& z) const {
    contract(bool(quad_), "integrand '" + family + "' is not quadratic");
    return quad_(x, wrap_unit(y), wrap_unit(z));
  }

  void set_eval(EvalFn f) { eval_ = std::move(f); }
  void set_stress(StressFn f) { stress_ = std::move(f); }
  void set_quad(QuadFn f) { quad_ = std::move(f); }

  GradMat fd_stress(const Point& x, const Point& y, const Point& z, const GradMat& xi) const {
    const Real h = 1e-6 * (1.0 + xi.norm());
    GradMat s(d, N);
    GradMat e = xi;
    for (int j = 0; j < N; ++j)
      for (int i = 0; i < d; ++i) {
        e(i, j) = xi(i, j) + h;
        const Real fp = eval_(x, y, z, e);
        e(i, j) = xi(i, j) - h;
        const Real fm = eval_(x, y, z, e);
        e(i, j) = xi(i, j);
        s(i, j) = (fp - fm) / (2.0 * h);
      }
    return s;
  }

 private:
  void check_dims(const Point& x, const Point& y, const Point& z, const GradMat& xi) const {
    contract(x.size() == N && y.size() == N && z.size() == N,
             "integrand argument dimension mismatch: expected points in R^" + std::to_string(N));
    contract(xi.rows() == d && xi.cols() == N,
             "integrand xi must be " + std::to_string(d) + "x" + std::to_string(N));
  }

  EvalFn eval_;
  StressFn stress_;
  QuadFn quad_;
};

// ---------------------------------------------------------------------------
// Thin-film integrand W(x, y, z_alpha; xi), xi 3x3
// ---------------------------------------------------------------------------

/// Film density: x in omega x I (macroscopic), y = (y_alpha, y_3) with
/// y_alpha unit-square periodic and y_3 unit periodic, z_alpha unit-square
/// periodic. xi is always 3x3.
class FilmIntegrand {
 public:
  using EvalFn = std::function<Real(const Point&, const Point&, const Point&, const GradMat&)>;
  using QuadFn = std::function<QuadForm(const Point&, const Point&, const Point&)>;

  GrowthSpec growth;
  bool convex = false;
  bool quadratic = false;
  bool depends_on_x = false;
  bool depends_on_y_alpha = false;
  bool depends_on_y3 = false;
  bool depends_on_z = false;
  std::string family;
  json params;

  Real eval(const Point& x, const Point& y, const Point& z_alpha, const GradMat& xi) const {
    check_dims(x, y, z_alpha, xi);
    const Real v = eval_(x, wrap_unit(y), wrap_unit(z_alpha), xi);
    if (!std::isfinite(v))
      throw EvalError("film integrand '" + family + "' returned a non-finite value at y=" +
                      point_to_string(y) + " z_alpha=" + point_to_string(z_alpha));
    return v;
  }

  GradMat stress(const Point& x, const Point& y, const Point& z_alpha, const GradMat& xi) const {
    check_dims(x, y, z_alpha, xi);
    const Point yw = wrap_unit(y), zw = wrap_unit(z_alpha);
    if (stress_) return stress_(x, yw, zw, xi);
    const Real h = 1e-6 * (1.0 + xi.norm());
    GradMat s(3, 3), e = xi;
    for (int j = 0; j < 3; ++j)
      for (int i = 0; i < 3; ++i) {
        e(i, j) = xi(i, j) + h;
        const Real fp = eval_(x, yw, zw, e);
        e(i, j) = xi(i, j) - h;
        const Real fm = eval_(x, yw, zw, e);
        e(i, j) = xi(i, j);
        s(i, j) = (fp - fm) / (2.0 * h);
      }
    return s;
  }

  QuadForm quad_form(const Point& x, const Point& y, const Point& z_alpha) const {
    contract(bool(quad_), "film integrand '" + family + "' is not quadratic");
    return quad_(x, wrap_unit(y), wrap_unit(z_alpha));
  }

  void set_eval(EvalFn f) { eval_ = std::move(f); }
  void set_stress(std::function<GradMat(const Point&, const Point&, const Point&, const GradMat&)> f) {
    stress_ = std::move(f);
  }
  void set_quad(QuadFn f) { quad_ = std::move(f); }

 private:
  void check_dims(const Point& x, const Point& y, const Point& z_alpha, const GradMat& xi) const {
    contract(x.size() == 3 && y.size() == 3 && z_alpha.size() == 2,
             "film integrand expects x,y in R^3 and z_alpha in R^2");
    contract(xi.rows() == 3 && xi.cols() == 3, "film integrand xi must be 3x3");
  }

  EvalFn eval_;
  std::function<GradMat(const Point&, const Point&, const Point&, const GradMat&)> stress_;
  QuadFn quad_;
};

// ---------------------------------------------------------------------------
// Built-in families
// ---------------------------------------------------------------------------

namespace detail {

inline QuadForm parse_spd_matrix(const json& j, int size, const std::string& where) {
  QuadForm m(size, size);
  contract(int(j.size()) == size, where + " must be " + std::to_string(size) + " rows");
  for (int i = 0; i < size; ++i) {
    contract(int(j[i].size()) == size, where + " row length mismatch");
    for (int k = 0; k < size; ++k) m(i, k) = j[i][k].get<Real>();
  }
  contract(m.isApprox(m.transpose(), 1e-12), where + " must be symmetric");
  Eigen::SelfAdjointEigenSolver<QuadForm> es(m);
  contract(es.eigenvalues().minCoeff() > 0.0, where + " must be positive definite");
  return m;
}

inline Real spd_min_eig(const QuadForm& m) {
  Eigen::SelfAdjointEigenSolver<QuadForm> es(m);
  return es.eigenvalues().minCoeff();
}
inline Real spd_max_eig(const QuadForm& m) {
  Eigen::SelfAdjointEigenSolver<QuadForm> es(m);
  return es.eigenvalues().maxCoeff();
}

inline Eigen::Map<const Eigen::VectorXd> vec_view(const GradMat& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

}  // namespace detail

/// quadratic: c(x,y,z) * <Q0 vec(xi), vec(xi)>, Q0 SPD (default identity).
inline MultiscaleIntegrand make_quadratic_integrand(int N, int d, CoefficientField coeff,
                                                    std::optional<QuadForm> q0 = {},
                                                    std::optional<Real> beta_override = {}) {
  contract(N >= 1 && N <= 3 && d >= 1 && d <= 3, "dims must be in 1..3");
  MultiscaleIntegrand f;
  f.N = N;
  f.d = d;
  f.family = "quadratic";
  f.convex = true;
  f.quadratic = true;
  const int nd = N * d;
  QuadForm Q = q0 ? *q0 : QuadForm(QuadForm::Identity(nd, nd));
  contract(Q.rows() == nd && Q.cols() == nd, "quadratic matrix must be (d*N)x(d*N)");
  const Real cmin = coeff.min_value(), cmax = coeff.max_value();
  contract(cmin > 0.0, "coefficient must be uniformly positive");
  const Real lmin = detail::spd_min_eig(Q), lmax = detail::spd_max_eig(Q);
  f.growth.p = 2.0;
  f.growth.beta = beta_override ? *beta_override
                                : 1.05 * std::max(cmax * lmax, 1.0 / (cmin * lmin));
  f.depends_on_x = coeff.depends_on(CoeffVar::X);
  f.depends_on_y = coeff.depends_on(CoeffVar::Y);
  f.depends_on_z = coeff.depends_on(CoeffVar::Z);
  auto c = std::make_shared<CoefficientField>(std::move(coeff));
  auto q = std::make_shared<QuadForm>(std::move(Q));
  f.set_eval([c, q](const Point& x, const Point& y, const Point& z, const GradMat& xi) {
    const auto v = detail::vec_view(xi);
    return c->eval(x, y, z) * v.dot((*q) * v);
  });
  f.set_stress([c, q, d, N](const Point& x, const Point& y, const Point& z, const GradMat& xi) {
    const auto v = detail::vec_view(xi);
    Eigen::VectorXd s = 2.0 * c->eval(x, y, z) * ((*q) * v);
    return GradMat(Eigen::Map<GradMat>(s.data(), d, N));
  });
  f.set_quad([c, q](const Point& x, const Point& y, const Point& z) {
    return QuadForm(c->eval(x, y, z) * (*q));
  });
  return f;
}

/// p_norm: c(x,y,z) * |xi|^p with p >= 2 (kept smooth at xi = 0).
inline MultiscaleIntegrand make_pnorm_integrand(int N, int d, Real p, CoefficientField coeff,
                                                std::optional<Real> beta_override = {}) {
  contract(N >= 1 && N <= 3 && d >= 1 && d <= 3, "dims must be in 1..3");
  contract(p >= 2.0 && p <= 6.0, "p_norm family supports 2 <= p <= 6");
  MultiscaleIntegrand f;
  f.N = N;
  f.d = d;
  f.family = "p_norm";
  f.convex = true;
  f.quadratic = false;
  const Real cmin = coeff.min_value(), cmax = coeff.max_value();
  contract(cmin > 0.0, "coefficient must be uniformly positive");
  f.growth.p = p;
  f.growth.beta = beta_override ? *beta_override : 1.05 * std::max(cmax, 1.0 / cmin);
  f.depends_on_x = coeff.depends_on(CoeffVar::X);
  f.depends_on_y = coeff.depends_on(CoeffVar::Y);
  f.depends_on_z = coeff.depends_on(CoeffVar::Z);
  auto c = std::make_shared<CoefficientField>(std::move(coeff));
  f.set_eval([c, p](const Point& x, const Point& y, const Point& z, const GradMat& xi) {
    return c->eval(x, y, z) * std::pow(xi.norm(), p);
  });
  f.set_stress([c, p](const Point& x, const Point& y, const Point& z, const GradMat& xi) {
    const Real r = xi.norm();
    if (r == 0.0) return GradMat(GradMat::Zero(xi.rows(), xi.cols()));
    return GradMat(c->eval(x, y, z) * p * std::pow(r, p - 2.0) * xi);
  });
  return f;
}

/// double_well: (|xi|^2 - r^2)^2 + reg*|xi|^2; nonconvex, coercive for reg > 0.
inline MultiscaleIntegrand make_double_well_integrand(int N, int d, Real radius = 1.0,
                                                      Real reg = 0.1,
                                                      std::optional<Real> beta_override = {}) {
  contract(N >= 1 && N <= 3 && d >= 1 && d <= 3, "dims must be in 1..3");
  contract(radius > 0.0 && reg > 0.0, "double_well needs radius > 0 and regularization > 0");
  MultiscaleIntegrand f;
  f.N = N;
  f.d = d;
  f.family = "double_well";
  f.convex = false;
  f.quadratic = false;
  f.growth.p = 4.0;
  // (t - r^2)^2 + reg*t with t = |xi|^2 sits inside the p=4 envelope for any
  // beta >= max(1 + r^2 + reg, 2 r^2): margin checked by validate_hypotheses.
  f.growth.beta = beta_override ? *beta_override
                                : 1.1 * std::max(1.0 + radius * radius + reg, 2.0 * radius * radius);
  f.set_eval([radius, reg](const Point&, const Point&, const Point&, const GradMat& xi) {
    const Real t = xi.squaredNorm();
    const Real w = t - radius * radius;
    return w * w + reg * t;
  });
  f.set_stress([radius, reg](const Point&, const Point&, const Point&, const GradMat& xi) {
    const Real t = xi.squaredNorm();
    return GradMat((4.0 * (t - radius * radius) + 2.0 * reg) * xi);
  });
  return f;
}

/// film_quadratic: c(x, y, z_alpha) * <Q0 vec(xi), vec(xi)> with Q0 SPD 9x9.
inline FilmIntegrand make_film_quadratic(CoefficientField coeff, std::optional<QuadForm> q0 = {},
                                         std::optional<Real> beta_override = {}) {
  FilmIntegrand w;
  w.family = "film_quadratic";
  w.convex = true;
  w.quadratic = true;
  QuadForm Q = q0 ? *q0 : QuadForm(QuadForm::Identity(9, 9));
  contract(Q.rows() == 9 && Q.cols() == 9, "film quadratic matrix must be 9x9");
  const Real cmin = coeff.min_value(), cmax = coeff.max_value();
  contract(cmin > 0.0, "coefficient must be uniformly positive");
  const Real lmin = detail::spd_min_eig(Q), lmax = detail::spd_max_eig(Q);
  w.growth.p = 2.0;
  w.growth.beta = beta_override ? *beta_override
                                : 1.05 * std::max(cmax * lmax, 1.0 / (cmin * lmin));
  w.depends_on_x = coeff.depends_on(CoeffVar::X);
  w.depends_on_y_alpha =
      coeff.depends_on_axis(CoeffVar::Y, 0) || coeff.depends_on_axis(CoeffVar::Y, 1);
  w.depends_on_y3 = coeff.depends_on_axis(CoeffVar::Y, 2);
  w.depends_on_z = coeff.depends_on(CoeffVar::Z);
  auto c = std::make_shared<CoefficientField>(std::move(coeff));
  auto q = std::make_shared<QuadForm>(std::move(Q));
  w.set_eval([c, q](const Point& x, const Point& y, const Point& z, const GradMat& xi) {
    const auto v = detail::vec_view(xi);
    return c->eval(x, y, z) * v.dot((*q) * v);
  });
  w.set_stress([c, q](const Point& x, const Point& y, const Point& z, const GradMat& xi) {
    const auto v = detail::vec_view(xi);
    Eigen::VectorXd s = 2.0 * c->eval(x, y, z) * ((*q) * v);
    return GradMat(Eigen::Map<GradMat>(s.data(), 3, 3));
  });
  w.set_quad([c, q](const Point& x, const Point& y, const Point& z) {
    return QuadForm(c->eval(x, y, z) * (*q));
  });
  return w;
}

/// film_p_norm: c(x, y, z_alpha) * |xi|^p.
inline FilmIntegrand make_film_pnorm(Real p, CoefficientField coeff,
                                     std::optional<Real> beta_override = {}) {
  contract(p >= 2.0 && p <= 6.0, "film_p_norm supports 2 <= p <= 6");
  FilmIntegrand w;
  w.family = "film_p_norm";
  w.convex = true;
  w.quadratic = false;
  const Real cmin = coeff.min_value(), cmax = coeff.max_value();
  contract(cmin > 0.0, "coefficient must be uniformly positive");
  w.growth.p = p;
  w.growth.beta = beta_override ? *beta_override : 1.05 * std::max(cmax, 1.0 / cmin);
  w.depends_on_x = coeff.depends_on(CoeffVar::X);
  w.depends_on_y_alpha =
      coeff.depends_on_axis(CoeffVar::Y, 0) || coeff.depends_on_axis(CoeffVar::Y, 1);
  w.depends_on_y3 = coeff.depends_on_axis(CoeffVar::Y, 2);
  w.depends_on_z = coeff.depends_on(CoeffVar::Z);
  auto c = std::make_shared<CoefficientField>(std::move(coeff));
  w.set_eval([c, p](const Point& x, const Point& y, const Point& z, const GradMat& xi) {
    return c->eval(x, y, z) * std::pow(xi.norm(), p);
  });
  w.set_stress([c, p](const Point& x, const Point& y, const Point& z, const GradMat& xi) {
    const Real r = xi.norm();
    if (r == 0.0) return GradMat(GradMat::Zero(3, 3));
    return GradMat(c->eval(x, y, z) * p * std::pow(r, p - 2.0) * xi);
  });
  return w;
}

// ---------------------------------------------------------------------------
// JSON factory
// ---------------------------------------------------------------------------

/// Build a bulk integrand from its JSON description. Strict schema: unknown
/// keys are rejected.
inline MultiscaleIntegrand integrand_from_json(const json& j) {
  detail::check_known_keys(j, {"family", "dims", "p", "beta", "coefficient", "matrix",
                               "radius", "regularization", "convex_flag"},
                           "integrand");
  const std::string family = j.at("family").get<std::string>();
  int N = 1, d = 1;
  if (j.contains("dims")) {
    detail::check_known_keys(j.at("dims"), {"N", "d"}, "integrand dims");
    N = j.at("dims").value("N", 1);
    d = j.at("dims").value("d", 1);
  }
  std::optional<Real> beta;
  if (j.contains("beta") && !j.at("beta").is_null()) {
    beta = j.at("beta").get<Real>();
    contract(*beta > 0.0, "beta must be positive");
  }
  CoefficientField coeff;
  if (j.contains("coefficient")) coeff = CoefficientField::parse(j.at("coefficient"));

  MultiscaleIntegrand f;
  if (family == "quadratic") {
    std::optional<QuadForm> q0;
    if (j.contains("matrix")) q0 = detail::parse_spd_matrix(j.at("matrix"), N * d, "matrix");
    f = make_quadratic_integrand(N, d, std::move(coeff), q0, beta);
  } else if (family == "p_norm") {
    f = make_pnorm_integrand(N, d, j.value("p", 2.0), std::move(coeff), beta);
  } else if (family == "double_well") {
    f = make_double_well_integrand(N, d, j.value("radius", 1.0), j.value("regularization", 0.1),
                                   beta);
  } else {
    throw ContractViolation("unknown integrand family '" + family + "'");
  }
  if (j.contains("convex_flag")) f.convex = j.at("convex_flag").get<bool>();
  f.params = j;
  return f;
}

/// Build a film integrand from JSON; same strictness.
inline FilmIntegrand film_integrand_from_json(const json& j) {
  detail::check_known_keys(j, {"family", "p", "beta", "coefficient", "matrix", "convex_flag"},
                           "film integrand");
  const std::string family = j.at("family").get<std::string>();
  std::optional<Real> beta;
  if (j.contains("beta") && !j.at("beta").is_null()) {
    beta = j.at("beta").get<Real>();
    contract(*beta > 0.0, "beta must be positive");
  }
  CoefficientField coeff;
  if (j.contains("coefficient")) coeff = CoefficientField::parse(j.at("coefficient"));
  FilmIntegrand w;
  if (family == "film_quadratic") {
    std::optional<QuadForm> q0;
    if (j.contains("matrix")) q0 = detail::parse_spd_matrix(j.at("matrix"), 9, "matrix");
    w = make_film_quadratic(std::move(coeff), q0, beta);
  } else if (family == "film_p_norm") {
    w = make_film_pnorm(j.value("p", 2.0), std::move(coeff), beta);
  } else {
    throw ContractViolation("unknown film integrand family '" + family + "'");
  }
  if (j.contains("convex_flag")) w.convex = j.at("convex_flag").get<bool>();
  w.params = j;
  return w;
}

// ---------------------------------------------------------------------------
// Hypothesis validation
// ---------------------------------------------------------------------------

struct HypothesisCheck {
  std::string name;
  bool pass = true;
  Real worst = 0.0;          // residual / violation margin, check-specific
  std::string worst_where;   // offending sample, human readable
};

struct HypothesisReport {
  std::vector<HypothesisCheck> checks;
  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
  const HypothesisCheck& operator[](const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return c;
    throw ContractViolation("no hypothesis check named '" + name + "'");
  }
};

/// Sample-based validation of the runtime contracts: periodicity under
/// integer shifts, two-sided growth, stress consistency against central
/// differences, and midpoint convexity when the integrand declares convexity.
/// Diagnostic only; never throws on a failed check.
inline HypothesisReport validate_hypotheses(const MultiscaleIntegrand& f, int sample_count,
                                            std::uint64_t seed = 20240901ull) {
  contract(sample_count >= 1, "sample_count must be >= 1");
  Rng rng = make_rng(seed);
  HypothesisReport report;
  HypothesisCheck periodicity{"periodicity"}, growth{"growth"}, stress{"stress_consistency"};
  std::optional<HypothesisCheck> convexity;
  if (f.convex) convexity = HypothesisCheck{"midpoint_convexity"};

  const int N = f.N, d = f.d;
  auto random_point_dyadic = [&]() {
    Point u(N);
    for (int i = 0; i < N; ++i) u[i] = rng.dyadic01();
    return u;
  };
  auto random_xi = [&](Real scale) {
    GradMat xi(d, N);
    for (int j = 0; j < N; ++j)
      for (int i = 0; i < d; ++i) xi(i, j) = rng.uniform(-scale, scale);
    return xi;
  };

  for (int s = 0; s < sample_count; ++s) {
    const Point x = Point::Zero(N);
    const Point y = random_point_dyadic();
    const Point z = random_point_dyadic();
    const GradMat xi = random_xi(2.0);

    // Periodicity: dyadic sample points make the shifted arguments exact,
    // so the residual must be exactly zero.
    {
      Point ys = y, zs = z;
      for (int i = 0; i < N; ++i) {
        ys[i] += Real(rng.integer(-3, 3));
        zs[i] += Real(rng.integer(-3, 3));
      }
      const Real r = std::abs(f.eval(x, ys, zs, xi) - f.eval(x, y, z, xi));
      if (r > periodicity.worst) {
        periodicity.worst = r;
        periodicity.worst_where = "y=" + point_to_string(y) + " z=" + point_to_string(z);
      }
      if (r != 0.0) periodicity.pass = false;
    }

    // Growth: margin to either envelope must stay positive.
    {
      const Real v = f.eval(x, y, z, xi);
      const Real lo_margin = v - f.growth.lower(xi);
      const Real hi_margin = f.growth.upper(xi) - v;
      const Real m = std::min(lo_margin, hi_margin);
      if (s == 0 || m < growth.worst) {
        growth.worst = m;
        growth.worst_where = "|xi|=" + std::to_string(xi.norm());
      }
      if (m <= 0.0) growth.pass = false;
    }

    // Stress vs central differences, step 1e-5*(1+|xi|).
    {
      const GradMat sa = f.stress(x, y, z, xi);
      const Real h = 1e-5 * (1.0 + xi.norm());
      GradMat fd(d, N), e = xi;
      for (int j = 0; j < N; ++j)
        for (int i = 0; i < d; ++i) {
          e(i, j) = xi(i, j) + h;
          const Real fp = f.eval(x, y, z, e);
          e(i, j) = xi(i, j) - h;
          const Real fm = f.eval(x, y, z, e);
          e(i, j) = xi(i, j);
          fd(i, j) = (fp - fm) / (2.0 * h);
        }
      const Real scale = std::max(sa.norm(), Real(1.0));
      const Real rel = (sa - fd).norm() / scale;
      if (rel > stress.worst) {
        stress.worst = rel;
        stress.worst_where = "|xi|=" + std::to_string(xi.norm());
      }
      if (rel > 1e-4) stress.pass = false;
    }

    // Midpoint convexity on random segments plus the canonical +/- e_1
    // segment through 0 (catches even non-convex wells deterministically).
    if (convexity) {
      GradMat a = random_xi(1.5), b = random_xi(1.5);
      if (s == 0) {
        a = GradMat::Zero(d, N);
        b = GradMat::Zero(d, N);
        a(0, 0) = 1.0;
        b(0, 0) = -1.0;
      }
      const GradMat mid = 0.5 * (a + b);
      const Real lhs = f.eval(x, y, z, mid);
      const Real rhs = 0.5 * (f.eval(x, y, z, a) + f.eval(x, y, z, b));
      const Real scale = 1.0 + std::abs(lhs) + std::abs(rhs);
      const Real r = (lhs - rhs) / scale;
      if (r > convexity->worst) {
        convexity->worst = r;
        convexity->worst_where = "segment |a-b|=" + std::to_string((a - b).norm());
      }
      if (r > 1e-12) convexity->pass = false;
    }
  }

  report.checks.push_back(periodicity);
  report.checks.push_back(growth);
  report.checks.push_back(stress);
  if (convexity) report.checks.push_back(*convexity);
  return report;
}

}  // namespace homoglab
