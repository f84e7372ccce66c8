#pragma once

// H-type group algebra in exponential coordinates (x, z), x horizontal, z central.
//
// Conventions (used by every other header):
//   group law    (x, z) o (x', z') = (x + x', z + z' + 1/2 <J_k x, x'>_k)
//   frame        X_j = d/dx_j + 1/2 sum_k (J_k x)_j d/dz_k
//   dilation     delta_r (x, z) = (r x, r^2 z)
//   gauge        N(x, z) = (|x|^4 + 16 |z|^2)^(1/4)
// With this normalization X_j f(g) = d/ds f(g o (s e_j, 0)) at s = 0.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "subriem/errors.hpp"
#include "subriem/rng.hpp"

namespace subriem {

struct GroupPoint {
  Eigen::VectorXd x;
  Eigen::VectorXd z;

  GroupPoint() = default;
  GroupPoint(Eigen::VectorXd x_, Eigen::VectorXd z_) : x(std::move(x_)), z(std::move(z_)) {}

  bool operator==(const GroupPoint& o) const {
    return x.size() == o.x.size() && z.size() == o.z.size() && x == o.x && z == o.z;
  }
  bool finite() const { return x.allFinite() && z.allFinite(); }
};

class HTypeStructure {
 public:
  HTypeStructure() : HTypeStructure(1, 0, {}) {}

  // Skew-symmetry is always enforced. When `require_htype` is false the data
  // describes a general step-2 group; distance routines then refuse it.
  HTypeStructure(int m, int n, std::vector<Eigen::MatrixXd> J, bool require_htype = true)
      : m_(m), n_(n), J_(std::move(J)) {
    if (m_ <= 0) throw StructuralError("horizontal dimension m must be positive");
    if (n_ < 0) throw StructuralError("center dimension n must be non-negative");
    if (static_cast<int>(J_.size()) != n_)
      throw StructuralError("expected one J matrix per center direction");
    for (const auto& Jk : J_) {
      if (Jk.rows() != m_ || Jk.cols() != m_) throw StructuralError("J_k must be m x m");
      if ((Jk + Jk.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw StructuralError("J_k must be skew-symmetric");
    }
    htype_ = check_htype_property();
    if (require_htype && !htype_)
      throw StructuralError("(sum u_k J_k)^2 != -|u|^2 I: not an H-type structure");
  }

  int m() const { return m_; }
  int n() const { return n_; }
  int homogeneous_dimension() const { return m_ + 2 * n_; }
  int dimension() const { return m_ + n_; }
  const std::vector<Eigen::MatrixXd>& J() const { return J_; }
  bool is_htype() const { return htype_; }

  GroupPoint identity() const {
    return {Eigen::VectorXd::Zero(m_), Eigen::VectorXd::Zero(n_)};
  }

  GroupPoint point(const Eigen::VectorXd& x, const Eigen::VectorXd& z) const {
    GroupPoint g{x, z};
    require(g);
    return g;
  }

  // Flat coordinates (x_1..x_m, z_1..z_n) <-> point.
  GroupPoint from_flat(std::span<const double> v) const {
    if (static_cast<int>(v.size()) != dimension()) throw StructuralError("flat vector size mismatch");
    GroupPoint g{Eigen::VectorXd(m_), Eigen::VectorXd(n_)};
    for (int i = 0; i < m_; ++i) g.x[i] = v[i];
    for (int k = 0; k < n_; ++k) g.z[k] = v[m_ + k];
    return g;
  }

  void require(const GroupPoint& g) const {
    if (g.x.size() != m_ || g.z.size() != n_)
      throw StructuralError("point dimensions do not match the structure (m=" +
                            std::to_string(m_) + ", n=" + std::to_string(n_) + ")");
  }

  bool operator==(const HTypeStructure& o) const {
    if (m_ != o.m_ || n_ != o.n_) return false;
    for (int k = 0; k < n_; ++k)
      if (J_[k] != o.J_[k]) return false;
    return true;
  }

  // Largest entrywise deviation of (sum u_k J_k)^2 + |u|^2 I on `trials`
  // random directions u.
  double htype_residual(int trials = 32, std::uint64_t seed = 0x5EED) const {
    if (n_ == 0) return 0.0;
    Rng rng(seed);
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
      Eigen::VectorXd u(n_);
      for (int k = 0; k < n_; ++k) u[k] = rng.normal();
      Eigen::MatrixXd Ju = Eigen::MatrixXd::Zero(m_, m_);
      for (int k = 0; k < n_; ++k) Ju += u[k] * J_[k];
      const Eigen::MatrixXd r = Ju * Ju + u.squaredNorm() * Eigen::MatrixXd::Identity(m_, m_);
      worst = std::max(worst, r.cwiseAbs().maxCoeff() / std::max(1.0, u.squaredNorm()));
    }
    return worst;
  }

 private:
  bool check_htype_property() const { return htype_residual() <= 1e-10; }

  int m_, n_;
  std::vector<Eigen::MatrixXd> J_;
  bool htype_ = true;
};

namespace presets {

inline HTypeStructure euclidean(int m) { return HTypeStructure(m, 0, {}); }

// H^k: m = 2k, n = 1, J = block-diagonal 90 degree rotations.
inline HTypeStructure heisenberg(int k) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * k, 2 * k);
  for (int b = 0; b < k; ++b) {
    J(2 * b, 2 * b + 1) = -1.0;
    J(2 * b + 1, 2 * b) = 1.0;
  }
  return HTypeStructure(2 * k, 1, {J});
}

// m = 4, n = 3: left multiplication by the imaginary quaternions on R^4.
inline HTypeStructure quaternionic() {
  Eigen::MatrixXd I(4, 4), Jm(4, 4), K(4, 4);
  // q = a + b i + c j + d k, coordinates (a, b, c, d).
  I << 0, -1, 0, 0,
       1, 0, 0, 0,
       0, 0, 0, -1,
       0, 0, 1, 0;
  Jm << 0, 0, -1, 0,
        0, 0, 0, 1,
        1, 0, 0, 0,
        0, -1, 0, 0;
  K << 0, 0, 0, -1,
       0, 0, -1, 0,
       0, 1, 0, 0,
       1, 0, 0, 0;
  return HTypeStructure(4, 3, {I, Jm, K});
}

inline std::vector<std::string> names() {
  return {"heisenberg1", "heisenberg2", "euclidean(m)", "quaternionic"};
}

}  // namespace presets

// Resolves "heisenberg1", "heisenberg2", "quaternionic", "euclidean(m)".
inline HTypeStructure structure_from_preset(const std::string& name) {
  if (name == "heisenberg1") return presets::heisenberg(1);
  if (name == "heisenberg2") return presets::heisenberg(2);
  if (name == "quaternionic") return presets::quaternionic();
  if (name.rfind("euclidean(", 0) == 0 && name.back() == ')') {
    const std::string inner = name.substr(10, name.size() - 11);
    std::size_t used = 0;
    int m = 0;
    try {
      m = std::stoi(inner, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != inner.size() || m <= 0) throw ConfigError("bad euclidean preset: " + name);
    return presets::euclidean(m);
  }
  throw ConfigError("unknown group preset: " + name);
}

inline nlohmann::json to_json(const HTypeStructure& s) {
  nlohmann::json J = nlohmann::json::array();
  for (const auto& Jk : s.J()) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < s.m(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int j = 0; j < s.m(); ++j) row.push_back(Jk(i, j));
      rows.push_back(row);
    }
    J.push_back(rows);
  }
  return {{"m", s.m()}, {"n", s.n()}, {"J", J}};
}

// Accepts a preset name or {m, n, J}.
inline HTypeStructure structure_from_json(const nlohmann::json& j) {
  if (j.is_string()) return structure_from_preset(j.get<std::string>());
  if (!j.is_object()) throw ConfigError("group must be a preset name or {m, n, J}");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "m" && it.key() != "n" && it.key() != "J")
      throw ConfigError("unknown key in group: " + it.key());
  const int m = j.at("m").get<int>();
  const int n = j.value("n", 0);
  std::vector<Eigen::MatrixXd> J;
  if (j.contains("J")) {
    for (const auto& mat : j.at("J")) {
      Eigen::MatrixXd M(m, m);
      if (static_cast<int>(mat.size()) != m) throw StructuralError("J_k row count != m");
      for (int r = 0; r < m; ++r) {
        if (static_cast<int>(mat[r].size()) != m) throw StructuralError("J_k column count != m");
        for (int c = 0; c < m; ++c) M(r, c) = mat[r][c].get<double>();
      }
      J.push_back(M);
    }
  }
  return HTypeStructure(m, n, std::move(J));
}

// ---------------------------------------------------------------------------
// Group operations.

inline GroupPoint group_mul(const HTypeStructure& s, const GroupPoint& a, const GroupPoint& b) {
  s.require(a);
  s.require(b);
  GroupPoint out{a.x + b.x, a.z + b.z};
  for (int k = 0; k < s.n(); ++k) out.z[k] += 0.5 * (s.J()[k] * a.x).dot(b.x);
  return out;
}

// a <- a o (dx, 0) without allocation; the hot path of path simulation.
inline void right_mul_horizontal(const HTypeStructure& s, GroupPoint& a, const Eigen::VectorXd& dx) {
  for (int k = 0; k < s.n(); ++k) a.z[k] += 0.5 * dx.dot(s.J()[k] * a.x);
  a.x += dx;
}

inline GroupPoint group_inverse(const GroupPoint& g) { return {-g.x, -g.z}; }

inline GroupPoint dilate(const GroupPoint& g, double r) {
  if (!(r > 0.0)) throw DomainError("dilation factor must be positive");
  return {r * g.x, (r * r) * g.z};
}

inline constexpr double kKaplanConstant = 16.0;

inline double kaplan_norm(const GroupPoint& g) {
  const double x2 = g.x.squaredNorm();
  return std::pow(x2 * x2 + kKaplanConstant * g.z.squaredNorm(), 0.25);
}

// ---------------------------------------------------------------------------
// Scalar fields and horizontal calculus.

struct EuclideanGradient {
  Eigen::VectorXd dx;
  Eigen::VectorXd dz;
};

struct ScalarField {
  std::function<double(const GroupPoint&)> eval;
  std::function<EuclideanGradient(const GroupPoint&)> grad_hint;
  std::optional<double> lipschitz_hint;

  double operator()(const GroupPoint& g) const { return eval(g); }
  bool has_gradient() const { return static_cast<bool>(grad_hint); }
};

struct HorizontalVector {
  Eigen::VectorXd components;
  double length() const { return components.norm(); }
};

namespace detail {

inline double fd_step(const GroupPoint& g, double base) {
  double scale = 0.0;
  if (g.x.size()) scale = g.x.cwiseAbs().maxCoeff();
  if (g.z.size()) scale = std::max(scale, g.z.cwiseAbs().maxCoeff());
  return base * (1.0 + scale);
}

// g o (s e_j, 0)
inline GroupPoint shift_along(const HTypeStructure& s, const GroupPoint& g, int j, double step) {
  GroupPoint out = g;
  out.x[j] += step;
  for (int k = 0; k < s.n(); ++k) out.z[k] += 0.5 * step * (s.J()[k].row(j).dot(g.x));
  return out;
}

inline double checked(double v) {
  if (!std::isfinite(v)) throw NumericError("non-finite scalar field evaluation");
  return v;
}

}  // namespace detail

// Frame coefficients from Euclidean partials: X_j f = df/dx_j + 1/2 sum_k (J_k x)_j df/dz_k.
inline HorizontalVector frame_from_partials(const HTypeStructure& s, const GroupPoint& g,
                                            const EuclideanGradient& e) {
  HorizontalVector v{e.dx};
  for (int k = 0; k < s.n(); ++k) v.components += 0.5 * e.dz[k] * (s.J()[k] * g.x);
  return v;
}

inline HorizontalVector horizontal_gradient(const HTypeStructure& s, const ScalarField& f,
                                            const GroupPoint& g) {
  s.require(g);
  if (f.grad_hint) {
    auto v = frame_from_partials(s, g, f.grad_hint(g));
    if (!v.components.allFinite()) throw NumericError("non-finite gradient hint");
    return v;
  }
  const double h = detail::fd_step(g, 1e-5);
  HorizontalVector v{Eigen::VectorXd(s.m())};
  for (int j = 0; j < s.m(); ++j) {
    const double fp = detail::checked(f(detail::shift_along(s, g, j, h)));
    const double fm = detail::checked(f(detail::shift_along(s, g, j, -h)));
    v.components[j] = (fp - fm) / (2.0 * h);
  }
  return v;
}

// sum_i X_i X_i f(g) as second derivatives along the curves s -> g o (s e_i, 0).
inline double sub_laplacian(const HTypeStructure& s, const ScalarField& f, const GroupPoint& g) {
  s.require(g);
  double total = 0.0;
  if (f.grad_hint) {
    const double h = detail::fd_step(g, 1e-5);
    for (int i = 0; i < s.m(); ++i) {
      const auto gp = detail::shift_along(s, g, i, h);
      const auto gm = detail::shift_along(s, g, i, -h);
      const double xp = frame_from_partials(s, gp, f.grad_hint(gp)).components[i];
      const double xm = frame_from_partials(s, gm, f.grad_hint(gm)).components[i];
      total += (xp - xm) / (2.0 * h);
    }
    return detail::checked(total);
  }
  const double h = detail::fd_step(g, 1e-4);
  const double f0 = detail::checked(f(g));
  for (int i = 0; i < s.m(); ++i) {
    const double fp = detail::checked(f(detail::shift_along(s, g, i, h)));
    const double fm = detail::checked(f(detail::shift_along(s, g, i, -h)));
    total += (fp - 2.0 * f0 + fm) / (h * h);
  }
  return total;
}

// |grad f|(g)
inline double gradient_length(const HTypeStructure& s, const ScalarField& f, const GroupPoint& g) {
  return horizontal_gradient(s, f, g).length();
}

// f o delta_r, keeping the gradient hint exact when present.
inline ScalarField compose_dilation(const ScalarField& f, double r) {
  if (!(r > 0.0)) throw DomainError("dilation factor must be positive");
  ScalarField out;
  out.eval = [f, r](const GroupPoint& g) { return f(dilate(g, r)); };
  if (f.grad_hint) {
    out.grad_hint = [f, r](const GroupPoint& g) {
      auto e = f.grad_hint(dilate(g, r));
      return EuclideanGradient{r * e.dx, (r * r) * e.dz};
    };
  }
  if (f.lipschitz_hint) out.lipschitz_hint = *f.lipschitz_hint * r;
  return out;
}

// h -> f(g o h). Left translation preserves |grad f|, so the gradient is taken
// by finite differences of the translated field.
inline ScalarField compose_left_translation(const HTypeStructure& s, const ScalarField& f,
                                            const GroupPoint& g) {
  ScalarField out;
  out.eval = [s, f, g](const GroupPoint& h) { return f(group_mul(s, g, h)); };
  out.lipschitz_hint = f.lipschitz_hint;
  return out;
}

}  // namespace subriem
