#pragma once

// Isoperimetric profile U_q = f_p o F_p^{-1} of d nu_p = exp(-|y|^p) dy / Z_p
// on the line, with 1/p + 1/q = 1.

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <vector>

#include "subriem/errors.hpp"

namespace subriem {

struct PhiSpec {
  double beta = 0.5;

  explicit PhiSpec(double b = 0.5) : beta(b) {
    if (!(b > 0.0 && b <= 1.0)) throw DomainError("PhiSpec: beta must lie in (0, 1]");
  }
  double q() const { return 1.0 / beta; }
};

// x (log(1 + x))^beta
inline double phi_eval(const PhiSpec& ps, double x) {
  if (x < 0.0 || std::isnan(x)) throw DomainError("phi_eval: x must be >= 0");
  if (x == 0.0) return 0.0;
  return x * std::pow(std::log1p(x), ps.beta);
}

// theta = sup_{x >= 0} beta x (log(1 + x))^(beta - 1) / (1 + x), maximized over x = e^u.
inline double theta_constant(const PhiSpec& ps) {
  const double b = ps.beta;
  auto g = [b](double u) {
    const double x = std::exp(u);
    return b * x * std::pow(std::log1p(x), b - 1.0) / (1.0 + x);
  };
  double best_u = -40.0, best = g(best_u);
  const int N = 4000;
  for (int i = 0; i <= N; ++i) {
    const double u = -40.0 + 120.0 * i / N;
    const double v = g(u);
    if (v > best) {
      best = v;
      best_u = u;
    }
  }
  // Golden-section refinement around the grid maximum.
  double lo = best_u - 0.03, hi = best_u + 0.03;
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 100; ++it) {
    const double a = hi - r * (hi - lo), c = lo + r * (hi - lo);
    if (g(a) > g(c)) hi = c; else lo = a;
  }
  return std::max(best, g(0.5 * (lo + hi)));
}

class ProfileTable {
 public:
  // Builds the CDF and survival function of nu_p on a y-grid by per-panel
  // Gauss-Kronrod quadrature, then tabulates U_q on grid_size points of (0, 1),
  // log-spaced towards both ends down to t_min.
  ProfileTable(double q, int grid_size = 2001, double tol = 1e-13, double t_min = 1e-12)
      : q_(q), tol_(tol) {
    if (!(q > 1.0) || !std::isfinite(q)) throw DomainError("ProfileTable: q must be > 1");
    if (grid_size < 11) throw DomainError("ProfileTable: grid_size must be >= 11");
    if (!(tol > 0.0)) throw DomainError("ProfileTable: tol must be positive");
    p_ = q / (q - 1.0);
    ymax_ = std::pow(700.0, 1.0 / p_);
    const int panels = 4000;
    ys_.resize(panels + 1);
    for (int i = 0; i <= panels; ++i) ys_[i] = -ymax_ + 2.0 * ymax_ * i / panels;
    std::vector<double> piece(panels);
    for (int i = 0; i < panels; ++i) piece[i] = integrate(ys_[i], ys_[i + 1]);
    cdf_.assign(panels + 1, 0.0);
    sf_.assign(panels + 1, 0.0);
    for (int i = 0; i < panels; ++i) cdf_[i + 1] = cdf_[i] + piece[i];
    for (int i = panels; i > 0; --i) sf_[i - 1] = sf_[i] + piece[i - 1];
    z_ = cdf_.back();
    for (auto& v : cdf_) v /= z_;
    for (auto& v : sf_) v /= z_;
    const double z_exact = 2.0 * boost::math::tgamma(1.0 + 1.0 / p_);
    if (std::abs(z_ / z_exact - 1.0) > 1e-10)
      throw NumericError("ProfileTable: normalization quadrature did not converge");

    // t-grid: log-spaced on [t_min, 1/2] mirrored to (1/2, 1 - t_min].
    const int half = grid_size / 2;
    std::vector<double> left;
    for (int i = 0; i < half; ++i) {
      const double s = static_cast<double>(i) / half;
      left.push_back(std::exp(std::log(t_min) * (1.0 - s) + std::log(0.5) * s));
    }
    for (double t : left) ts_.push_back(t);
    ts_.push_back(0.5);
    for (auto it = left.rbegin(); it != left.rend(); ++it) ts_.push_back(1.0 - *it);
    us_.resize(ts_.size());
    for (std::size_t i = 0; i < ts_.size(); ++i) us_[i] = i < left.size() ? eval_lower(ts_[i]) :
                                                          (i == left.size() ? density(0.0) : eval_upper(left[ts_.size() - 1 - i]));
  }

  double q() const { return q_; }
  double p() const { return p_; }
  double normalization() const { return z_; }
  const std::vector<double>& t_grid() const { return ts_; }
  const std::vector<double>& u_grid() const { return us_; }

  double density(double y) const { return std::exp(-std::pow(std::abs(y), p_)) / z_; }

  // U_q(t); 0 at the endpoints. t <= 1/2 inverts the CDF, t > 1/2 the
  // survival function at 1 - t computed independently.
  double operator()(double t) const {
    if (std::isnan(t)) throw NumericError("ProfileTable: NaN argument");
    if (t <= 0.0 || t >= 1.0) return 0.0;
    if (t <= 0.5) return eval_lower(t);
    return eval_upper(1.0 - t);
  }

  // G(t) = t (log 1/t)^{1/q}, applied at min(t, 1 - t).
  double reference(double t) const {
    const double s = std::min(t, 1.0 - t);
    if (s <= 0.0) return 0.0;
    return s * std::pow(std::log(1.0 / s), 1.0 / q_);
  }

  // Largest |U_q(t) - U_q(1 - t)| over the grid.
  double symmetry_residual() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < ts_.size(); ++i)
      worst = std::max(worst, std::abs(us_[i] - us_[ts_.size() - 1 - i]));
    return worst;
  }

 private:
  double integrate(double a, double b) const {
    auto f = [this](double y) { return std::exp(-std::pow(std::abs(y), p_)); };
    double err = 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 8, 1e-13, &err);
  }

  // Fixed 10-point rule; Newton steps never leave one panel of the y-grid.
  double short_integral(double a, double b) const {
    auto f = [this](double y) { return std::exp(-std::pow(std::abs(y), p_)); };
    return boost::math::quadrature::gauss<double, 10>::integrate(f, a, b);
  }

  // Inverse of the CDF (upper = false) or survival function (upper = true)
  // at level s <= 1/2, returning the density there.
  double invert(double s, bool upper) const {
    const auto& tab = upper ? sf_ : cdf_;
    std::size_t i;
    if (!upper) {
      // cdf_ increasing: last node with cdf <= s.
      auto it = std::upper_bound(tab.begin(), tab.end(), s);
      i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - tab.begin()) - 1));
    } else {
      // sf_ decreasing: first node with sf <= s.
      auto it = std::lower_bound(tab.begin(), tab.end(), s, [](double a, double b) { return a > b; });
      i = static_cast<std::size_t>(std::min<std::ptrdiff_t>(tab.size() - 1, it - tab.begin()));
    }
    const double y0 = ys_[i], v0 = tab[i];
    // Newton on log(level(y)) - log(s), level(y) = v0 +- int_{y0}^{y} f / Z.
    double y = y0;
    for (int it = 0; it < 60; ++it) {
      const double piece = (y == y0) ? 0.0 : short_integral(std::min(y0, y), std::max(y0, y)) / z_;
      const double sign = (y >= y0) ? 1.0 : -1.0;
      const double level = upper ? v0 - sign * piece : v0 + sign * piece;
      if (!(level > 0.0)) {
        y = upper ? y - 0.5 * (ys_[1] - ys_[0]) : y + 0.5 * (ys_[1] - ys_[0]);
        continue;
      }
      const double f = density(y);
      const double g = std::log(level) - std::log(s);
      if (std::abs(g) <= tol_) break;
      const double dg = (upper ? -f : f) / level;
      double step = -g / dg;
      const double h = ys_[1] - ys_[0];
      step = std::clamp(step, -h, h);
      y += step;
    }
    return density(y);
  }

  double eval_lower(double t) const { return invert(t, false); }
  double eval_upper(double s) const { return invert(s, true); }

  double q_, p_, tol_, ymax_ = 0.0, z_ = 1.0;
  std::vector<double> ys_, cdf_, sf_;
  std::vector<double> ts_, us_;
};

inline ProfileTable profile_Uq(double q, int grid_size = 2001, double tol = 1e-13) {
  return ProfileTable(q, grid_size, tol);
}

// Smallest L with G / L <= U_q <= L G on the table's grid.
inline double check_q_equivalence(const ProfileTable& pt) {
  double L = 1.0;
  const auto& ts = pt.t_grid();
  const auto& us = pt.u_grid();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double g = pt.reference(ts[i]);
    if (!(g > 0.0) || !(us[i] > 0.0)) continue;
    L = std::max({L, us[i] / g, g / us[i]});
  }
  return L;
}

}  // namespace subriem
