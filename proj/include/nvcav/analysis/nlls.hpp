#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nvcav/errors.hpp"

namespace nvcav {

struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd params;
  Eigen::VectorXd std_errors;  // empty unless converged
  Eigen::MatrixXd covariance;
  double residual_norm = 0;    // weighted sum of squared residuals at params
  bool converged = false;
  int iterations = 0;
  int accepted_steps = 0;
  int dof = 0;
  std::pair<double, double> window{0, 0};
  std::string message;

  std::size_t index(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    throw InvalidParameter("no fit parameter named " + std::string(name));
  }
  double operator[](std::string_view name) const { return params[static_cast<Eigen::Index>(index(name))]; }
  double error(std::string_view name) const {
    if (std_errors.size() == 0) return std::numeric_limits<double>::quiet_NaN();
    return std_errors[static_cast<Eigen::Index>(index(name))];
  }
  double reduced_chi2() const { return dof > 0 ? residual_norm / dof : std::numeric_limits<double>::quiet_NaN(); }
};

struct NllsOptions {
  int max_iterations = 500;
  double xtol = 1e-12;
  double ftol = 1e-14;
  double gtol = 1e-14;
  /// When false the covariance is rescaled by the reduced chi-square, which
  /// is appropriate for unweighted data with unknown noise.
  bool absolute_sigma = true;
  Eigen::VectorXd lower;  // optional box bounds
  Eigen::VectorXd upper;
  Eigen::VectorXd scale;  // typical magnitudes for finite-difference steps
};

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

namespace detail {

/// Sequential sum so that re-evaluating a residual norm elsewhere gives the
/// same bits.
inline double sum_squares(const Eigen::VectorXd& r) {
  double s = 0;
  for (Eigen::Index i = 0; i < r.size(); ++i) s += r[i] * r[i];
  return s;
}

inline Eigen::VectorXd project(Eigen::VectorXd p, const NllsOptions& o) {
  if (o.lower.size() == p.size()) p = p.cwiseMax(o.lower);
  if (o.upper.size() == p.size()) p = p.cwiseMin(o.upper);
  return p;
}

inline Eigen::MatrixXd numeric_jacobian(const ResidualFn& f, const Eigen::VectorXd& p, const Eigen::VectorXd& r0,
                                        const NllsOptions& o) {
  const double rel = std::cbrt(std::numeric_limits<double>::epsilon());
  Eigen::MatrixXd j(r0.size(), p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    double typical = o.scale.size() == p.size() ? std::abs(o.scale[k]) : 0.0;
    double h = rel * std::max({std::abs(p[k]), typical, 1e-12});
    Eigen::VectorXd hi = p, lo = p;
    hi[k] += h;
    lo[k] -= h;
    const bool up_ok = o.upper.size() != p.size() || hi[k] <= o.upper[k];
    const bool lo_ok = o.lower.size() != p.size() || lo[k] >= o.lower[k];
    if (up_ok && lo_ok) {
      j.col(k) = (f(hi) - f(lo)) / (2 * h);
    } else if (up_ok) {
      j.col(k) = (f(hi) - r0) / h;
    } else {
      j.col(k) = (r0 - f(lo)) / h;
    }
  }
  return j;
}

}  // namespace detail

/// Damped Gauss-Newton (Levenberg-Marquardt) on an arbitrary residual vector.
/// Residuals are expected to be already divided by their standard deviations.
inline FitResult nlls_solve(const ResidualFn& residuals, Eigen::VectorXd p, std::vector<std::string> names,
                            const NllsOptions& opt = {}, const JacobianFn& jacobian = {}) {
  const Eigen::Index np = p.size();
  if (names.empty())
    for (Eigen::Index i = 0; i < np; ++i) names.push_back("p" + std::to_string(i));
  if (static_cast<Eigen::Index>(names.size()) != np) throw InvalidParameter("parameter name count mismatch");

  FitResult out;
  out.names = std::move(names);
  p = detail::project(p, opt);
  Eigen::VectorXd r = residuals(p);
  if (r.size() < np) throw InvalidParameter("fewer data points than parameters");
  auto finite = [](const Eigen::VectorXd& v) { return v.allFinite(); };
  if (!finite(r)) throw FitFailure("residuals are not finite at the initial guess");

  NllsOptions fd = opt;
  if (fd.scale.size() != np) {
    fd.scale = p.cwiseAbs();
    for (Eigen::Index k = 0; k < np; ++k)
      if (fd.scale[k] == 0) fd.scale[k] = 1.0;
  }
  auto jac = [&](const Eigen::VectorXd& q, const Eigen::VectorXd& rq) {
    return jacobian ? jacobian(q) : detail::numeric_jacobian(residuals, q, rq, fd);
  };

  double cost = detail::sum_squares(r);
  Eigen::MatrixXd j = jac(p, r);
  double lambda = 0.0;
  bool done = false;
  int it = 0;
  for (; it < opt.max_iterations && !done; ++it) {
    Eigen::MatrixXd jtj = j.transpose() * j;
    Eigen::VectorXd g = j.transpose() * r;
    // Parameters pinned at a bound with the descent direction pointing outward are frozen.
    for (Eigen::Index k = 0; k < np; ++k) {
      const bool at_lo = opt.lower.size() == np && p[k] <= opt.lower[k] && g[k] > 0;
      const bool at_hi = opt.upper.size() == np && p[k] >= opt.upper[k] && g[k] < 0;
      if (at_lo || at_hi) {
        jtj.row(k).setZero();
        jtj.col(k).setZero();
        jtj(k, k) = 1.0;
        g[k] = 0.0;
      }
    }
    if (g.lpNorm<Eigen::Infinity>() <= opt.gtol * std::max(1.0, cost) || cost == 0.0) {
      done = true;
      out.message = "gradient tolerance reached";
      break;
    }
    const double dmax = std::max(jtj.diagonal().maxCoeff(), 1e-300);
    bool stepped = false;
    for (int inner = 0; inner < 60 && !stepped; ++inner) {
      Eigen::MatrixXd a = jtj;
      for (Eigen::Index k = 0; k < np; ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-12 * dmax);
      Eigen::VectorXd delta = a.ldlt().solve(-g);
      if (!delta.allFinite()) delta = a.completeOrthogonalDecomposition().solve(-g);
      const Eigen::VectorXd trial = detail::project(p + delta, opt);
      const Eigen::VectorXd rt = residuals(trial);
      const double ct = finite(rt) ? detail::sum_squares(rt) : std::numeric_limits<double>::infinity();
      if (ct <= cost) {
        const double dp = (trial - p).norm();
        const double dc = cost - ct;
        p = trial;
        r = rt;
        cost = ct;
        ++out.accepted_steps;
        lambda = lambda / 4.0;
        if (lambda < 1e-9) lambda = 0.0;
        if (dp <= opt.xtol * (p.norm() + opt.xtol) || dc <= opt.ftol * std::max(ct, 1e-300)) {
          done = true;
          out.message = "converged";
        } else {
          j = jac(p, r);
        }
        stepped = true;
      } else {
        lambda = lambda == 0.0 ? 1e-3 : lambda * 4.0;
        if (lambda > 1e16) {
          done = true;
          out.message = "converged (no further decrease possible)";
          stepped = true;
        }
      }
    }
    if (!stepped) {
      out.message = "step search failed";
      break;
    }
  }
  out.iterations = it;
  out.params = p;
  out.residual_norm = cost;
  out.dof = static_cast<int>(r.size() - np);
  out.converged = done;
  if (!done && out.message.empty()) out.message = "maximum iterations reached";

  if (out.converged) {
    j = jac(p, r);
    const Eigen::MatrixXd jtj = j.transpose() * j;
    // Equilibrate before the rank test so that parameters of very different
    // magnitude are not mistaken for a degeneracy.
    Eigen::VectorXd d = jtj.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd scaled = d.asDiagonal() * jtj * d.asDiagonal();
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
    cod.setThreshold(1e-12);
    cod.compute(scaled);
    if (cod.rank() < np || jtj.diagonal().minCoeff() <= 0) {
      out.converged = false;
      out.message = "singular normal matrix at optimum (parameters not identifiable)";
    } else {
      out.covariance = d.asDiagonal() * cod.pseudoInverse() * d.asDiagonal();
      if (!opt.absolute_sigma && out.dof > 0) out.covariance *= cost / out.dof;
      out.std_errors = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    }
  }
  return out;
}

using ModelFn = std::function<double(double, const Eigen::VectorXd&)>;

/// Curve fit of y(x) with optional per-point sigmas (empty means unit).
inline FitResult nlls_fit(const ModelFn& model, const std::vector<double>& x, const std::vector<double>& y,
                          const std::vector<double>& sigma, const Eigen::VectorXd& p0,
                          std::vector<std::string> names = {}, const NllsOptions& opt = {}) {
  if (x.size() != y.size() || (!sigma.empty() && sigma.size() != x.size()))
    throw InvalidParameter("data arrays differ in length");
  if (x.size() < static_cast<std::size_t>(p0.size())) throw InvalidParameter("fewer data points than parameters");
  for (double s : sigma)
    if (!(s > 0)) throw InvalidParameter("sigmas must be positive");
  const auto n = static_cast<Eigen::Index>(x.size());
  ResidualFn res = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = sigma.empty() ? 1.0 : sigma[i];
      r[i] = (y[i] - model(x[i], p)) / s;
    }
    return r;
  };
  FitResult fr = nlls_solve(res, p0, std::move(names), opt);
  if (!x.empty()) {
    auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    fr.window = {*mn, *mx};
  }
  return fr;
}

/// Poisson weights: sigma = sqrt(max(counts, 1)).
inline std::vector<double> poisson_sigma(const std::vector<double>& counts) {
  std::vector<double> s(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) s[i] = std::sqrt(std::max(counts[i], 1.0));
  return s;
}

/// Weighted residual norm of a model at given parameters; used to verify fit
/// self-consistency.
inline double residual_norm(const ModelFn& model, const std::vector<double>& x, const std::vector<double>& y,
                            const std::vector<double>& sigma, const Eigen::VectorXd& p) {
  double s2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = (y[i] - model(x[i], p)) / (sigma.empty() ? 1.0 : sigma[i]);
    s2 += r * r;
  }
  return s2;
}

}  // namespace nvcav
