#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "m4/error.hpp"

namespace m4 {

/// Euclidean projection onto {x >= 0, sum x = 1} by the sorted-threshold
/// rule: x = max(v - tau, 0) with tau chosen so the result sums to one.
inline Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index k = v.size();
  require(k >= 1, "project_to_simplex: empty vector");
  require(v.allFinite(), "project_to_simplex: non-finite entry");
  std::vector<double> u(v.data(), v.data() + k);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double tau = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    cumsum += u[static_cast<std::size_t>(j)];
    const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) tau = t;
  }
  Eigen::VectorXd x = (v.array() - tau).max(0.0);
  // Absorb rounding so the constraint holds to machine precision.
  const double s = x.sum();
  if (s > 0.0) x /= s;
  return x;
}

/// minimise  b^T H b - c^T b + constant  over the probability simplex.
struct SimplexQp {
  Eigen::MatrixXd quadratic;  // H, symmetric
  Eigen::VectorXd linear;     // c
  double constant = 0.0;

  double objective(const Eigen::VectorXd& b) const {
    return b.dot(quadratic * b) - linear.dot(b) + constant;
  }
};

struct SimplexQpResult {
  Eigen::VectorXd solution;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double ridge = 0.0;               // diagonal shift added when H was indefinite
  std::vector<double> trace;        // objective after each iteration, if requested
};

struct SimplexQpOptions {
  double epsilon = 1e-4;
  int max_iterations = 10000;
  bool keep_trace = false;
};

/// Accelerated projected gradient (FISTA) with a monotone safeguard: the
/// reported iterate never increases the objective. Step size 1/L with
/// L = 2 lambda_max(H). When H is indefinite, |lambda_min| + 1e-10 is added
/// to its diagonal first. Stops when the objective changes by at most
/// epsilon (1 + |objective|).
inline SimplexQpResult solve_simplex_qp(SimplexQp qp, const SimplexQpOptions& opt = {}) {
  const Eigen::Index k = qp.linear.size();
  require(qp.quadratic.rows() == k && qp.quadratic.cols() == k, "solve_simplex_qp: dimension mismatch");
  require(opt.epsilon > 0.0, "solve_simplex_qp: epsilon must be positive");
  qp.quadratic = 0.5 * (qp.quadratic + qp.quadratic.transpose());

  SimplexQpResult res;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(qp.quadratic, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues().minCoeff();
  double lmax = eig.eigenvalues().maxCoeff();
  if (lmin < 0.0) {
    res.ridge = std::abs(lmin) + 1e-10;
    qp.quadratic.diagonal().array() += res.ridge;
    lmax += res.ridge;
  }
  const double lipschitz = std::max(2.0 * lmax, 1e-300);

  Eigen::VectorXd x = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
  Eigen::VectorXd y = x;
  double t = 1.0;
  double fx = qp.objective(x);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    const Eigen::VectorXd grad = 2.0 * (qp.quadratic * y) - qp.linear;
    const Eigen::VectorXd z = project_to_simplex(y - grad / lipschitz);
    const double fz = qp.objective(z);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    Eigen::VectorXd x_next = x;
    double f_next = fx;
    if (fz <= fx) {
      x_next = z;
      f_next = fz;
    }
    y = x_next + (t / t_next) * (z - x_next) + ((t - 1.0) / t_next) * (x_next - x);
    const double change = std::abs(fx - f_next);
    const bool moved = (x_next - x).squaredNorm() > 0.0;
    x = std::move(x_next);
    fx = f_next;
    t = t_next;
    res.iterations = it;
    if (opt.keep_trace) res.trace.push_back(fx);
    // A rejected step (momentum overshoot) says nothing about convergence.
    if (moved && change <= opt.epsilon * (1.0 + std::abs(fx))) {
      res.converged = true;
      break;
    }
    if (!moved && (z - x).squaredNorm() == 0.0) {
      res.converged = true;
      break;
    }
  }
  res.solution = std::move(x);
  res.objective = fx;
  return res;
}

}  // namespace m4
