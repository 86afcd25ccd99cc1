#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "m4/error.hpp"
#include "m4/mallows.hpp"
#include "m4/permutation.hpp"

namespace m4 {

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian
/// method with row/column potentials, O(n^3)). Returns assignment[row] = col.
inline std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  require(cost.cols() == n, "hungarian: cost matrix must be square");
  if (n == 0) return {};
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is a virtual start node.
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<int> match(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(n + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = match[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) assignment[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return assignment;
}

struct RecoveryReport {
  std::vector<int> matching;                 // matching[k] = estimate component aligned to truth k
  std::vector<std::uint64_t> per_component;  // Kendall distance per truth component
  double normalized_error = 0.0;             // mean Kendall / W
  std::vector<double> dispersion_errors;     // |phi_hat - phi| per truth component
};

/// Aligns estimated components to the truth by minimum total Kendall distance
/// and reports the normalised recovery error.
inline RecoveryReport align_and_score(const std::vector<MallowsComponent>& truth,
                                      const std::vector<MallowsComponent>& estimate) {
  require(!truth.empty(), "align_and_score: empty truth");
  require(truth.size() == estimate.size(), "align_and_score: component counts differ");
  const int q = truth.front().items();
  for (const auto& c : truth) require(c.items() == q, "align_and_score: truth components disagree on Q");
  for (const auto& c : estimate) require(c.items() == q, "align_and_score: Q mismatch between truth and estimate");

  const auto k = static_cast<Eigen::Index>(truth.size());
  Eigen::MatrixXd cost(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b)
      cost(a, b) = static_cast<double>(kendall_tau(truth[static_cast<std::size_t>(a)].reference,
                                                   estimate[static_cast<std::size_t>(b)].reference));
  RecoveryReport out;
  out.matching = hungarian(cost);
  const double w = static_cast<double>(q) * (q - 1);
  double total = 0.0;
  for (Eigen::Index a = 0; a < k; ++a) {
    const auto b = static_cast<std::size_t>(out.matching[static_cast<std::size_t>(a)]);
    const auto d = kendall_tau(truth[static_cast<std::size_t>(a)].reference, estimate[b].reference);
    out.per_component.push_back(d);
    out.dispersion_errors.push_back(std::abs(estimate[b].dispersion - truth[static_cast<std::size_t>(a)].dispersion));
    total += static_cast<double>(d) / w;
  }
  out.normalized_error = total / static_cast<double>(k);
  return out;
}

struct WeightInference {
  Eigen::VectorXd theta;
  std::vector<double> loglik;  // log-likelihood before the first and after each iteration
  int iterations = 0;
};

/// Maximum-likelihood mixing weights of one user's comparisons for a fixed
/// B_hat, by EM on sum_k B_{w,k} theta_k starting at the barycentre.
/// `rows` are ordered-pair indices of the user's comparisons.
inline WeightInference infer_weights(const std::vector<int>& rows, const RankingMatrix& topic, int max_iter = 500,
                                     double tol = 1e-8) {
  const auto k = static_cast<Eigen::Index>(topic.components());
  const PairIndex idx(topic.q);
  for (const int w : rows) {
    require(w >= 0 && w < topic.rows(), "infer_weights: row out of range");
    if (topic.values.row(w).maxCoeff() <= 0.0) {
      const auto [i, j] = idx.pair(w);
      throw Error("infer_weights: comparison (" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                  ") has zero probability under every component");
    }
  }
  WeightInference out;
  out.theta = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
  if (rows.empty()) return out;

  auto loglik = [&](const Eigen::VectorXd& theta) {
    double ll = 0.0;
    for (const int w : rows) ll += std::log(topic.values.row(w).dot(theta));
    return ll;
  };
  out.loglik.push_back(loglik(out.theta));
  for (int it = 1; it <= max_iter; ++it) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(k);
    for (const int w : rows) {
      const Eigen::VectorXd joint = topic.values.row(w).transpose().cwiseProduct(out.theta);
      acc += joint / joint.sum();
    }
    out.theta = acc / static_cast<double>(rows.size());
    out.loglik.push_back(loglik(out.theta));
    out.iterations = it;
    const double prev = out.loglik[out.loglik.size() - 2];
    const double cur = out.loglik.back();
    if (std::abs(cur - prev) <= tol * std::abs(prev)) break;
  }
  return out;
}

struct PredictiveLikelihood {
  double mean = 0.0;  // -inf when any comparison has zero probability
  int zero_probability = 0;
  int comparisons = 0;
};

/// Mean over comparisons of log sum_k B_{w,k} theta_k.
inline PredictiveLikelihood predict_loglik(const std::vector<int>& rows, const Eigen::VectorXd& theta,
                                           const RankingMatrix& topic) {
  require(theta.size() == topic.components(), "predict_loglik: theta size mismatch");
  require(theta.minCoeff() >= -1e-12 && std::abs(theta.sum() - 1.0) < 1e-9, "predict_loglik: theta not on simplex");
  PredictiveLikelihood out;
  out.comparisons = static_cast<int>(rows.size());
  double total = 0.0;
  for (const int w : rows) {
    const double p = topic.values.row(w).dot(theta);
    if (p > 0.0) {
      total += std::log(p);
    } else {
      ++out.zero_probability;
    }
  }
  if (out.zero_probability > 0) {
    out.mean = -std::numeric_limits<double>::infinity();
  } else if (!rows.empty()) {
    out.mean = total / static_cast<double>(rows.size());
  }
  return out;
}

}  // namespace m4
