#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "m4/error.hpp"
#include "m4/mallows.hpp"
#include "m4/parallel.hpp"
#include "m4/permutation.hpp"
#include "m4/rng.hpp"

namespace m4 {

struct SeparabilityReport {
  bool separable = false;
  std::vector<double> best_lambda;  // per component; +inf when no row has positive mass
  std::vector<int> witness_rows;    // row attaining best_lambda, -1 if none
};

/// Checks lambda-approximate separability: for every component k some row has
/// beta_k > 0 and beta_l <= lambda beta_k for all l != k. Reports, per
/// component, the row minimising max_{l != k} beta_l / beta_k.
inline SeparabilityReport check_separability(const RankingMatrix& beta, double lambda) {
  require(lambda >= 0.0 && lambda < 1.0, "check_separability: lambda must lie in [0, 1)");
  const int k = beta.components();
  SeparabilityReport out;
  out.best_lambda.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::infinity());
  out.witness_rows.assign(static_cast<std::size_t>(k), -1);
  for (int w = 0; w < beta.rows(); ++w) {
    // Largest and second-largest entries give max_{l != k} beta_l for every k.
    int top = -1;
    double first = -1.0, second = 0.0;
    for (int c = 0; c < k; ++c) {
      const double v = beta(w, c);
      if (v > first) {
        second = std::max(first, 0.0);
        first = v;
        top = c;
      } else if (v > second) {
        second = v;
      }
    }
    for (int c = 0; c < k; ++c) {
      const double own = beta(w, c);
      if (!(own > 0.0)) continue;
      const double other = k == 1 ? 0.0 : (c == top ? second : first);
      const double ratio = other / own;
      if (ratio < out.best_lambda[static_cast<std::size_t>(c)]) {
        out.best_lambda[static_cast<std::size_t>(c)] = ratio;
        out.witness_rows[static_cast<std::size_t>(c)] = w;
      }
    }
  }
  out.separable = std::all_of(out.best_lambda.begin(), out.best_lambda.end(),
                              [&](double b) { return b <= lambda; });
  return out;
}

/// Lower bound 1 - K exp(-Q / L^(2K-1)) on the separability probability,
/// L = ceil((1 + ln(lambda) / ln(phi)) (1 + eps)). phi = 0 gives L = ceil(1 + eps).
inline double separability_lower_bound(int q, int k, double phi, double lambda, double eps = 0.05) {
  require(lambda > 0.0 && lambda < 1.0, "separability bound: lambda must lie in (0, 1)");
  check_dispersion(phi);
  const double ratio = phi > 0.0 ? std::log(lambda) / std::log(phi) : 0.0;
  const double span = std::ceil((1.0 + ratio) * (1.0 + eps));
  return 1.0 - k * std::exp(-q / std::pow(span, 2 * k - 1));
}

struct SeparabilityEstimate {
  double probability = 0.0;
  double standard_error = 0.0;
  double bound = 0.0;
  int runs = 0;
  int separable_runs = 0;
};

struct SeparabilityOptions {
  int items = 100;
  int components = 10;
  double phi = 0.0;
  double lambda = 0.05;
  int runs = 1000;
  std::uint64_t seed = 0;
  double bound_epsilon = 0.05;
  std::size_t threads = 1;
};

/// Monte Carlo probability that K uniformly random references with common
/// dispersion phi give a lambda-separable ranking matrix. Run r uses stream
/// (seed, r).
inline SeparabilityEstimate separability_probability(const SeparabilityOptions& opt) {
  require(opt.runs >= 1, "separability: runs must be >= 1");
  require(opt.items >= 2, "separability: need at least two items");
  require(opt.components >= 1, "separability: need at least one component");
  require(opt.lambda >= 0.0 && opt.lambda < 1.0, "separability: lambda must lie in [0, 1)");
  check_dispersion(opt.phi);

  std::vector<std::uint8_t> hit(static_cast<std::size_t>(opt.runs), 0);
  parallel_for(hit.size(), opt.threads, [&](std::size_t r) {
    Rng rng = derive_stream(opt.seed, r, 0x53657061u);
    std::vector<MallowsComponent> comps;
    comps.reserve(static_cast<std::size_t>(opt.components));
    std::vector<int> order(static_cast<std::size_t>(opt.items));
    for (int c = 0; c < opt.components; ++c) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      comps.emplace_back(Permutation::from_order(order), opt.phi);
    }
    hit[r] = check_separability(build_ranking_matrix(comps), opt.lambda).separable ? 1 : 0;
  });

  SeparabilityEstimate out;
  out.runs = opt.runs;
  out.separable_runs = static_cast<int>(std::count(hit.begin(), hit.end(), std::uint8_t{1}));
  out.probability = static_cast<double>(out.separable_runs) / opt.runs;
  out.standard_error = std::sqrt(out.probability * (1.0 - out.probability) / opt.runs);
  out.bound = opt.lambda > 0.0
                  ? separability_lower_bound(opt.items, opt.components, opt.phi, opt.lambda, opt.bound_epsilon)
                  : 0.0;
  return out;
}

}  // namespace m4
