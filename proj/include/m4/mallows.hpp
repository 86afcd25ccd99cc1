#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "m4/error.hpp"
#include "m4/permutation.hpp"
#include "m4/rng.hpp"

namespace m4 {

/// 1 + phi + ... + phi^(n-1). Falls back to n when phi is within 1e-12 of 1.
inline double geometric_sum(double phi, int n) {
  if (n <= 0) return 0.0;
  if (std::abs(1.0 - phi) < 1e-12) return static_cast<double>(n);
  return (1.0 - std::pow(phi, n)) / (1.0 - phi);
}

inline void check_dispersion(double phi) {
  if (!(phi >= 0.0 && phi < 1.0))
    throw Error("dispersion must lie in [0, 1), got " + std::to_string(phi));
}

/// A Mallows distribution centred on `reference` with dispersion phi.
struct MallowsComponent {
  Permutation reference;
  double dispersion = 0.0;

  MallowsComponent(Permutation ref, double phi) : reference(std::move(ref)), dispersion(phi) {
    check_dispersion(phi);
  }

  int items() const noexcept { return reference.size(); }

  /// Normalising constant prod_{i=1..Q} [i]_phi.
  double partition_function() const {
    double z = 1.0;
    for (int i = 1; i <= items(); ++i) z *= geometric_sum(dispersion, i);
    return z;
  }
};

inline double mallows_pmf(const MallowsComponent& c, const Permutation& sigma) {
  require(sigma.size() == c.items(), "mallows_pmf: dimension mismatch");
  const auto d = kendall_tau(sigma, c.reference);
  return std::pow(c.dispersion, static_cast<double>(d)) / c.partition_function();
}

/// Probability that the repeated insertion model places the i-th reference
/// item (1-based) at slot l (1-based, 1 <= l <= i) of the current sequence.
inline double rim_insertion_probability(int i, int l, double phi) {
  require(i >= 1 && l >= 1 && l <= i, "rim_insertion_probability: need 1 <= l <= i");
  return std::pow(phi, i - l) / geometric_sum(phi, i);
}

/// Builds the ranking produced by a full insertion-index vector:
/// slots[i-1] is the 1-based slot of the i-th reference item.
inline Permutation rim_apply(const Permutation& reference, std::span<const int> slots) {
  require(static_cast<int>(slots.size()) == reference.size(), "rim_apply: size mismatch");
  std::vector<int> seq;
  seq.reserve(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const int l = slots[i];
    require(l >= 1 && l <= static_cast<int>(i) + 1, "rim_apply: slot out of range");
    seq.insert(seq.begin() + (l - 1), reference.item_at(static_cast<int>(i)));
  }
  return Permutation::from_order(std::move(seq));
}

/// Draws an exact Mallows sample by repeated insertion.
inline Permutation rim_sample(const MallowsComponent& c, Rng& rng) {
  const int q = c.items();
  const double phi = c.dispersion;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> seq;
  seq.reserve(static_cast<std::size_t>(q));
  const double log_phi = phi > 0.0 ? std::log(phi) : 0.0;
  for (int i = 1; i <= q; ++i) {
    // Offset from the end t = i - l has P(t) = phi^t / [i]; invert the
    // truncated geometric CDF 1 - phi^(t+1) over [i] * (1 - phi).
    int t = 0;
    if (phi > 0.0 && i > 1) {
      const double u = unif(rng);
      const double tail = 1.0 - u * (1.0 - std::pow(phi, i));
      t = static_cast<int>(std::floor(std::log(tail) / log_phi));
      t = std::clamp(t, 0, i - 1);
    }
    seq.insert(seq.end() - t, c.reference.item_at(i - 1));
  }
  return Permutation::from_order(std::move(seq));
}

/// Probability that the earlier of two items whose reference positions are
/// `gap` apart stays ahead:
///   sum_{r=1..g} phi^(r-1) [g+1-r] / ([g] [g+1]).
/// The summed form is stable for phi close to 1.
inline double pairwise_marginal(int gap, double phi) {
  if (gap < 1) throw Error("pairwise_marginal: gap must be >= 1");
  check_dispersion(phi);
  if (phi == 0.0) return 1.0;
  double num = 0.0;
  double pw = 1.0;
  for (int r = 1; r <= gap; ++r) {
    num += pw * geometric_sum(phi, gap + 1 - r);
    pw *= phi;
  }
  return num / (geometric_sum(phi, gap) * geometric_sum(phi, gap + 1));
}

/// Probability that the later of two items whose reference positions are
/// `gap` apart comes first: phi^g sum_{r=1..g} [r] / ([g] [g+1]). Equals
/// 1 - pairwise_marginal without the cancellation for small values.
inline double reverse_marginal(int gap, double phi) {
  if (gap < 1) throw Error("reverse_marginal: gap must be >= 1");
  check_dispersion(phi);
  if (phi == 0.0) return 0.0;
  double num = 0.0;
  for (int r = 1; r <= gap; ++r) num += geometric_sum(phi, r);
  return std::pow(phi, gap) * num / (geometric_sum(phi, gap) * geometric_sum(phi, gap + 1));
}

/// Upper bound L phi^(L-1) / (1 + L phi^(L-1)) on the reverse
/// marginal of a pair whose positions differ by L - 1.
inline double marginal_ratio_bound(int span, double phi) {
  if (span < 2) throw Error("marginal_ratio_bound: L must be >= 2");
  check_dispersion(phi);
  const double x = span * std::pow(phi, span - 1);
  return x / (1.0 + x);
}

/// Forward and reverse marginals for gaps 1..q-1; entry 0 is unused.
struct MarginalTable {
  std::vector<double> ahead;
  std::vector<double> behind;
};

inline MarginalTable marginal_table(int q, double phi) {
  const auto n = static_cast<std::size_t>(std::max(q, 1));
  MarginalTable t{std::vector<double>(n, 1.0), std::vector<double>(n, 0.0)};
  for (int g = 1; g < q; ++g) {
    t.ahead[static_cast<std::size_t>(g)] = pairwise_marginal(g, phi);
    t.behind[static_cast<std::size_t>(g)] = reverse_marginal(g, phi);
  }
  return t;
}

enum class MatrixKind { beta, B, B_bar };

/// W x K matrix over ordered pairs (rows indexed by PairIndex).
struct RankingMatrix {
  int q = 0;
  MatrixKind kind = MatrixKind::beta;
  Eigen::MatrixXd values;

  int rows() const noexcept { return static_cast<int>(values.rows()); }
  int components() const noexcept { return static_cast<int>(values.cols()); }
  double operator()(int w, int k) const { return values(w, k); }
};

inline int common_items(std::span<const MallowsComponent> components) {
  require(!components.empty(), "need at least one component");
  const int q = components.front().items();
  for (const auto& c : components)
    require(c.items() == q, "components disagree on the number of items");
  require(q >= 2, "need at least two items");
  return q;
}

/// Closed-form ranking matrix beta_{(i,j),k} from per-gap marginals.
inline RankingMatrix build_ranking_matrix(std::span<const MallowsComponent> components) {
  const int q = common_items(components);
  const PairIndex idx(q);
  RankingMatrix out{q, MatrixKind::beta, Eigen::MatrixXd(idx.size(), static_cast<Eigen::Index>(components.size()))};
  for (std::size_t k = 0; k < components.size(); ++k) {
    const auto& c = components[k];
    const auto table = marginal_table(q, c.dispersion);
    for (int i = 0; i < q; ++i) {
      for (int j = i + 1; j < q; ++j) {
        const int gap = c.reference.position(j) - c.reference.position(i);
        const auto g = static_cast<std::size_t>(std::abs(gap));
        const double ahead = table.ahead[g], behind = table.behind[g];
        out.values(idx.index(i, j), static_cast<Eigen::Index>(k)) = gap > 0 ? ahead : behind;
        out.values(idx.index(j, i), static_cast<Eigen::Index>(k)) = gap > 0 ? behind : ahead;
      }
    }
  }
  return out;
}

/// Exact ranking matrix by summing the pmf over all Q! permutations.
inline RankingMatrix brute_force_beta(std::span<const MallowsComponent> components, int max_q = 7) {
  const int q = common_items(components);
  if (q > max_q)
    throw Error("brute_force_beta: Q=" + std::to_string(q) + " exceeds limit " + std::to_string(max_q));
  const PairIndex idx(q);
  RankingMatrix out{q, MatrixKind::beta,
                    Eigen::MatrixXd::Zero(idx.size(), static_cast<Eigen::Index>(components.size()))};
  for (std::size_t k = 0; k < components.size(); ++k) {
    const auto& c = components[k];
    const double z = c.partition_function();
    std::vector<int> order(static_cast<std::size_t>(q));
    std::iota(order.begin(), order.end(), 0);
    do {
      const auto sigma = Permutation::from_order(order);
      const double p = std::pow(c.dispersion, static_cast<double>(kendall_tau(sigma, c.reference))) / z;
      for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j)
          if (i != j && sigma.prefers(i, j)) out.values(idx.index(i, j), static_cast<Eigen::Index>(k)) += p;
    } while (std::next_permutation(order.begin(), order.end()));
  }
  return out;
}

}  // namespace m4
