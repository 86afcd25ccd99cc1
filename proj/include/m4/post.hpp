#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "m4/error.hpp"
#include "m4/mallows.hpp"
#include "m4/permutation.hpp"

namespace m4 {

/// Largest dispersion an estimate is clamped to.
inline constexpr double kMaxDispersion = 1.0 - 1e-9;

struct BetaEstimate {
  RankingMatrix beta;
  /// unresolved(w, k) != 0 when B_hat has zero mass on both directions of
  /// pair w in component k.
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> unresolved;

  int unresolved_count() const {
    // Each unordered pair is flagged twice (once per direction).
    return static_cast<int>(unresolved.cast<int>().sum()) / 2;
  }
};

/// beta_hat_{(i,j),k} = B_{(i,j),k} / (B_{(i,j),k} + B_{(j,i),k}). Pairs with a
/// zero denominator get 0.5 and are flagged.
inline BetaEstimate recover_beta(const RankingMatrix& topic) {
  const PairIndex idx(topic.q);
  require(topic.rows() == idx.size(), "recover_beta: row count does not match Q(Q-1)");
  const auto k = topic.components();
  BetaEstimate out{RankingMatrix{topic.q, MatrixKind::beta, Eigen::MatrixXd(idx.size(), k)},
                   Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(idx.size(), k)};
  for (int w = 0; w < idx.size(); ++w) {
    const int rw = idx.reverse(w);
    for (int c = 0; c < k; ++c) {
      const double den = topic(w, c) + topic(rw, c);
      if (den > 0.0) {
        out.beta.values(w, c) = topic(w, c) / den;
      } else {
        out.beta.values(w, c) = 0.5;
        out.unresolved(w, c) = 1;
      }
    }
  }
  return out;
}

struct RoundedRelations {
  std::vector<PairwiseRelation> relations;  // one complete relation per component
  int ties = 0;                             // resolved pairs with beta_hat exactly 0.5
  int unresolved = 0;                       // pairs filled from Copeland of resolved pairs
};

/// i beats j in component k iff beta_hat_{(i,j),k} > 0.5. Exact 0.5 goes to the
/// smaller item id. Unresolved pairs take the order implied by win counts
/// over resolved pairs only.
inline RoundedRelations round_relations(const BetaEstimate& est) {
  const int q = est.beta.q;
  const PairIndex idx(q);
  RoundedRelations out;
  for (int c = 0; c < est.beta.components(); ++c) {
    PairwiseRelation rel(q);
    std::vector<int> wins(static_cast<std::size_t>(q), 0);
    std::vector<std::pair<int, int>> open;
    for (int i = 0; i < q; ++i) {
      for (int j = i + 1; j < q; ++j) {
        const int w = idx.index(i, j);
        if (est.unresolved.size() > 0 && est.unresolved(w, c)) {
          open.emplace_back(i, j);
          continue;
        }
        const double b = est.beta(w, c);
        if (b == 0.5) ++out.ties;
        const bool i_wins = b >= 0.5;
        i_wins ? rel.set_winner(i, j) : rel.set_winner(j, i);
        ++wins[static_cast<std::size_t>(i_wins ? i : j)];
      }
    }
    if (!open.empty()) {
      const auto partial = rank_by_wins(wins);
      for (const auto& [i, j] : open) partial.prefers(i, j) ? rel.set_winner(i, j) : rel.set_winner(j, i);
      out.unresolved += static_cast<int>(open.size());
    }
    out.relations.push_back(std::move(rel));
  }
  return out;
}

inline std::vector<Permutation> recover_rankings(const std::vector<PairwiseRelation>& relations) {
  std::vector<Permutation> out;
  out.reserve(relations.size());
  for (const auto& r : relations) out.push_back(copeland_rank(r));
  return out;
}

struct DispersionEstimate {
  double value = 0.0;
  double raw = 0.0;
  bool clamped = false;
};

/// Mean of 1/beta_hat over the Q-1 adjacent pairs of the recovered ranking,
/// minus one, clamped into [0, 1).
inline DispersionEstimate estimate_dispersion(const RankingMatrix& beta, const Permutation& ranking, int k) {
  const int q = beta.q;
  require(ranking.size() == q, "estimate_dispersion: ranking size mismatch");
  require(k >= 0 && k < beta.components(), "estimate_dispersion: component out of range");
  const PairIndex idx(q);
  double acc = 0.0;
  for (int r = 0; r + 1 < q; ++r) {
    const int i = ranking.item_at(r);
    const int j = ranking.item_at(r + 1);
    const double b = beta(idx.index(i, j), k);
    if (!(b > 0.0))
      throw Error("estimate_dispersion: adjacent pair (" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                  ") has zero estimate in component " + std::to_string(k + 1));
    acc += 1.0 / b;
  }
  DispersionEstimate out;
  out.raw = acc / (q - 1) - 1.0;
  out.value = std::clamp(out.raw, 0.0, kMaxDispersion);
  out.clamped = out.value != out.raw;
  return out;
}

struct PostDiagnostics {
  int unresolved_pairs = 0;
  int rounding_ties = 0;
  std::vector<int> clamped_components;
  /// Components whose recovered ranking has an adjacent pair with zero
  /// estimated mass; their dispersion is set to the upper clamp.
  std::vector<int> degenerate_components;
};

struct EstimatedModel {
  std::vector<Permutation> rankings;
  std::vector<double> dispersions;
  RankingMatrix topic;  // B_hat
  RankingMatrix beta;   // beta_hat
  PostDiagnostics diagnostics;

  int k() const noexcept { return static_cast<int>(rankings.size()); }

  std::vector<MallowsComponent> components() const {
    std::vector<MallowsComponent> out;
    for (std::size_t c = 0; c < rankings.size(); ++c) out.emplace_back(rankings[c], dispersions[c]);
    return out;
  }
};

/// Ranking matrix B_hat -> reference rankings and dispersions.
inline EstimatedModel post_process(const RankingMatrix& topic) {
  auto beta = recover_beta(topic);
  auto rounded = round_relations(beta);
  EstimatedModel out;
  out.rankings = recover_rankings(rounded.relations);
  out.diagnostics.unresolved_pairs = rounded.unresolved;
  out.diagnostics.rounding_ties = rounded.ties;
  for (int c = 0; c < topic.components(); ++c) {
    DispersionEstimate d;
    try {
      d = estimate_dispersion(beta.beta, out.rankings[static_cast<std::size_t>(c)], c);
    } catch (const Error&) {
      d = {kMaxDispersion, std::numeric_limits<double>::infinity(), true};
      out.diagnostics.degenerate_components.push_back(c);
    }
    out.dispersions.push_back(d.value);
    if (d.clamped) out.diagnostics.clamped_components.push_back(c);
  }
  out.topic = topic;
  out.beta = std::move(beta.beta);
  return out;
}

}  // namespace m4
