#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "m4/error.hpp"

namespace m4 {

/// A total ranking of Q items. Items and positions are 0-based internally;
/// file formats use 1-based item ids.
///
/// position(item) is the rank of the item (0 = most preferred) and
/// item_at(rank) is its inverse.
class Permutation {
 public:
  Permutation() = default;

  /// Identity ranking 0 > 1 > ... > Q-1.
  static Permutation identity(int q) {
    std::vector<int> order(static_cast<std::size_t>(q));
    std::iota(order.begin(), order.end(), 0);
    return from_order(std::move(order));
  }

  /// Builds from the list of items, most preferred first.
  static Permutation from_order(std::vector<int> order) {
    Permutation p;
    const int q = static_cast<int>(order.size());
    p.positions_.assign(order.size(), -1);
    for (int r = 0; r < q; ++r) {
      const int item = order[static_cast<std::size_t>(r)];
      require(item >= 0 && item < q, "permutation: item id out of range");
      require(p.positions_[static_cast<std::size_t>(item)] < 0,
              "permutation: repeated item id");
      p.positions_[static_cast<std::size_t>(item)] = r;
    }
    p.order_ = std::move(order);
    return p;
  }

  /// Builds from position-of-item values.
  static Permutation from_positions(std::vector<int> positions) {
    const int q = static_cast<int>(positions.size());
    std::vector<int> order(positions.size(), -1);
    for (int item = 0; item < q; ++item) {
      const int r = positions[static_cast<std::size_t>(item)];
      require(r >= 0 && r < q, "permutation: position out of range");
      require(order[static_cast<std::size_t>(r)] < 0,
              "permutation: repeated position");
      order[static_cast<std::size_t>(r)] = item;
    }
    Permutation p;
    p.positions_ = std::move(positions);
    p.order_ = std::move(order);
    return p;
  }

  int size() const noexcept { return static_cast<int>(order_.size()); }
  int position(int item) const { return positions_.at(static_cast<std::size_t>(item)); }
  int item_at(int rank) const { return order_.at(static_cast<std::size_t>(rank)); }
  bool prefers(int i, int j) const { return position(i) < position(j); }

  std::span<const int> order() const noexcept { return order_; }
  std::span<const int> positions() const noexcept { return positions_; }

  friend bool operator==(const Permutation& a, const Permutation& b) {
    return a.order_ == b.order_;
  }

 private:
  std::vector<int> positions_;
  std::vector<int> order_;
};

/// Dense indexing of the W = Q(Q-1) ordered pairs (i, j), i != j.
class PairIndex {
 public:
  explicit PairIndex(int q) : q_(q) { require(q >= 2, "pair index: need at least two items"); }

  int items() const noexcept { return q_; }
  int size() const noexcept { return q_ * (q_ - 1); }

  int index(int i, int j) const {
    require(i != j && i >= 0 && j >= 0 && i < q_ && j < q_, "pair index: invalid pair");
    return i * (q_ - 1) + (j < i ? j : j - 1);
  }

  std::pair<int, int> pair(int w) const {
    const int i = w / (q_ - 1);
    const int r = w % (q_ - 1);
    return {i, r < i ? r : r + 1};
  }

  int reverse(int w) const {
    const auto [i, j] = pair(w);
    return index(j, i);
  }

 private:
  int q_;
};

namespace detail {

inline std::uint64_t merge_count(std::vector<int>& v, std::vector<int>& buf,
                                 std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t inv = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  std::size_t a = lo, b = mid, out = lo;
  while (a < mid && b < hi) {
    if (v[b] < v[a]) {
      inv += mid - a;
      buf[out++] = v[b++];
    } else {
      buf[out++] = v[a++];
    }
  }
  while (a < mid) buf[out++] = v[a++];
  while (b < hi) buf[out++] = v[b++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo),
            buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return inv;
}

}  // namespace detail

/// Number of item pairs ordered differently by a and b, by merge-sort
/// inversion counting in O(Q log Q).
inline std::uint64_t kendall_tau(const Permutation& a, const Permutation& b) {
  require(a.size() == b.size(), "kendall_tau: permutations differ in size");
  // Walk a's order and record b's positions; inversions are discordant pairs.
  std::vector<int> seq(static_cast<std::size_t>(a.size()));
  for (int r = 0; r < a.size(); ++r) seq[static_cast<std::size_t>(r)] = b.position(a.item_at(r));
  std::vector<int> buf(seq.size());
  return detail::merge_count(seq, buf, 0, seq.size());
}

/// O(Q^2) pair scan, kept as a cross-check for kendall_tau.
inline std::uint64_t kendall_tau_pairwise(const Permutation& a, const Permutation& b) {
  require(a.size() == b.size(), "kendall_tau: permutations differ in size");
  std::uint64_t d = 0;
  for (int i = 0; i < a.size(); ++i)
    for (int j = i + 1; j < a.size(); ++j)
      if (a.prefers(i, j) != b.prefers(i, j)) ++d;
  return d;
}

/// Binary win relation over ordered pairs: wins[w] != 0 marks that the first
/// item of pair w beats the second.
struct PairwiseRelation {
  int q = 0;
  std::vector<std::uint8_t> wins;

  explicit PairwiseRelation(int items = 0)
      : q(items), wins(items >= 2 ? static_cast<std::size_t>(items * (items - 1)) : 0, 0) {}

  void set_winner(int winner, int loser) {
    const PairIndex idx(q);
    wins[static_cast<std::size_t>(idx.index(winner, loser))] = 1;
    wins[static_cast<std::size_t>(idx.index(loser, winner))] = 0;
  }

  bool beats(int i, int j) const {
    return wins[static_cast<std::size_t>(PairIndex(q).index(i, j))] != 0;
  }

  /// The transitive tournament induced by a ranking.
  static PairwiseRelation from_permutation(const Permutation& p) {
    PairwiseRelation rel(p.size());
    for (int i = 0; i < p.size(); ++i)
      for (int j = i + 1; j < p.size(); ++j)
        p.prefers(i, j) ? rel.set_winner(i, j) : rel.set_winner(j, i);
    return rel;
  }
};

/// Orders items by descending win count over a given score vector; ties go
/// to the smaller item id.
inline Permutation rank_by_wins(std::span<const int> win_counts) {
  std::vector<int> order(win_counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return win_counts[static_cast<std::size_t>(a)] > win_counts[static_cast<std::size_t>(b)];
  });
  return Permutation::from_order(std::move(order));
}

/// Copeland aggregation: count wins per item and sort descending. Every
/// unordered pair must have exactly one winner.
inline Permutation copeland_rank(const PairwiseRelation& rel) {
  require(rel.q >= 1, "copeland_rank: empty relation");
  if (rel.q == 1) return Permutation::identity(1);
  const PairIndex idx(rel.q);
  require(static_cast<int>(rel.wins.size()) == idx.size(), "copeland_rank: relation size mismatch");
  std::vector<int> wins(static_cast<std::size_t>(rel.q), 0);
  for (int i = 0; i < rel.q; ++i) {
    for (int j = i + 1; j < rel.q; ++j) {
      const bool ij = rel.wins[static_cast<std::size_t>(idx.index(i, j))] != 0;
      const bool ji = rel.wins[static_cast<std::size_t>(idx.index(j, i))] != 0;
      if (ij == ji)
        throw Error("copeland_rank: pair (" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                    ") must have exactly one winner");
      ++wins[static_cast<std::size_t>(ij ? i : j)];
    }
  }
  return rank_by_wins(wins);
}

}  // namespace m4
