#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "m4/error.hpp"
#include "m4/generator.hpp"
#include "m4/permutation.hpp"

namespace m4 {

/// W x M comparison counts, rows = ordered pairs, columns = users.
using CountMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct SplitCounts {
  CountMatrix first;   // X
  CountMatrix second;  // X'
  int users = 0;

  /// (1/M) (X + X') 1: per-pair observation frequency per user.
  Eigen::VectorXd row_frequency() const {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(first.rows());
    for (Eigen::Index w = 0; w < first.outerSize(); ++w) {
      for (CountMatrix::InnerIterator it(first, w); it; ++it) f(w) += it.value();
      for (CountMatrix::InnerIterator it(second, w); it; ++it) f(w) += it.value();
    }
    return f / static_cast<double>(users);
  }
};

/// Splits each user's comparisons by record index: the first ceil(N_m / 2)
/// go to X, the rest to X'.
inline SplitCounts split_halves(const ComparisonCorpus& corpus) {
  corpus.validate();
  const PairIndex idx(corpus.q);
  const auto groups = corpus.by_user();
  std::vector<Eigen::Triplet<double>> first, second;
  first.reserve(corpus.records.size() / 2 + groups.size());
  second.reserve(corpus.records.size() / 2 + groups.size());
  for (std::size_t u = 0; u < groups.size(); ++u) {
    const auto& g = groups[u];
    if (g.size() < 2)
      throw Error("split_halves: user " + std::to_string(u + 1) + " has " + std::to_string(g.size()) +
                  " comparison(s); need at least 2");
    const std::size_t half = (g.size() + 1) / 2;
    for (std::size_t t = 0; t < g.size(); ++t) {
      const auto& r = corpus.records[g[t]];
      auto& dst = t < half ? first : second;
      dst.emplace_back(idx.index(r.winner, r.loser), static_cast<int>(u), 1.0);
    }
  }
  SplitCounts out;
  out.users = corpus.m;
  out.first.resize(idx.size(), corpus.m);
  out.second.resize(idx.size(), corpus.m);
  out.first.setFromTriplets(first.begin(), first.end());
  out.second.setFromTriplets(second.begin(), second.end());
  return out;
}

/// Divides each row by its sum; zero rows stay zero.
inline CountMatrix row_normalize(const CountMatrix& x) {
  CountMatrix out = x;
  for (Eigen::Index w = 0; w < out.outerSize(); ++w) {
    double s = 0.0;
    for (CountMatrix::InnerIterator it(out, w); it; ++it) s += it.value();
    if (s <= 0.0) continue;
    for (CountMatrix::InnerIterator it(out, w); it; ++it) it.valueRef() /= s;
  }
  return out;
}

/// Empirical (or analytic) second-moment matrix over ordered pairs.
/// Rows and columns outside `active` are identically zero.
class CoocMatrix {
 public:
  using Sparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

  CoocMatrix() = default;
  CoocMatrix(Eigen::MatrixXd dense, std::vector<int> active, int users)
      : data_(std::move(dense)), active_(std::move(active)), users_(users) {}
  CoocMatrix(Sparse sparse, std::vector<int> active, int users)
      : data_(std::move(sparse)), active_(std::move(active)), users_(users) {}

  int size() const {
    return std::visit([](const auto& m) { return static_cast<int>(m.rows()); }, data_);
  }
  int users() const noexcept { return users_; }
  bool is_sparse() const noexcept { return std::holds_alternative<Sparse>(data_); }
  const std::vector<int>& active() const noexcept { return active_; }

  /// Estimated sampling standard deviation of each row (Euclidean norm);
  /// empty for population moments.
  const Eigen::VectorXd& row_noise() const noexcept { return noise_; }
  void set_row_noise(Eigen::VectorXd noise) {
    require(noise.size() == 0 || noise.size() == size(), "cooccurrence: row noise size mismatch");
    noise_ = std::move(noise);
  }

  double operator()(int a, int b) const {
    if (const auto* d = std::get_if<Eigen::MatrixXd>(&data_)) return (*d)(a, b);
    return std::get<Sparse>(data_).coeff(a, b);
  }

  /// Dense copy of the selected rows (|rows| x W).
  Eigen::MatrixXd gather_rows(const std::vector<int>& rows) const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (const auto* d = std::get_if<Eigen::MatrixXd>(&data_)) {
        out.row(static_cast<Eigen::Index>(r)) = d->row(rows[r]);
      } else {
        const auto& s = std::get<Sparse>(data_);
        for (Sparse::InnerIterator it(s, rows[r]); it; ++it) out(static_cast<Eigen::Index>(r), it.col()) = it.value();
      }
    }
    return out;
  }

  /// E v and E^T v for a dense block v.
  Eigen::MatrixXd times(const Eigen::MatrixXd& v) const {
    return std::visit([&](const auto& m) -> Eigen::MatrixXd { return m * v; }, data_);
  }
  Eigen::MatrixXd transpose_times(const Eigen::MatrixXd& v) const {
    return std::visit([&](const auto& m) -> Eigen::MatrixXd { return m.transpose() * v; }, data_);
  }

  Eigen::MatrixXd to_dense() const {
    if (const auto* d = std::get_if<Eigen::MatrixXd>(&data_)) return *d;
    return Eigen::MatrixXd(std::get<Sparse>(data_));
  }

 private:
  std::variant<Eigen::MatrixXd, Sparse> data_;
  std::vector<int> active_;
  int users_ = 0;
  Eigen::VectorXd noise_;
};

/// Storage switches to sparse above this many ordered pairs.
inline constexpr int kDenseCoocLimit = 2000;

/// E_hat = M X~' X~^T with X~, X~' the row-normalised halves. A row is active
/// when it has observations in both halves; all other rows and columns are
/// zeroed.
///
/// Row r is a sum over users of u_m = M x~'_rm x~_m, so its sampling variance
/// is estimated as sum_m |u_m|^2 - |E_r|^2 / M.
inline CoocMatrix cooccurrence(const SplitCounts& counts, int dense_limit = kDenseCoocLimit) {
  require(counts.first.rows() == counts.second.rows() && counts.first.cols() == counts.second.cols(),
          "cooccurrence: halves differ in shape");
  const CountMatrix xt = row_normalize(counts.first);
  const CountMatrix xpt = row_normalize(counts.second);
  const Eigen::Index w = xt.rows();

  std::vector<char> live(static_cast<std::size_t>(w), 0);
  std::vector<int> active;
  for (Eigen::Index r = 0; r < w; ++r) {
    if (xt.row(r).nonZeros() > 0 && xpt.row(r).nonZeros() > 0) {
      live[static_cast<std::size_t>(r)] = 1;
      active.push_back(static_cast<int>(r));
    }
  }

  CoocMatrix::Sparse e = (xpt * CountMatrix(xt.transpose())).pruned();
  e *= static_cast<double>(counts.users);
  e.prune([&](Eigen::Index row, Eigen::Index col, double) {
    return live[static_cast<std::size_t>(row)] && live[static_cast<std::size_t>(col)];
  });
  const double m = counts.users;
  Eigen::VectorXd col_sq = Eigen::VectorXd::Zero(xt.cols());
  for (Eigen::Index r = 0; r < w; ++r) {
    if (!live[static_cast<std::size_t>(r)]) continue;
    for (CountMatrix::InnerIterator it(xt, r); it; ++it) col_sq(it.col()) += it.value() * it.value();
  }
  Eigen::VectorXd noise = Eigen::VectorXd::Zero(w);
  for (const int r : active) {
    double sum = 0.0;
    for (CountMatrix::InnerIterator it(xpt, r); it; ++it) sum += it.value() * it.value() * col_sq(it.col());
    noise(r) = std::sqrt(std::max(m * m * sum - e.row(r).squaredNorm() / m, 0.0));
  }

  CoocMatrix out = w <= dense_limit ? CoocMatrix(Eigen::MatrixXd(e), std::move(active), counts.users)
                                    : CoocMatrix(std::move(e), std::move(active), counts.users);
  out.set_row_noise(std::move(noise));
  return out;
}

/// Population moments E = Bbar Rbar Bbar^T = diag^-1(Ba) B R B^T diag^-1(Ba)
/// with the matching row frequencies Ba. Rows with Ba = 0 are inactive.
struct AnalyticMoments {
  CoocMatrix cooc;
  Eigen::VectorXd row_frequency;
};

inline AnalyticMoments analytic_cooccurrence(const RankingMatrix& topic, const Eigen::VectorXd& mean,
                                             const Eigen::MatrixXd& correlation) {
  require(topic.components() == mean.size() && correlation.rows() == mean.size() &&
              correlation.cols() == mean.size(),
          "analytic_cooccurrence: dimension mismatch");
  const Eigen::VectorXd ba = topic.values * mean;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(ba.size());
  std::vector<int> active;
  for (Eigen::Index w = 0; w < ba.size(); ++w) {
    if (ba(w) > 0.0) {
      inv(w) = 1.0 / ba(w);
      active.push_back(static_cast<int>(w));
    }
  }
  Eigen::MatrixXd e = inv.asDiagonal() * (topic.values * correlation * topic.values.transpose()) * inv.asDiagonal();
  return {CoocMatrix(std::move(e), std::move(active), 0), ba};
}

}  // namespace m4
