#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "m4/error.hpp"
#include "m4/mallows.hpp"
#include "m4/moments.hpp"
#include "m4/parallel.hpp"
#include "m4/rng.hpp"
#include "m4/simplex.hpp"

namespace m4 {

struct DetectionConfig {
  int k = 1;
  int projections = 0;  // 0 selects 150 * k
  double zeta = 0.05;
  std::uint64_t seed = 0;
  /// Use the candidate test ||E_i - 2 E_s|| >= zeta/2 as printed in the
  /// original algorithm listing instead of ||E_i - E_s|| >= zeta/2.
  bool literal_distance = false;
  std::size_t threads = 1;
  /// Use the per-row noise estimates of sampled moments (see
  /// detect_novel_pairs); when false every input is treated as exact.
  bool adapt_to_noise = true;
  /// Sampled moments only: the separation threshold grows by this many
  /// standard deviations of the noise between two rows, so noisy copies of
  /// one extreme point are not counted as distinct.
  double noise_scale = 2.0;
  /// Sampled moments only: rows noisier than this multiple of the median row
  /// noise are not candidates.
  double max_noise_ratio = 3.0;

  int resolved_projections() const { return projections > 0 ? projections : 150 * k; }

  void validate() const {
    require(k >= 1, "detection: K must be >= 1");
    require(resolved_projections() >= 1, "detection: P must be >= 1");
    require(zeta > 0.0, "detection: zeta must be positive");
    require(noise_scale >= 0.0, "detection: noise scale must be non-negative");
    require(max_noise_ratio > 0.0, "detection: noise ratio must be positive");
  }
};

struct NovelPairSet {
  std::vector<int> rows;               // selected row indices, in selection order
  Eigen::VectorXd solid_angles;        // q_hat per row; 0 for rows never scored
  int candidates = 0;                  // rows that entered detection
};

/// Candidate sets J_i as a dense membership mask over point indices. With a
/// per-point noise level n, the threshold for (i, s) is
/// zeta/2 + scale * sqrt(n_i^2 + n_s^2).
class CandidateMask {
 public:
  CandidateMask(const Eigen::MatrixXd& points, double zeta, bool literal, const Eigen::VectorXd& noise = {},
                double noise_scale = 0.0)
      : n_(points.rows()) {
    require(noise.size() == 0 || noise.size() == n_, "candidate mask: noise size mismatch");
    mask_.assign(static_cast<std::size_t>(n_ * n_), 0);
    const Eigen::VectorXd sq = points.rowwise().squaredNorm();
    const Eigen::MatrixXd gram = points * points.transpose();
    for (Eigen::Index i = 0; i < n_; ++i) {
      for (Eigen::Index s = 0; s < n_; ++s) {
        if (i == s) continue;
        // ||p_i - c p_s||^2 via the Gram matrix; c = 2 in the literal variant.
        const double c = literal ? 2.0 : 1.0;
        const double d2 = sq(i) + c * c * sq(s) - 2.0 * c * gram(i, s);
        const double d = std::sqrt(std::max(d2, 0.0));
        double threshold = zeta / 2.0;
        if (noise.size() > 0) threshold += noise_scale * std::hypot(noise(i), noise(s));
        mask_[static_cast<std::size_t>(i * n_ + s)] = d >= threshold ? 1 : 0;
      }
    }
  }

  bool contains(Eigen::Index i, Eigen::Index s) const {
    return mask_[static_cast<std::size_t>(i * n_ + s)] != 0;
  }
  Eigen::Index size() const noexcept { return n_; }

 private:
  Eigen::Index n_;
  std::vector<std::uint8_t> mask_;
};

/// Monte Carlo solid angles of a point set: q_hat_i is the fraction of
/// isotropic Gaussian directions along which point i projects strictly above
/// every point in its candidate set J_i. Direction r is drawn from the stream
/// (seed, r), so results are independent of the thread count.
inline Eigen::VectorXd solid_angles(const Eigen::MatrixXd& points, const CandidateMask& mask, int projections,
                                    std::uint64_t seed, std::size_t threads = 1) {
  const Eigen::Index n = points.rows();
  const Eigen::Index dim = points.cols();
  std::vector<Eigen::VectorXi> hits(static_cast<std::size_t>(projections));
  parallel_for(static_cast<std::size_t>(projections), threads, [&](std::size_t r) {
    Rng rng = derive_stream(seed, r, 0x50726f6au);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd d(dim);
    for (Eigen::Index c = 0; c < dim; ++c) d(c) = normal(rng);
    const Eigen::VectorXd proj = points * d;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return proj(a) > proj(b) || (proj(a) == proj(b) && a < b);
    });
    Eigen::VectorXi hit = Eigen::VectorXi::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      // The highest-projecting member of J_i decides; members outside J_i
      // (near neighbours) are ignored.
      bool wins = true;
      for (const Eigen::Index s : order) {
        if (s == i || !mask.contains(i, s)) continue;
        wins = proj(i) > proj(s);
        break;
      }
      hit(i) = wins ? 1 : 0;
    }
    hits[r] = std::move(hit);
  });
  Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
  for (const auto& h : hits) q += h.cast<double>();
  return q / static_cast<double>(projections);
}

/// Greedy selection: visit points by descending q_hat (ties to the lower
/// index) and keep a point if it lies in the candidate set of every point
/// already kept. Stops after k points.
inline std::vector<Eigen::Index> select_separated(const Eigen::VectorXd& q, const CandidateMask& mask, int k) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(q.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return q(a) > q(b); });
  std::vector<Eigen::Index> chosen;
  for (const Eigen::Index s : order) {
    if (static_cast<int>(chosen.size()) == k) break;
    const bool separated =
        std::all_of(chosen.begin(), chosen.end(), [&](Eigen::Index c) { return mask.contains(c, s); });
    if (separated) chosen.push_back(s);
  }
  if (static_cast<int>(chosen.size()) < k)
    throw Error("novel pair detection: found only " + std::to_string(chosen.size()) +
                " mutually separated rows, need K=" + std::to_string(k));
  return chosen;
}

/// Extreme-row detection on an arbitrary point set (rows of `points`).
/// Returns point indices and their solid-angle estimates.
inline NovelPairSet detect_extreme_rows(const Eigen::MatrixXd& points, const DetectionConfig& cfg) {
  cfg.validate();
  if (points.rows() < cfg.k)
    throw Error("novel pair detection: " + std::to_string(points.rows()) + " active rows, need at least K=" +
                std::to_string(cfg.k));
  const CandidateMask mask(points, cfg.zeta, cfg.literal_distance);
  NovelPairSet out;
  out.candidates = static_cast<int>(points.rows());
  out.solid_angles = solid_angles(points, mask, cfg.resolved_projections(), cfg.seed, cfg.threads);
  for (const auto i : select_separated(out.solid_angles, mask, cfg.k)) out.rows.push_back(static_cast<int>(i));
  return out;
}

/// Orthonormal basis (W x k) of the leading k-dimensional row space of the
/// rows of E listed in `rows`, by randomized subspace iteration with the start
/// block drawn from `seed`.
inline Eigen::MatrixXd leading_row_space(const CoocMatrix& e, const std::vector<int>& rows, int k,
                                         std::uint64_t seed, int iterations = 8) {
  const Eigen::Index w = e.size();
  const Eigen::Index width = std::min<Eigen::Index>(w, k + 10);
  require(k >= 1 && k <= w, "leading_row_space: rank out of range");
  Eigen::VectorXd keep = Eigen::VectorXd::Zero(w);
  for (const int r : rows) keep(r) = 1.0;
  Rng rng = derive_stream(seed, 0, 0x5375627370u);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd basis(w, width);
  for (Eigen::Index i = 0; i < basis.size(); ++i) basis.data()[i] = normal(rng);
  auto orthonormalize = [](const Eigen::MatrixXd& m) -> Eigen::MatrixXd {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    return qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
  };
  auto restricted = [&](const Eigen::MatrixXd& v) -> Eigen::MatrixXd { return keep.asDiagonal() * e.times(v); };
  basis = orthonormalize(basis);
  for (int it = 0; it < iterations; ++it) basis = orthonormalize(e.transpose_times(orthonormalize(restricted(basis))));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(restricted(basis), Eigen::ComputeThinV);
  return basis * svd.matrixV().leftCols(k);
}

/// Novel pair detection on the co-occurrence matrix. Only active rows are
/// candidates; returned indices are ordered-pair row indices of E_hat.
///
/// When E_hat carries per-row noise estimates it is a sample, and detection
/// adapts to the noise: rows noisier than max_noise_ratio times the median
/// are dropped, the rest are projected onto the leading K-dimensional row
/// space (the population matrix has rank K), separation thresholds include
/// the projected noise, and each selected row is replaced by the least noisy
/// row that is inseparable from it and has at least half its solid angle.
/// Without noise estimates the rows are used as they are.
inline NovelPairSet detect_novel_pairs(const CoocMatrix& e, const DetectionConfig& cfg) {
  cfg.validate();
  const auto& active = e.active();
  const bool sampled = cfg.adapt_to_noise && e.row_noise().size() > 0;
  std::vector<int> rows;
  if (sampled && !active.empty()) {
    std::vector<double> levels;
    for (const int r : active) levels.push_back(e.row_noise()(r));
    std::nth_element(levels.begin(), levels.begin() + static_cast<std::ptrdiff_t>(levels.size() / 2), levels.end());
    const double limit = cfg.max_noise_ratio * levels[levels.size() / 2];
    for (const int r : active)
      if (e.row_noise()(r) <= limit) rows.push_back(r);
  } else {
    rows = active;
  }
  const auto n = static_cast<Eigen::Index>(rows.size());

  Eigen::MatrixXd points;
  Eigen::VectorXd noise;
  if (sampled && n > cfg.k) {
    const Eigen::MatrixXd projected = e.times(leading_row_space(e, rows, cfg.k, cfg.seed));
    points.resize(n, cfg.k);
    noise.resize(n);
    // Isotropic noise keeps a k / n share of its energy.
    const double share = std::sqrt(static_cast<double>(cfg.k) / static_cast<double>(n));
    for (Eigen::Index a = 0; a < n; ++a) {
      points.row(a) = projected.row(rows[static_cast<std::size_t>(a)]);
      noise(a) = share * e.row_noise()(rows[static_cast<std::size_t>(a)]);
    }
  } else {
    points = e.gather_rows(rows);
    if (sampled) {
      noise.resize(n);
      for (Eigen::Index a = 0; a < n; ++a) noise(a) = e.row_noise()(rows[static_cast<std::size_t>(a)]);
    }
  }

  if (n < cfg.k)
    throw Error("novel pair detection: " + std::to_string(n) + " candidate rows, need at least K=" +
                std::to_string(cfg.k));
  const CandidateMask mask(points, cfg.zeta, cfg.literal_distance, noise, cfg.noise_scale);
  const Eigen::VectorXd q = solid_angles(points, mask, cfg.resolved_projections(), cfg.seed, cfg.threads);
  auto chosen = select_separated(q, mask, cfg.k);
  if (sampled) {
    std::vector<char> used(static_cast<std::size_t>(n), 0);
    for (auto& c : chosen) used[static_cast<std::size_t>(c)] = 1;
    for (auto& c : chosen) {
      Eigen::Index best = c;
      for (Eigen::Index s = 0; s < n; ++s) {
        if (used[static_cast<std::size_t>(s)] || mask.contains(c, s) || !(q(s) > 0.0) || q(s) < 0.5 * q(c)) continue;
        if (noise(s) < noise(best)) best = s;
      }
      used[static_cast<std::size_t>(best)] = 1;
      c = best;
    }
  }

  NovelPairSet out;
  out.candidates = static_cast<int>(n);
  out.solid_angles = Eigen::VectorXd::Zero(e.size());
  for (Eigen::Index a = 0; a < n; ++a) out.solid_angles(rows[static_cast<std::size_t>(a)]) = q(a);
  for (const auto c : chosen) out.rows.push_back(rows[static_cast<std::size_t>(c)]);
  return out;
}

struct RegressionOptions {
  double epsilon = 1e-4;
  int max_iterations = 10000;
  std::size_t threads = 1;
};

struct RegressionResult {
  RankingMatrix topic;           // B_hat, column-stochastic
  Eigen::MatrixXd mixing;        // simplex solution b* per row (W x K)
  int ridged_rows = 0;           // rows whose quadratic form needed a ridge
  double worst_objective = 0.0;  // largest final objective over rows
};

/// Constrained regression of every active row on the selected novel rows.
///
/// With Y, Y' the novel rows of X~ and X~', the objective
/// M (x - bY)(x' - bY')^T expands entirely into entries of E_hat = M X~' X~^T:
///   b^T H b - c^T b + E_rr,
///   H_kl = (E_{n_l n_k} + E_{n_k n_l}) / 2,  c_k = E_{r n_k} + E_{n_k r}.
/// Each solution is scaled by the row frequency and the result is
/// column-normalised into B_hat.
inline RegressionResult estimate_ranking_matrix(const CoocMatrix& e, const std::vector<int>& novel,
                                                const Eigen::VectorXd& row_frequency, int q,
                                                const RegressionOptions& opt = {}) {
  const int w = e.size();
  const auto k = static_cast<Eigen::Index>(novel.size());
  require(k >= 1, "regression: no novel rows");
  require(row_frequency.size() == w, "regression: row frequency size mismatch");
  require(opt.epsilon > 0.0, "regression: epsilon must be positive");

  Eigen::MatrixXd h(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b)
      h(a, b) = 0.5 * (e(novel[static_cast<std::size_t>(b)], novel[static_cast<std::size_t>(a)]) +
                       e(novel[static_cast<std::size_t>(a)], novel[static_cast<std::size_t>(b)]));

  const auto& active = e.active();
  std::vector<SimplexQpResult> solved(active.size());
  parallel_for(active.size(), opt.threads, [&](std::size_t n) {
    const int r = active[n];
    SimplexQp qp{h, Eigen::VectorXd(k), e(r, r)};
    for (Eigen::Index a = 0; a < k; ++a) {
      const int nv = novel[static_cast<std::size_t>(a)];
      qp.linear(a) = e(r, nv) + e(nv, r);
    }
    solved[n] = solve_simplex_qp(std::move(qp), {opt.epsilon, opt.max_iterations, false});
  });

  RegressionResult out;
  out.mixing = Eigen::MatrixXd::Zero(w, k);
  Eigen::MatrixXd scaled = Eigen::MatrixXd::Zero(w, k);
  double worst_unconverged = -1.0;
  for (std::size_t n = 0; n < active.size(); ++n) {
    const int r = active[n];
    const auto& s = solved[n];
    if (!s.converged) worst_unconverged = std::max(worst_unconverged, std::abs(s.objective));
    if (s.ridge > 0.0) ++out.ridged_rows;
    out.worst_objective = std::max(out.worst_objective, s.objective);
    out.mixing.row(r) = s.solution.transpose();
    scaled.row(r) = row_frequency(r) * s.solution.transpose();
  }
  if (worst_unconverged >= 0.0)
    throw Error("regression: solver did not converge within " + std::to_string(opt.max_iterations) +
                " iterations (worst objective " + std::to_string(worst_unconverged) + ")");

  for (Eigen::Index c = 0; c < k; ++c) {
    const double s = scaled.col(c).sum();
    if (s > 0.0) scaled.col(c) /= s;
  }
  out.topic = RankingMatrix{q, MatrixKind::B, std::move(scaled)};
  return out;
}

}  // namespace m4
