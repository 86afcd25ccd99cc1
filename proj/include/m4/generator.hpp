#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "m4/error.hpp"
#include "m4/mallows.hpp"
#include "m4/parallel.hpp"
#include "m4/permutation.hpp"
#include "m4/rng.hpp"

namespace m4 {

/// Symmetric Dirichlet prior; every component gets concentration `alpha`.
struct DirichletPrior {
  double alpha = 0.1;
};

/// All mass on the simplex vertices: each user follows one component drawn
/// with the given class probabilities (a mixture of Mallows).
struct VertexPrior {
  std::vector<double> class_probs;
};

/// Fixed weight vectors, assigned to users cyclically (user m gets
/// weights[m % size]).
struct ExplicitPrior {
  std::vector<std::vector<double>> weights;
};

using WeightPrior = std::variant<DirichletPrior, VertexPrior, ExplicitPrior>;

/// Distribution over unordered item pairs {i, j}, indexed i < j in
/// lexicographic order. Empty weights mean uniform.
struct PairDistribution {
  std::vector<double> weights;

  static int unordered_index(int q, int i, int j) {
    if (i > j) std::swap(i, j);
    // Rows 0..i-1 contribute (q-1) + (q-2) + ... + (q-i) pairs.
    return i * (2 * q - i - 1) / 2 + (j - i - 1);
  }

  /// Probability of comparing {i, j}.
  double probability(int q, int i, int j) const {
    if (weights.empty()) return 2.0 / (static_cast<double>(q) * (q - 1));
    double total = 0.0;
    for (double w : weights) total += w;
    return weights[static_cast<std::size_t>(unordered_index(q, i, j))] / total;
  }
};

inline void check_simplex_point(const std::vector<double>& p, std::size_t k, const std::string& what) {
  require(p.size() == k, what + ": expected " + std::to_string(k) + " entries");
  double s = 0.0;
  for (double x : p) {
    require(x >= 0.0, what + ": entries must be nonnegative");
    s += x;
  }
  require(std::abs(s - 1.0) < 1e-9, what + ": entries must sum to 1");
}

/// Mixed Membership Mallows Model: K shared components, a prior over user
/// mixing weights and a pair-selection distribution.
struct M4Model {
  std::vector<MallowsComponent> components;
  WeightPrior prior = DirichletPrior{};
  PairDistribution pairs;

  int items() const { return common_items(components); }
  int k() const noexcept { return static_cast<int>(components.size()); }

  void validate() const {
    const int q = items();
    const auto kk = components.size();
    if (const auto* d = std::get_if<DirichletPrior>(&prior)) {
      require(d->alpha > 0.0, "Dirichlet concentration must be positive");
    } else if (const auto* v = std::get_if<VertexPrior>(&prior)) {
      check_simplex_point(v->class_probs, kk, "vertex prior");
    } else {
      const auto& e = std::get<ExplicitPrior>(prior);
      require(!e.weights.empty(), "explicit prior: no weight vectors");
      for (const auto& w : e.weights) check_simplex_point(w, kk, "explicit prior");
    }
    if (!pairs.weights.empty()) {
      require(static_cast<int>(pairs.weights.size()) == q * (q - 1) / 2,
              "pair distribution: expected Q(Q-1)/2 weights");
      for (double w : pairs.weights) require(w > 0.0, "pair distribution: weights must be positive");
    }
  }

  /// Ranking matrix beta (W x K).
  RankingMatrix beta() const { return build_ranking_matrix(components); }

  /// B_{(i,j),k} = mu_{ij} beta_{(i,j),k}; column-stochastic.
  RankingMatrix topic_matrix() const {
    auto b = beta();
    const PairIndex idx(b.q);
    for (int w = 0; w < idx.size(); ++w) {
      const auto [i, j] = idx.pair(w);
      b.values.row(w) *= pairs.probability(b.q, i, j);
    }
    b.kind = MatrixKind::B;
    return b;
  }
};

/// Mean a = E[theta] of the mixing weights under the prior.
inline Eigen::VectorXd mixing_mean(const WeightPrior& prior, int k) {
  Eigen::VectorXd a = Eigen::VectorXd::Zero(k);
  if (std::holds_alternative<DirichletPrior>(prior)) {
    a.setConstant(1.0 / k);
  } else if (const auto* v = std::get_if<VertexPrior>(&prior)) {
    for (int i = 0; i < k; ++i) a(i) = v->class_probs[static_cast<std::size_t>(i)];
  } else {
    const auto& e = std::get<ExplicitPrior>(prior);
    for (const auto& w : e.weights) a += Eigen::Map<const Eigen::VectorXd>(w.data(), k);
    a /= static_cast<double>(e.weights.size());
  }
  return a;
}

/// Correlation R = E[theta theta^T] of the mixing weights under the prior.
inline Eigen::MatrixXd mixing_correlation(const WeightPrior& prior, int k) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(k, k);
  if (const auto* d = std::get_if<DirichletPrior>(&prior)) {
    const double a0 = d->alpha;
    const double total = a0 * k;
    const double norm = total * (total + 1.0);
    r.setConstant(a0 * a0 / norm);
    r.diagonal().setConstant(a0 * (a0 + 1.0) / norm);
  } else if (const auto* v = std::get_if<VertexPrior>(&prior)) {
    for (int i = 0; i < k; ++i) r(i, i) = v->class_probs[static_cast<std::size_t>(i)];
  } else {
    const auto& e = std::get<ExplicitPrior>(prior);
    for (const auto& w : e.weights) {
      const Eigen::Map<const Eigen::VectorXd> t(w.data(), k);
      r += t * t.transpose();
    }
    r /= static_cast<double>(e.weights.size());
  }
  return r;
}

/// One observed comparison: `user` preferred `winner` over `loser`.
struct Comparison {
  int user = 0;
  int winner = 0;
  int loser = 0;

  friend bool operator==(const Comparison&, const Comparison&) = default;
};

/// Per-user multisets of pairwise outcomes. Record order within a user is
/// meaningful: the moment estimator splits each user's list by index.
struct ComparisonCorpus {
  int q = 0;
  int m = 0;
  std::vector<Comparison> records;
  /// Generating component per record (0-based); empty unless retained.
  std::vector<int> labels;

  void validate() const {
    require(q >= 2, "corpus: need at least two items");
    require(m >= 1, "corpus: need at least one user");
    require(labels.empty() || labels.size() == records.size(), "corpus: label count mismatch");
    std::vector<char> seen(static_cast<std::size_t>(m), 0);
    for (const auto& r : records) {
      require(r.winner != r.loser, "corpus: winner equals loser");
      require(r.winner >= 0 && r.winner < q && r.loser >= 0 && r.loser < q, "corpus: item id out of range");
      require(r.user >= 0 && r.user < m, "corpus: user id out of range");
      seen[static_cast<std::size_t>(r.user)] = 1;
    }
    for (int u = 0; u < m; ++u)
      if (!seen[static_cast<std::size_t>(u)]) throw Error("corpus: user " + std::to_string(u + 1) + " has no comparisons");
  }

  /// Record indices grouped per user, preserving record order.
  std::vector<std::vector<std::size_t>> by_user() const {
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(m));
    for (std::size_t n = 0; n < records.size(); ++n) out[static_cast<std::size_t>(records[n].user)].push_back(n);
    return out;
  }
};

struct GeneratedData {
  ComparisonCorpus corpus;
  std::vector<std::vector<double>> weights;  // ground-truth theta per user
};

namespace detail {

inline std::vector<double> draw_weights(const WeightPrior& prior, int k, int user, Rng& rng) {
  std::vector<double> theta(static_cast<std::size_t>(k), 0.0);
  if (const auto* d = std::get_if<DirichletPrior>(&prior)) {
    std::gamma_distribution<double> gamma(d->alpha, 1.0);
    double total = 0.0;
    while (total <= 0.0) {
      total = 0.0;
      for (auto& t : theta) total += (t = gamma(rng));
    }
    for (auto& t : theta) t /= total;
  } else if (const auto* v = std::get_if<VertexPrior>(&prior)) {
    std::discrete_distribution<int> pick(v->class_probs.begin(), v->class_probs.end());
    theta[static_cast<std::size_t>(pick(rng))] = 1.0;
  } else {
    const auto& e = std::get<ExplicitPrior>(prior);
    theta = e.weights[static_cast<std::size_t>(user) % e.weights.size()];
  }
  return theta;
}

}  // namespace detail

struct GenerateOptions {
  int users = 1;
  int comparisons = 2;  // N per user
  std::uint64_t seed = 0;
  bool retain_labels = false;
  std::size_t threads = 1;
};

/// Samples a corpus from the M4 generative process. Each user draws from its
/// own stream derived from (seed, user), so output is identical for any
/// thread count.
inline GeneratedData generate(const M4Model& model, const GenerateOptions& opt) {
  model.validate();
  require(opt.users >= 1, "generate: need at least one user");
  require(opt.comparisons >= 2, "generate: need at least two comparisons per user");
  const int q = model.items();
  const int k = model.k();
  const auto n = static_cast<std::size_t>(opt.comparisons);

  std::vector<double> pair_weights(static_cast<std::size_t>(q * (q - 1) / 2), 1.0);
  if (!model.pairs.weights.empty()) pair_weights = model.pairs.weights;
  std::vector<std::pair<int, int>> unordered;
  unordered.reserve(pair_weights.size());
  for (int i = 0; i < q; ++i)
    for (int j = i + 1; j < q; ++j) unordered.emplace_back(i, j);

  GeneratedData out;
  out.corpus.q = q;
  out.corpus.m = opt.users;
  out.corpus.records.resize(static_cast<std::size_t>(opt.users) * n);
  if (opt.retain_labels) out.corpus.labels.resize(out.corpus.records.size());
  out.weights.resize(static_cast<std::size_t>(opt.users));

  parallel_for(static_cast<std::size_t>(opt.users), opt.threads, [&](std::size_t m) {
    Rng rng = derive_stream(opt.seed, m, 0x6d34u);
    auto theta = detail::draw_weights(model.prior, k, static_cast<int>(m), rng);
    std::discrete_distribution<int> pick_pair(pair_weights.begin(), pair_weights.end());
    std::discrete_distribution<int> pick_component(theta.begin(), theta.end());
    for (std::size_t t = 0; t < n; ++t) {
      const auto [i, j] = unordered[static_cast<std::size_t>(pick_pair(rng))];
      const int z = pick_component(rng);
      const auto sigma = rim_sample(model.components[static_cast<std::size_t>(z)], rng);
      auto& rec = out.corpus.records[m * n + t];
      rec.user = static_cast<int>(m);
      rec.winner = sigma.prefers(i, j) ? i : j;
      rec.loser = sigma.prefers(i, j) ? j : i;
      if (opt.retain_labels) out.corpus.labels[m * n + t] = z;
    }
    out.weights[m] = std::move(theta);
  });
  return out;
}

/// Per-component empirical win frequencies from a labelled corpus. Pairs a
/// component never produced get 0.5 in both directions.
inline RankingMatrix empirical_beta(const ComparisonCorpus& corpus, int k) {
  if (corpus.labels.empty()) throw Error("empirical_beta: corpus carries no component labels");
  require(corpus.labels.size() == corpus.records.size(), "empirical_beta: label count mismatch");
  const PairIndex idx(corpus.q);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(idx.size(), k);
  for (std::size_t n = 0; n < corpus.records.size(); ++n) {
    const int z = corpus.labels[n];
    require(z >= 0 && z < k, "empirical_beta: label out of range");
    counts(idx.index(corpus.records[n].winner, corpus.records[n].loser), z) += 1.0;
  }
  RankingMatrix out{corpus.q, MatrixKind::beta, Eigen::MatrixXd(idx.size(), k)};
  for (int w = 0; w < idx.size(); ++w) {
    const int rw = idx.reverse(w);
    for (int z = 0; z < k; ++z) {
      const double total = counts(w, z) + counts(rw, z);
      out.values(w, z) = total > 0.0 ? counts(w, z) / total : 0.5;
    }
  }
  return out;
}

}  // namespace m4
