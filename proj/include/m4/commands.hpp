#pragma once

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "m4/error.hpp"
#include "m4/eval.hpp"
#include "m4/generator.hpp"
#include "m4/io.hpp"
#include "m4/mallows.hpp"
#include "m4/pipeline.hpp"
#include "m4/separability.hpp"

// Batch commands behind the m4 CLI. Each takes a resolved option bundle and
// returns the JSON document it writes, with the configuration embedded.
namespace m4::cmd {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline std::vector<double> expand_dispersions(const std::vector<double>& phis, int k) {
  if (phis.empty()) return std::vector<double>(static_cast<std::size_t>(k), 0.0);
  if (phis.size() == 1) return std::vector<double>(static_cast<std::size_t>(k), phis.front());
  require(static_cast<int>(phis.size()) == k, "--phi: give one value or one per component");
  return phis;
}

// -------------------------------------------------------------- generate ---

struct GenerateConfig {
  int items = 20;
  int components = 3;
  int users = 1000;
  int comparisons = 300;
  std::vector<double> phi;  // one shared value or one per component
  double alpha = 0.1;
  std::optional<std::vector<double>> vertex_prior;  // class probabilities; empty means uniform
  std::uint64_t seed = 0;
  bool labels = false;
  std::size_t threads = 1;
  fs::path corpus_out;
  fs::path truth_out;

  json to_json() const {
    json j = {{"items", items}, {"components", components}, {"users", users}, {"comparisons", comparisons},
              {"phi", expand_dispersions(phi, components)}, {"alpha", alpha}, {"seed", seed}, {"labels", labels},
              {"threads", threads}};
    if (vertex_prior) j["vertex_prior"] = *vertex_prior;
    return j;
  }
};

/// Builds the ground-truth model: K references drawn uniformly at random from
/// stream (seed, 0), dispersions and prior from the config.
inline M4Model random_model(const GenerateConfig& cfg) {
  require(cfg.items >= 2, "--items must be >= 2");
  require(cfg.components >= 1, "--components must be >= 1");
  const auto phis = expand_dispersions(cfg.phi, cfg.components);
  Rng rng = derive_stream(cfg.seed, 0, 0x52656673u);
  M4Model model;
  std::vector<int> order(static_cast<std::size_t>(cfg.items));
  for (int k = 0; k < cfg.components; ++k) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    model.components.emplace_back(Permutation::from_order(order), phis[static_cast<std::size_t>(k)]);
  }
  if (cfg.vertex_prior) {
    auto probs = *cfg.vertex_prior;
    if (probs.empty()) probs.assign(static_cast<std::size_t>(cfg.components), 1.0 / cfg.components);
    model.prior = VertexPrior{probs};
  } else {
    model.prior = DirichletPrior{cfg.alpha};
  }
  model.validate();
  return model;
}

struct GenerateOutput {
  GeneratedData data;
  io::ModelFile truth;
};

inline GenerateOutput generate(const GenerateConfig& cfg) {
  GenerateOutput out;
  out.truth.model = random_model(cfg);
  out.data = m4::generate(out.truth.model, {cfg.users, cfg.comparisons, cfg.seed, cfg.labels, cfg.threads});
  out.truth.seed = cfg.seed;
  out.truth.weights = out.data.weights;
  out.truth.config = cfg.to_json();
  if (!cfg.corpus_out.empty()) io::write_atomic(cfg.corpus_out, io::corpus_to_jsonl(out.data.corpus, cfg.comparisons));
  if (!cfg.truth_out.empty()) io::write_atomic(cfg.truth_out, io::model_to_json(out.truth).dump(2) + "\n");
  return out;
}

// -------------------------------------------------------------- estimate ---

struct EstimateConfig {
  fs::path corpus;
  fs::path exact_moments;  // truth file; replaces the corpus with analytic moments
  int components = 1;
  int projections = 0;
  double zeta = 0.05;
  double epsilon = 1e-4;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool literal_distance = false;
  bool adapt_to_noise = true;
  fs::path dump_cooc;
  fs::path out;

  EstimateOptions options() const {
    return {components, projections, zeta, epsilon, seed, threads, literal_distance, kDenseCoocLimit, adapt_to_noise};
  }

  json to_json() const {
    json j = {{"components", components}, {"projections", projections > 0 ? projections : 150 * components},
              {"zeta", zeta}, {"epsilon", epsilon}, {"seed", seed}, {"threads", threads},
              {"literal_distance", literal_distance}, {"adapt_to_noise", adapt_to_noise}};
    if (!corpus.empty()) j["corpus"] = corpus.string();
    if (!exact_moments.empty()) j["exact_moments"] = exact_moments.string();
    return j;
  }
};

inline io::ModelFile estimate(const EstimateConfig& cfg) {
  require(cfg.components >= 1, "--components must be >= 1");
  EstimateResult res;
  int q = 0;
  if (!cfg.exact_moments.empty()) {
    const auto truth = detail::run_stage("load", [&] { return io::read_model(cfg.exact_moments); });
    q = truth.model.items();
    const auto moments = exact_moments(truth.model);
    if (!cfg.dump_cooc.empty()) io::dump_cooccurrence(moments.cooc, cfg.dump_cooc);
    res = estimate_from_moments(moments.cooc, moments.row_frequency, q, cfg.options());
  } else {
    const auto corpus = detail::run_stage("load", [&] { return io::read_corpus_jsonl(cfg.corpus); });
    q = corpus.q;
    if (!cfg.dump_cooc.empty()) {
      const auto counts = detail::run_stage("split", [&] { return split_halves(corpus); });
      const auto e = detail::run_stage("cooccurrence", [&] { return cooccurrence(counts); });
      io::dump_cooccurrence(e, cfg.dump_cooc);
      res = estimate_from_moments(e, counts.row_frequency(), q, cfg.options());
    } else {
      res = estimate_from_corpus(corpus, cfg.options());
    }
  }

  io::ModelFile f;
  f.model.components = res.model.components();
  f.model.prior = DirichletPrior{};
  f.seed = cfg.seed;
  f.topic = res.model.topic.values;
  const PairIndex idx(q);
  json selected = json::array();
  for (const int r : res.novel.rows) {
    const auto [i, j] = idx.pair(r);
    selected.push_back({{"pair", {i + 1, j + 1}}, {"solid_angle", res.novel.solid_angles(r)}});
  }
  f.diagnostics = {{"unresolved_pairs", res.model.diagnostics.unresolved_pairs},
                   {"rounding_ties", res.model.diagnostics.rounding_ties},
                   {"clamp_events", res.model.diagnostics.clamped_components.size()},
                   {"clamped_components", res.model.diagnostics.clamped_components},
                   {"novel_pairs", selected},
                   {"active_rows", res.active_rows},
                   {"detection_candidates", res.novel.candidates},
                   {"degenerate_components", res.model.diagnostics.degenerate_components},
                   {"ridged_rows", res.ridged_rows}};
  for (auto& c : f.diagnostics["clamped_components"]) c = c.get<int>() + 1;
  for (auto& c : f.diagnostics["degenerate_components"]) c = c.get<int>() + 1;
  f.config = cfg.to_json();
  if (!cfg.out.empty()) io::write_atomic(cfg.out, io::model_to_json(f).dump(2) + "\n");
  return f;
}

// -------------------------------------------------------------- evaluate ---

inline json evaluate_report(const io::ModelFile& truth, const io::ModelFile& estimate) {
  const auto r = align_and_score(truth.model.components, estimate.model.components);
  json matching = json::array();
  for (const int m : r.matching) matching.push_back(m + 1);
  return {{"normalized_kendall", r.normalized_error},
          {"per_component", r.per_component},
          {"phi_errors", r.dispersion_errors},
          {"matching", matching}};
}

inline json evaluate(const fs::path& truth, const fs::path& estimate, const fs::path& out = {}) {
  json report = evaluate_report(io::read_model(truth), io::read_model(estimate));
  report["config"] = {{"truth", truth.string()}, {"estimate", estimate.string()}};
  if (!out.empty()) io::write_atomic(out, report.dump(2) + "\n");
  return report;
}

// ---------------------------------------------------------- separability ---

inline json separability(const SeparabilityOptions& opt, const fs::path& out = {}) {
  const auto est = separability_probability(opt);
  json report = {{"prob", est.probability}, {"se", est.standard_error}, {"bound", est.bound}, {"runs", est.runs},
                 {"Q", opt.items}, {"K", opt.components}, {"phi", opt.phi}, {"lambda", opt.lambda},
                 {"seed", opt.seed}, {"bound_epsilon", opt.bound_epsilon}};
  report["config"] = {{"items", opt.items}, {"components", opt.components}, {"phi", opt.phi}, {"lambda", opt.lambda},
                      {"runs", opt.runs}, {"seed", opt.seed}, {"threads", opt.threads}};
  if (!out.empty()) io::write_atomic(out, report.dump(2) + "\n");
  return report;
}

// ---------------------------------------------------------------- oracle ---

struct OracleConfig {
  int items = 3;
  std::vector<double> phi{0.5};
  std::vector<std::vector<int>> rankings;  // 1-based; identity when empty
  int max_items = 7;
};

/// Exact ranking matrix by enumeration next to the closed form.
inline json oracle(const OracleConfig& cfg, const fs::path& out = {}) {
  std::vector<MallowsComponent> comps;
  const int k = std::max<int>(static_cast<int>(cfg.rankings.size()), static_cast<int>(cfg.phi.size()));
  const auto phis = expand_dispersions(cfg.phi, k);
  for (int c = 0; c < k; ++c) {
    auto ref = Permutation::identity(cfg.items);
    if (!cfg.rankings.empty()) {
      auto order = cfg.rankings[static_cast<std::size_t>(c) % cfg.rankings.size()];
      for (auto& i : order) i -= 1;
      ref = Permutation::from_order(std::move(order));
    }
    comps.emplace_back(std::move(ref), phis[static_cast<std::size_t>(c)]);
  }
  const auto exact = brute_force_beta(comps, cfg.max_items);
  const auto closed = build_ranking_matrix(comps);
  const PairIndex idx(exact.q);
  json rows = json::array();
  for (int w = 0; w < idx.size(); ++w) {
    const auto [i, j] = idx.pair(w);
    std::vector<double> e(static_cast<std::size_t>(k)), c(static_cast<std::size_t>(k));
    for (int col = 0; col < k; ++col) {
      e[static_cast<std::size_t>(col)] = exact(w, col);
      c[static_cast<std::size_t>(col)] = closed(w, col);
    }
    rows.push_back({{"pair", {i + 1, j + 1}}, {"beta", e}, {"closed_form", c}});
  }
  const double diff = (exact.values - closed.values).cwiseAbs().maxCoeff();
  json report = {{"Q", exact.q}, {"K", k}, {"phi", phis}, {"rows", rows}, {"max_abs_difference", diff}};
  report["config"] = {{"items", cfg.items}, {"phi", phis}, {"rankings", cfg.rankings}};
  if (!out.empty()) io::write_atomic(out, report.dump(2) + "\n");
  return report;
}

// --------------------------------------------------------------- predict ---

struct PredictConfig {
  fs::path model;
  fs::path corpus;
  int max_iterations = 500;
  double tolerance = 1e-8;
  fs::path out;
};

/// Per-user weights by EM on each user's first half, held-out log-likelihood
/// on the second half, using the model's B_hat (or its analytic B).
inline json predict(const PredictConfig& cfg) {
  const auto mf = io::read_model(cfg.model);
  const auto corpus = io::read_corpus_jsonl(cfg.corpus);
  require(corpus.q == mf.model.items(), "predict: corpus and model disagree on Q");
  RankingMatrix topic = mf.topic ? RankingMatrix{corpus.q, MatrixKind::B, *mf.topic} : mf.model.topic_matrix();
  const PairIndex idx(corpus.q);
  const auto groups = corpus.by_user();
  json users = json::array();
  double total = 0.0;
  int counted = 0, zero = 0;
  for (std::size_t u = 0; u < groups.size(); ++u) {
    const auto& g = groups[u];
    const std::size_t half = (g.size() + 1) / 2;
    std::vector<int> fit, test;
    for (std::size_t t = 0; t < g.size(); ++t) {
      const auto& r = corpus.records[g[t]];
      (t < half ? fit : test).push_back(idx.index(r.winner, r.loser));
    }
    const auto w = infer_weights(fit, topic, cfg.max_iterations, cfg.tolerance);
    const auto ll = predict_loglik(test, w.theta, topic);
    zero += ll.zero_probability;
    if (ll.zero_probability == 0 && ll.comparisons > 0) {
      total += ll.mean * ll.comparisons;
      counted += ll.comparisons;
    }
    std::vector<double> theta(w.theta.data(), w.theta.data() + w.theta.size());
    users.push_back({{"user", u + 1}, {"theta", theta}, {"loglik", ll.zero_probability ? json(nullptr) : json(ll.mean)}});
  }
  json report = {{"users", users},
                 {"average_loglik", counted > 0 ? json(total / counted) : json(nullptr)},
                 {"zero_probability_events", zero}};
  report["config"] = {{"model", cfg.model.string()}, {"corpus", cfg.corpus.string()},
                      {"max_iterations", cfg.max_iterations}, {"tolerance", cfg.tolerance}};
  if (!cfg.out.empty()) io::write_atomic(cfg.out, report.dump(2) + "\n");
  return report;
}

}  // namespace m4::cmd
