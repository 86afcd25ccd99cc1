#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "m4/error.hpp"
#include "m4/estimator.hpp"
#include "m4/generator.hpp"
#include "m4/moments.hpp"
#include "m4/post.hpp"

namespace m4 {

struct EstimateOptions {
  int components = 1;
  int projections = 0;  // 0 selects 150 * K
  double zeta = 0.05;
  double epsilon = 1e-4;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool literal_distance = false;
  int dense_limit = kDenseCoocLimit;
  bool adapt_to_noise = true;
};

struct EstimateResult {
  EstimatedModel model;
  NovelPairSet novel;
  int ridged_rows = 0;
  int active_rows = 0;
};

namespace detail {

template <typename Fn>
auto run_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace detail

/// Detection, regression and post-processing on a given second-moment
/// matrix and row frequencies.
inline EstimateResult estimate_from_moments(const CoocMatrix& e, const Eigen::VectorXd& row_frequency, int q,
                                            const EstimateOptions& opt) {
  EstimateResult out;
  out.active_rows = static_cast<int>(e.active().size());
  DetectionConfig cfg{opt.components, opt.projections, opt.zeta, opt.seed, opt.literal_distance, opt.threads};
  cfg.adapt_to_noise = opt.adapt_to_noise;
  out.novel = detail::run_stage("detect", [&] { return detect_novel_pairs(e, cfg); });
  auto reg = detail::run_stage("regress", [&] {
    return estimate_ranking_matrix(e, out.novel.rows, row_frequency, q, {opt.epsilon, 10000, opt.threads});
  });
  out.ridged_rows = reg.ridged_rows;
  out.model = detail::run_stage("post", [&] { return post_process(reg.topic); });
  return out;
}

/// Full estimation from a comparison corpus: split halves, co-occurrence,
/// then estimate_from_moments.
inline EstimateResult estimate_from_corpus(const ComparisonCorpus& corpus, const EstimateOptions& opt) {
  const auto counts = detail::run_stage("split", [&] { return split_halves(corpus); });
  const auto e = detail::run_stage("cooccurrence", [&] { return cooccurrence(counts, opt.dense_limit); });
  return estimate_from_moments(e, counts.row_frequency(), corpus.q, opt);
}

/// Analytic moments of a known model, for noiseless runs.
inline AnalyticMoments exact_moments(const M4Model& model) {
  const int k = model.k();
  return analytic_cooccurrence(model.topic_matrix(), mixing_mean(model.prior, k), mixing_correlation(model.prior, k));
}

}  // namespace m4
