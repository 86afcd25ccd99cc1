#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "m4/commands.hpp"

namespace {

std::vector<int> parse_ranking(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

void print(const nlohmann::json& j, bool quiet) {
  if (!quiet) std::cout << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"m4: mixed membership Mallows models from pairwise comparisons"};
  app.require_subcommand(1);
  std::size_t threads = 1;
  std::uint64_t seed = 0;
  bool quiet = false;
  app.add_option("--threads", threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Random seed");
  app.add_flag("-q,--quiet", quiet, "Do not echo reports to stdout");

  // generate
  m4::cmd::GenerateConfig gen;
  std::vector<double> vertex;
  auto* g = app.add_subcommand("generate", "Sample a synthetic corpus and its ground truth");
  g->add_option("--items", gen.items, "Number of items Q");
  g->add_option("--components", gen.components, "Number of components K");
  g->add_option("--users", gen.users, "Number of users M");
  g->add_option("--comparisons", gen.comparisons, "Comparisons per user N");
  g->add_option("--phi", gen.phi, "Dispersion, shared or one per component")->take_all();
  g->add_option("--alpha", gen.alpha, "Symmetric Dirichlet concentration");
  auto* vflag = g->add_option("--vertex-prior", vertex, "Each user draws one component (optional class probabilities)")
                    ->expected(0, -1);
  g->add_flag("--labels", gen.labels, "Keep component labels in the corpus");
  g->add_option("-o,--output", gen.corpus_out, "Corpus JSONL path")->required();
  g->add_option("--truth", gen.truth_out, "Ground-truth model JSON path")->required();
  g->add_option("--seed", seed, "Random seed");
  g->add_option("--threads", threads, "Worker threads");

  // estimate
  m4::cmd::EstimateConfig est;
  auto* e = app.add_subcommand("estimate", "Estimate components from a corpus");
  auto* ein = e->add_option("-i,--input", est.corpus, "Corpus JSONL path");
  auto* eex = e->add_option("--exact-moments", est.exact_moments, "Truth file; use its analytic moments instead");
  ein->excludes(eex);
  e->add_option("--components", est.components, "Number of components K")->required();
  e->add_option("--projections", est.projections, "Random projections P (default 150 K)");
  e->add_option("--zeta", est.zeta, "Candidate distance threshold");
  e->add_option("--epsilon", est.epsilon, "Regression tolerance");
  e->add_flag("--literal-distance", est.literal_distance, "Use the ||E_i - 2 E_s|| candidate rule");
  e->add_flag("!--no-noise-adaptation", est.adapt_to_noise,
              "Detect on raw co-occurrence rows without sampling-noise adjustments");
  e->add_option("--dump-cooccurrence", est.dump_cooc, "Write the co-occurrence matrix here");
  e->add_option("-o,--output", est.out, "Estimated model JSON path")->required();
  e->add_option("--seed", seed, "Random seed");
  e->add_option("--threads", threads, "Worker threads");

  // evaluate
  std::string truth_path, estimate_path, eval_out;
  auto* v = app.add_subcommand("evaluate", "Score an estimate against the truth");
  v->add_option("--truth", truth_path, "Ground-truth model JSON")->required();
  v->add_option("-i,--input", estimate_path, "Estimated model JSON")->required();
  v->add_option("-o,--output", eval_out, "Report path");

  // separability
  m4::SeparabilityOptions sep;
  std::string sep_out;
  auto* s = app.add_subcommand("separability", "Monte Carlo separability probability");
  s->add_option("--items", sep.items, "Number of items Q");
  s->add_option("--components", sep.components, "Number of components K");
  s->add_option("--phi", sep.phi, "Common dispersion");
  s->add_option("--lambda", sep.lambda, "Separability tolerance");
  s->add_option("--runs", sep.runs, "Monte Carlo runs");
  s->add_option("--epsilon", sep.bound_epsilon, "Slack in the lower bound's span");
  s->add_option("-o,--output", sep_out, "Report path");
  s->add_option("--seed", seed, "Random seed");
  s->add_option("--threads", threads, "Worker threads");

  // oracle
  m4::cmd::OracleConfig orc;
  std::vector<std::string> rankings;
  std::string orc_out;
  auto* o = app.add_subcommand("oracle", "Exact ranking matrix by enumeration");
  o->add_option("--items", orc.items, "Number of items Q (at most 7)");
  o->add_option("--phi", orc.phi, "Dispersion, shared or one per component")->take_all();
  o->add_option("--ranking", rankings, "Reference as comma-separated 1-based ids, repeatable");
  o->add_option("-o,--output", orc_out, "Report path");

  // predict
  m4::cmd::PredictConfig pred;
  auto* p = app.add_subcommand("predict", "Per-user weights and held-out log-likelihood");
  p->add_option("--model", pred.model, "Model JSON (truth or estimate)")->required();
  p->add_option("-i,--input", pred.corpus, "Corpus JSONL")->required();
  p->add_option("-o,--output", pred.out, "Report path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*g) {
      gen.seed = seed;
      gen.threads = threads;
      if (vflag->count() > 0) {
        // A bare flag arrives as a single empty result: uniform classes.
        const auto& given = vflag->results();
        const bool bare = std::all_of(given.begin(), given.end(), [](const std::string& v) { return v.empty(); });
        gen.vertex_prior = bare ? std::vector<double>{} : vertex;
      }
      const auto out = m4::cmd::generate(gen);
      print({{"records", out.data.corpus.records.size()}, {"corpus", gen.corpus_out.string()},
             {"truth", gen.truth_out.string()}, {"config", gen.to_json()}},
            quiet);
    } else if (*e) {
      m4::require(!est.corpus.empty() || !est.exact_moments.empty(), "estimate: give -i or --exact-moments");
      est.seed = seed;
      est.threads = threads;
      const auto f = m4::cmd::estimate(est);
      print({{"output", est.out.string()}, {"diagnostics", f.diagnostics}}, quiet);
    } else if (*v) {
      print(m4::cmd::evaluate(truth_path, estimate_path, eval_out), quiet);
    } else if (*s) {
      sep.seed = seed;
      sep.threads = threads;
      print(m4::cmd::separability(sep, sep_out), quiet);
    } else if (*o) {
      for (const auto& r : rankings) orc.rankings.push_back(parse_ranking(r));
      print(m4::cmd::oracle(orc, orc_out), quiet);
    } else if (*p) {
      print(m4::cmd::predict(pred), quiet);
    }
  } catch (const m4::StageError& ex) {
    std::cerr << "m4: stage '" << ex.stage() << "' failed: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "m4: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
