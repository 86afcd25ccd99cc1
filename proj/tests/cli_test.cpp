#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "m4/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "m4_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(M4_CLI_PATH) + " -q " + args + " 2>" + (workdir() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

json load(const std::string& name) { return json::parse(m4::io::read_file(path(name))); }

}  // namespace

TEST(Cli, GenerateWritesAllRecordsAndTruth) {
  ASSERT_EQ(run("generate --items 20 --components 3 --users 1000 --comparisons 300 --phi 0.1 --alpha 0.1 --seed 7 -o " +
                path("c.jsonl") + " --truth " + path("t.json")),
            0);
  const auto corpus = m4::io::read_corpus_jsonl(fs::path(path("c.jsonl")));
  EXPECT_EQ(corpus.records.size(), 300000u);
  const auto truth = load("t.json");
  EXPECT_EQ(truth["K"], 3);
  EXPECT_EQ(truth["seed"], 7);
  EXPECT_EQ(truth["config"]["users"], 1000);
  EXPECT_EQ(truth["weights"].size(), 1000u);
  EXPECT_FALSE(fs::exists(path("c.jsonl") + ".tmp"));
}

TEST(Cli, GenerateIsByteIdenticalOnRerun) {
  const std::string flags = "generate --items 8 --components 2 --users 50 --comparisons 10 --phi 0.2 0.4 --seed 3 ";
  ASSERT_EQ(run(flags + "-o " + path("a.jsonl") + " --truth " + path("a.json")), 0);
  ASSERT_EQ(run(flags + "--threads 3 -o " + path("b.jsonl") + " --truth " + path("b.json")), 0);
  EXPECT_EQ(m4::io::read_file(path("a.jsonl")), m4::io::read_file(path("b.jsonl")));
  const auto a = load("a.json"), b = load("b.json");
  EXPECT_EQ(a["components"], b["components"]);
  EXPECT_EQ(a["weights"], b["weights"]);
  EXPECT_EQ(a["components"][1]["phi"], 0.4);
}

TEST(Cli, ZeroDispersionLabelledComparisonsAreTransitive) {
  ASSERT_EQ(run("generate --items 6 --components 2 --users 40 --comparisons 12 --phi 0 --labels --seed 1 -o " +
                path("z.jsonl") + " --truth " + path("z.json")),
            0);
  const auto corpus = m4::io::read_corpus_jsonl(fs::path(path("z.jsonl")));
  const auto truth = m4::io::read_model(path("z.json"));
  ASSERT_EQ(corpus.labels.size(), corpus.records.size());
  for (std::size_t n = 0; n < corpus.records.size(); ++n) {
    const auto& ref = truth.model.components[static_cast<std::size_t>(corpus.labels[n])].reference;
    EXPECT_TRUE(ref.prefers(corpus.records[n].winner, corpus.records[n].loser));
  }
}

TEST(Cli, VertexPriorIsRecorded) {
  ASSERT_EQ(run("generate --items 5 --components 2 --users 10 --comparisons 4 --vertex-prior --seed 2 -o " +
                path("v.jsonl") + " --truth " + path("v.json")),
            0);
  EXPECT_EQ(load("v.json")["prior"]["type"], "vertex");
}

TEST(Cli, ExactMomentsEstimateRecoversRankings) {
  ASSERT_EQ(run("generate --items 10 --components 3 --users 10 --comparisons 4 --phi 0.2 --seed 5 -o " +
                path("e.jsonl") + " --truth " + path("e.json")),
            0);
  ASSERT_EQ(run("estimate --exact-moments " + path("e.json") + " --components 3 --seed 1 -o " + path("e_est.json")), 0);
  const auto est = load("e_est.json");
  EXPECT_EQ(est["config"]["projections"], 450);
  EXPECT_EQ(est["config"]["zeta"], 0.05);
  EXPECT_EQ(est["diagnostics"]["novel_pairs"].size(), 3u);
  EXPECT_EQ(est["B_hat"].size(), 90u);
  ASSERT_EQ(run("evaluate --truth " + path("e.json") + " -i " + path("e_est.json") + " -o " + path("e_rep.json")), 0);
  const auto rep = load("e_rep.json");
  EXPECT_EQ(rep["normalized_kendall"], 0.0);
  for (const auto& err : rep["phi_errors"]) EXPECT_LT(err.get<double>(), 0.01);
  // Exact moments carry no noise estimate, so disabling adaptation changes nothing.
  ASSERT_EQ(run("estimate --exact-moments " + path("e.json") + " --components 3 --seed 1 --no-noise-adaptation -o " +
                path("e_raw.json")),
            0);
  const auto raw = load("e_raw.json");
  EXPECT_EQ(raw["config"]["adapt_to_noise"], false);
  EXPECT_EQ(est["config"]["adapt_to_noise"], true);
  EXPECT_EQ(raw["B_hat"], est["B_hat"]);
}

TEST(Cli, CorpusEstimateAtZeroDispersionIsExact) {
  ASSERT_EQ(run("generate --items 20 --components 3 --users 10000 --comparisons 300 --phi 0 --seed 11 -o " +
                path("p.jsonl") + " --truth " + path("p.json")),
            0);
  ASSERT_EQ(run("estimate -i " + path("p.jsonl") + " --components 3 --seed 2 -o " + path("p_est.json")), 0);
  ASSERT_EQ(run("evaluate --truth " + path("p.json") + " -i " + path("p_est.json") + " -o " + path("p_rep.json")), 0);
  EXPECT_EQ(load("p_rep.json")["normalized_kendall"], 0.0);
  const auto est = load("p_est.json");
  EXPECT_LE(est["diagnostics"]["detection_candidates"].get<int>(), est["diagnostics"]["active_rows"].get<int>());
  EXPECT_TRUE(est["diagnostics"]["degenerate_components"].empty());
  ASSERT_EQ(run("predict --model " + path("p_est.json") + " -i " + path("p.jsonl") + " -o " + path("p_pred.json")), 0);
  const auto pred = load("p_pred.json");
  EXPECT_EQ(pred["users"].size(), 10000u);
  EXPECT_TRUE(pred["average_loglik"].is_number());
}

TEST(Cli, TooManyComponentsFailsInDetection) {
  ASSERT_EQ(run("generate --items 4 --components 1 --users 200 --comparisons 6 --phi 0 --seed 1 -o " +
                path("k.jsonl") + " --truth " + path("k.json")),
            0);
  EXPECT_EQ(run("estimate -i " + path("k.jsonl") + " --components 12 -o " + path("k_est.json")), 2);
  EXPECT_NE(m4::io::read_file(path("stderr.txt")).find("detect"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("k_est.json")));
}

TEST(Cli, SeparabilityReport) {
  ASSERT_EQ(run("separability --items 30 --components 3 --phi 0.1 --lambda 0.05 --runs 50 --seed 4 -o " +
                path("s.json")),
            0);
  const auto rep = load("s.json");
  for (const char* key : {"prob", "se", "bound", "runs"}) EXPECT_TRUE(rep.contains(key)) << key;
  EXPECT_EQ(rep["runs"], 50);
  EXPECT_EQ(rep["config"]["seed"], 4);
}

TEST(Cli, OracleMatchesClosedForm) {
  ASSERT_EQ(run("oracle --items 4 --phi 0.3 --ranking 2,4,1,3 -o " + path("o.json")), 0);
  const auto rep = load("o.json");
  EXPECT_EQ(rep["rows"].size(), 12u);
  EXPECT_LT(rep["max_abs_difference"].get<double>(), 1e-12);
}

TEST(Cli, BadInputsExitNonzero) {
  EXPECT_NE(run("estimate -i " + path("does_not_exist.jsonl") + " --components 2 -o " + path("x.json")), 0);
  EXPECT_NE(run("generate --items 5 --components 2 --phi 1.5 -o " + path("y.jsonl") + " --truth " + path("y.json")), 0);
  EXPECT_NE(run("generate --items 5 --components 3 --phi 0.1 0.2 -o " + path("y.jsonl") + " --truth " + path("y.json")), 0);
  EXPECT_NE(run("bogus"), 0);
}
