#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "m4/estimator.hpp"
#include "m4/generator.hpp"
#include "m4/pipeline.hpp"

using m4::MallowsComponent;
using m4::Permutation;

namespace {

Eigen::MatrixXd toy_points() {
  Eigen::MatrixXd p(3, 2);
  p << 1.0, 0.0, 0.0, 1.0, 0.5, 0.5;
  return p;
}

// Monte Carlo oracle written from the definition: draw the directions here,
// independent of the library's stream layout.
Eigen::VectorXd solid_angle_oracle(const Eigen::MatrixXd& pts, int draws, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(pts.rows());
  for (int r = 0; r < draws; ++r) {
    Eigen::VectorXd d(pts.cols());
    for (Eigen::Index c = 0; c < d.size(); ++c) d(c) = n(rng);
    const Eigen::VectorXd proj = pts * d;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      bool best = true;
      for (Eigen::Index s = 0; s < pts.rows(); ++s)
        if (s != i && proj(s) >= proj(i)) best = false;
      q(i) += best ? 1.0 : 0.0;
    }
  }
  return q / draws;
}

std::vector<MallowsComponent> random_components(int q, int k, double phi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<MallowsComponent> out;
  for (int c = 0; c < k; ++c) {
    std::vector<int> order(static_cast<std::size_t>(q));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    out.emplace_back(Permutation::from_order(order), phi);
  }
  return out;
}

}  // namespace

TEST(Detection, ConfigValidation) {
  EXPECT_EQ((m4::DetectionConfig{3}).resolved_projections(), 450);
  EXPECT_THROW((m4::DetectionConfig{0}).validate(), m4::Error);
  EXPECT_THROW((m4::DetectionConfig{2, 10, 0.0}).validate(), m4::Error);
}

TEST(Detection, ToySolidAnglesAndSelection) {
  const auto pts = toy_points();
  const auto oracle = solid_angle_oracle(pts, 1000000, 99);
  EXPECT_NEAR(oracle(0), 0.5, 0.002);
  EXPECT_NEAR(oracle(2), 0.0, 1e-12);
  const auto found = m4::detect_extreme_rows(pts, {2, 10000, 0.01, 4});
  EXPECT_NEAR(found.solid_angles(0), oracle(0), 0.02);
  EXPECT_NEAR(found.solid_angles(1), oracle(1), 0.02);
  EXPECT_LE(found.solid_angles(2), 0.001);
  EXPECT_EQ(std::set<int>(found.rows.begin(), found.rows.end()), (std::set<int>{0, 1}));
}

TEST(Detection, SingleRowIsSelectedWithCertainty) {
  Eigen::MatrixXd one(1, 3);
  one << 0.2, 0.3, 0.5;
  const auto found = m4::detect_extreme_rows(one, {1, 50, 0.05, 0});
  EXPECT_EQ(found.rows, std::vector<int>{0});
  EXPECT_DOUBLE_EQ(found.solid_angles(0), 1.0);
  const auto top = m4::detect_extreme_rows(toy_points(), {1, 2000, 0.05, 0});
  ASSERT_EQ(top.rows.size(), 1u);
  EXPECT_NE(top.rows[0], 2);
}

TEST(Detection, TooFewSeparatedRowsIsAnError) {
  Eigen::MatrixXd close(3, 2);
  close << 1.0, 0.0, 1.0, 0.001, 0.999, 0.0;
  try {
    m4::detect_extreme_rows(close, {2, 200, 0.05, 0});
    FAIL() << "expected an error";
  } catch (const m4::Error& e) {
    EXPECT_NE(std::string(e.what()).find("found only 1"), std::string::npos);
  }
  EXPECT_THROW(m4::detect_extreme_rows(toy_points(), {4, 200, 0.05, 0}), m4::Error);
}

TEST(Detection, LiteralDistanceVariantIsSelectable) {
  const auto pts = toy_points();
  const m4::CandidateMask plain(pts, 0.05, false), literal(pts, 0.05, true);
  // ||p_0 - p_2|| = 0.707; ||p_0 - 2 p_2|| = 1.
  EXPECT_TRUE(plain.contains(0, 2));
  EXPECT_TRUE(literal.contains(0, 2));
  const m4::CandidateMask wide_plain(pts, 1.6, false), wide_literal(pts, 1.6, true);
  EXPECT_FALSE(wide_plain.contains(0, 2));
  EXPECT_TRUE(wide_literal.contains(2, 0));  // ||p_2 - 2 p_0|| = 1.58
  EXPECT_FALSE(wide_plain.contains(2, 0));
}

TEST(Detection, DeterministicAndThreadIndependent) {
  Eigen::MatrixXd pts(6, 4);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = u(rng);
  const auto a = m4::detect_extreme_rows(pts, {3, 500, 0.05, 12, false, 1});
  const auto b = m4::detect_extreme_rows(pts, {3, 500, 0.05, 12, false, 3});
  EXPECT_EQ(a.rows, b.rows);
  EXPECT_EQ(a.solid_angles, b.solid_angles);
}

TEST(Detection, DoublingProjectionsHalvesVariance) {
  const auto pts = toy_points();
  auto variance = [&](int p) {
    std::vector<double> v;
    for (std::uint64_t seed = 0; seed < 400; ++seed)
      v.push_back(m4::detect_extreme_rows(pts, {2, p, 0.01, 1000 + seed}).solid_angles(0));
    double mean = 0.0;
    for (double x : v) mean += x / v.size();
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean) / (v.size() - 1);
    return var;
  };
  const double ratio = variance(100) / variance(200);
  EXPECT_GT(ratio, 1.4);
  EXPECT_LT(ratio, 2.9);
}

TEST(Detection, ApproximateNovelPairsOutrankInteriorRow) {
  // Rows 1-3 carry most of their mass in one component (magnitudes from a
  // phi = 0.1 model: 0.99 vs 0.01); row 4 is a blend.
  Eigen::MatrixXd beta(4, 3);
  beta << 0.99, 0.01, 0.01, 0.01, 0.99, 0.01, 0.01, 0.01, 0.99, 0.5, 0.5, 0.5;
  const Eigen::MatrixXd r = Eigen::MatrixXd::Identity(3, 3) / 3.0;
  Eigen::MatrixXd e = beta * r * beta.transpose();
  const Eigen::VectorXd ba = beta.rowwise().sum() / 3.0;
  e = ba.cwiseInverse().asDiagonal() * e * ba.cwiseInverse().asDiagonal();
  const auto found = m4::detect_extreme_rows(e, {3, 20000, 0.05, 2});
  for (int i = 0; i < 3; ++i) EXPECT_GT(found.solid_angles(i), found.solid_angles(3) + 0.05);
  EXPECT_EQ(std::set<int>(found.rows.begin(), found.rows.end()), (std::set<int>{0, 1, 2}));
}

TEST(Detection, ExactSeparableSelectsTrueNovelPairs) {
  m4::M4Model model;
  model.components = random_components(8, 3, 0.0, 3);
  const auto moments = m4::exact_moments(model);
  const auto found = m4::detect_novel_pairs(moments.cooc, {3, 0, 0.05, 7});
  const auto beta = model.beta();
  std::set<int> covered;
  for (const int w : found.rows) {
    int owner = -1, mass = 0;
    for (int k = 0; k < 3; ++k)
      if (beta(w, k) == 1.0) {
        owner = k;
        ++mass;
      }
    EXPECT_EQ(mass, 1) << "row " << w << " is not a novel pair";
    covered.insert(owner);
  }
  EXPECT_EQ(covered, (std::set<int>{0, 1, 2}));
}

TEST(Detection, NoiseWidensSeparation) {
  Eigen::MatrixXd pts(2, 2);
  pts << 0.0, 0.0, 1.0, 0.0;
  const Eigen::Vector2d noise(0.3, 0.4);  // combined 0.5
  EXPECT_TRUE(m4::CandidateMask(pts, 0.05, false, noise, 1.0).contains(0, 1));   // 0.525 < 1
  EXPECT_FALSE(m4::CandidateMask(pts, 0.05, false, noise, 2.0).contains(0, 1));  // 1.025 > 1
  EXPECT_TRUE(m4::CandidateMask(pts, 0.05, false, noise, 0.0).contains(1, 0));
  EXPECT_THROW(m4::CandidateMask(pts, 0.05, false, Eigen::Vector3d::Zero(), 1.0), m4::Error);
}

TEST(Detection, LeadingRowSpaceMatchesSvd) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd left(14, 3), right(3, 14), noise(14, 14);
  for (Eigen::Index i = 0; i < left.size(); ++i) left.data()[i] = n(rng);
  for (Eigen::Index i = 0; i < right.size(); ++i) right.data()[i] = n(rng);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = 0.01 * n(rng);
  const Eigen::MatrixXd e = left * right + noise;
  std::vector<int> all(14), some{0, 2, 3, 5, 7, 8, 9, 11, 12};
  std::iota(all.begin(), all.end(), 0);
  const m4::CoocMatrix dense(Eigen::MatrixXd(e), all, 1);
  const m4::CoocMatrix sparse(m4::CoocMatrix::Sparse(e.sparseView()), all, 1);
  for (const auto* rows : {&all, &some}) {
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(rows->size()), 14);
    for (std::size_t a = 0; a < rows->size(); ++a) sub.row(static_cast<Eigen::Index>(a)) = e.row((*rows)[a]);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sub, Eigen::ComputeThinV);
    const Eigen::MatrixXd v = svd.matrixV().leftCols(3);
    for (const auto* cooc : {&dense, &sparse}) {
      const auto basis = m4::leading_row_space(*cooc, *rows, 3, 9);
      EXPECT_LE((basis.transpose() * basis - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LE((basis * basis.transpose() - v * v.transpose()).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(Detection, SampledMomentsFindOneNovelPairPerComponent) {
  m4::M4Model model;
  model.components = random_components(8, 3, 0.0, 6);
  const auto data = m4::generate(model, {4000, 40, 2, false, 1});
  const auto e = m4::cooccurrence(m4::split_halves(data.corpus));
  const auto found = m4::detect_novel_pairs(e, {3, 0, 0.05, 5});
  const auto beta = model.beta();
  std::set<int> covered;
  for (const int w : found.rows) {
    int owner = -1, mass = 0;
    for (int k = 0; k < 3; ++k)
      if (beta(w, k) == 1.0) {
        owner = k;
        ++mass;
      }
    EXPECT_EQ(mass, 1) << "row " << w << " is not a novel pair";
    covered.insert(owner);
  }
  EXPECT_EQ(covered, (std::set<int>{0, 1, 2}));
  EXPECT_LE(found.candidates, static_cast<int>(e.active().size()));
}

TEST(Detection, VeryNoisyRowsAreNotCandidates) {
  Eigen::MatrixXd pts(5, 5);
  pts << 9.0, 0.0, 0.0, 0.0, 0.0,
         0.0, 1.0, 0.0, 0.0, 0.0,
         0.0, 0.0, 1.0, 0.0, 0.0,
         0.3, 0.3, 0.3, 0.0, 0.0,
         0.2, 0.2, 0.2, 0.0, 0.0;
  m4::CoocMatrix e(Eigen::MatrixXd(pts), {0, 1, 2, 3, 4}, 100);
  Eigen::VectorXd noise = Eigen::VectorXd::Constant(5, 0.01);
  noise(0) = 0.05;  // five times the median
  e.set_row_noise(noise);
  const auto found = m4::detect_novel_pairs(e, {2, 500, 0.05, 3});
  EXPECT_EQ(found.candidates, 4);
  EXPECT_EQ(found.solid_angles(0), 0.0);
  EXPECT_EQ(std::set<int>(found.rows.begin(), found.rows.end()), (std::set<int>{1, 2}));
}

TEST(Regression, OrthogonalNovelRows) {
  Eigen::Matrix3d e;
  e << 1.0, 0.0, 0.3, 0.0, 1.0, 0.7, 0.3, 0.7, 0.58;
  const m4::CoocMatrix cooc(Eigen::MatrixXd(e), std::vector<int>{0, 1, 2}, 1);
  const auto res = m4::estimate_ranking_matrix(cooc, {0, 1}, Eigen::Vector3d(1.0, 1.0, 1.0), 2, {1e-12, 10000, 1});
  EXPECT_NEAR(res.mixing(2, 0), 0.3, 1e-6);
  EXPECT_NEAR(res.mixing(2, 1), 0.7, 1e-6);
  EXPECT_NEAR(res.mixing(0, 0), 1.0, 1e-9);
  EXPECT_NEAR(res.mixing(1, 1), 1.0, 1e-9);
  for (int c = 0; c < 2; ++c) EXPECT_NEAR(res.topic.values.col(c).sum(), 1.0, 1e-12);
}

TEST(Regression, NoiselessMomentsRecoverTopicMatrix) {
  m4::M4Model model;
  model.components = random_components(10, 3, 0.2, 5);
  const auto moments = m4::exact_moments(model);
  const auto res = m4::estimate_from_moments(moments.cooc, moments.row_frequency, 10, {3, 0, 0.05, 1e-4, 11});
  const auto truth = model.topic_matrix();
  const auto eval_rankings = res.model.rankings;
  // Align columns by reference ranking, then compare B.
  for (int k = 0; k < 3; ++k) {
    int match = -1;
    for (int c = 0; c < 3; ++c)
      if (eval_rankings[static_cast<std::size_t>(c)] == model.components[static_cast<std::size_t>(k)].reference) match = c;
    ASSERT_GE(match, 0) << "component " << k << " not recovered";
    EXPECT_LE((res.model.topic.values.col(match) - truth.values.col(k)).cwiseAbs().maxCoeff(), 1e-3);
  }
}

TEST(Regression, SelectedRowsRegressOntoVertices) {
  m4::M4Model model;
  model.components = random_components(7, 2, 0.1, 9);
  const auto moments = m4::exact_moments(model);
  const auto novel = m4::detect_novel_pairs(moments.cooc, {2, 0, 0.05, 1});
  const auto res = m4::estimate_ranking_matrix(moments.cooc, novel.rows, moments.row_frequency, 7, {1e-10, 10000, 1});
  for (std::size_t a = 0; a < novel.rows.size(); ++a)
    EXPECT_NEAR(res.mixing(novel.rows[a], static_cast<Eigen::Index>(a)), 1.0, 1e-6);
}

TEST(Regression, ThreadIndependentAndDenseSparseAgnostic) {
  m4::M4Model model;
  model.components = random_components(6, 2, 0.2, 2);
  const auto data = m4::generate(model, {2000, 20, 4, false, 1});
  const auto a = m4::estimate_from_corpus(data.corpus, {2, 0, 0.05, 1e-4, 3, 1});
  const auto b = m4::estimate_from_corpus(data.corpus, {2, 0, 0.05, 1e-4, 3, 4, false, 0});
  EXPECT_EQ(a.novel.rows, b.novel.rows);
  EXPECT_EQ(a.model.topic.values, b.model.topic.values);
  EXPECT_EQ(a.model.rankings, b.model.rankings);
}

TEST(Pipeline, StageErrorsCarryTheStageName) {
  m4::M4Model model;
  model.components = random_components(3, 1, 0.0, 1);
  const auto data = m4::generate(model, {20, 4, 1, false, 1});
  try {
    m4::estimate_from_corpus(data.corpus, {5});
    FAIL() << "expected an error";
  } catch (const m4::StageError& e) {
    EXPECT_EQ(e.stage(), "detect");
  }
  auto short_corpus = data.corpus;
  short_corpus.records.erase(short_corpus.records.begin() + 1, short_corpus.records.begin() + 4);
  try {
    m4::estimate_from_corpus(short_corpus, {1});
    FAIL() << "expected an error";
  } catch (const m4::StageError& e) {
    EXPECT_EQ(e.stage(), "split");
  }
}
