#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "m4/error.hpp"
#include "m4/generator.hpp"
#include "m4/mallows.hpp"
#include "m4/moments.hpp"
#include "m4/permutation.hpp"

namespace m4::io {

using json = nlohmann::json;

/// Writes to `path.tmp` and renames over `path`, so readers never observe a
/// partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error("failed writing " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- corpus ---

/// JSON Lines: optional {"meta": {...}} header, then one
/// {"user", "win", "lose"} record per comparison with 1-based ids. Retained
/// component labels are written as an extra 1-based "z" field.
inline std::string corpus_to_jsonl(const ComparisonCorpus& corpus, int comparisons_per_user = 0) {
  std::string out;
  json meta = {{"Q", corpus.q}, {"M", corpus.m}};
  if (comparisons_per_user > 0) meta["N"] = comparisons_per_user;
  out += json{{"meta", meta}}.dump();
  out += '\n';
  const bool labels = !corpus.labels.empty();
  for (std::size_t n = 0; n < corpus.records.size(); ++n) {
    const auto& r = corpus.records[n];
    json rec = {{"user", r.user + 1}, {"win", r.winner + 1}, {"lose", r.loser + 1}};
    if (labels) rec["z"] = corpus.labels[n] + 1;
    out += rec.dump();
    out += '\n';
  }
  return out;
}

inline ComparisonCorpus read_corpus_jsonl(std::istream& in) {
  ComparisonCorpus corpus;
  std::optional<int> meta_q, meta_m;
  bool any_label = false, all_labels = true;
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  int max_item = 0, max_user = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
    if (j.contains("meta")) {
      const auto& m = j.at("meta");
      if (m.contains("Q")) meta_q = m.at("Q").get<int>();
      if (m.contains("M")) meta_m = m.at("M").get<int>();
      continue;
    }
    try {
      Comparison c{j.at("user").get<int>() - 1, j.at("win").get<int>() - 1, j.at("lose").get<int>() - 1};
      if (c.user < 0 || c.winner < 0 || c.loser < 0)
        throw Error("ids must be positive");
      max_item = std::max({max_item, c.winner + 1, c.loser + 1});
      max_user = std::max(max_user, c.user + 1);
      corpus.records.push_back(c);
      if (j.contains("z")) {
        any_label = true;
        labels.push_back(j.at("z").get<int>() - 1);
      } else {
        all_labels = false;
      }
    } catch (const json::exception& e) {
      throw Error("corpus line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  corpus.q = meta_q.value_or(max_item);
  corpus.m = meta_m.value_or(max_user);
  if (any_label && all_labels) corpus.labels = std::move(labels);
  corpus.validate();
  return corpus;
}

inline ComparisonCorpus read_corpus_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus " + path.string());
  return read_corpus_jsonl(in);
}

// ----------------------------------------------------------------- model ---

/// Model file contents shared by ground-truth and estimated models.
struct ModelFile {
  M4Model model;
  std::optional<std::uint64_t> seed;
  std::vector<std::vector<double>> weights;  // per-user truth weights (truth files only)
  std::optional<Eigen::MatrixXd> topic;      // B_hat (estimate files only)
  json diagnostics;                          // estimate files only
  json config;                               // resolved run configuration
};

inline json prior_to_json(const WeightPrior& prior) {
  if (const auto* d = std::get_if<DirichletPrior>(&prior)) return {{"type", "dirichlet"}, {"alpha", d->alpha}};
  if (const auto* v = std::get_if<VertexPrior>(&prior)) return {{"type", "vertex"}, {"class_probs", v->class_probs}};
  return {{"type", "explicit"}, {"weights", std::get<ExplicitPrior>(prior).weights}};
}

inline WeightPrior prior_from_json(const json& j) {
  const auto type = j.value("type", std::string("dirichlet"));
  if (type == "dirichlet") return DirichletPrior{j.value("alpha", 0.1)};
  if (type == "vertex") return VertexPrior{j.at("class_probs").get<std::vector<double>>()};
  if (type == "explicit") return ExplicitPrior{j.at("weights").get<std::vector<std::vector<double>>>()};
  throw Error("unknown prior type '" + type + "'");
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r].size() == rows.front().size(), "matrix rows differ in length");
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

inline json model_to_json(const ModelFile& f) {
  json comps = json::array();
  for (const auto& c : f.model.components) {
    std::vector<int> ranking;
    for (const int item : c.reference.order()) ranking.push_back(item + 1);
    comps.push_back({{"ranking", ranking}, {"phi", c.dispersion}});
  }
  json j = {{"Q", f.model.items()}, {"K", f.model.k()}, {"components", comps}, {"prior", prior_to_json(f.model.prior)}};
  if (!f.model.pairs.weights.empty()) j["pair_weights"] = f.model.pairs.weights;
  if (f.seed) j["seed"] = *f.seed;
  if (!f.weights.empty()) j["weights"] = f.weights;
  if (f.topic) j["B_hat"] = matrix_to_json(*f.topic);
  if (!f.diagnostics.is_null()) j["diagnostics"] = f.diagnostics;
  if (!f.config.is_null()) j["config"] = f.config;
  return j;
}

inline ModelFile model_from_json(const json& j) {
  ModelFile f;
  const int q = j.at("Q").get<int>();
  for (const auto& c : j.at("components")) {
    auto ranking = c.at("ranking").get<std::vector<int>>();
    require(static_cast<int>(ranking.size()) == q, "model: ranking length differs from Q");
    for (auto& item : ranking) item -= 1;
    f.model.components.emplace_back(Permutation::from_order(std::move(ranking)), c.at("phi").get<double>());
  }
  if (j.contains("K")) require(j.at("K").get<int>() == f.model.k(), "model: K differs from component count");
  if (j.contains("prior")) f.model.prior = prior_from_json(j.at("prior"));
  if (j.contains("pair_weights")) f.model.pairs.weights = j.at("pair_weights").get<std::vector<double>>();
  if (j.contains("seed")) f.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("weights")) f.weights = j.at("weights").get<std::vector<std::vector<double>>>();
  if (j.contains("B_hat")) {
    f.topic = matrix_from_json(j.at("B_hat"));
    require(f.topic->rows() == q * (q - 1) && f.topic->cols() == f.model.k(), "model: B_hat has wrong shape");
  }
  if (j.contains("diagnostics")) f.diagnostics = j.at("diagnostics");
  if (j.contains("config")) f.config = j.at("config");
  f.model.validate();
  return f;
}

inline ModelFile read_model(const std::filesystem::path& path) {
  try {
    return model_from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw Error("model " + path.string() + ": " + e.what());
  }
}

/// Row-major float64 dump of a co-occurrence matrix plus a JSON sidecar
/// {"rows", "cols", "dtype", "order", "active"} at `path.json`.
inline void dump_cooccurrence(const CoocMatrix& e, const std::filesystem::path& path) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dense = e.to_dense();
  std::string bytes(reinterpret_cast<const char*>(dense.data()), static_cast<std::size_t>(dense.size()) * sizeof(double));
  write_atomic(path, bytes);
  auto side = path;
  side += ".json";
  json meta = {{"rows", dense.rows()}, {"cols", dense.cols()}, {"dtype", "float64"}, {"order", "row-major"},
               {"active", e.active()}, {"users", e.users()}};
  write_atomic(side, meta.dump(2) + "\n");
}

}  // namespace m4::io
