#pragma once

// Synthetic corpora drawn from known LDA parameters, and recovery scoring
// against that ground truth.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "versetopics/corpus.hpp"
#include "versetopics/error.hpp"
#include "versetopics/hungarian.hpp"
#include "versetopics/lda.hpp"
#include "versetopics/rng.hpp"
#include "versetopics/table.hpp"

namespace versetopics {

struct SynthSpec {
  int k = 5;
  int vocab_size = 750;
  int n_docs = 35;
  int tokens_min = 150;  // document length ~ uniform on [tokens_min, tokens_max]
  int tokens_max = 180;
  double alpha_true = 2.0;
  double phi_concentration = 0.05;
  std::uint64_t seed = 1;
  // Optional content stanzas per chapter. When set, documents are the blocks
  // of this layout and a token stream is emitted alongside the counts.
  std::vector<int> stanza_layout;

  void validate() const {
    if (k < 1) throw InputError("synth: k must be >= 1");
    if (vocab_size < k) throw InputError("synth: vocab_size must be >= k");
    if (n_docs < 1 && stanza_layout.empty()) throw InputError("synth: n_docs must be >= 1");
    if (tokens_min < 1 || tokens_max < tokens_min) throw InputError("synth: need 1 <= tokens_min <= tokens_max");
    if (!(alpha_true > 0.0)) throw InputError("synth: alpha_true must be positive");
    if (!(phi_concentration > 0.0)) throw InputError("synth: phi_concentration must be positive");
  }
};

struct SynthCorpus {
  DocumentTermMatrix dtm;            // observed lemmas only
  std::vector<std::string> vocabulary;  // all generated lemma names
  Eigen::MatrixXd true_phi;          // K x vocab_size
  Eigen::MatrixXd true_theta;        // D x K, in dtm row order
  std::optional<BlockSegmentation> segmentation;
  std::vector<TaggedToken> tokens;   // only with a stanza layout

  /// Share of zero cells in the full D x vocab_size count matrix (the stored
  /// DTM drops lemmas that were never drawn).
  double generated_sparsity() const noexcept {
    const double cells = static_cast<double>(dtm.n_docs()) * static_cast<double>(vocabulary.size());
    return cells > 0 ? 1.0 - static_cast<double>(dtm.nnz()) / cells : 0.0;
  }
};

/// "w001", "w002", ... zero-padded to the width of the vocabulary size.
inline std::vector<std::string> synth_vocabulary(int size) {
  const auto width = std::to_string(size).size();
  std::vector<std::string> out;
  for (int i = 1; i <= size; ++i) {
    auto s = std::to_string(i);
    out.push_back("w" + std::string(width - s.size(), '0') + s);
  }
  return out;
}

/// Standard LDA generative process: phi rows, then theta rows, then for each
/// document its length and topic-then-word draws.
inline SynthCorpus generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng{spec.seed};
  SynthCorpus out;
  out.vocabulary = synth_vocabulary(spec.vocab_size);

  std::vector<std::string> block_ids;
  if (!spec.stanza_layout.empty()) {
    out.segmentation = segment_blocks(spec.stanza_layout);
    block_ids = out.segmentation->block_ids();
  } else {
    for (int d = 1; d <= spec.n_docs; ++d) block_ids.push_back("C1_B" + std::to_string(d));
  }
  const auto n_docs = static_cast<Eigen::Index>(block_ids.size());

  out.true_phi.resize(spec.k, spec.vocab_size);
  for (int t = 0; t < spec.k; ++t) {
    const auto row = rng.dirichlet(static_cast<std::size_t>(spec.vocab_size), spec.phi_concentration);
    for (int w = 0; w < spec.vocab_size; ++w) out.true_phi(t, w) = row[static_cast<std::size_t>(w)];
  }
  out.true_theta.resize(n_docs, spec.k);
  for (Eigen::Index d = 0; d < n_docs; ++d) {
    const auto row = rng.dirichlet(static_cast<std::size_t>(spec.k), spec.alpha_true);
    for (int t = 0; t < spec.k; ++t) out.true_theta(d, t) = row[static_cast<std::size_t>(t)];
  }

  std::vector<std::vector<double>> phi_rows(static_cast<std::size_t>(spec.k));
  for (int t = 0; t < spec.k; ++t) {
    phi_rows[static_cast<std::size_t>(t)].resize(static_cast<std::size_t>(spec.vocab_size));
    for (int w = 0; w < spec.vocab_size; ++w) phi_rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(w)] = out.true_phi(t, w);
  }

  std::vector<std::map<std::string, std::int64_t>> cells(static_cast<std::size_t>(n_docs));
  std::vector<double> theta(static_cast<std::size_t>(spec.k));
  for (Eigen::Index d = 0; d < n_docs; ++d) {
    const auto span = static_cast<std::uint64_t>(spec.tokens_max - spec.tokens_min + 1);
    const int len = spec.tokens_min + static_cast<int>(rng.below(span));
    for (int t = 0; t < spec.k; ++t) theta[static_cast<std::size_t>(t)] = out.true_theta(d, t);
    const Block* block = out.segmentation ? &out.segmentation->blocks[static_cast<std::size_t>(d)] : nullptr;
    for (int i = 0; i < len; ++i) {
      const auto z = rng.categorical(theta);
      const auto w = rng.categorical(phi_rows[z]);
      const auto& lemma = out.vocabulary[w];
      ++cells[static_cast<std::size_t>(d)][lemma];
      if (block) {
        TaggedToken tok;
        tok.chapter = block->chapter;
        tok.stanza = block->stanzas[static_cast<std::size_t>(i) % block->stanzas.size()];
        tok.surface = lemma;
        tok.lemma = lemma;
        tok.pos = Pos::Noun;
        tok.is_content_stanza = true;
        out.tokens.push_back(std::move(tok));
      }
    }
  }
  // narrative order for the token stream
  std::stable_sort(out.tokens.begin(), out.tokens.end(), [](const TaggedToken& a, const TaggedToken& b) {
    return std::tie(a.chapter, a.stanza) < std::tie(b.chapter, b.stanza);
  });
  out.dtm = DocumentTermMatrix::from_cells(std::move(block_ids), cells);
  return out;
}

struct RecoveryReport {
  std::vector<int> permutation;  // recovered topic -> true topic
  Eigen::MatrixXd cosine;        // recovered (row) x true (col)
  std::vector<double> matched_cosine;  // per recovered topic
  double mean_cosine = 0.0;
  double mean_tv = 0.0;
};

inline double cosine_similarity(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), 0.0, 1.0);
}

/// Matches recovered topics to true ones by Hungarian assignment on cosine
/// similarity of topic-term rows (aligned by lemma name), then reports the
/// mean matched cosine and the mean total-variation distance between the
/// realigned document mixtures and the true ones.
inline RecoveryReport score_recovery(const Eigen::MatrixXd& beta, const std::vector<std::string>& lemmas,
                                     const Eigen::MatrixXd& gamma, const Eigen::MatrixXd& true_phi,
                                     const std::vector<std::string>& true_vocabulary, const Eigen::MatrixXd& true_theta) {
  const auto k = beta.rows();
  if (true_phi.rows() != k || gamma.cols() != k || true_theta.cols() != k) {
    throw InputError("score_recovery: topic counts differ");
  }
  if (gamma.rows() != true_theta.rows()) throw InputError("score_recovery: document counts differ");
  if (static_cast<std::size_t>(beta.cols()) != lemmas.size() ||
      static_cast<std::size_t>(true_phi.cols()) != true_vocabulary.size()) {
    throw InputError("score_recovery: vocabulary labels do not match the matrices");
  }
  std::map<std::string, Eigen::Index> true_index;
  for (std::size_t w = 0; w < true_vocabulary.size(); ++w) true_index[true_vocabulary[w]] = static_cast<Eigen::Index>(w);
  Eigen::MatrixXd aligned = Eigen::MatrixXd::Zero(k, true_phi.cols());
  for (std::size_t w = 0; w < lemmas.size(); ++w) {
    const auto it = true_index.find(lemmas[w]);
    if (it == true_index.end()) throw InputError("score_recovery: lemma '" + lemmas[w] + "' is not in the true vocabulary");
    aligned.col(it->second) = beta.col(static_cast<Eigen::Index>(w));
  }

  RecoveryReport r;
  r.cosine.resize(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) r.cosine(i, j) = cosine_similarity(aligned.row(i), true_phi.row(j));
  }
  r.permutation = hungarian_max(r.cosine).perm;
  for (Eigen::Index i = 0; i < k; ++i) {
    r.matched_cosine.push_back(r.cosine(i, r.permutation[static_cast<std::size_t>(i)]));
    r.mean_cosine += r.matched_cosine.back();
  }
  r.mean_cosine /= static_cast<double>(k);
  for (Eigen::Index d = 0; d < gamma.rows(); ++d) {
    double tv = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) tv += std::abs(gamma(d, i) - true_theta(d, r.permutation[static_cast<std::size_t>(i)]));
    r.mean_tv += 0.5 * tv;
  }
  r.mean_tv /= static_cast<double>(gamma.rows());
  return r;
}

inline RecoveryReport score_recovery(const LdaRun& run, const SynthCorpus& truth) {
  return score_recovery(run.beta, run.lemmas, run.gamma, truth.true_phi, truth.vocabulary, truth.true_theta);
}

/// Writes dtm.csv (long format), true_phi.csv, true_theta.csv and, with a
/// layout, tokens.tsv and segmentation.csv.
inline void save_synth(const std::filesystem::path& dir, const SynthCorpus& c) {
  std::filesystem::create_directories(dir);
  save_long_format(dir / "dtm.csv", c.dtm);
  write_text_file(dir / "true_phi.csv", matrix_csv(c.true_phi, c.vocabulary));
  write_text_file(dir / "true_theta.csv", matrix_csv(c.true_theta, topic_header(static_cast<int>(c.true_theta.cols()))));
  if (c.segmentation) {
    save_tokens(dir / "tokens.tsv", c.tokens);
    save_segmentation(dir / "segmentation.csv", *c.segmentation);
  }
}

inline std::string recovery_json(const RecoveryReport& r) {
  nlohmann::ordered_json j;
  j["permutation"] = r.permutation;
  j["matched_cosine"] = r.matched_cosine;
  j["mean_cosine"] = r.mean_cosine;
  j["mean_tv"] = r.mean_tv;
  return j.dump(2) + "\n";
}

}  // namespace versetopics
