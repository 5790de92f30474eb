#pragma once

// Cross-run topic alignment, stability gating and consensus mixtures.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "versetopics/error.hpp"
#include "versetopics/hungarian.hpp"
#include "versetopics/lda.hpp"

namespace versetopics {

/// Indices of the m largest entries, ties broken towards the smaller index
/// (lemma columns are lexicographically sorted, so this is lemma order).
inline std::vector<std::size_t> top_m_indices(std::span<const double> row, std::size_t m) {
  std::vector<std::size_t> idx(row.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  m = std::min(m, row.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m), idx.end(),
                    [&](std::size_t a, std::size_t b) { return row[a] > row[b] || (row[a] == row[b] && a < b); });
  idx.resize(m);
  return idx;
}

inline std::vector<std::size_t> top_m_indices(const Eigen::RowVectorXd& row, std::size_t m) {
  return top_m_indices(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), m);
}

/// |A n B| / |A u B| for two index sets.
inline double jaccard(std::vector<std::size_t> a, std::vector<std::size_t> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  if (a.empty() && b.empty()) return 1.0;
  std::vector<std::size_t> inter;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  const std::size_t uni = a.size() + b.size() - inter.size();
  return static_cast<double>(inter.size()) / static_cast<double>(uni);
}

/// Jaccard overlap of the top-m index sets of two weight rows.
inline double jaccard_top_m(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b, std::size_t m = 30) {
  if (a.size() != b.size()) throw InputError("jaccard_top_m: rows differ in length");
  return jaccard(top_m_indices(a, m), top_m_indices(b, m));
}

/// Average ranks (1-based), ties sharing the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Spearman correlation with tie-averaged ranks. Empty when either input has
/// zero rank variance (the coefficient is undefined).
inline std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("spearman: inputs must have equal length >= 2");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline std::optional<double> spearman(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return spearman(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                  std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
}

/// Inverse Simpson index 1 / sum p_k^2 of a count vector.
inline double n_eff(std::span<const std::int64_t> counts) {
  std::int64_t total = 0;
  for (auto c : counts) {
    if (c < 0) throw InputError("n_eff: negative count");
    total += c;
  }
  if (total == 0) throw InputError("n_eff: all counts are zero");
  // sum c^2 / total^2 in integers keeps simple ratios exact
  double sum_sq = 0.0;
  for (auto c : counts) sum_sq += static_cast<double>(c) * static_cast<double>(c);
  return static_cast<double>(total) * static_cast<double>(total) / sum_sq;
}

inline double n_eff(const std::vector<std::int64_t>& counts) { return n_eff(std::span<const std::int64_t>(counts)); }

struct AlignWeights {
  double w_beta = 0.5;
  double w_gamma = 0.5;
};

struct GateThresholds {
  double min_mean_jaccard = 0.30;
  double min_mean_spearman = 0.60;
  double min_mapping_agreement = 0.60;
};

struct AlignOptions {
  AlignWeights weights;
  GateThresholds thresholds;
  std::size_t top_m = 30;

  void validate() const {
    if (weights.w_beta < 0.0 || weights.w_gamma < 0.0 || std::abs(weights.w_beta + weights.w_gamma - 1.0) > 1e-12) {
      throw InputError("alignment weights must be non-negative and sum to 1");
    }
    if (top_m == 0) throw InputError("top_m must be >= 1");
  }
};

struct AlignmentScore {
  Eigen::MatrixXd s_beta;     // Jaccard@m, run topic (row) vs reference topic (col)
  Eigen::MatrixXd r_gamma;    // Spearman of gamma columns, undefined entries set to 0
  Eigen::MatrixXd composite;  // w_beta * s_beta + w_gamma * r_gamma
  std::vector<std::vector<char>> r_gamma_defined;
  double w_beta = 0.5;
  double w_gamma = 0.5;
};

struct RunAlignment {
  std::vector<int> permutation;  // run topic -> reference topic
  double mean_jaccard30 = 0.0;
  double mean_spearman = 0.0;
  double mapping_agreement = 0.0;
  bool retained = false;
  std::vector<double> matched_jaccard;  // indexed by reference topic
  std::uint64_t seed = 0;
  double log_likelihood = 0.0;
  bool is_reference = false;
  AlignmentScore score;
};

inline AlignmentScore alignment_score(const LdaRun& run, const LdaRun& reference, const AlignOptions& options) {
  options.validate();
  if (run.beta.rows() != reference.beta.rows() || run.beta.cols() != reference.beta.cols() ||
      run.gamma.rows() != reference.gamma.rows() || run.gamma.cols() != reference.gamma.cols()) {
    throw InputError("align_run: run and reference dimensions differ");
  }
  if (options.top_m > static_cast<std::size_t>(run.beta.cols())) {
    throw InputError("align_run: top_m exceeds the vocabulary size");
  }
  const auto k = run.beta.rows();
  AlignmentScore s;
  s.w_beta = options.weights.w_beta;
  s.w_gamma = options.weights.w_gamma;
  s.s_beta.resize(k, k);
  s.r_gamma.resize(k, k);
  s.r_gamma_defined.assign(static_cast<std::size_t>(k), std::vector<char>(static_cast<std::size_t>(k), 1));

  std::vector<std::vector<std::size_t>> run_top, ref_top;
  for (Eigen::Index t = 0; t < k; ++t) {
    run_top.push_back(top_m_indices(Eigen::RowVectorXd(run.beta.row(t)), options.top_m));
    ref_top.push_back(top_m_indices(Eigen::RowVectorXd(reference.beta.row(t)), options.top_m));
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::VectorXd run_col = run.gamma.col(i);
    for (Eigen::Index j = 0; j < k; ++j) {
      s.s_beta(i, j) = jaccard(run_top[static_cast<std::size_t>(i)], ref_top[static_cast<std::size_t>(j)]);
      const auto rho = spearman(run_col, Eigen::VectorXd(reference.gamma.col(j)));
      if (rho) {
        s.r_gamma(i, j) = *rho;
      } else {
        s.r_gamma(i, j) = 0.0;
        s.r_gamma_defined[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = 0;
      }
    }
  }
  s.composite = s.w_beta * s.s_beta + s.w_gamma * s.r_gamma;
  return s;
}

inline bool passes_gates(const RunAlignment& a, const GateThresholds& g) {
  return a.mean_jaccard30 >= g.min_mean_jaccard && a.mean_spearman >= g.min_mean_spearman &&
         a.mapping_agreement >= g.min_mapping_agreement;
}

/// Aligns `run` onto `reference` via the composite score and evaluates the
/// three stability gates on the matched pairs.
inline RunAlignment align_run(const LdaRun& run, const LdaRun& reference, const AlignOptions& options = {}) {
  RunAlignment a;
  a.score = alignment_score(run, reference, options);
  const auto k = static_cast<std::size_t>(run.beta.rows());
  a.permutation = hungarian_max(a.score.composite).perm;

  a.matched_jaccard.assign(k, 0.0);
  double jac = 0.0;
  double rho = 0.0;
  std::size_t rho_n = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(a.permutation[i]);
    const double sj = a.score.s_beta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    a.matched_jaccard[j] = sj;
    jac += sj;
    if (a.score.r_gamma_defined[i][j]) {
      rho += a.score.r_gamma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      ++rho_n;
    }
  }
  if (rho_n < k) {
    spdlog::warn("run seed {}: {} matched gamma column pair(s) have zero variance; excluded from mean Spearman",
                 run.seed, k - rho_n);
  }
  a.mean_jaccard30 = jac / static_cast<double>(k);
  a.mean_spearman = rho_n ? rho / static_cast<double>(rho_n) : 0.0;

  const auto beta_only = hungarian_max(a.score.s_beta).perm;
  const auto gamma_only = hungarian_max(a.score.r_gamma).perm;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < k; ++i) agree += beta_only[i] == gamma_only[i];
  a.mapping_agreement = static_cast<double>(agree) / static_cast<double>(k);

  a.retained = passes_gates(a, options.thresholds);
  a.seed = run.seed;
  a.log_likelihood = run.log_likelihood;
  return a;
}

/// Run with maximal log-likelihood; ties go to the smallest seed.
inline std::size_t select_reference(const std::vector<LdaRun>& runs) {
  if (runs.empty()) throw InputError("select_reference: no runs");
  std::size_t best = 0;
  for (std::size_t i = 1; i < runs.size(); ++i) {
    const auto& r = runs[i];
    const auto& b = runs[best];
    if (r.log_likelihood > b.log_likelihood || (r.log_likelihood == b.log_likelihood && r.seed < b.seed)) best = i;
  }
  return best;
}

/// Relabels topics: old topic i becomes topic sigma[i] (beta rows and gamma
/// columns move together).
inline LdaRun permute_topics(const LdaRun& run, const std::vector<int>& sigma) {
  LdaRun out = run;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    out.beta.row(sigma[i]) = run.beta.row(static_cast<Eigen::Index>(i));
    out.gamma.col(sigma[i]) = run.gamma.col(static_cast<Eigen::Index>(i));
  }
  return out;
}

/// Gamma with columns moved into reference order.
inline Eigen::MatrixXd realign_gamma(const Eigen::MatrixXd& gamma, const std::vector<int>& permutation) {
  Eigen::MatrixXd out(gamma.rows(), gamma.cols());
  for (std::size_t i = 0; i < permutation.size(); ++i) out.col(permutation[i]) = gamma.col(static_cast<Eigen::Index>(i));
  return out;
}

/// Dominant and runner-up index of a row (ties to the smaller index). The
/// runner-up is -1 when the row has a single entry.
inline std::pair<int, int> top_two(const Eigen::RowVectorXd& row) {
  int first = 0;
  for (Eigen::Index t = 1; t < row.size(); ++t) {
    if (row(t) > row(first)) first = static_cast<int>(t);
  }
  int second = -1;
  for (Eigen::Index t = 0; t < row.size(); ++t) {
    if (t == first) continue;
    if (second < 0 || row(t) > row(second)) second = static_cast<int>(t);
  }
  return {first, second};
}

struct ConsensusResult {
  Eigen::MatrixXd consensus_gamma;  // D x K in reference topic order
  std::vector<int> dominant_topic;
  std::vector<int> runner_up_topic;
  double n_eff = 0.0;
  std::size_t retained_run_count = 0;
  std::vector<double> per_topic_mean_jaccard;
  std::size_t reference_index = 0;
  std::vector<RunAlignment> alignments;             // one per input run, input order
  std::vector<std::vector<std::size_t>> top_terms;  // reference run, per topic
  std::vector<double> retained_run_n_eff;           // per retained run, run order

  std::vector<std::int64_t> dominant_counts() const {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(consensus_gamma.cols()), 0);
    for (int d : dominant_topic) ++counts[static_cast<std::size_t>(d)];
    return counts;
  }
};

inline std::vector<std::int64_t> dominant_counts_of(const Eigen::MatrixXd& gamma) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(gamma.cols()), 0);
  for (Eigen::Index d = 0; d < gamma.rows(); ++d) ++counts[static_cast<std::size_t>(top_two(gamma.row(d)).first)];
  return counts;
}

/// Aligns every run to the reference, gates them, and averages the realigned
/// gamma matrices of the retained runs with equal weights. The reference is
/// always retained. With more than one run, an ensemble in which no other run
/// passes the gates is a numerical failure.
inline ConsensusResult consensus(const std::vector<LdaRun>& runs, std::size_t reference_index,
                                 const AlignOptions& options = {}) {
  if (runs.empty()) throw InputError("consensus: no runs");
  if (reference_index >= runs.size()) throw InputError("consensus: reference index out of range");
  const LdaRun& ref = runs[reference_index];
  const auto k = static_cast<std::size_t>(ref.k());

  ConsensusResult out;
  out.reference_index = reference_index;
  out.consensus_gamma = Eigen::MatrixXd::Zero(ref.gamma.rows(), ref.gamma.cols());
  out.per_topic_mean_jaccard.assign(k, 0.0);
  std::size_t others = 0;

  for (std::size_t r = 0; r < runs.size(); ++r) {
    auto a = align_run(runs[r], ref, options);
    if (r == reference_index) {
      a.is_reference = true;
      a.retained = true;
    }
    if (a.retained) {
      const Eigen::MatrixXd g = realign_gamma(runs[r].gamma, a.permutation);
      out.consensus_gamma += g;
      out.retained_run_n_eff.push_back(n_eff(dominant_counts_of(g)));
      ++out.retained_run_count;
      if (!a.is_reference) {
        for (std::size_t t = 0; t < k; ++t) out.per_topic_mean_jaccard[t] += a.matched_jaccard[t];
        ++others;
      }
    }
    out.alignments.push_back(std::move(a));
  }

  if (runs.size() > 1 && others == 0) {
    std::string msg = "consensus: every non-reference run failed the stability gates";
    for (const auto& a : out.alignments) {
      if (a.is_reference) continue;
      msg += "\n  seed " + std::to_string(a.seed) + ": jaccard=" + text::format_double(a.mean_jaccard30) +
             " spearman=" + text::format_double(a.mean_spearman) +
             " agreement=" + text::format_double(a.mapping_agreement);
    }
    throw NumericalError(msg);
  }

  out.consensus_gamma /= static_cast<double>(out.retained_run_count);
  for (Eigen::Index d = 0; d < out.consensus_gamma.rows(); ++d) {
    out.consensus_gamma.row(d) /= out.consensus_gamma.row(d).sum();
  }
  for (auto& j : out.per_topic_mean_jaccard) j = others ? j / static_cast<double>(others) : 1.0;

  for (Eigen::Index d = 0; d < out.consensus_gamma.rows(); ++d) {
    const auto [first, second] = top_two(out.consensus_gamma.row(d));
    out.dominant_topic.push_back(first);
    out.runner_up_topic.push_back(second);
  }
  out.n_eff = n_eff(out.dominant_counts());
  for (std::size_t t = 0; t < k; ++t) {
    out.top_terms.push_back(top_m_indices(Eigen::RowVectorXd(ref.beta.row(static_cast<Eigen::Index>(t))),
                                          std::min<std::size_t>(options.top_m, static_cast<std::size_t>(ref.beta.cols()))));
  }
  return out;
}

}  // namespace versetopics
