#pragma once

// Sparse PLS discriminant analysis: one-versus-rest probe with stratified
// cross-validation, and the exclusivity dictionary built from a multiclass
// refit.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "versetopics/align.hpp"
#include "versetopics/corpus.hpp"
#include "versetopics/error.hpp"
#include "versetopics/rng.hpp"
#include "versetopics/table.hpp"
#include "versetopics/text.hpp"

namespace versetopics {

struct SplsdaConfig {
  int n_comp = 2;
  int keep_x = 30;
  int cv_folds = 5;
  int cv_repeats = 5;
  int baseline_permutations = 1000;
  double lambda_exclusive = 0.6;
  std::uint64_t cv_seed = 1;
  std::size_t max_core_terms = 20;
  double tolerance = 1e-9;
  int max_iterations = 500;

  void validate() const {
    if (n_comp < 1) throw InputError("n_comp must be >= 1");
    if (keep_x < 1) throw InputError("keep_x must be >= 1");
    if (cv_folds < 2) throw InputError("cv_folds must be >= 2");
    if (cv_repeats < 1) throw InputError("cv_repeats must be >= 1");
    if (baseline_permutations < 1) throw InputError("baseline_permutations must be >= 1");
    if (!(lambda_exclusive > 0.0 && lambda_exclusive <= 1.0)) throw InputError("lambda_exclusive must lie in (0, 1]");
    if (max_iterations < 1) throw InputError("max_iterations must be >= 1");
  }
};

struct SplsdaModel {
  Eigen::VectorXd x_mean, x_scale;  // V
  Eigen::VectorXd y_mean, y_scale;  // classes
  Eigen::MatrixXd loadings_x;       // V x H, unit columns, <= keep_x nonzeros each
  Eigen::MatrixXd loadings_y;       // C x H, unit columns
  Eigen::MatrixXd x_regression;     // V x H, X deflation coefficients p_h
  Eigen::MatrixXd y_regression;     // C x H, Y deflation coefficients c_h
  Eigen::MatrixXd scores;           // D x H
  std::vector<int> classes;         // label of each Y column, ascending
  std::vector<int> iterations;      // power iterations used per component

  int n_comp() const noexcept { return static_cast<int>(loadings_x.cols()); }

  /// X-weights expressed on the undeflated standardised X: T = Xs * W*.
  Eigen::MatrixXd projection() const {
    const Eigen::MatrixXd pw = x_regression.transpose() * loadings_x;
    return loadings_x * pw.inverse();
  }

  /// Standardised-space regression coefficients, V x C.
  Eigen::MatrixXd coefficients() const { return projection() * y_regression.transpose(); }
};

inline Eigen::MatrixXd dense_counts(const DocumentTermMatrix& dtm) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dtm.n_docs()), static_cast<Eigen::Index>(dtm.n_terms()));
  for (std::size_t d = 0; d < dtm.n_docs(); ++d) {
    for (const auto& [w, c] : dtm.rows[d]) x(static_cast<Eigen::Index>(d), w) = static_cast<double>(c);
  }
  return x;
}

namespace detail {

/// Column means and sample standard deviations; zero-variance columns get
/// scale 1 so they standardise to all zeros.
inline void column_moments(const Eigen::MatrixXd& x, Eigen::VectorXd& mean, Eigen::VectorXd& scale) {
  const auto n = static_cast<double>(x.rows());
  mean = x.colwise().mean().transpose();
  scale.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double ss = (x.col(j).array() - mean(j)).square().sum();
    const double sd = n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    scale(j) = sd > 0.0 ? sd : 1.0;
  }
}

inline Eigen::MatrixXd standardise(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean, const Eigen::VectorXd& scale) {
  return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

/// Keeps the `keep` largest-magnitude entries (ties to the lower index).
inline Eigen::VectorXd truncate(const Eigen::VectorXd& u, int keep) {
  if (keep >= u.size()) return u;
  const Eigen::VectorXd mag = u.cwiseAbs();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(u.size());
  for (auto i : top_m_indices(std::span<const double>(mag.data(), static_cast<std::size_t>(mag.size())),
                              static_cast<std::size_t>(keep))) {
    out(static_cast<Eigen::Index>(i)) = u(static_cast<Eigen::Index>(i));
  }
  return out;
}

inline Eigen::Index largest_magnitude(const Eigen::VectorXd& u) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < u.size(); ++i) {
    if (std::abs(u(i)) > std::abs(u(best))) best = i;
  }
  return best;
}

}  // namespace detail

/// Fits sPLS-DA on an explicit class list. Every class must have at least one
/// member. Components whose X-score vanishes end the fit early.
inline SplsdaModel fit_splsda(const Eigen::MatrixXd& x, const std::vector<int>& y, const std::vector<int>& classes,
                              const SplsdaConfig& config) {
  config.validate();
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw InputError("fit_splsda: label count differs from row count");
  if (classes.empty()) throw InputError("fit_splsda: no classes");
  if (config.keep_x > x.cols()) {
    throw InputError("keep_x (" + std::to_string(config.keep_x) + ") exceeds the vocabulary size (" +
                     std::to_string(x.cols()) + ")");
  }
  if (x.rows() < static_cast<Eigen::Index>(classes.size())) throw InputError("fit_splsda: fewer rows than classes");

  const auto d = x.rows();
  const auto c = static_cast<Eigen::Index>(classes.size());
  Eigen::MatrixXd y_dummy = Eigen::MatrixXd::Zero(d, c);
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto it = std::find(classes.begin(), classes.end(), y[static_cast<std::size_t>(i)]);
    if (it == classes.end()) throw InputError("fit_splsda: label outside the class list");
    y_dummy(i, it - classes.begin()) = 1.0;
  }
  for (Eigen::Index k = 0; k < c; ++k) {
    if (y_dummy.col(k).sum() == 0.0) {
      throw InputError("fit_splsda: class " + std::to_string(classes[static_cast<std::size_t>(k)]) + " has no members");
    }
  }

  SplsdaModel m;
  m.classes = classes;
  detail::column_moments(x, m.x_mean, m.x_scale);
  detail::column_moments(y_dummy, m.y_mean, m.y_scale);
  Eigen::MatrixXd xh = detail::standardise(x, m.x_mean, m.x_scale);
  Eigen::MatrixXd yh = detail::standardise(y_dummy, m.y_mean, m.y_scale);

  std::vector<Eigen::VectorXd> us, vs, ps, cs, ts;
  for (int h = 0; h < config.n_comp; ++h) {
    const Eigen::MatrixXd cross = xh.transpose() * yh;
    if (cross.norm() == 0.0) break;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd v = svd.matrixV().col(0);
    Eigen::VectorXd u = detail::truncate(cross * v, config.keep_x);
    if (u.norm() == 0.0) break;
    u.normalize();
    int it = 0;
    while (it < config.max_iterations) {
      ++it;
      v = cross.transpose() * u;
      if (v.norm() == 0.0) break;
      v.normalize();
      Eigen::VectorXd next = detail::truncate(cross * v, config.keep_x);
      if (next.norm() == 0.0) break;
      next.normalize();
      const double change = (next - u).norm();
      u = std::move(next);
      if (change < config.tolerance) break;
    }
    v = cross.transpose() * u;
    if (v.norm() > 0.0) v.normalize();
    if (u(detail::largest_magnitude(u)) < 0.0) {
      u = -u;
      v = -v;
    }
    const Eigen::VectorXd t = xh * u;
    const double tt = t.squaredNorm();
    if (tt == 0.0) break;
    const Eigen::VectorXd p = xh.transpose() * t / tt;
    const Eigen::VectorXd cy = yh.transpose() * t / tt;
    xh -= t * p.transpose();
    yh -= t * cy.transpose();
    us.push_back(u);
    vs.push_back(v);
    ps.push_back(p);
    cs.push_back(cy);
    ts.push_back(t);
    m.iterations.push_back(it);
  }
  if (us.empty()) throw NumericalError("fit_splsda: X carries no covariance with the class indicators");

  const auto h = static_cast<Eigen::Index>(us.size());
  m.loadings_x.resize(x.cols(), h);
  m.loadings_y.resize(c, h);
  m.x_regression.resize(x.cols(), h);
  m.y_regression.resize(c, h);
  m.scores.resize(d, h);
  for (Eigen::Index j = 0; j < h; ++j) {
    const auto s = static_cast<std::size_t>(j);
    m.loadings_x.col(j) = us[s];
    m.loadings_y.col(j) = vs[s];
    m.x_regression.col(j) = ps[s];
    m.y_regression.col(j) = cs[s];
    m.scores.col(j) = ts[s];
  }
  return m;
}

/// Fits with the classes present in `y` (ascending).
inline SplsdaModel fit_splsda(const Eigen::MatrixXd& x, const std::vector<int>& y, const SplsdaConfig& config) {
  std::set<int> present(y.begin(), y.end());
  return fit_splsda(x, y, std::vector<int>(present.begin(), present.end()), config);
}

/// Predicted class indicators on the original (unstandardised) Y scale.
inline Eigen::MatrixXd predict_indicators(const SplsdaModel& model, const Eigen::MatrixXd& x_new) {
  if (x_new.cols() != model.x_mean.size()) {
    throw InputError("predict: vocabulary has " + std::to_string(x_new.cols()) + " columns, model expects " +
                     std::to_string(model.x_mean.size()));
  }
  const Eigen::MatrixXd ys = detail::standardise(x_new, model.x_mean, model.x_scale) * model.coefficients();
  return (ys.array().rowwise() * model.y_scale.transpose().array()).rowwise() + model.y_mean.transpose().array();
}

/// Class with the largest predicted indicator; ties go to the earlier class.
inline std::vector<int> predict(const SplsdaModel& model, const Eigen::MatrixXd& x_new) {
  const Eigen::MatrixXd yhat = predict_indicators(model, x_new);
  std::vector<int> out(static_cast<std::size_t>(yhat.rows()));
  for (Eigen::Index i = 0; i < yhat.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = model.classes[static_cast<std::size_t>(top_two(yhat.row(i)).first)];
  }
  return out;
}

/// Mean recall over the classes present in `truth`.
inline double balanced_accuracy(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.size() != predicted.size() || truth.empty()) throw InputError("balanced_accuracy: size mismatch or empty");
  std::map<int, std::pair<std::size_t, std::size_t>> hits;  // class -> (correct, total)
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto& h = hits[truth[i]];
    h.first += truth[i] == predicted[i];
    ++h.second;
  }
  double sum = 0.0;
  for (const auto& [_, h] : hits) sum += static_cast<double>(h.first) / static_cast<double>(h.second);
  return sum / static_cast<double>(hits.size());
}

inline double accuracy(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.size() != predicted.size() || truth.empty()) throw InputError("accuracy: size mismatch or empty");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) ok += truth[i] == predicted[i];
  return static_cast<double>(ok) / static_cast<double>(truth.size());
}

/// Fold index per sample. Each class is shuffled and dealt round-robin, the
/// dealing position carrying over between classes so fold sizes stay
/// balanced. A class smaller than `folds` lands in distinct folds.
inline std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, Rng& rng) {
  if (folds < 2) throw InputError("stratified_folds: need at least 2 folds");
  std::map<int, std::vector<int>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(static_cast<int>(i));
  std::vector<int> fold(labels.size(), 0);
  int next = 0;
  for (auto& [_, idx] : members) {
    rng.shuffle(idx);
    for (int i : idx) {
      fold[static_cast<std::size_t>(i)] = next;
      next = (next + 1) % folds;
    }
  }
  return fold;
}

struct ProbeRow {
  int topic = 0;
  double acc = 0.0, bacc = 0.0, acc0 = 0.0, bacc0 = 0.0;
  double acc_se = 0.0, bacc_se = 0.0;    // over CV repeats
  double acc0_se = 0.0, bacc0_se = 0.0;  // of the baseline mean, over draws
  double acc0_sd = 0.0, bacc0_sd = 0.0;  // spread of a single baseline draw
  std::size_t positives = 0;
};

struct ProbeReport {
  std::vector<ProbeRow> rows;  // topics with enough members, ascending
  std::vector<int> skipped_topics;
  double acc = 0.0, bacc = 0.0, acc0 = 0.0, bacc0 = 0.0;  // means over rows
};

namespace detail {

inline void mean_and_se(const std::vector<double>& v, double& mean, double& se) {
  const auto n = static_cast<double>(v.size());
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
}

inline Eigen::MatrixXd select_rows(const Eigen::MatrixXd& x, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

/// Out-of-fold predictions for one repeat: every sample is predicted once by
/// the model trained on the other folds.
inline std::vector<int> cross_validated_predictions(const Eigen::MatrixXd& x, const std::vector<int>& y,
                                                    const std::vector<int>& fold, const SplsdaConfig& config) {
  std::vector<int> pred(y.size(), 0);
  for (int f = 0; f < config.cv_folds; ++f) {
    std::vector<int> train, test;
    std::vector<int> train_y;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (fold[i] == f) {
        test.push_back(static_cast<int>(i));
      } else {
        train.push_back(static_cast<int>(i));
        train_y.push_back(y[i]);
      }
    }
    if (test.empty()) continue;
    const auto model = fit_splsda(select_rows(x, train), train_y, config);
    const auto p = predict(model, select_rows(x, test));
    for (std::size_t i = 0; i < test.size(); ++i) pred[static_cast<std::size_t>(test[i])] = p[i];
  }
  return pred;
}

}  // namespace detail

/// One-versus-rest probe over topics 0..k-1 of `labels`. Each repeat deals
/// fresh stratified folds; accuracy and balanced accuracy are computed on the
/// pooled out-of-fold predictions of a repeat and averaged over repeats. The
/// baseline predicts a random permutation of the true labels.
inline ProbeReport run_ovr_probe(const Eigen::MatrixXd& x, const std::vector<int>& labels, int k,
                                 const SplsdaConfig& config) {
  config.validate();
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw InputError("run_ovr_probe: label count differs");
  if (config.keep_x > x.cols()) {
    throw InputError("keep_x (" + std::to_string(config.keep_x) + ") exceeds the vocabulary size (" +
                     std::to_string(x.cols()) + ")");
  }
  ProbeReport report;
  for (int topic = 0; topic < k; ++topic) {
    std::vector<int> y(labels.size());
    std::size_t pos = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      y[i] = labels[i] == topic ? 1 : 0;
      pos += static_cast<std::size_t>(y[i]);
    }
    if (pos < 2 || labels.size() - pos < 2) {
      spdlog::warn("probe: topic {} has {} of {} documents; a class needs at least 2 for cross-validation, skipped",
                   topic + 1, pos, labels.size());
      report.skipped_topics.push_back(topic);
      continue;
    }
    ProbeRow row;
    row.topic = topic;
    row.positives = pos;

    std::vector<double> accs, baccs;
    for (int r = 0; r < config.cv_repeats; ++r) {
      Rng rng{config.cv_seed, static_cast<std::uint64_t>(topic) * 1000003u + static_cast<std::uint64_t>(r)};
      const auto fold = stratified_folds(y, config.cv_folds, rng);
      const auto pred = detail::cross_validated_predictions(x, y, fold, config);
      accs.push_back(accuracy(y, pred));
      baccs.push_back(balanced_accuracy(y, pred));
    }
    detail::mean_and_se(accs, row.acc, row.acc_se);
    detail::mean_and_se(baccs, row.bacc, row.bacc_se);

    std::vector<double> acc0, bacc0;
    Rng rng{config.cv_seed ^ 0x5eedba5e11ae5ULL, static_cast<std::uint64_t>(topic)};
    std::vector<int> shuffled = y;
    for (int b = 0; b < config.baseline_permutations; ++b) {
      rng.shuffle(shuffled);
      acc0.push_back(accuracy(y, shuffled));
      bacc0.push_back(balanced_accuracy(y, shuffled));
    }
    detail::mean_and_se(acc0, row.acc0, row.acc0_se);
    detail::mean_and_se(bacc0, row.bacc0, row.bacc0_se);
    const double draws = std::sqrt(static_cast<double>(config.baseline_permutations));
    row.acc0_sd = row.acc0_se * draws;
    row.bacc0_sd = row.bacc0_se * draws;
    report.rows.push_back(row);
  }
  if (report.rows.empty()) throw EmptyResultError("probe: no topic has enough documents on both sides");
  for (const auto& r : report.rows) {
    report.acc += r.acc;
    report.bacc += r.bacc;
    report.acc0 += r.acc0;
    report.bacc0 += r.bacc0;
  }
  const auto n = static_cast<double>(report.rows.size());
  report.acc /= n;
  report.bacc /= n;
  report.acc0 /= n;
  report.bacc0 /= n;
  return report;
}

inline ProbeReport run_ovr_probe(const DocumentTermMatrix& dtm, const std::vector<int>& dominant, int k,
                                 const SplsdaConfig& config) {
  return run_ovr_probe(dense_counts(dtm), dominant, k, config);
}

// ---------------------------------------------------------------------------
// Exclusivity dictionary

/// E(t,k): share of the corpus count of term t that falls in blocks whose
/// dominant topic is k. V x K; rows of terms with zero count are zero.
inline Eigen::MatrixXd exclusivity(const DocumentTermMatrix& dtm, const std::vector<int>& dominant, int k) {
  if (dominant.size() != dtm.n_docs()) throw InputError("exclusivity: one dominant topic per block is required");
  std::vector<std::vector<std::int64_t>> f(dtm.n_terms(), std::vector<std::int64_t>(static_cast<std::size_t>(k), 0));
  for (std::size_t d = 0; d < dtm.n_docs(); ++d) {
    if (dominant[d] < 0 || dominant[d] >= k) throw InputError("exclusivity: dominant topic out of range");
    for (const auto& [w, c] : dtm.rows[d]) f[w][static_cast<std::size_t>(dominant[d])] += c;
  }
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dtm.n_terms()), k);
  for (std::size_t w = 0; w < dtm.n_terms(); ++w) {
    std::int64_t total = 0;
    for (auto c : f[w]) total += c;
    if (total == 0) continue;
    for (int t = 0; t < k; ++t) {
      e(static_cast<Eigen::Index>(w), t) = static_cast<double>(f[w][static_cast<std::size_t>(t)]) / static_cast<double>(total);
    }
  }
  return e;
}

enum class TermClass { CoreExclusive, Shared };

inline std::string to_string(TermClass c) { return c == TermClass::CoreExclusive ? "core_exclusive" : "shared"; }

struct TermEntry {
  std::size_t term = 0;
  std::string lemma;
  int topic = 0;
  double exclusivity = 0.0;
  double mean_abs_loading = 0.0;
  double weighted = 0.0;
  TermClass classification = TermClass::Shared;
  int selection_frequency = 0;  // fold fits selecting the term
  bool novel = false;
  bool porous = false;
};

struct TermDictionary {
  std::vector<std::vector<TermEntry>> topics;  // per topic: core terms by W, then shared terms by W
  Eigen::MatrixXd exclusivity;                 // V x K
  double lambda = 0.6;
  int fold_fits = 0;

  std::vector<std::string> core_lemmas(int topic) const {
    std::vector<std::string> out;
    for (const auto& e : topics[static_cast<std::size_t>(topic)]) {
      if (e.classification == TermClass::CoreExclusive) out.push_back(e.lemma);
    }
    return out;
  }
};

namespace detail {

/// Mean |loading| over the components where a term is nonzero (0 if none).
inline Eigen::VectorXd mean_abs_nonzero(const Eigen::MatrixXd& loadings) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(loadings.rows());
  for (Eigen::Index w = 0; w < loadings.rows(); ++w) {
    double sum = 0.0;
    int n = 0;
    for (Eigen::Index h = 0; h < loadings.cols(); ++h) {
      if (loadings(w, h) != 0.0) {
        sum += std::abs(loadings(w, h));
        ++n;
      }
    }
    if (n) out(w) = sum / n;
  }
  return out;
}

inline bool entry_before(const TermEntry& a, const TermEntry& b) {
  if (a.weighted != b.weighted) return a.weighted > b.weighted;
  if (a.selection_frequency != b.selection_frequency) return a.selection_frequency > b.selection_frequency;
  if (a.mean_abs_loading != b.mean_abs_loading) return a.mean_abs_loading > b.mean_abs_loading;
  return a.lemma < b.lemma;
}

}  // namespace detail

/// Multiclass sPLS-DA on the dominant-topic labels, refitted on the full data
/// and on every training split of the repeated stratified CV. Candidate terms
/// are those with a nonzero loading in any of these fits. Loadings are
/// averaged over the fold fits that selected the term (the full fit stands in
/// for terms only it selects).
inline TermDictionary consolidate_lexicon(const DocumentTermMatrix& dtm, const std::vector<int>& dominant, int k,
                                          const SplsdaConfig& config) {
  config.validate();
  TermDictionary dict;
  dict.lambda = config.lambda_exclusive;
  dict.exclusivity = exclusivity(dtm, dominant, k);
  dict.topics.assign(static_cast<std::size_t>(k), {});

  const Eigen::MatrixXd x = dense_counts(dtm);
  const auto v = static_cast<Eigen::Index>(dtm.n_terms());
  const auto full = fit_splsda(x, dominant, config);
  const Eigen::VectorXd full_loading = detail::mean_abs_nonzero(full.loadings_x);

  Eigen::VectorXd loading_sum = Eigen::VectorXd::Zero(v);
  std::vector<int> selected(static_cast<std::size_t>(v), 0);
  for (int r = 0; r < config.cv_repeats; ++r) {
    Rng rng{config.cv_seed, 0xC0FFEEULL + static_cast<std::uint64_t>(r)};
    const auto fold = stratified_folds(dominant, config.cv_folds, rng);
    for (int f = 0; f < config.cv_folds; ++f) {
      std::vector<int> train, train_y;
      for (std::size_t i = 0; i < dominant.size(); ++i) {
        if (fold[i] != f) {
          train.push_back(static_cast<int>(i));
          train_y.push_back(dominant[i]);
        }
      }
      if (train.size() == dominant.size()) continue;
      if (std::set<int>(train_y.begin(), train_y.end()).size() < 2) continue;
      const auto model = fit_splsda(detail::select_rows(x, train), train_y, config);
      const Eigen::VectorXd l = detail::mean_abs_nonzero(model.loadings_x);
      for (Eigen::Index w = 0; w < v; ++w) {
        if (l(w) > 0.0) {
          loading_sum(w) += l(w);
          ++selected[static_cast<std::size_t>(w)];
        }
      }
      ++dict.fold_fits;
    }
  }

  std::vector<std::vector<TermEntry>> core(static_cast<std::size_t>(k)), shared(static_cast<std::size_t>(k));
  for (Eigen::Index w = 0; w < v; ++w) {
    const auto sw = static_cast<std::size_t>(w);
    if (selected[sw] == 0 && full_loading(w) == 0.0) continue;
    TermEntry base;
    base.term = sw;
    base.lemma = dtm.lemmas[sw];
    base.selection_frequency = selected[sw];
    base.mean_abs_loading = selected[sw] ? loading_sum(w) / selected[sw] : full_loading(w);
    bool any_core = false;
    for (int t = 0; t < k; ++t) {
      if (dict.exclusivity(w, t) >= config.lambda_exclusive) {
        TermEntry e = base;
        e.topic = t;
        e.exclusivity = dict.exclusivity(w, t);
        e.weighted = e.exclusivity * e.mean_abs_loading;
        e.classification = TermClass::CoreExclusive;
        core[static_cast<std::size_t>(t)].push_back(e);
        any_core = true;
      }
    }
    if (!any_core) {
      Eigen::Index best = 0;
      for (Eigen::Index t = 1; t < k; ++t) {
        if (dict.exclusivity(w, t) > dict.exclusivity(w, best)) best = t;
      }
      TermEntry e = base;
      e.topic = static_cast<int>(best);
      e.exclusivity = dict.exclusivity(w, best);
      e.weighted = e.exclusivity * e.mean_abs_loading;
      shared[static_cast<std::size_t>(best)].push_back(e);
    }
  }
  for (int t = 0; t < k; ++t) {
    auto& c = core[static_cast<std::size_t>(t)];
    auto& s = shared[static_cast<std::size_t>(t)];
    std::sort(c.begin(), c.end(), detail::entry_before);
    std::sort(s.begin(), s.end(), detail::entry_before);
    if (c.size() > config.max_core_terms) c.resize(config.max_core_terms);
    auto& out = dict.topics[static_cast<std::size_t>(t)];
    out = c;
    out.insert(out.end(), s.begin(), s.end());
  }
  return dict;
}

/// Sets `novel` (in no LDA list) and `porous` (in the LDA list of a topic
/// other than the one the term is listed under).
inline void flag_terms(TermDictionary& dict, const std::vector<std::vector<std::string>>& lda_top) {
  std::vector<std::set<std::string>> sets;
  for (const auto& l : lda_top) sets.emplace_back(l.begin(), l.end());
  for (auto& topic : dict.topics) {
    for (auto& e : topic) {
      e.novel = true;
      e.porous = false;
      for (std::size_t j = 0; j < sets.size(); ++j) {
        if (!sets[j].count(e.lemma)) continue;
        e.novel = false;
        if (static_cast<int>(j) != e.topic) e.porous = true;
      }
    }
  }
}

/// Entry (i,j): Jaccard between the core-exclusive lemmas of topic i and the
/// LDA top list of topic j. Also sets the per-term flags.
inline Eigen::MatrixXd cross_method_overlap(const std::vector<std::vector<std::string>>& lda_top, TermDictionary& dict) {
  const auto k = static_cast<Eigen::Index>(dict.topics.size());
  if (static_cast<Eigen::Index>(lda_top.size()) != k) throw InputError("cross_method_overlap: topic counts differ");
  flag_terms(dict, lda_top);
  // map lemmas to shared integer ids for the set arithmetic
  std::map<std::string, std::size_t> ids;
  auto id_of = [&](const std::string& s) { return ids.emplace(s, ids.size()).first->second; };
  std::vector<std::vector<std::size_t>> core(static_cast<std::size_t>(k)), lda(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) {
    for (const auto& s : dict.core_lemmas(static_cast<int>(i))) core[static_cast<std::size_t>(i)].push_back(id_of(s));
    for (const auto& s : lda_top[static_cast<std::size_t>(i)]) lda[static_cast<std::size_t>(i)].push_back(id_of(s));
  }
  Eigen::MatrixXd out(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) out(i, j) = jaccard(core[static_cast<std::size_t>(i)], lda[static_cast<std::size_t>(j)]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Writers

/// Configured label of a topic, or "T<k>" (1-based).
inline std::string topic_name(const std::vector<std::string>& names, int topic) {
  return static_cast<std::size_t>(topic) < names.size() ? names[static_cast<std::size_t>(topic)] : "T" + std::to_string(topic + 1);
}

inline std::string probe_report_csv(const ProbeReport& r, const std::vector<std::string>& names = {}) {
  using text::format_double;
  CsvWriter w;
  w.row({"topic", "acc", "bacc", "acc0", "bacc0"});
  for (const auto& row : r.rows) {
    w.row({topic_name(names, row.topic), format_double(row.acc), format_double(row.bacc), format_double(row.acc0),
           format_double(row.bacc0)});
  }
  w.row({"overall", format_double(r.acc), format_double(r.bacc), format_double(r.acc0), format_double(r.bacc0)});
  return w.str();
}

inline std::string dictionary_csv(const TermDictionary& dict, const std::vector<std::string>& names = {}) {
  using text::format_double;
  CsvWriter w;
  w.row({"topic", "lemma", "E", "mean_abs_loading", "W", "classification", "novel", "porous"});
  for (const auto& topic : dict.topics) {
    for (const auto& e : topic) {
      w.row({topic_name(names, e.topic), e.lemma, format_double(e.exclusivity), format_double(e.mean_abs_loading),
             format_double(e.weighted), to_string(e.classification), e.novel ? "true" : "false",
             e.porous ? "true" : "false"});
    }
  }
  return w.str();
}

inline std::string overlap_csv(const Eigen::MatrixXd& overlap, const std::vector<std::string>& names = {}) {
  CsvWriter w;
  std::vector<std::string> header{"topic"};
  for (Eigen::Index j = 0; j < overlap.cols(); ++j) header.push_back(topic_name(names, static_cast<int>(j)));
  w.row(header);
  for (Eigen::Index i = 0; i < overlap.rows(); ++i) {
    std::vector<std::string> row{topic_name(names, static_cast<int>(i))};
    for (Eigen::Index j = 0; j < overlap.cols(); ++j) row.push_back(text::format_double(overlap(i, j)));
    w.row(row);
  }
  return w.str();
}

}  // namespace versetopics
