#include <map>
#include <set>

#include <gtest/gtest.h>

#include "versetopics/splsda.hpp"

namespace vt = versetopics;

namespace {

vt::SplsdaConfig small_config() {
  vt::SplsdaConfig c;
  c.keep_x = 10;
  c.baseline_permutations = 200;
  c.cv_seed = 11;
  return c;
}

// Classes with disjoint private vocabularies plus common filler words.
struct Separable {
  vt::DocumentTermMatrix dtm;
  std::vector<int> labels;
};

Separable separable_corpus(std::uint64_t seed, int classes = 5, int per_class = 7, int private_words = 12) {
  vt::Rng rng{seed};
  Separable s;
  std::vector<std::map<std::string, std::int64_t>> rows;
  std::vector<std::string> ids;
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      std::map<std::string, std::int64_t> row;
      for (int t = 0; t < 40; ++t) {
        char name[32];
        if (rng.uniform() < 0.6) {
          std::snprintf(name, sizeof name, "c%d_w%02d", c, static_cast<int>(rng.below(static_cast<std::uint64_t>(private_words))));
        } else {
          std::snprintf(name, sizeof name, "fill%02d", static_cast<int>(rng.below(20)));
        }
        ++row[name];
      }
      rows.push_back(row);
      ids.push_back("C1_B" + std::to_string(ids.size() + 1));
      s.labels.push_back(c);
    }
  }
  s.dtm = vt::DocumentTermMatrix::from_cells(ids, rows);
  return s;
}

Eigen::MatrixXd random_matrix(vt::Rng& rng, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::floor(rng.uniform() * 6.0);
  return m;
}

// Independent dense PLS: dominant eigenvector of M M^T, regression deflation.
Eigen::MatrixXd dense_pls_loadings(const Eigen::MatrixXd& x, const std::vector<int>& y, int classes, int comps) {
  const auto n = x.rows();
  Eigen::MatrixXd yd = Eigen::MatrixXd::Zero(n, classes);
  for (Eigen::Index i = 0; i < n; ++i) yd(i, y[static_cast<std::size_t>(i)]) = 1.0;
  auto scale = [](Eigen::MatrixXd m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double mu = m.col(j).mean();
      m.col(j).array() -= mu;
      const double sd = std::sqrt(m.col(j).squaredNorm() / static_cast<double>(m.rows() - 1));
      if (sd > 0) m.col(j) /= sd;
    }
    return m;
  };
  Eigen::MatrixXd xs = scale(x), ys = scale(yd);
  Eigen::MatrixXd out(x.cols(), comps);
  for (int h = 0; h < comps; ++h) {
    const Eigen::MatrixXd m = xs.transpose() * ys;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m * m.transpose());
    Eigen::VectorXd u = es.eigenvectors().col(es.eigenvectors().cols() - 1);
    Eigen::Index big;
    u.cwiseAbs().maxCoeff(&big);
    if (u(big) < 0) u = -u;
    out.col(h) = u;
    const Eigen::VectorXd t = xs * u;
    xs -= t * (xs.transpose() * t / t.squaredNorm()).transpose();
    ys -= t * (ys.transpose() * t / t.squaredNorm()).transpose();
  }
  return out;
}

}  // namespace

TEST(SplsdaConfig, Defaults) {
  const vt::SplsdaConfig c;
  EXPECT_EQ(c.n_comp, 2);
  EXPECT_EQ(c.keep_x, 30);
  EXPECT_EQ(c.cv_folds, 5);
  EXPECT_EQ(c.cv_repeats, 5);
  EXPECT_EQ(c.baseline_permutations, 1000);
  EXPECT_DOUBLE_EQ(c.lambda_exclusive, 0.6);
  auto bad = c;
  bad.lambda_exclusive = 0.0;
  EXPECT_THROW(bad.validate(), vt::InputError);
  bad = c;
  bad.cv_folds = 1;
  EXPECT_THROW(bad.validate(), vt::InputError);
}

TEST(FitSplsda, SingleSeparatingColumnIsSelected) {
  vt::Rng rng{1};
  Eigen::MatrixXd x = random_matrix(rng, 12, 6);
  std::vector<int> y;
  for (int i = 0; i < 12; ++i) {
    y.push_back(i % 2);
    x(i, 3) = i % 2;
  }
  auto cfg = small_config();
  cfg.keep_x = 1;
  const auto m = vt::fit_splsda(x, y, cfg);
  EXPECT_DOUBLE_EQ(m.loadings_x(3, 0), 1.0);
  EXPECT_EQ((m.loadings_x.col(0).array() != 0.0).count(), 1);
}

TEST(FitSplsda, SparsityBoundAndUnitNorm) {
  vt::Rng rng{2};
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::MatrixXd x = random_matrix(rng, 20, 40);
    std::vector<int> y;
    for (int i = 0; i < 20; ++i) y.push_back(static_cast<int>(rng.below(3)));
    y[0] = 0, y[1] = 1, y[2] = 2;
    auto cfg = small_config();
    cfg.keep_x = 1 + static_cast<int>(rng.below(40));
    const auto m = vt::fit_splsda(x, y, cfg);
    for (Eigen::Index h = 0; h < m.loadings_x.cols(); ++h) {
      EXPECT_LE((m.loadings_x.col(h).array() != 0.0).count(), cfg.keep_x);
      EXPECT_NEAR(m.loadings_x.col(h).norm(), 1.0, 1e-12);
      Eigen::Index big;
      m.loadings_x.col(h).cwiseAbs().maxCoeff(&big);
      EXPECT_GT(m.loadings_x(big, h), 0.0);
    }
  }
}

TEST(FitSplsda, FullKeepMatchesDensePls) {
  vt::Rng rng{3};
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::MatrixXd x = random_matrix(rng, 18, 25);
    std::vector<int> y;
    for (int i = 0; i < 18; ++i) y.push_back(i % 3);
    auto cfg = small_config();
    cfg.keep_x = 25;
    const auto m = vt::fit_splsda(x, y, cfg);
    const auto oracle = dense_pls_loadings(x, y, 3, 2);
    EXPECT_LT((m.loadings_x - oracle).cwiseAbs().maxCoeff(), 1e-8) << rep;
  }
}

TEST(FitSplsda, ScoresAreReconstructible) {
  vt::Rng rng{4};
  const Eigen::MatrixXd x = random_matrix(rng, 15, 30);
  std::vector<int> y;
  for (int i = 0; i < 15; ++i) y.push_back(i % 2);
  const auto m = vt::fit_splsda(x, y, small_config());
  const Eigen::MatrixXd xs = vt::detail::standardise(x, m.x_mean, m.x_scale);
  EXPECT_LT((xs * m.projection() - m.scores).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(FitSplsda, ZeroVarianceColumnNeverSelected) {
  vt::Rng rng{5};
  Eigen::MatrixXd x = random_matrix(rng, 10, 8);
  x.col(2).setConstant(4.0);
  std::vector<int> y{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
  auto cfg = small_config();
  cfg.keep_x = 8;
  const auto m = vt::fit_splsda(x, y, cfg);
  EXPECT_EQ(m.x_scale(2), 1.0);
  EXPECT_EQ(m.loadings_x.row(2).cwiseAbs().maxCoeff(), 0.0);
}

TEST(FitSplsda, Errors) {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Identity(4, 4);
  auto cfg = small_config();
  cfg.keep_x = 5;
  EXPECT_THROW(vt::fit_splsda(x, {0, 1, 0, 1}, cfg), vt::InputError);
  cfg.keep_x = 2;
  EXPECT_THROW(vt::fit_splsda(x, {0, 1, 0, 1}, {0, 1, 2}, cfg), vt::InputError);
  EXPECT_THROW(vt::fit_splsda(x, {0, 1, 0}, cfg), vt::InputError);
}

TEST(Predict, ResubstitutionAndDuplicates) {
  const auto s = separable_corpus(6);
  const Eigen::MatrixXd x = vt::dense_counts(s.dtm);
  auto cfg = small_config();
  cfg.n_comp = 4;
  const auto m = vt::fit_splsda(x, s.labels, cfg);
  EXPECT_EQ(vt::predict(m, x), s.labels);
  Eigen::MatrixXd dup(2, x.cols());
  dup.row(0) = x.row(9);
  dup.row(1) = x.row(9);
  const auto p = vt::predict(m, dup);
  EXPECT_EQ(p[0], s.labels[9]);
  EXPECT_EQ(p[1], s.labels[9]);
}

TEST(Predict, AllZeroDocumentFollowsIntercept) {
  const auto s = separable_corpus(7, 3);
  const Eigen::MatrixXd x = vt::dense_counts(s.dtm);
  const auto m = vt::fit_splsda(x, s.labels, small_config());
  const Eigen::MatrixXd b = m.coefficients();
  // hand trace: yhat_c = mean_c + scale_c * sum_w (-mean_w / scale_w) * B(w,c)
  int best = -1;
  double best_value = -1e300;
  for (Eigen::Index c = 0; c < b.cols(); ++c) {
    double acc = 0.0;
    for (Eigen::Index w = 0; w < b.rows(); ++w) acc += (-m.x_mean(w) / m.x_scale(w)) * b(w, c);
    const double value = m.y_mean(c) + m.y_scale(c) * acc;
    if (value > best_value) {
      best_value = value;
      best = static_cast<int>(c);
    }
  }
  const auto p = vt::predict(m, Eigen::MatrixXd::Zero(1, x.cols()));
  EXPECT_EQ(p[0], m.classes[static_cast<std::size_t>(best)]);
}

TEST(Predict, VocabularyMismatch) {
  const auto s = separable_corpus(8, 2);
  const auto m = vt::fit_splsda(vt::dense_counts(s.dtm), s.labels, small_config());
  EXPECT_THROW(vt::predict(m, Eigen::MatrixXd::Zero(1, 3)), vt::InputError);
}

TEST(BalancedAccuracy, MajorityClassifierIsOneHalf) {
  for (int pos = 1; pos < 20; ++pos) {
    std::vector<int> truth(20, 0), pred(20, 0);
    for (int i = 0; i < pos; ++i) truth[static_cast<std::size_t>(i)] = 1;
    const int majority = pos > 10 ? 1 : 0;
    std::fill(pred.begin(), pred.end(), majority);
    EXPECT_EQ(vt::balanced_accuracy(truth, pred), 0.5);
  }
  EXPECT_EQ(vt::accuracy({1, 0, 0, 0}, {0, 0, 0, 0}), 0.75);
}

TEST(StratifiedFolds, BalancedAndDeterministic) {
  std::vector<int> labels;
  for (int i = 0; i < 37; ++i) labels.push_back(i % 7 == 0 ? 1 : (i % 3 == 0 ? 2 : 0));
  vt::Rng a{9}, b{9};
  const auto fa = vt::stratified_folds(labels, 5, a);
  EXPECT_EQ(fa, vt::stratified_folds(labels, 5, b));
  std::map<int, std::vector<int>> per_class;
  std::vector<int> sizes(5, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& v = per_class[labels[i]];
    v.resize(5, 0);
    ++v[static_cast<std::size_t>(fa[i])];
    ++sizes[static_cast<std::size_t>(fa[i])];
  }
  for (const auto& [_, v] : per_class) EXPECT_LE(*std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end()), 1);
  EXPECT_LE(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()), 1);
}

TEST(OvrProbe, SeparableClassesArePerfect) {
  const auto s = separable_corpus(10);
  const auto report = vt::run_ovr_probe(s.dtm, s.labels, 5, small_config());
  ASSERT_EQ(report.rows.size(), 5u);
  for (const auto& r : report.rows) {
    EXPECT_EQ(r.acc, 1.0);
    EXPECT_EQ(r.bacc, 1.0);
    EXPECT_GE(r.acc0, 0.0);
    EXPECT_LE(r.acc0, 1.0);
  }
  EXPECT_EQ(report.bacc, 1.0);
}

TEST(OvrProbe, SameSeedSameReport) {
  const auto s = separable_corpus(12, 3, 6);
  auto cfg = small_config();
  cfg.keep_x = 3;
  const auto a = vt::run_ovr_probe(s.dtm, s.labels, 3, cfg);
  const auto b = vt::run_ovr_probe(s.dtm, s.labels, 3, cfg);
  EXPECT_EQ(vt::probe_report_csv(a), vt::probe_report_csv(b));
}

TEST(OvrProbe, BaselineNearOneHalfOnBalancedData) {
  std::vector<int> labels;
  for (int i = 0; i < 40; ++i) labels.push_back(i % 2);
  vt::Rng rng{13};
  const Eigen::MatrixXd x = random_matrix(rng, 40, 12);
  auto cfg = small_config();
  cfg.baseline_permutations = 1000;
  cfg.cv_repeats = 1;
  const auto r = vt::run_ovr_probe(x, labels, 2, cfg);
  for (const auto& row : r.rows) EXPECT_NEAR(row.bacc0, 0.5, 0.02);
}

TEST(OvrProbe, TinyClassIsSkipped) {
  const auto s = separable_corpus(14, 3, 6);
  auto labels = s.labels;
  for (auto& l : labels) {
    if (l == 2) l = 1;
  }
  labels[0] = 2;  // a class with one member
  const auto r = vt::run_ovr_probe(s.dtm, labels, 3, small_config());
  EXPECT_EQ(r.skipped_topics, std::vector<int>{2});
  EXPECT_EQ(r.rows.size(), 2u);
}

TEST(Exclusivity, Identities) {
  std::vector<std::map<std::string, std::int64_t>> cells{
      {{"aria", 3}, {"luce", 1}, {"mare", 2}}, {{"aria", 3}}, {{"aria", 1}, {"luce", 1}},
      {{"aria", 1}, {"luce", 1}},              {{"luce", 1}}, {{"mare", 5}, {"luce", 1}}};
  const auto dtm = vt::DocumentTermMatrix::from_cells({"C1_B1", "C1_B2", "C1_B3", "C1_B4", "C1_B5", "C1_B6"}, cells);
  const std::vector<int> dominant{0, 0, 1, 2, 3, 4};
  const auto e = vt::exclusivity(dtm, dominant, 5);
  // aria: (6,1,1,0,0) / 8
  const auto aria = static_cast<Eigen::Index>(*dtm.lemma_index("aria"));
  EXPECT_DOUBLE_EQ(e(aria, 0), 0.75);
  const auto luce = static_cast<Eigen::Index>(*dtm.lemma_index("luce"));
  for (int k = 0; k < 5; ++k) EXPECT_DOUBLE_EQ(e(luce, k), 0.2);
  for (Eigen::Index w = 0; w < e.rows(); ++w) EXPECT_NEAR(e.row(w).sum(), 1.0, 1e-12);
}

TEST(Exclusivity, BoundaryIsCoreExclusive) {
  // "vento": (6,2,2,0,0); "solo": only in topic-1 blocks; "pari": uniform
  std::vector<std::map<std::string, std::int64_t>> cells;
  std::vector<std::string> ids;
  std::vector<int> dominant;
  const int vento[] = {6, 2, 2, 0, 0};
  vt::Rng rng{15};
  for (int k = 0; k < 5; ++k) {
    for (int rep = 0; rep < 4; ++rep) {
      std::map<std::string, std::int64_t> row;
      if (rep == 0 && vento[k]) row["vento"] = vento[k];
      if (k == 1) row["solo"] = 2;
      row["pari"] = rep == 0 ? 3 : 0;
      for (int t = 0; t < 12; ++t) row["k" + std::to_string(k) + "_" + std::to_string(rng.below(6))] += 1;
      cells.push_back(row);
      ids.push_back("C1_B" + std::to_string(ids.size() + 1));
      dominant.push_back(k);
    }
  }
  const auto dtm = vt::DocumentTermMatrix::from_cells(ids, cells);
  auto cfg = small_config();
  cfg.keep_x = static_cast<int>(dtm.n_terms());
  const auto dict = vt::consolidate_lexicon(dtm, dominant, 5, cfg);
  auto find = [&](const std::string& lemma) -> const vt::TermEntry* {
    for (const auto& t : dict.topics) {
      for (const auto& e : t) {
        if (e.lemma == lemma) return &e;
      }
    }
    return nullptr;
  };
  ASSERT_NE(find("vento"), nullptr);
  EXPECT_DOUBLE_EQ(find("vento")->exclusivity, 0.6);
  EXPECT_EQ(find("vento")->classification, vt::TermClass::CoreExclusive);
  EXPECT_EQ(find("vento")->topic, 0);
  ASSERT_NE(find("solo"), nullptr);
  EXPECT_EQ(find("solo")->exclusivity, 1.0);
  EXPECT_EQ(find("solo")->classification, vt::TermClass::CoreExclusive);
  ASSERT_NE(find("pari"), nullptr);
  EXPECT_DOUBLE_EQ(find("pari")->exclusivity, 0.2);
  EXPECT_EQ(find("pari")->classification, vt::TermClass::Shared);
  EXPECT_EQ(dict.fold_fits, 25);
}

TEST(Lexicon, AtMostTwentyCorePerTopicOrderedByWeight) {
  const auto s = separable_corpus(16, 3, 8, 40);
  auto cfg = small_config();
  cfg.keep_x = 60;
  const auto dict = vt::consolidate_lexicon(s.dtm, s.labels, 3, cfg);
  for (int k = 0; k < 3; ++k) {
    std::size_t core = 0;
    double last = 1e300;
    for (const auto& e : dict.topics[static_cast<std::size_t>(k)]) {
      if (e.classification != vt::TermClass::CoreExclusive) continue;
      ++core;
      EXPECT_GE(e.exclusivity, cfg.lambda_exclusive);
      EXPECT_LE(e.weighted, last);
      EXPECT_DOUBLE_EQ(e.weighted, e.exclusivity * e.mean_abs_loading);
      last = e.weighted;
    }
    EXPECT_LE(core, 20u);
    EXPECT_GT(core, 0u);
  }
}

TEST(CrossMethodOverlap, SelfOverlapAndFlags) {
  vt::TermDictionary dict;
  dict.topics.resize(3);
  auto core = [](int topic, const std::string& lemma) {
    vt::TermEntry e;
    e.topic = topic;
    e.lemma = lemma;
    e.classification = vt::TermClass::CoreExclusive;
    return e;
  };
  dict.topics[0] = {core(0, "amore"), core(0, "cuore")};
  dict.topics[1] = {core(1, "selva"), core(1, "fiera")};
  dict.topics[2] = {core(2, "cielo"), core(2, "stella")};
  std::vector<std::vector<std::string>> lda{{"amore", "cuore"}, {"selva", "fiera"}, {"cielo", "stella"}};
  const auto same = vt::cross_method_overlap(lda, dict);
  EXPECT_TRUE(same.isApprox(Eigen::MatrixXd::Identity(3, 3)));

  lda = {{"amore", "cielo"}, {"selva"}, {"stella"}};
  const auto m = vt::cross_method_overlap(lda, dict);
  EXPECT_DOUBLE_EQ(m(2, 0), 1.0 / 3.0);
  const auto& cielo = dict.topics[2][0];
  EXPECT_TRUE(cielo.porous);
  EXPECT_FALSE(cielo.novel);
  EXPECT_TRUE(dict.topics[1][1].novel);  // fiera
  EXPECT_FALSE(dict.topics[2][1].porous);
  EXPECT_NE(vt::dictionary_csv(dict).find("2,fiera,0,0,0,core_exclusive,true,false"), std::string::npos);
}

TEST(Writers, ProbeReportSchema) {
  vt::ProbeReport r;
  r.rows.push_back({0, 1.0, 0.75, 0.5, 0.5});
  r.acc = 1.0;
  r.bacc = 0.75;
  r.acc0 = 0.5;
  r.bacc0 = 0.5;
  EXPECT_EQ(vt::probe_report_csv(r, {"Love"}), "topic,acc,bacc,acc0,bacc0\nLove,1,0.75,0.5,0.5\noverall,1,0.75,0.5,0.5\n");
  EXPECT_EQ(vt::overlap_csv(Eigen::MatrixXd::Identity(2, 2)), "topic,T1,T2\nT1,1,0\nT2,0,1\n");
}
