#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "versetopics/lda.hpp"

namespace vt = versetopics;
using vt::testing::ScratchDir;

namespace {

vt::DocumentTermMatrix make_dtm(const std::vector<std::map<std::string, std::int64_t>>& rows) {
  std::vector<std::string> ids;
  for (std::size_t d = 0; d < rows.size(); ++d) ids.push_back("C1_B" + std::to_string(d + 1));
  return vt::DocumentTermMatrix::from_cells(ids, rows);
}

vt::DocumentTermMatrix random_dtm(std::uint64_t seed, std::size_t docs, std::size_t vocab, int tokens) {
  vt::Rng rng{seed};
  std::vector<std::map<std::string, std::int64_t>> rows(docs);
  for (auto& row : rows) {
    for (int i = 0; i < tokens; ++i) {
      char name[16];
      std::snprintf(name, sizeof name, "w%03zu", static_cast<std::size_t>(rng.below(vocab)));
      ++row[name];
    }
  }
  return make_dtm(rows);
}

vt::GibbsConfig quick(int k, std::uint64_t seed = 1) {
  vt::GibbsConfig c;
  c.k = k;
  c.iterations = 60;
  c.burn_in = 20;
  c.thin = 10;
  c.seed = seed;
  return c;
}

/// Dirichlet-multinomial evidence P(w | z) by the sequential (Polya urn)
/// predictive product; no Gamma functions involved.
double polya_evidence(const std::vector<int>& words, const std::vector<int>& topics, int k, int vocab, double beta) {
  std::vector<std::vector<int>> n(static_cast<std::size_t>(k), std::vector<int>(static_cast<std::size_t>(vocab), 0));
  std::vector<int> nk(static_cast<std::size_t>(k), 0);
  double p = 1.0;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto z = static_cast<std::size_t>(topics[i]);
    const auto w = static_cast<std::size_t>(words[i]);
    p *= (n[z][w] + beta) / (nk[z] + vocab * beta);
    ++n[z][w];
    ++nk[z];
  }
  return p;
}

double ll_of(const std::vector<int>& words, const std::vector<int>& topics, int k, int vocab, double beta) {
  std::vector<std::int32_t> tw(static_cast<std::size_t>(k * vocab), 0);
  std::vector<std::int64_t> tt(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < words.size(); ++i) {
    ++tw[static_cast<std::size_t>(words[i] * k + topics[i])];
    ++tt[static_cast<std::size_t>(topics[i])];
  }
  return vt::collapsed_log_likelihood(tw, tt, static_cast<std::size_t>(vocab), beta);
}

}  // namespace

TEST(GibbsConfig, DefaultsMatchPublishedSchedule) {
  const vt::GibbsConfig c;
  EXPECT_EQ(c.k, 5);
  EXPECT_DOUBLE_EQ(c.alpha, 2.0);
  EXPECT_DOUBLE_EQ(c.beta_prior, 0.15);
  EXPECT_EQ(c.iterations, 4000);
  EXPECT_EQ(c.burn_in, 2000);
  EXPECT_EQ(c.thin, 100);
  int samples = 0;
  for (int s = 1; s <= c.iterations; ++s) samples += c.is_sample_sweep(s);
  EXPECT_EQ(samples, 20);
}

TEST(GibbsConfig, Validation) {
  auto c = quick(2);
  c.burn_in = c.iterations;
  EXPECT_THROW(c.validate(), vt::InputError);
  c = quick(2);
  c.alpha = 0.0;
  EXPECT_THROW(c.validate(), vt::InputError);
  c = quick(2);
  c.thin = 0;
  EXPECT_THROW(c.validate(), vt::InputError);
}

TEST(CollapsedLikelihood, EmptyTopicContributesZero) {
  std::vector<std::int32_t> tw(6, 0);
  std::vector<std::int64_t> tt(2, 0);
  EXPECT_EQ(vt::collapsed_log_likelihood(tw, tt, 3, 0.15), 0.0);
}

TEST(CollapsedLikelihood, SingleWordVocabularyCollapsesToZero) {
  EXPECT_NEAR(ll_of({0}, {0}, 1, 1, 0.15), 0.0, 1e-15);
  EXPECT_NEAR(ll_of({0, 0, 0}, {0, 0, 0}, 1, 1, 0.7), 0.0, 1e-14);
}

TEST(CollapsedLikelihood, MatchesPolyaUrnOnEveryAssignment) {
  // 3 tokens, V = 2, K = 2: all 2^3 assignments
  const std::vector<int> words{0, 1, 0};
  const double beta = 0.15;
  for (int mask = 0; mask < 8; ++mask) {
    const std::vector<int> z{mask & 1, (mask >> 1) & 1, (mask >> 2) & 1};
    const double direct = polya_evidence(words, z, 2, 2, beta);
    EXPECT_NEAR(std::exp(ll_of(words, z, 2, 2, beta)) / direct, 1.0, 1e-12) << mask;
  }
}

TEST(FitLda, RowsAreStochastic) {
  const auto dtm = make_dtm({{{"casa", 3}, {"mare", 1}}});
  const auto run = vt::fit_lda(dtm, quick(2));
  ASSERT_EQ(run.beta.rows(), 2);
  ASSERT_EQ(run.gamma.rows(), 1);
  for (Eigen::Index r = 0; r < run.beta.rows(); ++r) EXPECT_NEAR(run.beta.row(r).sum(), 1.0, 1e-9);
  EXPECT_NEAR(run.gamma.row(0).sum(), 1.0, 1e-9);
  EXPECT_GT(run.beta.minCoeff(), 0.0);
  EXPECT_GT(run.gamma.minCoeff(), 0.0);
}

TEST(FitLda, RejectsMoreTopicsThanTerms) {
  const auto dtm = make_dtm({{{"casa", 3}}});
  EXPECT_THROW(vt::fit_lda(dtm, quick(2)), vt::InputError);
}

TEST(FitLda, RejectsEmptyDocuments) {
  ScratchDir dir;
  const auto dtm = vt::load_long_format(dir.write("d.csv", "block_id,lemma,n\nC1_B1,a,2\nC1_B1,b,1\nC1_B2,a,0\n"));
  ASSERT_EQ(dtm.n_docs(), 2u);
  EXPECT_THROW(vt::fit_lda(dtm, quick(2)), vt::InputError);
}

TEST(FitLda, SameSeedIsBitIdentical) {
  const auto dtm = random_dtm(3, 12, 40, 60);
  const auto a = vt::fit_lda(dtm, quick(3, 99));
  const auto b = vt::fit_lda(dtm, quick(3, 99));
  const auto c = vt::fit_lda(dtm, quick(3, 100));
  EXPECT_TRUE(a.beta == b.beta);
  EXPECT_TRUE(a.gamma == b.gamma);
  EXPECT_EQ(a.log_likelihood, b.log_likelihood);
  EXPECT_FALSE(a.gamma == c.gamma);
}

TEST(FitLda, EnsembleIndependentOfThreadCount) {
  const auto dtm = random_dtm(4, 10, 30, 50);
  const std::vector<std::uint64_t> seeds{5, 6, 7, 8};
  const auto serial = vt::fit_ensemble(dtm, quick(3), seeds, 1);
  const auto parallel = vt::fit_ensemble(dtm, quick(3), seeds, 3);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    EXPECT_EQ(serial[i].seed, seeds[i]);
    EXPECT_TRUE(serial[i].beta == parallel[i].beta);
    EXPECT_TRUE(serial[i].gamma == parallel[i].gamma);
  }
}

TEST(GibbsSampler, CountsConservedEverySweep) {
  const auto dtm = random_dtm(8, 9, 25, 40);
  vt::GibbsSampler sampler{dtm, quick(4, 3)};
  ASSERT_TRUE(sampler.counts_consistent());
  for (int s = 0; s < 30; ++s) {
    sampler.sweep();
    ASSERT_TRUE(sampler.counts_consistent()) << "sweep " << s;
  }
  EXPECT_EQ(static_cast<std::int64_t>(sampler.assignments().size()), dtm.total());
}

TEST(GibbsSampler, LikelihoodAgreesWithPolyaUrnOnLiveState) {
  const auto dtm = random_dtm(9, 2, 3, 4);
  vt::GibbsSampler sampler{dtm, quick(2, 17)};
  sampler.sweep();
  std::vector<int> words;
  for (std::size_t d = 0; d < dtm.n_docs(); ++d) {
    for (const auto& [w, n] : dtm.rows[d]) words.insert(words.end(), static_cast<std::size_t>(n), static_cast<int>(w));
  }
  const std::vector<int> topics(sampler.assignments().begin(), sampler.assignments().end());
  const double direct = polya_evidence(words, topics, 2, static_cast<int>(dtm.n_terms()), 0.15);
  EXPECT_NEAR(std::exp(sampler.log_likelihood()) / direct, 1.0, 1e-10);
}

TEST(FitLda, SingleTopicGivesSmoothedFrequencies) {
  const auto dtm = random_dtm(10, 6, 20, 30);
  auto cfg = quick(1);
  const auto run = vt::fit_lda(dtm, cfg);
  EXPECT_TRUE((run.gamma.array() == 1.0).all());
  const auto totals = dtm.column_totals();
  const double denom = static_cast<double>(dtm.total()) + static_cast<double>(dtm.n_terms()) * cfg.beta_prior;
  for (std::size_t w = 0; w < dtm.n_terms(); ++w) {
    EXPECT_NEAR(run.beta(0, static_cast<Eigen::Index>(w)), (static_cast<double>(totals[w]) + cfg.beta_prior) / denom,
                1e-12);
  }
}

TEST(FitLda, SeparatesDisjointVocabularies) {
  // two blocks of documents over disjoint word sets
  std::vector<std::map<std::string, std::int64_t>> rows(10);
  for (std::size_t d = 0; d < rows.size(); ++d) {
    for (int w = 0; w < 6; ++w) rows[d][(d < 5 ? "a" : "b") + std::to_string(w)] = 8;
  }
  auto cfg = quick(2, 4);
  cfg.alpha = 0.1;
  cfg.iterations = 200;
  cfg.burn_in = 100;
  const auto run = vt::fit_lda(make_dtm(rows), cfg);
  const int first = run.gamma(0, 0) > 0.5 ? 0 : 1;
  for (Eigen::Index d = 0; d < 10; ++d) EXPECT_GT(run.gamma(d, d < 5 ? first : 1 - first), 0.9) << d;
}

TEST(RunFiles, RoundTripIsExact) {
  ScratchDir dir;
  const auto dtm = random_dtm(11, 5, 12, 20);
  const auto run = vt::fit_lda(dtm, quick(3, 8));
  vt::save_run(dir / "run", run);
  const auto back = vt::load_run(dir / "run");
  EXPECT_TRUE(back.beta == run.beta);
  EXPECT_TRUE(back.gamma == run.gamma);
  EXPECT_EQ(back.log_likelihood, run.log_likelihood);
  EXPECT_EQ(back.seed, 8u);
  EXPECT_EQ(back.lemmas, dtm.lemmas);
  EXPECT_EQ(back.block_ids, dtm.block_ids);
  EXPECT_EQ(back.config.iterations, 60);
  EXPECT_NE(vt::testing::slurp(dir / "run" / "meta.json").find(vt::Rng::kName), std::string::npos);
}
