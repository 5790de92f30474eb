#pragma once

// Latent Dirichlet allocation by collapsed Gibbs sampling with fixed
// symmetric priors.

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "versetopics/corpus.hpp"
#include "versetopics/error.hpp"
#include "versetopics/rng.hpp"
#include "versetopics/table.hpp"

namespace versetopics {

struct GibbsConfig {
  int k = 5;
  double alpha = 2.0;
  double beta_prior = 0.15;
  int iterations = 4000;
  int burn_in = 2000;
  int thin = 100;
  std::uint64_t seed = 1;

  void validate() const {
    if (k < 1) throw InputError("k must be >= 1");
    if (!(alpha > 0.0)) throw InputError("alpha must be positive");
    if (!(beta_prior > 0.0)) throw InputError("beta_prior must be positive");
    if (iterations < 1) throw InputError("iterations must be >= 1");
    if (burn_in < 0 || burn_in >= iterations) throw InputError("burn_in must lie in [0, iterations)");
    if (thin < 1) throw InputError("thin must be >= 1");
  }

  /// Sweeps (1-based) after which a posterior sample is taken.
  bool is_sample_sweep(int sweep) const noexcept { return sweep > burn_in && (sweep - burn_in) % thin == 0; }
};

inline void to_json(nlohmann::json& j, const GibbsConfig& c) {
  j = nlohmann::json{{"k", c.k},           {"alpha", c.alpha}, {"beta_prior", c.beta_prior},
                     {"iterations", c.iterations}, {"burn_in", c.burn_in}, {"thin", c.thin},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, GibbsConfig& c) {
  j.at("k").get_to(c.k);
  j.at("alpha").get_to(c.alpha);
  j.at("beta_prior").get_to(c.beta_prior);
  j.at("iterations").get_to(c.iterations);
  j.at("burn_in").get_to(c.burn_in);
  j.at("thin").get_to(c.thin);
  j.at("seed").get_to(c.seed);
}

/// One chain's posterior summaries.
struct LdaRun {
  Eigen::MatrixXd beta;   // K x V, rows sum to 1
  Eigen::MatrixXd gamma;  // D x K, rows sum to 1
  double log_likelihood = 0.0;
  std::uint64_t seed = 0;
  GibbsConfig config;
  std::vector<std::string> lemmas;
  std::vector<std::string> block_ids;

  int k() const noexcept { return static_cast<int>(beta.rows()); }
};

/// Collapsed log P(w | z) from topic-word counts (word-major: index w*K + k)
/// and topic totals:
///   sum_k [ lgG(V b) - V lgG(b) + sum_w lgG(n_kw + b) - lgG(n_k + V b) ].
/// Empty topics contribute exactly zero.
inline double collapsed_log_likelihood(std::span<const std::int32_t> topic_word, std::span<const std::int64_t> topic_total,
                                       std::size_t vocab, double beta) {
  const std::size_t k = topic_total.size();
  const double v_beta = static_cast<double>(vocab) * beta;
  const double lg_beta = std::lgamma(beta);
  double ll = 0.0;
  for (std::size_t t = 0; t < k; ++t) {
    if (topic_total[t] == 0) continue;
    double topic = std::lgamma(v_beta) - std::lgamma(static_cast<double>(topic_total[t]) + v_beta);
    for (std::size_t w = 0; w < vocab; ++w) {
      const auto n = topic_word[w * k + t];
      if (n > 0) topic += std::lgamma(static_cast<double>(n) + beta) - lg_beta;
    }
    ll += topic;
  }
  return ll;
}

/// Sampler state over a DTM. Tokens are laid out document by document in
/// lemma-column order, and sweeps visit them in that order.
class GibbsSampler {
 public:
  GibbsSampler(const DocumentTermMatrix& dtm, GibbsConfig config) : config_{config}, rng_{config.seed} {
    config_.validate();
    if (dtm.n_docs() == 0 || dtm.n_terms() == 0) throw InputError("empty document-term matrix");
    if (static_cast<std::size_t>(config_.k) > dtm.n_terms()) {
      throw InputError("k = " + std::to_string(config_.k) + " exceeds vocabulary size " +
                       std::to_string(dtm.n_terms()));
    }
    k_ = static_cast<std::size_t>(config_.k);
    vocab_ = dtm.n_terms();
    docs_ = dtm.n_docs();
    doc_offsets_.reserve(docs_ + 1);
    doc_offsets_.push_back(0);
    for (std::size_t d = 0; d < docs_; ++d) {
      if (dtm.rows[d].empty()) throw InputError("document " + dtm.block_ids[d] + " has no tokens");
      for (const auto& [w, n] : dtm.rows[d]) words_.insert(words_.end(), static_cast<std::size_t>(n), w);
      doc_offsets_.push_back(words_.size());
    }
    initialise();
  }

  void sweep() {
    std::vector<double> cumulative(k_);
    const double alpha = config_.alpha;
    const double beta = config_.beta_prior;
    const double v_beta = static_cast<double>(vocab_) * beta;
    for (std::size_t d = 0; d < docs_; ++d) {
      std::int32_t* doc_topic = &n_dk_[d * k_];
      for (std::size_t i = doc_offsets_[d]; i < doc_offsets_[d + 1]; ++i) {
        const std::size_t w = words_[i];
        std::int32_t* word_topic = &n_kw_[w * k_];
        auto z = static_cast<std::size_t>(topics_[i]);
        --doc_topic[z];
        --word_topic[z];
        --n_k_[z];

        double total = 0.0;
        for (std::size_t t = 0; t < k_; ++t) {
          total += (doc_topic[t] + alpha) * (word_topic[t] + beta) / (static_cast<double>(n_k_[t]) + v_beta);
          cumulative[t] = total;
        }
        const double u = rng_.uniform() * total;
        z = 0;
        while (z + 1 < k_ && cumulative[z] <= u) ++z;

        topics_[i] = static_cast<std::int32_t>(z);
        ++doc_topic[z];
        ++word_topic[z];
        ++n_k_[z];
      }
    }
    ++sweeps_;
  }

  /// Runs the full schedule and returns averaged point estimates.
  LdaRun run() {
    Eigen::MatrixXd beta_sum = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k_), static_cast<Eigen::Index>(vocab_));
    Eigen::MatrixXd gamma_sum = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(docs_), static_cast<Eigen::Index>(k_));
    int samples = 0;
    for (int s = 1; s <= config_.iterations; ++s) {
      sweep();
      if (config_.is_sample_sweep(s)) {
        beta_sum += beta_estimate();
        gamma_sum += gamma_estimate();
        ++samples;
      }
    }
    if (samples == 0) {
      // thin longer than the post-burn-in span: the final state is the sample
      beta_sum = beta_estimate();
      gamma_sum = gamma_estimate();
      samples = 1;
    }
    LdaRun out;
    out.beta = beta_sum / samples;
    out.gamma = gamma_sum / samples;
    normalise_rows(out.beta);
    normalise_rows(out.gamma);
    out.log_likelihood = log_likelihood();
    out.seed = config_.seed;
    out.config = config_;
    return out;
  }

  /// Smoothed topic-term estimate (n_kw + b) / (n_k + V b) at the current state.
  Eigen::MatrixXd beta_estimate() const {
    Eigen::MatrixXd b(static_cast<Eigen::Index>(k_), static_cast<Eigen::Index>(vocab_));
    const double v_beta = static_cast<double>(vocab_) * config_.beta_prior;
    for (std::size_t t = 0; t < k_; ++t) {
      const double denom = static_cast<double>(n_k_[t]) + v_beta;
      for (std::size_t w = 0; w < vocab_; ++w) {
        b(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(w)) = (n_kw_[w * k_ + t] + config_.beta_prior) / denom;
      }
    }
    return b;
  }

  /// Smoothed document-topic estimate (n_dk + a) / (n_d + K a).
  Eigen::MatrixXd gamma_estimate() const {
    Eigen::MatrixXd g(static_cast<Eigen::Index>(docs_), static_cast<Eigen::Index>(k_));
    const double k_alpha = static_cast<double>(k_) * config_.alpha;
    for (std::size_t d = 0; d < docs_; ++d) {
      const double denom = static_cast<double>(doc_offsets_[d + 1] - doc_offsets_[d]) + k_alpha;
      for (std::size_t t = 0; t < k_; ++t) {
        g(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(t)) = (n_dk_[d * k_ + t] + config_.alpha) / denom;
      }
    }
    return g;
  }

  double log_likelihood() const { return collapsed_log_likelihood(n_kw_, n_k_, vocab_, config_.beta_prior); }

  /// Count conservation across the three count tables.
  bool counts_consistent() const {
    std::vector<std::int64_t> by_topic(k_, 0);
    for (std::size_t w = 0; w < vocab_; ++w) {
      for (std::size_t t = 0; t < k_; ++t) {
        if (n_kw_[w * k_ + t] < 0) return false;
        by_topic[t] += n_kw_[w * k_ + t];
      }
    }
    std::int64_t total = 0;
    for (std::size_t t = 0; t < k_; ++t) {
      if (by_topic[t] != n_k_[t]) return false;
      total += n_k_[t];
    }
    if (total != static_cast<std::int64_t>(words_.size())) return false;
    for (std::size_t d = 0; d < docs_; ++d) {
      std::int64_t n = 0;
      for (std::size_t t = 0; t < k_; ++t) n += n_dk_[d * k_ + t];
      if (n != static_cast<std::int64_t>(doc_offsets_[d + 1] - doc_offsets_[d])) return false;
    }
    return true;
  }

  const std::vector<std::int32_t>& assignments() const noexcept { return topics_; }
  int sweeps_done() const noexcept { return sweeps_; }

 private:
  void initialise() {
    topics_.assign(words_.size(), 0);
    n_kw_.assign(vocab_ * k_, 0);
    n_dk_.assign(docs_ * k_, 0);
    n_k_.assign(k_, 0);
    for (std::size_t d = 0; d < docs_; ++d) {
      for (std::size_t i = doc_offsets_[d]; i < doc_offsets_[d + 1]; ++i) {
        const auto z = static_cast<std::size_t>(rng_.below(k_));
        topics_[i] = static_cast<std::int32_t>(z);
        ++n_kw_[words_[i] * k_ + z];
        ++n_dk_[d * k_ + z];
        ++n_k_[z];
      }
    }
  }

  static void normalise_rows(Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m.row(r) /= m.row(r).sum();
  }

  GibbsConfig config_;
  Rng rng_;
  std::size_t k_ = 0;
  std::size_t vocab_ = 0;
  std::size_t docs_ = 0;
  std::vector<std::uint32_t> words_;
  std::vector<std::size_t> doc_offsets_;
  std::vector<std::int32_t> topics_;
  std::vector<std::int32_t> n_kw_;  // word-major: w * K + k
  std::vector<std::int32_t> n_dk_;
  std::vector<std::int64_t> n_k_;
  int sweeps_ = 0;
};

inline LdaRun fit_lda(const DocumentTermMatrix& dtm, const GibbsConfig& config) {
  GibbsSampler sampler{dtm, config};
  auto run = sampler.run();
  run.lemmas = dtm.lemmas;
  run.block_ids = dtm.block_ids;
  return run;
}

/// Fits one chain per seed on up to `jobs` threads. Chains share nothing
/// mutable; the result is in seed-list order regardless of scheduling.
inline std::vector<LdaRun> fit_ensemble(const DocumentTermMatrix& dtm, const GibbsConfig& base,
                                        const std::vector<std::uint64_t>& seeds, unsigned jobs = 1) {
  base.validate();
  std::vector<LdaRun> runs(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        GibbsConfig cfg = base;
        cfg.seed = seeds[i];
        runs[i] = fit_lda(dtm, cfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(seeds.size())));
  {
    std::vector<std::jthread> pool;
    for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return runs;
}

// ---------------------------------------------------------------------------
// Run directories: beta.csv, gamma.csv, meta.json

inline std::string matrix_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& header) {
  CsvWriter w;
  w.row(header);
  std::vector<std::string> fields(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) fields[static_cast<std::size_t>(c)] = text::format_double(m(r, c));
    w.row(fields);
  }
  return w.str();
}

inline std::vector<std::string> topic_header(int k) {
  std::vector<std::string> h;
  for (int t = 1; t <= k; ++t) h.push_back(std::to_string(t));
  return h;
}

inline Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path, std::vector<std::string>* header = nullptr) {
  const Table t = read_table(path);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t c = 0; c < t.header.size(); ++c) {
      double v = 0.0;
      if (!text::parse_double(t.rows[r][c], v)) throw InputError(t.where(r) + ": not a number: " + t.rows[r][c]);
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  if (header) *header = t.header;
  return m;
}

inline void save_run(const std::filesystem::path& dir, const LdaRun& run) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "beta.csv", matrix_csv(run.beta, run.lemmas));
  write_text_file(dir / "gamma.csv", matrix_csv(run.gamma, topic_header(run.k())));
  nlohmann::json meta{{"seed", run.seed},
                      {"log_likelihood", run.log_likelihood},
                      {"rng", Rng::kName},
                      {"config", run.config},
                      {"block_ids", run.block_ids}};
  write_text_file(dir / "meta.json", meta.dump(2) + "\n");
}

inline LdaRun load_run(const std::filesystem::path& dir) {
  LdaRun run;
  run.beta = read_matrix_csv(dir / "beta.csv", &run.lemmas);
  run.gamma = read_matrix_csv(dir / "gamma.csv");
  std::ifstream in(dir / "meta.json");
  if (!in) throw InputError("cannot open " + (dir / "meta.json").string());
  const auto meta = nlohmann::json::parse(in);
  run.seed = meta.at("seed").get<std::uint64_t>();
  run.log_likelihood = meta.at("log_likelihood").get<double>();
  run.config = meta.at("config").get<GibbsConfig>();
  run.block_ids = meta.at("block_ids").get<std::vector<std::string>>();
  if (run.beta.rows() != run.gamma.cols()) throw InputError(dir.string() + ": beta/gamma topic counts differ");
  return run;
}

}  // namespace versetopics
