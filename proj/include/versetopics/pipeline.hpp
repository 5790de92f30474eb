#pragma once

// Stage orchestration behind the command-line tool. Each stage reads its
// inputs from the output directory (or configured paths), writes plain data
// files, and is idempotent: rerunning overwrites with identical content.

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "versetopics/align.hpp"
#include "versetopics/corpus.hpp"
#include "versetopics/error.hpp"
#include "versetopics/hubs.hpp"
#include "versetopics/keyvalue.hpp"
#include "versetopics/lda.hpp"
#include "versetopics/splsda.hpp"
#include "versetopics/synth.hpp"
#include "versetopics/table.hpp"
#include "versetopics/text.hpp"

namespace versetopics {

namespace fs = std::filesystem;

struct PipelineConfig {
  fs::path output{"out"};
  std::optional<fs::path> tokens;     // tagged token stream
  std::optional<fs::path> dtm;        // long-format counts; default <output>/dtm.csv
  std::optional<fs::path> hubs;       // hub table
  std::optional<fs::path> taxonomy;   // theme, subtheme, lemma
  std::optional<fs::path> truth_dir;  // true_phi.csv / true_theta.csv; default <output>

  VocabularyPolicy policy;
  double target_block_size = 10.5;
  GibbsConfig gibbs;
  int n_runs = 100;
  std::uint64_t base_seed = 1;
  AlignOptions align;
  SplsdaConfig splsda;
  std::vector<std::string> topic_names;
  int themes_per_card = 2;
  std::size_t treemap_terms = 20;
  SynthSpec synth;
  unsigned jobs = 1;

  fs::path dtm_path() const { return dtm ? *dtm : output / "dtm.csv"; }
  fs::path tokens_path() const { return tokens ? *tokens : output / "tokens.tsv"; }
  fs::path truth_path() const { return truth_dir ? *truth_dir : output; }

  void validate() const {
    gibbs.validate();
    align.validate();
    splsda.validate();
    synth.validate();
    if (n_runs < 1) throw InputError("ensemble.n_runs must be >= 1");
    if (!(target_block_size > 0.0)) throw InputError("corpus.target_block_size must be positive");
    if (themes_per_card < 1) throw InputError("hubs.themes_per_card must be >= 1");
    if (treemap_terms < 1) throw InputError("report.treemap_terms must be >= 1");
    if (!topic_names.empty() && static_cast<int>(topic_names.size()) != gibbs.k) {
      throw InputError("topics.names lists " + std::to_string(topic_names.size()) + " names for k = " +
                       std::to_string(gibbs.k));
    }
  }
};

namespace detail {

inline const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys{
      "paths.tokens", "paths.dtm", "paths.hubs", "paths.taxonomy", "paths.truth", "paths.output",
      "corpus.allowed_pos", "corpus.min_count", "corpus.lowercase_non_propn", "corpus.stopwords",
      "corpus.stopwords_file", "corpus.target_block_size", "corpus.verb_reassign.enabled",
      "corpus.verb_reassign.min_verb_share", "corpus.verb_reassign.min_verb_occurrences",
      "corpus.verb_reassign.min_lemma_length", "corpus.verb_reassign.suffixes",
      "lda.k", "lda.alpha", "lda.beta", "lda.iterations", "lda.burn_in", "lda.thin",
      "ensemble.n_runs", "ensemble.base_seed",
      "align.w_beta", "align.w_gamma", "align.top_m", "align.min_mean_jaccard", "align.min_mean_spearman",
      "align.min_mapping_agreement",
      "splsda.n_comp", "splsda.keep_x", "splsda.cv_folds", "splsda.cv_repeats", "splsda.baseline_permutations",
      "splsda.lambda", "splsda.cv_seed", "splsda.max_core_terms",
      "topics.names", "hubs.themes_per_card", "report.treemap_terms",
      "synth.k", "synth.vocab_size", "synth.n_docs", "synth.tokens_min", "synth.tokens_max", "synth.alpha_true",
      "synth.phi_concentration", "synth.seed", "synth.stanza_layout"};
  return keys;
}

}  // namespace detail

inline PipelineConfig load_pipeline_config(const KeyValueFile& kv) {
  for (const auto& [key, _] : kv.values()) {
    if (!detail::known_config_keys().count(key)) throw InputError("unknown config key '" + key + "'");
  }
  PipelineConfig c;
  if (const auto p = kv.get_path("paths.output")) c.output = *p;
  c.tokens = kv.get_path("paths.tokens");
  c.dtm = kv.get_path("paths.dtm");
  c.hubs = kv.get_path("paths.hubs");
  c.taxonomy = kv.get_path("paths.taxonomy");
  c.truth_dir = kv.get_path("paths.truth");

  c.policy = load_policy(kv, "corpus.");
  c.target_block_size = kv.get_double("corpus.target_block_size", c.target_block_size);

  auto& g = c.gibbs;
  g.k = kv.get_int("lda.k", g.k);
  g.alpha = kv.get_double("lda.alpha", g.alpha);
  g.beta_prior = kv.get_double("lda.beta", g.beta_prior);
  g.iterations = kv.get_int("lda.iterations", g.iterations);
  g.burn_in = kv.get_int("lda.burn_in", g.burn_in);
  g.thin = kv.get_int("lda.thin", g.thin);

  c.n_runs = kv.get_int("ensemble.n_runs", c.n_runs);
  c.base_seed = kv.get_int<std::uint64_t>("ensemble.base_seed", c.base_seed);

  auto& a = c.align;
  a.weights.w_beta = kv.get_double("align.w_beta", a.weights.w_beta);
  a.weights.w_gamma = kv.get_double("align.w_gamma", a.weights.w_gamma);
  a.top_m = kv.get_int<std::size_t>("align.top_m", a.top_m);
  a.thresholds.min_mean_jaccard = kv.get_double("align.min_mean_jaccard", a.thresholds.min_mean_jaccard);
  a.thresholds.min_mean_spearman = kv.get_double("align.min_mean_spearman", a.thresholds.min_mean_spearman);
  a.thresholds.min_mapping_agreement = kv.get_double("align.min_mapping_agreement", a.thresholds.min_mapping_agreement);

  auto& s = c.splsda;
  s.n_comp = kv.get_int("splsda.n_comp", s.n_comp);
  s.keep_x = kv.get_int("splsda.keep_x", s.keep_x);
  s.cv_folds = kv.get_int("splsda.cv_folds", s.cv_folds);
  s.cv_repeats = kv.get_int("splsda.cv_repeats", s.cv_repeats);
  s.baseline_permutations = kv.get_int("splsda.baseline_permutations", s.baseline_permutations);
  s.lambda_exclusive = kv.get_double("splsda.lambda", s.lambda_exclusive);
  s.cv_seed = kv.get_int<std::uint64_t>("splsda.cv_seed", s.cv_seed);
  s.max_core_terms = kv.get_int<std::size_t>("splsda.max_core_terms", s.max_core_terms);

  c.topic_names = kv.get_list("topics.names");
  c.themes_per_card = kv.get_int("hubs.themes_per_card", c.themes_per_card);
  c.treemap_terms = kv.get_int<std::size_t>("report.treemap_terms", c.treemap_terms);

  auto& y = c.synth;
  y.k = kv.get_int("synth.k", y.k);
  y.vocab_size = kv.get_int("synth.vocab_size", y.vocab_size);
  y.n_docs = kv.get_int("synth.n_docs", y.n_docs);
  y.tokens_min = kv.get_int("synth.tokens_min", y.tokens_min);
  y.tokens_max = kv.get_int("synth.tokens_max", y.tokens_max);
  y.alpha_true = kv.get_double("synth.alpha_true", y.alpha_true);
  y.phi_concentration = kv.get_double("synth.phi_concentration", y.phi_concentration);
  y.seed = kv.get_int<std::uint64_t>("synth.seed", y.seed);
  for (const auto& f : kv.get_list("synth.stanza_layout")) {
    int n = 0;
    if (!text::parse_int(f, n) || n < 1) throw InputError("synth.stanza_layout: bad stanza count '" + f + "'");
    y.stanza_layout.push_back(n);
  }
  c.validate();
  return c;
}

inline PipelineConfig load_pipeline_config(const fs::path& path) { return load_pipeline_config(KeyValueFile::load(path)); }

// ---------------------------------------------------------------------------
// Shared loaders

namespace detail {

inline void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw InputError(what + " not found: " + p.string());
}

inline std::vector<TaggedToken> curated_tokens(const PipelineConfig& cfg) {
  const auto path = cfg.tokens_path();
  require_file(path, "token file");
  return apply_verb_reassignment(load_tokens(path), cfg.policy);
}

inline BlockSegmentation segmentation_of(const std::vector<TaggedToken>& tokens, const PipelineConfig& cfg) {
  return segment_layout(layout_from_tokens(tokens), cfg.target_block_size);
}

inline std::string topic_label(const PipelineConfig& cfg, int t) { return topic_name(cfg.topic_names, t); }

inline std::vector<std::string> topic_labels(const PipelineConfig& cfg, int k) {
  std::vector<std::string> out;
  for (int t = 0; t < k; ++t) out.push_back(topic_label(cfg, t));
  return out;
}

inline fs::path run_dir(const fs::path& output, std::uint64_t seed) {
  return output / "runs" / ("run_" + std::to_string(seed));
}

}  // namespace detail

/// What later stages need from the consensus stage.
struct ConsensusState {
  LdaRun reference;
  std::vector<std::string> block_ids;
  Eigen::MatrixXd gamma;  // D x K consensus, reference topic order
  std::vector<int> dominant;
  std::vector<std::vector<std::size_t>> top_terms;  // indices into reference.lemmas

  int k() const noexcept { return static_cast<int>(gamma.cols()); }

  std::vector<std::vector<std::string>> top_lemmas() const {
    std::vector<std::vector<std::string>> out;
    for (const auto& l : top_terms) {
      out.emplace_back();
      for (auto w : l) out.back().push_back(reference.lemmas[w]);
    }
    return out;
  }
};

inline ConsensusState load_consensus_state(const PipelineConfig& cfg) {
  const auto dir = cfg.output / "consensus";
  detail::require_file(dir / "summary.json", "consensus summary (run the consensus stage first)");
  std::ifstream in(dir / "summary.json");
  const auto summary = nlohmann::json::parse(in);
  ConsensusState s;
  s.reference = load_run(detail::run_dir(cfg.output, summary.at("reference_seed").get<std::uint64_t>()));

  const auto t = read_table(dir / "consensus_gamma.csv");
  const auto k = static_cast<Eigen::Index>(t.header.size()) - 1;
  if (k != s.reference.k()) throw InputError(t.source + ": topic count differs from the reference run");
  s.gamma.resize(static_cast<Eigen::Index>(t.rows.size()), k);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    s.block_ids.push_back(t.rows[r][0]);
    for (Eigen::Index c = 0; c < k; ++c) {
      double v = 0.0;
      if (!text::parse_double(t.rows[r][static_cast<std::size_t>(c) + 1], v)) throw InputError(t.where(r) + ": not a number");
      s.gamma(static_cast<Eigen::Index>(r), c) = v;
    }
    s.dominant.push_back(top_two(s.gamma.row(static_cast<Eigen::Index>(r))).first);
  }
  const auto m = std::min<std::size_t>(cfg.align.top_m, s.reference.lemmas.size());
  for (Eigen::Index topic = 0; topic < k; ++topic) {
    s.top_terms.push_back(top_m_indices(Eigen::RowVectorXd(s.reference.beta.row(topic)), m));
  }
  return s;
}

/// Reads dictionary.csv back (topic labels resolved against the names).
inline TermDictionary load_dictionary(const fs::path& path, const std::vector<std::string>& names, int k,
                                      double lambda) {
  const auto t = read_table(path);
  const auto c_topic = t.column("topic"), c_lemma = t.column("lemma"), c_e = t.column("E");
  const auto c_l = t.column("mean_abs_loading"), c_w = t.column("W"), c_class = t.column("classification");
  const auto c_novel = t.column("novel"), c_porous = t.column("porous");
  TermDictionary dict;
  dict.lambda = lambda;
  dict.topics.assign(static_cast<std::size_t>(k), {});
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    TermEntry e;
    const auto topic = resolve_topic(row[c_topic], names, k);
    if (!topic) throw InputError(t.where(r) + ": unknown topic '" + row[c_topic] + "'");
    e.topic = *topic;
    e.lemma = row[c_lemma];
    if (!text::parse_double(row[c_e], e.exclusivity) || !text::parse_double(row[c_l], e.mean_abs_loading) ||
        !text::parse_double(row[c_w], e.weighted) || !text::parse_bool(row[c_novel], e.novel) ||
        !text::parse_bool(row[c_porous], e.porous)) {
      throw InputError(t.where(r) + ": malformed dictionary row");
    }
    if (row[c_class] == "core_exclusive") {
      e.classification = TermClass::CoreExclusive;
    } else if (row[c_class] != "shared") {
      throw InputError(t.where(r) + ": unknown classification '" + row[c_class] + "'");
    }
    dict.topics[static_cast<std::size_t>(e.topic)].push_back(std::move(e));
  }
  return dict;
}

// ---------------------------------------------------------------------------
// Stages

/// tokens -> segmentation.csv
inline void cmd_segment(const PipelineConfig& cfg) {
  const auto tokens = detail::curated_tokens(cfg);
  const auto seg = detail::segmentation_of(tokens, cfg);
  save_segmentation(cfg.output / "segmentation.csv", seg);
  spdlog::info("segment: {} blocks", seg.size());
}

/// tokens -> dtm.csv, segmentation.csv, vocabulary_report.json
inline void cmd_ingest(const PipelineConfig& cfg) {
  const auto tokens = detail::curated_tokens(cfg);
  const auto seg = detail::segmentation_of(tokens, cfg);
  FilterReport rep;
  const auto dtm = build_dtm(tokens, seg, cfg.policy, &rep);
  save_long_format(cfg.dtm_path(), dtm);
  save_segmentation(cfg.output / "segmentation.csv", seg);
  nlohmann::ordered_json j;
  j["documents"] = dtm.n_docs();
  j["vocabulary"] = dtm.n_terms();
  j["tokens"] = dtm.total();
  j["sparsity"] = dtm.sparsity();
  j["dropped"] = {{"tokens_in", rep.tokens_in},
                  {"non_content_tokens", rep.non_content_tokens},
                  {"pos_filtered_tokens", rep.pos_filtered_tokens},
                  {"stopword_tokens", rep.stopword_tokens},
                  {"below_min_count_tokens", rep.below_min_count_tokens},
                  {"below_min_count_lemmas", rep.below_min_count_lemmas},
                  {"retained_tokens", rep.retained_tokens}};
  write_text_file(cfg.output / "vocabulary_report.json", j.dump(2) + "\n");
  spdlog::info("ingest: {} x {} matrix, sparsity {:.3f}", dtm.n_docs(), dtm.n_terms(), dtm.sparsity());
}

/// dtm -> runs/run_<seed>/, runs/index.csv
inline void cmd_fit(const PipelineConfig& cfg) {
  const auto path = cfg.dtm_path();
  detail::require_file(path, "document-term matrix");
  const auto dtm = load_long_format(path);
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < cfg.n_runs; ++i) seeds.push_back(cfg.base_seed + static_cast<std::uint64_t>(i));
  spdlog::info("fit: {} chains, k = {}, {} sweeps, {} jobs", seeds.size(), cfg.gibbs.k, cfg.gibbs.iterations, cfg.jobs);
  const auto runs = fit_ensemble(dtm, cfg.gibbs, seeds, cfg.jobs);
  CsvWriter index;
  index.row({"seed", "log_likelihood", "directory"});
  for (const auto& run : runs) {
    const auto dir = detail::run_dir(cfg.output, run.seed);
    save_run(dir, run);
    index.row({std::to_string(run.seed), text::format_double(run.log_likelihood), "run_" + std::to_string(run.seed)});
    spdlog::info("fit: chain seed {} log-likelihood {:.3f}", run.seed, run.log_likelihood);
  }
  index.save(cfg.output / "runs" / "index.csv");
}

/// runs -> consensus/{alignment,consensus_gamma,dominant,top_terms}.csv, summary.json
inline ConsensusResult cmd_consensus(const PipelineConfig& cfg) {
  const auto index_path = cfg.output / "runs" / "index.csv";
  detail::require_file(index_path, "run index (run the fit stage first)");
  const auto index = read_table(index_path);
  const auto c_dir = index.column("directory");
  std::vector<LdaRun> runs;
  for (const auto& row : index.rows) runs.push_back(load_run(cfg.output / "runs" / row[c_dir]));
  if (runs.empty()) throw EmptyResultError(index_path.string() + " lists no runs");

  const auto ref_idx = select_reference(runs);
  const auto result = consensus(runs, ref_idx, cfg.align);
  const auto& ref = runs[ref_idx];
  const int k = ref.k();
  const auto dir = cfg.output / "consensus";
  using text::format_double;

  CsvWriter al;
  al.row({"seed", "log_likelihood", "mean_jaccard30", "mean_spearman", "mapping_agreement", "retained", "reference",
          "permutation"});
  double jac = 0.0, spear = 0.0;
  std::size_t others = 0;
  for (const auto& a : result.alignments) {
    std::string perm;
    for (auto p : a.permutation) perm += (perm.empty() ? "" : " ") + std::to_string(p + 1);
    al.row({std::to_string(a.seed), format_double(a.log_likelihood), format_double(a.mean_jaccard30),
            format_double(a.mean_spearman), format_double(a.mapping_agreement), a.retained ? "true" : "false",
            a.is_reference ? "true" : "false", perm});
    if (!a.is_reference) {
      jac += a.mean_jaccard30;
      spear += a.mean_spearman;
      ++others;
    }
  }
  al.save(dir / "alignment.csv");

  std::vector<std::string> header{"block_id"};
  for (const auto& l : detail::topic_labels(cfg, k)) header.push_back(l);
  CsvWriter cg;
  cg.row(header);
  CsvWriter dom;
  dom.row({"block_id", "dominant", "runner_up", "gamma_dominant", "gamma_runner_up"});
  for (Eigen::Index d = 0; d < result.consensus_gamma.rows(); ++d) {
    std::vector<std::string> row{ref.block_ids[static_cast<std::size_t>(d)]};
    for (Eigen::Index t = 0; t < k; ++t) row.push_back(format_double(result.consensus_gamma(d, t)));
    cg.row(row);
    const int first = result.dominant_topic[static_cast<std::size_t>(d)];
    const int second = result.runner_up_topic[static_cast<std::size_t>(d)];
    dom.row({ref.block_ids[static_cast<std::size_t>(d)], detail::topic_label(cfg, first),
             second < 0 ? "" : detail::topic_label(cfg, second), format_double(result.consensus_gamma(d, first)),
             second < 0 ? "" : format_double(result.consensus_gamma(d, second))});
  }
  cg.save(dir / "consensus_gamma.csv");
  dom.save(dir / "dominant.csv");

  CsvWriter top;
  top.row({"topic", "rank", "lemma", "beta"});
  for (int t = 0; t < k; ++t) {
    int rank = 0;
    for (auto w : result.top_terms[static_cast<std::size_t>(t)]) {
      top.row({detail::topic_label(cfg, t), std::to_string(++rank), ref.lemmas[w],
               format_double(ref.beta(t, static_cast<Eigen::Index>(w)))});
    }
  }
  top.save(dir / "top_terms.csv");

  nlohmann::ordered_json j;
  j["reference_seed"] = ref.seed;
  j["n_runs"] = runs.size();
  j["retained_run_count"] = result.retained_run_count;
  j["retained_fraction"] = static_cast<double>(result.retained_run_count) / static_cast<double>(runs.size());
  j["n_eff"] = result.n_eff;
  j["mean_jaccard30"] = others ? jac / static_cast<double>(others) : 1.0;
  j["mean_spearman"] = others ? spear / static_cast<double>(others) : 1.0;
  j["per_topic_mean_jaccard"] = result.per_topic_mean_jaccard;
  j["dominant_counts"] = result.dominant_counts();
  j["retained_run_n_eff"] = result.retained_run_n_eff;
  j["topics"] = detail::topic_labels(cfg, k);
  write_text_file(dir / "summary.json", j.dump(2) + "\n");
  spdlog::info("consensus: reference seed {}, retained {}/{}, N_eff {:.3f}", ref.seed, result.retained_run_count,
               runs.size(), result.n_eff);
  return result;
}

namespace detail {

inline DocumentTermMatrix dtm_matching(const PipelineConfig& cfg, const ConsensusState& s) {
  const auto path = cfg.dtm_path();
  require_file(path, "document-term matrix");
  auto dtm = load_long_format(path);
  if (dtm.block_ids != s.block_ids) throw InputError(path.string() + ": blocks differ from the consensus blocks");
  return dtm;
}

}  // namespace detail

/// dtm + consensus -> probe/{probe_report,dictionary,overlap}.csv
inline void cmd_probe(const PipelineConfig& cfg) {
  const auto state = load_consensus_state(cfg);
  const auto dtm = detail::dtm_matching(cfg, state);
  const int k = state.k();
  const auto report = run_ovr_probe(dtm, state.dominant, k, cfg.splsda);
  for (int t : report.skipped_topics) spdlog::warn("probe: {} skipped (too few blocks on one side)", detail::topic_label(cfg, t));
  auto dict = consolidate_lexicon(dtm, state.dominant, k, cfg.splsda);
  const auto overlap = cross_method_overlap(state.top_lemmas(), dict);
  const auto dir = cfg.output / "probe";
  write_text_file(dir / "probe_report.csv", probe_report_csv(report, cfg.topic_names));
  write_text_file(dir / "dictionary.csv", dictionary_csv(dict, cfg.topic_names));
  write_text_file(dir / "overlap.csv", overlap_csv(overlap, cfg.topic_names));
  spdlog::info("probe: overall acc {:.3f} bacc {:.3f} (baseline {:.3f} / {:.3f})", report.acc, report.bacc, report.acc0,
               report.bacc0);
}

namespace detail {

inline std::vector<Hub> configured_hubs(const PipelineConfig& cfg) {
  if (!cfg.hubs) throw InputError("paths.hubs is not set");
  require_file(*cfg.hubs, "hub table");
  return load_hubs(*cfg.hubs);
}

inline std::optional<SubthemeTaxonomy> configured_taxonomy(const PipelineConfig& cfg, int k) {
  if (!cfg.taxonomy) return std::nullopt;
  require_file(*cfg.taxonomy, "taxonomy");
  return load_taxonomy(*cfg.taxonomy, cfg.topic_names, k);
}

inline std::string file_stem_for(const std::string& id) {
  std::string out;
  for (char c : id) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_');
  return out;
}

}  // namespace detail

/// tokens + consensus (+ dictionary, taxonomy) -> hubs/<id>.{json,txt},
/// hubs/cards.json, hubs/hub_gamma.csv
inline std::vector<HubCard> cmd_hubs(const PipelineConfig& cfg) {
  const auto state = load_consensus_state(cfg);
  const int k = state.k();
  const auto hubs = detail::configured_hubs(cfg);
  const auto tokens = detail::curated_tokens(cfg);
  const auto seg = detail::segmentation_of(tokens, cfg);
  if (seg.block_ids() != state.block_ids) throw InputError("token segmentation differs from the consensus blocks");
  const auto taxonomy = detail::configured_taxonomy(cfg, k);
  std::optional<TermDictionary> dict;
  const auto dict_path = cfg.output / "probe" / "dictionary.csv";
  if (fs::exists(dict_path)) {
    dict = load_dictionary(dict_path, cfg.topic_names, k, cfg.splsda.lambda_exclusive);
  } else {
    spdlog::warn("hubs: {} not found; cards list LDA lemmas only", dict_path.string());
  }

  CardInputs in;
  in.segmentation = &seg;
  in.consensus_gamma = &state.gamma;
  in.reference = &state.reference;
  in.top_lists = &state.top_terms;
  in.dictionary = dict ? &*dict : nullptr;
  in.taxonomy = taxonomy ? &*taxonomy : nullptr;
  in.topic_names = cfg.topic_names;
  in.themes_per_card = cfg.themes_per_card;

  const auto dir = cfg.output / "hubs";
  std::vector<std::string> header{"hub", "label"};
  for (const auto& l : detail::topic_labels(cfg, k)) header.push_back(l);
  for (const char* h : {"dominant", "runner_up", "beta_dominant"}) header.emplace_back(h);
  CsvWriter table;
  table.row(header);
  auto all = nlohmann::ordered_json::array();
  std::vector<HubCard> cards;
  for (const auto& hub : hubs) {
    auto card = build_hub_card(hub, hub_token_counts(hub, tokens, cfg.policy), in);
    const auto stem = detail::file_stem_for(hub.id);
    const auto j = card_json(card, cfg.topic_names);
    write_text_file(dir / (stem + ".json"), j.dump(2) + "\n");
    write_text_file(dir / (stem + ".txt"), card_text(card));
    all.push_back(j);
    std::vector<std::string> row{hub.id, hub.label};
    for (Eigen::Index t = 0; t < k; ++t) row.push_back(text::format_double(card.gamma_bar(t)));
    row.push_back(detail::topic_label(cfg, card.dominant));
    row.push_back(card.runner_up < 0 ? "" : detail::topic_label(cfg, card.runner_up));
    row.push_back(card.beta.defined ? detail::topic_label(cfg, card.beta.dominant) : "");
    table.row(row);
    cards.push_back(std::move(card));
  }
  write_text_file(dir / "cards.json", all.dump(2) + "\n");
  table.save(dir / "hub_gamma.csv");
  spdlog::info("hubs: {} cards", cards.size());
  return cards;
}

/// consensus (+ probe, hubs, taxonomy) -> report/{treemap,narrative_map,
/// hub_bands,heatmap,chord}.csv
inline void cmd_report(const PipelineConfig& cfg) {
  using text::format_double;
  const auto state = load_consensus_state(cfg);
  const int k = state.k();
  const auto labels = detail::topic_labels(cfg, k);
  const auto dir = cfg.output / "report";
  const auto& ref = state.reference;

  // treemap: top terms per topic with the topic's corpus prevalence
  const Eigen::RowVectorXd prevalence = state.gamma.colwise().mean();
  CsvWriter tree;
  tree.row({"topic", "lemma", "weight", "prevalence"});
  const auto m = std::min<std::size_t>(cfg.treemap_terms, ref.lemmas.size());
  for (int t = 0; t < k; ++t) {
    for (auto w : top_m_indices(Eigen::RowVectorXd(ref.beta.row(t)), m)) {
      tree.row({labels[static_cast<std::size_t>(t)], ref.lemmas[w], format_double(ref.beta(t, static_cast<Eigen::Index>(w))),
                format_double(prevalence(t))});
    }
  }
  tree.save(dir / "treemap.csv");

  // hub bands in block coordinates
  std::vector<Hub> hubs;
  std::optional<BlockSegmentation> seg;
  if (cfg.hubs) {
    hubs = detail::configured_hubs(cfg);
    seg = detail::segmentation_of(detail::curated_tokens(cfg), cfg);
    if (seg->block_ids() != state.block_ids) throw InputError("token segmentation differs from the consensus blocks");
  } else {
    spdlog::warn("report: paths.hubs is not set; hub bands are empty");
  }
  std::vector<std::vector<std::string>> block_hubs(state.block_ids.size());
  CsvWriter bands;
  bands.row({"hub", "label", "block_id", "block", "weight", "first_stanza", "last_stanza"});
  for (const auto& hub : hubs) {
    for (const auto& [b, w] : hub_weights(hub, *seg)) {
      const auto& block = seg->blocks[b];
      int first = -1, last = -1;
      for (int s : block.stanzas) {
        if (!hub.contains(block.chapter, s)) continue;
        if (first < 0) first = s;
        last = s;
      }
      bands.row({hub.id, hub.label, block.block_id, std::to_string(b + 1), format_double(w), std::to_string(first),
                 std::to_string(last)});
      block_hubs[b].push_back(hub.id);
    }
  }
  bands.save(dir / "hub_bands.csv");

  // narrative map: one row per block in narrative order
  std::vector<std::string> header{"block", "block_id"};
  header.insert(header.end(), labels.begin(), labels.end());
  header.push_back("dominant");
  header.push_back("hubs");
  CsvWriter nmap;
  nmap.row(header);
  for (std::size_t d = 0; d < state.block_ids.size(); ++d) {
    std::vector<std::string> row{std::to_string(d + 1), state.block_ids[d]};
    for (int t = 0; t < k; ++t) row.push_back(format_double(state.gamma(static_cast<Eigen::Index>(d), t)));
    row.push_back(labels[static_cast<std::size_t>(state.dominant[d])]);
    std::string h;
    for (const auto& id : block_hubs[d]) h += (h.empty() ? "" : ";") + id;
    row.push_back(h);
    nmap.row(row);
  }
  nmap.save(dir / "narrative_map.csv");

  // heatmap: long form of the sPLS-DA / LDA overlap matrix
  CsvWriter heat;
  heat.row({"splsda_topic", "lda_topic", "jaccard"});
  const auto overlap_path = cfg.output / "probe" / "overlap.csv";
  if (fs::exists(overlap_path)) {
    const auto t = read_table(overlap_path);
    for (const auto& row : t.rows) {
      for (std::size_t c = 1; c < row.size(); ++c) heat.row({row[0], t.header[c], row[c]});
    }
  } else {
    spdlog::warn("report: {} not found; heatmap is empty", overlap_path.string());
  }
  heat.save(dir / "heatmap.csv");

  // chord: corpus counts of taxonomy lemmas per theme and subtheme
  CsvWriter chord;
  chord.row({"theme", "subtheme", "weight"});
  if (const auto tax = detail::configured_taxonomy(cfg, k)) {
    const auto dtm = detail::dtm_matching(cfg, state);
    const auto totals = dtm.column_totals();
    for (const auto& [topic, theme] : tax->themes) {
      std::map<std::string, std::int64_t> weight;
      for (const auto& [lemma, sub] : theme.subtheme) {
        if (const auto w = dtm.lemma_index(lemma)) weight[sub] += totals[*w];
      }
      auto order = theme.subthemes;
      order.emplace_back(kBucket);
      for (const auto& sub : order) {
        if (weight.count(sub)) {
          chord.row({labels[static_cast<std::size_t>(topic)], sub, std::to_string(weight[sub])});
        }
      }
    }
  } else {
    spdlog::warn("report: paths.taxonomy is not set; chord table is empty");
  }
  chord.save(dir / "chord.csv");
  spdlog::info("report: written to {}", dir.string());
}

/// synthetic corpus -> dtm.csv, true_phi.csv, true_theta.csv (and tokens.tsv,
/// segmentation.csv with a stanza layout) in the output directory
inline SynthCorpus cmd_synth(const PipelineConfig& cfg) {
  auto c = generate(cfg.synth);
  save_synth(cfg.output, c);
  if (cfg.dtm && *cfg.dtm != cfg.output / "dtm.csv") save_long_format(*cfg.dtm, c.dtm);
  spdlog::info("synth: {} x {} matrix, generated sparsity {:.3f}", c.dtm.n_docs(), c.dtm.n_terms(),
               c.generated_sparsity());
  return c;
}

/// reference beta + consensus gamma against the generating parameters ->
/// score/recovery.json
inline RecoveryReport cmd_score(const PipelineConfig& cfg) {
  const auto state = load_consensus_state(cfg);
  const auto truth = cfg.truth_path();
  detail::require_file(truth / "true_phi.csv", "true topic-term matrix");
  detail::require_file(truth / "true_theta.csv", "true document-topic matrix");
  std::vector<std::string> vocab;
  const auto phi = read_matrix_csv(truth / "true_phi.csv", &vocab);
  const auto theta = read_matrix_csv(truth / "true_theta.csv");
  const auto r = score_recovery(state.reference.beta, state.reference.lemmas, state.gamma, phi, vocab, theta);
  write_text_file(cfg.output / "score" / "recovery.json", recovery_json(r));
  spdlog::info("score: mean matched cosine {:.3f}, mean TV {:.3f}", r.mean_cosine, r.mean_tv);
  return r;
}

}  // namespace versetopics
