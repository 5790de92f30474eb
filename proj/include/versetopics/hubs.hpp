#pragma once

// Narrative hubs: stanza ranges summarised by a block-weighted topic mixture
// and a count-weighted lexical profile, rendered as hub cards.

#include <Eigen/Dense>

#include <algorithm>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "versetopics/align.hpp"
#include "versetopics/corpus.hpp"
#include "versetopics/error.hpp"
#include "versetopics/splsda.hpp"
#include "versetopics/table.hpp"
#include "versetopics/text.hpp"

namespace versetopics {

struct StanzaRef {
  int chapter = 0;
  int stanza = 0;
  auto operator<=>(const StanzaRef&) const = default;
};

struct Hub {
  std::string id;
  std::string label;
  StanzaRef start;
  StanzaRef end;

  bool contains(int chapter, int stanza) const noexcept {
    const StanzaRef s{chapter, stanza};
    return start <= s && s <= end;
  }
};

inline std::vector<Hub> load_hubs(const std::filesystem::path& path) {
  const auto t = read_table(path);
  const auto id = t.column("id"), label = t.column("label");
  const auto sc = t.column("start_chapter"), ss = t.column("start_stanza");
  const auto ec = t.column("end_chapter"), es = t.column("end_stanza");
  std::vector<Hub> hubs;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    Hub h;
    h.id = std::string(text::trim(row[id]));
    h.label = std::string(text::trim(row[label]));
    if (!text::parse_int(row[sc], h.start.chapter) || !text::parse_int(row[ss], h.start.stanza) ||
        !text::parse_int(row[ec], h.end.chapter) || !text::parse_int(row[es], h.end.stanza)) {
      throw InputError(t.where(r) + ": hub bounds must be integers");
    }
    if (h.id.empty()) throw InputError(t.where(r) + ": empty hub id");
    if (!seen.insert(h.id).second) throw InputError(t.where(r) + ": duplicate hub id " + h.id);
    if (h.end < h.start) throw InputError(t.where(r) + ": hub " + h.id + " ends before it starts");
    hubs.push_back(std::move(h));
  }
  return hubs;
}

/// w_{H,d}: share of the hub's content stanzas that fall in block d, in
/// block order.
inline std::vector<std::pair<std::size_t, double>> hub_weights(const Hub& hub, const BlockSegmentation& seg) {
  std::vector<std::pair<std::size_t, int>> counts;
  int total = 0;
  for (std::size_t b = 0; b < seg.blocks.size(); ++b) {
    const auto& block = seg.blocks[b];
    int n = 0;
    for (int s : block.stanzas) n += hub.contains(block.chapter, s);
    if (n) {
      counts.emplace_back(b, n);
      total += n;
    }
  }
  if (total == 0) throw InputError("hub " + hub.id + " covers no content stanza");
  std::vector<std::pair<std::size_t, double>> w;
  for (const auto& [b, n] : counts) w.emplace_back(b, static_cast<double>(n) / static_cast<double>(total));
  return w;
}

struct HubGamma {
  Eigen::RowVectorXd gamma_bar;
  int dominant = 0;
  int runner_up = -1;
};

/// Convex combination of consensus gamma rows.
inline HubGamma hub_gamma(const std::vector<std::pair<std::size_t, double>>& weights, const Eigen::MatrixXd& gamma) {
  if (weights.empty()) throw InputError("hub_gamma: no weights");
  HubGamma h;
  h.gamma_bar = Eigen::RowVectorXd::Zero(gamma.cols());
  for (const auto& [d, w] : weights) {
    if (static_cast<Eigen::Index>(d) >= gamma.rows()) throw InputError("hub_gamma: block index outside gamma");
    h.gamma_bar += w * gamma.row(static_cast<Eigen::Index>(d));
  }
  std::tie(h.dominant, h.runner_up) = top_two(h.gamma_bar);
  return h;
}

/// c_{H,w}: counts of normalised, admitted lemmas over the hub's content
/// stanzas, taken from the curated token stream.
inline std::map<std::string, std::int64_t> hub_token_counts(const Hub& hub, const std::vector<TaggedToken>& tokens,
                                                            const VocabularyPolicy& policy) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& t : tokens) {
    if (!t.is_content_stanza || !hub.contains(t.chapter, t.stanza)) continue;
    if (!policy.allowed_pos.count(t.pos)) continue;
    auto lemma = policy.normalise(t.lemma, t.pos);
    if (!policy.admits(lemma, t.pos)) continue;
    ++counts[lemma];
  }
  return counts;
}

struct HubBeta {
  bool defined = false;
  std::string error;                                   // set when undefined
  std::vector<std::pair<std::string, std::int64_t>> vocabulary;  // V_H with counts, lemma order
  Eigen::RowVectorXd mass;                             // S^(beta)
  Eigen::RowVectorXd profile;                          // P^(beta)
  int dominant = -1;
};

/// S_k = sum over w in V_H of c_w * beta_{k,w}, V_H being the hub lemmas found
/// in any LDA top list. Undefined (with a reason) when V_H is empty.
inline HubBeta hub_beta_profile(const std::map<std::string, std::int64_t>& counts, const LdaRun& reference,
                                const std::vector<std::vector<std::size_t>>& top_lists) {
  HubBeta out;
  const auto k = reference.beta.rows();
  out.mass = Eigen::RowVectorXd::Zero(k);
  std::set<std::size_t> pool;
  for (const auto& l : top_lists) pool.insert(l.begin(), l.end());
  for (std::size_t w : pool) {
    if (w >= reference.lemmas.size()) throw InputError("hub_beta_profile: top-list index outside the vocabulary");
    const auto it = counts.find(reference.lemmas[w]);
    if (it == counts.end() || it->second <= 0) continue;
    out.vocabulary.emplace_back(it->first, it->second);
    out.mass += static_cast<double>(it->second) * reference.beta.col(static_cast<Eigen::Index>(w)).transpose();
  }
  std::sort(out.vocabulary.begin(), out.vocabulary.end());
  const double total = out.mass.sum();
  if (out.vocabulary.empty() || !(total > 0.0)) {
    out.error = "no lemma of the LDA top lists occurs in the hub";
    out.profile = Eigen::RowVectorXd::Zero(k);
    return out;
  }
  out.defined = true;
  out.profile = out.mass / total;
  out.dominant = top_two(out.profile).first;
  return out;
}

// ---------------------------------------------------------------------------
// Subtheme taxonomy

inline constexpr const char* kBucket = "bucket";

struct SubthemeTaxonomy {
  struct Theme {
    std::vector<std::string> subthemes;           // file order, "bucket" excluded
    std::map<std::string, std::string> subtheme;  // lemma -> subtheme (or "bucket")
  };
  std::map<int, Theme> themes;  // topic index -> theme

  const Theme* theme(int topic) const {
    const auto it = themes.find(topic);
    return it == themes.end() ? nullptr : &it->second;
  }
};

/// Topic index named by a theme field: a topic name, "T<k>" or "<k>"
/// (1-based).
inline std::optional<int> resolve_topic(const std::string& field, const std::vector<std::string>& names, int k) {
  const std::string s(text::trim(field));
  for (std::size_t i = 0; i < names.size() && static_cast<int>(i) < k; ++i) {
    if (names[i] == s) return static_cast<int>(i);
  }
  std::string digits = s;
  if (!digits.empty() && (digits[0] == 'T' || digits[0] == 't')) digits.erase(0, 1);
  int n = 0;
  if (text::parse_int(digits, n) && n >= 1 && n <= k) return n - 1;
  return std::nullopt;
}

inline SubthemeTaxonomy load_taxonomy(const std::filesystem::path& path, const std::vector<std::string>& names, int k) {
  const auto t = read_table(path);
  const auto theme = t.column("theme"), sub = t.column("subtheme"), lemma = t.column("lemma");
  SubthemeTaxonomy tax;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto topic = resolve_topic(row[theme], names, k);
    if (!topic) throw InputError(t.where(r) + ": theme '" + row[theme] + "' names no topic");
    const std::string s(text::trim(row[sub]));
    const std::string l(text::trim(row[lemma]));
    if (s.empty() || l.empty()) throw InputError(t.where(r) + ": empty subtheme or lemma");
    auto& th = tax.themes[*topic];
    const auto [it, inserted] = th.subtheme.emplace(l, s);
    if (!inserted && it->second != s) {
      throw InputError(t.where(r) + ": lemma '" + l + "' already belongs to subtheme '" + it->second + "'");
    }
    if (s != kBucket && std::find(th.subthemes.begin(), th.subthemes.end(), s) == th.subthemes.end()) {
      th.subthemes.push_back(s);
    }
  }
  return tax;
}

// ---------------------------------------------------------------------------
// Hub cards

struct CardLemma {
  std::string lemma;
  std::int64_t count = 0;
  bool novel = false;   // sPLS-DA lemma absent from every LDA top list
  bool porous = false;  // sPLS-DA lemma among the LDA top terms of another topic
};

struct CardGroup {
  std::string subtheme;
  std::vector<CardLemma> lemmas;
};

struct CardTheme {
  int topic = 0;
  std::string name;
  double gamma = 0.0;
  std::vector<CardGroup> groups;
};

struct HubCard {
  Hub hub;
  std::vector<std::pair<std::string, double>> weights;  // block id, weight
  Eigen::RowVectorXd gamma_bar;
  int dominant = 0;
  int runner_up = -1;
  HubBeta beta;
  std::vector<CardTheme> themes;
  std::vector<std::string> warnings;
};

struct CardInputs {
  const BlockSegmentation* segmentation = nullptr;
  const Eigen::MatrixXd* consensus_gamma = nullptr;
  const LdaRun* reference = nullptr;
  const std::vector<std::vector<std::size_t>>* top_lists = nullptr;  // indices into reference lemmas
  const TermDictionary* dictionary = nullptr;                         // optional
  const SubthemeTaxonomy* taxonomy = nullptr;                         // optional
  std::vector<std::string> topic_names;
  int themes_per_card = 2;
};

inline std::string topic_display_name(const std::vector<std::string>& names, int topic) {
  return topic_name(names, topic);
}

/// Card for one hub. Listed themes are the top `themes_per_card` topics of the
/// hub mixture; under each, the hub lemmas from that topic's LDA top list and
/// core-exclusive list, grouped by subtheme.
inline HubCard build_hub_card(const Hub& hub, const std::map<std::string, std::int64_t>& counts, const CardInputs& in) {
  if (!in.segmentation || !in.consensus_gamma || !in.reference || !in.top_lists) {
    throw InputError("build_hub_card: missing inputs");
  }
  HubCard card;
  card.hub = hub;
  const auto weights = hub_weights(hub, *in.segmentation);
  for (const auto& [b, w] : weights) card.weights.emplace_back(in.segmentation->blocks[b].block_id, w);
  const auto g = hub_gamma(weights, *in.consensus_gamma);
  card.gamma_bar = g.gamma_bar;
  card.dominant = g.dominant;
  card.runner_up = g.runner_up;
  card.beta = hub_beta_profile(counts, *in.reference, *in.top_lists);
  if (!card.beta.defined) card.warnings.push_back("lexical profile undefined: " + card.beta.error);

  const int k = static_cast<int>(card.gamma_bar.size());
  std::vector<std::set<std::string>> lda(static_cast<std::size_t>(k));
  for (int t = 0; t < k && static_cast<std::size_t>(t) < in.top_lists->size(); ++t) {
    for (auto w : (*in.top_lists)[static_cast<std::size_t>(t)]) lda[static_cast<std::size_t>(t)].insert(in.reference->lemmas[w]);
  }

  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return card.gamma_bar(a) > card.gamma_bar(b); });
  order.resize(static_cast<std::size_t>(std::clamp(in.themes_per_card, 1, k)));

  for (int topic : order) {
    CardTheme theme;
    theme.topic = topic;
    theme.name = topic_display_name(in.topic_names, topic);
    theme.gamma = card.gamma_bar(topic);

    std::map<std::string, CardLemma> listed;
    for (const auto& l : lda[static_cast<std::size_t>(topic)]) {
      const auto it = counts.find(l);
      if (it != counts.end() && it->second > 0) listed[l] = {l, it->second, false, false};
    }
    if (in.dictionary && static_cast<std::size_t>(topic) < in.dictionary->topics.size()) {
      for (const auto& l : in.dictionary->core_lemmas(topic)) {
        const auto it = counts.find(l);
        if (it == counts.end() || it->second <= 0) continue;
        CardLemma c{l, it->second, true, false};
        for (int j = 0; j < k; ++j) {
          if (!lda[static_cast<std::size_t>(j)].count(l)) continue;
          c.novel = false;
          if (j != topic) c.porous = true;
        }
        listed[l] = c;
      }
    }

    const auto* tax = in.taxonomy ? in.taxonomy->theme(topic) : nullptr;
    std::map<std::string, std::vector<CardLemma>> grouped;
    for (const auto& [lemma, c] : listed) {
      std::string sub = kBucket;
      if (tax) {
        const auto it = tax->subtheme.find(lemma);
        if (it != tax->subtheme.end()) sub = it->second;
      }
      if (sub == kBucket && (!tax || !tax->subtheme.count(lemma))) {
        spdlog::warn("hub {}: lemma '{}' has no subtheme under {}; placed in bucket", hub.id, lemma, theme.name);
        card.warnings.push_back("lemma '" + lemma + "' has no subtheme under " + theme.name);
      }
      grouped[sub].push_back(c);
    }
    std::vector<std::string> sub_order;
    if (tax) sub_order = tax->subthemes;
    sub_order.push_back(kBucket);
    for (const auto& s : sub_order) {
      auto it = grouped.find(s);
      if (it == grouped.end()) continue;
      std::sort(it->second.begin(), it->second.end(), [](const CardLemma& a, const CardLemma& b) {
        return a.count != b.count ? a.count > b.count : a.lemma < b.lemma;
      });
      theme.groups.push_back({s, std::move(it->second)});
    }
    card.themes.push_back(std::move(theme));
  }
  return card;
}

inline nlohmann::ordered_json card_json(const HubCard& card, const std::vector<std::string>& names = {}) {
  nlohmann::ordered_json j;
  j["id"] = card.hub.id;
  j["label"] = card.hub.label;
  j["start"] = {card.hub.start.chapter, card.hub.start.stanza};
  j["end"] = {card.hub.end.chapter, card.hub.end.stanza};
  auto w = nlohmann::ordered_json::array();
  for (const auto& [id, x] : card.weights) w.push_back({{"block_id", id}, {"weight", x}});
  j["weights"] = w;
  j["gamma_bar"] = std::vector<double>(card.gamma_bar.data(), card.gamma_bar.data() + card.gamma_bar.size());
  j["dominant"] = topic_display_name(names, card.dominant);
  j["runner_up"] = card.runner_up >= 0 ? nlohmann::ordered_json(topic_display_name(names, card.runner_up))
                                        : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json beta;
  beta["defined"] = card.beta.defined;
  if (card.beta.defined) {
    beta["mass"] = std::vector<double>(card.beta.mass.data(), card.beta.mass.data() + card.beta.mass.size());
    beta["profile"] = std::vector<double>(card.beta.profile.data(), card.beta.profile.data() + card.beta.profile.size());
    beta["dominant"] = topic_display_name(names, card.beta.dominant);
  } else {
    beta["error"] = card.beta.error;
  }
  beta["vocabulary_size"] = card.beta.vocabulary.size();
  j["beta"] = beta;
  auto themes = nlohmann::ordered_json::array();
  for (const auto& t : card.themes) {
    nlohmann::ordered_json tj;
    tj["topic"] = t.name;
    tj["gamma"] = t.gamma;
    auto groups = nlohmann::ordered_json::array();
    for (const auto& g : t.groups) {
      auto lemmas = nlohmann::ordered_json::array();
      for (const auto& l : g.lemmas) {
        lemmas.push_back({{"lemma", l.lemma}, {"count", l.count}, {"novel", l.novel}, {"porous", l.porous}});
      }
      groups.push_back({{"subtheme", g.subtheme}, {"lemmas", lemmas}});
    }
    tj["subthemes"] = groups;
    themes.push_back(tj);
  }
  j["themes"] = themes;
  j["warnings"] = card.warnings;
  return j;
}

/// Plain-text card; novel lemmas carry a dagger, porous ones a double dagger.
inline std::string card_text(const HubCard& card) {
  std::ostringstream o;
  o << card.hub.id << "  " << card.hub.label << "  (" << card.hub.start.chapter << "." << card.hub.start.stanza << "-"
    << card.hub.end.chapter << "." << card.hub.end.stanza << ")\n";
  for (std::size_t i = 0; i < card.themes.size(); ++i) {
    const auto& t = card.themes[i];
    char g[32];
    std::snprintf(g, sizeof g, "%.3f", t.gamma);
    o << (i == 0 ? "Dominant" : i == 1 ? "Runner-up" : "Theme") << ": " << t.name << " (" << g << ")\n";
    for (const auto& grp : t.groups) {
      o << "  " << grp.subtheme << ": ";
      for (std::size_t l = 0; l < grp.lemmas.size(); ++l) {
        if (l) o << ", ";
        o << grp.lemmas[l].lemma;
        if (grp.lemmas[l].novel) o << "†";
        if (grp.lemmas[l].porous) o << "‡";
      }
      o << "\n";
    }
  }
  if (!card.beta.defined) o << "Lexical profile: undefined (" << card.beta.error << ")\n";
  return o.str();
}

}  // namespace versetopics
