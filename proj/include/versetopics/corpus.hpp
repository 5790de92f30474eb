#pragma once

// Corpus ingestion: tagged token streams, curation rules, stanza blocks and
// the block x lemma document-term matrix with its long-format encoding.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "versetopics/error.hpp"
#include "versetopics/keyvalue.hpp"
#include "versetopics/table.hpp"
#include "versetopics/text.hpp"

namespace versetopics {

enum class Pos { Noun, Propn, Adj, Verb, Other };

inline std::string_view to_string(Pos pos) noexcept {
  switch (pos) {
    case Pos::Noun: return "NOUN";
    case Pos::Propn: return "PROPN";
    case Pos::Adj: return "ADJ";
    case Pos::Verb: return "VERB";
    case Pos::Other: return "OTHER";
  }
  return "OTHER";
}

/// Unknown tags (DET, ADP, ...) map to Other.
inline Pos parse_pos(std::string_view tag) noexcept {
  tag = text::trim(tag);
  if (tag == "NOUN") return Pos::Noun;
  if (tag == "PROPN") return Pos::Propn;
  if (tag == "ADJ") return Pos::Adj;
  if (tag == "VERB") return Pos::Verb;
  return Pos::Other;
}

struct TaggedToken {
  int chapter = 1;
  int stanza = 1;
  int line = 0;  // 0 when the source carries no line number
  std::string surface;
  std::string lemma;
  Pos pos = Pos::Other;
  bool is_content_stanza = true;
};

struct VerbReassignPolicy {
  bool enabled = true;
  double min_verb_share = 0.60;
  int min_verb_occurrences = 2;
  int min_lemma_length = 5;
  std::vector<std::string> suffixes{"are", "ere", "ire"};
};

struct VocabularyPolicy {
  std::set<Pos> allowed_pos{Pos::Noun, Pos::Propn, Pos::Adj};
  int min_count = 3;
  std::set<std::string> stopwords;
  bool lowercase_non_propn = true;
  VerbReassignPolicy verb_reassign;

  void validate() const {
    if (min_count < 1) throw InputError("min_count must be >= 1");
    if (!(verb_reassign.min_verb_share > 0.0 && verb_reassign.min_verb_share <= 1.0)) {
      throw InputError("min_verb_share must lie in (0, 1]");
    }
    if (allowed_pos.empty()) throw InputError("allowed_pos is empty");
  }

  /// Normalised lemma as it appears in the vocabulary.
  std::string normalise(std::string_view lemma, Pos pos) const {
    const auto trimmed = text::trim(lemma);
    if (lowercase_non_propn && pos != Pos::Propn) return text::utf8_lower(trimmed);
    return std::string(trimmed);
  }

  /// Whether a token of this kind contributes to the vocabulary (before the
  /// frequency threshold).
  bool admits(const std::string& normalised_lemma, Pos pos) const {
    return allowed_pos.count(pos) != 0 && stopwords.count(normalised_lemma) == 0;
  }
};

/// Reads policy keys under `prefix` (e.g. "corpus." or "") from a key=value
/// file. `stopwords_file` entries are resolved relative to the file.
inline VocabularyPolicy load_policy(const KeyValueFile& kv, const std::string& prefix = "") {
  VocabularyPolicy p;
  if (kv.has(prefix + "allowed_pos")) {
    p.allowed_pos.clear();
    for (const auto& tag : kv.get_list(prefix + "allowed_pos")) {
      const auto pos = parse_pos(tag);
      if (pos == Pos::Other) throw InputError("allowed_pos: unsupported tag '" + tag + "'");
      p.allowed_pos.insert(pos);
    }
  }
  p.min_count = kv.get_int(prefix + "min_count", p.min_count);
  p.lowercase_non_propn = kv.get_bool(prefix + "lowercase_non_propn", p.lowercase_non_propn);
  for (const auto& w : kv.get_list(prefix + "stopwords")) p.stopwords.insert(w);
  if (const auto file = kv.get_path(prefix + "stopwords_file")) {
    std::ifstream in(*file);
    if (!in) throw InputError("cannot open stopwords file " + file->string());
    std::string line;
    while (std::getline(in, line)) {
      const auto w = text::trim(line);
      if (!w.empty() && w.front() != '#') p.stopwords.insert(std::string(w));
    }
  }
  const std::string vr = prefix + "verb_reassign.";
  p.verb_reassign.enabled = kv.get_bool(vr + "enabled", p.verb_reassign.enabled);
  p.verb_reassign.min_verb_share = kv.get_double(vr + "min_verb_share", p.verb_reassign.min_verb_share);
  p.verb_reassign.min_verb_occurrences = kv.get_int(vr + "min_verb_occurrences", p.verb_reassign.min_verb_occurrences);
  p.verb_reassign.min_lemma_length = kv.get_int(vr + "min_lemma_length", p.verb_reassign.min_lemma_length);
  if (kv.has(vr + "suffixes")) p.verb_reassign.suffixes = kv.get_list(vr + "suffixes");
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Token streams

/// Reads a tagged token file (TSV or CSV by extension) with header
/// chapter, stanza, line, surface, lemma, pos, is_content_stanza.
inline std::vector<TaggedToken> load_tokens(const std::filesystem::path& path) {
  const Table t = read_table(path);
  const auto c_chapter = t.column("chapter");
  const auto c_stanza = t.column("stanza");
  const auto c_line = t.column("line");
  const auto c_surface = t.column("surface");
  const auto c_lemma = t.column("lemma");
  const auto c_pos = t.column("pos");
  const auto c_content = t.column("is_content_stanza");

  std::vector<TaggedToken> tokens;
  tokens.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    TaggedToken tok;
    if (!text::parse_int(row[c_chapter], tok.chapter) || tok.chapter < 1) {
      throw InputError(t.where(r) + ": chapter must be a positive integer");
    }
    if (!text::parse_int(row[c_stanza], tok.stanza) || tok.stanza < 1) {
      throw InputError(t.where(r) + ": stanza must be a positive integer");
    }
    if (!text::trim(row[c_line]).empty() && (!text::parse_int(row[c_line], tok.line) || tok.line < 1)) {
      throw InputError(t.where(r) + ": line must be a positive integer or empty");
    }
    tok.surface = row[c_surface];
    tok.lemma = std::string(text::trim(row[c_lemma]));
    if (tok.lemma.empty()) throw InputError(t.where(r) + ": empty lemma");
    tok.pos = parse_pos(row[c_pos]);
    if (!text::parse_bool(row[c_content], tok.is_content_stanza)) {
      throw InputError(t.where(r) + ": is_content_stanza must be 0/1 or true/false");
    }
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

inline void save_tokens(const std::filesystem::path& path, const std::vector<TaggedToken>& tokens) {
  const char delim = delimiter_for(path);
  CsvWriter w{delim};
  w.row({"chapter", "stanza", "line", "surface", "lemma", "pos", "is_content_stanza"});
  for (const auto& t : tokens) {
    w.row({std::to_string(t.chapter), std::to_string(t.stanza), t.line > 0 ? std::to_string(t.line) : "", t.surface,
           t.lemma, std::string(to_string(t.pos)), t.is_content_stanza ? "1" : "0"});
  }
  w.save(path);
}

/// Retags as VERB every instance of a lemma that ends in one of the
/// configured suffixes and whose VERB evidence clears all three guards
/// (share, occurrence count, length in characters). Lemmas are compared as
/// stored, before any case normalisation.
inline std::vector<TaggedToken> apply_verb_reassignment(std::vector<TaggedToken> tokens,
                                                        const VocabularyPolicy& policy) {
  const auto& rule = policy.verb_reassign;
  if (!rule.enabled) return tokens;

  struct Tally {
    int total = 0;
    int verb = 0;
  };
  std::unordered_map<std::string, Tally> tally;
  for (const auto& t : tokens) {
    auto& e = tally[t.lemma];
    ++e.total;
    if (t.pos == Pos::Verb) ++e.verb;
  }

  std::unordered_map<std::string, bool> promote;
  for (const auto& [lemma, e] : tally) {
    const bool suffix_ok = std::any_of(rule.suffixes.begin(), rule.suffixes.end(),
                                       [&](const std::string& s) { return text::ends_with(lemma, s); });
    const bool ok = suffix_ok && e.verb >= rule.min_verb_occurrences &&
                    static_cast<int>(text::utf8_length(lemma)) >= rule.min_lemma_length &&
                    static_cast<double>(e.verb) >= rule.min_verb_share * static_cast<double>(e.total);
    promote.emplace(lemma, ok);
  }
  for (auto& t : tokens) {
    if (promote[t.lemma]) t.pos = Pos::Verb;
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Block segmentation

struct Block {
  std::string block_id;  // "C<chapter>_B<index>"
  int chapter = 0;
  int index = 0;  // 1-based within chapter
  int first_stanza = 0;
  int last_stanza = 0;
  int stanza_count = 0;
  std::vector<int> stanzas;  // content stanza identifiers, narrative order
};

struct BlockSegmentation {
  std::vector<Block> blocks;

  std::size_t size() const noexcept { return blocks.size(); }

  /// Block row holding a content stanza, if any.
  std::optional<std::size_t> block_of(int chapter, int stanza) const {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto& b = blocks[i];
      if (b.chapter == chapter && std::binary_search(b.stanzas.begin(), b.stanzas.end(), stanza)) return i;
    }
    return std::nullopt;
  }

  std::vector<std::string> block_ids() const {
    std::vector<std::string> ids;
    ids.reserve(blocks.size());
    for (const auto& b : blocks) ids.push_back(b.block_id);
    return ids;
  }
};

/// Content stanza identifiers per chapter, in narrative order.
struct StanzaLayout {
  std::map<int, std::vector<int>> chapters;

  std::size_t total() const noexcept {
    std::size_t n = 0;
    for (const auto& [_, s] : chapters) n += s.size();
    return n;
  }
};

inline StanzaLayout layout_from_tokens(const std::vector<TaggedToken>& tokens) {
  std::map<int, std::set<int>> content;
  for (const auto& t : tokens) {
    if (t.is_content_stanza) content[t.chapter].insert(t.stanza);
  }
  StanzaLayout layout;
  for (auto& [ch, set] : content) layout.chapters[ch] = std::vector<int>(set.begin(), set.end());
  return layout;
}

/// Layout with stanzas numbered 1..s in chapters numbered 1..n.
inline StanzaLayout layout_from_counts(const std::vector<int>& stanza_counts_per_chapter) {
  StanzaLayout layout;
  for (std::size_t c = 0; c < stanza_counts_per_chapter.size(); ++c) {
    std::vector<int> ids(static_cast<std::size_t>(std::max(0, stanza_counts_per_chapter[c])));
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i) + 1;
    layout.chapters[static_cast<int>(c) + 1] = std::move(ids);
  }
  return layout;
}

/// Number of blocks for a chapter of `stanzas` content stanzas: the b >= 1
/// minimising |s/b - target|, smaller b on ties.
inline int blocks_for_chapter(int stanzas, double target_size) {
  int best = 1;
  double best_gap = std::abs(static_cast<double>(stanzas) - target_size);
  for (int b = 2; b <= stanzas; ++b) {
    const double gap = std::abs(static_cast<double>(stanzas) / b - target_size);
    if (gap < best_gap) {
      best = b;
      best_gap = gap;
    }
  }
  return best;
}

/// Run sizes for splitting s stanzas into b contiguous runs, larger first.
inline std::vector<int> block_sizes(int stanzas, int blocks) {
  std::vector<int> sizes(static_cast<std::size_t>(blocks), stanzas / blocks);
  for (int i = 0; i < stanzas % blocks; ++i) ++sizes[static_cast<std::size_t>(i)];
  return sizes;
}

inline BlockSegmentation segment_layout(const StanzaLayout& layout, double target_size = 10.5) {
  if (!(target_size > 0.0)) throw InputError("target_size must be positive");
  if (layout.chapters.empty()) throw InputError("no chapters to segment");
  BlockSegmentation seg;
  for (const auto& [chapter, stanzas] : layout.chapters) {
    if (stanzas.empty()) {
      throw InputError("chapter " + std::to_string(chapter) + " has no content stanzas");
    }
    const int s = static_cast<int>(stanzas.size());
    const auto sizes = block_sizes(s, blocks_for_chapter(s, target_size));
    std::size_t pos = 0;
    for (std::size_t b = 0; b < sizes.size(); ++b) {
      Block block;
      block.chapter = chapter;
      block.index = static_cast<int>(b) + 1;
      block.block_id = "C" + std::to_string(chapter) + "_B" + std::to_string(block.index);
      block.stanzas.assign(stanzas.begin() + static_cast<std::ptrdiff_t>(pos),
                           stanzas.begin() + static_cast<std::ptrdiff_t>(pos + static_cast<std::size_t>(sizes[b])));
      block.first_stanza = block.stanzas.front();
      block.last_stanza = block.stanzas.back();
      block.stanza_count = sizes[b];
      pos += static_cast<std::size_t>(sizes[b]);
      seg.blocks.push_back(std::move(block));
    }
  }
  return seg;
}

/// Segmentation of chapters 1..n given their content-stanza counts.
inline BlockSegmentation segment_blocks(const std::vector<int>& stanza_counts_per_chapter, double target_size = 10.5) {
  for (std::size_t c = 0; c < stanza_counts_per_chapter.size(); ++c) {
    if (stanza_counts_per_chapter[c] < 1) {
      throw InputError("chapter " + std::to_string(c + 1) + " has no content stanzas");
    }
  }
  return segment_layout(layout_from_counts(stanza_counts_per_chapter), target_size);
}

inline void save_segmentation(const std::filesystem::path& path, const BlockSegmentation& seg) {
  CsvWriter w;
  w.row({"block_id", "chapter", "first_stanza", "last_stanza", "stanza_count"});
  for (const auto& b : seg.blocks) {
    w.row({b.block_id, std::to_string(b.chapter), std::to_string(b.first_stanza), std::to_string(b.last_stanza),
           std::to_string(b.stanza_count)});
  }
  w.save(path);
}

// ---------------------------------------------------------------------------
// Document-term matrix

/// Parses "C<int>_B<int>" into (chapter, block index).
inline std::optional<std::pair<int, int>> parse_block_id(std::string_view id) {
  static const std::regex pattern{R"(^C(\d+)_B(\d+)$)"};
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_match(id.begin(), id.end(), m, pattern)) return std::nullopt;
  int chapter = 0;
  int block = 0;
  if (!text::parse_int(std::string_view(&*m[1].first, static_cast<std::size_t>(m[1].length())), chapter) ||
      !text::parse_int(std::string_view(&*m[2].first, static_cast<std::size_t>(m[2].length())), block)) {
    return std::nullopt;
  }
  return std::make_pair(chapter, block);
}

/// Sparse block x lemma counts. Rows follow narrative block order; lemma
/// columns are in byte-lexicographic order, so column index order doubles as
/// the lexicographic tie-break wherever one is needed.
struct DocumentTermMatrix {
  using Entry = std::pair<std::uint32_t, std::int64_t>;  // (lemma column, count)

  std::vector<std::string> block_ids;
  std::vector<std::string> lemmas;
  std::vector<std::vector<Entry>> rows;  // sorted by column, counts > 0
  std::optional<VocabularyPolicy> provenance;

  std::size_t n_docs() const noexcept { return block_ids.size(); }
  std::size_t n_terms() const noexcept { return lemmas.size(); }

  std::size_t nnz() const noexcept {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.size();
    return n;
  }

  std::int64_t total() const noexcept {
    std::int64_t n = 0;
    for (const auto& r : rows) {
      for (const auto& [_, c] : r) n += c;
    }
    return n;
  }

  std::int64_t doc_length(std::size_t d) const noexcept {
    std::int64_t n = 0;
    for (const auto& [_, c] : rows[d]) n += c;
    return n;
  }

  double sparsity() const noexcept {
    const double cells = static_cast<double>(n_docs()) * static_cast<double>(n_terms());
    return cells > 0 ? 1.0 - static_cast<double>(nnz()) / cells : 0.0;
  }

  std::int64_t count(std::size_t d, std::size_t w) const noexcept {
    const auto& r = rows[d];
    const auto it = std::lower_bound(r.begin(), r.end(), Entry{static_cast<std::uint32_t>(w), 0},
                                     [](const Entry& a, const Entry& b) { return a.first < b.first; });
    return (it != r.end() && it->first == w) ? it->second : 0;
  }

  std::optional<std::size_t> lemma_index(std::string_view lemma) const {
    const auto it = std::lower_bound(lemmas.begin(), lemmas.end(), lemma);
    if (it == lemmas.end() || *it != lemma) return std::nullopt;
    return static_cast<std::size_t>(it - lemmas.begin());
  }

  /// Corpus-wide count per lemma column.
  std::vector<std::int64_t> column_totals() const {
    std::vector<std::int64_t> totals(n_terms(), 0);
    for (const auto& r : rows) {
      for (const auto& [w, c] : r) totals[w] += c;
    }
    return totals;
  }

  /// Builds a matrix from (document row, lemma) -> count cells. Lemmas with a
  /// zero corpus total are dropped, and columns are sorted.
  static DocumentTermMatrix from_cells(std::vector<std::string> block_ids,
                                       const std::vector<std::map<std::string, std::int64_t>>& cells) {
    std::set<std::string> vocab;
    for (const auto& row : cells) {
      for (const auto& [lemma, n] : row) {
        if (n > 0) vocab.insert(lemma);
      }
    }
    DocumentTermMatrix dtm;
    dtm.block_ids = std::move(block_ids);
    dtm.lemmas.assign(vocab.begin(), vocab.end());
    dtm.rows.resize(cells.size());
    for (std::size_t d = 0; d < cells.size(); ++d) {
      for (const auto& [lemma, n] : cells[d]) {
        if (n <= 0) continue;
        dtm.rows[d].emplace_back(static_cast<std::uint32_t>(*dtm.lemma_index(lemma)), n);
      }
      std::sort(dtm.rows[d].begin(), dtm.rows[d].end());
    }
    return dtm;
  }
};

/// What build_dtm removed, for the vocabulary report.
struct FilterReport {
  std::int64_t tokens_in = 0;
  std::int64_t non_content_tokens = 0;
  std::int64_t pos_filtered_tokens = 0;
  std::int64_t stopword_tokens = 0;
  std::int64_t below_min_count_tokens = 0;
  std::size_t below_min_count_lemmas = 0;
  std::int64_t retained_tokens = 0;
};

inline DocumentTermMatrix build_dtm(const std::vector<TaggedToken>& tokens, const BlockSegmentation& segmentation,
                                    const VocabularyPolicy& policy, FilterReport* report = nullptr) {
  policy.validate();
  FilterReport rep;
  rep.tokens_in = static_cast<std::int64_t>(tokens.size());

  // (row, lemma) for every token that survives PoS and stop-word filtering.
  std::vector<std::pair<std::size_t, std::string>> kept;
  std::map<std::string, std::int64_t> freq;
  for (const auto& t : tokens) {
    if (!t.is_content_stanza) {
      ++rep.non_content_tokens;
      continue;
    }
    if (policy.allowed_pos.count(t.pos) == 0) {
      ++rep.pos_filtered_tokens;
      continue;
    }
    auto lemma = policy.normalise(t.lemma, t.pos);
    if (lemma.empty()) throw InputError("empty lemma in chapter " + std::to_string(t.chapter));
    if (policy.stopwords.count(lemma)) {
      ++rep.stopword_tokens;
      continue;
    }
    const auto row = segmentation.block_of(t.chapter, t.stanza);
    if (!row) {
      throw InputError("stanza C" + std::to_string(t.chapter) + ":" + std::to_string(t.stanza) +
                       " is not covered by the block segmentation");
    }
    ++freq[lemma];
    kept.emplace_back(*row, std::move(lemma));
  }

  std::vector<std::map<std::string, std::int64_t>> cells(segmentation.size());
  for (auto& [row, lemma] : kept) {
    if (freq[lemma] < policy.min_count) {
      ++rep.below_min_count_tokens;
      continue;
    }
    ++cells[row][lemma];
    ++rep.retained_tokens;
  }
  for (const auto& [_, n] : freq) {
    if (n < policy.min_count) ++rep.below_min_count_lemmas;
  }

  auto dtm = DocumentTermMatrix::from_cells(segmentation.block_ids(), cells);
  if (dtm.n_terms() == 0) throw EmptyResultError("no lemma survived vocabulary filtering");
  dtm.provenance = policy;
  if (report) *report = rep;
  return dtm;
}

/// Reads the long format (block_id, lemma, n). Rows are ordered by the
/// (chapter, block) pair parsed from block_id; duplicate cells are summed.
inline DocumentTermMatrix load_long_format(const std::filesystem::path& path) {
  const Table t = read_table(path);
  const auto c_block = t.column("block_id");
  const auto c_lemma = t.column("lemma");
  const auto c_n = t.column("n");
  if (t.rows.empty()) throw InputError(t.source + ": empty file");

  std::map<std::pair<int, int>, std::string> ids;
  std::map<std::pair<int, int>, std::map<std::string, std::int64_t>> by_block;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto id = std::string(text::trim(row[c_block]));
    const auto key = parse_block_id(id);
    if (!key) throw InputError(t.where(r) + ": malformed block_id '" + id + "' (expected C<int>_B<int>)");
    std::int64_t n = 0;
    if (!text::parse_int(row[c_n], n) || n < 0) {
      throw InputError(t.where(r) + ": n must be a non-negative integer, got '" + row[c_n] + "'");
    }
    const auto lemma = std::string(text::trim(row[c_lemma]));
    if (lemma.empty()) throw InputError(t.where(r) + ": empty lemma");
    const auto [it, inserted] = ids.emplace(*key, id);
    if (!inserted && it->second != id) {
      throw InputError(t.where(r) + ": block_id '" + id + "' collides with '" + it->second + "'");
    }
    by_block[*key][lemma] += n;
  }

  std::vector<std::string> block_ids;
  std::vector<std::map<std::string, std::int64_t>> cells;
  for (auto& [key, row] : by_block) {
    block_ids.push_back(ids[key]);
    cells.push_back(std::move(row));
  }
  auto dtm = DocumentTermMatrix::from_cells(std::move(block_ids), cells);
  if (dtm.n_terms() == 0) throw EmptyResultError(t.source + ": all counts are zero");
  return dtm;
}

inline std::string long_format_string(const DocumentTermMatrix& dtm) {
  CsvWriter w;
  w.row({"block_id", "lemma", "n"});
  for (std::size_t d = 0; d < dtm.n_docs(); ++d) {
    for (const auto& [col, n] : dtm.rows[d]) w.row({dtm.block_ids[d], dtm.lemmas[col], std::to_string(n)});
  }
  return w.str();
}

inline void save_long_format(const std::filesystem::path& path, const DocumentTermMatrix& dtm) {
  write_text_file(path, long_format_string(dtm));
}

}  // namespace versetopics
