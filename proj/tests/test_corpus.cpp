#include <numeric>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "versetopics/corpus.hpp"
#include "versetopics/rng.hpp"

namespace vt = versetopics;
using vt::testing::ScratchDir;

namespace {

vt::TaggedToken tok(std::string lemma, vt::Pos pos, int chapter = 1, int stanza = 1, bool content = true) {
  vt::TaggedToken t;
  t.chapter = chapter;
  t.stanza = stanza;
  t.surface = lemma;
  t.lemma = std::move(lemma);
  t.pos = pos;
  t.is_content_stanza = content;
  return t;
}

std::vector<vt::TaggedToken> repeat(const std::string& lemma, vt::Pos pos, int n) {
  std::vector<vt::TaggedToken> out;
  for (int i = 0; i < n; ++i) out.push_back(tok(lemma, pos));
  return out;
}

template <class... Parts>
std::vector<vt::TaggedToken> concat(Parts&&... parts) {
  std::vector<vt::TaggedToken> out;
  (out.insert(out.end(), parts.begin(), parts.end()), ...);
  return out;
}

int count_pos(const std::vector<vt::TaggedToken>& toks, const std::string& lemma, vt::Pos pos) {
  return static_cast<int>(std::count_if(toks.begin(), toks.end(), [&](const auto& t) {
    return t.lemma == lemma && t.pos == pos;
  }));
}

}  // namespace

// --- verb reassignment -----------------------------------------------------

TEST(VerbReassignment, PromotesWhenAllGuardsPass) {
  // parlare: VERB 3x, NOUN 1x, share 0.75, length 7
  const auto in = concat(repeat("parlare", vt::Pos::Verb, 3), repeat("parlare", vt::Pos::Noun, 1));
  const auto out = vt::apply_verb_reassignment(in, {});
  EXPECT_EQ(count_pos(out, "parlare", vt::Pos::Verb), 4);
}

TEST(VerbReassignment, LengthGuard) {
  const auto in = concat(repeat("are", vt::Pos::Verb, 5), repeat("are", vt::Pos::Noun, 1));
  const auto out = vt::apply_verb_reassignment(in, {});
  EXPECT_EQ(count_pos(out, "are", vt::Pos::Noun), 1);
}

TEST(VerbReassignment, OccurrenceGuard) {
  const auto in = concat(repeat("amare", vt::Pos::Verb, 1), repeat("amare", vt::Pos::Noun, 1));
  const auto out = vt::apply_verb_reassignment(in, {});
  EXPECT_EQ(count_pos(out, "amare", vt::Pos::Noun), 1);
}

TEST(VerbReassignment, ShareGuardAndSuffixGuard) {
  // share 2/4 = 0.5 < 0.6
  auto in = concat(repeat("cantare", vt::Pos::Verb, 2), repeat("cantare", vt::Pos::Noun, 2));
  // no infinitive suffix
  auto other = concat(repeat("speranza", vt::Pos::Verb, 3), repeat("speranza", vt::Pos::Noun, 1));
  in.insert(in.end(), other.begin(), other.end());
  const auto out = vt::apply_verb_reassignment(in, {});
  EXPECT_EQ(count_pos(out, "cantare", vt::Pos::Noun), 2);
  EXPECT_EQ(count_pos(out, "speranza", vt::Pos::Noun), 1);
}

TEST(VerbReassignment, ShareBoundaryIsInclusive) {
  // 3 / 5 = 0.6 exactly
  const auto in = concat(repeat("dormire", vt::Pos::Verb, 3), repeat("dormire", vt::Pos::Adj, 2));
  const auto out = vt::apply_verb_reassignment(in, {});
  EXPECT_EQ(count_pos(out, "dormire", vt::Pos::Verb), 5);
}

TEST(VerbReassignment, LengthCountsCharactersNotBytes) {
  // "avère" has 5 characters but 6 bytes; min length 6 must reject it
  vt::VocabularyPolicy p;
  p.verb_reassign.min_lemma_length = 6;
  const auto in = concat(repeat("avère", vt::Pos::Verb, 3), repeat("avère", vt::Pos::Noun, 1));
  EXPECT_EQ(count_pos(vt::apply_verb_reassignment(in, p), "avère", vt::Pos::Noun), 1);
}

TEST(VerbReassignment, IsIdempotent) {
  const std::vector<std::string> lemmas{"parlare", "amare", "sentire", "vedere", "are", "casa", "fiorire", "tenere"};
  const std::vector<vt::Pos> tags{vt::Pos::Noun, vt::Pos::Verb, vt::Pos::Adj, vt::Pos::Propn, vt::Pos::Other};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    vt::Rng rng{seed};
    std::vector<vt::TaggedToken> in;
    const auto n = 5 + rng.below(60);
    for (std::uint64_t i = 0; i < n; ++i) {
      in.push_back(tok(lemmas[rng.below(lemmas.size())], tags[rng.below(tags.size())]));
      if (rng.uniform() < 0.4) in.back().pos = vt::Pos::Verb;
    }
    const auto once = vt::apply_verb_reassignment(in, {});
    const auto twice = vt::apply_verb_reassignment(once, {});
    for (std::size_t i = 0; i < once.size(); ++i) ASSERT_EQ(once[i].pos, twice[i].pos) << "seed " << seed;
  }
}

// --- segmentation ----------------------------------------------------------

TEST(Segmentation, TwentyOneStanzasMakeTwoBlocks) {
  const auto seg = vt::segment_blocks({21});
  ASSERT_EQ(seg.size(), 2u);
  EXPECT_EQ(seg.blocks[0].stanza_count, 11);
  EXPECT_EQ(seg.blocks[1].stanza_count, 10);
  EXPECT_EQ(seg.blocks[0].block_id, "C1_B1");
  EXPECT_EQ(seg.blocks[1].first_stanza, 12);
}

TEST(Segmentation, TenStanzasMakeOneBlock) {
  const auto seg = vt::segment_blocks({10});
  ASSERT_EQ(seg.size(), 1u);
  EXPECT_EQ(seg.blocks[0].stanza_count, 10);
}

TEST(Segmentation, TieGoesToFewerBlocks) {
  // s = 14: b=1 -> |14 - 10.5| = 3.5, b=2 -> |7 - 10.5| = 3.5
  EXPECT_EQ(vt::blocks_for_chapter(14, 10.5), 1);
}

TEST(Segmentation, CanonicalLayoutGivesThirtyFiveBlocks) {
  const std::vector<int> layout{63, 42, 41, 51, 43, 44, 52, 30};
  ASSERT_EQ(std::accumulate(layout.begin(), layout.end(), 0), 366);
  const auto seg = vt::segment_blocks(layout);
  EXPECT_EQ(seg.size(), 35u);
  for (const auto& b : seg.blocks) EXPECT_TRUE(b.stanza_count == 10 || b.stanza_count == 11) << b.block_id;
}

TEST(Segmentation, RejectsEmptyChapter) {
  EXPECT_THROW(vt::segment_blocks({12, 0, 9}), vt::InputError);
}

TEST(Segmentation, PartitionsEveryChapter) {
  vt::Rng rng{11};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> counts(1 + rng.below(9));
    for (auto& c : counts) c = 1 + static_cast<int>(rng.below(80));
    const double target = 3.0 + rng.uniform() * 15.0;
    const auto seg = vt::segment_blocks(counts, target);
    std::map<int, std::vector<int>> rebuilt;
    for (const auto& b : seg.blocks) {
      ASSERT_EQ(static_cast<int>(b.stanzas.size()), b.stanza_count);
      rebuilt[b.chapter].insert(rebuilt[b.chapter].end(), b.stanzas.begin(), b.stanzas.end());
    }
    for (std::size_t c = 0; c < counts.size(); ++c) {
      std::vector<int> expect(static_cast<std::size_t>(counts[c]));
      std::iota(expect.begin(), expect.end(), 1);
      ASSERT_EQ(rebuilt[static_cast<int>(c) + 1], expect);
    }
    // within a chapter sizes differ by at most one, larger first
    for (std::size_t i = 1; i < seg.blocks.size(); ++i) {
      const auto& a = seg.blocks[i - 1];
      const auto& b = seg.blocks[i];
      if (a.chapter == b.chapter) {
        ASSERT_GE(a.stanza_count, b.stanza_count);
        ASSERT_LE(a.stanza_count - b.stanza_count, 1);
      }
    }
  }
}

TEST(Segmentation, UsesOnlyContentStanzas) {
  std::vector<vt::TaggedToken> toks{tok("a", vt::Pos::Noun, 1, 1), tok("a", vt::Pos::Noun, 1, 2, false),
                                    tok("a", vt::Pos::Noun, 1, 3), tok("a", vt::Pos::Noun, 2, 5)};
  const auto layout = vt::layout_from_tokens(toks);
  EXPECT_EQ(layout.chapters.at(1), (std::vector<int>{1, 3}));
  const auto seg = vt::segment_layout(layout, 2.0);
  ASSERT_EQ(seg.size(), 2u);
  EXPECT_EQ(seg.blocks[0].first_stanza, 1);
  EXPECT_EQ(seg.blocks[0].last_stanza, 3);
  EXPECT_EQ(seg.blocks[1].block_id, "C2_B1");
}

// --- DTM construction ------------------------------------------------------

TEST(BuildDtm, MinimalInstance) {
  const auto toks = repeat("casa", vt::Pos::Noun, 3);
  const auto dtm = vt::build_dtm(toks, vt::segment_blocks({1}), {});
  ASSERT_EQ(dtm.n_docs(), 1u);
  ASSERT_EQ(dtm.n_terms(), 1u);
  EXPECT_EQ(dtm.count(0, 0), 3);
  EXPECT_EQ(dtm.block_ids[0], "C1_B1");
}

TEST(BuildDtm, AppliesPolicyInOrder) {
  vt::VocabularyPolicy p;
  p.stopwords = {"cosa"};
  std::vector<vt::TaggedToken> toks;
  for (int i = 0; i < 3; ++i) {
    toks.push_back(tok("Casa", vt::Pos::Noun, 1, 1));
    toks.push_back(tok("Tat'jana", vt::Pos::Propn, 1, 2));
    toks.push_back(tok("Cosa", vt::Pos::Noun, 1, 1));   // stop word after lowercasing
    toks.push_back(tok("andare", vt::Pos::Verb, 1, 1));  // VERB excluded
    toks.push_back(tok("nel", vt::Pos::Other, 1, 1));
  }
  toks.push_back(tok("raro", vt::Pos::Adj, 1, 1));   // below min_count
  toks.push_back(tok("casa", vt::Pos::Noun, 1, 3, false));  // non-content stanza
  vt::FilterReport rep;
  const auto dtm = vt::build_dtm(toks, vt::segment_layout(vt::layout_from_tokens(toks), 1.0), p, &rep);
  EXPECT_EQ(dtm.lemmas, (std::vector<std::string>{"Tat'jana", "casa"}));
  EXPECT_EQ(dtm.n_docs(), 2u);
  EXPECT_EQ(dtm.count(0, 1), 3);  // casa in stanza 1
  EXPECT_EQ(dtm.count(1, 0), 3);  // Tat'jana in stanza 2
  EXPECT_EQ(dtm.total(), rep.retained_tokens);
  EXPECT_EQ(rep.stopword_tokens, 3);
  EXPECT_EQ(rep.pos_filtered_tokens, 6);
  EXPECT_EQ(rep.non_content_tokens, 1);
  EXPECT_EQ(rep.below_min_count_lemmas, 1u);
  EXPECT_DOUBLE_EQ(dtm.sparsity(), 0.5);
}

TEST(BuildDtm, StopwordsRemovedBeforeThreshold) {
  // Removing "vento" as a stop word must not let its tokens prop up anything.
  vt::VocabularyPolicy p;
  p.stopwords = {"vento"};
  p.min_count = 2;
  auto toks = concat(repeat("vento", vt::Pos::Noun, 5), repeat("mare", vt::Pos::Noun, 2));
  const auto dtm = vt::build_dtm(toks, vt::segment_blocks({1}), p);
  EXPECT_EQ(dtm.lemmas, (std::vector<std::string>{"mare"}));
}

TEST(BuildDtm, IncludingVerbsGrowsVocabulary) {
  auto toks = concat(repeat("casa", vt::Pos::Noun, 3), repeat("andare", vt::Pos::Verb, 3));
  vt::VocabularyPolicy with_verbs;
  with_verbs.allowed_pos.insert(vt::Pos::Verb);
  EXPECT_EQ(vt::build_dtm(toks, vt::segment_blocks({1}), {}).n_terms(), 1u);
  EXPECT_EQ(vt::build_dtm(toks, vt::segment_blocks({1}), with_verbs).n_terms(), 2u);
}

TEST(BuildDtm, EmptyResultIsAnError) {
  const auto toks = repeat("casa", vt::Pos::Noun, 2);
  EXPECT_THROW(vt::build_dtm(toks, vt::segment_blocks({1}), {}), vt::EmptyResultError);
}

TEST(BuildDtm, UncoveredStanzaIsAnError) {
  std::vector<vt::TaggedToken> far{tok("casa", vt::Pos::Noun, 3, 1)};
  EXPECT_THROW(vt::build_dtm(far, vt::segment_blocks({1}), {}), vt::InputError);
}

TEST(BuildDtm, MinCountMonotonicity) {
  vt::Rng rng{21};
  std::vector<vt::TaggedToken> toks;
  for (int i = 0; i < 2000; ++i) {
    const auto w = rng.below(120);
    toks.push_back(tok("w" + std::to_string(w * w % 97), vt::Pos::Noun, 1 + static_cast<int>(rng.below(3)),
                       1 + static_cast<int>(rng.below(20))));
  }
  const auto seg = vt::segment_layout(vt::layout_from_tokens(toks));
  std::vector<std::string> previous;
  for (int m = 1; m <= 40; ++m) {
    vt::VocabularyPolicy p;
    p.min_count = m;
    std::vector<std::string> vocab;
    try {
      vocab = vt::build_dtm(toks, seg, p).lemmas;
    } catch (const vt::EmptyResultError&) {
    }
    if (m > 1) {
      ASSERT_LE(vocab.size(), previous.size());
      ASSERT_TRUE(std::includes(previous.begin(), previous.end(), vocab.begin(), vocab.end()));
    }
    previous = vocab;
  }
}

// --- long format -----------------------------------------------------------

TEST(LongFormat, ReshapesRows) {
  ScratchDir dir;
  const auto p = dir.write("dtm.csv", "block_id,lemma,n\nC1_B2,casa,1\nC1_B1,casa,2\n");
  const auto dtm = vt::load_long_format(p);
  ASSERT_EQ(dtm.block_ids, (std::vector<std::string>{"C1_B1", "C1_B2"}));
  EXPECT_EQ(dtm.count(0, 0), 2);
  EXPECT_EQ(dtm.count(1, 0), 1);
}

TEST(LongFormat, NarrativeOrderIsNumeric) {
  ScratchDir dir;
  const auto p = dir.write("dtm.csv", "block_id,lemma,n\nC10_B1,a,1\nC2_B10,a,1\nC2_B9,a,1\n");
  EXPECT_EQ(vt::load_long_format(p).block_ids, (std::vector<std::string>{"C2_B9", "C2_B10", "C10_B1"}));
}

TEST(LongFormat, SumsDuplicates) {
  ScratchDir dir;
  const auto p = dir.write("dtm.csv", "block_id,lemma,n\nC1_B1,casa,2\nC1_B1,casa,3\n");
  EXPECT_EQ(vt::load_long_format(p).count(0, 0), 5);
}

TEST(LongFormat, MalformedBlockIdNamesLine) {
  ScratchDir dir;
  const auto p = dir.write("dtm.csv", "block_id,lemma,n\nC1_B1,casa,2\nC1B1,casa,2\n");
  try {
    (void)vt::load_long_format(p);
    FAIL();
  } catch (const vt::InputError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(":3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("C1B1"), std::string::npos) << msg;
  }
}

TEST(LongFormat, RejectsBadCountsAndEmptyFiles) {
  ScratchDir dir;
  EXPECT_THROW(vt::load_long_format(dir.write("a.csv", "block_id,lemma,n\nC1_B1,casa,-1\n")), vt::InputError);
  EXPECT_THROW(vt::load_long_format(dir.write("b.csv", "block_id,lemma,n\nC1_B1,casa,2.5\n")), vt::InputError);
  EXPECT_THROW(vt::load_long_format(dir.write("c.csv", "")), vt::InputError);
  EXPECT_THROW(vt::load_long_format(dir.write("d.csv", "block_id,lemma,n\n")), vt::InputError);
  EXPECT_THROW(vt::load_long_format(dir.write("e.csv", "block,lemma,n\nC1_B1,a,1\n")), vt::InputError);
}

TEST(LongFormat, WriterIsBitExact) {
  ScratchDir dir;
  const auto p = dir.write("dtm.csv", "block_id,lemma,n\r\nC1_B1,\"a,b\",2\r\nC1_B1,Tat'jana,1\r\n");
  const auto dtm = vt::load_long_format(p);
  EXPECT_EQ(vt::long_format_string(dtm), "block_id,lemma,n\nC1_B1,Tat'jana,1\nC1_B1,\"a,b\",2\n");
}

TEST(LongFormat, RoundTripProperty) {
  ScratchDir dir;
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    vt::Rng rng{seed};
    std::string csv = "block_id,lemma,n\n";
    std::map<std::pair<std::string, std::string>, std::int64_t> cells;
    const auto rows = 1 + rng.below(60);
    for (std::uint64_t r = 0; r < rows; ++r) {
      const auto block = "C" + std::to_string(1 + rng.below(3)) + "_B" + std::to_string(1 + rng.below(4));
      const auto lemma = std::string(1, static_cast<char>('a' + rng.below(6))) + (rng.below(4) == 0 ? ",x" : "");
      const auto n = static_cast<std::int64_t>(1 + rng.below(9));
      csv += block + "," + vt::quote_field(lemma) + "," + std::to_string(n) + "\n";
      cells[{block, lemma}] += n;
    }
    const auto dtm = vt::load_long_format(dir.write("in.csv", csv));
    const auto out = dir / "out.csv";
    vt::save_long_format(out, dtm);
    const auto again = vt::load_long_format(out);
    std::map<std::pair<std::string, std::string>, std::int64_t> back;
    for (std::size_t d = 0; d < again.n_docs(); ++d) {
      for (const auto& [w, n] : again.rows[d]) back[{again.block_ids[d], again.lemmas[w]}] = n;
    }
    ASSERT_EQ(back, cells) << "seed " << seed;
    ASSERT_EQ(vt::long_format_string(again), vt::testing::slurp(out));
  }
}

// --- token files and policy config -----------------------------------------

TEST(TokenFile, ReadsTsvAndCsv) {
  ScratchDir dir;
  const std::string body =
      "chapter\tstanza\tline\tsurface\tlemma\tpos\tis_content_stanza\n"
      "1\t1\t1\tcasa\tcasa\tNOUN\t1\n"
      "1\t2\t\tTat'jana\tTat'jana\tPROPN\t0\n";
  const auto tsv = vt::load_tokens(dir.write("t.tsv", body));
  ASSERT_EQ(tsv.size(), 2u);
  EXPECT_EQ(tsv[1].lemma, "Tat'jana");
  EXPECT_EQ(tsv[1].pos, vt::Pos::Propn);
  EXPECT_FALSE(tsv[1].is_content_stanza);
  EXPECT_EQ(tsv[1].line, 0);

  std::string csv = body;
  std::replace(csv.begin(), csv.end(), '\t', ',');
  EXPECT_EQ(vt::load_tokens(dir.write("t.csv", csv)).size(), 2u);

  const auto out = dir / "copy.tsv";
  vt::save_tokens(out, tsv);
  EXPECT_EQ(vt::testing::slurp(out), body);
}

TEST(TokenFile, RejectsEmptyLemma) {
  ScratchDir dir;
  const auto p = dir.write("t.csv", "chapter,stanza,line,surface,lemma,pos,is_content_stanza\n1,1,1,x,  ,NOUN,1\n");
  EXPECT_THROW(vt::load_tokens(p), vt::InputError);
}

TEST(PolicyConfig, LoadsAllKeys) {
  ScratchDir dir;
  dir.write("stop.txt", "# list\naltro\ngrande\n");
  const auto p = dir.write("policy.cfg",
                           "allowed_pos = NOUN, ADJ\nmin_count = 2\nstopwords = cosa\nstopwords_file = stop.txt\n"
                           "[verb_reassign]\nmin_verb_share = 0.7\nmin_lemma_length = 6\n");
  const auto policy = vt::load_policy(vt::KeyValueFile::load(p));
  EXPECT_EQ(policy.allowed_pos, (std::set<vt::Pos>{vt::Pos::Noun, vt::Pos::Adj}));
  EXPECT_EQ(policy.min_count, 2);
  EXPECT_EQ(policy.stopwords, (std::set<std::string>{"altro", "cosa", "grande"}));
  EXPECT_DOUBLE_EQ(policy.verb_reassign.min_verb_share, 0.7);
  EXPECT_EQ(policy.verb_reassign.min_lemma_length, 6);
  EXPECT_EQ(policy.verb_reassign.min_verb_occurrences, 2);
}

TEST(PolicyConfig, RejectsInvalidValues) {
  ScratchDir dir;
  EXPECT_THROW(vt::load_policy(vt::KeyValueFile::load(dir.write("a.cfg", "min_count = 0\n"))), vt::InputError);
  EXPECT_THROW(vt::load_policy(vt::KeyValueFile::load(dir.write("b.cfg", "[verb_reassign]\nmin_verb_share = 0\n"))),
               vt::InputError);
  EXPECT_THROW(vt::load_policy(vt::KeyValueFile::load(dir.write("c.cfg", "allowed_pos = DET\n"))), vt::InputError);
}
