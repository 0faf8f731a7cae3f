#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "langadv/encoder.hpp"
#include "langadv/rng.hpp"

namespace langadv {

// ---------------------------------------------------------------------------
// Vocabulary: bijective token <-> id map with reserved pad and unknown ids.
// ---------------------------------------------------------------------------

class Vocab {
public:
    static constexpr int kPadId = 0;
    static constexpr int kUnkId = 1;
    static constexpr const char* kPadToken = "<pad>";
    static constexpr const char* kUnkToken = "<unk>";

    Vocab();

    // Returns the id of `token`, inserting it if absent.
    int add(const std::string& token);
    // Returns the id of `token`, or kUnkId when absent.
    int id_of(const std::string& token) const;
    bool contains(const std::string& token) const;
    const std::string& token_of(int id) const;
    int size() const { return static_cast<int>(tokens_.size()); }

private:
    std::unordered_map<std::string, int> ids_;
    std::vector<std::string> tokens_;
};

// ---------------------------------------------------------------------------
// BIO tag set: O plus B-/I- over {PER, LOC, ORG, MISC}, nine tags total.
// ---------------------------------------------------------------------------

inline constexpr int kNumEntityTypes = 4;
inline constexpr int kNumTags = 1 + 2 * kNumEntityTypes;
inline constexpr std::array<const char*, kNumTags> kTagNames = {
    "O", "B-PER", "I-PER", "B-LOC", "I-LOC", "B-ORG", "I-ORG", "B-MISC", "I-MISC"};
inline constexpr std::array<const char*, kNumEntityTypes> kEntityTypeNames = {"PER", "LOC",
                                                                              "ORG", "MISC"};

const std::string& tag_name(int tag);
int tag_index(const std::string& name);  // -1 when unknown
inline bool tag_is_begin(int tag) { return tag > 0 && tag % 2 == 1; }
inline bool tag_is_inside(int tag) { return tag > 0 && tag % 2 == 0; }
inline int tag_entity_type(int tag) { return tag > 0 ? (tag - 1) / 2 : -1; }
inline int begin_tag(int type) { return 1 + 2 * type; }
inline int inside_tag(int type) { return 2 + 2 * type; }

// Rewrites orphan I-X tags (sentence-initial, or following O or a different
// type) to B-X. Returns the number of tags changed.
long repair_bio(std::vector<int>& tags);

// ---------------------------------------------------------------------------
// Documents and sentences.
// ---------------------------------------------------------------------------

struct LabeledDoc {
    std::uint64_t id = 0;
    std::vector<std::string> tokens;
    int label = -1;  // class index; -1 marks an unlabeled document
    int lang_a = 1;  // 1 when the document is in language A
};

struct TaggedSentence {
    std::uint64_t id = 0;
    std::vector<std::string> tokens;
    std::vector<int> tags;  // indices into kTagNames, same length as tokens
    int lang_a = 1;
};

struct ParallelPair {
    LabeledDoc source;      // language A
    LabeledDoc translated;  // language B
    int label = -1;
};

struct ParallelSentencePair {
    TaggedSentence source;
    TaggedSentence translated;
};

// ---------------------------------------------------------------------------
// Generation spec.
// ---------------------------------------------------------------------------

struct CorpusSpec {
    int num_classes = 4;
    int vocab_per_language = 60;    // tokens visible per language (anchors + specifics)
    double anchor_fraction = 0.2;   // share of the per-language vocabulary common to both
    double keyword_rate = 0.3;      // per-token probability of drawing from the class pool
    int doc_len_min = 10;
    int doc_len_max = 20;
    double entity_density = 0.25;   // target share of tokens inside entity spans
    int local_shuffle_window = 2;   // max positional displacement under translation
    std::uint64_t seed = 1;

    int train_docs = 1000;
    int dev_docs = 200;
    int unlabeled_docs = 400;
    int test_docs = 400;
    int parallel_docs = 300;

    void validate() const;      // throws std::invalid_argument
    void validate_ner() const;  // additionally checks entity_density against the length range
};

// ---------------------------------------------------------------------------
// Translation: a token bijection fixing anchors, plus a bounded local shuffle.
// ---------------------------------------------------------------------------

struct TokenMapping {
    std::unordered_map<std::string, std::string> forward;

    const std::string& apply(const std::string& token) const;  // throws when absent
    TokenMapping inverse() const;
};

// Maps every token through `mapping`, then applies a seeded local shuffle in
// which no token moves more than `window` positions. Labels are preserved.
LabeledDoc translate(const LabeledDoc& doc, const TokenMapping& mapping, int window, Rng& rng);

// Tag-aware variant: each entity span moves as one atomic unit, so BIO
// validity and the entity-type multiset are preserved.
TaggedSentence translate(const TaggedSentence& sent, const TokenMapping& mapping, int window,
                         Rng& rng);

// ---------------------------------------------------------------------------
// Generated corpora.
// ---------------------------------------------------------------------------

struct ClassificationCorpus {
    Vocab vocab;  // pad, unk, anchors, A-specific, B-specific (fixed order)
    int num_classes = 0;
    std::vector<LabeledDoc> train_a;
    std::vector<LabeledDoc> dev_a;
    std::vector<LabeledDoc> unlabeled_b;  // labels withheld (-1)
    std::vector<LabeledDoc> test_b;
    std::vector<ParallelPair> pairs;
    TokenMapping mapping;
};

struct NerCorpus {
    Vocab vocab;
    std::vector<TaggedSentence> train_a;
    std::vector<TaggedSentence> dev_a;
    std::vector<TaggedSentence> unlabeled_b;
    std::vector<TaggedSentence> test_b;
    std::vector<ParallelSentencePair> pairs;
    TokenMapping mapping;
};

// Both generators are pure functions of the spec: identical specs produce
// byte-identical corpora. All labeled splits are exactly class-balanced, and
// every split is drawn fresh (disjoint document ids by construction).
ClassificationCorpus gen_classification_corpus(const CorpusSpec& spec);
NerCorpus gen_ner_corpus(const CorpusSpec& spec);

// ---------------------------------------------------------------------------
// Parsers for external formats.
// ---------------------------------------------------------------------------

// CoNLL column format: one token per line, final column the BIO tag, blank
// line between sentences. Orphan I-X tags are repaired to B-X and counted.
struct ConllParseResult {
    std::vector<TaggedSentence> sentences;
    long repaired_tags = 0;
};
ConllParseResult parse_conll(std::istream& in, int lang_a = 1);

inline const std::vector<std::string> kMldocLabels = {"CCAT", "ECAT", "GCAT", "MCAT"};

// MLDoc-style TSV: label<TAB>text, one document per line; blank lines are
// skipped. Tokens are whitespace-split; tokens missing from `vocab` are
// replaced with the unknown token.
std::vector<LabeledDoc> parse_mldoc_tsv(std::istream& in, const Vocab& vocab,
                                        const std::vector<std::string>& labels = kMldocLabels,
                                        int lang_a = 1);

// ---------------------------------------------------------------------------
// Serialization. Field order (tab-separated, one record per line):
//   labeled docs:     language tag (A|B) <TAB> label (int or "-") <TAB> tokens
//   tagged sentences: language tag (A|B) <TAB> tags (space-joined) <TAB> tokens
//   parallel pairs:   label <TAB> source tokens <TAB> translated tokens
//   vocab:            one token per line, in id order
// ---------------------------------------------------------------------------

void write_labeled_docs(std::ostream& out, const std::vector<LabeledDoc>& docs);
std::vector<LabeledDoc> read_labeled_docs(std::istream& in);

void write_tagged_sentences(std::ostream& out, const std::vector<TaggedSentence>& sents);
std::vector<TaggedSentence> read_tagged_sentences(std::istream& in);

void write_parallel_pairs(std::ostream& out, const std::vector<ParallelPair>& pairs);
std::vector<ParallelPair> read_parallel_pairs(std::istream& in);

void write_vocab(std::ostream& out, const Vocab& vocab);
Vocab read_vocab(std::istream& in);

// ---------------------------------------------------------------------------
// Batch encoding for the encoder.
// ---------------------------------------------------------------------------

// Builds ids+mask from token rows; rows longer than max_len are truncated,
// shorter ones padded with the pad id.
TokenBatch encode_batch(const Vocab& vocab, const std::vector<std::vector<std::string>>& rows,
                        int max_len);

// FNV-1a 64-bit content digest (manifest fingerprints, not cryptographic).
std::uint64_t fnv1a_64(std::string_view data);
std::uint64_t fnv1a_64_file(const std::string& path);

}  // namespace langadv
