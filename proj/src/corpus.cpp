#include "langadv/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace langadv {

namespace {

std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        std::size_t j = i;
        while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
        if (j > i) out.emplace_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += ' ';
        out += parts[i];
    }
    return out;
}

bool next_line(std::istream& in, std::string& line, long& lineno) {
    if (!std::getline(in, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

bool is_blank(const std::string& line) {
    return std::all_of(line.begin(), line.end(),
                       [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

}  // namespace

// --------------------------------------------------------------------------
// Vocab
// --------------------------------------------------------------------------

Vocab::Vocab() {
    add(kPadToken);
    add(kUnkToken);
}

int Vocab::add(const std::string& token) {
    auto it = ids_.find(token);
    if (it != ids_.end()) return it->second;
    int id = static_cast<int>(tokens_.size());
    ids_.emplace(token, id);
    tokens_.push_back(token);
    return id;
}

int Vocab::id_of(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnkId : it->second;
}

bool Vocab::contains(const std::string& token) const { return ids_.count(token) != 0; }

const std::string& Vocab::token_of(int id) const {
    if (id < 0 || id >= size())
        throw std::invalid_argument("vocab: id out of range: " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
}

// --------------------------------------------------------------------------
// Tags
// --------------------------------------------------------------------------

const std::string& tag_name(int tag) {
    static const std::vector<std::string> names(kTagNames.begin(), kTagNames.end());
    if (tag < 0 || tag >= kNumTags)
        throw std::invalid_argument("tag out of range: " + std::to_string(tag));
    return names[static_cast<std::size_t>(tag)];
}

int tag_index(const std::string& name) {
    for (int i = 0; i < kNumTags; ++i)
        if (name == kTagNames[static_cast<std::size_t>(i)]) return i;
    return -1;
}

long repair_bio(std::vector<int>& tags) {
    long fixed = 0;
    int open_type = -1;  // entity type continued by the previous tag, -1 when none
    for (int& t : tags) {
        if (t < 0 || t >= kNumTags)
            throw std::invalid_argument("repair_bio: tag out of range: " + std::to_string(t));
        if (tag_is_inside(t)) {
            int ty = tag_entity_type(t);
            if (open_type != ty) {
                t = begin_tag(ty);
                ++fixed;
            }
            open_type = ty;
        } else if (tag_is_begin(t)) {
            open_type = tag_entity_type(t);
        } else {
            open_type = -1;
        }
    }
    return fixed;
}

// --------------------------------------------------------------------------
// Spec validation and the token inventory
// --------------------------------------------------------------------------

namespace {

// Keyword pool layout over a per-language vocabulary of V tokens:
//   n_anchor = round(anchor_fraction * V) tokens shared by both languages,
//   the remaining n_spec tokens exist per language (a_i <-> b_i bijection).
// Every language-specific token belongs to a class pool (n_spec / K each;
// any division remainder joins the background), and each pool additionally
// holds exactly one anchor. The background is therefore almost entirely
// shared: the class keywords carry both the class signal and essentially all
// of the language signal. The lone anchor per pool pins the class
// correspondence across languages (pure distribution matching cannot
// distinguish a cluster permutation) without handing the class signal to
// both languages wholesale. When one side is empty (anchor_fraction 0 or 1),
// pools fall back to half the vocabulary, max(2, V / (2K)) keywords each.
struct PoolLayout {
    int n_anchor = 0;
    int n_spec = 0;
    int kw_anchor = 0;
    int kw_spec = 0;
};

PoolLayout pool_layout(int vocab_per_language, double anchor_fraction, int num_pools) {
    PoolLayout l;
    const int v = vocab_per_language;
    l.n_anchor = std::clamp(static_cast<int>(std::lround(anchor_fraction * v)), 0, v);
    l.n_spec = v - l.n_anchor;
    if (l.n_anchor == 0 || l.n_spec == 0) {
        const int kw_per_class = std::max(2, v / (2 * num_pools));
        l.kw_anchor = l.n_spec == 0 ? kw_per_class : 0;
        l.kw_spec = kw_per_class - l.kw_anchor;
    } else {
        l.kw_anchor = 1;
        l.kw_spec = l.n_spec / num_pools;
    }
    const int used_anchor = num_pools * l.kw_anchor;
    const int used_spec = num_pools * l.kw_spec;
    const int background = (l.n_anchor - used_anchor) + (l.n_spec - used_spec);
    if (used_anchor > l.n_anchor || used_spec > l.n_spec || background < 2)
        throw std::invalid_argument(
            "corpus spec: vocab too small for keyword pools (vocab_per_language=" +
            std::to_string(v) + ", pools=" + std::to_string(num_pools) + ")");
    return l;
}

void check_common(const CorpusSpec& s) {
    if (s.num_classes < 2) throw std::invalid_argument("corpus spec: num_classes must be >= 2");
    if (s.anchor_fraction < 0.0 || s.anchor_fraction > 1.0)
        throw std::invalid_argument("corpus spec: anchor_fraction must lie in [0, 1]");
    if (s.keyword_rate < 0.0 || s.keyword_rate > 1.0)
        throw std::invalid_argument("corpus spec: keyword_rate must lie in [0, 1]");
    if (s.doc_len_min < 1 || s.doc_len_max < s.doc_len_min)
        throw std::invalid_argument("corpus spec: need 1 <= doc_len_min <= doc_len_max");
    if (s.local_shuffle_window < 0)
        throw std::invalid_argument("corpus spec: local_shuffle_window must be >= 0");
    if (s.train_docs < 0 || s.dev_docs < 0 || s.unlabeled_docs < 0 || s.test_docs < 0 ||
        s.parallel_docs < 0)
        throw std::invalid_argument("corpus spec: split sizes must be >= 0");
}

struct Inventory {
    std::vector<std::string> anchors;
    std::vector<std::string> a_spec;
    std::vector<std::string> b_spec;
    std::vector<std::vector<std::string>> pools;  // A-side keywords per class
    std::vector<std::string> background;          // A-side non-keyword tokens
    TokenMapping mapping;                         // anchors fixed, a_i -> b_i
};

Inventory build_inventory(const CorpusSpec& spec, int num_pools) {
    const PoolLayout l = pool_layout(spec.vocab_per_language, spec.anchor_fraction, num_pools);
    Inventory inv;
    for (int i = 0; i < l.n_anchor; ++i) inv.anchors.push_back("anc" + std::to_string(i));
    for (int i = 0; i < l.n_spec; ++i) {
        inv.a_spec.push_back("a" + std::to_string(i));
        inv.b_spec.push_back("b" + std::to_string(i));
    }
    inv.pools.resize(static_cast<std::size_t>(num_pools));
    for (int k = 0; k < num_pools; ++k) {
        auto& pool = inv.pools[static_cast<std::size_t>(k)];
        for (int i = 0; i < l.kw_anchor; ++i)
            pool.push_back(inv.anchors[static_cast<std::size_t>(k * l.kw_anchor + i)]);
        for (int i = 0; i < l.kw_spec; ++i)
            pool.push_back(inv.a_spec[static_cast<std::size_t>(k * l.kw_spec + i)]);
    }
    for (int i = num_pools * l.kw_anchor; i < l.n_anchor; ++i)
        inv.background.push_back(inv.anchors[static_cast<std::size_t>(i)]);
    for (int i = num_pools * l.kw_spec; i < l.n_spec; ++i)
        inv.background.push_back(inv.a_spec[static_cast<std::size_t>(i)]);
    for (const auto& t : inv.anchors) inv.mapping.forward.emplace(t, t);
    for (int i = 0; i < l.n_spec; ++i)
        inv.mapping.forward.emplace(inv.a_spec[static_cast<std::size_t>(i)],
                                    inv.b_spec[static_cast<std::size_t>(i)]);
    return inv;
}

Vocab inventory_vocab(const Inventory& inv) {
    Vocab v;
    for (const auto& t : inv.anchors) v.add(t);
    for (const auto& t : inv.a_spec) v.add(t);
    for (const auto& t : inv.b_spec) v.add(t);
    return v;
}

const std::string& pick(const std::vector<std::string>& pool, Rng& rng) {
    return pool[static_cast<std::size_t>(rng.uniform(pool.size()))];
}

}  // namespace

void CorpusSpec::validate() const {
    check_common(*this);
    pool_layout(vocab_per_language, anchor_fraction, num_classes);
    const std::array<std::pair<int, const char*>, 3> balanced = {
        {{train_docs, "train_docs"}, {dev_docs, "dev_docs"}, {test_docs, "test_docs"}}};
    for (const auto& [count, name] : balanced)
        if (count % num_classes != 0)
            throw std::invalid_argument(std::string("corpus spec: ") + name +
                                        " must be divisible by num_classes for exact balance");
}

void CorpusSpec::validate_ner() const {
    check_common(*this);
    pool_layout(vocab_per_language, anchor_fraction, kNumEntityTypes);
    if (entity_density < 0.0 || entity_density > 0.9 ||
        (entity_density > 0.0 && doc_len_min < 2)) {
        std::ostringstream msg;
        msg << "corpus spec: entity_density " << entity_density
            << " incompatible with doc length range [" << doc_len_min << ", " << doc_len_max
            << "] (need 0 <= density <= 0.9 and doc_len_min >= 2 when positive)";
        throw std::invalid_argument(msg.str());
    }
}

// --------------------------------------------------------------------------
// Translation
// --------------------------------------------------------------------------

const std::string& TokenMapping::apply(const std::string& token) const {
    auto it = forward.find(token);
    if (it == forward.end())
        throw std::invalid_argument("translate: token outside mapping domain: " + token);
    return it->second;
}

TokenMapping TokenMapping::inverse() const {
    TokenMapping inv;
    for (const auto& [src, dst] : forward)
        if (!inv.forward.emplace(dst, src).second)
            throw std::invalid_argument("mapping not bijective at token: " + dst);
    return inv;
}

namespace {

// Stable sort of unit indices by key i + u_i with u_i uniform in [0, window):
// no unit is displaced by more than `window` positions in either direction.
std::vector<int> shuffled_order(int n, int window, Rng& rng) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    if (window <= 0 || n <= 1) return order;
    std::vector<double> key(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        key[static_cast<std::size_t>(i)] = i + rng.uniform_real() * window;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return key[static_cast<std::size_t>(a)] < key[static_cast<std::size_t>(b)];
    });
    return order;
}

}  // namespace

LabeledDoc translate(const LabeledDoc& doc, const TokenMapping& mapping, int window, Rng& rng) {
    if (window < 0) throw std::invalid_argument("translate: window must be >= 0");
    LabeledDoc out = doc;
    out.lang_a = 0;
    for (auto& t : out.tokens) t = mapping.apply(t);
    const auto order = shuffled_order(static_cast<int>(out.tokens.size()), window, rng);
    std::vector<std::string> shuffled;
    shuffled.reserve(out.tokens.size());
    for (int i : order) shuffled.push_back(std::move(out.tokens[static_cast<std::size_t>(i)]));
    out.tokens = std::move(shuffled);
    return out;
}

TaggedSentence translate(const TaggedSentence& sent, const TokenMapping& mapping, int window,
                         Rng& rng) {
    if (window < 0) throw std::invalid_argument("translate: window must be >= 0");
    if (sent.tokens.size() != sent.tags.size())
        throw std::invalid_argument("translate: token/tag length mismatch");
    // Units: single O tokens and maximal B-X (I-X)* spans, moved atomically.
    struct Unit {
        int begin;
        int end;
    };
    std::vector<Unit> units;
    const int n = static_cast<int>(sent.tokens.size());
    for (int i = 0; i < n;) {
        int j = i + 1;
        if (tag_is_begin(sent.tags[static_cast<std::size_t>(i)])) {
            const int ty = tag_entity_type(sent.tags[static_cast<std::size_t>(i)]);
            while (j < n && sent.tags[static_cast<std::size_t>(j)] == inside_tag(ty)) ++j;
        }
        units.push_back({i, j});
        i = j;
    }
    const auto order = shuffled_order(static_cast<int>(units.size()), window, rng);
    TaggedSentence out;
    out.id = sent.id;
    out.lang_a = 0;
    out.tokens.reserve(sent.tokens.size());
    out.tags.reserve(sent.tags.size());
    for (int u : order) {
        const Unit unit = units[static_cast<std::size_t>(u)];
        for (int i = unit.begin; i < unit.end; ++i) {
            out.tokens.push_back(mapping.apply(sent.tokens[static_cast<std::size_t>(i)]));
            out.tags.push_back(sent.tags[static_cast<std::size_t>(i)]);
        }
    }
    return out;
}

// --------------------------------------------------------------------------
// Generators
// --------------------------------------------------------------------------

namespace {

std::vector<std::string> sample_doc_tokens(const Inventory& inv, int cls, const CorpusSpec& spec,
                                           Rng& rng) {
    const int len = rng.uniform_int(spec.doc_len_min, spec.doc_len_max);
    std::vector<std::string> tokens;
    tokens.reserve(static_cast<std::size_t>(len));
    const auto& pool = inv.pools[static_cast<std::size_t>(cls)];
    for (int i = 0; i < len; ++i) {
        if (rng.uniform_real() < spec.keyword_rate)
            tokens.push_back(pick(pool, rng));
        else
            tokens.push_back(pick(inv.background, rng));
    }
    return tokens;
}

TaggedSentence sample_sentence(const Inventory& inv, const CorpusSpec& spec, Rng& rng) {
    const int len = rng.uniform_int(spec.doc_len_min, spec.doc_len_max);
    // Per-position entity start probability q chosen so that the expected
    // share of tokens inside entities matches entity_density, given a mean
    // span length of 2 (spans are uniform over 1..3 tokens).
    const double d = spec.entity_density;
    const double q = d > 0.0 ? d / (2.0 * (1.0 - d) + d) : 0.0;
    TaggedSentence s;
    int pos = 0;
    while (pos < len) {
        if (q > 0.0 && rng.uniform_real() < q) {
            const int span = std::min(rng.uniform_int(1, 3), len - pos);
            const int type = static_cast<int>(rng.uniform(kNumEntityTypes));
            const auto& pool = inv.pools[static_cast<std::size_t>(type)];
            for (int i = 0; i < span; ++i) {
                s.tokens.push_back(pick(pool, rng));
                s.tags.push_back(i == 0 ? begin_tag(type) : inside_tag(type));
            }
            pos += span;
        } else {
            s.tokens.push_back(pick(inv.background, rng));
            s.tags.push_back(0);
            ++pos;
        }
    }
    return s;
}

}  // namespace

ClassificationCorpus gen_classification_corpus(const CorpusSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const Inventory inv = build_inventory(spec, spec.num_classes);

    ClassificationCorpus corpus;
    corpus.vocab = inventory_vocab(inv);
    corpus.num_classes = spec.num_classes;
    corpus.mapping = inv.mapping;

    std::uint64_t next_id = 1;
    auto make_a = [&](int cls) {
        LabeledDoc d;
        d.id = next_id++;
        d.tokens = sample_doc_tokens(inv, cls, spec, rng);
        d.label = cls;
        d.lang_a = 1;
        return d;
    };
    auto make_b = [&](int cls) {
        LabeledDoc src = make_a(cls);
        LabeledDoc b = translate(src, corpus.mapping, spec.local_shuffle_window, rng);
        b.id = next_id++;
        return b;
    };

    for (int i = 0; i < spec.train_docs; ++i)
        corpus.train_a.push_back(make_a(i % spec.num_classes));
    for (int i = 0; i < spec.dev_docs; ++i) corpus.dev_a.push_back(make_a(i % spec.num_classes));
    for (int i = 0; i < spec.unlabeled_docs; ++i) {
        LabeledDoc b = make_b(i % spec.num_classes);
        b.label = -1;
        corpus.unlabeled_b.push_back(std::move(b));
    }
    for (int i = 0; i < spec.test_docs; ++i) corpus.test_b.push_back(make_b(i % spec.num_classes));
    for (int i = 0; i < spec.parallel_docs; ++i) {
        ParallelPair pair;
        pair.source = make_a(i % spec.num_classes);
        pair.translated = translate(pair.source, corpus.mapping, spec.local_shuffle_window, rng);
        pair.translated.id = next_id++;
        pair.label = pair.source.label;
        corpus.pairs.push_back(std::move(pair));
    }
    return corpus;
}

NerCorpus gen_ner_corpus(const CorpusSpec& spec) {
    spec.validate_ner();
    Rng rng(spec.seed);
    const Inventory inv = build_inventory(spec, kNumEntityTypes);

    NerCorpus corpus;
    corpus.vocab = inventory_vocab(inv);
    corpus.mapping = inv.mapping;

    std::uint64_t next_id = 1;
    auto make_a = [&] {
        TaggedSentence s = sample_sentence(inv, spec, rng);
        s.id = next_id++;
        s.lang_a = 1;
        return s;
    };
    auto make_b = [&] {
        TaggedSentence src = make_a();
        TaggedSentence b = translate(src, corpus.mapping, spec.local_shuffle_window, rng);
        b.id = next_id++;
        return b;
    };

    for (int i = 0; i < spec.train_docs; ++i) corpus.train_a.push_back(make_a());
    for (int i = 0; i < spec.dev_docs; ++i) corpus.dev_a.push_back(make_a());
    for (int i = 0; i < spec.unlabeled_docs; ++i) corpus.unlabeled_b.push_back(make_b());
    for (int i = 0; i < spec.test_docs; ++i) corpus.test_b.push_back(make_b());
    for (int i = 0; i < spec.parallel_docs; ++i) {
        ParallelSentencePair pair;
        pair.source = make_a();
        pair.translated = translate(pair.source, corpus.mapping, spec.local_shuffle_window, rng);
        pair.translated.id = next_id++;
        corpus.pairs.push_back(std::move(pair));
    }
    return corpus;
}

// --------------------------------------------------------------------------
// Parsers
// --------------------------------------------------------------------------

ConllParseResult parse_conll(std::istream& in, int lang_a) {
    ConllParseResult result;
    TaggedSentence current;
    std::uint64_t next_id = 1;
    auto flush = [&] {
        if (current.tokens.empty()) return;
        result.repaired_tags += repair_bio(current.tags);
        current.id = next_id++;
        current.lang_a = lang_a;
        result.sentences.push_back(std::move(current));
        current = TaggedSentence{};
    };

    std::string line;
    long lineno = 0;
    while (next_line(in, line, lineno)) {
        if (is_blank(line)) {
            flush();
            continue;
        }
        const auto cols = split_ws(line);
        if (cols.size() < 2)
            throw std::runtime_error("conll: line " + std::to_string(lineno) +
                                     ": expected at least 2 columns");
        const int tag = tag_index(cols.back());
        if (tag < 0)
            throw std::runtime_error("conll: line " + std::to_string(lineno) + ": unknown tag " +
                                     cols.back());
        current.tokens.push_back(cols.front());
        current.tags.push_back(tag);
    }
    flush();
    return result;
}

std::vector<LabeledDoc> parse_mldoc_tsv(std::istream& in, const Vocab& vocab,
                                        const std::vector<std::string>& labels, int lang_a) {
    std::vector<LabeledDoc> docs;
    std::string line;
    long lineno = 0;
    while (next_line(in, line, lineno)) {
        if (is_blank(line)) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("mldoc: line " + std::to_string(lineno) + ": missing tab");
        const std::string label_str = line.substr(0, tab);
        const auto it = std::find(labels.begin(), labels.end(), label_str);
        if (it == labels.end())
            throw std::runtime_error("mldoc: line " + std::to_string(lineno) +
                                     ": unknown label " + label_str);
        LabeledDoc doc;
        doc.id = docs.size() + 1;
        doc.label = static_cast<int>(it - labels.begin());
        doc.lang_a = lang_a;
        doc.tokens = split_ws(std::string_view(line).substr(tab + 1));
        for (auto& t : doc.tokens)
            if (!vocab.contains(t)) t = Vocab::kUnkToken;
        docs.push_back(std::move(doc));
    }
    return docs;
}

// --------------------------------------------------------------------------
// Serialization
// --------------------------------------------------------------------------

namespace {

const char* lang_tag(int lang_a) { return lang_a ? "A" : "B"; }

int parse_lang(const std::string& s, long lineno) {
    if (s == "A") return 1;
    if (s == "B") return 0;
    throw std::runtime_error("corpus: line " + std::to_string(lineno) + ": bad language tag " + s);
}

int parse_label(const std::string& s, long lineno) {
    if (s == "-") return -1;
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("corpus: line " + std::to_string(lineno) + ": bad label " + s);
    }
}

std::array<std::string, 3> three_fields(const std::string& line, long lineno) {
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
        throw std::runtime_error("corpus: line " + std::to_string(lineno) +
                                 ": expected 3 tab-separated fields");
    return {line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), line.substr(t2 + 1)};
}

}  // namespace

void write_labeled_docs(std::ostream& out, const std::vector<LabeledDoc>& docs) {
    for (const auto& d : docs) {
        out << lang_tag(d.lang_a) << '\t';
        if (d.label < 0)
            out << '-';
        else
            out << d.label;
        out << '\t' << join(d.tokens) << '\n';
    }
}

std::vector<LabeledDoc> read_labeled_docs(std::istream& in) {
    std::vector<LabeledDoc> docs;
    std::string line;
    long lineno = 0;
    while (next_line(in, line, lineno)) {
        if (is_blank(line)) continue;
        const auto f = three_fields(line, lineno);
        LabeledDoc d;
        d.id = docs.size() + 1;
        d.lang_a = parse_lang(f[0], lineno);
        d.label = parse_label(f[1], lineno);
        d.tokens = split_ws(f[2]);
        docs.push_back(std::move(d));
    }
    return docs;
}

void write_tagged_sentences(std::ostream& out, const std::vector<TaggedSentence>& sents) {
    for (const auto& s : sents) {
        if (s.tokens.size() != s.tags.size())
            throw std::invalid_argument("corpus: token/tag length mismatch in sentence " +
                                        std::to_string(s.id));
        out << lang_tag(s.lang_a) << '\t';
        for (std::size_t i = 0; i < s.tags.size(); ++i) {
            if (i) out << ' ';
            out << tag_name(s.tags[i]);
        }
        out << '\t' << join(s.tokens) << '\n';
    }
}

std::vector<TaggedSentence> read_tagged_sentences(std::istream& in) {
    std::vector<TaggedSentence> sents;
    std::string line;
    long lineno = 0;
    while (next_line(in, line, lineno)) {
        if (is_blank(line)) continue;
        const auto f = three_fields(line, lineno);
        TaggedSentence s;
        s.id = sents.size() + 1;
        s.lang_a = parse_lang(f[0], lineno);
        for (const auto& name : split_ws(f[1])) {
            const int tag = tag_index(name);
            if (tag < 0)
                throw std::runtime_error("corpus: line " + std::to_string(lineno) +
                                         ": unknown tag " + name);
            s.tags.push_back(tag);
        }
        s.tokens = split_ws(f[2]);
        if (s.tokens.size() != s.tags.size())
            throw std::runtime_error("corpus: line " + std::to_string(lineno) +
                                     ": token/tag count mismatch");
        sents.push_back(std::move(s));
    }
    return sents;
}

void write_parallel_pairs(std::ostream& out, const std::vector<ParallelPair>& pairs) {
    for (const auto& p : pairs)
        out << p.label << '\t' << join(p.source.tokens) << '\t' << join(p.translated.tokens)
            << '\n';
}

std::vector<ParallelPair> read_parallel_pairs(std::istream& in) {
    std::vector<ParallelPair> pairs;
    std::string line;
    long lineno = 0;
    while (next_line(in, line, lineno)) {
        if (is_blank(line)) continue;
        const auto f = three_fields(line, lineno);
        ParallelPair p;
        p.label = parse_label(f[0], lineno);
        p.source.id = 2 * pairs.size() + 1;
        p.source.label = p.label;
        p.source.lang_a = 1;
        p.source.tokens = split_ws(f[1]);
        p.translated.id = 2 * pairs.size() + 2;
        p.translated.label = p.label;
        p.translated.lang_a = 0;
        p.translated.tokens = split_ws(f[2]);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

void write_vocab(std::ostream& out, const Vocab& vocab) {
    for (int i = 0; i < vocab.size(); ++i) out << vocab.token_of(i) << '\n';
}

Vocab read_vocab(std::istream& in) {
    Vocab vocab;
    std::string line;
    long lineno = 0;
    while (next_line(in, line, lineno)) {
        if (line.empty())
            throw std::runtime_error("vocab: line " + std::to_string(lineno) + ": empty token");
        if (lineno == 1) {
            if (line != Vocab::kPadToken)
                throw std::runtime_error("vocab: line 1 must be " + std::string(Vocab::kPadToken));
            continue;
        }
        if (lineno == 2) {
            if (line != Vocab::kUnkToken)
                throw std::runtime_error("vocab: line 2 must be " + std::string(Vocab::kUnkToken));
            continue;
        }
        const int before = vocab.size();
        if (vocab.add(line) < before)
            throw std::runtime_error("vocab: line " + std::to_string(lineno) +
                                     ": duplicate token " + line);
    }
    return vocab;
}

// --------------------------------------------------------------------------
// Batch encoding and digests
// --------------------------------------------------------------------------

TokenBatch encode_batch(const Vocab& vocab, const std::vector<std::vector<std::string>>& rows,
                        int max_len) {
    if (rows.empty()) throw std::invalid_argument("encode_batch: empty batch");
    if (max_len < 1) throw std::invalid_argument("encode_batch: max_len must be >= 1");
    int seq = 0;
    for (const auto& row : rows) {
        if (row.empty()) throw std::invalid_argument("encode_batch: empty token row");
        seq = std::max(seq, static_cast<int>(row.size()));
    }
    seq = std::min(seq, max_len);

    TokenBatch batch;
    batch.ids = IntMatrix(static_cast<int>(rows.size()), seq, Vocab::kPadId);
    batch.mask = IntMatrix(static_cast<int>(rows.size()), seq, 0);
    for (int r = 0; r < static_cast<int>(rows.size()); ++r) {
        const auto& row = rows[static_cast<std::size_t>(r)];
        const int n = std::min(seq, static_cast<int>(row.size()));
        for (int c = 0; c < n; ++c) {
            batch.ids.at(r, c) = vocab.id_of(row[static_cast<std::size_t>(c)]);
            batch.mask.at(r, c) = 1;
        }
    }
    return batch;
}

std::uint64_t fnv1a_64(std::string_view data) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t fnv1a_64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("digest: cannot open: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return fnv1a_64(buf.str());
}

}  // namespace langadv
