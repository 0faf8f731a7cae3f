#include "langadv/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <stdexcept>

namespace langadv {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

[[noreturn]] void fail(const std::string& source, long lineno, const std::string& what) {
    throw std::runtime_error(source + ": line " + std::to_string(lineno) + ": " + what);
}

long long to_ll(const std::string& source, long lineno, const std::string& value) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        fail(source, lineno, "expected an integer, got '" + value + "'");
    }
}

int to_int(const std::string& source, long lineno, const std::string& value) {
    return static_cast<int>(to_ll(source, lineno, value));
}

std::uint64_t to_u64(const std::string& source, long lineno, const std::string& value) {
    const long long v = to_ll(source, lineno, value);
    if (v < 0) fail(source, lineno, "expected a nonnegative integer, got '" + value + "'");
    return static_cast<std::uint64_t>(v);
}

double to_double(const std::string& source, long lineno, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        fail(source, lineno, "expected a number, got '" + value + "'");
    }
}

bool to_bool(const std::string& source, long lineno, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    fail(source, lineno, "expected a boolean, got '" + value + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
    if (runs < 1) throw std::invalid_argument("config: runs must be >= 1");
    if (output_dir.empty()) throw std::invalid_argument("config: output_dir must be nonempty");
    if (task != "classification" && task != "ner")
        throw std::invalid_argument("config: task must be 'classification' or 'ner'");
    if (task == "ner")
        corpus.validate_ner();
    else
        corpus.validate();
    trainer.validate();
}

ExperimentConfig parse_config(std::istream& in, const std::string& source_name) {
    ExperimentConfig cfg;
    std::string section;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string text = trim(line);
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']') fail(source_name, lineno, "unterminated section header");
            section = trim(std::string_view(text).substr(1, text.size() - 2));
            if (section != "corpus" && section != "encoder" && section != "trainer" &&
                section != "experiment")
                fail(source_name, lineno, "unknown section [" + section + "]");
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) fail(source_name, lineno, "expected key = value");
        const std::string key = trim(std::string_view(text).substr(0, eq));
        const std::string value = trim(std::string_view(text).substr(eq + 1));
        if (key.empty()) fail(source_name, lineno, "empty key");
        if (section.empty()) fail(source_name, lineno, "key outside any section");

        if (section == "corpus") {
            if (key == "num_classes")
                cfg.corpus.num_classes = to_int(source_name, lineno, value);
            else if (key == "vocab_per_language")
                cfg.corpus.vocab_per_language = to_int(source_name, lineno, value);
            else if (key == "anchor_fraction")
                cfg.corpus.anchor_fraction = to_double(source_name, lineno, value);
            else if (key == "keyword_rate")
                cfg.corpus.keyword_rate = to_double(source_name, lineno, value);
            else if (key == "doc_len_min")
                cfg.corpus.doc_len_min = to_int(source_name, lineno, value);
            else if (key == "doc_len_max")
                cfg.corpus.doc_len_max = to_int(source_name, lineno, value);
            else if (key == "entity_density")
                cfg.corpus.entity_density = to_double(source_name, lineno, value);
            else if (key == "local_shuffle_window")
                cfg.corpus.local_shuffle_window = to_int(source_name, lineno, value);
            else if (key == "train_docs")
                cfg.corpus.train_docs = to_int(source_name, lineno, value);
            else if (key == "dev_docs")
                cfg.corpus.dev_docs = to_int(source_name, lineno, value);
            else if (key == "unlabeled_docs")
                cfg.corpus.unlabeled_docs = to_int(source_name, lineno, value);
            else if (key == "test_docs")
                cfg.corpus.test_docs = to_int(source_name, lineno, value);
            else if (key == "parallel_docs")
                cfg.corpus.parallel_docs = to_int(source_name, lineno, value);
            else
                fail(source_name, lineno, "unknown corpus key '" + key + "'");
        } else if (section == "encoder") {
            if (key == "hidden")
                cfg.encoder.hidden = to_int(source_name, lineno, value);
            else if (key == "layers")
                cfg.encoder.layers = to_int(source_name, lineno, value);
            else if (key == "heads")
                cfg.encoder.heads = to_int(source_name, lineno, value);
            else if (key == "ffn_width")
                cfg.encoder.ffn_width = to_int(source_name, lineno, value);
            else if (key == "max_len")
                cfg.encoder.max_len = to_int(source_name, lineno, value);
            else
                fail(source_name, lineno, "unknown encoder key '" + key + "'");
        } else if (section == "trainer") {
            if (key == "lr_task")
                cfg.trainer.lr_task = to_double(source_name, lineno, value);
            else if (key == "lr_discriminator")
                cfg.trainer.lr_discriminator = to_double(source_name, lineno, value);
            else if (key == "lr_generator")
                cfg.trainer.lr_generator = to_double(source_name, lineno, value);
            else if (key == "batch_size")
                cfg.trainer.batch_size = to_int(source_name, lineno, value);
            else if (key == "total_cycles")
                cfg.trainer.total_cycles = to_int(source_name, lineno, value);
            else if (key == "eval_every")
                cfg.trainer.eval_every = to_int(source_name, lineno, value);
            else if (key == "adversarial")
                cfg.trainer.adversarial = to_bool(source_name, lineno, value);
            else
                fail(source_name, lineno, "unknown trainer key '" + key + "'");
        } else {  // experiment
            if (key == "runs")
                cfg.runs = to_int(source_name, lineno, value);
            else if (key == "output_dir")
                cfg.output_dir = value;
            else if (key == "seed")
                cfg.seed = to_u64(source_name, lineno, value);
            else if (key == "task")
                cfg.task = value;
            else
                fail(source_name, lineno, "unknown experiment key '" + key + "'");
        }
    }
    cfg.corpus.seed = cfg.seed;
    cfg.trainer.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    return parse_config(in, path);
}

}  // namespace langadv
