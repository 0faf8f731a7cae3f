// Experiment pipeline: corpus generation, adversarial/baseline training,
// checkpoint evaluation, and embedding-alignment analysis, all driven by one
// config file. See README.md for the config format and output layout.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "langadv/checkpoint.hpp"
#include "langadv/config.hpp"
#include "langadv/corpus.hpp"
#include "langadv/eval.hpp"
#include "langadv/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace langadv;

namespace {

ExperimentConfig load_cfg(const std::string& path) {
    ExperimentConfig cfg = load_config(path);
    if (const char* env = std::getenv("LANGADV_OUTPUT_DIR"); env != nullptr && *env != '\0')
        cfg.output_dir = env;
    return cfg;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

const char* mode_name(bool adversarial) { return adversarial ? "adversarial" : "baseline"; }

fs::path out_path(const ExperimentConfig& cfg, const std::string& name) {
    return fs::path(cfg.output_dir) / name;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
}

std::ifstream open_in(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open " + p.string() + " (run `gen` first?)");
    return in;
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

json corpus_spec_json(const CorpusSpec& s) {
    return json{{"num_classes", s.num_classes},
                {"vocab_per_language", s.vocab_per_language},
                {"anchor_fraction", s.anchor_fraction},
                {"keyword_rate", s.keyword_rate},
                {"doc_len_min", s.doc_len_min},
                {"doc_len_max", s.doc_len_max},
                {"entity_density", s.entity_density},
                {"local_shuffle_window", s.local_shuffle_window},
                {"seed", s.seed},
                {"train_docs", s.train_docs},
                {"dev_docs", s.dev_docs},
                {"unlabeled_docs", s.unlabeled_docs},
                {"test_docs", s.test_docs},
                {"parallel_docs", s.parallel_docs}};
}

int cmd_gen(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.output_dir);
    json manifest;
    manifest["task"] = cfg.task;
    manifest["seed"] = cfg.seed;
    manifest["spec"] = corpus_spec_json(cfg.corpus);

    auto emit = [&](const std::string& name, auto&& writer) {
        const fs::path p = out_path(cfg, name);
        {
            std::ofstream out = open_out(p);
            writer(out);
            if (!out.flush()) throw std::runtime_error("write failed: " + p.string());
        }
        manifest["files"][name] = hex64(fnv1a_64_file(p.string()));
    };

    if (cfg.task == "classification") {
        const ClassificationCorpus corpus = gen_classification_corpus(cfg.corpus);
        emit("vocab.txt", [&](std::ostream& o) { write_vocab(o, corpus.vocab); });
        emit("train_a.tsv", [&](std::ostream& o) { write_labeled_docs(o, corpus.train_a); });
        emit("dev_a.tsv", [&](std::ostream& o) { write_labeled_docs(o, corpus.dev_a); });
        emit("unlabeled_b.tsv",
             [&](std::ostream& o) { write_labeled_docs(o, corpus.unlabeled_b); });
        emit("test_b.tsv", [&](std::ostream& o) { write_labeled_docs(o, corpus.test_b); });
        emit("parallel.tsv", [&](std::ostream& o) { write_parallel_pairs(o, corpus.pairs); });
    } else {
        const NerCorpus corpus = gen_ner_corpus(cfg.corpus);
        std::vector<TaggedSentence> src, tgt;
        for (const auto& p : corpus.pairs) {
            src.push_back(p.source);
            tgt.push_back(p.translated);
        }
        emit("vocab.txt", [&](std::ostream& o) { write_vocab(o, corpus.vocab); });
        emit("train_a.tsv", [&](std::ostream& o) { write_tagged_sentences(o, corpus.train_a); });
        emit("dev_a.tsv", [&](std::ostream& o) { write_tagged_sentences(o, corpus.dev_a); });
        emit("unlabeled_b.tsv",
             [&](std::ostream& o) { write_tagged_sentences(o, corpus.unlabeled_b); });
        emit("test_b.tsv", [&](std::ostream& o) { write_tagged_sentences(o, corpus.test_b); });
        emit("parallel_a.tsv", [&](std::ostream& o) { write_tagged_sentences(o, src); });
        emit("parallel_b.tsv", [&](std::ostream& o) { write_tagged_sentences(o, tgt); });
    }

    // The manifest is written only after every split landed intact.
    std::ofstream out = open_out(out_path(cfg, "manifest.json"));
    out << manifest.dump(2) << '\n';
    if (!out.flush()) throw std::runtime_error("write failed: manifest.json");
    std::cout << "generated " << cfg.task << " corpus in " << cfg.output_dir << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// corpus loading
// ---------------------------------------------------------------------------

struct LoadedClassification {
    ClassificationCorpus corpus;
};

ClassificationCorpus load_classification(const ExperimentConfig& cfg) {
    ClassificationCorpus corpus;
    {
        auto in = open_in(out_path(cfg, "vocab.txt"));
        corpus.vocab = read_vocab(in);
    }
    corpus.num_classes = cfg.corpus.num_classes;
    auto load_docs = [&](const std::string& name) {
        auto in = open_in(out_path(cfg, name));
        return read_labeled_docs(in);
    };
    corpus.train_a = load_docs("train_a.tsv");
    corpus.dev_a = load_docs("dev_a.tsv");
    corpus.unlabeled_b = load_docs("unlabeled_b.tsv");
    corpus.test_b = load_docs("test_b.tsv");
    for (const auto* split : {&corpus.train_a, &corpus.dev_a, &corpus.test_b})
        for (const LabeledDoc& d : *split)
            if (d.label >= corpus.num_classes)
                throw std::runtime_error("corpus label " + std::to_string(d.label) +
                                         " exceeds num_classes " +
                                         std::to_string(corpus.num_classes));
    return corpus;
}

NerCorpus load_ner(const ExperimentConfig& cfg) {
    NerCorpus corpus;
    {
        auto in = open_in(out_path(cfg, "vocab.txt"));
        corpus.vocab = read_vocab(in);
    }
    auto load_sents = [&](const std::string& name) {
        auto in = open_in(out_path(cfg, name));
        return read_tagged_sentences(in);
    };
    corpus.train_a = load_sents("train_a.tsv");
    corpus.dev_a = load_sents("dev_a.tsv");
    corpus.unlabeled_b = load_sents("unlabeled_b.tsv");
    corpus.test_b = load_sents("test_b.tsv");
    return corpus;
}

std::vector<ParallelPair> load_pairs(const ExperimentConfig& cfg) {
    if (cfg.task == "classification") {
        auto in = open_in(out_path(cfg, "parallel.tsv"));
        return read_parallel_pairs(in);
    }
    auto in_a = open_in(out_path(cfg, "parallel_a.tsv"));
    auto in_b = open_in(out_path(cfg, "parallel_b.tsv"));
    const auto src = read_tagged_sentences(in_a);
    const auto tgt = read_tagged_sentences(in_b);
    if (src.size() != tgt.size())
        throw std::runtime_error("parallel_a.tsv and parallel_b.tsv differ in length");
    std::vector<ParallelPair> pairs(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
        pairs[i].source.tokens = src[i].tokens;
        pairs[i].translated.tokens = tgt[i].tokens;
        pairs[i].translated.lang_a = 0;
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

void write_averaged_tsv(std::ostream& out, const AveragedMetrics& m) {
    out << std::setprecision(6) << std::fixed << "metric\tmean\truns\n";
    for (const auto& [key, mean] : m.mean) {
        out << key << '\t' << mean << '\t';
        for (std::size_t r = 0; r < m.per_run.size(); ++r) {
            if (r) out << ',';
            out << m.per_run[r].at(key);
        }
        out << '\n';
    }
}

json averaged_json(const AveragedMetrics& m) {
    json j;
    for (const auto& [key, mean] : m.mean) {
        json runs = json::array();
        for (const auto& run : m.per_run) runs.push_back(run.at(key));
        j[key] = {{"mean", mean}, {"runs", runs}};
    }
    return j;
}

AveragedMetrics averaged_from_json(const json& j) {
    AveragedMetrics m;
    std::size_t run_count = 0;
    for (const auto& [key, entry] : j.items()) {
        m.mean[key] = entry.at("mean").get<double>();
        run_count = entry.at("runs").size();
    }
    m.per_run.resize(run_count);
    for (const auto& [key, entry] : j.items())
        for (std::size_t r = 0; r < run_count; ++r)
            m.per_run[r][key] = entry.at("runs").at(r).get<double>();
    return m;
}

int cmd_train(ExperimentConfig cfg, bool no_adversarial) {
    if (no_adversarial) cfg.trainer.adversarial = false;
    const std::string mode = mode_name(cfg.trainer.adversarial);
    fs::create_directories(cfg.output_dir);

    std::vector<std::map<std::string, double>> per_run;
    auto run_one = [&](auto&& train_fn, const auto& corpus) {
        for (int r = 0; r < cfg.runs; ++r) {
            TrainerConfig tc = cfg.trainer;
            tc.seed = cfg.seed + static_cast<std::uint64_t>(r);
            const std::string suffix = mode + "_run" + std::to_string(r);
            try {
                const RunResult result =
                    train_fn(tc, cfg.encoder, corpus, out_path(cfg, "metrics_" + suffix + ".tsv").string(),
                             out_path(cfg, "checkpoint_" + suffix + ".bin").string());
                per_run.push_back(run_metrics(result));
                std::cout << mode << " run " << r << ": en_dev=" << result.best_en_dev
                          << " tgt_test=" << result.tgt_at_best << " (step " << result.best_step
                          << ")\n";
            } catch (const std::exception& e) {
                throw std::runtime_error("run " + std::to_string(r) + ": " + e.what());
            }
        }
    };

    if (cfg.task == "classification") {
        const ClassificationCorpus corpus = load_classification(cfg);
        run_one([](const TrainerConfig& tc, const EncoderConfig& ec,
                   const ClassificationCorpus& c, const std::string& m,
                   const std::string& k) { return train_classification(tc, ec, c, m, k); },
                corpus);
    } else {
        const NerCorpus corpus = load_ner(cfg);
        run_one([](const TrainerConfig& tc, const EncoderConfig& ec, const NerCorpus& c,
                   const std::string& m,
                   const std::string& k) { return train_ner(tc, ec, c, m, k); },
                corpus);
    }

    const AveragedMetrics averaged = average_runs(per_run);
    {
        auto out = open_out(out_path(cfg, "results_" + mode + ".tsv"));
        write_averaged_tsv(out, averaged);
    }
    {
        auto out = open_out(out_path(cfg, "results_" + mode + ".json"));
        out << averaged_json(averaged).dump(2) << '\n';
    }
    std::cout << mode << " average: en_dev=" << averaged.mean.at("en_dev")
              << " tgt_test=" << averaged.mean.at("tgt_test") << " over " << cfg.runs << " runs\n";

    // When both modes have results, refresh the side-by-side table.
    const fs::path base_json = out_path(cfg, "results_baseline.json");
    const fs::path adv_json = out_path(cfg, "results_adversarial.json");
    if (fs::exists(base_json) && fs::exists(adv_json)) {
        json jb, ja;
        std::ifstream(base_json) >> jb;
        std::ifstream(adv_json) >> ja;
        auto out = open_out(out_path(cfg, "comparison.tsv"));
        write_comparison_table(out, averaged_from_json(jb), averaged_from_json(ja));
        std::cout << "wrote " << out_path(cfg, "comparison.tsv").string() << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------
// eval / align
// ---------------------------------------------------------------------------

Checkpoint load_compatible_checkpoint(const ExperimentConfig& cfg, const std::string& path,
                                      int vocab_size) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.config.hidden != cfg.encoder.hidden)
        throw std::runtime_error("checkpoint/config hidden-size mismatch: checkpoint has " +
                                 std::to_string(ckpt.config.hidden) + ", config has " +
                                 std::to_string(cfg.encoder.hidden));
    if (ckpt.config.vocab_size != vocab_size)
        throw std::runtime_error("checkpoint/vocab size mismatch: checkpoint has " +
                                 std::to_string(ckpt.config.vocab_size) + ", vocab has " +
                                 std::to_string(vocab_size));
    return ckpt;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
    const Tensor* head = ckpt.find("task_head.weight");
    if (head == nullptr || head->rank() != 2)
        throw std::runtime_error("checkpoint lacks a task head");
    Model model(ckpt.config, head->extent(0));
    restore_parameters(ckpt, model.all());
    return model;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
    double en_dev = 0.0, tgt_test = 0.0;
    if (cfg.task == "classification") {
        const ClassificationCorpus corpus = load_classification(cfg);
        const Checkpoint ckpt =
            load_compatible_checkpoint(cfg, checkpoint_path, corpus.vocab.size());
        Model model = model_from_checkpoint(ckpt);
        en_dev = eval_classification_accuracy(model, corpus.vocab, corpus.dev_a,
                                              cfg.trainer.batch_size);
        tgt_test = eval_classification_accuracy(model, corpus.vocab, corpus.test_b,
                                                cfg.trainer.batch_size);
    } else {
        const NerCorpus corpus = load_ner(cfg);
        const Checkpoint ckpt =
            load_compatible_checkpoint(cfg, checkpoint_path, corpus.vocab.size());
        Model model = model_from_checkpoint(ckpt);
        en_dev = eval_ner_f1(model, corpus.vocab, corpus.dev_a, cfg.trainer.batch_size);
        tgt_test = eval_ner_f1(model, corpus.vocab, corpus.test_b, cfg.trainer.batch_size);
    }
    auto out = open_out(out_path(cfg, "eval_report.tsv"));
    out << std::setprecision(6) << std::fixed << "checkpoint\ten_dev\ttgt_test\n"
        << checkpoint_path << '\t' << en_dev << '\t' << tgt_test << '\n';
    std::cout << "en_dev=" << en_dev << " tgt_test=" << tgt_test << '\n';
    return 0;
}

AlignmentReport align_one(const ExperimentConfig& cfg, const std::vector<ParallelPair>& pairs,
                          const std::string& checkpoint_path, int vocab_size) {
    const Checkpoint ckpt = load_compatible_checkpoint(cfg, checkpoint_path, vocab_size);
    EncoderParameters encoder(ckpt.config);
    restore_parameters(ckpt, encoder.all());
    // Vocab ids are positional; reload to map tokens.
    auto in = open_in(out_path(cfg, "vocab.txt"));
    const Vocab vocab = read_vocab(in);
    return alignment_report(encoder, vocab, pairs, cfg.trainer.batch_size);
}

int cmd_align(const ExperimentConfig& cfg, const std::vector<std::string>& checkpoints) {
    const std::vector<ParallelPair> pairs = load_pairs(cfg);
    std::vector<AlignmentReport> reports;
    int vocab_size = 0;
    {
        auto in = open_in(out_path(cfg, "vocab.txt"));
        vocab_size = read_vocab(in).size();
    }
    for (const std::string& path : checkpoints)
        reports.push_back(align_one(cfg, pairs, path, vocab_size));

    auto out = open_out(out_path(cfg, "align.tsv"));
    if (reports.size() == 2) {
        write_alignment_table(out, "A-B", reports[0], reports[1]);
    } else {
        out << std::setprecision(6) << std::fixed
            << "pair\tmedian\tq1\tq3\tpairs\texcluded\n"
            << "A-B" << '\t' << reports[0].median_cos << '\t' << reports[0].q1 << '\t'
            << reports[0].q3 << '\t' << reports[0].pair_count << '\t'
            << reports[0].excluded_pairs << '\n';
    }
    for (std::size_t i = 0; i < reports.size(); ++i)
        std::cout << "checkpoint " << i << ": median cosine=" << reports[i].median_cos << " ("
                  << reports[i].pair_count << " pairs, " << reports[i].excluded_pairs
                  << " excluded)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"language-adversarial fine-tuning experiments"};
    app.require_subcommand(1);

    std::string gen_config, train_config, eval_config, align_config;
    std::string eval_checkpoint;
    std::vector<std::string> align_checkpoints;
    bool no_adversarial = false;
    int runs_override = -1;
    std::int64_t seed_override = -1;

    CLI::App* gen = app.add_subcommand("gen", "generate the synthetic bilingual corpus");
    gen->add_option("--config,-c", gen_config, "experiment config file")->required();

    CLI::App* train = app.add_subcommand("train", "run seeded training runs");
    train->add_option("--config,-c", train_config, "experiment config file")->required();
    train->add_flag("--no-adversarial", no_adversarial,
                    "task-only baseline (skip discriminator and generator steps)");
    train->add_option("--runs", runs_override, "override the configured run count");
    train->add_option("--seed", seed_override, "override the configured global seed");

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on dev/test splits");
    eval_cmd->add_option("--config,-c", eval_config, "experiment config file")->required();
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();

    CLI::App* align = app.add_subcommand("align", "cosine alignment of parallel pairs");
    align->add_option("--config,-c", align_config, "experiment config file")->required();
    align
        ->add_option("--checkpoint", align_checkpoints,
                     "checkpoint file; pass twice (baseline, adversarial) for the two-column table")
        ->required()
        ->expected(1, 2);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(load_cfg(gen_config));
        if (train->parsed()) {
            ExperimentConfig cfg = load_cfg(train_config);
            if (runs_override > 0) cfg.runs = runs_override;
            if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
            return cmd_train(std::move(cfg), no_adversarial);
        }
        if (eval_cmd->parsed()) return cmd_eval(load_cfg(eval_config), eval_checkpoint);
        if (align->parsed()) return cmd_align(load_cfg(align_config), align_checkpoints);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
