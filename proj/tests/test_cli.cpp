#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#ifndef LANGADV_CLI_PATH
#error "LANGADV_CLI_PATH must point at the built command-line binary"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(const std::string& args) {
    const std::string cmd =
        std::string(LANGADV_CLI_PATH) + " " + args + " >/dev/null 2>/dev/null";
    return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct Scratch {
    fs::path dir;
    Scratch() {
        dir = fs::temp_directory_path() /
              ("langadv_cli_" + std::to_string(::getpid()) + "_" +
               std::to_string(counter()++));
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
    static int& counter() {
        static int n = 0;
        return n;
    }
    fs::path file(const std::string& name) const { return dir / name; }
};

void write_config(const fs::path& path, const fs::path& out_dir,
                  const std::string& task = "classification", int runs = 1) {
    std::ofstream cfg(path);
    cfg << "# tiny smoke-test experiment\n"
        << "[corpus]\n"
        << "num_classes = 2\n"
        << "vocab_per_language = 40\n"
        << "keyword_rate = 0.4\n"
        << "doc_len_min = 4\n"
        << "doc_len_max = 8\n"
        << "train_docs = 16\n"
        << "dev_docs = 8\n"
        << "unlabeled_docs = 12\n"
        << "test_docs = 8\n"
        << "parallel_docs = 6\n"
        << "[encoder]\n"
        << "hidden = 8\n"
        << "layers = 1\n"
        << "heads = 2\n"
        << "max_len = 12\n"
        << "[trainer]\n"
        << "batch_size = 4\n"
        << "total_cycles = 4\n"
        << "eval_every = 2\n"
        << "[experiment]\n"
        << "runs = " << runs << "\n"
        << "seed = 3\n"
        << "task = " << task << "\n"
        << "output_dir = " << out_dir.string() << "\n";
}

}  // namespace

TEST_CASE("usage errors exit nonzero") {
    CHECK(run("") != 0);
    CHECK(run("frobnicate") != 0);
    CHECK(run("gen") != 0);                              // --config is required
    CHECK(run("gen --config /nonexistent.cfg") != 0);    // unreadable config
    CHECK(run("train --config /nonexistent.cfg") != 0);
}

TEST_CASE("gen writes every split plus a digest manifest, deterministically") {
    Scratch s;
    const fs::path cfg = s.file("exp.cfg");
    const fs::path out = s.file("out");
    write_config(cfg, out);

    REQUIRE(run("gen --config " + cfg.string()) == 0);
    for (const char* name : {"vocab.txt", "train_a.tsv", "dev_a.tsv", "unlabeled_b.tsv",
                             "test_b.tsv", "parallel.tsv", "manifest.json"})
        CHECK(fs::exists(out / name));

    const json manifest = json::parse(slurp(out / "manifest.json"));
    CHECK(manifest.at("task") == "classification");
    CHECK(manifest.at("seed") == 3);
    CHECK(manifest.at("spec").at("num_classes") == 2);
    REQUIRE(manifest.contains("files"));
    CHECK(manifest.at("files").size() == 6);  // every split is fingerprinted
    for (const auto& [name, digest] : manifest.at("files").items()) {
        CHECK(fs::exists(out / name));
        CHECK(digest.get<std::string>().size() == 16);  // 64-bit hex
    }

    // regenerating with the same config reproduces identical bytes
    const std::string before = slurp(out / "manifest.json");
    const std::string train_before = slurp(out / "train_a.tsv");
    REQUIRE(run("gen --config " + cfg.string()) == 0);
    CHECK(slurp(out / "manifest.json") == before);
    CHECK(slurp(out / "train_a.tsv") == train_before);
}

TEST_CASE("a rejected config leaves no manifest behind") {
    Scratch s;
    const fs::path cfg = s.file("bad.cfg");
    const fs::path out = s.file("out");
    {
        std::ofstream c(cfg);
        c << "[corpus]\ntrain_docs = 17\n"  // not divisible by num_classes
          << "[experiment]\noutput_dir = " << out.string() << "\n";
    }
    CHECK(run("gen --config " + cfg.string()) != 0);
    CHECK_FALSE(fs::exists(out / "manifest.json"));

    const fs::path cfg2 = s.file("unknown_key.cfg");
    {
        std::ofstream c(cfg2);
        c << "[corpus]\nnot_a_key = 1\n";
    }
    CHECK(run("gen --config " + cfg2.string()) != 0);
}

TEST_CASE("the output directory env var overrides the config") {
    Scratch s;
    const fs::path cfg = s.file("exp.cfg");
    const fs::path cfg_dir = s.file("per_config");
    const fs::path env_dir = s.file("per_env");
    write_config(cfg, cfg_dir);
    const std::string cmd = "env LANGADV_OUTPUT_DIR=" + env_dir.string() + " " +
                            std::string(LANGADV_CLI_PATH) + " gen --config " + cfg.string() +
                            " >/dev/null 2>/dev/null";
    REQUIRE(std::system(cmd.c_str()) == 0);
    CHECK(fs::exists(env_dir / "manifest.json"));
    CHECK_FALSE(fs::exists(cfg_dir / "manifest.json"));
}

TEST_CASE("train, eval, and align cover the full pipeline") {
    Scratch s;
    const fs::path cfg = s.file("exp.cfg");
    const fs::path out = s.file("out");
    write_config(cfg, out);
    REQUIRE(run("gen --config " + cfg.string()) == 0);

    SUBCASE("training both modes produces metrics, results, and a comparison") {
        REQUIRE(run("train --config " + cfg.string()) == 0);
        CHECK(fs::exists(out / "metrics_adversarial_run0.tsv"));
        CHECK(fs::exists(out / "checkpoint_adversarial_run0.bin"));
        CHECK(fs::exists(out / "results_adversarial.tsv"));
        CHECK_FALSE(fs::exists(out / "comparison.tsv"));  // baseline missing

        REQUIRE(run("train --config " + cfg.string() + " --no-adversarial") == 0);
        CHECK(fs::exists(out / "metrics_baseline_run0.tsv"));
        CHECK(fs::exists(out / "results_baseline.tsv"));
        CHECK(fs::exists(out / "comparison.tsv"));  // both modes now present

        const std::string metrics = slurp(out / "metrics_adversarial_run0.tsv");
        CHECK(metrics.rfind("step\ttask_loss\tdisc_loss\tgen_loss\ten_dev\ttgt_test", 0) == 0);
        const std::string baseline = slurp(out / "metrics_baseline_run0.tsv");
        CHECK(baseline.find("\t-\t-\t") != std::string::npos);
        const std::string comparison = slurp(out / "comparison.tsv");
        CHECK(comparison.find("baseline") != std::string::npos);
        CHECK(comparison.find("adversarial") != std::string::npos);

        // training again with the same seed rewrites identical metrics
        const std::string before = slurp(out / "metrics_adversarial_run0.tsv");
        REQUIRE(run("train --config " + cfg.string()) == 0);
        CHECK(slurp(out / "metrics_adversarial_run0.tsv") == before);

        SUBCASE("eval reproduces metrics from a stored checkpoint") {
            REQUIRE(run("eval --config " + cfg.string() + " --checkpoint " +
                        (out / "checkpoint_adversarial_run0.bin").string()) == 0);
            const std::string report = slurp(out / "eval_report.tsv");
            CHECK(report.rfind("checkpoint\ten_dev\ttgt_test", 0) == 0);
        }

        SUBCASE("align reports cosine medians for one or two checkpoints") {
            const std::string ck_adv = (out / "checkpoint_adversarial_run0.bin").string();
            const std::string ck_base = (out / "checkpoint_baseline_run0.bin").string();
            REQUIRE(run("align --config " + cfg.string() + " --checkpoint " + ck_adv) == 0);
            CHECK(fs::exists(out / "align.tsv"));
            REQUIRE(run("align --config " + cfg.string() + " --checkpoint " + ck_base +
                        " --checkpoint " + ck_adv) == 0);
            const std::string table = slurp(out / "align.tsv");
            CHECK(table.find("A-B") != std::string::npos);
        }

        SUBCASE("eval rejects a checkpoint from a different geometry") {
            // corrupt the stored hidden size by evaluating against a mismatched config
            Scratch s2;
            const fs::path cfg2 = s2.file("other.cfg");
            const fs::path out2 = s2.file("out2");
            write_config(cfg2, out2);
            // bump the hidden size in a copied config
            std::string text = slurp(cfg2);
            const auto pos = text.find("hidden = 8");
            REQUIRE(pos != std::string::npos);
            text.replace(pos, 10, "hidden = 16");
            std::ofstream(cfg2) << text;
            REQUIRE(run("gen --config " + cfg2.string()) == 0);
            CHECK(run("eval --config " + cfg2.string() + " --checkpoint " +
                      (out / "checkpoint_adversarial_run0.bin").string()) != 0);
        }
    }

    SUBCASE("run and seed overrides change the output set") {
        REQUIRE(run("train --config " + cfg.string() + " --runs 2 --seed 11") == 0);
        CHECK(fs::exists(out / "metrics_adversarial_run0.tsv"));
        CHECK(fs::exists(out / "metrics_adversarial_run1.tsv"));
    }

    SUBCASE("eval on a missing checkpoint fails") {
        CHECK(run("eval --config " + cfg.string() + " --checkpoint " +
                  (out / "nope.bin").string()) != 0);
    }
}

TEST_CASE("the ner pipeline generates tagged splits and trains") {
    Scratch s;
    const fs::path cfg = s.file("ner.cfg");
    const fs::path out = s.file("out");
    write_config(cfg, out, "ner");
    REQUIRE(run("gen --config " + cfg.string()) == 0);
    for (const char* name : {"vocab.txt", "train_a.tsv", "parallel_a.tsv", "parallel_b.tsv"})
        CHECK(fs::exists(out / name));
    const json manifest = json::parse(slurp(out / "manifest.json"));
    CHECK(manifest.at("task") == "ner");
    CHECK(manifest.at("files").size() == 7);

    REQUIRE(run("train --config " + cfg.string() + " --no-adversarial") == 0);
    CHECK(fs::exists(out / "results_baseline.tsv"));
    REQUIRE(run("align --config " + cfg.string() + " --checkpoint " +
                (out / "checkpoint_baseline_run0.bin").string()) == 0);
    CHECK(fs::exists(out / "align.tsv"));
}
