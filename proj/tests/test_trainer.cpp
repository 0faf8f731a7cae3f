#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "langadv/checkpoint.hpp"
#include "langadv/trainer.hpp"

using namespace langadv;

namespace {

CorpusSpec tiny_spec() {
    CorpusSpec s;
    s.num_classes = 2;
    s.vocab_per_language = 40;
    s.train_docs = 16;
    s.dev_docs = 8;
    s.unlabeled_docs = 12;
    s.test_docs = 8;
    s.parallel_docs = 4;
    s.doc_len_min = 4;
    s.doc_len_max = 8;
    s.seed = 11;
    return s;
}

EncoderConfig tiny_encoder(int vocab_size) {
    EncoderConfig cfg;
    cfg.vocab_size = vocab_size;
    cfg.hidden = 8;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.max_len = 12;
    cfg.seed = 5;
    return cfg;
}

TrainerConfig tiny_trainer() {
    TrainerConfig cfg;
    cfg.lr_task = 2e-3;
    cfg.batch_size = 4;
    cfg.total_cycles = 4;
    cfg.eval_every = 2;
    cfg.seed = 5;
    return cfg;
}

struct Fixture {
    ClassificationCorpus corpus;
    Model model;
    TrainState state;
    BatchStream<LabeledDoc> labeled;
    BatchStream<LabeledDoc> un_a;
    BatchStream<LabeledDoc> un_b;

    explicit Fixture(TrainerConfig cfg = tiny_trainer())
        : corpus(gen_classification_corpus(tiny_spec())),
          model(tiny_encoder(corpus.vocab.size()), corpus.num_classes),
          state(model, corpus.vocab, cfg),
          labeled(corpus.train_a, cfg.batch_size, 101),
          un_a(corpus.train_a, cfg.batch_size, 102),
          un_b(corpus.unlabeled_b, cfg.batch_size, 103) {}
};

std::vector<std::vector<double>> snapshot(std::vector<Parameter*> params) {
    std::vector<std::vector<double>> out;
    for (Parameter* p : params) out.push_back(p->value.values);
    return out;
}

bool identical(const std::vector<std::vector<double>>& a, std::vector<Parameter*> params) {
    for (std::size_t i = 0; i < params.size(); ++i)
        if (a[i] != params[i]->value.values) return false;
    return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

TEST_CASE("learning-rate defaults follow the published ratios") {
    TrainerConfig cfg;
    cfg.lr_task = 2e-6;
    CHECK(cfg.resolved_lr_discriminator() == doctest::Approx(5e-5));
    CHECK(cfg.resolved_lr_generator() == doctest::Approx(2e-8));
    cfg.lr_discriminator = 1e-3;
    cfg.lr_generator = 0.0;  // explicitly frozen generator is allowed
    CHECK(cfg.resolved_lr_discriminator() == doctest::Approx(1e-3));
    CHECK(cfg.resolved_lr_generator() == 0.0);
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("trainer config validation") {
    TrainerConfig cfg = tiny_trainer();
    cfg.lr_task = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_trainer();
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_trainer();
    cfg.lr_discriminator = 0.0;  // discriminator must keep learning
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.adversarial = false;  // ... unless the adversarial phase is off
    CHECK_NOTHROW(cfg.validate());
    cfg = tiny_trainer();
    cfg.adam_beta1 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

TEST_CASE("first Adam update moves by minus lr times normalized gradient") {
    Parameter p("p", Tensor({3}, {1.0, -2.0, 0.5}));
    const Tensor grads({3}, {0.4, -0.3, 0.0});
    p.grad = grads;
    p.grad_events = 1;
    AdamState adam(0.9, 0.999, 1e-8);
    const double lr = 1e-2;
    adam.step("task", {&p}, lr);
    // at t = 1 bias correction makes m_hat = g and v_hat = g^2,
    // so the update is -lr * g / (|g| + eps): minus lr times sign(g)
    CHECK(p.value.values[0] ==
          doctest::Approx(1.0 - lr * 0.4 / (0.4 + 1e-8)).epsilon(1e-12));
    CHECK(p.value.values[1] ==
          doctest::Approx(-2.0 + lr * 0.3 / (0.3 + 1e-8)).epsilon(1e-12));
    CHECK(p.value.values[2] == 0.5);  // zero gradient coordinate does not move
    CHECK(p.value.values[0] == doctest::Approx(1.0 - lr).epsilon(1e-6));
    CHECK(adam.step_count("task", "p") == 1);
    // gradients were consumed
    CHECK(p.grad_events == 0);
    CHECK(p.grad.values[0] == 0.0);
}

TEST_CASE("constant gradients keep unit-size steps under bias correction") {
    Parameter p("p", Tensor({1}, {10.0}));
    AdamState adam(0.9, 0.999, 1e-8);
    const double lr = 0.1;
    double prev = p.value.values[0];
    for (int t = 1; t <= 5; ++t) {
        p.grad.values[0] = 2.0;
        p.grad_events = 1;
        adam.step("task", {&p}, lr);
        // with a constant gradient, m_hat = g and v_hat = g^2 at every t
        CHECK(p.value.values[0] == doctest::Approx(prev - lr).epsilon(1e-6));
        prev = p.value.values[0];
    }
    CHECK(adam.step_count("task", "p") == 5);
}

TEST_CASE("adam rejects a step without gradients") {
    Parameter p("p", Tensor({2}, {1.0, 2.0}));
    AdamState adam(0.9, 0.999, 1e-8);
    CHECK_THROWS_WITH_AS(adam.step("task", {&p}, 1e-3),
                         "adam: missing gradient for parameter p", std::runtime_error);
}

TEST_CASE("moments are keyed by loss and parameter independently") {
    Parameter p("shared", Tensor({1}, {0.0}));
    Parameter q("other", Tensor({1}, {0.0}));
    AdamState adam(0.9, 0.999, 1e-8);
    p.grad.values[0] = 1.0;
    p.grad_events = 1;
    adam.step("task", {&p}, 1e-3);
    p.grad.values[0] = 1.0;
    p.grad_events = 1;
    adam.step("gen", {&p}, 1e-3);
    CHECK(adam.step_count("task", "shared") == 1);
    CHECK(adam.step_count("gen", "shared") == 1);
    CHECK(adam.step_count("disc", "shared") == 0);
    CHECK(adam.step_count("task", "other") == 0);  // untouched parameter

    // stepping p under one loss leaves q untouched
    const double q0 = q.value.values[0];
    CHECK(q.value.values[0] == q0);
}

TEST_CASE("zero learning rate leaves values bitwise untouched but advances moments") {
    Parameter p("p", Tensor({2}, {0.25, -1.5}));
    const std::vector<double> before = p.value.values;
    AdamState adam(0.9, 0.999, 1e-8);
    for (int t = 0; t < 3; ++t) {
        p.grad.values[0] = 0.7;
        p.grad.values[1] = -0.1;
        p.grad_events = 1;
        adam.step("gen", {&p}, 0.0);
    }
    CHECK(p.value.values == before);  // bitwise
    CHECK(adam.step_count("gen", "p") == 3);
}

// ---------------------------------------------------------------------------
// step-level parameter isolation
// ---------------------------------------------------------------------------

TEST_CASE("each optimizer step touches exactly its own subset") {
    Fixture f;
    auto batch = f.labeled.next();
    const auto rows_a = token_rows(f.un_a.next());
    const auto rows_b = token_rows(f.un_b.next());

    SUBCASE("task step leaves the discriminator alone") {
        const auto disc_before = snapshot(f.model.discriminator_subset());
        const auto task_before = snapshot(f.model.task_subset());
        const double loss = task_step(f.state, batch);
        CHECK(std::isfinite(loss));
        CHECK(loss > 0.0);
        CHECK(identical(disc_before, f.model.discriminator_subset()));
        CHECK_FALSE(identical(task_before, f.model.task_subset()));  // theta and head moved
        CHECK(f.state.steps_task == 1);
    }

    SUBCASE("discriminator step freezes encoder and task head") {
        const auto theta_before = snapshot(f.model.generator_subset());
        const auto task_before = snapshot({&f.model.task_head.weight, &f.model.task_head.bias});
        const auto disc_before = snapshot(f.model.discriminator_subset());
        const double loss = discriminator_step(f.state, rows_a, rows_b);
        CHECK(std::isfinite(loss));
        CHECK(identical(theta_before, f.model.generator_subset()));  // bitwise frozen
        CHECK(identical(task_before, {&f.model.task_head.weight, &f.model.task_head.bias}));
        CHECK_FALSE(identical(disc_before, f.model.discriminator_subset()));
        CHECK(f.state.steps_disc == 1);
        // the detached embeddings never give the encoder a gradient event
        CHECK(f.model.encoder.token_embedding.grad_events == 0);
    }

    SUBCASE("generator step freezes discriminator and task head") {
        const auto disc_before = snapshot(f.model.discriminator_subset());
        const auto task_before = snapshot({&f.model.task_head.weight, &f.model.task_head.bias});
        const auto theta_before = snapshot(f.model.generator_subset());
        const double loss = generator_step(f.state, rows_a, rows_b);
        CHECK(std::isfinite(loss));
        CHECK(identical(disc_before, f.model.discriminator_subset()));
        CHECK(identical(task_before, {&f.model.task_head.weight, &f.model.task_head.bias}));
        CHECK_FALSE(identical(theta_before, f.model.generator_subset()));
        CHECK(f.state.steps_gen == 1);
    }
}

TEST_CASE("a zero generator rate keeps the encoder bitwise frozen in that step") {
    TrainerConfig cfg = tiny_trainer();
    cfg.lr_generator = 0.0;
    Fixture f(cfg);
    const auto rows_a = token_rows(f.un_a.next());
    const auto rows_b = token_rows(f.un_b.next());
    const auto theta_before = snapshot(f.model.generator_subset());
    (void)generator_step(f.state, rows_a, rows_b);
    CHECK(identical(theta_before, f.model.generator_subset()));
    CHECK(f.state.steps_gen == 1);
}

TEST_CASE("unlabeled documents are rejected by the task step") {
    Fixture f;
    std::vector<const LabeledDoc*> batch;
    for (const auto& d : f.corpus.unlabeled_b) batch.push_back(&d);
    batch.resize(2);
    CHECK_THROWS_WITH_AS((void)task_step(f.state, batch),
                         "task step: unlabeled document in batch", std::invalid_argument);
}

// ---------------------------------------------------------------------------
// cycles
// ---------------------------------------------------------------------------

TEST_CASE("one adversarial cycle performs the three steps in lockstep") {
    Fixture f;
    for (int c = 1; c <= 3; ++c) {
        const CycleLosses losses = train_cycle(f.state, f.labeled.next(), &f.un_a, &f.un_b);
        CHECK(std::isfinite(losses.task));
        CHECK(std::isfinite(losses.disc));
        CHECK(std::isfinite(losses.gen));
        CHECK(f.state.cycle == c);
        CHECK(f.state.steps_task == c);
        CHECK(f.state.steps_disc == c);
        CHECK(f.state.steps_gen == c);
    }
}

TEST_CASE("without the adversarial phase only the task step runs") {
    TrainerConfig cfg = tiny_trainer();
    cfg.adversarial = false;
    Fixture f(cfg);
    const auto disc_before = snapshot(f.model.discriminator_subset());
    const CycleLosses losses = train_cycle(f.state, f.labeled.next(), nullptr, nullptr);
    CHECK(std::isfinite(losses.task));
    CHECK(std::isnan(losses.disc));
    CHECK(std::isnan(losses.gen));
    CHECK(f.state.steps_disc == 0);
    CHECK(f.state.steps_gen == 0);
    CHECK(identical(disc_before, f.model.discriminator_subset()));
    CHECK(f.state.adam.step_count("disc", "discriminator.weight") == 0);
    CHECK(f.state.adam.step_count("gen", "encoder.token_embedding") == 0);
}

TEST_CASE("adversarial cycles need both unlabeled streams") {
    Fixture f;
    CHECK_THROWS_AS((void)train_cycle(f.state, f.labeled.next(), nullptr, &f.un_b),
                    std::invalid_argument);
}

TEST_CASE("a non-finite loss aborts with the cycle and step named") {
    Fixture f;
    f.model.task_head.weight.value.values[0] = std::nan("");
    try {
        (void)train_cycle(f.state, f.labeled.next(), &f.un_a, &f.un_b);
        FAIL("expected an abort");
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("non-finite") != std::string::npos);
        CHECK(msg.find("task") != std::string::npos);
        CHECK(msg.find("cycle 1") != std::string::npos);
    }
}

// ---------------------------------------------------------------------------
// batch stream
// ---------------------------------------------------------------------------

TEST_CASE("batch stream cycles epochs over every document") {
    std::vector<LabeledDoc> docs(6);
    for (std::size_t i = 0; i < docs.size(); ++i) docs[i].id = i + 1;
    BatchStream<LabeledDoc> stream(docs, 4, 9);
    std::multiset<std::uint64_t> seen;
    for (int draws = 0; draws < 3; ++draws)
        for (const LabeledDoc* d : stream.next()) seen.insert(d->id);
    // 12 draws over 6 docs: every doc appears exactly twice
    CHECK(seen.size() == 12);
    for (const auto& d : docs) CHECK(seen.count(d.id) == 2);

    CHECK_THROWS_AS((BatchStream<LabeledDoc>(std::vector<LabeledDoc>{}, 2, 1)),
                    std::invalid_argument);
}

TEST_CASE("batch stream order is deterministic in the seed") {
    std::vector<LabeledDoc> docs(10);
    for (std::size_t i = 0; i < docs.size(); ++i) docs[i].id = i;
    auto draw_ids = [&](std::uint64_t seed) {
        BatchStream<LabeledDoc> stream(docs, 3, seed);
        std::vector<std::uint64_t> ids;
        for (int k = 0; k < 7; ++k)
            for (const LabeledDoc* d : stream.next()) ids.push_back(d->id);
        return ids;
    };
    CHECK(draw_ids(4) == draw_ids(4));
    CHECK(draw_ids(4) != draw_ids(5));
}

// ---------------------------------------------------------------------------
// full runs
// ---------------------------------------------------------------------------

TEST_CASE("training runs end to end and tracks the best dev checkpoint") {
    const ClassificationCorpus corpus = gen_classification_corpus(tiny_spec());
    TrainerConfig cfg = tiny_trainer();
    cfg.total_cycles = 6;
    cfg.eval_every = 2;
    const RunResult r = train_classification(cfg, tiny_encoder(corpus.vocab.size()), corpus);
    REQUIRE(r.checkpoints.size() == 3);
    CHECK(r.checkpoints[0].step == 2);
    CHECK(r.checkpoints[2].step == 6);
    CHECK(r.adversarial);
    double best = -1.0;
    long best_step = 0;
    for (const auto& c : r.checkpoints)
        if (c.en_dev_metric >= best) {  // ties go to the most recent checkpoint
            best = c.en_dev_metric;
            best_step = c.step;
        }
    CHECK(r.best_en_dev == doctest::Approx(best));
    CHECK(r.best_step == best_step);
    CHECK(r.final_en_dev == doctest::Approx(r.checkpoints.back().en_dev_metric));
    REQUIRE(r.model != nullptr);
    // the returned model reproduces the selected checkpoint's dev metric
    const double dev = eval_classification_accuracy(*r.model, corpus.vocab, corpus.dev_a,
                                                    cfg.batch_size);
    CHECK(dev == doctest::Approx(r.best_en_dev));
    const auto metrics = run_metrics(r);
    CHECK(metrics.at("en_dev") == doctest::Approx(r.best_en_dev));
    CHECK(metrics.at("tgt_test") == doctest::Approx(r.tgt_at_best));
    // the corpus has parallel pairs, so the run measures final alignment
    CHECK(std::isfinite(r.final_median_cos));
    CHECK(metrics.at("final_median_cos") == doctest::Approx(r.final_median_cos));
    CHECK(r.final_median_cos >= -1.0);
    CHECK(r.final_median_cos <= 1.0);
}

TEST_CASE("a corpus without parallel pairs skips the alignment metric") {
    CorpusSpec spec = tiny_spec();
    spec.parallel_docs = 0;
    const ClassificationCorpus corpus = gen_classification_corpus(spec);
    const RunResult r =
        train_classification(tiny_trainer(), tiny_encoder(corpus.vocab.size()), corpus);
    CHECK_FALSE(std::isfinite(r.final_median_cos));
    CHECK(run_metrics(r).count("final_median_cos") == 0);
}

TEST_CASE("identical seeds reproduce identical runs and metrics files") {
    const ClassificationCorpus corpus = gen_classification_corpus(tiny_spec());
    TrainerConfig cfg = tiny_trainer();
    cfg.total_cycles = 4;
    auto run = [&] {
        const RunResult r = train_classification(cfg, tiny_encoder(corpus.vocab.size()), corpus);
        std::ostringstream metrics;
        write_metrics(metrics, r);
        return std::pair<std::string, std::vector<double>>(
            metrics.str(), r.model->encoder.token_embedding.value.values);
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);    // byte-identical metrics
    CHECK(a.second == b.second);  // bitwise-identical weights
    TrainerConfig other = cfg;
    other.seed = cfg.seed + 1;
    const RunResult r2 =
        train_classification(other, tiny_encoder(corpus.vocab.size()), corpus);
    std::ostringstream m2;
    write_metrics(m2, r2);
    CHECK(a.first != m2.str());
}

TEST_CASE("metrics file carries dashes for skipped adversarial losses") {
    const ClassificationCorpus corpus = gen_classification_corpus(tiny_spec());
    TrainerConfig cfg = tiny_trainer();
    cfg.total_cycles = 2;
    cfg.eval_every = 1;
    cfg.adversarial = false;
    const RunResult r = train_classification(cfg, tiny_encoder(corpus.vocab.size()), corpus);
    std::ostringstream out;
    write_metrics(out, r);
    const std::string text = out.str();
    CHECK(text.find("step\ttask_loss\tdisc_loss\tgen_loss\ten_dev\ttgt_test") == 0);
    CHECK(text.find("\t-\t-\t") != std::string::npos);
    CHECK_FALSE(r.adversarial);
}

TEST_CASE("baseline training leaves discriminator parameters at initialization") {
    const ClassificationCorpus corpus = gen_classification_corpus(tiny_spec());
    TrainerConfig cfg = tiny_trainer();
    cfg.adversarial = false;
    cfg.total_cycles = 3;
    const RunResult r = train_classification(cfg, tiny_encoder(corpus.vocab.size()), corpus);
    // a fresh model with the same seeds has the same discriminator init
    Model fresh(r.model->encoder.config, corpus.num_classes);
    CHECK(r.model->discriminator.weight.value.values ==
          fresh.discriminator.weight.value.values);
}

TEST_CASE("empty corpus splits and missing streams are rejected") {
    ClassificationCorpus corpus = gen_classification_corpus(tiny_spec());
    corpus.train_a.clear();
    TrainerConfig cfg = tiny_trainer();
    CHECK_THROWS_WITH_AS(
        (void)train_classification(cfg, tiny_encoder(corpus.vocab.size()), corpus),
        "train: empty corpus split", std::invalid_argument);
    ClassificationCorpus corpus2 = gen_classification_corpus(tiny_spec());
    corpus2.unlabeled_b.clear();
    CHECK_THROWS_AS((void)train_classification(cfg, tiny_encoder(corpus2.vocab.size()), corpus2),
                    std::invalid_argument);
}

TEST_CASE("task loss decreases over a short classification run") {
    const ClassificationCorpus corpus = gen_classification_corpus(tiny_spec());
    TrainerConfig cfg = tiny_trainer();
    cfg.total_cycles = 30;
    cfg.eval_every = 30;
    cfg.adversarial = false;
    cfg.lr_task = 5e-3;
    Model model(tiny_encoder(corpus.vocab.size()), corpus.num_classes);
    TrainState state(model, corpus.vocab, cfg);
    BatchStream<LabeledDoc> labeled(corpus.train_a, cfg.batch_size, cfg.seed);
    double first = 0.0, last = 0.0;
    for (int c = 1; c <= cfg.total_cycles; ++c) {
        const CycleLosses losses = train_cycle(state, labeled.next(), nullptr, nullptr);
        if (c == 1) first = losses.task;
        last = losses.task;
    }
    CHECK(last < first);
}

// ---------------------------------------------------------------------------
// checkpoint round trip
// ---------------------------------------------------------------------------

TEST_CASE("checkpoints round trip the full parameter set") {
    const ClassificationCorpus corpus = gen_classification_corpus(tiny_spec());
    TrainerConfig cfg = tiny_trainer();
    cfg.total_cycles = 2;
    const std::string path = "/tmp/langadv_test_ckpt.bin";
    const RunResult r =
        train_classification(cfg, tiny_encoder(corpus.vocab.size()), corpus, "", path);
    const Checkpoint ckpt = load_checkpoint(path);
    CHECK(ckpt.config.hidden == 8);
    CHECK(ckpt.config.vocab_size == corpus.vocab.size());

    Model restored(ckpt.config, corpus.num_classes);
    restore_parameters(ckpt, restored.all());
    CHECK(restored.encoder.token_embedding.value.values ==
          r.model->encoder.token_embedding.value.values);
    CHECK(restored.task_head.weight.value.values == r.model->task_head.weight.value.values);
    CHECK(restored.discriminator.bias.value.values ==
          r.model->discriminator.bias.value.values);
    // evaluation through the restored model matches the recorded metric
    Model loaded(ckpt.config, corpus.num_classes);
    restore_parameters(ckpt, loaded.all());
    const double dev =
        eval_classification_accuracy(loaded, corpus.vocab, corpus.dev_a, cfg.batch_size);
    CHECK(dev == doctest::Approx(r.best_en_dev));
}

TEST_CASE("corrupted checkpoints are rejected") {
    const std::string path = "/tmp/langadv_test_bad_ckpt.bin";
    {
        std::ofstream out(path, std::ios::binary);
        out << "LADVJUNKxxxxxxxxxxxxxxxxxxxxxxxxxxxx";
    }
    CHECK_THROWS_AS((void)load_checkpoint(path), std::runtime_error);
    CHECK_THROWS_AS((void)load_checkpoint("/tmp/langadv_does_not_exist.bin"),
                    std::runtime_error);
}

// ---------------------------------------------------------------------------
// ner path
// ---------------------------------------------------------------------------

TEST_CASE("ner training runs end to end with sequence labels") {
    CorpusSpec spec = tiny_spec();
    spec.entity_density = 0.3;
    const NerCorpus corpus = gen_ner_corpus(spec);
    TrainerConfig cfg = tiny_trainer();
    cfg.total_cycles = 4;
    cfg.eval_every = 2;
    const RunResult r = train_ner(cfg, tiny_encoder(corpus.vocab.size()), corpus);
    REQUIRE(r.checkpoints.size() == 2);
    CHECK(r.best_en_dev >= 0.0);
    CHECK(r.best_en_dev <= 1.0);
    REQUIRE(r.model != nullptr);
    const double f1 = eval_ner_f1(*r.model, corpus.vocab, corpus.dev_a, cfg.batch_size);
    CHECK(f1 == doctest::Approx(r.best_en_dev));
    CHECK(r.model->task_head.num_classes() == kNumTags);
}
