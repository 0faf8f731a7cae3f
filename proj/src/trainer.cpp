#include "langadv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "langadv/checkpoint.hpp"
#include "langadv/eval.hpp"

namespace langadv {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Stream salts decorrelate the per-purpose RNG streams derived from one run seed.
constexpr std::uint64_t kLabeledSalt = 0x9e3779b97f4a7c15ull;
constexpr std::uint64_t kUnlabeledASalt = 0xbf58476d1ce4e5b9ull;
constexpr std::uint64_t kUnlabeledBSalt = 0x94d049bb133111ebull;
constexpr std::uint64_t kTaskHeadSalt = 0xd6e8feb86659fd93ull;
constexpr std::uint64_t kDiscSalt = 0xa5a5a5a5a5a5a5a5ull;

[[noreturn]] void abort_run(const TrainState& state, const char* loss_name) {
    throw std::runtime_error("train: non-finite " + std::string(loss_name) + " loss at cycle " +
                             std::to_string(state.cycle));
}

double checked_loss(TrainState& state, Graph& g, Var loss, const char* loss_name) {
    const double value = g.scalar_value(loss);
    if (!std::isfinite(value)) abort_run(state, loss_name);
    return value;
}

}  // namespace

void TrainerConfig::validate() const {
    if (!(lr_task > 0.0)) throw std::invalid_argument("trainer: lr_task must be > 0");
    if (batch_size < 1) throw std::invalid_argument("trainer: batch_size must be >= 1");
    if (total_cycles < 1) throw std::invalid_argument("trainer: total_cycles must be >= 1");
    if (eval_every < 1) throw std::invalid_argument("trainer: eval_every must be >= 1");
    if (adversarial) {
        if (!(resolved_lr_discriminator() > 0.0))
            throw std::invalid_argument("trainer: lr_discriminator must be > 0 when adversarial");
        if (resolved_lr_generator() < 0.0)
            throw std::invalid_argument("trainer: lr_generator must be >= 0");
    }
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0)
        throw std::invalid_argument("trainer: adam betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw std::invalid_argument("trainer: adam_eps must be > 0");
}

Model::Model(const EncoderConfig& config, int num_classes)
    : encoder(config),
      task_head(num_classes, config.hidden, config.seed ^ kTaskHeadSalt),
      discriminator(config.hidden, config.seed ^ kDiscSalt) {}

std::vector<Parameter*> Model::all() {
    std::vector<Parameter*> params = encoder.all();
    for (Parameter* p : task_head.all()) params.push_back(p);
    for (Parameter* p : discriminator.all()) params.push_back(p);
    return params;
}

std::vector<Parameter*> Model::task_subset() {
    std::vector<Parameter*> params = encoder.all();
    for (Parameter* p : task_head.all()) params.push_back(p);
    return params;
}

std::vector<Parameter*> Model::discriminator_subset() { return discriminator.all(); }

std::vector<Parameter*> Model::generator_subset() { return encoder.all(); }

void Model::zero_all_grads() {
    for (Parameter* p : all()) p->zero_grad();
}

AdamState::AdamState(double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamState::step(const std::string& loss_key, const std::vector<Parameter*>& subset,
                     double lr) {
    if (lr < 0.0) throw std::invalid_argument("adam: negative learning rate");
    for (const Parameter* p : subset) {
        if (p == nullptr) throw std::invalid_argument("adam: null parameter");
        if (p->grad_events == 0)
            throw std::runtime_error("adam: missing gradient for parameter " + p->name);
    }
    for (Parameter* p : subset) {
        Slot& slot = slots_[loss_key + '\x1f' + p->name];
        if (slot.t == 0) {
            slot.m = Tensor::zeros(p->value.shape);
            slot.v = Tensor::zeros(p->value.shape);
        } else if (!slot.m.same_shape(p->value)) {
            throw std::invalid_argument("adam: moment shape mismatch for " + p->name);
        }
        slot.t += 1;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(slot.t));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(slot.t));
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            const double g = p->grad.values[i];
            slot.m.values[i] = beta1_ * slot.m.values[i] + (1.0 - beta1_) * g;
            slot.v.values[i] = beta2_ * slot.v.values[i] + (1.0 - beta2_) * g * g;
            const double mhat = slot.m.values[i] / c1;
            const double vhat = slot.v.values[i] / c2;
            if (lr != 0.0) p->value.values[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
        p->zero_grad();
    }
}

long AdamState::step_count(const std::string& loss_key, const std::string& param_name) const {
    const auto it = slots_.find(loss_key + '\x1f' + param_name);
    return it == slots_.end() ? 0 : it->second.t;
}

void adam_step(AdamState& state, const std::string& loss_key,
               const std::vector<Parameter*>& subset, double lr) {
    state.step(loss_key, subset, lr);
}

TrainState::TrainState(Model& m, const Vocab& v, const TrainerConfig& cfg)
    : model(&m), vocab(&v), config(cfg), adam(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps) {
    cfg.validate();
}

// --------------------------------------------------------------------------
// The three steps
// --------------------------------------------------------------------------

double task_step(TrainState& state, const std::vector<const LabeledDoc*>& labeled) {
    std::vector<int> labels;
    labels.reserve(labeled.size());
    for (const LabeledDoc* d : labeled) {
        if (d->label < 0) throw std::invalid_argument("task step: unlabeled document in batch");
        labels.push_back(d->label);
    }
    state.model->zero_all_grads();
    Graph g;
    const TokenBatch batch =
        encode_batch(*state.vocab, token_rows(labeled), state.model->encoder.config.max_len);
    const Var pooled = mean_pool(g, encode(g, state.model->encoder, batch), batch.mask);
    const Var probs = classify_doc(g, state.model->task_head, pooled);
    const Var loss = task_loss_doc(g, probs, labels, Reduction::MeanOverBatch);
    const double value = checked_loss(state, g, loss, "task");
    g.backward(loss);
    state.adam.step("task", state.model->task_subset(), state.config.lr_task);
    ++state.steps_task;
    return value;
}

double task_step_ner(TrainState& state, const std::vector<const TaggedSentence*>& labeled) {
    state.model->zero_all_grads();
    Graph g;
    const TokenBatch batch =
        encode_batch(*state.vocab, token_rows(labeled), state.model->encoder.config.max_len);
    std::vector<std::vector<int>> labels;
    labels.reserve(labeled.size());
    for (const TaggedSentence* s : labeled) {
        const std::size_t len = std::min(s->tags.size(), static_cast<std::size_t>(batch.seq_len()));
        labels.emplace_back(s->tags.begin(), s->tags.begin() + static_cast<long>(len));
    }
    const Var states = encode(g, state.model->encoder, batch);
    const Var loss = task_loss_seq(g, states, state.model->task_head, labels, batch.mask,
                                   Reduction::MeanOverBatch);
    const double value = checked_loss(state, g, loss, "task");
    g.backward(loss);
    state.adam.step("task", state.model->task_subset(), state.config.lr_task);
    ++state.steps_task;
    return value;
}

namespace {

// Shared forward pass of both adversarial steps: p(language A) for an A batch
// and a B batch, and the batch-mean binary cross-entropy against labels 1/0
// (flipped for the generator). The discriminator step detaches the pooled
// embeddings so only its own head receives gradients.
double adversarial_pass(TrainState& state, const std::vector<std::vector<std::string>>& rows_a,
                        const std::vector<std::vector<std::string>>& rows_b, bool generator) {
    Model& model = *state.model;
    state.model->zero_all_grads();
    Graph g;
    const int max_len = model.encoder.config.max_len;
    const TokenBatch batch_a = encode_batch(*state.vocab, rows_a, max_len);
    const TokenBatch batch_b = encode_batch(*state.vocab, rows_b, max_len);

    auto prob_lang_a = [&](const TokenBatch& batch) {
        Var pooled = mean_pool(g, encode(g, model.encoder, batch), batch.mask);
        if (!generator) pooled = g.detach(pooled);
        return discriminate(g, model.discriminator, pooled);
    };
    const Var p_a = prob_lang_a(batch_a);
    const Var p_b = prob_lang_a(batch_b);

    const std::vector<int> ones(rows_a.size(), 1);
    const std::vector<int> zeros(rows_b.size(), 0);
    const Var sum_a = generator ? generator_loss(g, p_a, ones, Reduction::Sum)
                                : discriminator_loss(g, p_a, ones, Reduction::Sum);
    const Var sum_b = generator ? generator_loss(g, p_b, zeros, Reduction::Sum)
                                : discriminator_loss(g, p_b, zeros, Reduction::Sum);
    const double scale = 1.0 / static_cast<double>(rows_a.size() + rows_b.size());
    const Var loss = g.affine(g.add(sum_a, sum_b), scale, 0.0);

    const double value = checked_loss(state, g, loss, generator ? "generator" : "discriminator");
    g.backward(loss);
    if (generator) {
        state.adam.step("gen", model.generator_subset(), state.config.resolved_lr_generator());
        ++state.steps_gen;
    } else {
        state.adam.step("disc", model.discriminator_subset(),
                        state.config.resolved_lr_discriminator());
        ++state.steps_disc;
    }
    return value;
}

}  // namespace

double discriminator_step(TrainState& state, const std::vector<std::vector<std::string>>& rows_a,
                          const std::vector<std::vector<std::string>>& rows_b) {
    return adversarial_pass(state, rows_a, rows_b, /*generator=*/false);
}

double generator_step(TrainState& state, const std::vector<std::vector<std::string>>& rows_a,
                      const std::vector<std::vector<std::string>>& rows_b) {
    return adversarial_pass(state, rows_a, rows_b, /*generator=*/true);
}

namespace {

template <typename T>
CycleLosses run_cycle(TrainState& state, double task_value, BatchStream<T>* unlabeled_a,
                      BatchStream<T>* unlabeled_b) {
    CycleLosses losses{task_value, kNaN, kNaN};
    if (!state.config.adversarial) return losses;
    if (unlabeled_a == nullptr || unlabeled_b == nullptr)
        throw std::invalid_argument("train cycle: adversarial mode needs unlabeled streams");
    losses.disc = discriminator_step(state, token_rows(unlabeled_a->next()),
                                     token_rows(unlabeled_b->next()));
    losses.gen =
        generator_step(state, token_rows(unlabeled_a->next()), token_rows(unlabeled_b->next()));
    return losses;
}

}  // namespace

CycleLosses train_cycle(TrainState& state, const std::vector<const LabeledDoc*>& labeled,
                        BatchStream<LabeledDoc>* unlabeled_a,
                        BatchStream<LabeledDoc>* unlabeled_b) {
    ++state.cycle;
    return run_cycle(state, task_step(state, labeled), unlabeled_a, unlabeled_b);
}

CycleLosses train_cycle_ner(TrainState& state, const std::vector<const TaggedSentence*>& labeled,
                            BatchStream<TaggedSentence>* unlabeled_a,
                            BatchStream<TaggedSentence>* unlabeled_b) {
    ++state.cycle;
    return run_cycle(state, task_step_ner(state, labeled), unlabeled_a, unlabeled_b);
}

// --------------------------------------------------------------------------
// Evaluation helpers
// --------------------------------------------------------------------------

std::vector<int> predict_classes(Model& model, const Vocab& vocab,
                                 const std::vector<const LabeledDoc*>& docs) {
    Graph g;
    const TokenBatch batch = encode_batch(vocab, token_rows(docs), model.encoder.config.max_len);
    const Var pooled = mean_pool(g, encode(g, model.encoder, batch), batch.mask);
    const Var probs = classify_doc(g, model.task_head, pooled);
    const Tensor& p = g.value(probs);
    std::vector<int> preds(docs.size(), 0);
    for (int r = 0; r < p.extent(0); ++r) {
        int best = 0;
        for (int k = 1; k < p.extent(1); ++k)
            if (p.at2(r, k) > p.at2(r, best)) best = k;
        preds[static_cast<std::size_t>(r)] = best;
    }
    return preds;
}

double eval_classification_accuracy(Model& model, const Vocab& vocab,
                                    const std::vector<LabeledDoc>& docs, int batch_size) {
    if (docs.empty()) throw std::invalid_argument("eval: empty document list");
    if (batch_size < 1) throw std::invalid_argument("eval: batch_size must be >= 1");
    std::vector<int> preds, golds;
    preds.reserve(docs.size());
    golds.reserve(docs.size());
    for (std::size_t begin = 0; begin < docs.size(); begin += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(docs.size(), begin + static_cast<std::size_t>(batch_size));
        std::vector<const LabeledDoc*> batch;
        for (std::size_t i = begin; i < end; ++i) {
            if (docs[i].label < 0) throw std::invalid_argument("eval: unlabeled document");
            batch.push_back(&docs[i]);
            golds.push_back(docs[i].label);
        }
        for (int c : predict_classes(model, vocab, batch)) preds.push_back(c);
    }
    return accuracy(preds, golds);
}

double eval_ner_f1(Model& model, const Vocab& vocab, const std::vector<TaggedSentence>& sents,
                   int batch_size) {
    if (sents.empty()) throw std::invalid_argument("eval: empty sentence list");
    if (batch_size < 1) throw std::invalid_argument("eval: batch_size must be >= 1");
    long matched = 0, pred_total = 0, gold_total = 0;
    for (std::size_t begin = 0; begin < sents.size();
         begin += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(sents.size(), begin + static_cast<std::size_t>(batch_size));
        std::vector<const TaggedSentence*> batch;
        for (std::size_t i = begin; i < end; ++i) batch.push_back(&sents[i]);

        Graph g;
        const TokenBatch tokens =
            encode_batch(vocab, token_rows(batch), model.encoder.config.max_len);
        const Var states = encode(g, model.encoder, tokens);
        const Var logits =
            g.add(g.matmul(states, g.transpose_last2(g.param(model.task_head.weight))),
                  g.param(model.task_head.bias));
        const Tensor& values = g.value(logits);

        for (std::size_t i = begin; i < end; ++i) {
            const int r = static_cast<int>(i - begin);
            const std::size_t len =
                std::min(sents[i].tags.size(), static_cast<std::size_t>(tokens.seq_len()));
            std::vector<int> pred_tags;
            pred_tags.reserve(len);
            for (std::size_t s = 0; s < len; ++s) {
                int best = 0;
                for (int k = 1; k < values.extent(2); ++k)
                    if (values.at3(r, static_cast<int>(s), k) >
                        values.at3(r, static_cast<int>(s), best))
                        best = k;
                pred_tags.push_back(best);
            }
            repair_bio(pred_tags);
            const std::vector<int> gold_tags(sents[i].tags.begin(),
                                             sents[i].tags.begin() + static_cast<long>(len));
            const auto pred_spans = extract_spans(pred_tags);
            const auto gold_spans = extract_spans(gold_tags);
            matched += count_matching_spans(pred_spans, gold_spans);
            pred_total += static_cast<long>(pred_spans.size());
            gold_total += static_cast<long>(gold_spans.size());
        }
    }
    return f1_from_counts(matched, pred_total, gold_total).f1;
}

// --------------------------------------------------------------------------
// Full runs
// --------------------------------------------------------------------------

namespace {

struct ParamSnapshot {
    std::vector<Tensor> values;

    static ParamSnapshot capture(Model& model) {
        ParamSnapshot snap;
        for (const Parameter* p : model.all()) snap.values.push_back(p->value);
        return snap;
    }
    void restore(Model& model) const {
        const auto params = model.all();
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
    }
};

void write_run_outputs(const RunResult& result, const EncoderConfig& enc_cfg,
                       const std::string& metrics_path, const std::string& checkpoint_path) {
    if (!metrics_path.empty()) {
        std::ofstream out(metrics_path);
        if (!out) throw std::runtime_error("train: cannot write metrics to " + metrics_path);
        write_metrics(out, result);
        if (!out.flush()) throw std::runtime_error("train: metrics write failed: " + metrics_path);
    }
    if (!checkpoint_path.empty()) {
        std::vector<const Parameter*> params;
        for (Parameter* p : result.model->all()) params.push_back(p);
        save_checkpoint(checkpoint_path, enc_cfg, params);
    }
}

// Shared training loop; Corpus provides train_a/dev_a/unlabeled_b/test_b, the
// metric callback computes the split metric for the current model, and the
// finalize callback measures the end-of-budget model (before the selected
// checkpoint is restored), returning the final parallel-pair alignment.
template <typename DocT, typename MetricFn, typename CycleFn, typename FinalizeFn>
RunResult train_loop(TrainerConfig cfg, EncoderConfig enc_cfg, Model&& built_model,
                     const std::vector<DocT>& train_a, const std::vector<DocT>& dev_a,
                     const std::vector<DocT>& unlabeled_b, const std::vector<DocT>& test_b,
                     const Vocab& vocab, MetricFn metric, CycleFn cycle_fn, FinalizeFn finalize,
                     const std::string& metrics_path, const std::string& checkpoint_path) {
    cfg.validate();
    if (train_a.empty() || dev_a.empty() || test_b.empty())
        throw std::invalid_argument("train: empty corpus split");
    if (cfg.adversarial && unlabeled_b.empty())
        throw std::invalid_argument("train: adversarial mode needs unlabeled target documents");

    auto model = std::make_shared<Model>(std::move(built_model));
    TrainState state(*model, vocab, cfg);

    BatchStream<DocT> labeled(train_a, cfg.batch_size, cfg.seed ^ kLabeledSalt);
    std::unique_ptr<BatchStream<DocT>> unl_a, unl_b;
    if (cfg.adversarial) {
        unl_a = std::make_unique<BatchStream<DocT>>(train_a, cfg.batch_size,
                                                    cfg.seed ^ kUnlabeledASalt);
        unl_b = std::make_unique<BatchStream<DocT>>(unlabeled_b, cfg.batch_size,
                                                    cfg.seed ^ kUnlabeledBSalt);
    }

    RunResult result;
    result.adversarial = cfg.adversarial;
    result.best_en_dev = -1.0;
    ParamSnapshot best;
    for (long c = 1; c <= cfg.total_cycles; ++c) {
        const CycleLosses losses = cycle_fn(state, labeled.next(), unl_a.get(), unl_b.get());
        if (c % cfg.eval_every == 0 || c == cfg.total_cycles) {
            CheckpointRecord rec;
            rec.step = c;
            rec.task_loss = losses.task;
            rec.disc_loss = losses.disc;
            rec.gen_loss = losses.gen;
            rec.en_dev_metric = metric(*model, dev_a);
            rec.tgt_test_metric = metric(*model, test_b);
            result.checkpoints.push_back(rec);
            if (rec.en_dev_metric >= result.best_en_dev) {
                result.best_en_dev = rec.en_dev_metric;
                result.best_step = rec.step;
                result.tgt_at_best = rec.tgt_test_metric;
                best = ParamSnapshot::capture(*model);
            }
        }
    }
    result.final_en_dev = result.checkpoints.back().en_dev_metric;
    result.final_tgt_test = result.checkpoints.back().tgt_test_metric;
    result.final_median_cos = finalize(*model);
    best.restore(*model);
    result.model = model;
    write_run_outputs(result, enc_cfg, metrics_path, checkpoint_path);
    return result;
}

}  // namespace

RunResult train_classification(TrainerConfig cfg, EncoderConfig enc_cfg,
                               const ClassificationCorpus& corpus,
                               const std::string& metrics_path,
                               const std::string& checkpoint_path) {
    if (corpus.num_classes < 2)
        throw std::invalid_argument("train: corpus num_classes must be >= 2");
    enc_cfg.seed = cfg.seed;
    enc_cfg.vocab_size = corpus.vocab.size();
    enc_cfg.validate();
    Model model(enc_cfg, corpus.num_classes);
    const int batch = cfg.batch_size;
    auto metric = [batch, &corpus](Model& m, const std::vector<LabeledDoc>& docs) {
        return eval_classification_accuracy(m, corpus.vocab, docs, batch);
    };
    auto cycle = [](TrainState& st, const std::vector<const LabeledDoc*>& labeled,
                    BatchStream<LabeledDoc>* a, BatchStream<LabeledDoc>* b) {
        return train_cycle(st, labeled, a, b);
    };
    auto finalize = [batch, &corpus](Model& m) {
        if (corpus.pairs.empty()) return std::numeric_limits<double>::quiet_NaN();
        return alignment_report(m.encoder, corpus.vocab, corpus.pairs, batch).median_cos;
    };
    return train_loop<LabeledDoc>(cfg, enc_cfg, std::move(model), corpus.train_a, corpus.dev_a,
                                  corpus.unlabeled_b, corpus.test_b, corpus.vocab, metric, cycle,
                                  finalize, metrics_path, checkpoint_path);
}

RunResult train_ner(TrainerConfig cfg, EncoderConfig enc_cfg, const NerCorpus& corpus,
                    const std::string& metrics_path, const std::string& checkpoint_path) {
    enc_cfg.seed = cfg.seed;
    enc_cfg.vocab_size = corpus.vocab.size();
    enc_cfg.validate();
    Model model(enc_cfg, kNumTags);
    const int batch = cfg.batch_size;
    auto metric = [batch, &corpus](Model& m, const std::vector<TaggedSentence>& sents) {
        return eval_ner_f1(m, corpus.vocab, sents, batch);
    };
    auto cycle = [](TrainState& st, const std::vector<const TaggedSentence*>& labeled,
                    BatchStream<TaggedSentence>* a, BatchStream<TaggedSentence>* b) {
        return train_cycle_ner(st, labeled, a, b);
    };
    auto finalize = [batch, &corpus](Model& m) {
        if (corpus.pairs.empty()) return std::numeric_limits<double>::quiet_NaN();
        std::vector<ParallelPair> pairs(corpus.pairs.size());
        for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
            pairs[i].source.tokens = corpus.pairs[i].source.tokens;
            pairs[i].translated.tokens = corpus.pairs[i].translated.tokens;
            pairs[i].translated.lang_a = 0;
        }
        return alignment_report(m.encoder, corpus.vocab, pairs, batch).median_cos;
    };
    return train_loop<TaggedSentence>(cfg, enc_cfg, std::move(model), corpus.train_a, corpus.dev_a,
                                      corpus.unlabeled_b, corpus.test_b, corpus.vocab, metric,
                                      cycle, finalize, metrics_path, checkpoint_path);
}

std::map<std::string, double> run_metrics(const RunResult& result) {
    std::map<std::string, double> m{{"en_dev", result.best_en_dev},
                                    {"tgt_test", result.tgt_at_best}};
    if (std::isfinite(result.final_median_cos)) m["final_median_cos"] = result.final_median_cos;
    return m;
}

void write_metrics(std::ostream& out, const RunResult& result) {
    out << "step\ttask_loss\tdisc_loss\tgen_loss\ten_dev\ttgt_test\n";
    out << std::setprecision(17);
    auto field = [&out](double v) {
        out << '\t';
        if (std::isfinite(v))
            out << v;
        else
            out << '-';
    };
    for (const CheckpointRecord& rec : result.checkpoints) {
        out << rec.step;
        field(rec.task_loss);
        field(rec.disc_loss);
        field(rec.gen_loss);
        field(rec.en_dev_metric);
        field(rec.tgt_test_metric);
        out << '\n';
    }
}

}  // namespace langadv
