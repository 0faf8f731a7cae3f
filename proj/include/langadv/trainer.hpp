#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "langadv/autodiff.hpp"
#include "langadv/corpus.hpp"
#include "langadv/encoder.hpp"
#include "langadv/objectives.hpp"
#include "langadv/rng.hpp"

namespace langadv {

struct TrainerConfig {
    double lr_task = 2e-3;
    double lr_discriminator = -1.0;  // < 0 resolves to 25 * lr_task
    double lr_generator = -1.0;      // < 0 resolves to lr_task / 100
    int batch_size = 32;
    int total_cycles = 4000;
    int eval_every = 50;
    bool adversarial = true;
    std::uint64_t seed = 1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    double resolved_lr_discriminator() const {
        return lr_discriminator >= 0.0 ? lr_discriminator : 25.0 * lr_task;
    }
    double resolved_lr_generator() const {
        return lr_generator >= 0.0 ? lr_generator : lr_task / 100.0;
    }
    void validate() const;
};

// Encoder plus both heads; the full trainable parameter set.
struct Model {
    EncoderParameters encoder;
    TaskHead task_head;
    Discriminator discriminator;

    Model(const EncoderConfig& config, int num_classes);

    std::vector<Parameter*> all();
    std::vector<Parameter*> task_subset();           // theta + task head
    std::vector<Parameter*> discriminator_subset();  // discriminator head only
    std::vector<Parameter*> generator_subset();      // theta only
    void zero_all_grads();
};

// Adam with bias correction. Moments are keyed by (loss, parameter), so the
// same parameter keeps independent moment estimates under different losses.
class AdamState {
public:
    AdamState(double beta1, double beta2, double eps);

    // One update over the subset at a constant learning rate; every parameter
    // must hold a gradient (grad_events > 0). Gradients are zeroed afterward.
    void step(const std::string& loss_key, const std::vector<Parameter*>& subset, double lr);

    long step_count(const std::string& loss_key, const std::string& param_name) const;

private:
    struct Slot {
        Tensor m, v;
        long t = 0;
    };
    double beta1_, beta2_, eps_;
    std::unordered_map<std::string, Slot> slots_;
};

void adam_step(AdamState& state, const std::string& loss_key,
               const std::vector<Parameter*>& subset, double lr);

// Cycles over a document list in reshuffled epochs under its own seed.
template <typename T>
class BatchStream {
public:
    BatchStream(const std::vector<T>& docs, int batch_size, std::uint64_t seed)
        : docs_(&docs), batch_size_(batch_size), rng_(seed) {
        if (docs.empty()) throw std::invalid_argument("batch stream: empty document list");
        if (batch_size < 1) throw std::invalid_argument("batch stream: batch_size must be >= 1");
        order_.resize(docs.size());
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
        rng_.shuffle(order_);
    }

    std::vector<const T*> next() {
        std::vector<const T*> out;
        out.reserve(static_cast<std::size_t>(batch_size_));
        for (int i = 0; i < batch_size_; ++i) {
            if (pos_ == order_.size()) {
                rng_.shuffle(order_);
                pos_ = 0;
            }
            out.push_back(&(*docs_)[order_[pos_++]]);
        }
        return out;
    }

private:
    const std::vector<T>* docs_;
    int batch_size_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

template <typename T>
std::vector<std::vector<std::string>> token_rows(const std::vector<const T*>& batch) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(batch.size());
    for (const T* doc : batch) rows.push_back(doc->tokens);
    return rows;
}

struct TrainState {
    Model* model;
    const Vocab* vocab;
    TrainerConfig config;
    AdamState adam;
    long cycle = 0;
    long steps_task = 0;
    long steps_disc = 0;
    long steps_gen = 0;

    TrainState(Model& m, const Vocab& v, const TrainerConfig& cfg);
};

// Pre-update loss values of one cycle; quiet NaN marks a step that did not run.
struct CycleLosses {
    double task;
    double disc;
    double gen;
};

// The three optimizer steps. Each zeroes all gradients, runs one forward and
// backward pass, checks the loss is finite, and applies Adam to its own
// parameter subset only. Each returns the pre-update loss.
double task_step(TrainState& state, const std::vector<const LabeledDoc*>& labeled);
double task_step_ner(TrainState& state, const std::vector<const TaggedSentence*>& labeled);
// rows_a are language-A token rows (label 1), rows_b language-B (label 0).
// The discriminator step sees detached embeddings; the generator step
// backpropagates through the encoder against the flipped labels.
double discriminator_step(TrainState& state, const std::vector<std::vector<std::string>>& rows_a,
                          const std::vector<std::vector<std::string>>& rows_b);
double generator_step(TrainState& state, const std::vector<std::vector<std::string>>& rows_a,
                      const std::vector<std::vector<std::string>>& rows_b);

// One cycle: task step on the labeled batch, then (when adversarial) a
// discriminator step and a generator step, each on freshly drawn unlabeled
// batches. Streams may be null when adversarial is off.
CycleLosses train_cycle(TrainState& state, const std::vector<const LabeledDoc*>& labeled,
                        BatchStream<LabeledDoc>* unlabeled_a, BatchStream<LabeledDoc>* unlabeled_b);
CycleLosses train_cycle_ner(TrainState& state, const std::vector<const TaggedSentence*>& labeled,
                            BatchStream<TaggedSentence>* unlabeled_a,
                            BatchStream<TaggedSentence>* unlabeled_b);

struct CheckpointRecord {
    long step = 0;
    double task_loss = 0.0;
    double disc_loss = 0.0;  // NaN when adversarial is off
    double gen_loss = 0.0;
    double en_dev_metric = 0.0;
    double tgt_test_metric = 0.0;
};

struct RunResult {
    std::vector<CheckpointRecord> checkpoints;
    long best_step = 0;          // latest checkpoint achieving the best dev metric
    double best_en_dev = 0.0;
    double tgt_at_best = 0.0;    // target metric at the selected checkpoint
    double final_en_dev = 0.0;
    double final_tgt_test = 0.0;
    // Median parallel-pair cosine of the end-of-budget encoder (not the
    // selected checkpoint): alignment keeps developing after dev accuracy
    // saturates, so this is the stable alignment measurement. NaN when the
    // corpus has no parallel pairs.
    double final_median_cos = std::numeric_limits<double>::quiet_NaN();
    bool adversarial = true;
    std::shared_ptr<Model> model;  // parameters restored to the selected checkpoint
};

// Full training runs. The run seed governs initialization and every batch
// draw; model selection uses the language-A dev metric only. When paths are
// given, the per-checkpoint metrics TSV and the selected checkpoint are
// written there.
RunResult train_classification(TrainerConfig cfg, EncoderConfig enc_cfg,
                               const ClassificationCorpus& corpus,
                               const std::string& metrics_path = "",
                               const std::string& checkpoint_path = "");
RunResult train_ner(TrainerConfig cfg, EncoderConfig enc_cfg, const NerCorpus& corpus,
                    const std::string& metrics_path = "", const std::string& checkpoint_path = "");

// Model evaluation helpers.
std::vector<int> predict_classes(Model& model, const Vocab& vocab,
                                 const std::vector<const LabeledDoc*>& docs);
double eval_classification_accuracy(Model& model, const Vocab& vocab,
                                    const std::vector<LabeledDoc>& docs, int batch_size);
double eval_ner_f1(Model& model, const Vocab& vocab, const std::vector<TaggedSentence>& sents,
                   int batch_size);

// Metrics of one run for cross-run averaging: en_dev and tgt_test at the
// selected checkpoint, plus final_median_cos when the run measured it.
std::map<std::string, double> run_metrics(const RunResult& result);

// Per-checkpoint TSV: step, task/discriminator/generator losses, the two
// metrics. Absent adversarial losses print as "-".
void write_metrics(std::ostream& out, const RunResult& result);

}  // namespace langadv
