#pragma once

#include <cstdint>
#include <vector>

#include "langadv/autodiff.hpp"
#include "langadv/encoder.hpp"

namespace langadv {

// Probabilities are clamped to [kProbEps, 1 - kProbEps] before any log.
inline constexpr double kProbEps = 1e-12;

// Losses follow the per-example sums of the training formulas; MeanOverBatch
// additionally divides by batch size (used before each optimizer step so
// learning rates stay batch-size independent).
enum class Reduction { Sum, MeanOverBatch };

// Task output projection: logits = W * pooled + b, W is (classes, hidden).
struct TaskHead {
    Parameter weight;
    Parameter bias;

    TaskHead(int num_classes, int hidden, std::uint64_t seed);
    int num_classes() const { return weight.value.shape[0]; }
    int hidden() const { return weight.value.shape[1]; }
    std::vector<Parameter*> all() { return {&weight, &bias}; }
};

// Language discriminator: p(is_lang_a) = sigmoid(w . pooled + b).
struct Discriminator {
    Parameter weight;  // (hidden, 1)
    Parameter bias;    // (1)

    Discriminator(int hidden, std::uint64_t seed);
    int hidden() const { return weight.value.shape[0]; }
    std::vector<Parameter*> all() { return {&weight, &bias}; }
};

// Class distribution per row: softmax(W * pooled + b), shape (batch, classes).
Var classify_doc(Graph& g, TaskHead& head, Var pooled);

// Cross-entropy of the true class, summed over the batch.
Var task_loss_doc(Graph& g, Var class_probs, const std::vector<int>& labels,
                  Reduction reduction = Reduction::Sum);

// Per-token cross-entropy summed over unmasked positions and the batch.
// labels[b] lists the classes of row b's unmasked tokens in order.
Var task_loss_seq(Graph& g, Var token_states, TaskHead& head,
                  const std::vector<std::vector<int>>& labels, const IntMatrix& mask,
                  Reduction reduction = Reduction::Sum);

// p(language A) per row, clamped into (0,1); shape (batch, 1).
Var discriminate(Graph& g, Discriminator& disc, Var pooled);

// Binary cross-entropy of p(language A) against lang_labels (1 = language A).
Var discriminator_loss(Graph& g, Var p_lang_a, const std::vector<int>& lang_labels,
                       Reduction reduction = Reduction::Sum);

// The adversarial objective: binary cross-entropy against the flipped
// language label, pushing the encoder toward embeddings the discriminator
// misclassifies. Exactly discriminator_loss(p, 1 - y).
Var generator_loss(Graph& g, Var p_lang_a, const std::vector<int>& lang_labels,
                   Reduction reduction = Reduction::Sum);

}  // namespace langadv
