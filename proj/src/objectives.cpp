#include "langadv/objectives.hpp"

#include <stdexcept>

namespace langadv {

TaskHead::TaskHead(int num_classes, int hidden, std::uint64_t seed) {
    if (num_classes < 2) throw std::invalid_argument("task head needs at least 2 classes");
    Rng rng(seed);
    weight = Parameter("task_head.weight", Tensor::randn({num_classes, hidden}, rng, 0.02));
    bias = Parameter("task_head.bias", Tensor::zeros({num_classes}));
}

Discriminator::Discriminator(int hidden, std::uint64_t seed) {
    Rng rng(seed);
    weight = Parameter("discriminator.weight", Tensor::randn({hidden, 1}, rng, 0.02));
    bias = Parameter("discriminator.bias", Tensor::zeros({1}));
}

Var classify_doc(Graph& g, TaskHead& head, Var pooled) {
    const Tensor& tp = g.value(pooled);
    if (tp.rank() != 2 || tp.shape[1] != head.hidden()) {
        throw std::invalid_argument("classify_doc: pooled shape " + shape_str(tp.shape) +
                                    " does not match head width " + std::to_string(head.hidden()));
    }
    Var logits = g.add(g.matmul(pooled, g.transpose_last2(g.param(head.weight))),
                       g.param(head.bias));
    return g.softmax(logits);
}

Var task_loss_doc(Graph& g, Var class_probs, const std::vector<int>& labels, Reduction reduction) {
    const Tensor& tp = g.value(class_probs);
    if (tp.rank() != 2) {
        throw std::invalid_argument("task_loss_doc expects (batch, classes), got " +
                                    shape_str(tp.shape));
    }
    const int batch = tp.shape[0];
    const int classes = tp.shape[1];
    if (static_cast<int>(labels.size()) != batch) {
        throw std::invalid_argument("task_loss_doc: " + std::to_string(labels.size()) +
                                    " labels for batch of " + std::to_string(batch));
    }
    Tensor onehot = Tensor::zeros({batch, classes});
    for (int b = 0; b < batch; ++b) {
        if (labels[static_cast<std::size_t>(b)] < 0 || labels[static_cast<std::size_t>(b)] >= classes) {
            throw std::invalid_argument("task label " + std::to_string(labels[static_cast<std::size_t>(b)]) +
                                        " outside [0," + std::to_string(classes) + ")");
        }
        onehot.at2(b, labels[static_cast<std::size_t>(b)]) = 1.0;
    }
    Var picked = g.mul(g.constant(std::move(onehot)),
                       g.log(g.clamp(class_probs, kProbEps, 1.0 - kProbEps)));
    const double scale = reduction == Reduction::Sum ? -1.0 : -1.0 / batch;
    return g.affine(g.sum(picked), scale, 0.0);
}

Var task_loss_seq(Graph& g, Var token_states, TaskHead& head,
                  const std::vector<std::vector<int>>& labels, const IntMatrix& mask,
                  Reduction reduction) {
    const Tensor& ts = g.value(token_states);
    if (ts.rank() != 3 || ts.shape[2] != head.hidden()) {
        throw std::invalid_argument("task_loss_seq: token states " + shape_str(ts.shape) +
                                    " do not match head width " + std::to_string(head.hidden()));
    }
    const int batch = ts.shape[0];
    const int seq = ts.shape[1];
    const int classes = head.num_classes();
    if (mask.rows != batch || mask.cols != seq) {
        throw std::invalid_argument("task_loss_seq: mask extents do not match token states");
    }
    if (static_cast<int>(labels.size()) != batch) {
        throw std::invalid_argument("task_loss_seq: " + std::to_string(labels.size()) +
                                    " label rows for batch of " + std::to_string(batch));
    }
    Tensor onehot = Tensor::zeros({batch, seq, classes});
    for (int b = 0; b < batch; ++b) {
        const std::vector<int>& row = labels[static_cast<std::size_t>(b)];
        std::size_t next = 0;
        for (int s = 0; s < seq; ++s) {
            if (mask.at(b, s) == 0) continue;
            if (next >= row.size()) {
                throw std::invalid_argument("task_loss_seq: row " + std::to_string(b) + " has " +
                                            std::to_string(row.size()) +
                                            " labels but more unmasked tokens");
            }
            const int cls = row[next++];
            if (cls < 0 || cls >= classes) {
                throw std::invalid_argument("tag label " + std::to_string(cls) + " outside [0," +
                                            std::to_string(classes) + ")");
            }
            onehot.at3(b, s, cls) = 1.0;
        }
        if (next == 0) {
            throw std::invalid_argument("task_loss_seq: row " + std::to_string(b) +
                                        " has no unmasked tokens");
        }
        if (next != row.size()) {
            throw std::invalid_argument("task_loss_seq: row " + std::to_string(b) + " has " +
                                        std::to_string(row.size()) + " labels for " +
                                        std::to_string(next) + " unmasked tokens");
        }
    }
    Var logits = g.add(g.matmul(token_states, g.transpose_last2(g.param(head.weight))),
                       g.param(head.bias));
    Var probs = g.softmax(logits);
    Var picked = g.mul(g.constant(std::move(onehot)),
                       g.log(g.clamp(probs, kProbEps, 1.0 - kProbEps)));
    const double scale = reduction == Reduction::Sum ? -1.0 : -1.0 / batch;
    return g.affine(g.sum(picked), scale, 0.0);
}

Var discriminate(Graph& g, Discriminator& disc, Var pooled) {
    const Tensor& tp = g.value(pooled);
    if (tp.rank() != 2 || tp.shape[1] != disc.hidden()) {
        throw std::invalid_argument("discriminate: pooled shape " + shape_str(tp.shape) +
                                    " does not match discriminator width " +
                                    std::to_string(disc.hidden()));
    }
    Var logits = g.add(g.matmul(pooled, g.param(disc.weight)), g.param(disc.bias));
    return g.clamp(g.sigmoid(logits), kProbEps, 1.0 - kProbEps);
}

Var discriminator_loss(Graph& g, Var p_lang_a, const std::vector<int>& lang_labels,
                       Reduction reduction) {
    const Tensor& tp = g.value(p_lang_a);
    const int batch = tp.shape[0];
    if (tp.rank() != 2 || tp.shape[1] != 1) {
        throw std::invalid_argument("discriminator_loss expects probabilities of shape (batch, 1), got " +
                                    shape_str(tp.shape));
    }
    if (static_cast<int>(lang_labels.size()) != batch) {
        throw std::invalid_argument("discriminator_loss: " + std::to_string(lang_labels.size()) +
                                    " labels for batch of " + std::to_string(batch));
    }
    Tensor y = Tensor::zeros({batch, 1});
    for (int b = 0; b < batch; ++b) {
        const int v = lang_labels[static_cast<std::size_t>(b)];
        if (v != 0 && v != 1) {
            throw std::invalid_argument("language label must be 0 or 1, got " + std::to_string(v));
        }
        y.at2(b, 0) = v;
    }
    Var yv = g.constant(std::move(y));
    Var pc = g.clamp(p_lang_a, kProbEps, 1.0 - kProbEps);
    Var pos = g.mul(yv, g.log(pc));
    Var neg = g.mul(g.affine(yv, -1.0, 1.0), g.log(g.affine(pc, -1.0, 1.0)));
    const double scale = reduction == Reduction::Sum ? -1.0 : -1.0 / batch;
    return g.affine(g.sum(g.add(pos, neg)), scale, 0.0);
}

Var generator_loss(Graph& g, Var p_lang_a, const std::vector<int>& lang_labels,
                   Reduction reduction) {
    std::vector<int> flipped;
    flipped.reserve(lang_labels.size());
    for (int v : lang_labels) {
        if (v != 0 && v != 1) {
            throw std::invalid_argument("language label must be 0 or 1, got " + std::to_string(v));
        }
        flipped.push_back(1 - v);
    }
    return discriminator_loss(g, p_lang_a, flipped, reduction);
}

}  // namespace langadv
