#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "langadv/tensor.hpp"

namespace langadv {

// Trainable tensor with a gradient accumulator and a stable name.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    long grad_events = 0;  // backward passes that reached this parameter since zero_grad

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape)) {}

    void zero_grad() {
        grad.fill(0.0);
        grad_events = 0;
    }
};

class Graph;

// Handle to a node on a Graph tape.
struct Var {
    Graph* graph = nullptr;
    int node = -1;
    bool valid() const { return graph != nullptr && node >= 0; }
};

// Reverse-mode tape. Operations are recorded in execution order, which is
// a topological order of the dataflow; backward walks the tape once in
// reverse. Single-threaded per instance.
class Graph {
public:
    Var constant(Tensor t);
    Var param(Parameter& p);

    // a: (..., m, k); b: (k, n) or (..., k, n) with matching leading extents.
    Var matmul(Var a, Var b);
    // b has the same shape as a, or a trailing-suffix shape broadcast over
    // the leading axes (bias add).
    Var add(Var a, Var b);
    Var mul(Var a, Var b);  // elementwise, same shape
    Var affine(Var a, double scale, double shift);
    Var embedding(Var table, const IntMatrix& ids);
    Var softmax(Var a);  // rows = last axis
    Var sigmoid(Var a);
    Var log(Var a);  // rejects finite non-positive inputs; NaN propagates
    Var clamp(Var a, double lo, double hi);  // NaN propagates unclamped
    Var masked_mean(Var h, const IntMatrix& mask);  // (B,S,H) -> (B,H)
    Var layer_norm(Var x, Var gain, Var bias);      // normalizes the last axis
    Var gelu(Var a);                                // tanh approximation
    Var concat(const std::vector<Var>& parts);      // along the last axis
    Var slice_last(Var a, int offset, int len);
    Var transpose_last2(Var a);
    Var sum(Var a);  // all elements -> scalar
    Var detach(Var a);

    const Tensor& value(Var v) const;
    double scalar_value(Var v) const;
    // Grad of a non-leaf node after backward (zeros tensor if unreached).
    Tensor grad_of(Var v) const;

    // Accumulates (adds) into Parameter::grad for every parameter reachable
    // from root. root must be scalar.
    void backward(Var root);

    std::size_t node_count() const { return nodes_.size(); }

private:
    friend struct BackpropCtx;
    struct Node {
        Tensor value;
        Tensor grad;  // allocated lazily during backward
        bool touched = false;
        std::vector<int> parents;
        std::function<void(Graph&, int)> backprop;  // index of self
        Parameter* bound = nullptr;
    };

    int push(Node n);
    Node& node(int i) { return nodes_[static_cast<std::size_t>(i)]; }
    const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
    Tensor& grad_buf(int i);  // lazily allocates, marks touched
    Var own(int i) { return Var{this, i}; }
    void check_mine(Var v) const;

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, int> param_nodes_;
};

// Max relative finite-difference error for a scalar-valued function of the
// given parameters. Probes every coordinate unless max_coords_per_param > 0,
// in which case it probes a deterministic sample of that many per tensor.
struct GradCheckOptions {
    double h = 1e-5;
    int max_coords_per_param = 0;
    std::uint64_t sample_seed = 12345;
};

double gradient_check(const std::function<Var(Graph&)>& build_scalar,
                      const std::vector<Parameter*>& params,
                      const GradCheckOptions& opts = {});

}  // namespace langadv
