#include "langadv/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace langadv {

namespace {

// C[m,n] += A[m,k] * B[k,n]
void mm_nn(double* c, const double* a, const double* b, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,k] += G[m,n] * B[k,n]^T
void mm_nt(double* c, const double* g, const double* b, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const double* grow = g + static_cast<std::size_t>(i) * n;
        double* crow = c + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < k; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * n;
            double s = 0.0;
            for (int l = 0; l < n; ++l) s += grow[l] * brow[l];
            crow[j] += s;
        }
    }
}

// C[k,n] += A[m,k]^T * G[m,n]
void mm_tn(double* c, const double* a, const double* g, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        const double* grow = g + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < k; ++j) {
            const double av = arow[j];
            if (av == 0.0) continue;
            double* crow = c + static_cast<std::size_t>(j) * n;
            for (int l = 0; l < n; ++l) crow[l] += av * grow[l];
        }
    }
}

bool is_suffix(const Shape& suffix, const Shape& full) {
    if (suffix.size() > full.size()) return false;
    return std::equal(suffix.rbegin(), suffix.rend(), full.rbegin());
}

double gelu_fwd(double x) {
    constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
    const double u = c * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_bwd(double x) {
    constexpr double c = 0.7978845608028654;
    const double u = c * (x + 0.044715 * x * x * x);
    const double t = std::tanh(u);
    const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

}  // namespace

int Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

void Graph::check_mine(Var v) const {
    if (v.graph != this || v.node < 0 || v.node >= static_cast<int>(nodes_.size())) {
        throw std::invalid_argument("Var does not belong to this graph");
    }
}

Tensor& Graph::grad_buf(int i) {
    Node& n = node(i);
    if (n.grad.values.empty()) {
        n.grad = Tensor::zeros(n.value.shape);
    }
    n.touched = true;
    return n.grad;
}

const Tensor& Graph::value(Var v) const {
    check_mine(v);
    return node(v.node).value;
}

double Graph::scalar_value(Var v) const {
    const Tensor& t = value(v);
    if (!t.is_scalar()) {
        throw std::invalid_argument("expected scalar, got shape " + shape_str(t.shape));
    }
    return t.values[0];
}

Tensor Graph::grad_of(Var v) const {
    check_mine(v);
    const Node& n = node(v.node);
    if (n.grad.values.empty()) return Tensor::zeros(n.value.shape);
    return n.grad;
}

Var Graph::constant(Tensor t) {
    Node n;
    n.value = std::move(t);
    return own(push(std::move(n)));
}

Var Graph::param(Parameter& p) {
    // Binding the same parameter again returns the existing leaf so one
    // backward pass counts one grad_event no matter how often it is used.
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return own(it->second);
    Node n;
    n.value = p.value;
    n.bound = &p;
    const int id = push(std::move(n));
    param_nodes_.emplace(&p, id);
    return own(id);
}

Var Graph::detach(Var a) {
    check_mine(a);
    return constant(node(a.node).value);
}

Var Graph::matmul(Var a, Var b) {
    check_mine(a);
    check_mine(b);
    const Tensor& ta = node(a.node).value;
    const Tensor& tb = node(b.node).value;
    if (ta.rank() < 2 || tb.rank() < 2) {
        throw std::invalid_argument("matmul needs rank >= 2 operands, got " + shape_str(ta.shape) +
                                    " and " + shape_str(tb.shape));
    }
    const bool b_shared = tb.rank() == 2 && ta.rank() > 2;
    if (!b_shared && ta.rank() != tb.rank()) {
        throw std::invalid_argument("matmul rank mismatch: " + shape_str(ta.shape) + " vs " +
                                    shape_str(tb.shape));
    }
    const int m = ta.shape[ta.shape.size() - 2];
    const int k = ta.shape[ta.shape.size() - 1];
    const int kb = tb.shape[tb.shape.size() - 2];
    const int n = tb.shape[tb.shape.size() - 1];
    if (k != kb) {
        throw std::invalid_argument("matmul inner extent mismatch: " + shape_str(ta.shape) + " vs " +
                                    shape_str(tb.shape));
    }
    if (!b_shared) {
        for (std::size_t i = 0; i + 2 < ta.shape.size(); ++i) {
            if (ta.shape[i] != tb.shape[i]) {
                throw std::invalid_argument("matmul batch extent mismatch: " + shape_str(ta.shape) +
                                            " vs " + shape_str(tb.shape));
            }
        }
    }
    Shape out_shape(ta.shape.begin(), ta.shape.end() - 1);
    out_shape.push_back(n);
    const std::size_t batches = shape_numel(Shape(ta.shape.begin(), ta.shape.end() - 2));

    Node out;
    out.value = Tensor::zeros(out_shape);
    for (std::size_t bi = 0; bi < batches; ++bi) {
        const double* pa = ta.values.data() + bi * static_cast<std::size_t>(m) * k;
        const double* pb = tb.values.data() + (b_shared ? 0 : bi * static_cast<std::size_t>(k) * n);
        double* pc = out.value.values.data() + bi * static_cast<std::size_t>(m) * n;
        mm_nn(pc, pa, pb, m, k, n);
    }
    out.parents = {a.node, b.node};
    out.backprop = [m, k, n, batches, b_shared](Graph& g, int self) {
        const Node& s = g.node(self);
        const Tensor& gv = s.grad;
        const Tensor& va = g.node(s.parents[0]).value;
        const Tensor& vb = g.node(s.parents[1]).value;
        Tensor& da = g.grad_buf(s.parents[0]);
        Tensor& db = g.grad_buf(s.parents[1]);
        for (std::size_t bi = 0; bi < batches; ++bi) {
            const double* pg = gv.values.data() + bi * static_cast<std::size_t>(m) * n;
            const double* pa = va.values.data() + bi * static_cast<std::size_t>(m) * k;
            const double* pb = vb.values.data() + (b_shared ? 0 : bi * static_cast<std::size_t>(k) * n);
            double* pda = da.values.data() + bi * static_cast<std::size_t>(m) * k;
            double* pdb = db.values.data() + (b_shared ? 0 : bi * static_cast<std::size_t>(k) * n);
            mm_nt(pda, pg, pb, m, n, k);
            mm_tn(pdb, pa, pg, m, k, n);
        }
    };
    return own(push(std::move(out)));
}

Var Graph::add(Var a, Var b) {
    check_mine(a);
    check_mine(b);
    const Tensor& ta = node(a.node).value;
    const Tensor& tb = node(b.node).value;
    if (!is_suffix(tb.shape, ta.shape)) {
        throw std::invalid_argument("add shape mismatch: " + shape_str(ta.shape) + " vs " +
                                    shape_str(tb.shape) + " (second operand must be a trailing suffix)");
    }
    const std::size_t nb = tb.numel();
    Node out;
    out.value = ta;
    for (std::size_t i = 0; i < out.value.numel(); ++i) out.value.values[i] += tb.values[i % nb];
    out.parents = {a.node, b.node};
    out.backprop = [nb](Graph& g, int self) {
        const Node& s = g.node(self);
        Tensor& da = g.grad_buf(s.parents[0]);
        Tensor& db = g.grad_buf(s.parents[1]);
        const std::size_t n = s.grad.numel();
        for (std::size_t i = 0; i < n; ++i) {
            da.values[i] += s.grad.values[i];
            db.values[i % nb] += s.grad.values[i];
        }
    };
    return own(push(std::move(out)));
}

Var Graph::mul(Var a, Var b) {
    check_mine(a);
    check_mine(b);
    const Tensor& ta = node(a.node).value;
    const Tensor& tb = node(b.node).value;
    if (ta.shape != tb.shape) {
        throw std::invalid_argument("mul shape mismatch: " + shape_str(ta.shape) + " vs " +
                                    shape_str(tb.shape));
    }
    Node out;
    out.value = ta;
    for (std::size_t i = 0; i < out.value.numel(); ++i) out.value.values[i] *= tb.values[i];
    out.parents = {a.node, b.node};
    out.backprop = [](Graph& g, int self) {
        const Node& s = g.node(self);
        const Tensor& va = g.node(s.parents[0]).value;
        const Tensor& vb = g.node(s.parents[1]).value;
        Tensor& da = g.grad_buf(s.parents[0]);
        Tensor& db = g.grad_buf(s.parents[1]);
        for (std::size_t i = 0; i < s.grad.numel(); ++i) {
            da.values[i] += s.grad.values[i] * vb.values[i];
            db.values[i] += s.grad.values[i] * va.values[i];
        }
    };
    return own(push(std::move(out)));
}

Var Graph::affine(Var a, double scale, double shift) {
    check_mine(a);
    Node out;
    out.value = node(a.node).value;
    for (double& v : out.value.values) v = scale * v + shift;
    out.parents = {a.node};
    out.backprop = [scale](Graph& g, int self) {
        const Node& s = g.node(self);
        Tensor& da = g.grad_buf(s.parents[0]);
        for (std::size_t i = 0; i < s.grad.numel(); ++i) da.values[i] += scale * s.grad.values[i];
    };
    return own(push(std::move(out)));
}

Var Graph::embedding(Var table, const IntMatrix& ids) {
    check_mine(table);
    const Tensor& tt = node(table.node).value;
    if (tt.rank() != 2) {
        throw std::invalid_argument("embedding table must be rank 2, got " + shape_str(tt.shape));
    }
    const int vocab = tt.shape[0];
    const int width = tt.shape[1];
    for (int v : ids.values) {
        if (v < 0 || v >= vocab) {
            throw std::invalid_argument("embedding id " + std::to_string(v) + " outside table with " +
                                        std::to_string(vocab) + " rows");
        }
    }
    Node out;
    out.value = Tensor::zeros({ids.rows, ids.cols, width});
    for (int i = 0; i < ids.rows; ++i) {
        for (int j = 0; j < ids.cols; ++j) {
            const double* src = tt.values.data() + static_cast<std::size_t>(ids.at(i, j)) * width;
            double* dst = out.value.values.data() +
                          (static_cast<std::size_t>(i) * ids.cols + j) * width;
            std::copy(src, src + width, dst);
        }
    }
    out.parents = {table.node};
    out.backprop = [ids, width](Graph& g, int self) {
        const Node& s = g.node(self);
        Tensor& dt = g.grad_buf(s.parents[0]);
        for (int i = 0; i < ids.rows; ++i) {
            for (int j = 0; j < ids.cols; ++j) {
                const double* src = s.grad.values.data() +
                                    (static_cast<std::size_t>(i) * ids.cols + j) * width;
                double* dst = dt.values.data() + static_cast<std::size_t>(ids.at(i, j)) * width;
                for (int w = 0; w < width; ++w) dst[w] += src[w];
            }
        }
    };
    return own(push(std::move(out)));
}

Var Graph::softmax(Var a) {
    check_mine(a);
    const Tensor& ta = node(a.node).value;
    if (ta.rank() < 1) throw std::invalid_argument("softmax needs rank >= 1");
    const int width = ta.shape.back();
    const std::size_t rows = ta.numel() / static_cast<std::size_t>(width);
    Node out;
    out.value = Tensor::zeros(ta.shape);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = ta.values.data() + r * width;
        double* y = out.value.values.data() + r * width;
        double mx = x[0];
        for (int i = 1; i < width; ++i) mx = std::max(mx, x[i]);
        double sum = 0.0;
        for (int i = 0; i < width; ++i) {
            y[i] = std::exp(x[i] - mx);
            sum += y[i];
        }
        for (int i = 0; i < width; ++i) y[i] /= sum;
    }
    out.parents = {a.node};
    out.backprop = [width, rows](Graph& g, int self) {
        const Node& s = g.node(self);
        Tensor& da = g.grad_buf(s.parents[0]);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = s.value.values.data() + r * width;
            const double* gr = s.grad.values.data() + r * width;
            double* d = da.values.data() + r * width;
            double dot = 0.0;
            for (int i = 0; i < width; ++i) dot += gr[i] * y[i];
            for (int i = 0; i < width; ++i) d[i] += y[i] * (gr[i] - dot);
        }
    };
    return own(push(std::move(out)));
}

Var Graph::sigmoid(Var a) {
    check_mine(a);
    Node out;
    out.value = node(a.node).value;
    for (double& v : out.value.values) {
        v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    out.parents = {a.node};
    out.backprop = [](Graph& g, int self) {
        const Node& s = g.node(self);
        Tensor& da = g.grad_buf(s.parents[0]);
        for (std::size_t i = 0; i < s.grad.numel(); ++i) {
            const double y = s.value.values[i];
            da.values[i] += s.grad.values[i] * y * (1.0 - y);
        }
    };
    return own(push(std::move(out)));
}

Var Graph::log(Var a) {
    check_mine(a);
    const Tensor& ta = node(a.node).value;
    for (std::size_t i = 0; i < ta.numel(); ++i) {
        // NaN passes through (the trainer detects it as a non-finite loss);
        // a finite non-positive argument is a structural error caught here.
        if (ta.values[i] <= 0.0) {
            throw std::invalid_argument("log of non-positive value " + std::to_string(ta.values[i]) +
                                        " at index " + std::to_string(i) + " in tensor " +
                                        shape_str(ta.shape));
        }
    }
    Node out;
    out.value = ta;
    for (double& v : out.value.values) v = std::log(v);
    out.parents = {a.node};
    out.backprop = [](Graph& g, int self) {
        const Node& s = g.node(self);
        const Tensor& va = g.node(s.parents[0]).value;
        Tensor& da = g.grad_buf(s.parents[0]);
        for (std::size_t i = 0; i < s.grad.numel(); ++i) {
            da.values[i] += s.grad.values[i] / va.values[i];
        }
    };
    return own(push(std::move(out)));
}

Var Graph::clamp(Var a, double lo, double hi) {
    check_mine(a);
    if (!(lo < hi)) throw std::invalid_argument("clamp needs lo < hi");
    Node out;
    out.value = node(a.node).value;
    // NaN fails both comparisons and passes through, so a diverged upstream
    // value surfaces as a non-finite loss instead of a silently clamped one.
    for (double& v : out.value.values) {
        if (v < lo)
            v = lo;
        else if (v > hi)
            v = hi;
    }
    out.parents = {a.node};
    out.backprop = [lo, hi](Graph& g, int self) {
        const Node& s = g.node(self);
        const Tensor& va = g.node(s.parents[0]).value;
        Tensor& da = g.grad_buf(s.parents[0]);
        for (std::size_t i = 0; i < s.grad.numel(); ++i) {
            if (va.values[i] >= lo && va.values[i] <= hi) da.values[i] += s.grad.values[i];
        }
    };
    return own(push(std::move(out)));
}

Var Graph::masked_mean(Var h, const IntMatrix& mask) {
    check_mine(h);
    const Tensor& th = node(h.node).value;
    if (th.rank() != 3) {
        throw std::invalid_argument("masked_mean input must be (batch, seq, width), got " +
                                    shape_str(th.shape));
    }
    if (mask.rows != th.shape[0] || mask.cols != th.shape[1]) {
        throw std::invalid_argument("masked_mean mask " + std::to_string(mask.rows) + "x" +
                                    std::to_string(mask.cols) + " does not match input " +
                                    shape_str(th.shape));
    }
    const int batch = th.shape[0], seq = th.shape[1], width = th.shape[2];
    std::vector<int> counts(static_cast<std::size_t>(batch), 0);
    for (int b = 0; b < batch; ++b) {
        for (int s = 0; s < seq; ++s) counts[b] += mask.at(b, s) != 0 ? 1 : 0;
        if (counts[b] == 0) {
            throw std::invalid_argument("masked_mean: row " + std::to_string(b) + " is fully masked");
        }
    }
    Node out;
    out.value = Tensor::zeros({batch, width});
    for (int b = 0; b < batch; ++b) {
        double* dst = out.value.values.data() + static_cast<std::size_t>(b) * width;
        for (int s = 0; s < seq; ++s) {
            if (mask.at(b, s) == 0) continue;
            const double* src = th.values.data() + (static_cast<std::size_t>(b) * seq + s) * width;
            for (int w = 0; w < width; ++w) dst[w] += src[w];
        }
        for (int w = 0; w < width; ++w) dst[w] /= counts[b];
    }
    out.parents = {h.node};
    out.backprop = [mask, counts, batch, seq, width](Graph& g, int self) {
        const Node& s = g.node(self);
        Tensor& dh = g.grad_buf(s.parents[0]);
        for (int b = 0; b < batch; ++b) {
            const double* gr = s.grad.values.data() + static_cast<std::size_t>(b) * width;
            for (int t = 0; t < seq; ++t) {
                if (mask.at(b, t) == 0) continue;
                double* dst = dh.values.data() + (static_cast<std::size_t>(b) * seq + t) * width;
                for (int w = 0; w < width; ++w) dst[w] += gr[w] / counts[b];
            }
        }
    };
    return own(push(std::move(out)));
}

Var Graph::layer_norm(Var x, Var gain, Var bias) {
    check_mine(x);
    check_mine(gain);
    check_mine(bias);
    const Tensor& tx = node(x.node).value;
    const Tensor& tg = node(gain.node).value;
    const Tensor& tb = node(bias.node).value;
    const int width = tx.shape.back();
    if (tg.shape != Shape{width} || tb.shape != Shape{width}) {
        throw std::invalid_argument("layer_norm gain/bias must be (" + std::to_string(width) +
                                    "), got " + shape_str(tg.shape) + " and " + shape_str(tb.shape));
    }
    constexpr double eps = 1e-5;
    const std::size_t rows = tx.numel() / static_cast<std::size_t>(width);
    Node out;
    out.value = Tensor::zeros(tx.shape);
    Tensor normed = Tensor::zeros(tx.shape);  // saved for backward
    std::vector<double> inv_std(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = tx.values.data() + r * width;
        double mean = 0.0;
        for (int i = 0; i < width; ++i) mean += xr[i];
        mean /= width;
        double var = 0.0;
        for (int i = 0; i < width; ++i) var += (xr[i] - mean) * (xr[i] - mean);
        var /= width;
        const double istd = 1.0 / std::sqrt(var + eps);
        inv_std[r] = istd;
        double* nr = normed.values.data() + r * width;
        double* yr = out.value.values.data() + r * width;
        for (int i = 0; i < width; ++i) {
            nr[i] = (xr[i] - mean) * istd;
            yr[i] = tg.values[static_cast<std::size_t>(i)] * nr[i] + tb.values[static_cast<std::size_t>(i)];
        }
    }
    out.parents = {x.node, gain.node, bias.node};
    out.backprop = [width, rows, normed = std::move(normed), inv_std = std::move(inv_std)](Graph& g,
                                                                                           int self) {
        const Node& s = g.node(self);
        const Tensor& tg = g.node(s.parents[1]).value;
        Tensor& dx = g.grad_buf(s.parents[0]);
        Tensor& dgain = g.grad_buf(s.parents[1]);
        Tensor& dbias = g.grad_buf(s.parents[2]);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = s.grad.values.data() + r * width;
            const double* nr = normed.values.data() + r * width;
            double* dxr = dx.values.data() + r * width;
            double mean_dn = 0.0, mean_dn_n = 0.0;
            for (int i = 0; i < width; ++i) {
                const double dn = gr[i] * tg.values[static_cast<std::size_t>(i)];
                mean_dn += dn;
                mean_dn_n += dn * nr[i];
                dgain.values[static_cast<std::size_t>(i)] += gr[i] * nr[i];
                dbias.values[static_cast<std::size_t>(i)] += gr[i];
            }
            mean_dn /= width;
            mean_dn_n /= width;
            for (int i = 0; i < width; ++i) {
                const double dn = gr[i] * tg.values[static_cast<std::size_t>(i)];
                dxr[i] += inv_std[r] * (dn - mean_dn - nr[i] * mean_dn_n);
            }
        }
    };
    return own(push(std::move(out)));
}

Var Graph::gelu(Var a) {
    check_mine(a);
    Node out;
    out.value = node(a.node).value;
    for (double& v : out.value.values) v = gelu_fwd(v);
    out.parents = {a.node};
    out.backprop = [](Graph& g, int self) {
        const Node& s = g.node(self);
        const Tensor& va = g.node(s.parents[0]).value;
        Tensor& da = g.grad_buf(s.parents[0]);
        for (std::size_t i = 0; i < s.grad.numel(); ++i) {
            da.values[i] += s.grad.values[i] * gelu_bwd(va.values[i]);
        }
    };
    return own(push(std::move(out)));
}

Var Graph::concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
    for (Var v : parts) check_mine(v);
    const Tensor& first = node(parts[0].node).value;
    Shape lead(first.shape.begin(), first.shape.end() - 1);
    int total = 0;
    std::vector<int> widths;
    for (Var v : parts) {
        const Tensor& t = node(v.node).value;
        if (Shape(t.shape.begin(), t.shape.end() - 1) != lead) {
            throw std::invalid_argument("concat leading-extent mismatch: " + shape_str(first.shape) +
                                        " vs " + shape_str(t.shape));
        }
        widths.push_back(t.shape.back());
        total += t.shape.back();
    }
    Shape out_shape = lead;
    out_shape.push_back(total);
    const std::size_t rows = shape_numel(lead);
    Node out;
    out.value = Tensor::zeros(out_shape);
    for (std::size_t r = 0; r < rows; ++r) {
        double* dst = out.value.values.data() + r * total;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            const Tensor& t = node(parts[p].node).value;
            const int w = widths[p];
            std::copy(t.values.data() + r * w, t.values.data() + (r + 1) * w, dst);
            dst += w;
        }
    }
    out.parents.reserve(parts.size());
    for (Var v : parts) out.parents.push_back(v.node);
    out.backprop = [widths, total, rows](Graph& g, int self) {
        const Node& s = g.node(self);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* src = s.grad.values.data() + r * total;
            for (std::size_t p = 0; p < widths.size(); ++p) {
                Tensor& dp = g.grad_buf(s.parents[p]);
                const int w = widths[p];
                double* dst = dp.values.data() + r * w;
                for (int i = 0; i < w; ++i) dst[i] += src[i];
                src += w;
            }
        }
    };
    return own(push(std::move(out)));
}

Var Graph::slice_last(Var a, int offset, int len) {
    check_mine(a);
    const Tensor& ta = node(a.node).value;
    const int width = ta.shape.back();
    if (offset < 0 || len <= 0 || offset + len > width) {
        throw std::invalid_argument("slice_last [" + std::to_string(offset) + "," +
                                    std::to_string(offset + len) + ") out of range for width " +
                                    std::to_string(width));
    }
    Shape out_shape = ta.shape;
    out_shape.back() = len;
    const std::size_t rows = ta.numel() / static_cast<std::size_t>(width);
    Node out;
    out.value = Tensor::zeros(out_shape);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = ta.values.data() + r * width + offset;
        std::copy(src, src + len, out.value.values.data() + r * len);
    }
    out.parents = {a.node};
    out.backprop = [offset, len, width, rows](Graph& g, int self) {
        const Node& s = g.node(self);
        Tensor& da = g.grad_buf(s.parents[0]);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* src = s.grad.values.data() + r * len;
            double* dst = da.values.data() + r * width + offset;
            for (int i = 0; i < len; ++i) dst[i] += src[i];
        }
    };
    return own(push(std::move(out)));
}

Var Graph::transpose_last2(Var a) {
    check_mine(a);
    const Tensor& ta = node(a.node).value;
    if (ta.rank() < 2) throw std::invalid_argument("transpose_last2 needs rank >= 2");
    const int m = ta.shape[ta.shape.size() - 2];
    const int n = ta.shape[ta.shape.size() - 1];
    Shape out_shape = ta.shape;
    std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
    const std::size_t batches = ta.numel() / (static_cast<std::size_t>(m) * n);
    Node out;
    out.value = Tensor::zeros(out_shape);
    for (std::size_t b = 0; b < batches; ++b) {
        const double* src = ta.values.data() + b * static_cast<std::size_t>(m) * n;
        double* dst = out.value.values.data() + b * static_cast<std::size_t>(m) * n;
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) dst[static_cast<std::size_t>(j) * m + i] = src[static_cast<std::size_t>(i) * n + j];
        }
    }
    out.parents = {a.node};
    out.backprop = [m, n, batches](Graph& g, int self) {
        const Node& s = g.node(self);
        Tensor& da = g.grad_buf(s.parents[0]);
        for (std::size_t b = 0; b < batches; ++b) {
            const double* src = s.grad.values.data() + b * static_cast<std::size_t>(m) * n;
            double* dst = da.values.data() + b * static_cast<std::size_t>(m) * n;
            for (int j = 0; j < n; ++j) {
                for (int i = 0; i < m; ++i) dst[static_cast<std::size_t>(i) * n + j] += src[static_cast<std::size_t>(j) * m + i];
            }
        }
    };
    return own(push(std::move(out)));
}

Var Graph::sum(Var a) {
    check_mine(a);
    const Tensor& ta = node(a.node).value;
    double s = 0.0;
    for (double v : ta.values) s += v;
    Node out;
    out.value = Tensor::scalar(s);
    out.parents = {a.node};
    out.backprop = [](Graph& g, int self) {
        const Node& s = g.node(self);
        Tensor& da = g.grad_buf(s.parents[0]);
        const double gv = s.grad.values[0];
        for (double& v : da.values) v += gv;
    };
    return own(push(std::move(out)));
}

void Graph::backward(Var root) {
    check_mine(root);
    if (!node(root.node).value.is_scalar()) {
        throw std::invalid_argument("backward root must be scalar, got shape " +
                                    shape_str(node(root.node).value.shape));
    }
    for (Node& n : nodes_) {
        n.grad = Tensor();
        n.touched = false;
    }
    grad_buf(root.node).values[0] = 1.0;
    for (int i = root.node; i >= 0; --i) {
        Node& n = node(i);
        if (!n.touched || !n.backprop) continue;
        n.backprop(*this, i);
    }
    for (int i = 0; i <= root.node; ++i) {
        Node& n = node(i);
        if (n.bound == nullptr || !n.touched) continue;
        Parameter& p = *n.bound;
        for (std::size_t j = 0; j < p.grad.numel(); ++j) p.grad.values[j] += n.grad.values[j];
        p.grad_events += 1;
    }
}

double gradient_check(const std::function<Var(Graph&)>& build_scalar,
                      const std::vector<Parameter*>& params, const GradCheckOptions& opts) {
    if (!(opts.h > 0.0)) throw std::invalid_argument("gradient_check: h must be positive");
    for (Parameter* p : params) p->zero_grad();
    std::vector<Tensor> analytic;
    {
        Graph g;
        Var root = build_scalar(g);
        const double f0 = g.scalar_value(root);
        if (!std::isfinite(f0)) {
            throw std::runtime_error("gradient_check: non-finite function value at the base point");
        }
        g.backward(root);
    }
    analytic.reserve(params.size());
    for (Parameter* p : params) {
        analytic.push_back(p->grad);
        p->zero_grad();
    }

    auto eval_at = [&](const std::string& where) {
        Graph g;
        Var root = build_scalar(g);
        const double f = g.scalar_value(root);
        if (!std::isfinite(f)) {
            throw std::runtime_error("gradient_check: non-finite function value probing " + where);
        }
        return f;
    };

    double max_rel = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        const std::size_t n = p.value.numel();
        std::vector<std::size_t> coords(n);
        std::iota(coords.begin(), coords.end(), 0u);
        if (opts.max_coords_per_param > 0 &&
            static_cast<std::size_t>(opts.max_coords_per_param) < n) {
            Rng rng(opts.sample_seed + pi);
            rng.shuffle(coords);
            coords.resize(static_cast<std::size_t>(opts.max_coords_per_param));
        }
        for (std::size_t c : coords) {
            const std::string where = p.name + "[" + std::to_string(c) + "]";
            const double orig = p.value.values[c];
            p.value.values[c] = orig + opts.h;
            const double fp = eval_at(where);
            p.value.values[c] = orig - opts.h;
            const double fm = eval_at(where);
            p.value.values[c] = orig;
            const double numeric = (fp - fm) / (2.0 * opts.h);
            const double a = analytic[pi].values[c];
            const double rel = std::abs(a - numeric) /
                               std::max({1.0, std::abs(a), std::abs(numeric)});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace langadv
