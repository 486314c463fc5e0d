// SPDX-License-Identifier: Apache-2.0
#include "cud/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "cud/kernels.hpp"

namespace cud {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(static_cast<std::size_t>(shape_numel(shape_)), 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::make_shared<std::vector<double>>(std::move(values))) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(data_->size()))
        throw std::runtime_error("tensor: shape does not match value count");
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(Shape shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.values()) x = v;
    return t;
}

double Tensor::item() const {
    if (size() != 1) throw std::runtime_error("tensor: item() requires a scalar");
    return (*data_)[0];
}

Tensor with_node(const Tensor& t, int node) {
    Tensor out = t;
    out.node_ = node;
    return out;
}

// ---------------------------------------------------------------------------
// Tape

namespace {
thread_local Tape* g_active_tape = nullptr;
thread_local int g_no_grad_depth = 0;
}  // namespace

Tape* Tape::active() { return g_active_tape; }

bool grad_enabled() { return g_active_tape != nullptr && g_no_grad_depth == 0; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() { ++g_no_grad_depth; }
NoGradScope::~NoGradScope() { --g_no_grad_depth; }

Tensor Tape::watch(const Tensor& t) {
    if (!t.defined()) throw std::runtime_error("tape: cannot watch an undefined tensor");
    const int id = record({}, t.size(), nullptr);
    return with_node(t, id);
}

int Tape::record(std::vector<int> parents, std::int64_t out_size, BackwardFn backward) {
    if (ran_backward_) throw std::runtime_error("tape: recording after backward; reset() first");
    nodes_.push_back(Node{std::move(parents), out_size, std::move(backward)});
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::accumulate(int node, const double* g, std::int64_t n) {
    auto& slot = grads_[static_cast<std::size_t>(node)];
    if (slot.empty()) slot.assign(static_cast<std::size_t>(node_size(node)), 0.0);
    if (static_cast<std::int64_t>(slot.size()) != n) throw std::runtime_error("tape: gradient size mismatch");
    for (std::int64_t i = 0; i < n; ++i) slot[static_cast<std::size_t>(i)] += g[i];
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1) throw std::runtime_error("backward: loss must be a scalar");
    if (!loss.recorded()) throw std::runtime_error("backward: loss is not recorded on this tape");
    if (ran_backward_) throw std::runtime_error("backward: tape already consumed; reset() first");
    ran_backward_ = true;
    grads_.assign(nodes_.size(), {});
    grads_[static_cast<std::size_t>(loss.node())] = {1.0};
    for (int i = loss.node(); i >= 0; --i) {
        const auto& node = nodes_[static_cast<std::size_t>(i)];
        const auto& g = grads_[static_cast<std::size_t>(i)];
        if (g.empty() || !node.backward) continue;
        node.backward(g, *this);
    }
}

bool Tape::has_grad(const Tensor& t) const {
    return ran_backward_ && t.recorded() && t.node() < static_cast<int>(grads_.size()) &&
           !grads_[static_cast<std::size_t>(t.node())].empty();
}

const std::vector<double>& Tape::grad(const Tensor& t) const {
    if (!ran_backward_) throw std::runtime_error("tape: grad() before backward()");
    if (!t.recorded()) throw std::runtime_error("tape: tensor is not recorded");
    const auto& g = grads_[static_cast<std::size_t>(t.node())];
    if (g.empty()) throw std::runtime_error("tape: no gradient reached this tensor");
    return g;
}

void Tape::reset() {
    nodes_.clear();
    grads_.clear();
    ran_backward_ = false;
}

// ---------------------------------------------------------------------------
// Op helpers

namespace {

void ensure_finite(const Tensor& t, const char* op) {
    const double* x = t.data();
    const std::int64_t n = t.size();
    for (std::int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i])) {
            std::ostringstream msg;
            msg << op << ": non-finite value at index " << i;
            throw std::runtime_error(msg.str());
        }
    }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) throw std::runtime_error(std::string(op) + ": shape mismatch");
}

bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (!grad_enabled()) return false;
    for (const Tensor* t : inputs)
        if (t->recorded()) return true;
    return false;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    kernels::apply(a.size(), [=](std::int64_t i) { po[i] = pa[i] + pb[i]; });
    ensure_finite(out, "add");
    if (should_record({&a, &b})) {
        Tape& tape = *Tape::active();
        std::vector<int> parents;
        const int ia = a.node(), ib = b.node();
        if (ia >= 0) parents.push_back(ia);
        if (ib >= 0) parents.push_back(ib);
        const int id = tape.record(std::move(parents), out.size(),
                                   [ia, ib](const std::vector<double>& g, Tape& t) {
                                       if (ia >= 0) t.accumulate(ia, g.data(), static_cast<std::int64_t>(g.size()));
                                       if (ib >= 0) t.accumulate(ib, g.data(), static_cast<std::int64_t>(g.size()));
                                   });
        return with_node(out, id);
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    kernels::apply(a.size(), [=](std::int64_t i) { po[i] = pa[i] - pb[i]; });
    ensure_finite(out, "sub");
    if (should_record({&a, &b})) {
        Tape& tape = *Tape::active();
        std::vector<int> parents;
        const int ia = a.node(), ib = b.node();
        if (ia >= 0) parents.push_back(ia);
        if (ib >= 0) parents.push_back(ib);
        const int id = tape.record(std::move(parents), out.size(),
                                   [ia, ib](const std::vector<double>& g, Tape& t) {
                                       if (ia >= 0) t.accumulate(ia, g.data(), static_cast<std::int64_t>(g.size()));
                                       if (ib >= 0) {
                                           std::vector<double> neg(g.size());
                                           for (std::size_t i = 0; i < g.size(); ++i) neg[i] = -g[i];
                                           t.accumulate(ib, neg.data(), static_cast<std::int64_t>(neg.size()));
                                       }
                                   });
        return with_node(out, id);
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    kernels::apply(a.size(), [=](std::int64_t i) { po[i] = pa[i] * pb[i]; });
    ensure_finite(out, "mul");
    if (should_record({&a, &b})) {
        Tape& tape = *Tape::active();
        std::vector<int> parents;
        const int ia = a.node(), ib = b.node();
        if (ia >= 0) parents.push_back(ia);
        if (ib >= 0) parents.push_back(ib);
        Tensor av = a, bv = b;  // keep storage alive for backward
        const int id = tape.record(
            std::move(parents), out.size(), [ia, ib, av, bv](const std::vector<double>& g, Tape& t) {
                const std::int64_t n = static_cast<std::int64_t>(g.size());
                if (ia >= 0) {
                    std::vector<double> da(g.size());
                    const double* pb2 = bv.data();
                    for (std::int64_t i = 0; i < n; ++i) da[static_cast<std::size_t>(i)] = g[static_cast<std::size_t>(i)] * pb2[i];
                    t.accumulate(ia, da.data(), n);
                }
                if (ib >= 0) {
                    std::vector<double> db(g.size());
                    const double* pa2 = av.data();
                    for (std::int64_t i = 0; i < n; ++i) db[static_cast<std::size_t>(i)] = g[static_cast<std::size_t>(i)] * pa2[i];
                    t.accumulate(ib, db.data(), n);
                }
            });
        return with_node(out, id);
    }
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    kernels::apply(a.size(), [=](std::int64_t i) { po[i] = pa[i] * c; });
    ensure_finite(out, "scale");
    if (should_record({&a})) {
        Tape& tape = *Tape::active();
        const int ia = a.node();
        const int id = tape.record({ia}, out.size(), [ia, c](const std::vector<double>& g, Tape& t) {
            std::vector<double> da(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * c;
            t.accumulate(ia, da.data(), static_cast<std::int64_t>(da.size()));
        });
        return with_node(out, id);
    }
    return out;
}

Tensor add_scalar(const Tensor& a, double c) {
    Tensor out(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    kernels::apply(a.size(), [=](std::int64_t i) { po[i] = pa[i] + c; });
    ensure_finite(out, "add_scalar");
    if (should_record({&a})) {
        Tape& tape = *Tape::active();
        const int ia = a.node();
        const int id = tape.record({ia}, out.size(), [ia](const std::vector<double>& g, Tape& t) {
            t.accumulate(ia, g.data(), static_cast<std::int64_t>(g.size()));
        });
        return with_node(out, id);
    }
    return out;
}

Tensor exp(const Tensor& a) {
    Tensor out(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    kernels::apply(a.size(), [=](std::int64_t i) { po[i] = std::exp(pa[i]); });
    ensure_finite(out, "exp");
    if (should_record({&a})) {
        Tape& tape = *Tape::active();
        const int ia = a.node();
        Tensor saved = out;
        const int id = tape.record({ia}, out.size(), [ia, saved](const std::vector<double>& g, Tape& t) {
            std::vector<double> da(g.size());
            const double* e = saved.data();
            for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * e[i];
            t.accumulate(ia, da.data(), static_cast<std::int64_t>(da.size()));
        });
        return with_node(out, id);
    }
    return out;
}

Tensor silu(const Tensor& a) {
    Tensor out(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    kernels::apply(a.size(), [=](std::int64_t i) { po[i] = pa[i] * sigmoid(pa[i]); });
    ensure_finite(out, "silu");
    if (should_record({&a})) {
        Tape& tape = *Tape::active();
        const int ia = a.node();
        Tensor av = a;
        const int id = tape.record({ia}, out.size(), [ia, av](const std::vector<double>& g, Tape& t) {
            std::vector<double> da(g.size());
            const double* x = av.data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double s = sigmoid(x[i]);
                da[i] = g[i] * s * (1.0 + x[i] * (1.0 - s));
            }
            t.accumulate(ia, da.data(), static_cast<std::int64_t>(da.size()));
        });
        return with_node(out, id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Matrix ops

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
        throw std::runtime_error("matmul: dimension mismatch");
    const std::int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    Tensor out(Shape{m, n});
    kernels::matmul(a.data(), false, b.data(), false, out.data(), m, k, n);
    ensure_finite(out, "matmul");
    if (should_record({&a, &b})) {
        Tape& tape = *Tape::active();
        std::vector<int> parents;
        const int ia = a.node(), ib = b.node();
        if (ia >= 0) parents.push_back(ia);
        if (ib >= 0) parents.push_back(ib);
        Tensor av = a, bv = b;
        const int id = tape.record(
            std::move(parents), out.size(), [ia, ib, av, bv, m, k, n](const std::vector<double>& g, Tape& t) {
                if (ia >= 0) {
                    std::vector<double> da(static_cast<std::size_t>(m * k));
                    // dA = dC * B^T
                    kernels::matmul(g.data(), false, bv.data(), true, da.data(), m, n, k);
                    t.accumulate(ia, da.data(), m * k);
                }
                if (ib >= 0) {
                    std::vector<double> db(static_cast<std::size_t>(k * n));
                    // dB = A^T * dC
                    kernels::matmul(av.data(), true, g.data(), false, db.data(), k, m, n);
                    t.accumulate(ib, db.data(), k * n);
                }
            });
        return with_node(out, id);
    }
    return out;
}

Tensor add_row(const Tensor& x, const Tensor& v) {
    if (x.shape().size() != 2 || v.shape().size() != 1 || x.shape()[1] != v.shape()[0])
        throw std::runtime_error("add_row: shape mismatch");
    const std::int64_t m = x.shape()[0], n = x.shape()[1];
    Tensor out(x.shape());
    const double* px = x.data();
    const double* pv = v.data();
    double* po = out.data();
    kernels::apply(x.size(), [=](std::int64_t i) { po[i] = px[i] + pv[i % n]; });
    ensure_finite(out, "add_row");
    if (should_record({&x, &v})) {
        Tape& tape = *Tape::active();
        std::vector<int> parents;
        const int ix = x.node(), iv = v.node();
        if (ix >= 0) parents.push_back(ix);
        if (iv >= 0) parents.push_back(iv);
        const int id = tape.record(std::move(parents), out.size(),
                                   [ix, iv, m, n](const std::vector<double>& g, Tape& t) {
                                       if (ix >= 0) t.accumulate(ix, g.data(), m * n);
                                       if (iv >= 0) {
                                           std::vector<double> dv(static_cast<std::size_t>(n));
                                           kernels::col_sum(g.data(), m, n, dv.data());
                                           t.accumulate(iv, dv.data(), n);
                                       }
                                   });
        return with_node(out, id);
    }
    return out;
}

Tensor scale_rows(const Tensor& x, const std::vector<double>& s) {
    if (x.shape().size() != 2 || static_cast<std::int64_t>(s.size()) != x.shape()[0])
        throw std::runtime_error("scale_rows: shape mismatch");
    const std::int64_t n = x.shape()[1];
    Tensor out(x.shape());
    const double* px = x.data();
    const double* ps = s.data();
    double* po = out.data();
    kernels::apply(x.size(), [=](std::int64_t i) { po[i] = px[i] * ps[i / n]; });
    ensure_finite(out, "scale_rows");
    if (should_record({&x})) {
        Tape& tape = *Tape::active();
        const int ix = x.node();
        std::vector<double> sv = s;
        const int id = tape.record({ix}, out.size(), [ix, sv, n](const std::vector<double>& g, Tape& t) {
            std::vector<double> dx(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * sv[i / static_cast<std::size_t>(n)];
            t.accumulate(ix, dx.data(), static_cast<std::int64_t>(dx.size()));
        });
        return with_node(out, id);
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (x.shape().size() != 2 || gain.shape().size() != 1 || bias.shape().size() != 1 ||
        gain.shape()[0] != x.shape()[1] || bias.shape()[0] != x.shape()[1])
        throw std::runtime_error("layer_norm: shape mismatch");
    const std::int64_t m = x.shape()[0], n = x.shape()[1];
    Tensor out(x.shape());
    auto xhat = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m * n));
    auto inv_sd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m));
    kernels::layer_norm(x.data(), gain.data(), bias.data(), eps, m, n, out.data(), xhat->data(), inv_sd->data());
    ensure_finite(out, "layer_norm");
    if (should_record({&x, &gain, &bias})) {
        Tape& tape = *Tape::active();
        std::vector<int> parents;
        const int ix = x.node(), ig = gain.node(), ib = bias.node();
        if (ix >= 0) parents.push_back(ix);
        if (ig >= 0) parents.push_back(ig);
        if (ib >= 0) parents.push_back(ib);
        Tensor gv = gain;
        const int id = tape.record(
            std::move(parents), out.size(),
            [ix, ig, ib, gv, xhat, inv_sd, m, n](const std::vector<double>& g, Tape& t) {
                const double* xh = xhat->data();
                if (ix >= 0) {
                    std::vector<double> dx(static_cast<std::size_t>(m * n));
                    const double* gn = gv.data();
                    for (std::int64_t r = 0; r < m; ++r) {
                        const double* gr = g.data() + r * n;
                        const double* xr = xh + r * n;
                        double* dr = dx.data() + r * n;
                        double sum_gy = 0.0, sum_gyx = 0.0;
                        for (std::int64_t j = 0; j < n; ++j) {
                            const double gy = gr[j] * gn[j];
                            sum_gy += gy;
                            sum_gyx += gy * xr[j];
                        }
                        const double inv = (*inv_sd)[static_cast<std::size_t>(r)];
                        const double mean_gy = sum_gy / static_cast<double>(n);
                        const double mean_gyx = sum_gyx / static_cast<double>(n);
                        for (std::int64_t j = 0; j < n; ++j) {
                            const double gy = gr[j] * gn[j];
                            dr[j] = (gy - mean_gy - xr[j] * mean_gyx) * inv;
                        }
                    }
                    t.accumulate(ix, dx.data(), m * n);
                }
                if (ig >= 0) {
                    std::vector<double> dg(static_cast<std::size_t>(n), 0.0);
                    for (std::int64_t r = 0; r < m; ++r)
                        for (std::int64_t j = 0; j < n; ++j)
                            dg[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(r * n + j)] * xh[r * n + j];
                    t.accumulate(ig, dg.data(), n);
                }
                if (ib >= 0) {
                    std::vector<double> db(static_cast<std::size_t>(n));
                    kernels::col_sum(g.data(), m, n, db.data());
                    t.accumulate(ib, db.data(), n);
                }
            });
        return with_node(out, id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reductions & composites

Tensor sum(const Tensor& a) {
    Tensor out = Tensor::scalar(kernels::reduce_sum(a.data(), a.size()));
    ensure_finite(out, "sum");
    if (should_record({&a})) {
        Tape& tape = *Tape::active();
        const int ia = a.node();
        const std::int64_t n = a.size();
        const int id = tape.record({ia}, 1, [ia, n](const std::vector<double>& g, Tape& t) {
            std::vector<double> da(static_cast<std::size_t>(n), g[0]);
            t.accumulate(ia, da.data(), n);
        });
        return with_node(out, id);
    }
    return out;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor mse(const Tensor& a, const Tensor& b) {
    Tensor d = sub(a, b);
    return mean(mul(d, d));
}

Tensor stop_gradient(const Tensor& a) { return with_node(a, -1); }

Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& rows) {
    if (x.shape().size() != 2) throw std::runtime_error("gather_rows: input must be 2-d");
    const std::int64_t n = x.shape()[1];
    Tensor out(Shape{static_cast<std::int64_t>(rows.size()), n});
    const double* px = x.data();
    double* po = out.data();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::int64_t src = rows[r];
        if (src < 0 || src >= x.shape()[0]) throw std::runtime_error("gather_rows: index out of range");
        for (std::int64_t j = 0; j < n; ++j) po[static_cast<std::int64_t>(r) * n + j] = px[src * n + j];
    }
    return out;
}

}  // namespace cud
