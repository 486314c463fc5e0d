// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace cud {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);

// Dense n-d array of doubles. Value semantics with shared storage; ops never
// mutate their inputs. `node` points into the active Tape when the tensor was
// produced under recording, -1 otherwise.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double v);

    const Shape& shape() const { return shape_; }
    std::int64_t size() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }
    bool defined() const { return static_cast<bool>(data_); }

    double* data() { return data_->data(); }
    const double* data() const { return data_->data(); }
    std::vector<double>& values() { return *data_; }
    const std::vector<double>& values() const { return *data_; }

    double item() const;  // scalar tensors only

    int node() const { return node_; }
    bool recorded() const { return node_ >= 0; }

private:
    Shape shape_;
    std::shared_ptr<std::vector<double>> data_;
    int node_ = -1;

    friend class Tape;
    friend Tensor with_node(const Tensor& t, int node);
};

// Reverse-mode gradient tape. Append-only: parents always precede children,
// so one reverse sweep visits each node exactly once. Single-use per forward
// pass: call backward() once, read gradients, then reset() or discard.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Registers a leaf (parameter). Returns a tensor sharing storage with t.
    Tensor watch(const Tensor& t);

    void backward(const Tensor& loss);

    bool has_grad(const Tensor& t) const;
    const std::vector<double>& grad(const Tensor& t) const;

    std::size_t node_count() const { return nodes_.size(); }
    void reset();

    static Tape* active();

    // -- recording machinery (used by the ops) --
    using BackwardFn = std::function<void(const std::vector<double>& out_grad, Tape& tape)>;
    int record(std::vector<int> parents, std::int64_t out_size, BackwardFn backward);
    void accumulate(int node, const double* g, std::int64_t n);
    std::int64_t node_size(int node) const { return nodes_[static_cast<std::size_t>(node)].out_size; }

private:
    struct Node {
        std::vector<int> parents;
        std::int64_t out_size = 0;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
    bool ran_backward_ = false;
};

// Activates a tape for the current thread while in scope.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

// Suspends recording while in scope (nestable).
class NoGradScope {
public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;
};

bool grad_enabled();

// -- primitive ops (shapes must match exactly; scalars go through the
//    scale/add_scalar forms) --
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor exp(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);
// x: [m x n] plus a length-n row vector (bias add over rows).
Tensor add_row(const Tensor& x, const Tensor& v);
// Multiplies row i of x by s[i]; s is plain data, not a differentiable input.
Tensor scale_rows(const Tensor& x, const std::vector<double>& s);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// mean over all elements of (a - b)^2
Tensor mse(const Tensor& a, const Tensor& b);
Tensor stop_gradient(const Tensor& a);

// Copies the given rows of a 2-d tensor into a new tensor (values only, no
// gradient tracking; intended for dataset batching).
Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& rows);

}  // namespace cud
