#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "hiertask/errors.hpp"
#include "hiertask/rng.hpp"

namespace hiertask {

std::size_t numel(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

/// Trainable buffer that outlives any single forward/backward pass.
/// Gradients accumulate additively; callers zero them between steps.
struct Parameter {
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;

    Parameter() = default;
    Parameter(std::vector<std::size_t> shape_in, std::vector<double> value_in);

    std::size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; the tape owns storage.
class Tensor {
public:
    Tensor() = default;

    const std::vector<std::size_t>& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t extent(std::size_t axis) const { return shape().at(axis); }
    std::size_t size() const;
    const std::vector<double>& values() const;
    /// Gradient buffer filled by Tape::backward. Untracked tensors have none.
    const std::vector<double>& grad() const;
    bool tracked() const;
    double scalar() const;
    bool defined() const { return tape_ != nullptr; }

    std::size_t index() const { return idx_; }
    Tape* tape() const { return tape_; }

private:
    friend class Tape;
    Tensor(Tape* tape, std::size_t idx) : tape_(tape), idx_(idx) {}

    Tape* tape_ = nullptr;
    std::size_t idx_ = 0;
};

/// Eager reverse-mode tape. Operations append nodes in execution order, which
/// is already topological; backward replays them in reverse. One tape serves
/// one forward/backward pass and is confined to a single thread.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Tensor leaf(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad = false);
    /// Leaf that mirrors a Parameter; accumulate_param_grads() flushes its
    /// gradient back into the parameter after backward.
    Tensor leaf_of(Parameter& p);

    /// Seeds d(loss)/d(loss) = 1 and replays all recorded backward rules in
    /// reverse order. Requires a scalar loss produced by this tape.
    void backward(const Tensor& loss);
    /// Adds leaf gradients into their bound Parameter::grad buffers.
    void accumulate_param_grads();

    std::size_t node_count() const { return nodes_.size(); }

    // Low-level interface used by the operation library.
    Tensor alloc(std::vector<std::size_t> shape, std::vector<double> values, bool tracked);
    void record(std::function<void(Tape&)> backward_step);
    const std::vector<std::size_t>& shape_of(std::size_t idx) const { return entries_.at(idx).shape; }
    const std::vector<double>& value_of(std::size_t idx) const { return entries_.at(idx).value; }
    std::vector<double>& grad_of(std::size_t idx);
    bool tracked_of(std::size_t idx) const { return entries_.at(idx).tracked; }

private:
    struct Entry {
        std::vector<std::size_t> shape;
        std::vector<double> value;
        std::vector<double> grad;
        bool tracked = false;
        Parameter* param = nullptr;
    };

    // deque keeps references from shape()/values()/grad() stable while ops
    // append new entries
    std::deque<Entry> entries_;
    std::vector<std::function<void(Tape&)>> nodes_;
};

// ---- differentiable operations --------------------------------------------

/// Matrix product of 2-d tensors [r,k] x [k,c] -> [r,c].
Tensor matmul(const Tensor& a, const Tensor& b);
/// Batched matrix product of 3-d tensors [B,r,k] x [B,k,c] -> [B,r,c].
Tensor bmm(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
/// Broadcast add: bias shape must be a trailing suffix of x's shape.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mean_axis(const Tensor& x, std::size_t axis);

/// Row-wise softmax over the last axis, computed with max subtraction.
Tensor softmax(const Tensor& logits);
/// Mean of -log softmax(logits)[i, labels[i]] over the batch (fused, stable).
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
std::vector<Tensor> split(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& sizes);
Tensor reshape(const Tensor& x, std::vector<std::size_t> new_shape);
/// Swaps the last two axes (rank >= 2).
Tensor transpose(const Tensor& x);

/// Cross-correlation of [n,ci,h,w] with kernels [co,ci,kh,kw] plus bias [co].
Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias,
              std::size_t stride, std::size_t padding);
/// Non-overlapping window mean with window k (trailing remainder dropped).
Tensor avg_pool2d(const Tensor& x, std::size_t k);
/// Mean over spatial axes: [n,c,h,w] -> [n,c].
Tensor global_avg_pool(const Tensor& x);

/// Normalization over the last axis with learned scale and shift.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Inverted dropout: in training, zeroes each element with probability rate
/// and scales survivors by 1/(1-rate); otherwise returns x unchanged.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

}  // namespace hiertask
