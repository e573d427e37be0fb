#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace isgcd::ad {

// Dense row-major matrix of doubles with an accompanying gradient buffer.
// Vectors are n x 1, scalars 1 x 1. Gradients accumulate additively across
// uses; callers zero them between steps (the optimizer does this after each
// update).
class Tensor {
public:
    Tensor(int rows, int cols, bool requires_grad = false, std::string name = {})
        : rows_(rows),
          cols_(cols),
          requires_grad(requires_grad),
          name(std::move(name)),
          value(static_cast<std::size_t>(rows) * cols, 0.0),
          grad(static_cast<std::size_t>(rows) * cols, 0.0) {
        if (rows < 0 || cols < 0) throw std::invalid_argument("Tensor: negative dimension");
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return value.size(); }
    bool is_scalar() const { return rows_ == 1 && cols_ == 1; }

    double& at(int r, int c) { return value[static_cast<std::size_t>(r) * cols_ + c]; }
    double at(int r, int c) const { return value[static_cast<std::size_t>(r) * cols_ + c]; }
    double& grad_at(int r, int c) { return grad[static_cast<std::size_t>(r) * cols_ + c]; }

    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
    void fill(double v) { std::fill(value.begin(), value.end(), v); }

private:
    int rows_;
    int cols_;

public:
    bool requires_grad;
    std::string name;
    std::vector<double> value;
    std::vector<double> grad;
};

using TensorPtr = std::shared_ptr<Tensor>;

inline TensorPtr make_tensor(int rows, int cols, bool requires_grad = false, std::string name = {}) {
    return std::make_shared<Tensor>(rows, cols, requires_grad, std::move(name));
}

inline TensorPtr make_scalar(double v) {
    auto t = make_tensor(1, 1);
    t->value[0] = v;
    return t;
}

// Value copy that does not participate in differentiation.
inline TensorPtr detach(const TensorPtr& x) {
    auto out = make_tensor(x->rows(), x->cols());
    out->value = x->value;
    return out;
}

// Record of executed differentiable operations for one forward pass.
// backward() replays the records in exact reverse execution order; each record
// adds the chain-rule contribution of one op to the gradients of its inputs.
// A tape belongs to a single training step on a single thread.
class Tape {
public:
    void record(std::function<void()> backward_fn) { records_.push_back(std::move(backward_fn)); }

    std::size_t size() const { return records_.size(); }

    // Seeds d(loss)/d(loss) = 1 and propagates to every requires_grad leaf.
    // Leaves not reachable from `loss` simply keep whatever is in their buffer
    // (zero if freshly zeroed).
    void backward(const TensorPtr& loss) {
        if (!loss->is_scalar()) throw std::invalid_argument("backward: loss must be scalar");
        loss->grad[0] += 1.0;
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
    }

    void clear() { records_.clear(); }

private:
    std::vector<std::function<void()>> records_;
};

} // namespace isgcd::ad
