#pragma once

#include "dehaze/nn/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace dehaze::nn {

struct Node;

/// Propagates `self.grad` into the gradients of `self.parents`.
using BackwardFn = std::function<void(Node& self)>;

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward;

    /// Gradient buffer, zero-initialised on first use.
    Tensor& grad_buffer();
};

/// Handle to a node of the reverse-mode tape. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_->requires_grad; }

    /// Accumulated gradient; an empty tensor if nothing reached this node.
    const Tensor& grad() const { return node_->grad; }
    Tensor& grad_buffer() { return node_->grad_buffer(); }
    void zero_grad();

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

bool grad_enabled();

/// Disables tape recording for its lifetime (inference).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Wraps an op result. The backward closure is kept only when recording is on
/// and some parent requires a gradient.
Var make_result(Tensor value, std::vector<Var> parents, BackwardFn backward);

/// Reverse sweep from a single-element root, seeding d(root) = 1.
void backward(const Var& root);

} // namespace dehaze::nn
