#include "dehaze/nn/autograd.hpp"

#include "dehaze/core.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace dehaze::nn {

std::string Shape::str() const
{
    std::ostringstream os;
    os << "(" << n << ", " << c << ", " << h << ", " << w << ")";
    return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape), data_(shape.numel(), fill) {}

void Tensor::fill(float value)
{
    std::fill(data_.begin(), data_.end(), value);
}

Tensor Tensor::reshaped(Shape shape) const
{
    if (shape.numel() != numel())
        throw ValidationError("cannot reshape " + shape_.str() + " to " + shape.str());
    Tensor out = *this;
    out.shape_ = shape;
    return out;
}

Tensor& Node::grad_buffer()
{
    if (grad.empty() && !value.empty())
        grad = Tensor(value.shape());
    return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>())
{
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

void Var::zero_grad()
{
    if (node_ && !node_->grad.empty())
        node_->grad.fill(0.0f);
}

namespace {
thread_local bool g_grad_enabled = true;
} // namespace

bool grad_enabled()
{
    return g_grad_enabled;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled)
{
    g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard()
{
    g_grad_enabled = previous_;
}

Var make_result(Tensor value, std::vector<Var> parents, BackwardFn backward)
{
    Var out(std::move(value), false);
    if (!g_grad_enabled)
        return out;
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const Var& p) { return p.defined() && p.requires_grad(); });
    if (!any)
        return out;
    auto& node = *out.node();
    node.requires_grad = true;
    node.parents.reserve(parents.size());
    for (auto& p : parents)
        node.parents.push_back(p.defined() ? p.node() : nullptr);
    node.backward = std::move(backward);
    return out;
}

void backward(const Var& root)
{
    if (!root.defined() || root.value().numel() != 1)
        throw ValidationError("backward() needs a single-element root");
    if (!root.requires_grad())
        return;

    // Iterative post-order DFS gives a reverse topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent && parent->requires_grad && parent->backward && visited.insert(parent).second)
                stack.emplace_back(parent, 0);
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }

    root.node()->grad_buffer()[0] += 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward && !node->grad.empty())
            node->backward(*node);
    }
}

} // namespace dehaze::nn
