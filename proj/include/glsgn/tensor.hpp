#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "glsgn/error.hpp"

namespace glsgn {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad; // empty until first accumulation
    bool requires_grad = false;
};

// Dense row-major array with an optional gradient slot. Copies are shallow:
// two Tensor handles may refer to the same storage, which is how graph nodes
// keep their inputs alive until backward runs.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> values);

    static Tensor scalar(T value) { return Tensor(Shape{1}, value); }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int dim(int i) const { return impl_->shape.at(static_cast<size_t>(i)); }
    int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

    std::span<T> data() { return impl_->data; }
    std::span<const T> data() const { return impl_->data; }
    std::vector<T>& values() & { return impl_->data; }
    const std::vector<T>& values() const& { return impl_->data; }
    std::vector<T> values() && { return impl_->data; }

    bool has_grad() const { return !impl_->grad.empty(); }
    // Allocates a zero buffer on first access.
    std::span<T> grad();
    std::span<const T> grad() const { return impl_->grad; }
    void zero_grad() { impl_->grad.clear(); }

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    Tensor& set_requires_grad(bool flag) {
        impl_->requires_grad = flag;
        return *this;
    }

    T item() const;

    // 4-D element access, NCHW.
    T& at(int n, int c, int h, int w);
    T at(int n, int c, int h, int w) const;

    Tensor clone() const;  // deep copy, no gradient tracking
    Tensor detach() const; // shares nothing with the graph; copies data

    const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

template <typename T>
class Graph {
public:
    using BackwardFn = std::function<void(const TensorImpl<T>& out)>;

    struct Node {
        const char* op;
        std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
        std::shared_ptr<TensorImpl<T>> output;
        BackwardFn backward;
    };

    void record(Node node) { nodes_.push_back(std::move(node)); }
    size_t size() const { return nodes_.size(); }
    const std::vector<Node>& nodes() const { return nodes_; }
    void clear() { nodes_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and visits every node once in reverse
    // execution order. The graph is cleared afterwards.
    void run_backward(const Tensor<T>& loss);

    static Graph& active();

private:
    template <typename>
    friend class GraphScope;
    static Graph*& active_slot();

    std::vector<Node> nodes_;
};

// Redirects recording to a private graph for the lifetime of the scope. Used
// to keep the discriminator update from consuming the generator's graph.
template <typename T>
class GraphScope {
public:
    GraphScope() : previous_(Graph<T>::active_slot()) { Graph<T>::active_slot() = &graph_; }
    ~GraphScope() { Graph<T>::active_slot() = previous_; }
    GraphScope(const GraphScope&) = delete;
    GraphScope& operator=(const GraphScope&) = delete;

    Graph<T>& graph() { return graph_; }

private:
    Graph<T> graph_;
    Graph<T>* previous_;
};

bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

template <typename T>
void backward(const Tensor<T>& loss) {
    Graph<T>::active().run_backward(loss);
}

// Creates the output tensor of an op and, when any input participates in
// differentiation, records a node whose backward closure accumulates into the
// inputs' gradient slots.
template <typename T>
Tensor<T> record_op(const char* op, Shape shape, std::vector<T> values,
                    std::initializer_list<Tensor<T>> inputs,
                    typename Graph<T>::BackwardFn backward_fn);

template <typename T>
Tensor<T> record_op(const char* op, Shape shape, std::vector<T> values,
                    const std::vector<Tensor<T>>& inputs,
                    typename Graph<T>::BackwardFn backward_fn);

// Gradient slot of an input inside a backward closure, or an empty span when
// the input does not require gradients.
template <typename T>
std::span<T> grad_slot(const Tensor<T>& input) {
    if (!input.requires_grad())
        return {};
    return const_cast<Tensor<T>&>(input).grad();
}

void require(bool condition, ErrorCode code, const std::string& message);

} // namespace glsgn
