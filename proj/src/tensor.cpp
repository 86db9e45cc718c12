#include "glsgn/tensor.hpp"

#include <sstream>

namespace glsgn {

const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::ShapeMismatch: return "shape mismatch";
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::UnsupportedFormat: return "unsupported format";
    case ErrorCode::MalformedHeader: return "malformed header";
    case ErrorCode::TruncatedPayload: return "truncated payload";
    case ErrorCode::UnsupportedMaxval: return "unsupported maxval";
    case ErrorCode::Io: return "i/o failure";
    case ErrorCode::CorruptCheckpoint: return "corrupt checkpoint";
    case ErrorCode::Config: return "configuration error";
    }
    return "unknown";
}

void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition)
        fail(code, message);
}

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int d : shape) {
        require(d >= 0, ErrorCode::ShapeMismatch, "negative dimension in " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < shape.size(); ++i)
        os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<TensorImpl<T>>()) {
    const int64_t n = shape_numel(shape);
    impl_->shape = std::move(shape);
    impl_->data.assign(static_cast<size_t>(n), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<TensorImpl<T>>()) {
    const int64_t n = shape_numel(shape);
    require(n == static_cast<int64_t>(values.size()), ErrorCode::ShapeMismatch,
            "data length " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
}

template <typename T>
std::span<T> Tensor<T>::grad() {
    if (impl_->grad.empty())
        impl_->grad.assign(impl_->data.size(), T(0));
    return impl_->grad;
}

template <typename T>
T Tensor<T>::item() const {
    require(impl_->data.size() == 1, ErrorCode::ShapeMismatch,
            "item() on tensor of shape " + shape_str(impl_->shape));
    return impl_->data[0];
}

template <typename T>
T& Tensor<T>::at(int n, int c, int h, int w) {
    const Shape& s = impl_->shape;
    return impl_->data[((static_cast<size_t>(n) * s[1] + c) * s[2] + h) * s[3] + w];
}

template <typename T>
T Tensor<T>::at(int n, int c, int h, int w) const {
    const Shape& s = impl_->shape;
    return impl_->data[((static_cast<size_t>(n) * s[1] + c) * s[2] + h) * s[3] + w];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
    return Tensor(impl_->shape, impl_->data);
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return clone();
}

template <typename T>
Graph<T>*& Graph<T>::active_slot() {
    thread_local Graph<T> root;
    thread_local Graph<T>* slot = &root;
    return slot;
}

template <typename T>
Graph<T>& Graph<T>::active() {
    return *active_slot();
}

template <typename T>
void Graph<T>::run_backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        nodes_.clear();
        fail(ErrorCode::ShapeMismatch,
             "backward requires a scalar loss, got shape " +
                 (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) {
        nodes_.clear();
        return;
    }
    auto seed = const_cast<Tensor<T>&>(loss).grad();
    seed[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->output->grad.empty())
            continue;
        it->backward(*it->output);
    }
    nodes_.clear();
}

template <typename T>
static Tensor<T> record_impl(const char* op, Shape shape, std::vector<T> values,
                             std::span<const Tensor<T>> inputs,
                             typename Graph<T>::BackwardFn backward_fn) {
    Tensor<T> out(std::move(shape), std::move(values));
    if (!grad_enabled())
        return out;
    bool any = false;
    for (const auto& in : inputs)
        any = any || in.requires_grad();
    if (!any)
        return out;
    out.set_requires_grad(true);
    typename Graph<T>::Node node;
    node.op = op;
    node.output = out.impl();
    for (const auto& in : inputs)
        if (in.requires_grad())
            node.inputs.push_back(in.impl());
    node.backward = std::move(backward_fn);
    Graph<T>::active().record(std::move(node));
    return out;
}

template <typename T>
Tensor<T> record_op(const char* op, Shape shape, std::vector<T> values,
                    std::initializer_list<Tensor<T>> inputs,
                    typename Graph<T>::BackwardFn backward_fn) {
    return record_impl<T>(op, std::move(shape), std::move(values),
                          std::span<const Tensor<T>>(inputs.begin(), inputs.size()),
                          std::move(backward_fn));
}

template <typename T>
Tensor<T> record_op(const char* op, Shape shape, std::vector<T> values,
                    const std::vector<Tensor<T>>& inputs,
                    typename Graph<T>::BackwardFn backward_fn) {
    return record_impl<T>(op, std::move(shape), std::move(values),
                          std::span<const Tensor<T>>(inputs), std::move(backward_fn));
}

#define GLSGN_INSTANTIATE(T)                                                                   \
    template class Tensor<T>;                                                                  \
    template class Graph<T>;                                                                   \
    template Tensor<T> record_op<T>(const char*, Shape, std::vector<T>,                        \
                                    std::initializer_list<Tensor<T>>,                          \
                                    typename Graph<T>::BackwardFn);                            \
    template Tensor<T> record_op<T>(const char*, Shape, std::vector<T>,                        \
                                    const std::vector<Tensor<T>>&, typename Graph<T>::BackwardFn);

GLSGN_INSTANTIATE(float)
GLSGN_INSTANTIATE(double)

} // namespace glsgn
