#include "captnet/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace captnet {

namespace {

thread_local bool g_grad_enabled = true;

void round_to_f32(std::vector<double>& values) {
    for (double& v : values) {
        v = static_cast<double>(static_cast<float>(v));
    }
}

} // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

std::vector<double>& grad_buffer(TensorImpl& impl) {
    if (impl.grad.empty()) {
        impl.grad.assign(impl.data.size(), 0.0);
    }
    return impl.grad;
}

bool grad_enabled() { return g_grad_enabled; }

} // namespace detail

Tensor Tensor::zeros(Shape shape, Precision precision, bool requires_grad) {
    return full(std::move(shape), 0.0, precision, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, Precision precision, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, value), precision, requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, Precision precision,
                         bool requires_grad) {
    for (std::size_t d : shape) {
        if (d == 0) {
            throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
        }
    }
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->precision = precision;
    impl->requires_grad = requires_grad;
    if (precision == Precision::F32) {
        round_to_f32(impl->data);
    }
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, Precision precision) {
    return from_data({1}, {value}, precision);
}

detail::TensorImpl& Tensor::impl() const {
    if (!impl_) {
        throw std::logic_error("use of undefined tensor");
    }
    return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const Shape& s = shape();
    if (axis >= s.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return impl().data.size(); }
Precision Tensor::precision() const { return impl().precision; }
std::span<const double> Tensor::data() const { return impl().data; }
std::span<double> Tensor::mutable_data() { return impl().data; }

double Tensor::item() const {
    if (numel() != 1) {
        throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    }
    return impl().data[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
    impl().requires_grad = value;
    return *this;
}

std::span<const double> Tensor::grad() const { return impl().grad; }

void Tensor::zero_grad() {
    auto& g = impl().grad;
    std::fill(g.begin(), g.end(), 0.0);
}

bool Tensor::is_leaf() const { return impl().node == nullptr; }

void Tensor::set_precision(Precision precision) {
    impl().precision = precision;
    if (precision == Precision::F32) {
        round_to_f32(impl().data);
    }
}

Tensor Tensor::clone() const {
    return from_data(shape(), impl().data, precision(), false);
}

Tensor make_op_result(const char* op, Shape shape, std::vector<double> data,
                      std::vector<Tensor> inputs,
                      std::function<void(const detail::TensorImpl&)> backward) {
    Precision precision = Precision::F32;
    bool needs_grad = false;
    for (const Tensor& in : inputs) {
        if (in.precision() == Precision::F64) {
            precision = Precision::F64;
        }
        needs_grad = needs_grad || in.requires_grad();
    }
    if (precision == Precision::F32) {
        round_to_f32(data);
    }
    for (double v : data) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite value produced by ") + op);
        }
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->precision = precision;
    if (needs_grad && detail::grad_enabled() && backward) {
        impl->requires_grad = true;
        auto node = std::make_shared<detail::Node>();
        node->op = op;
        node->inputs = std::move(inputs);
        node->backward = std::move(backward);
        impl->node = std::move(node);
    }
    return Tensor(std::move(impl));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tape Tape::record(const Tensor& loss) {
    Tape tape;
    std::unordered_set<const detail::TensorImpl*> visited;
    // iterative post-order DFS; inputs visited in declaration order
    struct Frame {
        std::shared_ptr<detail::TensorImpl> impl;
        std::size_t next_input;
    };
    std::vector<Frame> stack;
    if (loss.impl().node) {
        stack.push_back({loss.impl_ptr(), 0});
        visited.insert(loss.impl_ptr().get());
    }
    while (!stack.empty()) {
        Frame& top = stack.back();
        const auto& inputs = top.impl->node->inputs;
        if (top.next_input < inputs.size()) {
            const auto& child = inputs[top.next_input++].impl_ptr();
            if (child->node && visited.insert(child.get()).second) {
                stack.push_back({child, 0});
            }
            continue;
        }
        tape.order_.push_back(top.impl);
        stack.pop_back();
    }
    return tape;
}

void Tape::backward(const Tensor& loss) const {
    if (loss.numel() != 1) {
        throw ShapeError("backward requires a scalar loss, got " + shape_str(loss.shape()));
    }
    detail::TensorImpl& root = loss.impl();
    if (!root.requires_grad) {
        return;
    }
    detail::grad_buffer(root)[0] += 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        detail::TensorImpl& impl = **it;
        if (impl.grad.empty()) {
            continue;
        }
        impl.node->backward(impl);
        if (&impl != &root) {
            std::vector<double>().swap(impl.grad);
        }
    }
}

void backward(const Tensor& loss) { Tape::record(loss).backward(loss); }

} // namespace captnet
