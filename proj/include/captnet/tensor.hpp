#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace captnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Storage precision. Values are always held as doubles; in F32 mode every
/// op result (and every optimizer update) is rounded to the nearest float,
/// so F32 tensors only ever contain float-representable values.
enum class Precision { F32, F64 };

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an op produces NaN or Inf.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Tensor;

namespace detail {

struct TensorImpl;

struct Node {
    const char* op = "";
    std::vector<Tensor> inputs;
    /// Reads out.grad, accumulates into the inputs' grad buffers.
    std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad; // empty until first accumulation
    Precision precision = Precision::F32;
    bool requires_grad = false;
    std::shared_ptr<Node> node;
};

/// Grad buffer of `impl`, allocated zero-filled on first use.
std::vector<double>& grad_buffer(TensorImpl& impl);

bool grad_enabled();

} // namespace detail

/// Dense row-major tensor handle. Copies share storage; the autograd graph
/// keeps inputs alive through the shared handle.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, Precision precision = Precision::F32, bool requires_grad = false);
    static Tensor full(Shape shape, double value, Precision precision = Precision::F32,
                       bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data,
                            Precision precision = Precision::F32, bool requires_grad = false);
    static Tensor scalar(double value, Precision precision = Precision::F32);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;
    Precision precision() const;

    std::span<const double> data() const;
    /// Direct write access. Intended for leaves (parameters, inputs); writing
    /// into a tensor that already feeds a recorded graph invalidates it.
    std::span<double> mutable_data();
    double item() const;
    double at(std::size_t flat) const { return data()[flat]; }

    bool requires_grad() const;
    Tensor& set_requires_grad(bool value);
    /// Empty span when no gradient has been accumulated.
    std::span<const double> grad() const;
    void zero_grad();
    bool is_leaf() const;

    /// Re-tags storage precision in place (rounds when narrowing to F32).
    void set_precision(Precision precision);

    /// Storage copy with no graph history.
    Tensor clone() const;
    Tensor detach() const { return clone(); }

    detail::TensorImpl& impl() const;
    const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    friend Tensor make_op_result(const char*, Shape, std::vector<double>, std::vector<Tensor>,
                                 std::function<void(const detail::TensorImpl&)>);

    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Builds the output of a differentiable op: applies precision rounding,
/// rejects non-finite values, and records a graph node when any input
/// requires grad and grad mode is on. `backward` may be empty for ops that
/// are never differentiated.
Tensor make_op_result(const char* op, Shape shape, std::vector<double> data,
                      std::vector<Tensor> inputs,
                      std::function<void(const detail::TensorImpl&)> backward);

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Topologically ordered record of the ops reachable from a loss.
/// Every entry's inputs appear before it.
class Tape {
public:
    static Tape record(const Tensor& loss);

    std::size_t size() const { return order_.size(); }
    const std::vector<std::shared_ptr<detail::TensorImpl>>& order() const { return order_; }

    /// Seeds d(loss)/d(loss) = 1 and runs every backward rule once in
    /// reverse order. Gradients accumulate into leaves; intermediate
    /// buffers are released after use.
    void backward(const Tensor& loss) const;

private:
    std::vector<std::shared_ptr<detail::TensorImpl>> order_;
};

void backward(const Tensor& loss);

} // namespace captnet
