#pragma once

#include "a3m/types.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace a3m {

namespace detail {
struct TensorStorage {
    Shape shape;
    Vec data;
    Vec grad;
    bool requires_grad = false;
};
} // namespace detail

/**
 * Dense row-major array of doubles that can take part in reverse-mode
 * differentiation.
 *
 * A Tensor is a handle: copies share storage and gradient, which is what lets
 * a parameter accumulate gradient across many recorded ops. Use clone() for
 * an independent copy.
 */
class Tensor {
  public:
    Tensor();
    explicit Tensor(Shape shape, bool requires_grad = false);
    Tensor(Shape shape, Vec values, bool requires_grad = false);
    Tensor(Shape shape, const std::vector<Scalar>& values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, Scalar value, bool requires_grad = false);
    static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }
    static Tensor scalar(Scalar value, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(storage_); }
    const Shape& shape() const { return storage_->shape; }
    std::size_t rank() const { return storage_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return storage_->shape.at(axis); }
    std::size_t size() const { return static_cast<std::size_t>(storage_->data.size()); }

    Vec& data() { return storage_->data; }
    const Vec& data() const { return storage_->data; }
    Scalar operator[](std::size_t i) const { return storage_->data[static_cast<Eigen::Index>(i)]; }
    Scalar& operator[](std::size_t i) { return storage_->data[static_cast<Eigen::Index>(i)]; }
    /// Value of a single-element tensor.
    Scalar item() const;

    /// Rank-2 view (rows x cols) of the data.
    MapConstRowMat matrix() const;
    MapRowMat matrix();

    bool requires_grad() const { return storage_->requires_grad; }
    void set_requires_grad(bool flag);
    bool has_grad() const { return storage_->grad.size() == storage_->data.size() && storage_->requires_grad; }
    /// Gradient buffer; allocated as zeros on first access. Gradient state
    /// belongs to the shared storage, so a const handle may accumulate into it.
    Vec& grad() const;
    void zero_grad() const;

    Tensor clone() const;
    /// Same values, no gradient tracking, independent storage.
    Tensor detach() const;

    bool same_storage(const Tensor& other) const { return storage_ == other.storage_; }

  private:
    std::shared_ptr<detail::TensorStorage> storage_;
};

/**
 * Ordered record of differentiable ops.
 *
 * Constructing a Tape makes it the active tape of the calling thread until it
 * is destroyed; ops executed while a tape is active and whose inputs require
 * gradient are appended in execution order, so the record is topologically
 * sorted by construction. backward() visits each op exactly once in reverse.
 */
class Tape {
  public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    void record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backward);
    /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must have one element.
    void backward(const Tensor& loss);

    std::size_t size() const { return ops_.size(); }

  private:
    struct Op {
        std::vector<Tensor> inputs;
        Tensor output;
        std::function<void()> backward;
    };
    std::vector<Op> ops_;
    Tape* previous_ = nullptr;
};

/// True when an op on `inputs` should be recorded.
bool should_record(std::initializer_list<const Tensor*> inputs);

} // namespace a3m
