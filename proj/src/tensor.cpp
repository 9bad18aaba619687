#include "a3m/tensor.hpp"

#include "a3m/errors.hpp"

#include <sstream>

namespace a3m {

std::size_t shape_size(const Shape& shape)
{
    std::size_t n = 1;
    for (auto e : shape)
        n *= e;
    return n;
}

std::string shape_str(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i)
        os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

namespace {

void check_shape(const Shape& shape)
{
    for (auto e : shape)
        if (e == 0)
            throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
}

thread_local Tape* g_active_tape = nullptr;

} // namespace

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, bool requires_grad)
    : Tensor(std::move(shape), Vec(), requires_grad)
{
}

Tensor::Tensor(Shape shape, Vec values, bool requires_grad)
    : storage_(std::make_shared<detail::TensorStorage>())
{
    check_shape(shape);
    const auto n = static_cast<Eigen::Index>(shape_size(shape));
    if (values.size() == 0)
        values = Vec::Zero(n);
    if (values.size() != n)
        throw DimensionError("tensor of shape " + shape_str(shape) + " needs " + std::to_string(n) +
                             " values, got " + std::to_string(values.size()));
    storage_->shape = std::move(shape);
    storage_->data = std::move(values);
    storage_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, const std::vector<Scalar>& values, bool requires_grad)
    : Tensor(std::move(shape), Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size())),
             requires_grad)
{
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return Tensor(std::move(shape), requires_grad); }

Tensor Tensor::full(Shape shape, Scalar value, bool requires_grad)
{
    const auto n = static_cast<Eigen::Index>(shape_size(shape));
    return Tensor(std::move(shape), Vec::Constant(n, value), requires_grad);
}

Tensor Tensor::scalar(Scalar value, bool requires_grad) { return full({1}, value, requires_grad); }

Scalar Tensor::item() const
{
    if (size() != 1)
        throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return storage_->data[0];
}

MapConstRowMat Tensor::matrix() const
{
    if (rank() != 2)
        throw DimensionError("matrix view needs rank 2, got " + shape_str(shape()));
    return MapConstRowMat(storage_->data.data(), static_cast<Eigen::Index>(dim(0)),
                          static_cast<Eigen::Index>(dim(1)));
}

MapRowMat Tensor::matrix()
{
    if (rank() != 2)
        throw DimensionError("matrix view needs rank 2, got " + shape_str(shape()));
    return MapRowMat(storage_->data.data(), static_cast<Eigen::Index>(dim(0)), static_cast<Eigen::Index>(dim(1)));
}

void Tensor::set_requires_grad(bool flag)
{
    storage_->requires_grad = flag;
    if (!flag)
        storage_->grad.resize(0);
}

Vec& Tensor::grad() const
{
    if (storage_->grad.size() != storage_->data.size())
        storage_->grad = Vec::Zero(storage_->data.size());
    return storage_->grad;
}

void Tensor::zero_grad() const
{
    if (storage_->grad.size() > 0)
        storage_->grad.setZero();
}

Tensor Tensor::clone() const
{
    Tensor out(shape(), data(), requires_grad());
    if (storage_->grad.size() > 0)
        out.storage_->grad = storage_->grad;
    return out;
}

Tensor Tensor::detach() const { return Tensor(shape(), data(), false); }

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backward)
{
    ops_.push_back(Op{std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss)
{
    if (loss.size() != 1)
        throw DimensionError("backward() needs a single-element loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad())
        return;
    Tensor seed = loss;
    seed.grad()[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
        // Ops whose output never received gradient contribute nothing.
        if (!it->output.has_grad())
            continue;
        it->backward();
    }
}

bool should_record(std::initializer_list<const Tensor*> inputs)
{
    if (Tape::active() == nullptr)
        return false;
    for (const Tensor* t : inputs)
        if (t->defined() && t->requires_grad())
            return true;
    return false;
}

} // namespace a3m
