#pragma once

#include "a3m/tensor.hpp"

#include <cstddef>
#include <vector>

namespace a3m {

/// [m x k] * [k x n] -> [m x n]; a rank-1 right operand is a column and
/// yields a rank-1 result.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar factor);
Tensor sum(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator*(Scalar s, const Tensor& a) { return scale(a, s); }

Tensor relu(const Tensor& x);

/// Logistic function, evaluated branch-wise so large |x| never overflows.
/// Results are clamped into the open interval (0, 1).
Tensor sigmoid(const Tensor& x);
Scalar sigmoid(Scalar x);

/// Max-shifted softmax of a rank-1 logit vector.
Vec softmax(const Vec& logits);

/// -log softmax(logits)[target] via log-sum-exp; returns a 1-element tensor.
Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target);

/// Valid cross-correlation of x [C_in x H x W] with kernel
/// [C_out x C_in x k x k]. `padding` adds explicit zero borders; `bias` may
/// be an undefined Tensor.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding = 0);
inline Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride)
{
    return conv2d(x, kernel, Tensor(), stride, 0);
}

/// Per-channel mean over all trailing positions of [d x h x w] or [d x L].
Tensor global_avg_pool(const Tensor& x);

/// (1/n) * V * w for V [d x n], w [n]. With w all ones this is bitwise equal
/// to global_avg_pool(V).
Tensor weighted_column_mean(const Tensor& V, const Tensor& w);

/// Per-position maximum; gradient goes to the lowest-index argmax input.
Tensor elementwise_max(const std::vector<Tensor>& xs);

Tensor reshape(const Tensor& x, Shape shape);
Tensor column(const Tensor& a, std::size_t j);
Tensor stack_columns(const std::vector<Tensor>& columns);

/// W x + b for W [C x d], x [d], b [C].
Tensor linear(const Tensor& W, const Tensor& x, const Tensor& b);

} // namespace a3m
