#include "a3m/ops.hpp"

#include "a3m/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace a3m {

namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op)
{
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}

// Output of an op: tracks gradient iff the op gets recorded.
Tensor make_output(Shape shape, Vec values, bool recorded) { return Tensor(std::move(shape), std::move(values), recorded); }

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b)
{
    if (a.rank() != 2 || (b.rank() != 2 && b.rank() != 1))
        throw DimensionError("matmul: expected [m x k] * [k x n] or [k], got " + shape_str(a.shape()) + " * " +
                             shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), kb = b.dim(0);
    const std::size_t n = b.rank() == 2 ? b.dim(1) : 1;
    if (k != kb)
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " * " +
                             shape_str(b.shape()));
    const bool rec = should_record({&a, &b});
    Shape out_shape = b.rank() == 2 ? Shape{m, n} : Shape{m};
    Tensor out = make_output(out_shape, Vec(idx(m * n)), rec);

    MapConstRowMat A(a.data().data(), idx(m), idx(k));
    MapConstRowMat B(b.data().data(), idx(k), idx(n));
    MapRowMat C(out.data().data(), idx(m), idx(n));
    C.noalias() = A * B;

    if (rec) {
        Tape::active()->record({a, b}, out, [a, b, out, m, k, n]() mutable {
            MapConstRowMat G(out.grad().data(), idx(m), idx(n));
            MapConstRowMat Av(a.data().data(), idx(m), idx(k));
            MapConstRowMat Bv(b.data().data(), idx(k), idx(n));
            if (a.requires_grad()) {
                MapRowMat dA(a.grad().data(), idx(m), idx(k));
                dA.noalias() += G * Bv.transpose();
            }
            if (b.requires_grad()) {
                MapRowMat dB(b.grad().data(), idx(k), idx(n));
                dB.noalias() += Av.transpose() * G;
            }
        });
    }
    return out;
}

Tensor transpose(const Tensor& a)
{
    if (a.rank() != 2)
        throw DimensionError("transpose: expected rank 2, got " + shape_str(a.shape()));
    const std::size_t m = a.dim(0), n = a.dim(1);
    const bool rec = should_record({&a});
    Tensor out = make_output({n, m}, Vec(idx(m * n)), rec);
    out.matrix() = a.matrix().transpose();
    if (rec) {
        Tape::active()->record({a}, out, [a, out, m, n]() mutable {
            MapRowMat dA(a.grad().data(), idx(m), idx(n));
            dA += MapConstRowMat(out.grad().data(), idx(n), idx(m)).transpose();
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b)
{
    require_same_shape(a, b, "add");
    const bool rec = should_record({&a, &b});
    Tensor out = make_output(a.shape(), a.data() + b.data(), rec);
    if (rec) {
        Tape::active()->record({a, b}, out, [a, b, out]() mutable {
            if (a.requires_grad())
                a.grad() += out.grad();
            if (b.requires_grad())
                b.grad() += out.grad();
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b)
{
    require_same_shape(a, b, "mul");
    const bool rec = should_record({&a, &b});
    Tensor out = make_output(a.shape(), a.data().cwiseProduct(b.data()), rec);
    if (rec) {
        Tape::active()->record({a, b}, out, [a, b, out]() mutable {
            if (a.requires_grad())
                a.grad() += out.grad().cwiseProduct(b.data());
            if (b.requires_grad())
                b.grad() += out.grad().cwiseProduct(a.data());
        });
    }
    return out;
}

Tensor scale(const Tensor& a, Scalar factor)
{
    const bool rec = should_record({&a});
    Tensor out = make_output(a.shape(), a.data() * factor, rec);
    if (rec) {
        Tape::active()->record({a}, out, [a, out, factor]() mutable { a.grad() += out.grad() * factor; });
    }
    return out;
}

Tensor sum(const Tensor& a)
{
    const bool rec = should_record({&a});
    Scalar total = 0.0;
    for (Eigen::Index i = 0; i < a.data().size(); ++i)
        total += a.data()[i];
    Tensor out = make_output({1}, Vec::Constant(1, total), rec);
    if (rec) {
        Tape::active()->record({a}, out, [a, out]() mutable { a.grad().array() += out.grad()[0]; });
    }
    return out;
}

Tensor relu(const Tensor& x)
{
    const bool rec = should_record({&x});
    Tensor out = make_output(x.shape(), x.data().cwiseMax(0.0), rec);
    if (rec) {
        Tape::active()->record({x}, out, [x, out]() mutable {
            Vec& gx = x.grad();
            const Vec& g = out.grad();
            for (Eigen::Index i = 0; i < g.size(); ++i)
                if (x.data()[i] > 0.0)
                    gx[i] += g[i];
        });
    }
    return out;
}

Scalar sigmoid(Scalar x)
{
    constexpr Scalar lo = std::numeric_limits<Scalar>::denorm_min();
    constexpr Scalar hi = 1.0 - std::numeric_limits<Scalar>::epsilon() / 2.0;
    Scalar y;
    if (x >= 0.0) {
        y = 1.0 / (1.0 + std::exp(-x));
    } else {
        const Scalar e = std::exp(x);
        y = e / (1.0 + e);
    }
    return std::clamp(y, lo, hi);
}

Tensor sigmoid(const Tensor& x)
{
    const bool rec = should_record({&x});
    Vec y(x.data().size());
    for (Eigen::Index i = 0; i < y.size(); ++i)
        y[i] = sigmoid(x.data()[i]);
    Tensor out = make_output(x.shape(), std::move(y), rec);
    if (rec) {
        Tape::active()->record({x}, out, [x, out]() mutable {
            const Vec& yv = out.data();
            x.grad().array() += out.grad().array() * yv.array() * (1.0 - yv.array());
        });
    }
    return out;
}

Vec softmax(const Vec& logits)
{
    const Scalar shift = logits.maxCoeff();
    Vec e = (logits.array() - shift).exp().matrix();
    return e / e.sum();
}

Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target)
{
    if (logits.rank() != 1)
        throw DimensionError("softmax_cross_entropy: logits must be rank 1, got " + shape_str(logits.shape()));
    if (target >= logits.size())
        throw IndexError("softmax_cross_entropy: target " + std::to_string(target) + " outside [0, " +
                         std::to_string(logits.size()) + ")");
    const Vec& z = logits.data();
    const Scalar shift = z.maxCoeff();
    const Scalar lse = shift + std::log((z.array() - shift).exp().sum());
    const bool rec = should_record({&logits});
    Tensor out = make_output({1}, Vec::Constant(1, lse - z[idx(target)]), rec);
    if (rec) {
        Tape::active()->record({logits}, out, [logits, out, target]() mutable {
            Vec p = softmax(logits.data());
            p[idx(target)] -= 1.0;
            logits.grad() += out.grad()[0] * p;
        });
    }
    return out;
}

namespace {

struct ConvGeometry {
    std::size_t cin, h, w, cout, k, stride, pad, ho, wo;
};

// cols[(c*k + ky)*k + kx, oy*wo + ox] = x[c, oy*s + ky - pad, ox*s + kx - pad]
void im2col(const Vec& x, const ConvGeometry& g, RowMat& cols)
{
    cols.setZero(idx(g.cin * g.k * g.k), idx(g.ho * g.wo));
    for (std::size_t c = 0; c < g.cin; ++c)
        for (std::size_t ky = 0; ky < g.k; ++ky)
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                const auto row = idx((c * g.k + ky) * g.k + kx);
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                    if (iy < 0 || iy >= static_cast<long>(g.h))
                        continue;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                        if (ix < 0 || ix >= static_cast<long>(g.w))
                            continue;
                        cols(row, idx(oy * g.wo + ox)) =
                            x[idx((c * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix))];
                    }
                }
            }
}

void col2im_add(const RowMat& dcols, const ConvGeometry& g, Vec& dx)
{
    for (std::size_t c = 0; c < g.cin; ++c)
        for (std::size_t ky = 0; ky < g.k; ++ky)
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                const auto row = idx((c * g.k + ky) * g.k + kx);
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                    if (iy < 0 || iy >= static_cast<long>(g.h))
                        continue;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                        if (ix < 0 || ix >= static_cast<long>(g.w))
                            continue;
                        dx[idx((c * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix))] +=
                            dcols(row, idx(oy * g.wo + ox));
                    }
                }
            }
}

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride, std::size_t padding)
{
    if (x.rank() != 3 || kernel.rank() != 4)
        throw DimensionError("conv2d: expected input [C x H x W] and kernel [O x C x k x k], got " +
                             shape_str(x.shape()) + " and " + shape_str(kernel.shape()));
    if (stride == 0)
        throw DimensionError("conv2d: stride must be >= 1");
    ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), kernel.dim(0), kernel.dim(2), stride, padding, 0, 0};
    if (kernel.dim(1) != g.cin || kernel.dim(3) != g.k)
        throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " incompatible with input " +
                             shape_str(x.shape()));
    if (g.k > g.h + 2 * g.pad || g.k > g.w + 2 * g.pad)
        throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than input " +
                             shape_str(x.shape()));
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.cout))
        throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " does not match " +
                             std::to_string(g.cout) + " output channels");
    g.ho = (g.h + 2 * g.pad - g.k) / g.stride + 1;
    g.wo = (g.w + 2 * g.pad - g.k) / g.stride + 1;
    const auto P = idx(g.ho * g.wo);
    const auto D = idx(g.cin * g.k * g.k);

    const bool rec = should_record({&x, &kernel, &bias});
    Tensor out = make_output({g.cout, g.ho, g.wo}, Vec(idx(g.cout) * P), rec);
    MapConstRowMat Wm(kernel.data().data(), idx(g.cout), D);
    MapRowMat Out(out.data().data(), idx(g.cout), P);

    // A 1x1 stride-1 unpadded convolution is exactly a matrix product with
    // the input viewed as [C x HW]; no column buffer is needed.
    const bool pointwise = g.k == 1 && g.stride == 1 && g.pad == 0;
    RowMat cols;
    if (pointwise) {
        Out.noalias() = Wm * MapConstRowMat(x.data().data(), D, P);
    } else {
        im2col(x.data(), g, cols);
        Out.noalias() = Wm * cols;
    }
    if (bias.defined())
        Out.colwise() += bias.data();

    if (rec) {
        Tape::active()->record({x, kernel, bias}, out, [x, kernel, bias, out, g, cols = std::move(cols), pointwise, P,
                                                        D]() mutable {
            MapConstRowMat G(out.grad().data(), idx(g.cout), P);
            if (kernel.requires_grad()) {
                MapRowMat dW(kernel.grad().data(), idx(g.cout), D);
                if (pointwise)
                    dW.noalias() += G * MapConstRowMat(x.data().data(), D, P).transpose();
                else
                    dW.noalias() += G * cols.transpose();
            }
            if (bias.defined() && bias.requires_grad())
                bias.grad() += G.rowwise().sum();
            if (x.requires_grad()) {
                MapConstRowMat Wv(kernel.data().data(), idx(g.cout), D);
                if (pointwise) {
                    MapRowMat dX(x.grad().data(), D, P);
                    dX.noalias() += Wv.transpose() * G;
                } else {
                    RowMat dcols = Wv.transpose() * G;
                    col2im_add(dcols, g, x.grad());
                }
            }
        });
    }
    return out;
}

Tensor global_avg_pool(const Tensor& x)
{
    if (x.rank() != 2 && x.rank() != 3)
        throw DimensionError("global_avg_pool: expected [d x h x w] or [d x L], got " + shape_str(x.shape()));
    const std::size_t d = x.dim(0);
    const std::size_t n = x.size() / d;
    const bool rec = should_record({&x});
    Vec y(idx(d));
    for (std::size_t i = 0; i < d; ++i) {
        Scalar acc = 0.0;
        for (std::size_t l = 0; l < n; ++l)
            acc += x.data()[idx(i * n + l)];
        y[idx(i)] = acc / static_cast<Scalar>(n);
    }
    Tensor out = make_output({d}, std::move(y), rec);
    if (rec) {
        Tape::active()->record({x}, out, [x, out, d, n]() mutable {
            Vec& gx = x.grad();
            for (std::size_t i = 0; i < d; ++i) {
                const Scalar gi = out.grad()[idx(i)] / static_cast<Scalar>(n);
                for (std::size_t l = 0; l < n; ++l)
                    gx[idx(i * n + l)] += gi;
            }
        });
    }
    return out;
}

Tensor weighted_column_mean(const Tensor& V, const Tensor& w)
{
    if (V.rank() != 2 || w.rank() != 1 || V.dim(1) != w.dim(0))
        throw DimensionError("weighted_column_mean: expected V [d x n] and w [n], got " + shape_str(V.shape()) +
                             " and " + shape_str(w.shape()));
    const std::size_t d = V.dim(0), n = V.dim(1);
    const bool rec = should_record({&V, &w});
    Vec y(idx(d));
    for (std::size_t i = 0; i < d; ++i) {
        Scalar acc = 0.0;
        for (std::size_t l = 0; l < n; ++l)
            acc += V.data()[idx(i * n + l)] * w.data()[idx(l)];
        y[idx(i)] = acc / static_cast<Scalar>(n);
    }
    Tensor out = make_output({d}, std::move(y), rec);
    if (rec) {
        Tape::active()->record({V, w}, out, [V, w, out, d, n]() mutable {
            const Scalar inv = 1.0 / static_cast<Scalar>(n);
            const Vec& g = out.grad();
            if (V.requires_grad()) {
                Vec& gV = V.grad();
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t l = 0; l < n; ++l)
                        gV[idx(i * n + l)] += g[idx(i)] * w.data()[idx(l)] * inv;
            }
            if (w.requires_grad()) {
                Vec& gw = w.grad();
                for (std::size_t l = 0; l < n; ++l) {
                    Scalar acc = 0.0;
                    for (std::size_t i = 0; i < d; ++i)
                        acc += g[idx(i)] * V.data()[idx(i * n + l)];
                    gw[idx(l)] += acc * inv;
                }
            }
        });
    }
    return out;
}

Tensor elementwise_max(const std::vector<Tensor>& xs)
{
    if (xs.empty())
        throw DimensionError("elementwise_max: empty input list");
    for (const auto& t : xs)
        require_same_shape(xs.front(), t, "elementwise_max");
    const auto n = xs.front().data().size();
    Vec y = xs.front().data();
    std::vector<std::size_t> arg(static_cast<std::size_t>(n), 0);
    for (std::size_t j = 1; j < xs.size(); ++j)
        for (Eigen::Index i = 0; i < n; ++i)
            if (xs[j].data()[i] > y[i]) {
                y[i] = xs[j].data()[i];
                arg[static_cast<std::size_t>(i)] = j;
            }
    bool rec = false;
    if (Tape::active())
        for (const auto& t : xs)
            rec = rec || t.requires_grad();
    Tensor out = make_output(xs.front().shape(), std::move(y), rec);
    if (rec) {
        Tape::active()->record(xs, out, [xs, out, arg = std::move(arg)]() mutable {
            const Vec& g = out.grad();
            for (Eigen::Index i = 0; i < g.size(); ++i) {
                const Tensor& src = xs[arg[static_cast<std::size_t>(i)]];
                if (src.requires_grad())
                    src.grad()[i] += g[i];
            }
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape shape)
{
    if (shape_size(shape) != x.size())
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    const bool rec = should_record({&x});
    Tensor out = make_output(std::move(shape), x.data(), rec);
    if (rec) {
        Tape::active()->record({x}, out, [x, out]() mutable { x.grad() += out.grad(); });
    }
    return out;
}

Tensor column(const Tensor& a, std::size_t j)
{
    if (a.rank() != 2)
        throw DimensionError("column: expected rank 2, got " + shape_str(a.shape()));
    if (j >= a.dim(1))
        throw IndexError("column: index " + std::to_string(j) + " outside " + shape_str(a.shape()));
    const bool rec = should_record({&a});
    Tensor out = make_output({a.dim(0)}, a.matrix().col(idx(j)), rec);
    if (rec) {
        Tape::active()->record({a}, out, [a, out, j]() mutable {
            MapRowMat dA(a.grad().data(), idx(a.dim(0)), idx(a.dim(1)));
            dA.col(idx(j)) += out.grad();
        });
    }
    return out;
}

Tensor stack_columns(const std::vector<Tensor>& columns)
{
    if (columns.empty())
        throw DimensionError("stack_columns: empty input list");
    for (const auto& c : columns) {
        if (c.rank() != 1)
            throw DimensionError("stack_columns: columns must be rank 1, got " + shape_str(c.shape()));
        require_same_shape(columns.front(), c, "stack_columns");
    }
    const std::size_t m = columns.front().dim(0), n = columns.size();
    bool rec = false;
    if (Tape::active())
        for (const auto& c : columns)
            rec = rec || c.requires_grad();
    Tensor out = make_output({m, n}, Vec(idx(m * n)), rec);
    for (std::size_t j = 0; j < n; ++j)
        out.matrix().col(idx(j)) = columns[j].data();
    if (rec) {
        Tape::active()->record(columns, out, [columns, out, m, n]() mutable {
            MapConstRowMat G(out.grad().data(), idx(m), idx(n));
            for (std::size_t j = 0; j < n; ++j)
                if (columns[j].requires_grad())
                    columns[j].grad() += G.col(idx(j));
        });
    }
    return out;
}

Tensor linear(const Tensor& W, const Tensor& x, const Tensor& b)
{
    if (W.rank() != 2 || x.rank() != 1 || b.rank() != 1 || W.dim(1) != x.dim(0) || W.dim(0) != b.dim(0))
        throw DimensionError("linear: expected W [C x d], x [d], b [C], got " + shape_str(W.shape()) + ", " +
                             shape_str(x.shape()) + ", " + shape_str(b.shape()));
    const bool rec = should_record({&W, &x, &b});
    Vec y = b.data();
    y.noalias() += W.matrix() * x.data();
    Tensor out = make_output(b.shape(), std::move(y), rec);
    if (rec) {
        Tape::active()->record({W, x, b}, out, [W, x, b, out]() mutable {
            const Vec& g = out.grad();
            if (W.requires_grad()) {
                MapRowMat dW(W.grad().data(), idx(W.dim(0)), idx(W.dim(1)));
                dW.noalias() += g * x.data().transpose();
            }
            if (x.requires_grad())
                x.grad().noalias() += W.matrix().transpose() * g;
            if (b.requires_grad())
                b.grad() += g;
        });
    }
    return out;
}

} // namespace a3m
