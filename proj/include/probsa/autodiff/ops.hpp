#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "probsa/autodiff/tape.hpp"
#include "probsa/autodiff/tensor.hpp"

namespace probsa::ad {

/// Variance guard inside layer normalization.
inline constexpr double kLayerNormEps = 1e-5;

namespace detail {

inline Tape& same_tape(const Var& a, const Var& b, const char* op) {
    if (&a.tape() != &b.tape()) throw Error(std::string(op) + ": operands recorded on different tapes");
    return a.tape();
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

inline void require_rank(const Var& a, std::size_t rank, const char* op) {
    if (a.shape().size() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(a.shape()));
    }
}

// y = f(x) elementwise; `deriv(x, y)` returns dy/dx.
template <class F, class D>
Var unary(const Var& a, F f, D deriv, const char* op) {
    const Tensor& x = a.value();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
    const auto ai = a.index();
    return a.tape().push(
        Tensor(x.shape(), std::move(out)), {ai},
        [ai, deriv](Tape& t, std::size_t self) {
            const auto& g = t.grad(self);
            const auto& xv = t.value(ai);
            const auto& yv = t.value(self);
            auto& ga = t.grad(ai);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(xv[i], yv[i]);
        },
        op);
}

inline double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace detail

inline double sigmoid_value(double x) { return detail::stable_sigmoid(x); }
inline double softplus_value(double x) { return detail::stable_softplus(x); }

/// Matrix product of [m x k] and [k x n].
inline Var matmul(const Var& a, const Var& b) {
    Tape& tape = detail::same_tape(a, b, "matmul");
    detail::require_rank(a, 2, "matmul");
    detail::require_rank(b, 2, "matmul");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    if (bv.rows() != k) {
        throw ShapeError("matmul: inner extents differ " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
        }
    }
    const auto ai = a.index(), bi = b.index();
    return tape.push(
        Tensor::matrix(m, n, std::move(out)), {ai, bi},
        [ai, bi, m, k, n](Tape& t, std::size_t self) {
            const auto& g = t.grad(self);
            const auto& A = t.value(ai);
            const auto& B = t.value(bi);
            // dA = G B^T
            auto& ga = t.grad(ai);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * B[p * n + j];
                    ga[i * k + p] += s;
                }
            }
            // dB = A^T G
            auto& gb = t.grad(bi);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = A[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                }
            }
        },
        "matmul");
}

inline Var transpose(const Var& a) {
    detail::require_rank(a, 2, "transpose");
    const Tensor& av = a.value();
    const std::size_t m = av.rows(), n = av.cols();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
    const auto ai = a.index();
    return a.tape().push(
        Tensor::matrix(n, m, std::move(out)), {ai},
        [ai, m, n](Tape& t, std::size_t self) {
            const auto& g = t.grad(self);
            auto& ga = t.grad(ai);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
        },
        "transpose");
}

/// Same data under a new shape with equal element count.
inline Var reshape(const Var& a, Shape shape) {
    if (shape_size(shape) != a.value().size()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    const auto ai = a.index();
    return a.tape().push(
        Tensor(std::move(shape), a.value().data()), {ai},
        [ai](Tape& t, std::size_t self) {
            const auto& g = t.grad(self);
            auto& ga = t.grad(ai);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        },
        "reshape");
}

namespace detail {

template <class F, class DA, class DB>
Var binary(const Var& a, const Var& b, F f, DA da, DB db, const char* op) {
    Tape& tape = same_tape(a, b, op);
    require_same_shape(a, b, op);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i]);
    const auto ai = a.index(), bi = b.index();
    return tape.push(
        Tensor(x.shape(), std::move(out)), {ai, bi},
        [ai, bi, da, db](Tape& t, std::size_t self) {
            const auto& g = t.grad(self);
            const auto& xv = t.value(ai);
            const auto& yv = t.value(bi);
            {
                auto& ga = t.grad(ai);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * da(xv[i], yv[i]);
            }
            auto& gb = t.grad(bi);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * db(xv[i], yv[i]);
        },
        op);
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
    return detail::binary(
        a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; }, "add");
}

inline Var sub(const Var& a, const Var& b) {
    return detail::binary(
        a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; }, "sub");
}

inline Var mul(const Var& a, const Var& b) {
    return detail::binary(
        a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; }, "mul");
}

/// Adds vector `bias` [n] to every row of `a` [m x n]. The only broadcast the library supports.
inline Var add_row(const Var& a, const Var& bias) {
    Tape& tape = detail::same_tape(a, bias, "add_row");
    detail::require_rank(a, 2, "add_row");
    detail::require_rank(bias, 1, "add_row");
    const Tensor& x = a.value();
    const Tensor& b = bias.value();
    const std::size_t m = x.rows(), n = x.cols();
    if (b.size() != n) throw ShapeError("add_row: bias " + shape_str(b.shape()) + " vs rows of " + shape_str(x.shape()));
    std::vector<double> out(x.data());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b[j];
    const auto ai = a.index(), bi = bias.index();
    return tape.push(
        Tensor::matrix(m, n, std::move(out)), {ai, bi},
        [ai, bi, m, n](Tape& t, std::size_t self) {
            const auto& g = t.grad(self);
            {
                auto& ga = t.grad(ai);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            auto& gb = t.grad(bi);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
        },
        "add_row");
}

inline Var scale(const Var& a, double s) {
    return detail::unary(
        a, [s](double x) { return s * x; }, [s](double, double) { return s; }, "scale");
}

inline Var add_scalar(const Var& a, double s) {
    return detail::unary(
        a, [s](double x) { return x + s; }, [](double, double) { return 1.0; }, "add_scalar");
}

inline Var tanh(const Var& a) {
    return detail::unary(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; }, "tanh");
}

inline Var sigmoid(const Var& a) {
    return detail::unary(
        a, [](double x) { return detail::stable_sigmoid(x); }, [](double, double y) { return y * (1.0 - y); },
        "sigmoid");
}

inline Var softplus(const Var& a) {
    return detail::unary(
        a, [](double x) { return detail::stable_softplus(x); },
        [](double x, double) { return detail::stable_sigmoid(x); }, "softplus");
}

inline Var exp(const Var& a) {
    return detail::unary(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; }, "exp");
}

inline Var log(const Var& a) {
    for (double v : a.value().values()) {
        if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
    }
    return detail::unary(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; }, "log");
}

inline Var sqrt(const Var& a) {
    for (double v : a.value().values()) {
        if (!(v > 0.0)) throw DomainError("sqrt: non-positive input " + std::to_string(v));
    }
    return detail::unary(
        a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; }, "sqrt");
}

inline Var relu(const Var& a) {
    return detail::unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; },
        "relu");
}

/// Sum of all elements as a scalar.
inline Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    const auto ai = a.index();
    return a.tape().push(
        Tensor::scalar(s), {ai},
        [ai](Tape& t, std::size_t self) {
            const double g = t.grad(self)[0];
            auto& ga = t.grad(ai);
            for (auto& v : ga) v += g;
        },
        "sum");
}

inline Var dot(const Var& a, const Var& b) { return sum(mul(a, b)); }

namespace detail {

// Softmax of `count` contiguous entries starting at `in`, max-subtracted.
inline void softmax_span(const double* in, double* out, std::size_t count) {
    double mx = in[0];
    for (std::size_t i = 1; i < count; ++i) mx = std::max(mx, in[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = std::exp(in[i] - mx);
        z += out[i];
    }
    for (std::size_t i = 0; i < count; ++i) out[i] /= z;
}

inline Var softmax_blocks(const Var& a, std::size_t blocks, std::size_t width, const char* op) {
    if (width == 0) throw DomainError(std::string(op) + ": empty input");
    const Tensor& x = a.value();
    std::vector<double> out(x.size());
    for (std::size_t r = 0; r < blocks; ++r) softmax_span(x.data().data() + r * width, out.data() + r * width, width);
    const auto ai = a.index();
    return a.tape().push(
        Tensor(x.shape(), std::move(out)), {ai},
        [ai, blocks, width](Tape& t, std::size_t self) {
            const auto& g = t.grad(self);
            const auto& y = t.value(self);
            auto& ga = t.grad(ai);
            for (std::size_t r = 0; r < blocks; ++r) {
                const std::size_t o = r * width;
                double gy = 0.0;
                for (std::size_t i = 0; i < width; ++i) gy += g[o + i] * y[o + i];
                for (std::size_t i = 0; i < width; ++i) ga[o + i] += y[o + i] * (g[o + i] - gy);
            }
        },
        op);
}

}  // namespace detail

/// Softmax of a vector.
inline Var softmax(const Var& v) {
    detail::require_rank(v, 1, "softmax");
    return detail::softmax_blocks(v, 1, v.value().size(), "softmax");
}

/// Row-wise softmax of a matrix.
inline Var softmax_rows(const Var& a) {
    detail::require_rank(a, 2, "softmax_rows");
    return detail::softmax_blocks(a, a.value().rows(), a.value().cols(), "softmax_rows");
}

/// Row-wise layer normalization followed by the affine map `gain * x + bias`.
inline Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = kLayerNormEps) {
    Tape& tape = detail::same_tape(x, gain, "layer_norm");
    detail::same_tape(x, bias, "layer_norm");
    detail::require_rank(x, 2, "layer_norm");
    const Tensor& xv = x.value();
    const std::size_t n = xv.rows(), d = xv.cols();
    if (d == 0) throw ShapeError("layer_norm: zero-width rows");
    if (gain.value().shape() != Shape{d} || bias.value().shape() != Shape{d}) {
        throw ShapeError("layer_norm: gain/bias must have shape [" + std::to_string(d) + "]");
    }
    const Tensor& gv = gain.value();
    const Tensor& bv = bias.value();
    std::vector<double> xhat(n * d), inv_std(n), out(n * d);
    for (std::size_t r = 0; r < n; ++r) {
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xv[r * d + j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = xv[r * d + j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (xv[r * d + j] - mean) * inv_std[r];
            out[r * d + j] = gv[j] * xhat[r * d + j] + bv[j];
        }
    }
    const auto xi = x.index(), gi = gain.index(), bi = bias.index();
    return tape.push(
        Tensor::matrix(n, d, std::move(out)), {xi, gi, bi},
        [xi, gi, bi, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
            const auto& g = t.grad(self);
            const auto& gv = t.value(gi).data();
            {
                auto& gg = t.grad(gi);
                auto& gbias = t.grad(bi);
                for (std::size_t r = 0; r < n; ++r) {
                    for (std::size_t j = 0; j < d; ++j) {
                        gg[j] += g[r * d + j] * xhat[r * d + j];
                        gbias[j] += g[r * d + j];
                    }
                }
            }
            auto& gx = t.grad(xi);
            const double dd = static_cast<double>(d);
            for (std::size_t r = 0; r < n; ++r) {
                double mean_g = 0.0, mean_gx = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double gh = g[r * d + j] * gv[j];
                    mean_g += gh;
                    mean_gx += gh * xhat[r * d + j];
                }
                mean_g /= dd;
                mean_gx /= dd;
                for (std::size_t j = 0; j < d; ++j) {
                    const double gh = g[r * d + j] * gv[j];
                    gx[r * d + j] += inv_std[r] * (gh - mean_g - xhat[r * d + j] * mean_gx);
                }
            }
        },
        "layer_norm");
}

/// Columns [c0, c1) of a matrix.
inline Var slice_cols(const Var& a, std::size_t c0, std::size_t c1) {
    detail::require_rank(a, 2, "slice_cols");
    const Tensor& x = a.value();
    const std::size_t m = x.rows(), n = x.cols();
    if (c0 >= c1 || c1 > n) throw ShapeError("slice_cols: bad column range");
    const std::size_t w = c1 - c0;
    std::vector<double> out(m * w);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x[i * n + c0 + j];
    const auto ai = a.index();
    return a.tape().push(
        Tensor::matrix(m, w, std::move(out)), {ai},
        [ai, m, n, w, c0](Tape& t, std::size_t self) {
            const auto& g = t.grad(self);
            auto& ga = t.grad(ai);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < w; ++j) ga[i * n + c0 + j] += g[i * w + j];
        },
        "slice_cols");
}

/// Horizontal concatenation of matrices with equal row counts.
inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no operands");
    Tape& tape = parts.front().tape();
    const std::size_t m = parts.front().value().rows();
    std::vector<std::size_t> widths, inputs;
    std::size_t n = 0;
    for (const auto& p : parts) {
        detail::same_tape(parts.front(), p, "concat_cols");
        detail::require_rank(p, 2, "concat_cols");
        if (p.value().rows() != m) throw ShapeError("concat_cols: row counts differ");
        widths.push_back(p.value().cols());
        inputs.push_back(p.index());
        n += p.value().cols();
    }
    std::vector<double> out(m * n);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& x = parts[k].value();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < widths[k]; ++j) out[i * n + off + j] = x[i * widths[k] + j];
        off += widths[k];
    }
    return tape.push(
        Tensor::matrix(m, n, std::move(out)), inputs,
        [inputs, widths, m, n](Tape& t, std::size_t self) {
            const auto& g = t.grad(self);
            std::size_t o = 0;
            for (std::size_t k = 0; k < inputs.size(); ++k) {
                auto& gk = t.grad(inputs[k]);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < widths[k]; ++j) gk[i * widths[k] + j] += g[i * n + o + j];
                o += widths[k];
            }
        },
        "concat_cols");
}

/// Negative Bernoulli log-likelihood of `label` given a single logit, computed without forming the probability.
inline Var bce_with_logits(const Var& logit, double label) {
    if (logit.value().size() != 1) throw ShapeError("bce_with_logits: logit must hold one element");
    return sub(softplus(logit), scale(logit, label));
}

}  // namespace probsa::ad
