#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "isgcd/tensor.hpp"

// Reverse-mode ops over the fixed computation graph of this model: embedding
// gathers, sparse weighted aggregation, dense affine maps, elementwise
// sigmoid, concatenation, RBF Gram matrices, centered traces and the BCE sum.
// Every op works without a tape as a plain forward evaluation (tape=nullptr);
// with a tape it records one backward closure. There is deliberately no
// general broadcasting: only the shapes the model needs are accepted.
namespace isgcd::ad {

inline double sigmoid_scalar(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

namespace detail {
inline void check(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}
inline bool want_grad(const Tape* tape, std::initializer_list<const TensorPtr*> inputs) {
    if (!tape) return false;
    for (const auto* t : inputs)
        if ((*t)->requires_grad) return true;
    return false;
}
} // namespace detail

inline TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    detail::check(a->rows() == b->rows() && a->cols() == b->cols(), "add: shape mismatch");
    auto out = make_tensor(a->rows(), a->cols());
    for (std::size_t i = 0; i < out->size(); ++i) out->value[i] = a->value[i] + b->value[i];
    if (detail::want_grad(tape, {&a, &b})) {
        out->requires_grad = true;
        tape->record([a, b, out] {
            if (a->requires_grad)
                for (std::size_t i = 0; i < out->size(); ++i) a->grad[i] += out->grad[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < out->size(); ++i) b->grad[i] += out->grad[i];
        });
    }
    return out;
}

inline TensorPtr sub(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    detail::check(a->rows() == b->rows() && a->cols() == b->cols(), "sub: shape mismatch");
    auto out = make_tensor(a->rows(), a->cols());
    for (std::size_t i = 0; i < out->size(); ++i) out->value[i] = a->value[i] - b->value[i];
    if (detail::want_grad(tape, {&a, &b})) {
        out->requires_grad = true;
        tape->record([a, b, out] {
            if (a->requires_grad)
                for (std::size_t i = 0; i < out->size(); ++i) a->grad[i] += out->grad[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < out->size(); ++i) b->grad[i] -= out->grad[i];
        });
    }
    return out;
}

inline TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    detail::check(a->rows() == b->rows() && a->cols() == b->cols(), "mul: shape mismatch");
    auto out = make_tensor(a->rows(), a->cols());
    for (std::size_t i = 0; i < out->size(); ++i) out->value[i] = a->value[i] * b->value[i];
    if (detail::want_grad(tape, {&a, &b})) {
        out->requires_grad = true;
        tape->record([a, b, out] {
            if (a->requires_grad)
                for (std::size_t i = 0; i < out->size(); ++i) a->grad[i] += out->grad[i] * b->value[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < out->size(); ++i) b->grad[i] += out->grad[i] * a->value[i];
        });
    }
    return out;
}

inline TensorPtr scale(Tape* tape, const TensorPtr& a, double c) {
    auto out = make_tensor(a->rows(), a->cols());
    for (std::size_t i = 0; i < out->size(); ++i) out->value[i] = c * a->value[i];
    if (detail::want_grad(tape, {&a})) {
        out->requires_grad = true;
        tape->record([a, out, c] {
            for (std::size_t i = 0; i < out->size(); ++i) a->grad[i] += c * out->grad[i];
        });
    }
    return out;
}

// Elementwise addition of a constant buffer (no gradient to the constant).
inline TensorPtr add_buffer(Tape* tape, const TensorPtr& a, const std::vector<double>& buf) {
    detail::check(a->size() == buf.size(), "add_buffer: size mismatch");
    auto out = make_tensor(a->rows(), a->cols());
    for (std::size_t i = 0; i < out->size(); ++i) out->value[i] = a->value[i] + buf[i];
    if (detail::want_grad(tape, {&a})) {
        out->requires_grad = true;
        tape->record([a, out] {
            for (std::size_t i = 0; i < out->size(); ++i) a->grad[i] += out->grad[i];
        });
    }
    return out;
}

// Elementwise product with a constant buffer (e.g. a 0/1 concept mask).
inline TensorPtr mul_buffer(Tape* tape, const TensorPtr& a, const std::vector<double>& buf) {
    detail::check(a->size() == buf.size(), "mul_buffer: size mismatch");
    auto out = make_tensor(a->rows(), a->cols());
    for (std::size_t i = 0; i < out->size(); ++i) out->value[i] = a->value[i] * buf[i];
    if (detail::want_grad(tape, {&a})) {
        out->requires_grad = true;
        auto mask = buf; // copy; caller buffers may not outlive the tape
        tape->record([a, out, mask = std::move(mask)] {
            for (std::size_t i = 0; i < out->size(); ++i) a->grad[i] += out->grad[i] * mask[i];
        });
    }
    return out;
}

inline TensorPtr sigmoid(Tape* tape, const TensorPtr& a) {
    auto out = make_tensor(a->rows(), a->cols());
    for (std::size_t i = 0; i < out->size(); ++i) out->value[i] = sigmoid_scalar(a->value[i]);
    if (detail::want_grad(tape, {&a})) {
        out->requires_grad = true;
        tape->record([a, out] {
            for (std::size_t i = 0; i < out->size(); ++i) {
                const double y = out->value[i];
                a->grad[i] += out->grad[i] * y * (1.0 - y);
            }
        });
    }
    return out;
}

// (n x k) * (k x m)
inline TensorPtr matmul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    detail::check(a->cols() == b->rows(), "matmul: inner dimension mismatch");
    const int n = a->rows(), k = a->cols(), m = b->cols();
    auto out = make_tensor(n, m);
    for (int i = 0; i < n; ++i) {
        const double* arow = a->value.data() + static_cast<std::size_t>(i) * k;
        double* orow = out->value.data() + static_cast<std::size_t>(i) * m;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b->value.data() + static_cast<std::size_t>(p) * m;
            for (int j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
    if (detail::want_grad(tape, {&a, &b})) {
        out->requires_grad = true;
        tape->record([a, b, out, n, k, m] {
            if (a->requires_grad) {
                // gA = g * B^T
                for (int i = 0; i < n; ++i) {
                    const double* grow = out->grad.data() + static_cast<std::size_t>(i) * m;
                    double* garow = a->grad.data() + static_cast<std::size_t>(i) * k;
                    for (int p = 0; p < k; ++p) {
                        const double* brow = b->value.data() + static_cast<std::size_t>(p) * m;
                        double acc = 0.0;
                        for (int j = 0; j < m; ++j) acc += grow[j] * brow[j];
                        garow[p] += acc;
                    }
                }
            }
            if (b->requires_grad) {
                // gB = A^T * g
                for (int i = 0; i < n; ++i) {
                    const double* arow = a->value.data() + static_cast<std::size_t>(i) * k;
                    const double* grow = out->grad.data() + static_cast<std::size_t>(i) * m;
                    for (int p = 0; p < k; ++p) {
                        const double av = arow[p];
                        if (av == 0.0) continue;
                        double* gbrow = b->grad.data() + static_cast<std::size_t>(p) * m;
                        for (int j = 0; j < m; ++j) gbrow[j] += av * grow[j];
                    }
                }
            }
        });
    }
    return out;
}

// (n x k) * (m x k)^T -> n x m. Used for inner products against row sets
// (e.g. final embeddings against the concept table).
inline TensorPtr matmul_nt(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    detail::check(a->cols() == b->cols(), "matmul_nt: inner dimension mismatch");
    const int n = a->rows(), k = a->cols(), m = b->rows();
    auto out = make_tensor(n, m);
    for (int i = 0; i < n; ++i) {
        const double* arow = a->value.data() + static_cast<std::size_t>(i) * k;
        double* orow = out->value.data() + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) {
            const double* brow = b->value.data() + static_cast<std::size_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            orow[j] = acc;
        }
    }
    if (detail::want_grad(tape, {&a, &b})) {
        out->requires_grad = true;
        tape->record([a, b, out, n, k, m] {
            for (int i = 0; i < n; ++i) {
                const double* grow = out->grad.data() + static_cast<std::size_t>(i) * m;
                const double* arow = a->value.data() + static_cast<std::size_t>(i) * k;
                double* garow = a->grad.data() + static_cast<std::size_t>(i) * k;
                for (int j = 0; j < m; ++j) {
                    const double g = grow[j];
                    if (g == 0.0) continue;
                    const double* brow = b->value.data() + static_cast<std::size_t>(j) * k;
                    double* gbrow = b->grad.data() + static_cast<std::size_t>(j) * k;
                    if (a->requires_grad)
                        for (int p = 0; p < k; ++p) garow[p] += g * brow[p];
                    if (b->requires_grad)
                        for (int p = 0; p < k; ++p) gbrow[p] += g * arow[p];
                }
            }
        });
    }
    return out;
}

// Adds a 1 x C bias row to every row of X.
inline TensorPtr add_row_vec(Tape* tape, const TensorPtr& x, const TensorPtr& v) {
    detail::check(v->rows() == 1 && v->cols() == x->cols(), "add_row_vec: bias shape mismatch");
    const int n = x->rows(), m = x->cols();
    auto out = make_tensor(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out->at(i, j) = x->at(i, j) + v->value[j];
    if (detail::want_grad(tape, {&x, &v})) {
        out->requires_grad = true;
        tape->record([x, v, out, n, m] {
            if (x->requires_grad)
                for (std::size_t i = 0; i < out->size(); ++i) x->grad[i] += out->grad[i];
            if (v->requires_grad)
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < m; ++j) v->grad[j] += out->grad_at(i, j);
        });
    }
    return out;
}

// Adds an R x 1 column vector to every column of X (per-row scalar offset).
inline TensorPtr add_col_vec(Tape* tape, const TensorPtr& x, const TensorPtr& v) {
    detail::check(v->cols() == 1 && v->rows() == x->rows(), "add_col_vec: bias shape mismatch");
    const int n = x->rows(), m = x->cols();
    auto out = make_tensor(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out->at(i, j) = x->at(i, j) + v->value[i];
    if (detail::want_grad(tape, {&x, &v})) {
        out->requires_grad = true;
        tape->record([x, v, out, n, m] {
            if (x->requires_grad)
                for (std::size_t i = 0; i < out->size(); ++i) x->grad[i] += out->grad[i];
            if (v->requires_grad)
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < m; ++j) v->grad[i] += out->grad_at(i, j);
        });
    }
    return out;
}

// Scales row i of X by v_i (v is R x 1, differentiable on both sides).
inline TensorPtr row_scale(Tape* tape, const TensorPtr& x, const TensorPtr& v) {
    detail::check(v->cols() == 1 && v->rows() == x->rows(), "row_scale: scale shape mismatch");
    const int n = x->rows(), m = x->cols();
    auto out = make_tensor(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out->at(i, j) = x->at(i, j) * v->value[i];
    if (detail::want_grad(tape, {&x, &v})) {
        out->requires_grad = true;
        tape->record([x, v, out, n, m] {
            for (int i = 0; i < n; ++i) {
                const double vi = v->value[i];
                for (int j = 0; j < m; ++j) {
                    const double g = out->grad_at(i, j);
                    if (x->requires_grad) x->grad_at(i, j) += g * vi;
                    if (v->requires_grad) v->grad[i] += g * x->at(i, j);
                }
            }
        });
    }
    return out;
}

inline TensorPtr concat_cols(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    detail::check(a->rows() == b->rows(), "concat_cols: row mismatch");
    const int n = a->rows(), ka = a->cols(), kb = b->cols();
    auto out = make_tensor(n, ka + kb);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < ka; ++j) out->at(i, j) = a->at(i, j);
        for (int j = 0; j < kb; ++j) out->at(i, ka + j) = b->at(i, j);
    }
    if (detail::want_grad(tape, {&a, &b})) {
        out->requires_grad = true;
        tape->record([a, b, out, n, ka, kb] {
            for (int i = 0; i < n; ++i) {
                if (a->requires_grad)
                    for (int j = 0; j < ka; ++j) a->grad_at(i, j) += out->grad_at(i, j);
                if (b->requires_grad)
                    for (int j = 0; j < kb; ++j) b->grad_at(i, j) += out->grad_at(i, ka + j);
            }
        });
    }
    return out;
}

inline TensorPtr gather_rows(Tape* tape, const TensorPtr& x, const std::vector<std::int32_t>& ids) {
    const int m = x->cols();
    auto out = make_tensor(static_cast<int>(ids.size()), m);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        detail::check(ids[i] >= 0 && ids[i] < x->rows(), "gather_rows: index out of range");
        const double* src = x->value.data() + static_cast<std::size_t>(ids[i]) * m;
        std::copy(src, src + m, out->value.data() + i * m);
    }
    if (detail::want_grad(tape, {&x})) {
        out->requires_grad = true;
        auto idx = ids;
        tape->record([x, out, idx = std::move(idx), m] {
            for (std::size_t i = 0; i < idx.size(); ++i) {
                double* dst = x->grad.data() + static_cast<std::size_t>(idx[i]) * m;
                const double* g = out->grad.data() + i * m;
                for (int j = 0; j < m; ++j) dst[j] += g[j];
            }
        });
    }
    return out;
}

// Sparse weighted aggregation: out[dst[i]] += coef[i] * rho[i] * X[src[i]].
// `coef` is the fixed per-edge normalizer; `rho` an optional differentiable
// per-edge retention column (E x 1). Edges are processed in list order, so
// accumulation is deterministic.
inline TensorPtr spmm_edges(Tape* tape,
                            const std::vector<std::int32_t>& dst,
                            const std::vector<std::int32_t>& src,
                            const std::vector<double>& coef,
                            const TensorPtr& rho, // may be nullptr (all ones)
                            const TensorPtr& x,
                            int out_rows) {
    detail::check(dst.size() == src.size() && dst.size() == coef.size(), "spmm_edges: edge arrays misaligned");
    if (rho) detail::check(rho->cols() == 1 && static_cast<std::size_t>(rho->rows()) == dst.size(),
                           "spmm_edges: rho misaligned with edges");
    const int m = x->cols();
    auto out = make_tensor(out_rows, m);
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const double w = coef[i] * (rho ? rho->value[i] : 1.0);
        const double* xs = x->value.data() + static_cast<std::size_t>(src[i]) * m;
        double* od = out->value.data() + static_cast<std::size_t>(dst[i]) * m;
        for (int j = 0; j < m; ++j) od[j] += w * xs[j];
    }
    const bool need = tape && (x->requires_grad || (rho && rho->requires_grad));
    if (need) {
        out->requires_grad = true;
        auto d = dst;
        auto s = src;
        auto c = coef;
        tape->record([d = std::move(d), s = std::move(s), c = std::move(c), rho, x, out, m] {
            for (std::size_t i = 0; i < d.size(); ++i) {
                const double* g = out->grad.data() + static_cast<std::size_t>(d[i]) * m;
                const double* xs = x->value.data() + static_cast<std::size_t>(s[i]) * m;
                const double r = rho ? rho->value[i] : 1.0;
                if (x->requires_grad) {
                    double* gx = x->grad.data() + static_cast<std::size_t>(s[i]) * m;
                    const double w = c[i] * r;
                    for (int j = 0; j < m; ++j) gx[j] += w * g[j];
                }
                if (rho && rho->requires_grad) {
                    double acc = 0.0;
                    for (int j = 0; j < m; ++j) acc += g[j] * xs[j];
                    rho->grad[i] += c[i] * acc;
                }
            }
        });
    }
    return out;
}

// RBF Gram matrix K_ij = exp(-||x_i - x_j||^2 / (2 alpha)).
inline TensorPtr rbf_gram(Tape* tape, const TensorPtr& x, double alpha) {
    detail::check(alpha > 0.0, "rbf_gram: alpha must be positive");
    detail::check(x->rows() >= 2, "rbf_gram: need at least two rows");
    const int n = x->rows(), k = x->cols();
    auto out = make_tensor(n, n);
    for (int i = 0; i < n; ++i) {
        out->at(i, i) = 1.0;
        const double* xi = x->value.data() + static_cast<std::size_t>(i) * k;
        for (int j = i + 1; j < n; ++j) {
            const double* xj = x->value.data() + static_cast<std::size_t>(j) * k;
            double d2 = 0.0;
            for (int p = 0; p < k; ++p) {
                const double d = xi[p] - xj[p];
                d2 += d * d;
            }
            const double v = std::exp(-d2 / (2.0 * alpha));
            out->at(i, j) = v;
            out->at(j, i) = v;
        }
    }
    if (detail::want_grad(tape, {&x})) {
        out->requires_grad = true;
        tape->record([x, out, n, k, alpha] {
            for (int i = 0; i < n; ++i) {
                const double* xi = x->value.data() + static_cast<std::size_t>(i) * k;
                double* gi = x->grad.data() + static_cast<std::size_t>(i) * k;
                for (int j = i + 1; j < n; ++j) {
                    const double g = out->grad_at(i, j) + out->grad_at(j, i);
                    if (g == 0.0) continue;
                    const double* xj = x->value.data() + static_cast<std::size_t>(j) * k;
                    double* gj = x->grad.data() + static_cast<std::size_t>(j) * k;
                    const double s = g * out->at(i, j) / alpha;
                    for (int p = 0; p < k; ++p) {
                        const double diff = xi[p] - xj[p];
                        gi[p] -= s * diff;
                        gj[p] += s * diff;
                    }
                }
            }
        });
    }
    return out;
}

// Double centering J K J with J = I - 11^T/n. Self-adjoint linear map, so the
// backward pass is the same centering applied to the output gradient.
inline TensorPtr center_gram(Tape* tape, const TensorPtr& kmat) {
    detail::check(kmat->rows() == kmat->cols(), "center_gram: matrix must be square");
    const int n = kmat->rows();
    auto center = [n](const std::vector<double>& in, std::vector<double>& outv) {
        std::vector<double> row_mean(n, 0.0), col_mean(n, 0.0);
        double total = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double v = in[static_cast<std::size_t>(i) * n + j];
                row_mean[i] += v;
                col_mean[j] += v;
                total += v;
            }
        for (int i = 0; i < n; ++i) row_mean[i] /= n;
        for (int j = 0; j < n; ++j) col_mean[j] /= n;
        total /= static_cast<double>(n) * n;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                outv[static_cast<std::size_t>(i) * n + j] =
                    in[static_cast<std::size_t>(i) * n + j] - row_mean[i] - col_mean[j] + total;
    };
    auto out = make_tensor(n, n);
    center(kmat->value, out->value);
    if (detail::want_grad(tape, {&kmat})) {
        out->requires_grad = true;
        tape->record([kmat, out, center, n] {
            std::vector<double> g(static_cast<std::size_t>(n) * n);
            center(out->grad, g);
            for (std::size_t i = 0; i < g.size(); ++i) kmat->grad[i] += g[i];
        });
    }
    return out;
}

// Frobenius inner product <A, B> -> scalar. Doubles as the plain dot product
// for column vectors.
inline TensorPtr frob_inner(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    detail::check(a->rows() == b->rows() && a->cols() == b->cols(), "frob_inner: shape mismatch");
    auto out = make_tensor(1, 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < a->size(); ++i) acc += a->value[i] * b->value[i];
    out->value[0] = acc;
    if (detail::want_grad(tape, {&a, &b})) {
        out->requires_grad = true;
        tape->record([a, b, out] {
            const double g = out->grad[0];
            if (a->requires_grad)
                for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += g * b->value[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] += g * a->value[i];
        });
    }
    return out;
}

inline TensorPtr dot(Tape* tape, const TensorPtr& a, const TensorPtr& b) { return frob_inner(tape, a, b); }

inline TensorPtr sum(Tape* tape, const TensorPtr& a) {
    auto out = make_tensor(1, 1);
    double acc = 0.0;
    for (const double v : a->value) acc += v;
    out->value[0] = acc;
    if (detail::want_grad(tape, {&a})) {
        out->requires_grad = true;
        tape->record([a, out] {
            const double g = out->grad[0];
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += g;
        });
    }
    return out;
}

inline constexpr double kBceClamp = 1e-7;

// Summed binary cross entropy with predictions clamped to
// [kBceClamp, 1-kBceClamp] before the logs. Clamped entries get zero gradient.
inline TensorPtr bce_sum(Tape* tape, const TensorPtr& preds, const std::vector<double>& labels) {
    detail::check(preds->cols() == 1, "bce_sum: preds must be a column");
    detail::check(static_cast<std::size_t>(preds->rows()) == labels.size(), "bce_sum: label count mismatch");
    auto out = make_tensor(1, 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double p = std::clamp(preds->value[i], kBceClamp, 1.0 - kBceClamp);
        acc -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
    }
    out->value[0] = acc;
    if (detail::want_grad(tape, {&preds})) {
        out->requires_grad = true;
        auto r = labels;
        tape->record([preds, out, r = std::move(r)] {
            const double g = out->grad[0];
            for (std::size_t i = 0; i < r.size(); ++i) {
                const double p = preds->value[i];
                if (p <= kBceClamp || p >= 1.0 - kBceClamp) continue;
                preds->grad[i] += g * (-(r[i] / p) + (1.0 - r[i]) / (1.0 - p));
            }
        });
    }
    return out;
}

} // namespace isgcd::ad
