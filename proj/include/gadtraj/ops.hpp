#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "gadtraj/tensor.hpp"

namespace gadtraj {

namespace detail {

inline void require_matrix(const Tensor& t, const char* op) {
    if (!t.is_matrix())
        throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " differ");
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// out += a(MxK) * b(KxN)
inline void gemm_acc(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
                     std::size_t n) {
    const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
    MutMap(out, M, N).noalias() += ConstMap(a, M, K) * ConstMap(b, K, N);
}

// out += a(MxK) * b(NxK)^T
inline void gemm_nt_acc(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
                        std::size_t n) {
    const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
    MutMap(out, M, N).noalias() += ConstMap(a, M, K) * ConstMap(b, N, K).transpose();
}

// out += a(KxM)^T * b(KxN)
inline void gemm_tn_acc(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
                        std::size_t n) {
    const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
    MutMap(out, M, N).noalias() += ConstMap(a, K, M).transpose() * ConstMap(b, K, N);
}

inline Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

} // namespace detail

/// C = A·B for A [M×K], B [K×N].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_matrix(a, "matmul");
    detail::require_matrix(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k)
        throw DimensionError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    std::vector<double> out(m * n, 0.0);
    detail::gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
    return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
        auto& pa = detail::parent(self, 0);
        auto& pb = detail::parent(self, 1);
        if (pa.requires_grad) detail::gemm_nt_acc(self.grad.data(), pb.value.data(), pa.ensure_grad().data(), m, n, k);
        if (pb.requires_grad) detail::gemm_tn_acc(pa.value.data(), self.grad.data(), pb.ensure_grad().data(), k, m, n);
    });
}

/// C = A·Bᵀ for A [M×K], B [N×K].
inline Tensor matmul_transposed(const Tensor& a, const Tensor& b) {
    detail::require_matrix(a, "matmul_transposed");
    detail::require_matrix(b, "matmul_transposed");
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    if (b.cols() != k)
        throw DimensionError("matmul_transposed: inner dimensions disagree for " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    std::vector<double> out(m * n, 0.0);
    detail::gemm_nt_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
    return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
        auto& pa = detail::parent(self, 0);
        auto& pb = detail::parent(self, 1);
        // dA = dC·B, dB = dCᵀ·A
        if (pa.requires_grad) detail::gemm_acc(self.grad.data(), pb.value.data(), pa.ensure_grad().data(), m, n, k);
        if (pb.requires_grad) detail::gemm_tn_acc(self.grad.data(), pa.value.data(), pb.ensure_grad().data(), n, m, k);
    });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        for (std::size_t p = 0; p < 2; ++p) {
            auto& par = detail::parent(self, p);
            if (!par.requires_grad) continue;
            auto& g = par.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        auto& pa = detail::parent(self, 0);
        auto& pb = detail::parent(self, 1);
        if (pa.requires_grad) {
            auto& g = pa.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

/// Elementwise (Hadamard) product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        auto& pa = detail::parent(self, 0);
        auto& pb = detail::parent(self, 1);
        if (pa.requires_grad) {
            auto& g = pa.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
        }
    });
}

/// alpha·x + beta
inline Tensor affine(const Tensor& x, double alpha, double beta = 0.0) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * x[i] + beta;
    return Tensor::make_result(x.shape(), std::move(out), {x}, [alpha](detail::Node& self) {
        auto& g = detail::parent(self, 0).ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += alpha * self.grad[i];
    });
}

inline Tensor scale(const Tensor& x, double s) { return affine(x, s, 0.0); }

/// Adds a length-C bias to every row of x [R×C].
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
    detail::require_matrix(x, "add_bias");
    const std::size_t r = x.rows(), c = x.cols();
    if (bias.size() != c)
        throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not fit rows of " +
                             shape_str(x.shape()));
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] + bias[j];
    return Tensor::make_result(x.shape(), std::move(out), {x, bias}, [r, c](detail::Node& self) {
        auto& px = detail::parent(self, 0);
        auto& pb = detail::parent(self, 1);
        if (px.requires_grad) {
            auto& g = px.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
        }
    });
}

/// Zeroes every row whose entry in `keep` is false.
inline Tensor mask_rows(const Tensor& x, const std::vector<bool>& keep) {
    detail::require_matrix(x, "mask_rows");
    const std::size_t r = x.rows(), c = x.cols();
    if (keep.size() != r) throw DimensionError("mask_rows: mask length does not match row count");
    std::vector<double> out(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < r; ++i)
        if (!keep[i]) std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(i * c), c, 0.0);
    return Tensor::make_result(x.shape(), std::move(out), {x}, [keep, c](detail::Node& self) {
        auto& g = detail::parent(self, 0).ensure_grad();
        for (std::size_t i = 0; i < keep.size(); ++i)
            if (keep[i])
                for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i * c + j];
    });
}

namespace detail {

inline Tensor softmax_rows_impl(const Tensor& x, const std::vector<bool>* key_valid) {
    require_matrix(x, "softmax_rows");
    const std::size_t r = x.rows(), c = x.cols();
    if (key_valid && key_valid->size() != c)
        throw DimensionError("softmax_rows: key mask length does not match column count");
    std::vector<double> out(x.size(), 0.0);
    for (std::size_t i = 0; i < r; ++i) {
        const double* row = x.data().data() + i * c;
        double* o = out.data() + i * c;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j)
            if (!key_valid || (*key_valid)[j]) mx = std::max(mx, row[j]);
        if (!std::isfinite(mx)) throw ContractError("softmax_rows: row has no unmasked entries");
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            if (key_valid && !(*key_valid)[j]) continue;
            o[j] = std::exp(row[j] - mx);
            s += o[j];
        }
        for (std::size_t j = 0; j < c; ++j) o[j] /= s;
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, [r, c](Node& self) {
        auto& g = parent(self, 0).ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
            const double* y = self.value.data() + i * c;
            const double* gy = self.grad.data() + i * c;
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += y[j] * gy[j];
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += y[j] * (gy[j] - dot);
        }
    });
}

} // namespace detail

/// Row-wise softmax with max subtraction.
inline Tensor softmax_rows(const Tensor& x) { return detail::softmax_rows_impl(x, nullptr); }

/// Row-wise softmax where columns with key_valid[j] == false get exactly zero weight.
inline Tensor softmax_rows(const Tensor& x, const std::vector<bool>& key_valid) {
    return detail::softmax_rows_impl(x, &key_valid);
}

/// Per-row standardization followed by elementwise gain and bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
    detail::require_matrix(x, "layer_norm");
    const std::size_t r = x.rows(), c = x.cols();
    if (gain.size() != c || bias.size() != c)
        throw DimensionError("layer_norm: gain/bias must have " + std::to_string(c) + " entries");
    std::vector<double> out(x.size());
    std::vector<double> xhat(x.size());
    std::vector<double> inv_std(r);
    for (std::size_t i = 0; i < r; ++i) {
        const double* row = x.data().data() + i * c;
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += row[j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<double>(c);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) {
            xhat[i * c + j] = (row[j] - mean) * inv_std[i];
            out[i * c + j] = xhat[i * c + j] * gain[j] + bias[j];
        }
    }
    return Tensor::make_result(
        x.shape(), std::move(out), {x, gain, bias},
        [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
            auto& px = detail::parent(self, 0);
            auto& pg = detail::parent(self, 1);
            auto& pb = detail::parent(self, 2);
            if (pg.requires_grad) {
                auto& g = pg.ensure_grad();
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j] * xhat[i * c + j];
            }
            if (pb.requires_grad) {
                auto& g = pb.ensure_grad();
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
            }
            if (px.requires_grad) {
                auto& g = px.ensure_grad();
                const double n = static_cast<double>(c);
                for (std::size_t i = 0; i < r; ++i) {
                    double sum_d = 0.0, sum_dx = 0.0;
                    for (std::size_t j = 0; j < c; ++j) {
                        const double d = self.grad[i * c + j] * pg.value[j];
                        sum_d += d;
                        sum_dx += d * xhat[i * c + j];
                    }
                    for (std::size_t j = 0; j < c; ++j) {
                        const double d = self.grad[i * c + j] * pg.value[j];
                        g[i * c + j] += inv_std[i] * (d - sum_d / n - xhat[i * c + j] * sum_dx / n);
                    }
                }
            }
        });
}

namespace detail {

template <class F, class DF>
Tensor unary(const Tensor& x, F f, DF dfdx_from_xy) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
    return Tensor::make_result(x.shape(), std::move(out), {x}, [dfdx_from_xy](Node& self) {
        auto& px = parent(self, 0);
        auto& g = px.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfdx_from_xy(px.value[i], self.value[i]);
    });
}

} // namespace detail

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
    return detail::unary(x, [](double v) { return sigmoid(v); }, [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& x) {
    return detail::unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

/// GELU, tanh approximation.
inline Tensor gelu(const Tensor& x) {
    constexpr double k = 0.7978845608028654; // sqrt(2/pi)
    constexpr double a = 0.044715;
    return detail::unary(
        x,
        [](double v) { return 0.5 * v * (1.0 + std::tanh(k * (v + a * v * v * v))); },
        [](double v, double) {
            const double t = std::tanh(k * (v + a * v * v * v));
            return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * k * (1.0 + 3.0 * a * v * v);
        });
}

/// Inverted dropout. Identity when `training` is false or p == 0.
inline Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng) {
    if (!training || p <= 0.0) return x;
    if (p >= 1.0) throw ContractError("dropout: rate must be < 1");
    std::bernoulli_distribution keep(1.0 - p);
    std::vector<double> m(x.size());
    for (auto& v : m) v = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
    return mul(x, Tensor(x.shape(), std::move(m)));
}

/// Columns [begin, end) of x.
inline Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
    detail::require_matrix(x, "slice_cols");
    const std::size_t r = x.rows(), c = x.cols();
    if (begin >= end || end > c) throw DimensionError("slice_cols: invalid column range");
    const std::size_t w = end - begin;
    std::vector<double> out(r * w);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x[i * c + begin + j];
    return Tensor::make_result({r, w}, std::move(out), {x}, [r, c, w, begin](detail::Node& self) {
        auto& g = detail::parent(self, 0).ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j) g[i * c + begin + j] += self.grad[i * w + j];
    });
}

/// Rows [begin, end) of x.
inline Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    detail::require_matrix(x, "slice_rows");
    const std::size_t r = x.rows(), c = x.cols();
    if (begin >= end || end > r) throw DimensionError("slice_rows: invalid row range");
    std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
                            x.data().begin() + static_cast<std::ptrdiff_t>(end * c));
    return Tensor::make_result({end - begin, c}, std::move(out), {x}, [begin, c](detail::Node& self) {
        auto& g = detail::parent(self, 0).ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * c + i] += self.grad[i];
    });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t r = parts.front().rows();
    std::vector<std::size_t> offsets;
    std::size_t total = 0;
    for (const auto& p : parts) {
        detail::require_matrix(p, "concat_cols");
        if (p.rows() != r) throw DimensionError("concat_cols: row counts differ");
        offsets.push_back(total);
        total += p.cols();
    }
    std::vector<double> out(r * total);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const std::size_t w = parts[k].cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j) out[i * total + offsets[k] + j] = parts[k][i * w + j];
    }
    return Tensor::make_result({r, total}, std::move(out), parts, [r, total, offsets](detail::Node& self) {
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
            auto& p = *self.parents[k];
            if (!p.requires_grad) continue;
            auto& g = p.ensure_grad();
            const std::size_t w = p.shape.back();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * total + offsets[k] + j];
        }
    });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    const std::size_t c = parts.front().cols();
    std::size_t total = 0;
    std::vector<double> out;
    for (const auto& p : parts) {
        detail::require_matrix(p, "concat_rows");
        if (p.cols() != c) throw DimensionError("concat_rows: column counts differ");
        total += p.rows();
        out.insert(out.end(), p.data().begin(), p.data().end());
    }
    return Tensor::make_result({total, c}, std::move(out), parts, [](detail::Node& self) {
        std::size_t off = 0;
        for (auto& pp : self.parents) {
            const std::size_t n = pp->value.size();
            if (pp->requires_grad) {
                auto& g = pp->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
            }
            off += n;
        }
    });
}

/// Mean over the rows flagged valid, as a [1×C] row.
inline Tensor masked_mean_rows(const Tensor& x, const std::vector<bool>& valid) {
    detail::require_matrix(x, "masked_mean_rows");
    const std::size_t r = x.rows(), c = x.cols();
    if (valid.size() != r) throw DimensionError("masked_mean_rows: mask length does not match row count");
    const auto count = static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
    if (count == 0) throw ContractError("masked_mean_rows: every position is masked");
    std::vector<double> out(c, 0.0);
    for (std::size_t i = 0; i < r; ++i)
        if (valid[i])
            for (std::size_t j = 0; j < c; ++j) out[j] += x[i * c + j];
    const double inv = 1.0 / static_cast<double>(count);
    for (auto& v : out) v *= inv;
    return Tensor::make_result({1, c}, std::move(out), {x}, [valid, c, inv](detail::Node& self) {
        auto& g = detail::parent(self, 0).ensure_grad();
        for (std::size_t i = 0; i < valid.size(); ++i)
            if (valid[i])
                for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j] * inv;
    });
}

inline Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    return Tensor::make_result({1}, {s}, {x}, [](detail::Node& self) {
        auto& g = detail::parent(self, 0).ensure_grad();
        for (auto& v : g) v += self.grad[0];
    });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

/// −log(1 − p) elementwise with p clamped to at most 1 − clamp_eps.
inline Tensor neg_log1m(const Tensor& p, double clamp_eps = 1e-12) {
    const double hi = 1.0 - clamp_eps;
    std::vector<double> out(p.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = -std::log1p(-std::min(p[i], hi));
    return Tensor::make_result(p.shape(), std::move(out), {p}, [hi](detail::Node& self) {
        auto& pp = detail::parent(self, 0);
        auto& g = pp.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (pp.value[i] < hi) g[i] += self.grad[i] / (1.0 - pp.value[i]);
    });
}

} // namespace gadtraj
