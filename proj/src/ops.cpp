// Copyright 2026 The DQS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dqs/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "dqs/error.hpp"

namespace dqs::ops {
namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;

bool tracking(std::initializer_list<const Tensor*> inputs) {
    if (!Tape::active()) return false;
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor* t) { return t->requires_grad(); });
}

void record(std::initializer_list<const Tensor*> inputs, const Tensor& out,
            Tape::BackwardFn fn) {
    std::vector<ImplPtr> impls;
    impls.reserve(inputs.size());
    for (const Tensor* t : inputs) impls.push_back(t->impl());
    Tape::active()->record(std::move(impls), out.impl(), std::move(fn));
}

// Null when the input does not take gradients.
float* grad_of(const ImplPtr& impl) {
    return impl->requires_grad ? impl->grad_buffer() : nullptr;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
}

// C[m,n] = alpha * op(A) op(B) + beta * C, row-major.
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const float* a, const float* b, float beta, float* c) {
    if (m == 0 || n == 0) return;
    if (k == 0) {
        if (beta == 0.0f) std::fill(c, c + m * n, 0.0f);
        return;
    }
    const auto lda = static_cast<int>(trans_a ? m : k);
    const auto ldb = static_cast<int>(trans_b ? k : n);
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), 1.0f, a, lda, b, ldb, beta, c, static_cast<int>(n));
}

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& a, Forward f, Derivative df) {
    std::vector<float> out(a.data().size());
    auto in = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
    const bool track = tracking({&a});
    Tensor result(a.shape(), std::move(out), track);
    if (track) {
        auto ai = a.impl();
        record({&a}, result, [ai, df](std::span<const float> g) {
            float* ga = ai->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(ai->data[i]);
        });
    }
    return result;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
    if (a.rank() < 1 || b.rank() != 2) {
        throw DimensionError("matmul: expected a[...,k] and b[k,n], got " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    }
    const std::int64_t k = a.dim(-1);
    const std::int64_t bk = transpose_b ? b.dim(1) : b.dim(0);
    const std::int64_t n = transpose_b ? b.dim(0) : b.dim(1);
    if (k != bk) {
        throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()) + (transpose_b ? "^T" : ""));
    }
    const std::int64_t m = k == 0 ? shape_numel(Shape(a.shape().begin(), a.shape().end() - 1))
                                  : a.numel() / k;
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(n);
    std::vector<float> out(static_cast<std::size_t>(m * n));
    gemm(false, transpose_b, m, n, k, a.data().data(), b.data().data(), 0.0f, out.data());

    const bool track = tracking({&a, &b});
    Tensor result(std::move(out_shape), std::move(out), track);
    if (track) {
        auto ai = a.impl();
        auto bi = b.impl();
        record({&a, &b}, result, [ai, bi, m, n, k, transpose_b](std::span<const float> g) {
            if (float* ga = grad_of(ai)) {
                // dA = dC * B^T  (or dC * B when B was used transposed)
                gemm(false, !transpose_b, m, k, n, g.data(), bi->data.data(), 1.0f, ga);
            }
            if (float* gb = grad_of(bi)) {
                if (transpose_b) {
                    gemm(true, false, n, k, m, g.data(), ai->data.data(), 1.0f, gb);
                } else {
                    gemm(true, false, k, n, m, ai->data.data(), g.data(), 1.0f, gb);
                }
            }
        });
    }
    return result;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
    if (a.rank() < 2 || a.rank() != b.rank()) {
        throw DimensionError("bmm: rank mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    const auto r = static_cast<std::size_t>(a.rank());
    for (std::size_t i = 0; i + 2 < r; ++i) {
        if (a.shape()[i] != b.shape()[i]) {
            throw DimensionError("bmm: batch dimensions differ " + shape_str(a.shape()) + " vs " +
                                 shape_str(b.shape()));
        }
    }
    const std::int64_t m = a.shape()[r - 2];
    const std::int64_t k = a.shape()[r - 1];
    const std::int64_t bk = transpose_b ? b.shape()[r - 1] : b.shape()[r - 2];
    const std::int64_t n = transpose_b ? b.shape()[r - 2] : b.shape()[r - 1];
    if (k != bk) {
        throw DimensionError("bmm: inner dimensions differ " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    std::int64_t batch = 1;
    for (std::size_t i = 0; i + 2 < r; ++i) batch *= a.shape()[i];

    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(n);
    std::vector<float> out(static_cast<std::size_t>(batch * m * n));
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    for (std::int64_t i = 0; i < batch; ++i) {
        gemm(false, transpose_b, m, n, k, pa + i * m * k, pb + i * k * n, 0.0f,
             out.data() + i * m * n);
    }

    const bool track = tracking({&a, &b});
    Tensor result(std::move(out_shape), std::move(out), track);
    if (track) {
        auto ai = a.impl();
        auto bi = b.impl();
        record({&a, &b}, result,
               [ai, bi, batch, m, n, k, transpose_b](std::span<const float> g) {
                   float* ga = grad_of(ai);
                   float* gb = grad_of(bi);
                   for (std::int64_t i = 0; i < batch; ++i) {
                       const float* gi = g.data() + i * m * n;
                       const float* ap = ai->data.data() + i * m * k;
                       const float* bp = bi->data.data() + i * k * n;
                       if (ga) gemm(false, !transpose_b, m, k, n, gi, bp, 1.0f, ga + i * m * k);
                       if (gb) {
                           if (transpose_b) {
                               gemm(true, false, n, k, m, gi, ap, 1.0f, gb + i * k * n);
                           } else {
                               gemm(true, false, k, n, m, ap, gi, 1.0f, gb + i * k * n);
                           }
                       }
                   }
               });
    }
    return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<float> out(a.data().begin(), a.data().end());
    auto pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
    const bool track = tracking({&a, &b});
    Tensor result(a.shape(), std::move(out), track);
    if (track) {
        auto ai = a.impl();
        auto bi = b.impl();
        record({&a, &b}, result, [ai, bi](std::span<const float> g) {
            if (float* ga = grad_of(ai)) {
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (float* gb = grad_of(bi)) {
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }
    return result;
}

Tensor add(const Tensor& a, float b) {
    return unary(a, [b](float x) { return x + b; }, [](float) { return 1.0f; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<float> out(a.data().begin(), a.data().end());
    auto pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= pb[i];
    const bool track = tracking({&a, &b});
    Tensor result(a.shape(), std::move(out), track);
    if (track) {
        auto ai = a.impl();
        auto bi = b.impl();
        record({&a, &b}, result, [ai, bi](std::span<const float> g) {
            if (float* ga = grad_of(ai)) {
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (float* gb = grad_of(bi)) {
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        });
    }
    return result;
}

Tensor sub(const Tensor& a, float b) { return add(a, -b); }

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<float> out(a.data().begin(), a.data().end());
    auto pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= pb[i];
    const bool track = tracking({&a, &b});
    Tensor result(a.shape(), std::move(out), track);
    if (track) {
        auto ai = a.impl();
        auto bi = b.impl();
        record({&a, &b}, result, [ai, bi](std::span<const float> g) {
            if (float* ga = grad_of(ai)) {
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bi->data[i];
            }
            if (float* gb = grad_of(bi)) {
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ai->data[i];
            }
        });
    }
    return result;
}

Tensor scale(const Tensor& a, float s) {
    return unary(a, [s](float x) { return x * s; }, [s](float) { return s; });
}

Tensor relu(const Tensor& a) {
    return unary(a, [](float x) { return x > 0.0f ? x : 0.0f; },
                 [](float x) { return x > 0.0f ? 1.0f : 0.0f; });
}

Tensor gelu(const Tensor& a) {
    constexpr float c = 0.7978845608028654f;  // sqrt(2 / pi)
    constexpr float k = 0.044715f;
    return unary(
        a,
        [](float x) {
            const float t = std::tanh(c * (x + k * x * x * x));
            return 0.5f * x * (1.0f + t);
        },
        [](float x) {
            const float t = std::tanh(c * (x + k * x * x * x));
            return 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * c * (1.0f + 3.0f * k * x * x);
        });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
    if (bias.rank() != 1 || a.rank() < 1 || a.dim(-1) != bias.dim(0)) {
        throw DimensionError("add_bias: bias " + shape_str(bias.shape()) +
                             " does not match last dim of " + shape_str(a.shape()));
    }
    const std::int64_t d = bias.dim(0);
    std::vector<float> out(a.data().begin(), a.data().end());
    auto pb = bias.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += pb[i % static_cast<std::size_t>(d)];
    const bool track = tracking({&a, &bias});
    Tensor result(a.shape(), std::move(out), track);
    if (track) {
        auto ai = a.impl();
        auto bi = bias.impl();
        record({&a, &bias}, result, [ai, bi, d](std::span<const float> g) {
            if (float* ga = grad_of(ai)) {
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (float* gb = grad_of(bi)) {
                for (std::size_t i = 0; i < g.size(); ++i) gb[i % static_cast<std::size_t>(d)] += g[i];
            }
        });
    }
    return result;
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                             shape_str(shape));
    }
    const bool track = tracking({&a});
    Tensor result(std::move(shape), std::vector<float>(a.data().begin(), a.data().end()), track);
    if (track) {
        auto ai = a.impl();
        record({&a}, result, [ai](std::span<const float> g) {
            float* ga = ai->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        });
    }
    return result;
}

Tensor permute(const Tensor& a, const std::vector<int>& perm) {
    const auto r = static_cast<std::size_t>(a.rank());
    if (perm.size() != r) throw DimensionError("permute: wrong number of axes");
    std::vector<bool> seen(r, false);
    for (int p : perm) {
        if (p < 0 || static_cast<std::size_t>(p) >= r || seen[static_cast<std::size_t>(p)]) {
            throw IndexError("permute: invalid axis permutation");
        }
        seen[static_cast<std::size_t>(p)] = true;
    }
    const Shape& in_shape = a.shape();
    std::vector<std::int64_t> in_stride(r, 1);
    for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * in_shape[i];
    Shape out_shape(r);
    std::vector<std::int64_t> src_stride(r);
    for (std::size_t i = 0; i < r; ++i) {
        out_shape[i] = in_shape[static_cast<std::size_t>(perm[i])];
        src_stride[i] = in_stride[static_cast<std::size_t>(perm[i])];
    }

    // Flat output index -> flat input index.
    const auto n = static_cast<std::size_t>(a.numel());
    std::vector<std::int64_t> gather(n);
    std::vector<std::int64_t> idx(r, 0);
    for (std::size_t o = 0; o < n; ++o) {
        std::int64_t src = 0;
        for (std::size_t i = 0; i < r; ++i) src += idx[i] * src_stride[i];
        gather[o] = src;
        for (std::size_t i = r; i-- > 0;) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
    std::vector<float> out(n);
    auto in = a.data();
    for (std::size_t o = 0; o < n; ++o) out[o] = in[static_cast<std::size_t>(gather[o])];

    const bool track = tracking({&a});
    Tensor result(std::move(out_shape), std::move(out), track);
    if (track) {
        auto ai = a.impl();
        record({&a}, result, [ai, gather = std::move(gather)](std::span<const float> g) {
            float* ga = ai->grad_buffer();
            for (std::size_t o = 0; o < g.size(); ++o) ga[gather[o]] += g[o];
        });
    }
    return result;
}

Tensor softmax(const Tensor& a, int axis) {
    const auto r = static_cast<int>(a.rank());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) {
        throw IndexError("softmax: axis out of range for shape " + shape_str(a.shape()));
    }
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= a.shape()[static_cast<std::size_t>(i)];
    for (int i = axis + 1; i < r; ++i) inner *= a.shape()[static_cast<std::size_t>(i)];
    const std::int64_t len = a.shape()[static_cast<std::size_t>(axis)];

    auto in = a.data();
    std::vector<float> out(in.size());
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t i = 0; i < inner; ++i) {
            const std::int64_t base = o * len * inner + i;
            float mx = -std::numeric_limits<float>::infinity();
            for (std::int64_t j = 0; j < len; ++j) mx = std::max(mx, in[base + j * inner]);
            double total = 0.0;
            for (std::int64_t j = 0; j < len; ++j) {
                const float e = std::exp(in[base + j * inner] - mx);
                out[base + j * inner] = e;
                total += e;
            }
            const auto inv = static_cast<float>(1.0 / total);
            for (std::int64_t j = 0; j < len; ++j) out[base + j * inner] *= inv;
        }
    }

    const bool track = tracking({&a});
    Tensor result(a.shape(), std::move(out), track);
    if (track) {
        auto ai = a.impl();
        auto y = result.impl();
        record({&a}, result, [ai, y, outer, inner, len](std::span<const float> g) {
            float* ga = ai->grad_buffer();
            for (std::int64_t o = 0; o < outer; ++o) {
                for (std::int64_t i = 0; i < inner; ++i) {
                    const std::int64_t base = o * len * inner + i;
                    double dot = 0.0;
                    for (std::int64_t j = 0; j < len; ++j) {
                        dot += static_cast<double>(g[base + j * inner]) * y->data[base + j * inner];
                    }
                    for (std::int64_t j = 0; j < len; ++j) {
                        const auto p = base + j * inner;
                        ga[p] += y->data[p] * static_cast<float>(g[p] - dot);
                    }
                }
            }
        });
    }
    return result;
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, float eps) {
    if (a.rank() < 1 || gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != a.dim(-1) ||
        bias.dim(0) != a.dim(-1)) {
        throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                             shape_str(bias.shape()) + " do not match last dim of " +
                             shape_str(a.shape()));
    }
    const std::int64_t d = a.dim(-1);
    const std::int64_t rows = d == 0 ? 0 : a.numel() / d;
    auto in = a.data();
    auto g = gain.data();
    auto b = bias.data();
    std::vector<float> out(in.size());
    std::vector<float> xhat(in.size());
    std::vector<float> rstd(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const float* x = in.data() + r * d;
        double mean = 0.0;
        for (std::int64_t j = 0; j < d; ++j) mean += x[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
            const double c = x[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double rs = 1.0 / std::sqrt(var + static_cast<double>(eps));
        rstd[static_cast<std::size_t>(r)] = static_cast<float>(rs);
        for (std::int64_t j = 0; j < d; ++j) {
            const auto p = static_cast<std::size_t>(r * d + j);
            xhat[p] = static_cast<float>((x[j] - mean) * rs);
            out[p] = g[static_cast<std::size_t>(j)] * xhat[p] + b[static_cast<std::size_t>(j)];
        }
    }

    const bool track = tracking({&a, &gain, &bias});
    Tensor result(a.shape(), std::move(out), track);
    if (track) {
        auto ai = a.impl();
        auto gi = gain.impl();
        auto bi = bias.impl();
        record({&a, &gain, &bias}, result,
               [ai, gi, bi, d, rows, xhat = std::move(xhat),
                rstd = std::move(rstd)](std::span<const float> dy) {
                   float* ga = grad_of(ai);
                   float* gg = grad_of(gi);
                   float* gb = grad_of(bi);
                   for (std::int64_t r = 0; r < rows; ++r) {
                       const std::size_t off = static_cast<std::size_t>(r * d);
                       if (ga) {
                           double m1 = 0.0, m2 = 0.0;
                           for (std::int64_t j = 0; j < d; ++j) {
                               const double dxh =
                                   static_cast<double>(dy[off + j]) * gi->data[static_cast<std::size_t>(j)];
                               m1 += dxh;
                               m2 += dxh * xhat[off + j];
                           }
                           m1 /= static_cast<double>(d);
                           m2 /= static_cast<double>(d);
                           const double rs = rstd[static_cast<std::size_t>(r)];
                           for (std::int64_t j = 0; j < d; ++j) {
                               const double dxh =
                                   static_cast<double>(dy[off + j]) * gi->data[static_cast<std::size_t>(j)];
                               ga[off + j] += static_cast<float>(rs * (dxh - m1 - xhat[off + j] * m2));
                           }
                       }
                       for (std::int64_t j = 0; j < d; ++j) {
                           if (gg) gg[j] += dy[off + j] * xhat[off + j];
                           if (gb) gb[j] += dy[off + j];
                       }
                   }
               });
    }
    return result;
}

Tensor masked_fill(const Tensor& a, std::span<const std::uint8_t> mask, float value) {
    if (static_cast<std::int64_t>(mask.size()) != a.numel()) {
        throw DimensionError("masked_fill: mask has " + std::to_string(mask.size()) +
                             " entries for tensor " + shape_str(a.shape()));
    }
    std::vector<float> out(a.data().begin(), a.data().end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (mask[i]) out[i] = value;
    }
    const bool track = tracking({&a});
    Tensor result(a.shape(), std::move(out), track);
    if (track) {
        auto ai = a.impl();
        record({&a}, result,
               [ai, m = std::vector<std::uint8_t>(mask.begin(), mask.end())](std::span<const float> g) {
                   float* ga = ai->grad_buffer();
                   for (std::size_t i = 0; i < g.size(); ++i) {
                       if (!m[i]) ga[i] += g[i];
                   }
               });
    }
    return result;
}

Tensor dropout(const Tensor& a, float rate, std::mt19937_64& rng) {
    if (rate < 0.0f || rate >= 1.0f) throw ContractError("dropout: rate must be in [0, 1)");
    if (rate == 0.0f) return a;
    std::bernoulli_distribution keep(1.0 - rate);
    const float s = 1.0f / (1.0f - rate);
    std::vector<float> factor(a.data().size());
    for (auto& f : factor) f = keep(rng) ? s : 0.0f;
    std::vector<float> out(a.data().begin(), a.data().end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
    const bool track = tracking({&a});
    Tensor result(a.shape(), std::move(out), track);
    if (track) {
        auto ai = a.impl();
        record({&a}, result, [ai, factor = std::move(factor)](std::span<const float> g) {
            float* ga = ai->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor[i];
        });
    }
    return result;
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
    if (table.rank() != 2) {
        throw DimensionError("embedding: table must be rank 2, got " + shape_str(table.shape()));
    }
    const std::int64_t v = table.dim(0);
    const std::int64_t d = table.dim(1);
    for (int id : ids) {
        if (id < 0 || id >= v) {
            throw IndexError("embedding: id " + std::to_string(id) + " outside [0, " +
                             std::to_string(v) + ")");
        }
    }
    std::vector<float> out(ids.size() * static_cast<std::size_t>(d));
    auto src = table.data();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        std::copy_n(src.begin() + ids[i] * d, d, out.begin() + static_cast<std::ptrdiff_t>(i) * d);
    }
    const bool track = tracking({&table});
    Tensor result({static_cast<std::int64_t>(ids.size()), d}, std::move(out), track);
    if (track) {
        auto ti = table.impl();
        record({&table}, result,
               [ti, d, idv = std::vector<int>(ids.begin(), ids.end())](std::span<const float> g) {
                   float* gt = ti->grad_buffer();
                   for (std::size_t i = 0; i < idv.size(); ++i) {
                       float* row = gt + idv[i] * d;
                       const float* gr = g.data() + static_cast<std::int64_t>(i) * d;
                       for (std::int64_t j = 0; j < d; ++j) row[j] += gr[j];
                   }
               });
    }
    return result;
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (float x : a.data()) total += x;
    const bool track = tracking({&a});
    Tensor result = Tensor::scalar(static_cast<float>(total), track);
    if (track) {
        auto ai = a.impl();
        record({&a}, result, [ai](std::span<const float> g) {
            float* ga = ai->grad_buffer();
            for (std::size_t i = 0; i < ai->data.size(); ++i) ga[i] += g[0];
        });
    }
    return result;
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw ContractError("mean of an empty tensor");
    return scale(sum(a), 1.0f / static_cast<float>(a.numel()));
}

Tensor mse(const Tensor& a, const Tensor& b, std::optional<std::span<const std::uint8_t>> mask) {
    require_same_shape(a, b, "mse");
    if (mask && static_cast<std::int64_t>(mask->size()) != a.numel()) {
        throw DimensionError("mse: mask has " + std::to_string(mask->size()) +
                             " entries for tensor " + shape_str(a.shape()));
    }
    auto pa = a.data();
    auto pb = b.data();
    double total = 0.0;
    std::int64_t count = 0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (mask && !(*mask)[i]) continue;
        const double diff = static_cast<double>(pa[i]) - pb[i];
        total += diff * diff;
        ++count;
    }
    const float value = count == 0 ? 0.0f : static_cast<float>(total / static_cast<double>(count));
    const bool track = tracking({&a, &b});
    Tensor result = Tensor::scalar(value, track);
    if (track && count > 0) {
        auto ai = a.impl();
        auto bi = b.impl();
        std::vector<std::uint8_t> m;
        if (mask) m.assign(mask->begin(), mask->end());
        record({&a, &b}, result, [ai, bi, count, m = std::move(m)](std::span<const float> g) {
            float* ga = grad_of(ai);
            float* gb = grad_of(bi);
            const double coef = 2.0 * g[0] / static_cast<double>(count);
            for (std::size_t i = 0; i < ai->data.size(); ++i) {
                if (!m.empty() && !m[i]) continue;
                const auto d =
                    static_cast<float>(coef * (static_cast<double>(ai->data[i]) - bi->data[i]));
                if (ga) ga[i] += d;
                if (gb) gb[i] -= d;
            }
        });
    } else if (track) {
        record({&a, &b}, result, [](std::span<const float>) {});
    }
    return result;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_id) {
    if (logits.rank() < 1) throw DimensionError("cross_entropy: logits must have a class axis");
    const std::int64_t v = logits.dim(-1);
    const std::int64_t n = v == 0 ? 0 : logits.numel() / v;
    if (static_cast<std::int64_t>(targets.size()) != n) {
        throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                             " targets for logits " + shape_str(logits.shape()));
    }
    auto x = logits.data();
    std::vector<float> probs(x.size());
    double total = 0.0;
    std::int64_t count = 0;
    for (std::int64_t r = 0; r < n; ++r) {
        const int t = targets[static_cast<std::size_t>(r)];
        if (t == ignore_id) continue;
        if (t < 0 || t >= v) {
            throw IndexError("cross_entropy: target " + std::to_string(t) + " outside [0, " +
                             std::to_string(v) + ")");
        }
        const float* row = x.data() + r * v;
        const float mx = *std::max_element(row, row + v);
        double z = 0.0;
        for (std::int64_t j = 0; j < v; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
        const double lse = mx + std::log(z);
        total += lse - row[t];
        for (std::int64_t j = 0; j < v; ++j) {
            probs[static_cast<std::size_t>(r * v + j)] =
                static_cast<float>(std::exp(static_cast<double>(row[j]) - lse));
        }
        ++count;
    }
    const float value = count == 0 ? 0.0f : static_cast<float>(total / static_cast<double>(count));
    const bool track = tracking({&logits});
    Tensor result = Tensor::scalar(value, track);
    if (track) {
        auto li = logits.impl();
        record({&logits}, result,
               [li, v, n, count, probs = std::move(probs),
                tv = std::vector<int>(targets.begin(), targets.end()), ignore_id](std::span<const float> g) {
                   if (count == 0) return;
                   float* gl = li->grad_buffer();
                   const float coef = g[0] / static_cast<float>(count);
                   for (std::int64_t r = 0; r < n; ++r) {
                       const int t = tv[static_cast<std::size_t>(r)];
                       if (t == ignore_id) continue;
                       for (std::int64_t j = 0; j < v; ++j) {
                           const auto p = static_cast<std::size_t>(r * v + j);
                           gl[p] += coef * (probs[p] - (j == t ? 1.0f : 0.0f));
                       }
                   }
               });
    }
    return result;
}

Tensor straight_through(const Tensor& a, const DataTransform& transform) {
    std::vector<float> out(a.data().size());
    transform(a.data(), out);
    const bool track = tracking({&a});
    Tensor result(a.shape(), std::move(out), track);
    if (track) {
        auto ai = a.impl();
        record({&a}, result, [ai](std::span<const float> g) {
            float* ga = ai->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        });
    }
    return result;
}

}  // namespace dqs::ops
