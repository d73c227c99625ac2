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

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "dqs/tensor.hpp"

namespace dqs::ops {

/// Value written into masked attention scores.
inline constexpr float kMaskValue = -1e9f;
inline constexpr float kLayerNormEps = 1e-5f;

// Linear algebra.

/// a[..., k] x b[k, n] (or b[n, k] when transpose_b). Leading dims of `a` are
/// flattened, so a [batch, len, d] activation multiplies a [d, n] weight.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);

/// Batched product over matching leading dims: a[..., m, k] x b[..., k, n].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

// Elementwise.

Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, float b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, float b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor relu(const Tensor& a);
/// tanh approximation.
Tensor gelu(const Tensor& a);
/// Adds `bias` (length == last dim of a) to every row of a.
Tensor add_bias(const Tensor& a, const Tensor& bias);

// Shape manipulation.

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& perm);

// Normalization and masking.

Tensor softmax(const Tensor& a, int axis = -1);
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                  float eps = kLayerNormEps);
/// Positions with mask[i] != 0 are replaced by `value` and receive no gradient.
Tensor masked_fill(const Tensor& a, std::span<const std::uint8_t> mask, float value);
Tensor dropout(const Tensor& a, float rate, std::mt19937_64& rng);

// Lookup.

Tensor embedding(const Tensor& table, std::span<const int> ids);

// Reductions and losses.

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Mean squared error over elements whose mask entry is nonzero (all elements
/// when no mask is given). Returns 0 when nothing is selected.
Tensor mse(const Tensor& a, const Tensor& b,
           std::optional<std::span<const std::uint8_t>> mask = std::nullopt);
/// Mean token negative log-likelihood; targets equal to ignore_id are skipped.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_id);

// Straight-through transforms.

using DataTransform = std::function<void(std::span<const float> in, std::span<float> out)>;

/// Forward applies `transform` to the data; backward passes the output
/// gradient to `a` unchanged.
Tensor straight_through(const Tensor& a, const DataTransform& transform);

}  // namespace dqs::ops
