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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dqs/model.hpp"
#include "dqs/tensor.hpp"

namespace dqs {

/// Bit widths for weights, word embeddings and activations ("W-E-A").
/// 32 means the category stays in full precision.
struct QuantConfig {
    int w_bits = 32;
    int e_bits = 32;
    int a_bits = 32;

    void validate() const;
    bool full_precision() const { return w_bits == 32 && e_bits == 32 && a_bits == 32; }
    /// "8-8-8" style label.
    std::string label() const;
    static QuantConfig parse(const std::string& label);

    bool operator==(const QuantConfig&) const = default;
};

enum class Granularity { kPerTensor, kPerRow };

/// Scaling factor(s) plus integer codes; dequantizes to scale * code.
///
/// Linear codes lie in [-th, th] with th = 2^(bits-1) - 1; ternary (2-bit)
/// codes lie in {-1, 0, 1}. Per-row tensors carry one scale per row.
struct QuantizedTensor {
    Shape shape;
    int bits = 8;
    Granularity granularity = Granularity::kPerTensor;
    std::vector<float> scales;
    std::vector<std::int8_t> codes;

    float alpha() const { return scales.at(0); }
    std::int64_t numel() const { return static_cast<std::int64_t>(codes.size()); }
    bool operator==(const QuantizedTensor&) const = default;
};

/// Largest code magnitude for a linear quantizer with `bits` bits.
int linear_threshold(int bits);

/// Symmetric linear quantization with alpha = max|w| / th and
/// codes = round(w / alpha), round half away from zero, clamped to +-th.
/// Valid for 3..8 bits; 2-bit requests must use twn_quantize.
QuantizedTensor linear_quantize(std::span<const float> w, const Shape& shape, int bits);
QuantizedTensor linear_quantize(const Tensor& w, int bits);

/// Ternary weight network quantization: threshold delta = 0.7 * ||w||_1 / n,
/// codes = sign(w) where |w| > delta, alpha = mean |w| over those entries.
QuantizedTensor twn_quantize(std::span<const float> w, const Shape& shape);
QuantizedTensor twn_quantize(const Tensor& w);

/// Dispatches 2 bits to TWN and 3..8 bits to the linear quantizer. Per-row
/// granularity quantizes each leading-dim row independently.
QuantizedTensor quantize(const Tensor& w, int bits, Granularity granularity = Granularity::kPerTensor);
/// Writes scale * code into `out` (numel floats).
void dequantize_into(const QuantizedTensor& q, std::span<float> out);
Tensor dequantize(const QuantizedTensor& q);

/// Identity at 32 bits; at 8 bits a symmetric quantize-dequantize with a
/// scale taken from the current tensor. The gradient passes straight through.
Tensor quantize_activation(const Tensor& x, int a_bits);

/// Forward hook that quantizes linear-layer inputs per `config.a_bits`.
ForwardOptions activation_options(const QuantConfig& config, ForwardOptions base = {});

/// How each parameter category is treated.
enum class Treatment { kWeightBits, kEmbeddingBits, kFullPrecision };

struct QuantPolicy {
    struct Rule {
        Treatment treatment = Treatment::kFullPrecision;
        Granularity granularity = Granularity::kPerTensor;
    };
    std::map<ParamCategory, Rule> rules;

    /// Hidden weights at w_bits, word embeddings at e_bits, everything else
    /// (positional embeddings, biases, layer norms) left in full precision.
    static QuantPolicy standard(Granularity embedding_granularity = Granularity::kPerTensor);

    /// Throws ContractError naming `param` when its category has no rule.
    const Rule& rule_for(ParamCategory category, const std::string& param) const;
    /// Effective bit width for a category (32 when not quantized).
    int bits_for(ParamCategory category, const QuantConfig& config, const std::string& param) const;
};

struct QuantizedModel {
    /// Same structure as the source model; quantized slots hold
    /// dequantize(quantize(w)). Untouched slots alias the source tensors.
    SeqModel view;
    std::map<std::string, QuantizedTensor> quantized;
};

/// Builds the low-precision view of `model`. When a tape is active and the
/// source parameters require grad, each quantized slot is a straight-through
/// node, so gradients of the view land on the full-precision master.
QuantizedModel quantize_model(const SeqModel& model, const QuantConfig& config,
                              const QuantPolicy& policy = QuantPolicy::standard());

/// Storage bytes for packed codes plus 4 bytes per scale.
std::int64_t packed_size(const QuantizedTensor& q);
std::int64_t packed_code_bytes(std::int64_t count, int bits);

/// Little-endian bit packing: code i occupies bits [i*bits, (i+1)*bits) of the
/// stream, lowest index in the least significant bits of each byte, stored in
/// `bits`-wide two's complement.
std::vector<std::uint8_t> pack_codes(std::span<const std::int8_t> codes, int bits);
std::vector<std::int8_t> unpack_codes(std::span<const std::uint8_t> bytes, std::int64_t count, int bits);

}  // namespace dqs
