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

#include "dqs/quant.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dqs/error.hpp"
#include "dqs/ops.hpp"

namespace dqs {
namespace {

bool valid_param_bits(int b) { return b == 2 || b == 4 || b == 8 || b == 32; }

float max_abs(std::span<const float> w) {
    float m = 0.0f;
    for (float x : w) m = std::max(m, std::fabs(x));
    return m;
}

// Codes and scale for one contiguous block.
void linear_block(std::span<const float> w, int bits, float& scale, std::int8_t* codes) {
    const int th = linear_threshold(bits);
    const float m = max_abs(w);
    if (m == 0.0f) {
        scale = 0.0f;
        std::fill(codes, codes + w.size(), std::int8_t{0});
        return;
    }
    scale = m / static_cast<float>(th);
    // w / (m / th) evaluated as (w * th) / m: the product is exact in double,
    // so half-way cases are detected exactly.
    const double md = m;
    for (std::size_t i = 0; i < w.size(); ++i) {
        double q = std::round(static_cast<double>(w[i]) * th / md);
        q = std::clamp(q, -static_cast<double>(th), static_cast<double>(th));
        codes[i] = static_cast<std::int8_t>(q);
    }
}

void twn_block(std::span<const float> w, float& scale, std::int8_t* codes) {
    if (w.empty()) throw ContractError("twn_quantize: empty tensor");
    double l1 = 0.0;
    for (float x : w) l1 += std::fabs(static_cast<double>(x));
    const double delta = 0.7 * l1 / static_cast<double>(w.size());
    double kept = 0.0;
    std::int64_t count = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double x = w[i];
        if (x > delta) {
            codes[i] = 1;
        } else if (x < -delta) {
            codes[i] = -1;
        } else {
            codes[i] = 0;
            continue;
        }
        kept += std::fabs(x);
        ++count;
    }
    scale = count == 0 ? 0.0f : static_cast<float>(kept / static_cast<double>(count));
}

void check_shape(std::span<const float> w, const Shape& shape) {
    if (shape_numel(shape) != static_cast<std::int64_t>(w.size())) {
        throw DimensionError("quantize: shape " + shape_str(shape) + " does not match " +
                             std::to_string(w.size()) + " values");
    }
}

}  // namespace

void QuantConfig::validate() const {
    if (!valid_param_bits(w_bits)) throw ConfigError("w_bits must be one of 2, 4, 8, 32");
    if (!valid_param_bits(e_bits)) throw ConfigError("e_bits must be one of 2, 4, 8, 32");
    if (a_bits != 8 && a_bits != 32) throw ConfigError("a_bits must be 8 or 32");
}

std::string QuantConfig::label() const {
    return std::to_string(w_bits) + "-" + std::to_string(e_bits) + "-" + std::to_string(a_bits);
}

QuantConfig QuantConfig::parse(const std::string& label) {
    QuantConfig c;
    char d1 = 0, d2 = 0;
    std::istringstream is(label);
    if (!(is >> c.w_bits >> d1 >> c.e_bits >> d2 >> c.a_bits) || d1 != '-' || d2 != '-' ||
        is.peek() != std::char_traits<char>::eof()) {
        throw ConfigError("cannot parse bit-width label '" + label + "' (expected W-E-A)");
    }
    c.validate();
    return c;
}

int linear_threshold(int bits) { return (1 << (bits - 1)) - 1; }

QuantizedTensor linear_quantize(std::span<const float> w, const Shape& shape, int bits) {
    if (bits == 2) {
        throw ContractError("linear_quantize: 2-bit quantization uses twn_quantize");
    }
    if (bits < 3 || bits > 8) {
        throw ContractError("linear_quantize: bits must be in [3, 8], got " + std::to_string(bits));
    }
    check_shape(w, shape);
    QuantizedTensor q;
    q.shape = shape;
    q.bits = bits;
    q.scales.resize(1);
    q.codes.resize(w.size());
    linear_block(w, bits, q.scales[0], q.codes.data());
    return q;
}

QuantizedTensor linear_quantize(const Tensor& w, int bits) {
    return linear_quantize(w.data(), w.shape(), bits);
}

QuantizedTensor twn_quantize(std::span<const float> w, const Shape& shape) {
    check_shape(w, shape);
    QuantizedTensor q;
    q.shape = shape;
    q.bits = 2;
    q.scales.resize(1);
    q.codes.resize(w.size());
    twn_block(w, q.scales[0], q.codes.data());
    return q;
}

QuantizedTensor twn_quantize(const Tensor& w) { return twn_quantize(w.data(), w.shape()); }

QuantizedTensor quantize(const Tensor& w, int bits, Granularity granularity) {
    if (granularity == Granularity::kPerTensor || w.rank() < 2) {
        return bits == 2 ? twn_quantize(w) : linear_quantize(w, bits);
    }
    if (bits != 2 && (bits < 3 || bits > 8)) {
        throw ContractError("quantize: unsupported bit width " + std::to_string(bits));
    }
    QuantizedTensor q;
    q.shape = w.shape();
    q.bits = bits;
    q.granularity = Granularity::kPerRow;
    const std::int64_t rows = w.dim(0);
    const std::int64_t cols = rows == 0 ? 0 : w.numel() / rows;
    q.scales.resize(static_cast<std::size_t>(rows));
    q.codes.resize(static_cast<std::size_t>(w.numel()));
    for (std::int64_t r = 0; r < rows; ++r) {
        auto row = w.data().subspan(static_cast<std::size_t>(r * cols), static_cast<std::size_t>(cols));
        std::int8_t* out = q.codes.data() + r * cols;
        if (bits == 2) {
            twn_block(row, q.scales[static_cast<std::size_t>(r)], out);
        } else {
            linear_block(row, bits, q.scales[static_cast<std::size_t>(r)], out);
        }
    }
    return q;
}

void dequantize_into(const QuantizedTensor& q, std::span<float> out) {
    if (out.size() != q.codes.size()) throw DimensionError("dequantize: output size mismatch");
    if (q.codes.empty()) return;
    if (q.scales.empty() || q.codes.size() % q.scales.size() != 0) {
        throw FormatError("dequantize: " + std::to_string(q.scales.size()) + " scales for " +
                          std::to_string(q.codes.size()) + " codes");
    }
    const std::size_t per_scale = q.scales.empty() ? 0 : q.codes.size() / q.scales.size();
    for (std::size_t i = 0; i < q.codes.size(); ++i) {
        out[i] = q.scales[i / per_scale] * static_cast<float>(q.codes[i]);
    }
}

Tensor dequantize(const QuantizedTensor& q) {
    std::vector<float> out(q.codes.size());
    if (!out.empty()) dequantize_into(q, out);
    return Tensor(q.shape, std::move(out));
}

Tensor quantize_activation(const Tensor& x, int a_bits) {
    if (a_bits == 32) return x;
    if (a_bits != 8) {
        throw ContractError("quantize_activation: a_bits must be 8 or 32, got " + std::to_string(a_bits));
    }
    return ops::straight_through(x, [](std::span<const float> in, std::span<float> out) {
        if (in.empty()) return;
        float scale = 0.0f;
        std::vector<std::int8_t> codes(in.size());
        linear_block(in, 8, scale, codes.data());
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = scale * static_cast<float>(codes[i]);
    });
}

ForwardOptions activation_options(const QuantConfig& config, ForwardOptions base) {
    if (config.a_bits != 32) {
        const int bits = config.a_bits;
        base.activation_hook = [bits](const Tensor& x) { return quantize_activation(x, bits); };
    }
    return base;
}

QuantPolicy QuantPolicy::standard(Granularity embedding_granularity) {
    QuantPolicy p;
    p.rules[ParamCategory::kWeight] = {Treatment::kWeightBits, Granularity::kPerTensor};
    p.rules[ParamCategory::kWordEmbedding] = {Treatment::kEmbeddingBits, embedding_granularity};
    p.rules[ParamCategory::kPositionalEmbedding] = {Treatment::kFullPrecision, Granularity::kPerTensor};
    p.rules[ParamCategory::kBias] = {Treatment::kFullPrecision, Granularity::kPerTensor};
    p.rules[ParamCategory::kNorm] = {Treatment::kFullPrecision, Granularity::kPerTensor};
    return p;
}

const QuantPolicy::Rule& QuantPolicy::rule_for(ParamCategory category, const std::string& param) const {
    auto it = rules.find(category);
    if (it == rules.end()) {
        throw ContractError("quantization policy has no rule for parameter '" + param +
                            "' (category " + category_name(category) + ")");
    }
    return it->second;
}

int QuantPolicy::bits_for(ParamCategory category, const QuantConfig& config,
                          const std::string& param) const {
    switch (rule_for(category, param).treatment) {
        case Treatment::kWeightBits: return config.w_bits;
        case Treatment::kEmbeddingBits: return config.e_bits;
        case Treatment::kFullPrecision: return 32;
    }
    return 32;
}

QuantizedModel quantize_model(const SeqModel& model, const QuantConfig& config,
                              const QuantPolicy& policy) {
    config.validate();
    QuantizedModel out;
    out.view = model;
    visit_parameters(out.view, [&](const std::string& name, Tensor& slot, ParamCategory category) {
        const int bits = policy.bits_for(category, config, name);
        if (bits == 32) return;
        const Granularity g = policy.rule_for(category, name).granularity;
        QuantizedTensor& q = out.quantized[name];
        const Tensor source = slot;
        slot = ops::straight_through(source, [&](std::span<const float>, std::span<float> dst) {
            q = quantize(source, bits, g);
            dequantize_into(q, dst);
        });
    });
    return out;
}

std::int64_t packed_code_bytes(std::int64_t count, int bits) { return (count * bits + 7) / 8; }

std::int64_t packed_size(const QuantizedTensor& q) {
    return packed_code_bytes(q.numel(), q.bits) + 4 * static_cast<std::int64_t>(q.scales.size());
}

std::vector<std::uint8_t> pack_codes(std::span<const std::int8_t> codes, int bits) {
    if (bits < 1 || bits > 8) throw ContractError("pack_codes: bits must be in [1, 8]");
    std::vector<std::uint8_t> out(static_cast<std::size_t>(
        packed_code_bytes(static_cast<std::int64_t>(codes.size()), bits)));
    const unsigned mask = (1u << bits) - 1u;
    std::size_t bit = 0;
    for (std::int8_t c : codes) {
        const unsigned v = static_cast<unsigned>(static_cast<std::uint8_t>(c)) & mask;
        for (int b = 0; b < bits; ++b, ++bit) {
            if (v & (1u << b)) out[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
        }
    }
    return out;
}

std::vector<std::int8_t> unpack_codes(std::span<const std::uint8_t> bytes, std::int64_t count, int bits) {
    if (bits < 1 || bits > 8) throw ContractError("unpack_codes: bits must be in [1, 8]");
    if (static_cast<std::int64_t>(bytes.size()) < packed_code_bytes(count, bits)) {
        throw FormatError("unpack_codes: " + std::to_string(bytes.size()) + " bytes cannot hold " +
                          std::to_string(count) + " " + std::to_string(bits) + "-bit codes");
    }
    std::vector<std::int8_t> out(static_cast<std::size_t>(count));
    std::size_t bit = 0;
    for (auto& c : out) {
        int v = 0;
        for (int b = 0; b < bits; ++b, ++bit) {
            if (bytes[bit / 8] & (1u << (bit % 8))) v |= 1 << b;
        }
        if (v & (1 << (bits - 1))) v -= 1 << bits;  // sign-extend
        c = static_cast<std::int8_t>(v);
    }
    return out;
}

}  // namespace dqs
