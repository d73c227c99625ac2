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
#include <span>
#include <string>
#include <vector>

#include "dqs/model.hpp"
#include "dqs/quant.hpp"

namespace dqs {

using TokenList = std::vector<std::string>;

/// Whitespace tokenization; no stemming or case folding.
TokenList split_tokens(const std::string& text);

/// F1 of clipped n-gram overlap. 0 when either side has no n-grams.
double rouge_n(std::span<const std::string> pred, std::span<const std::string> ref, int n);
/// F1 from the longest common subsequence. 0 when either side is empty.
double rouge_l(std::span<const std::string> pred, std::span<const std::string> ref);
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

struct RougeScores {
    double r1 = 0.0;
    double r2 = 0.0;
    double rl = 0.0;
};

RougeScores rouge(std::span<const std::string> pred, std::span<const std::string> ref);

struct AccuracyReport {
    double token_acc = 0.0;
    double seq_acc = 0.0;
    /// Set when no non-pad target token existed; token_acc is then 1.0.
    bool no_target_tokens = false;
};

/// Position-aligned token accuracy over non-pad target positions (a missing
/// prediction counts as wrong) and exact-match sequence accuracy.
AccuracyReport accuracy(const std::vector<std::vector<int>>& pred,
                        const std::vector<std::vector<int>>& target, int pad_id);

/// Static model size: parameters plus quantization scales.
struct FootprintReport {
    std::string label;  // "W-E-A E-D"
    std::int64_t parameters = 0;
    std::int64_t quantized_weight_bytes = 0;
    std::int64_t quantized_embedding_bytes = 0;
    std::int64_t unquantized_bytes = 0;
    std::int64_t baseline_bytes = 0;  // every reference parameter at 4 bytes

    std::int64_t total_bytes() const {
        return quantized_weight_bytes + quantized_embedding_bytes + unquantized_bytes;
    }
    double mib() const { return static_cast<double>(total_bytes()) / (1024.0 * 1024.0); }
    double ratio() const {
        return static_cast<double>(baseline_bytes) / static_cast<double>(total_bytes());
    }

    static std::string csv_header();
    std::string csv_row() const;
};

/// "W-E-A E-D" table label.
std::string config_label(const QuantConfig& q, int enc_layers, int dec_layers);

FootprintReport footprint(const ModelConfig& config, const QuantConfig& qconfig,
                          const QuantPolicy& policy = QuantPolicy::standard());
FootprintReport footprint(const SeqModel& model, const QuantConfig& qconfig,
                          const QuantPolicy& policy = QuantPolicy::standard());
/// Same, with the ratio taken against `reference` at 32 bits (the full-depth
/// teacher when `config` is a shallower student).
FootprintReport footprint(const ModelConfig& reference, const ModelConfig& config, const QuantConfig& qconfig,
                          const QuantPolicy& policy = QuantPolicy::standard());

/// Locale-independent fixed-point formatting used by every text output.
std::string format_fixed(double value, int decimals);

}  // namespace dqs
