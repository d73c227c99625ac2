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

#include "dqs/metrics.hpp"

#include <algorithm>
#include <iostream>
#include <locale>
#include <map>
#include <sstream>

#include "dqs/error.hpp"

namespace dqs {

TokenList split_tokens(const std::string& text) {
    TokenList out;
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

namespace {

double f1(double overlap, double pred_count, double ref_count) {
    if (overlap <= 0.0 || pred_count <= 0.0 || ref_count <= 0.0) return 0.0;
    const double p = overlap / pred_count;
    const double r = overlap / ref_count;
    return 2.0 * p * r / (p + r);
}

std::map<std::vector<std::string>, int> ngram_counts(std::span<const std::string> toks, int n) {
    std::map<std::vector<std::string>, int> counts;
    const auto un = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i + un <= toks.size(); ++i) {
        ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                          toks.begin() + static_cast<std::ptrdiff_t>(i + un))];
    }
    return counts;
}

}  // namespace

double rouge_n(std::span<const std::string> pred, std::span<const std::string> ref, int n) {
    if (n < 1) throw ContractError("rouge_n: n must be >= 1");
    const auto un = static_cast<std::size_t>(n);
    if (pred.size() < un || ref.size() < un) return 0.0;
    const auto p = ngram_counts(pred, n);
    const auto r = ngram_counts(ref, n);
    std::int64_t overlap = 0;
    for (const auto& [gram, count] : p) {
        auto it = r.find(gram);
        if (it != r.end()) overlap += std::min(count, it->second);
    }
    return f1(static_cast<double>(overlap), static_cast<double>(pred.size() - un + 1),
              static_cast<double>(ref.size() - un + 1));
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l(std::span<const std::string> pred, std::span<const std::string> ref) {
    if (pred.empty() || ref.empty()) return 0.0;
    return f1(static_cast<double>(lcs_length(pred, ref)), static_cast<double>(pred.size()),
              static_cast<double>(ref.size()));
}

RougeScores rouge(std::span<const std::string> pred, std::span<const std::string> ref) {
    return {rouge_n(pred, ref, 1), rouge_n(pred, ref, 2), rouge_l(pred, ref)};
}

AccuracyReport accuracy(const std::vector<std::vector<int>>& pred,
                        const std::vector<std::vector<int>>& target, int pad_id) {
    if (pred.size() != target.size()) {
        throw DimensionError("accuracy: " + std::to_string(pred.size()) + " predictions for " +
                             std::to_string(target.size()) + " targets");
    }
    std::int64_t correct = 0, total = 0, exact = 0;
    for (std::size_t s = 0; s < target.size(); ++s) {
        const std::vector<int>& tgt = target[s];
        std::vector<int> prd = pred[s];
        while (!prd.empty() && prd.back() == pad_id) prd.pop_back();
        std::size_t tgt_len = tgt.size();
        while (tgt_len > 0 && tgt[tgt_len - 1] == pad_id) --tgt_len;
        for (std::size_t i = 0; i < tgt_len; ++i) {
            if (tgt[i] == pad_id) continue;
            ++total;
            if (i < prd.size() && prd[i] == tgt[i]) ++correct;
        }
        if (std::equal(prd.begin(), prd.end(), tgt.begin(), tgt.begin() + static_cast<std::ptrdiff_t>(tgt_len))) {
            ++exact;
        }
    }
    AccuracyReport r;
    if (total == 0) {
        std::cerr << "warning: accuracy over zero target tokens; reporting 1.0\n";
        r.token_acc = 1.0;
        r.no_target_tokens = true;
    } else {
        r.token_acc = static_cast<double>(correct) / static_cast<double>(total);
    }
    r.seq_acc = target.empty() ? 1.0 : static_cast<double>(exact) / static_cast<double>(target.size());
    return r;
}

std::string format_fixed(double value, int decimals) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os.setf(std::ios::fixed);
    os.precision(decimals);
    os << value;
    return os.str();
}

std::string FootprintReport::csv_header() { return "label,mib,ratio"; }

std::string FootprintReport::csv_row() const {
    return label + "," + format_fixed(mib(), 3) + "," + format_fixed(ratio(), 3);
}

std::string config_label(const QuantConfig& q, int enc_layers, int dec_layers) {
    return q.label() + " " + std::to_string(enc_layers) + "-" + std::to_string(dec_layers);
}

FootprintReport footprint(const ModelConfig& config, const QuantConfig& qconfig,
                          const QuantPolicy& policy) {
    qconfig.validate();
    FootprintReport r;
    r.label = config_label(qconfig, config.n_enc_layers, config.n_dec_layers);
    for (const auto& p : parameter_layout(config)) {
        const std::int64_t n = shape_numel(p.shape);
        r.parameters += n;
        const int bits = policy.bits_for(p.category, qconfig, p.name);
        if (bits == 32) {
            r.unquantized_bytes += 4 * n;
            continue;
        }
        const auto& rule = policy.rule_for(p.category, p.name);
        const std::int64_t scales =
            rule.granularity == Granularity::kPerRow && p.shape.size() >= 2 ? p.shape[0] : 1;
        const std::int64_t bytes = packed_code_bytes(n, bits) + 4 * scales;
        if (p.category == ParamCategory::kWordEmbedding) {
            r.quantized_embedding_bytes += bytes;
        } else {
            r.quantized_weight_bytes += bytes;
        }
    }
    r.baseline_bytes = 4 * r.parameters;
    return r;
}

FootprintReport footprint(const SeqModel& model, const QuantConfig& qconfig, const QuantPolicy& policy) {
    return footprint(model.config, qconfig, policy);
}

FootprintReport footprint(const ModelConfig& reference, const ModelConfig& config, const QuantConfig& qconfig,
                          const QuantPolicy& policy) {
    FootprintReport r = footprint(config, qconfig, policy);
    r.baseline_bytes = 4 * count_parameters(reference).total();
    return r;
}

}  // namespace dqs
