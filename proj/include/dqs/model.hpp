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
#include <random>
#include <string>
#include <vector>

#include "dqs/tensor.hpp"

namespace dqs {

/// Reserved token ids shared by every vocabulary in this project.
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;

struct ModelConfig {
    int vocab_size = 16;
    int d_model = 64;
    int n_heads = 4;
    int d_ff = 256;
    int n_enc_layers = 2;
    int n_dec_layers = 2;
    int max_positions = 64;
    float dropout_rate = 0.0f;

    /// Throws ConfigError naming the first offending field.
    void validate() const;
    int head_dim() const { return d_model / n_heads; }

    /// BART-base shape. Used for footprint arithmetic only.
    static ModelConfig bart_base();

    bool operator==(const ModelConfig&) const = default;
};

/// How a parameter is treated by the quantization policy.
enum class ParamCategory {
    kWeight,              // hidden-layer weight matrices
    kWordEmbedding,       // token embedding table (tied with the output projection)
    kPositionalEmbedding,
    kBias,
    kNorm,                // layer-norm gain and bias
};

const char* category_name(ParamCategory c);

struct ParamSpec {
    std::string name;
    Shape shape;
    ParamCategory category;
};

/// Every parameter of a model with this config, in canonical (construction)
/// order. Pure function of the config; allocates no tensor storage.
std::vector<ParamSpec> parameter_layout(const ModelConfig& config);

struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]
};

struct LayerNormParams {
    Tensor gain;
    Tensor bias;
};

struct AttentionParams {
    Linear q, k, v, o;
};

struct EncoderLayer {
    LayerNormParams self_attn_norm;
    AttentionParams self_attn;
    LayerNormParams ffn_norm;
    Linear fc1, fc2;
};

struct DecoderLayer {
    LayerNormParams self_attn_norm;
    AttentionParams self_attn;
    LayerNormParams cross_attn_norm;
    AttentionParams cross_attn;
    LayerNormParams ffn_norm;
    Linear fc1, fc2;
};

/// Pre-layer-norm encoder-decoder transformer with a single token embedding
/// table used for encoder input, decoder input and the output projection.
struct SeqModel {
    ModelConfig config;
    Tensor embed_tokens;   // [vocab, d_model]
    Tensor enc_positions;  // [max_positions, d_model]
    Tensor dec_positions;  // [max_positions, d_model]
    std::vector<EncoderLayer> encoder;
    std::vector<DecoderLayer> decoder;
    LayerNormParams enc_final_norm;
    LayerNormParams dec_final_norm;

    /// Deep copy; the result shares no storage with this model.
    SeqModel clone() const;
};

struct NamedParam {
    std::string name;
    Tensor tensor;
    ParamCategory category;
};

/// Parameter handles in parameter_layout() order.
std::vector<NamedParam> named_parameters(const SeqModel& model);

/// Calls `fn(name, tensor&, category)` for every parameter slot, in
/// parameter_layout() order, allowing the handle to be replaced.
void visit_parameters(SeqModel& model,
                      const std::function<void(const std::string&, Tensor&, ParamCategory)>& fn);

SeqModel init_model(const ModelConfig& config, std::uint64_t seed);

struct ParameterCounts {
    std::int64_t quantizable_weights = 0;
    std::int64_t word_embeddings = 0;
    std::int64_t excluded = 0;  // positional embeddings, biases, layer norms
    std::int64_t total() const { return quantizable_weights + word_embeddings + excluded; }
};

ParameterCounts count_parameters(const SeqModel& model);
ParameterCounts count_parameters(const ModelConfig& config);

/// Right-padded [batch, len] id matrix.
struct TokenBatch {
    std::int64_t batch = 0;
    std::int64_t len = 0;
    std::vector<int> ids;

    static TokenBatch from_sequences(const std::vector<std::vector<int>>& seqs, int pad_id);
    int at(std::int64_t b, std::int64_t t) const { return ids[static_cast<std::size_t>(b * len + t)]; }
};

struct ForwardOptions {
    bool training = false;
    /// Applied to the input of every linear projection (activation quantization).
    std::function<Tensor(const Tensor&)> activation_hook;
    /// Required when training with dropout_rate > 0.
    std::mt19937_64* rng = nullptr;
};

/// Everything one forward pass exposes to the distillation losses.
struct ForwardTrace {
    Tensor logits;                    // [batch, tgt_len, vocab]
    std::vector<Tensor> enc_attn;     // [batch, heads, src_len, src_len], pre-softmax
    std::vector<Tensor> dec_attn;     // [batch, heads, tgt_len, tgt_len], pre-softmax
    std::vector<Tensor> cross_attn;   // [batch, heads, tgt_len, src_len], pre-softmax
    std::vector<Tensor> enc_hidden;   // [batch, src_len, d_model], layer outputs
    std::vector<Tensor> dec_hidden;   // [batch, tgt_len, d_model], layer outputs
    std::vector<std::uint8_t> src_valid;  // [batch, src_len], 1 = real token
    std::vector<std::uint8_t> tgt_valid;  // [batch, tgt_len], 1 = real token
    std::int64_t batch = 0;
    std::int64_t src_len = 0;
    std::int64_t tgt_len = 0;
};

ForwardTrace forward(const SeqModel& model, const TokenBatch& src, const TokenBatch& tgt_in,
                     int pad_id, const ForwardOptions& options = {});

/// Greedy argmax decoding; ties go to the lowest token id. The returned
/// sequence includes the eos token when one is produced.
std::vector<int> greedy_decode(const SeqModel& model, const std::vector<int>& src, int bos_id,
                               int eos_id, int max_len, const ForwardOptions& options = {});

/// Batched greedy_decode with identical per-sequence results.
std::vector<std::vector<int>> greedy_decode_batch(const SeqModel& model,
                                                  const std::vector<std::vector<int>>& srcs,
                                                  int bos_id, int eos_id, int max_len,
                                                  const ForwardOptions& options = {});

}  // namespace dqs
