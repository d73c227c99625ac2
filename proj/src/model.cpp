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

#include "dqs/model.hpp"

#include <algorithm>
#include <cmath>

#include "dqs/error.hpp"
#include "dqs/ops.hpp"

namespace dqs {

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("invalid model config: " + msg); };
    if (vocab_size < 4) fail("vocab_size must be >= 4 (pad/bos/eos/unk are reserved)");
    if (d_model < 1) fail("d_model must be >= 1");
    if (n_heads < 1) fail("n_heads must be >= 1");
    if (d_model % n_heads != 0) {
        fail("n_heads (" + std::to_string(n_heads) + ") does not divide d_model (" +
             std::to_string(d_model) + ")");
    }
    if (d_ff < 1) fail("d_ff must be >= 1");
    if (n_enc_layers < 1) fail("n_enc_layers must be >= 1");
    if (n_dec_layers < 1) fail("n_dec_layers must be >= 1");
    if (max_positions < 1) fail("max_positions must be >= 1");
    if (!(dropout_rate >= 0.0f && dropout_rate < 1.0f)) fail("dropout_rate must be in [0, 1)");
}

ModelConfig ModelConfig::bart_base() {
    ModelConfig c;
    c.vocab_size = 50265;
    c.d_model = 768;
    c.n_heads = 12;
    c.d_ff = 3072;
    c.n_enc_layers = 6;
    c.n_dec_layers = 6;
    c.max_positions = 1026;
    c.dropout_rate = 0.1f;
    return c;
}

const char* category_name(ParamCategory c) {
    switch (c) {
        case ParamCategory::kWeight: return "weight";
        case ParamCategory::kWordEmbedding: return "word_embedding";
        case ParamCategory::kPositionalEmbedding: return "positional_embedding";
        case ParamCategory::kBias: return "bias";
        case ParamCategory::kNorm: return "norm";
    }
    return "?";
}

namespace {

// Single traversal shared by parameter_layout, visit_parameters and init.
// `slot(name, shape, category, tensor*)` gets a null tensor pointer when only
// the layout is wanted.
using SlotFn = std::function<void(const std::string&, const Shape&, ParamCategory, Tensor*)>;

void traverse(const ModelConfig& c, SeqModel* m, const SlotFn& slot) {
    const std::int64_t d = c.d_model;
    const std::int64_t ff = c.d_ff;
    auto linear = [&](const std::string& prefix, std::int64_t in, std::int64_t out, Linear* l) {
        slot(prefix + ".weight", {in, out}, ParamCategory::kWeight, l ? &l->weight : nullptr);
        slot(prefix + ".bias", {out}, ParamCategory::kBias, l ? &l->bias : nullptr);
    };
    auto norm = [&](const std::string& prefix, LayerNormParams* n) {
        slot(prefix + ".gain", {d}, ParamCategory::kNorm, n ? &n->gain : nullptr);
        slot(prefix + ".bias", {d}, ParamCategory::kNorm, n ? &n->bias : nullptr);
    };
    auto attention = [&](const std::string& prefix, AttentionParams* a) {
        linear(prefix + ".q", d, d, a ? &a->q : nullptr);
        linear(prefix + ".k", d, d, a ? &a->k : nullptr);
        linear(prefix + ".v", d, d, a ? &a->v : nullptr);
        linear(prefix + ".o", d, d, a ? &a->o : nullptr);
    };

    slot("embed_tokens", {c.vocab_size, d}, ParamCategory::kWordEmbedding,
         m ? &m->embed_tokens : nullptr);
    slot("encoder.positions", {c.max_positions, d}, ParamCategory::kPositionalEmbedding,
         m ? &m->enc_positions : nullptr);
    slot("decoder.positions", {c.max_positions, d}, ParamCategory::kPositionalEmbedding,
         m ? &m->dec_positions : nullptr);
    for (int i = 0; i < c.n_enc_layers; ++i) {
        const std::string p = "encoder.layers." + std::to_string(i);
        EncoderLayer* l = m ? &m->encoder[static_cast<std::size_t>(i)] : nullptr;
        norm(p + ".self_attn_norm", l ? &l->self_attn_norm : nullptr);
        attention(p + ".self_attn", l ? &l->self_attn : nullptr);
        norm(p + ".ffn_norm", l ? &l->ffn_norm : nullptr);
        linear(p + ".fc1", d, ff, l ? &l->fc1 : nullptr);
        linear(p + ".fc2", ff, d, l ? &l->fc2 : nullptr);
    }
    norm("encoder.final_norm", m ? &m->enc_final_norm : nullptr);
    for (int i = 0; i < c.n_dec_layers; ++i) {
        const std::string p = "decoder.layers." + std::to_string(i);
        DecoderLayer* l = m ? &m->decoder[static_cast<std::size_t>(i)] : nullptr;
        norm(p + ".self_attn_norm", l ? &l->self_attn_norm : nullptr);
        attention(p + ".self_attn", l ? &l->self_attn : nullptr);
        norm(p + ".cross_attn_norm", l ? &l->cross_attn_norm : nullptr);
        attention(p + ".cross_attn", l ? &l->cross_attn : nullptr);
        norm(p + ".ffn_norm", l ? &l->ffn_norm : nullptr);
        linear(p + ".fc1", d, ff, l ? &l->fc1 : nullptr);
        linear(p + ".fc2", ff, d, l ? &l->fc2 : nullptr);
    }
    norm("decoder.final_norm", m ? &m->dec_final_norm : nullptr);
}

void check_layer_counts(const SeqModel& m) {
    if (static_cast<int>(m.encoder.size()) != m.config.n_enc_layers ||
        static_cast<int>(m.decoder.size()) != m.config.n_dec_layers) {
        throw ContractError("model layer lists do not match its config");
    }
}

}  // namespace

std::vector<ParamSpec> parameter_layout(const ModelConfig& config) {
    config.validate();
    std::vector<ParamSpec> out;
    traverse(config, nullptr, [&](const std::string& name, const Shape& shape, ParamCategory c,
                                  Tensor*) { out.push_back({name, shape, c}); });
    return out;
}

void visit_parameters(SeqModel& model,
                      const std::function<void(const std::string&, Tensor&, ParamCategory)>& fn) {
    check_layer_counts(model);
    traverse(model.config, &model,
             [&](const std::string& name, const Shape&, ParamCategory c, Tensor* t) {
                 fn(name, *t, c);
             });
}

std::vector<NamedParam> named_parameters(const SeqModel& model) {
    std::vector<NamedParam> out;
    // Handles alias storage, so visiting a shallow copy exposes the originals.
    SeqModel view = model;
    visit_parameters(view, [&](const std::string& name, Tensor& t, ParamCategory c) {
        out.push_back({name, t, c});
    });
    return out;
}

SeqModel SeqModel::clone() const {
    SeqModel copy = *this;
    visit_parameters(copy, [](const std::string&, Tensor& t, ParamCategory) { t = t.clone(); });
    return copy;
}

SeqModel init_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    SeqModel m;
    m.config = config;
    m.encoder.resize(static_cast<std::size_t>(config.n_enc_layers));
    m.decoder.resize(static_cast<std::size_t>(config.n_dec_layers));
    std::mt19937_64 rng(seed);
    traverse(config, &m, [&](const std::string& name, const Shape& shape, ParamCategory c,
                             Tensor* t) {
        const auto n = static_cast<std::size_t>(shape_numel(shape));
        std::vector<float> data(n, 0.0f);
        if (c == ParamCategory::kNorm && name.ends_with(".gain")) {
            std::fill(data.begin(), data.end(), 1.0f);
        } else if (c == ParamCategory::kWeight || c == ParamCategory::kWordEmbedding ||
                   c == ParamCategory::kPositionalEmbedding) {
            // Matrices: N(0, 1/fan_in) for projections, N(0, 1/d_model) for tables.
            const double fan_in = c == ParamCategory::kWeight ? static_cast<double>(shape[0])
                                                              : static_cast<double>(shape[1]);
            std::normal_distribution<float> dist(0.0f, static_cast<float>(1.0 / std::sqrt(fan_in)));
            for (auto& x : data) x = dist(rng);
        }
        *t = Tensor(shape, std::move(data), true);
    });
    return m;
}

ParameterCounts count_parameters(const SeqModel& model) {
    ParameterCounts counts;
    for (const auto& p : named_parameters(model)) {
        switch (p.category) {
            case ParamCategory::kWeight: counts.quantizable_weights += p.tensor.numel(); break;
            case ParamCategory::kWordEmbedding: counts.word_embeddings += p.tensor.numel(); break;
            default: counts.excluded += p.tensor.numel(); break;
        }
    }
    return counts;
}

ParameterCounts count_parameters(const ModelConfig& config) {
    ParameterCounts counts;
    for (const auto& p : parameter_layout(config)) {
        const auto n = shape_numel(p.shape);
        switch (p.category) {
            case ParamCategory::kWeight: counts.quantizable_weights += n; break;
            case ParamCategory::kWordEmbedding: counts.word_embeddings += n; break;
            default: counts.excluded += n; break;
        }
    }
    return counts;
}

TokenBatch TokenBatch::from_sequences(const std::vector<std::vector<int>>& seqs, int pad_id) {
    TokenBatch b;
    b.batch = static_cast<std::int64_t>(seqs.size());
    for (const auto& s : seqs) b.len = std::max<std::int64_t>(b.len, static_cast<std::int64_t>(s.size()));
    b.ids.assign(static_cast<std::size_t>(b.batch * b.len), pad_id);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        std::copy(seqs[i].begin(), seqs[i].end(),
                  b.ids.begin() + static_cast<std::ptrdiff_t>(i) * b.len);
    }
    return b;
}

namespace {

struct Context {
    const SeqModel& model;
    const ForwardOptions& options;
    ForwardTrace* trace;

    Tensor act(const Tensor& x) const {
        return options.activation_hook ? options.activation_hook(x) : x;
    }
    Tensor linear(const Tensor& x, const Linear& l) const {
        return ops::add_bias(ops::matmul(act(x), l.weight), l.bias);
    }
    Tensor drop(const Tensor& x) const {
        const float rate = model.config.dropout_rate;
        if (!options.training || rate == 0.0f) return x;
        if (!options.rng) throw ContractError("training forward with dropout needs an rng");
        return ops::dropout(x, rate, *options.rng);
    }
    Tensor norm(const Tensor& x, const LayerNormParams& n) const {
        return ops::layer_norm(x, n.gain, n.bias);
    }
};

// [b, len, d] -> [b, heads, len, head_dim]
Tensor split_heads(const Tensor& x, std::int64_t b, std::int64_t len, std::int64_t heads,
                   std::int64_t hd) {
    return ops::permute(ops::reshape(x, {b, len, heads, hd}), {0, 2, 1, 3});
}

// `masked` is [b, q_len, k_len]; it is broadcast over heads. Returns the
// attention output and the masked pre-softmax scores.
std::pair<Tensor, Tensor> attention(const Context& ctx, const AttentionParams& p,
                                    const Tensor& query_in, const Tensor& kv_in,
                                    const std::vector<std::uint8_t>& masked) {
    const auto& c = ctx.model.config;
    const std::int64_t b = query_in.dim(0);
    const std::int64_t tq = query_in.dim(1);
    const std::int64_t tk = kv_in.dim(1);
    const std::int64_t h = c.n_heads;
    const std::int64_t hd = c.head_dim();

    Tensor q = split_heads(ctx.linear(query_in, p.q), b, tq, h, hd);
    Tensor k = split_heads(ctx.linear(kv_in, p.k), b, tk, h, hd);
    Tensor v = split_heads(ctx.linear(kv_in, p.v), b, tk, h, hd);

    Tensor scores = ops::scale(ops::bmm(q, k, true), 1.0f / std::sqrt(static_cast<float>(hd)));
    std::vector<std::uint8_t> full(static_cast<std::size_t>(b * h * tq * tk));
    for (std::int64_t bi = 0; bi < b; ++bi) {
        for (std::int64_t hi = 0; hi < h; ++hi) {
            std::copy_n(masked.begin() + bi * tq * tk, tq * tk,
                        full.begin() + (bi * h + hi) * tq * tk);
        }
    }
    scores = ops::masked_fill(scores, full, ops::kMaskValue);
    Tensor probs = ops::softmax(scores, -1);
    Tensor out = ops::bmm(probs, v);
    out = ops::reshape(ops::permute(out, {0, 2, 1, 3}), {b, tq, c.d_model});
    return {ctx.linear(out, p.o), scores};
}

Tensor feed_forward(const Context& ctx, const Linear& fc1, const Linear& fc2, const Tensor& x) {
    return ctx.linear(ops::gelu(ctx.linear(x, fc1)), fc2);
}

Tensor embed(const Context& ctx, const TokenBatch& ids, const Tensor& positions) {
    const auto& c = ctx.model.config;
    std::vector<int> pos(ids.ids.size());
    for (std::int64_t bi = 0; bi < ids.batch; ++bi) {
        for (std::int64_t t = 0; t < ids.len; ++t) pos[static_cast<std::size_t>(bi * ids.len + t)] = static_cast<int>(t);
    }
    Tensor x = ops::add(ops::embedding(ctx.model.embed_tokens, ids.ids), ops::embedding(positions, pos));
    return ctx.drop(ops::reshape(x, {ids.batch, ids.len, c.d_model}));
}

void check_ids(const ModelConfig& c, const TokenBatch& ids, const char* what) {
    if (ids.len > c.max_positions) {
        throw IndexError(std::string(what) + " length " + std::to_string(ids.len) +
                         " exceeds max_positions " + std::to_string(c.max_positions));
    }
    if (static_cast<std::int64_t>(ids.ids.size()) != ids.batch * ids.len) {
        throw DimensionError(std::string(what) + " batch is not a [batch, len] matrix");
    }
    for (int id : ids.ids) {
        if (id < 0 || id >= c.vocab_size) {
            throw IndexError(std::string(what) + " id " + std::to_string(id) + " outside [0, " +
                             std::to_string(c.vocab_size) + ")");
        }
    }
}

std::vector<std::uint8_t> valid_mask(const TokenBatch& ids, int pad_id) {
    std::vector<std::uint8_t> v(ids.ids.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = ids.ids[i] != pad_id ? 1 : 0;
    return v;
}

// Encoder output after the final layer norm.
Tensor encode(const Context& ctx, const TokenBatch& src, const std::vector<std::uint8_t>& src_valid) {
    const std::int64_t b = src.batch, s = src.len;
    std::vector<std::uint8_t> masked(static_cast<std::size_t>(b * s * s));
    for (std::int64_t bi = 0; bi < b; ++bi) {
        for (std::int64_t i = 0; i < s; ++i) {
            for (std::int64_t j = 0; j < s; ++j) {
                masked[static_cast<std::size_t>((bi * s + i) * s + j)] =
                    src_valid[static_cast<std::size_t>(bi * s + j)] ? 0 : 1;
            }
        }
    }
    Tensor x = embed(ctx, src, ctx.model.enc_positions);
    for (const auto& layer : ctx.model.encoder) {
        Tensor h = ctx.norm(x, layer.self_attn_norm);
        auto [a, scores] = attention(ctx, layer.self_attn, h, h, masked);
        x = ops::add(x, ctx.drop(a));
        x = ops::add(x, ctx.drop(feed_forward(ctx, layer.fc1, layer.fc2, ctx.norm(x, layer.ffn_norm))));
        if (ctx.trace) {
            ctx.trace->enc_attn.push_back(scores);
            ctx.trace->enc_hidden.push_back(x);
        }
    }
    return ctx.norm(x, ctx.model.enc_final_norm);
}

Tensor decode(const Context& ctx, const Tensor& memory, const std::vector<std::uint8_t>& src_valid,
              std::int64_t src_len, const TokenBatch& tgt, const std::vector<std::uint8_t>& tgt_valid) {
    const std::int64_t b = tgt.batch, t = tgt.len, s = src_len;
    std::vector<std::uint8_t> self_masked(static_cast<std::size_t>(b * t * t));
    std::vector<std::uint8_t> cross_masked(static_cast<std::size_t>(b * t * s));
    for (std::int64_t bi = 0; bi < b; ++bi) {
        for (std::int64_t i = 0; i < t; ++i) {
            for (std::int64_t j = 0; j < t; ++j) {
                const bool ok = j <= i && tgt_valid[static_cast<std::size_t>(bi * t + j)];
                self_masked[static_cast<std::size_t>((bi * t + i) * t + j)] = ok ? 0 : 1;
            }
            for (std::int64_t j = 0; j < s; ++j) {
                cross_masked[static_cast<std::size_t>((bi * t + i) * s + j)] =
                    src_valid[static_cast<std::size_t>(bi * s + j)] ? 0 : 1;
            }
        }
    }
    Tensor y = embed(ctx, tgt, ctx.model.dec_positions);
    for (const auto& layer : ctx.model.decoder) {
        Tensor h = ctx.norm(y, layer.self_attn_norm);
        auto [sa, self_scores] = attention(ctx, layer.self_attn, h, h, self_masked);
        y = ops::add(y, ctx.drop(sa));
        auto [ca, cross_scores] =
            attention(ctx, layer.cross_attn, ctx.norm(y, layer.cross_attn_norm), memory, cross_masked);
        y = ops::add(y, ctx.drop(ca));
        y = ops::add(y, ctx.drop(feed_forward(ctx, layer.fc1, layer.fc2, ctx.norm(y, layer.ffn_norm))));
        if (ctx.trace) {
            ctx.trace->dec_attn.push_back(self_scores);
            ctx.trace->cross_attn.push_back(cross_scores);
            ctx.trace->dec_hidden.push_back(y);
        }
    }
    y = ctx.norm(y, ctx.model.dec_final_norm);
    return ops::matmul(ctx.act(y), ctx.model.embed_tokens, true);
}

}  // namespace

ForwardTrace forward(const SeqModel& model, const TokenBatch& src, const TokenBatch& tgt_in,
                     int pad_id, const ForwardOptions& options) {
    check_layer_counts(model);
    check_ids(model.config, src, "source");
    check_ids(model.config, tgt_in, "target");
    if (src.batch != tgt_in.batch) {
        throw DimensionError("source batch " + std::to_string(src.batch) +
                             " != target batch " + std::to_string(tgt_in.batch));
    }
    ForwardTrace trace;
    trace.batch = src.batch;
    trace.src_len = src.len;
    trace.tgt_len = tgt_in.len;
    trace.src_valid = valid_mask(src, pad_id);
    trace.tgt_valid = valid_mask(tgt_in, pad_id);
    Context ctx{model, options, &trace};
    Tensor memory = encode(ctx, src, trace.src_valid);
    trace.logits = decode(ctx, memory, trace.src_valid, src.len, tgt_in, trace.tgt_valid);
    return trace;
}

namespace {

int argmax_lowest(std::span<const float> row) {
    int best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
        if (row[j] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
    }
    return best;
}

}  // namespace

std::vector<std::vector<int>> greedy_decode_batch(const SeqModel& model,
                                                  const std::vector<std::vector<int>>& srcs,
                                                  int bos_id, int eos_id, int max_len,
                                                  const ForwardOptions& options) {
    check_layer_counts(model);
    const auto n = srcs.size();
    std::vector<std::vector<int>> out(n);
    if (max_len <= 0 || n == 0) return out;
    if (max_len > model.config.max_positions) {
        throw IndexError("max_len " + std::to_string(max_len) + " exceeds max_positions " +
                         std::to_string(model.config.max_positions));
    }
    TokenBatch src = TokenBatch::from_sequences(srcs, kPadId);
    check_ids(model.config, src, "source");

    ForwardOptions infer = options;
    infer.training = false;
    Context ctx{model, infer, nullptr};
    const auto src_valid = valid_mask(src, kPadId);
    Tensor memory = encode(ctx, src, src_valid);

    const std::int64_t vocab = model.config.vocab_size;
    std::vector<std::vector<int>> prefixes(n, std::vector<int>{bos_id});
    std::vector<bool> done(n, false);
    for (int step = 0; step < max_len; ++step) {
        TokenBatch tgt = TokenBatch::from_sequences(prefixes, kPadId);
        // Finished rows keep decoding on pad; their outputs are discarded.
        Tensor logits = decode(ctx, memory, src_valid, src.len, tgt, valid_mask(tgt, kPadId));
        auto data = logits.data();
        bool all_done = true;
        for (std::size_t i = 0; i < n; ++i) {
            if (done[i]) {
                prefixes[i].push_back(kPadId);
                continue;
            }
            const auto row = data.subspan(
                static_cast<std::size_t>((static_cast<std::int64_t>(i) * tgt.len + step) * vocab),
                static_cast<std::size_t>(vocab));
            const int next = argmax_lowest(row);
            out[i].push_back(next);
            prefixes[i].push_back(next);
            if (next == eos_id) done[i] = true;
            all_done = all_done && done[i];
        }
        if (all_done) break;
    }
    return out;
}

std::vector<int> greedy_decode(const SeqModel& model, const std::vector<int>& src, int bos_id,
                               int eos_id, int max_len, const ForwardOptions& options) {
    return greedy_decode_batch(model, {src}, bos_id, eos_id, max_len, options).front();
}

}  // namespace dqs
