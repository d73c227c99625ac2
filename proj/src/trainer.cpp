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


#include "dqs/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "json.hpp"

#include "dqs/error.hpp"
#include "dqs/metrics.hpp"

namespace dqs {

const char* mode_name(TrainMode mode) {
    switch (mode) {
        case TrainMode::kDq: return "dq";
        case TrainMode::kQuantOnly: return "quant_only";
        case TrainMode::kDistillOnly: return "distill_only";
        case TrainMode::kSf: return "sf";
        case TrainMode::kDirectQuant: return "direct_quant";
        case TrainMode::kTeacher: return "teacher";
    }
    return "?";
}

TrainMode parse_mode(const std::string& name) {
    for (TrainMode m : {TrainMode::kDq, TrainMode::kQuantOnly, TrainMode::kDistillOnly, TrainMode::kSf,
                        TrainMode::kDirectQuant, TrainMode::kTeacher}) {
        if (name == mode_name(m)) return m;
    }
    throw ConfigError("unknown mode '" + name +
                      "' (expected dq, quant_only, distill_only, sf, direct_quant or teacher)");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be positive, got " + std::to_string(epochs));
    if (batch_size < 1) throw ConfigError("batch_size must be positive, got " + std::to_string(batch_size));
    if (!(learning_rate > 0.0f)) throw ConfigError("learning_rate must be positive");
    if (!(warmup_fraction >= 0.0f && warmup_fraction < 1.0f)) {
        throw ConfigError("warmup_fraction must lie in [0, 1)");
    }
    if (clip_norm < 0.0f) throw ConfigError("clip_norm must be non-negative");
    if (eval_batch_size < 1) throw ConfigError("eval_batch_size must be positive");
    EvalReport{}.metric(eval_metric);
}

float lr_schedule(std::int64_t step, std::int64_t total_steps, float base_lr, float warmup_fraction) {
    if (total_steps <= 0 || step < 0 || step > total_steps) {
        throw ContractError("lr_schedule: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(total_steps) + "]");
    }
    const double s = static_cast<double>(step);
    const double total = static_cast<double>(total_steps);
    const double warm = static_cast<double>(warmup_fraction) * total;
    if (s < warm) return static_cast<float>(base_lr * s / warm);
    return static_cast<float>(base_lr * (total - s) / (total - warm));
}

OptimizerState OptimizerState::for_model(const SeqModel& model) {
    OptimizerState s;
    for (const auto& p : named_parameters(model)) {
        s.m.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0f);
        s.v.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0f);
    }
    return s;
}

void adam_update(SeqModel& model, OptimizerState& state, float lr, const AdamParams& params) {
    auto named = named_parameters(model);
    if (named.size() != state.m.size()) {
        throw ContractError("optimizer state has " + std::to_string(state.m.size()) + " slots for " +
                            std::to_string(named.size()) + " parameters");
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(static_cast<double>(params.beta1), static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(static_cast<double>(params.beta2), static_cast<double>(state.step));
    for (std::size_t i = 0; i < named.size(); ++i) {
        Tensor& t = named[i].tensor;
        if (!t.has_grad()) continue;
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (m.size() != static_cast<std::size_t>(t.numel())) {
            throw ContractError("optimizer state shape mismatch for " + named[i].name);
        }
        const auto g = t.grad();
        auto w = t.mutable_data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = params.beta1 * m[j] + (1.0f - params.beta1) * g[j];
            v[j] = params.beta2 * v[j] + (1.0f - params.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + params.eps));
        }
        t.zero_grad();
    }
}

double clip_grad_norm(SeqModel& model, float max_norm) {
    auto named = named_parameters(model);
    double sq = 0.0;
    for (const auto& p : named) {
        for (float g : p.tensor.grad()) sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0f && norm > max_norm) {
        const auto factor = static_cast<float>(max_norm / norm);
        for (auto& p : named) {
            if (!p.tensor.has_grad()) continue;
            for (float& g : std::span<float>(p.tensor.impl()->grad)) g *= factor;
        }
    }
    return norm;
}

TrainBatch TrainBatch::make(const std::vector<Example>& examples, std::span<const std::size_t> indices) {
    std::vector<std::vector<int>> srcs, ins, outs;
    for (std::size_t i : indices) {
        const Example& e = examples.at(i);
        if (e.tgt.empty()) throw ContractError("example with an empty target");
        srcs.push_back(e.src);
        std::vector<int> in{kBosId};
        in.insert(in.end(), e.tgt.begin(), e.tgt.end() - 1);
        ins.push_back(std::move(in));
        outs.push_back(e.tgt);
    }
    TrainBatch b;
    b.src = TokenBatch::from_sequences(srcs, kPadId);
    b.tgt_in = TokenBatch::from_sequences(ins, kPadId);
    b.targets = TokenBatch::from_sequences(outs, kPadId).ids;
    return b;
}

namespace {

bool finite(const Tensor& t) {
    for (float x : t.data()) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void check_loss_terms(const LossTerms& terms) {
    const std::pair<const char*, const Tensor*> named[] = {
        {"l_data", &terms.data}, {"l_logits", &terms.logits}, {"l_ea", &terms.ea}, {"l_da", &terms.da},
        {"l_ca", &terms.ca},     {"l_ehs", &terms.ehs},       {"l_dhs", &terms.dhs}};
    for (const auto& [name, t] : named) {
        if (!finite(*t)) throw NumericError(std::string("non-finite loss term ") + name);
    }
}

void clear_grads(SeqModel& model) {
    for (auto& p : named_parameters(model)) p.tensor.zero_grad();
}

}  // namespace

LossBreakdown distillation_aware_step(SeqModel& master, const SeqModel* teacher, const TrainBatch& batch,
                                      const QuantConfig& qconfig, const LayerMap& map, OptimizerState& state,
                                      float lr, const StepOptions& options) {
    qconfig.validate();
    const bool distill = options.distill && teacher != nullptr;

    // Teacher first, with no tape active, so nothing about it is recorded.
    ForwardTrace teacher_trace;
    if (distill) teacher_trace = forward(*teacher, batch.src, batch.tgt_in, kPadId);

    LossBreakdown values;
    {
        Tape tape;
        Tape::Scope scope(tape);
        ForwardOptions fo;
        fo.training = true;
        fo.rng = options.rng;
        fo = activation_options(qconfig, fo);
        const QuantizedModel q = quantize_model(master, qconfig);
        const ForwardTrace student = forward(q.view, batch.src, batch.tgt_in, kPadId, fo);
        const LossTerms terms = distill
                                    ? total_loss(student, teacher_trace, batch.targets, map, kPadId)
                                    : task_loss(student, batch.targets, kPadId);
        check_loss_terms(terms);
        values = terms.values();
        tape.backward(terms.total);
    }

    for (const auto& p : named_parameters(master)) {
        for (float g : p.tensor.grad()) {
            if (!std::isfinite(g)) {
                clear_grads(master);
                throw NumericError("non-finite gradient in " + p.name);
            }
        }
    }
    if (options.clip_norm > 0.0f) clip_grad_norm(master, options.clip_norm);
    adam_update(master, state, lr, options.adam);
    return values;
}

double EvalReport::metric(const std::string& name) const {
    if (name == "rouge_l") return rouge_l;
    if (name == "rouge_1") return rouge_1;
    if (name == "rouge_2") return rouge_2;
    if (name == "token_acc") return token_acc;
    if (name == "seq_acc") return seq_acc;
    throw ConfigError("unknown metric '" + name + "' (expected rouge_l, rouge_1, rouge_2, token_acc or seq_acc)");
}

namespace {

// Sorting first makes the result a function of the multiset of scores, so two
// models with the same per-example scores in a different order tie exactly.
double order_free_mean(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

EvalReport decode_and_score(const SeqModel& m, const Dataset& data, const ForwardOptions& fo, int batch_size) {
    if (data.empty()) throw ContractError("evaluate: empty dataset");
    if (data.vocab_size != m.config.vocab_size) {
        throw ConfigError("dataset vocab " + std::to_string(data.vocab_size) + " != model vocab " +
                          std::to_string(m.config.vocab_size));
    }
    if (batch_size < 1) throw ContractError("evaluate: batch_size must be positive");
    const int max_len = std::min(data.max_target_len() + 1, m.config.max_positions);
    // Activation scales are taken over the whole batch, so with quantized
    // activations each example is decoded alone; otherwise its output would
    // depend on which examples share its batch.
    if (fo.activation_hook) batch_size = 1;

    std::vector<std::vector<int>> preds, targets;
    for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<std::vector<int>> srcs;
        for (std::size_t i = start; i < end; ++i) {
            srcs.push_back(data.examples[i].src);
            targets.push_back(data.examples[i].tgt);
        }
        auto out = greedy_decode_batch(m, srcs, kBosId, kEosId, max_len, fo);
        preds.insert(preds.end(), out.begin(), out.end());
    }

    EvalReport r;
    r.examples = static_cast<std::int64_t>(data.size());
    const AccuracyReport acc = accuracy(preds, targets, kPadId);
    r.token_acc = acc.token_acc;
    r.seq_acc = acc.seq_acc;
    std::vector<double> r1, r2, rl;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const TokenList p = split_tokens(detokenize(preds[i]));
        const TokenList t = split_tokens(detokenize(targets[i]));
        const RougeScores s = rouge(p, t);
        r1.push_back(s.r1);
        r2.push_back(s.r2);
        rl.push_back(s.rl);
    }
    r.rouge_1 = order_free_mean(r1);
    r.rouge_2 = order_free_mean(r2);
    r.rouge_l = order_free_mean(rl);
    return r;
}

}  // namespace

EvalReport evaluate(const SeqModel& model, const Dataset& data, const std::optional<QuantConfig>& qconfig,
                    int batch_size) {
    if (qconfig && !qconfig->full_precision()) {
        const QuantizedModel q = quantize_model(model, *qconfig);
        return decode_and_score(q.view, data, activation_options(*qconfig), batch_size);
    }
    return decode_and_score(model, data, {}, batch_size);
}

EvalReport evaluate_view(const SeqModel& view, const Dataset& data, int a_bits, int batch_size) {
    return decode_and_score(view, data, activation_options({32, 32, a_bits}), batch_size);
}

const EvalRecord* CheckpointMeta::best() const {
    if (best_index < 0 || static_cast<std::size_t>(best_index) >= history.size()) return nullptr;
    return &history[static_cast<std::size_t>(best_index)];
}

namespace {

bool depth_matches(const DistillConfig& d, const ModelConfig& c) {
    return d.enc_layers == c.n_enc_layers && d.dec_layers == c.n_dec_layers;
}

void write_log(std::ostream& os, int epoch, const StepRecord& last, const LossBreakdown& mean,
               const EvalReport& dev) {
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["step"] = last.step;
    j["lr"] = last.lr;
    j["l_logits"] = mean.l_logits;
    j["l_ea"] = mean.l_ea;
    j["l_da"] = mean.l_da;
    j["l_ca"] = mean.l_ca;
    j["l_ehs"] = mean.l_ehs;
    j["l_dhs"] = mean.l_dhs;
    j["l_data"] = mean.l_data;
    j["l_dist"] = mean.l_dist();
    j["l_total"] = mean.l_total();
    j["dev_token_acc"] = dev.token_acc;
    j["dev_seq_acc"] = dev.seq_acc;
    j["dev_rouge_1"] = dev.rouge_1;
    j["dev_rouge_2"] = dev.rouge_2;
    j["dev_rouge_l"] = dev.rouge_l;
    os << j.dump() << '\n';
}

LossBreakdown mean_of(std::span<const StepRecord> steps) {
    double acc[7] = {};
    for (const auto& s : steps) {
        const float v[7] = {s.loss.l_logits, s.loss.l_ea, s.loss.l_da, s.loss.l_ca,
                            s.loss.l_ehs, s.loss.l_dhs, s.loss.l_data};
        for (int i = 0; i < 7; ++i) acc[i] += v[i];
    }
    const double n = steps.empty() ? 1.0 : static_cast<double>(steps.size());
    LossBreakdown b;
    b.l_logits = static_cast<float>(acc[0] / n);
    b.l_ea = static_cast<float>(acc[1] / n);
    b.l_da = static_cast<float>(acc[2] / n);
    b.l_ca = static_cast<float>(acc[3] / n);
    b.l_ehs = static_cast<float>(acc[4] / n);
    b.l_dhs = static_cast<float>(acc[5] / n);
    b.l_data = static_cast<float>(acc[6] / n);
    return b;
}

}  // namespace

TrainResult train(const SeqModel* teacher, const TrainSetup& setup, const Dataset& train_data,
                  const Dataset& dev_data, std::ostream* log) {
    const TrainConfig& tc = setup.train;
    tc.validate();
    setup.quant.validate();
    const TrainMode mode = tc.mode;

    TrainResult result;
    result.meta.quant = setup.quant;
    result.meta.train = tc;

    bool distill = true;
    if (mode == TrainMode::kTeacher) {
        if (!setup.quant.full_precision()) {
            throw ConfigError("mode teacher trains in full precision; got " + setup.quant.label());
        }
        setup.model.validate();
        result.model = init_model(setup.model, tc.seed);
        result.map = LayerMap::identity(setup.model);
        distill = false;
    } else {
        if (teacher == nullptr) {
            throw ConfigError(std::string("mode ") + mode_name(mode) + " requires a teacher model");
        }
        DistillConfig dc = setup.distill;
        if (dc.enc_layers == 0) dc.enc_layers = teacher->config.n_enc_layers;
        if (dc.dec_layers == 0) dc.dec_layers = teacher->config.n_dec_layers;
        if ((mode == TrainMode::kQuantOnly || mode == TrainMode::kDirectQuant) &&
            !depth_matches(dc, teacher->config)) {
            throw ConfigError(std::string("mode ") + mode_name(mode) + " keeps the teacher depth " +
                              std::to_string(teacher->config.n_enc_layers) + "-" +
                              std::to_string(teacher->config.n_dec_layers));
        }
        if (mode == TrainMode::kDistillOnly && !setup.quant.full_precision()) {
            throw ConfigError("mode distill_only is full precision; got " + setup.quant.label());
        }
        StudentInit init = init_student(*teacher, dc);
        result.model = std::move(init.student);
        result.map = std::move(init.map);
        if (mode == TrainMode::kQuantOnly && !(result.map == LayerMap::identity(teacher->config))) {
            throw ContractError("mode quant_only requires the identity layer map");
        }
        distill = mode != TrainMode::kSf;
    }
    result.meta.model = result.model.config;
    result.meta.distill = {result.model.config.n_enc_layers, result.model.config.n_dec_layers};
    if (train_data.vocab_size != result.model.config.vocab_size ||
        dev_data.vocab_size != result.model.config.vocab_size) {
        throw ConfigError("dataset vocab does not match model vocab " +
                          std::to_string(result.model.config.vocab_size));
    }

    const std::optional<QuantConfig> eval_q =
        setup.quant.full_precision() ? std::nullopt : std::optional<QuantConfig>(setup.quant);

    if (mode == TrainMode::kDirectQuant) {
        result.meta.history.push_back({0, 0, evaluate(result.model, dev_data, eval_q, tc.eval_batch_size)});
        result.meta.best_index = 0;
        return result;
    }
    if (train_data.empty()) throw ConfigError("empty training set");

    std::mt19937_64 rng(tc.seed);
    OptimizerState state = OptimizerState::for_model(result.model);
    const std::size_t n = train_data.size();
    const auto bs = static_cast<std::size_t>(tc.batch_size);
    const std::int64_t per_epoch = static_cast<std::int64_t>((n + bs - 1) / bs);
    const std::int64_t total = per_epoch * tc.epochs;

    StepOptions so;
    so.distill = distill;
    so.clip_norm = tc.clip_norm;
    so.rng = &rng;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    SeqModel best;
    double best_value = -1.0;
    std::int64_t step = 0;
    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t epoch_start = result.steps.size();
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t end = std::min(n, start + bs);
            const TrainBatch batch =
                TrainBatch::make(train_data.examples, std::span<const std::size_t>(order).subspan(start, end - start));
            // Offset by one so neither the first nor the last update runs at zero rate.
            const float lr = lr_schedule(step + 1, total + 1, tc.learning_rate, tc.warmup_fraction);
            const LossBreakdown loss = distillation_aware_step(
                result.model, distill ? teacher : nullptr, batch, setup.quant, result.map, state, lr, so);
            ++step;
            result.steps.push_back({step, lr, loss});
        }
        const EvalReport dev = evaluate(result.model, dev_data, eval_q, tc.eval_batch_size);
        result.meta.history.push_back({epoch, step, dev});
        const double value = dev.metric(tc.eval_metric);
        if (value > best_value) {
            best_value = value;
            best = result.model.clone();
            result.meta.best_index = static_cast<int>(result.meta.history.size()) - 1;
        }
        if (log != nullptr) {
            write_log(*log, epoch, result.steps.back(),
                      mean_of(std::span<const StepRecord>(result.steps).subspan(epoch_start)), dev);
        }
    }
    result.meta.step = step;
    result.model = std::move(best);
    return result;
}

}  // namespace dqs
