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
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dqs/distill.hpp"
#include "dqs/model.hpp"
#include "dqs/quant.hpp"
#include "dqs/tasks.hpp"

namespace dqs {

enum class TrainMode {
    kDq,           // distillation-aware quantization of a (possibly shallower) student
    kQuantOnly,    // same depth as the teacher, quantized, teacher-guided
    kDistillOnly,  // shallower student, full precision
    kSf,           // shrink and finetune: layer copy, then task loss only
    kDirectQuant,  // quantize the teacher, no training
    kTeacher,      // task-loss pretraining from scratch
};

const char* mode_name(TrainMode mode);
TrainMode parse_mode(const std::string& name);

struct TrainConfig {
    TrainMode mode = TrainMode::kDq;
    int epochs = 20;
    int batch_size = 32;
    float learning_rate = 3e-4f;
    float warmup_fraction = 0.05f;
    std::uint64_t seed = 0;
    std::string eval_metric = "rouge_l";  // or token_acc, seq_acc, rouge_1, rouge_2
    float clip_norm = 1.0f;               // 0 disables clipping
    int eval_batch_size = 64;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// Linear warmup from 0 to base_lr over the first warmup_fraction of steps,
/// then linear decay to 0 at total_steps.
float lr_schedule(std::int64_t step, std::int64_t total_steps, float base_lr, float warmup_fraction);

/// Adam moments for every parameter of one model, in named_parameters order.
struct OptimizerState {
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;
    std::int64_t step = 0;

    static OptimizerState for_model(const SeqModel& model);
};

struct AdamParams {
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

/// One Adam update of every parameter from its accumulated gradient.
/// Parameters without a gradient are left untouched. Gradients are cleared.
void adam_update(SeqModel& model, OptimizerState& state, float lr, const AdamParams& params = {});

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(SeqModel& model, float max_norm);

/// Right-padded encoder input, decoder input ([bos] + target minus its last
/// token) and flat prediction targets for a set of examples.
struct TrainBatch {
    TokenBatch src;
    TokenBatch tgt_in;
    std::vector<int> targets;  // [batch * tgt_len], pad where tgt_in is pad

    static TrainBatch make(const std::vector<Example>& examples, std::span<const std::size_t> indices);
};

struct StepOptions {
    bool distill = true;
    float clip_norm = 1.0f;
    AdamParams adam;
    std::mt19937_64* rng = nullptr;  // dropout
};

/// One distillation-aware step: build the quantized view of `master`, run it
/// with activation quantization, run `teacher` (if any) in inference mode
/// without activation quantization, backpropagate l_total through the
/// straight-through quantizers and update `master`. With `teacher` null or
/// options.distill false only the task loss is used.
/// Throws NumericError naming the first non-finite loss term or gradient;
/// the master is not modified in that case.
LossBreakdown distillation_aware_step(SeqModel& master, const SeqModel* teacher, const TrainBatch& batch,
                                      const QuantConfig& qconfig, const LayerMap& map, OptimizerState& state,
                                      float lr, const StepOptions& options = {});

struct EvalReport {
    std::int64_t examples = 0;
    double token_acc = 0.0;
    double seq_acc = 0.0;
    double rouge_1 = 0.0;
    double rouge_2 = 0.0;
    double rouge_l = 0.0;

    /// Value by metric name; throws ConfigError on an unknown name.
    double metric(const std::string& name) const;
};

/// Greedy-decodes every example (through the quantized view when `qconfig`
/// is given) and scores it. ROUGE is averaged over examples on detokenized
/// strings. With quantized activations every example is decoded on its own,
/// and per-example scores are averaged in sorted order, so the report does
/// not depend on the order of the dataset. Throws ContractError on an empty
/// dataset.
EvalReport evaluate(const SeqModel& model, const Dataset& data, const std::optional<QuantConfig>& qconfig,
                    int batch_size = 64);
/// Evaluates weights that are already quantized (a loaded compressed
/// checkpoint), applying only activation quantization.
EvalReport evaluate_view(const SeqModel& view, const Dataset& data, int a_bits, int batch_size = 64);

struct EvalRecord {
    int epoch = 0;
    std::int64_t step = 0;
    EvalReport report;
};

struct CheckpointMeta {
    ModelConfig model;
    QuantConfig quant;
    DistillConfig distill;
    TrainConfig train;
    std::int64_t step = 0;
    std::vector<EvalRecord> history;
    int best_index = -1;  // into history; -1 when nothing was evaluated

    const EvalRecord* best() const;
};

struct StepRecord {
    std::int64_t step = 0;
    float lr = 0.0f;
    LossBreakdown loss;
};

struct TrainResult {
    /// Best full-precision master. Quantized modes are evaluated and shipped
    /// as quantize_model(model, meta.quant).
    SeqModel model;
    LayerMap map;
    CheckpointMeta meta;
    std::vector<StepRecord> steps;
};

struct TrainSetup {
    ModelConfig model;  // only used by mode teacher
    QuantConfig quant;
    DistillConfig distill;
    TrainConfig train;
};

/// Runs the mode's training loop with per-epoch dev evaluation and keeps the
/// best model by train.eval_metric. `teacher` is required by every mode but
/// teacher. When `log` is given one JSON record per epoch is written to it.
TrainResult train(const SeqModel* teacher, const TrainSetup& setup, const Dataset& train_data,
                  const Dataset& dev_data, std::ostream* log = nullptr);

}  // namespace dqs
