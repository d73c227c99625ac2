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

#include <span>
#include <vector>

#include "dqs/model.hpp"
#include "dqs/tensor.hpp"

namespace dqs {

/// Student depth ("E-D").
struct DistillConfig {
    int enc_layers = 0;
    int dec_layers = 0;

    void validate(const ModelConfig& teacher) const;
    bool operator==(const DistillConfig&) const = default;
};

/// Student layer index -> teacher layer index, per stack.
struct LayerMap {
    std::vector<int> enc;
    std::vector<int> dec;

    static LayerMap identity(const ModelConfig& config);
    bool operator==(const LayerMap&) const = default;
};

/// Maximally spaced teacher layers: round(i * (teacher - 1) / (student - 1))
/// with half rounded away from zero; a single-layer student takes the last
/// teacher layer.
std::vector<int> select_layers(int teacher_layers, int student_layers);

struct StudentInit {
    SeqModel student;
    LayerMap map;
};

/// Deep-copies embeddings, norms and the selected layers out of `teacher`.
StudentInit init_student(const SeqModel& teacher, const DistillConfig& config);

/// Scalar values of one loss evaluation. l_dist and l_total are defined by
/// the summation order below; LossTerms::total is built in the same order.
struct LossBreakdown {
    float l_logits = 0.0f;
    float l_ea = 0.0f;
    float l_da = 0.0f;
    float l_ca = 0.0f;
    float l_ehs = 0.0f;
    float l_dhs = 0.0f;
    float l_data = 0.0f;

    float l_att() const { return (l_ea + l_da) + l_ca; }
    float l_hid() const { return l_ehs + l_dhs; }
    float l_dist() const { return (l_logits + l_att()) + l_hid(); }
    float l_total() const { return l_data + l_dist(); }
};

/// Differentiable loss components (scalar tensors on the active tape).
struct LossTerms {
    Tensor logits, ea, da, ca, ehs, dhs, data;
    Tensor dist, total;

    LossBreakdown values() const;
};

/// MSE between student and teacher logits over non-pad target positions.
Tensor logits_loss(const ForwardTrace& student, const ForwardTrace& teacher);

struct AttentionLosses {
    Tensor ea, da, ca;
};

/// Per-stack sums over student layers of MSE(student_i, teacher_map(i)),
/// excluding padded and causally masked score positions.
AttentionLosses attention_loss(const ForwardTrace& student, const ForwardTrace& teacher,
                               const LayerMap& map);

struct HiddenLosses {
    Tensor ehs, dhs;
};

HiddenLosses hidden_loss(const ForwardTrace& student, const ForwardTrace& teacher,
                         const LayerMap& map);

/// l_data (cross entropy of student logits against `targets`, pad ignored)
/// plus the unweighted distillation stack. With `distill` false every
/// distillation term is a constant zero (task loss only).
LossTerms total_loss(const ForwardTrace& student, const ForwardTrace& teacher,
                     std::span<const int> targets, const LayerMap& map, int pad_id,
                     bool distill = true);

/// Task loss only; no teacher trace required.
LossTerms task_loss(const ForwardTrace& student, std::span<const int> targets, int pad_id);

/// Validity masks used by the losses, exposed for testing.
std::vector<std::uint8_t> self_attention_mask(std::span<const std::uint8_t> valid, std::int64_t batch,
                                              std::int64_t heads, std::int64_t len, bool causal);
std::vector<std::uint8_t> cross_attention_mask(std::span<const std::uint8_t> q_valid,
                                               std::span<const std::uint8_t> k_valid, std::int64_t batch,
                                               std::int64_t heads, std::int64_t q_len, std::int64_t k_len);

}  // namespace dqs
