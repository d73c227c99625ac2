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

#include "dqs/distill.hpp"

#include "dqs/error.hpp"
#include "dqs/ops.hpp"

namespace dqs {

void DistillConfig::validate(const ModelConfig& teacher) const {
    if (enc_layers < 1 || enc_layers > teacher.n_enc_layers) {
        throw ConfigError("student encoder layers " + std::to_string(enc_layers) +
                          " not in [1, " + std::to_string(teacher.n_enc_layers) + "]");
    }
    if (dec_layers < 1 || dec_layers > teacher.n_dec_layers) {
        throw ConfigError("student decoder layers " + std::to_string(dec_layers) +
                          " not in [1, " + std::to_string(teacher.n_dec_layers) + "]");
    }
}

LayerMap LayerMap::identity(const ModelConfig& config) {
    return {select_layers(config.n_enc_layers, config.n_enc_layers),
            select_layers(config.n_dec_layers, config.n_dec_layers)};
}

std::vector<int> select_layers(int teacher_layers, int student_layers) {
    if (teacher_layers < 1 || student_layers < 1) {
        throw ContractError("select_layers: layer counts must be positive");
    }
    if (student_layers > teacher_layers) {
        throw ContractError("select_layers: student has " + std::to_string(student_layers) +
                            " layers but teacher only " + std::to_string(teacher_layers));
    }
    if (student_layers == 1) return {teacher_layers - 1};
    std::vector<int> out;
    const int den = student_layers - 1;
    for (int i = 0; i < student_layers; ++i) {
        const int num = i * (teacher_layers - 1);
        out.push_back((2 * num + den) / (2 * den));  // round half away from zero
    }
    return out;
}

StudentInit init_student(const SeqModel& teacher, const DistillConfig& config) {
    config.validate(teacher.config);
    StudentInit init;
    init.map.enc = select_layers(teacher.config.n_enc_layers, config.enc_layers);
    init.map.dec = select_layers(teacher.config.n_dec_layers, config.dec_layers);

    SeqModel shallow = teacher;
    shallow.config.n_enc_layers = config.enc_layers;
    shallow.config.n_dec_layers = config.dec_layers;
    shallow.encoder.clear();
    shallow.decoder.clear();
    for (int t : init.map.enc) shallow.encoder.push_back(teacher.encoder[static_cast<std::size_t>(t)]);
    for (int t : init.map.dec) shallow.decoder.push_back(teacher.decoder[static_cast<std::size_t>(t)]);
    init.student = shallow.clone();
    return init;
}

LossBreakdown LossTerms::values() const {
    LossBreakdown b;
    b.l_logits = logits.item();
    b.l_ea = ea.item();
    b.l_da = da.item();
    b.l_ca = ca.item();
    b.l_ehs = ehs.item();
    b.l_dhs = dhs.item();
    b.l_data = data.item();
    return b;
}

std::vector<std::uint8_t> self_attention_mask(std::span<const std::uint8_t> valid, std::int64_t batch,
                                              std::int64_t heads, std::int64_t len, bool causal) {
    std::vector<std::uint8_t> m(static_cast<std::size_t>(batch * heads * len * len));
    std::size_t p = 0;
    for (std::int64_t b = 0; b < batch; ++b) {
        const auto* v = valid.data() + b * len;
        for (std::int64_t h = 0; h < heads; ++h) {
            for (std::int64_t i = 0; i < len; ++i) {
                for (std::int64_t j = 0; j < len; ++j) {
                    m[p++] = (v[i] && v[j] && (!causal || j <= i)) ? 1 : 0;
                }
            }
        }
    }
    return m;
}

std::vector<std::uint8_t> cross_attention_mask(std::span<const std::uint8_t> q_valid,
                                               std::span<const std::uint8_t> k_valid, std::int64_t batch,
                                               std::int64_t heads, std::int64_t q_len, std::int64_t k_len) {
    std::vector<std::uint8_t> m(static_cast<std::size_t>(batch * heads * q_len * k_len));
    std::size_t p = 0;
    for (std::int64_t b = 0; b < batch; ++b) {
        for (std::int64_t h = 0; h < heads; ++h) {
            for (std::int64_t i = 0; i < q_len; ++i) {
                for (std::int64_t j = 0; j < k_len; ++j) {
                    m[p++] = (q_valid[static_cast<std::size_t>(b * q_len + i)] &&
                              k_valid[static_cast<std::size_t>(b * k_len + j)])
                                 ? 1
                                 : 0;
                }
            }
        }
    }
    return m;
}

namespace {

void check_aligned(const ForwardTrace& s, const ForwardTrace& t) {
    if (s.batch != t.batch || s.src_len != t.src_len || s.tgt_len != t.tgt_len ||
        s.src_valid != t.src_valid || s.tgt_valid != t.tgt_valid) {
        throw ContractError("student and teacher traces were produced from different batches");
    }
}

// Broadcast a [batch, len] validity mask over a trailing feature axis.
std::vector<std::uint8_t> expand_rows(std::span<const std::uint8_t> valid, std::int64_t width) {
    std::vector<std::uint8_t> m(valid.size() * static_cast<std::size_t>(width));
    for (std::size_t i = 0; i < valid.size(); ++i) {
        std::fill_n(m.begin() + static_cast<std::ptrdiff_t>(i) * width, width, valid[i]);
    }
    return m;
}

const Tensor& teacher_layer(const std::vector<Tensor>& layers, int index, const char* what) {
    if (index < 0 || static_cast<std::size_t>(index) >= layers.size()) {
        throw IndexError(std::string(what) + ": layer map entry " + std::to_string(index) +
                         " outside teacher's " + std::to_string(layers.size()) + " layers");
    }
    return layers[static_cast<std::size_t>(index)];
}

// Sum over student layers of masked MSE against the mapped teacher layer.
Tensor layer_sum(const std::vector<Tensor>& student, const std::vector<Tensor>& teacher,
                 const std::vector<int>& map, std::span<const std::uint8_t> mask, const char* what) {
    if (map.size() != student.size()) {
        throw ContractError(std::string(what) + ": layer map has " + std::to_string(map.size()) +
                            " entries for " + std::to_string(student.size()) + " student layers");
    }
    Tensor total;
    for (std::size_t i = 0; i < student.size(); ++i) {
        const Tensor& t = teacher_layer(teacher, map[i], what);
        Tensor term = ops::mse(student[i], t, mask);
        total = total.defined() ? ops::add(total, term) : term;
    }
    return total.defined() ? total : Tensor::scalar(0.0f);
}

std::int64_t heads_of(const std::vector<Tensor>& scores) {
    return scores.empty() ? 0 : scores.front().dim(1);
}

}  // namespace

Tensor logits_loss(const ForwardTrace& student, const ForwardTrace& teacher) {
    check_aligned(student, teacher);
    const auto mask = expand_rows(student.tgt_valid, student.logits.dim(-1));
    return ops::mse(student.logits, teacher.logits, mask);
}

AttentionLosses attention_loss(const ForwardTrace& student, const ForwardTrace& teacher,
                               const LayerMap& map) {
    check_aligned(student, teacher);
    const std::int64_t b = student.batch, s = student.src_len, t = student.tgt_len;
    const std::int64_t h = heads_of(student.enc_attn);
    const auto enc_mask = self_attention_mask(student.src_valid, b, h, s, false);
    const auto dec_mask = self_attention_mask(student.tgt_valid, b, h, t, true);
    const auto cross_mask = cross_attention_mask(student.tgt_valid, student.src_valid, b, h, t, s);
    return {layer_sum(student.enc_attn, teacher.enc_attn, map.enc, enc_mask, "encoder attention"),
            layer_sum(student.dec_attn, teacher.dec_attn, map.dec, dec_mask, "decoder attention"),
            layer_sum(student.cross_attn, teacher.cross_attn, map.dec, cross_mask, "cross attention")};
}

HiddenLosses hidden_loss(const ForwardTrace& student, const ForwardTrace& teacher, const LayerMap& map) {
    check_aligned(student, teacher);
    const std::int64_t d = student.enc_hidden.empty() ? 0 : student.enc_hidden.front().dim(-1);
    const auto enc_mask = expand_rows(student.src_valid, d);
    const auto dec_mask = expand_rows(student.tgt_valid, d);
    return {layer_sum(student.enc_hidden, teacher.enc_hidden, map.enc, enc_mask, "encoder hidden"),
            layer_sum(student.dec_hidden, teacher.dec_hidden, map.dec, dec_mask, "decoder hidden")};
}

namespace {

void assemble(LossTerms& terms) {
    Tensor att = ops::add(ops::add(terms.ea, terms.da), terms.ca);
    Tensor hid = ops::add(terms.ehs, terms.dhs);
    terms.dist = ops::add(ops::add(terms.logits, att), hid);
    terms.total = ops::add(terms.data, terms.dist);
}

}  // namespace

LossTerms total_loss(const ForwardTrace& student, const ForwardTrace& teacher,
                     std::span<const int> targets, const LayerMap& map, int pad_id, bool distill) {
    if (!distill) return task_loss(student, targets, pad_id);
    LossTerms terms;
    terms.data = ops::cross_entropy(student.logits, targets, pad_id);
    terms.logits = logits_loss(student, teacher);
    auto att = attention_loss(student, teacher, map);
    terms.ea = att.ea;
    terms.da = att.da;
    terms.ca = att.ca;
    auto hid = hidden_loss(student, teacher, map);
    terms.ehs = hid.ehs;
    terms.dhs = hid.dhs;
    assemble(terms);
    return terms;
}

LossTerms task_loss(const ForwardTrace& student, std::span<const int> targets, int pad_id) {
    LossTerms terms;
    terms.data = ops::cross_entropy(student.logits, targets, pad_id);
    terms.logits = Tensor::scalar(0.0f);
    terms.ea = Tensor::scalar(0.0f);
    terms.da = Tensor::scalar(0.0f);
    terms.ca = Tensor::scalar(0.0f);
    terms.ehs = Tensor::scalar(0.0f);
    terms.dhs = Tensor::scalar(0.0f);
    assemble(terms);
    return terms;
}

}  // namespace dqs
