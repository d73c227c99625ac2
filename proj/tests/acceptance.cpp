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


// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any fails. Progress goes to stderr.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dqs/checkpoint.hpp"
#include "dqs/distill.hpp"
#include "dqs/experiment.hpp"
#include "dqs/metrics.hpp"
#include "dqs/ops.hpp"
#include "dqs/quant.hpp"
#include "dqs/tasks.hpp"
#include "dqs/trainer.hpp"
#include "grad_check.hpp"
#include "quant_oracle.hpp"

namespace {

using namespace dqs;
using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

std::string fmt(double v, int decimals = 4) { return format_fixed(v, decimals); }

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void progress(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

// --- footprint -------------------------------------------------------------

Outcome check_footprint() {
    struct Row {
        QuantConfig q;
        int enc, dec;
        double ratio;
    };
    const Row rows[] = {{{8, 8, 8}, 6, 6, 3.9},  {{2, 2, 8}, 6, 6, 13.6}, {{2, 2, 8}, 6, 3, 16.5},
                        {{2, 2, 8}, 6, 1, 19.2}, {{2, 2, 8}, 3, 1, 23.5}, {{2, 2, 8}, 1, 1, 27.7}};
    const ModelConfig ref = ModelConfig::bart_base();
    Outcome o;
    o.pass = true;
    const double mib = footprint(ref, {32, 32, 32}).mib();
    o.pass = std::fabs(mib - 531.0) <= 0.1 * 531.0;
    std::ostringstream d;
    d << "32-bit " << fmt(mib, 1) << " MiB;";
    for (const Row& r : rows) {
        ModelConfig s = ref;
        s.n_enc_layers = r.enc;
        s.n_dec_layers = r.dec;
        const double got = footprint(ref, s, r.q).ratio();
        const bool ok = std::fabs(got - r.ratio) <= 0.1 * r.ratio;
        o.pass = o.pass && ok;
        d << " " << config_label(r.q, r.enc, r.dec) << " " << fmt(got, 1) << "x/" << fmt(r.ratio, 1) << "x"
          << (ok ? "" : "(!)");
    }
    o.detail = d.str();
    return o;
}

// --- quantizer oracle --------------------------------------------------------

Outcome check_quantizer_oracle() {
    std::mt19937_64 rng(2026);
    std::uniform_int_distribution<int> len(1, 4096);
    std::uniform_real_distribution<float> log_scale(-6.0f, 6.0f);
    int mismatches = 0, vectors = 0, alpha_fail = 0;
    double worst_alpha = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const auto n = static_cast<std::size_t>(len(rng));
        std::vector<float> w(n);
        std::normal_distribution<float> dist(0.0f, std::exp(log_scale(rng)));
        for (float& x : w) x = dist(rng);
        const Shape shape{static_cast<std::int64_t>(n)};
        for (int bits = 3; bits <= 8; ++bits) {
            const auto q = linear_quantize(w, shape, bits);
            const auto o = testing::oracle_linear(w, bits);
            if (q.alpha() != o.alpha || !std::equal(q.codes.begin(), q.codes.end(), o.codes.begin(), o.codes.end())) {
                ++mismatches;
            }
        }
        const auto t = twn_quantize(w, shape);
        const auto o = testing::oracle_twn(w);
        if (t.alpha() != o.alpha || !std::equal(t.codes.begin(), t.codes.end(), o.codes.begin(), o.codes.end())) {
            ++mismatches;
        }
        double wb = 0.0, bb = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            wb += static_cast<double>(w[k]) * t.codes[k];
            bb += static_cast<double>(t.codes[k]) * t.codes[k];
        }
        if (bb > 0) {
            const double err = std::fabs(t.alpha() - wb / bb);
            worst_alpha = std::max(worst_alpha, err / std::max(1.0, wb / bb));
            if (err > 1e-6 * std::max(1.0, wb / bb)) ++alpha_fail;
        }
        ++vectors;
    }
    Outcome o;
    o.pass = mismatches == 0 && alpha_fail == 0;
    o.detail = std::to_string(vectors) + " vectors x (linear 3..8 bits + twn): " + std::to_string(mismatches) +
               " mismatches; twn alpha vs least squares worst " + std::to_string(worst_alpha);
    return o;
}

// --- layer map ---------------------------------------------------------------

Outcome check_layer_map() {
    const auto a = select_layers(6, 3), b = select_layers(6, 2), c = select_layers(6, 1);
    auto str = [](const std::vector<int>& v) {
        std::string s = "[";
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
        return s + "]";
    };
    Outcome o;
    o.pass = a == std::vector<int>{0, 3, 5} && b == std::vector<int>{0, 5} && c == std::vector<int>{5};
    o.detail = "(6,3)->" + str(a) + " (6,2)->" + str(b) + " (6,1)->" + str(c);
    return o;
}

// --- loss identities -----------------------------------------------------------

std::vector<float> breakdown_fields(const LossBreakdown& b) {
    return {b.l_logits, b.l_ea, b.l_da, b.l_ca, b.l_ehs, b.l_dhs, b.l_data};
}

// A trained teacher whose output norm is scaled so the logits saturate, and a
// batch of examples it predicts correctly under teacher forcing.
Outcome check_loss_identities(const SeqModel& trained_teacher, const Dataset& dev) {
    Outcome o;
    SeqModel teacher = trained_teacher.clone();
    for (Tensor* t : {&teacher.dec_final_norm.gain, &teacher.dec_final_norm.bias}) {
        for (float& v : t->mutable_data()) v *= 1e4f;
    }
    std::vector<std::size_t> correct;
    for (std::size_t i = 0; i < dev.size() && correct.size() < 32; ++i) {
        const std::size_t idx[] = {i};
        const TrainBatch b = TrainBatch::make(dev.examples, idx);
        const ForwardTrace tr = forward(teacher, b.src, b.tgt_in, kPadId);
        const std::int64_t v = tr.logits.dim(-1);
        bool ok = true;
        for (std::size_t p = 0; p < b.targets.size(); ++p) {
            if (b.targets[p] == kPadId) continue;
            const auto row = tr.logits.data().subspan(p * static_cast<std::size_t>(v), static_cast<std::size_t>(v));
            if (std::max_element(row.begin(), row.end()) - row.begin() != b.targets[p]) ok = false;
        }
        if (ok) correct.push_back(i);
    }
    const TrainBatch batch = TrainBatch::make(dev.examples, correct);
    const SeqModel student = teacher.clone();
    const ForwardTrace ts = forward(student, batch.src, batch.tgt_in, kPadId);
    const ForwardTrace tt = forward(teacher, batch.src, batch.tgt_in, kPadId);
    const LossBreakdown zero = total_loss(ts, tt, batch.targets, LayerMap::identity(teacher.config), kPadId).values();
    bool all_zero = true;
    for (float f : breakdown_fields(zero)) all_zero = all_zero && f == 0.0f;

    // Sum identity on random student/teacher pairs.
    int sum_fail = 0;
    const int cases = 50;
    std::mt19937_64 rng(77);
    const SeqModel base = trained_teacher;
    for (int c = 0; c < cases; ++c) {
        const DistillConfig dc{1 + static_cast<int>(rng() % 2), 1 + static_cast<int>(rng() % 2)};
        StudentInit s = init_student(base, dc);
        std::normal_distribution<float> n(0.0f, 0.05f);
        visit_parameters(s.student, [&](const std::string&, Tensor& t, ParamCategory) {
            for (float& v : t.mutable_data()) v += n(rng);
        });
        std::vector<std::size_t> idx;
        for (int k = 0; k < 8; ++k) idx.push_back(rng() % dev.size());
        const TrainBatch b = TrainBatch::make(dev.examples, idx);
        const auto st = forward(s.student, b.src, b.tgt_in, kPadId);
        const auto te = forward(base, b.src, b.tgt_in, kPadId);
        const LossTerms terms = total_loss(st, te, b.targets, s.map, kPadId);
        const LossBreakdown v = terms.values();
        const float by_hand = v.l_data + ((v.l_logits + ((v.l_ea + v.l_da) + v.l_ca)) + (v.l_ehs + v.l_dhs));
        if (terms.total.item() != v.l_total() || terms.total.item() != by_hand) ++sum_fail;
    }
    o.pass = all_zero && sum_fail == 0 && !correct.empty();
    std::ostringstream d;
    d << "saturated clone on " << correct.size() << " examples: components";
    for (float f : breakdown_fields(zero)) d << " " << f;
    d << "; sum identity exact on " << (cases - sum_fail) << "/" << cases << " random cases";
    o.detail = d.str();
    return o;
}

// --- gradient checks -------------------------------------------------------------

Outcome check_gradients_all() {
    double op_worst = 0.0;
    int op_probes = 0;
    std::string worst_name;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        for (const auto& r : testing::op_gradient_checks(seed)) {
            op_probes += r.report.probes;
            if (r.report.max_error > op_worst) {
                op_worst = r.report.max_error;
                worst_name = r.name;
            }
        }
    }

    ModelConfig c;
    c.vocab_size = 10;
    c.d_model = 8;
    c.n_heads = 2;
    c.d_ff = 16;
    c.n_enc_layers = 2;
    c.n_dec_layers = 2;
    c.max_positions = 12;
    double e2e_worst = 0.0;
    int e2e_probes = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const SeqModel teacher = init_model(c, seed);
        StudentInit s = init_student(teacher, {1, 1});
        std::mt19937_64 rng(seed);
        std::normal_distribution<float> n(0.0f, 0.1f);
        visit_parameters(s.student, [&](const std::string&, Tensor& t, ParamCategory) {
            for (float& v : t.mutable_data()) v += n(rng);
        });
        const auto src = TokenBatch::from_sequences({{4, 5, 6, 7}, {8, 9}}, kPadId);
        const auto tin = TokenBatch::from_sequences({{kBosId, 4, 5}, {kBosId, 8}}, kPadId);
        const auto tg = TokenBatch::from_sequences({{4, 5, kEosId}, {8, kEosId}}, kPadId).ids;
        const ForwardTrace tt = forward(teacher, src, tin, kPadId);
        std::vector<Tensor> inputs;
        for (const auto& p : named_parameters(s.student)) inputs.push_back(p.tensor);
        const auto rep = testing::check_gradients(
            inputs, [&] { return total_loss(forward(s.student, src, tin, kPadId), tt, tg, s.map, kPadId).total; },
            rng, 6, 3e-3);
        e2e_worst = std::max(e2e_worst, rep.max_error);
        e2e_probes += rep.probes;
    }

    // Scalar probe through the weight quantizer.
    bool ste_exact = true;
    for (int bits : {2, 4, 8}) {
        SeqModel m = init_model(c, 1);
        Tape tape;
        Tape::Scope scope(tape);
        const QuantizedModel q = quantize_model(m, {bits, 32, 32});
        const Tensor& w = q.view.encoder[0].fc1.weight;
        std::vector<std::uint8_t> mask(static_cast<std::size_t>(w.numel()), 0);
        const std::size_t k = 3;
        mask[k] = 1;
        const float cval = 0.25f;
        tape.backward(ops::mse(w, Tensor::full(w.shape(), cval), mask));
        const auto& qt = q.quantized.at("encoder.layers.0.fc1.weight");
        const float ab = qt.alpha() * static_cast<float>(qt.codes[k]);
        const float expected = static_cast<float>(2.0 * (static_cast<double>(ab) - cval));
        ste_exact = ste_exact && m.encoder[0].fc1.weight.grad()[k] == expected;
    }

    Outcome o;
    o.pass = op_worst <= 1e-3 && op_probes >= 100 && e2e_worst <= 1e-3 && e2e_probes >= 100 && ste_exact;
    o.detail = "ops worst " + std::to_string(op_worst) + " (" + worst_name + ") over " + std::to_string(op_probes) +
               " probes; l_total worst " + std::to_string(e2e_worst) + " over " + std::to_string(e2e_probes) +
               " probes; STE probe " + (ste_exact ? "exact" : "inexact");
    return o;
}

// --- rouge ---------------------------------------------------------------------

std::size_t brute_lcs(const TokenList& a, const TokenList& b) {
    std::size_t best = 0;
    for (std::uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
        std::size_t j = 0, count = 0;
        bool ok = true;
        for (std::size_t i = 0; i < a.size() && ok; ++i) {
            if (!(mask >> i & 1u)) continue;
            while (j < b.size() && b[j] != a[i]) ++j;
            if (j == b.size()) {
                ok = false;
            } else {
                ++j;
                ++count;
            }
        }
        if (ok) best = std::max(best, count);
    }
    return best;
}

Outcome check_rouge() {
    std::mt19937_64 rng(5);
    int agree = 0;
    for (int t = 0; t < 100; ++t) {
        TokenList a(rng() % 13), b(rng() % 13);
        for (auto& s : a) s = std::string(1, static_cast<char>('a' + rng() % 4));
        for (auto& s : b) s = std::string(1, static_cast<char>('a' + rng() % 4));
        const std::size_t l = brute_lcs(a, b);
        double expected = 0.0;
        if (l > 0) {
            const double prec = static_cast<double>(l) / static_cast<double>(a.size());
            const double rec = static_cast<double>(l) / static_cast<double>(b.size());
            expected = 2.0 * prec * rec / (prec + rec);
        }
        if (rouge_l(a, b) == expected && lcs_length(a, b) == l) ++agree;
    }
    const double f1 = rouge_l(split_tokens("a b c d"), split_tokens("a b c d"));
    const double f2 = rouge_n(split_tokens("a b c"), split_tokens("a c"), 1);
    const double f3 = rouge_l(split_tokens("a x b"), split_tokens("a b y"));
    Outcome o;
    o.pass = agree == 100 && f1 == 1.0 && f2 == 0.8 && std::fabs(f3 - 2.0 / 3.0) < 1e-15;
    o.detail = std::to_string(agree) + "/100 brute-force agreements; fixtures " + fmt(f1) + " " + fmt(f2) + " " +
               fmt(f3);
    return o;
}

// --- persistence -------------------------------------------------------------------

std::vector<std::vector<float>> snapshot(const SeqModel& m) {
    std::vector<std::vector<float>> out;
    for (const auto& p : named_parameters(m)) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    return out;
}

Outcome check_persistence() {
    ModelConfig c;
    c.vocab_size = 8;
    c.d_model = 16;
    c.n_heads = 2;
    c.d_ff = 32;
    c.max_positions = 8;

    Checkpoint fp;
    fp.model = init_model(c, 3);
    fp.meta.model = c;
    const Checkpoint fp_back = decode_checkpoint(encode_checkpoint(fp));
    const bool fp_ok = snapshot(fp_back.model) == snapshot(fp.model) &&
                       encode_checkpoint(fp_back) == encode_checkpoint(fp);

    const QuantizedModel q = quantize_model(fp.model, {2, 2, 8});
    Checkpoint packed;
    packed.model = q.view;
    packed.quantized = q.quantized;
    packed.meta.model = c;
    packed.meta.quant = {2, 2, 8};
    const Checkpoint packed_back = decode_checkpoint(encode_checkpoint(packed));
    const bool packed_ok = packed_back.quantized == packed.quantized &&
                           snapshot(packed_back.model) == snapshot(q.view) &&
                           encode_checkpoint(packed_back) == encode_checkpoint(packed);

    const auto dir = std::filesystem::temp_directory_path() / "dqs_acceptance";
    std::filesystem::create_directories(dir);
    RunManifest teacher;
    teacher.name = "persist_teacher";
    teacher.task.vocab_size = 8;
    teacher.task.max_len = 4;
    teacher.task.train_size = 64;
    teacher.task.dev_size = 16;
    teacher.task.test_size = 16;
    teacher.model = c;
    teacher.train.mode = TrainMode::kTeacher;
    teacher.train.epochs = 2;
    teacher.train.batch_size = 16;
    teacher.train.learning_rate = 3e-3f;
    teacher.output_path = (dir / "teacher.dqs").string();
    run_experiment(teacher);
    RunManifest student = teacher;
    student.name = "persist_student";
    student.output_path.clear();
    student.teacher_path = teacher.output_path;
    student.train.mode = TrainMode::kDq;
    student.quant = {2, 2, 8};
    student.distill = {2, 1};
    RunManifest again = manifest_from_json(manifest_to_json(student));
    run_experiment(student);
    run_experiment(again);
    const bool rows_ok = student.rows.at(0).csv_row() == again.rows.at(0).csv_row() &&
                         merge_tables({student}) == merge_tables({again});

    Outcome o;
    o.pass = fp_ok && packed_ok && rows_ok;
    o.detail = std::string("fp round trip ") + (fp_ok ? "exact" : "differs") + "; 2-bit packed round trip " +
               (packed_ok ? "exact" : "differs") + "; repeated manifest rows " + (rows_ok ? "identical" : "differ");
    return o;
}

// --- end-to-end ------------------------------------------------------------------------

ModelConfig toy_teacher_config() {
    ModelConfig c;  // vocab 16, d 64, 4 heads, ff 256, 2+2 layers
    return c;
}

RunManifest base_manifest(std::uint64_t seed) {
    RunManifest m;
    m.task.kind = TaskKind::kCopy;
    m.task.vocab_size = 16;
    m.task.max_len = 12;
    m.task.seed = seed;
    m.model = toy_teacher_config();
    m.train.seed = seed;
    m.train.batch_size = 32;
    m.train.learning_rate = 1e-3f;
    return m;
}

struct SeedRun {
    double teacher_dev_token = 0.0;
    double teacher_seconds = 0.0;
    double teacher_test = 0.0, dq8 = 0.0, dq2 = 0.0, direct = 0.0;
    double dq21_dev_rl = 0.0, do11_dev_rl = 0.0;
    double ladder_seconds = 0.0, versus_seconds = 0.0;
};

double best_dev(const TrainResult& r, const std::string& metric) { return r.meta.best()->report.metric(metric); }

SeedRun run_seed(std::uint64_t seed, std::optional<SeqModel>& keep_teacher, TaskSplits& keep_data) {
    SeedRun out;
    const TaskSplits data = generate_task(base_manifest(seed).task);

    auto t0 = Clock::now();
    RunManifest tm = base_manifest(seed);
    tm.train.mode = TrainMode::kTeacher;
    tm.train.epochs = 12;
    const ExperimentOutput teacher = run_pipeline(tm, nullptr, data);
    out.teacher_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    out.teacher_dev_token = best_dev(teacher.train, "token_acc");
    out.teacher_test = teacher.row.test.token_acc;
    const SeqModel& tmodel = teacher.train.model;
    progress("seed " + std::to_string(seed) + " teacher dev token acc " + fmt(out.teacher_dev_token) + " in " +
             fmt(out.teacher_seconds, 1) + " s");

    auto student = [&](TrainMode mode, QuantConfig q, DistillConfig d, int epochs) {
        RunManifest m = base_manifest(seed);
        m.train.mode = mode;
        m.train.epochs = epochs;
        m.quant = q;
        m.distill = d;
        return run_pipeline(m, &tmodel, data);
    };
    auto t1 = Clock::now();
    out.direct = student(TrainMode::kDirectQuant, {2, 2, 8}, {2, 2}, 1).row.test.token_acc;
    out.dq8 = student(TrainMode::kDq, {8, 8, 8}, {2, 2}, 8).row.test.token_acc;
    out.dq2 = student(TrainMode::kDq, {2, 2, 8}, {2, 2}, 8).row.test.token_acc;
    out.ladder_seconds = out.teacher_seconds + std::chrono::duration<double>(Clock::now() - t1).count();
    progress("seed " + std::to_string(seed) + " test token acc: teacher " + fmt(out.teacher_test) + " dq 8-8-8 " +
             fmt(out.dq8) + " dq 2-2-8 " + fmt(out.dq2) + " direct " + fmt(out.direct));

    auto t2 = Clock::now();
    out.dq21_dev_rl = best_dev(student(TrainMode::kDq, {8, 8, 8}, {2, 1}, 8).train, "rouge_l");
    out.do11_dev_rl = best_dev(student(TrainMode::kDistillOnly, {32, 32, 32}, {1, 1}, 8).train, "rouge_l");
    out.versus_seconds = std::chrono::duration<double>(Clock::now() - t2).count();
    progress("seed " + std::to_string(seed) + " dev rouge-L: dq 8-8-8 2-1 " + fmt(out.dq21_dev_rl) +
             " distill-only 32 1-1 " + fmt(out.do11_dev_rl));

    if (!keep_teacher) {
        keep_teacher = tmodel.clone();
        keep_data = data;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    struct Line {
        std::string name;
        Outcome outcome;
    };
    std::vector<Line> lines;
    auto timed = [&](const std::string& name, const std::function<Outcome()>& f) {
        progress("running " + name);
        const auto start = Clock::now();
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        o.seconds = std::chrono::duration<double>(Clock::now() - start).count();
        lines.push_back({name, o});
    };

    timed("footprint arithmetic", check_footprint);
    timed("quantizer oracle equivalence", check_quantizer_oracle);
    timed("layer-map fixtures", check_layer_map);

    std::optional<SeqModel> teacher;
    TaskSplits teacher_data;
    std::vector<SeedRun> runs;
    Outcome ladder, versus;
    try {
        for (std::uint64_t seed : {1, 2, 3}) runs.push_back(run_seed(seed, teacher, teacher_data));
    } catch (const std::exception& e) {
        ladder.detail = versus.detail = std::string("exception: ") + e.what();
    }

    if (teacher) {
        timed("loss identities", [&] { return check_loss_identities(*teacher, teacher_data.dev); });
    } else {
        lines.push_back({"loss identities", {false, "no trained teacher available", 0.0}});
    }
    timed("gradient checks", check_gradients_all);

    if (runs.size() == 3) {
        std::vector<double> t, d8, d2, dq, dev, teacher_secs, ladder_secs, versus_secs, rl21, rl11;
        for (const SeedRun& r : runs) {
            t.push_back(r.teacher_test);
            d8.push_back(r.dq8);
            d2.push_back(r.dq2);
            dq.push_back(r.direct);
            dev.push_back(r.teacher_dev_token);
            teacher_secs.push_back(r.teacher_seconds);
            ladder_secs.push_back(r.ladder_seconds);
            versus_secs.push_back(r.versus_seconds);
            rl21.push_back(r.dq21_dev_rl);
            rl11.push_back(r.do11_dev_rl);
        }
        const double mt = median(t), m8 = median(d8), m2 = median(d2), md = median(dq);
        const bool teachers_ok = *std::min_element(dev.begin(), dev.end()) >= 0.99 &&
                                 *std::max_element(teacher_secs.begin(), teacher_secs.end()) <= 600.0;
        const bool a = mt - m8 <= 0.01, b = mt - m2 <= 0.05, c = mt - md >= 0.50;
        const bool d = mt >= m8 && m8 >= m2 && m2 >= md;
        double total = 0.0;
        for (double s : ladder_secs) total += s;
        ladder.pass = teachers_ok && a && b && c && d && total <= 45 * 60;
        ladder.seconds = total;
        ladder.detail = "medians teacher " + fmt(mt) + ", dq 8-8-8 " + fmt(m8) + ", dq 2-2-8 " + fmt(m2) +
                        ", direct 2-2-8 " + fmt(md) + "; teacher dev min " +
                        fmt(*std::min_element(dev.begin(), dev.end())) + "; (a)" + (a ? "ok" : "no") + " (b)" +
                        (b ? "ok" : "no") + " (c)" + (c ? "ok" : "no") + " (d)" + (d ? "ok" : "no");

        double t3 = 0.0;
        for (double s : versus_secs) t3 += s;
        const double r21 = median(rl21), r11 = median(rl11);
        versus.pass = r21 >= r11 && t3 <= 20 * 60;
        versus.seconds = t3;
        versus.detail = "median dev rouge-L dq 8-8-8 2-1 " + fmt(r21, 6) + " vs distill-only 32-32-32 1-1 " +
                        fmt(r11, 6) + " (per seed " + fmt(rl21[0], 6) + "/" + fmt(rl11[0], 6) + ", " + fmt(rl21[1], 6) +
                        "/" + fmt(rl11[1], 6) + ", " + fmt(rl21[2], 6) + "/" + fmt(rl11[2], 6) + ")";
    }
    lines.push_back({"compression ladder", ladder});
    lines.push_back({"dq vs distill-only", versus});

    timed("rouge correctness", check_rouge);
    timed("persistence", check_persistence);

    // Fixed criterion order.
    const std::vector<std::string> order = {"footprint arithmetic", "quantizer oracle equivalence", "layer-map fixtures",
                                            "loss identities",      "gradient checks",              "compression ladder",
                                            "dq vs distill-only",   "rouge correctness",            "persistence"};
    int failed = 0;
    std::ostringstream report;
    for (const auto& name : order) {
        const auto it = std::find_if(lines.begin(), lines.end(), [&](const Line& l) { return l.name == name; });
        const Outcome& o = it->outcome;
        failed += o.pass ? 0 : 1;
        report << (o.pass ? "PASS" : "FAIL") << "  " << name << " (" << fmt(o.seconds, 1) << " s): " << o.detail
               << "\n";
    }
    report << (9 - failed) << "/9 criteria passed\n";
    std::cout << report.str() << std::flush;
    // ctest hides the output of passing tests; keep a copy next to the binary.
    std::ofstream(argc > 1 ? argv[1] : "acceptance_report.txt") << report.str();
    return failed == 0 ? 0 : 1;
}
