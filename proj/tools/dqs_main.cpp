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


// Command-line front end: data generation, training, compression,
// evaluation, footprint arithmetic and result tables.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dqs/checkpoint.hpp"
#include "dqs/error.hpp"
#include "dqs/experiment.hpp"
#include "dqs/metrics.hpp"
#include "dqs/tasks.hpp"
#include "dqs/trainer.hpp"

namespace {

using namespace dqs;

struct BitFlags {
    int w = 32, e = 32, a = 32;
    QuantConfig config() const {
        QuantConfig q{w, e, a};
        q.validate();
        return q;
    }
};

struct TaskFlags {
    std::string kind = "copy";
    TaskSpec spec;
    TaskSpec build(std::uint64_t seed) const {
        TaskSpec t = spec;
        t.kind = parse_task(kind);
        t.seed = seed;
        return t;
    }
};

void add_bits(CLI::App* app, BitFlags& b) {
    app->add_option("--w-bits", b.w, "weight bits (2, 4, 8 or 32)")->capture_default_str();
    app->add_option("--e-bits", b.e, "word embedding bits (2, 4, 8 or 32)")->capture_default_str();
    app->add_option("--a-bits", b.a, "activation bits (8 or 32)")->capture_default_str();
}

void add_task(CLI::App* app, TaskFlags& t) {
    app->add_option("--task", t.kind, "copy, reverse, sort or add")->capture_default_str();
    app->add_option("--vocab", t.spec.vocab_size, "vocabulary size")->capture_default_str();
    app->add_option("--min-len", t.spec.min_len, "shortest source")->capture_default_str();
    app->add_option("--max-len", t.spec.max_len, "longest source")->capture_default_str();
    app->add_option("--train-size", t.spec.train_size)->capture_default_str();
    app->add_option("--dev-size", t.spec.dev_size)->capture_default_str();
    app->add_option("--test-size", t.spec.test_size)->capture_default_str();
    app->add_option("--data-seed", t.spec.seed, "task generation seed")->capture_default_str();
}

void add_train(CLI::App* app, TrainConfig& t) {
    app->add_option("--epochs", t.epochs)->capture_default_str();
    app->add_option("--batch-size", t.batch_size)->capture_default_str();
    app->add_option("--lr", t.learning_rate, "peak learning rate")->capture_default_str();
    app->add_option("--warmup", t.warmup_fraction, "warmup fraction of all steps")->capture_default_str();
    app->add_option("--seed", t.seed)->capture_default_str();
    app->add_option("--eval-metric", t.eval_metric, "model selection metric")->capture_default_str();
}

nlohmann::json dataset_json(const Dataset& d) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : d.examples) arr.push_back({{"src", e.src}, {"tgt", e.tgt}});
    return arr;
}

void print_report(std::ostream& os, const std::string& title, const EvalReport& r) {
    os << title << " (" << r.examples << " examples)\n"
       << "  token_acc " << format_fixed(r.token_acc, 4) << "\n"
       << "  seq_acc   " << format_fixed(r.seq_acc, 4) << "\n"
       << "  rouge_1   " << format_fixed(r.rouge_1, 4) << "\n"
       << "  rouge_2   " << format_fixed(r.rouge_2, 4) << "\n"
       << "  rouge_l   " << format_fixed(r.rouge_l, 4) << "\n";
}

std::string manifest_path_for(const std::string& out, const std::string& explicit_path) {
    return explicit_path.empty() ? out + ".json" : explicit_path;
}

int run_manifest(RunManifest& m, const std::string& manifest_path) {
    const auto rows = run_experiment(m);
    save_manifest(manifest_path, m);
    std::cout << ResultRow::csv_header() << "\n";
    for (const auto& r : rows) std::cout << r.csv_row() << "\n";
    std::cout << "manifest " << manifest_path << " (inputs " << m.input_hash << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distillation and low-bit quantization of encoder-decoder transformers on toy tasks", "dqs"};
    app.require_subcommand(1);

    // gen-data
    TaskFlags gen_task;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic task and write its splits as JSON");
    add_task(gen, gen_task);
    gen->add_option("--seed", gen_seed, "generation seed")->capture_default_str();
    gen->add_option("--out", gen_out, "output JSON file")->required();

    // train-teacher
    TaskFlags teach_task;
    ModelConfig teach_model;
    TrainConfig teach_train;
    teach_train.mode = TrainMode::kTeacher;
    std::string teach_out, teach_manifest;
    auto* teach = app.add_subcommand("train-teacher", "train a full-precision teacher with the task loss");
    add_task(teach, teach_task);
    add_train(teach, teach_train);
    teach->add_option("--d-model", teach_model.d_model)->capture_default_str();
    teach->add_option("--heads", teach_model.n_heads)->capture_default_str();
    teach->add_option("--ff", teach_model.d_ff)->capture_default_str();
    teach->add_option("--enc-layers", teach_model.n_enc_layers)->capture_default_str();
    teach->add_option("--dec-layers", teach_model.n_dec_layers)->capture_default_str();
    teach->add_option("--max-positions", teach_model.max_positions)->capture_default_str();
    teach->add_option("--out", teach_out, "output checkpoint")->required();
    teach->add_option("--manifest", teach_manifest, "run manifest path (default <out>.json)");

    // compress
    TaskFlags comp_task;
    BitFlags comp_bits;
    DistillConfig comp_distill;
    TrainConfig comp_train;
    std::string comp_mode = "dq", comp_teacher, comp_out, comp_manifest;
    auto* comp = app.add_subcommand("compress", "distill and/or quantize a teacher checkpoint");
    add_task(comp, comp_task);
    add_bits(comp, comp_bits);
    add_train(comp, comp_train);
    comp->add_option("--mode", comp_mode, "dq, quant_only, distill_only, sf or direct_quant")->capture_default_str();
    comp->add_option("--enc-layers", comp_distill.enc_layers, "student encoder layers (0 = teacher)")
        ->capture_default_str();
    comp->add_option("--dec-layers", comp_distill.dec_layers, "student decoder layers (0 = teacher)")
        ->capture_default_str();
    comp->add_option("--teacher", comp_teacher, "teacher checkpoint")->required();
    comp->add_option("--out", comp_out, "output checkpoint")->required();
    comp->add_option("--manifest", comp_manifest, "run manifest path (default <out>.json)");

    // eval
    TaskFlags eval_task;
    std::string eval_ckpt, eval_split = "test";
    auto* ev = app.add_subcommand(
        "eval", "greedy-decode a split with a saved checkpoint and score it (task flags must match training)");
    add_task(ev, eval_task);
    ev->add_option("--checkpoint", eval_ckpt)->required();
    ev->add_option("--split", eval_split)->check(CLI::IsMember({"train", "dev", "test"}))->capture_default_str();

    // footprint
    BitFlags fp_bits;
    std::string fp_arch = "toy";
    int fp_enc = -1, fp_dec = -1;
    auto* fp = app.add_subcommand("footprint", "model size and compression ratio for an architecture");
    add_bits(fp, fp_bits);
    fp->add_option("--arch", fp_arch)->check(CLI::IsMember({"toy", "bart-base"}))->capture_default_str();
    fp->add_option("--enc-layers", fp_enc, "encoder layers (default: architecture's)");
    fp->add_option("--dec-layers", fp_dec, "decoder layers (default: architecture's)");

    // table
    std::vector<std::string> table_in;
    std::string table_out;
    auto* table = app.add_subcommand("table", "merge run manifests into one CSV");
    table->add_option("manifests", table_in, "manifest JSON files")->required();
    table->add_option("--out", table_out, "CSV file (default stdout)");

    if (argc <= 1) {
        std::cerr << app.help();
        return 2;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << "\n" << app.help();
        return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
    }

    try {
        if (*gen) {
            const TaskSplits s = generate_task(gen_task.build(gen_seed));
            nlohmann::json j;
            j["task"] = gen_task.kind;
            j["vocab_size"] = s.train.vocab_size;
            j["train"] = dataset_json(s.train);
            j["dev"] = dataset_json(s.dev);
            j["test"] = dataset_json(s.test);
            std::ofstream os(gen_out);
            if (!os) throw Error("cannot open " + gen_out + " for writing");
            os << j.dump() << "\n";
            std::cout << "wrote " << s.train.size() << "/" << s.dev.size() << "/" << s.test.size()
                      << " train/dev/test examples to " << gen_out << "\n";
            return 0;
        }
        if (*teach) {
            RunManifest m;
            m.name = std::filesystem::path(teach_out).stem().string();
            m.task = teach_task.build(teach_task.spec.seed);
            teach_model.vocab_size = m.task.vocab_size;
            m.model = teach_model;
            m.train = teach_train;
            m.distill = {teach_model.n_enc_layers, teach_model.n_dec_layers};
            m.output_path = teach_out;
            return run_manifest(m, manifest_path_for(teach_out, teach_manifest));
        }
        if (*comp) {
            RunManifest m;
            m.name = std::filesystem::path(comp_out).stem().string();
            m.task = comp_task.build(comp_task.spec.seed);
            m.model.vocab_size = m.task.vocab_size;
            m.quant = comp_bits.config();
            m.distill = comp_distill;
            m.train = comp_train;
            m.train.mode = parse_mode(comp_mode);
            if (m.train.mode == TrainMode::kTeacher) throw ConfigError("use train-teacher for mode teacher");
            m.teacher_path = comp_teacher;
            m.output_path = comp_out;
            return run_manifest(m, manifest_path_for(comp_out, comp_manifest));
        }
        if (*ev) {
            const Checkpoint ckpt = load_checkpoint(eval_ckpt);
            TaskSpec spec = eval_task.build(eval_task.spec.seed);
            spec.validate(ckpt.model.config.max_positions);
            const TaskSplits s = generate_task(spec);
            const Dataset& d = eval_split == "train" ? s.train : eval_split == "dev" ? s.dev : s.test;
            const EvalReport r = evaluate_view(ckpt.model, d, ckpt.meta.quant.a_bits);
            print_report(std::cout,
                         config_label(ckpt.meta.quant, ckpt.model.config.n_enc_layers,
                                      ckpt.model.config.n_dec_layers) +
                             " on " + std::string(task_name(spec.kind)) + " " + eval_split,
                         r);
            return 0;
        }
        if (*fp) {
            const ModelConfig reference = fp_arch == "bart-base" ? ModelConfig::bart_base() : ModelConfig{};
            ModelConfig c = reference;
            if (fp_enc >= 0) c.n_enc_layers = fp_enc;
            if (fp_dec >= 0) c.n_dec_layers = fp_dec;
            c.validate();
            const FootprintReport r = footprint(reference, c, fp_bits.config());
            std::cout << FootprintReport::csv_header() << "\n" << r.csv_row() << "\n";
            std::cout << fp_arch << " " << r.label << ": " << r.parameters << " parameters, "
                      << format_fixed(r.mib(), 1) << " MiB, ratio " << format_fixed(r.ratio(), 1) << "x\n";
            return 0;
        }
        if (*table) {
            std::vector<RunManifest> ms;
            for (const auto& path : table_in) ms.push_back(load_manifest(path));
            const std::string csv = merge_tables(ms);
            if (table_out.empty()) {
                std::cout << csv;
            } else {
                std::ofstream os(table_out);
                if (!os) throw Error("cannot open " + table_out + " for writing");
                os << csv;
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
