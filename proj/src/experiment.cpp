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


#include "dqs/experiment.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "json.hpp"

#include "dqs/checkpoint.hpp"
#include "dqs/error.hpp"
#include "dqs/metrics.hpp"

namespace dqs {

using nlohmann::json;

std::string ResultRow::csv_header() {
    return "label,mode,mib,ratio,token_acc,seq_acc,rouge_1,rouge_2,rouge_l";
}

std::string ResultRow::csv_row() const {
    return label + "," + mode + "," + format_fixed(mib, 3) + "," + format_fixed(ratio, 3) + "," +
           format_fixed(test.token_acc, 4) + "," + format_fixed(test.seq_acc, 4) + "," +
           format_fixed(test.rouge_1, 4) + "," + format_fixed(test.rouge_2, 4) + "," + format_fixed(test.rouge_l, 4);
}

namespace {

json inputs_json(const RunManifest& m) {
    json j;
    j["task"] = {{"kind", task_name(m.task.kind)},   {"vocab_size", m.task.vocab_size},
                 {"min_len", m.task.min_len},        {"max_len", m.task.max_len},
                 {"train_size", m.task.train_size},  {"dev_size", m.task.dev_size},
                 {"test_size", m.task.test_size},    {"seed", m.task.seed}};
    j["model"] = {{"vocab_size", m.model.vocab_size},     {"d_model", m.model.d_model},
                  {"n_heads", m.model.n_heads},           {"d_ff", m.model.d_ff},
                  {"n_enc_layers", m.model.n_enc_layers}, {"n_dec_layers", m.model.n_dec_layers},
                  {"max_positions", m.model.max_positions}, {"dropout_rate", m.model.dropout_rate}};
    j["quant"] = m.quant.label();
    j["distill"] = {{"enc_layers", m.distill.enc_layers}, {"dec_layers", m.distill.dec_layers}};
    j["train"] = {{"mode", mode_name(m.train.mode)},
                  {"epochs", m.train.epochs},
                  {"batch_size", m.train.batch_size},
                  {"learning_rate", m.train.learning_rate},
                  {"warmup_fraction", m.train.warmup_fraction},
                  {"seed", m.train.seed},
                  {"eval_metric", m.train.eval_metric},
                  {"clip_norm", m.train.clip_norm},
                  {"eval_batch_size", m.train.eval_batch_size}};
    j["teacher"] = m.teacher_path;
    return j;
}

json row_json(const ResultRow& r) {
    return {{"label", r.label},
            {"mode", r.mode},
            {"mib", r.mib},
            {"ratio", r.ratio},
            {"examples", r.test.examples},
            {"token_acc", r.test.token_acc},
            {"seq_acc", r.test.seq_acc},
            {"rouge_1", r.test.rouge_1},
            {"rouge_2", r.test.rouge_2},
            {"rouge_l", r.test.rouge_l}};
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

template <typename E>
[[noreturn]] void rethrow_as(const std::string& context, const E& e) {
    throw E(context + ": " + e.what());
}

}  // namespace

std::string RunManifest::canonical_inputs() const { return inputs_json(*this).dump(); }

std::string manifest_to_json(const RunManifest& m) {
    json j = inputs_json(m);
    j["name"] = m.name;
    j["output"] = m.output_path;
    j["input_hash"] = m.input_hash;
    j["wall_clock_seconds"] = m.wall_clock_seconds;
    j["results"] = json::array();
    for (const auto& r : m.rows) j["results"].push_back(row_json(r));
    return j.dump(2) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
    RunManifest m;
    std::string field = "(document)";
    try {
        const json j = json::parse(text);
        auto at = [&](const json& obj, const char* key) -> const json& {
            field = key;
            return obj.at(key);
        };
        m.name = j.value("name", "");
        const json& t = at(j, "task");
        m.task.kind = parse_task(at(t, "kind").get<std::string>());
        m.task.vocab_size = at(t, "vocab_size").get<int>();
        m.task.min_len = at(t, "min_len").get<int>();
        m.task.max_len = at(t, "max_len").get<int>();
        m.task.train_size = at(t, "train_size").get<int>();
        m.task.dev_size = at(t, "dev_size").get<int>();
        m.task.test_size = at(t, "test_size").get<int>();
        m.task.seed = at(t, "seed").get<std::uint64_t>();
        const json& md = at(j, "model");
        m.model.vocab_size = at(md, "vocab_size").get<int>();
        m.model.d_model = at(md, "d_model").get<int>();
        m.model.n_heads = at(md, "n_heads").get<int>();
        m.model.d_ff = at(md, "d_ff").get<int>();
        m.model.n_enc_layers = at(md, "n_enc_layers").get<int>();
        m.model.n_dec_layers = at(md, "n_dec_layers").get<int>();
        m.model.max_positions = at(md, "max_positions").get<int>();
        m.model.dropout_rate = at(md, "dropout_rate").get<float>();
        m.quant = QuantConfig::parse(at(j, "quant").get<std::string>());
        const json& d = at(j, "distill");
        m.distill.enc_layers = at(d, "enc_layers").get<int>();
        m.distill.dec_layers = at(d, "dec_layers").get<int>();
        const json& tr = at(j, "train");
        m.train.mode = parse_mode(at(tr, "mode").get<std::string>());
        m.train.epochs = at(tr, "epochs").get<int>();
        m.train.batch_size = at(tr, "batch_size").get<int>();
        m.train.learning_rate = at(tr, "learning_rate").get<float>();
        m.train.warmup_fraction = at(tr, "warmup_fraction").get<float>();
        m.train.seed = at(tr, "seed").get<std::uint64_t>();
        m.train.eval_metric = at(tr, "eval_metric").get<std::string>();
        m.train.clip_norm = at(tr, "clip_norm").get<float>();
        m.train.eval_batch_size = at(tr, "eval_batch_size").get<int>();
        m.teacher_path = at(j, "teacher").get<std::string>();
        m.output_path = j.value("output", "");
        m.input_hash = j.value("input_hash", "");
        m.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
        if (j.contains("results")) {
            for (const json& r : j.at("results")) {
                field = "results";
                ResultRow row;
                row.label = r.at("label").get<std::string>();
                row.mode = r.at("mode").get<std::string>();
                row.mib = r.at("mib").get<double>();
                row.ratio = r.at("ratio").get<double>();
                row.test.examples = r.at("examples").get<std::int64_t>();
                row.test.token_acc = r.at("token_acc").get<double>();
                row.test.seq_acc = r.at("seq_acc").get<double>();
                row.test.rouge_1 = r.at("rouge_1").get<double>();
                row.test.rouge_2 = r.at("rouge_2").get<double>();
                row.test.rouge_l = r.at("rouge_l").get<double>();
                m.rows.push_back(row);
            }
        }
    } catch (const json::exception& e) {
        throw FormatError("manifest field " + field + ": " + e.what());
    } catch (const ConfigError& e) {
        throw FormatError("manifest field " + field + ": " + e.what());
    }
    return m;
}

RunManifest load_manifest(const std::string& path) {
    try {
        return manifest_from_json(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

void save_manifest(const std::string& path, const RunManifest& manifest) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot open " + path + " for writing");
    os << manifest_to_json(manifest);
}

std::string git_blob_sha1(const std::string& content) {
    const std::string blob = "blob " + std::to_string(content.size()) + std::string(1, '\0') + content;
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(blob.data(), blob.size(), md, &len, EVP_sha1(), nullptr) != 1) {
        throw Error("SHA-1 digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xf];
    }
    return out;
}

ExperimentOutput run_pipeline(const RunManifest& manifest, const SeqModel* teacher, const TaskSplits& data) {
    TrainSetup setup;
    setup.model = manifest.model;
    setup.quant = manifest.quant;
    setup.distill = manifest.distill;
    setup.train = manifest.train;

    ExperimentOutput out;
    out.train = train(teacher, setup, data.train, data.dev);
    const SeqModel& best = out.train.model;
    const bool quantized = !manifest.quant.full_precision();
    out.shipped = quantize_model(best, manifest.quant);
    const ModelConfig& reference = teacher != nullptr ? teacher->config : best.config;
    const FootprintReport fp = footprint(reference, best.config, manifest.quant);
    out.row.label = fp.label;
    out.row.mode = mode_name(manifest.train.mode);
    out.row.mib = fp.mib();
    out.row.ratio = fp.ratio();
    out.row.test = evaluate(best, data.test, quantized ? std::optional<QuantConfig>(manifest.quant) : std::nullopt,
                            manifest.train.eval_batch_size);
    return out;
}

std::vector<ResultRow> run_experiment(RunManifest& manifest) {
    const std::string context = "manifest " + (manifest.name.empty() ? std::string("(unnamed)") : manifest.name);
    try {
        const auto start = std::chrono::steady_clock::now();
        std::optional<Checkpoint> teacher;
        std::string inputs = manifest.canonical_inputs();
        if (manifest.train.mode != TrainMode::kTeacher) {
            if (manifest.teacher_path.empty()) throw ConfigError("no teacher checkpoint given");
            if (!std::filesystem::exists(manifest.teacher_path)) {
                throw ConfigError("teacher checkpoint " + manifest.teacher_path + " does not exist");
            }
            const std::string bytes = read_file(manifest.teacher_path);
            teacher = decode_checkpoint(bytes);
            inputs += "\nteacher " + git_blob_sha1(bytes);
        }
        const int max_positions =
            teacher ? teacher->model.config.max_positions : manifest.model.max_positions;
        manifest.task.validate(max_positions);
        const TaskSplits data = generate_task(manifest.task);

        ExperimentOutput out = run_pipeline(manifest, teacher ? &teacher->model : nullptr, data);
        if (!manifest.output_path.empty()) {
            Checkpoint ckpt;
            ckpt.model = out.shipped.view;
            ckpt.quantized = out.shipped.quantized;
            ckpt.meta = out.train.meta;
            save_checkpoint(manifest.output_path, ckpt);
        }
        manifest.input_hash = git_blob_sha1(inputs);
        manifest.rows = {out.row};
        manifest.wall_clock_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return manifest.rows;
    } catch (const FormatError& e) {
        rethrow_as(context, e);
    } catch (const ConfigError& e) {
        rethrow_as(context, e);
    } catch (const ContractError& e) {
        rethrow_as(context, e);
    } catch (const NumericError& e) {
        rethrow_as(context, e);
    } catch (const Error& e) {
        rethrow_as(context, e);
    }
}

std::string merge_tables(const std::vector<RunManifest>& manifests) {
    std::string out = ResultRow::csv_header() + "\n";
    for (const auto& m : manifests) {
        for (const auto& r : m.rows) out += r.csv_row() + "\n";
    }
    return out;
}

}  // namespace dqs
