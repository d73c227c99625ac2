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

#include <string>
#include <vector>

#include "dqs/distill.hpp"
#include "dqs/model.hpp"
#include "dqs/quant.hpp"
#include "dqs/tasks.hpp"
#include "dqs/trainer.hpp"

namespace dqs {

/// One line of a results table.
struct ResultRow {
    std::string label;  // "W-E-A E-D"
    std::string mode;
    double mib = 0.0;
    double ratio = 0.0;
    EvalReport test;

    static std::string csv_header();
    /// Fixed decimals, period separator, independent of the global locale.
    std::string csv_row() const;
    bool operator==(const ResultRow&) const = default;
};

/// Everything needed to reproduce one run, plus its results once run.
struct RunManifest {
    std::string name;
    TaskSpec task;
    ModelConfig model;  // architecture for mode teacher; students derive theirs from the teacher
    QuantConfig quant;
    DistillConfig distill;  // 0 layers = teacher depth
    TrainConfig train;
    std::string teacher_path;  // checkpoint; required by every mode but teacher
    std::string output_path;   // checkpoint to write; empty = none

    std::string input_hash;
    std::vector<ResultRow> rows;
    double wall_clock_seconds = 0.0;

    /// Deterministic text of the inputs that determine the results.
    std::string canonical_inputs() const;
};

std::string manifest_to_json(const RunManifest& manifest);
/// Throws FormatError naming the offending field.
RunManifest manifest_from_json(const std::string& text);
RunManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const RunManifest& manifest);

/// Hex SHA-1 of "blob <size>\0<content>", as git computes object ids.
std::string git_blob_sha1(const std::string& content);

struct ExperimentOutput {
    ResultRow row;
    TrainResult train;
    /// The shipped model: the best master, or its quantized view when the
    /// run is quantized.
    QuantizedModel shipped;
};

/// Trains (or directly quantizes) per `manifest` on already generated data
/// and scores the shipped model on the test split.
ExperimentOutput run_pipeline(const RunManifest& manifest, const SeqModel* teacher, const TaskSplits& data);

/// Loads the teacher (before anything else), generates the task, runs the
/// pipeline, writes the output checkpoint if requested and fills in
/// input_hash, rows and wall_clock_seconds. Errors carry the manifest name.
std::vector<ResultRow> run_experiment(RunManifest& manifest);

/// Header plus every row of every manifest, in order.
std::string merge_tables(const std::vector<RunManifest>& manifests);

}  // namespace dqs
