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
#include <string>
#include <vector>

namespace dqs {

enum class TaskKind { kCopy, kReverse, kSort, kAdd };

const char* task_name(TaskKind kind);
TaskKind parse_task(const std::string& name);

/// Synthetic sequence-to-sequence task. Content tokens are ids 4..vocab-1.
/// For kAdd the source is two equal-length digit strings back to back and
/// the target is their sum; digits d map to id 4 + d.
struct TaskSpec {
    TaskKind kind = TaskKind::kCopy;
    int vocab_size = 16;
    int min_len = 1;
    int max_len = 12;
    int train_size = 2000;
    int dev_size = 200;
    int test_size = 200;
    std::uint64_t seed = 0;

    /// Throws ConfigError. `max_positions` bounds max_len + 2 (bos and eos).
    void validate(int max_positions) const;
    bool operator==(const TaskSpec&) const = default;
};

struct Example {
    std::vector<int> src;
    std::vector<int> tgt;  // ends with eos
    bool operator==(const Example&) const = default;
};

struct Dataset {
    int vocab_size = 0;
    std::vector<Example> examples;

    std::size_t size() const { return examples.size(); }
    bool empty() const { return examples.empty(); }
    /// Longest target, eos included.
    int max_target_len() const;
    bool operator==(const Dataset&) const = default;
};

struct TaskSplits {
    Dataset train, dev, test;
};

/// Target sequence (with eos) for a source under the task's rule.
std::vector<int> task_target(TaskKind kind, const std::vector<int>& src);

/// Split assignment is a function of the source sequence's hash, so the three
/// splits never share a source.
TaskSplits generate_task(const TaskSpec& spec);

std::uint64_t sequence_hash(const std::vector<int>& ids);

/// Space-separated ids with pad, bos and eos removed; stops at the first eos.
std::string detokenize(const std::vector<int>& ids);

}  // namespace dqs
