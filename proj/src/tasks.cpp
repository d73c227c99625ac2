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


#include "dqs/tasks.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "dqs/error.hpp"
#include "dqs/model.hpp"

namespace dqs {

namespace {

constexpr int kFirstContentId = 4;
constexpr int kDigits = 10;

}  // namespace

const char* task_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::kCopy: return "copy";
        case TaskKind::kReverse: return "reverse";
        case TaskKind::kSort: return "sort";
        case TaskKind::kAdd: return "add";
    }
    return "?";
}

TaskKind parse_task(const std::string& name) {
    for (TaskKind k : {TaskKind::kCopy, TaskKind::kReverse, TaskKind::kSort, TaskKind::kAdd}) {
        if (name == task_name(k)) return k;
    }
    throw ConfigError("unknown task '" + name + "' (expected copy, reverse, sort or add)");
}

void TaskSpec::validate(int max_positions) const {
    if (kind == TaskKind::kAdd) {
        if (vocab_size < kFirstContentId + kDigits) {
            throw ConfigError("task add needs vocab_size >= 14, got " + std::to_string(vocab_size));
        }
        if ((min_len + 1) / 2 > max_len / 2) {
            throw ConfigError("task add needs an even source length within [min_len, max_len]");
        }
    } else if (vocab_size <= kFirstContentId) {
        throw ConfigError("vocab_size " + std::to_string(vocab_size) + " leaves no content tokens");
    }
    if (min_len < 1 || min_len > max_len) {
        throw ConfigError("length range [" + std::to_string(min_len) + ", " + std::to_string(max_len) +
                          "] is empty or starts below 1");
    }
    if (max_len + 2 > max_positions) {
        throw ConfigError("max_len " + std::to_string(max_len) + " + 2 exceeds max_positions " +
                          std::to_string(max_positions));
    }
    if (train_size < 0 || dev_size < 0 || test_size < 0 || train_size + dev_size + test_size == 0) {
        throw ConfigError("split sizes must be non-negative and not all zero");
    }
}

int Dataset::max_target_len() const {
    std::size_t n = 0;
    for (const auto& e : examples) n = std::max(n, e.tgt.size());
    return static_cast<int>(n);
}

std::vector<int> task_target(TaskKind kind, const std::vector<int>& src) {
    std::vector<int> tgt;
    switch (kind) {
        case TaskKind::kCopy:
            tgt = src;
            break;
        case TaskKind::kReverse:
            tgt.assign(src.rbegin(), src.rend());
            break;
        case TaskKind::kSort:
            tgt = src;
            std::sort(tgt.begin(), tgt.end());
            break;
        case TaskKind::kAdd: {
            if (src.size() % 2 != 0) throw ContractError("add source must have even length");
            const std::size_t k = src.size() / 2;
            tgt.assign(k + 1, 0);
            int carry = 0;
            for (std::size_t i = k; i-- > 0;) {
                const int s = (src[i] - kFirstContentId) + (src[k + i] - kFirstContentId) + carry;
                tgt[i + 1] = kFirstContentId + s % kDigits;
                carry = s / kDigits;
            }
            tgt[0] = kFirstContentId + carry;
            break;
        }
    }
    tgt.push_back(kEosId);
    return tgt;
}

std::uint64_t sequence_hash(const std::vector<int>& ids) {
    // FNV-1a over the little-endian bytes of each id.
    std::uint64_t h = 14695981039346656037ull;
    for (int id : ids) {
        auto u = static_cast<std::uint32_t>(id);
        for (int b = 0; b < 4; ++b) {
            h ^= (u >> (8 * b)) & 0xffu;
            h *= 1099511628211ull;
        }
    }
    return h;
}

TaskSplits generate_task(const TaskSpec& spec) {
    spec.validate(spec.max_len + 2);
    std::mt19937_64 rng(spec.seed);
    TaskSplits out;
    out.train.vocab_size = out.dev.vocab_size = out.test.vocab_size = spec.vocab_size;

    const auto total = static_cast<std::uint64_t>(spec.train_size + spec.dev_size + spec.test_size);
    const auto train_end = static_cast<std::uint64_t>(spec.train_size);
    const auto dev_end = train_end + static_cast<std::uint64_t>(spec.dev_size);
    std::set<std::vector<int>> seen;
    const std::uint64_t max_attempts = 200 * total + 1000;

    std::uniform_int_distribution<int> token(kFirstContentId, spec.vocab_size - 1);
    std::uniform_int_distribution<int> digit(kFirstContentId, kFirstContentId + kDigits - 1);
    std::uniform_int_distribution<int> length(spec.min_len, spec.max_len);
    std::uniform_int_distribution<int> half((spec.min_len + 1) / 2, spec.max_len / 2);

    std::uint64_t filled = 0;
    for (std::uint64_t attempt = 0; filled < total; ++attempt) {
        if (attempt >= max_attempts) {
            throw ConfigError(std::string("task ") + task_name(spec.kind) + " cannot produce " +
                              std::to_string(total) + " distinct sources with this vocabulary and length");
        }
        std::vector<int> src;
        if (spec.kind == TaskKind::kAdd) {
            const int k = std::max(1, half(rng));
            for (int i = 0; i < 2 * k; ++i) src.push_back(digit(rng));
        } else {
            const int n = length(rng);
            for (int i = 0; i < n; ++i) src.push_back(token(rng));
        }
        if (seen.count(src) != 0) continue;
        const std::uint64_t bucket = sequence_hash(src) % total;
        Dataset& split = bucket < train_end ? out.train : bucket < dev_end ? out.dev : out.test;
        const std::size_t cap = bucket < train_end ? train_end
                                : bucket < dev_end ? static_cast<std::size_t>(spec.dev_size)
                                                   : static_cast<std::size_t>(spec.test_size);
        if (split.examples.size() >= cap) continue;
        seen.insert(src);
        split.examples.push_back({src, task_target(spec.kind, src)});
        ++filled;
    }
    return out;
}

std::string detokenize(const std::vector<int>& ids) {
    std::string out;
    for (int id : ids) {
        if (id == kEosId) break;
        if (id == kPadId || id == kBosId) continue;
        if (!out.empty()) out += ' ';
        out += std::to_string(id);
    }
    return out;
}

}  // namespace dqs
