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
#include <map>
#include <string>
#include <vector>

#include "dqs/model.hpp"
#include "dqs/quant.hpp"
#include "dqs/trainer.hpp"

namespace dqs {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// A model plus the quantized form of some of its parameters. Slots named in
/// `quantized` hold dequantize(quantized[name]) after loading.
struct Checkpoint {
    SeqModel model;
    std::map<std::string, QuantizedTensor> quantized;
    CheckpointMeta meta;
};

/// Binary layout, all integers little-endian:
///   "DQS2", u32 version,
///   u32 length + UTF-8 config block (sorted key=value lines),
///   u32 record count, then per tensor in sorted-name order:
///     u32 name length, name, u32 rank, u64 dims[rank], u8 dtype,
///     dtype 0 (f32): numel f32 values;
///     dtype 1 (quantized): u8 bits, u8 granularity, u64 scale count,
///       f32 scales, packed codes (pack_codes layout).
std::string encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on bad magic, version, truncation or inconsistent records.
Checkpoint decode_checkpoint(const std::string& bytes);

/// Quantized slots of `quantized` replace the matching parameters on disk.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Canonical key=value text of a metadata record, one line per key.
std::string config_block(const CheckpointMeta& meta);
CheckpointMeta parse_config_block(const std::string& text);

}  // namespace dqs
