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


#include "dqs/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "dqs/error.hpp"

namespace dqs {

namespace {

constexpr char kMagic[4] = {'D', 'Q', 'S', '2'};
constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::uint8_t kDtypeQuantized = 1;

template <typename T>
std::string to_text(T value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    (void)ec;
    return std::string(buf, end);
}

template <typename T>
T from_text(const std::string& key, const std::string& text) {
    T value{};
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || end != text.data() + text.size()) {
        throw FormatError("config block: bad value '" + text + "' for " + key);
    }
    return value;
}

class Writer {
public:
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& data) : data_(data) {}

    const char* take(std::size_t n, const char* what) {
        if (n > data_.size() - pos_) {
            throw FormatError(std::string("truncated checkpoint while reading ") + what + " at byte " +
                              std::to_string(pos_));
        }
        const char* p = data_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(*take(1, what)); }
    std::uint32_t u32(const char* what) {
        const auto* p = reinterpret_cast<const unsigned char*>(take(4, what));
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64(const char* what) {
        const auto* p = reinterpret_cast<const unsigned char*>(take(8, what));
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        return v;
    }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
    std::string str(const char* what) {
        const std::uint32_t n = u32(what);
        return std::string(take(n, what), n);
    }
    bool done() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    const std::string& data_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string config_block(const CheckpointMeta& meta) {
    std::map<std::string, std::string> kv;
    const ModelConfig& m = meta.model;
    kv["model.vocab_size"] = to_text(m.vocab_size);
    kv["model.d_model"] = to_text(m.d_model);
    kv["model.n_heads"] = to_text(m.n_heads);
    kv["model.d_ff"] = to_text(m.d_ff);
    kv["model.n_enc_layers"] = to_text(m.n_enc_layers);
    kv["model.n_dec_layers"] = to_text(m.n_dec_layers);
    kv["model.max_positions"] = to_text(m.max_positions);
    kv["model.dropout_rate"] = to_text(m.dropout_rate);
    kv["quant.w_bits"] = to_text(meta.quant.w_bits);
    kv["quant.e_bits"] = to_text(meta.quant.e_bits);
    kv["quant.a_bits"] = to_text(meta.quant.a_bits);
    kv["distill.enc_layers"] = to_text(meta.distill.enc_layers);
    kv["distill.dec_layers"] = to_text(meta.distill.dec_layers);
    const TrainConfig& t = meta.train;
    kv["train.mode"] = mode_name(t.mode);
    kv["train.epochs"] = to_text(t.epochs);
    kv["train.batch_size"] = to_text(t.batch_size);
    kv["train.learning_rate"] = to_text(t.learning_rate);
    kv["train.warmup_fraction"] = to_text(t.warmup_fraction);
    kv["train.seed"] = to_text(t.seed);
    kv["train.eval_metric"] = t.eval_metric;
    kv["train.clip_norm"] = to_text(t.clip_norm);
    kv["train.eval_batch_size"] = to_text(t.eval_batch_size);
    kv["meta.step"] = to_text(meta.step);
    kv["meta.best_index"] = to_text(meta.best_index);
    kv["history.count"] = to_text(meta.history.size());
    for (std::size_t i = 0; i < meta.history.size(); ++i) {
        const EvalRecord& e = meta.history[i];
        kv["history." + to_text(i)] = to_text(e.epoch) + " " + to_text(e.step) + " " + to_text(e.report.examples) +
                                      " " + to_text(e.report.token_acc) + " " + to_text(e.report.seq_acc) + " " +
                                      to_text(e.report.rouge_1) + " " + to_text(e.report.rouge_2) + " " +
                                      to_text(e.report.rouge_l);
    }
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

CheckpointMeta parse_config_block(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("config block: line without '=': " + line);
        if (!kv.emplace(line.substr(0, eq), line.substr(eq + 1)).second) {
            throw FormatError("config block: duplicate key " + line.substr(0, eq));
        }
    }
    std::set<std::string> used;
    auto get = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw FormatError("config block: missing key " + key);
        used.insert(key);
        return it->second;
    };
    auto get_int = [&](const std::string& key) { return from_text<int>(key, get(key)); };
    auto get_float = [&](const std::string& key) { return from_text<float>(key, get(key)); };

    CheckpointMeta meta;
    meta.model.vocab_size = get_int("model.vocab_size");
    meta.model.d_model = get_int("model.d_model");
    meta.model.n_heads = get_int("model.n_heads");
    meta.model.d_ff = get_int("model.d_ff");
    meta.model.n_enc_layers = get_int("model.n_enc_layers");
    meta.model.n_dec_layers = get_int("model.n_dec_layers");
    meta.model.max_positions = get_int("model.max_positions");
    meta.model.dropout_rate = get_float("model.dropout_rate");
    meta.quant.w_bits = get_int("quant.w_bits");
    meta.quant.e_bits = get_int("quant.e_bits");
    meta.quant.a_bits = get_int("quant.a_bits");
    meta.distill.enc_layers = get_int("distill.enc_layers");
    meta.distill.dec_layers = get_int("distill.dec_layers");
    try {
        meta.train.mode = parse_mode(get("train.mode"));
    } catch (const ConfigError& e) {
        throw FormatError(std::string("config block: ") + e.what());
    }
    meta.train.epochs = get_int("train.epochs");
    meta.train.batch_size = get_int("train.batch_size");
    meta.train.learning_rate = get_float("train.learning_rate");
    meta.train.warmup_fraction = get_float("train.warmup_fraction");
    meta.train.seed = from_text<std::uint64_t>("train.seed", get("train.seed"));
    meta.train.eval_metric = get("train.eval_metric");
    meta.train.clip_norm = get_float("train.clip_norm");
    meta.train.eval_batch_size = get_int("train.eval_batch_size");
    meta.step = from_text<std::int64_t>("meta.step", get("meta.step"));
    meta.best_index = get_int("meta.best_index");
    const auto count = from_text<std::size_t>("history.count", get("history.count"));
    for (std::size_t i = 0; i < count; ++i) {
        const std::string key = "history." + to_text(i);
        std::istringstream fields(get(key));
        std::vector<std::string> f{std::istream_iterator<std::string>(fields), {}};
        if (f.size() != 8) throw FormatError("config block: " + key + " needs 8 fields");
        EvalRecord e;
        e.epoch = from_text<int>(key, f[0]);
        e.step = from_text<std::int64_t>(key, f[1]);
        e.report.examples = from_text<std::int64_t>(key, f[2]);
        e.report.token_acc = from_text<double>(key, f[3]);
        e.report.seq_acc = from_text<double>(key, f[4]);
        e.report.rouge_1 = from_text<double>(key, f[5]);
        e.report.rouge_2 = from_text<double>(key, f[6]);
        e.report.rouge_l = from_text<double>(key, f[7]);
        meta.history.push_back(e);
    }
    for (const auto& [k, v] : kv) {
        if (used.count(k) == 0) throw FormatError("config block: unknown key " + k);
    }
    if (meta.best_index < -1 || meta.best_index >= static_cast<int>(meta.history.size())) {
        throw FormatError("config block: best_index " + to_text(meta.best_index) + " does not index the history");
    }
    try {
        meta.model.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("config block: ") + e.what());
    }
    return meta;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
    if (!(ckpt.meta.model == ckpt.model.config)) {
        throw ContractError("checkpoint metadata describes a different model config");
    }
    std::map<std::string, Tensor> params;
    for (const auto& p : named_parameters(ckpt.model)) params.emplace(p.name, p.tensor);
    for (const auto& [name, q] : ckpt.quantized) {
        auto it = params.find(name);
        if (it == params.end()) throw ContractError("quantized tensor " + name + " is not a model parameter");
        if (q.shape != it->second.shape()) {
            throw ContractError("quantized tensor " + name + " has shape " + shape_str(q.shape) +
                                ", parameter has " + shape_str(it->second.shape()));
        }
    }

    Writer w;
    w.bytes(kMagic, 4);
    w.u32(kCheckpointVersion);
    w.str(config_block(ckpt.meta));
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(t.rank()));
        for (std::int64_t d : t.shape()) w.u64(static_cast<std::uint64_t>(d));
        auto q = ckpt.quantized.find(name);
        if (q == ckpt.quantized.end()) {
            w.u8(kDtypeF32);
            for (float v : t.data()) w.f32(v);
            continue;
        }
        w.u8(kDtypeQuantized);
        w.u8(static_cast<std::uint8_t>(q->second.bits));
        w.u8(static_cast<std::uint8_t>(q->second.granularity == Granularity::kPerRow ? 1 : 0));
        w.u64(q->second.scales.size());
        for (float s : q->second.scales) w.f32(s);
        const auto packed = pack_codes(q->second.codes, q->second.bits);
        w.bytes(packed.data(), packed.size());
    }
    return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    const char* magic = r.take(4, "magic");
    if (std::string(magic, 4) != std::string(kMagic, 4)) {
        throw FormatError("bad checkpoint magic (expected DQS2)");
    }
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    Checkpoint ckpt;
    ckpt.meta = parse_config_block(r.str("config block"));
    ckpt.model = init_model(ckpt.meta.model, 0);

    std::map<std::string, Tensor> params;
    for (const auto& p : named_parameters(ckpt.model)) params.emplace(p.name, p.tensor);
    const std::uint32_t count = r.u32("record count");
    if (count != params.size()) {
        throw FormatError("checkpoint has " + std::to_string(count) + " tensors, config implies " +
                          std::to_string(params.size()));
    }
    std::string previous;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str("tensor name");
        if (i > 0 && !(previous < name)) throw FormatError("tensor records out of order at " + name);
        previous = name;
        auto it = params.find(name);
        if (it == params.end()) throw FormatError("unknown tensor " + name);
        Tensor& t = it->second;
        const std::uint32_t rank = r.u32("rank");
        Shape shape;
        for (std::uint32_t d = 0; d < rank && d < 8; ++d) shape.push_back(static_cast<std::int64_t>(r.u64("dims")));
        if (shape != t.shape()) {
            throw FormatError("tensor " + name + " has shape " + shape_str(shape) + ", config implies " +
                              shape_str(t.shape()));
        }
        const std::uint8_t dtype = r.u8("dtype");
        auto out = t.mutable_data();
        if (dtype == kDtypeF32) {
            for (float& v : out) v = r.f32("f32 payload");
        } else if (dtype == kDtypeQuantized) {
            QuantizedTensor q;
            q.shape = shape;
            q.bits = r.u8("bits");
            if (q.bits < 2 || q.bits > 8) throw FormatError("tensor " + name + ": bad bit width " + std::to_string(q.bits));
            const std::uint8_t gran = r.u8("granularity");
            if (gran > 1) throw FormatError("tensor " + name + ": bad granularity tag");
            q.granularity = gran == 1 ? Granularity::kPerRow : Granularity::kPerTensor;
            const std::uint64_t nscales = r.u64("scale count");
            const std::uint64_t expected = gran == 1 && shape.size() >= 2 ? static_cast<std::uint64_t>(shape[0]) : 1;
            if (nscales != expected) throw FormatError("tensor " + name + ": bad scale count");
            for (std::uint64_t s = 0; s < nscales; ++s) q.scales.push_back(r.f32("scales"));
            const auto nbytes = static_cast<std::size_t>(packed_code_bytes(t.numel(), q.bits));
            const auto* p = reinterpret_cast<const std::uint8_t*>(r.take(nbytes, "packed codes"));
            q.codes = unpack_codes(std::span<const std::uint8_t>(p, nbytes), t.numel(), q.bits);
            dequantize_into(q, out);
            ckpt.quantized.emplace(name, std::move(q));
        } else {
            throw FormatError("tensor " + name + ": unknown dtype tag " + std::to_string(dtype));
        }
    }
    if (!r.done()) throw FormatError(std::to_string(r.remaining()) + " trailing bytes after the last tensor");
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    const std::string bytes = encode_checkpoint(ckpt);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + path + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open checkpoint " + path);
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    try {
        return decode_checkpoint(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

}  // namespace dqs
