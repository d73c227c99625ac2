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
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dqs {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Storage behind a Tensor handle. Gradients are allocated lazily on first
/// accumulation, so an empty `grad` means "no gradient reached this tensor".
struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;
    bool requires_grad = false;

    float* grad_buffer();
};

/// Dense row-major float32 tensor.
///
/// Tensor is a reference handle: copies alias the same storage. This is what
/// lets the token embedding table be shared between the encoder input, the
/// decoder input and the output projection. Use clone() for a deep copy.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<float> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value, bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::int64_t numel() const;
    std::int64_t rank() const { return static_cast<std::int64_t>(shape().size()); }
    std::int64_t dim(std::int64_t i) const;

    std::span<const float> data() const;
    std::span<float> mutable_data();
    float item() const;
    float at(std::int64_t flat) const { return data()[static_cast<std::size_t>(flat)]; }

    bool requires_grad() const;
    void set_requires_grad(bool value);
    bool has_grad() const;
    /// Gradient view; empty span when no gradient has been accumulated.
    std::span<const float> grad() const;
    void zero_grad();

    /// Deep copy of data (and requires_grad flag); gradient is not copied.
    Tensor clone() const;
    /// Deep copy of data with requires_grad cleared.
    Tensor detach() const;

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

/// Ordered record of differentiable operations.
///
/// Operations record themselves onto the tape made active by a Tape::Scope on
/// the current thread, and only when at least one input requires a gradient.
/// With no active tape every op is a plain forward computation.
class Tape {
public:
    /// Receives the output gradient and accumulates into the captured inputs.
    using BackwardFn = std::function<void(std::span<const float> out_grad)>;

    struct Record {
        std::vector<std::shared_ptr<TensorImpl>> inputs;
        std::shared_ptr<TensorImpl> output;
        BackwardFn backward;
    };

    class Scope {
    public:
        explicit Scope(Tape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* previous_;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    void record(std::vector<std::shared_ptr<TensorImpl>> inputs,
                std::shared_ptr<TensorImpl> output, BackwardFn backward);

    /// Reverse sweep from a scalar loss. Every recorded op after the loss's
    /// producer is ignored; every op before it runs at most once.
    void backward(const Tensor& loss);

    std::size_t size() const { return records_.size(); }
    const std::vector<Record>& records() const { return records_; }
    void clear() { records_.clear(); }

private:
    std::vector<Record> records_;
};

/// Convenience wrapper for Tape::active()->backward(loss).
void backward(const Tensor& loss);

}  // namespace dqs
