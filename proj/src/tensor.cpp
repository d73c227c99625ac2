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

#include "dqs/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "dqs/error.hpp"

namespace dqs {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

float* TensorImpl::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0f);
    return grad.data();
}

Tensor::Tensor(Shape shape, std::vector<float> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
    for (auto d : shape) {
        if (d < 0) throw DimensionError("negative dimension in shape " + shape_str(shape));
    }
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw DimensionError("shape " + shape_str(shape) + " does not match " +
                             std::to_string(data.size()) + " elements");
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
    auto n = static_cast<std::size_t>(shape_numel(shape));
    return Tensor(std::move(shape), std::vector<float>(n, value), requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) {
    return Tensor({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
    if (!impl_) throw ContractError("use of undefined tensor");
    return impl_->shape;
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(data().size()); }

std::int64_t Tensor::dim(std::int64_t i) const {
    const auto& s = shape();
    if (i < 0) i += static_cast<std::int64_t>(s.size());
    if (i < 0 || i >= static_cast<std::int64_t>(s.size())) {
        throw IndexError("dimension index " + std::to_string(i) + " out of range for shape " +
                         shape_str(s));
    }
    return s[static_cast<std::size_t>(i)];
}

std::span<const float> Tensor::data() const {
    if (!impl_) throw ContractError("use of undefined tensor");
    return impl_->data;
}

std::span<float> Tensor::mutable_data() {
    if (!impl_) throw ContractError("use of undefined tensor");
    return impl_->data;
}

float Tensor::item() const {
    if (numel() != 1) {
        throw ContractError("item() on tensor of shape " + shape_str(shape()));
    }
    return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
    if (!impl_) throw ContractError("use of undefined tensor");
    impl_->requires_grad = value;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const float> Tensor::grad() const {
    if (!impl_) return {};
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (impl_) impl_->grad.clear();
}

Tensor Tensor::clone() const {
    return Tensor(shape(), impl_->data, impl_->requires_grad);
}

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data, false); }

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::vector<std::shared_ptr<TensorImpl>> inputs,
                  std::shared_ptr<TensorImpl> output, BackwardFn backward) {
    records_.push_back({std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward() requires a scalar loss, got shape " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) {
        throw ContractError("backward() on a loss that does not require grad");
    }
    const auto& target = loss.impl();

    std::size_t end = records_.size();
    while (end > 0 && records_[end - 1].output != target) --end;
    if (end == 0) {
        // A leaf parameter used directly as the loss.
        target->grad_buffer()[0] += 1.0f;
        return;
    }

    // Intermediate gradients are per-sweep; only leaves accumulate across calls.
    for (std::size_t i = 0; i < end; ++i) records_[i].output->grad.clear();
    target->grad_buffer()[0] += 1.0f;
    for (std::size_t i = end; i-- > 0;) {
        auto& rec = records_[i];
        if (rec.output->grad.empty()) continue;
        rec.backward(rec.output->grad);
    }
}

void backward(const Tensor& loss) {
    Tape* tape = Tape::active();
    if (!tape) throw ContractError("backward() called with no active tape");
    tape->backward(loss);
}

}  // namespace dqs
