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


#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "dqs/error.hpp"
#include "dqs/ops.hpp"
#include "dqs/tensor.hpp"
#include "grad_check.hpp"

namespace dqs {
namespace {

using testing::check_gradients;
using testing::op_gradient_checks;
using testing::random_tensor;

std::vector<float> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

TEST(Tensor, ShapeAndData) {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(t.numel(), 6);
    EXPECT_EQ(t.dim(-1), 3);
    EXPECT_EQ(t.at(4), 5.0f);
    EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), DimensionError);
}

TEST(Tensor, HandlesAliasAndCloneCopies) {
    Tensor a({2}, {1, 2});
    Tensor b = a;
    Tensor c = a.clone();
    a.mutable_data()[0] = 9.0f;
    EXPECT_EQ(b.at(0), 9.0f);
    EXPECT_EQ(c.at(0), 1.0f);
    EXPECT_TRUE(a.same_storage(b));
    EXPECT_FALSE(a.same_storage(c));
}

TEST(Matmul, IdentityTimesMatrix) {
    Tensor i({2, 2}, {1, 0, 0, 1});
    Tensor m({2, 2}, {3, 4, 5, 6});
    EXPECT_EQ(vec(ops::matmul(i, m)), (std::vector<float>{3, 4, 5, 6}));
}

TEST(Matmul, RowTimesColumn) {
    Tensor out = ops::matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4}));
    EXPECT_EQ(out.shape(), (Shape{1, 1}));
    EXPECT_EQ(out.item(), 11.0f);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    try {
        ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 5}));
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[4,5]"), std::string::npos) << msg;
    }
}

TEST(Matmul, GradientOfSumMatchesFiniteDifferences) {
    std::mt19937_64 rng(7);
    Tensor a = random_tensor({4, 5}, rng);
    Tensor b = random_tensor({5, 3}, rng);
    auto rep = check_gradients({a, b}, [&] { return ops::matmul(a, b); }, rng);
    EXPECT_LE(rep.max_error, 1e-3) << rep.worst;
}

TEST(Elementwise, AddAndRelu) {
    EXPECT_EQ(vec(ops::add(Tensor({2}, {1, 2}), Tensor({2}, {3, 4}))), (std::vector<float>{4, 6}));
    EXPECT_EQ(vec(ops::relu(Tensor({3}, {-1, 0, 2}))), (std::vector<float>{0, 0, 2}));
    EXPECT_THROW(ops::add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
}

TEST(Elementwise, ScalarBroadcast) {
    EXPECT_EQ(vec(ops::add(Tensor({2}, {1, 2}), 0.5f)), (std::vector<float>{1.5f, 2.5f}));
    EXPECT_EQ(vec(ops::sub(Tensor({2}, {1, 2}), 1.0f)), (std::vector<float>{0, 1}));
    EXPECT_EQ(vec(ops::scale(Tensor({2}, {1, 2}), 3.0f)), (std::vector<float>{3, 6}));
}

TEST(Elementwise, GeluGradientAtHalf) {
    std::mt19937_64 rng(1);
    Tensor x({1}, {0.5f}, true);
    auto rep = check_gradients({x}, [&] { return ops::gelu(x); }, rng);
    EXPECT_LE(rep.max_error, 1e-3) << rep.worst;
    // Tanh-approximation value at 0.5, evaluated in double.
    const double c = std::sqrt(2.0 / M_PI);
    const double want = 0.5 * 0.5 * (1.0 + std::tanh(c * (0.5 + 0.044715 * 0.125)));
    EXPECT_NEAR(ops::gelu(Tensor({1}, {0.5f})).item(), want, 1e-6);
}

TEST(Softmax, Fixtures) {
    EXPECT_EQ(vec(ops::softmax(Tensor({2}, {0, 0}))), (std::vector<float>{0.5f, 0.5f}));
    const auto big = vec(ops::softmax(Tensor({2}, {1000, 0})));
    EXPECT_NEAR(big[0], 1.0f, 1e-6);
    EXPECT_NEAR(big[1], 0.0f, 1e-6);
}

TEST(Softmax, RowsSumToOneForLargeInputs) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(-1e4f, 1e4f);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<float> d(24);
        for (float& v : d) v = u(rng);
        const Tensor y = ops::softmax(Tensor({4, 6}, d), -1);
        for (int r = 0; r < 4; ++r) {
            double s = 0.0;
            for (int c = 0; c < 6; ++c) {
                EXPECT_GE(y.at(r * 6 + c), 0.0f);
                s += y.at(r * 6 + c);
            }
            EXPECT_NEAR(s, 1.0, 1e-6);
        }
    }
}

TEST(Softmax, NonLastAxis) {
    const Tensor y = ops::softmax(Tensor({2, 2}, {0, 1, 0, 1}), 0);
    EXPECT_EQ(vec(y), (std::vector<float>{0.5f, 0.5f, 0.5f, 0.5f}));
}

TEST(LayerNorm, Fixtures) {
    const Tensor g({3}, {1, 1, 1}), b({3}, {0, 0, 0});
    EXPECT_EQ(vec(ops::layer_norm(Tensor({3}, {1, 1, 1}), g, b)), (std::vector<float>{0, 0, 0}));
    const auto y = vec(ops::layer_norm(Tensor({2}, {1, -1}), Tensor({2}, {1, 1}), Tensor({2}, {0, 0})));
    EXPECT_NEAR(y[0], 1.0f, 1e-3);
    EXPECT_NEAR(y[1], -1.0f, 1e-3);
    EXPECT_THROW(ops::layer_norm(Tensor::zeros({2, 3}), Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
}

TEST(LayerNorm, GradientWrtInputAndGain) {
    std::mt19937_64 rng(11);
    Tensor a = random_tensor({3, 5}, rng);
    Tensor g = random_tensor({5}, rng);
    Tensor b = random_tensor({5}, rng);
    auto rep = check_gradients({a, g, b}, [&] { return ops::layer_norm(a, g, b); }, rng);
    EXPECT_LE(rep.max_error, 1e-3) << rep.worst;
}

TEST(Embedding, GathersRows) {
    const Tensor table({2, 2}, {1, 2, 3, 4});
    const std::vector<int> ids{1, 0, 1};
    EXPECT_EQ(vec(ops::embedding(table, ids)), (std::vector<float>{3, 4, 1, 2, 3, 4}));
    const Tensor empty = ops::embedding(table, std::vector<int>{});
    EXPECT_EQ(empty.shape(), (Shape{0, 2}));
}

TEST(Embedding, OutOfRangeNamesId) {
    const Tensor table = Tensor::zeros({3, 2});
    try {
        ops::embedding(table, std::vector<int>{0, 7});
        FAIL() << "expected IndexError";
    } catch (const IndexError& e) {
        EXPECT_NE(std::string(e.what()).find('7'), std::string::npos);
    }
    EXPECT_THROW(ops::embedding(table, std::vector<int>{-1}), IndexError);
}

TEST(Embedding, GradientMatchesOneHotMatmul) {
    std::mt19937_64 rng(5);
    Tensor table = random_tensor({6, 4}, rng);
    const std::vector<int> ids{2, 5, 2, 0, 3};
    Tensor upstream = random_tensor({5, 4}, rng, 1.0f, false);
    {
        Tape tape;
        Tape::Scope scope(tape);
        tape.backward(ops::sum(ops::mul(ops::embedding(table, ids), upstream)));
    }
    // Oracle: grad = onehotᵀ · upstream, computed directly.
    for (int v = 0; v < 6; ++v) {
        for (int d = 0; d < 4; ++d) {
            double want = 0.0;
            for (std::size_t i = 0; i < ids.size(); ++i) {
                if (ids[i] == v) want += upstream.at(static_cast<std::int64_t>(i) * 4 + d);
            }
            EXPECT_NEAR(table.grad()[static_cast<std::size_t>(v * 4 + d)], want, 1e-6);
        }
    }
}

TEST(Mse, Fixtures) {
    const Tensor a({2}, {1, 2}), z({2}, {0, 0});
    EXPECT_EQ(ops::mse(a, a).item(), 0.0f);
    EXPECT_EQ(ops::mse(a, z).item(), 2.5f);
    const std::vector<std::uint8_t> mask{1, 0};
    EXPECT_EQ(ops::mse(a, z, mask).item(), 1.0f);
    const std::vector<std::uint8_t> none{0, 0};
    EXPECT_EQ(ops::mse(a, z, none).item(), 0.0f);
    EXPECT_THROW(ops::mse(a, Tensor::zeros({3})), DimensionError);
}

TEST(CrossEntropy, Fixtures) {
    const std::vector<int> t0{0};
    EXPECT_NEAR(ops::cross_entropy(Tensor({1, 3}, {1e9f, 0, 0}), t0, -1).item(), 0.0f, 1e-6);
    EXPECT_NEAR(ops::cross_entropy(Tensor({1, 4}, {0, 0, 0, 0}), t0, -1).item(), std::log(4.0), 1e-6);
    EXPECT_THROW(ops::cross_entropy(Tensor({1, 4}, {0, 0, 0, 0}), std::vector<int>{4}, -1), IndexError);
}

TEST(CrossEntropy, RandomCaseMatchesLogSumExpOracle) {
    std::mt19937_64 rng(9);
    const Tensor logits = random_tensor({2, 5}, rng, 2.0f, false);
    const std::vector<int> targets{3, 1};
    double want = 0.0;
    for (int r = 0; r < 2; ++r) {
        double m = -1e300;
        for (int c = 0; c < 5; ++c) m = std::max(m, static_cast<double>(logits.at(r * 5 + c)));
        double s = 0.0;
        for (int c = 0; c < 5; ++c) s += std::exp(logits.at(r * 5 + c) - m);
        want += m + std::log(s) - logits.at(r * 5 + targets[static_cast<std::size_t>(r)]);
    }
    EXPECT_NEAR(ops::cross_entropy(logits, targets, -1).item(), want / 2.0, 1e-5);
}

TEST(CrossEntropy, IgnoredTargetsAreSkipped) {
    const Tensor logits({2, 2}, {0, 0, 5, -5});
    const std::vector<int> targets{0, 9};
    EXPECT_NEAR(ops::cross_entropy(logits, targets, 9).item(), std::log(2.0), 1e-6);
}

TEST(Backward, SumGivesOnes) {
    Tensor w({3}, {1, 2, 3}, true);
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(ops::sum(w));
    EXPECT_EQ(vec(Tensor({3}, {w.grad().begin(), w.grad().end()})), (std::vector<float>{1, 1, 1}));
}

TEST(Backward, MseOfSingleElement) {
    Tensor w({1}, {2}, true);
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(ops::mse(w, Tensor::zeros({1})));
    EXPECT_EQ(w.grad()[0], 4.0f);
}

TEST(Backward, ReusedInputAccumulates) {
    std::mt19937_64 rng(2);
    Tensor w = random_tensor({4}, rng);
    auto f = [&] { return ops::add(ops::mul(w, w), ops::scale(w, 3.0f)); };
    auto rep = check_gradients({w}, f, rng);
    EXPECT_LE(rep.max_error, 1e-3) << rep.worst;
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(ops::sum(f()));
    for (std::int64_t i = 0; i < 4; ++i) EXPECT_NEAR(w.grad()[static_cast<std::size_t>(i)], 2 * w.at(i) + 3, 1e-5);
}

TEST(Backward, NonScalarLossIsContractError) {
    Tensor w({3}, {1, 2, 3}, true);
    Tape tape;
    Tape::Scope scope(tape);
    EXPECT_THROW(tape.backward(ops::scale(w, 2.0f)), ContractError);
}

TEST(Backward, NoActiveTapeIsContractError) {
    Tensor w({1}, {1}, true);
    EXPECT_THROW(backward(ops::sum(w)), ContractError);
}

TEST(Backward, NothingRecordedWithoutTape) {
    Tensor w({2}, {1, 2}, true);
    Tape tape;
    const Tensor y = ops::scale(w, 2.0f);
    EXPECT_EQ(tape.size(), 0u);
    Tape::Scope scope(tape);
    ops::scale(Tensor({2}, {1, 2}), 2.0f);  // no input requires grad
    EXPECT_EQ(tape.size(), 0u);
    ops::scale(w, 2.0f);
    EXPECT_EQ(tape.size(), 1u);
}

TEST(Backward, RepeatedBackwardDoesNotDoubleCountIntermediates) {
    Tensor w({2}, {1, 2}, true);
    Tape tape;
    Tape::Scope scope(tape);
    const Tensor loss = ops::sum(ops::scale(w, 3.0f));
    tape.backward(loss);
    w.zero_grad();
    tape.backward(loss);
    EXPECT_EQ(w.grad()[0], 3.0f);
}

TEST(Backward, DeterministicGradients) {
    auto run = [] {
        std::mt19937_64 rng(4);
        Tensor a = random_tensor({3, 8}, rng);
        Tensor b = random_tensor({8, 8}, rng);
        Tape tape;
        Tape::Scope scope(tape);
        tape.backward(ops::sum(ops::softmax(ops::gelu(ops::matmul(a, b)))));
        return std::make_pair(std::vector<float>(a.grad().begin(), a.grad().end()),
                              std::vector<float>(b.grad().begin(), b.grad().end()));
    };
    EXPECT_EQ(run(), run());
}

TEST(StraightThrough, GradientIsIdentity) {
    Tensor w({3}, {0.3f, -1.2f, 2.0f}, true);
    Tape tape;
    Tape::Scope scope(tape);
    const Tensor y = ops::straight_through(w, [](std::span<const float> in, std::span<float> out) {
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::round(in[i]);
    });
    EXPECT_EQ(vec(y), (std::vector<float>{0, -1, 2}));
    tape.backward(ops::sum(ops::scale(y, 2.0f)));
    EXPECT_EQ(vec(Tensor({3}, {w.grad().begin(), w.grad().end()})), (std::vector<float>{2, 2, 2}));
}

TEST(Dropout, ZeroRateIsIdentityAndTrainingScales) {
    std::mt19937_64 rng(1);
    Tensor x = Tensor::full({1000}, 1.0f);
    EXPECT_TRUE(ops::dropout(x, 0.0f, rng).same_storage(x));
    const Tensor y = ops::dropout(x, 0.5f, rng);
    int kept = 0;
    for (float v : y.data()) {
        EXPECT_TRUE(v == 0.0f || v == 2.0f);
        kept += v != 0.0f;
    }
    EXPECT_GT(kept, 400);
    EXPECT_LT(kept, 600);
}

// Property: each differentiable op agrees with central differences over
// 100 random seeds on tensors of at most 64 elements.
class OpGradients : public ::testing::TestWithParam<int> {};

TEST_P(OpGradients, MatchFiniteDifferences) {
    const auto results = op_gradient_checks(static_cast<std::uint64_t>(GetParam()));
    EXPECT_EQ(results.size(), 24u);
    for (const auto& r : results) {
        EXPECT_LE(r.report.max_error, 1e-3) << r.name << ": " << r.report.worst;
        EXPECT_GT(r.report.probes, 0) << r.name;
    }
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradients, ::testing::Range(0, 100));

}  // namespace
}  // namespace dqs
