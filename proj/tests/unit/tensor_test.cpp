#include <gtest/gtest.h>

#include <cmath>

#include "uapforge/rng.hpp"
#include "uapforge/tensor/adam.hpp"
#include "uapforge/tensor/gradcheck.hpp"
#include "uapforge/tensor/ops.hpp"

namespace uapforge {
namespace {

using TD = BasicTensor<double>;

TD vec(std::vector<double> v) {
    const std::size_t n = v.size();
    return TD({n}, std::move(v));
}

TEST(Ops, ReluZeroesNegatives) {
    Graph<double> g;
    auto y = ops::relu(g.constant(vec({-1, 0, 2})));
    EXPECT_EQ(y.value(), vec({0, 0, 2}));
}

TEST(Ops, ConvOfOnesSumsNineTerms) {
    Graph<double> g;
    auto x = g.constant(TD({1, 1, 4, 4}, 1.0));
    auto w = g.constant(TD({1, 1, 3, 3}, 1.0));
    auto y = ops::conv2d<double>(x, w, {}, {});
    EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
    for (double v : y.value().data()) EXPECT_EQ(v, 9.0);
}

TEST(Ops, ConvTransposeRestoresDownsampledSize) {
    Graph<double> g;
    auto x = g.constant(TD({2, 4, 7, 7}, 0.5));
    auto w = g.constant(TD({4, 3, 4, 4}, 0.1));
    auto y = ops::conv_transpose2d<double>(x, w, {}, {.stride = 2, .padding = 1});
    EXPECT_EQ(y.shape(), (Shape{2, 3, 14, 14}));
}

TEST(Ops, SoftmaxOfZerosIsUniform) {
    Graph<double> g;
    auto y = ops::softmax(g.constant(TD({1, 4}, 0.0)));
    for (double v : y.value().data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Ops, SoftmaxRowsAreDistributions) {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        TD x({4, 10});
        for (double& v : x.data()) v = rng.uniform(-30.0, 30.0);
        Graph<double> g;
        auto y = ops::softmax(g.constant(x));
        for (std::size_t r = 0; r < 4; ++r) {
            double total = 0;
            for (std::size_t c = 0; c < 10; ++c) {
                const double p = y.value()[r * 10 + c];
                EXPECT_GE(p, 0.0);
                total += p;
            }
            EXPECT_NEAR(total, 1.0, 1e-6);
        }
    }
}

TEST(Ops, ShapeMismatchNamesOpAndShapes) {
    Graph<double> g;
    try {
        ops::mul(g.constant(TD({2, 3})), g.constant(TD({3, 2})));
        FAIL() << "expected ContractViolation";
    } catch (const ContractViolation& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("mul"), std::string::npos);
        EXPECT_NE(msg.find("[2x3]"), std::string::npos);
        EXPECT_NE(msg.find("[3x2]"), std::string::npos);
    }
}

TEST(Ops, SignIsForwardOnly) {
    Graph<double> g;
    auto x = g.param(vec({-2, 0, 3}));
    auto s = ops::sign(x);
    EXPECT_EQ(s.value(), vec({-1, 0, 1}));
    EXPECT_FALSE(s.requires_grad());
}

TEST(Backward, MeanOfSquares) {
    Graph<double> g;
    auto x = g.param(vec({1, 2}));
    g.backward(ops::mean(ops::mul(x, x)));
    EXPECT_EQ(x.grad(), vec({1, 2}));
}

TEST(Backward, ReluGate) {
    Graph<double> g;
    auto x = g.param(vec({-1, 2}));
    g.backward(ops::sum(ops::relu(x)));
    EXPECT_EQ(x.grad(), vec({0, 1}));
}

TEST(Backward, UnreachableParamsGetZeroGradient) {
    Graph<double> g;
    auto x = g.param(vec({1, 2}));
    auto unused = g.param(vec({5, 6, 7}));
    g.backward(ops::sum(x));
    EXPECT_EQ(unused.grad(), TD({3}));
}

TEST(Backward, RejectsNonScalarLoss) {
    Graph<double> g;
    auto x = g.param(vec({1, 2}));
    EXPECT_THROW(g.backward(ops::relu(x)), ContractViolation);
}

TEST(Backward, NonFiniteAdjointNamesOp) {
    Graph<double> g;
    auto x = g.param(vec({1e-200}));
    auto y = ops::reciprocal(x);
    ASSERT_TRUE(y.value().all_finite());
    try {
        g.backward(ops::sum(y));
        FAIL() << "expected NumericFailure";
    } catch (const NumericFailure& e) {
        EXPECT_NE(std::string(e.what()).find("reciprocal"), std::string::npos);
    }
}

TEST(Backward, GradientsOfIndependentSubgraphsAdd) {
    Rng rng(3);
    TD a({2, 3}), b({4});
    for (double& v : a.data()) v = rng.uniform(-1, 1);
    for (double& v : b.data()) v = rng.uniform(0.5, 2);

    auto loss_b = [](Graph<double>&, Var<double> vb) { return ops::mean(ops::log(vb)); };

    Graph<double> ga;
    auto va = ga.param(a);
    ga.backward(ops::l2_norm(ops::mul(va, va)));
    Graph<double> gb;
    auto vb = gb.param(b);
    gb.backward(loss_b(gb, vb));

    Graph<double> joint;
    auto ja = joint.param(a);
    auto jb = joint.param(b);
    auto total = ops::add(ops::l2_norm(ops::mul(ja, ja)), loss_b(joint, jb));
    joint.backward(total);
    EXPECT_TRUE(bit_identical(ja.grad(), va.grad()));
    EXPECT_TRUE(bit_identical(jb.grad(), vb.grad()));
}

TEST(Backward, ReplayIsBitIdentical) {
    auto run = [] {
        Rng rng(99);
        TD x({2, 2, 6, 6}), w({3, 2, 3, 3});
        for (double& v : x.data()) v = rng.normal();
        for (double& v : w.data()) v = rng.normal();
        Graph<double> g;
        auto vx = g.param(x);
        auto vw = g.param(w);
        auto y = ops::relu(ops::conv2d<double>(vx, vw, {}, {.stride = 1, .padding = 1}));
        g.backward(ops::mean(ops::max_pool2d(y, 2, 2)));
        return std::pair{vx.grad(), vw.grad()};
    };
    const auto first = run();
    const auto second = run();
    EXPECT_TRUE(bit_identical(first.first, second.first));
    EXPECT_TRUE(bit_identical(first.second, second.second));
}

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
    std::vector<TD> params{vec({1.0, -2.0, 0.5})};
    std::vector<TD> grads{vec({0.3, -4.0, 1e-3})};
    AdamState<double> state({.lr = 0.01}, params);
    adam_step<double>(params, grads, state);
    EXPECT_EQ(state.step, 1u);
    EXPECT_NEAR(params[0][0], 1.0 - 0.01, 1e-6);
    EXPECT_NEAR(params[0][1], -2.0 + 0.01, 1e-6);
    EXPECT_NEAR(params[0][2], 0.5 - 0.01, 1e-6);
}

TEST(Adam, ZeroGradientLeavesEverythingUnchanged) {
    std::vector<TD> params{vec({1.0, -2.0})};
    std::vector<TD> grads{vec({0.0, 0.0})};
    AdamState<double> state({}, params);
    adam_step<double>(params, grads, state);
    EXPECT_EQ(params[0], vec({1.0, -2.0}));
    EXPECT_EQ(state.m[0], TD({2}));
    EXPECT_EQ(state.v[0], TD({2}));
}

TEST(Adam, MatchesScalarReference) {
    // Textbook scalar Adam written out independently of adam_step.
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double p = 0.0, m = 0.0, v = 0.0;
    std::vector<double> expected;
    for (int t = 1; t <= 2; ++t) {
        const double g = 1.0;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mhat = m / (1 - std::pow(b1, t));
        const double vhat = v / (1 - std::pow(b2, t));
        p -= lr * mhat / (std::sqrt(vhat) + eps);
        expected.push_back(p);
    }

    std::vector<TD> params{vec({0.0})};
    std::vector<TD> grads{vec({1.0})};
    AdamState<double> state({.lr = lr, .beta1 = b1, .beta2 = b2, .eps = eps}, params);
    for (double want : expected) {
        adam_step<double>(params, grads, state);
        EXPECT_NEAR(params[0][0], want, 1e-10);
    }
}

TEST(Adam, RejectsNonFiniteGradient) {
    std::vector<TD> params{vec({1.0})};
    std::vector<TD> grads{vec({std::nan("")})};
    AdamState<double> state({}, params);
    EXPECT_THROW(adam_step<double>(params, grads, state), NumericFailure);
}

TEST(Adam, RejectsShapeMismatch) {
    std::vector<TD> params{vec({1.0, 2.0})};
    std::vector<TD> grads{vec({1.0})};
    AdamState<double> state({}, params);
    EXPECT_THROW(adam_step<double>(params, grads, state), ContractViolation);
}

TEST(GradCheck, LinearPasses) {
    const auto r = finite_difference_check("linear", 1);
    EXPECT_TRUE(r.supported);
    EXPECT_TRUE(r.passed) << r.max_rel_error;
    EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(GradCheck, SignIsUnsupported) {
    const auto r = finite_difference_check("sign", 1);
    EXPECT_FALSE(r.supported);
    EXPECT_FALSE(r.passed);
}

TEST(GradCheck, ClampAtInteriorPoints) {
    const auto r = finite_difference_check("clamp", 5);
    EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(GradCheck, ConvAgainstCentralDifferences) {
    const auto r = finite_difference_check("conv2d", 17);
    EXPECT_TRUE(r.passed) << r.max_rel_error << " " << r.note;
}

TEST(GradCheck, EveryCatalogOpPassesAtFivePoints) {
    const auto reports = run_gradcheck_suite(2024);
    ASSERT_EQ(reports.size(), differentiable_ops().size());
    for (const auto& r : reports) {
        EXPECT_TRUE(r.passed) << r.op << " err=" << r.max_rel_error << " " << r.note;
        EXPECT_GE(r.points, 5u) << r.op;
    }
}

TEST(GradCheck, InjectedFaultIsReported) {
    const auto reports = run_gradcheck_suite(1, {}, true);
    ASSERT_FALSE(reports.empty());
    EXPECT_EQ(reports.back().op, "corrupted_relu");
    EXPECT_FALSE(reports.back().passed);
}

}  // namespace
}  // namespace uapforge
