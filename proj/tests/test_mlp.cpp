#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fastcharge/mlp.hpp"

using namespace fastcharge;
using nn::Matrix;
using nn::Mlp;
using nn::OutputActivation;
using nn::Vector;

namespace {

Matrix random_inputs(int rows, int cols, std::uint64_t seed, double scale = 1.0)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    Matrix x(rows, cols);
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            x(i, j) = u(rng);
    return x;
}

} // namespace

TEST(MlpInit, ActorAndCriticParameterCounts)
{
    for (int obs : {2, 61}) {
        const auto actor = nn::mlp_init({obs, 20, 20, 1}, OutputActivation::tanh, 1);
        EXPECT_EQ(actor.parameter_count(), obs * 20 + 20 + 20 * 20 + 20 + 20 * 1 + 1);
        const auto critic = nn::mlp_init({obs + 1, 100, 75, 1}, OutputActivation::identity, 1);
        EXPECT_EQ(critic.parameter_count(), (obs + 1) * 100 + 100 + 100 * 75 + 75 + 75 + 1);
    }
}

TEST(MlpInit, BoundsAndZeroBiases)
{
    const auto net = nn::mlp_init({4, 16, 9, 1}, OutputActivation::tanh, 5);
    EXPECT_LE(net.weight(0).cwiseAbs().maxCoeff(), 0.5);
    EXPECT_LE(net.weight(1).cwiseAbs().maxCoeff(), 0.25);
    EXPECT_LE(net.weight(2).cwiseAbs().maxCoeff(), 3e-3);
    for (std::size_t l = 0; l < net.layer_count(); ++l)
        EXPECT_EQ(net.bias(l).cwiseAbs().maxCoeff(), 0.0);
}

TEST(MlpInit, SeedDeterminism)
{
    const auto a = nn::mlp_init({3, 20, 20, 1}, OutputActivation::tanh, 42);
    const auto b = nn::mlp_init({3, 20, 20, 1}, OutputActivation::tanh, 42);
    const auto c = nn::mlp_init({3, 20, 20, 1}, OutputActivation::tanh, 43);
    EXPECT_EQ(a.flatten(), b.flatten());
    EXPECT_NE(a.flatten(), c.flatten());
}

TEST(MlpInit, RejectsBadShapes)
{
    EXPECT_THROW(Mlp({}, OutputActivation::tanh), ValidationError);
    EXPECT_THROW(Mlp({2, 1}, OutputActivation::tanh), ValidationError);
    EXPECT_THROW(Mlp({2, 0, 1}, OutputActivation::tanh), ValidationError);
}

TEST(Forward, ZeroWeightsReturnLastBias)
{
    Mlp net({3, 5, 2}, OutputActivation::identity);
    net.bias(1) << 0.25, -1.5;
    const Vector y = net.forward(Vector(Vector::Constant(3, 0.7)));
    EXPECT_EQ(y[0], 0.25);
    EXPECT_EQ(y[1], -1.5);
}

TEST(Forward, TanhHeadStaysInRange)
{
    auto net = nn::mlp_init({6, 20, 20, 1}, OutputActivation::tanh, 9);
    net.weight(2).array() *= 1e4;
    const Matrix x = random_inputs(6, 10000, 1, 50.0);
    const Matrix y = net.forward(x);
    EXPECT_LE(y.maxCoeff(), 1.0);
    EXPECT_GE(y.minCoeff(), -1.0);
}

TEST(Forward, SingleAffineArithmetic)
{
    // one hidden unit with an identity-like path: relu(2*3 + 1) = 7, then 1*7 + 0
    Mlp net({1, 1, 1}, OutputActivation::identity);
    net.weight(0)(0, 0) = 2.0;
    net.bias(0)[0] = 1.0;
    net.weight(1)(0, 0) = 1.0;
    EXPECT_EQ(net.forward(Vector(Vector::Constant(1, 3.0)))[0], 7.0);
}

TEST(Forward, DimensionMismatchThrows)
{
    const auto net = nn::mlp_init({3, 4, 1}, OutputActivation::identity, 1);
    EXPECT_THROW(net.forward(Vector(Vector::Zero(2))), ValidationError);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients)
{
    const auto net = nn::mlp_init({3, 8, 1}, OutputActivation::tanh, 2);
    const auto g = nn::backward(net, Vector::Constant(3, 0.4), Vector::Zero(1));
    EXPECT_EQ(g.params.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(g.inputs.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backward, LinearLayerClosedForm)
{
    // positive pre-activations keep the rectifier linear on this sample
    Mlp net({2, 2, 2}, OutputActivation::identity);
    net.weight(0) << 1.0, 0.5, -0.25, 2.0;
    net.bias(0) << 0.1, 0.2;
    net.weight(1) << 0.3, -0.7, 1.1, 0.4;
    net.bias(1) << 0.05, -0.05;
    Vector x(2);
    x << 0.6, 0.9;
    Vector u(2);
    u << 1.5, -0.5;
    const auto cache = net.forward_cached(Matrix(x));
    const auto g = net.backward(cache, Matrix(u));
    const Vector h = cache.inputs[1].col(0);
    const Matrix dw1 = u * h.transpose();
    const Vector dh = net.weight(1).transpose() * u;
    const Matrix dw0 = dh * x.transpose();
    const Eigen::Index off1 = 2 * 2 + 2;
    for (Eigen::Index j = 0; j < 2; ++j)
        for (Eigen::Index i = 0; i < 2; ++i) {
            EXPECT_NEAR(g.params[j * 2 + i], dw0(i, j), 1e-15);
            EXPECT_NEAR(g.params[off1 + j * 2 + i], dw1(i, j), 1e-15);
        }
    EXPECT_NEAR(g.params[4], dh[0], 1e-15);
    EXPECT_NEAR(g.params[off1 + 4], u[0], 0.0);
    EXPECT_NEAR(g.params[off1 + 5], u[1], 0.0);
    const Vector dx = net.weight(0).transpose() * dh;
    EXPECT_NEAR(g.inputs(0, 0), dx[0], 1e-15);
    EXPECT_NEAR(g.inputs(1, 0), dx[1], 1e-15);
}

TEST(Backward, MatchesCentralDifferences)
{
    // plain double-precision differences; the extended-precision suite
    // lives with the oracles
    for (int trial = 0; trial < 5; ++trial) {
        const auto net = nn::mlp_init({3, 6, 5, 1}, trial % 2 ? OutputActivation::tanh : OutputActivation::identity,
                                      100 + trial);
        auto wide = net;
        wide.weight(2).array() *= 100.0;
        const Vector x = random_inputs(3, 1, 200 + trial).col(0);
        const auto g = nn::backward(wide, x, Vector::Ones(1));
        const double h = 1e-6;
        for (Eigen::Index k = 0; k < wide.parameter_count(); ++k) {
            auto up = wide, down = wide;
            up.parameters()[k] += h;
            down.parameters()[k] -= h;
            const double fd = (up.forward(x)[0] - down.forward(x)[0]) / (2 * h);
            EXPECT_NEAR(g.params[k], fd, 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST(Adam, ZeroGradientLeavesParameters)
{
    auto net = nn::mlp_init({2, 4, 1}, OutputActivation::tanh, 3);
    const auto before = net.flatten();
    nn::AdamState s(net.parameter_count());
    for (int k = 0; k < 10; ++k)
        ASSERT_TRUE(nn::adam_step(net, Vector::Zero(net.parameter_count()), s, 1e-3));
    EXPECT_EQ(net.flatten(), before);
    EXPECT_EQ(s.step, 10);
}

TEST(Adam, ScalarStepMatchesHandComputation)
{
    Mlp net({1, 1, 1}, OutputActivation::identity);
    nn::AdamState s(net.parameter_count());
    Vector g = Vector::Zero(net.parameter_count());
    g[0] = 1.0;
    ASSERT_TRUE(nn::adam_step(net, g, s, 1e-3));
    const double m = 0.1, v = 0.001;
    const double m_hat = m / (1.0 - 0.9), v_hat = v / (1.0 - 0.999);
    const double expected = -1e-3 * m_hat / (std::sqrt(v_hat) + 1e-8);
    EXPECT_NEAR(net.parameters()[0], expected, 1e-18);
    EXPECT_NEAR(net.parameters()[0], -9.99999990e-4, 1e-12);
    EXPECT_EQ(net.parameters().tail(net.parameter_count() - 1).cwiseAbs().maxCoeff(), 0.0);

    // second step with g = -2, stepped by hand
    g[0] = -2.0;
    ASSERT_TRUE(nn::adam_step(net, g, s, 1e-3));
    const double m2 = 0.9 * m + 0.1 * -2.0, v2 = 0.999 * v + 0.001 * 4.0;
    const double step2 = -1e-3 * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + 1e-8);
    EXPECT_NEAR(net.parameters()[0], expected + step2, 1e-15);
}

TEST(Adam, ZeroLearningRateUpdatesMomentsOnly)
{
    auto net = nn::mlp_init({2, 3, 1}, OutputActivation::identity, 4);
    const auto before = net.flatten();
    nn::AdamState s(net.parameter_count());
    ASSERT_TRUE(nn::adam_step(net, Vector::Constant(net.parameter_count(), 0.5), s, 0.0));
    EXPECT_EQ(net.flatten(), before);
    EXPECT_NEAR(s.m[0], 0.05, 1e-15);
    EXPECT_NEAR(s.v[0], 0.00025, 1e-15);
}

TEST(Adam, NonFiniteGradientAborts)
{
    auto net = nn::mlp_init({2, 3, 1}, OutputActivation::identity, 4);
    const auto before = net.flatten();
    nn::AdamState s(net.parameter_count());
    Vector g = Vector::Zero(net.parameter_count());
    g[2] = std::nan("");
    EXPECT_FALSE(nn::adam_step(net, g, s, 1e-3));
    EXPECT_EQ(net.flatten(), before);
    EXPECT_EQ(s.step, 0);
    EXPECT_THROW(nn::adam_step(net, Vector::Zero(3), s, 1e-3), ValidationError);
}

TEST(SoftUpdate, TauOneCopiesTauZeroKeeps)
{
    const auto src = nn::mlp_init({2, 5, 1}, OutputActivation::tanh, 1);
    auto tgt = nn::mlp_init({2, 5, 1}, OutputActivation::tanh, 2);
    const auto before = tgt;
    nn::soft_update(tgt, src, 0.0);
    EXPECT_EQ(tgt, before);
    nn::soft_update(tgt, src, 1.0);
    EXPECT_EQ(tgt, src);
}

TEST(SoftUpdate, GeometricConvergenceWithFrozenSource)
{
    const double tau = 1e-3;
    const auto src = nn::mlp_init({2, 20, 20, 1}, OutputActivation::tanh, 1);
    auto tgt = nn::mlp_init({2, 20, 20, 1}, OutputActivation::tanh, 2);
    const Vector gap0 = tgt.flatten() - src.flatten();
    for (int k = 1; k <= 2000; ++k) {
        nn::soft_update(tgt, src, tau);
        if (k % 500 == 0) {
            const Vector expected = std::pow(1.0 - tau, k) * gap0;
            const Vector gap = tgt.flatten() - src.flatten();
            EXPECT_LE((gap - expected).cwiseAbs().maxCoeff(), 1e-12 * gap0.cwiseAbs().maxCoeff()) << k;
        }
    }
}

TEST(SoftUpdate, RejectsBadArguments)
{
    const auto src = nn::mlp_init({2, 5, 1}, OutputActivation::tanh, 1);
    auto other = nn::mlp_init({2, 6, 1}, OutputActivation::tanh, 1);
    auto tgt = src;
    EXPECT_THROW(nn::soft_update(tgt, src, 1.5), ValidationError);
    EXPECT_THROW(nn::soft_update(tgt, src, -0.1), ValidationError);
    EXPECT_THROW(nn::soft_update(other, src, 0.5), ValidationError);
}

TEST(ParameterVector, FlattenRoundTrip)
{
    auto net = nn::mlp_init({4, 7, 3, 2}, OutputActivation::identity, 8);
    const auto p = net.flatten();
    auto copy = Mlp({4, 7, 3, 2}, OutputActivation::identity);
    copy.unflatten(p);
    EXPECT_EQ(copy, net);
    EXPECT_EQ(copy.flatten(), p);
    EXPECT_THROW(copy.unflatten(Vector::Zero(3)), ValidationError);
}

TEST(ParameterVector, LayoutIsWeightsColumnMajorThenBias)
{
    Mlp net({2, 3, 1}, OutputActivation::identity);
    net.weight(0)(2, 1) = 5.0;
    net.bias(0)[1] = 6.0;
    EXPECT_EQ(net.parameters()[1 * 3 + 2], 5.0);
    EXPECT_EQ(net.parameters()[6 + 1], 6.0);
}
