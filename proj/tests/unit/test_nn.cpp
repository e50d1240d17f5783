#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rampmerge/nn.hpp"
#include "support/oracles.hpp"

using namespace rampmerge::nn;

namespace {

using rampmerge::oracles::numeric_gradient;
using rampmerge::oracles::relative_error;
constexpr double kTol = 1e-4;

Mat<double> random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Mat<double> m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = n(rng);
    return m;
}

}  // namespace

TEST(Mlp, LayoutAndParameterCount) {
    Mlp<double> net({3, 5, 2});
    EXPECT_EQ(net.num_params(), 3 * 5 + 5 + 5 * 2 + 2);
    EXPECT_EQ(net.layers(), 2u);
    EXPECT_EQ(net.weight(0).rows(), 5);
    EXPECT_EQ(net.weight(0).cols(), 3);
    EXPECT_EQ(net.bias(1).size(), 2);
    EXPECT_THROW(Mlp<double>({4}), std::invalid_argument);
}

TEST(Mlp, ForwardMatchesHandComputation) {
    Mlp<double> net({2, 2, 1});
    net.weight(0) << 1.0, -1.0, 0.5, 2.0;
    net.bias(0) << 0.0, -1.0;
    net.weight(1) << 3.0, -2.0;
    net.bias(1) << 0.25;
    Mat<double> x(2, 2);
    x << 1.0, 0.0,
         2.0, 1.0;
    const Mat<double> y = net.forward(x);
    // column 0: hidden = relu([-1, 3.5]) = [0, 3.5]; out = -7 + 0.25
    // column 1: hidden = relu([-1, 1]) = [0, 1]; out = -2 + 0.25
    EXPECT_DOUBLE_EQ(y(0, 0), -6.75);
    EXPECT_DOUBLE_EQ(y(0, 1), -1.75);
    EXPECT_THROW(net.forward(Mat<double>::Zero(3, 1)), std::invalid_argument);
}

TEST(Mlp, InitBoundsAndOutputScale) {
    Mlp<double> net({16, 32, 4});
    std::mt19937_64 rng(1);
    net.init(rng, 0.01);
    EXPECT_LE(net.weight(0).cwiseAbs().maxCoeff(), 0.25);
    EXPECT_LE(net.weight(1).cwiseAbs().maxCoeff(), 0.01 / std::sqrt(32.0));
    EXPECT_GT(net.weight(1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Mlp, ParameterGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        Mlp<double> net({4, 6, 5, 3});
        net.init(rng);
        const Mat<double> x = random_matrix(4, 7, rng);
        const Mat<double> w = random_matrix(3, 7, rng);  // loss = sum(w .* y)
        MlpCache<double> cache;
        net.forward(x, &cache);
        Vec<double> grad;
        net.backward(cache, w, &grad, nullptr);
        const Vec<double> fd = numeric_gradient(net.params(), [&](const Vec<double>& p) {
            Mlp<double> n2 = net;
            n2.params() = p;
            return (n2.forward(x).array() * w.array()).sum();
        });
        EXPECT_LT(relative_error(grad, fd), kTol);
    }
}

TEST(Mlp, InputGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(8);
    Mlp<double> net({3, 8, 2});
    net.init(rng);
    const Mat<double> x = random_matrix(3, 4, rng);
    const Mat<double> w = random_matrix(2, 4, rng);
    MlpCache<double> cache;
    net.forward(x, &cache);
    Mat<double> d_in;
    net.backward(cache, w, nullptr, &d_in);
    const Vec<double> flat = Eigen::Map<const Vec<double>>(x.data(), x.size());
    const Vec<double> fd = numeric_gradient(flat, [&](const Vec<double>& v) {
        const Mat<double> xx = Eigen::Map<const Mat<double>>(v.data(), 3, 4);
        return (net.forward(xx).array() * w.array()).sum();
    });
    const Vec<double> analytic = Eigen::Map<const Vec<double>>(d_in.data(), d_in.size());
    EXPECT_LT(relative_error(analytic, fd), kTol);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    Adam<double> opt(0.1, 3);
    Vec<double> p = Vec<double>::Zero(3);
    Vec<double> g(3);
    g << 2.0, -0.5, 0.0;
    opt.step(p, g);
    EXPECT_NEAR(p(0), -0.1, 1e-8);
    EXPECT_NEAR(p(1), 0.1, 1e-8);
    EXPECT_EQ(p(2), 0.0);
}

TEST(Adam, MinimizesQuadratic) {
    Adam<double> opt(0.05, 2);
    Vec<double> p(2);
    p << 3.0, -2.0;
    for (int k = 0; k < 2000; ++k) {
        Vec<double> g(2);
        g << 2 * (p(0) - 1.0), 8 * (p(1) + 0.5);
        opt.step(p, g);
    }
    EXPECT_NEAR(p(0), 1.0, 1e-3);
    EXPECT_NEAR(p(1), -0.5, 1e-3);
}

TEST(Polyak, Boundaries) {
    Vec<double> target(2), source(2);
    target << 1.0, 2.0;
    source << 5.0, -6.0;
    Vec<double> t0 = target;
    polyak_update(t0, source, 0.0);
    EXPECT_EQ(t0, target);
    Vec<double> t1 = target;
    polyak_update(t1, source, 1.0);
    EXPECT_EQ(t1, source);
    Vec<double> th = target;
    polyak_update(th, source, 0.25);
    EXPECT_DOUBLE_EQ(th(0), 2.0);
    EXPECT_DOUBLE_EQ(th(1), 0.0);
}
