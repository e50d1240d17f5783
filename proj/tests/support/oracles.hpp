#pragma once

// Independent numerical references shared by the unit tests and the
// acceptance binary.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "rampmerge/sac.hpp"

namespace rampmerge::oracles {

using sac::Mat;
using sac::Vec;

/// Smaller root of R I^2 - V I + P = 0 by bisection in long double. The root
/// lies left of the vertex V / (2R), where the quadratic is decreasing.
inline long double smaller_root_bisect(long double r, long double v, long double p) {
    auto f = [&](long double i) { return r * i * i - v * i + p; };
    long double hi = v / (2 * r);
    long double lo = -1.0L;
    while (f(lo) < 0) lo *= 2;
    for (int k = 0; k < 400; ++k) {
        const long double mid = 0.5L * (lo + hi);
        if (f(mid) > 0) lo = mid;
        else hi = mid;
    }
    return 0.5L * (lo + hi);
}

inline constexpr double kFdStep = 1e-5;

/// Central finite differences of a scalar function of a flat vector.
template <class F>
Vec<double> numeric_gradient(Vec<double> x, F&& f) {
    Vec<double> g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double x0 = x(i);
        x(i) = x0 + kFdStep;
        const double fp = f(x);
        x(i) = x0 - kFdStep;
        const double fm = f(x);
        x(i) = x0;
        g(i) = (fp - fm) / (2 * kFdStep);
    }
    return g;
}

/// Largest component error relative to the largest numeric component.
inline double relative_error(const Vec<double>& analytic, const Vec<double>& numeric) {
    return (analytic - numeric).cwiseAbs().maxCoeff() / std::max(numeric.cwiseAbs().maxCoeff(), 1e-8);
}

/// Entropy of tanh(N(0, s^2)) by trapezoidal quadrature over the standard
/// normal pre-squash noise.
inline double squashed_entropy(double s) {
    const int n = 4000;
    const double lim = 8.0, h = 2 * lim / n;
    const double log_2pi = std::log(2 * std::numbers::pi);
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double e = -lim + i * h;
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        const double pdf = std::exp(-0.5 * e * e - 0.5 * log_2pi);
        const double t = std::tanh(s * e);
        const double logp = -0.5 * e * e - std::log(s) - 0.5 * log_2pi - std::log1p(-t * t);
        acc += w * pdf * -logp;
    }
    return acc * h;
}

/// Two states that alternate regardless of the action, reward 1 in state 0
/// and 0 in state 1, fixed temperature. With action-independent rewards the
/// soft-optimal policy is the maximum-entropy squashed Gaussian, and the soft
/// Q-values follow from value iteration with that entropy bonus.
struct TwoStateMdp {
    double gamma = 0.5;
    double alpha = 0.2;

    double max_entropy() const {
        double best = -1e9;
        for (double ls = -2.0; ls <= 1.0; ls += 0.001) best = std::max(best, squashed_entropy(std::exp(ls)));
        return best;
    }

    /// Soft Q-values {Q(s0, .), Q(s1, .)} by value iteration.
    std::pair<double, double> soft_values() const {
        const double h = max_entropy();
        double v0 = 0.0, v1 = 0.0;
        for (int k = 0; k < 500; ++k) {
            const double q0 = 1.0 + gamma * v1, q1 = gamma * v0;
            v0 = q0 + alpha * h;
            v1 = q1 + alpha * h;
        }
        return {1.0 + gamma * v1, gamma * v0};
    }

    /// Trains SAC on uniformly replayed transitions for `updates` steps and
    /// returns the learned Q-values, averaged over both critics, a grid of
    /// actions and the last 10% of updates.
    std::pair<double, double> learned_values(long updates, std::uint64_t seed) const {
        sac::SacConfig c;
        c.hidden = 32;
        c.batch_size = 64;
        c.lr_actor = c.lr_critic = c.lr_alpha = 1e-3;
        c.auto_alpha = false;
        c.initial_alpha = alpha;
        c.gamma = gamma;
        c.obs_norm = false;
        c.tau = 0.01;
        sac::SacAgent<double> agent(2, 1, c, seed);
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        const int B = 64;
        sac::Batch<double> b;
        b.obs.resize(2, B);
        b.next_obs.resize(2, B);
        b.action.resize(1, B);
        b.reward.resize(1, B);
        b.done = Mat<double>::Zero(1, B);
        for (int j = 0; j < B; ++j) {
            const int s = j % 2;
            b.obs.col(j) << (s == 0), (s == 1);
            b.next_obs.col(j) << (s == 1), (s == 0);
            b.reward(0, j) = s == 0 ? 1.0 : 0.0;
        }
        auto q_at = [&](int s) {
            Mat<double> x(3, 21);
            for (int i = 0; i < 21; ++i) x.col(i) << (s == 0), (s == 1), -1.0 + 0.1 * i;
            return 0.5 * (agent.q1().forward(x).mean() + agent.q2().forward(x).mean());
        };
        const long tail_start = updates - updates / 10, every = std::max(1L, updates / 200);
        double q0 = 0, q1 = 0;
        int samples = 0;
        for (long k = 1; k <= updates; ++k) {
            for (int j = 0; j < B; ++j) b.action(0, j) = u(rng);
            agent.update(b);
            if (k > tail_start && k % every == 0) {
                q0 += q_at(0);
                q1 += q_at(1);
                ++samples;
            }
        }
        return {q0 / samples, q1 / samples};
    }
};

}  // namespace rampmerge::oracles
