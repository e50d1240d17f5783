#pragma once

// Soft Actor-Critic: squashed-Gaussian actor, twin critics with Polyak
// targets, learned entropy temperature, uniform replay. Environment-agnostic;
// actions live in [-1, 1]^n and are scaled by the environment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rampmerge/errors.hpp"
#include "rampmerge/fields.hpp"
#include "rampmerge/nn.hpp"

namespace rampmerge::sac {

using nn::Mat;
using nn::Mlp;
using nn::MlpCache;
using nn::Vec;

struct SacConfig {
    double gamma = 0.99;
    double tau = 0.005;
    double lr_actor = 3e-4;
    double lr_critic = 3e-4;
    double lr_alpha = 3e-4;
    int batch_size = 256;
    long buffer_capacity = 1000000;
    double initial_alpha = 1.0;
    bool auto_alpha = true;
    double target_entropy_per_dim = -1.0;
    long warmup_steps = 10000;
    int updates_per_env_step = 1;
    int hidden = 64;
    bool obs_norm = true;
    double log_std_min = -20.0;
    double log_std_max = 2.0;
    double actor_output_scale = 0.01;

    template <class V>
    void visit_fields(V&& v) {
        v("gamma", gamma);
        v("tau", tau);
        v("lr_actor", lr_actor);
        v("lr_critic", lr_critic);
        v("lr_alpha", lr_alpha);
        v("batch_size", batch_size);
        v("buffer_capacity", buffer_capacity);
        v("initial_alpha", initial_alpha);
        v("auto_alpha", auto_alpha);
        v("target_entropy_per_dim", target_entropy_per_dim);
        v("warmup_steps", warmup_steps);
        v("updates_per_env_step", updates_per_env_step);
        v("hidden", hidden);
        v("obs_norm", obs_norm);
        v("log_std_min", log_std_min);
        v("log_std_max", log_std_max);
        v("actor_output_scale", actor_output_scale);
    }

    void validate() const {
        if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("sac.gamma must lie in [0, 1)");
        if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("sac.tau must lie in [0, 1]");
        if (!(lr_actor > 0 && lr_critic > 0 && lr_alpha > 0)) throw ConfigError("sac learning rates must be positive");
        if (batch_size < 1) throw ConfigError("sac.batch_size must be >= 1");
        if (buffer_capacity < batch_size) throw ConfigError("sac.buffer_capacity must be >= batch_size");
        if (!(initial_alpha >= 0.0)) throw ConfigError("sac.initial_alpha must be non-negative");
        if (auto_alpha && !(initial_alpha > 0.0)) throw ConfigError("sac.initial_alpha must be positive when auto-tuned");
        if (warmup_steps < 0) throw ConfigError("sac.warmup_steps must be non-negative");
        if (updates_per_env_step < 0) throw ConfigError("sac.updates_per_env_step must be non-negative");
        if (hidden < 1) throw ConfigError("sac.hidden must be >= 1");
        if (!(log_std_min < log_std_max)) throw ConfigError("sac: log_std_min must be below log_std_max");
    }
};

// ---------------------------------------------------------------- helpers

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

/// log(1 - tanh(u)^2), stable for large |u|.
inline double log_one_minus_tanh2(double u) { return 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u)); }

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Welford running mean/variance of observation features. Frozen statistics
/// travel with checkpoints so evaluation sees the training-time scaling.
class RunningNorm {
public:
    RunningNorm() = default;
    explicit RunningNorm(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

    std::size_t dim() const { return mean_.size(); }
    double count() const { return count_; }
    const std::vector<double>& mean() const { return mean_; }
    std::vector<double> variance() const {
        std::vector<double> var(dim(), 1.0);
        if (count_ > 1.0)
            for (std::size_t i = 0; i < dim(); ++i) var[i] = m2_[i] / count_;
        return var;
    }

    void update(std::span<const double> x) {
        count_ += 1.0;
        for (std::size_t i = 0; i < dim(); ++i) {
            const double delta = x[i] - mean_[i];
            mean_[i] += delta / count_;
            m2_[i] += delta * (x[i] - mean_[i]);
        }
    }

    template <class S>
    void apply(Eigen::Ref<Mat<S>> x) const {
        if (count_ < 2.0) return;
        for (std::size_t i = 0; i < dim(); ++i) {
            const double inv = 1.0 / std::sqrt(m2_[i] / count_ + kEps);
            const Eigen::Index r = Eigen::Index(i);
            for (Eigen::Index j = 0; j < x.cols(); ++j)
                x(r, j) = S(std::clamp((double(x(r, j)) - mean_[i]) * inv, -kClip, kClip));
        }
    }

    /// Sum of squared deviations per feature (Welford accumulator).
    const std::vector<double>& m2() const { return m2_; }

    void set_state(double count, std::vector<double> mean, std::vector<double> m2) {
        if (mean.size() != m2.size()) throw CheckpointError("normalizer size mismatch");
        count_ = count;
        mean_ = std::move(mean);
        m2_ = std::move(m2);
    }

    static constexpr double kEps = 1e-2;
    static constexpr double kClip = 5.0;

private:
    double count_ = 0.0;
    std::vector<double> mean_, m2_;
};

// ---------------------------------------------------------------- replay

template <class S>
struct Batch {
    Mat<S> obs, action, next_obs;
    Mat<S> reward, done;  // 1 x B
    std::vector<std::size_t> index;
};

/// Uniform-sampling ring buffer. Storage grows on demand up to `capacity`.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t obs_dim, std::size_t act_dim, std::size_t capacity)
        : obs_dim_(obs_dim), act_dim_(act_dim), capacity_(capacity) {}

    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    std::size_t obs_dim() const { return obs_dim_; }
    std::size_t act_dim() const { return act_dim_; }

    void add(std::span<const double> s, std::span<const double> a, double r, std::span<const double> s2, bool done) {
        if (s.size() != obs_dim_ || s2.size() != obs_dim_ || a.size() != act_dim_)
            throw UsageError("replay transition shape mismatch");
        if (!std::isfinite(r)) throw UsageError("replay reward must be finite");
        const std::size_t slot = head_;
        if (size_ < capacity_) {
            obs_.insert(obs_.end(), s.begin(), s.end());
            next_.insert(next_.end(), s2.begin(), s2.end());
            act_.insert(act_.end(), a.begin(), a.end());
            rew_.push_back(r);
            done_.push_back(done ? 1.0 : 0.0);
            ++size_;
        } else {
            std::copy(s.begin(), s.end(), obs_.begin() + slot * obs_dim_);
            std::copy(s2.begin(), s2.end(), next_.begin() + slot * obs_dim_);
            std::copy(a.begin(), a.end(), act_.begin() + slot * act_dim_);
            rew_[slot] = r;
            done_[slot] = done ? 1.0 : 0.0;
        }
        head_ = (head_ + 1) % capacity_;
    }

    template <class Rng>
    std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const {
        if (size_ == 0) throw UsageError("sampling from an empty replay buffer");
        std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
        std::vector<std::size_t> idx(n);
        for (auto& i : idx) i = pick(rng);
        return idx;
    }

    template <class S, class Rng>
    Batch<S> sample(std::size_t n, Rng& rng) const {
        Batch<S> b;
        b.index = sample_indices(n, rng);
        b.obs.resize(Eigen::Index(obs_dim_), Eigen::Index(n));
        b.next_obs.resize(Eigen::Index(obs_dim_), Eigen::Index(n));
        b.action.resize(Eigen::Index(act_dim_), Eigen::Index(n));
        b.reward.resize(1, Eigen::Index(n));
        b.done.resize(1, Eigen::Index(n));
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t k = b.index[j];
            for (std::size_t i = 0; i < obs_dim_; ++i) {
                b.obs(Eigen::Index(i), Eigen::Index(j)) = S(obs_[k * obs_dim_ + i]);
                b.next_obs(Eigen::Index(i), Eigen::Index(j)) = S(next_[k * obs_dim_ + i]);
            }
            for (std::size_t i = 0; i < act_dim_; ++i) b.action(Eigen::Index(i), Eigen::Index(j)) = S(act_[k * act_dim_ + i]);
            b.reward(0, Eigen::Index(j)) = S(rew_[k]);
            b.done(0, Eigen::Index(j)) = S(done_[k]);
        }
        return b;
    }

private:
    std::size_t obs_dim_, act_dim_, capacity_;
    std::size_t head_ = 0, size_ = 0;
    std::vector<double> obs_, next_, act_, rew_, done_;
};

// ---------------------------------------------------------------- policy

/// Squashed Gaussian policy evaluated on a batch with externally supplied
/// standard-normal noise (reparameterization).
template <class S>
struct PolicyEval {
    Mat<S> mean, log_std, std, eps, u, action;
    Mat<S> logp;  // 1 x B
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> clamped;
    MlpCache<S> cache;
};

template <class S>
PolicyEval<S> policy_eval(const Mlp<S>& actor, const Mat<S>& obs, const Mat<S>& eps, double ls_min, double ls_max) {
    const Eigen::Index n = actor.output_size() / 2, B = obs.cols();
    PolicyEval<S> pe;
    const Mat<S> out = actor.forward(obs, &pe.cache);
    pe.mean = out.topRows(n);
    const Mat<S> raw_ls = out.bottomRows(n);
    pe.clamped = (raw_ls.array() < S(ls_min)) || (raw_ls.array() > S(ls_max));
    pe.log_std = raw_ls.cwiseMax(S(ls_min)).cwiseMin(S(ls_max));
    pe.std = pe.log_std.array().exp().matrix();
    pe.eps = eps;
    pe.u = pe.mean + pe.std.cwiseProduct(eps);
    pe.action = pe.u.array().tanh().matrix();
    pe.logp.resize(1, B);
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    for (Eigen::Index j = 0; j < B; ++j) {
        double lp = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double e = double(eps(i, j));
            lp += -0.5 * e * e - double(pe.log_std(i, j)) - half_log_2pi - log_one_minus_tanh2(double(pe.u(i, j)));
        }
        pe.logp(0, j) = S(lp);
    }
    return pe;
}

/// Gradient of a loss with respect to actor parameters given dLoss/dAction
/// (n x B) and dLoss/dLogProb (1 x B), holding the noise fixed.
template <class S>
void policy_backward(const Mlp<S>& actor, const PolicyEval<S>& pe, const Mat<S>& d_action, const Mat<S>& d_logp,
                     Vec<S>& grad) {
    const Eigen::Index n = pe.mean.rows();
    const auto t = pe.action.array();
    const auto dlp = d_logp.replicate(n, 1).array();
    const Mat<S> du = (d_action.array() * (S(1) - t * t) + dlp * S(2) * t).matrix();
    Mat<S> d_ls = (-dlp + du.array() * pe.std.array() * pe.eps.array()).matrix();
    d_ls = pe.clamped.select(Mat<S>::Zero(n, d_ls.cols()), d_ls);
    Mat<S> d_out(2 * n, du.cols());
    d_out.topRows(n) = du;
    d_out.bottomRows(n) = d_ls;
    actor.backward(pe.cache, d_out, &grad, nullptr);
}

template <class S>
Mat<S> critic_input(const Mat<S>& obs, const Mat<S>& action) {
    Mat<S> x(obs.rows() + action.rows(), obs.cols());
    x.topRows(obs.rows()) = obs;
    x.bottomRows(action.rows()) = action;
    return x;
}

template <class S, class Rng>
Mat<S> standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Mat<S> m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = S(nd(rng));
    return m;
}

/// Actor network plus the observation normalizer it was trained with.
template <class S>
class Policy {
public:
    Policy() = default;
    Policy(std::size_t obs_dim, std::size_t act_dim, int hidden, double ls_min, double ls_max)
        : actor_({int(obs_dim), hidden, hidden, int(2 * act_dim)}), norm_(obs_dim), ls_min_(ls_min), ls_max_(ls_max) {}

    std::size_t obs_dim() const { return std::size_t(actor_.input_size()); }
    std::size_t act_dim() const { return std::size_t(actor_.output_size() / 2); }
    Mlp<S>& actor() { return actor_; }
    const Mlp<S>& actor() const { return actor_; }
    RunningNorm& norm() { return norm_; }
    const RunningNorm& norm() const { return norm_; }
    double log_std_min() const { return ls_min_; }
    double log_std_max() const { return ls_max_; }
    bool use_norm = true;

    Mat<S> prepare(const Mat<S>& obs) const {
        Mat<S> x = obs;
        if (use_norm) norm_.apply<S>(x);
        return x;
    }

    /// Action in [-1, 1]^n for one observation: tanh of the mean when
    /// deterministic, otherwise a squashed Gaussian sample.
    template <class Rng>
    std::vector<double> act(std::span<const double> obs, bool deterministic, Rng& rng) const {
        if (obs.size() != obs_dim()) throw UsageError("policy observation size mismatch");
        Mat<S> x(Eigen::Index(obs.size()), 1);
        for (std::size_t i = 0; i < obs.size(); ++i) x(Eigen::Index(i), 0) = S(obs[i]);
        x = prepare(x);
        const Eigen::Index n = Eigen::Index(act_dim());
        Mat<S> eps = deterministic ? Mat<S>::Zero(n, 1) : standard_normal<S>(n, 1, rng);
        const PolicyEval<S> pe = policy_eval(actor_, x, eps, ls_min_, ls_max_);
        std::vector<double> a(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) a[std::size_t(i)] = double(pe.action(i, 0));
        return a;
    }

private:
    Mlp<S> actor_;
    RunningNorm norm_;
    double ls_min_ = -20.0, ls_max_ = 2.0;
};

// ----------------------------------------------------------------- losses

template <class S>
struct CriticTerms {
    double loss1 = 0.0, loss2 = 0.0;
    Vec<S> grad1, grad2;
    Mat<S> target;  // 1 x B Bellman target
    Mat<S> q1, q2;  // 1 x B online estimates
    Mat<S> target_q1, target_q2;
};

/// Mean squared Bellman residual of each online critic against the
/// double-Q soft target built from the target critics. `eps_next` is the
/// policy noise for the next-state action.
template <class S>
CriticTerms<S> critic_terms(const Mlp<S>& q1, const Mlp<S>& q2, const Mlp<S>& q1_target, const Mlp<S>& q2_target,
                            const Mlp<S>& actor, double alpha, double gamma, const Mat<S>& obs, const Mat<S>& action,
                            const Mat<S>& reward, const Mat<S>& done, const Mat<S>& next_obs, const Mat<S>& eps_next,
                            double ls_min, double ls_max) {
    CriticTerms<S> t;
    const Eigen::Index B = obs.cols();
    const PolicyEval<S> next = policy_eval(actor, next_obs, eps_next, ls_min, ls_max);
    const Mat<S> xn = critic_input(next_obs, next.action);
    t.target_q1 = q1_target.forward(xn);
    t.target_q2 = q2_target.forward(xn);
    const Mat<S> soft = t.target_q1.cwiseMin(t.target_q2) - S(alpha) * next.logp;
    t.target = reward + (S(gamma) * (Mat<S>::Ones(1, B) - done)).cwiseProduct(soft);

    const Mat<S> x = critic_input(obs, action);
    MlpCache<S> c1, c2;
    t.q1 = q1.forward(x, &c1);
    t.q2 = q2.forward(x, &c2);
    const Mat<S> r1 = t.q1 - t.target, r2 = t.q2 - t.target;
    t.loss1 = double(r1.squaredNorm()) / double(B);
    t.loss2 = double(r2.squaredNorm()) / double(B);
    q1.backward(c1, (S(2.0 / double(B)) * r1).eval(), &t.grad1, nullptr);
    q2.backward(c2, (S(2.0 / double(B)) * r2).eval(), &t.grad2, nullptr);
    return t;
}

template <class S>
struct ActorTerms {
    double loss = 0.0;
    double mean_logp = 0.0;
    double mean_q = 0.0;
    Vec<S> grad;
};

/// mean(alpha * log pi(a|s) - min(Q1, Q2)(s, a)) with reparameterized a.
template <class S>
ActorTerms<S> actor_terms(const Mlp<S>& actor, const Mlp<S>& q1, const Mlp<S>& q2, double alpha, const Mat<S>& obs,
                          const Mat<S>& eps, double ls_min, double ls_max) {
    ActorTerms<S> t;
    const Eigen::Index B = obs.cols();
    const PolicyEval<S> pe = policy_eval(actor, obs, eps, ls_min, ls_max);
    const Mat<S> x = critic_input(obs, pe.action);
    MlpCache<S> c1, c2;
    const Mat<S> v1 = q1.forward(x, &c1);
    const Mat<S> v2 = q2.forward(x, &c2);
    Mat<S> dq1 = Mat<S>::Zero(1, B), dq2 = Mat<S>::Zero(1, B);
    double loss = 0.0, q = 0.0;
    for (Eigen::Index j = 0; j < B; ++j) {
        const bool first = v1(0, j) <= v2(0, j);
        const double qmin = first ? double(v1(0, j)) : double(v2(0, j));
        (first ? dq1 : dq2)(0, j) = S(-1.0 / double(B));
        loss += alpha * double(pe.logp(0, j)) - qmin;
        q += qmin;
    }
    t.loss = loss / double(B);
    t.mean_q = q / double(B);
    t.mean_logp = double(pe.logp.sum()) / double(B);

    const Eigen::Index n = pe.action.rows();
    Mat<S> dx1, dx2;
    q1.backward(c1, dq1, nullptr, &dx1);
    q2.backward(c2, dq2, nullptr, &dx2);
    const Mat<S> d_action = dx1.bottomRows(n) + dx2.bottomRows(n);
    const Mat<S> d_logp = Mat<S>::Constant(1, B, S(alpha / double(B)));
    policy_backward(actor, pe, d_action, d_logp, t.grad);
    return t;
}

/// Temperature objective -log_alpha * mean(log pi + target_entropy); its
/// derivative with respect to log_alpha.
inline double alpha_gradient(double mean_logp, double target_entropy) { return -(mean_logp + target_entropy); }

// ------------------------------------------------------------------ agent

struct UpdateStats {
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double alpha_loss = 0.0;
    double alpha = 0.0;
    double entropy = 0.0;
    double mean_q = 0.0;
};

template <class S>
class SacAgent {
public:
    SacAgent(std::size_t obs_dim, std::size_t act_dim, SacConfig cfg, std::uint64_t seed)
        : cfg_(std::move(cfg)), rng_(seed),
          policy_(obs_dim, act_dim, cfg_.hidden, cfg_.log_std_min, cfg_.log_std_max),
          q1_({int(obs_dim + act_dim), cfg_.hidden, cfg_.hidden, 1}), q2_(q1_.sizes()) {
        cfg_.validate();
        policy_.use_norm = cfg_.obs_norm;
        policy_.actor().init(rng_, cfg_.actor_output_scale);
        q1_.init(rng_);
        q2_.init(rng_);
        q1_target_ = q1_;
        q2_target_ = q2_;
        actor_opt_ = nn::Adam<S>(cfg_.lr_actor, policy_.actor().num_params());
        q1_opt_ = nn::Adam<S>(cfg_.lr_critic, q1_.num_params());
        q2_opt_ = nn::Adam<S>(cfg_.lr_critic, q2_.num_params());
        log_alpha_ = std::log(std::max(cfg_.initial_alpha, 1e-300));
        alpha_opt_ = nn::Adam<double>(cfg_.lr_alpha, 1);
        target_entropy_ = cfg_.target_entropy_per_dim * double(act_dim);
    }

    const SacConfig& config() const { return cfg_; }
    std::mt19937_64& rng() { return rng_; }
    Policy<S>& policy() { return policy_; }
    const Policy<S>& policy() const { return policy_; }
    Mlp<S>& q1() { return q1_; }
    Mlp<S>& q2() { return q2_; }
    Mlp<S>& q1_target() { return q1_target_; }
    Mlp<S>& q2_target() { return q2_target_; }
    double alpha() const { return cfg_.auto_alpha ? std::exp(log_alpha_) : cfg_.initial_alpha; }
    double target_entropy() const { return target_entropy_; }

    std::vector<double> act(std::span<const double> obs, bool deterministic) {
        return policy_.act(obs, deterministic, rng_);
    }

    /// Critic step on both critics, actor step, temperature step, then
    /// Polyak averaging of the target critics.
    UpdateStats update(const Batch<S>& raw) {
        const Mat<S> obs = policy_.prepare(raw.obs);
        const Mat<S> next = policy_.prepare(raw.next_obs);
        const Eigen::Index n = Eigen::Index(policy_.act_dim()), B = obs.cols();
        const double ls_min = cfg_.log_std_min, ls_max = cfg_.log_std_max;
        UpdateStats st;
        st.alpha = alpha();

        const Mat<S> eps_next = standard_normal<S>(n, B, rng_);
        CriticTerms<S> ct = critic_terms(q1_, q2_, q1_target_, q2_target_, policy_.actor(), st.alpha, cfg_.gamma, obs,
                                         raw.action, raw.reward, raw.done, next, eps_next, ls_min, ls_max);
        q1_opt_.step(q1_.params(), ct.grad1);
        q2_opt_.step(q2_.params(), ct.grad2);
        st.critic_loss = 0.5 * (ct.loss1 + ct.loss2);

        const Mat<S> eps = standard_normal<S>(n, B, rng_);
        ActorTerms<S> at = actor_terms(policy_.actor(), q1_, q2_, st.alpha, obs, eps, ls_min, ls_max);
        actor_opt_.step(policy_.actor().params(), at.grad);
        st.actor_loss = at.loss;
        st.entropy = -at.mean_logp;
        st.mean_q = at.mean_q;

        if (cfg_.auto_alpha) {
            Vec<double> la(1), g(1);
            la(0) = log_alpha_;
            g(0) = alpha_gradient(at.mean_logp, target_entropy_);
            st.alpha_loss = -log_alpha_ * (at.mean_logp + target_entropy_);
            alpha_opt_.step(la, g);
            log_alpha_ = la(0);
        }

        nn::polyak_update(q1_target_.params(), q1_.params(), cfg_.tau);
        nn::polyak_update(q2_target_.params(), q2_.params(), cfg_.tau);
        return st;
    }

private:
    SacConfig cfg_;
    std::mt19937_64 rng_;
    Policy<S> policy_;
    Mlp<S> q1_, q2_, q1_target_, q2_target_;
    nn::Adam<S> actor_opt_, q1_opt_, q2_opt_;
    nn::Adam<double> alpha_opt_;
    double log_alpha_ = 0.0;
    double target_entropy_ = -1.0;
};

// --------------------------------------------------------------- training

/// Minimal episodic environment contract consumed by `train`. Observations
/// are already scaled for network input; actions are in [-1, 1]^n.
struct Transition {
    std::vector<double> obs;
    double reward = 0.0;
    bool done = false;       // episode over
    bool truncated = false;  // over because of a time cap, not a terminal state
};

class Environment {
public:
    virtual ~Environment() = default;
    virtual std::size_t observation_size() const = 0;
    virtual std::size_t action_size() const = 0;
    virtual std::vector<double> reset() = 0;
    virtual Transition step(std::span<const double> action) = 0;
};

using EnvFactory = std::function<std::unique_ptr<Environment>(std::uint64_t seed)>;

struct EpisodeLog {
    long env_step = 0;
    long episode = 0;
    double undiscounted_return = 0.0;
    long length = 0;
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double alpha = 0.0;
    double entropy = 0.0;
};

struct TrainCallbacks {
    std::function<void(const EpisodeLog&)> on_episode;
    std::function<void(long env_step, const UpdateStats&)> on_update;
};

template <class S>
struct TrainResult {
    std::unique_ptr<SacAgent<S>> agent;
    std::vector<EpisodeLog> log;
    long nonfinite_events = 0;
};

inline std::uint64_t env_seed_for(std::uint64_t seed) { return splitmix64(seed ^ 0x656e7669726f6e6dULL); }

/// Episodic SAC loop: uniform random actions until `warmup_steps`, then
/// policy samples; one or more updates per environment step once the buffer
/// holds a full batch.
template <class S = double>
TrainResult<S> train(const EnvFactory& factory, const SacConfig& cfg, long total_steps, std::uint64_t seed,
                     const TrainCallbacks& cb = {}) {
    std::unique_ptr<Environment> env = factory(env_seed_for(seed));
    const std::size_t od = env->observation_size(), ad = env->action_size();
    TrainResult<S> res;
    res.agent = std::make_unique<SacAgent<S>>(od, ad, cfg, splitmix64(seed));
    SacAgent<S>& agent = *res.agent;
    ReplayBuffer buffer(od, ad, std::size_t(cfg.buffer_capacity));
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    std::vector<double> obs = env->reset();
    if (cfg.obs_norm) agent.policy().norm().update(obs);
    EpisodeLog ep;
    long episode = 0, n_updates = 0;
    UpdateStats acc;

    for (long t = 0; t < total_steps; ++t) {
        std::vector<double> action(ad);
        if (t < cfg.warmup_steps) {
            for (auto& a : action) a = unit(agent.rng());
        } else {
            action = agent.act(obs, false);
        }
        Transition tr = env->step(action);
        buffer.add(obs, action, tr.reward, tr.obs, tr.done && !tr.truncated);
        ep.undiscounted_return += tr.reward;
        ++ep.length;
        obs = std::move(tr.obs);
        if (cfg.obs_norm) agent.policy().norm().update(obs);

        if (t + 1 >= cfg.warmup_steps && buffer.size() >= std::size_t(cfg.batch_size)) {
            for (int k = 0; k < cfg.updates_per_env_step; ++k) {
                const Batch<S> b = buffer.sample<S>(std::size_t(cfg.batch_size), agent.rng());
                const UpdateStats st = agent.update(b);
                if (!std::isfinite(st.critic_loss) || !std::isfinite(st.actor_loss)) ++res.nonfinite_events;
                acc.critic_loss += st.critic_loss;
                acc.actor_loss += st.actor_loss;
                acc.alpha += st.alpha;
                acc.entropy += st.entropy;
                ++n_updates;
                if (cb.on_update) cb.on_update(t + 1, st);
            }
        }

        if (tr.done) {
            ep.env_step = t + 1;
            ep.episode = episode++;
            if (n_updates > 0) {
                ep.critic_loss = acc.critic_loss / double(n_updates);
                ep.actor_loss = acc.actor_loss / double(n_updates);
                ep.alpha = acc.alpha / double(n_updates);
                ep.entropy = acc.entropy / double(n_updates);
            } else {
                ep.alpha = agent.alpha();
            }
            res.log.push_back(ep);
            if (cb.on_episode) cb.on_episode(ep);
            ep = EpisodeLog{};
            acc = UpdateStats{};
            n_updates = 0;
            obs = env->reset();
            if (cfg.obs_norm) agent.policy().norm().update(obs);
        }
    }
    return res;
}

}  // namespace rampmerge::sac
