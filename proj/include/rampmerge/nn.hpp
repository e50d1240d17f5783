#pragma once

// Fully connected ReLU networks with reverse-mode gradients. Activations are
// stored column-per-sample (features x batch). All parameters of a network
// live in one flat vector so optimizers, target averaging and checkpoints can
// treat them uniformly.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <vector>

namespace rampmerge::nn {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Per-forward intermediate values needed by `backward`.
template <class S>
struct MlpCache {
    std::vector<Mat<S>> inputs;  // input to each layer; inputs[0] is the network input
};

template <class S>
class Mlp {
public:
    Mlp() = default;

    explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
        if (sizes_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output sizes");
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            w_off_.push_back(n);
            n += std::size_t(sizes_[l]) * sizes_[l + 1];
            b_off_.push_back(n);
            n += sizes_[l + 1];
        }
        params_ = Vec<S>::Zero(Eigen::Index(n));
    }

    const std::vector<int>& sizes() const { return sizes_; }
    std::size_t layers() const { return sizes_.size() - 1; }
    int input_size() const { return sizes_.front(); }
    int output_size() const { return sizes_.back(); }
    Eigen::Index num_params() const { return params_.size(); }

    Vec<S>& params() { return params_; }
    const Vec<S>& params() const { return params_; }

    Eigen::Map<const Mat<S>> weight(std::size_t l) const {
        return {params_.data() + w_off_[l], sizes_[l + 1], sizes_[l]};
    }
    Eigen::Map<Mat<S>> weight(std::size_t l) { return {params_.data() + w_off_[l], sizes_[l + 1], sizes_[l]}; }
    Eigen::Map<const Vec<S>> bias(std::size_t l) const { return {params_.data() + b_off_[l], sizes_[l + 1]}; }
    Eigen::Map<Vec<S>> bias(std::size_t l) { return {params_.data() + b_off_[l], sizes_[l + 1]}; }

    /// Fan-in uniform initialization; the output layer is additionally
    /// multiplied by `output_scale`.
    template <class Rng>
    void init(Rng& rng, double output_scale = 1.0) {
        for (std::size_t l = 0; l < layers(); ++l) {
            const double bound = 1.0 / std::sqrt(double(sizes_[l]));
            const double scale = l + 1 == layers() ? output_scale : 1.0;
            std::uniform_real_distribution<double> u(-bound, bound);
            auto w = weight(l);
            for (Eigen::Index j = 0; j < w.cols(); ++j)
                for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = S(u(rng) * scale);
            auto b = bias(l);
            for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = S(u(rng) * scale);
        }
    }

    Mat<S> forward(const Mat<S>& x, MlpCache<S>* cache = nullptr) const {
        if (x.rows() != sizes_.front()) throw std::invalid_argument("Mlp input size mismatch");
        if (cache) cache->inputs.resize(layers());
        Mat<S> h = x;
        for (std::size_t l = 0; l < layers(); ++l) {
            if (cache) cache->inputs[l] = h;
            Mat<S> z = weight(l) * h;
            z.colwise() += bias(l);
            if (l + 1 < layers()) z = z.cwiseMax(S(0));
            h = std::move(z);
        }
        return h;
    }

    /// Back-propagates `d_out` (dLoss/dOutput). Parameter gradients are
    /// written to `grad` when non-null; the input gradient to `d_in` when
    /// non-null.
    void backward(const MlpCache<S>& cache, const Mat<S>& d_out, Vec<S>* grad, Mat<S>* d_in) const {
        if (grad) grad->setZero(params_.size());
        Mat<S> dz = d_out;
        for (std::size_t l = layers(); l-- > 0;) {
            const Mat<S>& a = cache.inputs[l];
            if (grad) {
                Eigen::Map<Mat<S>>(grad->data() + w_off_[l], sizes_[l + 1], sizes_[l]).noalias() = dz * a.transpose();
                Eigen::Map<Vec<S>>(grad->data() + b_off_[l], sizes_[l + 1]) = dz.rowwise().sum();
            }
            if (l == 0 && !d_in) break;
            Mat<S> da = weight(l).transpose() * dz;
            if (l == 0) {
                *d_in = std::move(da);
                break;
            }
            // ReLU: the stored input of layer l is the activation of layer l-1.
            dz = (a.array() > S(0)).select(da, S(0));
        }
    }

private:
    std::vector<int> sizes_;
    std::vector<std::size_t> w_off_, b_off_;
    Vec<S> params_;
};

/// Adam with bias correction over a flat parameter vector.
template <class S>
struct Adam {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    Vec<S> m, v;
    long t = 0;

    Adam() = default;
    Adam(double lr_, Eigen::Index n) : lr(lr_), m(Vec<S>::Zero(n)), v(Vec<S>::Zero(n)) {}

    void step(Vec<S>& params, const Vec<S>& grad) {
        ++t;
        m = S(beta1) * m + S(1 - beta1) * grad;
        v = S(beta2) * v + S(1 - beta2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(beta1, double(t));
        const double c2 = 1.0 - std::pow(beta2, double(t));
        const S step_size = S(lr / c1);
        const S denom_scale = S(1.0 / std::sqrt(c2));
        params.array() -= step_size * m.array() / (v.array().sqrt() * denom_scale + S(eps));
    }
};

/// target <- (1 - tau) target + tau source
template <class S>
void polyak_update(Vec<S>& target, const Vec<S>& source, double tau) {
    target = S(1.0 - tau) * target + S(tau) * source;
}

}  // namespace rampmerge::nn
