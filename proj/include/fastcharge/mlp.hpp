#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fastcharge/errors.hpp"

namespace fastcharge::nn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Flattened parameters in layer order, each layer as W (column-major)
/// followed by b.
using ParameterVector = Eigen::VectorXd;

enum class OutputActivation { identity, tanh };

inline std::string to_string(OutputActivation a) { return a == OutputActivation::tanh ? "tanh" : "identity"; }

inline OutputActivation output_activation_from_string(const std::string& s)
{
    if (s == "tanh")
        return OutputActivation::tanh;
    if (s == "identity")
        return OutputActivation::identity;
    throw ValidationError("output_activation", "unknown activation '" + s + "'");
}

/// Activations saved by a batched forward pass. Column j of each matrix
/// belongs to sample j.
struct ForwardCache
{
    std::vector<Matrix> inputs;      // input to each layer
    std::vector<Matrix> pre;         // pre-activations
    Matrix output;
};

struct Gradients
{
    ParameterVector params;
    Matrix inputs;                   // dL/dx, one column per sample
};

/// Dense feed-forward network: rectifier hidden layers and a tanh or
/// identity head. All parameters live in one contiguous vector.
class Mlp
{
public:
    Mlp() = default;

    Mlp(std::vector<int> layer_sizes, OutputActivation output)
        : sizes_(std::move(layer_sizes)), output_(output)
    {
        if (sizes_.size() < 3)
            throw ValidationError("layer_sizes", "need input, at least one hidden layer and output");
        for (int s : sizes_)
            if (s < 1)
                throw ValidationError("layer_sizes", "every size must be >= 1");
        std::size_t offset = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            offsets_.push_back(offset);
            offset += static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1] + sizes_[l + 1];
        }
        params_ = ParameterVector::Zero(static_cast<Eigen::Index>(offset));
    }

    const std::vector<int>& layer_sizes() const { return sizes_; }
    OutputActivation output_activation() const { return output_; }
    int input_size() const { return sizes_.front(); }
    int output_size() const { return sizes_.back(); }
    std::size_t layer_count() const { return sizes_.size() - 1; }
    Eigen::Index parameter_count() const { return params_.size(); }

    ParameterVector& parameters() { return params_; }
    const ParameterVector& parameters() const { return params_; }

    ParameterVector flatten() const { return params_; }

    void unflatten(const ParameterVector& p)
    {
        if (p.size() != params_.size())
            throw ValidationError("parameters", "size mismatch on unflatten");
        params_ = p;
    }

    Eigen::Map<Matrix> weight(std::size_t l)
    {
        return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
    }
    Eigen::Map<const Matrix> weight(std::size_t l) const
    {
        return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
    }
    Eigen::Map<Vector> bias(std::size_t l)
    {
        return {params_.data() + offsets_[l] + static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1], sizes_[l + 1]};
    }
    Eigen::Map<const Vector> bias(std::size_t l) const
    {
        return {params_.data() + offsets_[l] + static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1], sizes_[l + 1]};
    }

    Matrix forward(const Matrix& x) const
    {
        check_input(x.rows());
        Matrix a = x;
        for (std::size_t l = 0; l < layer_count(); ++l) {
            Matrix z = weight(l) * a;
            z.colwise() += bias(l);
            a = activate(z, l);
        }
        return a;
    }

    Vector forward(const Vector& x) const { return forward(Matrix(x)).col(0); }

    ForwardCache forward_cached(const Matrix& x) const
    {
        check_input(x.rows());
        ForwardCache c;
        Matrix a = x;
        for (std::size_t l = 0; l < layer_count(); ++l) {
            Matrix z = weight(l) * a;
            z.colwise() += bias(l);
            c.inputs.push_back(std::move(a));
            a = activate(z, l);
            c.pre.push_back(std::move(z));
        }
        c.output = std::move(a);
        return c;
    }

    /// Reverse-mode pass. `upstream` is dL/dy per sample; parameter
    /// gradients are summed over the batch.
    Gradients backward(const ForwardCache& cache, const Matrix& upstream) const
    {
        if (upstream.rows() != output_size() || upstream.cols() != cache.output.cols())
            throw ValidationError("upstream", "shape does not match forward output");
        Matrix delta = upstream;
        if (output_ == OutputActivation::tanh)
            delta.array() *= 1.0 - cache.output.array().square();
        return backward_pre(cache, delta);
    }

    /// Reverse pass starting from dL/dz of the output layer's
    /// pre-activation.
    Gradients backward_pre(const ForwardCache& cache, const Matrix& upstream_pre) const
    {
        if (upstream_pre.rows() != output_size() || upstream_pre.cols() != cache.output.cols())
            throw ValidationError("upstream", "shape does not match forward output");
        Gradients g;
        g.params = ParameterVector::Zero(params_.size());
        Matrix delta = upstream_pre;
        for (std::size_t l = layer_count(); l-- > 0;) {
            if (l + 1 < layer_count())
                delta.array() *= (cache.pre[l].array() > 0.0).cast<double>();
            const std::size_t w_size = static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1];
            Eigen::Map<Matrix>(g.params.data() + offsets_[l], sizes_[l + 1], sizes_[l]).noalias() =
                delta * cache.inputs[l].transpose();
            Eigen::Map<Vector>(g.params.data() + offsets_[l] + w_size, sizes_[l + 1]) = delta.rowwise().sum();
            delta = weight(l).transpose() * delta;
        }
        g.inputs = std::move(delta);
        return g;
    }

    friend bool operator==(const Mlp& a, const Mlp& b)
    {
        return a.sizes_ == b.sizes_ && a.output_ == b.output_ && a.params_ == b.params_;
    }

private:
    void check_input(Eigen::Index rows) const
    {
        if (rows != input_size())
            throw ValidationError("input", "expected " + std::to_string(input_size()) + " rows, got "
                                               + std::to_string(rows));
    }

    Matrix activate(const Matrix& z, std::size_t l) const
    {
        if (l + 1 < layer_count())
            return z.cwiseMax(0.0);
        if (output_ == OutputActivation::tanh)
            return z.array().tanh().matrix();
        return z;
    }

    std::vector<int> sizes_;
    OutputActivation output_ = OutputActivation::identity;
    std::vector<std::size_t> offsets_;
    ParameterVector params_;
};

/// Hidden weights uniform in +-1/sqrt(fan_in), final layer uniform in
/// +-3e-3, biases zero.
inline Mlp mlp_init(const std::vector<int>& layer_sizes, OutputActivation output, std::uint64_t seed)
{
    Mlp net(layer_sizes, output);
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const double bound = l + 1 == net.layer_count() ? 3e-3 : 1.0 / std::sqrt(layer_sizes[l]);
        std::uniform_real_distribution<double> dist(-bound, bound);
        auto w = net.weight(l);
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            for (Eigen::Index i = 0; i < w.rows(); ++i)
                w(i, j) = dist(rng);
    }
    return net;
}

/// Single-sample convenience form of the reverse pass.
inline Gradients backward(const Mlp& net, const Vector& x, const Vector& upstream)
{
    return net.backward(net.forward_cached(Matrix(x)), Matrix(upstream));
}

struct AdamState
{
    Vector m;
    Vector v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    AdamState() = default;
    explicit AdamState(Eigen::Index n) : m(Vector::Zero(n)), v(Vector::Zero(n)) {}

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Bias-corrected adaptive-moment descent step. Returns false and leaves
/// both network and state untouched if any gradient entry is non-finite.
inline bool adam_step(Mlp& net, const ParameterVector& grad, AdamState& state, double lr)
{
    if (grad.size() != net.parameter_count() || state.m.size() != grad.size() || state.v.size() != grad.size())
        throw ValidationError("gradient", "shape mismatch in adam_step");
    if (!grad.allFinite())
        return false;
    state.step += 1;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    net.parameters().array() -=
        lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.epsilon);
    return true;
}

/// target <- tau * source + (1 - tau) * target
inline void soft_update(Mlp& target, const Mlp& source, double tau)
{
    if (!(tau >= 0.0 && tau <= 1.0))
        throw ValidationError("tau", "must lie in [0,1]");
    if (target.layer_sizes() != source.layer_sizes() || target.output_activation() != source.output_activation())
        throw ValidationError("target", "shape differs from source");
    if (tau == 1.0) {
        target.parameters() = source.parameters();
        return;
    }
    target.parameters() = tau * source.parameters() + (1.0 - tau) * target.parameters();
}

} // namespace fastcharge::nn
