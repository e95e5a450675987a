#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "fastcharge/cell_parameters.hpp"
#include "fastcharge/env.hpp"
#include "fastcharge/errors.hpp"
#include "fastcharge/mlp.hpp"
#include "fastcharge/spmet.hpp"
#include "fastcharge/trajectory.hpp"

namespace fastcharge {

/// Output-feedback constant-current / constant-voltage charger. Gains are
/// in C-rate per volt and C-rate per kelvin.
struct CcCvConfig
{
    double cc_rate = 1.0;  // C
    double v_hold = 4.2;   // V
    double t_hold = 47.0;  // deg C
    double k_v = 4.0;
    double k_t = 0.5;
    double cutoff_soc = 1.0; // no current at or above this SOC

    void validate(const EnvConfig& env) const
    {
        if (!(cc_rate > 0.0 && cc_rate <= env.i_max))
            throw ValidationError("cc_rate", "must lie in (0, i_max]");
        if (!(v_hold <= env.v_max) || !std::isfinite(v_hold))
            throw ValidationError("v_hold", "must be finite and <= v_max");
        if (!std::isfinite(t_hold))
            throw ValidationError("t_hold", "must be finite");
        if (!(k_v > 0.0) || !std::isfinite(k_v))
            throw ValidationError("k_v", "must be finite and > 0");
        if (!(k_t > 0.0) || !std::isfinite(k_t))
            throw ValidationError("k_t", "must be finite and > 0");
        if (!(cutoff_soc > 0.0))
            throw ValidationError("cutoff_soc", "must be > 0");
    }
};

/// What the charger measures: last terminal voltage, cell temperature
/// (deg C) and SOC.
struct CcCvMeasurement
{
    double v_terminal = 0.0;
    double t_cell_c = 0.0;
    double soc = 0.0;
};

/// C-rate request min(cc_rate, k_v (v_hold - V), k_t (t_hold - T)),
/// clamped to [0, i_max] and mapped onto the actor's [-1,1] action range.
/// The voltage loop starts to taper cc_rate/k_v below v_hold, so the
/// measured voltage settles under the hold value.
inline double cccv_controller(const CcCvMeasurement& m, const CcCvConfig& cfg, const EnvConfig& env)
{
    if (!std::isfinite(m.v_terminal) || !std::isfinite(m.t_cell_c) || !(m.soc < cfg.cutoff_soc))
        return -1.0;
    double c = cfg.cc_rate;
    c = std::min(c, cfg.k_v * (cfg.v_hold - m.v_terminal));
    c = std::min(c, cfg.k_t * (cfg.t_hold - m.t_cell_c));
    c = std::clamp(c, 0.0, env.i_max);
    return std::clamp(2.0 * c / env.i_max - 1.0, -1.0, 1.0);
}

/// Measurement available after the latest step of `env`.
inline CcCvMeasurement measure(const ChargingEnv& env)
{
    const auto& p = env.trajectory().back();
    return {p.voltage.v_terminal, p.t_cell_k - constants::zero_celsius, p.soc_anode};
}

/// Bulk SOC by integrating current: soc[k+1] = soc[k] - I_k dt / (3600 Q).
/// Charging currents are negative, so for a charge this adds |I| dt.
inline std::vector<double> coulomb_counting_oracle(std::span<const double> current_a, double dt, double q_nominal_ah,
                                                   double soc_init)
{
    std::vector<double> soc{soc_init};
    soc.reserve(current_a.size() + 1);
    double charge_as = 0.0;
    for (double i : current_a) {
        charge_as -= i * dt;
        soc.push_back(soc_init + charge_as / (3600.0 * q_nominal_ah));
    }
    return soc;
}

enum class Refinement { time, space, both };

/// Largest state vector and sub-step count the reference run will attempt.
inline constexpr int max_reference_states = 20000;
inline constexpr double max_reference_substeps = 2e7;

inline Discretization refine(const Discretization& d, int factor, Refinement mode)
{
    if (mode == Refinement::both)
        return d.refined(factor);
    Discretization r = d;
    if (mode == Refinement::time) {
        r.dt_sim /= factor;
    } else {
        r = d.refined(factor);
        r.dt_sim = d.dt_sim;
    }
    return r;
}

/// Re-runs `profile` from an equilibrium start on a grid refined by
/// `factor`; returns the trajectory at segment ends.
inline std::vector<TrajectoryPoint> fine_grid_reference(const CellParameters& params, const Discretization& base,
                                                        const CurrentProfile& profile, double soc_init,
                                                        double t_init_k, int factor,
                                                        Refinement mode = Refinement::both)
{
    if (factor < 2)
        throw ValidationError("factor", "refinement factor must be >= 2");
    const Discretization fine = refine(base, factor, mode);
    if (fine.state_count() > max_reference_states)
        throw ValidationError("factor", "refined grid exceeds the size guard");
    if (profile.duration() / fine.dt_sim > max_reference_substeps)
        throw ValidationError("factor", "refined run exceeds the sub-step guard");
    const SimulatorContext ctx(params, fine);
    return simulate_profile(ctx, equilibrium_state(ctx, soc_init, t_init_k), profile);
}

/// |a - n| / max(|a|, |n|), defined as 0 when both are below `abs_tol`.
inline double relative_error(double analytic, double numeric, double abs_tol = 1e-10)
{
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    if (scale < abs_tol)
        return 0.0;
    return std::abs(analytic - numeric) / scale;
}

struct GradientCheckReport
{
    double params = 0.0;     // worst over all parameters
    double inputs = 0.0;     // worst over all input rows
    double last_input = 0.0; // worst over the final input row (critic action)

    double worst() const { return std::max(params, inputs); }
};

namespace detail {

/// Extended-precision re-implementation of the forward pass used as the
/// finite-difference reference. Independent of nn::Mlp::forward.
class ReferenceNet
{
public:
    using Real = long double;

    explicit ReferenceNet(const nn::Mlp& net) : sizes_(net.layer_sizes()), tanh_(net.output_activation() == nn::OutputActivation::tanh)
    {
        for (std::size_t l = 0; l < net.layer_count(); ++l) {
            const auto w = net.weight(l);
            const auto b = net.bias(l);
            std::vector<Real> wl(static_cast<std::size_t>(w.size()));
            for (Eigen::Index i = 0; i < w.rows(); ++i)
                for (Eigen::Index j = 0; j < w.cols(); ++j)
                    wl[static_cast<std::size_t>(i * w.cols() + j)] = w(i, j);
            w_.push_back(std::move(wl));
            b_.emplace_back(b.data(), b.data() + b.size());
        }
    }

    std::size_t layers() const { return w_.size(); }
    int fan_in(std::size_t l) const { return sizes_[l]; }
    int fan_out(std::size_t l) const { return sizes_[l + 1]; }

    /// Activations entering each layer, plus the output, for one sample.
    std::vector<std::vector<Real>> activations(const std::vector<Real>& x) const
    {
        std::vector<std::vector<Real>> a{x};
        for (std::size_t l = 0; l < layers(); ++l)
            a.push_back(layer(l, a.back()));
        return a;
    }

    /// Output after replacing entry `index` of layer `l`'s flattened
    /// parameters (row-major W, then b) with `value`. `a` holds the cached
    /// activations of the unperturbed sample.
    std::vector<Real> output_with(const std::vector<std::vector<Real>>& a, std::size_t l, std::size_t index,
                                  Real value) const
    {
        const std::size_t n_w = w_[l].size();
        const std::size_t unit = index < n_w ? index / static_cast<std::size_t>(fan_in(l)) : index - n_w;
        Real z = index < n_w ? b_[l][unit] : value;
        for (int j = 0; j < fan_in(l); ++j) {
            const std::size_t k = unit * static_cast<std::size_t>(fan_in(l)) + static_cast<std::size_t>(j);
            z += (k == index ? value : w_[l][k]) * a[l][static_cast<std::size_t>(j)];
        }
        std::vector<Real> next = a[l + 1];
        next[unit] = activate(z, l);
        for (std::size_t m = l + 1; m < layers(); ++m)
            next = layer(m, next);
        return next;
    }

    Real parameter(std::size_t l, std::size_t index) const
    {
        return index < w_[l].size() ? w_[l][index] : b_[l][index - w_[l].size()];
    }

    std::size_t parameter_count(std::size_t l) const { return w_[l].size() + b_[l].size(); }

    std::vector<Real> forward(const std::vector<Real>& x) const { return activations(x).back(); }

private:
    Real activate(Real z, std::size_t l) const
    {
        if (l + 1 < layers())
            return z > 0 ? z : Real(0);
        return tanh_ ? std::tanh(z) : z;
    }

    std::vector<Real> layer(std::size_t l, const std::vector<Real>& in) const
    {
        std::vector<Real> out(static_cast<std::size_t>(fan_out(l)));
        for (int i = 0; i < fan_out(l); ++i) {
            Real z = b_[l][static_cast<std::size_t>(i)];
            for (int j = 0; j < fan_in(l); ++j)
                z += w_[l][static_cast<std::size_t>(i * fan_in(l) + j)] * in[static_cast<std::size_t>(j)];
            out[static_cast<std::size_t>(i)] = activate(z, l);
        }
        return out;
    }

    std::vector<int> sizes_;
    bool tanh_;
    std::vector<std::vector<Real>> w_;
    std::vector<std::vector<Real>> b_;
};

} // namespace detail

/// Central differences of L = sum(weights .* net(samples)) against the
/// reverse pass. The differences are taken on an extended-precision copy of
/// the network. With no weights, every output counts once.
inline GradientCheckReport gradient_check(const nn::Mlp& net, const nn::Matrix& samples, double h,
                                          const nn::Matrix* weights = nullptr)
{
    using Real = detail::ReferenceNet::Real;
    if (!(h > 0.0))
        throw ValidationError("h", "step must be > 0");
    if (samples.rows() != net.input_size())
        throw ValidationError("samples", "row count must equal the network input size");
    const nn::Matrix w = weights ? *weights : nn::Matrix::Ones(net.output_size(), samples.cols());
    if (w.rows() != net.output_size() || w.cols() != samples.cols())
        throw ValidationError("weights", "shape must match the network output");
    const auto analytic = net.backward(net.forward_cached(samples), w);

    const detail::ReferenceNet ref(net);
    auto weighted = [&](const std::vector<Real>& y, Eigen::Index col) {
        Real s = 0;
        for (std::size_t o = 0; o < y.size(); ++o)
            s += static_cast<Real>(w(static_cast<Eigen::Index>(o), col)) * y[o];
        return s;
    };
    std::vector<std::vector<std::vector<Real>>> cache;
    for (Eigen::Index c = 0; c < samples.cols(); ++c) {
        std::vector<Real> x(static_cast<std::size_t>(samples.rows()));
        for (Eigen::Index r = 0; r < samples.rows(); ++r)
            x[static_cast<std::size_t>(r)] = samples(r, c);
        cache.push_back(ref.activations(x));
    }

    GradientCheckReport report;
    Eigen::Index flat = 0;
    for (std::size_t l = 0; l < ref.layers(); ++l) {
        // the reverse pass stores W column-major; the reference walks row-major
        const std::size_t rows = static_cast<std::size_t>(ref.fan_out(l));
        const std::size_t cols = static_cast<std::size_t>(ref.fan_in(l));
        for (std::size_t k = 0; k < ref.parameter_count(l); ++k) {
            const Real keep = ref.parameter(l, k);
            Real diff = 0;
            for (Eigen::Index c = 0; c < samples.cols(); ++c)
                diff += weighted(ref.output_with(cache[static_cast<std::size_t>(c)], l, k, keep + h), c)
                        - weighted(ref.output_with(cache[static_cast<std::size_t>(c)], l, k, keep - h), c);
            const double numeric = static_cast<double>(diff / (2 * static_cast<Real>(h)));
            Eigen::Index a_index = flat;
            if (k < rows * cols)
                a_index += static_cast<Eigen::Index>((k % cols) * rows + k / cols);
            else
                a_index += static_cast<Eigen::Index>(k);
            report.params = std::max(report.params, relative_error(analytic.params[a_index], numeric));
        }
        flat += static_cast<Eigen::Index>(ref.parameter_count(l));
    }

    for (Eigen::Index c = 0; c < samples.cols(); ++c) {
        std::vector<Real> x = cache[static_cast<std::size_t>(c)].front();
        for (Eigen::Index r = 0; r < samples.rows(); ++r) {
            const Real keep = x[static_cast<std::size_t>(r)];
            x[static_cast<std::size_t>(r)] = keep + h;
            const Real up = weighted(ref.forward(x), c);
            x[static_cast<std::size_t>(r)] = keep - h;
            const Real down = weighted(ref.forward(x), c);
            x[static_cast<std::size_t>(r)] = keep;
            const double e = relative_error(analytic.inputs(r, c), static_cast<double>((up - down) / (2 * static_cast<Real>(h))));
            report.inputs = std::max(report.inputs, e);
            if (r + 1 == samples.rows())
                report.last_input = std::max(report.last_input, e);
        }
    }
    return report;
}

} // namespace fastcharge
