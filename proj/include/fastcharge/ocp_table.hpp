#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fastcharge/errors.hpp"

namespace fastcharge {

/// Open-circuit potential as a function of stoichiometry, stored as a
/// sampled curve and evaluated by piecewise-linear interpolation. Queries
/// outside the sampled range clamp to the end values.
class OcpTable
{
public:
    OcpTable() = default;

    OcpTable(std::vector<double> stoichiometry, std::vector<double> potential,
             const std::string& name = "ocp")
        : x_(std::move(stoichiometry)), u_(std::move(potential))
    {
        if (x_.size() != u_.size())
            throw ValidationError(name, "stoichiometry and potential lengths differ");
        if (x_.size() < 4)
            throw ValidationError(name, "needs at least 4 points");
        for (std::size_t i = 0; i < x_.size(); ++i) {
            if (!std::isfinite(x_[i]) || !std::isfinite(u_[i]))
                throw ValidationError(name, "non-finite entry");
            if (x_[i] < 0.0 || x_[i] > 1.0)
                throw ValidationError(name, "stoichiometry outside [0,1]");
            if (i > 0 && !(x_[i] > x_[i - 1]))
                throw ValidationError(name, "stoichiometry must be strictly increasing");
        }
    }

    /// Samples `fn` at `n` evenly spaced points on [lo, hi].
    static OcpTable sample(const std::function<double(double)>& fn, double lo, double hi,
                           std::size_t n, const std::string& name = "ocp")
    {
        std::vector<double> x(n), u(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
            u[i] = fn(x[i]);
        }
        return OcpTable(std::move(x), std::move(u), name);
    }

    double operator()(double theta) const
    {
        if (theta <= x_.front())
            return u_.front();
        if (theta >= x_.back())
            return u_.back();
        const auto it = std::upper_bound(x_.begin(), x_.end(), theta);
        const auto hi = static_cast<std::size_t>(it - x_.begin());
        const auto lo = hi - 1;
        const double w = (theta - x_[lo]) / (x_[hi] - x_[lo]);
        return u_[lo] + w * (u_[hi] - u_[lo]);
    }

    double min_stoichiometry() const { return x_.front(); }
    double max_stoichiometry() const { return x_.back(); }
    const std::vector<double>& stoichiometry() const { return x_; }
    const std::vector<double>& potential() const { return u_; }
    bool empty() const { return x_.empty(); }

    friend bool operator==(const OcpTable&, const OcpTable&) = default;

private:
    std::vector<double> x_;
    std::vector<double> u_;
};

namespace ocp {

// Graphite and NMC811 fits for an LG M50 cell (Chen et al., 2020).
inline double graphite(double x)
{
    return 1.9793 * std::exp(-39.3631 * x) + 0.2482 - 0.0909 * std::tanh(29.8538 * (x - 0.1234))
           - 0.04478 * std::tanh(14.9159 * (x - 0.2769)) - 0.0205 * std::tanh(30.4444 * (x - 0.6103));
}

inline double nmc(double x)
{
    return -0.8090 * x + 4.4875 - 0.0428 * std::tanh(18.5138 * (x - 0.5542))
           - 17.7326 * std::tanh(15.7890 * (x - 0.3117)) + 17.5842 * std::tanh(15.9308 * (x - 0.3120));
}

inline OcpTable default_anode() { return OcpTable::sample(graphite, 0.0, 1.0, 201, "ocp_anode"); }
inline OcpTable default_cathode() { return OcpTable::sample(nmc, 0.0, 1.0, 201, "ocp_cathode"); }

} // namespace ocp
} // namespace fastcharge
