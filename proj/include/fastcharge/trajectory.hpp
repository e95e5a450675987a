#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fastcharge/spmet.hpp"

namespace fastcharge {

/// One sample of a simulated or controlled trajectory. Reward and done are
/// only meaningful for environment rollouts.
struct TrajectoryPoint
{
    double time_s = 0.0;
    double current_a = 0.0; // applied current, negative while charging
    VoltageBreakdown voltage;
    double t_cell_k = 0.0;
    double soc_anode = 0.0;
    double reward = 0.0;
    bool done = false;

    friend bool operator==(const TrajectoryPoint& a, const TrajectoryPoint& b)
    {
        const auto& x = a.voltage;
        const auto& y = b.voltage;
        return a.time_s == b.time_s && a.current_a == b.current_a && x.v_terminal == y.v_terminal
               && x.eta_anode == y.eta_anode && x.eta_cathode == y.eta_cathode && x.ocp_diff == y.ocp_diff
               && x.film_drop == y.film_drop && x.electrolyte_ohmic == y.electrolyte_ohmic
               && x.concentration_polarization == y.concentration_polarization && a.t_cell_k == b.t_cell_k
               && a.soc_anode == b.soc_anode && a.reward == b.reward && a.done == b.done;
    }
};

inline std::string format_number(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

/// Writes the trajectory CSV. With `env_columns` the reward and done
/// columns are appended.
inline void write_trajectory_csv(std::ostream& os, std::span<const TrajectoryPoint> points, bool env_columns)
{
    os << "time_s,current_A,v_terminal_V,t_cell_K,soc_anode,eta_anode_V,eta_cathode_V,ocp_diff_V,"
          "film_drop_V,electrolyte_ohmic_V,concentration_polarization_V";
    if (env_columns)
        os << ",reward,done";
    os << '\n';
    for (const auto& p : points) {
        const auto& v = p.voltage;
        os << format_number(p.time_s) << ',' << format_number(p.current_a) << ',' << format_number(v.v_terminal)
           << ',' << format_number(p.t_cell_k) << ',' << format_number(p.soc_anode) << ','
           << format_number(v.eta_anode) << ',' << format_number(v.eta_cathode) << ','
           << format_number(v.ocp_diff) << ',' << format_number(v.film_drop) << ','
           << format_number(v.electrolyte_ohmic) << ',' << format_number(v.concentration_polarization);
        if (env_columns)
            os << ',' << format_number(p.reward) << ',' << (p.done ? 1 : 0);
        os << '\n';
    }
}

/// Piecewise-constant current: current_a[k] is held over [k dt, (k+1) dt).
struct CurrentProfile
{
    double dt = 60.0;
    std::vector<double> current_a;

    double duration() const { return dt * static_cast<double>(current_a.size()); }

    void validate() const
    {
        if (!std::isfinite(dt) || !(dt > 0.0))
            throw ValidationError("dt", "profile step must be finite and > 0");
        for (double i : current_a)
            if (!std::isfinite(i))
                throw ValidationError("current_a", "profile currents must be finite");
    }
};

/// Open-loop run; one point at t = 0 (zero-current voltage) and one at the
/// end of every segment.
inline std::vector<TrajectoryPoint> simulate_profile(const SimulatorContext& ctx, CellState state,
                                                     const CurrentProfile& profile)
{
    profile.validate();
    std::vector<TrajectoryPoint> out;
    out.reserve(profile.current_a.size() + 1);
    TrajectoryPoint p0;
    p0.voltage = terminal_voltage_guarded(ctx, state, 0.0);
    p0.t_cell_k = state.t_cell;
    p0.soc_anode = bulk_soc(ctx, state, Electrode::anode);
    out.push_back(p0);
    for (std::size_t k = 0; k < profile.current_a.size(); ++k) {
        const double i = profile.current_a[k];
        state = step(ctx, std::move(state), i, profile.dt);
        TrajectoryPoint p;
        p.time_s = profile.dt * static_cast<double>(k + 1);
        p.current_a = i;
        p.voltage = terminal_voltage_guarded(ctx, state, i);
        p.t_cell_k = state.t_cell;
        p.soc_anode = bulk_soc(ctx, state, Electrode::anode);
        out.push_back(p);
    }
    return out;
}

} // namespace fastcharge
