#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "fastcharge/errors.hpp"
#include "fastcharge/ocp_table.hpp"

namespace fastcharge {

namespace constants {
inline constexpr double faraday = 96485.33212;   // C/mol
inline constexpr double gas_constant = 8.314462618; // J/(mol K)
inline constexpr double zero_celsius = 273.15;   // K
} // namespace constants

enum class Electrode { anode, cathode };

/// Physical constants of a graphite/NMC cell. SI units throughout except
/// `q_nominal` (A h). Defaults are adapted from a published LG M50 (21700)
/// parameterisation with film resistance and thermal mass chosen for a
/// lumped single-cell test bench.
struct CellParameters
{
    // solid phase
    double d_s_anode = 3.3e-14;     // m^2/s
    double d_s_cathode = 1.0e-14;   // m^2/s
    double r_s_anode = 5.86e-6;     // m
    double r_s_cathode = 5.22e-6;   // m
    double c_s_max_anode = 33133.0; // mol/m^3
    double c_s_max_cathode = 63104.0;

    // electrolyte
    double eps_e_anode = 0.3;
    double eps_e_sep = 0.47;
    double eps_e_cathode = 0.3;
    double d_e_ref = 3.0e-10; // m^2/s
    double bruggeman = 1.5;
    double t_plus = 0.2594;
    double c_e_init = 1000.0; // mol/m^3
    double kappa_eff = 0.25;  // S/m
    double activity = 1.0;    // gamma_act in k_conc

    // geometry
    double l_anode = 85.2e-6; // m
    double l_sep = 12.0e-6;
    double l_cathode = 75.6e-6;
    double area = 0.1027;            // m^2
    double a_anode = 3.0 * 0.75 / 5.86e-6;    // 1/m
    double a_cathode = 3.0 * 0.665 / 5.22e-6; // 1/m

    // kinetics
    double r_f_anode = 0.02;   // ohm m^2
    double r_f_cathode = 0.01; // ohm m^2
    double alpha = 0.5;
    double k_anode = 2.0e-6;   // A/m^2 (m^3/mol)^(1+alpha)
    double k_cathode = 3.42e-6;

    // thermal
    double m_cell = 0.068;    // kg
    double c_p_th = 1100.0;   // J/(kg K)
    double r_th = 10.0;       // K/W
    double t_amb = 300.15;    // K
    double heat_scale = 1.0;  // multiplier on generated heat

    // stoichiometry windows, used to place the cathode for a given anode SOC
    double stoich_anode_0 = 0.0279;
    double stoich_anode_100 = 0.9014;
    double stoich_cathode_0 = 0.9077;
    double stoich_cathode_100 = 0.2661;

    double faraday = constants::faraday;
    double gas_constant = constants::gas_constant;

    OcpTable ocp_anode = ocp::default_anode();
    OcpTable ocp_cathode = ocp::default_cathode();

    /// Theoretical anode capacity (A h): the charge that moves the bulk
    /// anode stoichiometry from 0 to 1. Defines 1C.
    double q_nominal() const
    {
        return a_anode * area * l_anode * r_s_anode * c_s_max_anode * faraday / (3.0 * 3600.0);
    }

    double thermal_time_constant() const { return m_cell * c_p_th * r_th; }

    double d_s(Electrode e) const { return e == Electrode::anode ? d_s_anode : d_s_cathode; }
    double r_s(Electrode e) const { return e == Electrode::anode ? r_s_anode : r_s_cathode; }
    double c_s_max(Electrode e) const { return e == Electrode::anode ? c_s_max_anode : c_s_max_cathode; }
    double a_s(Electrode e) const { return e == Electrode::anode ? a_anode : a_cathode; }
    double thickness(Electrode e) const { return e == Electrode::anode ? l_anode : l_cathode; }
    double r_f(Electrode e) const { return e == Electrode::anode ? r_f_anode : r_f_cathode; }
    double k_rate(Electrode e) const { return e == Electrode::anode ? k_anode : k_cathode; }
    const OcpTable& ocp(Electrode e) const { return e == Electrode::anode ? ocp_anode : ocp_cathode; }

    /// Cathode stoichiometry paired with a given bulk anode stoichiometry.
    double cathode_stoich_for(double anode_stoich) const
    {
        const double frac = (anode_stoich - stoich_anode_0) / (stoich_anode_100 - stoich_anode_0);
        return stoich_cathode_0 + frac * (stoich_cathode_100 - stoich_cathode_0);
    }

    void validate() const
    {
        auto positive = [](double v, const char* name) {
            if (!std::isfinite(v) || !(v > 0.0))
                throw ValidationError(name, "must be finite and > 0");
        };
        auto open_unit = [](double v, const char* name) {
            if (!std::isfinite(v) || !(v > 0.0 && v < 1.0))
                throw ValidationError(name, "must lie in (0,1)");
        };
        auto nonneg = [](double v, const char* name) {
            if (!std::isfinite(v) || v < 0.0)
                throw ValidationError(name, "must be finite and >= 0");
        };
        positive(d_s_anode, "d_s_anode");
        positive(d_s_cathode, "d_s_cathode");
        positive(r_s_anode, "r_s_anode");
        positive(r_s_cathode, "r_s_cathode");
        positive(c_s_max_anode, "c_s_max_anode");
        positive(c_s_max_cathode, "c_s_max_cathode");
        open_unit(eps_e_anode, "eps_e_anode");
        open_unit(eps_e_sep, "eps_e_sep");
        open_unit(eps_e_cathode, "eps_e_cathode");
        positive(d_e_ref, "d_e_ref");
        positive(bruggeman, "bruggeman");
        open_unit(t_plus, "t_plus");
        positive(c_e_init, "c_e_init");
        positive(kappa_eff, "kappa_eff");
        positive(activity, "activity");
        positive(l_anode, "l_anode");
        positive(l_sep, "l_sep");
        positive(l_cathode, "l_cathode");
        positive(area, "area");
        positive(a_anode, "a_anode");
        positive(a_cathode, "a_cathode");
        nonneg(r_f_anode, "r_f_anode");
        nonneg(r_f_cathode, "r_f_cathode");
        open_unit(alpha, "alpha");
        positive(k_anode, "k_anode");
        positive(k_cathode, "k_cathode");
        positive(m_cell, "m_cell");
        positive(c_p_th, "c_p_th");
        positive(r_th, "r_th");
        positive(t_amb, "t_amb");
        positive(heat_scale, "heat_scale");
        positive(faraday, "faraday");
        positive(gas_constant, "gas_constant");
        for (auto [v, name] : {std::pair{stoich_anode_0, "stoich_anode_0"},
                               std::pair{stoich_anode_100, "stoich_anode_100"},
                               std::pair{stoich_cathode_0, "stoich_cathode_0"},
                               std::pair{stoich_cathode_100, "stoich_cathode_100"}}) {
            if (!std::isfinite(v) || v < 0.0 || v > 1.0)
                throw ValidationError(name, "must lie in [0,1]");
        }
        if (stoich_anode_100 == stoich_anode_0)
            throw ValidationError("stoich_anode_100", "must differ from stoich_anode_0");
        if (ocp_anode.empty())
            throw ValidationError("ocp_anode", "table missing");
        if (ocp_cathode.empty())
            throw ValidationError("ocp_cathode", "table missing");
    }

    friend bool operator==(const CellParameters&, const CellParameters&) = default;
};

/// Grid resolution. The default yields 10 + 10 shells, 15 + 10 + 15
/// electrolyte volumes and one thermal state: 61 states in total.
struct Discretization
{
    int n_r_anode = 10;
    int n_r_cathode = 10;
    int n_x_anode = 15;
    int n_x_sep = 10;
    int n_x_cathode = 15;
    double dt_sim = 1.0; // s

    int electrolyte_count() const { return n_x_anode + n_x_sep + n_x_cathode; }
    int state_count() const { return n_r_anode + n_r_cathode + electrolyte_count() + 1; }

    void validate() const
    {
        auto count = [](int v, const char* name) {
            if (v < 2)
                throw ValidationError(name, "must be >= 2");
        };
        count(n_r_anode, "n_r_anode");
        count(n_r_cathode, "n_r_cathode");
        count(n_x_anode, "n_x_anode");
        count(n_x_sep, "n_x_sep");
        count(n_x_cathode, "n_x_cathode");
        if (!std::isfinite(dt_sim) || !(dt_sim > 0.0))
            throw ValidationError("dt_sim", "must be finite and > 0");
    }

    /// Every count and the time step refined by `factor`.
    Discretization refined(int factor) const
    {
        Discretization d = *this;
        d.n_r_anode *= factor;
        d.n_r_cathode *= factor;
        d.n_x_anode *= factor;
        d.n_x_sep *= factor;
        d.n_x_cathode *= factor;
        d.dt_sim /= factor;
        return d;
    }

    friend bool operator==(const Discretization&, const Discretization&) = default;
};

} // namespace fastcharge
