#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "fastcharge/cell_parameters.hpp"
#include "fastcharge/errors.hpp"

namespace fastcharge {

/// Full simulator state. Sign convention for current everywhere in this
/// header: negative current charges the cell.
struct CellState
{
    std::vector<double> c_s_anode;   // shell averages, centre to surface (mol/m^3)
    std::vector<double> c_s_cathode;
    std::vector<double> c_e;         // anode | separator | cathode volumes (mol/m^3)
    double t_cell = 0.0;             // K
    bool saturated = false;          // a concentration was clipped; episode-fatal

    std::vector<double>& solid(Electrode e) { return e == Electrode::anode ? c_s_anode : c_s_cathode; }
    const std::vector<double>& solid(Electrode e) const
    {
        return e == Electrode::anode ? c_s_anode : c_s_cathode;
    }

    friend bool operator==(const CellState&, const CellState&) = default;
};

/// Terms of the terminal voltage, each stored as its signed contribution,
/// so that v_terminal is their sum.
struct VoltageBreakdown
{
    double v_terminal = 0.0;
    double eta_anode = 0.0;
    double eta_cathode = 0.0;
    double ocp_diff = 0.0;
    double film_drop = 0.0;
    double electrolyte_ohmic = 0.0;
    double concentration_polarization = 0.0;

    double sum_of_terms() const
    {
        return eta_cathode + eta_anode + ocp_diff + film_drop + electrolyte_ohmic + concentration_polarization;
    }
};

namespace detail {

/// Solves a tridiagonal system in place (Thomas algorithm). `rhs` holds the
/// solution on return. The matrices built here are strictly diagonally
/// dominant, so no pivoting is needed.
inline void solve_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                              std::span<const double> upper, std::span<double> rhs,
                              std::vector<double>& scratch)
{
    const std::size_t n = diag.size();
    scratch.resize(n);
    double denom = diag[0];
    scratch[0] = upper[0] / denom;
    rhs[0] /= denom;
    for (std::size_t i = 1; i < n; ++i) {
        denom = diag[i] - lower[i] * scratch[i - 1];
        scratch[i] = i + 1 < n ? upper[i] / denom : 0.0;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom;
    }
    for (std::size_t i = n - 1; i-- > 0;)
        rhs[i] -= scratch[i] * rhs[i + 1];
}

} // namespace detail

/// Spherical shell grid for one electrode particle. Shell k spans
/// [r_k, r_{k+1}] with uniform radial spacing.
struct ShellGrid
{
    double radius = 0.0;
    double dr = 0.0;
    double diffusivity = 0.0;
    std::vector<double> edges;       // n + 1 radii
    std::vector<double> volumes;     // n shell volumes
    std::vector<double> face_areas;  // n + 1 sphere areas at edges
    std::vector<double> capacity;    // volumes * c_max, for exact bulk SOC ratios
    double total_capacity = 0.0;
    // backward-Euler matrix, constant for a fixed dt
    std::vector<double> lower, diag, upper;

    std::size_t size() const { return volumes.size(); }
};

/// Finite-volume grid across anode, separator and cathode.
struct ElectrolyteGrid
{
    std::vector<double> dx;          // cell widths
    std::vector<double> porosity;    // eps_e per cell
    std::vector<double> face_ie;     // i_e at interior faces per ampere of applied current (1/m^2)
    std::vector<double> lower, diag, upper;
    int n_anode = 0, n_sep = 0, n_cathode = 0;

    std::size_t size() const { return dx.size(); }
};

/// Precomputed geometry for one (parameters, discretization) pair.
/// Immutable after construction; safe to share across threads.
class SimulatorContext
{
public:
    SimulatorContext(CellParameters params, Discretization disc)
        : params_(std::move(params)), disc_(disc)
    {
        params_.validate();
        disc_.validate();
        anode_ = make_shells(Electrode::anode, disc_.n_r_anode);
        cathode_ = make_shells(Electrode::cathode, disc_.n_r_cathode);
        make_electrolyte();
    }

    const CellParameters& params() const { return params_; }
    const Discretization& discretization() const { return disc_; }
    const ShellGrid& shells(Electrode e) const { return e == Electrode::anode ? anode_ : cathode_; }
    const ElectrolyteGrid& electrolyte() const { return electrolyte_; }
    int state_count() const { return disc_.state_count(); }

    /// Molar flux into the particle surface (mol m^-2 s^-1) for applied
    /// current `current`. Charging (negative current) feeds the anode.
    double surface_flux(Electrode e, double current) const
    {
        const auto& p = params_;
        const double denom = p.a_s(e) * p.faraday * p.area * p.thickness(e);
        return e == Electrode::anode ? -current / denom : current / denom;
    }

    /// Electrolyte current density at position x (m) per ampere applied.
    double electrolyte_current_profile(double x) const
    {
        const auto& p = params_;
        const double l_n = p.l_anode, l_s = p.l_sep, l_p = p.l_cathode;
        if (x <= 0.0)
            return 0.0;
        if (x < l_n)
            return x / l_n / p.area;
        if (x <= l_n + l_s)
            return 1.0 / p.area;
        if (x < l_n + l_s + l_p)
            return (l_n + l_s + l_p - x) / l_p / p.area;
        return 0.0;
    }

private:
    ShellGrid make_shells(Electrode e, int n) const
    {
        ShellGrid g;
        g.radius = params_.r_s(e);
        g.diffusivity = params_.d_s(e);
        g.dr = g.radius / n;
        g.edges.resize(n + 1);
        g.face_areas.resize(n + 1);
        for (int k = 0; k <= n; ++k) {
            g.edges[k] = k == n ? g.radius : g.dr * k;
            g.face_areas[k] = 4.0 * std::numbers::pi * g.edges[k] * g.edges[k];
        }
        g.volumes.resize(n);
        g.capacity.resize(n);
        for (int k = 0; k < n; ++k) {
            const double r0 = g.edges[k], r1 = g.edges[k + 1];
            g.volumes[k] = 4.0 / 3.0 * std::numbers::pi * (r1 * r1 * r1 - r0 * r0 * r0);
            g.capacity[k] = g.volumes[k] * params_.c_s_max(e);
        }
        g.total_capacity = std::accumulate(g.capacity.begin(), g.capacity.end(), 0.0);

        // V_k (c_k' - c_k)/dt = g_{k+1}(c_{k+1}' - c_k') - g_k (c_k' - c_{k-1}') + boundary flux
        const double dt = disc_.dt_sim;
        std::vector<double> cond(n + 1, 0.0);
        for (int k = 1; k < n; ++k)
            cond[k] = g.diffusivity * g.face_areas[k] / g.dr;
        g.lower.assign(n, 0.0);
        g.diag.assign(n, 0.0);
        g.upper.assign(n, 0.0);
        for (int k = 0; k < n; ++k) {
            g.diag[k] = g.volumes[k] / dt + cond[k] + cond[k + 1];
            g.lower[k] = -cond[k];
            g.upper[k] = -cond[k + 1];
        }
        return g;
    }

    void make_electrolyte()
    {
        const auto& p = params_;
        auto& g = electrolyte_;
        g.n_anode = disc_.n_x_anode;
        g.n_sep = disc_.n_x_sep;
        g.n_cathode = disc_.n_x_cathode;
        const int m = disc_.electrolyte_count();
        g.dx.resize(m);
        g.porosity.resize(m);
        std::vector<double> diff(m);
        auto fill = [&](int begin, int count, double length, double eps) {
            for (int k = begin; k < begin + count; ++k) {
                g.dx[k] = length / count;
                g.porosity[k] = eps;
                diff[k] = p.d_e_ref * std::pow(eps, p.bruggeman);
            }
        };
        fill(0, g.n_anode, p.l_anode, p.eps_e_anode);
        fill(g.n_anode, g.n_sep, p.l_sep, p.eps_e_sep);
        fill(g.n_anode + g.n_sep, g.n_cathode, p.l_cathode, p.eps_e_cathode);

        // faces 1..m-1 are interior; outer faces carry no flux
        std::vector<double> cond(m + 1, 0.0);
        g.face_ie.assign(m + 1, 0.0);
        double x = 0.0;
        for (int f = 1; f < m; ++f) {
            x += g.dx[f - 1];
            // series resistance across the two half cells
            cond[f] = 1.0 / (0.5 * g.dx[f - 1] / diff[f - 1] + 0.5 * g.dx[f] / diff[f]);
            g.face_ie[f] = electrolyte_current_profile(x);
        }
        const double dt = disc_.dt_sim;
        g.lower.assign(m, 0.0);
        g.diag.assign(m, 0.0);
        g.upper.assign(m, 0.0);
        for (int k = 0; k < m; ++k) {
            g.diag[k] = g.porosity[k] * g.dx[k] / dt + cond[k] + cond[k + 1];
            g.lower[k] = -cond[k];
            g.upper[k] = -cond[k + 1];
        }
    }

    CellParameters params_;
    Discretization disc_;
    ShellGrid anode_;
    ShellGrid cathode_;
    ElectrolyteGrid electrolyte_;
};

/// Precomputes the grids. Throws ValidationError naming the first bad field.
inline SimulatorContext build_grid(const CellParameters& params, const Discretization& disc)
{
    return SimulatorContext(params, disc);
}

/// Volume-weighted mean shell concentration over c_max.
inline double bulk_soc(const SimulatorContext& ctx, const CellState& state, Electrode e)
{
    const auto& g = ctx.shells(e);
    const auto& c = state.solid(e);
    double held = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k)
        held += g.volumes[k] * c[k];
    // total_capacity sums volumes[k] * c_max term by term, so uniform
    // profiles at c_max or c_max/2 come out exact
    return held / g.total_capacity;
}

/// Total electrolyte lithium per unit plate area (mol/m^2).
inline double electrolyte_inventory(const SimulatorContext& ctx, const CellState& state)
{
    const auto& g = ctx.electrolyte();
    double total = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k)
        total += g.porosity[k] * g.dx[k] * state.c_e[k];
    return total;
}

/// Surface concentration extrapolated half a shell outward from the
/// outermost shell using the imposed boundary gradient.
inline double surface_concentration(const SimulatorContext& ctx, const CellState& state, Electrode e,
                                    double current)
{
    const auto& g = ctx.shells(e);
    const double outer = state.solid(e).back();
    return outer + ctx.surface_flux(e, current) * 0.5 * g.dr / g.diffusivity;
}

inline double region_mean_electrolyte(const SimulatorContext& ctx, const CellState& state, Electrode e)
{
    const auto& g = ctx.electrolyte();
    const int begin = e == Electrode::anode ? 0 : g.n_anode + g.n_sep;
    const int count = e == Electrode::anode ? g.n_anode : g.n_cathode;
    double sum = 0.0, len = 0.0;
    for (int k = begin; k < begin + count; ++k) {
        sum += g.dx[k] * state.c_e[k];
        len += g.dx[k];
    }
    return sum / len;
}

/// Exchange current density k c_e^a c_ss^a (c_max - c_ss)^a.
inline double exchange_current(const CellParameters& p, Electrode e, double c_e, double c_ss)
{
    const double a = p.alpha;
    return p.k_rate(e) * std::pow(c_e, a) * std::pow(c_ss, a) * std::pow(p.c_s_max(e) - c_ss, a);
}

/// One kinetic term (RT/(alpha F)) asinh(i / (2 a A L i0)).
inline double kinetic_overpotential(const CellParameters& p, Electrode e, double current, double i0,
                                    double t_cell)
{
    const double pref = p.gas_constant * t_cell / (p.alpha * p.faraday);
    return pref * std::asinh(current / (2.0 * p.a_s(e) * p.area * p.thickness(e) * i0));
}

namespace detail {

inline VoltageBreakdown evaluate_voltage(const SimulatorContext& ctx, const CellState& state, double current,
                                         double c_ss_anode, double c_ss_cathode)
{
    const auto& p = ctx.params();
    const double t = state.t_cell;
    const double i0_n = exchange_current(p, Electrode::anode, region_mean_electrolyte(ctx, state, Electrode::anode),
                                         c_ss_anode);
    const double i0_p = exchange_current(
        p, Electrode::cathode, region_mean_electrolyte(ctx, state, Electrode::cathode), c_ss_cathode);

    VoltageBreakdown v;
    v.eta_cathode = kinetic_overpotential(p, Electrode::cathode, -current, i0_p, t);
    v.eta_anode = -kinetic_overpotential(p, Electrode::anode, current, i0_n, t);
    v.ocp_diff = p.ocp_cathode(c_ss_cathode / p.c_s_max_cathode) - p.ocp_anode(c_ss_anode / p.c_s_max_anode);
    v.film_drop = -(p.r_f_cathode / (p.a_cathode * p.area * p.l_cathode)
                    + p.r_f_anode / (p.a_anode * p.area * p.l_anode))
                  * current;
    v.electrolyte_ohmic = -((p.l_cathode + 2.0 * p.l_sep + p.l_anode) / (2.0 * p.area * p.kappa_eff)) * current;
    const double k_conc = 2.0 * p.gas_constant * t / p.faraday * (1.0 - p.t_plus) * p.activity;
    v.concentration_polarization = k_conc * (std::log(state.c_e.back()) - std::log(state.c_e.front()));
    v.v_terminal = v.sum_of_terms();
    return v;
}

} // namespace detail

/// Terminal voltage and its decomposition. Throws SimulationError when the
/// exchange current is singular or the electrolyte is depleted.
inline VoltageBreakdown terminal_voltage(const SimulatorContext& ctx, const CellState& state, double current)
{
    const auto& p = ctx.params();
    const double css_n = surface_concentration(ctx, state, Electrode::anode, current);
    const double css_p = surface_concentration(ctx, state, Electrode::cathode, current);
    if (!(css_n > 0.0 && css_n < p.c_s_max_anode))
        throw SimulationError("anode surface concentration at or beyond [0, c_s_max]");
    if (!(css_p > 0.0 && css_p < p.c_s_max_cathode))
        throw SimulationError("cathode surface concentration at or beyond [0, c_s_max]");
    if (!(state.c_e.front() > 0.0 && state.c_e.back() > 0.0))
        throw SimulationError("electrolyte boundary concentration <= 0");
    return detail::evaluate_voltage(ctx, state, current, css_n, css_p);
}

/// Terminal voltage with surface concentrations held a hair inside their
/// admissible range. Used for saturated states where the exact form is
/// singular.
inline VoltageBreakdown terminal_voltage_guarded(const SimulatorContext& ctx, const CellState& state,
                                                 double current)
{
    const auto& p = ctx.params();
    auto inside = [](double c, double c_max) {
        const double margin = 1e-6 * c_max;
        return std::clamp(c, margin, c_max - margin);
    };
    CellState s = state;
    for (auto& c : s.c_e)
        c = std::max(c, 1e-6 * p.c_e_init);
    const double css_n = inside(surface_concentration(ctx, s, Electrode::anode, current), p.c_s_max_anode);
    const double css_p = inside(surface_concentration(ctx, s, Electrode::cathode, current), p.c_s_max_cathode);
    return detail::evaluate_voltage(ctx, s, current, css_n, css_p);
}

/// Bulk open-circuit voltage U+(SOC_p) - U-(SOC_n).
inline double bulk_ocv(const SimulatorContext& ctx, const CellState& state)
{
    const auto& p = ctx.params();
    return p.ocp_cathode(bulk_soc(ctx, state, Electrode::cathode))
           - p.ocp_anode(bulk_soc(ctx, state, Electrode::anode));
}

/// Q = I (OCV - V_T), negative current charging.
inline double heat_rate(double current, double ocv, double v_terminal)
{
    return current * (ocv - v_terminal);
}

inline double heat_rate(const SimulatorContext& ctx, const CellState& state, double current,
                        const VoltageBreakdown& v)
{
    return heat_rate(current, bulk_ocv(ctx, state), v.v_terminal);
}

/// Uniform particles at the given bulk anode stoichiometry, cathode placed
/// on its paired stoichiometry, uniform electrolyte.
inline CellState equilibrium_state(const SimulatorContext& ctx, double anode_stoich, double t_cell)
{
    const auto& p = ctx.params();
    const double cathode_stoich = p.cathode_stoich_for(anode_stoich);
    if (!(anode_stoich > 0.0 && anode_stoich < 1.0))
        throw ValidationError("soc_init", "anode stoichiometry must lie in (0,1)");
    if (!(cathode_stoich > 0.0 && cathode_stoich < 1.0))
        throw ValidationError("soc_init", "paired cathode stoichiometry outside (0,1)");
    const auto& ocp_n = p.ocp_anode;
    const auto& ocp_p = p.ocp_cathode;
    if (anode_stoich < ocp_n.min_stoichiometry() || anode_stoich > ocp_n.max_stoichiometry())
        throw ValidationError("soc_init", "outside anode OCP table range");
    if (cathode_stoich < ocp_p.min_stoichiometry() || cathode_stoich > ocp_p.max_stoichiometry())
        throw ValidationError("soc_init", "paired cathode stoichiometry outside cathode OCP table range");
    CellState s;
    s.c_s_anode.assign(ctx.shells(Electrode::anode).size(), anode_stoich * p.c_s_max_anode);
    s.c_s_cathode.assign(ctx.shells(Electrode::cathode).size(), cathode_stoich * p.c_s_max_cathode);
    s.c_e.assign(ctx.electrolyte().size(), p.c_e_init);
    s.t_cell = t_cell;
    return s;
}

inline void validate_state(const SimulatorContext& ctx, const CellState& state)
{
    const auto& p = ctx.params();
    if (state.c_s_anode.size() != ctx.shells(Electrode::anode).size()
        || state.c_s_cathode.size() != ctx.shells(Electrode::cathode).size()
        || state.c_e.size() != ctx.electrolyte().size())
        throw ValidationError("state", "shape does not match discretization");
    for (double c : state.c_s_anode)
        if (!(c >= 0.0 && c <= p.c_s_max_anode))
            throw ValidationError("state.c_s_anode", "outside [0, c_s_max]");
    for (double c : state.c_s_cathode)
        if (!(c >= 0.0 && c <= p.c_s_max_cathode))
            throw ValidationError("state.c_s_cathode", "outside [0, c_s_max]");
    for (double c : state.c_e)
        if (!(c > 0.0))
            throw ValidationError("state.c_e", "must be > 0");
    if (!(state.t_cell > 0.0) || !std::isfinite(state.t_cell))
        throw ValidationError("state.t_cell", "must be > 0");
}

namespace detail {

/// Backward Euler in increment form, (V/dt + L) d = -L c + b, so that a
/// uniform profile with no source stays bit-for-bit uniform.
inline void advance_increment(std::span<const double> lower, std::span<const double> diag,
                              std::span<const double> upper, std::vector<double>& c, std::vector<double>& rhs,
                              std::vector<double>& scratch)
{
    const std::size_t n = c.size();
    for (std::size_t k = 0; k < n; ++k) {
        double flux = 0.0;
        if (k > 0)
            flux -= lower[k] * (c[k - 1] - c[k]);
        if (k + 1 < n)
            flux -= upper[k] * (c[k + 1] - c[k]);
        rhs[k] += flux;
    }
    solve_tridiagonal(lower, diag, upper, rhs, scratch);
    for (std::size_t k = 0; k < n; ++k)
        c[k] += rhs[k];
}

inline void advance_solid(const SimulatorContext& ctx, std::vector<double>& c, Electrode e, double current,
                          std::vector<double>& rhs, std::vector<double>& scratch)
{
    const auto& g = ctx.shells(e);
    rhs.assign(c.size(), 0.0);
    rhs.back() = g.face_areas.back() * ctx.surface_flux(e, current);
    advance_increment(g.lower, g.diag, g.upper, c, rhs, scratch);
}

inline void advance_electrolyte(const SimulatorContext& ctx, std::vector<double>& c, double current,
                                std::vector<double>& rhs, std::vector<double>& scratch)
{
    const auto& g = ctx.electrolyte();
    const auto& p = ctx.params();
    const double src = (1.0 - p.t_plus) / p.faraday * current;
    rhs.resize(c.size());
    for (std::size_t k = 0; k < c.size(); ++k)
        rhs[k] = src * (g.face_ie[k + 1] - g.face_ie[k]);
    advance_increment(g.lower, g.diag, g.upper, c, rhs, scratch);
}

/// Clamps into the admissible range; returns true if anything moved.
inline bool clip(std::vector<double>& c, double lo, double hi)
{
    bool hit = false;
    for (double& v : c) {
        if (v < lo || v > hi) {
            v = std::clamp(v, lo, hi);
            hit = true;
        }
    }
    return hit;
}

} // namespace detail

/// Advances the state by dt_ctrl seconds at constant applied current using
/// dt_sim sub-steps: backward Euler for both diffusion equations and the
/// exact exponential update for the lumped thermal state with heat held
/// over each sub-step.
inline CellState step(const SimulatorContext& ctx, CellState state, double current, double dt_ctrl)
{
    const double dt = ctx.discretization().dt_sim;
    const double ratio = dt_ctrl / dt;
    const double n_steps = std::round(ratio);
    if (!std::isfinite(ratio) || n_steps < 1.0 || std::abs(ratio - n_steps) > 1e-9 * std::max(1.0, ratio))
        throw ValidationError("dt_ctrl", "must be a positive integer multiple of dt_sim");
    if (!std::isfinite(current))
        throw ValidationError("current", "must be finite");

    const auto& p = ctx.params();
    const double tau = p.thermal_time_constant();
    const double decay = std::exp(-dt / tau);
    std::vector<double> scratch, rhs;
    for (long i = 0; i < static_cast<long>(n_steps); ++i) {
        const VoltageBreakdown v = terminal_voltage_guarded(ctx, state, current);
        const double q = p.heat_scale * heat_rate(ctx, state, current, v);

        detail::advance_solid(ctx, state.c_s_anode, Electrode::anode, current, rhs, scratch);
        detail::advance_solid(ctx, state.c_s_cathode, Electrode::cathode, current, rhs, scratch);
        detail::advance_electrolyte(ctx, state.c_e, current, rhs, scratch);
        const double t_eq = p.t_amb + q * p.r_th;
        state.t_cell = t_eq + (state.t_cell - t_eq) * decay;

        bool hit = detail::clip(state.c_s_anode, 0.0, p.c_s_max_anode);
        hit |= detail::clip(state.c_s_cathode, 0.0, p.c_s_max_cathode);
        for (Electrode e : {Electrode::anode, Electrode::cathode}) {
            const double css = surface_concentration(ctx, state, e, current);
            hit |= !(css > 0.0 && css < p.c_s_max(e));
        }
        for (double& c : state.c_e) {
            if (!(c > 0.0)) {
                c = 1e-6 * p.c_e_init;
                hit = true;
            }
        }
        state.saturated = state.saturated || hit;
    }
    return state;
}

} // namespace fastcharge
