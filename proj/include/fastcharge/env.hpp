#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fastcharge/cell_parameters.hpp"
#include "fastcharge/errors.hpp"
#include "fastcharge/spmet.hpp"
#include "fastcharge/trajectory.hpp"

namespace fastcharge {

enum class ObservationMode { full, simplified };

inline std::string to_string(ObservationMode m) { return m == ObservationMode::full ? "full" : "simplified"; }

inline ObservationMode observation_mode_from_string(const std::string& s)
{
    if (s == "full")
        return ObservationMode::full;
    if (s == "simplified")
        return ObservationMode::simplified;
    throw ValidationError("observation_mode", "expected 'full' or 'simplified', got '" + s + "'");
}

/// Minimum-time charging task. Temperatures in degrees Celsius, currents
/// as C-rates, times in seconds.
struct EnvConfig
{
    double soc_init = 0.3;
    double soc_ref = 0.8;
    double v_init = 3.6;
    double t_init = 27.0;
    double v_max = 4.2;
    double t_max = 47.0;
    double i_max = 1.8;
    double dt_ctrl = 60.0;
    int max_steps = 120;
    ObservationMode observation_mode = ObservationMode::simplified;
    double r_fast = -0.1;
    double k_volt = 100.0;
    double k_temp = 5.0;
    double soc_jitter = 0.0; // half-width of a seeded uniform jitter on soc_init

    void validate() const
    {
        if (!(soc_init >= 0.0 && soc_init < soc_ref && soc_ref <= 1.0))
            throw ValidationError("soc_init", "need 0 <= soc_init < soc_ref <= 1");
        if (!(v_max > v_init))
            throw ValidationError("v_max", "must exceed v_init");
        if (!(t_max > t_init))
            throw ValidationError("t_max", "must exceed t_init");
        if (!(i_max > 0.0) || !std::isfinite(i_max))
            throw ValidationError("i_max", "must be > 0");
        if (!(dt_ctrl > 0.0) || !std::isfinite(dt_ctrl))
            throw ValidationError("dt_ctrl", "must be > 0");
        if (max_steps < 1)
            throw ValidationError("max_steps", "must be >= 1");
        if (!(r_fast <= 0.0))
            throw ValidationError("r_fast", "must be <= 0 so that reward never exceeds 0");
        if (!(k_volt >= 0.0))
            throw ValidationError("k_volt", "must be >= 0");
        if (!(k_temp >= 0.0))
            throw ValidationError("k_temp", "must be >= 0");
        if (!(soc_jitter >= 0.0 && soc_init - soc_jitter >= 0.0 && soc_init + soc_jitter < soc_ref))
            throw ValidationError("soc_jitter", "jittered soc_init must stay in [0, soc_ref)");
    }

    friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

/// Degradation as parameter perturbation: multipliers on both film
/// resistances and on generated heat.
struct AgingScenario
{
    double film_resistance_multiplier = 1.0;
    double heat_generation_multiplier = 1.0;

    static AgingScenario aged() { return {2.0, 1.5}; }

    bool is_identity() const { return film_resistance_multiplier == 1.0 && heat_generation_multiplier == 1.0; }

    void validate() const
    {
        if (!std::isfinite(film_resistance_multiplier) || !(film_resistance_multiplier > 0.0))
            throw ValidationError("film_resistance_multiplier", "must be finite and > 0");
        if (!std::isfinite(heat_generation_multiplier) || !(heat_generation_multiplier > 0.0))
            throw ValidationError("heat_generation_multiplier", "must be finite and > 0");
    }

    CellParameters apply(CellParameters p) const
    {
        validate();
        p.r_f_anode *= film_resistance_multiplier;
        p.r_f_cathode *= film_resistance_multiplier;
        p.heat_scale *= heat_generation_multiplier;
        return p;
    }

    friend bool operator==(const AgingScenario&, const AgingScenario&) = default;
};

struct Observation
{
    Eigen::VectorXd values;
    ObservationMode mode = ObservationMode::simplified;

    Eigen::Index size() const { return values.size(); }
    friend bool operator==(const Observation& a, const Observation& b)
    {
        return a.mode == b.mode && a.values.size() == b.values.size() && a.values == b.values;
    }
};

struct RewardBreakdown
{
    double r_fast = 0.0;
    double r_volt = 0.0;
    double r_temp = 0.0;
    double total = 0.0;
};

enum class Termination { none, reached_soc, timeout, saturated };

inline std::string to_string(Termination t)
{
    switch (t) {
    case Termination::reached_soc: return "reached_soc";
    case Termination::timeout: return "timeout";
    case Termination::saturated: return "saturated";
    default: return "none";
    }
}

struct StepInfo
{
    double v_excess = 0.0; // V_T - v_max (V)
    double t_excess = 0.0; // T_cell - t_max (K)
    double current_a = 0.0;
    double v_terminal = 0.0;
    double t_cell_c = 0.0;
    double soc = 0.0;
    bool action_clamped = false;
    Termination termination = Termination::none;
};

/// Replay tuple. `done` ends the episode; `terminal` additionally marks
/// that the value beyond this step is zero (goal reached). Timeouts and
/// saturation end the episode without being terminal.
struct Transition
{
    Observation obs;
    double action = 0.0;
    double reward = 0.0;
    Observation next_obs;
    bool done = false;
    bool terminal = false;
    StepInfo info;
};

struct StepResult
{
    Observation obs;
    RewardBreakdown reward;
    bool done = false;
    StepInfo info;
};

struct ScaledAction
{
    double c_rate = 0.0;
    double magnitude_a = 0.0;
    bool clamped = false;
};

/// Affine map from actor output to charging current magnitude:
/// -1 -> 0, +1 -> i_max (C-rate). Out-of-range actions clamp and flag.
inline ScaledAction scale_action(double a, const EnvConfig& cfg, double q_nominal_ah)
{
    if (!std::isfinite(a))
        throw ValidationError("action", "must be finite");
    ScaledAction s;
    s.clamped = a < -1.0 || a > 1.0;
    const double ac = std::clamp(a, -1.0, 1.0);
    s.c_rate = 0.5 * (ac + 1.0) * cfg.i_max;
    s.magnitude_a = s.c_rate * q_nominal_ah;
    return s;
}

/// Per-step reward: r_fast every step plus linear penalties past the voltage
/// and temperature bounds. Temperatures in Celsius.
inline RewardBreakdown reward(double v_terminal, double t_cell_c, const EnvConfig& cfg)
{
    RewardBreakdown r;
    r.r_fast = cfg.r_fast;
    r.r_volt = v_terminal >= cfg.v_max ? -cfg.k_volt * (v_terminal - cfg.v_max) : 0.0;
    r.r_temp = t_cell_c >= cfg.t_max ? -cfg.k_temp * (t_cell_c - cfg.t_max) : 0.0;
    r.total = r.r_fast + r.r_volt + r.r_temp;
    return r;
}

struct ViolationScores
{
    double v_score = 0.0; // V
    double t_score = 0.0; // K
};

/// Worst excursion past each bound over the trajectory; positive means
/// the constraint was violated.
inline ViolationScores violation_scores(std::span<const TrajectoryPoint> trajectory, const EnvConfig& cfg)
{
    if (trajectory.empty())
        throw std::invalid_argument("violation_scores: empty trajectory");
    ViolationScores s{-INFINITY, -INFINITY};
    for (const auto& p : trajectory) {
        s.v_score = std::max(s.v_score, p.voltage.v_terminal - cfg.v_max);
        s.t_score = std::max(s.t_score, (p.t_cell_k - constants::zero_celsius) - cfg.t_max);
    }
    return s;
}

/// Episodic charging environment over the reduced electrochemical model.
/// Single owner; instances share nothing.
class ChargingEnv
{
public:
    ChargingEnv(const CellParameters& params, const Discretization& disc, EnvConfig cfg,
                AgingScenario scenario = {})
        : cfg_(cfg), scenario_(scenario), ctx_(scenario.apply(params), disc)
    {
        cfg_.validate();
    }

    const EnvConfig& config() const { return cfg_; }
    const AgingScenario& scenario() const { return scenario_; }
    const SimulatorContext& context() const { return ctx_; }
    const CellState& state() const { return state_; }
    int steps() const { return steps_; }
    double time_s() const { return steps_ * cfg_.dt_ctrl; }
    bool done() const { return done_; }
    Termination termination() const { return termination_; }
    const std::vector<TrajectoryPoint>& trajectory() const { return trajectory_; }
    double soc() const { return bulk_soc(ctx_, state_, Electrode::anode); }
    double q_nominal() const { return ctx_.params().q_nominal(); }

    int observation_size() const
    {
        return cfg_.observation_mode == ObservationMode::full ? ctx_.state_count() : 2;
    }

    Observation reset(std::uint64_t seed = 0)
    {
        double soc0 = cfg_.soc_init;
        if (cfg_.soc_jitter > 0.0) {
            std::mt19937_64 rng(seed);
            std::uniform_real_distribution<double> u(-cfg_.soc_jitter, cfg_.soc_jitter);
            soc0 += u(rng);
        }
        state_ = equilibrium_state(ctx_, soc0, cfg_.t_init + constants::zero_celsius);
        steps_ = 0;
        done_ = false;
        termination_ = Termination::none;
        trajectory_.clear();
        TrajectoryPoint p;
        p.voltage = terminal_voltage(ctx_, state_, 0.0);
        p.t_cell_k = state_.t_cell;
        p.soc_anode = soc();
        trajectory_.push_back(p);
        return observe();
    }

    StepResult step(double action)
    {
        if (done_)
            throw std::logic_error("ChargingEnv::step called on a finished episode");
        if (trajectory_.empty())
            throw std::logic_error("ChargingEnv::step called before reset");
        const ScaledAction sa = scale_action(action, cfg_, q_nominal());
        const double current = -sa.magnitude_a;
        state_ = fastcharge::step(ctx_, std::move(state_), current, cfg_.dt_ctrl);
        ++steps_;

        const VoltageBreakdown v = state_.saturated ? terminal_voltage_guarded(ctx_, state_, current)
                                                    : terminal_voltage(ctx_, state_, current);
        const double t_c = state_.t_cell - constants::zero_celsius;
        StepResult r;
        r.reward = reward(v.v_terminal, t_c, cfg_);
        const double s = soc();
        if (s >= cfg_.soc_ref)
            termination_ = Termination::reached_soc;
        else if (state_.saturated)
            termination_ = Termination::saturated;
        else if (steps_ >= cfg_.max_steps)
            termination_ = Termination::timeout;
        done_ = termination_ != Termination::none;

        r.done = done_;
        r.info.v_excess = v.v_terminal - cfg_.v_max;
        r.info.t_excess = t_c - cfg_.t_max;
        r.info.current_a = current;
        r.info.v_terminal = v.v_terminal;
        r.info.t_cell_c = t_c;
        r.info.soc = s;
        r.info.action_clamped = sa.clamped;
        r.info.termination = termination_;
        r.obs = observe();

        TrajectoryPoint p;
        p.time_s = time_s();
        p.current_a = current;
        p.voltage = v;
        p.t_cell_k = state_.t_cell;
        p.soc_anode = s;
        p.reward = r.reward.total;
        p.done = done_;
        trajectory_.push_back(p);
        return r;
    }

    /// Temperature scaled so that t_init maps to 0 and t_max to 1.
    double normalized_temperature(double t_cell_k) const
    {
        return (t_cell_k - constants::zero_celsius - cfg_.t_init) / (cfg_.t_max - cfg_.t_init);
    }

    Observation observe() const
    {
        Observation o;
        o.mode = cfg_.observation_mode;
        if (o.mode == ObservationMode::simplified) {
            o.values.resize(2);
            o.values << soc(), normalized_temperature(state_.t_cell);
            return o;
        }
        const auto& p = ctx_.params();
        o.values.resize(ctx_.state_count());
        Eigen::Index i = 0;
        for (double c : state_.c_s_anode)
            o.values[i++] = c / p.c_s_max_anode;
        for (double c : state_.c_s_cathode)
            o.values[i++] = c / p.c_s_max_cathode;
        for (double c : state_.c_e)
            o.values[i++] = c / p.c_e_init - 1.0;
        o.values[i] = normalized_temperature(state_.t_cell);
        return o;
    }

private:
    EnvConfig cfg_;
    AgingScenario scenario_;
    SimulatorContext ctx_;
    CellState state_;
    int steps_ = 0;
    bool done_ = false;
    Termination termination_ = Termination::none;
    std::vector<TrajectoryPoint> trajectory_;
};

} // namespace fastcharge
