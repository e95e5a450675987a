// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "fastcharge/baselines.hpp"
#include "fastcharge/ddpg.hpp"
#include "fastcharge/experiment.hpp"
#include "fastcharge/report.hpp"

using namespace fastcharge;
using nn::Matrix;
using nn::Vector;

namespace {

int failures = 0;

void verdict(int id, bool pass, const std::string& detail)
{
    std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass)
        ++failures;
}

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void progress(const std::string& s)
{
    std::fprintf(stderr, "%s\n", s.c_str());
}

double median(std::vector<double> xs)
{
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double c_rate(double a, const EnvConfig& env) { return scale_action(a, env, 1.0).c_rate; }

// 1 ------------------------------------------------------------------------

void conservation()
{
    const CellParameters p;
    const SimulatorContext ctx(p, Discretization{});
    const double q = p.q_nominal();
    double worst_soc = 0.0, worst_e = 0.0;
    for (double rate : {0.1, 0.5, 1.0, 1.4, 1.8}) {
        CellState s = equilibrium_state(ctx, 0.3, 300.15);
        const double e0 = electrolyte_inventory(ctx, s);
        const double soc0 = bulk_soc(ctx, s, Electrode::anode);
        std::vector<double> currents;
        while (bulk_soc(ctx, s, Electrode::anode) < 0.8) {
            s = step(ctx, std::move(s), -rate * q, 60.0);
            currents.push_back(-rate * q);
            const auto oracle = coulomb_counting_oracle(currents, 60.0, q, soc0);
            worst_soc = std::max(worst_soc, std::abs(bulk_soc(ctx, s, Electrode::anode) - oracle.back()));
            worst_e = std::max(worst_e, std::abs(electrolyte_inventory(ctx, s) - e0) / e0);
        }
    }
    verdict(1, worst_soc < 1e-6 && worst_e < 1e-9,
            fmt("max |SOC - coulomb| = %.3e (< 1e-6), electrolyte drift = %.3e (< 1e-9), rates 0.1..1.8C", worst_soc,
                worst_e));
}

// 2 ------------------------------------------------------------------------

void rest_voltage()
{
    const CellParameters p;
    const SimulatorContext ctx(p, Discretization{});
    double worst_bulk = 0.0, worst_surface = 0.0;
    for (double rate : {0.5, 1.0, 1.8}) {
        CellState s = equilibrium_state(ctx, 0.3, 300.15);
        for (int k = 0; k < 15; ++k)
            s = step(ctx, std::move(s), -rate * p.q_nominal(), 60.0);
        for (int k = 0; k < 60; ++k)
            s = step(ctx, std::move(s), 0.0, 60.0);
        const auto v = terminal_voltage(ctx, s, 0.0);
        worst_surface = std::max(worst_surface, std::abs(v.v_terminal - v.ocp_diff));
        worst_bulk = std::max(worst_bulk, std::abs(v.v_terminal - bulk_ocv(ctx, s)));
    }
    verdict(2, worst_bulk < 1e-3 && worst_surface < 1e-3,
            fmt("after 1 h rest: |V - OCV(bulk)| = %.3e V, |V - OCV(surface)| = %.3e V (< 1e-3)", worst_bulk,
                worst_surface));
}

// 3 ------------------------------------------------------------------------

void thermal()
{
    const CellParameters p;
    const SimulatorContext ctx(p, Discretization{});
    CellState s = equilibrium_state(ctx, 0.5, 320.0);
    const double tau = p.m_cell * p.c_p_th * p.r_th;
    double worst = 0.0;
    for (int k = 1; k <= 120; ++k) {
        s = step(ctx, std::move(s), 0.0, 60.0);
        const double expected = p.t_amb + (320.0 - p.t_amb) * std::exp(-60.0 * k / tau);
        worst = std::max(worst, std::abs(s.t_cell - expected) / std::abs(expected - p.t_amb));
    }
    verdict(3, worst < 1e-9, fmt("2 h relaxation from 320 K, max relative error of the excess = %.3e (< 1e-9)", worst));
}

// 4 ------------------------------------------------------------------------

void gradients()
{
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(4040);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double actor = 0.0, critic = 0.0, action_slice = 0.0;
    for (int k = 0; k < 100; ++k) {
        const auto a = nn::mlp_init({2, 20, 20, 1}, nn::OutputActivation::tanh, 1000 + k);
        Matrix xa(2, 4);
        xa = xa.unaryExpr([&](double) { return u(rng); });
        actor = std::max(actor, gradient_check(a, xa, 1e-6).worst());

        const auto c = nn::mlp_init({3, 100, 75, 1}, nn::OutputActivation::identity, 5000 + k);
        Matrix xc(3, 4);
        xc = xc.unaryExpr([&](double) { return u(rng); });
        const auto r = gradient_check(c, xc, 1e-6);
        critic = std::max(critic, r.worst());
        action_slice = std::max(action_slice, r.last_input);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    verdict(4, std::max({actor, critic, action_slice}) < 1e-5,
            fmt("100 nets per shape: actor %.2e, critic %.2e, critic action slice %.2e (< 1e-5), %.1f s", actor,
                critic, action_slice, secs));
}

// 5 ------------------------------------------------------------------------

ddpg::Batch batch_of(const std::vector<Transition>& ts)
{
    ddpg::ReplayBuffer b(ts.size());
    for (const auto& t : ts)
        b.push(t);
    std::vector<std::size_t> idx(ts.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        idx[i] = i;
    return b.gather(idx);
}

Transition transition(double s, double a, double r, bool terminal)
{
    Transition t;
    t.obs.values = Vector::Constant(2, s);
    t.next_obs.values = Vector::Constant(2, s + 0.05);
    t.action = a;
    t.reward = r;
    t.done = t.terminal = terminal;
    return t;
}

void mechanics()
{
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> bad;

    ddpg::TrainConfig zero;
    zero.gamma = 0.0;
    ddpg::Agent g0(2, zero);
    const auto b = batch_of({transition(0.3, 0.1, -0.1, false), transition(0.6, -0.5, -3.0, false)});
    const Vector y = ddpg::critic_targets(g0, b);
    if (!(y[0] == -0.1 && y[1] == -3.0))
        bad.push_back("gamma=0");

    ddpg::Agent term(2, ddpg::TrainConfig{});
    const auto tb = batch_of({transition(0.3, 0.1, -0.1, true), transition(0.7, 0.2, -0.1, true)});
    const Vector y1 = ddpg::critic_targets(term, tb);
    term.critic_target.parameters().setConstant(0.9);
    term.actor_target.parameters().setConstant(-0.4);
    if (!(ddpg::critic_targets(term, tb) == y1 && y1[0] == -0.1))
        bad.push_back("terminal masking");

    ddpg::Agent soft(2, ddpg::TrainConfig{});
    soft.actor.parameters().array() += 1.0;
    soft.critic.parameters().array() -= 0.5;
    const Vector ga = soft.actor_target.flatten() - soft.actor.flatten();
    const Vector gc = soft.critic_target.flatten() - soft.critic.flatten();
    for (int k = 0; k < 1000; ++k)
        ddpg::sync_targets(soft);
    const double f = std::pow(1.0 - 1e-3, 1000);
    const double soft_err = std::max((soft.actor_target.flatten() - soft.actor.flatten() - f * ga).cwiseAbs().maxCoeff(),
                                     (soft.critic_target.flatten() - soft.critic.flatten() - f * gc).cwiseAbs().maxCoeff());
    if (!(soft_err < 1e-12))
        bad.push_back("soft update");

    ddpg::ReplayBuffer rb(100);
    for (int k = 0; k < 300; ++k)
        rb.push(transition(k, 0.0, 0.0, false));
    std::mt19937_64 rng(77);
    std::vector<double> counts(100, 0.0);
    for (auto i : rb.sample_indices(100000, rng))
        counts[i] += 1.0;
    double chi2 = 0.0;
    for (double c : counts)
        chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
    if (!(chi2 < 134.642)) // 99 dof, upper 1%
        bad.push_back("chi-square");

    ddpg::TrainConfig small;
    small.episodes = 25;
    small.seed = 12;
    small.warmup = 200;
    small.batch_size = 32;
    small.eval_every = 5;
    const ddpg::EnvFactory mk = [] { return ChargingEnv(CellParameters{}, Discretization{}, EnvConfig{}); };
    const auto r1 = ddpg::train(mk, small);
    const auto r2 = ddpg::train(mk, small);
    const bool same = r1.log == r2.log && r1.agent.actor == r2.agent.actor && r1.agent.critic == r2.agent.critic
                      && r1.agent.actor_target == r2.agent.actor_target
                      && r1.agent.critic_target == r2.agent.critic_target;
    if (!same)
        bad.push_back("determinism");

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string detail = fmt("soft-update error %.1e, chi2 %.1f (< 134.6), %.1f s", soft_err, chi2, secs);
    for (const auto& s : bad)
        detail += "; failed: " + s;
    verdict(5, bad.empty(), detail);
}

// 6 ------------------------------------------------------------------------

void toy()
{
    auto actor = nn::mlp_init({1, 20, 20, 1}, nn::OutputActivation::tanh, 606);
    nn::AdamState opt(actor.parameter_count());
    Matrix states(1, 64);
    for (Eigen::Index j = 0; j < states.cols(); ++j)
        states(0, j) = -1.0 + 2.0 * static_cast<double>(j) / 63.0;
    const double target = 0.7;
    auto critic = [target](const Matrix&, const Matrix& a) {
        return std::pair<Matrix, Matrix>{-(a.array() - target).square().matrix(),
                                         (-2.0 * (a.array() - target)).matrix()};
    };
    int updates = 0;
    double err = 1.0;
    while (updates < 2000 && err > 1e-2) {
        ddpg::policy_step(actor, opt, 1e-3, states, critic);
        ++updates;
        err = (actor.forward(states).array() - target).abs().maxCoeff();
    }
    verdict(6, err <= 1e-2, fmt("max |pi(s) - 0.7| = %.2e after %d updates (<= 2000)", err, updates));
}

// 7-9 --------------------------------------------------------------------

struct SeedRun
{
    std::uint64_t seed;
    ddpg::TrainResult result;
};

struct TrendCheck
{
    bool a = true, b = true;
    std::string detail;
};

// (a) and (b) on the evaluation records of one run log.
void trend(const ddpg::RunLog& log, TrendCheck& out)
{
    const auto ev = log.evaluations();
    if (ev.size() < 100) {
        out.a = out.b = false;
        out.detail += " too few evaluations;";
        return;
    }
    std::vector<double> early, late;
    for (std::size_t k = 0; k < 50; ++k) {
        early.push_back(ev[k].cum_reward);
        late.push_back(ev[ev.size() - 50 + k].cum_reward);
    }
    const double me = median(early), ml = median(late);
    const auto& last = ev.back();
    out.a = out.a && ml > me;
    out.b = out.b && last.v_score <= 0.010 && last.t_score <= 0.2;
    out.detail += fmt(" seed %llu: median eval reward %.2f -> %.2f, final v %.4f V t %.3f K;",
                      static_cast<unsigned long long>(log.seed), me, ml, last.v_score, last.t_score);
}

int cccv_steps()
{
    ChargingEnv env(CellParameters{}, Discretization{}, EnvConfig{});
    env.reset();
    const CcCvConfig cfg;
    while (!env.done())
        env.step(cccv_controller(measure(env), cfg, env.config()));
    return env.termination() == Termination::reached_soc ? env.steps() : 1 << 30;
}

std::vector<SeedRun> training_reproduction()
{
    const auto t0 = std::chrono::steady_clock::now();
    const ddpg::EnvFactory mk = [] { return ChargingEnv(CellParameters{}, Discretization{}, EnvConfig{}); };
    std::vector<SeedRun> runs;
    TrendCheck tc;
    bool c = true, d = true;
    const int baseline = cccv_steps();
    std::string detail_cd;
    for (std::uint64_t seed : {1, 2, 3}) {
        ddpg::TrainConfig cfg;
        cfg.seed = seed;
        progress(fmt("criterion 7: training seed %llu", static_cast<unsigned long long>(seed)));
        runs.push_back({seed, ddpg::train(mk, cfg)});
        const auto& res = runs.back().result;
        trend(res.log, tc);

        auto env = mk();
        const auto ev = ddpg::evaluate(res.agent, env);
        c = c && ev.reached && ev.steps < baseline;
        const std::size_t n = ev.actions.size();
        const std::size_t decile = std::max<std::size_t>(1, (n + 9) / 10);
        double first = 0.0;
        for (std::size_t k = 0; k < decile; ++k)
            first += c_rate(ev.actions[k], env.config());
        first /= static_cast<double>(decile);
        const double v_max = env.config().v_max;
        bool window = n >= decile;
        double v_min_tail = 1e9;
        for (std::size_t k = ev.trajectory.size() - decile; k < ev.trajectory.size(); ++k) {
            const double v = ev.trajectory[k].voltage.v_terminal;
            v_min_tail = std::min(v_min_tail, v);
            window = window && std::abs(v - v_max) <= 0.01 * v_max;
        }
        // CC phase first: the opening decile runs at the episode's peak current
        double peak = 0.0;
        for (double a : ev.actions)
            peak = std::max(peak, c_rate(a, env.config()));
        const bool cc = first >= 0.95 * peak;
        d = d && cc && window;
        detail_cd += fmt(" seed %llu: %d steps vs CC-CV %d, first-decile mean %.3fC (>= %.3fC), last-decile min V %.4f;",
                         static_cast<unsigned long long>(seed), ev.steps, baseline, first, 0.95 * peak, v_min_tail);
    }
    const double mins = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
    verdict(7, tc.a && tc.b && c && d,
            fmt("(a) %s (b) %s (c) %s (d) %s, %.1f min;", tc.a ? "ok" : "no", tc.b ? "ok" : "no", c ? "ok" : "no",
                d ? "ok" : "no", mins)
                + tc.detail + detail_cd);
    return runs;
}

void aging(std::vector<SeedRun>& runs)
{
    const auto t0 = std::chrono::steady_clock::now();
    const ddpg::EnvFactory aged = [] {
        return ChargingEnv(CellParameters{}, Discretization{}, EnvConfig{}, AgingScenario::aged());
    };
    // the study adapts one fresh-cell policy: seed 1, the tool's default
    auto& run = runs.front();
    auto fresh_env = ChargingEnv(CellParameters{}, Discretization{}, EnvConfig{});
    const auto fresh = ddpg::evaluate(run.result.agent, fresh_env);
    auto aged_env = aged();
    const auto frozen = ddpg::evaluate(run.result.agent, aged_env);

    // retraining continues from the fresh-cell agent and its replay memory
    ddpg::TrainConfig cfg;
    cfg.seed = run.seed;
    cfg.episodes = 1000;
    progress("criterion 8: retraining on the aged cell");
    ddpg::Agent agent = run.result.agent;
    ddpg::ReplayBuffer buffer = run.result.buffer;
    const auto log = ddpg::train_agent(agent, buffer, aged, cfg);
    auto env = aged();
    const auto adapted = ddpg::evaluate(agent, env);
    const bool pass = frozen.scores.v_score > 0.0 && !log.diverged && adapted.reached
                      && adapted.scores.v_score <= 0.010 && adapted.charge_time_min > fresh.charge_time_min;

    std::string others;
    for (std::size_t k = 1; k < runs.size(); ++k) {
        auto e = aged();
        const auto f = ddpg::evaluate(runs[k].result.agent, e);
        others += fmt(" seed %llu %+.4f V / %+.2f K;", static_cast<unsigned long long>(runs[k].seed), f.scores.v_score,
                      f.scores.t_score);
    }
    const double mins = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
    verdict(8, pass,
            fmt("seed %llu: frozen v %+.4f V (t %+.2f K), after 1000 episodes v %+.4f V, charge %.0f -> %.0f min, "
                "%.1f min; other frozen policies:",
                static_cast<unsigned long long>(run.seed), frozen.scores.v_score, frozen.scores.t_score,
                adapted.scores.v_score, fresh.charge_time_min, adapted.charge_time_min, mins)
                + others);
}

void comparison(const std::vector<SeedRun>& simplified_runs)
{
    namespace fs = std::filesystem;
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = fs::temp_directory_path() / "fastcharge_acceptance_compare";
    fs::remove_all(dir);

    ExperimentSpec spec;
    spec.config.seeds = {1, 2, 3};
    spec.out_dir = dir;
    spec.both_modes = true;
    std::ostringstream sink;
    spec.log = &sink;
    progress("criterion 9: training both observation modes");
    const int status = cmd_train(spec);

    TrendCheck full, simple;
    bool inputs = true, exported = status == exit_code::ok, consistent = true;
    for (std::uint64_t seed : spec.config.seeds) {
        const std::string name = "runlog_seed" + std::to_string(seed) + ".csv";
        auto lf = read_runlog_csv(dir / "full" / name);
        auto ls = read_runlog_csv(dir / "simplified" / name);
        lf.seed = ls.seed = seed;
        trend(lf, full);
        trend(ls, simple);
        const auto cf = load_checkpoint(dir / "full" / ("checkpoint_seed" + std::to_string(seed) + ".json"));
        const auto cs = load_checkpoint(dir / "simplified" / ("checkpoint_seed" + std::to_string(seed) + ".json"));
        inputs = inputs && cf.agent.observation_size() == 61 && cs.agent.observation_size() == 2;
        // the harness must reproduce the in-process simplified run of criterion 7
        for (const auto& run : simplified_runs)
            if (run.seed == seed)
                consistent = consistent && cs.agent.actor == run.result.agent.actor;
    }
    for (const auto& [panel, pname] : panels()) {
        exported = exported && fs::exists(dir / "compare" / (pname + ".csv"));
        exported = exported && fs::exists(dir / "full" / "export" / (pname + ".csv"));
        exported = exported && fs::exists(dir / "simplified" / "export" / (pname + ".csv"));
    }
    const double mins = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
    verdict(9, inputs && exported && full.a && full.b && simple.a && simple.b,
            fmt("inputs 61/2 %s, paired panels %s, full 7(a) %s 7(b) %s, simplified 7(a) %s 7(b) %s, "
                "matches in-process runs %s, %.1f min;",
                inputs ? "ok" : "no", exported ? "ok" : "no", full.a ? "ok" : "no", full.b ? "ok" : "no",
                simple.a ? "ok" : "no", simple.b ? "ok" : "no", consistent ? "yes" : "no", mins)
                + " full:" + full.detail);
}

} // namespace

int main()
{
    conservation();
    rest_voltage();
    thermal();
    gradients();
    mechanics();
    toy();
    auto runs = training_reproduction();
    aging(runs);
    comparison(runs);
    std::printf("%s: %d of 9 criteria failed\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
