#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "fastcharge/baselines.hpp"
#include "fastcharge/checkpoint.hpp"
#include "fastcharge/config.hpp"
#include "fastcharge/ddpg.hpp"
#include "fastcharge/env.hpp"
#include "fastcharge/report.hpp"
#include "fastcharge/trajectory.hpp"

namespace fastcharge {

inline constexpr const char* version = "0.1.0";

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int usage = 1;
inline constexpr int divergence = 2;
inline constexpr int io = 3;
} // namespace exit_code

/// Resolved inputs of one command.
struct ExperimentSpec
{
    RunConfig config;
    std::filesystem::path out_dir = "runs";
    std::string checkpoint;   // eval, age
    std::string profile;      // sim
    std::string run_dir;      // export
    bool both_modes = false;  // train: full and simplified side by side
    bool save_buffer = false; // store replay contents in checkpoints
    std::ostream* log = &std::cout;
};

namespace detail {

inline void ensure_dir(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

template <class Writer>
void write_file(const std::filesystem::path& path, Writer&& writer)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path.string());
    writer(out);
    if (!out)
        throw IoError("write failed for " + path.string());
}

inline std::string seed_file(const std::string& stem, std::uint64_t seed, const std::string& ext)
{
    return stem + "_seed" + std::to_string(seed) + ext;
}

inline json manifest(const std::string& command, const RunConfig& cfg)
{
    return {{"tool", "charge-cli"},
            {"version", version},
            {"compiler", __VERSION__},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "."
                          + std::to_string(EIGEN_MINOR_VERSION)},
            {"command", command},
            {"config_hash", config_hash(cfg)},
            {"seeds", cfg.seeds},
            {"observation_mode", to_string(cfg.env.observation_mode)},
            {"resolved_config", to_text(cfg)}};
}

inline void write_manifest(const std::filesystem::path& dir, const json& m)
{
    write_file(dir / "manifest.json", [&](std::ostream& os) { os << m.dump(2) << '\n'; });
}

inline json summary_json(const ddpg::EvalResult& r)
{
    return {{"cum_reward", r.cum_reward},           {"v_score", r.scores.v_score},
            {"t_score", r.scores.t_score},           {"charge_time_min", r.charge_time_min},
            {"steps", r.steps},                      {"reached_soc", r.reached}};
}

inline void print_summary(std::ostream& os, const std::string& label, const ddpg::EvalResult& r)
{
    os << label << ": reward " << format_number(r.cum_reward) << ", v_score " << format_number(r.scores.v_score)
       << " V, t_score " << format_number(r.scores.t_score) << " K, " << format_number(r.charge_time_min)
       << " min, " << (r.reached ? "reached SOC target" : "target not reached") << '\n';
}

inline ddpg::EnvFactory factory(const RunConfig& cfg, AgingScenario scenario = {})
{
    return [cfg, scenario] { return ChargingEnv(cfg.params, cfg.disc, cfg.env, scenario); };
}

inline Checkpoint load_matching_checkpoint(const std::string& path, const RunConfig& cfg)
{
    if (path.empty())
        throw ValidationError("checkpoint", "a checkpoint path is required");
    Checkpoint c = load_checkpoint(path);
    if (c.observation_mode != cfg.env.observation_mode)
        throw ValidationError("observation_mode", "checkpoint was trained on '" + to_string(c.observation_mode)
                                                      + "' observations but the configuration uses '"
                                                      + to_string(cfg.env.observation_mode) + "'");
    const int expected = ChargingEnv(cfg.params, cfg.disc, cfg.env).observation_size();
    if (c.agent.observation_size() != expected)
        throw ValidationError("observation_mode", "checkpoint expects " + std::to_string(c.agent.observation_size())
                                                      + " inputs, environment provides " + std::to_string(expected));
    return c;
}

} // namespace detail

/// Aggregates the run logs listed in `run_dir`/manifest.json into one band
/// CSV per panel under `run_dir`/export.
inline int cmd_export(const ExperimentSpec& spec)
{
    namespace fs = std::filesystem;
    const fs::path dir = spec.run_dir.empty() ? spec.out_dir : fs::path(spec.run_dir);
    std::ifstream in(dir / "manifest.json");
    if (!in)
        throw IoError("no manifest.json in " + dir.string());
    json m;
    try {
        m = json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("manifest in " + dir.string() + ": " + e.what());
    }
    if (!m.contains("runlogs") || m["runlogs"].empty())
        throw IoError("manifest in " + dir.string() + " lists no run logs");
    std::vector<ddpg::RunLog> logs;
    for (const auto& name : m["runlogs"])
        logs.push_back(read_runlog_csv(dir / name.get<std::string>()));
    const fs::path out = dir / "export";
    detail::ensure_dir(out);
    for (const auto& [panel, name] : panels()) {
        const auto pts = aggregate(logs, panel);
        detail::write_file(out / (name + ".csv"), [&](std::ostream& os) { write_band_csv(os, pts); });
    }
    *spec.log << "exported " << panels().size() << " panels from " << logs.size() << " run(s) to " << out.string()
              << '\n';
    return exit_code::ok;
}

namespace detail {

inline int train_one_mode(const ExperimentSpec& spec, const RunConfig& cfg, const std::filesystem::path& dir)
{
    ensure_dir(dir);
    json m = manifest("train", cfg);
    json runlogs = json::array(), checkpoints = json::array(), wall = json::object(), diverged = json::object();
    bool any_diverged = false;
    for (std::uint64_t seed : cfg.seeds) {
        ddpg::TrainConfig tc = cfg.train;
        tc.seed = seed;
        const auto t0 = std::chrono::steady_clock::now();
        auto res = ddpg::train(factory(cfg), tc);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        const std::string log_name = seed_file("runlog", seed, ".csv");
        const std::string ckpt_name = seed_file("checkpoint", seed, ".json");
        write_file(dir / log_name, [&](std::ostream& os) { ddpg::write_runlog_csv(os, res.log); });
        Checkpoint c{res.agent, cfg.env.observation_mode, std::nullopt};
        if (spec.save_buffer)
            c.buffer = res.buffer;
        save_checkpoint(dir / ckpt_name, c);
        runlogs.push_back(log_name);
        checkpoints.push_back(ckpt_name);
        wall[std::to_string(seed)] = secs;
        diverged[std::to_string(seed)] = res.log.diverged;
        any_diverged = any_diverged || res.log.diverged;

        *spec.log << to_string(cfg.env.observation_mode) << " seed " << seed << ": " << res.log.records.size()
                  << " records" << (res.log.diverged ? ", DIVERGED" : "") << ", " << format_number(secs) << " s\n";
    }
    m["runlogs"] = runlogs;
    m["checkpoints"] = checkpoints;
    m["wall_clock_s"] = wall;
    m["diverged"] = diverged;
    write_manifest(dir, m);
    return any_diverged ? exit_code::divergence : exit_code::ok;
}

} // namespace detail

/// Trains one agent per seed and writes run logs, checkpoints and a
/// manifest. With `both_modes`, runs full and simplified observations into
/// sibling directories and writes paired panel CSVs.
inline int cmd_train(const ExperimentSpec& spec)
{
    namespace fs = std::filesystem;
    spec.config.validate();
    if (!spec.both_modes)
        return detail::train_one_mode(spec, spec.config, spec.out_dir);

    int status = exit_code::ok;
    std::map<ObservationMode, std::vector<ddpg::RunLog>> logs;
    for (ObservationMode mode : {ObservationMode::full, ObservationMode::simplified}) {
        RunConfig cfg = spec.config;
        cfg.env.observation_mode = mode;
        const fs::path dir = spec.out_dir / to_string(mode);
        status = std::max(status, detail::train_one_mode(spec, cfg, dir));
        ExperimentSpec ex = spec;
        ex.run_dir = dir.string();
        cmd_export(ex);
        for (std::uint64_t seed : cfg.seeds)
            logs[mode].push_back(read_runlog_csv(dir / detail::seed_file("runlog", seed, ".csv")));
    }
    const fs::path out = spec.out_dir / "compare";
    detail::ensure_dir(out);
    for (const auto& [panel, name] : panels()) {
        const auto full = logs[ObservationMode::full].empty() ? std::vector<BandPoint>{}
                                                              : aggregate(logs[ObservationMode::full], panel);
        const auto simple = aggregate(logs[ObservationMode::simplified], panel);
        detail::write_file(out / (name + ".csv"),
                           [&](std::ostream& os) { write_paired_band_csv(os, "full", full, "simplified", simple); });
    }
    return status;
}

/// Greedy rollout of a checkpoint, on the configured aging scenario;
/// writes the trajectory and a summary.
inline int cmd_eval(const ExperimentSpec& spec)
{
    spec.config.validate();
    const auto& cfg = spec.config;
    const Checkpoint c = detail::load_matching_checkpoint(spec.checkpoint, cfg);
    detail::ensure_dir(spec.out_dir);
    ChargingEnv env(cfg.params, cfg.disc, cfg.env, cfg.aging);
    const auto r = ddpg::evaluate(c.agent, env, cfg.seeds.front());
    detail::write_file(spec.out_dir / "eval_trajectory.csv",
                       [&](std::ostream& os) { write_trajectory_csv(os, r.trajectory, true); });
    json m = detail::manifest("eval", cfg);
    m["checkpoint"] = spec.checkpoint;
    m["summary"] = detail::summary_json(r);
    detail::write_manifest(spec.out_dir, m);
    detail::print_summary(*spec.log, "eval", r);
    return exit_code::ok;
}

/// Phase 1: frozen checkpoint on the perturbed cell. Phase 2: training
/// continues on the perturbed cell, one run per seed.
inline int cmd_age(const ExperimentSpec& spec)
{
    spec.config.validate();
    const auto& cfg = spec.config;
    if (cfg.aging.is_identity())
        *spec.log << "note: identity aging scenario, phase 1 repeats eval\n";
    const Checkpoint c = detail::load_matching_checkpoint(spec.checkpoint, cfg);
    detail::ensure_dir(spec.out_dir);

    ChargingEnv aged(cfg.params, cfg.disc, cfg.env, cfg.aging);
    const auto frozen = ddpg::evaluate(c.agent, aged, cfg.seeds.front());
    detail::write_file(spec.out_dir / "age_frozen_trajectory.csv",
                       [&](std::ostream& os) { write_trajectory_csv(os, frozen.trajectory, true); });
    detail::print_summary(*spec.log, "frozen policy on aged cell", frozen);

    json m = detail::manifest("age", cfg);
    m["checkpoint"] = spec.checkpoint;
    m["frozen"] = detail::summary_json(frozen);
    json runlogs = json::array(), adapted = json::object(), wall = json::object(), diverged = json::object();
    bool any_diverged = false;
    for (std::uint64_t seed : cfg.seeds) {
        ddpg::Agent agent = c.agent;
        ddpg::TrainConfig tc = cfg.train;
        tc.seed = seed;
        ddpg::ReplayBuffer buffer = c.buffer ? *c.buffer : ddpg::ReplayBuffer(static_cast<std::size_t>(tc.buffer_capacity));
        const auto t0 = std::chrono::steady_clock::now();
        const auto log = ddpg::train_agent(agent, buffer, detail::factory(cfg, cfg.aging), tc);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        const std::string log_name = detail::seed_file("runlog_age", seed, ".csv");
        detail::write_file(spec.out_dir / log_name, [&](std::ostream& os) { ddpg::write_runlog_csv(os, log); });
        Checkpoint out{agent, cfg.env.observation_mode, std::nullopt};
        if (spec.save_buffer)
            out.buffer = buffer;
        save_checkpoint(spec.out_dir / detail::seed_file("checkpoint_aged", seed, ".json"), out);

        ChargingEnv env(cfg.params, cfg.disc, cfg.env, cfg.aging);
        const auto r = ddpg::evaluate(agent, env, seed);
        detail::write_file(spec.out_dir / detail::seed_file("age_adapted_trajectory", seed, ".csv"),
                           [&](std::ostream& os) { write_trajectory_csv(os, r.trajectory, true); });
        runlogs.push_back(log_name);
        adapted[std::to_string(seed)] = detail::summary_json(r);
        wall[std::to_string(seed)] = secs;
        diverged[std::to_string(seed)] = log.diverged;
        any_diverged = any_diverged || log.diverged;
        detail::print_summary(*spec.log, "adapted policy, seed " + std::to_string(seed), r);
    }
    m["runlogs"] = runlogs;
    m["adapted"] = adapted;
    m["wall_clock_s"] = wall;
    m["diverged"] = diverged;
    detail::write_manifest(spec.out_dir, m);
    return any_diverged ? exit_code::divergence : exit_code::ok;
}

/// Reads a `time_s,current_A` profile. Rows must start at t = 0 and be
/// evenly spaced; each current holds until the next row. A single row
/// holds for `default_dt`.
inline CurrentProfile read_profile_csv(std::istream& in, double default_dt, const std::string& source = "profile")
{
    std::vector<double> t, i;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ValidationError(source, "line " + std::to_string(number) + ": expected time,current");
        const std::string a = trim(line.substr(0, comma)), b = trim(line.substr(comma + 1));
        if (t.empty() && i.empty() && !a.empty() && !(std::isdigit(static_cast<unsigned char>(a[0])) || a[0] == '-'
                                                      || a[0] == '.' || a[0] == '+'))
            continue; // header
        t.push_back(parse_double(source + " line " + std::to_string(number), a));
        i.push_back(parse_double(source + " line " + std::to_string(number), b));
    }
    if (t.empty())
        throw ValidationError(source, "profile has no rows");
    if (t.front() != 0.0)
        throw ValidationError(source, "profile must start at t = 0");
    CurrentProfile p;
    p.dt = t.size() > 1 ? t[1] - t[0] : default_dt;
    for (std::size_t k = 1; k < t.size(); ++k)
        if (std::abs((t[k] - t[k - 1]) - p.dt) > 1e-9 * std::max(1.0, p.dt))
            throw ValidationError(source, "rows must be evenly spaced");
    p.current_a = std::move(i);
    p.validate();
    return p;
}

/// Open-loop run of a current profile with a coulomb-counting cross-check.
inline int cmd_sim(const ExperimentSpec& spec)
{
    spec.config.validate();
    const auto& cfg = spec.config;
    if (spec.profile.empty())
        throw ValidationError("profile", "a profile file is required");
    std::ifstream in(spec.profile);
    if (!in)
        throw IoError("cannot open " + spec.profile);
    const CurrentProfile profile = read_profile_csv(in, cfg.env.dt_ctrl, spec.profile);

    const SimulatorContext ctx(cfg.params, cfg.disc);
    const auto traj = simulate_profile(
        ctx, equilibrium_state(ctx, cfg.env.soc_init, cfg.env.t_init + constants::zero_celsius), profile);
    const auto oracle = coulomb_counting_oracle(profile.current_a, profile.dt, cfg.params.q_nominal(), cfg.env.soc_init);
    double deviation = 0.0;
    for (std::size_t k = 0; k < traj.size(); ++k)
        deviation = std::max(deviation, std::abs(traj[k].soc_anode - oracle[k]));

    detail::ensure_dir(spec.out_dir);
    detail::write_file(spec.out_dir / "sim_trajectory.csv",
                       [&](std::ostream& os) { write_trajectory_csv(os, traj, false); });
    json m = detail::manifest("sim", cfg);
    m["profile"] = spec.profile;
    m["coulomb_max_deviation"] = deviation;
    detail::write_manifest(spec.out_dir, m);
    *spec.log << "simulated " << profile.current_a.size() << " segments; coulomb max deviation "
              << format_number(deviation) << '\n';
    return exit_code::ok;
}

} // namespace fastcharge
