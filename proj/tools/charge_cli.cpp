#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "fastcharge/config.hpp"
#include "fastcharge/errors.hpp"
#include "fastcharge/experiment.hpp"

namespace {

using namespace fastcharge;

struct Options
{
    std::string config;
    std::string obs;
    std::string seeds;
    int episodes = -1;
    std::string checkpoint;
    std::string scenario;
    std::string out = "runs";
    std::string profile;
    std::string run_dir;
    bool save_buffer = false;
    std::vector<std::string> set;
};

// defaults < --config file < dedicated flags < --set overrides
ExperimentSpec resolve(const Options& o, const std::string& verb)
{
    ExperimentSpec spec;
    if (!o.config.empty())
        spec.config = load_run_config(o.config);
    KeyValues kv;
    if (!o.obs.empty() && o.obs != "both")
        kv["env.observation_mode"] = o.obs;
    if (!o.seeds.empty())
        kv["experiment.seeds"] = o.seeds;
    if (o.episodes >= 0)
        kv["train.episodes"] = std::to_string(o.episodes);
    if (!o.scenario.empty()) {
        if (o.scenario == "aged") {
            const auto a = AgingScenario::aged();
            kv["aging.film_resistance_multiplier"] = format_exact(a.film_resistance_multiplier);
            kv["aging.heat_generation_multiplier"] = format_exact(a.heat_generation_multiplier);
        } else if (o.scenario == "fresh") {
            kv["aging.film_resistance_multiplier"] = "1";
            kv["aging.heat_generation_multiplier"] = "1";
        } else {
            const auto colon = o.scenario.find(':');
            if (colon == std::string::npos)
                throw ValidationError("scenario", "expected 'aged', 'fresh' or FILM:HEAT multipliers");
            kv["aging.film_resistance_multiplier"] = o.scenario.substr(0, colon);
            kv["aging.heat_generation_multiplier"] = o.scenario.substr(colon + 1);
        }
    }
    for (const auto& s : o.set) {
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ValidationError("set", "expected section.key=value, got '" + s + "'");
        kv[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
    }
    fastcharge::apply(spec.config, kv, std::filesystem::current_path());
    spec.both_modes = o.obs == "both";
    if (spec.both_modes && verb != "train")
        throw ValidationError("obs", "'both' is only valid for train");
    spec.out_dir = o.out;
    spec.checkpoint = o.checkpoint;
    spec.profile = o.profile;
    spec.run_dir = o.run_dir;
    spec.save_buffer = o.save_buffer;
    return spec;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Battery fast-charging simulator and DDPG trainer"};
    app.require_subcommand(1);
    Options o;

    auto common = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config, "Layered key = value configuration file");
        sub->add_option("--seeds", o.seeds, "Seed count N (seeds 1..N) or comma-separated list");
        sub->add_option("--out", o.out, "Output directory");
        sub->add_option("--set", o.set, "Override one key, e.g. --set train.ou_sigma=0.3");
    };

    auto* train = app.add_subcommand("train", "Train one agent per seed");
    common(train);
    train->add_option("--obs", o.obs, "Observation mode")->check(CLI::IsMember({"full", "simplified", "both"}));
    train->add_option("--episodes", o.episodes, "Training episodes");
    train->add_flag("--save-buffer", o.save_buffer, "Store replay contents in checkpoints");

    auto* eval = app.add_subcommand("eval", "Greedy rollout of a checkpoint");
    common(eval);
    eval->add_option("--obs", o.obs, "Observation mode")->check(CLI::IsMember({"full", "simplified"}));
    eval->add_option("--checkpoint", o.checkpoint, "Agent checkpoint")->required();
    eval->add_option("--scenario", o.scenario, "aged, fresh or FILM:HEAT");

    auto* age = app.add_subcommand("age", "Frozen evaluation and retraining on a perturbed cell");
    common(age);
    age->add_option("--obs", o.obs, "Observation mode")->check(CLI::IsMember({"full", "simplified"}));
    age->add_option("--checkpoint", o.checkpoint, "Fresh-cell checkpoint")->required();
    age->add_option("--scenario", o.scenario, "aged, fresh or FILM:HEAT");
    age->add_option("--episodes", o.episodes, "Retraining episodes");
    age->add_flag("--save-buffer", o.save_buffer, "Store replay contents in checkpoints");

    auto* sim = app.add_subcommand("sim", "Open-loop run of a current profile");
    common(sim);
    sim->add_option("profile", o.profile, "CSV with time_s,current_A rows")->required();

    auto* exp = app.add_subcommand("export", "Aggregate run logs into panel CSVs");
    exp->add_option("run_dir", o.run_dir, "Directory holding manifest.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? exit_code::ok : exit_code::usage;
    }

    const std::string verb = app.get_subcommands().front()->get_name();
    try {
        const ExperimentSpec spec = resolve(o, verb);
        if (verb == "train")
            return cmd_train(spec);
        if (verb == "eval")
            return cmd_eval(spec);
        if (verb == "age")
            return cmd_age(spec);
        if (verb == "sim")
            return cmd_sim(spec);
        return cmd_export(spec);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code::usage;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code::io;
    } catch (const SimulationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code::divergence;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code::divergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code::usage;
    }
}
