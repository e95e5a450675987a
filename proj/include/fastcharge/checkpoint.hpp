#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fastcharge/ddpg.hpp"
#include "fastcharge/env.hpp"
#include "fastcharge/errors.hpp"
#include "fastcharge/mlp.hpp"

namespace fastcharge {

using json = nlohmann::json;

inline constexpr int checkpoint_version = 1;

namespace detail {

inline json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd json_vector(const json& j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

template <class T>
std::string stream_state(const T& x)
{
    std::ostringstream os;
    os << x;
    return os.str();
}

template <class T>
void restore_stream_state(T& x, const std::string& text, const char* what)
{
    std::istringstream is(text);
    is >> x;
    if (is.fail())
        throw IoError(std::string("checkpoint: corrupt ") + what + " state");
}

} // namespace detail

inline json to_json(const nn::Mlp& net)
{
    return {{"layer_sizes", net.layer_sizes()},
            {"output_activation", nn::to_string(net.output_activation())},
            {"parameters", detail::vector_json(net.parameters())}};
}

inline nn::Mlp mlp_from_json(const json& j)
{
    nn::Mlp net(j.at("layer_sizes").get<std::vector<int>>(),
                nn::output_activation_from_string(j.at("output_activation").get<std::string>()));
    net.unflatten(detail::json_vector(j.at("parameters")));
    return net;
}

inline json to_json(const nn::AdamState& s)
{
    return {{"m", detail::vector_json(s.m)}, {"v", detail::vector_json(s.v)}, {"step", s.step},
            {"beta1", s.beta1},             {"beta2", s.beta2},             {"epsilon", s.epsilon}};
}

inline nn::AdamState adam_from_json(const json& j)
{
    nn::AdamState s;
    s.m = detail::json_vector(j.at("m"));
    s.v = detail::json_vector(j.at("v"));
    s.step = j.at("step").get<long>();
    s.beta1 = j.at("beta1").get<double>();
    s.beta2 = j.at("beta2").get<double>();
    s.epsilon = j.at("epsilon").get<double>();
    return s;
}

inline json to_json(const Observation& o)
{
    return {{"mode", to_string(o.mode)}, {"values", detail::vector_json(o.values)}};
}

inline Observation observation_from_json(const json& j)
{
    return {detail::json_vector(j.at("values")), observation_mode_from_string(j.at("mode").get<std::string>())};
}

inline json to_json(const Transition& t)
{
    const auto& i = t.info;
    return {{"obs", to_json(t.obs)},
            {"action", t.action},
            {"reward", t.reward},
            {"next_obs", to_json(t.next_obs)},
            {"done", t.done},
            {"terminal", t.terminal},
            {"info",
             {{"v_excess", i.v_excess},
              {"t_excess", i.t_excess},
              {"current_a", i.current_a},
              {"v_terminal", i.v_terminal},
              {"t_cell_c", i.t_cell_c},
              {"soc", i.soc},
              {"action_clamped", i.action_clamped},
              {"termination", to_string(i.termination)}}}};
}

inline Termination termination_from_string(const std::string& s)
{
    if (s == "reached_soc")
        return Termination::reached_soc;
    if (s == "timeout")
        return Termination::timeout;
    if (s == "saturated")
        return Termination::saturated;
    if (s == "none")
        return Termination::none;
    throw ValidationError("termination", "unknown value '" + s + "'");
}

inline Transition transition_from_json(const json& j)
{
    Transition t;
    t.obs = observation_from_json(j.at("obs"));
    t.action = j.at("action").get<double>();
    t.reward = j.at("reward").get<double>();
    t.next_obs = observation_from_json(j.at("next_obs"));
    t.done = j.at("done").get<bool>();
    t.terminal = j.at("terminal").get<bool>();
    const auto& i = j.at("info");
    t.info.v_excess = i.at("v_excess").get<double>();
    t.info.t_excess = i.at("t_excess").get<double>();
    t.info.current_a = i.at("current_a").get<double>();
    t.info.v_terminal = i.at("v_terminal").get<double>();
    t.info.t_cell_c = i.at("t_cell_c").get<double>();
    t.info.soc = i.at("soc").get<double>();
    t.info.action_clamped = i.at("action_clamped").get<bool>();
    t.info.termination = termination_from_string(i.at("termination").get<std::string>());
    return t;
}

inline json to_json(const ddpg::ReplayBuffer& b)
{
    json items = json::array();
    for (const auto& t : b.storage())
        items.push_back(to_json(t));
    return {{"capacity", b.capacity()}, {"next", b.next_slot()}, {"inserted", b.inserted()}, {"storage", items}};
}

inline ddpg::ReplayBuffer buffer_from_json(const json& j)
{
    std::vector<Transition> items;
    for (const auto& t : j.at("storage"))
        items.push_back(transition_from_json(t));
    return ddpg::ReplayBuffer::restore(j.at("capacity").get<std::size_t>(), std::move(items),
                                       j.at("next").get<std::size_t>(), j.at("inserted").get<std::uint64_t>());
}

/// A saved agent, the observation mode it was trained on, and optionally
/// its replay buffer.
struct Checkpoint
{
    ddpg::Agent agent;
    ObservationMode observation_mode = ObservationMode::simplified;
    std::optional<ddpg::ReplayBuffer> buffer;
};

inline json to_json(const Checkpoint& c)
{
    const auto& a = c.agent;
    json j = {{"format", "fastcharge-agent"},
              {"version", checkpoint_version},
              {"observation_mode", to_string(c.observation_mode)},
              {"gamma", a.gamma},
              {"tau", a.tau},
              {"lr_actor", a.lr_actor},
              {"lr_critic", a.lr_critic},
              {"saturation_limit", a.saturation_limit},
              {"saturation_penalty", a.saturation_penalty},
              {"diverged", a.diverged},
              {"actor", to_json(a.actor)},
              {"critic", to_json(a.critic)},
              {"actor_target", to_json(a.actor_target)},
              {"critic_target", to_json(a.critic_target)},
              {"actor_opt", to_json(a.actor_opt)},
              {"critic_opt", to_json(a.critic_opt)},
              {"noise",
               {{"theta", a.noise.theta()},
                {"sigma", a.noise.sigma()},
                {"dt", a.noise.dt()},
                {"value", a.noise.value()},
                {"rng", detail::stream_state(a.noise.rng())},
                {"normal", detail::stream_state(a.noise.normal())}}},
              {"sample_rng", detail::stream_state(a.sample_rng)}};
    j["buffer"] = c.buffer ? to_json(*c.buffer) : json(nullptr);
    return j;
}

inline Checkpoint checkpoint_from_json(const json& j)
{
    if (j.value("format", "") != "fastcharge-agent")
        throw IoError("checkpoint: not an agent checkpoint");
    if (j.at("version").get<int>() != checkpoint_version)
        throw IoError("checkpoint: unsupported version " + std::to_string(j.at("version").get<int>()));
    Checkpoint c;
    auto& a = c.agent;
    c.observation_mode = observation_mode_from_string(j.at("observation_mode").get<std::string>());
    a.gamma = j.at("gamma").get<double>();
    a.tau = j.at("tau").get<double>();
    a.lr_actor = j.at("lr_actor").get<double>();
    a.lr_critic = j.at("lr_critic").get<double>();
    a.saturation_limit = j.at("saturation_limit").get<double>();
    a.saturation_penalty = j.at("saturation_penalty").get<double>();
    a.diverged = j.at("diverged").get<bool>();
    a.actor = mlp_from_json(j.at("actor"));
    a.critic = mlp_from_json(j.at("critic"));
    a.actor_target = mlp_from_json(j.at("actor_target"));
    a.critic_target = mlp_from_json(j.at("critic_target"));
    a.actor_opt = adam_from_json(j.at("actor_opt"));
    a.critic_opt = adam_from_json(j.at("critic_opt"));
    if (a.actor_opt.m.size() != a.actor.parameter_count() || a.critic_opt.m.size() != a.critic.parameter_count())
        throw IoError("checkpoint: optimiser state does not match network size");
    if (a.critic.input_size() != a.actor.input_size() + 1)
        throw IoError("checkpoint: critic input must be observation plus action");
    const auto& n = j.at("noise");
    a.noise = ddpg::OuNoise(n.at("theta").get<double>(), n.at("sigma").get<double>(), n.at("dt").get<double>(), 0);
    a.noise.set_value(n.at("value").get<double>());
    detail::restore_stream_state(a.noise.rng(), n.at("rng").get<std::string>(), "noise rng");
    detail::restore_stream_state(a.noise.normal(), n.at("normal").get<std::string>(), "noise normal");
    detail::restore_stream_state(a.sample_rng, j.at("sample_rng").get<std::string>(), "sample rng");
    if (j.contains("buffer") && !j.at("buffer").is_null())
        c.buffer = buffer_from_json(j.at("buffer"));
    return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << to_json(c).dump(1) << '\n';
    if (!out)
        throw IoError("write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    try {
        return checkpoint_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw IoError("checkpoint " + path.string() + ": " + e.what());
    }
}

} // namespace fastcharge
