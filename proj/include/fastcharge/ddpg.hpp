#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fastcharge/env.hpp"
#include "fastcharge/errors.hpp"
#include "fastcharge/mlp.hpp"

namespace fastcharge::ddpg {

using nn::Matrix;
using nn::Vector;

/// splitmix64; derives independent stream seeds from one run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Stacked replay samples; column j is sample j.
struct Batch
{
    Matrix states;
    Matrix actions;       // 1 x N
    Vector rewards;
    Matrix next_states;
    Vector terminal;      // 1.0 where the next state has no value

    Eigen::Index size() const { return states.cols(); }
};

/// Fixed-capacity ring; once full, each push overwrites the oldest entry.
class ReplayBuffer
{
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity)
    {
        if (capacity == 0)
            throw ValidationError("buffer_capacity", "must be >= 1");
    }

    void push(Transition t)
    {
        if (data_.size() < capacity_) {
            data_.push_back(std::move(t));
        } else {
            data_[next_] = std::move(t);
        }
        next_ = (next_ + 1) % capacity_;
        ++inserted_;
    }

    /// Rebuilds a buffer from its raw storage, e.g. after a checkpoint.
    static ReplayBuffer restore(std::size_t capacity, std::vector<Transition> storage, std::size_t next,
                                std::uint64_t inserted)
    {
        ReplayBuffer b(capacity);
        if (storage.size() > capacity || next >= capacity || inserted < storage.size())
            throw ValidationError("buffer", "inconsistent replay storage");
        b.data_ = std::move(storage);
        b.next_ = next;
        b.inserted_ = inserted;
        return b;
    }

    const std::vector<Transition>& storage() const { return data_; }
    std::size_t next_slot() const { return next_; }
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::uint64_t inserted() const { return inserted_; }
    const Transition& operator[](std::size_t i) const { return data_[i]; }

    /// Entries in insertion order, oldest first.
    std::vector<const Transition*> ordered() const
    {
        std::vector<const Transition*> out;
        out.reserve(data_.size());
        const std::size_t start = data_.size() < capacity_ ? 0 : next_;
        for (std::size_t k = 0; k < data_.size(); ++k)
            out.push_back(&data_[(start + k) % data_.size()]);
        return out;
    }

    /// Uniform indices with replacement.
    template <class Rng>
    std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const
    {
        if (data_.empty())
            throw std::logic_error("ReplayBuffer::sample on empty buffer");
        std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
        std::vector<std::size_t> idx(n);
        for (auto& i : idx)
            i = pick(rng);
        return idx;
    }

    template <class Rng>
    Batch sample(std::size_t n, Rng& rng) const
    {
        if (n > data_.size())
            throw std::logic_error("ReplayBuffer::sample: batch larger than buffer contents");
        return gather(sample_indices(n, rng));
    }

    Batch gather(const std::vector<std::size_t>& idx) const
    {
        const auto dim = data_.front().obs.size();
        const auto n = static_cast<Eigen::Index>(idx.size());
        Batch b;
        b.states.resize(dim, n);
        b.next_states.resize(dim, n);
        b.actions.resize(1, n);
        b.rewards.resize(n);
        b.terminal.resize(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto& t = data_[idx[j]];
            b.states.col(j) = t.obs.values;
            b.next_states.col(j) = t.next_obs.values;
            b.actions(0, j) = t.action;
            b.rewards[j] = t.reward;
            b.terminal[j] = t.terminal ? 1.0 : 0.0;
        }
        return b;
    }

private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::uint64_t inserted_ = 0;
    std::vector<Transition> data_;
};

/// Ornstein-Uhlenbeck process x += theta (mu - x) dt + sigma sqrt(dt) N(0,1).
class OuNoise
{
public:
    OuNoise() = default;
    OuNoise(double theta, double sigma, double dt, std::uint64_t seed)
        : theta_(theta), sigma_(sigma), dt_(dt), rng_(seed)
    {}

    double sample()
    {
        x_ += theta_ * (mu_ - x_) * dt_ + sigma_ * std::sqrt(dt_) * normal_(rng_);
        return x_;
    }

    void reset() { x_ = mu_; }
    void set_sigma(double sigma) { sigma_ = sigma; }
    double sigma() const { return sigma_; }
    double theta() const { return theta_; }
    double dt() const { return dt_; }
    double value() const { return x_; }
    std::normal_distribution<double>& normal() { return normal_; }
    const std::normal_distribution<double>& normal() const { return normal_; }
    std::mt19937_64& rng() { return rng_; }
    const std::mt19937_64& rng() const { return rng_; }
    void set_value(double x) { x_ = x; }

private:
    double theta_ = 0.15;
    double sigma_ = 0.2;
    double dt_ = 1.0;
    double mu_ = 0.0;
    double x_ = 0.0;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

struct TrainConfig
{
    int episodes = 2000;
    int batch_size = 64;
    int buffer_capacity = 100000;
    int warmup = 1000;
    bool random_warmup = true; // warmup transitions use uniform random actions
    double gamma = 0.99;
    double lr_actor = 1e-4;
    double lr_critic = 1e-3;
    double tau = 1e-3;
    double ou_theta = 0.15;
    double ou_sigma = 0.2;
    int noise_anneal_episodes = 1000; // sigma decays linearly to zero over these
    std::uint64_t seed = 1;
    int eval_every = 10;
    double saturation_limit = 2.0;   // |pre-tanh| beyond this is penalised
    double saturation_penalty = 1.0; // 0 disables
    std::vector<int> actor_hidden{20, 20};
    std::vector<int> critic_hidden{100, 75};

    void validate() const
    {
        if (episodes < 0)
            throw ValidationError("episodes", "must be >= 0");
        if (batch_size < 1)
            throw ValidationError("batch_size", "must be >= 1");
        if (!(batch_size <= warmup && warmup <= buffer_capacity))
            throw ValidationError("warmup", "need batch_size <= warmup <= buffer_capacity");
        if (!(gamma >= 0.0 && gamma <= 1.0))
            throw ValidationError("gamma", "must lie in [0,1]");
        if (!(tau >= 0.0 && tau <= 1.0))
            throw ValidationError("tau", "must lie in [0,1]");
        if (!(lr_actor >= 0.0) || !(lr_critic >= 0.0))
            throw ValidationError("lr_actor", "learning rates must be >= 0");
        if (!(ou_theta >= 0.0) || !(ou_sigma >= 0.0))
            throw ValidationError("ou_sigma", "noise parameters must be >= 0");
        if (noise_anneal_episodes < 0)
            throw ValidationError("noise_anneal_episodes", "must be >= 0");
        if (eval_every < 0)
            throw ValidationError("eval_every", "must be >= 0");
        if (!(saturation_limit >= 0.0) || !(saturation_penalty >= 0.0))
            throw ValidationError("saturation_penalty", "limit and weight must be >= 0");
        if (actor_hidden.empty() || critic_hidden.empty())
            throw ValidationError("actor_hidden", "need at least one hidden layer");
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Actor, critic, their targets and optimiser states.
class Agent
{
public:
    Agent() = default;

    Agent(int obs_dim, const TrainConfig& cfg)
        : gamma(cfg.gamma), tau(cfg.tau), lr_actor(cfg.lr_actor), lr_critic(cfg.lr_critic),
          saturation_limit(cfg.saturation_limit), saturation_penalty(cfg.saturation_penalty)
    {
        std::vector<int> a_sizes{obs_dim};
        a_sizes.insert(a_sizes.end(), cfg.actor_hidden.begin(), cfg.actor_hidden.end());
        a_sizes.push_back(1);
        std::vector<int> c_sizes{obs_dim + 1};
        c_sizes.insert(c_sizes.end(), cfg.critic_hidden.begin(), cfg.critic_hidden.end());
        c_sizes.push_back(1);
        actor = nn::mlp_init(a_sizes, nn::OutputActivation::tanh, derive_seed(cfg.seed, 0));
        critic = nn::mlp_init(c_sizes, nn::OutputActivation::identity, derive_seed(cfg.seed, 1));
        actor_target = actor;
        critic_target = critic;
        actor_opt = nn::AdamState(actor.parameter_count());
        critic_opt = nn::AdamState(critic.parameter_count());
        noise = OuNoise(cfg.ou_theta, cfg.ou_sigma, 1.0, derive_seed(cfg.seed, 2));
        sample_rng.seed(derive_seed(cfg.seed, 3));
    }

    int observation_size() const { return actor.input_size(); }

    nn::Mlp actor, critic, actor_target, critic_target;
    nn::AdamState actor_opt, critic_opt;
    OuNoise noise;
    std::mt19937_64 sample_rng;
    double gamma = 0.99;
    double tau = 1e-3;
    double lr_actor = 1e-4;
    double lr_critic = 1e-3;
    double saturation_limit = 2.0;
    double saturation_penalty = 1.0;
    bool diverged = false;
};

/// pi(s) plus, when exploring, the next noise sample; clamped to [-1,1].
inline double select_action(Agent& agent, const Observation& obs, bool explore)
{
    if (obs.size() != agent.actor.input_size())
        throw ValidationError("observation", "length does not match actor input");
    double a = agent.actor.forward(obs.values)[0];
    if (explore)
        a += agent.noise.sample();
    return std::clamp(a, -1.0, 1.0);
}

inline Matrix critic_input(const Matrix& states, const Matrix& actions)
{
    Matrix x(states.rows() + 1, states.cols());
    x.topRows(states.rows()) = states;
    x.bottomRows(1) = actions;
    return x;
}

/// Bellman targets r + gamma (1 - terminal) Q'(s', pi'(s')).
inline Vector critic_targets(const Agent& agent, const Batch& batch)
{
    const Matrix next_actions = agent.actor_target.forward(batch.next_states);
    const Matrix q_next = agent.critic_target.forward(critic_input(batch.next_states, next_actions));
    Vector y(batch.size());
    for (Eigen::Index j = 0; j < batch.size(); ++j) {
        const double bootstrap = batch.terminal[j] > 0.5 ? 0.0 : agent.gamma * q_next(0, j);
        y[j] = batch.rewards[j] + bootstrap;
    }
    return y;
}

/// One descent step on (1/N) sum (y_i - Q(s_i, a_i))^2 with targets frozen
/// before the step. Returns the pre-step loss.
inline double critic_update(Agent& agent, const Batch& batch)
{
    if (batch.size() < 1)
        throw std::invalid_argument("critic_update: empty batch");
    const Vector y = critic_targets(agent, batch);
    const auto cache = agent.critic.forward_cached(critic_input(batch.states, batch.actions));
    const Vector diff = cache.output.row(0).transpose() - y;
    const double n = static_cast<double>(batch.size());
    const double loss = diff.squaredNorm() / n;
    if (!std::isfinite(loss)) {
        agent.diverged = true;
        return loss;
    }
    const Matrix upstream = (2.0 / n) * diff.transpose();
    const auto grads = agent.critic.backward(cache, upstream);
    if (!nn::adam_step(agent.critic, grads.params, agent.critic_opt, agent.lr_critic))
        agent.diverged = true;
    return loss;
}

/// Sampled deterministic policy gradient for any critic exposed as
/// `critic(states, actions) -> {Q (1 x N), dQ/da (1 x N)}`.
struct PolicyGradient
{
    nn::ParameterVector grad; // d objective / d actor parameters
    double objective = 0.0;   // (1/N) sum Q(s_i, pi(s_i))
};

template <class CriticFn>
PolicyGradient sampled_policy_gradient(const nn::Mlp& actor, const Matrix& states, CriticFn&& critic)
{
    const auto cache = actor.forward_cached(states);
    const auto [q, dq_da] = critic(states, cache.output);
    const double n = static_cast<double>(states.cols());
    PolicyGradient pg;
    pg.objective = q.sum() / n;
    pg.grad = actor.backward(cache, dq_da / n).params;
    return pg;
}

/// Q and its action gradient from an MLP critic.
inline std::pair<Matrix, Matrix> critic_value_and_action_gradient(const nn::Mlp& critic, const Matrix& states,
                                                                  const Matrix& actions)
{
    const auto cache = critic.forward_cached(critic_input(states, actions));
    const Matrix ones = Matrix::Ones(1, states.cols());
    const auto g = critic.backward(cache, ones);
    return {cache.output, g.inputs.bottomRows(1)};
}

/// Ascends the policy objective by handing the negated gradient to the
/// descent optimiser.
template <class CriticFn>
double policy_step(nn::Mlp& actor, nn::AdamState& opt, double lr, const Matrix& states, CriticFn&& critic,
                   bool* diverged = nullptr)
{
    const auto pg = sampled_policy_gradient(actor, states, std::forward<CriticFn>(critic));
    const bool ok = std::isfinite(pg.objective) && nn::adam_step(actor, -pg.grad, opt, lr);
    if (!ok && diverged)
        *diverged = true;
    return pg.objective;
}

/// Gradient of (weight/N) sum max(0, |z| - limit)^2 over the actor's output
/// pre-activations z. Zero while the head stays inside the limit.
inline nn::ParameterVector saturation_penalty_gradient(const nn::Mlp& actor, const Matrix& states, double limit,
                                                       double weight)
{
    if (weight == 0.0)
        return nn::ParameterVector::Zero(actor.parameter_count());
    const auto cache = actor.forward_cached(states);
    const Matrix& z = cache.pre.back();
    const Matrix excess = (z.array().abs() - limit).max(0.0).matrix();
    const Matrix dz = (2.0 * weight / static_cast<double>(states.cols())) * excess.cwiseProduct(
        z.unaryExpr([](double v) { return v < 0.0 ? -1.0 : 1.0; }));
    return actor.backward_pre(cache, dz).params;
}

/// One actor step using the current critic; the critic is left untouched.
inline double actor_update(Agent& agent, const Batch& batch)
{
    if (batch.size() < 1)
        throw std::invalid_argument("actor_update: empty batch");
    const nn::Mlp& critic = agent.critic;
    const auto pg = sampled_policy_gradient(agent.actor, batch.states, [&critic](const Matrix& s, const Matrix& a) {
        return critic_value_and_action_gradient(critic, s, a);
    });
    const nn::ParameterVector grad =
        -pg.grad + saturation_penalty_gradient(agent.actor, batch.states, agent.saturation_limit,
                                               agent.saturation_penalty);
    if (!std::isfinite(pg.objective) || !nn::adam_step(agent.actor, grad, agent.actor_opt, agent.lr_actor))
        agent.diverged = true;
    return pg.objective;
}

inline void sync_targets(Agent& agent)
{
    nn::soft_update(agent.critic_target, agent.critic, agent.tau);
    nn::soft_update(agent.actor_target, agent.actor, agent.tau);
}

struct EpisodeRecord
{
    int episode = 0;
    double cum_reward = 0.0;
    double discounted_return = 0.0;
    double v_score = 0.0;
    double t_score = 0.0;
    double charge_time_min = 0.0;
    int steps = 0;
    bool evaluated = false;
    bool reached = false;
    double wall_clock_s = 0.0; // excluded from equality

    friend bool operator==(const EpisodeRecord& a, const EpisodeRecord& b)
    {
        return a.episode == b.episode && a.cum_reward == b.cum_reward && a.discounted_return == b.discounted_return
               && a.v_score == b.v_score && a.t_score == b.t_score && a.charge_time_min == b.charge_time_min
               && a.steps == b.steps && a.evaluated == b.evaluated && a.reached == b.reached;
    }
};

struct RunLog
{
    std::vector<EpisodeRecord> records;
    bool diverged = false;
    std::uint64_t seed = 0;

    std::vector<EpisodeRecord> training() const { return filter(false); }
    std::vector<EpisodeRecord> evaluations() const { return filter(true); }

    friend bool operator==(const RunLog& a, const RunLog& b)
    {
        return a.records == b.records && a.diverged == b.diverged && a.seed == b.seed;
    }

private:
    std::vector<EpisodeRecord> filter(bool evaluated) const
    {
        std::vector<EpisodeRecord> out;
        for (const auto& r : records)
            if (r.evaluated == evaluated)
                out.push_back(r);
        return out;
    }
};

inline void write_runlog_csv(std::ostream& os, const RunLog& log)
{
    os << "episode,cum_reward,v_score,t_score,charge_time_min,steps,evaluated_flag\n";
    for (const auto& r : log.records)
        os << r.episode << ',' << format_number(r.cum_reward) << ',' << format_number(r.v_score) << ','
           << format_number(r.t_score) << ',' << format_number(r.charge_time_min) << ',' << r.steps << ','
           << (r.evaluated ? 1 : 0) << '\n';
}

/// sum_k gamma^k r_k from the first reward onward.
inline double discounted_return(std::span<const double> rewards, double gamma)
{
    double g = 0.0;
    for (std::size_t k = rewards.size(); k-- > 0;)
        g = rewards[k] + gamma * g;
    return g;
}

struct EvalResult
{
    std::vector<TrajectoryPoint> trajectory;
    std::vector<double> actions;
    double cum_reward = 0.0;
    ViolationScores scores;
    double charge_time_min = 0.0;
    int steps = 0;
    bool reached = false;
};

/// Runs one episode with an arbitrary policy `obs -> action`.
template <class Policy>
EvalResult rollout(ChargingEnv& env, Policy&& policy, std::uint64_t seed = 0)
{
    EvalResult out;
    Observation obs = env.reset(seed);
    while (!env.done()) {
        const double a = policy(obs);
        out.actions.push_back(a);
        auto r = env.step(a);
        out.cum_reward += r.reward.total;
        obs = std::move(r.obs);
    }
    out.trajectory = env.trajectory();
    out.scores = violation_scores(out.trajectory, env.config());
    out.steps = env.steps();
    out.charge_time_min = env.time_s() / 60.0;
    out.reached = env.termination() == Termination::reached_soc;
    return out;
}

/// Greedy rollout without exploration noise; no learning side effects.
inline EvalResult evaluate(const Agent& agent, ChargingEnv& env, std::uint64_t seed = 0)
{
    return rollout(env, [&agent](const Observation& o) {
        return std::clamp(agent.actor.forward(o.values)[0], -1.0, 1.0);
    }, seed);
}

using EnvFactory = std::function<ChargingEnv()>;

template <class Rng>
double warmup_action(Rng& rng)
{
    return std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
}

struct TrainResult
{
    Agent agent;
    RunLog log;
    ReplayBuffer buffer{1};
};

/// Optional per-episode hook, e.g. for progress output.
using EpisodeCallback = std::function<void(const EpisodeRecord&)>;

/// Continues training `agent` for cfg.episodes episodes. Replay, noise and
/// sampling streams are derived from cfg.seed, so equal inputs give
/// bitwise-equal logs.
inline RunLog train_agent(Agent& agent, ReplayBuffer& buffer, const EnvFactory& make_env, const TrainConfig& cfg,
                          const EpisodeCallback& on_episode = {})
{
    cfg.validate();
    RunLog log;
    log.seed = cfg.seed;
    if (cfg.episodes == 0)
        return log;

    ChargingEnv env = make_env();
    ChargingEnv eval_env = make_env();
    if (env.observation_size() != agent.observation_size())
        throw ValidationError("observation_mode", "environment observation size does not match agent input");
    const double gamma = cfg.gamma;

    for (int ep = 0; ep < cfg.episodes; ++ep) {
        const auto t0 = std::chrono::steady_clock::now();
        const double anneal =
            cfg.noise_anneal_episodes > 0
                ? std::max(0.0, 1.0 - static_cast<double>(ep) / cfg.noise_anneal_episodes)
                : 1.0;
        agent.noise.set_sigma(cfg.ou_sigma * anneal);
        agent.noise.reset();

        Observation obs = env.reset(derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(ep)));
        std::vector<double> rewards;
        while (!env.done()) {
            const bool warming = buffer.size() < static_cast<std::size_t>(cfg.warmup);
            const double a = warming && cfg.random_warmup ? warmup_action(agent.sample_rng)
                                                          : select_action(agent, obs, true);
            StepResult r = env.step(a);
            rewards.push_back(r.reward.total);
            Transition t;
            t.obs = obs;
            t.action = a;
            t.reward = r.reward.total;
            t.next_obs = r.obs;
            t.done = r.done;
            t.terminal = r.info.termination == Termination::reached_soc;
            t.info = r.info;
            buffer.push(std::move(t));
            obs = std::move(r.obs);

            if (buffer.size() >= static_cast<std::size_t>(cfg.warmup)) {
                const Batch batch = buffer.sample(static_cast<std::size_t>(cfg.batch_size), agent.sample_rng);
                critic_update(agent, batch);
                actor_update(agent, batch);
                sync_targets(agent);
                if (agent.diverged)
                    break;
            }
        }

        EpisodeRecord rec;
        rec.episode = ep;
        for (double r : rewards)
            rec.cum_reward += r;
        rec.discounted_return = discounted_return(rewards, gamma);
        const auto scores = violation_scores(env.trajectory(), env.config());
        rec.v_score = scores.v_score;
        rec.t_score = scores.t_score;
        rec.steps = env.steps();
        rec.charge_time_min = env.time_s() / 60.0;
        rec.reached = env.termination() == Termination::reached_soc;
        rec.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.records.push_back(rec);
        if (on_episode)
            on_episode(rec);

        if (agent.diverged) {
            log.diverged = true;
            break;
        }

        if (cfg.eval_every > 0 && (ep + 1) % cfg.eval_every == 0) {
            const auto t1 = std::chrono::steady_clock::now();
            const EvalResult ev = evaluate(agent, eval_env);
            EpisodeRecord e;
            e.episode = ep;
            e.cum_reward = ev.cum_reward;
            std::vector<double> er;
            for (std::size_t k = 1; k < ev.trajectory.size(); ++k)
                er.push_back(ev.trajectory[k].reward);
            e.discounted_return = discounted_return(er, gamma);
            e.v_score = ev.scores.v_score;
            e.t_score = ev.scores.t_score;
            e.charge_time_min = ev.charge_time_min;
            e.steps = ev.steps;
            e.evaluated = true;
            e.reached = ev.reached;
            e.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
            log.records.push_back(e);
            if (on_episode)
                on_episode(e);
        }
    }
    return log;
}

/// Same, with a fresh buffer of cfg.buffer_capacity.
inline RunLog train_agent(Agent& agent, const EnvFactory& make_env, const TrainConfig& cfg,
                          const EpisodeCallback& on_episode = {})
{
    cfg.validate();
    ReplayBuffer buffer(static_cast<std::size_t>(cfg.buffer_capacity));
    return train_agent(agent, buffer, make_env, cfg, on_episode);
}

/// Fresh agent sized for the factory's observation mode, then trained.
inline TrainResult train(const EnvFactory& make_env, const TrainConfig& cfg, const EpisodeCallback& on_episode = {})
{
    cfg.validate();
    const int obs_dim = make_env().observation_size();
    TrainResult out{Agent(obs_dim, cfg), {}, ReplayBuffer(static_cast<std::size_t>(cfg.buffer_capacity))};
    out.log = train_agent(out.agent, out.buffer, make_env, cfg, on_episode);
    return out;
}

} // namespace fastcharge::ddpg
