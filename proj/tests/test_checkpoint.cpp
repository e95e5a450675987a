#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "fastcharge/checkpoint.hpp"

using namespace fastcharge;
namespace fs = std::filesystem;

namespace {

ddpg::TrainConfig tiny(int episodes)
{
    ddpg::TrainConfig c;
    c.episodes = episodes;
    c.seed = 4;
    c.warmup = 100;
    c.batch_size = 16;
    c.buffer_capacity = 400;
    c.eval_every = 0;
    return c;
}

ddpg::EnvFactory env_factory()
{
    return [] { return ChargingEnv(CellParameters{}, Discretization{}, EnvConfig{}); };
}

fs::path scratch()
{
    const auto dir = fs::temp_directory_path() / "fastcharge_checkpoint";
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST(Checkpoint, RoundTripWithBufferIsExact)
{
    auto res = ddpg::train(env_factory(), tiny(8));
    ASSERT_GT(res.buffer.size(), 100u);
    const Checkpoint original{res.agent, ObservationMode::simplified, res.buffer};
    const auto path = scratch() / "with_buffer.json";
    save_checkpoint(path, original);
    const Checkpoint loaded = load_checkpoint(path);

    EXPECT_EQ(loaded.agent.actor, original.agent.actor);
    EXPECT_EQ(loaded.agent.critic, original.agent.critic);
    EXPECT_EQ(loaded.agent.actor_target, original.agent.actor_target);
    EXPECT_EQ(loaded.agent.critic_target, original.agent.critic_target);
    EXPECT_EQ(loaded.agent.actor_opt, original.agent.actor_opt);
    EXPECT_EQ(loaded.agent.critic_opt, original.agent.critic_opt);
    EXPECT_EQ(loaded.agent.sample_rng, original.agent.sample_rng);
    EXPECT_EQ(loaded.agent.noise.rng(), original.agent.noise.rng());
    ASSERT_TRUE(loaded.buffer.has_value());
    EXPECT_EQ(loaded.buffer->size(), original.buffer->size());
    EXPECT_EQ(loaded.buffer->next_slot(), original.buffer->next_slot());
    EXPECT_EQ(loaded.buffer->inserted(), original.buffer->inserted());
    EXPECT_EQ(to_json(loaded).dump(), to_json(original).dump());
}

TEST(Checkpoint, ResumedTrainingMatchesUninterrupted)
{
    auto res = ddpg::train(env_factory(), tiny(6));
    const auto path = scratch() / "resume.json";
    save_checkpoint(path, Checkpoint{res.agent, ObservationMode::simplified, res.buffer});
    Checkpoint loaded = load_checkpoint(path);

    auto more = tiny(3);
    more.seed = 9;
    const auto a = ddpg::train_agent(res.agent, res.buffer, env_factory(), more);
    const auto b = ddpg::train_agent(loaded.agent, *loaded.buffer, env_factory(), more);
    EXPECT_EQ(a, b);
    EXPECT_EQ(res.agent.actor, loaded.agent.actor);
    EXPECT_EQ(res.agent.critic, loaded.agent.critic);
}

TEST(Checkpoint, WithoutBuffer)
{
    const ddpg::Agent agent(61, ddpg::TrainConfig{});
    const auto path = scratch() / "no_buffer.json";
    save_checkpoint(path, Checkpoint{agent, ObservationMode::full, std::nullopt});
    const auto loaded = load_checkpoint(path);
    EXPECT_FALSE(loaded.buffer.has_value());
    EXPECT_EQ(loaded.observation_mode, ObservationMode::full);
    EXPECT_EQ(loaded.agent.actor, agent.actor);
    EXPECT_EQ(loaded.agent.observation_size(), 61);
}

TEST(Checkpoint, RejectsForeignOrCorruptFiles)
{
    const auto dir = scratch();
    std::ofstream(dir / "garbage.json") << "{not json";
    EXPECT_THROW(load_checkpoint(dir / "garbage.json"), IoError);
    std::ofstream(dir / "other.json") << R"({"format": "something-else", "version": 1})";
    EXPECT_THROW(load_checkpoint(dir / "other.json"), IoError);
    EXPECT_THROW(load_checkpoint(dir / "absent.json"), IoError);

    const ddpg::Agent agent(2, ddpg::TrainConfig{});
    auto j = to_json(Checkpoint{agent, ObservationMode::simplified, std::nullopt});
    j["version"] = 99;
    std::ofstream(dir / "future.json") << j.dump();
    EXPECT_THROW(load_checkpoint(dir / "future.json"), IoError);
}
