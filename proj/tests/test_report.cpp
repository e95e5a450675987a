#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "fastcharge/report.hpp"

using namespace fastcharge;

namespace {

ddpg::RunLog log_of(std::initializer_list<std::pair<int, double>> evals, double offset = 0.0)
{
    ddpg::RunLog log;
    for (auto [ep, r] : evals) {
        ddpg::EpisodeRecord t;
        t.episode = ep;
        t.cum_reward = r - 1.0 + offset;
        log.records.push_back(t);
        ddpg::EpisodeRecord e;
        e.episode = ep;
        e.cum_reward = r + offset;
        e.v_score = -0.01 * ep;
        e.t_score = -0.5;
        e.charge_time_min = 40.0 + offset;
        e.steps = 40;
        e.evaluated = true;
        log.records.push_back(e);
    }
    return log;
}

} // namespace

TEST(Band, HandComputedValues)
{
    const auto b = band(7, {1.0, 2.0, 3.0, 4.0});
    EXPECT_EQ(b.episode, 7);
    EXPECT_EQ(b.n, 4);
    EXPECT_DOUBLE_EQ(b.mean, 2.5);
    // sample sd = sqrt(5/3)
    const double half = 1.96 * std::sqrt(5.0 / 3.0) / 2.0;
    EXPECT_NEAR(b.lower, 2.5 - half, 1e-15);
    EXPECT_NEAR(b.upper, 2.5 + half, 1e-15);
}

TEST(Band, SingleSampleHasZeroWidth)
{
    const auto b = band(0, {-3.5});
    EXPECT_EQ(b.mean, -3.5);
    EXPECT_EQ(b.lower, -3.5);
    EXPECT_EQ(b.upper, -3.5);
}

TEST(Aggregate, SingleSeedReproducesLog)
{
    const auto pts = aggregate({log_of({{9, -4.0}, {19, -3.0}})}, Panel::eval_reward);
    ASSERT_EQ(pts.size(), 2u);
    EXPECT_EQ(pts[0].episode, 9);
    EXPECT_EQ(pts[0].mean, -4.0);
    EXPECT_EQ(pts[1].upper, -3.0);
    const auto train = aggregate({log_of({{9, -4.0}})}, Panel::training_reward);
    EXPECT_EQ(train[0].mean, -5.0);
    const auto v = aggregate({log_of({{19, -3.0}})}, Panel::v_score);
    EXPECT_NEAR(v[0].mean, -0.19, 1e-15);
}

TEST(Aggregate, AcrossSeeds)
{
    const auto pts = aggregate({log_of({{9, -4.0}}, 0.0), log_of({{9, -4.0}}, 2.0)}, Panel::charge_time);
    ASSERT_EQ(pts.size(), 1u);
    EXPECT_EQ(pts[0].n, 2);
    EXPECT_EQ(pts[0].mean, 41.0);
    EXPECT_GT(pts[0].upper, 41.0);
}

TEST(Aggregate, MismatchedEpisodesRejected)
{
    EXPECT_THROW(aggregate({log_of({{9, -4.0}}), log_of({{19, -4.0}})}, Panel::eval_reward), IoError);
    EXPECT_THROW(aggregate({}, Panel::eval_reward), IoError);
}

TEST(RunLogCsv, RoundTripKeepsWrittenColumns)
{
    auto log = log_of({{9, -4.125}, {19, -3.0}});
    std::ostringstream os;
    ddpg::write_runlog_csv(os, log);
    std::istringstream in(os.str());
    const auto back = read_runlog_csv(in);
    ASSERT_EQ(back.records.size(), log.records.size());
    for (std::size_t k = 0; k < log.records.size(); ++k) {
        EXPECT_EQ(back.records[k].episode, log.records[k].episode);
        EXPECT_EQ(back.records[k].cum_reward, log.records[k].cum_reward);
        EXPECT_EQ(back.records[k].v_score, log.records[k].v_score);
        EXPECT_EQ(back.records[k].evaluated, log.records[k].evaluated);
    }
}

TEST(RunLogCsv, MalformedInputIsIoError)
{
    std::istringstream no_header("1,2,3\n");
    EXPECT_THROW(read_runlog_csv(no_header), IoError);
    std::istringstream short_row("episode,cum_reward,v_score,t_score,charge_time_min,steps,evaluated_flag\n1,2\n");
    EXPECT_THROW(read_runlog_csv(short_row), IoError);
    std::istringstream bad_cell("episode,cum_reward,v_score,t_score,charge_time_min,steps,evaluated_flag\n1,x,0,0,0,0,0\n");
    EXPECT_THROW(read_runlog_csv(bad_cell), IoError);
}

TEST(BandCsv, Columns)
{
    std::ostringstream os;
    write_band_csv(os, {band(9, {1.0})});
    EXPECT_EQ(os.str(), "episode,mean,lower,upper,n\n9,1,1,1,1\n");
    std::ostringstream paired;
    write_paired_band_csv(paired, "full", {band(9, {1.0})}, "simplified", {band(19, {2.0})});
    EXPECT_EQ(paired.str(),
              "episode,full_mean,full_lower,full_upper,full_n,simplified_mean,simplified_lower,simplified_upper,"
              "simplified_n\n9,1,1,1,1,,,,\n19,,,,,2,2,2,1\n");
}
