#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fastcharge/config.hpp"
#include "fastcharge/ddpg.hpp"
#include "fastcharge/errors.hpp"

namespace fastcharge {

/// Parses a RunLog CSV as written by ddpg::write_runlog_csv.
inline ddpg::RunLog read_runlog_csv(std::istream& in, const std::string& source = "runlog")
{
    std::string line;
    if (!std::getline(in, line) || trim(line) != "episode,cum_reward,v_score,t_score,charge_time_min,steps,evaluated_flag")
        throw IoError(source + ": missing or unexpected header");
    ddpg::RunLog log;
    int number = 1;
    while (std::getline(in, line)) {
        ++number;
        if (trim(line).empty())
            continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        if (cells.size() != 7)
            throw IoError(source + ": line " + std::to_string(number) + " has " + std::to_string(cells.size())
                          + " columns");
        try {
            ddpg::EpisodeRecord r;
            r.episode = static_cast<int>(parse_integer("episode", cells[0]));
            r.cum_reward = parse_double("cum_reward", cells[1]);
            r.v_score = parse_double("v_score", cells[2]);
            r.t_score = parse_double("t_score", cells[3]);
            r.charge_time_min = parse_double("charge_time_min", cells[4]);
            r.steps = static_cast<int>(parse_integer("steps", cells[5]));
            r.evaluated = parse_bool("evaluated_flag", cells[6]);
            log.records.push_back(r);
        } catch (const ValidationError& e) {
            throw IoError(source + ": line " + std::to_string(number) + ": " + e.what());
        }
    }
    return log;
}

inline ddpg::RunLog read_runlog_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    return read_runlog_csv(in, path.string());
}

/// Mean with a normal-approximation 95% band, mean +- 1.96 s / sqrt(n).
/// A single sample has band width 0.
struct BandPoint
{
    int episode = 0;
    double mean = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    int n = 0;
};

inline BandPoint band(int episode, const std::vector<double>& xs)
{
    BandPoint b;
    b.episode = episode;
    b.n = static_cast<int>(xs.size());
    if (xs.empty())
        return b;
    double sum = 0.0;
    for (double x : xs)
        sum += x;
    b.mean = sum / b.n;
    double half = 0.0;
    if (b.n > 1) {
        double ss = 0.0;
        for (double x : xs)
            ss += (x - b.mean) * (x - b.mean);
        half = 1.96 * std::sqrt(ss / (b.n - 1)) / std::sqrt(static_cast<double>(b.n));
    }
    b.lower = b.mean - half;
    b.upper = b.mean + half;
    return b;
}

enum class Panel { training_reward, eval_reward, v_score, t_score, charge_time };

inline const std::vector<std::pair<Panel, std::string>>& panels()
{
    static const std::vector<std::pair<Panel, std::string>> all{{Panel::training_reward, "training_reward"},
                                                                {Panel::eval_reward, "eval_reward"},
                                                                {Panel::v_score, "v_score"},
                                                                {Panel::t_score, "t_score"},
                                                                {Panel::charge_time, "charge_time"}};
    return all;
}

/// Per-episode band of one panel across seeds. Every log must contain the
/// same episode indices for that panel.
inline std::vector<BandPoint> aggregate(const std::vector<ddpg::RunLog>& logs, Panel panel)
{
    if (logs.empty())
        throw IoError("aggregate: no run logs");
    const bool evaluated = panel != Panel::training_reward;
    std::map<int, std::vector<double>> by_episode;
    std::vector<int> reference;
    for (std::size_t k = 0; k < logs.size(); ++k) {
        std::vector<int> episodes;
        for (const auto& r : logs[k].records) {
            if (r.evaluated != evaluated)
                continue;
            episodes.push_back(r.episode);
            double v = 0.0;
            switch (panel) {
            case Panel::training_reward:
            case Panel::eval_reward: v = r.cum_reward; break;
            case Panel::v_score: v = r.v_score; break;
            case Panel::t_score: v = r.t_score; break;
            case Panel::charge_time: v = r.charge_time_min; break;
            }
            by_episode[r.episode].push_back(v);
        }
        if (k == 0)
            reference = episodes;
        else if (episodes != reference)
            throw IoError("aggregate: run logs cover different episodes");
    }
    std::vector<BandPoint> out;
    for (const auto& [ep, xs] : by_episode)
        out.push_back(band(ep, xs));
    return out;
}

inline void write_band_csv(std::ostream& os, const std::vector<BandPoint>& pts)
{
    os << "episode,mean,lower,upper,n\n";
    for (const auto& p : pts)
        os << p.episode << ',' << format_exact(p.mean) << ',' << format_exact(p.lower) << ','
           << format_exact(p.upper) << ',' << p.n << '\n';
}

/// Two bands side by side, matched on episode; rows present in only one
/// leave the other's cells empty.
inline void write_paired_band_csv(std::ostream& os, const std::string& left_name, const std::vector<BandPoint>& left,
                                  const std::string& right_name, const std::vector<BandPoint>& right)
{
    os << "episode";
    for (const auto& name : {left_name, right_name})
        os << ',' << name << "_mean," << name << "_lower," << name << "_upper," << name << "_n";
    os << '\n';
    std::map<int, std::pair<const BandPoint*, const BandPoint*>> rows;
    for (const auto& p : left)
        rows[p.episode].first = &p;
    for (const auto& p : right)
        rows[p.episode].second = &p;
    auto cells = [&os](const BandPoint* p) {
        if (p)
            os << ',' << format_exact(p->mean) << ',' << format_exact(p->lower) << ',' << format_exact(p->upper)
               << ',' << p->n;
        else
            os << ",,,,";
    };
    for (const auto& [ep, pair] : rows) {
        os << ep;
        cells(pair.first);
        cells(pair.second);
        os << '\n';
    }
}

} // namespace fastcharge
