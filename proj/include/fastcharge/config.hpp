#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "fastcharge/baselines.hpp"
#include "fastcharge/cell_parameters.hpp"
#include "fastcharge/ddpg.hpp"
#include "fastcharge/env.hpp"
#include "fastcharge/errors.hpp"
#include "fastcharge/ocp_table.hpp"

namespace fastcharge {

/// Directories searched, in order, for relative parameter-file paths.
inline constexpr const char* param_path_variable = "FASTCHARGE_PARAM_PATH";

/// Shortest text that parses back to the same double.
inline std::string format_exact(double v)
{
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& text)
{
    const std::string t = trim(text);
    double v = 0.0;
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (r.ec != std::errc() || r.ptr != t.data() + t.size())
        throw ValidationError(key, "expected a number, got '" + text + "'");
    if (!std::isfinite(v))
        throw ValidationError(key, "must be finite, got '" + text + "'");
    return v;
}

inline long long parse_integer(const std::string& key, const std::string& text)
{
    const std::string t = trim(text);
    long long v = 0;
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (r.ec != std::errc() || r.ptr != t.data() + t.size())
        throw ValidationError(key, "expected an integer, got '" + text + "'");
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& text)
{
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes")
        return true;
    if (t == "false" || t == "0" || t == "no")
        return false;
    throw ValidationError(key, "expected true or false, got '" + text + "'");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& text)
{
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(static_cast<int>(parse_integer(key, item)));
    return out;
}

inline std::string join(const std::vector<int>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

/// Flat "section.key" -> value map. Later assignments win.
using KeyValues = std::map<std::string, std::string>;

/// Parses `key = value` lines grouped under optional `[section]` headers.
/// `#` starts a comment.
inline KeyValues parse_key_values(std::istream& in, const std::string& source = "config")
{
    KeyValues kv;
    std::string line, section;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ValidationError(source, "line " + std::to_string(number) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError(source, "line " + std::to_string(number) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty())
            throw ValidationError(source, "line " + std::to_string(number) + ": empty key");
        kv[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
    }
    return kv;
}

inline KeyValues read_key_values(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    return parse_key_values(in, path.string());
}

/// Reads two whitespace- or comma-separated columns (stoichiometry,
/// potential). Blank lines and `#` comments are skipped.
inline OcpTable read_ocp_table(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::vector<double> x, u;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        for (char& c : line)
            if (c == ',')
                c = ' ';
        std::istringstream ss(line);
        std::string a, b, extra;
        if (!(ss >> a))
            continue;
        if (!(ss >> b) || (ss >> extra))
            throw ValidationError(path.string(), "line " + std::to_string(number) + ": expected two columns");
        x.push_back(parse_double(path.string(), a));
        u.push_back(parse_double(path.string(), b));
    }
    return OcpTable(std::move(x), std::move(u), path.string());
}

inline void write_ocp_table(std::ostream& os, const OcpTable& t)
{
    os << "# stoichiometry potential_V\n";
    for (std::size_t i = 0; i < t.stoichiometry().size(); ++i)
        os << format_exact(t.stoichiometry()[i]) << ' ' << format_exact(t.potential()[i]) << '\n';
}

/// A named setter/getter pair over one config field.
struct Field
{
    std::string name;
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
};

namespace detail {

inline Field real(const std::string& name, double& ref)
{
    return {name, [&ref, name](const std::string& v) { ref = parse_double(name, v); },
            [&ref] { return format_exact(ref); }};
}

inline Field integer(const std::string& name, int& ref)
{
    return {name, [&ref, name](const std::string& v) { ref = static_cast<int>(parse_integer(name, v)); },
            [&ref] { return std::to_string(ref); }};
}

inline Field seed(const std::string& name, std::uint64_t& ref)
{
    return {name,
            [&ref, name](const std::string& v) {
                const long long s = parse_integer(name, v);
                if (s < 0)
                    throw ValidationError(name, "must be >= 0");
                ref = static_cast<std::uint64_t>(s);
            },
            [&ref] { return std::to_string(ref); }};
}

inline Field boolean(const std::string& name, bool& ref)
{
    return {name, [&ref, name](const std::string& v) { ref = parse_bool(name, v); },
            [&ref] { return std::string(ref ? "true" : "false"); }};
}

inline Field int_list(const std::string& name, std::vector<int>& ref)
{
    return {name, [&ref, name](const std::string& v) { ref = parse_int_list(name, v); },
            [&ref] { return join(ref); }};
}

} // namespace detail

inline std::vector<Field> fields(CellParameters& p)
{
    using detail::real;
    return {real("d_s_anode", p.d_s_anode),         real("d_s_cathode", p.d_s_cathode),
            real("r_s_anode", p.r_s_anode),         real("r_s_cathode", p.r_s_cathode),
            real("c_s_max_anode", p.c_s_max_anode), real("c_s_max_cathode", p.c_s_max_cathode),
            real("eps_e_anode", p.eps_e_anode),     real("eps_e_sep", p.eps_e_sep),
            real("eps_e_cathode", p.eps_e_cathode), real("d_e_ref", p.d_e_ref),
            real("bruggeman", p.bruggeman),         real("t_plus", p.t_plus),
            real("c_e_init", p.c_e_init),           real("kappa_eff", p.kappa_eff),
            real("activity", p.activity),           real("l_anode", p.l_anode),
            real("l_sep", p.l_sep),                 real("l_cathode", p.l_cathode),
            real("area", p.area),                   real("a_anode", p.a_anode),
            real("a_cathode", p.a_cathode),         real("r_f_anode", p.r_f_anode),
            real("r_f_cathode", p.r_f_cathode),     real("alpha", p.alpha),
            real("k_anode", p.k_anode),             real("k_cathode", p.k_cathode),
            real("m_cell", p.m_cell),               real("c_p_th", p.c_p_th),
            real("r_th", p.r_th),                   real("t_amb", p.t_amb),
            real("heat_scale", p.heat_scale),       real("stoich_anode_0", p.stoich_anode_0),
            real("stoich_anode_100", p.stoich_anode_100), real("stoich_cathode_0", p.stoich_cathode_0),
            real("stoich_cathode_100", p.stoich_cathode_100), real("faraday", p.faraday),
            real("gas_constant", p.gas_constant)};
}

inline std::vector<Field> fields(Discretization& d)
{
    using detail::integer;
    return {integer("n_r_anode", d.n_r_anode), integer("n_r_cathode", d.n_r_cathode),
            integer("n_x_anode", d.n_x_anode), integer("n_x_sep", d.n_x_sep),
            integer("n_x_cathode", d.n_x_cathode), detail::real("dt_sim", d.dt_sim)};
}

inline std::vector<Field> fields(EnvConfig& c)
{
    using detail::real;
    return {real("soc_init", c.soc_init),
            real("soc_ref", c.soc_ref),
            real("v_init", c.v_init),
            real("t_init", c.t_init),
            real("v_max", c.v_max),
            real("t_max", c.t_max),
            real("i_max", c.i_max),
            real("dt_ctrl", c.dt_ctrl),
            detail::integer("max_steps", c.max_steps),
            {"observation_mode",
             [&c](const std::string& v) { c.observation_mode = observation_mode_from_string(v); },
             [&c] { return to_string(c.observation_mode); }},
            real("r_fast", c.r_fast),
            real("k_volt", c.k_volt),
            real("k_temp", c.k_temp),
            real("soc_jitter", c.soc_jitter)};
}

inline std::vector<Field> fields(ddpg::TrainConfig& t)
{
    using detail::integer;
    using detail::real;
    return {integer("episodes", t.episodes),
            integer("batch_size", t.batch_size),
            integer("buffer_capacity", t.buffer_capacity),
            integer("warmup", t.warmup),
            detail::boolean("random_warmup", t.random_warmup),
            real("gamma", t.gamma),
            real("lr_actor", t.lr_actor),
            real("lr_critic", t.lr_critic),
            real("tau", t.tau),
            real("ou_theta", t.ou_theta),
            real("ou_sigma", t.ou_sigma),
            integer("noise_anneal_episodes", t.noise_anneal_episodes),
            detail::seed("seed", t.seed),
            integer("eval_every", t.eval_every),
            real("saturation_limit", t.saturation_limit),
            real("saturation_penalty", t.saturation_penalty),
            detail::int_list("actor_hidden", t.actor_hidden),
            detail::int_list("critic_hidden", t.critic_hidden)};
}

inline std::vector<Field> fields(AgingScenario& a)
{
    return {detail::real("film_resistance_multiplier", a.film_resistance_multiplier),
            detail::real("heat_generation_multiplier", a.heat_generation_multiplier)};
}

inline std::vector<Field> fields(CcCvConfig& c)
{
    using detail::real;
    return {real("cc_rate", c.cc_rate), real("v_hold", c.v_hold), real("t_hold", c.t_hold),
            real("k_v", c.k_v),         real("k_t", c.k_t),       real("cutoff_soc", c.cutoff_soc)};
}

/// Applies every `section.<name>` entry of `kv` to the matching field and
/// returns the keys it consumed.
inline std::vector<std::string> apply_section(std::vector<Field> fs, const KeyValues& kv, const std::string& section)
{
    std::vector<std::string> used;
    const std::string prefix = section.empty() ? "" : section + ".";
    for (auto& f : fs) {
        const auto it = kv.find(prefix + f.name);
        if (it == kv.end())
            continue;
        f.set(it->second);
        used.push_back(it->first);
    }
    return used;
}

inline void write_section(std::ostream& os, const std::string& section, std::vector<Field> fs)
{
    if (!section.empty())
        os << '[' << section << "]\n";
    for (const auto& f : fs)
        os << f.name << " = " << f.get() << '\n';
}

/// Resolves a parameter-file reference: as given (relative to `base`),
/// then under each directory listed in FASTCHARGE_PARAM_PATH.
inline std::filesystem::path resolve_param_path(const std::string& name, const std::filesystem::path& base = {})
{
    namespace fs = std::filesystem;
    const fs::path p(name);
    if (p.is_absolute())
        return p;
    if (fs::exists(base / p))
        return base / p;
    if (const char* env = std::getenv(param_path_variable)) {
        std::stringstream ss(env);
        std::string dir;
        while (std::getline(ss, dir, ':'))
            if (!dir.empty() && fs::exists(fs::path(dir) / p))
                return fs::path(dir) / p;
    }
    throw IoError("parameter file '" + name + "' not found (searched " + (base / p).string() + " and $"
                  + param_path_variable + ")");
}

/// Loads a cell parameter file: built-in defaults overridden by its keys.
/// `ocp_anode` / `ocp_cathode` name table files relative to the file.
inline CellParameters read_cell_parameters(const std::filesystem::path& path)
{
    const KeyValues kv = read_key_values(path);
    CellParameters p;
    std::size_t used = apply_section(fields(p), kv, "").size();
    const auto dir = path.parent_path();
    for (auto [key, table] : {std::pair{"ocp_anode", &p.ocp_anode}, std::pair{"ocp_cathode", &p.ocp_cathode}}) {
        const auto it = kv.find(key);
        if (it == kv.end())
            continue;
        *table = read_ocp_table(resolve_param_path(it->second, dir));
        ++used;
    }
    if (used != kv.size()) {
        for (const auto& [k, v] : kv) {
            bool known = k == "ocp_anode" || k == "ocp_cathode";
            for (auto& f : fields(p))
                known = known || f.name == k;
            if (!known)
                throw ValidationError(k, "unknown cell parameter in " + path.string());
        }
    }
    p.validate();
    return p;
}

/// Everything a command needs, resolved from defaults, an optional config
/// file and command-line overrides.
struct RunConfig
{
    std::string params_file; // empty: built-in cell
    CellParameters params;
    Discretization disc;
    EnvConfig env;
    ddpg::TrainConfig train;
    AgingScenario aging;
    CcCvConfig cccv;
    std::vector<std::uint64_t> seeds{1};

    void validate() const
    {
        params.validate();
        disc.validate();
        env.validate();
        train.validate();
        aging.validate();
        cccv.validate(env);
        if (seeds.empty())
            throw ValidationError("seeds", "need at least one seed");
    }
};

/// "5" means seeds 1..5; "3,7,11" lists them.
inline std::vector<std::uint64_t> parse_seeds(const std::string& text)
{
    std::vector<std::uint64_t> seeds;
    if (text.find(',') == std::string::npos) {
        const long long n = parse_integer("seeds", text);
        if (n < 1)
            throw ValidationError("seeds", "count must be >= 1");
        for (long long s = 1; s <= n; ++s)
            seeds.push_back(static_cast<std::uint64_t>(s));
        return seeds;
    }
    for (int s : parse_int_list("seeds", text)) {
        if (s < 0)
            throw ValidationError("seeds", "must be >= 0");
        seeds.push_back(static_cast<std::uint64_t>(s));
    }
    return seeds;
}

inline std::string seeds_text(const std::vector<std::uint64_t>& seeds)
{
    std::string s;
    for (std::size_t i = 0; i < seeds.size(); ++i)
        s += (i ? "," : "") + std::to_string(seeds[i]);
    return s;
}

/// Layers `kv` onto `cfg`. Unknown keys are rejected. `base` anchors a
/// relative params_file.
inline void apply(RunConfig& cfg, const KeyValues& kv, const std::filesystem::path& base = {})
{
    std::size_t used = 0;
    if (auto it = kv.find("experiment.params_file"); it != kv.end()) {
        cfg.params_file = it->second.empty() ? "" : resolve_param_path(it->second, base).string();
        cfg.params = cfg.params_file.empty() ? CellParameters{} : read_cell_parameters(cfg.params_file);
        ++used;
    }
    if (auto it = kv.find("experiment.seeds"); it != kv.end()) {
        cfg.seeds = parse_seeds(it->second);
        ++used;
    }
    used += apply_section(fields(cfg.params), kv, "cell").size();
    used += apply_section(fields(cfg.disc), kv, "discretization").size();
    used += apply_section(fields(cfg.env), kv, "env").size();
    used += apply_section(fields(cfg.train), kv, "train").size();
    used += apply_section(fields(cfg.aging), kv, "aging").size();
    used += apply_section(fields(cfg.cccv), kv, "cccv").size();
    if (used == kv.size())
        return;
    RunConfig probe;
    for (const auto& [key, value] : kv) {
        const auto dot = key.find('.');
        const std::string section = dot == std::string::npos ? "" : key.substr(0, dot);
        const std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
        std::vector<Field> fs;
        if (section == "experiment" && (name == "params_file" || name == "seeds"))
            continue;
        if (section == "cell")
            fs = fields(probe.params);
        else if (section == "discretization")
            fs = fields(probe.disc);
        else if (section == "env")
            fs = fields(probe.env);
        else if (section == "train")
            fs = fields(probe.train);
        else if (section == "aging")
            fs = fields(probe.aging);
        else if (section == "cccv")
            fs = fields(probe.cccv);
        bool known = false;
        for (const auto& f : fs)
            known = known || f.name == name;
        if (!known)
            throw ValidationError(key, "unknown configuration key");
    }
}

inline RunConfig load_run_config(const std::filesystem::path& path)
{
    RunConfig cfg;
    apply(cfg, read_key_values(path), path.parent_path());
    return cfg;
}

/// Fully resolved configuration in the same format `apply` reads. OCP
/// tables are not echoed; their content enters `config_hash`.
inline std::string to_text(RunConfig cfg)
{
    std::ostringstream os;
    os << "[experiment]\nparams_file = " << cfg.params_file << "\nseeds = " << seeds_text(cfg.seeds) << "\n\n";
    write_section(os, "cell", fields(cfg.params));
    os << '\n';
    write_section(os, "discretization", fields(cfg.disc));
    os << '\n';
    write_section(os, "env", fields(cfg.env));
    os << '\n';
    write_section(os, "train", fields(cfg.train));
    os << '\n';
    write_section(os, "aging", fields(cfg.aging));
    os << '\n';
    write_section(os, "cccv", fields(cfg.cccv));
    return os.str();
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& data, std::uint64_t h = 0xcbf29ce484222325ULL)
{
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Hash of the resolved configuration text plus both OCP tables.
inline std::string config_hash(const RunConfig& cfg)
{
    std::ostringstream tables;
    write_ocp_table(tables, cfg.params.ocp_anode);
    write_ocp_table(tables, cfg.params.ocp_cathode);
    return hex64(fnv1a(tables.str(), fnv1a(to_text(cfg))));
}

} // namespace fastcharge
