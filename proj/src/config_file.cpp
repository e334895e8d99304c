#include "otfs_radar/config_file.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "otfs_radar/errors.hpp"

namespace otfs_radar {
namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct Entry {
    std::string key;
    std::string value;
    std::size_t line;
};

double to_double(const Entry& e, const std::string& token) {
    double v = 0.0;
    const auto* end = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(token.data(), end, v);
    if (ec != std::errc{} || ptr != end)
        throw ConfigError(e.key, e.line, "'" + token + "' is not a number");
    return v;
}

std::uint64_t to_uint(const Entry& e, const std::string& token) {
    std::uint64_t v = 0;
    const auto* end = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(token.data(), end, v);
    if (ec != std::errc{} || ptr != end)
        throw ConfigError(e.key, e.line, "'" + token + "' is not a non-negative integer");
    return v;
}

double scalar(const Entry& e) { return to_double(e, e.value); }

std::size_t count(const Entry& e) { return static_cast<std::size_t>(to_uint(e, e.value)); }

std::vector<double> number_list(const Entry& e) {
    std::vector<double> out;
    for (const auto& tok : split_list(e.value)) out.push_back(to_double(e, tok));
    return out;
}

/// "a, b, c" or "start:step:stop" (inclusive, robust to rounding).
std::vector<double> number_range(const Entry& e) {
    if (e.value.find(':') == std::string::npos) return number_list(e);
    std::vector<double> parts;
    std::stringstream ss(e.value);
    std::string tok;
    while (std::getline(ss, tok, ':')) parts.push_back(to_double(e, trim(tok)));
    if (parts.size() != 3 || !(parts[1] > 0.0) || parts[2] < parts[0])
        throw ConfigError(e.key, e.line, "range must be start:step:stop with step > 0");
    std::vector<double> out;
    const auto n = static_cast<std::size_t>(std::floor((parts[2] - parts[0]) / parts[1] + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) out.push_back(parts[0] + static_cast<double>(i) * parts[1]);
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T, class F>
std::string join(const std::vector<T>& values, F&& to_string) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i > 0) out += ", ";
        out += to_string(values[i]);
    }
    return out;
}

struct ScenarioDraft {
    ScenarioSpec spec;
    std::size_t line = 0;
    std::map<std::string, Entry> entries;
};

void finish_scenario(ScenarioDraft& draft, const ExperimentConfig& cfg) {
    static const char* const known[] = {"range_m", "velocity_kmh", "angle_deg", "rcs"};
    for (const auto& [key, e] : draft.entries) {
        if (std::find(std::begin(known), std::end(known), key) == std::end(known))
            throw ConfigError(key, e.line, "unknown key in scenario '" + draft.spec.name + "'");
    }
    auto list = [&](const char* key) -> std::vector<double> {
        auto it = draft.entries.find(key);
        return it == draft.entries.end() ? std::vector<double>{} : number_list(it->second);
    };
    const auto ranges = list("range_m");
    const auto velocities = list("velocity_kmh");
    const auto angles = list("angle_deg");
    auto rcs = list("rcs");
    if (rcs.empty()) rcs.assign(ranges.size(), 1.0);

    auto check_length = [&](const char* key, std::size_t n) {
        if (n != ranges.size()) {
            auto it = draft.entries.find(key);
            const std::size_t line = it == draft.entries.end() ? draft.line : it->second.line;
            throw ConfigError(key, line, "expected " + std::to_string(ranges.size()) +
                                             " values to match range_m");
        }
    };
    check_length("velocity_kmh", velocities.size());
    check_length("angle_deg", angles.size());
    check_length("rcs", rcs.size());

    const double r_max = static_cast<double>(cfg.M) * kSpeedOfLight / (2.0 * cfg.B);
    for (std::size_t i = 0; i < ranges.size(); ++i) {
        Target t;
        t.range = ranges[i];
        t.velocity = kmh_to_mps(velocities[i]);
        t.angle = deg_to_rad(angles[i]);
        t.rcs = rcs[i];
        const auto& re = draft.entries.at("range_m");
        if (!(t.range > 0.0) || !(t.range < r_max))
            throw ConfigError("range_m", re.line, "range must lie in (0, r_max = " + fmt(r_max) + " m)");
        if (t.angle < cfg.sector.min - 1e-12 || t.angle > cfg.sector.max + 1e-12)
            throw ConfigError("angle_deg", draft.entries.at("angle_deg").line, "angle outside the sector");
        if (!(t.rcs > 0.0)) throw ConfigError("rcs", draft.line, "rcs must be positive");
        draft.spec.targets.push_back(t);
    }
}

}  // namespace

SystemConfig ExperimentConfig::system(std::size_t n_antennas) const {
    SystemConfig cfg = make_system_config(N, M, B, f_c, n_antennas, std::min(N_rf, n_antennas), sector,
                                          omega.value_or(std::vector<double>{}));
    cfg.P_avg = P_avg;
    cfg.rng_seed = seed;
    validate(cfg);
    return cfg;
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::vector<ScenarioDraft> drafts;
    std::map<std::string, Entry> globals;

    std::stringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("", line_no, "unterminated section header");
            const std::string header = trim(line.substr(1, line.size() - 2));
            const std::string prefix = "scenario";
            if (header.rfind(prefix, 0) != 0 || trim(header.substr(prefix.size())).empty())
                throw ConfigError("", line_no, "expected [scenario NAME]");
            ScenarioDraft d;
            d.spec.name = trim(header.substr(prefix.size()));
            d.line = line_no;
            for (const auto& other : drafts)
                if (other.spec.name == d.spec.name)
                    throw ConfigError("", line_no, "duplicate scenario '" + d.spec.name + "'");
            drafts.push_back(std::move(d));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("", line_no, "expected key = value");
        Entry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no};
        if (e.key.empty()) throw ConfigError("", line_no, "missing key");
        auto& target = drafts.empty() ? globals : drafts.back().entries;
        if (target.count(e.key) != 0) throw ConfigError(e.key, line_no, "duplicate key");
        target.emplace(e.key, e);
    }

    for (const auto& [key, e] : globals) {
        if (key == "N") cfg.N = count(e);
        else if (key == "M") cfg.M = count(e);
        else if (key == "f_c_ghz") cfg.f_c = scalar(e) * 1e9;
        else if (key == "B_mhz") cfg.B = scalar(e) * 1e6;
        else if (key == "n_rf") cfg.N_rf = count(e);
        else if (key == "p_avg_w") cfg.P_avg = scalar(e);
        else if (key == "sector_deg") {
            const auto v = number_list(e);
            if (v.size() != 2 || v[0] > v[1]) throw ConfigError(key, e.line, "expected 'min, max' in degrees");
            cfg.sector = {deg_to_rad(v[0]), deg_to_rad(v[1])};
        } else if (key == "omega_deg") {
            if (e.value == "auto") cfg.omega.reset();
            else {
                std::vector<double> w;
                for (double d : number_list(e)) w.push_back(deg_to_rad(d));
                cfg.omega = w;
            }
        } else if (key == "antennas") {
            cfg.antennas.clear();
            for (const auto& tok : split_list(e.value)) {
                const auto n = static_cast<std::size_t>(to_uint(e, tok));
                if (n == 0) throw ConfigError(key, e.line, "antenna counts must be positive");
                cfg.antennas.push_back(n);
            }
        } else if (key == "snr_db") cfg.snr_db = number_range(e);
        else if (key == "trials") cfg.trials = count(e);
        else if (key == "seed") cfg.seed = to_uint(e, e.value);
        else if (key == "threads") cfg.threads = count(e);
        else if (key == "reference_range_m") cfg.reference_range_m = scalar(e);
        else if (key == "reference_rcs") cfg.reference_rcs = scalar(e);
        else if (key == "p_fa_design") cfg.estimator.p_fa_design = scalar(e);
        else if (key == "residual_passes") cfg.estimator.residual_passes = count(e);
        else if (key == "max_candidates") cfg.estimator.max_candidates = count(e);
        else if (key == "max_outer_iterations") cfg.estimator.max_outer_iterations = count(e);
        else if (key == "min_step_cells") cfg.estimator.min_step_cells = scalar(e);
        else throw ConfigError(key, e.line, "unknown key");
    }

    auto line_of = [&](const char* key) {
        auto it = globals.find(key);
        return it == globals.end() ? std::size_t{0} : it->second.line;
    };
    if (cfg.antennas.empty()) throw ConfigError("antennas", line_of("antennas"), "list is empty");
    if (cfg.snr_db.empty()) throw ConfigError("snr_db", line_of("snr_db"), "list is empty");
    if (cfg.trials == 0) throw ConfigError("trials", line_of("trials"), "must be positive");
    if (cfg.threads == 0) throw ConfigError("threads", line_of("threads"), "must be positive");
    if (!(cfg.reference_range_m > 0.0))
        throw ConfigError("reference_range_m", line_of("reference_range_m"), "must be positive");
    if (!(cfg.estimator.min_step_cells > 0.0))
        throw ConfigError("min_step_cells", line_of("min_step_cells"), "must be positive");

    // Surface SystemConfig invariant violations with the line of the key.
    static const std::map<std::string, std::string> field_keys = {
        {"N", "N"}, {"M", "M"}, {"B", "B_mhz"}, {"f_c", "f_c_ghz"}, {"T", "B_mhz"},
        {"N_rf", "n_rf"}, {"P_avg", "p_avg_w"}, {"sector", "sector_deg"}, {"omega", "omega_deg"},
        {"N_a", "antennas"}};
    for (std::size_t n : cfg.antennas) {
        try {
            (void)cfg.system(n);
        } catch (const ConfigError& err) {
            auto it = field_keys.find(err.key());
            const std::string key = it == field_keys.end() ? err.key() : it->second;
            const std::string what = err.what();
            throw ConfigError(key, line_of(key.c_str()), what.substr(what.find(": ") + 2));
        }
    }

    for (auto& d : drafts) {
        finish_scenario(d, cfg);
        cfg.scenarios.push_back(std::move(d.spec));
    }
    if (cfg.scenarios.empty()) throw ConfigError("scenario", 0, "config defines no [scenario] block");
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", 0, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string format_config(const ExperimentConfig& cfg) {
    std::string out;
    auto put = [&](const std::string& key, const std::string& value) { out += key + " = " + value + "\n"; };
    put("N", std::to_string(cfg.N));
    put("M", std::to_string(cfg.M));
    put("f_c_ghz", fmt(cfg.f_c / 1e9));
    put("B_mhz", fmt(cfg.B / 1e6));
    put("n_rf", std::to_string(cfg.N_rf));
    put("p_avg_w", fmt(cfg.P_avg));
    put("sector_deg", fmt(rad_to_deg(cfg.sector.min)) + ", " + fmt(rad_to_deg(cfg.sector.max)));
    put("omega_deg", cfg.omega ? join(*cfg.omega, [](double w) { return fmt(rad_to_deg(w)); }) : "auto");
    put("antennas", join(cfg.antennas, [](std::size_t n) { return std::to_string(n); }));
    put("snr_db", join(cfg.snr_db, fmt));
    put("trials", std::to_string(cfg.trials));
    put("seed", std::to_string(cfg.seed));
    put("threads", std::to_string(cfg.threads));
    put("reference_range_m", fmt(cfg.reference_range_m));
    put("reference_rcs", fmt(cfg.reference_rcs));
    put("p_fa_design", fmt(cfg.estimator.p_fa_design));
    put("residual_passes", std::to_string(cfg.estimator.residual_passes));
    put("max_candidates", std::to_string(cfg.estimator.max_candidates));
    put("max_outer_iterations", std::to_string(cfg.estimator.max_outer_iterations));
    put("min_step_cells", fmt(cfg.estimator.min_step_cells));
    for (const auto& s : cfg.scenarios) {
        out += "\n[scenario " + s.name + "]\n";
        if (s.targets.empty()) continue;
        auto column = [&](auto get) {
            std::vector<double> v;
            for (const auto& t : s.targets) v.push_back(get(t));
            return join(v, fmt);
        };
        put("range_m", column([](const Target& t) { return t.range; }));
        put("velocity_kmh", column([](const Target& t) { return mps_to_kmh(t.velocity); }));
        put("angle_deg", column([](const Target& t) { return rad_to_deg(t.angle); }));
        put("rcs", column([](const Target& t) { return t.rcs; }));
    }
    return out;
}

}  // namespace otfs_radar
