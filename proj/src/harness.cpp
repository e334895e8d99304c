#include "otfs_radar/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <random>
#include <thread>

#include "json.hpp"
#include "otfs_radar/errors.hpp"

namespace otfs_radar {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

double rms(double sum, std::size_t n) { return n == 0 ? kNaN : std::sqrt(sum / static_cast<double>(n)); }

TargetEstimate truth_of(const Target& t, const SystemConfig& cfg) {
    const auto dd = derive_physical(t, cfg);
    return {dd.tau, dd.nu, t.angle, t.gain};
}

std::uint64_t symbol_seed(std::uint64_t master, std::size_t n_antennas) {
    return splitmix64(splitmix64(master ^ 0x53594D424F4C53ull) + n_antennas);
}

}  // namespace

std::uint64_t trial_seed(std::uint64_t master, std::size_t scenario, std::size_t snr_index,
                         std::size_t trial) {
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ static_cast<std::uint64_t>(scenario));
    h = splitmix64(h ^ static_cast<std::uint64_t>(snr_index));
    return splitmix64(h ^ static_cast<std::uint64_t>(trial));
}

double scenario_noise(const ScenarioSpec& scenario, double snr_db, const ExperimentConfig& exp,
                      const SystemConfig& cfg) {
    double range = exp.reference_range_m;
    double rcs = exp.reference_rcs;
    if (!scenario.targets.empty()) {
        const auto nearest = std::min_element(scenario.targets.begin(), scenario.targets.end(),
                                              [](const Target& a, const Target& b) { return a.range < b.range; });
        range = nearest->range;
        rcs = nearest->rcs;
    }
    return noise_for_snr(db_to_linear(snr_db), range, rcs, cfg);
}

std::vector<std::optional<std::size_t>> associate(std::span<const TargetEstimate> truths,
                                                  std::span<const TargetEstimate> estimates,
                                                  const SystemConfig& cfg) {
    struct Pair {
        double distance;
        std::size_t truth;
        std::size_t estimate;
    };
    const double angle_cell = cfg.angle_cell() > 0.0 ? cfg.angle_cell() : 1.0;
    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        for (std::size_t j = 0; j < estimates.size(); ++j) {
            const double dt = (estimates[j].tau - truths[i].tau) / cfg.delay_cell();
            const double dn = (estimates[j].nu - truths[i].nu) / cfg.doppler_cell();
            const double dp = (estimates[j].phi - truths[i].phi) / angle_cell;
            if (std::abs(dt) > kAssociationGate || std::abs(dn) > kAssociationGate ||
                std::abs(dp) > kAssociationGate)
                continue;
            pairs.push_back({dt * dt + dn * dn + dp * dp, i, j});
        }
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.distance < b.distance; });
    std::vector<std::optional<std::size_t>> match(truths.size());
    std::vector<bool> used(estimates.size(), false);
    for (const auto& p : pairs) {
        if (match[p.truth] || used[p.estimate]) continue;
        match[p.truth] = p.estimate;
        used[p.estimate] = true;
    }
    return match;
}

TrialRunner::TrialRunner(const ExperimentConfig& exp, std::size_t n_antennas)
    : exp_(exp), cfg_(exp.system(n_antennas)) {
    x_ = generate_symbols(cfg_, symbol_seed(exp.seed, n_antennas));
    f_ = sector_beam(cfg_);
    if (OperatorCache::required_bytes(cfg_) <= kDefaultCacheBudget)
        cache_ = std::make_shared<const OperatorCache>(build_cache(x_, cfg_));
}

TrialRecord TrialRunner::run(const ScenarioSpec& scenario, double snr_db, std::uint64_t seed,
                             DetectionOutput* detail) const {
    const auto start = std::chrono::steady_clock::now();
    TrialRecord rec;
    rec.scenario = scenario.name;
    rec.snr_db = snr_db;
    rec.n_antennas = cfg_.N_a;
    rec.seed = seed;
    for (const auto& t : scenario.targets) rec.targets.push_back({t, false, {}, std::nullopt});

    try {
        SystemConfig cfg = cfg_;
        cfg.sigma_w2 = scenario_noise(scenario, snr_db, exp_, cfg);

        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
        Scene scene;
        for (auto& o : rec.targets) {
            const double amplitude = std::sqrt(radar_path_gain(o.truth.range, o.truth.rcs, cfg.wavelength()));
            o.truth.gain = std::polar(amplitude, phase(rng));
            scene.targets.push_back(o.truth);
        }

        const auto y = synthesize(scene, x_, f_, cfg, splitmix64(seed ^ 0x4E4F495345ull));
        const Estimator est(y, x_, f_, cfg, cache_.get(), exp_.estimator);
        auto out = est.estimate();
        rec.threshold = out.threshold_used;
        rec.candidates = out.candidates.size();

        std::vector<TargetEstimate> truths, estimates;
        for (const auto& t : scene.targets) truths.push_back(truth_of(t, cfg));
        for (const auto& c : out.candidates) estimates.push_back(c.refined);
        const auto match = associate(truths, estimates, cfg);

        std::size_t matched = 0;
        for (std::size_t i = 0; i < rec.targets.size(); ++i) {
            if (!match[i]) continue;
            ++matched;
            auto& o = rec.targets[i];
            const auto& e = estimates[*match[i]];
            o.detected = true;
            o.estimate.range = range_from_delay(e.tau);
            o.estimate.velocity = velocity_from_doppler(e.nu, cfg.f_c);
            o.estimate.angle = e.phi;
            o.estimate.rcs = o.truth.rcs;
            o.estimate.gain = e.gain;
            SquaredErrors se;
            se.range = std::pow(o.estimate.range - o.truth.range, 2);
            se.velocity = std::pow(o.estimate.velocity - o.truth.velocity, 2);
            se.angle = std::pow(rad_to_deg(o.estimate.angle - o.truth.angle), 2);
            se.gain = std::pow(std::abs(o.estimate.gain) - std::abs(o.truth.gain), 2);
            o.errors = se;
        }
        rec.false_alarms = estimates.size() - matched;
        if (detail != nullptr) *detail = std::move(out);
    } catch (const std::exception& e) {
        rec.failure = e.what();
        for (auto& o : rec.targets) {
            o.detected = false;
            o.errors.reset();
        }
    }
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

void TrialRunner::crlb(const ScenarioSpec& scenario, double snr_db, SweepGroup& group) const {
    const std::size_t P = scenario.targets.size();
    group.crlb_target.assign(P, PhysicalBounds{kNaN, kNaN, kNaN, kNaN});
    group.crlb = {kNaN, kNaN, kNaN, kNaN};
    if (P == 0) return;
    try {
        SystemConfig cfg = cfg_;
        cfg.sigma_w2 = scenario_noise(scenario, snr_db, exp_, cfg);
        Scene scene{scenario.targets};
        for (auto& t : scene.targets)
            t.gain = std::sqrt(radar_path_gain(t.range, t.rcs, cfg.wavelength()));
        const auto bounds = physical_bounds(crlb_bounds(params_from_scene(scene, cfg), x_, f_, cfg), cfg.f_c);
        group.crlb_target = bounds;
        PhysicalBounds pooled;
        for (const auto& b : bounds) {
            pooled.range_m += b.range_m * b.range_m;
            pooled.velocity_mps += b.velocity_mps * b.velocity_mps;
            pooled.angle_deg += b.angle_deg * b.angle_deg;
            pooled.gain_abs += b.gain_abs * b.gain_abs;
        }
        const double n = static_cast<double>(P);
        group.crlb = {std::sqrt(pooled.range_m / n), std::sqrt(pooled.velocity_mps / n),
                      std::sqrt(pooled.angle_deg / n), std::sqrt(pooled.gain_abs / n)};
    } catch (const std::exception& e) {
        group.crlb_failure = e.what();
    }
}

TrialRecord run_trial(const ExperimentConfig& exp, const ScenarioSpec& scenario, double snr_db,
                      std::size_t n_antennas, std::uint64_t seed) {
    return TrialRunner(exp, n_antennas).run(scenario, snr_db, seed);
}

SweepGroup aggregate(std::span<const TrialRecord> records) {
    SweepGroup g;
    if (records.empty()) return g;
    g.scenario = records.front().scenario;
    g.snr_db = records.front().snr_db;
    g.n_antennas = records.front().n_antennas;
    g.trials = records.size();
    const std::size_t P = records.front().targets.size();

    struct Sums {
        double range = 0, velocity = 0, angle = 0, gain = 0;
        std::size_t n = 0;
    };
    Sums pooled;
    std::vector<Sums> per(P);
    std::size_t missed = 0, false_alarms = 0, all_found = 0;
    std::vector<std::size_t> found(P, 0);
    for (const auto& r : records) {
        false_alarms += r.false_alarms;
        if (!r.failure.empty()) ++g.failures;
        bool all = true;
        for (std::size_t p = 0; p < P; ++p) {
            const auto& o = r.targets[p];
            if (!o.detected) {
                ++missed;
                all = false;
                continue;
            }
            ++found[p];
            for (Sums* s : {&pooled, &per[p]}) {
                s->range += o.errors->range;
                s->velocity += o.errors->velocity;
                s->angle += o.errors->angle;
                s->gain += o.errors->gain;
                ++s->n;
            }
        }
        if (all) ++all_found;
    }
    auto summary = [](const Sums& s) {
        return ErrorSummary{rms(s.range, s.n), rms(s.velocity, s.n), rms(s.angle, s.n), rms(s.gain, s.n), s.n};
    };
    g.rmse = summary(pooled);
    for (const auto& s : per) g.rmse_target.push_back(summary(s));
    const double trials = static_cast<double>(g.trials);
    g.p_md = P == 0 ? kNaN : static_cast<double>(missed) / (static_cast<double>(P) * trials);
    g.p_fa = static_cast<double>(false_alarms) / trials;
    for (std::size_t p = 0; p < P; ++p) g.detect_rate_target.push_back(static_cast<double>(found[p]) / trials);
    g.all_detected_rate = static_cast<double>(all_found) / trials;
    return g;
}

SweepResult run_sweep(const ExperimentConfig& exp, std::size_t threads) {
    threads = std::max<std::size_t>(1, threads);
    SweepResult result;
    for (std::size_t n_a : exp.antennas) {
        const TrialRunner runner(exp, n_a);
        struct Job {
            std::size_t scenario, snr, trial;
        };
        std::vector<Job> jobs;
        for (std::size_t s = 0; s < exp.scenarios.size(); ++s)
            for (std::size_t i = 0; i < exp.snr_db.size(); ++i)
                for (std::size_t t = 0; t < exp.trials; ++t) jobs.push_back({s, i, t});

        std::vector<TrialRecord> records(jobs.size());
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t j = next++; j < jobs.size(); j = next++) {
                const auto& job = jobs[j];
                records[j] = runner.run(exp.scenarios[job.scenario], exp.snr_db[job.snr],
                                        trial_seed(exp.seed, job.scenario, job.snr, job.trial));
            }
        };
        std::vector<std::thread> pool;
        for (std::size_t w = 1; w < std::min(threads, jobs.size()); ++w) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();

        for (std::size_t s = 0; s < exp.scenarios.size(); ++s) {
            for (std::size_t i = 0; i < exp.snr_db.size(); ++i) {
                const std::size_t first = (s * exp.snr_db.size() + i) * exp.trials;
                auto group = aggregate(std::span<const TrialRecord>(records).subspan(first, exp.trials));
                group.snr_index = i;
                runner.crlb(exp.scenarios[s], exp.snr_db[i], group);
                result.groups.push_back(std::move(group));
            }
        }
        std::move(records.begin(), records.end(), std::back_inserter(result.records));
    }
    return result;
}

std::string sweep_csv(const SweepResult& result) {
    std::string out =
        "scenario,snr_db,n_antennas,trials,rmse_range_m,rmse_velocity_mps,rmse_angle_deg,rmse_gain_abs,"
        "crlb_range_m,crlb_velocity_mps,crlb_angle_deg,crlb_gain_abs,p_md,p_fa,"
        "rmse_velocity_kmh,crlb_velocity_kmh\n";
    for (const auto& g : result.groups) {
        const std::string fields[] = {g.scenario,
                                      num(g.snr_db),
                                      std::to_string(g.n_antennas),
                                      std::to_string(g.trials),
                                      num(g.rmse.range_m),
                                      num(g.rmse.velocity_mps),
                                      num(g.rmse.angle_deg),
                                      num(g.rmse.gain_abs),
                                      num(g.crlb.range_m),
                                      num(g.crlb.velocity_mps),
                                      num(g.crlb.angle_deg),
                                      num(g.crlb.gain_abs),
                                      num(g.p_md),
                                      num(g.p_fa),
                                      num(mps_to_kmh(g.rmse.velocity_mps)),
                                      num(mps_to_kmh(g.crlb.velocity_mps))};
        for (std::size_t i = 0; i < std::size(fields); ++i) out += (i ? "," : "") + fields[i];
        out += "\n";
    }
    return out;
}

std::string trials_csv(const SweepResult& result) {
    std::string out =
        "scenario,snr_db,n_antennas,seed,target,detected,range_m,velocity_mps,angle_deg,gain_abs,"
        "est_range_m,est_velocity_mps,est_angle_deg,est_gain_abs,sq_range,sq_velocity,sq_angle,sq_gain,"
        "candidates,false_alarms,failure\n";
    for (const auto& r : result.records) {
        const std::string head = r.scenario + "," + num(r.snr_db) + "," + std::to_string(r.n_antennas) + "," +
                                 std::to_string(r.seed) + ",";
        const std::string tail = "," + std::to_string(r.candidates) + "," + std::to_string(r.false_alarms) +
                                 "," + (r.failure.empty() ? "" : "\"" + r.failure + "\"") + "\n";
        if (r.targets.empty()) {
            out += head + ",,,,,,,,,,,,,," + tail.substr(1);
            continue;
        }
        for (std::size_t p = 0; p < r.targets.size(); ++p) {
            const auto& o = r.targets[p];
            std::string row = head + std::to_string(p) + "," + (o.detected ? "1" : "0") + "," +
                              num(o.truth.range) + "," + num(o.truth.velocity) + "," +
                              num(rad_to_deg(o.truth.angle)) + "," + num(std::abs(o.truth.gain)) + ",";
            if (o.errors) {
                row += num(o.estimate.range) + "," + num(o.estimate.velocity) + "," +
                       num(rad_to_deg(o.estimate.angle)) + "," + num(std::abs(o.estimate.gain)) + "," +
                       num(o.errors->range) + "," + num(o.errors->velocity) + "," + num(o.errors->angle) +
                       "," + num(o.errors->gain);
            } else {
                row += ",,,,,,,";
            }
            out += row + tail;
        }
    }
    return out;
}

std::string sidecar_json(const ExperimentConfig& exp, const SweepResult& result, std::size_t threads) {
    using nlohmann::json;
    json j;
    j["version"] = kVersion;
    j["generated_utc"] = utc_now();
    j["threads"] = threads;
    j["config_text"] = format_config(exp);
    json sys = json::array();
    for (std::size_t n_a : exp.antennas) {
        const auto cfg = exp.system(n_a);
        const auto res = resolutions(cfg);
        json omega = json::array();
        for (double w : cfg.omega) omega.push_back(rad_to_deg(w));
        sys.push_back({{"n_antennas", n_a},
                       {"N", cfg.N},
                       {"M", cfg.M},
                       {"delta_f_hz", cfg.delta_f},
                       {"T_s", cfg.T},
                       {"f_c_hz", cfg.f_c},
                       {"B_hz", cfg.B},
                       {"omega_deg", omega},
                       {"v_res_mps", res.v_res},
                       {"r_res_m", res.r_res},
                       {"symbol_seed", symbol_seed(exp.seed, n_a)}});
    }
    j["systems"] = sys;
    j["seeds"] = {{"master", exp.seed},
                  {"schedule", "splitmix64 chain of (master, scenario index, snr index, trial index)"}};
    json groups = json::array();
    double wall = 0.0;
    for (const auto& r : result.records) wall += r.wall_time_s;
    for (const auto& g : result.groups) {
        json per = json::array();
        for (std::size_t p = 0; p < g.rmse_target.size(); ++p) {
            const auto& e = g.rmse_target[p];
            const auto& c = g.crlb_target[p];
            per.push_back({{"detect_rate", g.detect_rate_target[p]},
                           {"rmse_range_m", e.range_m},
                           {"rmse_velocity_mps", e.velocity_mps},
                           {"rmse_angle_deg", e.angle_deg},
                           {"crlb_range_m", c.range_m},
                           {"crlb_velocity_mps", c.velocity_mps},
                           {"crlb_angle_deg", c.angle_deg}});
        }
        groups.push_back({{"scenario", g.scenario},
                          {"snr_db", g.snr_db},
                          {"n_antennas", g.n_antennas},
                          {"trials", g.trials},
                          {"failures", g.failures},
                          {"all_detected_rate", g.all_detected_rate},
                          {"crlb_failure", g.crlb_failure},
                          {"targets", per}});
    }
    j["groups"] = groups;
    j["trial_wall_time_s"] = wall;
    return j.dump(2);
}

void write_sweep(const std::filesystem::path& dir, const ExperimentConfig& exp, const SweepResult& result,
                 std::size_t threads) {
    std::filesystem::create_directories(dir);
    auto write = [&](const char* name, const std::string& text) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
        out << text;
    };
    write("results.csv", sweep_csv(result));
    write("trials.csv", trials_csv(result));
    write("results.json", sidecar_json(exp, result, threads));
}

}  // namespace otfs_radar
