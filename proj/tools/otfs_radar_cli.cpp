// otfs-radar: Monte Carlo sweeps, single trials, CRLB tables and grid
// resolutions from a scenario config file.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "otfs_radar/config_file.hpp"
#include "otfs_radar/errors.hpp"
#include "otfs_radar/harness.hpp"

using namespace otfs_radar;

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> trials;
    std::vector<double> snr_db;
    std::vector<std::size_t> antennas;

    void add_to(CLI::App* app) {
        app->add_option("--seed", seed, "Master seed (overrides config)");
        app->add_option("--trials", trials, "Trials per point (overrides config)")->check(CLI::PositiveNumber);
        app->add_option("--snr-db", snr_db, "SNR list in dB (overrides config)")->delimiter(',');
        app->add_option("--antennas", antennas, "Antenna counts (overrides config)")
            ->delimiter(',')
            ->check(CLI::PositiveNumber);
    }

    void apply(ExperimentConfig& cfg) const {
        if (seed) cfg.seed = *seed;
        if (trials) cfg.trials = *trials;
        if (!snr_db.empty()) cfg.snr_db = snr_db;
        if (!antennas.empty()) {
            cfg.antennas = antennas;
            for (std::size_t n : antennas) (void)cfg.system(n);
        }
    }
};

std::string g(double v, int digits = 10) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

int cmd_resolutions(const ExperimentConfig& exp) {
    const auto cfg = exp.system(exp.antennas.front());
    const auto r = resolutions(cfg);
    std::cout << "N = " << cfg.N << ", M = " << cfg.M << ", B = " << g(cfg.B / 1e6) << " MHz, f_c = "
              << g(cfg.f_c / 1e9) << " GHz\n";
    std::cout << "delta_f = " << g(cfg.delta_f) << " Hz, T = " << g(cfg.T) << " s\n";
    std::cout << "v_res = " << g(mps_to_kmh(r.v_res)) << " km/h (" << g(r.v_res) << " m/s)\n";
    std::cout << "r_res = " << g(r.r_res) << " m\n";
    std::cout << "v_max = " << g(mps_to_kmh(r.v_max)) << " km/h (" << g(r.v_max) << " m/s)\n";
    std::cout << "r_max = " << g(r.r_max) << " m\n";
    return 0;
}

int cmd_crlb(const ExperimentConfig& exp) {
    std::cout << "scenario,snr_db,n_antennas,target,crlb_range_m,crlb_velocity_mps,crlb_velocity_kmh,"
                 "crlb_angle_deg,crlb_gain_abs\n";
    int status = 0;
    for (std::size_t n_a : exp.antennas) {
        const TrialRunner runner(exp, n_a);
        for (const auto& s : exp.scenarios) {
            for (double snr : exp.snr_db) {
                SweepGroup group;
                runner.crlb(s, snr, group);
                if (!group.crlb_failure.empty()) {
                    std::cerr << s.name << " @ " << snr << " dB, N_a = " << n_a << ": " << group.crlb_failure
                              << "\n";
                    status = 2;
                    continue;
                }
                for (std::size_t p = 0; p < group.crlb_target.size(); ++p) {
                    const auto& b = group.crlb_target[p];
                    std::cout << s.name << "," << g(snr) << "," << n_a << "," << p << "," << g(b.range_m) << ","
                              << g(b.velocity_mps) << "," << g(mps_to_kmh(b.velocity_mps)) << ","
                              << g(b.angle_deg) << "," << g(b.gain_abs) << "\n";
                }
            }
        }
    }
    return status;
}

int cmd_trial(const ExperimentConfig& exp, std::string scenario_name, bool verbose) {
    const ScenarioSpec* scenario = &exp.scenarios.front();
    if (!scenario_name.empty()) {
        scenario = nullptr;
        for (const auto& s : exp.scenarios)
            if (s.name == scenario_name) scenario = &s;
        if (scenario == nullptr) throw ConfigError("scenario", 0, "no scenario named '" + scenario_name + "'");
    }
    const std::size_t n_a = exp.antennas.front();
    const double snr = exp.snr_db.front();
    const TrialRunner runner(exp, n_a);
    DetectionOutput detail;
    const auto rec = runner.run(*scenario, snr, exp.seed, &detail);
    const auto& cfg = runner.system();

    std::cout << "scenario " << rec.scenario << ", snr " << g(snr) << " dB, N_a " << n_a << ", seed " << rec.seed
              << "\n";
    if (!rec.failure.empty()) {
        std::cout << "failure: " << rec.failure << "\n";
        return 2;
    }
    if (verbose) {
        std::cout << "threshold " << g(detail.threshold_used, 17) << " (relative " << g(detail.relative_threshold, 17)
                  << ", floor " << g(detail.noise_floor, 17) << ")" << (detail.fallback ? " fallback" : "") << "\n";
        for (std::size_t i = 0; i < detail.candidates.size(); ++i) {
            const auto& c = detail.candidates[i];
            std::cout << "candidate " << i << ": cell (k " << c.grid.k << ", l " << c.grid.l << ", angle "
                      << c.grid.angle_index << ") S " << g(c.statistic, 17) << " -> range "
                      << g(range_from_delay(c.refined.tau), 17) << " m, velocity "
                      << g(mps_to_kmh(velocity_from_doppler(c.refined.nu, cfg.f_c)), 17) << " km/h, angle "
                      << g(rad_to_deg(c.refined.phi), 17) << " deg, |h| " << g(std::abs(c.refined.gain), 17)
                      << ", flags " << c.flags << ", iterations " << c.iterations_used << "\n";
        }
    }
    for (std::size_t p = 0; p < rec.targets.size(); ++p) {
        const auto& o = rec.targets[p];
        std::cout << "target " << p << ": " << (o.detected ? "detected" : "missed");
        if (o.detected) {
            std::cout << ", range error " << g(o.estimate.range - o.truth.range, 6) << " m, velocity error "
                      << g(mps_to_kmh(o.estimate.velocity - o.truth.velocity), 6) << " km/h, angle error "
                      << g(rad_to_deg(o.estimate.angle - o.truth.angle), 6) << " deg";
        }
        std::cout << "\n";
    }
    std::cout << "false alarms " << rec.false_alarms << "\n";
    return 0;
}

int cmd_sweep(const ExperimentConfig& exp, const std::string& out_dir, std::size_t threads) {
    const auto result = run_sweep(exp, threads);
    write_sweep(out_dir, exp, result, threads);
    std::cout << sweep_csv(result);
    std::size_t failures = 0;
    for (const auto& grp : result.groups) failures += grp.failures;
    if (failures > 0) std::cerr << failures << " trial(s) failed; see trials.csv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"OTFS MIMO radar simulator"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides overrides;

    auto* sweep = app.add_subcommand("sweep", "Run the Monte Carlo lattice and write results");
    std::string out_dir;
    std::optional<std::size_t> threads;
    sweep->add_option("config", config_path, "Config file")->required();
    sweep->add_option("--out", out_dir, "Output directory")->required();
    sweep->add_option("--threads", threads, "Worker threads (overrides config)")->check(CLI::PositiveNumber);
    overrides.add_to(sweep);

    auto* trial = app.add_subcommand("trial", "Run a single trial");
    bool verbose = false;
    std::string scenario;
    trial->add_option("config", config_path, "Config file")->required();
    trial->add_flag("--verbose", verbose, "Print candidates and thresholds");
    trial->add_option("--scenario", scenario, "Scenario name (default: first)");
    overrides.add_to(trial);

    auto* crlb = app.add_subcommand("crlb", "Print Cramer-Rao bounds for every configured point");
    crlb->add_option("config", config_path, "Config file")->required();
    overrides.add_to(crlb);

    auto* res = app.add_subcommand("resolutions", "Print velocity and range resolution");
    res->add_option("config", config_path, "Config file")->required();
    overrides.add_to(res);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    ExperimentConfig exp;
    try {
        exp = load_config(config_path);
        overrides.apply(exp);
    } catch (const ConfigError& e) {
        std::cerr << config_path << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << config_path << ": " << e.what() << "\n";
        return 1;
    }

    try {
        if (*sweep) return cmd_sweep(exp, out_dir, threads.value_or(exp.threads));
        if (*trial) return cmd_trial(exp, scenario, verbose);
        if (*crlb) return cmd_crlb(exp);
        return cmd_resolutions(exp);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
