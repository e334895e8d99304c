// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "otfs_radar/channel.hpp"
#include "otfs_radar/config_file.hpp"
#include "otfs_radar/crlb.hpp"
#include "otfs_radar/estimator.hpp"
#include "otfs_radar/harness.hpp"

using namespace otfs_radar;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const Outcome& o) {
    std::printf("%s criterion %d: %s (%s)\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

void guarded(int id, const std::string& title, const std::function<Outcome()>& fn) {
    try {
        report(id, title, fn());
    } catch (const std::exception& e) {
        report(id, title, {false, std::string("exception: ") + e.what()});
    }
}

DelayDopplerFrame gaussian_frame(std::size_t N, std::size_t M, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, std::sqrt(0.5));
    DelayDopplerFrame x(N, M);
    for (auto& v : x.flat()) v = {g(rng), g(rng)};
    return x;
}

std::string run_command(const std::string& cmd, int& status) {
    std::string out;
    FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
    if (pipe == nullptr) {
        status = -1;
        return out;
    }
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
    const int raw = pclose(pipe);
    status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return out;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::string config_path(const char* name) { return std::string(OTFS_RADAR_CONFIG_DIR) + "/" + name; }

const ScenarioSpec& scenario(const ExperimentConfig& exp, const std::string& name) {
    for (const auto& s : exp.scenarios)
        if (s.name == name) return s;
    throw std::runtime_error("config has no scenario " + name);
}

std::size_t worker_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// Shared between criteria 5, 6 and 7.
struct DeskState {
    ExperimentConfig exp;
    SweepResult sb;
    bool have_waterfall = false;
    double waterfall_db = 0.0;
};

Outcome criterion1() {
    std::mt19937_64 rng(1);
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const auto x = gaussian_frame(50, 64, rng);
        const auto back = sfft(isfft(x));
        for (std::size_t j = 0; j < x.size(); ++j) worst = std::max(worst, std::abs(back.flat()[j] - x.flat()[j]));
    }
    const double t = seconds_since(t0);
    return {worst <= 1e-12 && t < 5.0, "max |sfft(isfft(x)) - x| = " + fmt("%.3g", worst) + ", " + fmt("%.3f", t) + " s"};
}

Outcome criterion2() {
    auto cfg = make_system_config(4, 4, 4e6, 60e9, 1, 1, AngleSector{});
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> ut(0.0, cfg.T), un(-0.5 * cfg.delta_f, cfg.delta_f);
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (int i = 0; i < 25; ++i) {
        const auto x = gaussian_frame(4, 4, rng);
        const double tau = ut(rng), nu = un(rng);
        const Eigen::VectorXcd ref = oracle::psi_matrix(tau, nu, 4, 4, cfg.T, cfg.delta_f) * oracle::to_vec(x.vector());
        const auto got = psi_apply(tau, nu, x, cfg);
        worst = std::max(worst, (oracle::to_vec(got.vector()) - ref).cwiseAbs().maxCoeff());
    }
    const double t = seconds_since(t0);
    return {worst <= 1e-9 && t < 30.0, "max error " + fmt("%.3g", worst) + " over 25 pairs, " + fmt("%.2f", t) + " s"};
}

Outcome criterion3() {
    auto cfg = make_system_config(10, 16, 75e6, 60e9, 8, 1, AngleSector{});
    cfg.sigma_w2 = 0.0;
    const auto x = generate_symbols(cfg, 3);
    const auto f = sector_beam(cfg);
    const auto cache = build_cache(x, cfg);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> uk(0, cfg.N - 1), ul(0, cfg.M - 1);
    std::uniform_real_distribution<double> ua(cfg.sector.min, cfg.sector.max), uph(0.0, 2 * kPi), ug(0.5, 2.0);
    int exact = 0;
    double worst_gain = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t k = uk(rng), l = ul(rng);
        const TargetEstimate t{double(l) * cfg.delay_cell(), double(k) * cfg.doppler_cell(), ua(rng),
                               std::polar(ug(rng), uph(rng))};
        auto y = apply_G(t.tau, t.nu, t.phi, f, x, cfg);
        for (auto& v : y.samples()) v *= t.gain;

        std::size_t nearest = 0;
        for (std::size_t i = 1; i < cfg.omega.size(); ++i)
            if (std::abs(std::sin(cfg.omega[i]) - std::sin(t.phi)) <
                std::abs(std::sin(cfg.omega[nearest]) - std::sin(t.phi)))
                nearest = i;
        const auto out = coarse_detect(y, x, f, cache, cfg);
        if (out.candidates.size() == 1 && out.candidates[0].grid == GridPoint{k, l, nearest}) ++exact;

        const auto h = solve_gains(y, {&t, 1}, f, x, cfg);
        worst_gain = std::max(worst_gain, std::abs(h[0] - t.gain) / std::abs(t.gain));
    }
    return {exact == 20 && worst_gain <= 1e-8,
            std::to_string(exact) + "/20 exact single detections, worst gain error " + fmt("%.3g", worst_gain)};
}

Outcome criterion4() {
    auto cfg = make_system_config(8, 8, 8e6, 60e9, 4, 1, AngleSector{});
    cfg.sigma_w2 = 0.01;
    const auto x = generate_symbols(cfg, 4);
    const auto f = sector_beam(cfg);
    const ParamVector theta{{{1.0, 0.4, 2.3 * cfg.delay_cell(), 1.6 * cfg.doppler_cell(), 0.12},
                             {0.7, -1.1, 4.8 * cfg.delay_cell(), 3.2 * cfg.doppler_cell(), -0.05}}};

    auto signal = [&](const ParamVector& th) {
        Eigen::VectorXcd s = Eigen::VectorXcd::Zero(Eigen::Index(f.weights.size() * x.size()));
        for (const auto& t : th.targets) {
            const auto g = apply_G(t.tau, t.nu, t.phi, f, x, cfg);
            s += t.A * std::exp(cd(0, t.psi)) * oracle::to_vec(g.samples());
        }
        return s;
    };
    auto component = [](ParamVector& th, std::size_t i) -> double& {
        auto& t = th.targets[i / kParamsPerTarget];
        switch (i % kParamsPerTarget) {
            case 0: return t.A;
            case 1: return t.psi;
            case 2: return t.tau;
            case 3: return t.nu;
            default: return t.phi;
        }
    };
    const double scales[] = {1.0, 1.0, cfg.delay_cell(), cfg.doppler_cell(), 1.0};
    Eigen::MatrixXcd D(Eigen::Index(f.weights.size() * x.size()), Eigen::Index(theta.size()));
    for (std::size_t i = 0; i < theta.size(); ++i) {
        ParamVector plus = theta, minus = theta;
        const double h = 1e-6 * std::max(std::abs(component(plus, i)), scales[i % kParamsPerTarget]);
        component(plus, i) += h;
        component(minus, i) -= h;
        D.col(Eigen::Index(i)) = (signal(plus) - signal(minus)) / (2 * h);
    }
    const Eigen::MatrixXd F_fd = (2.0 / cfg.sigma_w2) * (D.adjoint() * D).real();
    const auto F = fisher(theta, x, f, cfg);
    const double fisher_err = (F - F_fd).norm() / F.norm();

    cfg.sigma_w2 = 1e-4;
    const auto base = crlb_bounds(theta, x, f, cfg);
    double scale_err = 0.0;
    for (double alpha : {10.0, 100.0, 1000.0}) {
        cfg.sigma_w2 = 1e-4 * alpha;
        const auto b = crlb_bounds(theta, x, f, cfg);
        for (std::size_t i = 0; i < b.size(); ++i) scale_err = std::max(scale_err, std::abs(b[i] / (alpha * base[i]) - 1.0));
    }
    return {fisher_err <= 1e-4 && scale_err <= 1e-12,
            "Fisher relative error " + fmt("%.3g", fisher_err) + ", noise scaling error " + fmt("%.3g", scale_err)};
}

Outcome criterion5(DeskState& st) {
    auto exp = st.exp;
    exp.antennas = {8};
    exp.trials = 200;
    exp.scenarios = {scenario(st.exp, "S_b")};
    const auto t0 = Clock::now();
    st.sb = run_sweep(exp, worker_threads());
    const double t = seconds_since(t0);

    const auto& groups = st.sb.groups;
    // Lowest SNR from which P_md stays below 0.05.
    std::size_t first = groups.size();
    for (std::size_t i = groups.size(); i-- > 0;) {
        if (!(groups[i].p_md < 0.05)) break;
        first = i;
    }
    if (first == groups.size()) return {false, "P_md never drops below 0.05 on the SNR grid"};
    st.have_waterfall = true;
    st.waterfall_db = groups[first].snr_db;

    double worst = 0.0;
    std::string worst_at;
    for (std::size_t i = first; i < groups.size(); ++i) {
        const auto& g = groups[i];
        if (!g.crlb_failure.empty()) return {false, "CRLB failed at " + fmt("%g", g.snr_db) + " dB: " + g.crlb_failure};
        for (std::size_t p = 0; p < g.rmse_target.size(); ++p) {
            const auto& r = g.rmse_target[p];
            const auto& c = g.crlb_target[p];
            const double ratios[] = {r.range_m / c.range_m, r.velocity_mps / c.velocity_mps, r.angle_deg / c.angle_deg};
            const char* names[] = {"range", "velocity", "angle"};
            for (int q = 0; q < 3; ++q) {
                if (std::isnan(ratios[q]) || ratios[q] > worst) {
                    worst = std::isnan(ratios[q]) ? INFINITY : ratios[q];
                    worst_at = std::string(names[q]) + " of target " + std::to_string(p) + " at " + fmt("%g", g.snr_db) + " dB";
                }
            }
        }
    }
    return {worst <= 2.0, "waterfall at " + fmt("%g", st.waterfall_db) + " dB; worst RMSE/sqrt(CRLB) " +
                              fmt("%.3f", worst) + " (" + worst_at + "); " + fmt("%.0f", t) + " s"};
}

Outcome criterion6(const DeskState& st) {
    if (!st.have_waterfall) return {false, "no waterfall from criterion 5"};
    const double snr = st.waterfall_db + 15.0;
    auto run_rate = [&](const std::string& name, std::size_t n_a) {
        auto exp = st.exp;
        exp.antennas = {n_a};
        exp.trials = 200;
        exp.snr_db = {snr};
        exp.scenarios = {scenario(st.exp, name)};
        return run_sweep(exp, worker_threads()).groups.at(0).all_detected_rate;
    };
    double sb = -1.0;
    for (const auto& g : st.sb.groups)
        if (std::abs(g.snr_db - snr) < 1e-9) sb = g.all_detected_rate;
    if (sb < 0.0) sb = run_rate("S_b", 8);
    const double sa8 = run_rate("S_a", 8);
    const double sa32 = run_rate("S_a", 32);
    const bool pass = sb >= 0.95 && sa8 < 0.5 && sa32 > sa8;
    return {pass, "at " + fmt("%g", snr) + " dB both detected: S_b N_a=8 " + fmt("%.3f", sb) + ", S_a N_a=8 " +
                      fmt("%.3f", sa8) + ", S_a N_a=32 " + fmt("%.3f", sa32)};
}

Outcome criterion7(const DeskState& st) {
    if (!st.have_waterfall) return {false, "no waterfall from criterion 5"};
    auto exp = st.exp;
    exp.antennas = {8};
    exp.trials = 500;
    exp.snr_db = {st.waterfall_db};
    exp.reference_range_m = 20.1;
    exp.scenarios = {scenario(st.exp, "empty")};
    const auto g = run_sweep(exp, worker_threads()).groups.at(0);
    return {g.p_fa <= 0.05, "P_fa " + fmt("%.4f", g.p_fa) + " over 500 empty-scene trials at " +
                                fmt("%g", st.waterfall_db) + " dB (reference 20.1 m)"};
}

Outcome criterion8() {
    int status = 0;
    const auto out = run_command(std::string(OTFS_RADAR_CLI) + " resolutions " + config_path("table1.cfg"), status);
    auto value_after = [&](const std::string& key) {
        const auto pos = out.find(key);
        if (pos == std::string::npos) return std::nan("");
        return std::stod(out.substr(pos + key.size()));
    };
    const double v = value_after("v_res = ");
    const double r = value_after("r_res = ");
    const std::string v4 = fmt("%.4g", v), r4 = fmt("%.4g", r);
    return {status == 0 && v4 == "421.6" && r4 == "0.9993",
            "v_res " + v4 + " km/h, r_res " + r4 + " m (exit " + std::to_string(status) + ")"};
}

Outcome criterion9() {
    const auto base = std::filesystem::temp_directory_path() / "otfs_radar_acceptance";
    std::filesystem::remove_all(base);
    const std::string common = std::string(OTFS_RADAR_CLI) + " sweep " + config_path("desk.cfg") +
                               " --trials 6 --snr-db 10,22.5,35 --seed 99 --out ";
    int s1 = 0, s2 = 0, s3 = 0;
    run_command(common + (base / "t1a").string() + " --threads 1", s1);
    run_command(common + (base / "t1b").string() + " --threads 1", s2);
    run_command(common + (base / "t4").string() + " --threads 4", s3);
    if (s1 != 0 || s2 != 0 || s3 != 0) return {false, "sweep exited with a nonzero status"};
    bool same = true;
    for (const char* f : {"results.csv", "trials.csv"}) {
        const auto a = slurp(base / "t1a" / f);
        same = same && !a.empty() && a == slurp(base / "t1b" / f) && a == slurp(base / "t4" / f);
    }
    const auto rows = slurp(base / "t1a" / "results.csv");
    std::filesystem::remove_all(base);
    return {same, std::string(same ? "results.csv and trials.csv byte-identical" : "outputs differ") +
                      " across reruns and 1 vs 4 threads (" + std::to_string(std::count(rows.begin(), rows.end(), '\n') - 1) +
                      " groups)"};
}

}  // namespace

int main() {
    guarded(1, "transform identity", criterion1);
    guarded(2, "Psi oracle equivalence", criterion2);
    guarded(3, "noiseless exactness", criterion3);
    guarded(4, "CRLB correctness", criterion4);

    DeskState st;
    try {
        st.exp = load_config(config_path("desk.cfg"));
    } catch (const std::exception& e) {
        std::printf("cannot load desk config: %s\n", e.what());
        return 1;
    }
    guarded(5, "efficiency at desk scale", [&] { return criterion5(st); });
    guarded(6, "separability", [&] { return criterion6(st); });
    guarded(7, "detection floor", [&] { return criterion7(st); });
    guarded(8, "resolution formulas", criterion8);
    guarded(9, "determinism", criterion9);

    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
