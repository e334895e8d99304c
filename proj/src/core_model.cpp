#include "otfs_radar/core_model.hpp"

#include <algorithm>
#include <cmath>

#include "otfs_radar/errors.hpp"

namespace otfs_radar {

double SystemConfig::angle_cell() const {
    if (omega.size() < 2) return sector.max - sector.min;
    return (omega.back() - omega.front()) / static_cast<double>(omega.size() - 1);
}

std::vector<double> auto_omega(AngleSector sector, std::size_t n_antennas) {
    if (sector.max <= sector.min) return {sector.min};
    const double du = std::sin(sector.max) - std::sin(sector.min);
    const auto intervals = static_cast<std::size_t>(
        std::max(1.0, std::ceil(du * static_cast<double>(std::max<std::size_t>(n_antennas, 1)) - 1e-9)));
    std::vector<double> out(intervals + 1);
    for (std::size_t i = 0; i <= intervals; ++i) {
        out[i] = sector.min + (sector.max - sector.min) * static_cast<double>(i) /
                                  static_cast<double>(intervals);
    }
    return out;
}

SystemConfig make_system_config(std::size_t N, std::size_t M, double B, double f_c,
                                std::size_t N_a, std::size_t N_rf, AngleSector sector,
                                std::vector<double> omega) {
    SystemConfig cfg;
    cfg.N = N;
    cfg.M = M;
    cfg.B = B;
    cfg.f_c = f_c;
    cfg.N_a = N_a;
    cfg.N_rf = N_rf;
    cfg.sector = sector;
    if (M > 0 && B > 0.0) {
        cfg.delta_f = B / static_cast<double>(M);
        cfg.T = 1.0 / cfg.delta_f;
    }
    cfg.omega = omega.empty() ? auto_omega(sector, N_a) : std::move(omega);
    validate(cfg);
    return cfg;
}

void validate(const SystemConfig& cfg) {
    if (cfg.N == 0) throw ConfigError("N", 0, "must be positive");
    if (cfg.M == 0) throw ConfigError("M", 0, "must be positive");
    if (!(cfg.B > 0.0)) throw ConfigError("B", 0, "bandwidth must be positive");
    if (!(cfg.f_c > 0.0)) throw ConfigError("f_c", 0, "carrier must be positive");
    if (std::abs(cfg.T * cfg.delta_f - 1.0) > 1e-12)
        throw ConfigError("T", 0, "T * delta_f must equal 1");
    if (std::abs(static_cast<double>(cfg.M) * cfg.delta_f - cfg.B) > 1e-9 * cfg.B)
        throw ConfigError("B", 0, "B must equal M * delta_f");
    if (cfg.N_a == 0) throw ConfigError("N_a", 0, "need at least one antenna");
    if (cfg.N_rf == 0 || cfg.N_rf > cfg.N_a)
        throw ConfigError("N_rf", 0, "need 1 <= N_rf <= N_a");
    if (!(cfg.P_avg > 0.0)) throw ConfigError("P_avg", 0, "must be positive");
    if (cfg.sigma_w2 < 0.0) throw ConfigError("sigma_w2", 0, "must be non-negative");
    const double half_pi = kPi / 2.0;
    if (cfg.sector.min < -half_pi - 1e-12 || cfg.sector.max > half_pi + 1e-12 ||
        cfg.sector.min > cfg.sector.max)
        throw ConfigError("sector", 0, "sector must be an interval inside [-pi/2, pi/2]");
    if (cfg.omega.empty()) throw ConfigError("omega", 0, "coarse angle grid is empty");
    for (std::size_t i = 0; i < cfg.omega.size(); ++i) {
        const double a = cfg.omega[i];
        if (a < cfg.sector.min - 1e-12 || a > cfg.sector.max + 1e-12)
            throw ConfigError("omega", 0, "coarse angle outside the sector");
        if (i > 0 && !(a > cfg.omega[i - 1]))
            throw ConfigError("omega", 0, "coarse angles must be strictly ascending");
    }
}

DelayDoppler derive_physical(const Target& t, const SystemConfig& cfg) {
    return {2.0 * t.range / kSpeedOfLight, 2.0 * t.velocity * cfg.f_c / kSpeedOfLight};
}

double range_from_delay(double tau) { return tau * kSpeedOfLight / 2.0; }

double velocity_from_doppler(double nu, double f_c) { return nu * kSpeedOfLight / (2.0 * f_c); }

Resolutions resolutions(const SystemConfig& cfg) {
    const double n = static_cast<double>(cfg.N);
    const double m = static_cast<double>(cfg.M);
    Resolutions r;
    r.v_res = cfg.B * kSpeedOfLight / (2.0 * n * m * cfg.f_c);
    r.r_res = kSpeedOfLight / (2.0 * cfg.B);
    r.v_max = n * r.v_res;
    r.r_max = m * r.r_res;
    return r;
}

double radar_path_gain(double range, double rcs, double wavelength, double antenna_gain) {
    if (!(range > 0.0)) throw DomainError("radar equation needs a positive range");
    const double four_pi = 4.0 * kPi;
    const double r2 = range * range;
    return wavelength * wavelength * rcs * antenna_gain * antenna_gain /
           (four_pi * four_pi * four_pi * r2 * r2);
}

double radar_snr(const Target& t, const SystemConfig& cfg, double antenna_gain) {
    if (!(cfg.sigma_w2 > 0.0)) throw DomainError("radar SNR needs a positive noise variance");
    return radar_path_gain(t.range, t.rcs, cfg.wavelength(), antenna_gain) * cfg.P_avg /
           cfg.sigma_w2;
}

double noise_for_snr(double snr_linear, double range, double rcs, const SystemConfig& cfg,
                     double antenna_gain) {
    if (!(snr_linear > 0.0)) throw DomainError("requested SNR must be positive");
    return radar_path_gain(range, rcs, cfg.wavelength(), antenna_gain) * cfg.P_avg / snr_linear;
}

}  // namespace otfs_radar
