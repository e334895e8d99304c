#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace otfs_radar {

using cd = std::complex<double>;

inline constexpr double kSpeedOfLight = 2.99792458e8;  // m/s
inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }
inline constexpr double kmh_to_mps(double kmh) { return kmh / 3.6; }
inline constexpr double mps_to_kmh(double mps) { return mps * 3.6; }

/// Steering-angle interval covered by the transmit beam.
struct AngleSector {
    double min = -deg_to_rad(15.0);  // rad
    double max = deg_to_rad(15.0);   // rad
};

/// OTFS frame geometry, carrier, array, power/noise and search grids.
///
/// All quantities are SI. `T` and `delta_f` are derived from `B` and `M`
/// through `make_system_config` so that T * delta_f = 1 and B = M * delta_f
/// hold by construction.
struct SystemConfig {
    std::size_t N = 50;           // Doppler bins (OTFS symbols per frame)
    std::size_t M = 64;           // delay bins (subcarriers)
    double delta_f = 150e6 / 64;  // Hz
    double T = 64 / 150e6;        // s
    double f_c = 60e9;            // Hz
    double B = 150e6;             // Hz
    std::size_t N_a = 16;
    std::size_t N_rf = 1;
    double P_avg = 1.0;       // W
    double sigma_w2 = 1.0;    // W, complex noise variance per sample
    std::vector<double> omega;  // coarse angles, rad, ascending
    AngleSector sector;
    std::uint64_t rng_seed = 1;

    double wavelength() const { return kSpeedOfLight / f_c; }
    std::size_t grid_size() const { return N * M; }
    /// Delay pitch of the Doppler-delay grid, 1/(M delta_f).
    double delay_cell() const { return 1.0 / (static_cast<double>(M) * delta_f); }
    /// Doppler pitch of the Doppler-delay grid, 1/(N T).
    double doppler_cell() const { return 1.0 / (static_cast<double>(N) * T); }
    /// Mean spacing of the coarse angle grid (sector width if |omega| < 2).
    double angle_cell() const;
};

/// Builds a consistent configuration from the primary quantities; omega is
/// filled with `auto_omega` unless `omega` is supplied. Throws ConfigError
/// when an invariant is violated.
SystemConfig make_system_config(std::size_t N, std::size_t M, double B, double f_c,
                                std::size_t N_a, std::size_t N_rf, AngleSector sector,
                                std::vector<double> omega = {});

/// Uniform coarse angle grid over the sector whose spacing in sin(phi) is at
/// most 1/N_a (about half a null-to-null beamwidth). Endpoints included.
std::vector<double> auto_omega(AngleSector sector, std::size_t n_antennas);

/// Checks every SystemConfig invariant; throws ConfigError naming the field.
void validate(const SystemConfig& cfg);

struct Target {
    double range = 1.0;     // m
    double velocity = 0.0;  // m/s
    double angle = 0.0;     // rad
    double rcs = 1.0;       // m^2
    cd gain{0.0, 0.0};      // h'_p
};

struct Scene {
    std::vector<Target> targets;
};

struct GridPoint {
    std::size_t k = 0;            // Doppler index
    std::size_t l = 0;            // delay index
    std::size_t angle_index = 0;  // index into omega

    friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

struct DelayDoppler {
    double tau = 0.0;  // s
    double nu = 0.0;   // Hz
};

/// Round-trip delay 2r/c and Doppler 2 v f_c / c.
DelayDoppler derive_physical(const Target& t, const SystemConfig& cfg);

/// Inverse of derive_physical: range and velocity from (tau, nu).
double range_from_delay(double tau);
double velocity_from_doppler(double nu, double f_c);

struct Resolutions {
    double v_res = 0.0;  // m/s
    double r_res = 0.0;  // m
    double v_max = 0.0;  // m/s
    double r_max = 0.0;  // m
};

Resolutions resolutions(const SystemConfig& cfg);

/// Path-loss factor lambda^2 sigma G^2 / ((4 pi)^3 r^4) of the radar equation.
double radar_path_gain(double range, double rcs, double wavelength, double antenna_gain = 1.0);

/// Linear radar SNR of a target. Throws DomainError for range <= 0 or
/// sigma_w2 <= 0.
double radar_snr(const Target& t, const SystemConfig& cfg, double antenna_gain = 1.0);

/// Noise variance that gives `snr_linear` for a target of the given range and
/// RCS under P_avg.
double noise_for_snr(double snr_linear, double range, double rcs, const SystemConfig& cfg,
                     double antenna_gain = 1.0);

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

}  // namespace otfs_radar
