#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "otfs_radar/core_model.hpp"
#include "otfs_radar/estimator.hpp"

namespace otfs_radar {

/// A named list of targets with fixed kinematics; gains are set per trial.
struct ScenarioSpec {
    std::string name;
    std::vector<Target> targets;
};

/// Everything a sweep needs: frame/array parameters, the experiment lattice
/// and the estimator operating point. Units are SI after parsing.
struct ExperimentConfig {
    std::size_t N = 50;
    std::size_t M = 64;
    double f_c = 60e9;
    double B = 150e6;
    std::size_t N_rf = 1;
    double P_avg = 1.0;
    AngleSector sector;
    std::optional<std::vector<double>> omega;  // rad; auto grid per N_a when unset

    std::vector<std::size_t> antennas{16};
    std::vector<double> snr_db{10.0};
    std::size_t trials = 200;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    /// Range that sets the noise level for scenes without targets.
    double reference_range_m = 20.0;
    double reference_rcs = 1.0;

    EstimatorOptions estimator;
    std::vector<ScenarioSpec> scenarios;

    /// SystemConfig for one array size (sigma_w2 left at 1).
    SystemConfig system(std::size_t n_antennas) const;
};

/// Parses the flat `key = value` format. Lists are comma separated.
/// `[scenario NAME]` opens a block whose keys (range_m, velocity_kmh,
/// angle_deg, rcs) are parallel lists. Throws ConfigError naming key and line.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Inverse of parse_config up to number formatting.
std::string format_config(const ExperimentConfig& cfg);

}  // namespace otfs_radar
