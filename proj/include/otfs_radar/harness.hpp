#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "otfs_radar/channel.hpp"
#include "otfs_radar/config_file.hpp"
#include "otfs_radar/core_model.hpp"
#include "otfs_radar/crlb.hpp"
#include "otfs_radar/estimator.hpp"

namespace otfs_radar {

inline constexpr const char* kVersion = "0.1.0";

/// Association gate, in coarse cells per axis.
inline constexpr double kAssociationGate = 1.5;

struct SquaredErrors {
    double range = 0.0;     // m^2
    double velocity = 0.0;  // (m/s)^2
    double angle = 0.0;     // deg^2
    double gain = 0.0;      // (|h'| error)^2
};

struct TargetOutcome {
    Target truth;  // gain holds the h' used in this trial
    bool detected = false;
    Target estimate;  // meaningful only when detected
    std::optional<SquaredErrors> errors;
};

struct TrialRecord {
    std::string scenario;
    double snr_db = 0.0;
    std::size_t n_antennas = 0;
    std::uint64_t seed = 0;
    std::vector<TargetOutcome> targets;
    std::size_t candidates = 0;
    std::size_t false_alarms = 0;
    double threshold = 0.0;
    double wall_time_s = 0.0;
    std::string failure;  // empty unless the trial threw
};

/// Root mean squares of one parameter set; nan when no sample exists.
struct ErrorSummary {
    double range_m = 0.0;
    double velocity_mps = 0.0;
    double angle_deg = 0.0;
    double gain_abs = 0.0;
    std::size_t samples = 0;
};

struct SweepGroup {
    std::string scenario;
    double snr_db = 0.0;
    std::size_t snr_index = 0;
    std::size_t n_antennas = 0;
    std::size_t trials = 0;
    ErrorSummary rmse;                      // pooled over detected targets
    std::vector<ErrorSummary> rmse_target;  // per target
    PhysicalBounds crlb;                    // pooled (root mean variance)
    std::vector<PhysicalBounds> crlb_target;
    std::string crlb_failure;
    double p_md = 0.0;
    double p_fa = 0.0;
    std::vector<double> detect_rate_target;
    double all_detected_rate = 0.0;  // trials where every target was found
    std::size_t failures = 0;
};

struct SweepResult {
    std::vector<SweepGroup> groups;
    std::vector<TrialRecord> records;  // group-major, then trial index
};

/// 64-bit mix of the identifiers of one trial.
std::uint64_t trial_seed(std::uint64_t master, std::size_t scenario, std::size_t snr_index,
                         std::size_t trial);

/// Noise variance for an SNR: set by the nearest target, or the reference
/// range for empty scenes.
double scenario_noise(const ScenarioSpec& scenario, double snr_db, const ExperimentConfig& exp,
                      const SystemConfig& cfg);

/// Greedy nearest-neighbour matching in (tau, nu, phi) cell units. Returns
/// for every truth the index of its candidate, if any.
std::vector<std::optional<std::size_t>> associate(std::span<const TargetEstimate> truths,
                                                  std::span<const TargetEstimate> estimates,
                                                  const SystemConfig& cfg);

/// Shared read-only state for all trials at one array size: symbols, beam
/// and operator cache.
class TrialRunner {
public:
    TrialRunner(const ExperimentConfig& exp, std::size_t n_antennas);

    const SystemConfig& system() const { return cfg_; }
    const DelayDopplerFrame& symbols() const { return x_; }
    const BeamVector& beam() const { return f_; }

    /// Never throws; failures land in TrialRecord::failure.
    TrialRecord run(const ScenarioSpec& scenario, double snr_db, std::uint64_t seed,
                    DetectionOutput* detail = nullptr) const;

    /// Pooled and per-target CRLB at the true kinematics, reference phase 0.
    void crlb(const ScenarioSpec& scenario, double snr_db, SweepGroup& group) const;

private:
    const ExperimentConfig& exp_;
    SystemConfig cfg_;
    DelayDopplerFrame x_;
    BeamVector f_;
    std::shared_ptr<const OperatorCache> cache_;
};

TrialRecord run_trial(const ExperimentConfig& exp, const ScenarioSpec& scenario, double snr_db,
                      std::size_t n_antennas, std::uint64_t seed);

/// Full lattice scenario x SNR x N_a x trials on `threads` workers; results
/// do not depend on the thread count.
SweepResult run_sweep(const ExperimentConfig& exp, std::size_t threads);

/// Aggregates one group from its records.
SweepGroup aggregate(std::span<const TrialRecord> records);

std::string sweep_csv(const SweepResult& result);
std::string trials_csv(const SweepResult& result);
std::string sidecar_json(const ExperimentConfig& exp, const SweepResult& result, std::size_t threads);

/// Writes results.csv, trials.csv and results.json into `dir`.
void write_sweep(const std::filesystem::path& dir, const ExperimentConfig& exp,
                 const SweepResult& result, std::size_t threads);

}  // namespace otfs_radar
