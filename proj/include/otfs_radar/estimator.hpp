#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <span>
#include <vector>

#include "otfs_radar/channel.hpp"
#include "otfs_radar/core_model.hpp"
#include "otfs_radar/otfs_modem.hpp"

namespace otfs_radar {

/// Knobs of the detection / refinement pipeline. Defaults are the shipped
/// operating point.
struct EstimatorOptions {
    /// Design false-alarm rate of the known-noise floor gamma * sigma_w2 with
    /// gamma = ln(cells / p_fa_design). Disabled when <= 0.
    double p_fa_design = 0.01;
    /// Extra detection passes on the residual y - sum h' G x.
    std::size_t residual_passes = 1;
    std::size_t max_candidates = 8;
    std::size_t max_outer_iterations = 6;
    /// Coarsest stencil step of the first outer iteration, in grid cells.
    double initial_step_cells = 0.5;
    /// Stencil steps of every outer iteration shrink down to this.
    double min_step_cells = 1.0 / 1024.0;
    std::size_t stencil_radius = 2;  // 5 x 5 stencil
    double move_tolerance_cells = 1e-3;
    double angle_tolerance = 1e-4;  // rad
    double condition_limit = 1e12;
    /// Update angle and gain of each candidate right after its delay-Doppler
    /// move instead of once per outer iteration.
    bool joint_updates = true;
    /// Residual-pass peaks closer than this many Rayleigh widths (2 / N_a in
    /// sin(phi)) to an existing candidate in the same or an adjacent
    /// delay-Doppler cell are not new targets.
    double resolution_cells = 1.0;
};

enum CandidateFlag : unsigned {
    kBeamNull = 1u << 0,        // a^H(phi) f == 0, statistic forced to 0
    kAngleDegenerate = 1u << 1, // S flat in phi, coarse angle kept
    kMerged = 1u << 2,          // absorbed an indistinguishable candidate
    kResidualPass = 1u << 3,    // found on the residual surface
};

struct TargetEstimate {
    double tau = 0.0;  // s
    double nu = 0.0;   // Hz
    double phi = 0.0;  // rad
    cd gain{0.0, 0.0};
};

struct CandidateTarget {
    GridPoint grid;
    double statistic = 0.0;
    TargetEstimate refined;
    std::size_t iterations_used = 0;
    unsigned flags = 0;
};

struct DetectionOutput {
    std::vector<CandidateTarget> candidates;
    double threshold_used = 0.0;      // max(relative_threshold, noise_floor)
    double relative_threshold = 0.0;  // mean of the four largest local maxima
    double noise_floor = 0.0;
    bool fallback = false;
};

/// S over the Doppler x delay x angle grid, index (k, l, angle).
class DetectionSurface {
public:
    DetectionSurface() = default;
    DetectionSurface(std::size_t n_doppler, std::size_t n_delay, std::size_t n_angle)
        : dims_{n_doppler, n_delay, n_angle}, values_(n_doppler * n_delay * n_angle) {}

    std::size_t doppler_bins() const { return dims_[0]; }
    std::size_t delay_bins() const { return dims_[1]; }
    std::size_t angle_bins() const { return dims_[2]; }
    std::size_t size() const { return values_.size(); }

    double& at(std::size_t k, std::size_t l, std::size_t a) { return values_[index(k, l, a)]; }
    double at(std::size_t k, std::size_t l, std::size_t a) const { return values_[index(k, l, a)]; }
    std::span<const double> values() const { return values_; }

    /// Strict 3D local maxima over boundary-truncated 26-neighbourhoods.
    std::vector<GridPoint> local_maxima() const;

private:
    std::size_t index(std::size_t k, std::size_t l, std::size_t a) const {
        return (k * dims_[1] + l) * dims_[2] + a;
    }

    std::size_t dims_[3] = {0, 0, 0};
    std::vector<double> values_;
};

struct ThresholdResult {
    double value = 0.0;
    bool fallback = false;  // fewer than two local maxima: value is the global max
    std::vector<GridPoint> maxima;  // sorted by descending statistic
};

/// Mean of the four largest local maxima (all of them if fewer).
ThresholdResult detection_threshold(const DetectionSurface& surface);

/// Psi x at one (tau, nu) together with the per-antenna correlations
/// z_t = y_t^H (Psi x), which is all S, I and the gain system need.
struct Signature {
    double tau = 0.0;
    double nu = 0.0;
    std::vector<cd> psi_x;
    double norm2 = 0.0;
    std::vector<cd> z;
};

/// Owns the read-only inputs of one estimation run and implements the
/// pipeline stages on top of them.
class Estimator {
public:
    Estimator(const ReceivedSignal& y, const DelayDopplerFrame& x, const BeamVector& f,
              const SystemConfig& cfg, const OperatorCache* cache = nullptr,
              EstimatorOptions options = {});

    const SystemConfig& config() const { return cfg_; }
    const EstimatorOptions& options() const { return options_; }

    Signature signature(double tau, double nu) const;

    /// y^H G x for a signature at angle phi.
    cd correlation(const Signature& s, double phi) const;
    /// |y^H G x|^2 / |G x|^2; 0 when the beam has a null at phi.
    double statistic(const Signature& s, double phi) const;

    DetectionSurface surface() const;
    DetectionOutput coarse_detect() const;

    struct AngleRefinement {
        double phi = 0.0;
        bool degraded = false;
    };
    AngleRefinement refine_angle(const Signature& s, double phi_coarse) const;

    std::vector<cd> solve_gains(std::span<const Signature> sigs, std::span<const double> phis) const;

    /// I_p for candidate p given the current gains of all candidates.
    double interference(std::span<const Signature> sigs, std::span<const double> phis,
                        std::span<const cd> gains, std::size_t p) const;

    std::vector<CandidateTarget> refine_delay_doppler(std::vector<CandidateTarget> candidates) const;

    DetectionOutput estimate() const;

    /// |g_p^H (y - sum_{q != p} h'_q g_q)|^2 / |g_p|^2: the likelihood gain of
    /// candidate p with every other candidate held fixed.
    double conditional(std::span<const Signature> sigs, std::span<const double> phis,
                       std::span<const cd> gains, std::size_t p) const;

    /// |y|^2 - |y - sum_p h'_p g_p|^2. At jointly solved gains this equals
    /// sum_p (S_p - I_p).
    double objective(std::span<const Signature> sigs, std::span<const double> phis,
                     std::span<const cd> gains) const;

    /// Grid cell nearest to a refined estimate.
    GridPoint nearest_cell(const TargetEstimate& e) const;

private:
    std::pair<cd, double> residual_projection(std::span<const Signature> sigs,
                                              std::span<const double> phis, std::span<const cd> gains,
                                              std::size_t p) const;
    AngleRefinement refine_angle_with(const std::function<double(double)>& fn, double phi_coarse) const;
    Signature make_signature(double tau, double nu, std::vector<cd> psi_x) const;
    std::vector<CandidateTarget> refine_all(std::vector<CandidateTarget> candidates) const;
    DetectionSurface surface_of(const ReceivedSignal& y) const;
    std::vector<CandidateTarget> solve_with_merging(std::vector<CandidateTarget>& candidates,
                                                    std::vector<Signature>& sigs) const;

    const ReceivedSignal& y_;
    const BeamVector& f_;
    SystemConfig cfg_;
    const OperatorCache* cache_;
    EstimatorOptions options_;
    PsiOperator psi_;
    std::vector<std::vector<cd>> omega_steering_;  // [angle][antenna]
    std::vector<cd> omega_gain_;                   // a^H(omega) f
};

// Free-function forms of the pipeline stages.

double statistic_S(const ReceivedSignal& y, double tau, double nu, double phi, const BeamVector& f,
                   const DelayDopplerFrame& x, const SystemConfig& cfg,
                   const OperatorCache* cache = nullptr);

/// Real part of (y^H G_p x) x^H G_p^H (sum_{q != p} h'_q G_q) x / |G_p x|^2.
double interference_I(const ReceivedSignal& y, const TargetEstimate& target,
                      std::span<const TargetEstimate> others, const BeamVector& f,
                      const DelayDopplerFrame& x, const SystemConfig& cfg);

DetectionOutput coarse_detect(const ReceivedSignal& y, const DelayDopplerFrame& x,
                              const BeamVector& f, const OperatorCache& cache,
                              const SystemConfig& cfg, EstimatorOptions options = {});

Estimator::AngleRefinement refine_angle(const ReceivedSignal& y, double tau, double nu,
                                        double phi_coarse, const BeamVector& f,
                                        const DelayDopplerFrame& x, const SystemConfig& cfg,
                                        EstimatorOptions options = {});

/// Least-squares gains for fixed (tau, nu, phi); throws IllConditionedError.
std::vector<cd> solve_gains(const ReceivedSignal& y, std::span<const TargetEstimate> params,
                            const BeamVector& f, const DelayDopplerFrame& x,
                            const SystemConfig& cfg, EstimatorOptions options = {});

std::vector<CandidateTarget> refine_delay_doppler(const ReceivedSignal& y,
                                                  std::vector<CandidateTarget> candidates,
                                                  const BeamVector& f, const DelayDopplerFrame& x,
                                                  const SystemConfig& cfg,
                                                  EstimatorOptions options = {});

DetectionOutput estimate(const ReceivedSignal& y, const DelayDopplerFrame& x, const BeamVector& f,
                         const OperatorCache& cache, const SystemConfig& cfg,
                         EstimatorOptions options = {});

/// Maximizes a unimodal function on [lo, hi] to interval width `tol`.
double golden_section_maximize(const std::function<double(double)>& fn, double lo, double hi,
                               double tol);

}  // namespace otfs_radar
