#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

#include "otfs_radar/channel.hpp"
#include "otfs_radar/core_model.hpp"
#include "otfs_radar/otfs_modem.hpp"

namespace otfs_radar {

/// Real parameters of one target; the complex gain is A e^{j psi}.
struct TargetParams {
    double A = 1.0;    // amplitude
    double psi = 0.0;  // rad
    double tau = 0.0;  // s
    double nu = 0.0;   // Hz
    double phi = 0.0;  // rad
};

enum class Param { A = 0, Psi = 1, Tau = 2, Nu = 3, Phi = 4 };
inline constexpr std::size_t kParamsPerTarget = 5;

/// theta, ordered target by target as (A, psi, tau, nu, phi).
struct ParamVector {
    std::vector<TargetParams> targets;

    std::size_t size() const { return kParamsPerTarget * targets.size(); }
    static std::string name(std::size_t index);
};

/// 5P x 5P real symmetric.
using FisherMatrix = Eigen::MatrixXd;

/// d s_p / d theta over all (antenna, k, l), laid out like ReceivedSignal.
std::vector<cd> signal_derivatives(const ParamVector& theta, const DelayDopplerFrame& x,
                                   const BeamVector& f, const SystemConfig& cfg, std::size_t p,
                                   Param which);

/// All 5P derivative columns at once.
Eigen::MatrixXcd signal_jacobian(const ParamVector& theta, const DelayDopplerFrame& x,
                                 const BeamVector& f, const SystemConfig& cfg);

/// (2 / sigma_w2) Re{D^H D}.
FisherMatrix fisher(const ParamVector& theta, const DelayDopplerFrame& x, const BeamVector& f,
                    const SystemConfig& cfg);

/// Diagonal of the inverse Fisher matrix. Throws SingularFisherError.
std::vector<double> crlb_bounds(const ParamVector& theta, const DelayDopplerFrame& x,
                                const BeamVector& f, const SystemConfig& cfg);
std::vector<double> invert_diagonal(const FisherMatrix& F);

/// Standard-deviation bounds of one target in reporting units.
struct PhysicalBounds {
    double range_m = 0.0;
    double velocity_mps = 0.0;
    double angle_deg = 0.0;
    double gain_abs = 0.0;
};

std::vector<PhysicalBounds> physical_bounds(const std::vector<double>& variances, double f_c);

/// theta at the true kinematics of a scene, taking A and psi from the gains.
ParamVector params_from_scene(const Scene& scene, const SystemConfig& cfg);

}  // namespace otfs_radar
