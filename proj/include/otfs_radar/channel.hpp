#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "otfs_radar/core_model.hpp"
#include "otfs_radar/otfs_modem.hpp"

namespace otfs_radar {

/// ULA response b(phi) (identical for a(phi)); entries[0] == 1.
struct SteeringVector {
    std::vector<cd> entries;
};

/// Transmit beamforming weights f_BF with unit 2-norm.
struct BeamVector {
    std::vector<cd> weights;
};

/// b_n(phi) = exp(j (n-1) pi sin phi), n = 1..n_a. Throws DomainError
/// outside [-pi/2, pi/2].
SteeringVector steering(double phi, std::size_t n_a);

/// a^H(phi) f, the complex transmit gain towards phi.
cd beam_gain(const BeamVector& f, double phi);
/// d/dphi of a^H(phi) f.
cd beam_gain_derivative(const BeamVector& f, double phi);

/// Least-squares fit of |a^H(phi) f| to the sector indicator over a dense
/// grid uniform in sin(phi), normalized to unit norm. A degenerate sector
/// returns the matched beam a(phi0)/sqrt(N_a).
BeamVector sector_beam(AngleSector sector, std::size_t n_a);
BeamVector sector_beam(const SystemConfig& cfg);

/// Cross ambiguity of two unit-energy rectangular pulses of duration T.
cd cross_ambiguity(double tau, double nu, const SystemConfig& cfg);

/// Throws DomainError unless tau in [0, T) and nu in [-delta_f/2, delta_f).
void check_psi_extent(double tau, double nu, const SystemConfig& cfg);

/// Applies the ISI kernel Psi(tau, nu) to a fixed symbol frame.
///
/// For rectangular pulses and tau in [0, T) the ambiguity term only couples
/// time slots n' = n and n' = n - 1, which turns the quadruple sum into a
/// per-slot Toeplitz convolution across subcarriers followed by an SFFT.
class PsiOperator {
public:
    PsiOperator(const DelayDopplerFrame& x, const SystemConfig& cfg);

    DelayDopplerFrame apply(double tau, double nu) const;

    struct Derivatives {
        DelayDopplerFrame value;
        DelayDopplerFrame d_tau;
        DelayDopplerFrame d_nu;
    };
    /// Psi x together with its analytic partial derivatives in tau and nu.
    Derivatives apply_with_derivatives(double tau, double nu) const;

    const SystemConfig& config() const { return cfg_; }
    const DelayDopplerFrame& symbols() const { return x_; }

private:
    SystemConfig cfg_;
    DelayDopplerFrame x_;
    TimeFrequencyFrame X_;
};

DelayDopplerFrame psi_apply(double tau, double nu, const DelayDopplerFrame& x,
                            const SystemConfig& cfg);

/// N_a * N * M samples, antenna-major; each antenna block is a delay-Doppler
/// frame in row-major (k, l) order.
class ReceivedSignal {
public:
    ReceivedSignal() = default;
    ReceivedSignal(std::size_t n_antennas, std::size_t grid_size)
        : n_antennas_(n_antennas), grid_size_(grid_size), samples_(n_antennas * grid_size) {}

    std::size_t antennas() const { return n_antennas_; }
    std::size_t grid_size() const { return grid_size_; }
    std::size_t size() const { return samples_.size(); }

    std::span<cd> antenna(std::size_t t) { return {samples_.data() + t * grid_size_, grid_size_}; }
    std::span<const cd> antenna(std::size_t t) const {
        return {samples_.data() + t * grid_size_, grid_size_};
    }
    std::span<cd> samples() { return samples_; }
    std::span<const cd> samples() const { return samples_; }

    ReceivedSignal& operator+=(const ReceivedSignal& other);

private:
    std::size_t n_antennas_ = 0;
    std::size_t grid_size_ = 0;
    std::vector<cd> samples_;
};

/// G_p x = (b(phi) a^H(phi) f) kron (Psi x), from an already applied Psi x.
ReceivedSignal apply_G(const DelayDopplerFrame& psi_x, double phi, const BeamVector& f);
ReceivedSignal apply_G(double tau, double nu, double phi, const BeamVector& f,
                       const DelayDopplerFrame& x, const SystemConfig& cfg);

/// y = sum_p h'_p G_p x + w with w circular Gaussian of variance sigma_w2;
/// deterministic in `seed`.
ReceivedSignal synthesize(const Scene& scene, const DelayDopplerFrame& x, const BeamVector& f,
                          const SystemConfig& cfg, std::uint64_t seed);

/// Adds circular complex Gaussian noise of the given variance in place.
void add_noise(ReceivedSignal& y, double variance, std::uint64_t seed);

/// Psi x materialized at every Doppler-delay grid point (tau = l/(M df),
/// nu = k/(N T)), with squared norms. Immutable after build.
class OperatorCache {
public:
    OperatorCache() = default;

    std::size_t N() const { return N_; }
    std::size_t M() const { return M_; }
    std::size_t size() const { return N_ * M_; }
    std::size_t points_built() const { return points_built_; }

    std::span<const cd> at(std::size_t k, std::size_t l) const;
    double norm2(std::size_t k, std::size_t l) const { return norms_[k * M_ + l]; }

    static std::size_t required_bytes(const SystemConfig& cfg);

    /// Spills the products to a frame dump (grid points in (k, l) order).
    void save(const std::filesystem::path& path) const;
    static OperatorCache load(const std::filesystem::path& path, std::size_t N, std::size_t M);

    friend OperatorCache build_cache(const DelayDopplerFrame&, const SystemConfig&, std::size_t);

private:
    std::size_t N_ = 0;
    std::size_t M_ = 0;
    std::size_t points_built_ = 0;
    std::vector<cd> products_;
    std::vector<double> norms_;
};

inline constexpr std::size_t kDefaultCacheBudget = std::size_t{2} << 30;  // 2 GiB

/// Throws ResourceError when the cache would exceed `budget_bytes`.
OperatorCache build_cache(const DelayDopplerFrame& x, const SystemConfig& cfg,
                          std::size_t budget_bytes = kDefaultCacheBudget);

}  // namespace otfs_radar
