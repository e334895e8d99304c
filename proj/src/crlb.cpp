#include "otfs_radar/crlb.hpp"

#include <cmath>

#include "otfs_radar/errors.hpp"

namespace otfs_radar {
namespace {

constexpr cd kJ{0.0, 1.0};

// Relative eigenvalue floor of the equilibrated Fisher matrix.
constexpr double kSingularTolerance = 1e-12;

}  // namespace

std::string ParamVector::name(std::size_t index) {
    static const char* const names[] = {"A", "psi", "tau", "nu", "phi"};
    return std::string(names[index % kParamsPerTarget]) + "[" +
           std::to_string(index / kParamsPerTarget) + "]";
}

Eigen::MatrixXcd signal_jacobian(const ParamVector& theta, const DelayDopplerFrame& x,
                                 const BeamVector& f, const SystemConfig& cfg) {
    const std::size_t n_a = f.weights.size();
    const std::size_t nm = x.size();
    const PsiOperator psi(x, cfg);
    Eigen::MatrixXcd D(static_cast<Eigen::Index>(n_a * nm), static_cast<Eigen::Index>(theta.size()));

    for (std::size_t p = 0; p < theta.targets.size(); ++p) {
        const auto& t = theta.targets[p];
        const auto d = psi.apply_with_derivatives(t.tau, t.nu);
        const auto b = steering(t.phi, n_a);
        const cd c = beam_gain(f, t.phi);
        const cd dc = beam_gain_derivative(f, t.phi);
        const cd rot = std::exp(kJ * t.psi);
        const double du = kPi * std::cos(t.phi);
        const auto col = static_cast<Eigen::Index>(kParamsPerTarget * p);

        for (std::size_t a = 0; a < n_a; ++a) {
            const cd w = b.entries[a] * c;
            const cd dw = b.entries[a] * (kJ * (static_cast<double>(a) * du) * c + dc);
            for (std::size_t i = 0; i < nm; ++i) {
                const auto row = static_cast<Eigen::Index>(a * nm + i);
                const cd v = d.value.flat()[i];
                D(row, col + 0) = rot * w * v;
                D(row, col + 1) = kJ * t.A * rot * w * v;
                D(row, col + 2) = t.A * rot * w * d.d_tau.flat()[i];
                D(row, col + 3) = t.A * rot * w * d.d_nu.flat()[i];
                D(row, col + 4) = t.A * rot * dw * v;
            }
        }
    }
    return D;
}

std::vector<cd> signal_derivatives(const ParamVector& theta, const DelayDopplerFrame& x,
                                   const BeamVector& f, const SystemConfig& cfg, std::size_t p,
                                   Param which) {
    ParamVector single{{theta.targets.at(p)}};
    const Eigen::MatrixXcd D = signal_jacobian(single, x, f, cfg);
    const Eigen::VectorXcd col = D.col(static_cast<Eigen::Index>(which));
    return {col.data(), col.data() + col.size()};
}

FisherMatrix fisher(const ParamVector& theta, const DelayDopplerFrame& x, const BeamVector& f,
                    const SystemConfig& cfg) {
    if (!(cfg.sigma_w2 > 0.0)) throw DomainError("Fisher information needs sigma_w2 > 0");
    const Eigen::MatrixXcd D = signal_jacobian(theta, x, f, cfg);
    FisherMatrix F = (2.0 / cfg.sigma_w2) * (D.adjoint() * D).real();
    // Exact symmetry; the product is symmetric up to rounding only.
    return 0.5 * (F + F.transpose());
}

std::vector<double> invert_diagonal(const FisherMatrix& F) {
    const Eigen::Index n = F.rows();
    Eigen::VectorXd scale(n);
    std::vector<std::string> null_params;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(F(i, i) > 0.0)) null_params.push_back(ParamVector::name(static_cast<std::size_t>(i)));
        scale(i) = F(i, i) > 0.0 ? 1.0 / std::sqrt(F(i, i)) : 1.0;
    }
    if (!null_params.empty()) throw SingularFisherError(null_params);

    // Equilibrate so that parameters in seconds and hertz compare fairly.
    const Eigen::MatrixXd E = scale.asDiagonal() * F * scale.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(E);
    const auto& lambda = eig.eigenvalues();
    if (!(lambda(0) > kSingularTolerance * lambda(n - 1))) {
        const Eigen::VectorXd v = eig.eigenvectors().col(0);
        for (Eigen::Index i = 0; i < n; ++i)
            if (std::abs(v(i)) > 0.1) null_params.push_back(ParamVector::name(static_cast<std::size_t>(i)));
        throw SingularFisherError(null_params);
    }
    const Eigen::MatrixXd inv =
        eig.eigenvectors() * lambda.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    std::vector<double> out(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = inv(i, i) * scale(i) * scale(i);
    return out;
}

std::vector<double> crlb_bounds(const ParamVector& theta, const DelayDopplerFrame& x,
                                const BeamVector& f, const SystemConfig& cfg) {
    return invert_diagonal(fisher(theta, x, f, cfg));
}

std::vector<PhysicalBounds> physical_bounds(const std::vector<double>& variances, double f_c) {
    std::vector<PhysicalBounds> out(variances.size() / kParamsPerTarget);
    for (std::size_t p = 0; p < out.size(); ++p) {
        const double* v = variances.data() + kParamsPerTarget * p;
        out[p].gain_abs = std::sqrt(v[0]);
        out[p].range_m = range_from_delay(std::sqrt(v[2]));
        out[p].velocity_mps = velocity_from_doppler(std::sqrt(v[3]), f_c);
        out[p].angle_deg = rad_to_deg(std::sqrt(v[4]));
    }
    return out;
}

ParamVector params_from_scene(const Scene& scene, const SystemConfig& cfg) {
    ParamVector theta;
    for (const auto& t : scene.targets) {
        const auto dd = derive_physical(t, cfg);
        theta.targets.push_back({std::abs(t.gain), std::arg(t.gain), dd.tau, dd.nu, t.angle});
    }
    return theta;
}

}  // namespace otfs_radar
