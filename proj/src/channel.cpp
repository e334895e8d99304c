#include "otfs_radar/channel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>

#include "otfs_radar/errors.hpp"

namespace otfs_radar {
namespace {

constexpr cd kJ{0.0, 1.0};

/// sin(x)/x
double sinc(double x) {
    if (std::abs(x) < 1e-4) return 1.0 - x * x / 6.0;
    return std::sin(x) / x;
}

/// (sin x - x cos x) / x^3
double sinc_moment(double x) {
    if (std::abs(x) < 1e-2) {
        const double x2 = x * x;
        return 1.0 / 3.0 - x2 / 30.0 + x2 * x2 / 840.0;
    }
    return (std::sin(x) - x * std::cos(x)) / (x * x * x);
}

/// int_a^b exp(-j beta s) ds
cd oscillatory_integral(double a, double b, double beta) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    return std::exp(-kJ * beta * c) * (2.0 * h * sinc(beta * h));
}

/// int_a^b s exp(-j beta s) ds
cd oscillatory_moment(double a, double b, double beta) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const cd centred = c * 2.0 * h * sinc(beta * h) - kJ * (2.0 * h * h * h * beta * sinc_moment(beta * h));
    return std::exp(-kJ * beta * c) * centred;
}

/// Linear (non-circular) Toeplitz product out[m] = sum_m' kernel[m - m' + M - 1] in[m'].
void toeplitz_accumulate(std::span<const cd> kernel, std::span<const cd> in, cd scale,
                         std::span<cd> out) {
    const std::size_t M = in.size();
    for (std::size_t m = 0; m < M; ++m) {
        cd acc{0.0, 0.0};
        const cd* k = kernel.data() + m + M - 1;
        for (std::size_t mp = 0; mp < M; ++mp) acc += k[-static_cast<std::ptrdiff_t>(mp)] * in[mp];
        out[m] += scale * acc;
    }
}

}  // namespace

SteeringVector steering(double phi, std::size_t n_a) {
    if (!(phi >= -kPi / 2.0 - 1e-12 && phi <= kPi / 2.0 + 1e-12))
        throw DomainError("steering angle outside [-pi/2, pi/2]");
    SteeringVector b;
    b.entries.resize(n_a);
    const double s = kPi * std::sin(phi);
    for (std::size_t n = 0; n < n_a; ++n) b.entries[n] = std::exp(kJ * (static_cast<double>(n) * s));
    return b;
}

cd beam_gain(const BeamVector& f, double phi) {
    const double s = kPi * std::sin(phi);
    cd acc{0.0, 0.0};
    for (std::size_t n = 0; n < f.weights.size(); ++n)
        acc += std::exp(-kJ * (static_cast<double>(n) * s)) * f.weights[n];
    return acc;
}

cd beam_gain_derivative(const BeamVector& f, double phi) {
    const double s = kPi * std::sin(phi);
    const double ds = kPi * std::cos(phi);
    cd acc{0.0, 0.0};
    for (std::size_t n = 0; n < f.weights.size(); ++n) {
        const double nn = static_cast<double>(n);
        acc += -kJ * (nn * ds) * std::exp(-kJ * (nn * s)) * f.weights[n];
    }
    return acc;
}

BeamVector sector_beam(AngleSector sector, std::size_t n_a) {
    const std::size_t K = std::max<std::size_t>(2048, 64 * n_a);
    const double u_lo = std::sin(sector.min);
    const double u_hi = std::sin(sector.max);
    const bool degenerate = !(sector.max > sector.min);

    std::vector<double> u(K);
    for (std::size_t i = 0; i < K; ++i) u[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(K);
    if (degenerate) u.push_back(u_lo);

    const auto rows = static_cast<Eigen::Index>(u.size());
    const auto cols = static_cast<Eigen::Index>(n_a);
    Eigen::MatrixXcd A(rows, cols);
    Eigen::VectorXcd d(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const double ui = u[static_cast<std::size_t>(i)];
        for (Eigen::Index t = 0; t < cols; ++t) A(i, t) = std::exp(-kJ * (kPi * static_cast<double>(t) * ui));
        const bool inside = degenerate ? (i == rows - 1) : (ui >= u_lo && ui <= u_hi);
        d(i) = inside ? 1.0 : 0.0;
    }
    Eigen::VectorXcd w = A.colPivHouseholderQr().solve(d);
    w /= w.norm();

    BeamVector f;
    f.weights.assign(w.data(), w.data() + w.size());
    return f;
}

BeamVector sector_beam(const SystemConfig& cfg) { return sector_beam(cfg.sector, cfg.N_a); }

cd cross_ambiguity(double tau, double nu, const SystemConfig& cfg) {
    const double a = std::max(0.0, tau);
    const double b = std::min(cfg.T, cfg.T + tau);
    if (!(b > a)) return {0.0, 0.0};
    return oscillatory_integral(a, b, 2.0 * kPi * nu) / cfg.T;
}

void check_psi_extent(double tau, double nu, const SystemConfig& cfg) {
    if (!(tau >= 0.0 && tau < cfg.T))
        throw DomainError("delay outside [0, T): " + std::to_string(tau));
    if (!(nu >= -0.5 * cfg.delta_f && nu < cfg.delta_f))
        throw DomainError("Doppler outside [-delta_f/2, delta_f): " + std::to_string(nu));
}

PsiOperator::PsiOperator(const DelayDopplerFrame& x, const SystemConfig& cfg)
    : cfg_(cfg), x_(x), X_(isfft(x)) {}

DelayDopplerFrame PsiOperator::apply(double tau, double nu) const {
    check_psi_extent(tau, nu, cfg_);
    const std::size_t N = cfg_.N;
    const std::size_t M = cfg_.M;
    const double T = cfg_.T;
    const double df = cfg_.delta_f;
    const double split = T - tau;

    // Kernels over d = m - m' in [-(M-1), M-1], stored at d + M - 1.
    std::vector<cd> same_slot(2 * M - 1);
    std::vector<cd> prev_slot(2 * M - 1);
    for (std::size_t i = 0; i < 2 * M - 1; ++i) {
        const double d = static_cast<double>(i) - static_cast<double>(M - 1);
        const double beta = 2.0 * kPi * (d * df - nu);
        same_slot[i] = oscillatory_integral(0.0, split, beta) / T;
        prev_slot[i] = oscillatory_integral(split, T, beta) / T;
    }

    TimeFrequencyFrame Y(N, M);
    const bool has_prev = tau > 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        auto row = std::span<cd>(Y.flat().data() + n * M, M);
        const cd slot_phase = std::exp(kJ * (2.0 * kPi * static_cast<double>(n) * T * nu));
        toeplitz_accumulate(same_slot, X_.flat().subspan(n * M, M), slot_phase, row);
        if (has_prev && n > 0) {
            const cd prev_phase = std::exp(kJ * (2.0 * kPi * static_cast<double>(n - 1) * T * nu));
            toeplitz_accumulate(prev_slot, X_.flat().subspan((n - 1) * M, M), prev_phase, row);
        }
        for (std::size_t m = 0; m < M; ++m)
            row[m] *= std::exp(-kJ * (2.0 * kPi * static_cast<double>(m) * df * tau));
    }
    return sfft(Y);
}

PsiOperator::Derivatives PsiOperator::apply_with_derivatives(double tau, double nu) const {
    check_psi_extent(tau, nu, cfg_);
    const std::size_t N = cfg_.N;
    const std::size_t M = cfg_.M;
    const double T = cfg_.T;
    const double df = cfg_.delta_f;
    const double split = T - tau;
    const double two_pi = 2.0 * kPi;

    std::vector<cd> k0(2 * M - 1), k1(2 * M - 1);
    std::vector<cd> k0_tau(2 * M - 1), k1_tau(2 * M - 1);
    std::vector<cd> k0_nu(2 * M - 1), k1_nu(2 * M - 1);
    for (std::size_t i = 0; i < 2 * M - 1; ++i) {
        const double d = static_cast<double>(i) - static_cast<double>(M - 1);
        const double beta = two_pi * (d * df - nu);
        k0[i] = oscillatory_integral(0.0, split, beta) / T;
        k1[i] = oscillatory_integral(split, T, beta) / T;
        const cd edge = std::exp(-kJ * (beta * split)) / T;
        k0_tau[i] = -edge;
        k1_tau[i] = edge;
        k0_nu[i] = kJ * two_pi * oscillatory_moment(0.0, split, beta) / T;
        k1_nu[i] = kJ * two_pi * oscillatory_moment(split, T, beta) / T;
    }

    TimeFrequencyFrame Y(N, M), Yt(N, M), Yn(N, M);
    std::vector<cd> conv0(M), conv1(M);
    for (std::size_t n = 0; n < N; ++n) {
        const auto cur = X_.flat().subspan(n * M, M);
        const double tn = static_cast<double>(n) * T;
        const cd p0 = std::exp(kJ * (two_pi * tn * nu));
        const cd dp0 = kJ * two_pi * tn * p0;

        auto y = std::span<cd>(Y.flat().data() + n * M, M);
        auto yt = std::span<cd>(Yt.flat().data() + n * M, M);
        auto yn = std::span<cd>(Yn.flat().data() + n * M, M);

        std::fill(conv0.begin(), conv0.end(), cd{});
        toeplitz_accumulate(k0, cur, 1.0, conv0);
        for (std::size_t m = 0; m < M; ++m) {
            y[m] += p0 * conv0[m];
            yn[m] += dp0 * conv0[m];
        }
        toeplitz_accumulate(k0_tau, cur, p0, yt);
        toeplitz_accumulate(k0_nu, cur, p0, yn);

        if (n > 0) {
            const auto prev = X_.flat().subspan((n - 1) * M, M);
            const double tp = static_cast<double>(n - 1) * T;
            const cd p1 = std::exp(kJ * (two_pi * tp * nu));
            const cd dp1 = kJ * two_pi * tp * p1;
            std::fill(conv1.begin(), conv1.end(), cd{});
            toeplitz_accumulate(k1, prev, 1.0, conv1);
            for (std::size_t m = 0; m < M; ++m) {
                y[m] += p1 * conv1[m];
                yn[m] += dp1 * conv1[m];
            }
            toeplitz_accumulate(k1_tau, prev, p1, yt);
            toeplitz_accumulate(k1_nu, prev, p1, yn);
        }

        for (std::size_t m = 0; m < M; ++m) {
            const double fm = static_cast<double>(m) * df;
            const cd e = std::exp(-kJ * (two_pi * fm * tau));
            const cd de = -kJ * two_pi * fm;
            yt[m] = e * (yt[m] + de * y[m]);
            y[m] *= e;
            yn[m] *= e;
        }
    }
    return {sfft(Y), sfft(Yt), sfft(Yn)};
}

DelayDopplerFrame psi_apply(double tau, double nu, const DelayDopplerFrame& x,
                            const SystemConfig& cfg) {
    return PsiOperator(x, cfg).apply(tau, nu);
}

ReceivedSignal& ReceivedSignal::operator+=(const ReceivedSignal& other) {
    if (other.samples_.size() != samples_.size())
        throw std::invalid_argument("received signal shapes differ");
    for (std::size_t i = 0; i < samples_.size(); ++i) samples_[i] += other.samples_[i];
    return *this;
}

ReceivedSignal apply_G(const DelayDopplerFrame& psi_x, double phi, const BeamVector& f) {
    const std::size_t n_a = f.weights.size();
    const auto b = steering(phi, n_a);
    const cd gain = beam_gain(f, phi);
    ReceivedSignal out(n_a, psi_x.size());
    for (std::size_t t = 0; t < n_a; ++t) {
        const cd w = b.entries[t] * gain;
        auto block = out.antenna(t);
        const auto src = psi_x.flat();
        for (std::size_t i = 0; i < src.size(); ++i) block[i] = w * src[i];
    }
    return out;
}

ReceivedSignal apply_G(double tau, double nu, double phi, const BeamVector& f,
                       const DelayDopplerFrame& x, const SystemConfig& cfg) {
    return apply_G(psi_apply(tau, nu, x, cfg), phi, f);
}

void add_noise(ReceivedSignal& y, double variance, std::uint64_t seed) {
    if (variance <= 0.0) return;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, std::sqrt(variance / 2.0));
    for (auto& s : y.samples()) {
        const double re = normal(rng);
        const double im = normal(rng);
        s += cd{re, im};
    }
}

ReceivedSignal synthesize(const Scene& scene, const DelayDopplerFrame& x, const BeamVector& f,
                          const SystemConfig& cfg, std::uint64_t seed) {
    ReceivedSignal y(f.weights.size(), x.size());
    if (!scene.targets.empty()) {
        const PsiOperator psi(x, cfg);
        for (const auto& target : scene.targets) {
            const auto dd = derive_physical(target, cfg);
            auto contribution = apply_G(psi.apply(dd.tau, dd.nu), target.angle, f);
            for (auto& s : contribution.samples()) s *= target.gain;
            y += contribution;
        }
    }
    add_noise(y, cfg.sigma_w2, seed);
    return y;
}

std::span<const cd> OperatorCache::at(std::size_t k, std::size_t l) const {
    const std::size_t nm = N_ * M_;
    return {products_.data() + (k * M_ + l) * nm, nm};
}

std::size_t OperatorCache::required_bytes(const SystemConfig& cfg) {
    const std::size_t nm = cfg.N * cfg.M;
    return nm * nm * sizeof(cd) + nm * sizeof(double);
}

void OperatorCache::save(const std::filesystem::path& path) const { write_frame_dump(path, products_); }

OperatorCache OperatorCache::load(const std::filesystem::path& path, std::size_t N, std::size_t M) {
    OperatorCache cache;
    cache.N_ = N;
    cache.M_ = M;
    cache.products_ = read_frame_dump(path);
    const std::size_t nm = N * M;
    if (cache.products_.size() != nm * nm)
        throw std::runtime_error("cache dump " + path.string() + " does not match an N x M grid");
    cache.norms_.resize(nm);
    for (std::size_t p = 0; p < nm; ++p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < nm; ++i) acc += std::norm(cache.products_[p * nm + i]);
        cache.norms_[p] = acc;
    }
    cache.points_built_ = nm;
    return cache;
}

OperatorCache build_cache(const DelayDopplerFrame& x, const SystemConfig& cfg,
                          std::size_t budget_bytes) {
    const std::size_t required = OperatorCache::required_bytes(cfg);
    if (required > budget_bytes) throw ResourceError(required, budget_bytes);

    OperatorCache cache;
    cache.N_ = cfg.N;
    cache.M_ = cfg.M;
    const std::size_t nm = cfg.N * cfg.M;
    cache.products_.resize(nm * nm);
    cache.norms_.resize(nm);
    const PsiOperator psi(x, cfg);
    for (std::size_t k = 0; k < cfg.N; ++k) {
        for (std::size_t l = 0; l < cfg.M; ++l) {
            const double tau = static_cast<double>(l) * cfg.delay_cell();
            const double nu = static_cast<double>(k) * cfg.doppler_cell();
            const auto product = psi.apply(tau, nu);
            const std::size_t p = k * cfg.M + l;
            std::copy(product.flat().begin(), product.flat().end(), cache.products_.begin() + p * nm);
            double acc = 0.0;
            for (const auto& v : product.flat()) acc += std::norm(v);
            cache.norms_[p] = acc;
            ++cache.points_built_;
        }
    }
    return cache;
}

}  // namespace otfs_radar
