#pragma once

// Slow, literal evaluations used as references by the unit and acceptance
// tests. Nothing here calls the fast paths of the library except for
// plain data types and steering().

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "otfs_radar/channel.hpp"
#include "otfs_radar/core_model.hpp"
#include "otfs_radar/otfs_modem.hpp"

namespace oracle {

using otfs_radar::cd;
using otfs_radar::kPi;
constexpr cd J{0.0, 1.0};

/// X[n,m] = sum_k sum_l x[k,l] e^{j2pi(nk/N - ml/M)}
inline std::vector<cd> isfft(const std::vector<cd>& x, std::size_t N, std::size_t M) {
    std::vector<cd> X(N * M);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t m = 0; m < M; ++m) {
            cd acc{0.0, 0.0};
            for (std::size_t k = 0; k < N; ++k)
                for (std::size_t l = 0; l < M; ++l) {
                    const double ph = 2 * kPi * (double(n * k) / double(N) - double(m * l) / double(M));
                    acc += x[k * M + l] * std::exp(J * ph);
                }
            X[n * M + m] = acc;
        }
    return X;
}

/// y[k,l] = sum_n sum_m Y[n,m]/(NM) e^{j2pi(ml/M - nk/N)}
inline std::vector<cd> sfft(const std::vector<cd>& Y, std::size_t N, std::size_t M) {
    std::vector<cd> y(N * M);
    for (std::size_t k = 0; k < N; ++k)
        for (std::size_t l = 0; l < M; ++l) {
            cd acc{0.0, 0.0};
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t m = 0; m < M; ++m) {
                    const double ph = 2 * kPi * (double(m * l) / double(M) - double(n * k) / double(N));
                    acc += Y[n * M + m] * std::exp(J * ph);
                }
            y[k * M + l] = acc / double(N * M);
        }
    return y;
}

/// Adaptive Simpson quadrature of a complex integrand.
inline cd adaptive_simpson(const std::function<cd(double)>& f, double a, double b, double tol,
                           int depth = 50) {
    std::function<cd(double, double, cd, cd, cd, cd, double, int)> rec =
        [&](double lo, double hi, cd flo, cd fmid, cd fhi, cd whole, double eps, int d) -> cd {
        const double mid = 0.5 * (lo + hi);
        const double lm = 0.5 * (lo + mid), rm = 0.5 * (mid + hi);
        const cd flm = f(lm), frm = f(rm);
        const cd left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
        const cd right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
        const cd delta = left + right - whole;
        if (d <= 0 || std::abs(delta) <= 15.0 * eps) return left + right + delta / 15.0;
        return rec(lo, mid, flo, flm, fmid, left, eps / 2, d - 1) +
               rec(mid, hi, fmid, frm, fhi, right, eps / 2, d - 1);
    };
    if (!(b > a)) return {0.0, 0.0};
    const cd fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    return rec(a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, depth);
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
    std::vector<double> x(n), w(n);
    for (int i = 0; i < n; ++i) {
        double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            const double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    return {x, w};
}

inline cd gauss_integral(const std::function<cd(double)>& f, double a, double b, int n = 64) {
    if (!(b > a)) return {0.0, 0.0};
    static const auto rule = gauss_legendre(64);
    const auto& [x, w] = rule;
    cd acc{0.0, 0.0};
    for (int i = 0; i < n; ++i) acc += w[i] * f(0.5 * (b - a) * x[i] + 0.5 * (a + b));
    return 0.5 * (b - a) * acc;
}

/// C(tau, nu) = int u(s) v*(s - tau) e^{-j2pi nu s} ds for unit-energy
/// rectangular pulses on [0, T), integrated numerically over the support.
inline cd ambiguity(double tau, double nu, double T, bool adaptive = false) {
    const double lo = std::max(0.0, tau);
    const double hi = std::min(T, T + tau);
    const double amp = 1.0 / std::sqrt(T);
    auto integrand = [&](double s) { return amp * amp * std::exp(-J * (2 * kPi * nu * s)); };
    if (adaptive) return adaptive_simpson(integrand, lo, hi, 1e-15);
    // Split so each Gauss panel sees at most about one period.
    const int panels = std::max(1, int(std::ceil(std::abs(nu) * (hi - lo))) + 1);
    cd acc{0.0, 0.0};
    for (int p = 0; p < panels; ++p)
        acc += gauss_integral(integrand, lo + (hi - lo) * p / panels, lo + (hi - lo) * (p + 1) / panels);
    return acc;
}

/// Dense Psi matrix, entry [(k,l), (k',l')], straight from the quadruple sum.
inline Eigen::MatrixXcd psi_matrix(double tau, double nu, std::size_t N, std::size_t M, double T,
                                   double df) {
    std::map<std::pair<long, long>, cd> amb;
    auto C = [&](long dn, long dm) {
        auto key = std::pair{dn, dm};
        auto it = amb.find(key);
        if (it != amb.end()) return it->second;
        const cd v = ambiguity(double(dn) * T - tau, double(dm) * df - nu, T);
        amb.emplace(key, v);
        return v;
    };
    const std::size_t nm = N * M;
    Eigen::MatrixXcd P = Eigen::MatrixXcd::Zero(long(nm), long(nm));
    for (std::size_t k = 0; k < N; ++k)
        for (std::size_t l = 0; l < M; ++l)
            for (std::size_t kp = 0; kp < N; ++kp)
                for (std::size_t lp = 0; lp < M; ++lp) {
                    cd acc{0.0, 0.0};
                    for (std::size_t n = 0; n < N; ++n)
                        for (std::size_t np = 0; np < N; ++np)
                            for (std::size_t m = 0; m < M; ++m)
                                for (std::size_t mp = 0; mp < M; ++mp) {
                                    const cd c = C(long(n) - long(np), long(m) - long(mp));
                                    if (c == cd{0.0, 0.0}) continue;
                                    const double ph =
                                        2 * kPi * double(np) * T * nu - 2 * kPi * double(m) * df * tau +
                                        2 * kPi * (double(np * kp) / double(N) - double(mp * lp) / double(M)) -
                                        2 * kPi * (double(n * k) / double(N) - double(m * l) / double(M));
                                    acc += c / double(nm) * std::exp(J * ph);
                                }
                    P(long(k * M + l), long(kp * M + lp)) = acc;
                }
    return P;
}

inline Eigen::VectorXcd to_vec(const std::vector<cd>& v) {
    return Eigen::Map<const Eigen::VectorXcd>(v.data(), long(v.size()));
}

inline Eigen::VectorXcd to_vec(std::span<const cd> v) {
    return Eigen::Map<const Eigen::VectorXcd>(v.data(), long(v.size()));
}

/// Dense G = (b(phi) a^H(phi) f) kron Psi.
inline Eigen::MatrixXcd g_matrix(const Eigen::MatrixXcd& psi, double phi, const std::vector<cd>& f) {
    const std::size_t n_a = f.size();
    Eigen::VectorXcd a(static_cast<Eigen::Index>(n_a));
    for (std::size_t t = 0; t < n_a; ++t) a(long(t)) = std::exp(J * (double(t) * kPi * std::sin(phi)));
    const cd gain = a.adjoint() * to_vec(f);
    const Eigen::VectorXcd col = a * gain;  // b == a for the ULA
    Eigen::MatrixXcd G(long(n_a) * psi.rows(), psi.cols());
    for (std::size_t t = 0; t < n_a; ++t) G.block(long(t) * psi.rows(), 0, psi.rows(), psi.cols()) = col(long(t)) * psi;
    return G;
}

}  // namespace oracle
