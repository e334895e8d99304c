#include "otfs_radar/estimator.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "otfs_radar/errors.hpp"

namespace otfs_radar {
namespace {

constexpr cd kJ{0.0, 1.0};

cd inner(std::span<const cd> a, std::span<const cd> b) {
    cd acc{0.0, 0.0};
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
    return acc;
}

/// b(phi_p)^H b(phi_q) for a ULA of n_a elements.
cd steering_inner(double phi_p, double phi_q, std::size_t n_a) {
    const double delta = kPi * (std::sin(phi_q) - std::sin(phi_p));
    cd acc{0.0, 0.0};
    for (std::size_t t = 0; t < n_a; ++t) acc += std::exp(kJ * (static_cast<double>(t) * delta));
    return acc;
}

std::size_t nearest_index(std::span<const double> grid, double value) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (std::abs(grid[i] - value) < std::abs(grid[best] - value)) best = i;
    return best;
}

bool adjacent(const GridPoint& a, const GridPoint& b) {
    auto close = [](std::size_t u, std::size_t v) { return (u > v ? u - v : v - u) <= 1; };
    return close(a.k, b.k) && close(a.l, b.l) && close(a.angle_index, b.angle_index);
}

}  // namespace

std::vector<GridPoint> DetectionSurface::local_maxima() const {
    std::vector<GridPoint> out;
    const std::size_t nk = dims_[0], nl = dims_[1], na = dims_[2];
    for (std::size_t k = 0; k < nk; ++k) {
        for (std::size_t l = 0; l < nl; ++l) {
            for (std::size_t a = 0; a < na; ++a) {
                const double v = at(k, l, a);
                bool is_max = true;
                bool has_neighbour = false;
                for (int dk = -1; dk <= 1 && is_max; ++dk) {
                    for (int dl = -1; dl <= 1 && is_max; ++dl) {
                        for (int da = -1; da <= 1 && is_max; ++da) {
                            if (dk == 0 && dl == 0 && da == 0) continue;
                            const auto kk = static_cast<std::ptrdiff_t>(k) + dk;
                            const auto ll = static_cast<std::ptrdiff_t>(l) + dl;
                            const auto aa = static_cast<std::ptrdiff_t>(a) + da;
                            if (kk < 0 || ll < 0 || aa < 0 || kk >= static_cast<std::ptrdiff_t>(nk) ||
                                ll >= static_cast<std::ptrdiff_t>(nl) || aa >= static_cast<std::ptrdiff_t>(na))
                                continue;
                            has_neighbour = true;
                            if (!(v > at(static_cast<std::size_t>(kk), static_cast<std::size_t>(ll),
                                         static_cast<std::size_t>(aa))))
                                is_max = false;
                        }
                    }
                }
                if (is_max && has_neighbour) out.push_back({k, l, a});
            }
        }
    }
    return out;
}

ThresholdResult detection_threshold(const DetectionSurface& surface) {
    ThresholdResult result;
    result.maxima = surface.local_maxima();
    std::stable_sort(result.maxima.begin(), result.maxima.end(), [&](const GridPoint& a, const GridPoint& b) {
        return surface.at(a.k, a.l, a.angle_index) > surface.at(b.k, b.l, b.angle_index);
    });
    if (result.maxima.size() < 2) {
        const auto values = surface.values();
        result.value = values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
        result.fallback = true;
        return result;
    }
    const std::size_t count = std::min<std::size_t>(4, result.maxima.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const auto& g = result.maxima[i];
        sum += surface.at(g.k, g.l, g.angle_index);
    }
    result.value = sum / static_cast<double>(count);
    return result;
}

double golden_section_maximize(const std::function<double(double)>& fn, double lo, double hi,
                               double tol) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo;
    double b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = fn(c);
    double fd = fn(d);
    while (b - a > tol) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = fn(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = fn(d);
        }
    }
    return 0.5 * (a + b);
}

Estimator::Estimator(const ReceivedSignal& y, const DelayDopplerFrame& x, const BeamVector& f,
                     const SystemConfig& cfg, const OperatorCache* cache, EstimatorOptions options)
    : y_(y), f_(f), cfg_(cfg), cache_(cache), options_(options), psi_(x, cfg) {
    if (y.antennas() != f.weights.size() || y.grid_size() != cfg.N * cfg.M)
        throw std::invalid_argument("received signal does not match beam / grid dimensions");
    if (cache_ != nullptr && (cache_->N() != cfg.N || cache_->M() != cfg.M))
        throw std::invalid_argument("operator cache grid does not match the configuration");
    for (double w : cfg_.omega) {
        omega_steering_.push_back(steering(w, cfg_.N_a == f.weights.size() ? cfg_.N_a : f.weights.size()).entries);
        omega_gain_.push_back(beam_gain(f_, w));
    }
}

Signature Estimator::make_signature(double tau, double nu, std::vector<cd> psi_x) const {
    Signature s;
    s.tau = tau;
    s.nu = nu;
    s.psi_x = std::move(psi_x);
    s.norm2 = 0.0;
    for (const auto& v : s.psi_x) s.norm2 += std::norm(v);
    s.z.resize(y_.antennas());
    for (std::size_t t = 0; t < y_.antennas(); ++t) s.z[t] = inner(y_.antenna(t), s.psi_x);
    return s;
}

Signature Estimator::signature(double tau, double nu) const {
    if (cache_ != nullptr) {
        const double kd = nu / cfg_.doppler_cell();
        const double ld = tau / cfg_.delay_cell();
        const double kr = std::round(kd);
        const double lr = std::round(ld);
        if (kd == kr && ld == lr && kr >= 0 && lr >= 0 && kr < cfg_.N && lr < cfg_.M) {
            const auto k = static_cast<std::size_t>(kr);
            const auto l = static_cast<std::size_t>(lr);
            const double grid_tau = static_cast<double>(l) * cfg_.delay_cell();
            const double grid_nu = static_cast<double>(k) * cfg_.doppler_cell();
            if (grid_tau == tau && grid_nu == nu) {
                const auto product = cache_->at(k, l);
                return make_signature(tau, nu, {product.begin(), product.end()});
            }
        }
    }
    return make_signature(tau, nu, psi_.apply(tau, nu).vector());
}

cd Estimator::correlation(const Signature& s, double phi) const {
    const auto b = steering(phi, y_.antennas());
    cd acc{0.0, 0.0};
    for (std::size_t t = 0; t < b.entries.size(); ++t) acc += b.entries[t] * s.z[t];
    return beam_gain(f_, phi) * acc;
}

double Estimator::statistic(const Signature& s, double phi) const {
    const cd gain = beam_gain(f_, phi);
    if (gain == cd{0.0, 0.0} || s.norm2 == 0.0) return 0.0;
    const auto b = steering(phi, y_.antennas());
    cd acc{0.0, 0.0};
    for (std::size_t t = 0; t < b.entries.size(); ++t) acc += b.entries[t] * s.z[t];
    // |c|^2 cancels between |y^H G x|^2 and |G x|^2 = N_a |c|^2 |Psi x|^2.
    return std::norm(acc) / (static_cast<double>(y_.antennas()) * s.norm2);
}

DetectionSurface Estimator::surface_of(const ReceivedSignal& y) const {
    const std::size_t n_angle = cfg_.omega.size();
    const std::size_t n_a = y.antennas();
    DetectionSurface surf(cfg_.N, cfg_.M, n_angle);
    std::vector<cd> z(n_a);
    const bool cached = cache_ != nullptr;
    const PsiOperator* psi = cached ? nullptr : &psi_;
    for (std::size_t k = 0; k < cfg_.N; ++k) {
        for (std::size_t l = 0; l < cfg_.M; ++l) {
            std::vector<cd> fresh;
            std::span<const cd> product;
            double norm2 = 0.0;
            if (cached) {
                product = cache_->at(k, l);
                norm2 = cache_->norm2(k, l);
            } else {
                fresh = psi->apply(static_cast<double>(l) * cfg_.delay_cell(),
                                   static_cast<double>(k) * cfg_.doppler_cell())
                            .vector();
                product = fresh;
                for (const auto& v : fresh) norm2 += std::norm(v);
            }
            for (std::size_t t = 0; t < n_a; ++t) z[t] = inner(y.antenna(t), product);
            for (std::size_t a = 0; a < n_angle; ++a) {
                if (norm2 == 0.0 || omega_gain_[a] == cd{0.0, 0.0}) {
                    surf.at(k, l, a) = 0.0;
                    continue;
                }
                cd acc{0.0, 0.0};
                const auto& b = omega_steering_[a];
                for (std::size_t t = 0; t < n_a; ++t) acc += b[t] * z[t];
                surf.at(k, l, a) = std::norm(acc) / (static_cast<double>(n_a) * norm2);
            }
        }
    }
    return surf;
}

DetectionSurface Estimator::surface() const { return surface_of(y_); }

DetectionOutput Estimator::coarse_detect() const {
    const auto surf = surface();
    const auto thr = detection_threshold(surf);
    DetectionOutput out;
    out.relative_threshold = thr.value;
    out.fallback = thr.fallback;
    if (options_.p_fa_design > 0.0 && cfg_.sigma_w2 > 0.0)
        out.noise_floor = std::log(static_cast<double>(surf.size()) / options_.p_fa_design) * cfg_.sigma_w2;
    out.threshold_used = std::max(out.relative_threshold, out.noise_floor);
    if (thr.fallback) return out;

    for (const auto& g : thr.maxima) {
        const double s = surf.at(g.k, g.l, g.angle_index);
        if (!(s > out.threshold_used)) break;
        if (out.candidates.size() >= options_.max_candidates) break;
        CandidateTarget c;
        c.grid = g;
        c.statistic = s;
        c.refined.tau = static_cast<double>(g.l) * cfg_.delay_cell();
        c.refined.nu = static_cast<double>(g.k) * cfg_.doppler_cell();
        c.refined.phi = cfg_.omega[g.angle_index];
        const auto sig = signature(c.refined.tau, c.refined.nu);
        const cd gain = beam_gain(f_, c.refined.phi);
        const double g2 = static_cast<double>(y_.antennas()) * std::norm(gain) * sig.norm2;
        if (g2 > 0.0) c.refined.gain = std::conj(correlation(sig, c.refined.phi)) / g2;
        out.candidates.push_back(c);
    }
    return out;
}

Estimator::AngleRefinement Estimator::refine_angle(const Signature& s, double phi_coarse) const {
    return refine_angle_with([&](double p) { return statistic(s, p); }, phi_coarse);
}

Estimator::AngleRefinement Estimator::refine_angle_with(const std::function<double(double)>& fn,
                                                        double phi_coarse) const {
    if (y_.antennas() < 2) return {phi_coarse, true};
    double half = cfg_.angle_cell();
    if (!(half > 0.0)) half = 2.0 / static_cast<double>(y_.antennas());
    const double lo = std::max(-kPi / 2.0, phi_coarse - half);
    const double hi = std::min(kPi / 2.0, phi_coarse + half);
    const double du = std::sin(hi) - std::sin(lo);
    const auto n = std::max<std::size_t>(
        17, static_cast<std::size_t>(std::ceil(du * 8.0 * static_cast<double>(y_.antennas()))) + 1);

    std::vector<double> grid(n), values(n);
    for (std::size_t i = 0; i < n; ++i) {
        grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
        values[i] = fn(grid[i]);
    }
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    if (!(*mx > 0.0) || *mx - *mn <= 1e-12 * *mx) return {phi_coarse, true};

    const auto best = static_cast<std::size_t>(mx - values.begin());
    const double a = grid[best == 0 ? 0 : best - 1];
    const double b = grid[std::min(best + 1, n - 1)];
    const double phi = golden_section_maximize(fn, a, b, options_.angle_tolerance);
    if (fn(phi) >= values[best]) return {phi, false};
    return {grid[best], false};
}

std::vector<cd> Estimator::solve_gains(std::span<const Signature> sigs,
                                       std::span<const double> phis) const {
    const auto P = static_cast<Eigen::Index>(sigs.size());
    const std::size_t n_a = y_.antennas();
    Eigen::MatrixXcd A(P, P);
    Eigen::VectorXcd rhs(P);
    std::vector<cd> gains(sigs.size());
    for (Eigen::Index p = 0; p < P; ++p) gains[static_cast<std::size_t>(p)] = beam_gain(f_, phis[p]);
    for (Eigen::Index p = 0; p < P; ++p) {
        const auto up = static_cast<std::size_t>(p);
        rhs(p) = std::conj(correlation(sigs[up], phis[up]));
        for (Eigen::Index q = p; q < P; ++q) {
            const auto uq = static_cast<std::size_t>(q);
            const cd entry = std::conj(gains[up]) * gains[uq] * steering_inner(phis[up], phis[uq], n_a) *
                             inner(sigs[up].psi_x, sigs[uq].psi_x);
            A(p, q) = entry;
            A(q, p) = std::conj(entry);
        }
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(A, Eigen::EigenvaluesOnly);
    const double lmax = eig.eigenvalues().maxCoeff();
    const double lmin = eig.eigenvalues().minCoeff();
    const double cond = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
    if (!(cond <= options_.condition_limit)) {
        std::size_t bp = 0, bq = 0;
        double worst = -1.0;
        for (Eigen::Index p = 0; p < P; ++p) {
            for (Eigen::Index q = p + 1; q < P; ++q) {
                const double denom = std::sqrt(std::abs(A(p, p).real() * A(q, q).real()));
                const double corr = denom > 0.0 ? std::abs(A(p, q)) / denom : 1.0;
                if (corr > worst) {
                    worst = corr;
                    bp = static_cast<std::size_t>(p);
                    bq = static_cast<std::size_t>(q);
                }
            }
        }
        throw IllConditionedError(bp, bq, cond);
    }
    const Eigen::VectorXcd h = A.ldlt().solve(rhs);
    return {h.data(), h.data() + h.size()};
}

double Estimator::interference(std::span<const Signature> sigs, std::span<const double> phis,
                               std::span<const cd> gains, std::size_t p) const {
    const std::size_t n_a = y_.antennas();
    const cd cp = beam_gain(f_, phis[p]);
    const double g2 = static_cast<double>(n_a) * std::norm(cp) * sigs[p].norm2;
    if (g2 == 0.0) return 0.0;
    cd cross{0.0, 0.0};
    for (std::size_t q = 0; q < sigs.size(); ++q) {
        if (q == p || gains[q] == cd{0.0, 0.0}) continue;
        const cd cq = beam_gain(f_, phis[q]);
        cross += gains[q] * std::conj(cp) * cq * steering_inner(phis[p], phis[q], n_a) *
                 inner(sigs[p].psi_x, sigs[q].psi_x);
    }
    return (correlation(sigs[p], phis[p]) * cross).real() / g2;
}

std::pair<cd, double> Estimator::residual_projection(std::span<const Signature> sigs,
                                                     std::span<const double> phis,
                                                     std::span<const cd> gains, std::size_t p) const {
    const std::size_t n_a = y_.antennas();
    const cd cp = beam_gain(f_, phis[p]);
    const double g2 = static_cast<double>(n_a) * std::norm(cp) * sigs[p].norm2;
    // g_p^H (y - sum_{q != p} h'_q g_q)
    cd residual = std::conj(correlation(sigs[p], phis[p]));
    for (std::size_t q = 0; q < sigs.size(); ++q) {
        if (q == p || gains[q] == cd{0.0, 0.0}) continue;
        const cd cq = beam_gain(f_, phis[q]);
        residual -= gains[q] * std::conj(cp) * cq * steering_inner(phis[p], phis[q], n_a) *
                    inner(sigs[p].psi_x, sigs[q].psi_x);
    }
    return {residual, g2};
}

double Estimator::conditional(std::span<const Signature> sigs, std::span<const double> phis,
                              std::span<const cd> gains, std::size_t p) const {
    const auto [residual, g2] = residual_projection(sigs, phis, gains, p);
    return g2 > 0.0 ? std::norm(residual) / g2 : 0.0;
}

double Estimator::objective(std::span<const Signature> sigs, std::span<const double> phis,
                            std::span<const cd> gains) const {
    const std::size_t n_a = y_.antennas();
    std::vector<cd> g(sigs.size());
    for (std::size_t p = 0; p < sigs.size(); ++p) g[p] = beam_gain(f_, phis[p]);
    double total = 0.0;
    for (std::size_t p = 0; p < sigs.size(); ++p) {
        total += 2.0 * (correlation(sigs[p], phis[p]) * gains[p]).real();
        for (std::size_t q = 0; q < sigs.size(); ++q) {
            const cd a_pq = std::conj(g[p]) * g[q] * steering_inner(phis[p], phis[q], n_a) *
                            inner(sigs[p].psi_x, sigs[q].psi_x);
            total -= (std::conj(gains[p]) * a_pq * gains[q]).real();
        }
    }
    return total;
}

GridPoint Estimator::nearest_cell(const TargetEstimate& e) const {
    GridPoint g;
    const double k = std::clamp(std::round(e.nu / cfg_.doppler_cell()), 0.0, static_cast<double>(cfg_.N - 1));
    const double l = std::clamp(std::round(e.tau / cfg_.delay_cell()), 0.0, static_cast<double>(cfg_.M - 1));
    g.k = static_cast<std::size_t>(k);
    g.l = static_cast<std::size_t>(l);
    g.angle_index = nearest_index(cfg_.omega, e.phi);
    return g;
}

std::vector<CandidateTarget> Estimator::solve_with_merging(std::vector<CandidateTarget>& candidates,
                                                           std::vector<Signature>& sigs) const {
    while (!candidates.empty()) {
        std::vector<double> phis;
        for (const auto& c : candidates) phis.push_back(c.refined.phi);
        try {
            const auto gains = solve_gains(sigs, phis);
            for (std::size_t p = 0; p < candidates.size(); ++p) candidates[p].refined.gain = gains[p];
            return candidates;
        } catch (const IllConditionedError& e) {
            std::size_t keep = e.first();
            std::size_t drop = e.second();
            if (keep == drop) {
                // A single candidate with a null signature carries no information.
                candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(drop));
                sigs.erase(sigs.begin() + static_cast<std::ptrdiff_t>(drop));
                continue;
            }
            if (candidates[drop].statistic > candidates[keep].statistic) std::swap(keep, drop);
            candidates[keep].flags |= kMerged;
            candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(drop));
            sigs.erase(sigs.begin() + static_cast<std::ptrdiff_t>(drop));
        }
    }
    return candidates;
}

std::vector<CandidateTarget> Estimator::refine_delay_doppler(std::vector<CandidateTarget> candidates) const {
    if (candidates.empty()) return candidates;
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const CandidateTarget& a, const CandidateTarget& b) { return a.statistic > b.statistic; });

    const double tau_cell = cfg_.delay_cell();
    const double nu_cell = cfg_.doppler_cell();
    const double q = options_.min_step_cells;
    const auto radius = static_cast<int>(options_.stencil_radius);

    std::vector<Signature> sigs;
    for (const auto& c : candidates) sigs.push_back(signature(c.refined.tau, c.refined.nu));
    std::vector<cd> gains(candidates.size(), cd{0.0, 0.0});
    double previous = -std::numeric_limits<double>::infinity();

    auto valid = [&](double tau, double nu) {
        return tau >= 0.0 && tau < cfg_.T && nu >= -0.5 * cfg_.delta_f && nu < cfg_.delta_f;
    };

    std::size_t used = 0;
    for (std::size_t iter = 0; iter < options_.max_outer_iterations; ++iter) {
        used = iter + 1;
        const auto saved_candidates = candidates;
        const auto saved_sigs = sigs;
        const auto saved_gains = gains;
        const double start_step = options_.initial_step_cells / std::pow(2.0, static_cast<double>(iter));
        double max_move = 0.0;

        for (std::size_t p = 0; p < candidates.size(); ++p) {
            std::vector<double> phis;
            for (const auto& c : candidates) phis.push_back(c.refined.phi);

            std::map<std::pair<long long, long long>, std::pair<double, Signature>> memo;
            auto evaluate = [&](double tau, double nu) -> const std::pair<double, Signature>& {
                const std::pair<long long, long long> key{std::llround(tau / (tau_cell * q)),
                                                          std::llround(nu / (nu_cell * q))};
                if (auto it = memo.find(key); it != memo.end()) return it->second;
                auto sig = signature(tau, nu);
                std::swap(sigs[p], sig);
                const double value = conditional(sigs, phis, gains, p);
                std::swap(sigs[p], sig);
                return memo.emplace(key, std::pair{value, std::move(sig)}).first->second;
            };

            double tau = candidates[p].refined.tau;
            double nu = candidates[p].refined.nu;
            double best_value = evaluate(tau, nu).first;
            for (double step = start_step; step >= q * (1.0 - 1e-12); step /= 2.0) {
                for (int moves = 0; moves < 4; ++moves) {
                    double best_tau = tau, best_nu = nu;
                    for (int i = -radius; i <= radius; ++i) {
                        for (int j = -radius; j <= radius; ++j) {
                            if (i == 0 && j == 0) continue;
                            const double t = tau + i * step * tau_cell;
                            const double v = nu + j * step * nu_cell;
                            if (!valid(t, v)) continue;
                            const double value = evaluate(t, v).first;
                            if (value > best_value) {
                                best_value = value;
                                best_tau = t;
                                best_nu = v;
                            }
                        }
                    }
                    if (best_tau == tau && best_nu == nu) break;
                    tau = best_tau;
                    nu = best_nu;
                }
            }
            const double move = std::max(std::abs(tau - candidates[p].refined.tau) / tau_cell,
                                         std::abs(nu - candidates[p].refined.nu) / nu_cell);
            max_move = std::max(max_move, move);
            sigs[p] = evaluate(tau, nu).second;
            candidates[p].refined.tau = tau;
            candidates[p].refined.nu = nu;

            if (options_.joint_updates) {
                const double before_phi = phis[p];
                const auto r = refine_angle_with(
                    [&](double phi) {
                        phis[p] = phi;
                        return conditional(sigs, phis, gains, p);
                    },
                    before_phi);
                phis[p] = r.phi;
                candidates[p].refined.phi = r.phi;
                if (cfg_.angle_cell() > 0.0)
                    max_move = std::max(max_move, std::abs(r.phi - before_phi) / cfg_.angle_cell());
                const auto [residual, g2] = residual_projection(sigs, phis, gains, p);
                gains[p] = g2 > 0.0 ? residual / g2 : cd{0.0, 0.0};
            }
        }

        const std::size_t before = candidates.size();
        solve_with_merging(candidates, sigs);
        if (candidates.empty()) return candidates;
        gains.clear();
        for (const auto& c : candidates) gains.push_back(c.refined.gain);
        std::vector<double> phis;
        for (const auto& c : candidates) phis.push_back(c.refined.phi);
        const double value = objective(sigs, phis, gains);

        if (candidates.size() == before && value < previous - 1e-12 * std::abs(previous)) {
            candidates = saved_candidates;
            sigs = saved_sigs;
            gains = saved_gains;
            continue;
        }
        previous = candidates.size() == before ? value : -std::numeric_limits<double>::infinity();
        if (max_move < options_.move_tolerance_cells) break;
    }
    for (auto& c : candidates) c.iterations_used = used;
    return candidates;
}

std::vector<CandidateTarget> Estimator::refine_all(std::vector<CandidateTarget> candidates) const {
    for (auto& c : candidates) {
        const auto sig = signature(c.refined.tau, c.refined.nu);
        const auto r = refine_angle(sig, c.refined.phi);
        c.refined.phi = r.phi;
        if (r.degraded) c.flags |= kAngleDegenerate;
    }
    candidates = refine_delay_doppler(std::move(candidates));
    std::vector<Signature> sigs;
    std::vector<double> phis;
    std::vector<cd> gains;
    for (const auto& c : candidates) {
        sigs.push_back(signature(c.refined.tau, c.refined.nu));
        phis.push_back(c.refined.phi);
        gains.push_back(c.refined.gain);
    }
    // Second angle pass against the residual of the other candidates.
    for (std::size_t p = 0; p < candidates.size(); ++p) {
        const double coarse = phis[p];
        const auto r = refine_angle_with(
            [&](double phi) {
                phis[p] = phi;
                return conditional(sigs, phis, gains, p);
            },
            coarse);
        phis[p] = r.phi;
        candidates[p].refined.phi = r.phi;
        if (r.degraded) candidates[p].flags |= kAngleDegenerate;
    }
    solve_with_merging(candidates, sigs);
    return candidates;
}

DetectionOutput Estimator::estimate() const {
    auto out = coarse_detect();
    if (out.candidates.empty()) return out;
    out.candidates = refine_all(std::move(out.candidates));

    for (std::size_t pass = 0; pass < options_.residual_passes && !out.candidates.empty(); ++pass) {
        if (out.candidates.size() >= options_.max_candidates) break;
        ReceivedSignal residual = y_;
        for (const auto& c : out.candidates) {
            auto contribution = apply_G(psi_.apply(c.refined.tau, c.refined.nu), c.refined.phi, f_);
            auto dst = residual.samples();
            const auto src = contribution.samples();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= c.refined.gain * src[i];
        }
        const auto surf = surface_of(residual);
        const auto thr = detection_threshold(surf);
        if (thr.fallback) break;
        // Round-off floor for noiseless input.
        const double threshold = std::max({thr.value, out.noise_floor, 1e-9 * out.threshold_used});

        // Cells already explained, with the sin(phi) of the explaining estimate.
        std::vector<std::pair<GridPoint, double>> occupied;
        for (const auto& c : out.candidates) {
            const double u = std::sin(c.refined.phi);
            occupied.push_back({c.grid, u});
            occupied.push_back({nearest_cell(c.refined), u});
        }
        const double rayleigh = options_.resolution_cells * 2.0 / static_cast<double>(y_.antennas());
        auto explained = [&](const GridPoint& g) {
            const double u = std::sin(cfg_.omega[g.angle_index]);
            return std::any_of(occupied.begin(), occupied.end(), [&](const auto& o) {
                if (adjacent(o.first, g)) return true;
                const bool near_dd = (o.first.k > g.k ? o.first.k - g.k : g.k - o.first.k) <= 1 &&
                                     (o.first.l > g.l ? o.first.l - g.l : g.l - o.first.l) <= 1;
                return near_dd && std::abs(u - o.second) < rayleigh;
            });
        };
        std::vector<CandidateTarget> fresh;
        for (const auto& g : thr.maxima) {
            const double s = surf.at(g.k, g.l, g.angle_index);
            if (!(s > threshold)) break;
            if (explained(g)) continue;
            if (out.candidates.size() + fresh.size() >= options_.max_candidates) break;
            CandidateTarget c;
            c.grid = g;
            c.statistic = s;
            c.flags = kResidualPass;
            c.refined.tau = static_cast<double>(g.l) * cfg_.delay_cell();
            c.refined.nu = static_cast<double>(g.k) * cfg_.doppler_cell();
            c.refined.phi = cfg_.omega[g.angle_index];
            occupied.push_back({g, std::sin(c.refined.phi)});
            fresh.push_back(c);
        }
        if (fresh.empty()) break;

        for (auto& c : fresh) {
            const auto sig = signature(c.refined.tau, c.refined.nu);
            const auto r = refine_angle(sig, c.refined.phi);
            c.refined.phi = r.phi;
            if (r.degraded) c.flags |= kAngleDegenerate;
        }
        auto all = out.candidates;
        all.insert(all.end(), fresh.begin(), fresh.end());
        out.candidates = refine_all(std::move(all));
    }
    return out;
}

double statistic_S(const ReceivedSignal& y, double tau, double nu, double phi, const BeamVector& f,
                   const DelayDopplerFrame& x, const SystemConfig& cfg, const OperatorCache* cache) {
    const Estimator est(y, x, f, cfg, cache);
    return est.statistic(est.signature(tau, nu), phi);
}

double interference_I(const ReceivedSignal& y, const TargetEstimate& target,
                      std::span<const TargetEstimate> others, const BeamVector& f,
                      const DelayDopplerFrame& x, const SystemConfig& cfg) {
    const Estimator est(y, x, f, cfg);
    std::vector<Signature> sigs{est.signature(target.tau, target.nu)};
    std::vector<double> phis{target.phi};
    std::vector<cd> gains{target.gain};
    for (const auto& o : others) {
        sigs.push_back(est.signature(o.tau, o.nu));
        phis.push_back(o.phi);
        gains.push_back(o.gain);
    }
    return est.interference(sigs, phis, gains, 0);
}

DetectionOutput coarse_detect(const ReceivedSignal& y, const DelayDopplerFrame& x,
                              const BeamVector& f, const OperatorCache& cache,
                              const SystemConfig& cfg, EstimatorOptions options) {
    return Estimator(y, x, f, cfg, &cache, options).coarse_detect();
}

Estimator::AngleRefinement refine_angle(const ReceivedSignal& y, double tau, double nu,
                                        double phi_coarse, const BeamVector& f,
                                        const DelayDopplerFrame& x, const SystemConfig& cfg,
                                        EstimatorOptions options) {
    const Estimator est(y, x, f, cfg, nullptr, options);
    return est.refine_angle(est.signature(tau, nu), phi_coarse);
}

std::vector<cd> solve_gains(const ReceivedSignal& y, std::span<const TargetEstimate> params,
                            const BeamVector& f, const DelayDopplerFrame& x,
                            const SystemConfig& cfg, EstimatorOptions options) {
    const Estimator est(y, x, f, cfg, nullptr, options);
    std::vector<Signature> sigs;
    std::vector<double> phis;
    for (const auto& p : params) {
        sigs.push_back(est.signature(p.tau, p.nu));
        phis.push_back(p.phi);
    }
    return est.solve_gains(sigs, phis);
}

std::vector<CandidateTarget> refine_delay_doppler(const ReceivedSignal& y,
                                                  std::vector<CandidateTarget> candidates,
                                                  const BeamVector& f, const DelayDopplerFrame& x,
                                                  const SystemConfig& cfg, EstimatorOptions options) {
    return Estimator(y, x, f, cfg, nullptr, options).refine_delay_doppler(std::move(candidates));
}

DetectionOutput estimate(const ReceivedSignal& y, const DelayDopplerFrame& x, const BeamVector& f,
                         const OperatorCache& cache, const SystemConfig& cfg,
                         EstimatorOptions options) {
    return Estimator(y, x, f, cfg, &cache, options).estimate();
}

}  // namespace otfs_radar
