#include "cmj/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>

namespace cmj {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
}  // namespace

// ---------------------------------------------------------------------------
// build_c1_family
// ---------------------------------------------------------------------------

namespace {

// Masses required by the offspring/immigration recipes at scale n; used both to
// build the law and to name the minimal n when they do not fit.
struct RecipeMasses {
    std::vector<std::pair<std::uint64_t, double>> pmf;
    bool fits = true;
};

RecipeMasses offspring_masses(const LimitParams& limit, std::uint64_t n, double gamma_n) {
    RecipeMasses r;
    double m_atoms = 0.0;
    double mass2 = 0.0, mass_atoms = 0.0;
    std::vector<std::pair<std::uint64_t, double>> atoms;
    for (const auto& [u, w] : limit.levy.nu0_atoms) {
        auto k = static_cast<std::uint64_t>(std::ceil(u * static_cast<double>(n)));
        if (k < 2) k = 2;
        double p = w / (static_cast<double>(n) * gamma_n);
        atoms.emplace_back(k, p);
        mass_atoms += p;
        m_atoms -= u * w;
    }
    double m_extra = limit.levy.m - m_atoms;
    if (m_extra > 1e-12)
        throw std::invalid_argument(
            "build_c1_family: limit drift m must be <= -sum(u*w) over nu0 atoms "
            "(the atom recipe already contributes that drift)");
    double theta = -m_extra;
    if (theta > 0.0) mass2 = theta / gamma_n;

    double p1 = 1.0 - mass2 - mass_atoms;
    r.fits = p1 >= 0.0 && mass2 <= 1.0 && mass_atoms <= 1.0;
    if (!r.fits) return r;
    r.pmf.emplace_back(1, p1);
    if (mass2 > 0.0) r.pmf.emplace_back(2, mass2);
    for (auto& [k, p] : atoms) {
        bool merged = false;
        for (auto& [k0, p0] : r.pmf)
            if (k0 == k) {
                p0 += p;
                merged = true;
                break;
            }
        if (!merged) r.pmf.emplace_back(k, p);
    }
    return r;
}

RecipeMasses immigration_masses(const LimitParams& limit, std::uint64_t n, double gamma_n) {
    RecipeMasses r;
    double kappa = limit.levy.a / limit.gamma_star;
    if (kappa < 1.0 - 1e-12 || kappa > 2.0 + 1e-12)
        throw std::invalid_argument(
            "build_c1_family: immigration drift a must lie in [gamma_star, 2*gamma_star]; "
            "batch sizes are >= 1, so smaller drifts are unreachable and larger ones "
            "need batches beyond the built-in k=1/k=2 mix");
    double mass2 = std::clamp(kappa - 1.0, 0.0, 1.0);
    double mass_atoms = 0.0;
    std::vector<std::pair<std::uint64_t, double>> atoms;
    for (const auto& [u, w] : limit.levy.nu1_atoms) {
        auto k = static_cast<std::uint64_t>(std::ceil(u * static_cast<double>(n)));
        if (k < 3) k = 3;  // keep clear of the drift masses
        double p = w / gamma_n;
        atoms.emplace_back(k, p);
        mass_atoms += p;
    }
    double q1 = 1.0 - mass2 - mass_atoms;
    r.fits = q1 >= 0.0;
    if (!r.fits) return r;
    if (q1 > 0.0) r.pmf.emplace_back(1, q1);
    if (mass2 > 0.0) r.pmf.emplace_back(2, mass2);
    for (auto& [k, p] : atoms) {
        bool merged = false;
        for (auto& [k0, p0] : r.pmf)
            if (k0 == k) {
                p0 += p;
                merged = true;
                break;
            }
        if (!merged) r.pmf.emplace_back(k, p);
    }
    // q1 may be exactly 0 when kappa = 2 and no atoms
    if (r.pmf.empty()) r.fits = false;
    return r;
}

}  // namespace

ModelParams build_c1_family(const LimitParams& limit, const LifetimeLaw& lifetime,
                            std::uint64_t n, double beta) {
    limit.validate();
    if (n < 1) throw std::invalid_argument("build_c1_family: n must be >= 1");
    if (limit.gamma_star <= 0.0)
        throw std::invalid_argument("build_c1_family: recipes need gamma_star > 0");
    if (limit.levy.c != 0.0)
        throw std::invalid_argument(
            "build_c1_family: c > 0 is not realizable with batch sizes >= 1; "
            "built-in recipes cover c = 0 only");
    auto [eta, sigma_half] = lifetime.moments();
    if (std::abs(eta - limit.eta) > 1e-9 || std::abs(sigma_half - limit.sigma) > 1e-9)
        throw std::invalid_argument(
            "build_c1_family: lifetime law moments (eta, sigma) must match the limit "
            "parameters (got eta=" + fmt17(eta) + ", sigma=" + fmt17(sigma_half) + ")");
    if (beta < 0.0) throw std::invalid_argument("build_c1_family: beta must be >= 0");
    double bm = limit.b + limit.levy.m;
    if (bm + beta * limit.sigma * limit.lambda < 0.0)
        throw std::invalid_argument(
            "build_c1_family: need b + m + beta*sigma*lambda >= 0; this configuration "
            "requires an explicit beta > " + fmt17(-bm / (limit.sigma * limit.lambda)));

    double gamma_n = limit.gamma_star * static_cast<double>(n);
    double lambda_n = (1.0 - limit.b / gamma_n) / eta;
    if (lambda_n <= 0.0) {
        auto n_min = static_cast<std::uint64_t>(std::floor(limit.b / limit.gamma_star)) + 1;
        throw std::invalid_argument("build_c1_family: lambda_n <= 0 at n=" + std::to_string(n) +
                                    "; minimal valid n is " + std::to_string(n_min));
    }

    const bool with_immigration = limit.zeta > 0.0;
    auto fits_at = [&](std::uint64_t nn) {
        double g = limit.gamma_star * static_cast<double>(nn);
        if (!offspring_masses(limit, nn, g).fits) return false;
        return !with_immigration || immigration_masses(limit, nn, g).fits;
    };
    auto off = offspring_masses(limit, n, gamma_n);
    auto imm = with_immigration ? immigration_masses(limit, n, gamma_n) : RecipeMasses{};
    if (!off.fits || (with_immigration && !imm.fits)) {
        std::uint64_t probe = n;
        for (int i = 0; i < 64 && !fits_at(probe); ++i) probe *= 2;
        // refine to the minimal fitting n by bisection
        std::uint64_t lo = n, hi = probe;
        while (lo + 1 < hi) {
            std::uint64_t mid = lo + (hi - lo) / 2;
            if (fits_at(mid))
                hi = mid;
            else
                lo = mid;
        }
        throw std::invalid_argument(
            "build_c1_family: recipe probabilities leave [0,1] at n=" + std::to_string(n) +
            "; minimal valid n is " + std::to_string(hi));
    }

    ModelParams p;
    p.n = n;
    p.gamma_n = gamma_n;
    p.lambda_n = lambda_n;
    p.zeta_n = limit.zeta;
    p.beta = beta;
    p.lifetime = lifetime;
    p.offspring = DiscreteLaw(off.pmf);
    p.immigration = with_immigration ? DiscreteLaw(imm.pmf) : DiscreteLaw({{1, 1.0}});
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

MeanStderr empirical_laplace(std::span<const double> samples, double z) {
    if (samples.size() < 2)
        throw std::invalid_argument("empirical_laplace: need at least 2 samples");
    if (z < 0.0) throw std::domain_error("empirical_laplace: z must be >= 0");
    double mean = 0.0;
    for (double s : samples) mean += std::exp(-z * s);
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (double s : samples) {
        double d = std::exp(-z * s) - mean;
        var += d * d;
    }
    var /= static_cast<double>(samples.size() - 1);
    return {mean, std::sqrt(var / static_cast<double>(samples.size()))};
}

GridFunction error_eps1(const std::vector<double>& ancestor_lifetimes, const ModelParams& params,
                        const SizeBiasedLifetime& ancestor_law, double T, std::size_t points) {
    if (points < 2) throw std::invalid_argument("error_eps1: need >= 2 points");
    double h = T / static_cast<double>(points - 1);
    GridFunction g = GridFunction::zeros(h, points);
    std::vector<double> sorted = ancestor_lifetimes;
    std::sort(sorted.begin(), sorted.end());
    double n = static_cast<double>(params.n);
    for (std::size_t i = 0; i < points; ++i) {
        double t = g.t(i);
        double ut = params.gamma_n * t;
        auto alive = static_cast<double>(
            sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), ut));
        double expected = static_cast<double>(sorted.size()) * ancestor_law.tail(ut);
        g[i] = std::exp(-params.beta * t) * (alive - expected) / n;
    }
    return g;
}

GridFunction error_eps5_core(double z0_over_n, double prefactor, double total_integral,
                             const GridFunction& kernel_cumulative, double gamma_n,
                             double decay_rate, double T, std::size_t points) {
    if (points < 2) throw std::invalid_argument("error_eps5_core: need >= 2 points");
    double h = T / static_cast<double>(points - 1);
    GridFunction g = GridFunction::zeros(h, points);
    for (std::size_t i = 0; i < points; ++i) {
        double t = g.t(i);
        double tail = (total_integral - kernel_cumulative.at(gamma_n * t)) / gamma_n;
        g[i] = z0_over_n * (prefactor * tail - std::exp(-decay_rate * t));
    }
    return g;
}

GridFunction error_eps5(double z0_over_n, const ResolventKernel& R, const LimitParams& limit,
                        double T, std::size_t points) {
    double lm = R.params.lambda_m();
    double x = lm * R.eta_beta;
    if (x <= 0.0 || x >= 1.0)
        throw std::invalid_argument("error_eps5: need 0 < lambda*m*eta_beta < 1");
    double prefactor = R.params.gamma_n * (1.0 - x) / x;
    double rate = (limit.b + limit.levy.m) / (limit.sigma * limit.lambda) + R.params.beta;
    return error_eps5_core(z0_over_n, prefactor, resolvent_total_integral(R),
                           R.base.cumulative(), R.params.gamma_n, rate, T, points);
}

// ---------------------------------------------------------------------------
// run_convergence
// ---------------------------------------------------------------------------

void ConvergenceConfig::validate() const {
    if (n_sequence.empty()) throw std::invalid_argument("ConvergenceConfig: empty n_sequence");
    for (std::size_t i = 1; i < n_sequence.size(); ++i)
        if (n_sequence[i] <= n_sequence[i - 1])
            throw std::invalid_argument("ConvergenceConfig: n_sequence must be strictly increasing");
    if (replicas < 100) throw std::invalid_argument("ConvergenceConfig: replicas must be >= 100");
    if (times.empty() || z_values.empty())
        throw std::invalid_argument("ConvergenceConfig: need evaluation times and z values");
    for (double t : times)
        if (t <= 0.0) throw std::invalid_argument("ConvergenceConfig: times must be > 0");
    for (double z : z_values)
        if (z < 0.0) throw std::invalid_argument("ConvergenceConfig: z values must be >= 0");
    if (!(alpha > 1.0 && alpha < 2.0))
        throw std::invalid_argument("ConvergenceConfig: alpha must be in (1,2)");
    if (z0 <= 0.0) throw std::invalid_argument("ConvergenceConfig: z0 must be > 0");
    if (beta < 0.0) throw std::invalid_argument("ConvergenceConfig: beta must be >= 0");
    if (diag_points < 2) throw std::invalid_argument("ConvergenceConfig: diag_points >= 2");
    if (resolvent_h <= 0.0 || oracle_dt <= 0.0)
        throw std::invalid_argument("ConvergenceConfig: steps must be > 0");
}

namespace {

struct ReplicaStats {
    std::vector<double> damped;  // damped rescaled value per eval time
    double eps1_sup = 0.0;
    bool ok = false;
    std::string error;
};

}  // namespace

ConvergenceReport run_convergence(const ConvergenceConfig& cfg, const LimitParams& limit,
                                  const LifetimeLaw& lifetime) {
    cfg.validate();
    limit.validate();
    if (limit.b + limit.levy.m + cfg.beta * limit.sigma * limit.lambda <= 0.0)
        throw std::invalid_argument(
            "run_convergence: b + m + beta*sigma*lambda must be > 0; choose beta > " +
            fmt17(-(limit.b + limit.levy.m) / (limit.sigma * limit.lambda)));

    const double t_max = *std::max_element(cfg.times.begin(), cfg.times.end());
    ConvergenceReport report;

    unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());

    for (std::size_t ni = 0; ni < cfg.n_sequence.size(); ++ni) {
        const std::uint64_t n = cfg.n_sequence[ni];
        ModelParams params = build_c1_family(limit, lifetime, n, cfg.beta);
        const auto z0_n = static_cast<std::int64_t>(std::floor(static_cast<double>(n) * cfg.z0));
        const double x0 = static_cast<double>(z0_n) / static_cast<double>(n);
        const double horizon = params.gamma_n * t_max;
        SizeBiasedLifetime ancestor_law(lifetime, cfg.beta, params.gamma_n);
        // eps1 lives where the ancestors do: rescaled horizon O(1/gamma_n)
        const double eps1_T = ancestor_law.tail_grid().horizon() / params.gamma_n;

        std::vector<ReplicaStats> stats(cfg.replicas);
        auto worker = [&](std::uint64_t lo, std::uint64_t hi) {
            for (std::uint64_t r = lo; r < hi; ++r) {
                ReplicaStats& st = stats[r];
                try {
                    RngStream rng = RngStream::substream(
                        cfg.seed, (static_cast<std::uint64_t>(ni) << 40) + r);
                    std::vector<double> ancestors(static_cast<std::size_t>(z0_n));
                    for (double& a : ancestors) a = ancestor_law.sample(rng);
                    SimOptions opts;
                    opts.z0 = z0_n;
                    opts.horizon = horizon;
                    opts.record = false;
                    opts.forced_ancestor_lifetimes = ancestors;
                    opts.event_cap = cfg.event_cap;
                    SimResult sim = simulate(params, opts, rng);

                    st.damped.resize(cfg.times.size());
                    for (std::size_t ti = 0; ti < cfg.times.size(); ++ti) {
                        double t = cfg.times[ti];
                        st.damped[ti] =
                            std::exp(-cfg.beta * t) *
                            static_cast<double>(sim.path.value_at(params.gamma_n * t)) /
                            static_cast<double>(n);
                    }
                    st.eps1_sup = error_eps1(sim.ancestor_lifetimes, params, ancestor_law,
                                             eps1_T, cfg.diag_points)
                                      .sup_norm();
                    st.ok = true;
                } catch (const std::exception& e) {
                    st.error = e.what();  // overflow guard etc.; report stays partial
                }
            }
        };
        if (threads <= 1 || cfg.replicas < 2 * threads) {
            worker(0, cfg.replicas);
        } else {
            std::vector<std::thread> pool;
            std::uint64_t chunk = (cfg.replicas + threads - 1) / threads;
            for (unsigned w = 0; w < threads; ++w) {
                std::uint64_t lo = w * chunk, hi = std::min<std::uint64_t>(cfg.replicas, lo + chunk);
                if (lo < hi) pool.emplace_back(worker, lo, hi);
            }
            for (auto& th : pool) th.join();
        }

        // Fixed replica-order reduction over completed replicas.
        std::vector<const ReplicaStats*> done;
        done.reserve(cfg.replicas);
        for (const auto& st : stats)
            if (st.ok) done.push_back(&st);
        if (done.size() < cfg.replicas) {
            std::uint64_t failed = cfg.replicas - done.size();
            std::string first;
            for (const auto& st : stats)
                if (!st.ok) {
                    first = st.error;
                    break;
                }
            report.partial = true;
            report.failures.push_back("n=" + std::to_string(n) + ": " + std::to_string(failed) +
                                      " replica(s) failed, report is partial; first error: " +
                                      first);
        }
        if (done.size() < 2)
            throw std::runtime_error("run_convergence: fewer than 2 replicas completed at n=" +
                                     std::to_string(n) +
                                     (stats.empty() || stats[0].ok ? "" : "; " + stats[0].error));
        const auto completed = static_cast<double>(done.size());

        std::vector<double> values(done.size());
        for (std::size_t ti = 0; ti < cfg.times.size(); ++ti) {
            double t = cfg.times[ti];
            for (std::size_t r = 0; r < done.size(); ++r) values[r] = done[r]->damped[ti];
            for (double z : cfg.z_values) {
                MeanStderr ml = empirical_laplace(values, z);
                double oracle = laplace_cbi(limit, x0, z * std::exp(-cfg.beta * t), t, cfg.oracle_dt);
                report.cells.push_back(
                    {n, t, z, ml.mean, ml.stderr_, oracle, std::abs(ml.mean - oracle)});
            }
        }

        DiagnosticsRow diag{};
        diag.n = n;
        double eps1_acc = 0.0;
        for (const auto* st : done) eps1_acc += st->eps1_sup;
        diag.eps1_sup_mean = eps1_acc / completed;

        double m1 = 0.0;
        for (std::size_t ti = 0; ti < cfg.times.size(); ++ti) {
            double acc = 0.0;
            for (const auto* st : done) acc += st->damped[ti];
            m1 = std::max(m1, acc / completed);
        }
        diag.moment1_sup = m1;
        {
            auto ti = static_cast<std::size_t>(
                std::max_element(cfg.times.begin(), cfg.times.end()) - cfg.times.begin());
            double acc = 0.0;
            for (const auto* st : done) acc += std::pow(st->damped[ti], cfg.alpha);
            diag.moment_alpha = acc / completed;
        }

        // eps5 is deterministic per n; solve the damped kernel out past the horizon.
        ResolventParams rp{params.lambda_n, params.offspring.mean(), cfg.beta, params.gamma_n};
        double Tsolve = params.gamma_n * (t_max * 1.5 + 2.0);
        ResolventKernel R =
            solve_resolvent(lifetime, rp, Tsolve, std::min(cfg.resolvent_h, Tsolve / 128.0));
        diag.eps5_sup = error_eps5(x0, R, limit, t_max, cfg.diag_points).sup_norm();
        report.diagnostics.push_back(diag);
    }

    // Tolerance evaluation.
    const auto& tol = cfg.tol;
    report.pass_gap = true;
    report.pass_monotone = true;
    report.pass_moment = true;
    const std::uint64_t n_last = cfg.n_sequence.back();
    for (const auto& c : report.cells) {
        if (c.n != n_last) continue;
        if (c.gap >= tol.gap_abs + tol.gap_se_mult * c.stderr_) {
            report.pass_gap = false;
            report.failures.push_back("gap at n=" + std::to_string(c.n) + " t=" + fmt17(c.t) +
                                      " z=" + fmt17(c.z) + " is " + fmt17(c.gap) +
                                      " >= " + fmt17(tol.gap_abs + tol.gap_se_mult * c.stderr_));
        }
    }
    if (tol.require_monotone_gap) {
        for (std::size_t ti = 0; ti < cfg.times.size(); ++ti)
            for (std::size_t zi = 0; zi < cfg.z_values.size(); ++zi) {
                const LaplaceCell* prev = nullptr;
                for (const auto& c : report.cells) {
                    if (c.t != cfg.times[ti] || c.z != cfg.z_values[zi]) continue;
                    if (prev) {
                        double slack = tol.monotone_se_mult * (prev->stderr_ + c.stderr_);
                        if (c.gap > prev->gap + slack) {
                            report.pass_monotone = false;
                            report.failures.push_back(
                                "gap not nonincreasing at t=" + fmt17(c.t) + " z=" + fmt17(c.z) +
                                ": gap(n=" + std::to_string(prev->n) + ")=" + fmt17(prev->gap) +
                                " -> gap(n=" + std::to_string(c.n) + ")=" + fmt17(c.gap));
                        }
                    }
                    prev = &c;
                }
            }
    }
    auto ratio_check = [&](auto getter, const char* name) {
        double lo = kInf, hi = 0.0;
        for (const auto& d : report.diagnostics) {
            lo = std::min(lo, getter(d));
            hi = std::max(hi, getter(d));
        }
        if (lo <= 0.0 || hi / lo >= tol.moment_ratio_max) {
            report.pass_moment = false;
            report.failures.push_back(std::string(name) + " max/min ratio " +
                                      fmt17(lo > 0 ? hi / lo : kInf) + " >= " +
                                      fmt17(tol.moment_ratio_max));
        }
    };
    ratio_check([](const DiagnosticsRow& d) { return d.moment1_sup; }, "first moment");
    ratio_check([](const DiagnosticsRow& d) { return d.moment_alpha; }, "alpha moment");
    return report;
}

void ConvergenceReport::write_cells_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_cells_csv: cannot open " + path);
    out << "n,t,z,empirical,stderr,oracle,gap\n";
    for (const auto& c : cells)
        out << c.n << "," << fmt17(c.t) << "," << fmt17(c.z) << "," << fmt17(c.empirical) << ","
            << fmt17(c.stderr_) << "," << fmt17(c.oracle) << "," << fmt17(c.gap) << "\n";
}

void ConvergenceReport::write_diagnostics_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_diagnostics_csv: cannot open " + path);
    out << "n,eps1_sup_mean,eps5_sup,moment1_sup,moment_alpha\n";
    for (const auto& d : diagnostics)
        out << d.n << "," << fmt17(d.eps1_sup_mean) << "," << fmt17(d.eps5_sup) << ","
            << fmt17(d.moment1_sup) << "," << fmt17(d.moment_alpha) << "\n";
}

}  // namespace cmj
