#include "cmj/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cmj {

namespace {

constexpr double kTailEps = 1e-12;

// Exact \int_{t1}^{t2} e^{-q s} (A + B s) ds for a linear segment.
double linear_damped_integral(double A, double B, double q, double t1, double t2) {
    if (t2 <= t1) return 0.0;
    if (q == 0.0) {
        return A * (t2 - t1) + 0.5 * B * (t2 * t2 - t1 * t1);
    }
    auto prim = [&](double t) {
        // -(1/q) e^{-qt} (A + B t) - (B/q^2) e^{-qt}
        return -std::exp(-q * t) * ((A + B * t) / q + B / (q * q));
    };
    return prim(t2) - prim(t1);
}

}  // namespace

// ---------------------------------------------------------------------------
// LifetimeLaw
// ---------------------------------------------------------------------------

LifetimeLaw LifetimeLaw::exponential(double rate) {
    if (rate <= 0.0) throw std::invalid_argument("LifetimeLaw::exponential: rate must be > 0");
    return LifetimeLaw(Exponential{rate});
}

LifetimeLaw LifetimeLaw::uniform(double lo, double hi) {
    if (lo < 0.0 || hi <= lo)
        throw std::invalid_argument("LifetimeLaw::uniform: need 0 <= lo < hi");
    return LifetimeLaw(Uniform{lo, hi});
}

LifetimeLaw LifetimeLaw::point_mass(double c) {
    if (c <= 0.0) throw std::invalid_argument("LifetimeLaw::point_mass: c must be > 0");
    return LifetimeLaw(PointMass{c});
}

LifetimeLaw LifetimeLaw::empirical(double h, std::vector<double> cdf) {
    if (h <= 0.0) throw std::invalid_argument("LifetimeLaw::empirical: step must be > 0");
    if (cdf.size() < 2) throw std::invalid_argument("LifetimeLaw::empirical: need >= 2 cdf points");
    if (cdf.front() != 0.0)
        throw std::invalid_argument("LifetimeLaw::empirical: cdf must start at 0");
    if (std::abs(cdf.back() - 1.0) > 1e-9)
        throw std::invalid_argument("LifetimeLaw::empirical: terminal cdf must be 1");
    for (std::size_t i = 1; i < cdf.size(); ++i)
        if (cdf[i] < cdf[i - 1] - 1e-15)
            throw std::invalid_argument("LifetimeLaw::empirical: cdf must be nondecreasing");
    cdf.back() = 1.0;
    return LifetimeLaw(EmpiricalGrid{h, std::move(cdf)});
}

double LifetimeLaw::tail(double t) const {
    if (t < 0.0) throw std::domain_error("LifetimeLaw::tail: t must be >= 0");
    return std::visit(
        [&](const auto& r) -> double {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                return std::exp(-r.rate * t);
            } else if constexpr (std::is_same_v<T, Uniform>) {
                if (t < r.lo) return 1.0;
                if (t >= r.hi) return 0.0;
                return (r.hi - t) / (r.hi - r.lo);
            } else if constexpr (std::is_same_v<T, PointMass>) {
                return t < r.c ? 1.0 : 0.0;
            } else {
                double x = t / r.h;
                auto i = static_cast<std::size_t>(x);
                if (i >= r.cdf.size() - 1) return 0.0;
                double w = x - static_cast<double>(i);
                double cdf = r.cdf[i] * (1.0 - w) + r.cdf[i + 1] * w;
                return 1.0 - cdf;
            }
        },
        repr_);
}

double LifetimeLaw::tail_node(double t) const {
    if (const auto* pm = std::get_if<PointMass>(&repr_)) {
        if (std::abs(t - pm->c) <= 1e-9 * std::max(1.0, pm->c)) return 0.5;
    }
    return tail(t);
}

std::pair<double, double> LifetimeLaw::moments() const {
    return std::visit(
        [&](const auto& r) -> std::pair<double, double> {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                double eta = 1.0 / r.rate;
                return {eta, eta * eta};  // E[T^2]/2 = 1/rate^2
            } else if constexpr (std::is_same_v<T, Uniform>) {
                double eta = 0.5 * (r.lo + r.hi);
                double second = (r.lo * r.lo + r.lo * r.hi + r.hi * r.hi) / 3.0;
                return {eta, 0.5 * second};
            } else if constexpr (std::is_same_v<T, PointMass>) {
                return {r.c, 0.5 * r.c * r.c};
            } else {
                // eta = int tail dt (tail piecewise linear -> trapezoid exact);
                // sigma_half = int t tail(t) dt, exact per cell.
                double eta = 0.0, sh = 0.0;
                for (std::size_t i = 0; i + 1 < r.cdf.size(); ++i) {
                    double t1 = static_cast<double>(i) * r.h;
                    double t2 = t1 + r.h;
                    double a = 1.0 - r.cdf[i];
                    double b = 1.0 - r.cdf[i + 1];
                    eta += 0.5 * (a + b) * r.h;
                    // tail(s) = a + (b-a)(s-t1)/h on [t1,t2]; integrate s*tail(s)
                    double A = a - (b - a) * t1 / r.h;
                    double B = (b - a) / r.h;
                    sh += A * 0.5 * (t2 * t2 - t1 * t1) + B * (t2 * t2 * t2 - t1 * t1 * t1) / 3.0;
                }
                return {eta, sh};
            }
        },
        repr_);
}

double LifetimeLaw::integrated_damped_tail(double q, double t1, double t2) const {
    if (t1 < 0.0 || t2 < t1) throw std::domain_error("integrated_damped_tail: bad interval");
    const double inf = std::numeric_limits<double>::infinity();
    return std::visit(
        [&](const auto& r) -> double {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                double c = r.rate + q;
                double hi = (t2 == inf) ? 0.0 : std::exp(-c * t2);
                return (std::exp(-c * t1) - hi) / c;
            } else if constexpr (std::is_same_v<T, Uniform>) {
                double b = std::min(t2, r.hi);
                double s = 0.0;
                double m = std::min(b, r.lo);
                if (m > t1) s += linear_damped_integral(1.0, 0.0, q, t1, m);
                double lo2 = std::max(t1, r.lo);
                if (b > lo2) {
                    double A = r.hi / (r.hi - r.lo);
                    double B = -1.0 / (r.hi - r.lo);
                    s += linear_damped_integral(A, B, q, lo2, b);
                }
                return s;
            } else if constexpr (std::is_same_v<T, PointMass>) {
                double b = std::min(t2, r.c);
                if (b <= t1) return 0.0;
                return linear_damped_integral(1.0, 0.0, q, t1, b);
            } else {
                double end = r.h * static_cast<double>(r.cdf.size() - 1);
                double b = std::min(t2, end);
                double s = 0.0;
                for (std::size_t i = 0; i + 1 < r.cdf.size(); ++i) {
                    double c1 = static_cast<double>(i) * r.h;
                    double c2 = c1 + r.h;
                    double lo = std::max(t1, c1), hi = std::min(b, c2);
                    if (hi <= lo) continue;
                    double a = 1.0 - r.cdf[i];
                    double bb = 1.0 - r.cdf[i + 1];
                    double A = a - (bb - a) * c1 / r.h;
                    double B = (bb - a) / r.h;
                    s += linear_damped_integral(A, B, q, lo, hi);
                }
                return s;
            }
        },
        repr_);
}

double LifetimeLaw::support_upper(double eps) const {
    return std::visit(
        [&](const auto& r) -> double {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                return -std::log(eps) / r.rate;
            } else if constexpr (std::is_same_v<T, Uniform>) {
                return r.hi;
            } else if constexpr (std::is_same_v<T, PointMass>) {
                return r.c;
            } else {
                return r.h * static_cast<double>(r.cdf.size() - 1);
            }
        },
        repr_);
}

double LifetimeLaw::sample(RngStream& rng) const {
    return std::visit(
        [&](const auto& r) -> double {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                return rng.exponential(r.rate);
            } else if constexpr (std::is_same_v<T, Uniform>) {
                return r.lo + rng.uniform01() * (r.hi - r.lo);
            } else if constexpr (std::is_same_v<T, PointMass>) {
                rng.next_u64();  // keep one draw per sample for stream alignment
                return r.c;
            } else {
                double u = rng.uniform01();
                // invert the piecewise-linear cdf
                auto it = std::lower_bound(r.cdf.begin(), r.cdf.end(), u);
                if (it == r.cdf.begin()) return 0.0;
                auto i = static_cast<std::size_t>(it - r.cdf.begin());
                if (i >= r.cdf.size()) return r.h * static_cast<double>(r.cdf.size() - 1);
                double c0 = r.cdf[i - 1], c1 = r.cdf[i];
                double w = (c1 > c0) ? (u - c0) / (c1 - c0) : 0.0;
                return r.h * (static_cast<double>(i - 1) + w);
            }
        },
        repr_);
}

// ---------------------------------------------------------------------------
// DiscreteLaw
// ---------------------------------------------------------------------------

DiscreteLaw::DiscreteLaw(std::vector<std::pair<std::uint64_t, double>> pmf)
    : pmf_(std::move(pmf)) {
    if (pmf_.empty()) throw std::invalid_argument("DiscreteLaw: empty pmf");
    std::sort(pmf_.begin(), pmf_.end());
    double total = 0.0;
    for (auto& [k, p] : pmf_) {
        if (k < 1) throw std::invalid_argument("DiscreteLaw: support must be >= 1");
        if (p < 0.0 || p > 1.0) throw std::invalid_argument("DiscreteLaw: probability outside [0,1]");
        total += p;
        mean_ += static_cast<double>(k) * p;
        cum_.push_back(total);
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("DiscreteLaw: probabilities must sum to 1 (within 1e-12)");
    cum_.back() = 1.0;
}

double DiscreteLaw::pgf(double s) const {
    if (s < 0.0 || s > 1.0) throw std::domain_error("DiscreteLaw::pgf: s must be in [0,1]");
    double g = 0.0;
    for (const auto& [k, p] : pmf_) g += p * std::pow(s, static_cast<double>(k));
    return g;
}

std::uint64_t DiscreteLaw::sample(RngStream& rng) const {
    double u = rng.uniform01();
    auto it = std::lower_bound(cum_.begin(), cum_.end(), u);
    auto i = static_cast<std::size_t>(it - cum_.begin());
    if (i >= pmf_.size()) i = pmf_.size() - 1;
    return pmf_[i].first;
}

// ---------------------------------------------------------------------------
// ModelParams / LevyTriple
// ---------------------------------------------------------------------------

void ModelParams::validate() const {
    if (n < 1) throw std::invalid_argument("ModelParams: n must be >= 1");
    if (gamma_n <= 0.0) throw std::invalid_argument("ModelParams: gamma_n must be > 0");
    if (lambda_n < 0.0) throw std::invalid_argument("ModelParams: lambda_n must be >= 0");
    if (zeta_n < 0.0) throw std::invalid_argument("ModelParams: zeta_n must be >= 0");
    if (beta < 0.0) throw std::invalid_argument("ModelParams: beta must be >= 0");
}

double ModelParams::criticality_index() const {
    return lambda_n * lifetime.mean() * offspring.mean();
}

Criticality ModelParams::classify(double eps) const {
    double x = criticality_index();
    if (std::abs(x - 1.0) <= eps) return Criticality::Critical;
    return x < 1.0 ? Criticality::Subcritical : Criticality::Supercritical;
}

void LevyTriple::validate() const {
    if (m > 0.0) throw std::invalid_argument("LevyTriple: m must be <= 0");
    if (c < 0.0) throw std::invalid_argument("LevyTriple: c must be >= 0");
    if (a < 0.0) throw std::invalid_argument("LevyTriple: a must be >= 0");
    double s0 = 0.0, s1 = 0.0;
    for (const auto& [u, w] : nu0_atoms) {
        if (u <= 0.0 || w <= 0.0) throw std::invalid_argument("LevyTriple: nu0 atoms need u,w > 0");
        s0 += w * std::min(u, u * u);
    }
    for (const auto& [u, w] : nu1_atoms) {
        if (u <= 0.0 || w <= 0.0) throw std::invalid_argument("LevyTriple: nu1 atoms need u,w > 0");
        s1 += w * std::min(1.0, u);
    }
    if (!std::isfinite(s0) || !std::isfinite(s1))
        throw std::invalid_argument("LevyTriple: atom sums must be finite");
}

// ---------------------------------------------------------------------------
// Mechanisms
// ---------------------------------------------------------------------------

double scaled_branching_mechanism(const ModelParams& p, double z) {
    double nn = static_cast<double>(p.n);
    if (z < 0.0 || z > nn)
        throw std::domain_error("scaled_branching_mechanism: z must be in [0, n]");
    double s = 1.0 - z / nn;
    return nn * p.gamma_n * (p.offspring.pgf(s) - s);
}

double scaled_immigration_mechanism(const ModelParams& p, double z) {
    double nn = static_cast<double>(p.n);
    if (z < 0.0 || z > nn)
        throw std::domain_error("scaled_immigration_mechanism: z must be in [0, n]");
    double s = 1.0 - z / nn;
    return p.gamma_n * (1.0 - p.immigration.pgf(s));
}

double branching_mechanism(const LevyTriple& t, double z) {
    if (z < 0.0) throw std::domain_error("branching_mechanism: z must be >= 0");
    double v = t.m * z + t.c * z * z;
    for (const auto& [u, w] : t.nu0_atoms) v += w * (std::expm1(-z * u) + z * u);
    return v;
}

double immigration_mechanism(const LevyTriple& t, double z) {
    if (z < 0.0) throw std::domain_error("immigration_mechanism: z must be >= 0");
    double v = t.a * z;
    for (const auto& [u, w] : t.nu1_atoms) v += w * (-std::expm1(-z * u));
    return v;
}

double branching_mechanism_per_rate(const LevyTriple& t, double lambda, double z) {
    if (lambda <= 0.0)
        throw std::domain_error("branching_mechanism_per_rate: lambda must be > 0");
    if (z < 0.0) throw std::domain_error("branching_mechanism_per_rate: z must be >= 0");
    double v = (t.m / lambda) * z + t.c * z * z;
    for (const auto& [u, w] : t.nu0_atoms) v += w * (std::expm1(-z * u) + z * u);
    return v;
}

// ---------------------------------------------------------------------------
// Damped integrals and the size-biased law
// ---------------------------------------------------------------------------

double damped_mean_lifetime(const LifetimeLaw& law, double beta, double gamma_n, double step) {
    if (beta < 0.0 || gamma_n <= 0.0)
        throw std::invalid_argument("damped_mean_lifetime: beta >= 0, gamma_n > 0 required");
    double q = beta / gamma_n;
    double T = law.support_upper(kTailEps);
    if (q > 0.0) T = std::min(T, -std::log(kTailEps) / q);
    // one cell past the support so the jump-midpoint convention integrates steps exactly
    auto npts = grid_points(std::max(T, step), step) + 1;
    double s = 0.0;
    double prev = law.tail_node(0.0);
    for (std::size_t i = 1; i < npts; ++i) {
        double t = static_cast<double>(i) * step;
        double cur = std::exp(-q * t) * law.tail_node(t);
        s += 0.5 * step * (prev + cur);
        prev = cur;
    }
    return s;
}

SizeBiasedLifetime::SizeBiasedLifetime(const LifetimeLaw& law, double beta, double gamma_n,
                                       double step) {
    if (beta < 0.0 || gamma_n <= 0.0)
        throw std::invalid_argument("SizeBiasedLifetime: beta >= 0, gamma_n > 0 required");
    double q = beta / gamma_n;
    double T = law.support_upper(kTailEps);
    if (q > 0.0) T = std::min(T, -std::log(kTailEps) / q);
    T = std::max(T, 2.0 * step);
    auto npts = grid_points(T, step) + 1;

    // weight(t) = int_t^inf e^{-q(s-t)} tail(s) ds; backward recursion, exact per cell
    // for the damping factor and trapezoid for the tail part.
    std::vector<double> damped(npts);
    for (std::size_t i = 0; i < npts; ++i)
        damped[i] = std::exp(-q * static_cast<double>(i) * step) * law.tail_node(static_cast<double>(i) * step);
    // W(t_i) = e^{q t_i} * int_{t_i}^T e^{-q s} tail(s) ds
    std::vector<double> w(npts, 0.0);
    for (std::size_t i = npts - 1; i-- > 0;) {
        double cell = 0.5 * step * (damped[i] + damped[i + 1]);
        w[i] = w[i + 1] + cell;  // still in e^{-qs}-weighted units
    }
    std::vector<double> vals(npts);
    for (std::size_t i = 0; i < npts; ++i)
        vals[i] = std::exp(q * static_cast<double>(i) * step) * w[i];

    eta_beta_ = vals[0];
    if (eta_beta_ <= 0.0)
        throw std::runtime_error("SizeBiasedLifetime: eta_beta is zero; degenerate lifetime law");
    for (double& v : vals) v /= eta_beta_;
    vals[0] = 1.0;
    tail_ = GridFunction(step, std::move(vals));
}

double SizeBiasedLifetime::tail(double t) const {
    if (t < 0.0) throw std::domain_error("SizeBiasedLifetime::tail: t must be >= 0");
    if (t >= tail_.horizon()) return 0.0;
    return tail_.at(t);
}

double SizeBiasedLifetime::sample(RngStream& rng) const {
    double u = rng.uniform01();  // target survival level
    const auto& v = tail_.values;
    // tail is nonincreasing from 1; find first index with tail <= u
    auto it = std::lower_bound(v.begin(), v.end(), u, std::greater<double>());
    if (it == v.begin()) return 0.0;
    auto i = static_cast<std::size_t>(it - v.begin());
    if (i >= v.size()) return tail_.horizon();
    double hi = v[i - 1], lo = v[i];
    double w = (hi > lo) ? (hi - u) / (hi - lo) : 0.0;
    return tail_.h * (static_cast<double>(i - 1) + w);
}

double size_biased_tail(const LifetimeLaw& law, double beta, double gamma_n, double t,
                        double step) {
    return SizeBiasedLifetime(law, beta, gamma_n, step).tail(t);
}

double sample_size_biased(const LifetimeLaw& law, double beta, double gamma_n, RngStream& rng,
                          double step) {
    return SizeBiasedLifetime(law, beta, gamma_n, step).sample(rng);
}

}  // namespace cmj
