#pragma once

#include <cstdint>
#include <utility>
#include <variant>
#include <vector>

#include "cmj/grid.hpp"
#include "cmj/rng.hpp"

namespace cmj {

// ---------------------------------------------------------------------------
// Lifetime law
// ---------------------------------------------------------------------------

// Life-length distribution of a particle. Moments convention: sigma_half is HALF
// the second moment, i.e. sigma_half = (1/2) E[T^2]. Everything downstream (kernel
// asymptotics, limit parameters) assumes this convention; do not "fix" it to E[T^2].
class LifetimeLaw {
  public:
    struct Exponential {
        double rate;  // 1/time
    };
    struct Uniform {
        double lo, hi;
    };
    struct PointMass {
        double c;
    };
    struct EmpiricalGrid {
        double h;                 // grid step
        std::vector<double> cdf;  // cdf[i] at t = i*h; cdf[0] = 0, back() = 1, nondecreasing
    };

    LifetimeLaw() : repr_(Exponential{1.0}) {}
    static LifetimeLaw exponential(double rate);
    static LifetimeLaw uniform(double lo, double hi);
    static LifetimeLaw point_mass(double c);
    static LifetimeLaw empirical(double h, std::vector<double> cdf);

    // Tail probability P(T > t), right-continuous. Exact for parametric laws,
    // linear interpolation of the cdf for EmpiricalGrid.
    double tail(double t) const;

    // Tail value used at quadrature nodes: midpoint convention at jump points
    // (PointMass atom), so trapezoid rules keep second-order accuracy across the kink.
    double tail_node(double t) const;

    // (eta, sigma_half) = (E[T], E[T^2]/2); closed form for parametric laws,
    // exact piecewise integration for EmpiricalGrid.
    std::pair<double, double> moments() const;
    double mean() const { return moments().first; }

    // Exact \int_{t1}^{t2} e^{-q s} tail(s) ds (t2 may be +inf). Used where quadrature
    // error would otherwise dominate an identity residual.
    double integrated_damped_tail(double q, double t1, double t2) const;

    // Smallest t with tail(t) <= eps (support end for bounded laws).
    double support_upper(double eps) const;

    double sample(RngStream& rng) const;

    const std::variant<Exponential, Uniform, PointMass, EmpiricalGrid>& repr() const {
        return repr_;
    }

  private:
    explicit LifetimeLaw(std::variant<Exponential, Uniform, PointMass, EmpiricalGrid> r)
        : repr_(std::move(r)) {}
    std::variant<Exponential, Uniform, PointMass, EmpiricalGrid> repr_;
};

// ---------------------------------------------------------------------------
// Discrete batch-size law (offspring / immigration), support on {1, 2, ...}
// ---------------------------------------------------------------------------

class DiscreteLaw {
  public:
    DiscreteLaw() : DiscreteLaw({{1, 1.0}}) {}
    // Entries (k, p_k), k >= 1; probabilities must sum to 1 within 1e-12.
    explicit DiscreteLaw(std::vector<std::pair<std::uint64_t, double>> pmf);

    double mean() const { return mean_; }
    // Probability generating function sum_k p_k s^k, s in [0,1].
    double pgf(double s) const;
    std::uint64_t sample(RngStream& rng) const;
    std::uint64_t max_support() const { return pmf_.back().first; }

    const std::vector<std::pair<std::uint64_t, double>>& pmf() const { return pmf_; }

  private:
    std::vector<std::pair<std::uint64_t, double>> pmf_;  // sorted by k
    std::vector<double> cum_;
    double mean_ = 0.0;
};

// ---------------------------------------------------------------------------
// Model and limit parameter bundles
// ---------------------------------------------------------------------------

enum class Criticality { Subcritical, Critical, Supercritical };

// One n-indexed CMJ model with immigration.
struct ModelParams {
    std::uint64_t n = 1;    // scale index
    double gamma_n = 1.0;   // time-scale factor
    double lambda_n = 1.0;  // birth-event rate per particle
    double zeta_n = 0.0;    // immigration-epoch rate
    double beta = 0.0;      // damping exponent, >= 0
    LifetimeLaw lifetime;
    DiscreteLaw offspring;
    DiscreteLaw immigration;

    void validate() const;
    // lambda_n * eta * mean offspring; < 1 subcritical, = 1 critical, > 1 supercritical.
    double criticality_index() const;
    Criticality classify(double eps = 1e-12) const;
};

// Levy-type coefficients of the limit mechanisms: drift m (<= 0), diffusion c,
// immigration drift a, and finite atom lists for the two jump measures.
struct LevyTriple {
    double m = 0.0;
    double c = 0.0;
    double a = 0.0;
    std::vector<std::pair<double, double>> nu0_atoms;  // (jump size u > 0, mass w > 0)
    std::vector<std::pair<double, double>> nu1_atoms;

    void validate() const;
};

// ---------------------------------------------------------------------------
// Mechanisms
// ---------------------------------------------------------------------------

// n*gamma_n*[g(1 - z/n) - (1 - z/n)] for z in [0, n].
double scaled_branching_mechanism(const ModelParams& p, double z);
// gamma_n*[1 - h(1 - z/n)] for z in [0, n].
double scaled_immigration_mechanism(const ModelParams& p, double z);

// m z + c z^2 + sum w (e^{-zu} - 1 + zu)
double branching_mechanism(const LevyTriple& t, double z);
// a z + sum w (1 - e^{-zu})
double immigration_mechanism(const LevyTriple& t, double z);
// (m/lambda) z + c z^2 + sum w (e^{-zu} - 1 + zu)
double branching_mechanism_per_rate(const LevyTriple& t, double lambda, double z);

// ---------------------------------------------------------------------------
// Damped lifetime integrals and the size-biased ancestor law
// ---------------------------------------------------------------------------

// eta_beta = \int_0^inf e^{-(beta/gamma_n) t} tail(t) dt, composite trapezoid with
// the given step, truncated where the damped tail drops below 1e-12.
double damped_mean_lifetime(const LifetimeLaw& law, double beta, double gamma_n,
                            double step = 1e-4);

// Ancestor lifetime law: density proportional to the exponentially damped integrated
// tail of the base law. tail(t) = (1/eta_beta) \int_t^inf e^{-q(s-t)} tail_base(s) ds
// with q = beta/gamma_n; beta = 0 gives the stationary-excess (forward recurrence) law.
class SizeBiasedLifetime {
  public:
    SizeBiasedLifetime(const LifetimeLaw& law, double beta, double gamma_n,
                       double step = 1e-4);

    double tail(double t) const;
    double sample(RngStream& rng) const;  // inverse CDF on the precomputed grid
    double eta_beta() const { return eta_beta_; }
    const GridFunction& tail_grid() const { return tail_; }

  private:
    GridFunction tail_;  // survival function on [0, T]
    double eta_beta_;
};

double size_biased_tail(const LifetimeLaw& law, double beta, double gamma_n, double t,
                        double step = 1e-4);
double sample_size_biased(const LifetimeLaw& law, double beta, double gamma_n,
                          RngStream& rng, double step = 1e-4);

}  // namespace cmj
