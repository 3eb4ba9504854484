#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cmj/cbi.hpp"
#include "cmj/cmj_sim.hpp"
#include "cmj/distributions.hpp"
#include "cmj/volterra.hpp"

namespace cmj {

// ---------------------------------------------------------------------------
// Family construction
// ---------------------------------------------------------------------------

// Builds the n-th model of a family whose mechanisms converge to the given limit:
//   gamma_n = gamma_star * n, lambda_n = (1 - b/gamma_n)/eta, binary offspring base,
//   each nu0 atom (u,w) -> offspring mass w/(n gamma_n) at k = ceil(u n) (mass
//   rebalanced from k = 1), extra negative drift via k = 2 mass, and the analogous
//   immigration recipe with drift a in [gamma_star, 2*gamma_star].
// Throws with the minimal valid n when probabilities leave [0,1].
ModelParams build_c1_family(const LimitParams& limit, const LifetimeLaw& lifetime,
                            std::uint64_t n, double beta);

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;
};

// mean and standard error of exp(-z * sample) over the samples.
MeanStderr empirical_laplace(std::span<const double> samples, double z);

// eps1(t) = (1/n) sum_k [ e^{-beta t} 1{e_k > gamma_n t} - e^{-beta t} S(gamma_n t) ]
// on `points` nodes over [0, T]; S is the size-biased survival function.
GridFunction error_eps1(const std::vector<double>& ancestor_lifetimes,
                        const ModelParams& params, const SizeBiasedLifetime& ancestor_law,
                        double T, std::size_t points);

// eps5(t) = z0_over_n * [ prefactor * int_t^inf R(gamma_n s) ds - e^{-decay_rate t} ].
GridFunction error_eps5_core(double z0_over_n, double prefactor, double total_integral,
                             const GridFunction& kernel_cumulative, double gamma_n,
                             double decay_rate, double T, std::size_t points);

// Spec-shaped wrapper: prefactor gamma_n(1-lm*eta_beta)/(lm*eta_beta) from the kernel
// snapshot, decay rate (b+m)/(sigma lambda) + beta from the limit.
GridFunction error_eps5(double z0_over_n, const ResolventKernel& R, const LimitParams& limit,
                        double T, std::size_t points);

// ---------------------------------------------------------------------------
// Convergence experiment
// ---------------------------------------------------------------------------

struct ToleranceProfile {
    double gap_abs = 0.02;
    double gap_se_mult = 3.0;
    bool require_monotone_gap = true;
    double monotone_se_mult = 2.0;
    double moment_ratio_max = 5.0;
};

struct ConvergenceConfig {
    std::vector<std::uint64_t> n_sequence;  // strictly increasing
    std::uint64_t replicas = 1000;          // >= 100
    std::vector<double> times;              // evaluation times (rescaled)
    std::vector<double> z_values;           // Laplace arguments
    double alpha = 1.5;                     // moment exponent, in (1,2)
    double z0 = 1.0;                        // Z(0) = floor(n * z0)
    double beta = 0.0;
    std::uint64_t seed = 1;
    unsigned threads = 0;  // 0 = hardware concurrency
    std::size_t diag_points = 65;
    double resolvent_h = 0.02;  // unscaled step for the eps5 kernel solve
    double oracle_dt = 1e-4;
    std::uint64_t event_cap = 10'000'000;
    ToleranceProfile tol;

    void validate() const;
};

struct LaplaceCell {
    std::uint64_t n;
    double t, z;
    double empirical, stderr_, oracle, gap;
};

struct DiagnosticsRow {
    std::uint64_t n;
    double eps1_sup_mean;  // replica average of sup_t |eps1|
    double eps5_sup;
    double moment1_sup;     // max over eval times of mean damped rescaled value
    double moment_alpha;    // empirical alpha-moment at the largest eval time
};

struct ConvergenceReport {
    std::vector<LaplaceCell> cells;
    std::vector<DiagnosticsRow> diagnostics;
    bool pass_gap = false;
    bool pass_monotone = false;
    bool pass_moment = false;
    bool partial = false;  // some replicas failed (e.g. event-cap overflow)
    std::vector<std::string> failures;

    bool pass() const { return pass_gap && pass_monotone && pass_moment && !partial; }
    void write_cells_csv(const std::string& path) const;
    void write_diagnostics_csv(const std::string& path) const;
};

ConvergenceReport run_convergence(const ConvergenceConfig& cfg, const LimitParams& limit,
                                  const LifetimeLaw& lifetime);

}  // namespace cmj
