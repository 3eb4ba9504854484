#pragma once

#include <complex>
#include <span>

#include "cmj/distributions.hpp"
#include "cmj/grid.hpp"

namespace cmj {

struct ResolventParams {
    double lambda = 1.0;   // birth-event rate
    double m = 1.0;        // mean offspring per event
    double beta = 0.0;     // damping exponent
    double gamma_n = 1.0;  // time scale
    double lambda_m() const { return lambda * m; }
};

// Damped renewal resolvent R(t) on a uniform grid over [0, T]:
//   R = f + f * R,   f(t) = lambda*m * e^{-(beta/gamma_n) t} * tail(t).
struct ResolventKernel {
    GridFunction base;
    ResolventParams params;
    double eta_beta = 0.0;  // exact int e^{-(beta/gamma_n)t} tail(t) dt for the law used
};

// Forward trapezoidal product integration; the diagonal term (h/2) f(0) R(t_i)
// is moved to the left-hand side. Throws if 1 - (h/2) f(0) <= 0 (step too large).
// Warns on stderr when lambda*m*eta_beta >= 1 + 1e-9 (identities below then diverge).
ResolventKernel solve_resolvent(const LifetimeLaw& law, const ResolventParams& p, double T,
                                double h);

// Richardson-extrapolated pair of trapezoid solves at h and h/2, combined on the
// h grid. Removes the O(h^2) term, whose constant grows like gamma_n for
// near-critical families; use when the plain solve would need an impractical step.
ResolventKernel solve_resolvent_refined(const LifetimeLaw& law, const ResolventParams& p,
                                        double T, double h);

// Kernel against a single mark with lifetime y:
//   lambda * [ e^{-(beta/gamma_n) t} 1_{y > t} + int_0^{t^y} R(t-s) e^{-(beta/gamma_n) s} ds ].
// t must lie on the grid (within the horizon).
double resolvent_marked(const ResolventKernel& R, double y, double t);
// Additive multi-mark version: sum over the lifetimes in y.
double resolvent_marked(const ResolventKernel& R, std::span<const double> y, double t);

// int_0^inf R(t) dt: trapezoid over the grid plus a log-linear (exponential-decay)
// extrapolation fitted to the last decade of grid values. Throws when the kernel is
// not decaying (critical/supercritical undamped configuration).
double resolvent_total_integral(const ResolventKernel& R);

// Tail integral int_T^inf R(t) dt for T on the grid, same extrapolation beyond the horizon.
double resolvent_tail_integral(const ResolventKernel& R, double T);

// | int_0^inf R  -  lm*eta_beta / (1 - lm*eta_beta) |   with lm = lambda*m.
double check_total_integral_identity(const ResolventKernel& R, const LifetimeLaw& law);

// Fourier transform of the rescaled kernel, int_0^inf e^{iut} R(gamma_n t) dt, evaluated
// from the closed ratio of tail transforms by quadrature (no Volterra solve).
std::complex<double> fourier_resolvent(const LifetimeLaw& law, const ResolventParams& p,
                                       double u, double quad_step = 1e-3);

// L2 grid norm of R(gamma_n .) - (1/(sigma*lambda)) exp(-((b+m)/(sigma*lambda)+beta) .)
// over the rescaled horizon [0, T/gamma_n].
struct ExponentialTarget {
    double b = 0.0;
    double m = 0.0;
    double sigma = 1.0;
    double lambda = 1.0;
    double rate() const { return (b + m) / (sigma * lambda); }
    double amplitude() const { return 1.0 / (sigma * lambda); }
};
double l2_distance_to_limit(const ResolventKernel& R, const ExponentialTarget& target);

// Residuals of the two local integral identities at horizon T (on the grid):
//   int_0^T R  =  lm*int_0^T tail_b  +  lm*int_0^T R(T-t) int_0^t tail_b(s) ds dt
//   (1-lm*eta_beta)/lm * int_T^inf R  =  int_T^inf tail_b  +  int_0^T R(T-t) int_t^inf tail_b ds dt
// with tail_b the damped tail. Lifetime integrals are exact; R integrals use the grid.
struct LocalIdentityResiduals {
    double residual_428 = 0.0;
    double residual_429 = 0.0;
};
LocalIdentityResiduals local_integral_identity(const ResolventKernel& R, const LifetimeLaw& law,
                                               double T);

// CSV helpers (columns t,value; 17 significant digits).
void write_grid_csv(const GridFunction& g, const std::string& path,
                    const std::string& value_header = "value");
GridFunction read_grid_csv(const std::string& path);

}  // namespace cmj
