#pragma once

#include <vector>

#include "cmj/distributions.hpp"
#include "cmj/grid.hpp"
#include "cmj/rng.hpp"

namespace cmj {

// Parameters of the limiting continuous-state branching process with immigration:
// branching law (lambda, mechanism with drift m, diffusion c, jump atoms nu0),
// immigration law (zeta, drift a, jump atoms nu1), individual parameters
// (b, eta, sigma, gamma_star). sigma is half the second lifetime moment and
// lambda*eta = 1 is required.
struct LimitParams {
    double b = 0.0;
    double lambda = 1.0;
    double zeta = 0.0;
    double eta = 1.0;
    double sigma = 1.0;
    double gamma_star = 1.0;
    LevyTriple levy;  // m, c, a, nu0_atoms, nu1_atoms

    void validate() const;

    double eta_over_sigma() const { return eta / sigma; }
    // Drift of the state: (eta/sigma) (a*zeta - (b+m) z); compensated nu0 jumps cancel.
    double drift(double z) const;
    // Diffusion variance rate: lambda * z * (eta/sigma)^2 (2c + 2 gamma_star sigma lambda^2).
    double diffusion_variance(double z) const;
    // (eta/sigma) b z + (gamma_star/(sigma eta)) z^2
    double individual_mechanism(double z) const;
};

struct CbiPath {
    GridFunction states;                          // on the Euler grid
    std::vector<std::pair<double, double>> jumps; // (time, added size)
};

// Euler-Maruyama with per-atom Poisson jump counts per step (rate frozen at the
// step start) and clamping at zero after each step.
CbiPath simulate_cbi(const LimitParams& limit, double z0, double T, double dt, RngStream& rng);

// Solves V'(t) = -lambda*phi_lambda((eta/sigma) V) - individual_mechanism(V), V(0) = z,
// by classical RK4; throws if V leaves [−1e-9, inf). dt <= 0 selects the default T/1000.
GridFunction v_ode(const LimitParams& limit, double z, double T, double dt = 0.0);

// Laplace transform E_x e^{-z Z(t)} = exp{-x V_t(z) - zeta int_0^t psi((eta/sigma) V_s) ds}.
double laplace_cbi(const LimitParams& limit, double x, double z, double t, double dt = 0.0);

}  // namespace cmj
