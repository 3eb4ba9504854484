#include "cmj/cbi.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cmj {

void LimitParams::validate() const {
    levy.validate();
    if (sigma <= 0.0) throw std::invalid_argument("LimitParams: sigma must be > 0");
    if (eta <= 0.0 || lambda <= 0.0)
        throw std::invalid_argument("LimitParams: eta and lambda must be > 0");
    if (std::abs(lambda * eta - 1.0) > 1e-9)
        throw std::invalid_argument("LimitParams: lambda*eta must equal 1 (within 1e-9)");
    if (gamma_star < 0.0) throw std::invalid_argument("LimitParams: gamma_star must be >= 0");
    if (zeta < 0.0) throw std::invalid_argument("LimitParams: zeta must be >= 0");
}

double LimitParams::drift(double z) const {
    return eta_over_sigma() * (levy.a * zeta - (b + levy.m) * z);
}

double LimitParams::diffusion_variance(double z) const {
    double r = eta_over_sigma();
    return lambda * std::max(z, 0.0) * r * r *
           (2.0 * levy.c + 2.0 * gamma_star * sigma * lambda * lambda);
}

double LimitParams::individual_mechanism(double z) const {
    return eta_over_sigma() * b * z + gamma_star / (sigma * eta) * z * z;
}

CbiPath simulate_cbi(const LimitParams& limit, double z0, double T, double dt, RngStream& rng) {
    limit.validate();
    if (z0 < 0.0) throw std::invalid_argument("simulate_cbi: z0 must be >= 0");
    if (T <= 0.0 || dt <= 0.0) throw std::invalid_argument("simulate_cbi: T, dt must be > 0");
    if (dt > 1e-2 * T)
        throw std::invalid_argument("simulate_cbi: dt must be <= T/100");

    auto steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
    double h = T / static_cast<double>(steps);
    CbiPath path;
    path.states = GridFunction::zeros(h, steps + 1);
    path.states[0] = z0;

    const double r = limit.eta_over_sigma();
    // nu0 jumps are compensated in the drift.
    double comp0 = 0.0;
    for (const auto& [u, w] : limit.levy.nu0_atoms) comp0 += limit.lambda * w * r * u;

    double z = z0;
    for (std::size_t i = 0; i < steps; ++i) {
        double t = static_cast<double>(i) * h;
        double zn = z + (limit.drift(z) - comp0 * z) * h;
        double var = limit.diffusion_variance(z) * h;
        if (var > 0.0) zn += std::sqrt(var) * rng.normal();
        for (const auto& [u, w] : limit.levy.nu0_atoms) {
            auto k = rng.poisson(limit.lambda * w * std::max(z, 0.0) * h);
            for (std::uint64_t j = 0; j < k; ++j) {
                zn += r * u;
                path.jumps.emplace_back(t, r * u);
            }
        }
        for (const auto& [u, w] : limit.levy.nu1_atoms) {
            auto k = rng.poisson(limit.zeta * w * h);
            for (std::uint64_t j = 0; j < k; ++j) {
                zn += r * u;
                path.jumps.emplace_back(t, r * u);
            }
        }
        if (!std::isfinite(zn))
            throw std::runtime_error("simulate_cbi: non-finite state at step " +
                                     std::to_string(i));
        z = std::max(zn, 0.0);
        path.states[i + 1] = z;
    }
    return path;
}

GridFunction v_ode(const LimitParams& limit, double z, double T, double dt) {
    limit.validate();
    if (z < 0.0) throw std::invalid_argument("v_ode: z must be >= 0");
    if (T <= 0.0) throw std::invalid_argument("v_ode: T must be > 0");
    if (dt <= 0.0) dt = 1e-3 * T;

    auto steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
    double h = T / static_cast<double>(steps);
    const double r = limit.eta_over_sigma();
    auto rhs = [&](double v) {
        double vv = std::max(v, 0.0);
        return -limit.lambda * branching_mechanism_per_rate(limit.levy, limit.lambda, r * vv) -
               limit.individual_mechanism(vv);
    };

    GridFunction V = GridFunction::zeros(h, steps + 1);
    V[0] = z;
    double v = z;
    for (std::size_t i = 0; i < steps; ++i) {
        double k1 = rhs(v);
        double k2 = rhs(v + 0.5 * h * k1);
        double k3 = rhs(v + 0.5 * h * k2);
        double k4 = rhs(v + h * k3);
        v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (v < -1e-9)
            throw std::runtime_error("v_ode: V went negative at step " + std::to_string(i) +
                                     "; decrease dt");
        V[i + 1] = v;
    }
    return V;
}

double laplace_cbi(const LimitParams& limit, double x, double z, double t, double dt) {
    if (x < 0.0 || z < 0.0 || t < 0.0)
        throw std::invalid_argument("laplace_cbi: x, z, t must be >= 0");
    if (t == 0.0) return std::exp(-x * z);
    GridFunction V = v_ode(limit, z, t, dt);
    double exponent = x * V.values.back();
    if (limit.zeta > 0.0) {
        const double r = limit.eta_over_sigma();
        GridFunction psi = GridFunction::zeros(V.h, V.size());
        for (std::size_t i = 0; i < V.size(); ++i)
            psi[i] = immigration_mechanism(limit.levy, r * std::max(V[i], 0.0));
        exponent += limit.zeta * psi.trapezoid();
    }
    return std::exp(-exponent);
}

}  // namespace cmj
