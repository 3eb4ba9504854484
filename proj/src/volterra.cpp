#include "cmj/volterra.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace cmj {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t grid_index(const GridFunction& g, double t, const char* what) {
    double x = t / g.h;
    auto i = static_cast<std::size_t>(std::llround(x));
    if (std::abs(static_cast<double>(i) * g.h - t) > 1e-9 * std::max(1.0, t))
        throw std::invalid_argument(std::string(what) + ": t is not on the grid");
    if (i >= g.size())
        throw std::invalid_argument(std::string(what) + ": t beyond the grid horizon");
    return i;
}

struct DecayFit {
    double rate = 0.0;       // positive when decaying
    double at_horizon = 0.0; // kernel value at the last node
    bool negligible = false; // everything in the window is ~0
};

// Log-linear least squares over the last decade of the grid.
DecayFit fit_exponential_tail(const GridFunction& g) {
    std::size_t n = g.size();
    std::size_t i0 = static_cast<std::size_t>(0.9 * static_cast<double>(n - 1));
    if (n - i0 < 5) i0 = n >= 5 ? n - 5 : 0;
    double sup = g.sup_norm();
    DecayFit fit;
    fit.at_horizon = g.values.back();
    if (sup <= 0.0 || g.values.back() <= sup * 1e-14) {
        fit.negligible = true;
        return fit;
    }
    double st = 0, sy = 0, stt = 0, sty = 0;
    std::size_t cnt = 0;
    for (std::size_t i = i0; i < n; ++i) {
        if (g.values[i] <= 0.0) {
            fit.negligible = true;  // already touched zero; no tail mass left
            return fit;
        }
        double t = g.t(i), y = std::log(g.values[i]);
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
        ++cnt;
    }
    double denom = static_cast<double>(cnt) * stt - st * st;
    fit.rate = denom > 0.0 ? -((static_cast<double>(cnt) * sty - st * sy) / denom) : 0.0;
    return fit;
}

double trapz_range(const GridFunction& g, std::size_t i0, std::size_t i1) {
    if (i1 <= i0) return 0.0;
    double s = 0.5 * (g.values[i0] + g.values[i1]);
    for (std::size_t i = i0 + 1; i < i1; ++i) s += g.values[i];
    return s * g.h;
}

}  // namespace

ResolventKernel solve_resolvent(const LifetimeLaw& law, const ResolventParams& p, double T,
                                double h) {
    if (T <= 0.0 || h <= 0.0) throw std::invalid_argument("solve_resolvent: T, h must be > 0");
    if (h > T / 100.0)
        throw std::invalid_argument("solve_resolvent: step too coarse, need h <= T/100");
    if (p.lambda < 0.0 || p.m < 0.0 || p.beta < 0.0 || p.gamma_n <= 0.0)
        throw std::invalid_argument("solve_resolvent: invalid parameters");

    double q = p.beta / p.gamma_n;
    double lm = p.lambda_m();
    double eta_b = law.integrated_damped_tail(q, 0.0, kInf);
    if (lm * eta_b >= 1.0 + 1e-9)
        std::cerr << "solve_resolvent: warning: lambda*m*eta_beta = " << lm * eta_b
                  << " >= 1; total-integral identities will diverge\n";

    std::size_t n = grid_points(T, h);
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) {
        double t = static_cast<double>(i) * h;
        f[i] = lm * std::exp(-q * t) * law.tail_node(t);
    }
    double diag = 1.0 - 0.5 * h * f[0];
    if (diag <= 0.0)
        throw std::invalid_argument(
            "solve_resolvent: 1 - (h/2) f(0) <= 0; choose a smaller step h");

    // frev[n-1-k] = f[k] makes the convolution a contiguous forward dot product.
    std::vector<double> frev(n);
    for (std::size_t k = 0; k < n; ++k) frev[n - 1 - k] = f[k];

    std::vector<double> R(n, 0.0);
    R[0] = f[0];
    for (std::size_t i = 1; i < n; ++i) {
        double s = 0.5 * f[i] * R[0];
        const double* a = frev.data() + (n - i);
        const double* b = R.data() + 1;
        const std::size_t cnt = i - 1;
        // fixed-order lane accumulators: each lane is an independent serial chain,
        // so the compiler may pack them without reassociating any single sum
        double lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
        std::size_t j = 0;
        for (; j + 8 <= cnt; j += 8)
            for (std::size_t k = 0; k < 8; ++k) lane[k] += a[j + k] * b[j + k];
        for (; j < cnt; ++j) lane[j & 7] += a[j] * b[j];
        s += ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
             ((lane[4] + lane[5]) + (lane[6] + lane[7]));
        R[i] = (f[i] + h * s) / diag;
    }

    ResolventKernel out;
    out.base = GridFunction(h, std::move(R));
    out.params = p;
    out.eta_beta = eta_b;
    return out;
}

ResolventKernel solve_resolvent_refined(const LifetimeLaw& law, const ResolventParams& p,
                                        double T, double h) {
    ResolventKernel coarse = solve_resolvent(law, p, T, h);
    ResolventKernel fine = solve_resolvent(law, p, T, 0.5 * h);
    for (std::size_t i = 0; i < coarse.base.size(); ++i)
        coarse.base[i] = (4.0 * fine.base[2 * i] - coarse.base[i]) / 3.0;
    return coarse;
}

double resolvent_marked(const ResolventKernel& R, double y, double t) {
    if (y < 0.0) throw std::domain_error("resolvent_marked: y must be >= 0");
    std::size_t it = grid_index(R.base, t, "resolvent_marked");
    double q = R.params.beta / R.params.gamma_n;
    double upper = std::min(t, y);
    double val = (y > t) ? std::exp(-q * t) : 0.0;
    if (upper > 0.0) {
        const double h = R.base.h;
        auto full = static_cast<std::size_t>(upper / h);
        if (full > it) full = it;
        // integrand g(s) = R(t-s) e^{-qs}; grid-aligned part by trapezoid
        double s = 0.0;
        if (full >= 1) {
            s += 0.5 * (R.base[it] * 1.0 + R.base[it - full] * std::exp(-q * static_cast<double>(full) * h));
            for (std::size_t j = 1; j < full; ++j)
                s += R.base[it - j] * std::exp(-q * static_cast<double>(j) * h);
            s *= h;
        }
        // partial last cell [full*h, upper]
        double rest = upper - static_cast<double>(full) * h;
        if (rest > 1e-15 * std::max(1.0, upper)) {
            double g0 = R.base[it - full] * std::exp(-q * static_cast<double>(full) * h);
            double g1 = R.base.at(t - upper) * std::exp(-q * upper);
            s += 0.5 * rest * (g0 + g1);
        }
        val += s;
    }
    return R.params.lambda * val;
}

double resolvent_marked(const ResolventKernel& R, std::span<const double> y, double t) {
    double s = 0.0;
    for (double yj : y) s += resolvent_marked(R, yj, t);
    return s;
}

double resolvent_tail_integral(const ResolventKernel& R, double T) {
    std::size_t iT = grid_index(R.base, T, "resolvent_tail_integral");
    double grid_part = trapz_range(R.base, iT, R.base.size() - 1);
    DecayFit fit = fit_exponential_tail(R.base);
    if (fit.negligible) return grid_part;
    if (fit.rate <= 1e-12)
        throw std::runtime_error(
            "resolvent_tail_integral: kernel is not decaying on the grid "
            "(critical or supercritical undamped configuration); use beta > 0");
    return grid_part + fit.at_horizon / fit.rate;
}

double resolvent_total_integral(const ResolventKernel& R) {
    return resolvent_tail_integral(R, 0.0);
}

double check_total_integral_identity(const ResolventKernel& R, const LifetimeLaw& law) {
    double q = R.params.beta / R.params.gamma_n;
    double lm = R.params.lambda_m();
    if (lm == 0.0) return std::abs(resolvent_total_integral(R));
    double eta_b = law.integrated_damped_tail(q, 0.0, kInf);
    double x = lm * eta_b;
    if (x >= 1.0)
        throw std::runtime_error(
            "check_total_integral_identity: lambda*m*eta_beta >= 1, identity diverges; "
            "use beta > 0");
    if (R.base.values.back() > 1e-8 * std::max(1.0, R.base.sup_norm()))
        std::cerr << "check_total_integral_identity: warning: R(T) not negligible; "
                     "tail extrapolation dominates\n";
    return std::abs(resolvent_total_integral(R) - x / (1.0 - x));
}

std::complex<double> fourier_resolvent(const LifetimeLaw& law, const ResolventParams& p,
                                       double u, double quad_step) {
    double q = p.beta / p.gamma_n;
    double v = u / p.gamma_n;  // frequency in unscaled time
    double T = law.support_upper(1e-13);
    if (q > 0.0) T = std::min(T, -std::log(1e-13) / q);
    double step = quad_step;
    if (v != 0.0) step = std::min(step, 0.05 / std::abs(v));
    auto npts = grid_points(std::max(T, 2.0 * step), step);

    std::complex<double> acc(0.0, 0.0);
    std::complex<double> prev = law.tail_node(0.0);
    for (std::size_t i = 1; i < npts; ++i) {
        double t = static_cast<double>(i) * step;
        std::complex<double> cur =
            std::exp(std::complex<double>(-q * t, v * t)) * law.tail_node(t);
        acc += 0.5 * step * (prev + cur);
        prev = cur;
    }
    double lm = p.lambda_m();
    std::complex<double> denom = 1.0 - lm * acc;
    if (std::abs(denom) < 1e-10)
        throw std::runtime_error("fourier_resolvent: denominator nearly singular");
    return lm * acc / (p.gamma_n * denom);
}

double l2_distance_to_limit(const ResolventKernel& R, const ExponentialTarget& target) {
    double rate = target.rate() + R.params.beta;
    double amp = target.amplitude();
    double dtau = R.base.h / R.params.gamma_n;
    double s = 0.0;
    std::size_t n = R.base.size();
    for (std::size_t i = 0; i < n; ++i) {
        double tau = static_cast<double>(i) * dtau;
        double d = R.base[i] - amp * std::exp(-rate * tau);
        double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
        s += w * d * d;
    }
    return std::sqrt(s * dtau);
}

LocalIdentityResiduals local_integral_identity(const ResolventKernel& R, const LifetimeLaw& law,
                                               double T) {
    std::size_t iT = grid_index(R.base, T, "local_integral_identity");
    double q = R.params.beta / R.params.gamma_n;
    double lm = R.params.lambda_m();
    const double h = R.base.h;

    LocalIdentityResiduals out;
    if (lm == 0.0) {
        out.residual_428 = std::abs(trapz_range(R.base, 0, iT));
        out.residual_429 = 0.0;
        return out;
    }

    // Exact damped-tail integrals at the grid nodes.
    std::vector<double> head(iT + 1), tail(iT + 1);
    for (std::size_t i = 0; i <= iT; ++i) {
        double t = static_cast<double>(i) * h;
        head[i] = law.integrated_damped_tail(q, 0.0, t);
        tail[i] = law.integrated_damped_tail(q, t, kInf);
    }

    double int_R = trapz_range(R.base, 0, iT);
    double conv_head = 0.0, conv_tail = 0.0;
    for (std::size_t i = 0; i <= iT; ++i) {
        double w = (i == 0 || i == iT) ? 0.5 : 1.0;
        double r = R.base[iT - i];
        conv_head += w * r * head[i];
        conv_tail += w * r * tail[i];
    }
    conv_head *= h;
    conv_tail *= h;

    out.residual_428 = std::abs(int_R - lm * head[iT] - lm * conv_head);

    double eta_b = law.integrated_damped_tail(q, 0.0, kInf);
    double lhs = (1.0 - lm * eta_b) / lm * resolvent_tail_integral(R, T);
    out.residual_429 = std::abs(lhs - tail[iT] - conv_tail);
    return out;
}

void write_grid_csv(const GridFunction& g, const std::string& path,
                    const std::string& value_header) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_grid_csv: cannot open " + path);
    out << "t," << value_header << "\n";
    char buf[64];
    for (std::size_t i = 0; i < g.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", g.t(i));
        out << buf << ",";
        std::snprintf(buf, sizeof(buf), "%.17g", g.values[i]);
        out << buf << "\n";
    }
}

GridFunction read_grid_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_grid_csv: cannot open " + path);
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> ts, vs;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string a, b;
        std::getline(ss, a, ',');
        std::getline(ss, b, ',');
        ts.push_back(std::stod(a));
        vs.push_back(std::stod(b));
    }
    if (ts.size() < 2) throw std::runtime_error("read_grid_csv: too few rows in " + path);
    double h = ts[1] - ts[0];
    return GridFunction(h, std::move(vs));
}

}  // namespace cmj
