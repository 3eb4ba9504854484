#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>

#include "cmj/volterra.hpp"

using namespace cmj;

namespace {

ResolventKernel solve_exp(double lambda_m, double beta, double T, double h) {
    ResolventParams p{lambda_m, 1.0, beta, 1.0};
    return solve_resolvent(LifetimeLaw::exponential(1.0), p, T, h);
}

// Independent oracle: truncated Neumann series sum_k f^{(*k)} with discrete
// trapezoid convolutions; shares nothing with the forward solver.
std::vector<double> neumann_series(const std::vector<double>& f, double h, int terms) {
    std::size_t n = f.size();
    std::vector<double> conv = f, sum = f;
    for (int k = 2; k <= terms; ++k) {
        std::vector<double> next(n, 0.0);
        for (std::size_t i = 1; i < n; ++i) {
            double s = 0.5 * (f[0] * conv[i] + f[i] * conv[0]);
            for (std::size_t j = 1; j < i; ++j) s += f[j] * conv[i - j];
            next[i] = h * s;
        }
        conv = next;
        for (std::size_t i = 0; i < n; ++i) sum[i] += conv[i];
    }
    return sum;
}

}  // namespace

TEST_CASE("zero forcing gives the zero kernel") {
    ResolventParams p{0.0, 1.0, 0.0, 1.0};
    auto R = solve_resolvent(LifetimeLaw::exponential(1.0), p, 2.0, 0.01);
    CHECK(R.base.sup_norm() == 0.0);
    CHECK(resolvent_total_integral(R) == 0.0);
    CHECK(check_total_integral_identity(R, LifetimeLaw::exponential(1.0)) == 0.0);
    auto res = local_integral_identity(R, LifetimeLaw::exponential(1.0), 1.0);
    CHECK(res.residual_428 == 0.0);
    CHECK(res.residual_429 == 0.0);
}

TEST_CASE("exponential lifetimes have the closed-form kernel lm*exp(-(1-lm)t)") {
    auto R = solve_exp(0.5, 0.0, 10.0, 1e-3);
    CHECK(R.base[0] == doctest::Approx(0.5));
    double sup = 0.0;
    for (std::size_t i = 0; i < R.base.size(); ++i)
        sup = std::max(sup, std::abs(R.base[i] - 0.5 * std::exp(-0.5 * R.base.t(i))));
    CHECK(sup < 1e-5);
    CHECK(R.base.at(2.0) == doctest::Approx(0.18393972058572117).epsilon(1e-5));

    auto Rc = solve_exp(1.0, 0.0, 10.0, 1e-3);  // critical: constant kernel
    for (std::size_t i = 0; i < Rc.base.size(); i += 500)
        CHECK(Rc.base[i] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("forward solve agrees with the truncated Neumann series") {
    double h = 1e-3, T = 2.0;
    auto R = solve_exp(0.5, 0.0, T, h);
    std::vector<double> f(R.base.size());
    for (std::size_t i = 0; i < f.size(); ++i)
        f[i] = 0.5 * std::exp(-R.base.t(i));
    auto series = neumann_series(f, h, 30);
    double sup = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
        sup = std::max(sup, std::abs(series[i] - R.base[i]));
    CHECK(sup < 1e-6);
}

TEST_CASE("step-size guard") {
    ResolventParams p{250.0, 1.0, 0.0, 1.0};
    CHECK_THROWS_AS(solve_resolvent(LifetimeLaw::exponential(1.0), p, 1.0, 0.01),
                    std::invalid_argument);
    CHECK_THROWS_AS(solve_exp(0.5, 0.0, 1.0, 0.5), std::invalid_argument);  // h > T/100
}

TEST_CASE("marked kernel") {
    auto R = solve_exp(0.5, 0.0, 10.0, 1e-3);
    R.params.lambda = 0.5;
    R.params.m = 1.0;
    CHECK(resolvent_marked(R, 0.0, 1.0) == 0.0);
    CHECK(resolvent_marked(R, 3.0, 0.0) == doctest::Approx(0.5));
    // frozen from the closed-form kernel: 0.5*(e^{-1/2} - e^{-1})
    CHECK(resolvent_marked(R, 1.0, 2.0) == doctest::Approx(0.11932560927059554).epsilon(1e-5));
    // additivity over marks
    std::vector<double> ys = {0.4, 1.7};
    CHECK(resolvent_marked(R, std::span<const double>(ys), 2.0) ==
          doctest::Approx(resolvent_marked(R, 0.4, 2.0) + resolvent_marked(R, 1.7, 2.0)));
    CHECK_THROWS(resolvent_marked(R, 1.0, 11.0));
}

TEST_CASE("total integral identity") {
    auto law = LifetimeLaw::exponential(1.0);
    auto R1 = solve_exp(0.5, 0.0, 10.0, 1e-3);
    CHECK(resolvent_total_integral(R1) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(check_total_integral_identity(R1, law) < 1e-3);
    auto R2 = solve_exp(0.8, 0.0, 30.0, 1e-3);
    CHECK(resolvent_total_integral(R2) == doctest::Approx(4.0).epsilon(1e-3));
    CHECK(check_total_integral_identity(R2, law) < 1e-3);
    // critical case diverges undamped and is caught
    auto Rc = solve_exp(1.0, 0.0, 10.0, 1e-3);
    CHECK_THROWS_AS((void)resolvent_total_integral(Rc), std::runtime_error);
    // with damping it is finite again: R_beta(t) = e^{-0.3 t}
    auto Rb = solve_exp(1.0, 0.3, 30.0, 1e-3);
    CHECK(resolvent_total_integral(Rb) == doctest::Approx(1.0 / 0.3).epsilon(1e-3));
    CHECK(check_total_integral_identity(Rb, law) < 1e-3);
}

TEST_CASE("fourier transform of the rescaled kernel") {
    auto law = LifetimeLaw::exponential(1.0);
    ResolventParams p{0.5, 1.0, 0.0, 1.0};
    auto R = solve_resolvent(law, p, 30.0, 1e-3);
    auto F0 = fourier_resolvent(law, p, 0.0);
    CHECK(F0.imag() == doctest::Approx(0.0));
    CHECK(F0.real() ==
          doctest::Approx(resolvent_total_integral(R) / p.gamma_n).epsilon(1e-4));

    // limit family at n = 250: transform near 1/(b + m + beta*sigma*lambda - i u sigma lambda)
    double b = 0.5, n = 250.0;
    ResolventParams fam{(1.0 - b / n), 1.0, 0.0, n};
    auto F1 = fourier_resolvent(law, fam, 1.0);
    std::complex<double> target = 1.0 / std::complex<double>(b, -1.0);
    CHECK(std::abs(F1 - target) < 0.05);

    // tail-envelope bound |F(u)| <= C min(1, 1/|u|), C fitted at small u (engineering
    // stand-in for the existential constant)
    double C = 0.0;
    for (double u : {1.0, 2.0, 5.0, 10.0})
        C = std::max(C, std::abs(fourier_resolvent(law, fam, u)) * u);
    CHECK(std::abs(fourier_resolvent(law, fam, 100.0)) <= 1.25 * C / 100.0);

    // exact criticality at zero frequency: trapezoid integrates the piecewise-linear
    // uniform tail exactly, so the denominator vanishes to rounding
    ResolventParams crit{1.0, 1.0, 0.0, 1.0};
    CHECK_THROWS_AS((void)fourier_resolvent(LifetimeLaw::uniform(0.0, 2.0), crit, 0.0),
                    std::runtime_error);
}

TEST_CASE("tail transform bounds (sin lower bound and modulus envelope)") {
    auto law = LifetimeLaw::exponential(1.0);
    double n = 250.0, b = 0.5;
    double q = 0.0;  // beta = 0
    auto tail_transform = [&](double u) {
        // int e^{iut} tail(t) dt by fine trapezoid
        double T = law.support_upper(1e-13);
        double h = std::min(1e-3, 0.05 / std::max(1.0, std::abs(u)));
        auto npts = static_cast<std::size_t>(T / h);
        std::complex<double> acc = 0.5 * law.tail(0.0);
        for (std::size_t i = 1; i < npts; ++i) {
            double t = static_cast<double>(i) * h;
            acc += std::exp(std::complex<double>(-q * t, u * t)) * law.tail(t);
        }
        return acc * h;
    };
    double sigma = law.moments().second;
    for (double u : {0.01, 0.05, 0.1})
        CHECK(std::abs(tail_transform(u).imag()) >= 3.0 / 16.0 * sigma * u);
    for (double u : {0.5, 1.0, 5.0, 50.0})
        CHECK(std::abs(tail_transform(u)) <= 4.0 * std::min(1.0, 1.0 / u));
    // denominator stays away from zero for |u| >= 0.1 (engineering epsilon 1e-3)
    double lm = 1.0 - b / n;
    for (double u = 0.1; u < 100.0; u *= 1.7)
        CHECK(std::abs(1.0 - lm * tail_transform(u)) > 1e-3);
}

TEST_CASE("L2 distance to the exponential limit") {
    // kernel constructed to equal the target exactly -> zero distance
    double h = 0.01, T = 20.0;
    ExponentialTarget target{0.5, 0.0, 1.0, 1.0};
    auto pts = grid_points(T, h);
    GridFunction g = GridFunction::zeros(h, pts);
    for (std::size_t i = 0; i < pts; ++i)
        g[i] = target.amplitude() * std::exp(-target.rate() * g.t(i));
    ResolventKernel fake{g, ResolventParams{1.0, 1.0, 0.0, 1.0}, 1.0};
    CHECK(l2_distance_to_limit(fake, target) == doctest::Approx(0.0));

    // zero kernel vs nonzero target: the norm of the target itself
    GridFunction z = GridFunction::zeros(h, pts);
    ResolventKernel zero{z, ResolventParams{0.0, 1.0, 0.0, 1.0}, 1.0};
    double expect = std::sqrt((1.0 - std::exp(-2.0 * target.rate() * T)) / (2.0 * target.rate()));
    CHECK(l2_distance_to_limit(zero, target) == doctest::Approx(expect).epsilon(1e-3));
}

TEST_CASE("local integral identities shrink at trapezoid order") {
    auto law_exp = LifetimeLaw::exponential(1.0);
    auto law_pm = LifetimeLaw::point_mass(1.0);
    for (const auto& [law, T] : {std::pair{law_exp, 2.0}, std::pair{law_pm, 3.0}}) {
        double r_coarse = 0.0, r_fine = 0.0;
        for (double h : {1e-2, 1e-3}) {
            ResolventParams p{0.5, 1.0, 0.0, 1.0};
            auto R = solve_resolvent(law, p, 4.0 * T, h);
            auto res = local_integral_identity(R, law, T);
            CHECK(res.residual_428 < 5.0 * h * h);
            CHECK(res.residual_429 < 5.0 * h * h);
            (h == 1e-2 ? r_coarse : r_fine) = std::max(res.residual_428, res.residual_429);
        }
        CHECK(r_coarse / std::max(r_fine, 1e-15) > 20.0);  // ~O(h^2) shrink
    }
}

TEST_CASE("grid refinement converges at second order") {
    auto law = LifetimeLaw::exponential(1.0);
    std::vector<GridFunction> sols;
    for (double h : {0.02, 0.01, 0.005, 0.0025}) {
        ResolventParams p{0.5, 1.0, 0.0, 1.0};
        sols.push_back(solve_resolvent(law, p, 4.0, h).base);
    }
    std::vector<double> diffs;
    for (std::size_t k = 0; k + 1 < sols.size(); ++k) {
        double d = 0.0;
        for (std::size_t i = 0; i < sols[k].size(); ++i)
            d = std::max(d, std::abs(sols[k][i] - sols[k + 1][2 * i]));
        diffs.push_back(d);
    }
    for (std::size_t k = 0; k + 1 < diffs.size(); ++k) {
        double ratio = diffs[k] / diffs[k + 1];
        CHECK(ratio > 2.5);
        CHECK(ratio < 6.0);
    }
}

TEST_CASE("kernel sup bound (factor-10 stand-in for the existential constant)") {
    for (const auto& law : {LifetimeLaw::exponential(1.0), LifetimeLaw::point_mass(1.0)}) {
        ResolventParams p{0.5, 1.0, 0.2, 1.0};
        auto R = solve_resolvent(law, p, 20.0, 1e-3);
        double bound = 10.0 * p.lambda_m() / (1.0 - p.lambda_m() * R.eta_beta);
        CHECK(R.base.sup_norm() <= bound);
        for (double v : R.base.values) CHECK(v >= -1e-12);
    }
}

TEST_CASE("grid csv round trip and golden regression") {
    auto R = solve_exp(0.5, 0.0, 1.0, 0.01);
    auto tmp = std::filesystem::temp_directory_path() / "cmj_grid_roundtrip.csv";
    write_grid_csv(R.base, tmp.string(), "R");
    auto back = read_grid_csv(tmp.string());
    REQUIRE(back.size() == R.base.size());
    for (std::size_t i = 0; i < back.size(); ++i)
        CHECK(back[i] == R.base[i]);  // 17 significant digits round-trip doubles exactly
    std::filesystem::remove(tmp);

#ifdef CMJ_TESTS_DATA_DIR
    auto golden = read_grid_csv(std::string(CMJ_TESTS_DATA_DIR) + "/resolvent_exp_golden.csv");
    REQUIRE(golden.size() == R.base.size());
    for (std::size_t i = 0; i < golden.size(); ++i)
        CHECK(R.base[i] == doctest::Approx(golden[i]).epsilon(1e-12));
#endif
}
