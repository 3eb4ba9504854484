#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cmj/distributions.hpp"

using namespace cmj;

namespace {

// Test-side quadrature oracle: trapezoid of f over [0, T].
template <typename F>
double trapz(F f, double T, double h) {
    auto n = static_cast<std::size_t>(std::ceil(T / h));
    double s = 0.5 * (f(0.0) + f(static_cast<double>(n) * h));
    for (std::size_t i = 1; i < n; ++i) s += f(static_cast<double>(i) * h);
    return s * h;
}

}  // namespace

TEST_CASE("lifetime tails") {
    CHECK(LifetimeLaw::exponential(1.0).tail(0.0) == doctest::Approx(1.0));
    auto pm = LifetimeLaw::point_mass(2.0);
    CHECK(pm.tail(1.0) == 1.0);
    CHECK(pm.tail(3.0) == 0.0);
    CHECK(pm.tail(2.0) == 0.0);  // right-continuous
    CHECK(LifetimeLaw::uniform(0.0, 2.0).tail(1.0) == doctest::Approx(0.5));
    CHECK_THROWS_AS((void)pm.tail(-0.1), std::domain_error);
}

TEST_CASE("lifetime moments, sigma is half the second moment") {
    auto [e1, s1] = LifetimeLaw::exponential(1.0).moments();
    CHECK(e1 == doctest::Approx(1.0));
    CHECK(s1 == doctest::Approx(1.0));
    auto [e2, s2] = LifetimeLaw::point_mass(1.0).moments();
    CHECK(e2 == doctest::Approx(1.0));
    CHECK(s2 == doctest::Approx(0.5));
    auto [e3, s3] = LifetimeLaw::uniform(0.0, 2.0).moments();
    CHECK(e3 == doctest::Approx(1.0));
    CHECK(s3 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("sigma_half of Exp(mu) equals 1/mu^2: quadrature vs closed form") {
    for (double mu : {0.5, 1.0, 2.0}) {
        auto law = LifetimeLaw::exponential(mu);
        double T = law.support_upper(1e-14);
        double quad = trapz([&](double t) { return t * law.tail(t); }, T, 5e-4);
        double closed = law.moments().second;
        CHECK(std::abs(quad - 1.0 / (mu * mu)) / (1.0 / (mu * mu)) < 1e-6);
        CHECK(closed == doctest::Approx(1.0 / (mu * mu)).epsilon(1e-12));
    }
}

TEST_CASE("empirical grid law") {
    CHECK_THROWS(LifetimeLaw::empirical(0.5, {0.1, 0.5, 1.0}));  // cdf(0) != 0
    CHECK_THROWS(LifetimeLaw::empirical(0.5, {0.0, 0.5, 0.9}));  // terminal != 1
    CHECK_THROWS(LifetimeLaw::empirical(0.5, {0.0, 0.6, 0.5, 1.0}));

    // grid rendering of Uniform(0,2)
    std::size_t cells = 2000;
    double h = 2.0 / static_cast<double>(cells);
    std::vector<double> cdf(cells + 1);
    for (std::size_t i = 0; i <= cells; ++i) cdf[i] = static_cast<double>(i) * h / 2.0;
    auto law = LifetimeLaw::empirical(h, cdf);
    CHECK(law.tail(1.0) == doctest::Approx(0.5));
    CHECK(law.tail(5.0) == 0.0);
    auto [eta, sh] = law.moments();
    CHECK(eta == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(sh == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("discrete law basics") {
    CHECK_THROWS(DiscreteLaw({{1, 0.5}, {2, 0.6}}));
    CHECK_THROWS(DiscreteLaw({{0, 1.0}}));
    DiscreteLaw law({{1, 0.6}, {3, 0.4}});
    CHECK(law.mean() == doctest::Approx(1.8));
    CHECK(law.pgf(1.0) == doctest::Approx(1.0));
    CHECK(law.pgf(0.5) == doctest::Approx(0.6 * 0.5 + 0.4 * 0.125));

    RngStream rng(7);
    std::size_t ones = 0, n = 200000;
    for (std::size_t i = 0; i < n; ++i)
        if (law.sample(rng) == 1) ++ones;
    CHECK(std::abs(static_cast<double>(ones) / static_cast<double>(n) - 0.6) < 0.005);
}

TEST_CASE("scaled mechanisms") {
    ModelParams p;
    p.n = 2;
    p.gamma_n = 2.0;
    p.offspring = DiscreteLaw({{2, 1.0}});
    p.immigration = DiscreteLaw({{2, 1.0}});
    CHECK(scaled_branching_mechanism(p, 1.0) == doctest::Approx(-1.0));
    CHECK(scaled_immigration_mechanism(p, 1.0) == doctest::Approx(1.5));
    CHECK(scaled_branching_mechanism(p, 0.0) == doctest::Approx(0.0));
    CHECK(scaled_immigration_mechanism(p, 0.0) == doctest::Approx(0.0));
    CHECK_THROWS_AS((void)scaled_branching_mechanism(p, 3.0), std::domain_error);

    // binary offspring: the mechanism vanishes identically for every n and z
    for (std::uint64_t n : {1ull, 5ull, 100ull}) {
        ModelParams b;
        b.n = n;
        b.gamma_n = static_cast<double>(n);
        b.offspring = DiscreteLaw({{1, 1.0}});
        b.immigration = DiscreteLaw({{1, 1.0}});
        for (double z : {0.0, 0.3 * static_cast<double>(n), static_cast<double>(n)})
            CHECK(scaled_branching_mechanism(b, z) == doctest::Approx(0.0).epsilon(1e-12));
        // single-size immigration with gamma_n = n gives exactly z
        CHECK(scaled_immigration_mechanism(b, 0.7 * static_cast<double>(n)) ==
              doctest::Approx(0.7 * static_cast<double>(n)));
    }
}

TEST_CASE("limit mechanisms") {
    LevyTriple t;
    CHECK(branching_mechanism(t, 0.0) == 0.0);
    CHECK(immigration_mechanism(t, 0.0) == 0.0);
    t.c = 1.0;
    CHECK(branching_mechanism(t, 2.0) == doctest::Approx(4.0));
    LevyTriple atom;
    atom.nu0_atoms = {{1.0, 1.0}};
    CHECK(branching_mechanism(atom, 1.0) == doctest::Approx(std::exp(-1.0)));
    LevyTriple imm;
    imm.a = 1.0;
    CHECK(immigration_mechanism(imm, 3.0) == doctest::Approx(3.0));
    CHECK(branching_mechanism_per_rate(atom, 2.0, 0.0) == 0.0);
    CHECK_THROWS_AS((void)branching_mechanism_per_rate(atom, 0.0, 1.0), std::domain_error);

    LevyTriple bad;
    bad.m = 0.5;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("damped mean lifetime") {
    CHECK(damped_mean_lifetime(LifetimeLaw::exponential(1.0), 0.0, 1.0) ==
          doctest::Approx(1.0).epsilon(1e-7));
    CHECK(damped_mean_lifetime(LifetimeLaw::exponential(1.0), 1.0, 1.0) ==
          doctest::Approx(0.5).epsilon(1e-7));
    CHECK(damped_mean_lifetime(LifetimeLaw::point_mass(1.0), 0.0, 1.0) ==
          doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("quadrature eta_beta agrees with the exact integrated tail") {
    std::vector<LifetimeLaw> laws = {LifetimeLaw::exponential(0.7),
                                     LifetimeLaw::uniform(0.5, 2.5),
                                     LifetimeLaw::point_mass(1.3)};
    std::vector<double> cdf = {0.0, 0.2, 0.55, 0.8, 1.0};
    laws.push_back(LifetimeLaw::empirical(0.5, cdf));
    for (const auto& law : laws)
        for (double q : {0.0, 0.4, 2.0}) {
            double quad = damped_mean_lifetime(law, q, 1.0, 5e-5);
            double exact = law.integrated_damped_tail(
                q, 0.0, std::numeric_limits<double>::infinity());
            CHECK(quad == doctest::Approx(exact).epsilon(1e-6));
        }
}

TEST_CASE("size-biased law: closed forms") {
    SizeBiasedLifetime exp_sb(LifetimeLaw::exponential(1.0), 0.0, 1.0, 1e-4);
    CHECK(exp_sb.tail(0.0) == doctest::Approx(1.0));
    for (double t : {0.25, 1.0, 2.5})
        CHECK(exp_sb.tail(t) == doctest::Approx(std::exp(-t)).epsilon(1e-6));

    SizeBiasedLifetime pm_sb(LifetimeLaw::point_mass(2.0), 0.0, 1.0, 1e-4);
    for (double t : {0.0, 0.5, 1.0, 1.9})
        CHECK(pm_sb.tail(t) == doctest::Approx((2.0 - t) / 2.0).epsilon(1e-6));
    CHECK(pm_sb.tail(2.5) == 0.0);

    // nonincreasing
    double prev = 2.0;
    for (double t = 0.0; t < 3.0; t += 0.1) {
        double v = exp_sb.tail(t);
        CHECK(v <= prev + 1e-12);
        prev = v;
    }
}

TEST_CASE("size-biased sampler passes the DKW band at 1e5 samples") {
    SizeBiasedLifetime sb(LifetimeLaw::uniform(0.0, 2.0), 0.3, 1.0, 1e-4);
    const std::size_t n = 100000;
    RngStream rng(42);
    std::vector<double> xs(n);
    for (auto& x : xs) x = sb.sample(rng);
    std::sort(xs.begin(), xs.end());
    // sup_t |F_n(t) - F(t)|, evaluated at the sample points (where the sup is attained)
    double sup = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double F = 1.0 - sb.tail(xs[i]);
        double lo = static_cast<double>(i) / static_cast<double>(n);
        double hi = static_cast<double>(i + 1) / static_cast<double>(n);
        sup = std::max({sup, std::abs(F - lo), std::abs(F - hi)});
    }
    double dkw = std::sqrt(std::log(2.0 / 1e-6) / (2.0 * static_cast<double>(n)));
    CHECK(sup < dkw);
}

TEST_CASE("criticality classification") {
    ModelParams p;
    p.lambda_n = 0.5;
    p.lifetime = LifetimeLaw::exponential(1.0);
    p.offspring = DiscreteLaw({{1, 1.0}});
    CHECK(p.classify() == Criticality::Subcritical);
    p.lambda_n = 1.0;
    CHECK(p.classify() == Criticality::Critical);
    p.offspring = DiscreteLaw({{2, 1.0}});
    CHECK(p.classify() == Criticality::Supercritical);
    CHECK(p.criticality_index() == doctest::Approx(2.0));
}
