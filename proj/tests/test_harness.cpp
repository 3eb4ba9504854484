#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cmj/harness.hpp"

using namespace cmj;

namespace {

LimitParams feller_limit(double b) {
    LimitParams p;
    p.b = b;
    p.lambda = 1.0;
    p.eta = 1.0;
    p.sigma = 1.0;
    p.gamma_star = 1.0;
    return p;
}

}  // namespace

TEST_CASE("binary family recipe") {
    auto limit = feller_limit(0.5);
    auto law = LifetimeLaw::exponential(1.0);
    auto p = build_c1_family(limit, law, 100, 0.0);
    CHECK(p.lambda_n == doctest::Approx(0.995));
    CHECK(p.gamma_n == doctest::Approx(100.0));
    REQUIRE(p.offspring.pmf().size() == 1);
    CHECK(p.offspring.pmf()[0].first == 1);
    CHECK(p.offspring.pmf()[0].second == doctest::Approx(1.0));

    // b = 0 gives an exactly critical family
    auto crit = build_c1_family(feller_limit(0.0), law, 50, 0.0);
    CHECK(crit.criticality_index() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(crit.classify() == Criticality::Critical);

    // drift identity holds exactly for every n of the recipe
    for (std::uint64_t n : {10ull, 100ull, 1000ull}) {
        auto q = build_c1_family(limit, law, n, 0.0);
        double drift = q.gamma_n * (1.0 - q.lambda_n * q.lifetime.mean());
        CHECK(drift == doctest::Approx(limit.b).epsilon(1e-10));
    }
}

TEST_CASE("atom recipe: scaled mechanisms approach the limit mechanisms") {
    auto limit = feller_limit(0.8);
    limit.levy.m = -0.3;
    limit.levy.nu0_atoms = {{1.0, 0.3}};
    limit.zeta = 0.5;
    limit.levy.a = 1.0;            // = gamma_star
    limit.levy.nu1_atoms = {{0.5, 0.4}};
    auto law = LifetimeLaw::exponential(1.0);

    double z = 1.0;
    double phi_target = branching_mechanism(limit.levy, z);
    double psi_target = immigration_mechanism(limit.levy, z);
    double prev_phi_gap = 1e9, prev_psi_gap = 1e9;
    for (std::uint64_t n : {100ull, 1000ull, 10000ull}) {
        auto p = build_c1_family(limit, law, n, 0.0);
        double phi_gap = std::abs(scaled_branching_mechanism(p, z) - phi_target);
        double psi_gap = std::abs(scaled_immigration_mechanism(p, z) - psi_target);
        CHECK(phi_gap < prev_phi_gap);
        CHECK(psi_gap < prev_psi_gap);
        prev_phi_gap = phi_gap;
        prev_psi_gap = psi_gap;
    }
    CHECK(prev_phi_gap < 5e-3);
    CHECK(prev_psi_gap < 5e-3);
}

TEST_CASE("family recipe rejections") {
    auto law = LifetimeLaw::exponential(1.0);

    // probabilities leave [0,1] at small n; the error names the minimal n
    auto heavy = feller_limit(0.5);
    heavy.levy.m = -3.0;  // big k=2 mass theta/gamma_n
    CHECK_THROWS_WITH_AS(
        (void)build_c1_family(heavy, law, 1, 3.0),
        doctest::Contains("minimal valid n"), std::invalid_argument);

    auto drifty = feller_limit(0.5);
    drifty.zeta = 1.0;
    drifty.levy.a = 0.5;  // below gamma_star
    CHECK_THROWS_AS((void)build_c1_family(drifty, law, 100, 0.0), std::invalid_argument);

    auto diffusive = feller_limit(0.5);
    diffusive.levy.c = 1.0;
    CHECK_THROWS_AS((void)build_c1_family(diffusive, law, 100, 0.0), std::invalid_argument);

    auto wrong_m = feller_limit(0.5);
    wrong_m.levy.m = -0.1;
    wrong_m.levy.nu0_atoms = {{1.0, 0.3}};  // atoms force m <= -0.3
    CHECK_THROWS_AS((void)build_c1_family(wrong_m, law, 100, 0.0), std::invalid_argument);

    auto subcrit_sum = feller_limit(-0.5);  // b+m < 0 and beta = 0
    CHECK_THROWS_WITH_AS((void)build_c1_family(subcrit_sum, law, 100, 0.0),
                         doctest::Contains("beta"), std::invalid_argument);

    auto moments_off = feller_limit(0.5);
    CHECK_THROWS_AS((void)build_c1_family(moments_off, LifetimeLaw::exponential(2.0), 100, 0.0),
                    std::invalid_argument);
}

TEST_CASE("damped drift identity trend toward b + m + beta*sigma*lambda") {
    auto limit = feller_limit(0.5);
    auto law = LifetimeLaw::exponential(1.0);
    double beta = 0.3;
    double target = limit.b + limit.levy.m + beta * limit.sigma * limit.lambda;
    double prev_gap = 1e18;
    double prev_val = -1e18;
    for (std::uint64_t n : {10ull, 50ull, 250ull, 1250ull}) {
        auto p = build_c1_family(limit, law, n, beta);
        double eta_b = law.integrated_damped_tail(beta / p.gamma_n, 0.0,
                                                  std::numeric_limits<double>::infinity());
        double val = p.gamma_n * (1.0 - p.lambda_n * p.offspring.mean() * eta_b);
        double gap = std::abs(val - target);
        CHECK(gap < prev_gap);
        CHECK(val > prev_val);  // monotone approach from below for this family
        prev_gap = gap;
        prev_val = val;
    }
    CHECK(prev_gap < 1e-2);
}

TEST_CASE("empirical laplace") {
    std::vector<double> zeros(10, 0.0);
    auto a = empirical_laplace(zeros, 2.0);
    CHECK(a.mean == doctest::Approx(1.0));
    CHECK(a.stderr_ == doctest::Approx(0.0));
    std::vector<double> any = {0.3, 1.2, 7.0};
    auto b = empirical_laplace(any, 0.0);
    CHECK(b.mean == doctest::Approx(1.0));
    CHECK(b.stderr_ == doctest::Approx(0.0));
    std::vector<double> two = {0.0, 1.0};
    CHECK(empirical_laplace(two, std::log(2.0)).mean == doctest::Approx(0.75));
    std::vector<double> one = {1.0};
    CHECK_THROWS(empirical_laplace(one, 1.0));
}

TEST_CASE("eps1 is zero without ancestors and centred with them") {
    auto limit = feller_limit(0.5);
    auto law = LifetimeLaw::exponential(1.0);
    auto p = build_c1_family(limit, law, 100, 0.0);
    SizeBiasedLifetime sb(law, 0.0, p.gamma_n);
    auto zero = error_eps1({}, p, sb, 1.0, 17);
    CHECK(zero.sup_norm() == 0.0);

    // centering: replica average of eps1(t) shrinks with the replica count
    RngStream rng(5);
    std::size_t reps = 400, z0 = 100;
    GridFunction acc = GridFunction::zeros(1.0 / 16.0, 17);
    for (std::size_t r = 0; r < reps; ++r) {
        std::vector<double> anc(z0);
        for (auto& a : anc) a = sb.sample(rng);
        acc += error_eps1(anc, p, sb, 1.0, 17);
    }
    acc *= 1.0 / static_cast<double>(reps);
    CHECK(acc.sup_norm() < 0.01);
}

TEST_CASE("eps5 vanishes with exact ingredients") {
    // kernel R(gamma_n t) = (1/(sigma lambda)) e^{-rho t} with prefactor b+m+beta*sigma*lambda
    double sigma = 1.0, lambda = 1.0, b = 0.5, beta = 0.2;
    double rho = b / (sigma * lambda) + beta;
    double gamma_n = 1.0;
    double h = 1e-3;
    auto pts = grid_points(40.0, h);
    GridFunction exact = GridFunction::zeros(h, pts);
    for (std::size_t i = 0; i < pts; ++i)
        exact[i] = std::exp(-rho * exact.t(i)) / (sigma * lambda);
    // cumulative and total taken analytically so the only error is representation
    GridFunction cum = GridFunction::zeros(h, pts);
    for (std::size_t i = 0; i < pts; ++i)
        cum[i] = (1.0 - std::exp(-rho * cum.t(i))) / (rho * sigma * lambda);
    double total = 1.0 / (rho * sigma * lambda);
    double prefactor = b + beta * sigma * lambda;
    auto eps5 = error_eps5_core(1.0, prefactor, total, cum, gamma_n, rho, 10.0, 101);
    CHECK(eps5.sup_norm() < 1e-12);
}

TEST_CASE("convergence run: structure, reproducibility, moment bound") {
    auto limit = feller_limit(0.5);
    auto law = LifetimeLaw::exponential(1.0);
    ConvergenceConfig cfg;
    cfg.n_sequence = {10, 30};
    cfg.replicas = 400;
    cfg.times = {0.5, 1.0};
    cfg.z_values = {1.0};
    cfg.alpha = 1.5;
    cfg.z0 = 1.0;
    cfg.seed = 31;
    cfg.threads = 1;
    cfg.tol.gap_abs = 0.2;  // loose: this is a structural smoke test
    auto rep = run_convergence(cfg, limit, law);
    REQUIRE(rep.cells.size() == 4);
    for (const auto& c : rep.cells) {
        CHECK(c.empirical > 0.0);
        CHECK(c.empirical <= 1.0);
        CHECK(c.stderr_ > 0.0);
        CHECK(c.gap >= 0.0);
        CHECK(c.oracle > 0.0);
    }
    REQUIRE(rep.diagnostics.size() == 2);
    for (const auto& d : rep.diagnostics) {
        CHECK(d.eps1_sup_mean > 0.0);
        CHECK(d.eps5_sup < 0.2);
        CHECK(d.moment1_sup > 0.0);
    }
    CHECK(rep.pass_moment);

    auto rep2 = run_convergence(cfg, limit, law);
    REQUIRE(rep2.cells.size() == rep.cells.size());
    for (std::size_t i = 0; i < rep.cells.size(); ++i) {
        CHECK(rep2.cells[i].empirical == rep.cells[i].empirical);
        CHECK(rep2.cells[i].stderr_ == rep.cells[i].stderr_);
    }

    // thread count must not change the reduction
    cfg.threads = 4;
    auto rep4 = run_convergence(cfg, limit, law);
    for (std::size_t i = 0; i < rep.cells.size(); ++i)
        CHECK(rep4.cells[i].empirical == rep.cells[i].empirical);
}

TEST_CASE("replica overflow yields a partial report, not a crash") {
    auto limit = feller_limit(0.5);
    ConvergenceConfig cfg;
    cfg.n_sequence = {10};
    cfg.replicas = 200;
    cfg.times = {1.0};
    cfg.z_values = {1.0};
    cfg.seed = 99;
    cfg.threads = 2;
    cfg.event_cap = 200;  // roughly the median event count: some replicas trip it
    auto rep = run_convergence(cfg, limit, LifetimeLaw::exponential(1.0));
    CHECK(rep.partial);
    CHECK(!rep.pass());
    REQUIRE(!rep.failures.empty());
    CHECK(rep.failures.front().find("partial") != std::string::npos);
    REQUIRE(rep.cells.size() == 1);
    CHECK(rep.cells[0].empirical > 0.0);
}

TEST_CASE("criticality drift approaches b + m with shrinking gap") {
    auto limit = feller_limit(0.8);
    limit.levy.m = -0.3;
    limit.levy.nu0_atoms = {{1.0, 0.3}};
    auto law = LifetimeLaw::exponential(1.0);
    double target = limit.b + limit.levy.m;
    double prev_gap = 1e18;
    for (std::uint64_t n : {100ull, 1000ull, 10000ull}) {
        auto p = build_c1_family(limit, law, n, 0.0);
        double val = p.gamma_n * (1.0 - p.lambda_n * p.lifetime.mean() * p.offspring.mean());
        double gap = std::abs(val - target);
        CHECK(gap < 0.5 * prev_gap);  // ~O(1/n): tenfold n at least halves the gap
        prev_gap = gap;
    }
    CHECK(prev_gap < 1e-3);
}

TEST_CASE("damped rescaled mean stays below one constant across n") {
    auto limit = feller_limit(0.5);
    auto law = LifetimeLaw::exponential(1.0);
    const std::vector<double> times = {0.25, 0.5, 1.0};
    for (std::uint64_t n : {10ull, 50ull, 250ull}) {
        auto p = build_c1_family(limit, law, n, 0.0);
        SizeBiasedLifetime sb(law, 0.0, p.gamma_n);
        const std::uint64_t reps = 300;
        std::vector<double> mean(times.size(), 0.0);
        for (std::uint64_t r = 0; r < reps; ++r) {
            RngStream rng = RngStream::substream(808 + n, r);
            std::vector<double> anc(n);
            for (auto& a : anc) a = sb.sample(rng);
            SimOptions o;
            o.z0 = static_cast<std::int64_t>(n);
            o.horizon = p.gamma_n;
            o.forced_ancestor_lifetimes = anc;
            auto res = simulate(p, o, rng);
            for (std::size_t ti = 0; ti < times.size(); ++ti)
                mean[ti] += static_cast<double>(res.path.value_at(p.gamma_n * times[ti])) /
                            static_cast<double>(n);
        }
        for (double m : mean) CHECK(m / static_cast<double>(reps) < 2.0);
    }
}

TEST_CASE("config validation") {
    ConvergenceConfig cfg;
    cfg.n_sequence = {10, 10};
    cfg.times = {1.0};
    cfg.z_values = {1.0};
    CHECK_THROWS(cfg.validate());
    cfg.n_sequence = {10, 20};
    cfg.replicas = 10;
    CHECK_THROWS(cfg.validate());
    cfg.replicas = 100;
    cfg.alpha = 2.5;
    CHECK_THROWS(cfg.validate());
    cfg.alpha = 1.5;
    CHECK_NOTHROW(cfg.validate());
}
