#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cmj/distributions.hpp"
#include "cmj/grid.hpp"
#include "cmj/rng.hpp"
#include "cmj/volterra.hpp"

namespace cmj {

// One individual: when it was born, how long it lives, where it came from.
struct Particle {
    enum class Origin { Ancestor, Immigrant, Offspring };
    double birth_time;
    double lifetime;
    Origin origin;
    std::size_t origin_index;  // immigration epoch / birth event index, 0 for ancestors

    bool alive_at(double t) const { return birth_time <= t && t < birth_time + lifetime; }
};

// Full mark record of one simulated path: every birth/immigration batch with the
// lifetimes it spawned. Ancestors are carried separately in SimResult.
struct EventLog {
    struct Batch {
        double time;
        std::vector<double> lifetimes;
    };
    std::vector<Batch> birth_events;
    std::vector<Batch> immigration_events;

    void write_binary(const std::string& path, const std::vector<double>& ancestors) const;
    static std::pair<EventLog, std::vector<double>> read_binary(const std::string& path);
};

// Piecewise-constant population trajectory: Z(t) = initial_count + sum of increments
// with jump time <= t (cadlag).
struct PopulationPath {
    std::int64_t initial_count = 0;
    std::vector<double> jump_times;       // nondecreasing
    std::vector<std::int64_t> increments; // +k for a batch, -1 for a death

    // Builds the running-count index. simulate() returns sealed paths; call this
    // before sharing a hand-assembled path across threads.
    void seal() const { ensure_prefix(); }
    std::int64_t value_at(double t) const;
    std::int64_t terminal_value() const;
    void write_csv(const std::string& path) const;

  private:
    mutable std::vector<std::int64_t> prefix_;  // built on first use
    void ensure_prefix() const;
};

struct SimOptions {
    std::int64_t z0 = 1;
    double horizon = 1.0;
    bool record = false;
    // Ancestor lifetimes: size-biased law (default) or the plain lifetime law, or
    // explicitly forced values (overrides both).
    bool size_biased_ancestors = true;
    std::optional<std::vector<double>> forced_ancestor_lifetimes;
    std::uint64_t event_cap = 10'000'000;  // guard against supercritical blow-up
};

struct SimResult {
    PopulationPath path;
    std::vector<double> ancestor_lifetimes;
    std::optional<EventLog> log;
    std::uint64_t events_processed = 0;
};

// Raised when the event cap is hit; carries how far the clock got.
class event_cap_exceeded : public std::runtime_error {
  public:
    event_cap_exceeded(double t, std::uint64_t cap);
    double time_reached;
    std::uint64_t cap;
};

// Event-driven exact simulation. Deaths are processed before births at equal
// timestamps (left-limit convention for the intensity).
SimResult simulate(const ModelParams& params, const SimOptions& opts, RngStream& rng);

// Flattened individual view of a recorded run (requires opts.record = true).
std::vector<Particle> all_particles(const SimResult& result);

// Samples e^{-beta t} Z(gamma_n t) / n on a uniform grid of `points` nodes over [0, T].
GridFunction rescale(const PopulationPath& path, double n, double gamma_n, double beta,
                     double T, std::size_t points);

// E[Z(t) | ancestors] on the resolvent grid restricted to [0, T]:
//   G(t) = sum_j 1{e_j > t} + zeta*a*int_0^t tail(s) ds,   mean = G + R*G.
// R must be the undamped (beta = 0) resolvent for `params`; grid spec (h, points)
// must match R's grid.
GridFunction conditional_mean(const ModelParams& params,
                              const std::vector<double>& ancestor_lifetimes,
                              const ResolventKernel& R, double T);

}  // namespace cmj
