#include "cmj/cmj_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <queue>
#include <stdexcept>

namespace cmj {

// ---------------------------------------------------------------------------
// EventLog binary replay record
// ---------------------------------------------------------------------------

namespace {
constexpr char kLogMagic[8] = {'C', 'M', 'J', 'L', 'O', 'G', '1', '\0'};

void put_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_f64(std::ofstream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint64_t get_u64(std::ifstream& in) {
    std::uint64_t v;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
double get_f64(std::ifstream& in) {
    double v;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

void put_batches(std::ofstream& out, const std::vector<EventLog::Batch>& bs) {
    put_u64(out, bs.size());
    for (const auto& b : bs) {
        put_f64(out, b.time);
        put_u64(out, b.lifetimes.size());
        for (double y : b.lifetimes) put_f64(out, y);
    }
}
std::vector<EventLog::Batch> get_batches(std::ifstream& in) {
    std::vector<EventLog::Batch> bs(get_u64(in));
    for (auto& b : bs) {
        b.time = get_f64(in);
        b.lifetimes.resize(get_u64(in));
        for (double& y : b.lifetimes) y = get_f64(in);
    }
    return bs;
}
}  // namespace

void EventLog::write_binary(const std::string& path, const std::vector<double>& ancestors) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("EventLog::write_binary: cannot open " + path);
    out.write(kLogMagic, sizeof(kLogMagic));
    put_u64(out, ancestors.size());
    for (double y : ancestors) put_f64(out, y);
    put_batches(out, birth_events);
    put_batches(out, immigration_events);
}

std::pair<EventLog, std::vector<double>> EventLog::read_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("EventLog::read_binary: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (std::memcmp(magic, kLogMagic, sizeof(magic)) != 0)
        throw std::runtime_error("EventLog::read_binary: bad magic in " + path);
    std::vector<double> ancestors(get_u64(in));
    for (double& y : ancestors) y = get_f64(in);
    EventLog log;
    log.birth_events = get_batches(in);
    log.immigration_events = get_batches(in);
    if (!in) throw std::runtime_error("EventLog::read_binary: truncated file " + path);
    return {std::move(log), std::move(ancestors)};
}

// ---------------------------------------------------------------------------
// PopulationPath
// ---------------------------------------------------------------------------

void PopulationPath::ensure_prefix() const {
    if (prefix_.size() == increments.size()) return;
    prefix_.resize(increments.size());
    std::int64_t acc = initial_count;
    for (std::size_t i = 0; i < increments.size(); ++i) {
        acc += increments[i];
        prefix_[i] = acc;
    }
}

std::int64_t PopulationPath::value_at(double t) const {
    ensure_prefix();
    auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
    if (it == jump_times.begin()) return initial_count;
    return prefix_[static_cast<std::size_t>(it - jump_times.begin()) - 1];
}

std::int64_t PopulationPath::terminal_value() const {
    ensure_prefix();
    return prefix_.empty() ? initial_count : prefix_.back();
}

void PopulationPath::write_csv(const std::string& path) const {
    ensure_prefix();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("PopulationPath::write_csv: cannot open " + path);
    out << "time,delta,running_count\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", 0.0);
    out << buf << ",0," << initial_count << "\n";
    for (std::size_t i = 0; i < jump_times.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", jump_times[i]);
        out << buf << "," << increments[i] << "," << prefix_[i] << "\n";
    }
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

event_cap_exceeded::event_cap_exceeded(double t, std::uint64_t c)
    : std::runtime_error("simulate: event cap " + std::to_string(c) +
                         " exceeded at time " + std::to_string(t) +
                         " (supercritical blow-up guard); raise event_cap to opt in"),
      time_reached(t),
      cap(c) {}

namespace {

enum class EventKind : std::uint8_t { Death = 0, Birth = 1, Immigration = 2 };

struct Event {
    double time;
    EventKind kind;
    std::uint64_t seq;     // total order for determinism
    double parent_death;   // Birth only: when the parent dies
};

struct EventAfter {
    // min-heap: earliest time first, deaths before births before immigrations,
    // then insertion order.
    bool operator()(const Event& a, const Event& b) const {
        if (a.time != b.time) return a.time > b.time;
        if (a.kind != b.kind) return a.kind > b.kind;
        return a.seq > b.seq;
    }
};

}  // namespace

SimResult simulate(const ModelParams& params, const SimOptions& opts, RngStream& rng) {
    params.validate();
    if (opts.z0 < 0) throw std::invalid_argument("simulate: z0 must be >= 0");
    if (opts.horizon <= 0.0) throw std::invalid_argument("simulate: horizon must be > 0");

    const double T = opts.horizon;
    const double lambda = params.lambda_n;

    SimResult res;
    std::priority_queue<Event, std::vector<Event>, EventAfter> queue;
    std::uint64_t seq = 0;

    auto schedule_particle = [&](double birth_time, double lifetime) {
        double death = birth_time + lifetime;
        if (death <= T) queue.push({death, EventKind::Death, seq++, 0.0});
        if (lambda > 0.0) {
            double first = birth_time + rng.exponential(lambda);
            if (first < death && first <= T)
                queue.push({first, EventKind::Birth, seq++, death});
        }
    };

    // Ancestors.
    if (opts.forced_ancestor_lifetimes) {
        res.ancestor_lifetimes = *opts.forced_ancestor_lifetimes;
        if (static_cast<std::int64_t>(res.ancestor_lifetimes.size()) != opts.z0)
            throw std::invalid_argument("simulate: forced ancestor lifetimes must have z0 entries");
    } else if (opts.size_biased_ancestors) {
        SizeBiasedLifetime sb(params.lifetime, params.beta, params.gamma_n);
        res.ancestor_lifetimes.reserve(static_cast<std::size_t>(opts.z0));
        for (std::int64_t i = 0; i < opts.z0; ++i) res.ancestor_lifetimes.push_back(sb.sample(rng));
    } else {
        res.ancestor_lifetimes.reserve(static_cast<std::size_t>(opts.z0));
        for (std::int64_t i = 0; i < opts.z0; ++i)
            res.ancestor_lifetimes.push_back(params.lifetime.sample(rng));
    }
    for (double y : res.ancestor_lifetimes) schedule_particle(0.0, y);

    if (params.zeta_n > 0.0) {
        double first = rng.exponential(params.zeta_n);
        if (first <= T) queue.push({first, EventKind::Immigration, seq++, 0.0});
    }

    if (opts.record) res.log.emplace();
    res.path.initial_count = opts.z0;
    std::int64_t alive = opts.z0;

    std::vector<double> batch;
    auto spawn_batch = [&](double t, const DiscreteLaw& law,
                           std::vector<EventLog::Batch>* sink) {
        auto k = law.sample(rng);
        batch.clear();
        for (std::uint64_t j = 0; j < k; ++j) batch.push_back(params.lifetime.sample(rng));
        for (double y : batch) schedule_particle(t, y);
        alive += static_cast<std::int64_t>(k);
        res.path.jump_times.push_back(t);
        res.path.increments.push_back(static_cast<std::int64_t>(k));
        if (sink) sink->push_back({t, batch});
    };

    while (!queue.empty()) {
        Event ev = queue.top();
        queue.pop();
        if (ev.time > T) break;
        if (++res.events_processed > opts.event_cap)
            throw event_cap_exceeded(ev.time, opts.event_cap);

        switch (ev.kind) {
            case EventKind::Death:
                --alive;
                res.path.jump_times.push_back(ev.time);
                res.path.increments.push_back(-1);
                break;
            case EventKind::Birth: {
                spawn_batch(ev.time, params.offspring,
                            res.log ? &res.log->birth_events : nullptr);
                double next = ev.time + rng.exponential(lambda);
                if (next < ev.parent_death && next <= T)
                    queue.push({next, EventKind::Birth, seq++, ev.parent_death});
                break;
            }
            case EventKind::Immigration: {
                spawn_batch(ev.time, params.immigration,
                            res.log ? &res.log->immigration_events : nullptr);
                double next = ev.time + rng.exponential(params.zeta_n);
                if (next <= T) queue.push({next, EventKind::Immigration, seq++, 0.0});
                break;
            }
        }
        if (alive < 0) throw std::logic_error("simulate: negative population");
    }
    res.path.seal();
    return res;
}

std::vector<Particle> all_particles(const SimResult& result) {
    if (!result.log)
        throw std::invalid_argument("all_particles: run was not recorded (record = false)");
    std::vector<Particle> out;
    for (double y : result.ancestor_lifetimes)
        out.push_back({0.0, y, Particle::Origin::Ancestor, 0});
    for (std::size_t i = 0; i < result.log->immigration_events.size(); ++i)
        for (double y : result.log->immigration_events[i].lifetimes)
            out.push_back({result.log->immigration_events[i].time, y,
                           Particle::Origin::Immigrant, i});
    for (std::size_t i = 0; i < result.log->birth_events.size(); ++i)
        for (double y : result.log->birth_events[i].lifetimes)
            out.push_back({result.log->birth_events[i].time, y, Particle::Origin::Offspring, i});
    return out;
}

GridFunction rescale(const PopulationPath& path, double n, double gamma_n, double beta, double T,
                     std::size_t points) {
    if (n <= 0.0 || gamma_n <= 0.0) throw std::invalid_argument("rescale: n, gamma_n must be > 0");
    if (points < 2) throw std::invalid_argument("rescale: need at least 2 grid points");
    double h = T / static_cast<double>(points - 1);
    GridFunction g = GridFunction::zeros(h, points);
    for (std::size_t i = 0; i < points; ++i) {
        double t = g.t(i);
        g[i] = std::exp(-beta * t) * static_cast<double>(path.value_at(gamma_n * t)) / n;
    }
    return g;
}

GridFunction conditional_mean(const ModelParams& params,
                              const std::vector<double>& ancestor_lifetimes,
                              const ResolventKernel& R, double T) {
    if (std::abs(R.params.beta) > 0.0)
        throw std::invalid_argument("conditional_mean: needs the undamped (beta=0) resolvent");
    double h = R.base.h;
    auto points = grid_points(T, h);
    if (points > R.base.size())
        throw std::invalid_argument("conditional_mean: resolvent grid does not cover [0, T]");
    if (std::abs(static_cast<double>(points - 1) * h - T) > 1e-9 * std::max(1.0, T))
        throw std::invalid_argument("conditional_mean: T must lie on the resolvent grid");

    double zeta_a = params.zeta_n * params.immigration.mean();
    // G(t) = ancestor indicator sum + zeta*a * int_0^t tail
    GridFunction G = GridFunction::zeros(h, points);
    std::vector<double> sorted = ancestor_lifetimes;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < points; ++i) {
        double t = G.t(i);
        auto it = std::upper_bound(sorted.begin(), sorted.end(), t);
        G[i] = static_cast<double>(sorted.end() - it);  // lifetimes strictly > t
        if (zeta_a > 0.0) G[i] += zeta_a * params.lifetime.integrated_damped_tail(0.0, 0.0, t);
    }

    // mean = G + R*G by trapezoid; the ancestor part of G is a step function whose
    // jumps are data (not quadrature nodes), so O(h) there is inherent and fine.
    GridFunction mean = G;
    for (std::size_t i = 1; i < points; ++i) {
        double s = 0.5 * (R.base[i] * G[0] + R.base[0] * G[i]);
        for (std::size_t j = 1; j < i; ++j) s += R.base[i - j] * G[j];
        mean[i] += h * s;
    }
    return mean;
}

}  // namespace cmj
