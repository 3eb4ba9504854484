#include "cmj/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace cmj {

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw std::invalid_argument(where + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw std::invalid_argument(where + ": unknown key \"" + it.key() + "\"");
}

double get_num(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw std::invalid_argument(where + ": missing key \"" + key + "\"");
    if (!j[key].is_number()) throw std::invalid_argument(where + "." + key + ": expected a number");
    return j[key].get<double>();
}

double get_num_or(const json& j, const std::string& key, double dflt, const std::string& where) {
    if (!j.contains(key)) return dflt;
    if (!j[key].is_number()) throw std::invalid_argument(where + "." + key + ": expected a number");
    return j[key].get<double>();
}

std::vector<double> get_vec(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key) || !j[key].is_array())
        throw std::invalid_argument(where + "." + key + ": expected an array of numbers");
    std::vector<double> v;
    for (const auto& e : j[key]) {
        if (!e.is_number()) throw std::invalid_argument(where + "." + key + ": expected numbers");
        v.push_back(e.get<double>());
    }
    return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Laws
// ---------------------------------------------------------------------------

json lifetime_to_json(const LifetimeLaw& law) {
    json j;
    std::visit(
        [&](const auto& r) {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, LifetimeLaw::Exponential>) {
                j = {{"kind", "exp"}, {"rate", r.rate}};
            } else if constexpr (std::is_same_v<T, LifetimeLaw::Uniform>) {
                j = {{"kind", "uniform"}, {"lo", r.lo}, {"hi", r.hi}};
            } else if constexpr (std::is_same_v<T, LifetimeLaw::PointMass>) {
                j = {{"kind", "point"}, {"c", r.c}};
            } else {
                j = {{"kind", "grid"}, {"h", r.h}, {"cdf", r.cdf}};
            }
        },
        law.repr());
    return j;
}

LifetimeLaw lifetime_from_json(const json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("kind"))
        throw std::invalid_argument(where + ": expected a lifetime law object with \"kind\"");
    std::string kind = j["kind"].get<std::string>();
    if (kind == "exp") {
        check_keys(j, {"kind", "rate"}, where);
        return LifetimeLaw::exponential(get_num(j, "rate", where));
    }
    if (kind == "uniform") {
        check_keys(j, {"kind", "lo", "hi"}, where);
        return LifetimeLaw::uniform(get_num(j, "lo", where), get_num(j, "hi", where));
    }
    if (kind == "point") {
        check_keys(j, {"kind", "c"}, where);
        return LifetimeLaw::point_mass(get_num(j, "c", where));
    }
    if (kind == "grid") {
        check_keys(j, {"kind", "h", "cdf"}, where);
        return LifetimeLaw::empirical(get_num(j, "h", where), get_vec(j, "cdf", where));
    }
    throw std::invalid_argument(where + ": unknown lifetime kind \"" + kind + "\"");
}

json discrete_to_json(const DiscreteLaw& law) {
    json j = json::object();
    for (const auto& [k, p] : law.pmf()) j[std::to_string(k)] = p;
    return j;
}

DiscreteLaw discrete_from_json(const json& j, const std::string& where) {
    if (!j.is_object() || j.empty())
        throw std::invalid_argument(where + ": expected a nonempty {\"k\": prob} object");
    std::vector<std::pair<std::uint64_t, double>> pmf;
    for (auto it = j.begin(); it != j.end(); ++it) {
        std::uint64_t k;
        try {
            std::size_t pos = 0;
            k = std::stoull(it.key(), &pos);
            if (pos != it.key().size()) throw std::invalid_argument("");
        } catch (...) {
            throw std::invalid_argument(where + ": key \"" + it.key() + "\" is not an integer");
        }
        if (!it.value().is_number())
            throw std::invalid_argument(where + "." + it.key() + ": expected a number");
        pmf.emplace_back(k, it.value().get<double>());
    }
    return DiscreteLaw(std::move(pmf));
}

// ---------------------------------------------------------------------------
// Parameter blocks
// ---------------------------------------------------------------------------

json model_to_json(const ModelParams& p) {
    return {{"n", p.n},
            {"gamma_n", p.gamma_n},
            {"lambda", p.lambda_n},
            {"zeta", p.zeta_n},
            {"beta", p.beta},
            {"lifetime", lifetime_to_json(p.lifetime)},
            {"offspring", discrete_to_json(p.offspring)},
            {"immigration", discrete_to_json(p.immigration)}};
}

ModelParams model_from_json(const json& j) {
    const std::string where = "model";
    check_keys(j, {"n", "gamma_n", "lambda", "zeta", "beta", "lifetime", "offspring",
                   "immigration"},
               where);
    ModelParams p;
    p.n = static_cast<std::uint64_t>(get_num_or(j, "n", 1.0, where));
    p.gamma_n = get_num_or(j, "gamma_n", 1.0, where);
    p.lambda_n = get_num(j, "lambda", where);
    p.zeta_n = get_num_or(j, "zeta", 0.0, where);
    p.beta = get_num_or(j, "beta", 0.0, where);
    if (!j.contains("lifetime")) throw std::invalid_argument("model: missing \"lifetime\"");
    p.lifetime = lifetime_from_json(j["lifetime"], "model.lifetime");
    if (!j.contains("offspring")) throw std::invalid_argument("model: missing \"offspring\"");
    p.offspring = discrete_from_json(j["offspring"], "model.offspring");
    p.immigration = j.contains("immigration")
                        ? discrete_from_json(j["immigration"], "model.immigration")
                        : DiscreteLaw({{1, 1.0}});
    p.validate();
    return p;
}

namespace {
json atoms_to_json(const std::vector<std::pair<double, double>>& atoms) {
    json a = json::array();
    for (const auto& [u, w] : atoms) a.push_back(json::array({u, w}));
    return a;
}
std::vector<std::pair<double, double>> atoms_from_json(const json& j, const std::string& where) {
    if (!j.is_array()) throw std::invalid_argument(where + ": expected an array of [u, w] pairs");
    std::vector<std::pair<double, double>> atoms;
    for (const auto& e : j) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
            throw std::invalid_argument(where + ": each atom must be a [u, w] number pair");
        atoms.emplace_back(e[0].get<double>(), e[1].get<double>());
    }
    return atoms;
}
}  // namespace

json limit_to_json(const LimitParams& p) {
    return {{"b", p.b},
            {"m", p.levy.m},
            {"c", p.levy.c},
            {"a", p.levy.a},
            {"nu0", atoms_to_json(p.levy.nu0_atoms)},
            {"nu1", atoms_to_json(p.levy.nu1_atoms)},
            {"lambda", p.lambda},
            {"zeta", p.zeta},
            {"eta", p.eta},
            {"sigma", p.sigma},
            {"gamma_star", p.gamma_star}};
}

LimitParams limit_from_json(const json& j) {
    const std::string where = "limit";
    check_keys(j, {"b", "m", "c", "a", "nu0", "nu1", "lambda", "zeta", "eta", "sigma",
                   "gamma_star"},
               where);
    LimitParams p;
    p.b = get_num_or(j, "b", 0.0, where);
    p.levy.m = get_num_or(j, "m", 0.0, where);
    p.levy.c = get_num_or(j, "c", 0.0, where);
    p.levy.a = get_num_or(j, "a", 0.0, where);
    if (j.contains("nu0")) p.levy.nu0_atoms = atoms_from_json(j["nu0"], "limit.nu0");
    if (j.contains("nu1")) p.levy.nu1_atoms = atoms_from_json(j["nu1"], "limit.nu1");
    p.lambda = get_num_or(j, "lambda", 1.0, where);
    p.zeta = get_num_or(j, "zeta", 0.0, where);
    p.eta = get_num_or(j, "eta", 1.0, where);
    p.sigma = get_num_or(j, "sigma", 1.0, where);
    p.gamma_star = get_num_or(j, "gamma_star", 1.0, where);
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

void RunConfig::validate() const {
    if (experiment == "resolvent" || experiment == "simulate") {
        if (!model) throw std::invalid_argument(experiment + ": needs a \"model\" block");
    } else if (experiment == "cbi") {
        if (!limit) throw std::invalid_argument("cbi: needs a \"limit\" block");
    } else if (experiment == "converge") {
        if (!limit) throw std::invalid_argument("converge: needs a \"limit\" block");
        if (!family_lifetime)
            throw std::invalid_argument("converge: needs a \"lifetime\" block (family law)");
        if (!converge) throw std::invalid_argument("converge: needs a \"converge\" block");
        convergence_config().validate();
    } else {
        throw std::invalid_argument("experiment must be one of simulate, resolvent, cbi, converge");
    }
    if (grid.T <= 0.0 || grid.h <= 0.0 || grid.dt <= 0.0)
        throw std::invalid_argument("grid: T, h, dt must be > 0");
    if (sim.z0 < 0) throw std::invalid_argument("sim.z0 must be >= 0");
    if (sim.horizon <= 0.0) throw std::invalid_argument("sim.horizon must be > 0");
    if (sim.grid_points < 2) throw std::invalid_argument("sim.grid_points must be >= 2");
    if (cbi.x < 0.0) throw std::invalid_argument("cbi.x must be >= 0");
}

ConvergenceConfig RunConfig::convergence_config() const {
    ConvergenceConfig c = *converge;
    c.replicas = mc.replicas;
    c.seed = mc.seed;
    c.threads = mc.threads;
    c.event_cap = mc.event_cap;
    return c;
}

RunConfig parse_run_config(const json& j) {
    check_keys(j, {"experiment", "model", "limit", "lifetime", "grid", "mc", "sim", "cbi",
                   "converge"},
               "config");
    RunConfig cfg;
    if (!j.contains("experiment") || !j["experiment"].is_string())
        throw std::invalid_argument("config: missing string key \"experiment\"");
    cfg.experiment = j["experiment"].get<std::string>();

    if (j.contains("model")) cfg.model = model_from_json(j["model"]);
    if (j.contains("limit")) cfg.limit = limit_from_json(j["limit"]);
    if (j.contains("lifetime"))
        cfg.family_lifetime = lifetime_from_json(j["lifetime"], "lifetime");

    if (j.contains("grid")) {
        const auto& g = j["grid"];
        check_keys(g, {"T", "h", "dt"}, "grid");
        cfg.grid.T = get_num_or(g, "T", cfg.grid.T, "grid");
        cfg.grid.h = get_num_or(g, "h", cfg.grid.h, "grid");
        cfg.grid.dt = get_num_or(g, "dt", cfg.grid.dt, "grid");
    }
    if (j.contains("mc")) {
        const auto& m = j["mc"];
        check_keys(m, {"replicas", "seed", "threads", "event_cap"}, "mc");
        cfg.mc.replicas = static_cast<std::uint64_t>(get_num_or(m, "replicas", 1.0, "mc"));
        cfg.mc.seed = static_cast<std::uint64_t>(get_num_or(m, "seed", 1.0, "mc"));
        cfg.mc.threads = static_cast<unsigned>(get_num_or(m, "threads", 0.0, "mc"));
        cfg.mc.event_cap =
            static_cast<std::uint64_t>(get_num_or(m, "event_cap", 10'000'000.0, "mc"));
    }
    if (j.contains("sim")) {
        const auto& s = j["sim"];
        check_keys(s, {"z0", "horizon", "record", "ancestor_law", "grid_points"}, "sim");
        cfg.sim.z0 = static_cast<std::int64_t>(get_num_or(s, "z0", 1.0, "sim"));
        cfg.sim.horizon = get_num_or(s, "horizon", 1.0, "sim");
        if (s.contains("record")) {
            if (!s["record"].is_boolean())
                throw std::invalid_argument("sim.record: expected a boolean");
            cfg.sim.record = s["record"].get<bool>();
        }
        if (s.contains("ancestor_law")) {
            std::string a = s["ancestor_law"].get<std::string>();
            if (a == "size_biased")
                cfg.sim.size_biased_ancestors = true;
            else if (a == "lifetime")
                cfg.sim.size_biased_ancestors = false;
            else
                throw std::invalid_argument(
                    "sim.ancestor_law: expected \"size_biased\" or \"lifetime\"");
        }
        cfg.sim.grid_points =
            static_cast<std::size_t>(get_num_or(s, "grid_points", 101.0, "sim"));
    }
    if (j.contains("cbi")) {
        const auto& c = j["cbi"];
        check_keys(c, {"x", "times", "z_values"}, "cbi");
        cfg.cbi.x = get_num_or(c, "x", 1.0, "cbi");
        if (c.contains("times")) cfg.cbi.times = get_vec(c, "times", "cbi");
        if (c.contains("z_values")) cfg.cbi.z_values = get_vec(c, "z_values", "cbi");
    }
    if (j.contains("converge")) {
        const auto& c = j["converge"];
        check_keys(c, {"n_sequence", "times", "z_values", "alpha", "z0", "beta", "diag_points",
                       "resolvent_h", "oracle_dt", "tolerance"},
                   "converge");
        ConvergenceConfig cc;
        for (const auto& e : get_vec(c, "n_sequence", "converge"))
            cc.n_sequence.push_back(static_cast<std::uint64_t>(e));
        cc.times = get_vec(c, "times", "converge");
        cc.z_values = get_vec(c, "z_values", "converge");
        cc.alpha = get_num_or(c, "alpha", 1.5, "converge");
        cc.z0 = get_num_or(c, "z0", 1.0, "converge");
        cc.beta = get_num_or(c, "beta", 0.0, "converge");
        cc.diag_points =
            static_cast<std::size_t>(get_num_or(c, "diag_points", 65.0, "converge"));
        cc.resolvent_h = get_num_or(c, "resolvent_h", 0.02, "converge");
        cc.oracle_dt = get_num_or(c, "oracle_dt", 1e-4, "converge");
        if (c.contains("tolerance")) {
            const auto& t = c["tolerance"];
            check_keys(t, {"gap_abs", "gap_se_mult", "require_monotone", "monotone_se_mult",
                           "moment_ratio_max"},
                       "converge.tolerance");
            cc.tol.gap_abs = get_num_or(t, "gap_abs", 0.02, "tolerance");
            cc.tol.gap_se_mult = get_num_or(t, "gap_se_mult", 3.0, "tolerance");
            if (t.contains("require_monotone")) {
                if (!t["require_monotone"].is_boolean())
                    throw std::invalid_argument("tolerance.require_monotone: expected a boolean");
                cc.tol.require_monotone_gap = t["require_monotone"].get<bool>();
            }
            cc.tol.monotone_se_mult = get_num_or(t, "monotone_se_mult", 2.0, "tolerance");
            cc.tol.moment_ratio_max = get_num_or(t, "moment_ratio_max", 5.0, "tolerance");
        }
        cfg.converge = std::move(cc);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config parse error in " + path + ": " + e.what());
    }
    return parse_run_config(j);
}

json resolved_json(const RunConfig& cfg) {
    json j;
    j["experiment"] = cfg.experiment;
    if (cfg.model) j["model"] = model_to_json(*cfg.model);
    if (cfg.limit) j["limit"] = limit_to_json(*cfg.limit);
    if (cfg.family_lifetime) j["lifetime"] = lifetime_to_json(*cfg.family_lifetime);
    j["grid"] = {{"T", cfg.grid.T}, {"h", cfg.grid.h}, {"dt", cfg.grid.dt}};
    j["mc"] = {{"replicas", cfg.mc.replicas},
               {"seed", cfg.mc.seed},
               {"threads", cfg.mc.threads},
               {"event_cap", cfg.mc.event_cap}};
    if (cfg.experiment == "simulate")
        j["sim"] = {{"z0", cfg.sim.z0},
                    {"horizon", cfg.sim.horizon},
                    {"record", cfg.sim.record},
                    {"ancestor_law", cfg.sim.size_biased_ancestors ? "size_biased" : "lifetime"},
                    {"grid_points", cfg.sim.grid_points}};
    if (cfg.experiment == "cbi")
        j["cbi"] = {{"x", cfg.cbi.x}, {"times", cfg.cbi.times}, {"z_values", cfg.cbi.z_values}};
    if (cfg.converge) {
        const auto& c = *cfg.converge;
        j["converge"] = {{"n_sequence", c.n_sequence},
                         {"times", c.times},
                         {"z_values", c.z_values},
                         {"alpha", c.alpha},
                         {"z0", c.z0},
                         {"beta", c.beta},
                         {"diag_points", c.diag_points},
                         {"resolvent_h", c.resolvent_h},
                         {"oracle_dt", c.oracle_dt},
                         {"tolerance",
                          {{"gap_abs", c.tol.gap_abs},
                           {"gap_se_mult", c.tol.gap_se_mult},
                           {"require_monotone", c.tol.require_monotone_gap},
                           {"monotone_se_mult", c.tol.monotone_se_mult},
                           {"moment_ratio_max", c.tol.moment_ratio_max}}}};
    }
    return j;
}

}  // namespace cmj
