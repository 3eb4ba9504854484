#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "cmj/cbi.hpp"
#include "cmj/cmj_sim.hpp"
#include "cmj/distributions.hpp"
#include "cmj/harness.hpp"

namespace cmj {

using json = nlohmann::json;

// JSON law fragments ({"kind":"exp","rate":1.0}, {"1":0.6,"2":0.4}, ...)
json lifetime_to_json(const LifetimeLaw& law);
LifetimeLaw lifetime_from_json(const json& j, const std::string& where);
json discrete_to_json(const DiscreteLaw& law);
DiscreteLaw discrete_from_json(const json& j, const std::string& where);

json model_to_json(const ModelParams& p);
ModelParams model_from_json(const json& j);
json limit_to_json(const LimitParams& p);
LimitParams limit_from_json(const json& j);

struct GridBlock {
    double T = 10.0;
    double h = 1e-3;
    double dt = 1e-3;
};

struct McBlock {
    std::uint64_t replicas = 1;
    std::uint64_t seed = 1;
    unsigned threads = 0;  // 0 = hardware
    std::uint64_t event_cap = 10'000'000;
};

struct SimBlock {
    std::int64_t z0 = 1;
    double horizon = 1.0;
    bool record = false;
    bool size_biased_ancestors = true;
    std::size_t grid_points = 101;
};

struct CbiBlock {
    double x = 1.0;
    std::vector<double> times{1.0};
    std::vector<double> z_values{1.0};
};

// One fully resolved experiment configuration. Parsing is strict: unknown keys are
// rejected, and re-serializing yields a manifest that reproduces the run byte for byte.
struct RunConfig {
    std::string experiment;  // simulate | resolvent | cbi | converge
    std::optional<ModelParams> model;
    std::optional<LimitParams> limit;
    std::optional<LifetimeLaw> family_lifetime;  // converge
    GridBlock grid;
    McBlock mc;
    SimBlock sim;
    CbiBlock cbi;
    std::optional<ConvergenceConfig> converge;  // mc fields folded in separately

    void validate() const;
    // ConvergenceConfig assembled from the converge + mc blocks.
    ConvergenceConfig convergence_config() const;
};

RunConfig parse_run_config(const json& j);
RunConfig load_run_config(const std::string& path);
json resolved_json(const RunConfig& cfg);

}  // namespace cmj
