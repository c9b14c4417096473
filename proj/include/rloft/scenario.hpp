#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rloft/learning.hpp"
#include "rloft/lti.hpp"

namespace rloft {

using Json = nlohmann::json;

enum class FilterKind { kDeadbeat, kRadius };
enum class InitMode { kZero, kGain, kOracle };

/// Everything needed to reproduce one experiment, parsed from a JSON
/// document. Matrices are nested row-major arrays.
struct ScenarioConfig {
    std::string name;
    std::uint64_t seed = 0;

    Plant plant;
    Exosystem exo;
    Weights weights;

    FilterKind filter_kind = FilterKind::kDeadbeat;
    double filter_rho = 0.7;

    ExcitationSpec excitation;
    ThetaSource theta_source = ThetaSource::kExploration;

    std::optional<Matrix> feedforward_T;

    InitMode init_mode = InitMode::kOracle;
    std::optional<Matrix> init_gain;
    std::optional<Matrix> deploy_gain;  // when set, track skips learning

    Index k0 = 10, kf = 200, horizon = 300;
    Vector x0, xd0;

    KernelSolver solver = KernelSolver::kDirect;
    double gradient_eps_fraction = 0.99;
    long gradient_max_s = 1000000000000;
    double gradient_tol = 1e-13;

    double stop_tol = 1e-6;
    int max_policy_iterations = 50;

    std::vector<Index> sweep_k0 = {10, 20, 40, 80};

    Json raw;  // canonical parsed document, used for hashing and reports
};

namespace detail {

inline const Json& require_field(const Json& j, const std::string& key,
                                 const std::string& context) {
    if (!j.contains(key))
        throw std::runtime_error("config: missing field '" + context + key + "'");
    return j.at(key);
}

inline Matrix parse_matrix(const Json& j, const std::string& context) {
    if (!j.is_array() || j.empty() || !j.front().is_array())
        throw std::runtime_error("config: field '" + context +
                                 "' must be a non-empty array of rows");
    const Index rows = static_cast<Index>(j.size());
    const Index cols = static_cast<Index>(j.front().size());
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const auto& row = j.at(i);
        if (!row.is_array() || static_cast<Index>(row.size()) != cols)
            throw std::runtime_error("config: ragged rows in matrix field '" + context + "'");
        for (Index c = 0; c < cols; ++c) m(i, c) = row.at(c).get<double>();
    }
    if (!all_finite(m))
        throw std::runtime_error("config: non-finite entry in matrix field '" + context + "'");
    return m;
}

inline Vector parse_vector(const Json& j, const std::string& context) {
    if (!j.is_array()) throw std::runtime_error("config: field '" + context + "' must be an array");
    Vector v(static_cast<Index>(j.size()));
    for (Index i = 0; i < v.size(); ++i) v(i) = j.at(i).get<double>();
    return v;
}

}  // namespace detail

inline ScenarioConfig parse_scenario(const Json& doc) {
    using detail::parse_matrix;
    using detail::parse_vector;
    using detail::require_field;

    ScenarioConfig c;
    c.raw = doc;
    c.name = require_field(doc, "name", "").get<std::string>();
    c.seed = require_field(doc, "seed", "").get<std::uint64_t>();

    const Json& plant = require_field(doc, "plant", "");
    c.plant.A = parse_matrix(require_field(plant, "A", "plant."), "plant.A");
    c.plant.B = parse_matrix(require_field(plant, "B", "plant."), "plant.B");
    c.plant.C = parse_matrix(require_field(plant, "C", "plant."), "plant.C");
    c.plant.validate();

    const Json& exo = require_field(doc, "exosystem", "");
    c.exo.S = parse_matrix(require_field(exo, "S", "exosystem."), "exosystem.S");
    c.exo.R = parse_matrix(require_field(exo, "R", "exosystem."), "exosystem.R");
    c.exo.minimal_poly =
        parse_vector(require_field(exo, "minimal_poly", "exosystem."), "exosystem.minimal_poly");

    const Json& weights = require_field(doc, "weights", "");
    c.weights.Q = parse_matrix(require_field(weights, "Q", "weights."), "weights.Q");
    c.weights.Rbar = parse_matrix(require_field(weights, "Rbar", "weights."), "weights.Rbar");

    const Json& filter = require_field(doc, "filter", "");
    const std::string kind = require_field(filter, "type", "filter.").get<std::string>();
    if (kind == "deadbeat") {
        c.filter_kind = FilterKind::kDeadbeat;
    } else if (kind == "radius") {
        c.filter_kind = FilterKind::kRadius;
        c.filter_rho = require_field(filter, "rho", "filter.").get<double>();
    } else {
        throw std::runtime_error("config: filter.type must be 'deadbeat' or 'radius'");
    }

    const Json& exc = require_field(doc, "excitation", "");
    c.excitation.n_sines = require_field(exc, "n_sines", "excitation.").get<int>();
    c.excitation.amp = require_field(exc, "amp", "excitation.").get<double>();
    const Vector freq_range =
        parse_vector(require_field(exc, "freq_range", "excitation."), "excitation.freq_range");
    if (freq_range.size() != 2)
        throw std::runtime_error("config: excitation.freq_range must have two entries");
    c.excitation.freq_low = freq_range(0);
    c.excitation.freq_high = freq_range(1);
    c.excitation.noise_amp = require_field(exc, "noise_amp", "excitation.").get<double>();
    const std::string theta = require_field(exc, "theta_source", "excitation.").get<std::string>();
    if (theta == "exploration")
        c.theta_source = ThetaSource::kExploration;
    else if (theta == "reference")
        c.theta_source = ThetaSource::kReference;
    else
        throw std::runtime_error("config: excitation.theta_source must be 'exploration' or 'reference'");
    c.excitation.seed = c.seed;

    if (doc.contains("feedforward_T"))
        c.feedforward_T = parse_matrix(doc.at("feedforward_T"), "feedforward_T");

    const Json& init = require_field(doc, "init", "");
    const std::string mode = require_field(init, "mode", "init.").get<std::string>();
    if (mode == "zero")
        c.init_mode = InitMode::kZero;
    else if (mode == "gain")
        c.init_mode = InitMode::kGain;
    else if (mode == "oracle")
        c.init_mode = InitMode::kOracle;
    else
        throw std::runtime_error("config: init.mode must be 'zero', 'gain', or 'oracle'");
    if (c.init_mode == InitMode::kGain)
        c.init_gain = parse_matrix(require_field(init, "gain", "init."), "init.gain");

    if (doc.contains("deploy_gain"))
        c.deploy_gain = parse_matrix(doc.at("deploy_gain"), "deploy_gain");

    const Json& run = require_field(doc, "run", "");
    c.k0 = require_field(run, "k0", "run.").get<Index>();
    c.kf = require_field(run, "kf", "run.").get<Index>();
    c.horizon = require_field(run, "horizon", "run.").get<Index>();
    if (c.k0 < 0 || c.k0 >= c.kf) throw std::runtime_error("config: need 0 <= run.k0 < run.kf");

    c.x0 = parse_vector(require_field(doc, "x0", ""), "x0");
    c.xd0 = parse_vector(require_field(doc, "xd0", ""), "xd0");

    if (doc.contains("solver")) {
        const Json& solver = doc.at("solver");
        const std::string type = require_field(solver, "type", "solver.").get<std::string>();
        if (type == "direct")
            c.solver = KernelSolver::kDirect;
        else if (type == "gradient")
            c.solver = KernelSolver::kGradient;
        else
            throw std::runtime_error("config: solver.type must be 'direct' or 'gradient'");
        if (solver.contains("eps_fraction"))
            c.gradient_eps_fraction = solver.at("eps_fraction").get<double>();
        if (solver.contains("max_s")) c.gradient_max_s = solver.at("max_s").get<long>();
        if (solver.contains("tol")) c.gradient_tol = solver.at("tol").get<double>();
    }

    if (doc.contains("stop_tol")) c.stop_tol = doc.at("stop_tol").get<double>();
    if (doc.contains("max_policy_iterations"))
        c.max_policy_iterations = doc.at("max_policy_iterations").get<int>();

    if (doc.contains("sweep_k0")) {
        c.sweep_k0.clear();
        for (const auto& v : doc.at("sweep_k0")) c.sweep_k0.push_back(v.get<Index>());
    }

    // Early dimension checks so every failure names the offending field.
    c.exo.validate();
    c.weights.validate(c.plant.n_outputs(), c.plant.n_inputs());
    if (c.exo.R.rows() != c.plant.n_outputs())
        throw std::runtime_error("config: exosystem.R row count must equal plant outputs");
    if (c.x0.size() != c.plant.n_states()) throw std::runtime_error("config: x0 size mismatch");
    if (c.xd0.size() != c.exo.n_states()) throw std::runtime_error("config: xd0 size mismatch");
    return c;
}

inline ScenarioConfig parse_scenario_text(const std::string& text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& err) {
        throw std::runtime_error(std::string("config: JSON parse error: ") + err.what());
    }
    return parse_scenario(doc);
}

/// Bundled example scenarios; resolvable by name everywhere a config path is
/// accepted.
inline Json bundled_scenario_json(const std::string& name) {
    if (name == "scalar_step") {
        return Json::parse(R"({
  "name": "scalar_step",
  "seed": 1,
  "plant": {"A": [[0.5]], "B": [[1.0]], "C": [[1.0]]},
  "exosystem": {"S": [[1.0]], "R": [[1.0]], "minimal_poly": [1.0, -1.0]},
  "weights": {"Q": [[1.0]], "Rbar": [[1.0]]},
  "filter": {"type": "deadbeat"},
  "excitation": {"n_sines": 12, "amp": 1.0, "freq_range": [0.05, 3.0], "noise_amp": 0.1,
                 "theta_source": "exploration"},
  "feedforward_T": [[-0.3]],
  "init": {"mode": "zero"},
  "run": {"k0": 10, "kf": 200, "horizon": 300},
  "x0": [0.0],
  "xd0": [1.0],
  "solver": {"type": "direct"},
  "stop_tol": 1e-6,
  "max_policy_iterations": 50,
  "sweep_k0": [10, 20, 40, 80]
})");
    }
    if (name == "rot_tracking") {
        return Json::parse(R"({
  "name": "rot_tracking",
  "seed": 2,
  "plant": {"A": [[0.0, 1.0], [-0.3, 0.8]], "B": [[0.0], [1.0]], "C": [[1.0, 0.0]]},
  "exosystem": {"S": [[0.95533648912560598, -0.29552020666133955],
                      [0.29552020666133955, 0.95533648912560598]],
                "R": [[1.0, 0.0]],
                "minimal_poly": [1.0, -1.9106729782512120, 1.0]},
  "weights": {"Q": [[10.0]], "Rbar": [[1.0]]},
  "filter": {"type": "deadbeat"},
  "excitation": {"n_sines": 12, "amp": 1.0, "freq_range": [0.05, 3.0], "noise_amp": 0.1,
                 "theta_source": "exploration"},
  "feedforward_T": [[0.4, -0.2]],
  "init": {"mode": "oracle"},
  "run": {"k0": 10, "kf": 430, "horizon": 300},
  "x0": [0.0, 0.0],
  "xd0": [1.0, 0.0],
  "solver": {"type": "direct"},
  "stop_tol": 1e-6,
  "max_policy_iterations": 50,
  "sweep_k0": [10, 20, 40, 80]
})");
    }
    if (name == "mimo_small") {
        return Json::parse(R"({
  "name": "mimo_small",
  "seed": 3,
  "plant": {"A": [[0.1, 1.0, 0.0], [0.0, -0.2, 1.0], [0.15, 0.1, 0.3]],
            "B": [[0.0], [0.0], [1.0]],
            "C": [[1.0, 0.0, 0.0]]},
  "exosystem": {"S": [[1.0]], "R": [[1.0]], "minimal_poly": [1.0, -1.0]},
  "weights": {"Q": [[5.0]], "Rbar": [[1.0]]},
  "filter": {"type": "deadbeat"},
  "excitation": {"n_sines": 12, "amp": 1.0, "freq_range": [0.05, 3.0], "noise_amp": 0.1,
                 "theta_source": "exploration"},
  "feedforward_T": [[0.5]],
  "init": {"mode": "oracle"},
  "run": {"k0": 10, "kf": 430, "horizon": 300},
  "x0": [0.0, 0.0, 0.0],
  "xd0": [1.0],
  "solver": {"type": "direct"},
  "stop_tol": 1e-6,
  "max_policy_iterations": 50,
  "sweep_k0": [10, 20, 40, 80]
})");
    }
    if (name == "scalar_step_sweep") {
        Json doc = bundled_scenario_json("scalar_step");
        doc["name"] = "scalar_step_sweep";
        doc["filter"] = {{"type", "radius"}, {"rho", 0.7}};
        doc["x0"] = {1.0};
        doc["run"] = {{"k0", 10}, {"kf", 200}, {"horizon", 300}};
        return doc;
    }
    throw std::runtime_error("unknown bundled scenario '" + name + "'");
}

inline std::vector<std::string> bundled_scenario_names() {
    return {"scalar_step", "rot_tracking", "mimo_small", "scalar_step_sweep"};
}

inline ScenarioConfig bundled_scenario(const std::string& name) {
    return parse_scenario(bundled_scenario_json(name));
}

}  // namespace rloft
