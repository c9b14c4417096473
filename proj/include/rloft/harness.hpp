#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rloft/learning.hpp"
#include "rloft/reconstruction.hpp"
#include "rloft/riccati.hpp"
#include "rloft/scenario.hpp"

namespace rloft {

// Derived-stream salts so one scenario seed drives independent draws.
constexpr std::uint64_t kSaltFeedforward = 0x6a09e667f3bcc908ull;
constexpr std::uint64_t kSaltObserver = 0xbb67ae8584caa73bull;

/// Scenario materialized into concrete problem objects.
struct BuiltProblem {
    ScenarioConfig config;
    InternalModel model;
    Matrix T;
    AugmentedSystem aug;
    FilterSpec filter;
    AssumptionReport assumptions;
    StructureReport structure;
};

inline BuiltProblem build_problem(const ScenarioConfig& config) {
    BuiltProblem built;
    built.config = config;
    built.model = build_internal_model(config.exo, config.plant.n_outputs());
    built.T = config.feedforward_T
                  ? *config.feedforward_T
                  : choose_feedforward_gain(built.model, config.plant.n_inputs(),
                                            config.seed ^ kSaltFeedforward);
    if (svd_rank(observability_matrix(built.model.F, built.T)) != built.model.dim())
        throw std::runtime_error("build_problem: supplied feedforward_T leaves (F, T) unobservable");
    built.aug = build_augmented(config.plant, built.model, built.T);
    built.filter = config.filter_kind == FilterKind::kDeadbeat
                       ? make_deadbeat_filter(built.aug.n_z)
                       : make_radius_filter(built.aug.n_z, config.filter_rho);
    built.assumptions = check_assumptions(config.plant, config.exo);
    built.structure = check_augmented_structure(built.aug);
    return built;
}

/// Model-based ground truth for one scenario: Riccati solution, regulator
/// equations, observer placement, and the state parameterization.
struct OracleResult {
    Matrix K0;  // stabilizing start from value iteration
    std::vector<PolicyIterate> hewer;
    Matrix P_star, K_star;
    double dare_res = 0.0;
    Matrix L_obs, Mbar, K_star_Mbar;
    RegulatorSolution regulator;
    RankIdentityReport rank_identity;
    Matrix pure_plant_P;  // Riccati kernel of the plant-only problem
};

inline OracleResult compute_oracle(const BuiltProblem& built) {
    OracleResult oracle;
    const Weights& weights = built.config.weights;
    oracle.K0 = initial_stabilizing_gain(built.aug, weights);
    oracle.hewer = hewer_iterate(built.aug, weights, oracle.K0);
    oracle.P_star = oracle.hewer.back().P;
    oracle.K_star = oracle.hewer.back().K;
    oracle.dare_res = dare_residual(built.aug, weights, oracle.P_star);

    oracle.L_obs = observer_gain(built.aug, built.filter, built.config.seed ^ kSaltObserver);
    oracle.Mbar = parameterization_matrix(built.aug, built.filter, oracle.L_obs).Mbar;
    oracle.K_star_Mbar = oracle.K_star * oracle.Mbar;
    oracle.rank_identity = parameterization_rank_check(built.aug, oracle.L_obs, oracle.Mbar);

    const Matrix abar_closed = built.aug.underA - built.aug.barB * oracle.K_star;
    oracle.regulator =
        solve_regulator_equations(abar_closed, built.aug.barG, built.aug.barC, built.config.exo);

    // Plant-only Riccati sub-check: same machinery on (A, B, C' Q C, Rbar).
    AugmentedSystem plant_only;
    plant_only.underA = built.config.plant.A;
    plant_only.barB = built.config.plant.B;
    plant_only.barC = built.config.plant.C;
    plant_only.barG = Matrix::Zero(built.config.plant.n_states(), built.config.plant.n_outputs());
    plant_only.n_z = built.config.plant.n_states();
    plant_only.r_n = plant_only.n_z;
    plant_only.r_m = built.config.plant.n_inputs();
    plant_only.r_p = built.config.plant.n_outputs();
    const Matrix k0p = initial_stabilizing_gain(plant_only, weights);
    oracle.pure_plant_P = hewer_iterate(plant_only, weights, k0p).back().P;
    return oracle;
}

/// The behavior gain for a scenario's initialization mode. Oracle-assisted
/// runs start from the value-iteration gain mapped through the
/// parameterization; this is reported, since a purely data-driven run would
/// need a known stabilizing output-feedback gain instead.
inline Matrix initial_output_gain(const BuiltProblem& built, const OracleResult& oracle,
                                  bool* oracle_assisted = nullptr) {
    const Index n_zeta = built.filter.order() * (built.aug.r_m + 2 * built.aug.r_p);
    if (oracle_assisted) *oracle_assisted = false;
    switch (built.config.init_mode) {
        case InitMode::kZero:
            return Matrix::Zero(built.aug.r_m, n_zeta);
        case InitMode::kGain:
            if (!built.config.init_gain)
                throw std::runtime_error("initial_output_gain: init.mode 'gain' without init.gain");
            return *built.config.init_gain;
        case InitMode::kOracle:
        default:
            if (oracle_assisted) *oracle_assisted = true;
            return oracle.K0 * oracle.Mbar;
    }
}

inline BehaviorRunConfig behavior_config(const BuiltProblem& built, const Matrix& k_o0) {
    BehaviorRunConfig run;
    run.K_o0 = k_o0;
    run.theta_source = built.config.theta_source;
    run.k0 = built.config.k0;
    run.kf = built.config.kf;
    run.x0 = built.config.x0;
    run.xd0 = built.config.xd0;
    return run;
}

inline LearnOptions learn_options(const ScenarioConfig& config) {
    LearnOptions options;
    options.stop_tol = config.stop_tol;
    options.max_policy_iterations = config.max_policy_iterations;
    options.solver = config.solver;
    options.gradient_eps_fraction = config.gradient_eps_fraction;
    options.gradient_max_s = config.gradient_max_s;
    options.gradient_tol = config.gradient_tol;
    return options;
}

/// Per-iteration comparison of the learned quantities against the
/// model-based chain.
struct TraceRow {
    int j = 0;
    double gain_delta = 0.0;
    double kernel_err_L1 = 0.0;
    double kernel_err_L2 = 0.0;
    double gain_err_vs_oracle = 0.0;
};

struct LearnArtifacts {
    BuiltProblem built;
    OracleResult oracle;
    LearnResult result;
    Matrix K_o0;
    bool oracle_assisted_init = false;
    std::vector<TraceRow> trace;
    double final_gain_err = 0.0;
};

/// Model-based kernels for the policy represented by an output-feedback
/// gain: lift the gain back through the parameterization (exact on gains of
/// the form K Mbar), evaluate its value kernel, and map it to measurable
/// coordinates.
inline LearnedKernels oracle_kernels_for_gain(const BuiltProblem& built,
                                              const OracleResult& oracle, const Matrix& k_o) {
    const Matrix mm_t = oracle.Mbar * oracle.Mbar.transpose();
    const Matrix k_state = mm_t.ldlt().solve(oracle.Mbar * k_o.transpose()).transpose();
    const Matrix acl = built.aug.underA - built.aug.barB * k_state;
    const Matrix qrhs = state_cost_matrix(built.aug, built.config.weights) +
                        k_state.transpose() * built.config.weights.Rbar * k_state;
    const Matrix p = solve_stein(acl, qrhs);
    return model_based_kernels(built.aug, oracle.Mbar, p);
}

inline LearnArtifacts run_learn(const ScenarioConfig& config) {
    LearnArtifacts art;
    art.built = build_problem(config);
    if (!art.built.assumptions.all_pass()) {
        std::string detail;
        for (const auto& d : art.built.assumptions.diagnostics) detail += "; " + d;
        throw std::runtime_error("run_learn: scenario fails the standing assumptions" + detail);
    }
    art.oracle = compute_oracle(art.built);
    art.K_o0 = initial_output_gain(art.built, art.oracle, &art.oracle_assisted_init);
    art.result = learn(config.plant, config.exo, art.built.aug, art.built.filter, config.weights,
                       config.excitation, behavior_config(art.built, art.K_o0),
                       learn_options(config));

    const double k_star_norm = art.oracle.K_star_Mbar.norm();
    Matrix k_prev = art.K_o0;
    for (const auto& entry : art.result.trace) {
        TraceRow row;
        row.j = entry.j;
        row.gain_delta = entry.gain_delta;
        // Learned kernels at iteration j were solved for the policy that
        // produced them, i.e. the inbound gain k_prev.
        LearnedKernels model;
        try {
            model = oracle_kernels_for_gain(art.built, art.oracle, k_prev);
        } catch (const std::runtime_error&) {
            // Non-Schur lift (possible under user-supplied gains); compare
            // against the optimum instead.
            model = model_based_kernels(art.built.aug, art.oracle.Mbar, art.oracle.P_star);
        }
        row.kernel_err_L1 =
            (entry.kernels.L_1 - model.L_1).norm() / (1.0 + model.L_1.norm());
        row.kernel_err_L2 =
            (entry.kernels.L_2 - model.L_2).norm() / (1.0 + model.L_2.norm());
        row.gain_err_vs_oracle =
            (entry.K_o - art.oracle.K_star_Mbar).norm() / std::max(k_star_norm, 1e-300);
        art.trace.push_back(row);
        k_prev = entry.K_o;
    }
    art.final_gain_err = art.trace.empty() ? 0.0 : art.trace.back().gain_err_vs_oracle;
    return art;
}

struct TrackingMetrics {
    double initial_error = 0.0;       // max |y_e| over the first 10 steps
    double trailing_max_error = 0.0;  // max |y_e| over the trailing window
    Index trailing_window = 0;
    Index settling_index = -1;  // first step after which |y_e| stays below 1e-3 * initial
};

inline TrackingMetrics tracking_metrics(const Trajectory& traj) {
    TrackingMetrics m;
    const Index n = traj.length();
    if (n == 0) return m;
    for (Index i = 0; i < std::min<Index>(10, n); ++i)
        m.initial_error = std::max(m.initial_error, traj.y_e[i].lpNorm<Eigen::Infinity>());
    m.trailing_window = std::min<Index>(50, n);
    for (Index i = n - m.trailing_window; i < n; ++i)
        m.trailing_max_error = std::max(m.trailing_max_error, traj.y_e[i].lpNorm<Eigen::Infinity>());
    const double threshold = 1e-3 * m.initial_error;
    m.settling_index = -1;
    for (Index i = n; i-- > 0;) {
        if (traj.y_e[i].lpNorm<Eigen::Infinity>() > threshold) {
            m.settling_index = i + 1 < n ? i + 1 : -1;
            break;
        }
        if (i == 0) m.settling_index = 0;
    }
    return m;
}

struct TrackArtifacts {
    LearnArtifacts learn;  // populated unless a deploy gain was supplied
    bool used_supplied_gain = false;
    Matrix K_o_star;
    Trajectory trajectory;
    TrackingMetrics metrics;
};

inline TrackArtifacts run_track(const ScenarioConfig& config) {
    TrackArtifacts art;
    if (config.deploy_gain) {
        art.used_supplied_gain = true;
        art.K_o_star = *config.deploy_gain;
        art.learn.built = build_problem(config);
        DeployState state;
        state.x = config.x0;
        state.zbar = Vector::Zero(art.learn.built.aug.im_dim);
        state.xd = config.xd0;
        const Index n = art.learn.built.filter.order();
        state.zeta_u = Vector::Zero(n * art.learn.built.aug.r_m);
        state.zeta_y = Vector::Zero(n * art.learn.built.aug.r_p);
        state.zeta_th = Vector::Zero(n * art.learn.built.aug.r_p);
        art.trajectory = deploy(config.plant, config.exo, art.learn.built.aug,
                                art.learn.built.filter, art.K_o_star, state, config.horizon);
    } else {
        art.learn = run_learn(config);
        art.K_o_star = art.learn.result.K_o_star;
        art.trajectory = deploy(config.plant, config.exo, art.learn.built.aug,
                                art.learn.built.filter, art.K_o_star,
                                DeployState::from_log(art.learn.result.log), config.horizon);
    }
    art.metrics = tracking_metrics(art.trajectory);
    return art;
}

struct SweepRow {
    Index k0 = 0;
    double kernel_solution_error = 0.0;
};

/// Kernel-solution error against the zero-initial-state ground truth as the
/// collection start k0 moves. Windows keep the configured length and slide
/// with k0; the comparison covers the uniquely determined blocks L_1 ... L_5.
inline std::vector<SweepRow> run_sweep_k0(const ScenarioConfig& config,
                                          const std::vector<Index>& k0_list) {
    const BuiltProblem built = build_problem(config);
    const OracleResult oracle = compute_oracle(built);
    bool oracle_assisted = false;
    const Matrix k_o0 = initial_output_gain(built, oracle, &oracle_assisted);
    const Index window = config.kf - config.k0;

    std::vector<SweepRow> rows;
    for (const Index k0 : k0_list) {
        BehaviorRunConfig truth_run = behavior_config(built, k_o0);
        truth_run.k0 = k0;
        truth_run.kf = k0 + window;
        truth_run.x0 = Vector::Zero(config.plant.n_states());
        BehaviorRunConfig perturbed_run = truth_run;
        perturbed_run.x0 = config.x0;

        const DataLog truth_log =
            run_behavior(config.plant, config.exo, built.aug, built.filter, config.excitation,
                         truth_run);
        const DataLog perturbed_log =
            run_behavior(config.plant, config.exo, built.aug, built.filter, config.excitation,
                         perturbed_run);
        const LearnedKernels truth =
            solve_kernels_direct(assemble_regressors(truth_log, k_o0, config.weights));
        const LearnedKernels perturbed =
            solve_kernels_direct(assemble_regressors(perturbed_log, k_o0, config.weights));

        const double truth_norm = truth.L_1.norm() + truth.L_2.norm() + truth.L_3.norm() +
                                  truth.L_4.norm() + truth.L_5.norm();
        const double diff = (perturbed.L_1 - truth.L_1).norm() + (perturbed.L_2 - truth.L_2).norm() +
                            (perturbed.L_3 - truth.L_3).norm() +
                            (perturbed.L_4 - truth.L_4).norm() + (perturbed.L_5 - truth.L_5).norm();
        rows.push_back({k0, diff / (1.0 + truth_norm)});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Artifact formatting: full double precision for byte-stable reruns.

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline Json matrix_to_json(const Matrix& m) {
    Json rows = Json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

inline std::uint64_t fnv1a_hash(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string config_hash(const ScenarioConfig& config) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a_hash(config.raw.dump())));
    return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
}

inline std::string learn_trace_csv(const LearnArtifacts& art) {
    std::string csv = "j,gain_delta,kernel_err_L1,kernel_err_L2,gain_err_vs_oracle\n";
    for (const TraceRow& row : art.trace) {
        csv += std::to_string(row.j) + "," + format_double(row.gain_delta) + "," +
               format_double(row.kernel_err_L1) + "," + format_double(row.kernel_err_L2) + "," +
               format_double(row.gain_err_vs_oracle) + "\n";
    }
    return csv;
}

inline std::string trajectory_csv(const Trajectory& traj) {
    std::string csv = "k";
    const Index p = traj.length() > 0 ? traj.y[0].size() : 0;
    const Index m = traj.length() > 0 ? traj.u[0].size() : 0;
    for (Index i = 0; i < p; ++i) csv += ",y" + std::to_string(i);
    for (Index i = 0; i < p; ++i) csv += ",y_d" + std::to_string(i);
    for (Index i = 0; i < p; ++i) csv += ",y_e" + std::to_string(i);
    for (Index i = 0; i < m; ++i) csv += ",u" + std::to_string(i);
    csv += "\n";
    for (Index k = 0; k < traj.length(); ++k) {
        csv += std::to_string(traj.k[k]);
        for (Index i = 0; i < p; ++i) csv += "," + format_double(traj.y[k](i));
        for (Index i = 0; i < p; ++i) csv += "," + format_double(traj.y_d[k](i));
        for (Index i = 0; i < p; ++i) csv += "," + format_double(traj.y_e[k](i));
        for (Index i = 0; i < m; ++i) csv += "," + format_double(traj.u[k](i));
        csv += "\n";
    }
    return csv;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string csv = "k0,kernel_solution_error\n";
    for (const SweepRow& row : rows)
        csv += std::to_string(row.k0) + "," + format_double(row.kernel_solution_error) + "\n";
    return csv;
}

inline Json assumptions_to_json(const AssumptionReport& report) {
    return Json{{"plant_minimal", report.plant_minimal},
                {"reference_nondecaying", report.reference_nondecaying},
                {"minimal_poly_valid", report.minimal_poly_valid},
                {"no_blocking_zeros", report.no_blocking_zeros},
                {"all_pass", report.all_pass()},
                {"diagnostics", report.diagnostics}};
}

inline Json structure_to_json(const StructureReport& report) {
    return Json{{"stabilizable", report.stabilizable},
                {"detectable", report.detectable},
                {"diagnostics", report.diagnostics}};
}

inline Json oracle_to_json(const OracleResult& oracle) {
    return Json{{"P_star", matrix_to_json(oracle.P_star)},
                {"K_star", matrix_to_json(oracle.K_star)},
                {"K_star_Mbar", matrix_to_json(oracle.K_star_Mbar)},
                {"dare_residual", oracle.dare_res},
                {"hewer_iterations", oracle.hewer.size()},
                {"regulator_residual_dynamics", oracle.regulator.residual_dynamics},
                {"regulator_residual_output", oracle.regulator.residual_output},
                {"rank_Mbar", oracle.rank_identity.rank_parameterization},
                {"rank_controllability_concat", oracle.rank_identity.rank_controllability_concat},
                {"pure_plant_P", matrix_to_json(oracle.pure_plant_P)}};
}

}  // namespace rloft
