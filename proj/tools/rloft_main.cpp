// Command-line runner for the output-feedback tracking learner: scenario
// checking, model-based oracle, learning, deployment, and the collection-
// start sweep. Every run is reproducible from (config, seed) and writes its
// artifacts into one output directory.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "rloft/harness.hpp"

namespace fs = std::filesystem;
using namespace rloft;

namespace {

struct CommonOptions {
    std::string config;
    std::string out_dir = "runs";
    std::int64_t seed_override = -1;
    std::string solver_override;
};

ScenarioConfig load_config(const CommonOptions& opts) {
    Json doc;
    if (fs::exists(opts.config)) {
        std::ifstream in(opts.config);
        if (!in) throw std::runtime_error("cannot read config file " + opts.config);
        std::stringstream buffer;
        buffer << in.rdbuf();
        doc = Json::parse(buffer.str());
    } else {
        doc = bundled_scenario_json(opts.config);
    }
    if (opts.seed_override >= 0) doc["seed"] = static_cast<std::uint64_t>(opts.seed_override);
    if (!opts.solver_override.empty()) {
        if (!doc.contains("solver")) doc["solver"] = Json::object();
        doc["solver"]["type"] = opts.solver_override;
    }
    return parse_scenario(doc);
}

fs::path prepare_out_dir(const CommonOptions& opts, const ScenarioConfig& config) {
    const fs::path dir = fs::path(opts.out_dir) / config.name;
    fs::create_directories(dir);
    return dir;
}

Json base_report(const ScenarioConfig& config) {
    return Json{{"scenario", config.name},
                {"seed", config.seed},
                {"config_hash", config_hash(config)}};
}

void finish_report(Json& report, const fs::path& dir, double elapsed_s) {
    report["elapsed_seconds"] = elapsed_s;
    write_text_file(dir / "report.json", report.dump(2) + "\n");
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

int cmd_check(const CommonOptions& opts) {
    const Stopwatch watch;
    const ScenarioConfig config = load_config(opts);
    const fs::path dir = prepare_out_dir(opts, config);
    const BuiltProblem built = build_problem(config);

    Json report = base_report(config);
    report["assumptions"] = assumptions_to_json(built.assumptions);
    report["structure"] = structure_to_json(built.structure);
    finish_report(report, dir, watch.seconds());

    const bool ok = built.assumptions.all_pass() && built.structure.stabilizable;
    if (ok) {
        std::cout << "check " << config.name << ": all assumptions hold\n";
        return kExitOk;
    }
    std::cout << "check " << config.name << ": FAILED\n";
    for (const auto& d : built.assumptions.diagnostics) std::cout << "  - " << d << "\n";
    for (const auto& d : built.structure.diagnostics) std::cout << "  - " << d << "\n";
    return kExitFailure;
}

int cmd_oracle(const CommonOptions& opts) {
    const Stopwatch watch;
    const ScenarioConfig config = load_config(opts);
    const fs::path dir = prepare_out_dir(opts, config);
    const BuiltProblem built = build_problem(config);
    if (!built.assumptions.all_pass())
        throw std::runtime_error("oracle: scenario fails the standing assumptions");
    const OracleResult oracle = compute_oracle(built);

    Json report = base_report(config);
    report["assumptions"] = assumptions_to_json(built.assumptions);
    report["structure"] = structure_to_json(built.structure);
    report["oracle"] = oracle_to_json(oracle);
    finish_report(report, dir, watch.seconds());

    std::cout << "oracle " << config.name << ": Riccati residual " << oracle.dare_res << " after "
              << oracle.hewer.size() << " policy iterations\n";
    return kExitOk;
}

int cmd_learn(const CommonOptions& opts) {
    const Stopwatch watch;
    const ScenarioConfig config = load_config(opts);
    const fs::path dir = prepare_out_dir(opts, config);
    const LearnArtifacts art = run_learn(config);

    write_text_file(dir / "trace.csv", learn_trace_csv(art));
    Json report = base_report(config);
    report["assumptions"] = assumptions_to_json(art.built.assumptions);
    report["structure"] = structure_to_json(art.built.structure);
    report["oracle"] = oracle_to_json(art.oracle);
    report["learning"] = Json{{"iterations", art.result.iterations},
                              {"oracle_assisted_init", art.oracle_assisted_init},
                              {"final_gain_delta", art.trace.back().gain_delta},
                              {"final_gain_err_vs_oracle", art.final_gain_err},
                              {"K_o_star", matrix_to_json(art.result.K_o_star)}};
    finish_report(report, dir, watch.seconds());

    std::cout << "learn " << config.name << ": " << art.result.iterations
              << " iterations, gain error vs oracle " << art.final_gain_err << "\n";
    return kExitOk;
}

int cmd_track(const CommonOptions& opts) {
    const Stopwatch watch;
    const ScenarioConfig config = load_config(opts);
    const fs::path dir = prepare_out_dir(opts, config);
    const TrackArtifacts art = run_track(config);

    write_text_file(dir / "trajectory.csv", trajectory_csv(art.trajectory));
    Json report = base_report(config);
    report["tracking"] = Json{{"initial_error", art.metrics.initial_error},
                              {"trailing_max_error", art.metrics.trailing_max_error},
                              {"trailing_window", art.metrics.trailing_window},
                              {"settling_index", art.metrics.settling_index},
                              {"used_supplied_gain", art.used_supplied_gain}};
    if (!art.used_supplied_gain) {
        write_text_file(dir / "trace.csv", learn_trace_csv(art.learn));
        report["oracle"] = oracle_to_json(art.learn.oracle);
        report["learning"] = Json{{"iterations", art.learn.result.iterations},
                                  {"final_gain_err_vs_oracle", art.learn.final_gain_err}};
    }
    finish_report(report, dir, watch.seconds());

    std::cout << "track " << config.name << ": trailing max |y_e| "
              << art.metrics.trailing_max_error << " (initial " << art.metrics.initial_error
              << ")\n";
    return kExitOk;
}

int cmd_sweep(const CommonOptions& opts, const std::vector<std::int64_t>& k0_flags) {
    const Stopwatch watch;
    const ScenarioConfig config = load_config(opts);
    const fs::path dir = prepare_out_dir(opts, config);
    std::vector<Index> k0_list;
    if (!k0_flags.empty())
        for (const auto v : k0_flags) k0_list.push_back(static_cast<Index>(v));
    else
        k0_list = config.sweep_k0;
    const std::vector<SweepRow> rows = run_sweep_k0(config, k0_list);

    write_text_file(dir / "sweep.csv", sweep_csv(rows));
    Json report = base_report(config);
    Json sweep = Json::array();
    for (const SweepRow& row : rows)
        sweep.push_back(Json{{"k0", row.k0}, {"error", row.kernel_solution_error}});
    report["sweep"] = sweep;
    finish_report(report, dir, watch.seconds());

    std::cout << "sweep-k0 " << config.name << ":";
    for (const SweepRow& row : rows) std::cout << " (" << row.k0 << ", " << row.kernel_solution_error << ")";
    std::cout << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Data-driven output-feedback tracking control workbench"};
    app.require_subcommand(1);

    CommonOptions opts;
    std::vector<std::int64_t> k0_flags;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config, "Scenario JSON path or bundled name")->required();
        cmd->add_option("--out", opts.out_dir, "Output directory root");
        cmd->add_option("--seed", opts.seed_override, "Override the scenario seed");
        cmd->add_option("--solver", opts.solver_override, "Kernel solver: direct | gradient")
            ->check(CLI::IsMember({"direct", "gradient"}));
    };

    CLI::App* check = app.add_subcommand("check", "Verify scenario assumptions");
    add_common(check);
    CLI::App* oracle = app.add_subcommand("oracle", "Model-based Riccati and regulator solution");
    add_common(oracle);
    CLI::App* learn = app.add_subcommand("learn", "Run the off-policy learner");
    add_common(learn);
    CLI::App* track = app.add_subcommand("track", "Learn, then deploy the tracking controller");
    add_common(track);
    CLI::App* sweep = app.add_subcommand("sweep-k0", "Collection-start sweep");
    add_common(sweep);
    sweep->add_option("--k0", k0_flags, "Collection-start values (overrides config sweep_k0)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (check->parsed()) return cmd_check(opts);
        if (oracle->parsed()) return cmd_oracle(opts);
        if (learn->parsed()) return cmd_learn(opts);
        if (track->parsed()) return cmd_track(opts);
        if (sweep->parsed()) return cmd_sweep(opts, k0_flags);
    } catch (const RankConditionError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitRankCondition;
    } catch (const InstabilityError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitInstability;
    } catch (const ConvergenceError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitNonConvergence;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}
