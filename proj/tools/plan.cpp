#include "planu/config.hpp"
#include "planu/sweep.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int exit_run_failure = 1;
constexpr int exit_usage = 2;

planu::ConfigDocument load_document(const std::string& path)
{
    return planu::ConfigDocument::load(path);
}

int report_sweep(const planu::SweepResult& result, const planu::ExperimentConfig& cfg)
{
    std::cout << result.aggregate_csv;
    for (const auto& r : result.runs)
        if (!r.ok)
            std::cerr << "run " << r.spec.run_id << " failed: " << r.error << "\n";
    std::cerr << result.runs.size() << " runs, output in " << cfg.out.string() << "\n";
    return result.all_ok() ? 0 : exit_run_failure;
}

std::string read_file(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Distributional tree-search planner: runs, sweeps and tree export"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string env_id, variant, out_dir;
    bool offline = false;
    std::size_t parallelism = 0;
    std::string run_id, runs_dir = "runs", output_path;

    auto* run = app.add_subcommand("run", "Run one configuration (flags override file values)");
    run->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "Single seed, replaces run.seeds");
    run->add_option("--env", env_id, "Environment id: stock, blocksworld, overcooked");
    run->add_option("--variant", variant, "full, no_dist, no_ucc, deterministic_baseline");
    run->add_option("--out", out_dir, "Output directory");
    run->add_flag("--offline", offline, "Serve LLM requests from the cache only");

    auto* sweep = app.add_subcommand("sweep", "Run the full Cartesian sweep of a config");
    sweep->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    sweep->add_option("--out", out_dir, "Output directory");
    sweep->add_option("--parallelism", parallelism, "Worker count (0 = automatic)");
    sweep->add_flag("--offline", offline, "Serve LLM requests from the cache only");

    auto* validate = app.add_subcommand("validate", "Check a config and print it with defaults filled in");
    validate->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);

    auto* export_tree = app.add_subcommand("export-tree", "Print the tree snapshot of a finished run");
    export_tree->add_option("--run", run_id, "Run id (see runs.json)")->required();
    export_tree->add_option("--runs-dir", runs_dir, "Sweep output directory")->capture_default_str();
    export_tree->add_option("-o,--output", output_path, "Write to a file instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) {
            const planu::ExperimentConfig cfg = planu::validate_config(load_document(config_path));
            std::cout << planu::normalize_config(cfg);
            return 0;
        }

        if (*run || *sweep) {
            planu::ConfigDocument doc = load_document(config_path);
            if (seed)
                doc.set("run.seeds", std::to_string(*seed));
            if (!env_id.empty())
                doc.set("run.env", env_id);
            if (!variant.empty())
                doc.set("run.variants", variant);
            if (!out_dir.empty())
                doc.set("run.out", out_dir);
            if (offline)
                doc.set("llm.offline", "true");
            if (*sweep && sweep->count("--parallelism"))
                doc.set("run.parallelism", std::to_string(parallelism));
            const planu::ExperimentConfig cfg = planu::validate_config(doc);
            return report_sweep(planu::run_sweep(cfg), cfg);
        }

        if (*export_tree) {
            const fs::path dir = runs_dir;
            const fs::path saved = dir / "trees" / (run_id + ".json");
            std::string text;
            if (fs::exists(saved)) {
                text = read_file(saved);
            } else {
                // No saved tree: replay the run from the sweep's config snapshot.
                const json index = json::parse(read_file(dir / "runs.json"));
                const planu::ExperimentConfig cfg =
                    planu::validate_config(planu::ConfigDocument::parse(read_file(dir / "config.snapshot")));
                const planu::RunSpec* found = nullptr;
                const std::vector<planu::RunSpec> specs = planu::enumerate_runs(cfg);
                for (const auto& s : specs)
                    if (s.run_id == run_id)
                        found = &s;
                if (!found || !std::any_of(index.begin(), index.end(),
                                           [&](const json& e) { return e.value("run_id", "") == run_id; })) {
                    std::cerr << "unknown run id '" << run_id << "' in " << dir.string() << "\n";
                    return exit_usage;
                }
                const auto outcome = planu::execute_run(cfg, *found, planu::prepare_instances(cfg.env), true);
                if (!outcome.ok) {
                    std::cerr << "replay failed: " << outcome.error << "\n";
                    return exit_run_failure;
                }
                text = outcome.tree.dump(1) + "\n";
            }
            if (output_path.empty()) {
                std::cout << text;
            } else {
                std::ofstream out(output_path);
                out << text;
                if (!out) {
                    std::cerr << "cannot write " << output_path << "\n";
                    return exit_run_failure;
                }
            }
            return 0;
        }
    } catch (const planu::ConfigError& e) {
        for (const auto& d : e.diagnostics())
            std::cerr << config_path << ": " << d.str() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_run_failure;
    }
    return 0;
}
