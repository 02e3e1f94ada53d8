#include "planu/sweep.hpp"

#include "planu/llm_bridge.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <thread>

namespace planu {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fixed(double v, int digits = 6)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string rate_label(double rate)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", rate);
    return buf;
}

bool uses_failure_rate(const std::string& env)
{
    return env == "blocksworld" || env == "overcooked";
}

std::size_t default_blocks(std::size_t steps)
{
    if (steps <= 2)
        return 3;
    if (steps <= 4)
        return 4;
    if (steps <= 6)
        return 5;
    return 6;
}

void write_file(const fs::path& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

std::vector<RunSpec> enumerate_runs(const ExperimentConfig& cfg)
{
    if (cfg.seeds.empty())
        throw std::invalid_argument("sweep has an empty seed list");
    if (cfg.variants.empty())
        throw std::invalid_argument("sweep has an empty variant list");
    const bool rated = uses_failure_rate(cfg.env.id);
    const std::vector<double> rates = rated ? cfg.env.failure_rates : std::vector<double>{0.0};
    const std::size_t instances =
        cfg.env.id == "blocksworld" && cfg.env.instance.empty() ? cfg.env.instances : std::size_t{1};

    std::vector<RunSpec> out;
    for (double rate : rates) {
        for (std::size_t inst = 0; inst < instances; ++inst) {
            for (Variant v : cfg.variants) {
                for (std::uint64_t seed : cfg.seeds) {
                    RunSpec r;
                    r.variant = v;
                    r.seed = seed;
                    r.failure_rate = rate;
                    r.instance = inst;
                    r.run_id = cfg.env.id;
                    if (rated)
                        r.run_id += "-f" + rate_label(rate);
                    if (instances > 1)
                        r.run_id += "-i" + std::to_string(inst);
                    r.run_id += "-" + std::string(to_string(v)) + "-s" + std::to_string(seed);
                    out.push_back(std::move(r));
                }
            }
        }
    }
    return out;
}

std::vector<envs::BlocksworldInstance> prepare_instances(const EnvSpec& spec)
{
    std::vector<envs::BlocksworldInstance> out;
    if (spec.id != "blocksworld")
        return out;
    if (!spec.instance.empty()) {
        out.push_back(envs::BlocksworldInstance::load(spec.instance));
        return out;
    }
    const std::size_t blocks = spec.blocks ? spec.blocks : default_blocks(spec.steps);
    for (std::size_t i = 0; i < spec.instances; ++i) {
        Rng rng(Rng::mix(spec.instance_seed * 1000003ULL + i));
        envs::BlocksworldInstance inst = envs::generate_instance(spec.steps, blocks, rng);
        inst.name = "gen-" + std::to_string(spec.steps) + "step-" + std::to_string(i);
        out.push_back(std::move(inst));
    }
    return out;
}

std::unique_ptr<envs::Environment> make_environment(const ExperimentConfig& cfg, const RunSpec& run,
                                                    const std::vector<envs::BlocksworldInstance>& instances)
{
    if (cfg.env.id == "stock")
        return std::make_unique<envs::StockEnv>(cfg.env.profit_probability, cfg.env.safe_reward);
    if (cfg.env.id == "blocksworld") {
        if (run.instance >= instances.size())
            throw std::out_of_range("blocksworld instance index out of range");
        return std::make_unique<envs::BlocksworldEnv>(instances[run.instance], run.failure_rate, cfg.env.max_steps);
    }
    if (cfg.env.id == "overcooked")
        return std::make_unique<envs::OvercookedLiteEnv>(envs::parse_overcooked_task(cfg.env.task), run.failure_rate);
    throw std::invalid_argument("unknown environment '" + cfg.env.id + "'");
}

ExperimentConfig effective_config(const ExperimentConfig& cfg, const RunSpec& run)
{
    ExperimentConfig out = cfg;
    out.seeds = {run.seed};
    out.variants = {run.variant};
    if (uses_failure_rate(cfg.env.id))
        out.env.failure_rates = {run.failure_rate};
    out.planner.seed = run.seed;
    out.planner.variant = run.variant;
    return out;
}

RunOutcome execute_run(const ExperimentConfig& cfg, const RunSpec& run,
                       const std::vector<envs::BlocksworldInstance>& instances, bool keep_tree)
{
    RunOutcome outcome;
    outcome.spec = run;
    const auto started = std::chrono::steady_clock::now();
    const ExperimentConfig eff = effective_config(cfg, run);
    try {
        std::unique_ptr<envs::Environment> env = make_environment(eff, run, instances);

        std::shared_ptr<llm::LlmClient> client;
        if (eff.policy == "llm" || eff.embedding == "http")
            client = std::make_shared<llm::LlmClient>(eff.llm, std::shared_ptr<llm::Transport>(llm::make_http_transport()));
        std::unique_ptr<PriorPolicy> policy;
        if (eff.policy == "llm")
            policy = std::make_unique<llm::LlmPolicy>(client, eff.task_prompt, eff.proposals);
        else
            policy = std::make_unique<UniformPolicy>();
        std::unique_ptr<EmbeddingProvider> embedder;
        if (eff.embedding == "http")
            embedder = std::make_unique<llm::HttpEmbedding>(client);

        SearchResult result = run_search(*env, *policy, eff.planner, embedder.get());
        const EvaluationResult eval =
            evaluate_plan(result.tree, *env, eff.planner, eff.eval_episodes, Rng::mix(run.seed ^ 0x6576616cULL));

        outcome.recommendation = result.recommendation;
        outcome.success = eval.success_rate();
        outcome.mean_return = eval.mean_return;
        for (const IterationTrace& t : result.traces) {
            if (t.reached_success) {
                outcome.iterations_to_first_success = t.iteration + 1;
                break;
            }
        }

        outcome.trace_lines.push_back(json{{"schema_version", trace_schema_version},
                                           {"type", "run"},
                                           {"run_id", run.run_id},
                                           {"env", eff.env.id},
                                           {"variant", to_string(run.variant)},
                                           {"seed", run.seed},
                                           {"failure_rate", run.failure_rate},
                                           {"instance", run.instance},
                                           {"config", normalize_config(eff)}}
                                          .dump());
        for (const IterationTrace& t : result.traces) {
            json root_means = json::object();
            for (const auto& [action, value] : t.root_values)
                root_means[action] = value;
            outcome.trace_lines.push_back(json{{"schema_version", trace_schema_version},
                                               {"type", "iteration"},
                                               {"run_id", run.run_id},
                                               {"iteration", t.iteration},
                                               {"path_length", t.path.size()},
                                               {"actions", t.actions},
                                               {"total_reward", t.total_reward},
                                               {"terminal", t.terminal},
                                               {"reached_success", t.reached_success},
                                               {"novelty", t.novelty},
                                               {"recommendation", t.recommendation},
                                               {"root_values", root_means},
                                               {"wall_seconds", t.wall_seconds}}
                                              .dump());
        }
        outcome.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        json result_line = {{"schema_version", trace_schema_version},
                            {"type", "result"},
                            {"run_id", run.run_id},
                            {"recommendation", outcome.recommendation},
                            {"success", outcome.success},
                            {"mean_return", outcome.mean_return},
                            {"eval_episodes", eval.episodes},
                            {"iterations_to_first_success", nullptr},
                            {"wall_seconds", outcome.wall_seconds}};
        if (outcome.iterations_to_first_success)
            result_line["iterations_to_first_success"] = *outcome.iterations_to_first_success;
        outcome.trace_lines.push_back(result_line.dump());
        if (keep_tree)
            outcome.tree = result.tree.snapshot();
        outcome.ok = true;
    } catch (const std::exception& e) {
        outcome.ok = false;
        outcome.error = e.what();
        outcome.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    }
    return outcome;
}

bool SweepResult::all_ok() const
{
    return std::all_of(runs.begin(), runs.end(), [](const RunOutcome& r) { return r.ok; });
}

std::string summary_csv(const std::vector<RunOutcome>& runs, const std::string& env_id)
{
    std::string out = "run_id,env,failure_rate,instance,variant,seed,ok,success,return,iterations_to_first_success,"
                      "recommendation\n";
    for (const RunOutcome& r : runs) {
        out += r.spec.run_id + "," + env_id + "," + rate_label(r.spec.failure_rate) + "," +
               std::to_string(r.spec.instance) + "," + std::string(to_string(r.spec.variant)) + "," +
               std::to_string(r.spec.seed) + "," + (r.ok ? "1" : "0") + "," + fixed(r.success) + "," +
               fixed(r.mean_return) + "," +
               (r.iterations_to_first_success ? std::to_string(*r.iterations_to_first_success) : "") + ",";
        // action texts may contain commas
        std::string rec = r.recommendation;
        if (rec.find_first_of(",\"\n") != std::string::npos) {
            std::string quoted = "\"";
            for (char c : rec)
                quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
            rec = quoted + "\"";
        }
        out += rec + "\n";
    }
    return out;
}

std::string aggregate_csv(const std::vector<RunOutcome>& runs, const std::string& env_id)
{
    struct Acc {
        std::vector<double> success, ret;
        std::size_t failed = 0;
    };
    // keyed by first appearance to keep the sweep's order
    std::vector<std::pair<std::pair<double, Variant>, Acc>> groups;
    for (const RunOutcome& r : runs) {
        const auto key = std::make_pair(r.spec.failure_rate, r.spec.variant);
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == key; });
        if (it == groups.end()) {
            groups.push_back({key, {}});
            it = groups.end() - 1;
        }
        if (!r.ok) {
            ++it->second.failed;
            continue;
        }
        it->second.success.push_back(r.success);
        it->second.ret.push_back(r.mean_return);
    }
    auto mean_std = [](const std::vector<double>& v) {
        if (v.empty())
            return std::make_pair(0.0, 0.0);
        double m = 0.0;
        for (double x : v)
            m += x;
        m /= static_cast<double>(v.size());
        double s = 0.0;
        for (double x : v)
            s += (x - m) * (x - m);
        return std::make_pair(m, v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0);
    };
    std::string out = "env,failure_rate,variant,runs,failed,success_mean,success_std,return_mean,return_std\n";
    for (const auto& [key, acc] : groups) {
        const auto [sm, ss] = mean_std(acc.success);
        const auto [rm, rs] = mean_std(acc.ret);
        out += env_id + "," + rate_label(key.first) + "," + std::string(to_string(key.second)) + "," +
               std::to_string(acc.success.size()) + "," + std::to_string(acc.failed) + "," + fixed(sm) + "," +
               fixed(ss) + "," + fixed(rm) + "," + fixed(rs) + "\n";
    }
    return out;
}

SweepResult run_sweep(const ExperimentConfig& cfg, bool write_files)
{
    const std::vector<RunSpec> specs = enumerate_runs(cfg);
    const std::vector<envs::BlocksworldInstance> instances = prepare_instances(cfg.env);

    SweepResult result;
    result.runs.resize(specs.size());
    std::size_t workers = cfg.parallelism;
    if (workers == 0)
        workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    workers = std::min(workers, specs.size());

    const bool keep_tree = write_files && cfg.save_trees;
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next.fetch_add(1); i < specs.size(); i = next.fetch_add(1))
            result.runs[i] = execute_run(cfg, specs[i], instances, keep_tree);
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back(work);
        for (auto& t : pool)
            t.join();
    }

    result.summary_csv = summary_csv(result.runs, cfg.env.id);
    result.aggregate_csv = aggregate_csv(result.runs, cfg.env.id);

    if (write_files) {
        fs::create_directories(cfg.out);
        if (keep_tree)
            fs::create_directories(cfg.out / "trees");
        json index = json::array();
        for (const RunOutcome& r : result.runs) {
            index.push_back({{"run_id", r.spec.run_id},
                             {"variant", to_string(r.spec.variant)},
                             {"seed", r.spec.seed},
                             {"failure_rate", r.spec.failure_rate},
                             {"instance", r.spec.instance},
                             {"ok", r.ok},
                             {"error", r.error}});
            if (!r.ok)
                continue;
            std::string lines;
            for (const auto& l : r.trace_lines)
                lines += l + "\n";
            write_file(cfg.out / (r.spec.run_id + ".jsonl"), lines);
            if (keep_tree)
                write_file(cfg.out / "trees" / (r.spec.run_id + ".json"), r.tree.dump(1) + "\n");
        }
        write_file(cfg.out / "summary.csv", result.summary_csv);
        write_file(cfg.out / "aggregate.csv", result.aggregate_csv);
        write_file(cfg.out / "config.snapshot", normalize_config(cfg));
        write_file(cfg.out / "runs.json", index.dump(2) + "\n");
    }
    return result;
}

}  // namespace planu
