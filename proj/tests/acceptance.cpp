// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "planu/config.hpp"
#include "planu/envs.hpp"
#include "planu/novelty.hpp"
#include "planu/planner.hpp"
#include "planu/quantile.hpp"
#include "planu/rng.hpp"
#include "planu/sweep.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

using namespace planu;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets. Changing any of these changes what is being accepted.
constexpr std::size_t stock_seeds = 20;
constexpr std::size_t stock_iterations = 200;
constexpr double stock_recommend_a_min = 0.95;
constexpr double stock_mean_b_tolerance = 0.05;
constexpr double stock_runtime_limit_s = 10.0;

constexpr double baseline_recommend_b_min = 0.90;
constexpr double baseline_profit_tolerance = 0.05;
constexpr std::size_t stock_eval_episodes = 200;

constexpr std::size_t bandit_updates = 2000;
constexpr double bandit_p = 0.6;
constexpr double bandit_fraction_tolerance = 0.08;
constexpr double bandit_window = 0.1;
constexpr std::size_t bandit_seeds = 5;

constexpr std::size_t gradient_cases = 1000;
constexpr double gradient_rel_tolerance = 1e-4;
constexpr double gradient_fd_eps = 1e-6;

constexpr std::size_t blocks_instances = 10;
constexpr std::size_t blocks_seeds = 5;
constexpr std::size_t blocks_iterations = 200;
constexpr std::size_t blocks_eval_episodes = 20;
constexpr double blocks_failure_rate = 0.2;
constexpr double afr_inversion_tolerance = 0.03;

constexpr std::size_t rnd_buffer_states = 100;
constexpr std::size_t rnd_heldout_states = 100;
constexpr std::size_t rnd_collections = 2000;  // x update_per_collect = SGD steps
constexpr double rnd_min_drop = 0.5;
constexpr std::size_t rnd_seeds = 5;

constexpr std::size_t env_draws = 10000;
constexpr double env_sigmas = 3.0;

int failures = 0;

void report(int criterion, bool pass, const std::string& detail)
{
    std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, detail.c_str());
    std::fflush(stdout);
    if (!pass)
        ++failures;
}

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* format, ...)
{
    char buf[1024];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof buf, format, args);
    va_end(args);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double mean_of(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v)
        s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double median_of(std::vector<double> v)
{
    if (v.empty())
        return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

const ActionNode* root_action(const SearchTree& tree, const std::string& text)
{
    for (ActionId a : tree.state(tree.root()).actions)
        if (tree.action(a).action_text == text)
            return &tree.action(a);
    return nullptr;
}

// ---------------------------------------------------------------------------

struct StockRuns {
    std::vector<SearchResult> full;
    std::vector<SearchResult> baseline;
    double full_seconds = 0.0;
};

StockRuns run_stock()
{
    StockRuns out;
    envs::StockEnv env(0.6, 0.9);
    UniformPolicy policy;
    PlannerConfig cfg;
    cfg.iterations = stock_iterations;

    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t seed = 0; seed < stock_seeds; ++seed) {
        cfg.seed = seed;
        cfg.variant = Variant::full;
        out.full.push_back(run_search(env, policy, cfg));
    }
    out.full_seconds = seconds_since(t0);

    for (std::size_t seed = 0; seed < stock_seeds; ++seed) {
        cfg.seed = seed;
        cfg.variant = Variant::deterministic_baseline;
        cfg.baseline_samples = 5;
        out.baseline.push_back(run_search(env, policy, cfg));
    }
    return out;
}

void criterion_1(const StockRuns& runs)
{
    std::size_t recommend_a = 0, converged = 0, within = 0;
    double worst = 0.0;
    std::vector<double> means;
    for (const SearchResult& r : runs.full) {
        const ActionNode* b = root_action(r.tree, "buy_b");
        const double mean_b = b ? b->z.mean() : std::nan("");
        means.push_back(mean_b);
        if (r.recommendation != "buy_a")
            continue;
        ++recommend_a;
        ++converged;
        const double err = std::abs(mean_b - 0.6);
        worst = std::max(worst, err);
        within += err <= stock_mean_b_tolerance;
    }
    const double rate = static_cast<double>(recommend_a) / static_cast<double>(runs.full.size());
    const bool pass = rate >= stock_recommend_a_min && converged > 0 && within == converged &&
                      runs.full_seconds < stock_runtime_limit_s;
    report(1, pass,
           fmt("stock full: buy_a in %zu/%zu runs (need >= %.0f%%); |mean Z(b) - 0.6| <= %.2f in %zu/%zu converged "
               "runs (worst %.4f, mean Z(b) %.4f); %.2f s for %zu runs (limit %.0f s)",
               recommend_a, runs.full.size(), 100 * stock_recommend_a_min, stock_mean_b_tolerance, within, converged,
               worst, mean_of(means), runs.full_seconds, runs.full.size(), stock_runtime_limit_s));
}

void criterion_2(const StockRuns& runs)
{
    envs::StockEnv env(0.6, 0.9);
    PlannerConfig cfg;
    std::size_t recommend_b = 0;
    double baseline_return = 0.0, full_return = 0.0;
    for (std::size_t i = 0; i < runs.baseline.size(); ++i) {
        recommend_b += runs.baseline[i].recommendation == "buy_b";
        cfg.variant = Variant::deterministic_baseline;
        baseline_return += evaluate_plan(runs.baseline[i].tree, env, cfg, stock_eval_episodes, 1000 + i).mean_return;
        cfg.variant = Variant::full;
        full_return += evaluate_plan(runs.full[i].tree, env, cfg, stock_eval_episodes, 1000 + i).mean_return;
    }
    baseline_return /= static_cast<double>(runs.baseline.size());
    full_return /= static_cast<double>(runs.full.size());
    const double rate = static_cast<double>(recommend_b) / static_cast<double>(runs.baseline.size());
    const bool pass = rate >= baseline_recommend_b_min && std::abs(baseline_return - 0.6) <= baseline_profit_tolerance &&
                      baseline_return < full_return;
    report(2, pass,
           fmt("deterministic baseline (k = 5): buy_b in %zu/%zu runs (need >= %.0f%%); realized profit %.4f "
               "(need 0.6 +- %.2f) vs full %.4f",
               recommend_b, runs.baseline.size(), 100 * baseline_recommend_b_min, baseline_return,
               baseline_profit_tolerance, full_return));
}

void criterion_3()
{
    const PlannerConfig defaults;
    std::vector<double> fractions;
    bool pass = true;
    for (std::size_t seed = 0; seed < bandit_seeds; ++seed) {
        Rng rng(Rng::mix(seed + 1));
        auto d = QuantileDistribution::from_prior(0.5, 51);
        std::vector<double> y(1);
        for (std::size_t k = 0; k < bandit_updates; ++k) {
            y[0] = rng.bernoulli(bandit_p) ? 1.0 : 0.0;
            d = qr_update(d, y, defaults.qr_step, defaults.kappa);
        }
        std::size_t near_one = 0;
        for (double v : d.values())
            near_one += std::abs(v - 1.0) <= bandit_window;
        const double f = static_cast<double>(near_one) / 51.0;
        fractions.push_back(f);
        pass = pass && std::abs(f - bandit_p) <= bandit_fraction_tolerance;
    }
    std::string list;
    for (double f : fractions)
        list += (list.empty() ? "" : ", ") + fmt("%.3f", f);
    report(3, pass,
           fmt("Bernoulli(0.6) bandit, %zu updates (step %.2f, kappa %.2f): fraction of 51 quantiles within %.1f of 1 "
               "= [%s] per seed (need 0.6 +- %.2f)",
               bandit_updates, defaults.qr_step, defaults.kappa, bandit_window, list.c_str(),
               bandit_fraction_tolerance));
}

// Quantile-Huber loss written independently of the library.
double oracle_loss(const std::vector<double>& theta, const std::vector<double>& y, double kappa)
{
    const double n = static_cast<double>(theta.size());
    double total = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double tau = (2.0 * static_cast<double>(i) + 1.0) / (2.0 * n);
        for (double yj : y) {
            const double u = yj - theta[i];
            const double huber = std::abs(u) <= kappa ? 0.5 * u * u : kappa * (std::abs(u) - 0.5 * kappa);
            total += std::abs(tau - (u < 0.0 ? 1.0 : 0.0)) * huber / kappa;
        }
    }
    return total / (n * static_cast<double>(y.size()));
}

void criterion_4()
{
    Rng rng(2024);
    std::size_t quadratic = 0, linear = 0, checked = 0, bad = 0, noise_limited = 0;
    double worst = 0.0;
    for (std::size_t c = 0; c < gradient_cases; ++c) {
        const std::size_t n = 1 + rng.below(64);
        const std::size_t m = 1 + rng.below(8);
        // log-uniform kappa in [0.01, 4] puts differences on both sides of kappa
        const double kappa = 0.01 * std::pow(400.0, rng.uniform());
        std::vector<double> theta(n), y(m);
        for (double& t : theta)
            t = rng.uniform() * 4 - 2;
        for (double& v : y)
            v = rng.uniform() * 4 - 2;
        const QuantileDistribution d(theta);
        const auto grad = qr_loss_gradient(d, y, kappa);
        const double lib_loss = qr_loss(d, y, kappa);
        const double ref_loss = oracle_loss(theta, y, kappa);
        if (std::abs(lib_loss - ref_loss) > 1e-12 * std::max(1.0, std::abs(ref_loss)))
            ++bad;
        for (std::size_t i = 0; i < n; ++i) {
            for (double v : y)
                (std::abs(v - theta[i]) <= kappa ? quadratic : linear)++;
            auto up = theta, down = theta;
            up[i] += gradient_fd_eps;
            down[i] -= gradient_fd_eps;
            const double fd = (oracle_loss(up, y, kappa) - oracle_loss(down, y, kappa)) / (2 * gradient_fd_eps);
            const double diff = std::abs(fd - grad[i]);
            const double scale = std::max(std::abs(fd), std::abs(grad[i]));
            // Round-off of the central difference itself; exact zeros (cancelling terms) land here.
            const double noise = 8 * std::numeric_limits<double>::epsilon() * std::max(1.0, ref_loss) / gradient_fd_eps;
            if (diff <= noise) {
                noise_limited += diff > gradient_rel_tolerance * scale;
            } else {
                const double rel = diff / scale;
                worst = std::max(worst, rel);
                bad += rel > gradient_rel_tolerance;
            }
            ++checked;
        }
    }
    const bool pass = bad == 0 && quadratic > 0 && linear > 0;
    report(4, pass,
           fmt("%zu cases, %zu partials: worst relative error %.2e (limit %.0e), %zu failures, %zu near-zero partials "
               "within finite-difference round-off; pairs in quadratic branch %zu, linear branch %zu",
               gradient_cases, checked, worst, gradient_rel_tolerance, bad, noise_limited, quadratic, linear));
}

// ---------------------------------------------------------------------------

ExperimentConfig blocks_config(std::size_t steps, std::vector<double> rates, std::vector<Variant> variants)
{
    ExperimentConfig cfg;
    cfg.env.id = "blocksworld";
    cfg.env.steps = steps;
    cfg.env.instances = blocks_instances;
    cfg.env.failure_rates = std::move(rates);
    cfg.variants = std::move(variants);
    for (std::size_t s = 0; s < blocks_seeds; ++s)
        cfg.seeds.push_back(s);
    cfg.planner.iterations = blocks_iterations;
    cfg.eval_episodes = blocks_eval_episodes;
    cfg.policy = "uniform";
    return cfg;
}

/// Success rates grouped by (failure rate, variant), in run order.
std::map<std::pair<double, Variant>, std::vector<double>> success_by_cell(const SweepResult& res)
{
    std::map<std::pair<double, Variant>, std::vector<double>> out;
    for (const RunOutcome& r : res.runs)
        out[{r.spec.failure_rate, r.spec.variant}].push_back(r.ok ? r.success : 0.0);
    return out;
}

void criterion_5()
{
    bool pass = true;
    bool all_ok = true;
    std::string detail;
    for (std::size_t steps : {4u, 6u}) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto cfg = blocks_config(steps, {blocks_failure_rate}, {Variant::full, Variant::no_dist, Variant::no_ucc});
        const SweepResult res = run_sweep(cfg, false);
        all_ok = all_ok && res.all_ok();
        auto cells = success_by_cell(res);
        const double full = median_of(cells[{blocks_failure_rate, Variant::full}]);
        const double no_dist = median_of(cells[{blocks_failure_rate, Variant::no_dist}]);
        const double no_ucc = median_of(cells[{blocks_failure_rate, Variant::no_ucc}]);
        pass = pass && full >= no_dist && full >= no_ucc;
        detail += fmt("%s%zu-step median success full %.3f / no_dist %.3f / no_ucc %.3f (means %.3f / %.3f / %.3f, "
                      "%.0f s)",
                      detail.empty() ? "" : "; ", steps, full, no_dist, no_ucc,
                      mean_of(cells[{blocks_failure_rate, Variant::full}]),
                      mean_of(cells[{blocks_failure_rate, Variant::no_dist}]),
                      mean_of(cells[{blocks_failure_rate, Variant::no_ucc}]), seconds_since(t0));
    }
    report(5, pass && all_ok,
           fmt("Blocksworld AFR %.1f, %zu instances x %zu seeds, I = %zu: %s%s", blocks_failure_rate, blocks_instances,
               blocks_seeds, blocks_iterations, detail.c_str(), all_ok ? "" : " (some runs errored)"));
}

void criterion_6()
{
    const std::vector<double> rates = {0.0, 0.1, 0.2, 0.3, 0.4};
    const auto cfg = blocks_config(4, rates, {Variant::full, Variant::no_dist});
    const SweepResult res = run_sweep(cfg, false);
    auto cells = success_by_cell(res);
    std::vector<double> full, no_dist;
    for (double r : rates) {
        full.push_back(mean_of(cells[{r, Variant::full}]));
        no_dist.push_back(mean_of(cells[{r, Variant::no_dist}]));
    }
    std::size_t inversions = 0;
    bool small = true;
    for (std::size_t i = 1; i < full.size(); ++i) {
        if (full[i] > full[i - 1]) {
            ++inversions;
            small = small && full[i] - full[i - 1] <= afr_inversion_tolerance;
        }
    }
    bool dominates = true;
    for (std::size_t i = 0; i < rates.size(); ++i)
        dominates = dominates && full[i] >= no_dist[i];
    std::string table;
    for (std::size_t i = 0; i < rates.size(); ++i)
        table += fmt("%sAFR %.1f: full %.3f no_dist %.3f", i ? ", " : "", rates[i], full[i], no_dist[i]);
    const bool monotone = inversions == 0 || (inversions == 1 && small);
    report(6, monotone && dominates && res.all_ok(),
           fmt("4-step Blocksworld, I = %zu: %s; full non-increasing %s, full >= no_dist everywhere %s", blocks_iterations,
               table.c_str(), monotone ? "yes" : "no", dominates ? "yes" : "no"));
}

// ---------------------------------------------------------------------------

/// Distinct states reachable by random walks on a fixed 5-block instance.
std::vector<std::string> blocks_states(std::size_t count, std::uint64_t seed)
{
    Rng rng(seed);
    const auto inst = envs::generate_instance(6, 5, rng);
    envs::BlocksworldEnv env(inst, 0.0, 1000);
    std::set<std::string> seen;
    std::vector<std::string> out;
    std::string s = env.reset(seed);
    while (out.size() < count) {
        if (seen.insert(s).second)
            out.push_back(s);
        auto legal = env.legal_actions(s);
        if (legal.empty()) {
            s = env.reset(rng.next());
            continue;
        }
        s = env.step(s, legal[rng.below(legal.size())]).state;
    }
    return out;
}

void criterion_7()
{
    const NoveltyConfig defaults;
    bool pass = true;
    std::string detail;
    for (std::size_t seed = 0; seed < rnd_seeds; ++seed) {
        auto states = blocks_states(rnd_buffer_states + rnd_heldout_states, 7000 + seed);
        Rng shuffle(seed);
        for (std::size_t i = states.size(); i-- > 1;)
            std::swap(states[i], states[shuffle.below(i + 1)]);

        RndModel rnd(defaults.rnd, Rng::mix(seed));
        StateBuffer buffer(defaults.buffer_capacity);
        std::vector<Vector> trained, heldout;
        for (std::size_t i = 0; i < states.size(); ++i) {
            Vector e = hash_embed(states[i], defaults.rnd.embedding_dim);
            if (i < rnd_buffer_states) {
                rnd.observe(e);
                buffer.push(i, e);
                trained.push_back(std::move(e));
            } else {
                heldout.push_back(std::move(e));
            }
        }
        auto mean_novelty = [&](const std::vector<Vector>& set) {
            double s = 0.0;
            for (const auto& e : set)
                s += rnd.novelty_reward(e);
            return s / static_cast<double>(set.size());
        };
        const double before = mean_novelty(trained);
        Rng train_rng(Rng::mix(seed ^ 0x524e44ULL));
        for (std::size_t c = 0; c < rnd_collections; ++c)
            rnd.train_predictor(buffer, defaults.batch_size, defaults.train_steps, train_rng);
        const double after = mean_novelty(trained);
        const double held = mean_novelty(heldout);
        const double drop = 1.0 - after / before;
        pass = pass && drop >= rnd_min_drop && held > after;
        detail += fmt("%sseed %zu: drop %.1f%%, held-out %.5f vs trained %.5f", seed ? "; " : "", seed, 100 * drop,
                      held, after);
    }
    report(7, pass,
           fmt("RND lr %.0e, batch %zu, %zu x %zu SGD steps on %zu states (need drop >= %.0f%% and held-out > "
               "trained): %s",
               defaults.rnd.learning_rate, defaults.batch_size, rnd_collections, defaults.train_steps,
               rnd_buffer_states, 100 * rnd_min_drop, detail.c_str()));
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion_8()
{
    const fs::path base = fs::temp_directory_path() / ("planu-acceptance-" + std::to_string(::getpid()));
    bool pass = true;
    std::string detail;
    for (const char* env : {"stock", "blocksworld"}) {
        ExperimentConfig cfg;
        cfg.env.id = env;
        cfg.env.steps = 4;
        cfg.env.instances = 2;
        cfg.env.failure_rates = {0.0, 0.2};
        cfg.seeds = {0, 1, 2};
        cfg.variants = {Variant::full, Variant::no_dist, Variant::no_ucc, Variant::deterministic_baseline};
        cfg.planner.iterations = 50;
        cfg.eval_episodes = 10;
        std::string files[2][2];
        for (int k = 0; k < 2; ++k) {
            cfg.out = base / (std::string(env) + "-" + std::to_string(k));
            cfg.parallelism = k == 0 ? 1 : 0;
            const SweepResult res = run_sweep(cfg, true);
            pass = pass && res.all_ok();
            files[k][0] = slurp(cfg.out / "summary.csv");
            files[k][1] = slurp(cfg.out / "aggregate.csv");
        }
        const bool same = !files[0][0].empty() && files[0][0] == files[1][0] && files[0][1] == files[1][1];
        pass = pass && same;
        detail += fmt("%s%s %s (%zu + %zu bytes)", detail.empty() ? "" : ", ", env, same ? "identical" : "DIFFERENT",
                      files[0][0].size(), files[0][1].size());
    }
    fs::remove_all(base);
    report(8, pass, "two seeded sweep invocations: summary.csv and aggregate.csv " + detail);
}

void criterion_9()
{
    auto within = [](std::size_t hits, double p, std::size_t n, double& z) {
        const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(n));
        z = (static_cast<double>(hits) / static_cast<double>(n) - p) / sigma;
        return std::abs(z) <= env_sigmas;
    };

    envs::StockEnv stock(0.6, 0.9);
    const std::string s0 = stock.reset(99);
    std::size_t profit = 0;
    for (std::size_t i = 0; i < env_draws; ++i)
        profit += stock.step(s0, "buy_b").state == envs::StockEnv::sold_b_profit;
    double z_stock = 0.0;
    bool pass = within(profit, 0.6, env_draws, z_stock);
    std::string detail = fmt("stock profit %zu/%zu (z = %+.2f)", profit, env_draws, z_stock);

    Rng rng(5);
    const auto inst = envs::generate_instance(4, 4, rng);
    for (double rate : {0.1, 0.2, 0.4}) {
        envs::BlocksworldEnv env(inst, rate);
        const std::string s = env.reset(static_cast<std::uint64_t>(rate * 1000));
        const std::string action = env.legal_actions(s).front();
        std::size_t unchanged = 0;
        for (std::size_t i = 0; i < env_draws; ++i)
            unchanged += env.step(s, action).state == s;
        double z = 0.0;
        pass = within(unchanged, rate, env_draws, z) && pass;
        detail += fmt(", blocksworld failure at %.1f: %zu/%zu (z = %+.2f)", rate, unchanged, env_draws, z);
    }
    report(9, pass, detail + fmt(" (limit %.0f sigma)", env_sigmas));
}

}  // namespace

int main()
{
    const auto t0 = std::chrono::steady_clock::now();
    const StockRuns stock = run_stock();
    criterion_1(stock);
    criterion_2(stock);
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    std::printf("%d of 9 criteria failed (%.0f s)\n", failures, seconds_since(t0));
    return failures == 0 ? 0 : 1;
}
