#include "planu/envs.hpp"
#include "planu/novelty.hpp"
#include "planu/planner.hpp"
#include "planu/quantile.hpp"
#include "planu/rng.hpp"
#include "planu/tree.hpp"

#include <benchmark/benchmark.h>

#include <string>
#include <vector>

using namespace planu;

static void BM_QrUpdate(benchmark::State& state)
{
    const auto n_q = static_cast<std::size_t>(state.range(0));
    auto d = QuantileDistribution::from_prior(0.5, n_q);
    std::vector<double> targets(4);
    Rng rng(1);
    for (auto _ : state) {
        for (double& t : targets)
            t = rng.uniform();
        d = qr_update(d, targets, 0.5, 0.01);
        benchmark::DoNotOptimize(d);
    }
}
BENCHMARK(BM_QrUpdate)->Arg(11)->Arg(51)->Arg(201);

static void BM_SelectAction(benchmark::State& state)
{
    const auto k = static_cast<std::size_t>(state.range(0));
    SearchTree tree;
    const StateId root = tree.add_root("root");
    std::vector<Proposal> proposals;
    for (std::size_t i = 0; i < k; ++i)
        proposals.push_back({"a" + std::to_string(i), 1.0 / static_cast<double>(k)});
    tree.expand(root, proposals);
    const ScoringRule rule;
    for (auto _ : state)
        benchmark::DoNotOptimize(tree.select_action(root, 0.1, rule));
}
BENCHMARK(BM_SelectAction)->Arg(5)->Arg(20);

static void BM_RndTrain(benchmark::State& state)
{
    const RndSettings settings;
    RndModel rnd(settings, 3);
    StateBuffer buffer(1000);
    for (std::uint64_t i = 0; i < 200; ++i) {
        Vector e = hash_embed("state " + std::to_string(i), settings.embedding_dim);
        rnd.observe(e);
        buffer.push(i, std::move(e));
    }
    Rng rng(4);
    for (auto _ : state)
        benchmark::DoNotOptimize(rnd.train_predictor(buffer, 64, 1, rng));
}
BENCHMARK(BM_RndTrain);

static void BM_StockSearch(benchmark::State& state)
{
    envs::StockEnv env(0.6, 0.9);
    UniformPolicy policy;
    PlannerConfig cfg;
    cfg.iterations = static_cast<std::size_t>(state.range(0));
    for (auto _ : state)
        benchmark::DoNotOptimize(run_search(env, policy, cfg).recommended);
}
BENCHMARK(BM_StockSearch)->Arg(200)->Unit(benchmark::kMillisecond);

static void BM_BlocksworldSearch(benchmark::State& state)
{
    Rng rng(7);
    envs::BlocksworldEnv env(envs::generate_instance(4, 4, rng), 0.2);
    UniformPolicy policy;
    PlannerConfig cfg;
    cfg.iterations = static_cast<std::size_t>(state.range(0));
    for (auto _ : state)
        benchmark::DoNotOptimize(run_search(env, policy, cfg).recommended);
}
BENCHMARK(BM_BlocksworldSearch)->Arg(200)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
