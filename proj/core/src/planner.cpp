#include "planu/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <unordered_map>

namespace planu {

Variant parse_variant(std::string_view name)
{
    if (name == "full")
        return Variant::full;
    if (name == "no_dist")
        return Variant::no_dist;
    if (name == "no_ucc")
        return Variant::no_ucc;
    if (name == "deterministic_baseline")
        return Variant::deterministic_baseline;
    throw std::invalid_argument("unknown variant '" + std::string(name) + "'");
}

std::string_view to_string(Variant v)
{
    switch (v) {
    case Variant::full: return "full";
    case Variant::no_dist: return "no_dist";
    case Variant::no_ucc: return "no_ucc";
    case Variant::deterministic_baseline: return "deterministic_baseline";
    }
    return "?";
}

Extraction parse_extraction(std::string_view name)
{
    if (name == "max_mean")
        return Extraction::max_mean;
    if (name == "max_visits")
        return Extraction::max_visits;
    throw std::invalid_argument("unknown extraction rule '" + std::string(name) + "'");
}

std::string_view to_string(Extraction e)
{
    return e == Extraction::max_mean ? "max_mean" : "max_visits";
}

IdentityMode parse_identity_mode(std::string_view name)
{
    if (name == "exact")
        return IdentityMode::exact;
    if (name == "embedding")
        return IdentityMode::embedding;
    throw std::invalid_argument("unknown identity mode '" + std::string(name) + "'");
}

std::string_view to_string(IdentityMode m)
{
    return m == IdentityMode::exact ? "exact" : "embedding";
}

void PlannerConfig::validate() const
{
    auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
    if (iterations < 1)
        fail("iterations must be >= 1");
    if (depth_limit < 1)
        fail("depth_limit must be >= 1");
    if (n_q < 1)
        fail("n_q must be >= 1");
    if (!(c1 >= 0.0) || !std::isfinite(c1))
        fail("c1 must be a finite non-negative real");
    if (!(gamma >= 0.0 && gamma <= 1.0))
        fail("gamma must lie in [0, 1]");
    if (!(qr_step > 0.0) || !std::isfinite(qr_step))
        fail("qr_step must be a positive finite real");
    if (!(kappa > 0.0) || !std::isfinite(kappa))
        fail("kappa must be a positive finite real");
    if (!(similarity_threshold > 0.0 && similarity_threshold <= 1.0))
        fail("similarity_threshold must lie in (0, 1]");
    if (baseline_samples < 1 || baseline_samples % 2 == 0)
        fail("baseline_samples must be a positive odd number");
    if (novelty.batch_size < 1)
        fail("novelty batch_size must be >= 1");
    if (novelty.buffer_capacity < 1)
        fail("novelty buffer_capacity must be >= 1");
    if (novelty.rnd.embedding_dim < 1 || novelty.rnd.hidden_sizes.empty())
        fail("novelty network shape is empty");
    if (!(novelty.rnd.learning_rate > 0.0))
        fail("novelty learning_rate must be positive");
    if (!(novelty.rnd.intrinsic_weight >= 0.0))
        fail("novelty intrinsic_weight must be non-negative");
}

VariantBehavior apply_variant(const PlannerConfig& cfg)
{
    VariantBehavior b;
    b.scoring = ScoringRule{cfg.c1, cfg.psi, ValueModel::quantile, ExplorationTerm::curiosity, cfg.unvisited_first};
    b.backup = BackupRule{cfg.gamma, cfg.qr_step, cfg.kappa, ValueModel::quantile};
    switch (cfg.variant) {
    case Variant::full:
        break;
    case Variant::no_dist:
        b.scoring.value = b.backup.value = ValueModel::scalar;
        break;
    case Variant::no_ucc:
        b.scoring.exploration = ExplorationTerm::uct;
        b.uses_novelty = false;
        break;
    case Variant::deterministic_baseline:
        b.scoring.value = b.backup.value = ValueModel::scalar;
        b.mode_outcome = true;
        b.cache_outcomes = true;
        break;
    }
    return b;
}

std::vector<Proposal> UniformPolicy::propose(const std::string& state, const envs::Environment& env)
{
    const std::vector<std::string> legal = env.legal_actions(state);
    std::vector<Proposal> out;
    out.reserve(legal.size());
    for (const auto& a : legal)
        out.push_back({a, 1.0 / static_cast<double>(legal.size())});
    return out;
}

ActionId extract_action(const SearchTree& tree, StateId state, const PlannerConfig& cfg)
{
    const StateNode& node = tree.state(state);
    if (node.actions.empty())
        throw TreeError(TreeError::Kind::empty_children, "cannot extract an action from an unexpanded state");
    const VariantBehavior behavior = apply_variant(cfg);
    ScoringRule by_mean = behavior.scoring;
    by_mean.psi = PsiOperator::mean;
    ActionId best = node.actions.front();
    for (ActionId a : node.actions) {
        if (cfg.extraction == Extraction::max_visits) {
            if (tree.action(a).visits > tree.action(best).visits)
                best = a;
        } else if (tree.value(a, by_mean) > tree.value(best, by_mean)) {
            best = a;
        }
    }
    return best;
}

namespace {

/// Embeddings are pure functions of state text, so they are cached by digest.
class EmbeddingCache {
public:
    EmbeddingCache(EmbeddingProvider& provider, std::shared_ptr<EmbeddingProvider> owned)
        : provider_(provider), owned_(std::move(owned))
    {
    }

    const Vector& get(const StateKey& key)
    {
        auto it = cache_.find(key.digest);
        if (it == cache_.end())
            it = cache_.emplace(key.digest, provider_.embed(key.canonical)).first;
        return it->second;
    }

private:
    EmbeddingProvider& provider_;
    std::shared_ptr<EmbeddingProvider> owned_;
    std::unordered_map<std::uint64_t, Vector> cache_;
};

}  // namespace

SearchResult run_search(const envs::Environment& env, PriorPolicy& policy, const PlannerConfig& cfg,
                        EmbeddingProvider* embedder)
{
    cfg.validate();
    const VariantBehavior behavior = apply_variant(cfg);

    // The returned tree may call back into the cache, so it is shared.
    std::shared_ptr<EmbeddingProvider> fallback;
    if (!embedder)
        fallback = std::make_shared<HashEmbedding>(cfg.novelty.rnd.embedding_dim);
    EmbeddingProvider& provider = embedder ? *embedder : *fallback;
    if (provider.dimension() != cfg.novelty.rnd.embedding_dim)
        throw std::invalid_argument("embedding provider dimension does not match novelty embedding_dim");
    auto cache = std::make_shared<EmbeddingCache>(provider, fallback);
    EmbeddingCache& embeddings = *cache;

    std::unique_ptr<envs::Environment> world = env.clone();
    if (behavior.mode_outcome)
        world = envs::deterministicize(std::move(world), cfg.baseline_samples);

    IdentityPolicy identity;
    identity.threshold = cfg.similarity_threshold;
    if (cfg.identity == IdentityMode::embedding)
        identity.embed = [cache](const std::string& text) { return cache->get(make_state_key(text)); };

    Rng seeds(cfg.seed);
    const std::uint64_t env_seed = seeds.split();
    const std::uint64_t rnd_seed = seeds.split();
    Rng train_rng(seeds.split());

    SearchResult result{SearchTree(cfg.n_q, identity), {}, 0, {}};
    SearchTree& tree = result.tree;
    RndModel rnd(cfg.novelty.rnd, rnd_seed);
    StateBuffer buffer(cfg.novelty.buffer_capacity);

    const std::string root_text = world->reset(env_seed);
    const StateId root = tree.add_root(root_text, world->is_terminal(root_text));

    auto expand = [&](StateId s, std::size_t iteration) {
        std::vector<Proposal> proposals;
        try {
            proposals = policy.propose(tree.state(s).key.canonical, *world);
        } catch (const std::exception& e) {
            throw SearchError(iteration, std::string("policy: ") + e.what());
        }
        if (proposals.empty())
            throw SearchError(iteration, "policy returned no actions for a non-terminal state");
        tree.expand(s, proposals);
    };

    if (!tree.state(root).is_terminal)
        expand(root, 0);

    result.traces.reserve(cfg.iterations);
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const auto started = std::chrono::steady_clock::now();
        IterationTrace trace;
        trace.iteration = it;

        StateId s = root;
        std::uint32_t depth = 0;
        while (!tree.state(s).is_terminal && depth < cfg.depth_limit) {
            if (tree.state(s).actions.empty())
                expand(s, it);

            double novelty = 0.0;
            if (behavior.uses_novelty)
                novelty = rnd.novelty_reward(embeddings.get(tree.state(s).key));
            const ActionId a = tree.select_action(s, novelty, behavior.scoring);
            const std::string& action_text = tree.action(a).action_text;

            StateId next;
            double reward;
            if (behavior.cache_outcomes && !tree.action(a).children.empty()) {
                const Outcome& first = tree.action(a).children.front();
                next = first.state;
                reward = first.reward;
            } else {
                envs::StepResult step;
                try {
                    step = world->step(tree.state(s).key.canonical, action_text);
                } catch (const std::exception& e) {
                    throw SearchError(it, std::string("environment: ") + e.what());
                }
                const bool done = step.done || world->is_terminal(step.state);
                next = tree.attach_outcome(a, step.state, depth + 1, step.reward, done);
                reward = step.reward;
            }

            trace.path.push_back({s, a, reward, next});
            trace.actions.push_back(action_text);
            trace.novelty.push_back(novelty);
            trace.total_reward += reward;
            if (world->is_success(tree.state(next).key.canonical))
                trace.reached_success = true;
            s = next;
            ++depth;
        }
        trace.terminal = tree.state(s).is_terminal;

        if (behavior.uses_novelty && !trace.path.empty()) {
            for (const PathStep& step : trace.path) {
                const StateKey& key = tree.state(step.next_state).key;
                const Vector& e = embeddings.get(key);
                rnd.observe(e);
                buffer.push(key.digest, e);
            }
            rnd.train_predictor(buffer, cfg.novelty.batch_size, cfg.novelty.train_steps, train_rng);
        }

        if (!trace.path.empty())
            tree.backpropagate(trace.path, behavior.backup);

        if (!tree.state(root).actions.empty()) {
            const ActionId best = extract_action(tree, root, cfg);
            trace.recommendation = tree.action(best).action_text;
            for (ActionId a : tree.state(root).actions)
                trace.root_values.emplace_back(tree.action(a).action_text, tree.value(a, behavior.scoring));
        }
        trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.traces.push_back(std::move(trace));
    }

    if (!tree.state(root).actions.empty()) {
        result.recommended = extract_action(tree, root, cfg);
        result.recommendation = tree.action(result.recommended).action_text;
    }
    return result;
}

namespace {

/// Tree node standing for a real state reached during replay.
std::optional<StateId> locate(const SearchTree& tree, ActionId via, const std::string& state_text)
{
    const StateKey key = make_state_key(state_text);
    for (const Outcome& o : tree.action(via).children)
        if (o.digest == key.digest && !tree.state(o.state).actions.empty())
            return o.state;
    std::optional<StateId> best;
    for (StateId id : tree.find_by_digest(key.digest)) {
        const StateNode& node = tree.state(id);
        if (node.actions.empty())
            continue;
        if (!best || node.visits > tree.state(*best).visits)
            best = id;
    }
    return best;
}

}  // namespace

EvaluationResult evaluate_plan(const SearchTree& tree, const envs::Environment& env, const PlannerConfig& cfg,
                               std::size_t episodes, std::uint64_t seed)
{
    EvaluationResult out;
    if (tree.empty())
        return out;
    Rng seeds(seed);
    double total = 0.0;
    for (std::size_t ep = 0; ep < episodes; ++ep) {
        std::unique_ptr<envs::Environment> world = env.clone();
        std::string state = world->reset(seeds.split());
        StateId node = tree.root();
        double ret = 0.0;
        bool success = world->is_success(state);
        for (std::size_t t = 0; t < world->max_steps() && !world->is_terminal(state); ++t) {
            if (tree.state(node).actions.empty())
                break;
            const ActionId a = extract_action(tree, node, cfg);
            const envs::StepResult step = world->step(state, tree.action(a).action_text);
            ret += step.reward;
            state = step.state;
            if (world->is_success(state))
                success = true;
            if (step.done)
                break;
            const auto next = locate(tree, a, state);
            if (!next)
                break;
            node = *next;
        }
        total += ret;
        out.successes += success ? 1 : 0;
        ++out.episodes;
    }
    out.mean_return = episodes ? total / static_cast<double>(episodes) : 0.0;
    return out;
}

}  // namespace planu
