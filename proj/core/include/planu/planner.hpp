#pragma once

#include "planu/envs.hpp"
#include "planu/novelty.hpp"
#include "planu/quantile.hpp"
#include "planu/tree.hpp"

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace planu {

enum class Variant { full, no_dist, no_ucc, deterministic_baseline };

Variant parse_variant(std::string_view name);
std::string_view to_string(Variant v);

/// Root action chosen after search. Neither rule sees the exploration bonus.
enum class Extraction { max_mean, max_visits };

Extraction parse_extraction(std::string_view name);
std::string_view to_string(Extraction e);

enum class IdentityMode { exact, embedding };

IdentityMode parse_identity_mode(std::string_view name);
std::string_view to_string(IdentityMode m);

struct NoveltyConfig {
    RndSettings rnd;
    std::size_t buffer_capacity = 10000;
    std::size_t batch_size = 64;
    std::size_t train_steps = 5;
};

struct PlannerConfig {
    std::size_t iterations = 200;
    std::size_t depth_limit = 20;
    std::size_t n_q = 51;
    double c1 = 0.25;
    double gamma = 0.95;
    double qr_step = 0.5;
    double kappa = 0.01;
    PsiOperator psi = PsiOperator::mean;
    Variant variant = Variant::full;
    std::uint64_t seed = 0;
    NoveltyConfig novelty;
    IdentityMode identity = IdentityMode::exact;
    double similarity_threshold = 0.95;
    std::size_t baseline_samples = 5;  ///< k of the mode-outcome wrapper
    Extraction extraction = Extraction::max_mean;
    bool unvisited_first = true;  ///< see ScoringRule::unvisited_first

    /// Throws std::invalid_argument naming the first offending field.
    void validate() const;
};

/// Behavior switches implied by a variant.
struct VariantBehavior {
    ScoringRule scoring;
    BackupRule backup;
    bool uses_novelty = true;     ///< the RND model is trained and queried
    bool mode_outcome = false;    ///< environment wrapped by deterministicize
    bool cache_outcomes = false;  ///< an action's first outcome is reused without re-querying
};

VariantBehavior apply_variant(const PlannerConfig& cfg);

/// Supplies candidate actions and their priors for a state.
class PriorPolicy {
public:
    virtual ~PriorPolicy() = default;
    virtual std::vector<Proposal> propose(const std::string& state, const envs::Environment& env) = 0;
};

/// Every legal action with prior 1/k.
class UniformPolicy final : public PriorPolicy {
public:
    std::vector<Proposal> propose(const std::string& state, const envs::Environment& env) override;
};

struct IterationTrace {
    std::size_t iteration = 0;
    std::vector<PathStep> path;
    std::vector<std::string> actions;  ///< action texts along path
    std::vector<double> novelty;       ///< bonus input at each selection
    bool terminal = false;             ///< path ended in a terminal state
    bool reached_success = false;
    double total_reward = 0.0;  ///< undiscounted
    std::string recommendation;  ///< root choice after this iteration
    std::vector<std::pair<std::string, double>> root_values;
    double wall_seconds = 0.0;
};

struct SearchResult {
    SearchTree tree;
    std::vector<IterationTrace> traces;
    ActionId recommended = 0;
    std::string recommendation;
};

/// Environment or policy failure inside run_search.
class SearchError : public std::runtime_error {
public:
    SearchError(std::size_t iteration, const std::string& what)
        : std::runtime_error("iteration " + std::to_string(iteration) + ": " + what), iteration_(iteration)
    {
    }
    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

/// Runs cfg.iterations rounds of selection, expansion, simulation and
/// back-propagation on a clone of `env`. `embedder` defaults to a hash
/// embedding of the configured dimension; a caller-supplied embedder must
/// outlive the returned tree when identity mode is embedding.
SearchResult run_search(const envs::Environment& env, PriorPolicy& policy, const PlannerConfig& cfg,
                        EmbeddingProvider* embedder = nullptr);

/// Root action under the extraction rule; lowest index wins ties.
ActionId extract_action(const SearchTree& tree, StateId state, const PlannerConfig& cfg);

struct EvaluationResult {
    std::size_t episodes = 0;
    std::size_t successes = 0;
    double mean_return = 0.0;
    double success_rate() const { return episodes ? static_cast<double>(successes) / static_cast<double>(episodes) : 0.0; }
};

/// Replays the tree greedily on fresh copies of `env` (never the mode
/// wrapper). At each real state the matching child is followed, else the
/// most visited expanded node with the same digest; an episode with no such
/// node ends unsuccessfully.
EvaluationResult evaluate_plan(const SearchTree& tree, const envs::Environment& env, const PlannerConfig& cfg,
                               std::size_t episodes, std::uint64_t seed);

}  // namespace planu
