#pragma once

#include "planu/quantile.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace planu {

/// Canonical state text plus its 64-bit digest.
struct StateKey {
    std::string canonical;
    std::uint64_t digest = 0;

    std::string hex() const;
    friend bool operator==(const StateKey& a, const StateKey& b) { return a.canonical == b.canonical; }
};

/// Trims the text and collapses whitespace runs into a single space.
/// Idempotent: make_state_key(k.canonical) == k.
StateKey make_state_key(std::string_view text);

using StateId = std::uint32_t;
using ActionId = std::uint32_t;

struct StateNode {
    StateKey key;
    std::vector<ActionId> actions;
    std::uint64_t visits = 0;
    bool is_terminal = false;
    std::uint32_t depth = 0;
    std::optional<ActionId> parent;
};

/// One observed stochastic outcome of an action.
struct Outcome {
    std::uint64_t digest = 0;
    StateId state = 0;
    double reward = 0.0;
    bool done = false;
    std::uint64_t count = 0;
};

struct ActionNode {
    std::string action_text;
    double prior = 0.0;
    QuantileDistribution z;
    double scalar = 0.0;  ///< running mean, used by scalar value models
    std::uint64_t visits = 0;
    std::vector<Outcome> children;
    StateId parent = 0;
};

struct PathStep {
    StateId state = 0;
    ActionId action = 0;
    double reward = 0.0;
    StateId next_state = 0;
};

struct Proposal {
    std::string action;
    double prior = 0.0;
};

/// How action values are represented and backed up.
enum class ValueModel { quantile, scalar };

/// Exploration bonus added to the collapsed value during selection.
enum class ExplorationTerm {
    curiosity,  ///< c1 * novelty(s) / max(N, 1)
    uct,        ///< c1 * sqrt(ln N_parent / max(N, 1))
};

struct ScoringRule {
    double c1 = 0.25;
    PsiOperator psi = PsiOperator::mean;
    ValueModel value = ValueModel::quantile;
    ExplorationTerm exploration = ExplorationTerm::curiosity;
    /// With a positive bonus numerator, unvisited children are taken first
    /// (highest value, then lowest index). Off: the max(N, 1) score decides.
    bool unvisited_first = true;
};

struct BackupRule {
    double gamma = 0.95;
    double step = 0.5;
    double kappa = 0.01;
    ValueModel value = ValueModel::quantile;
};

class TreeError : public std::logic_error {
public:
    enum class Kind { empty_children, expand_on_terminal, expand_on_expanded, empty_proposals, invalid_path, unknown_node };

    TreeError(Kind kind, const std::string& what) : std::logic_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Decides whether two states are the same node. Exact digest matching is the
/// default; similarity matching compares embeddings by cosine.
struct IdentityPolicy {
    using Embedder = std::function<std::vector<float>(const std::string&)>;

    double threshold = 0.95;
    Embedder embed;  ///< empty -> exact digest identity

    bool exact() const { return !embed; }
};

/// Alternating state/action search tree.
///
/// Single writer. Nodes are addressed by index and never removed. A state
/// appears at most once per (digest, depth); the same node can be reached
/// through several action nodes at that depth.
class SearchTree {
public:
    explicit SearchTree(std::size_t n_q = 51, IdentityPolicy identity = {});

    StateId add_root(std::string_view state_text, bool terminal = false);
    StateId root() const;
    bool empty() const noexcept { return states_.empty(); }

    const StateNode& state(StateId id) const;
    const ActionNode& action(ActionId id) const;
    std::size_t state_count() const noexcept { return states_.size(); }
    std::size_t action_count() const noexcept { return actions_.size(); }
    std::size_t n_q() const noexcept { return n_q_; }

    std::vector<ActionId> expand(StateId s, std::span<const Proposal> proposals);

    /// Existing child with the same identity, else a new (or depth-shared) node.
    StateId attach_outcome(ActionId a, std::string_view next_state, std::uint32_t depth,
                           double reward = 0.0, bool done = false);

    void mark_terminal(StateId s);

    /// Score used by select_action for one child.
    double score(ActionId a, double novelty, double parent_visits, const ScoringRule& rule) const;

    /// argmax of score over children of s; lowest index wins ties.
    ActionId select_action(StateId s, double novelty, const ScoringRule& rule) const;

    /// Collapsed value without the exploration bonus.
    double value(ActionId a, const ScoringRule& rule) const;

    void backpropagate(std::span<const PathStep> path, const BackupRule& rule);

    /// Nodes with this digest, any depth.
    std::vector<StateId> find_by_digest(std::uint64_t digest) const;

    nlohmann::json snapshot() const;

private:
    std::optional<StateId> match_child(const ActionNode& a, const StateKey& key) const;
    std::optional<StateId> match_depth(const StateKey& key, std::uint32_t depth) const;
    const std::vector<float>& embedding_of(StateId id) const;

    std::size_t n_q_;
    IdentityPolicy identity_;
    std::vector<StateNode> states_;
    std::vector<ActionNode> actions_;
    std::map<std::pair<std::uint64_t, std::uint32_t>, StateId> index_;
    std::map<std::uint64_t, std::vector<StateId>> by_digest_;
    std::map<std::uint32_t, std::vector<StateId>> by_depth_;
    mutable std::map<StateId, std::vector<float>> embeddings_;
};

double cosine_similarity(std::span<const float> a, std::span<const float> b);

}  // namespace planu
