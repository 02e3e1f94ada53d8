#include "planu/tree.hpp"

#include "planu/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

namespace planu {

StateKey make_state_key(std::string_view text)
{
    StateKey key;
    key.canonical.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !key.canonical.empty();
            continue;
        }
        if (pending_space) {
            key.canonical.push_back(' ');
            pending_space = false;
        }
        key.canonical.push_back(c);
    }
    key.digest = fnv1a64(key.canonical);
    return key;
}

std::string StateKey::hex() const
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
    return buf;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b)
{
    if (a.size() != b.size())
        throw std::invalid_argument("cosine_similarity: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0)
        return na == nb ? 1.0 : 0.0;
    return dot / std::sqrt(na * nb);
}

SearchTree::SearchTree(std::size_t n_q, IdentityPolicy identity)
    : n_q_(n_q), identity_(std::move(identity))
{
    if (n_q_ < 1)
        throw std::invalid_argument("n_q must be at least 1");
}

StateId SearchTree::add_root(std::string_view state_text, bool terminal)
{
    if (!states_.empty())
        throw std::logic_error("search tree already has a root");
    StateNode node;
    node.key = make_state_key(state_text);
    node.is_terminal = terminal;
    states_.push_back(std::move(node));
    index_[{states_[0].key.digest, 0}] = 0;
    by_digest_[states_[0].key.digest].push_back(0);
    by_depth_[0].push_back(0);
    return 0;
}

StateId SearchTree::root() const
{
    if (states_.empty())
        throw TreeError(TreeError::Kind::unknown_node, "search tree has no root");
    return 0;
}

const StateNode& SearchTree::state(StateId id) const
{
    if (id >= states_.size())
        throw TreeError(TreeError::Kind::unknown_node, "unknown state node " + std::to_string(id));
    return states_[id];
}

const ActionNode& SearchTree::action(ActionId id) const
{
    if (id >= actions_.size())
        throw TreeError(TreeError::Kind::unknown_node, "unknown action node " + std::to_string(id));
    return actions_[id];
}

std::vector<ActionId> SearchTree::expand(StateId s, std::span<const Proposal> proposals)
{
    const StateNode& node = state(s);
    if (node.is_terminal)
        throw TreeError(TreeError::Kind::expand_on_terminal, "cannot expand terminal state '" + node.key.canonical + "'");
    if (!node.actions.empty())
        throw TreeError(TreeError::Kind::expand_on_expanded, "state '" + node.key.canonical + "' is already expanded");
    if (proposals.empty())
        throw TreeError(TreeError::Kind::empty_proposals, "expansion needs at least one proposal");

    std::vector<ActionId> created;
    created.reserve(proposals.size());
    for (const Proposal& p : proposals) {
        ActionNode a{.action_text = p.action,
                     .prior = p.prior,
                     .z = QuantileDistribution::from_prior(p.prior, n_q_),
                     .scalar = p.prior,
                     .visits = 0,
                     .children = {},
                     .parent = s};
        created.push_back(static_cast<ActionId>(actions_.size()));
        actions_.push_back(std::move(a));
    }
    states_[s].actions = created;
    return created;
}

const std::vector<float>& SearchTree::embedding_of(StateId id) const
{
    auto it = embeddings_.find(id);
    if (it == embeddings_.end())
        it = embeddings_.emplace(id, identity_.embed(states_[id].key.canonical)).first;
    return it->second;
}

std::optional<StateId> SearchTree::match_child(const ActionNode& a, const StateKey& key) const
{
    for (const Outcome& o : a.children)
        if (o.digest == key.digest && states_[o.state].key == key)
            return o.state;
    if (identity_.exact())
        return std::nullopt;
    const std::vector<float> probe = identity_.embed(key.canonical);
    for (const Outcome& o : a.children)
        if (cosine_similarity(probe, embedding_of(o.state)) >= identity_.threshold)
            return o.state;
    return std::nullopt;
}

std::optional<StateId> SearchTree::match_depth(const StateKey& key, std::uint32_t depth) const
{
    if (auto it = index_.find({key.digest, depth}); it != index_.end() && states_[it->second].key == key)
        return it->second;
    if (identity_.exact())
        return std::nullopt;
    auto level = by_depth_.find(depth);
    if (level == by_depth_.end())
        return std::nullopt;
    const std::vector<float> probe = identity_.embed(key.canonical);
    for (StateId id : level->second)
        if (cosine_similarity(probe, embedding_of(id)) >= identity_.threshold)
            return id;
    return std::nullopt;
}

StateId SearchTree::attach_outcome(ActionId a, std::string_view next_state, std::uint32_t depth,
                                   double reward, bool done)
{
    if (a >= actions_.size())
        throw TreeError(TreeError::Kind::unknown_node, "unknown action node " + std::to_string(a));
    StateKey key = make_state_key(next_state);

    if (auto existing = match_child(actions_[a], key)) {
        for (Outcome& o : actions_[a].children) {
            if (o.state == *existing) {
                ++o.count;
                o.reward = reward;
                o.done = o.done || done;
            }
        }
        if (done)
            states_[*existing].is_terminal = states_[*existing].actions.empty();
        return *existing;
    }

    StateId id;
    if (auto shared = match_depth(key, depth)) {
        id = *shared;
    } else {
        id = static_cast<StateId>(states_.size());
        StateNode node;
        node.key = key;
        node.depth = depth;
        node.parent = a;
        states_.push_back(std::move(node));
        index_[{key.digest, depth}] = id;
        by_digest_[key.digest].push_back(id);
        by_depth_[depth].push_back(id);
    }
    if (done && states_[id].actions.empty())
        states_[id].is_terminal = true;
    actions_[a].children.push_back(Outcome{key.digest, id, reward, done, 1});
    return id;
}

void SearchTree::mark_terminal(StateId s)
{
    StateNode& node = states_.at(s);
    if (!node.actions.empty())
        throw TreeError(TreeError::Kind::expand_on_expanded, "expanded state cannot become terminal");
    node.is_terminal = true;
}

double SearchTree::value(ActionId a, const ScoringRule& rule) const
{
    const ActionNode& node = action(a);
    return rule.value == ValueModel::quantile ? collapse(node.z, rule.psi) : node.scalar;
}

double SearchTree::score(ActionId a, double novelty, double parent_visits, const ScoringRule& rule) const
{
    const ActionNode& node = action(a);
    const double n = std::max<double>(static_cast<double>(node.visits), 1.0);
    double bonus = 0.0;
    switch (rule.exploration) {
    case ExplorationTerm::curiosity:
        bonus = rule.c1 * novelty / n;
        break;
    case ExplorationTerm::uct:
        bonus = rule.c1 * std::sqrt(std::log(std::max(parent_visits, 1.0)) / n);
        break;
    }
    return value(a, rule) + bonus;
}

ActionId SearchTree::select_action(StateId s, double novelty, const ScoringRule& rule) const
{
    const StateNode& node = state(s);
    if (node.actions.empty())
        throw TreeError(TreeError::Kind::empty_children, "state '" + node.key.canonical + "' has no action children");

    double parent_visits = 0.0;
    for (ActionId a : node.actions)
        parent_visits += static_cast<double>(actions_[a].visits);

    // r/N is unbounded at N = 0: an unvisited child outranks every visited one.
    const double numerator = rule.exploration == ExplorationTerm::curiosity ? rule.c1 * novelty : rule.c1;
    if (rule.unvisited_first && numerator > 0.0) {
        std::optional<ActionId> fresh;
        for (ActionId a : node.actions) {
            if (actions_[a].visits == 0 && (!fresh || value(a, rule) > value(*fresh, rule)))
                fresh = a;
        }
        if (fresh)
            return *fresh;
    }

    ActionId best = node.actions.front();
    double best_score = score(best, novelty, parent_visits, rule);
    for (std::size_t i = 1; i < node.actions.size(); ++i) {
        const double sc = score(node.actions[i], novelty, parent_visits, rule);
        if (sc > best_score) {
            best_score = sc;
            best = node.actions[i];
        }
    }
    return best;
}

void SearchTree::backpropagate(std::span<const PathStep> path, const BackupRule& rule)
{
    if (path.empty())
        throw TreeError(TreeError::Kind::invalid_path, "back-propagation needs a nonempty path");

    for (std::size_t t = 0; t < path.size(); ++t) {
        const PathStep& step = path[t];
        if (step.state >= states_.size() || step.action >= actions_.size() || step.next_state >= states_.size())
            throw TreeError(TreeError::Kind::invalid_path, "path references unknown node at step " + std::to_string(t));
        const ActionNode& a = actions_[step.action];
        if (a.parent != step.state)
            throw TreeError(TreeError::Kind::invalid_path, "action is not a child of its state at step " + std::to_string(t));
        const bool linked = std::any_of(a.children.begin(), a.children.end(),
                                        [&](const Outcome& o) { return o.state == step.next_state; });
        if (!linked)
            throw TreeError(TreeError::Kind::invalid_path, "next state is not an outcome of the action at step " + std::to_string(t));
        if (t + 1 < path.size() && path[t + 1].state != step.next_state)
            throw TreeError(TreeError::Kind::invalid_path, "path is not parent-linked at step " + std::to_string(t));
    }

    std::vector<double> targets;
    for (std::size_t k = path.size(); k-- > 0;) {
        const PathStep& step = path[k];
        ActionNode& a = actions_[step.action];
        ++a.visits;

        if (rule.value == ValueModel::quantile) {
            targets.clear();
            if (k + 1 == path.size()) {
                targets.push_back(step.reward);
            } else {
                const ActionNode& successor = actions_[path[k + 1].action];
                for (double theta : successor.z.values())
                    targets.push_back(step.reward + rule.gamma * theta);
            }
            a.z = qr_update(a.z, targets, rule.step, rule.kappa);
        } else {
            double target = step.reward;
            if (k + 1 < path.size())
                target += rule.gamma * actions_[path[k + 1].action].scalar;
            a.scalar += (target - a.scalar) / static_cast<double>(a.visits);
        }
        ++states_[step.state].visits;
    }
    ++states_[path.back().next_state].visits;
}

std::vector<StateId> SearchTree::find_by_digest(std::uint64_t digest) const
{
    auto it = by_digest_.find(digest);
    return it == by_digest_.end() ? std::vector<StateId>{} : it->second;
}

nlohmann::json SearchTree::snapshot() const
{
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t i = 0; i < states_.size(); ++i) {
        const StateNode& s = states_[i];
        nlohmann::json children = nlohmann::json::array();
        for (ActionId a : s.actions)
            children.push_back("a" + std::to_string(a));
        nodes.push_back({{"id", "s" + std::to_string(i)},
                         {"kind", "state"},
                         {"digest", s.key.hex()},
                         {"text", s.key.canonical},
                         {"depth", s.depth},
                         {"terminal", s.is_terminal},
                         {"N", s.visits},
                         {"children", std::move(children)}});
    }
    for (std::size_t i = 0; i < actions_.size(); ++i) {
        const ActionNode& a = actions_[i];
        nlohmann::json children = nlohmann::json::array();
        for (const Outcome& o : a.children)
            children.push_back("s" + std::to_string(o.state));
        nodes.push_back({{"id", "a" + std::to_string(i)},
                         {"kind", "action"},
                         {"action", a.action_text},
                         {"prior", a.prior},
                         {"mean", a.z.mean()},
                         {"scalar", a.scalar},
                         {"N", a.visits},
                         {"children", std::move(children)}});
    }
    return {{"schema_version", 1}, {"n_q", n_q_}, {"root", states_.empty() ? "" : "s0"}, {"nodes", std::move(nodes)}};
}

}  // namespace planu
