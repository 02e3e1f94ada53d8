#pragma once

#include "planu/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace planu::envs {

struct StepResult {
    std::string state;
    double reward = 0.0;
    bool done = false;
};

/// Raised for actions outside an environment's action vocabulary.
class IllegalAction : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised for unparseable state, action or instance text.
class ParseError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Stochastic transition model D(s, a) -> (s', r, done) over text states.
///
/// step() is a pure function of (state, action, next RNG draw); reset(seed)
/// reseeds the internal stream, so identical seeds replay identical
/// trajectories.
class Environment {
public:
    virtual ~Environment() = default;

    virtual std::string id() const = 0;
    virtual std::string reset(std::uint64_t seed) = 0;
    virtual StepResult step(const std::string& state, const std::string& action) = 0;
    /// Nonempty for non-terminal states, empty for terminal ones.
    virtual std::vector<std::string> legal_actions(const std::string& state) const = 0;
    virtual bool is_terminal(const std::string& state) const = 0;
    /// True for states that count as task success.
    virtual bool is_success(const std::string& state) const = 0;
    virtual std::size_t max_steps() const = 0;
    virtual std::unique_ptr<Environment> clone() const = 0;
};

// ---------------------------------------------------------------------------

/// One-shot investment decision: buy_a pays `safe_reward` surely, buy_b pays
/// 1 with `profit_probability`, else 0.
class StockEnv final : public Environment {
public:
    static constexpr std::string_view initial_state = "portfolio: cash; options: buy_a buy_b";
    static constexpr std::string_view sold_a = "sold_a";
    static constexpr std::string_view sold_b_profit = "sold_b_profit";
    static constexpr std::string_view sold_b_zero = "sold_b_zero";

    explicit StockEnv(double profit_probability = 0.6, double safe_reward = 0.9);

    std::string id() const override { return "stock"; }
    std::string reset(std::uint64_t seed) override;
    StepResult step(const std::string& state, const std::string& action) override;
    std::vector<std::string> legal_actions(const std::string& state) const override;
    bool is_terminal(const std::string& state) const override;
    bool is_success(const std::string& state) const override;
    std::size_t max_steps() const override { return 1; }
    std::unique_ptr<Environment> clone() const override;

private:
    double profit_probability_;
    double safe_reward_;
    Rng rng_;
};

// ---------------------------------------------------------------------------

/// Block configuration. `below[x]` is the index of the block under x, or
/// table / held.
struct BlocksState {
    static constexpr int table = -1;
    static constexpr int held = -2;

    std::vector<int> below;

    bool holding_any() const;
    std::optional<int> held_block() const;
    bool clear(int x) const;
    friend bool operator==(const BlocksState&, const BlocksState&) = default;
};

enum class BlocksVerb { pickup, putdown, stack, unstack };

struct BlocksAction {
    BlocksVerb verb;
    int block = 0;
    int target = -1;  ///< second argument for stack/unstack
};

/// One ground fact of the goal conjunction.
struct BlocksFact {
    enum class Kind { on, ontable, clear, holding, handempty } kind;
    int a = -1;
    int b = -1;
};

struct BlocksworldInstance {
    std::string name;
    std::vector<std::string> blocks;
    BlocksState init;
    std::vector<BlocksFact> goal;
    std::size_t optimal_steps = 0;  ///< 0 when unknown

    int block_index(std::string_view name) const;  ///< -1 when absent
    bool goal_holds(const BlocksState& s) const;

    std::string format_state(const BlocksState& s) const;
    BlocksState parse_state(std::string_view text) const;
    BlocksAction parse_action(std::string_view text) const;
    std::string format_action(const BlocksAction& a) const;
    std::string format_goal() const;

    /// `blocks: ...` / `init: ...` / `goal: ...` text.
    std::string to_text() const;
    static BlocksworldInstance parse(std::string_view text);
    static BlocksworldInstance load(const std::filesystem::path& path);
};

bool preconditions_hold(const BlocksState& s, const BlocksAction& a);
/// Deterministic effect; requires preconditions_hold.
BlocksState apply_action(const BlocksState& s, const BlocksAction& a);
std::vector<BlocksAction> applicable_actions(const BlocksState& s);

/// Breadth-first optimal plan length to the goal (failure-free dynamics).
std::optional<std::size_t> optimal_plan_length(const BlocksworldInstance& instance, std::size_t limit = 32);

/// Instance whose optimal plan has exactly `steps` actions, built by walking
/// backward from a random goal configuration and verified by BFS.
BlocksworldInstance generate_instance(std::size_t steps, std::size_t n_blocks, Rng& rng);

class BlocksworldEnv final : public Environment {
public:
    BlocksworldEnv(BlocksworldInstance instance, double failure_rate = 0.2, std::size_t max_steps = 20);

    std::string id() const override { return "blocksworld"; }
    std::string reset(std::uint64_t seed) override;
    StepResult step(const std::string& state, const std::string& action) override;
    std::vector<std::string> legal_actions(const std::string& state) const override;
    bool is_terminal(const std::string& state) const override;
    bool is_success(const std::string& state) const override;
    std::size_t max_steps() const override { return max_steps_; }
    std::unique_ptr<Environment> clone() const override;

    const BlocksworldInstance& instance() const noexcept { return instance_; }
    double failure_rate() const noexcept { return failure_rate_; }

private:
    BlocksworldInstance instance_;
    double failure_rate_;
    std::size_t max_steps_;
    Rng rng_;
};

// ---------------------------------------------------------------------------

enum class OvercookedTask { tomato_salad, tomato_lettuce_salad };

std::string_view to_string(OvercookedTask task);
OvercookedTask parse_overcooked_task(std::string_view name);

/// Kitchen at macro-action granularity: each macro-action is one step.
class OvercookedLiteEnv final : public Environment {
public:
    enum class Status { raw, chopped, in_bowl };
    enum class Place { counter, hand, board, bowl };

    struct Ingredient {
        Status status = Status::raw;
        Place place = Place::counter;
        friend bool operator==(const Ingredient&, const Ingredient&) = default;
    };

    /// Fixed order: tomato, lettuce, onion.
    struct Kitchen {
        Ingredient items[3];
        bool bowl_in_hand = false;
        std::size_t step = 0;
        bool delivered = false;
        friend bool operator==(const Kitchen&, const Kitchen&) = default;
    };

    static constexpr double chop_reward = 0.2;
    static constexpr double delivery_reward = 1.0;
    static constexpr double wrong_delivery_penalty = -0.1;
    static constexpr double step_penalty = -0.001;

    explicit OvercookedLiteEnv(OvercookedTask task = OvercookedTask::tomato_salad, double chop_failure_rate = 0.2,
                               std::size_t max_steps = 200);

    std::string id() const override;
    std::string reset(std::uint64_t seed) override;
    StepResult step(const std::string& state, const std::string& action) override;
    std::vector<std::string> legal_actions(const std::string& state) const override;
    bool is_terminal(const std::string& state) const override;
    bool is_success(const std::string& state) const override;
    std::size_t max_steps() const override { return max_steps_; }
    std::unique_ptr<Environment> clone() const override;

    std::string format(const Kitchen& k) const;
    Kitchen parse(std::string_view text) const;
    /// Macro-actions available in this task.
    const std::vector<std::string>& macro_actions() const noexcept { return actions_; }

private:
    bool in_recipe(int item) const;
    bool in_task(int item) const;

    OvercookedTask task_;
    double chop_failure_rate_;
    std::size_t max_steps_;
    std::vector<std::string> actions_;
    Rng rng_;
};

// ---------------------------------------------------------------------------

/// Replaces each stochastic transition with the most frequent of k inner
/// draws (first occurrence wins ties).
class ModeOutcomeEnv final : public Environment {
public:
    ModeOutcomeEnv(std::unique_ptr<Environment> inner, std::size_t samples);

    std::string id() const override { return inner_->id(); }
    std::string reset(std::uint64_t seed) override { return inner_->reset(seed); }
    StepResult step(const std::string& state, const std::string& action) override;
    std::vector<std::string> legal_actions(const std::string& state) const override
    {
        return inner_->legal_actions(state);
    }
    bool is_terminal(const std::string& state) const override { return inner_->is_terminal(state); }
    bool is_success(const std::string& state) const override { return inner_->is_success(state); }
    std::size_t max_steps() const override { return inner_->max_steps(); }
    std::unique_ptr<Environment> clone() const override;

    std::size_t samples() const noexcept { return samples_; }

private:
    std::unique_ptr<Environment> inner_;
    std::size_t samples_;
};

std::unique_ptr<Environment> deterministicize(std::unique_ptr<Environment> env, std::size_t samples);

}  // namespace planu::envs
