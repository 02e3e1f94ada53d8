#include "planu/envs.hpp"

#include <string>
#include <utility>

namespace planu::envs {

StockEnv::StockEnv(double profit_probability, double safe_reward)
    : profit_probability_(profit_probability), safe_reward_(safe_reward)
{
    if (!(profit_probability_ >= 0.0 && profit_probability_ <= 1.0))
        throw std::invalid_argument("stock profit probability must lie in [0, 1]");
}

std::string StockEnv::reset(std::uint64_t seed)
{
    rng_ = Rng(seed);
    return std::string(initial_state);
}

StepResult StockEnv::step(const std::string& state, const std::string& action)
{
    if (state != initial_state)
        throw IllegalAction("stock: no decision left in state '" + state + "'");
    if (action == "buy_a")
        return {std::string(sold_a), safe_reward_, true};
    if (action == "buy_b") {
        if (rng_.bernoulli(profit_probability_))
            return {std::string(sold_b_profit), 1.0, true};
        return {std::string(sold_b_zero), 0.0, true};
    }
    throw IllegalAction("stock: unknown action '" + action + "'");
}

std::vector<std::string> StockEnv::legal_actions(const std::string& state) const
{
    if (state == initial_state)
        return {"buy_a", "buy_b"};
    return {};
}

bool StockEnv::is_terminal(const std::string& state) const
{
    return state != initial_state;
}

bool StockEnv::is_success(const std::string& state) const
{
    return state == sold_a;
}

std::unique_ptr<Environment> StockEnv::clone() const
{
    return std::make_unique<StockEnv>(*this);
}

// ---------------------------------------------------------------------------

ModeOutcomeEnv::ModeOutcomeEnv(std::unique_ptr<Environment> inner, std::size_t samples)
    : inner_(std::move(inner)), samples_(samples)
{
    if (!inner_)
        throw std::invalid_argument("mode-outcome wrapper needs an inner environment");
    if (samples_ < 1 || samples_ % 2 == 0)
        throw std::invalid_argument("mode-outcome sample count must be a positive odd number");
}

StepResult ModeOutcomeEnv::step(const std::string& state, const std::string& action)
{
    std::vector<StepResult> seen;
    std::vector<std::size_t> counts;
    for (std::size_t k = 0; k < samples_; ++k) {
        StepResult r = inner_->step(state, action);
        std::size_t i = 0;
        while (i < seen.size() && seen[i].state != r.state)
            ++i;
        if (i == seen.size()) {
            seen.push_back(std::move(r));
            counts.push_back(0);
        }
        ++counts[i];
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < seen.size(); ++i)
        if (counts[i] > counts[best])
            best = i;
    return seen[best];
}

std::unique_ptr<Environment> ModeOutcomeEnv::clone() const
{
    return std::make_unique<ModeOutcomeEnv>(inner_->clone(), samples_);
}

std::unique_ptr<Environment> deterministicize(std::unique_ptr<Environment> env, std::size_t samples)
{
    return std::make_unique<ModeOutcomeEnv>(std::move(env), samples);
}

}  // namespace planu::envs
