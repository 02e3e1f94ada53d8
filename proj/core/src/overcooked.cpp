#include "planu/envs.hpp"

#include <array>
#include <cctype>
#include <sstream>

namespace planu::envs {

namespace {

constexpr std::array<std::string_view, 3> item_names = {"tomato", "lettuce", "onion"};

std::string_view status_name(OvercookedLiteEnv::Status s)
{
    switch (s) {
    case OvercookedLiteEnv::Status::raw: return "raw";
    case OvercookedLiteEnv::Status::chopped: return "chopped";
    case OvercookedLiteEnv::Status::in_bowl: return "in_bowl";
    }
    return "?";
}

std::string_view place_name(OvercookedLiteEnv::Place p)
{
    switch (p) {
    case OvercookedLiteEnv::Place::counter: return "counter";
    case OvercookedLiteEnv::Place::hand: return "hand";
    case OvercookedLiteEnv::Place::board: return "board";
    case OvercookedLiteEnv::Place::bowl: return "bowl";
    }
    return "?";
}

std::string canonical_action(std::string_view text)
{
    std::string out;
    for (char c : text)
        if (std::isalnum(static_cast<unsigned char>(c)))
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

}  // namespace

std::string_view to_string(OvercookedTask task)
{
    return task == OvercookedTask::tomato_salad ? "tomato_salad" : "tomato_lettuce_salad";
}

OvercookedTask parse_overcooked_task(std::string_view name)
{
    if (name == "tomato_salad")
        return OvercookedTask::tomato_salad;
    if (name == "tomato_lettuce_salad")
        return OvercookedTask::tomato_lettuce_salad;
    throw std::invalid_argument("unknown overcooked task '" + std::string(name) + "'");
}

OvercookedLiteEnv::OvercookedLiteEnv(OvercookedTask task, double chop_failure_rate, std::size_t max_steps)
    : task_(task), chop_failure_rate_(chop_failure_rate), max_steps_(max_steps)
{
    if (!(chop_failure_rate_ >= 0.0 && chop_failure_rate_ <= 1.0))
        throw std::invalid_argument("chop failure rate must lie in [0, 1]");
    if (max_steps_ == 0)
        throw std::invalid_argument("max_steps must be positive");
    actions_ = {"Get-Tomato"};
    if (task_ == OvercookedTask::tomato_lettuce_salad)
        actions_.insert(actions_.end(), {"Get-Lettuce", "Get-Onion"});
    actions_.insert(actions_.end(), {"Get-Bowl", "Go-Cutting-Board", "Chop", "Deliver"});
}

std::string OvercookedLiteEnv::id() const
{
    return "overcooked:" + std::string(to_string(task_));
}

bool OvercookedLiteEnv::in_recipe(int item) const
{
    return item == 0 || (item == 1 && task_ == OvercookedTask::tomato_lettuce_salad);
}

bool OvercookedLiteEnv::in_task(int item) const
{
    return item == 0 || task_ == OvercookedTask::tomato_lettuce_salad;
}

std::string OvercookedLiteEnv::format(const Kitchen& k) const
{
    std::string out = "step " + std::to_string(k.step) + ";";
    for (int i = 0; i < 3; ++i) {
        if (!in_task(i))
            continue;
        out += " " + std::string(item_names[static_cast<std::size_t>(i)]) + " " +
               std::string(status_name(k.items[i].status)) + "@" + std::string(place_name(k.items[i].place)) + ";";
    }
    out += std::string(" bowl ") + (k.bowl_in_hand ? "hand" : "counter") + ";";
    out += std::string(" delivered ") + (k.delivered ? "yes" : "no");
    return out;
}

OvercookedLiteEnv::Kitchen OvercookedLiteEnv::parse(std::string_view text) const
{
    Kitchen k;
    bool seen[3] = {false, false, false};
    bool seen_step = false, seen_bowl = false, seen_delivered = false;
    std::istringstream in{std::string(text)};
    std::string field;
    auto fail = [&](const std::string& why) {
        throw ParseError("overcooked state '" + std::string(text) + "': " + why);
    };
    while (std::getline(in, field, ';')) {
        std::istringstream f(field);
        std::string key, value, extra;
        if (!(f >> key))
            continue;
        if (!(f >> value) || (f >> extra))
            fail("malformed field '" + field + "'");
        if (key == "step") {
            try {
                std::size_t used = 0;
                k.step = std::stoul(value, &used);
                if (used != value.size())
                    fail("bad step counter");
            } catch (const std::logic_error&) {
                fail("bad step counter");
            }
            seen_step = true;
        } else if (key == "bowl") {
            if (value != "hand" && value != "counter")
                fail("bad bowl location");
            k.bowl_in_hand = value == "hand";
            seen_bowl = true;
        } else if (key == "delivered") {
            if (value != "yes" && value != "no")
                fail("bad delivered flag");
            k.delivered = value == "yes";
            seen_delivered = true;
        } else {
            int idx = -1;
            for (int i = 0; i < 3; ++i)
                if (key == item_names[static_cast<std::size_t>(i)])
                    idx = i;
            if (idx < 0 || !in_task(idx) || seen[idx])
                fail("unexpected field '" + key + "'");
            const auto at = value.find('@');
            if (at == std::string::npos)
                fail("expected status@place for " + key);
            const std::string status = value.substr(0, at), place = value.substr(at + 1);
            Ingredient& ing = k.items[idx];
            if (status == "raw")
                ing.status = Status::raw;
            else if (status == "chopped")
                ing.status = Status::chopped;
            else if (status == "in_bowl")
                ing.status = Status::in_bowl;
            else
                fail("bad status '" + status + "'");
            if (place == "counter")
                ing.place = Place::counter;
            else if (place == "hand")
                ing.place = Place::hand;
            else if (place == "board")
                ing.place = Place::board;
            else if (place == "bowl")
                ing.place = Place::bowl;
            else
                fail("bad place '" + place + "'");
            if ((ing.status == Status::in_bowl) != (ing.place == Place::bowl))
                fail("in_bowl status and bowl place must agree");
            seen[idx] = true;
        }
    }
    if (!seen_step || !seen_bowl || !seen_delivered)
        fail("missing field");
    int in_hand = k.bowl_in_hand ? 1 : 0;
    for (int i = 0; i < 3; ++i) {
        if (in_task(i) && !seen[i])
            fail("missing ingredient " + std::string(item_names[static_cast<std::size_t>(i)]));
        if (k.items[i].place == Place::hand)
            ++in_hand;
    }
    if (in_hand > 1)
        fail("hand holds more than one thing");
    return k;
}

std::string OvercookedLiteEnv::reset(std::uint64_t seed)
{
    rng_ = Rng(seed);
    return format(Kitchen{});
}

StepResult OvercookedLiteEnv::step(const std::string& state, const std::string& action)
{
    Kitchen k = parse(state);
    const std::string verb = canonical_action(action);
    bool known = false;
    for (const auto& a : actions_)
        known = known || canonical_action(a) == verb;
    if (!known)
        throw IllegalAction("overcooked: unknown action '" + action + "'");
    if (k.delivered || k.step >= max_steps_)
        throw IllegalAction("overcooked: episode already over");

    double reward = step_penalty;
    auto held_item = [&]() -> int {
        for (int i = 0; i < 3; ++i)
            if (k.items[i].place == Place::hand)
                return i;
        return -1;
    };
    const bool hand_empty = held_item() < 0 && !k.bowl_in_hand;

    if (verb.rfind("get", 0) == 0 && verb != "getbowl") {
        const std::string name = verb.substr(3);
        for (int i = 0; i < 3; ++i)
            if (name == item_names[static_cast<std::size_t>(i)] && hand_empty &&
                k.items[i].place == Place::counter)
                k.items[i].place = Place::hand;
    } else if (verb == "getbowl") {
        if (hand_empty)
            k.bowl_in_hand = true;
    } else if (verb == "gocuttingboard") {
        if (const int h = held_item(); h >= 0) {
            k.items[h].place = Place::board;
        } else if (k.bowl_in_hand) {
            for (auto& ing : k.items)
                if (ing.place == Place::board && ing.status == Status::chopped)
                    ing = {Status::in_bowl, Place::bowl};
        }
    } else if (verb == "chop") {
        for (int i = 0; i < 3; ++i) {
            if (k.items[i].place == Place::board && k.items[i].status == Status::raw) {
                if (!rng_.bernoulli(chop_failure_rate_)) {
                    k.items[i].status = Status::chopped;
                    if (in_recipe(i))
                        reward += chop_reward;
                }
                break;
            }
        }
    } else if (verb == "deliver") {
        if (k.bowl_in_hand) {
            bool correct = true, any = false;
            for (int i = 0; i < 3; ++i) {
                const bool in_bowl = k.items[i].place == Place::bowl;
                any = any || in_bowl;
                correct = correct && in_bowl == in_recipe(i);
            }
            if (correct) {
                k.delivered = true;
                reward += delivery_reward;
            } else if (any) {
                reward += wrong_delivery_penalty;
                for (auto& ing : k.items)
                    if (ing.place == Place::bowl)
                        ing = {Status::raw, Place::counter};
                k.bowl_in_hand = false;
            }
        } else if (const int h = held_item(); h >= 0) {
            reward += wrong_delivery_penalty;
            k.items[h] = {Status::raw, Place::counter};
        }
    }
    ++k.step;
    const bool done = k.delivered || k.step >= max_steps_;
    return {format(k), reward, done};
}

std::vector<std::string> OvercookedLiteEnv::legal_actions(const std::string& state) const
{
    if (is_terminal(state))
        return {};
    return actions_;
}

bool OvercookedLiteEnv::is_terminal(const std::string& state) const
{
    const Kitchen k = parse(state);
    return k.delivered || k.step >= max_steps_;
}

bool OvercookedLiteEnv::is_success(const std::string& state) const
{
    return parse(state).delivered;
}

std::unique_ptr<Environment> OvercookedLiteEnv::clone() const
{
    return std::make_unique<OvercookedLiteEnv>(*this);
}

}  // namespace planu::envs
