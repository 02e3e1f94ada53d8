#include "planu/envs.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

namespace planu::envs {

namespace {

constexpr int unknown_location = -3;

const std::vector<std::string> block_names = {"red",   "blue",  "orange", "yellow", "white",
                                              "green", "black", "purple", "cyan",   "pink"};

std::string lowercase(std::string_view text)
{
    std::string out;
    out.reserve(text.size());
    for (char c : text)
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

std::string trim(std::string_view text)
{
    std::size_t b = 0, e = text.size();
    while (b < e && std::isspace(static_cast<unsigned char>(text[b])))
        ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1])))
        --e;
    return std::string(text.substr(b, e - b));
}

std::vector<std::string> split_ws(std::string_view text)
{
    std::vector<std::string> out;
    std::istringstream in{std::string(text)};
    std::string tok;
    while (in >> tok)
        out.push_back(tok);
    return out;
}

/// "name(a,b)" -> {"name", {"a","b"}}; "handempty" -> {"handempty", {}}.
std::pair<std::string, std::vector<std::string>> split_term(std::string_view raw)
{
    std::string text;
    for (char c : raw)
        if (!std::isspace(static_cast<unsigned char>(c)))
            text.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    const auto open = text.find('(');
    if (open == std::string::npos) {
        if (text.empty() || text.find(')') != std::string::npos || text.find(',') != std::string::npos)
            throw ParseError("malformed term '" + std::string(raw) + "'");
        return {text, {}};
    }
    if (text.back() != ')' || open == 0)
        throw ParseError("malformed term '" + std::string(raw) + "'");
    std::vector<std::string> args;
    std::string inner = text.substr(open + 1, text.size() - open - 2);
    std::size_t start = 0;
    while (true) {
        const auto comma = inner.find(',', start);
        std::string arg = inner.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (arg.empty() || arg.find_first_of("()") != std::string::npos)
            throw ParseError("malformed term '" + std::string(raw) + "'");
        args.push_back(arg);
        if (comma == std::string::npos)
            break;
        start = comma + 1;
    }
    return {text.substr(0, open), args};
}

std::string state_key(const BlocksState& s)
{
    return std::string(s.below.begin(), s.below.end());
}

}  // namespace

// ---------------------------------------------------------------------------

bool BlocksState::holding_any() const
{
    return held_block().has_value();
}

std::optional<int> BlocksState::held_block() const
{
    for (std::size_t i = 0; i < below.size(); ++i)
        if (below[i] == held)
            return static_cast<int>(i);
    return std::nullopt;
}

bool BlocksState::clear(int x) const
{
    if (below[static_cast<std::size_t>(x)] == held)
        return false;
    return std::none_of(below.begin(), below.end(), [x](int b) { return b == x; });
}

bool preconditions_hold(const BlocksState& s, const BlocksAction& a)
{
    const auto n = static_cast<int>(s.below.size());
    if (a.block < 0 || a.block >= n)
        return false;
    const int where = s.below[static_cast<std::size_t>(a.block)];
    switch (a.verb) {
    case BlocksVerb::pickup:
        return !s.holding_any() && where == BlocksState::table && s.clear(a.block);
    case BlocksVerb::putdown:
        return where == BlocksState::held;
    case BlocksVerb::stack:
        return a.target >= 0 && a.target < n && a.target != a.block && where == BlocksState::held &&
               s.clear(a.target);
    case BlocksVerb::unstack:
        return a.target >= 0 && a.target < n && !s.holding_any() && where == a.target && s.clear(a.block);
    }
    return false;
}

BlocksState apply_action(const BlocksState& s, const BlocksAction& a)
{
    BlocksState next = s;
    auto& slot = next.below[static_cast<std::size_t>(a.block)];
    switch (a.verb) {
    case BlocksVerb::pickup:
    case BlocksVerb::unstack:
        slot = BlocksState::held;
        break;
    case BlocksVerb::putdown:
        slot = BlocksState::table;
        break;
    case BlocksVerb::stack:
        slot = a.target;
        break;
    }
    return next;
}

std::vector<BlocksAction> applicable_actions(const BlocksState& s)
{
    std::vector<BlocksAction> out;
    const auto n = static_cast<int>(s.below.size());
    if (auto h = s.held_block()) {
        out.push_back({BlocksVerb::putdown, *h, -1});
        for (int y = 0; y < n; ++y)
            if (y != *h && s.clear(y))
                out.push_back({BlocksVerb::stack, *h, y});
        return out;
    }
    for (int x = 0; x < n; ++x) {
        if (!s.clear(x))
            continue;
        const int where = s.below[static_cast<std::size_t>(x)];
        if (where == BlocksState::table)
            out.push_back({BlocksVerb::pickup, x, -1});
        else
            out.push_back({BlocksVerb::unstack, x, where});
    }
    return out;
}

// ---------------------------------------------------------------------------

int BlocksworldInstance::block_index(std::string_view name) const
{
    const std::string key = lowercase(name);
    for (std::size_t i = 0; i < blocks.size(); ++i)
        if (blocks[i] == key)
            return static_cast<int>(i);
    return -1;
}

bool BlocksworldInstance::goal_holds(const BlocksState& s) const
{
    for (const BlocksFact& f : goal) {
        switch (f.kind) {
        case BlocksFact::Kind::on:
            if (s.below[static_cast<std::size_t>(f.a)] != f.b)
                return false;
            break;
        case BlocksFact::Kind::ontable:
            if (s.below[static_cast<std::size_t>(f.a)] != BlocksState::table)
                return false;
            break;
        case BlocksFact::Kind::clear:
            if (!s.clear(f.a))
                return false;
            break;
        case BlocksFact::Kind::holding:
            if (s.below[static_cast<std::size_t>(f.a)] != BlocksState::held)
                return false;
            break;
        case BlocksFact::Kind::handempty:
            if (s.holding_any())
                return false;
            break;
        }
    }
    return true;
}

std::string BlocksworldInstance::format_state(const BlocksState& s) const
{
    std::vector<std::string> facts;
    const auto n = static_cast<int>(blocks.size());
    bool holding = false;
    for (int x = 0; x < n; ++x) {
        const int where = s.below[static_cast<std::size_t>(x)];
        const std::string& name = blocks[static_cast<std::size_t>(x)];
        if (where == BlocksState::held) {
            facts.push_back("holding(" + name + ")");
            holding = true;
        } else if (where == BlocksState::table) {
            facts.push_back("ontable(" + name + ")");
        } else {
            facts.push_back("on(" + name + "," + blocks[static_cast<std::size_t>(where)] + ")");
        }
        if (s.clear(x))
            facts.push_back("clear(" + name + ")");
    }
    if (!holding)
        facts.push_back("handempty");
    std::sort(facts.begin(), facts.end());
    std::string out;
    for (const auto& f : facts) {
        if (!out.empty())
            out.push_back(' ');
        out += f;
    }
    return out;
}

namespace {

struct ParsedFacts {
    BlocksState state;
    std::vector<int> clear_listed;
    bool handempty = false;
};

BlocksFact parse_fact(const BlocksworldInstance& inst, std::string_view token)
{
    auto [name, args] = split_term(token);
    auto arg = [&](std::size_t i) {
        const int idx = inst.block_index(args[i]);
        if (idx < 0)
            throw ParseError("unknown block '" + args[i] + "' in fact '" + std::string(token) + "'");
        return idx;
    };
    auto arity = [&](std::size_t k) {
        if (args.size() != k)
            throw ParseError("fact '" + std::string(token) + "' has the wrong number of arguments");
    };
    if (name == "on") {
        arity(2);
        return {BlocksFact::Kind::on, arg(0), arg(1)};
    }
    if (name == "ontable") {
        arity(1);
        return {BlocksFact::Kind::ontable, arg(0), -1};
    }
    if (name == "clear") {
        arity(1);
        return {BlocksFact::Kind::clear, arg(0), -1};
    }
    if (name == "holding") {
        arity(1);
        return {BlocksFact::Kind::holding, arg(0), -1};
    }
    if (name == "handempty") {
        arity(0);
        return {BlocksFact::Kind::handempty, -1, -1};
    }
    throw ParseError("unknown predicate '" + name + "'");
}

BlocksState facts_to_state(const BlocksworldInstance& inst, std::string_view text)
{
    BlocksState s;
    s.below.assign(inst.blocks.size(), unknown_location);
    std::vector<int> clear_listed;
    bool handempty = false;
    bool any_clear = false;
    for (const std::string& tok : split_ws(text)) {
        const BlocksFact f = parse_fact(inst, tok);
        auto place = [&](int x, int where) {
            auto& slot = s.below[static_cast<std::size_t>(x)];
            if (slot != unknown_location && slot != where)
                throw ParseError("block '" + inst.blocks[static_cast<std::size_t>(x)] + "' has two locations");
            slot = where;
        };
        switch (f.kind) {
        case BlocksFact::Kind::on:
            if (f.a == f.b)
                throw ParseError("a block cannot be on itself");
            place(f.a, f.b);
            break;
        case BlocksFact::Kind::ontable: place(f.a, BlocksState::table); break;
        case BlocksFact::Kind::holding: place(f.a, BlocksState::held); break;
        case BlocksFact::Kind::clear:
            clear_listed.push_back(f.a);
            any_clear = true;
            break;
        case BlocksFact::Kind::handempty: handempty = true; break;
        }
    }
    for (std::size_t i = 0; i < s.below.size(); ++i)
        if (s.below[i] == unknown_location)
            throw ParseError("block '" + inst.blocks[i] + "' has no location");

    int held_count = 0;
    std::vector<int> supported(s.below.size(), 0);
    for (int b : s.below) {
        if (b == BlocksState::held)
            ++held_count;
        else if (b >= 0 && ++supported[static_cast<std::size_t>(b)] > 1)
            throw ParseError("two blocks on the same block");
    }
    if (held_count > 1)
        throw ParseError("more than one block is held");
    if (handempty && held_count == 1)
        throw ParseError("handempty contradicts holding");
    for (std::size_t i = 0; i < s.below.size(); ++i) {
        // no cycles: walking down must reach the table or the hand
        int cur = static_cast<int>(i);
        for (std::size_t guard = 0; cur >= 0; ++guard) {
            if (guard > s.below.size())
                throw ParseError("cyclic on() relation");
            cur = s.below[static_cast<std::size_t>(cur)];
        }
        if (s.below[i] >= 0 && s.below[static_cast<std::size_t>(s.below[i])] == BlocksState::held)
            throw ParseError("a block cannot rest on a held block");
    }
    if (any_clear) {
        std::set<int> listed(clear_listed.begin(), clear_listed.end());
        for (int x = 0; x < static_cast<int>(s.below.size()); ++x)
            if (s.clear(x) != listed.contains(x))
                throw ParseError("clear(" + inst.blocks[static_cast<std::size_t>(x)] +
                                 ") is inconsistent with the stacking relation");
    }
    return s;
}

}  // namespace

BlocksState BlocksworldInstance::parse_state(std::string_view text) const
{
    return facts_to_state(*this, text);
}

BlocksAction BlocksworldInstance::parse_action(std::string_view text) const
{
    auto [verb_raw, args] = split_term(text);
    std::string verb;
    for (char c : verb_raw)
        if (c != '-' && c != '_')
            verb.push_back(c);
    BlocksAction a{};
    std::size_t arity = 1;
    if (verb == "pickup")
        a.verb = BlocksVerb::pickup;
    else if (verb == "putdown" || verb == "put")
        a.verb = BlocksVerb::putdown;
    else if (verb == "stack")
        a.verb = BlocksVerb::stack, arity = 2;
    else if (verb == "unstack")
        a.verb = BlocksVerb::unstack, arity = 2;
    else
        throw ParseError("unknown blocksworld action '" + std::string(text) + "'");
    if (args.size() != arity)
        throw ParseError("action '" + std::string(text) + "' has the wrong number of arguments");
    a.block = block_index(args[0]);
    if (a.block < 0)
        throw ParseError("unknown block '" + args[0] + "'");
    if (arity == 2) {
        a.target = block_index(args[1]);
        if (a.target < 0)
            throw ParseError("unknown block '" + args[1] + "'");
    }
    return a;
}

std::string BlocksworldInstance::format_action(const BlocksAction& a) const
{
    const std::string& x = blocks[static_cast<std::size_t>(a.block)];
    switch (a.verb) {
    case BlocksVerb::pickup: return "pickup(" + x + ")";
    case BlocksVerb::putdown: return "putdown(" + x + ")";
    case BlocksVerb::stack: return "stack(" + x + "," + blocks[static_cast<std::size_t>(a.target)] + ")";
    case BlocksVerb::unstack: return "unstack(" + x + "," + blocks[static_cast<std::size_t>(a.target)] + ")";
    }
    return {};
}

std::string BlocksworldInstance::format_goal() const
{
    std::string out;
    for (const BlocksFact& f : goal) {
        if (!out.empty())
            out.push_back(' ');
        auto name = [&](int i) { return blocks[static_cast<std::size_t>(i)]; };
        switch (f.kind) {
        case BlocksFact::Kind::on: out += "on(" + name(f.a) + "," + name(f.b) + ")"; break;
        case BlocksFact::Kind::ontable: out += "ontable(" + name(f.a) + ")"; break;
        case BlocksFact::Kind::clear: out += "clear(" + name(f.a) + ")"; break;
        case BlocksFact::Kind::holding: out += "holding(" + name(f.a) + ")"; break;
        case BlocksFact::Kind::handempty: out += "handempty"; break;
        }
    }
    return out;
}

std::string BlocksworldInstance::to_text() const
{
    std::string out;
    if (!name.empty())
        out += "name: " + name + "\n";
    out += "blocks:";
    for (const auto& b : blocks)
        out += " " + b;
    out += "\ninit: " + format_state(init) + "\ngoal: " + format_goal() + "\n";
    if (optimal_steps > 0)
        out += "optimal: " + std::to_string(optimal_steps) + "\n";
    return out;
}

BlocksworldInstance BlocksworldInstance::parse(std::string_view text)
{
    BlocksworldInstance inst;
    std::map<std::string, std::string> fields;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos)
            throw ParseError("line " + std::to_string(lineno) + ": expected 'key: value'");
        const std::string key = lowercase(trim(std::string_view(line).substr(0, colon)));
        if (key != "blocks" && key != "init" && key != "goal" && key != "name" && key != "optimal")
            throw ParseError("line " + std::to_string(lineno) + ": unknown field '" + key + "'");
        if (!fields.emplace(key, trim(std::string_view(line).substr(colon + 1))).second)
            throw ParseError("line " + std::to_string(lineno) + ": duplicate field '" + key + "'");
    }
    for (const char* required : {"blocks", "init", "goal"})
        if (!fields.contains(required))
            throw ParseError(std::string("instance is missing the '") + required + "' field");

    for (const std::string& b : split_ws(fields["blocks"])) {
        std::string name = lowercase(b);
        if (name.find_first_of("(),") != std::string::npos)
            throw ParseError("invalid block name '" + b + "'");
        if (inst.block_index(name) >= 0)
            throw ParseError("duplicate block '" + b + "'");
        inst.blocks.push_back(std::move(name));
    }
    if (inst.blocks.empty())
        throw ParseError("instance declares no blocks");
    inst.init = inst.parse_state(fields["init"]);
    for (const std::string& tok : split_ws(fields["goal"]))
        inst.goal.push_back(parse_fact(inst, tok));
    if (inst.goal.empty())
        throw ParseError("instance has an empty goal");
    if (fields.contains("name"))
        inst.name = fields["name"];
    if (fields.contains("optimal"))
        inst.optimal_steps = static_cast<std::size_t>(std::stoul(fields["optimal"]));
    return inst;
}

BlocksworldInstance BlocksworldInstance::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open instance file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    BlocksworldInstance inst = parse(ss.str());
    if (inst.name.empty())
        inst.name = path.stem().string();
    return inst;
}

std::optional<std::size_t> optimal_plan_length(const BlocksworldInstance& instance, std::size_t limit)
{
    if (instance.goal_holds(instance.init))
        return 0;
    std::deque<std::pair<BlocksState, std::size_t>> frontier{{instance.init, 0}};
    std::unordered_set<std::string> seen{state_key(instance.init)};
    while (!frontier.empty()) {
        auto [s, d] = frontier.front();
        frontier.pop_front();
        if (d >= limit)
            continue;
        for (const BlocksAction& a : applicable_actions(s)) {
            BlocksState next = apply_action(s, a);
            if (instance.goal_holds(next))
                return d + 1;
            if (seen.insert(state_key(next)).second)
                frontier.emplace_back(std::move(next), d + 1);
        }
    }
    return std::nullopt;
}

BlocksworldInstance generate_instance(std::size_t steps, std::size_t n_blocks, Rng& rng)
{
    if (n_blocks < 2 || n_blocks > block_names.size())
        throw std::invalid_argument("generator supports 2.." + std::to_string(block_names.size()) + " blocks");
    if (steps == 0 || steps % 2 != 0)
        throw std::invalid_argument("plan length must be a positive even number");

    for (int attempt = 0; attempt < 20000; ++attempt) {
        BlocksworldInstance inst;
        inst.blocks.assign(block_names.begin(), block_names.begin() + static_cast<std::ptrdiff_t>(n_blocks));

        // random goal configuration
        std::vector<int> order(n_blocks);
        for (std::size_t i = 0; i < n_blocks; ++i)
            order[i] = static_cast<int>(i);
        for (std::size_t i = n_blocks; i-- > 1;)
            std::swap(order[i], order[rng.below(i + 1)]);
        BlocksState goal_state;
        goal_state.below.assign(n_blocks, BlocksState::table);
        std::vector<int> tops;
        for (int x : order) {
            const std::uint64_t choice = rng.below(tops.size() + 1);
            if (choice < tops.size()) {
                goal_state.below[static_cast<std::size_t>(x)] = tops[choice];
                tops[choice] = x;
            } else {
                tops.push_back(x);
            }
        }
        for (std::size_t x = 0; x < n_blocks; ++x)
            if (goal_state.below[x] >= 0)
                inst.goal.push_back({BlocksFact::Kind::on, static_cast<int>(x), goal_state.below[x]});
        if (inst.goal.empty())
            continue;

        // walk away from the goal; the move set is reversible
        BlocksState s = goal_state;
        const std::size_t walk = steps + 2 * rng.below(steps + 1);
        for (std::size_t k = 0; k < walk; ++k) {
            auto moves = applicable_actions(s);
            s = apply_action(s, moves[rng.below(moves.size())]);
        }
        if (s.holding_any())
            continue;
        inst.init = s;
        auto optimal = optimal_plan_length(inst, steps + 1);
        if (optimal && *optimal == steps) {
            inst.optimal_steps = steps;
            return inst;
        }
    }
    throw std::runtime_error("could not generate a " + std::to_string(steps) + "-step instance");
}

// ---------------------------------------------------------------------------

BlocksworldEnv::BlocksworldEnv(BlocksworldInstance instance, double failure_rate, std::size_t max_steps)
    : instance_(std::move(instance)), failure_rate_(failure_rate), max_steps_(max_steps)
{
    if (!(failure_rate_ >= 0.0 && failure_rate_ <= 1.0))
        throw std::invalid_argument("action failure rate must lie in [0, 1]");
    if (max_steps_ == 0)
        throw std::invalid_argument("max_steps must be positive");
}

std::string BlocksworldEnv::reset(std::uint64_t seed)
{
    rng_ = Rng(seed);
    return instance_.format_state(instance_.init);
}

StepResult BlocksworldEnv::step(const std::string& state, const std::string& action)
{
    const BlocksState s = instance_.parse_state(state);
    const BlocksAction a = instance_.parse_action(action);
    const std::string unchanged = instance_.format_state(s);
    if (!preconditions_hold(s, a))
        return {unchanged, 0.0, false};
    if (rng_.bernoulli(failure_rate_))
        return {unchanged, 0.0, false};
    const BlocksState next = apply_action(s, a);
    const bool goal = instance_.goal_holds(next);
    return {instance_.format_state(next), goal ? 1.0 : 0.0, goal};
}

std::vector<std::string> BlocksworldEnv::legal_actions(const std::string& state) const
{
    const BlocksState s = instance_.parse_state(state);
    if (instance_.goal_holds(s))
        return {};
    std::vector<std::string> out;
    for (const BlocksAction& a : applicable_actions(s))
        out.push_back(instance_.format_action(a));
    return out;
}

bool BlocksworldEnv::is_terminal(const std::string& state) const
{
    return instance_.goal_holds(instance_.parse_state(state));
}

bool BlocksworldEnv::is_success(const std::string& state) const
{
    return is_terminal(state);
}

std::unique_ptr<Environment> BlocksworldEnv::clone() const
{
    return std::make_unique<BlocksworldEnv>(*this);
}

}  // namespace planu::envs
