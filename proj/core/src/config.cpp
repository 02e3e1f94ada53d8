#include "planu/config.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>

namespace planu {

using nlohmann::json;

namespace {

std::string trim(std::string_view text)
{
    std::size_t b = 0, e = text.size();
    while (b < e && std::isspace(static_cast<unsigned char>(text[b])))
        ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1])))
        --e;
    return std::string(text.substr(b, e - b));
}

/// Shortest decimal text that parses back to exactly `v`.
std::string format_real(double v)
{
    char buf[40];
    for (int precision = 1; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v)
            break;
    }
    return buf;
}

enum class Kind { integer, real, boolean, string, choice, integer_list, real_list, choice_list };

using Check = std::function<std::optional<std::string>(const json&)>;

struct KeySpec {
    std::string section;
    std::string name;
    Kind kind;
    std::vector<std::string> choices;
    Check check;  ///< per element for lists
    std::function<void(ExperimentConfig&, const json&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
    bool required = false;

    std::string dotted() const { return section + "." + name; }
};

Check at_least(double lo)
{
    return [lo](const json& v) -> std::optional<std::string> {
        if (v.get<double>() < lo)
            return "must be >= " + format_real(lo);
        return std::nullopt;
    };
}

Check positive()
{
    return [](const json& v) -> std::optional<std::string> {
        if (!(v.get<double>() > 0.0))
            return "must be > 0";
        return std::nullopt;
    };
}

Check between(double lo, double hi)
{
    return [lo, hi](const json& v) -> std::optional<std::string> {
        const double x = v.get<double>();
        if (x < lo || x > hi)
            return "must lie in [" + format_real(lo) + ", " + format_real(hi) + "]";
        return std::nullopt;
    };
}

std::string join_ints(const std::vector<std::uint64_t>& v)
{
    std::string out;
    for (auto x : v)
        out += (out.empty() ? "" : " ") + std::to_string(x);
    return out;
}

std::string join_sizes(const std::vector<std::size_t>& v)
{
    std::string out;
    for (auto x : v)
        out += (out.empty() ? "" : " ") + std::to_string(x);
    return out;
}

std::string join_reals(const std::vector<double>& v)
{
    std::string out;
    for (auto x : v)
        out += (out.empty() ? "" : " ") + format_real(x);
    return out;
}

std::size_t as_size(const json& v)
{
    return static_cast<std::size_t>(v.get<std::uint64_t>());
}

const std::vector<KeySpec>& schema()
{
    static const std::vector<KeySpec> keys = [] {
        std::vector<KeySpec> k;
        auto add = [&](KeySpec spec) { k.push_back(std::move(spec)); };
        using C = ExperimentConfig;

        // [run]
        add({"run", "env", Kind::choice, {"stock", "blocksworld", "overcooked"}, {},
             [](C& c, const json& v) { c.env.id = v.get<std::string>(); },
             [](const C& c) { return c.env.id; }, true});
        add({"run", "seeds", Kind::integer_list, {}, {},
             [](C& c, const json& v) { c.seeds = v.get<std::vector<std::uint64_t>>(); },
             [](const C& c) { return join_ints(c.seeds); }, true});
        add({"run", "variants", Kind::choice_list, {"full", "no_dist", "no_ucc", "deterministic_baseline"}, {},
             [](C& c, const json& v) {
                 c.variants.clear();
                 for (const auto& s : v)
                     c.variants.push_back(parse_variant(s.get<std::string>()));
             },
             [](const C& c) {
                 std::string out;
                 for (auto x : c.variants)
                     out += (out.empty() ? "" : " ") + std::string(to_string(x));
                 return out;
             }});
        add({"run", "out", Kind::string, {}, {}, [](C& c, const json& v) { c.out = v.get<std::string>(); },
             [](const C& c) { return c.out.string(); }});
        add({"run", "parallelism", Kind::integer, {}, between(0, 1024),
             [](C& c, const json& v) { c.parallelism = as_size(v); },
             [](const C& c) { return std::to_string(c.parallelism); }});
        add({"run", "eval_episodes", Kind::integer, {}, between(1, 1e6),
             [](C& c, const json& v) { c.eval_episodes = as_size(v); },
             [](const C& c) { return std::to_string(c.eval_episodes); }});
        add({"run", "save_trees", Kind::boolean, {}, {}, [](C& c, const json& v) { c.save_trees = v.get<bool>(); },
             [](const C& c) { return std::string(c.save_trees ? "true" : "false"); }});
        add({"run", "policy", Kind::choice, {"uniform", "llm"}, {},
             [](C& c, const json& v) { c.policy = v.get<std::string>(); }, [](const C& c) { return c.policy; }});
        add({"run", "proposals", Kind::integer, {}, between(1, 100),
             [](C& c, const json& v) { c.proposals = as_size(v); },
             [](const C& c) { return std::to_string(c.proposals); }});
        add({"run", "task_prompt", Kind::string, {}, {},
             [](C& c, const json& v) { c.task_prompt = v.get<std::string>(); },
             [](const C& c) { return c.task_prompt; }});
        add({"run", "embedding", Kind::choice, {"hash", "http"}, {},
             [](C& c, const json& v) { c.embedding = v.get<std::string>(); },
             [](const C& c) { return c.embedding; }});

        // [env]
        add({"env", "profit_probability", Kind::real, {}, between(0, 1),
             [](C& c, const json& v) { c.env.profit_probability = v.get<double>(); },
             [](const C& c) { return format_real(c.env.profit_probability); }});
        add({"env", "safe_reward", Kind::real, {}, {},
             [](C& c, const json& v) { c.env.safe_reward = v.get<double>(); },
             [](const C& c) { return format_real(c.env.safe_reward); }});
        add({"env", "failure_rate", Kind::real_list, {}, between(0, 1),
             [](C& c, const json& v) { c.env.failure_rates = v.get<std::vector<double>>(); },
             [](const C& c) { return join_reals(c.env.failure_rates); }});
        add({"env", "instance", Kind::string, {}, {},
             [](C& c, const json& v) { c.env.instance = v.get<std::string>(); },
             [](const C& c) { return c.env.instance; }});
        add({"env", "steps", Kind::integer, {},
             [](const json& v) -> std::optional<std::string> {
                 const auto n = v.get<std::uint64_t>();
                 if (n < 2 || n > 16 || n % 2 != 0)
                     return "must be an even number in [2, 16]";
                 return std::nullopt;
             },
             [](C& c, const json& v) { c.env.steps = as_size(v); },
             [](const C& c) { return std::to_string(c.env.steps); }});
        add({"env", "blocks", Kind::integer, {},
             [](const json& v) -> std::optional<std::string> {
                 const auto n = v.get<std::uint64_t>();
                 if (n == 1 || n > 10)
                     return "must be 0 (automatic) or in [2, 10]";
                 return std::nullopt;
             },
             [](C& c, const json& v) { c.env.blocks = as_size(v); },
             [](const C& c) { return std::to_string(c.env.blocks); }});
        add({"env", "instances", Kind::integer, {}, between(1, 10000),
             [](C& c, const json& v) { c.env.instances = as_size(v); },
             [](const C& c) { return std::to_string(c.env.instances); }});
        add({"env", "instance_seed", Kind::integer, {}, {},
             [](C& c, const json& v) { c.env.instance_seed = v.get<std::uint64_t>(); },
             [](const C& c) { return std::to_string(c.env.instance_seed); }});
        add({"env", "max_steps", Kind::integer, {}, between(1, 100000),
             [](C& c, const json& v) { c.env.max_steps = as_size(v); },
             [](const C& c) { return std::to_string(c.env.max_steps); }});
        add({"env", "task", Kind::choice, {"tomato_salad", "tomato_lettuce_salad"}, {},
             [](C& c, const json& v) { c.env.task = v.get<std::string>(); },
             [](const C& c) { return c.env.task; }});

        // [planner]
        add({"planner", "iterations", Kind::integer, {}, between(1, 1e8),
             [](C& c, const json& v) { c.planner.iterations = as_size(v); },
             [](const C& c) { return std::to_string(c.planner.iterations); }});
        add({"planner", "depth_limit", Kind::integer, {}, between(1, 100000),
             [](C& c, const json& v) { c.planner.depth_limit = as_size(v); },
             [](const C& c) { return std::to_string(c.planner.depth_limit); }});
        add({"planner", "n_q", Kind::integer, {}, between(1, 100000),
             [](C& c, const json& v) { c.planner.n_q = as_size(v); },
             [](const C& c) { return std::to_string(c.planner.n_q); }});
        add({"planner", "c1", Kind::real, {}, at_least(0), [](C& c, const json& v) { c.planner.c1 = v.get<double>(); },
             [](const C& c) { return format_real(c.planner.c1); }});
        add({"planner", "gamma", Kind::real, {}, between(0, 1),
             [](C& c, const json& v) { c.planner.gamma = v.get<double>(); },
             [](const C& c) { return format_real(c.planner.gamma); }});
        add({"planner", "qr_step", Kind::real, {}, positive(),
             [](C& c, const json& v) { c.planner.qr_step = v.get<double>(); },
             [](const C& c) { return format_real(c.planner.qr_step); }});
        add({"planner", "kappa", Kind::real, {}, positive(),
             [](C& c, const json& v) { c.planner.kappa = v.get<double>(); },
             [](const C& c) { return format_real(c.planner.kappa); }});
        add({"planner", "psi", Kind::choice, {"mean", "mean_plus_spread", "mean_plus_variance", "median"}, {},
             [](C& c, const json& v) { c.planner.psi = parse_psi_operator(v.get<std::string>()); },
             [](const C& c) { return std::string(to_string(c.planner.psi)); }});
        add({"planner", "identity", Kind::choice, {"exact", "embedding"}, {},
             [](C& c, const json& v) { c.planner.identity = parse_identity_mode(v.get<std::string>()); },
             [](const C& c) { return std::string(to_string(c.planner.identity)); }});
        add({"planner", "similarity_threshold", Kind::real, {},
             [](const json& v) -> std::optional<std::string> {
                 const double x = v.get<double>();
                 if (!(x > 0.0 && x <= 1.0))
                     return "must lie in (0, 1]";
                 return std::nullopt;
             },
             [](C& c, const json& v) { c.planner.similarity_threshold = v.get<double>(); },
             [](const C& c) { return format_real(c.planner.similarity_threshold); }});
        add({"planner", "baseline_samples", Kind::integer, {},
             [](const json& v) -> std::optional<std::string> {
                 const auto n = v.get<std::uint64_t>();
                 if (n < 1 || n % 2 == 0 || n > 999)
                     return "must be an odd number in [1, 999]";
                 return std::nullopt;
             },
             [](C& c, const json& v) { c.planner.baseline_samples = as_size(v); },
             [](const C& c) { return std::to_string(c.planner.baseline_samples); }});
        add({"planner", "extraction", Kind::choice, {"max_mean", "max_visits"}, {},
             [](C& c, const json& v) { c.planner.extraction = parse_extraction(v.get<std::string>()); },
             [](const C& c) { return std::string(to_string(c.planner.extraction)); }});
        add({"planner", "unvisited_first", Kind::boolean, {}, {},
             [](C& c, const json& v) { c.planner.unvisited_first = v.get<bool>(); },
             [](const C& c) { return std::string(c.planner.unvisited_first ? "true" : "false"); }});

        // [novelty]
        add({"novelty", "embedding_dim", Kind::integer, {}, between(1, 65536),
             [](C& c, const json& v) { c.planner.novelty.rnd.embedding_dim = as_size(v); },
             [](const C& c) { return std::to_string(c.planner.novelty.rnd.embedding_dim); }});
        add({"novelty", "hidden_sizes", Kind::integer_list, {}, between(1, 65536),
             [](C& c, const json& v) { c.planner.novelty.rnd.hidden_sizes = v.get<std::vector<std::size_t>>(); },
             [](const C& c) { return join_sizes(c.planner.novelty.rnd.hidden_sizes); }});
        add({"novelty", "learning_rate", Kind::real, {}, positive(),
             [](C& c, const json& v) { c.planner.novelty.rnd.learning_rate = v.get<double>(); },
             [](const C& c) { return format_real(c.planner.novelty.rnd.learning_rate); }});
        add({"novelty", "intrinsic_weight", Kind::real, {}, at_least(0),
             [](C& c, const json& v) { c.planner.novelty.rnd.intrinsic_weight = v.get<double>(); },
             [](const C& c) { return format_real(c.planner.novelty.rnd.intrinsic_weight); }});
        add({"novelty", "buffer_capacity", Kind::integer, {}, between(1, 1e8),
             [](C& c, const json& v) { c.planner.novelty.buffer_capacity = as_size(v); },
             [](const C& c) { return std::to_string(c.planner.novelty.buffer_capacity); }});
        add({"novelty", "batch_size", Kind::integer, {}, between(1, 1e6),
             [](C& c, const json& v) { c.planner.novelty.batch_size = as_size(v); },
             [](const C& c) { return std::to_string(c.planner.novelty.batch_size); }});
        add({"novelty", "train_steps", Kind::integer, {}, between(0, 1e6),
             [](C& c, const json& v) { c.planner.novelty.train_steps = as_size(v); },
             [](const C& c) { return std::to_string(c.planner.novelty.train_steps); }});

        // [llm]
        add({"llm", "base_url", Kind::string, {}, {},
             [](C& c, const json& v) { c.llm.base_url = v.get<std::string>(); },
             [](const C& c) { return c.llm.base_url; }});
        add({"llm", "model", Kind::string, {}, {}, [](C& c, const json& v) { c.llm.model = v.get<std::string>(); },
             [](const C& c) { return c.llm.model; }});
        add({"llm", "api_key_env", Kind::string, {}, {},
             [](C& c, const json& v) { c.llm.api_key_env = v.get<std::string>(); },
             [](const C& c) { return c.llm.api_key_env; }});
        add({"llm", "temperature", Kind::real, {}, between(0, 2),
             [](C& c, const json& v) { c.llm.temperature = v.get<double>(); },
             [](const C& c) { return format_real(c.llm.temperature); }});
        add({"llm", "max_tokens", Kind::integer, {}, between(1, 1e6),
             [](C& c, const json& v) { c.llm.max_tokens = as_size(v); },
             [](const C& c) { return std::to_string(c.llm.max_tokens); }});
        add({"llm", "logprobs", Kind::boolean, {}, {}, [](C& c, const json& v) { c.llm.logprobs = v.get<bool>(); },
             [](const C& c) { return std::string(c.llm.logprobs ? "true" : "false"); }});
        add({"llm", "timeout", Kind::real, {}, positive(),
             [](C& c, const json& v) { c.llm.timeout_seconds = v.get<double>(); },
             [](const C& c) { return format_real(c.llm.timeout_seconds); }});
        add({"llm", "cache_dir", Kind::string, {}, {},
             [](C& c, const json& v) { c.llm.cache_dir = v.get<std::string>(); },
             [](const C& c) { return c.llm.cache_dir.string(); }});
        add({"llm", "offline", Kind::boolean, {}, {}, [](C& c, const json& v) { c.llm.offline = v.get<bool>(); },
             [](const C& c) { return std::string(c.llm.offline ? "true" : "false"); }});
        add({"llm", "renormalize_priors", Kind::boolean, {}, {},
             [](C& c, const json& v) { c.llm.renormalize_priors = v.get<bool>(); },
             [](const C& c) { return std::string(c.llm.renormalize_priors ? "true" : "false"); }});
        add({"llm", "embedding_model", Kind::string, {}, {},
             [](C& c, const json& v) { c.llm.embedding_model = v.get<std::string>(); },
             [](const C& c) { return c.llm.embedding_model; }});
        add({"llm", "embedding_dim", Kind::integer, {}, between(1, 65536),
             [](C& c, const json& v) { c.llm.embedding_dim = as_size(v); },
             [](const C& c) { return std::to_string(c.llm.embedding_dim); }});
        return k;
    }();
    return keys;
}

const KeySpec* find_key(const std::string& dotted)
{
    for (const KeySpec& k : schema())
        if (k.dotted() == dotted)
            return &k;
    return nullptr;
}

std::optional<json> scalar_from_text(Kind kind, const std::string& raw, std::string& error)
{
    switch (kind) {
    case Kind::integer:
    case Kind::integer_list: {
        if (raw.empty() || !std::all_of(raw.begin(), raw.end(), [](unsigned char c) { return std::isdigit(c); })) {
            error = "expected a non-negative integer, got '" + raw + "'";
            return std::nullopt;
        }
        errno = 0;
        const unsigned long long v = std::strtoull(raw.c_str(), nullptr, 10);
        if (errno == ERANGE) {
            error = "integer out of range";
            return std::nullopt;
        }
        return json(static_cast<std::uint64_t>(v));
    }
    case Kind::real:
    case Kind::real_list: {
        char* end = nullptr;
        const double v = std::strtod(raw.c_str(), &end);
        if (raw.empty() || end != raw.c_str() + raw.size() || !std::isfinite(v)) {
            error = "expected a finite number, got '" + raw + "'";
            return std::nullopt;
        }
        return json(v);
    }
    case Kind::boolean: {
        std::string s = raw;
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
        if (s == "true" || s == "yes" || s == "on" || s == "1")
            return json(true);
        if (s == "false" || s == "no" || s == "off" || s == "0")
            return json(false);
        error = "expected true or false, got '" + raw + "'";
        return std::nullopt;
    }
    case Kind::string:
    case Kind::choice:
    case Kind::choice_list:
        return json(raw);
    }
    return std::nullopt;
}

std::optional<json> scalar_from_json(Kind kind, const json& v, std::string& error)
{
    switch (kind) {
    case Kind::integer:
    case Kind::integer_list:
        if (v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0))
            return json(v.get<std::uint64_t>());
        error = "expected a non-negative integer";
        return std::nullopt;
    case Kind::real:
    case Kind::real_list:
        if (v.is_number() && std::isfinite(v.get<double>()))
            return json(v.get<double>());
        error = "expected a finite number";
        return std::nullopt;
    case Kind::boolean:
        if (v.is_boolean())
            return json(v);
        error = "expected a boolean";
        return std::nullopt;
    case Kind::string:
    case Kind::choice:
    case Kind::choice_list:
        if (v.is_string())
            return json(v);
        error = "expected a string";
        return std::nullopt;
    }
    return std::nullopt;
}

bool is_list(Kind k)
{
    return k == Kind::integer_list || k == Kind::real_list || k == Kind::choice_list;
}

std::string strip_quotes(std::string s)
{
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
        return s.substr(1, s.size() - 2);
    return s;
}

}  // namespace

std::string Diagnostic::str() const
{
    std::string out;
    if (line > 0)
        out += "line " + std::to_string(line) + ": ";
    if (!key.empty())
        out += key + ": ";
    return out + message;
}

ConfigError::ConfigError(std::vector<Diagnostic> diagnostics)
    : std::runtime_error([&] {
          std::string msg = "invalid configuration";
          for (const auto& d : diagnostics)
              msg += "\n  " + d.str();
          return msg;
      }()),
      diagnostics_(std::move(diagnostics))
{
}

ConfigDocument ConfigDocument::parse_text(std::string_view text)
{
    ConfigDocument doc;
    std::istringstream in{std::string(text)};
    std::string line;
    std::string section = "run";
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // comments: '#' or ';' outside quotes
        bool quoted = false;
        char quote = 0;
        for (std::size_t i = 0; i < line.size(); ++i) {
            const char c = line[i];
            if (quoted) {
                if (c == quote)
                    quoted = false;
            } else if (c == '"' || c == '\'') {
                quoted = true;
                quote = c;
            } else if (c == '#' || c == ';') {
                line.erase(i);
                break;
            }
        }
        line = trim(line);
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                doc.syntax_errors_.push_back({lineno, "", "malformed section header '" + line + "'"});
                continue;
            }
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            doc.syntax_errors_.push_back({lineno, "", "expected 'key = value'"});
            continue;
        }
        const std::string key = section + "." + trim(std::string_view(line).substr(0, eq));
        const std::string value = strip_quotes(trim(std::string_view(line).substr(eq + 1)));
        auto [it, inserted] = doc.entries_.emplace(key, Entry{json(value), lineno});
        if (!inserted)
            doc.syntax_errors_.push_back(
                {lineno, key, "duplicate key (first set on line " + std::to_string(it->second.line) + ")"});
    }
    return doc;
}

ConfigDocument ConfigDocument::parse_json(std::string_view text)
{
    ConfigDocument doc;
    // Duplicate keys are rejected; nlohmann would keep the last one.
    std::vector<std::set<std::string>> seen;
    std::vector<std::string> duplicates;
    json root;
    try {
        root = json::parse(text, [&](int, json::parse_event_t event, json& parsed) {
            if (event == json::parse_event_t::object_start)
                seen.emplace_back();
            else if (event == json::parse_event_t::object_end)
                seen.pop_back();
            else if (event == json::parse_event_t::key && !seen.back().insert(parsed.get<std::string>()).second)
                duplicates.push_back(parsed.get<std::string>());
            return true;
        });
    } catch (const json::parse_error& e) {
        doc.syntax_errors_.push_back({0, "", std::string("JSON syntax error: ") + e.what()});
        return doc;
    }
    for (const auto& d : duplicates)
        doc.syntax_errors_.push_back({0, d, "duplicate key"});
    if (!root.is_object()) {
        doc.syntax_errors_.push_back({0, "", "top-level JSON value must be an object"});
        return doc;
    }
    for (const auto& [name, value] : root.items()) {
        if (value.is_object()) {
            for (const auto& [key, v] : value.items())
                doc.entries_[name + "." + key] = Entry{v, 0};
        } else {
            doc.entries_["run." + name] = Entry{value, 0};
        }
    }
    return doc;
}

ConfigDocument ConfigDocument::parse(std::string_view text)
{
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c)))
            continue;
        return c == '{' ? parse_json(text) : parse_text(text);
    }
    return parse_text(text);
}

ConfigDocument ConfigDocument::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError({{0, "", "cannot open config file '" + path.string() + "'"}});
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void ConfigDocument::set(const std::string& dotted_key, const std::string& value)
{
    entries_[dotted_key] = Entry{json(value), 0};
}

ExperimentConfig validate_config(const ConfigDocument& doc)
{
    std::vector<Diagnostic> diags = doc.syntax_errors_;
    ExperimentConfig cfg;

    for (const auto& [key, entry] : doc.entries_) {
        const KeySpec* spec = find_key(key);
        if (!spec) {
            diags.push_back({entry.line, key, "unknown key"});
            continue;
        }
        std::vector<json> items;
        std::string error;
        if (entry.value.is_string()) {
            const std::string raw = entry.value.get<std::string>();
            if (is_list(spec->kind)) {
                std::string token;
                std::istringstream tokens(raw);
                std::string chunk;
                while (tokens >> chunk) {
                    std::istringstream parts(chunk);
                    while (std::getline(parts, token, ','))
                        if (!token.empty())
                            items.push_back(json(token));
                }
            } else {
                items.push_back(json(raw));
            }
        } else if (entry.value.is_array() && is_list(spec->kind)) {
            items.assign(entry.value.begin(), entry.value.end());
        } else {
            items.push_back(entry.value);
        }

        json typed = json::array();
        bool ok = true;
        for (const json& item : items) {
            std::optional<json> v = item.is_string() && spec->kind != Kind::string && spec->kind != Kind::choice &&
                                            spec->kind != Kind::choice_list
                                        ? scalar_from_text(spec->kind, item.get<std::string>(), error)
                                        : scalar_from_json(spec->kind, item, error);
            if (!v) {
                diags.push_back({entry.line, key, error});
                ok = false;
                break;
            }
            if ((spec->kind == Kind::choice || spec->kind == Kind::choice_list) &&
                std::find(spec->choices.begin(), spec->choices.end(), v->get<std::string>()) == spec->choices.end()) {
                std::string allowed;
                for (const auto& c : spec->choices)
                    allowed += (allowed.empty() ? "" : ", ") + c;
                diags.push_back({entry.line, key, "'" + v->get<std::string>() + "' is not one of " + allowed});
                ok = false;
                break;
            }
            if (spec->check) {
                if (auto problem = spec->check(*v)) {
                    diags.push_back({entry.line, key, *problem});
                    ok = false;
                    break;
                }
            }
            typed.push_back(*v);
        }
        if (!ok)
            continue;
        if (is_list(spec->kind)) {
            if (typed.empty()) {
                diags.push_back({entry.line, key, "list must not be empty"});
                continue;
            }
            spec->set(cfg, typed);
        } else {
            if (typed.size() != 1) {
                diags.push_back({entry.line, key, "expected a single value"});
                continue;
            }
            spec->set(cfg, typed[0]);
        }
    }

    for (const KeySpec& spec : schema())
        if (spec.required && !doc.entries_.contains(spec.dotted()))
            diags.push_back({0, spec.dotted(), "required key is missing"});

    if (diags.empty()) {
        try {
            cfg.planner.validate();
        } catch (const std::invalid_argument& e) {
            diags.push_back({0, "planner", e.what()});
        }
        if (cfg.embedding == "http" && cfg.llm.embedding_dim != cfg.planner.novelty.rnd.embedding_dim)
            diags.push_back({0, "llm.embedding_dim", "must equal novelty.embedding_dim when run.embedding = http"});
        if ((cfg.policy == "llm" || cfg.embedding == "http") && cfg.llm.base_url.empty() && !cfg.llm.offline)
            diags.push_back({0, "llm.base_url", "required unless llm.offline = true"});
        if (cfg.policy == "llm" && cfg.llm.model.empty())
            diags.push_back({0, "llm.model", "required when run.policy = llm"});
    }
    if (!diags.empty()) {
        std::stable_sort(diags.begin(), diags.end(),
                         [](const Diagnostic& a, const Diagnostic& b) { return a.line < b.line; });
        throw ConfigError(std::move(diags));
    }
    return cfg;
}

std::string normalize_config(const ExperimentConfig& cfg)
{
    std::string out;
    std::string section;
    for (const KeySpec& spec : schema()) {
        if (spec.section != section) {
            out += (section.empty() ? "[" : "\n[") + spec.section + "]\n";
            section = spec.section;
        }
        std::string value = spec.get(cfg);
        if (spec.kind == Kind::string &&
            (value.empty() || value.find_first_of("#;") != std::string::npos || value != trim(value)))
            value = "\"" + value + "\"";
        out += spec.name + " = " + value + "\n";
    }
    return out;
}

std::vector<std::string> config_keys()
{
    std::vector<std::string> out;
    for (const KeySpec& spec : schema())
        out.push_back(spec.dotted());
    return out;
}

}  // namespace planu
