#pragma once

#include "planu/llm_bridge.hpp"
#include "planu/planner.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace planu {

struct EnvSpec {
    std::string id = "stock";  ///< stock | blocksworld | overcooked
    double profit_probability = 0.6;
    double safe_reward = 0.9;
    /// Blocksworld action failure or Overcooked chop failure; one run per entry.
    std::vector<double> failure_rates = {0.2};
    std::string instance;  ///< Blocksworld instance file; empty -> generated
    std::size_t steps = 4;  ///< optimal plan length of generated instances
    std::size_t blocks = 0;  ///< 0 -> chosen from steps
    std::size_t instances = 1;
    std::uint64_t instance_seed = 0;
    std::size_t max_steps = 20;
    std::string task = "tomato_salad";
};

struct ExperimentConfig {
    EnvSpec env;
    std::vector<std::uint64_t> seeds;
    std::vector<Variant> variants = {Variant::full};
    PlannerConfig planner;
    std::string policy = "uniform";  ///< uniform | llm
    std::string task_prompt;
    std::size_t proposals = 5;
    std::string embedding = "hash";  ///< hash | http
    llm::LlmEndpointConfig llm;
    std::filesystem::path out = "runs";
    std::size_t parallelism = 0;  ///< 0 -> min(runs, hardware threads)
    std::size_t eval_episodes = 20;
    bool save_trees = true;
};

struct Diagnostic {
    std::size_t line = 0;  ///< 0 when unknown (JSON input, flags)
    std::string key;
    std::string message;

    std::string str() const;
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<Diagnostic> diagnostics);
    const std::vector<Diagnostic>& diagnostics() const noexcept { return diagnostics_; }

private:
    std::vector<Diagnostic> diagnostics_;
};

/// Parsed but unvalidated "section.key" -> raw value entries.
class ConfigDocument {
public:
    struct Entry {
        nlohmann::json value;  ///< string for text input, any JSON type for JSON input
        std::size_t line = 0;
    };

    /// Sectioned `key = value` text. `#` and `;` start comments; keys before
    /// the first section belong to [run].
    static ConfigDocument parse_text(std::string_view text);
    /// `{"run": {...}, "planner": {...}}`; top-level scalars belong to run.
    static ConfigDocument parse_json(std::string_view text);
    /// JSON when the first non-blank character is '{', else text.
    static ConfigDocument parse(std::string_view text);
    static ConfigDocument load(const std::filesystem::path& path);

    /// Flag override; replaces any file value.
    void set(const std::string& dotted_key, const std::string& value);

    const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

private:
    std::map<std::string, Entry> entries_;
    std::vector<Diagnostic> syntax_errors_;

    friend ExperimentConfig validate_config(const ConfigDocument& doc);
};

/// Checks every key against the schema, fills defaults. Throws ConfigError
/// with all problems found.
ExperimentConfig validate_config(const ConfigDocument& doc);

/// Canonical sectioned text of a config, every key present. Parsing it
/// back yields the same config.
std::string normalize_config(const ExperimentConfig& cfg);

/// Documented keys, "section.key" order.
std::vector<std::string> config_keys();

}  // namespace planu
