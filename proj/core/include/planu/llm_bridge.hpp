#pragma once

#include "planu/envs.hpp"
#include "planu/novelty.hpp"
#include "planu/planner.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace planu::llm {

struct LlmEndpointConfig {
    std::string base_url;  ///< e.g. http://localhost:8000/v1; empty means no endpoint
    std::string model;
    std::string api_key_env = "OPENAI_API_KEY";
    double temperature = 0.0;
    std::size_t max_tokens = 256;
    bool logprobs = true;
    double timeout_seconds = 60.0;
    std::filesystem::path cache_dir = ".planu-cache";
    bool offline = false;             ///< cache only; a miss is an error
    bool renormalize_priors = false;  ///< divide merged priors by their sum
    std::string embedding_model;
    std::size_t embedding_dim = 384;
};

/// PLANU_CACHE_DIR when set, else cfg.cache_dir.
std::filesystem::path resolve_cache_dir(const LlmEndpointConfig& cfg);

struct HttpRequest {
    std::string url;
    std::string body;
    std::map<std::string, std::string> headers;
    double timeout_seconds = 60.0;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

class TransportError : public std::runtime_error {
public:
    TransportError(const std::string& what, bool retryable) : std::runtime_error(what), retryable_(retryable) {}
    bool retryable() const noexcept { return retryable_; }

private:
    bool retryable_;
};

/// The response could not be interpreted; raw() holds the offending text.
class MalformedResponse : public std::runtime_error {
public:
    MalformedResponse(const std::string& what, std::string raw) : std::runtime_error(what), raw_(std::move(raw)) {}
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

class OfflineMiss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Synchronous HTTP POST. Implementations throw TransportError on
/// connection failure; HTTP status codes are returned, not thrown.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse post(const HttpRequest& request) = 0;
};

std::unique_ptr<Transport> make_http_transport();

/// Content-addressed response files, one JSON document per request digest.
/// Writes go to a temporary file that is renamed into place.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir);

    static std::uint64_t key(const std::string& model, const std::string& prompt, double temperature,
                             std::size_t max_tokens);
    std::filesystem::path path_for(std::uint64_t key) const;

    std::optional<nlohmann::json> get(std::uint64_t key) const;
    void put(std::uint64_t key, const nlohmann::json& entry) const;

    const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    std::filesystem::path dir_;
};

struct TokenProb {
    std::string token;
    double prob = 1.0;
};

struct ActionProposal {
    std::string action_text;
    std::vector<TokenProb> tokens;
    double prior = 0.0;  ///< product of token probabilities, merged duplicates capped at 1
};

/// Splits a chat-completion response into one proposal per nonempty line.
/// Leading list markers ("1.", "-", "*") are stripped; only tokens that
/// overlap the remaining action text enter its prior.
std::vector<ActionProposal> parse_action_proposals(const nlohmann::json& response, bool use_logprobs);

/// Sums priors of identical action texts (first occurrence keeps its
/// position), caps each at 1, keeps the first k.
std::vector<ActionProposal> merge_proposals(std::vector<ActionProposal> proposals, std::size_t k,
                                            bool renormalize);

struct WorldStep {
    std::string next_state;
    double reward = 0.0;
    bool reward_missing = false;
    std::string raw;
};

/// Parses "next_state: ..." and optional "reward: <number>" lines.
WorldStep parse_world_step(const std::string& text);

class LlmClient {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    LlmClient(LlmEndpointConfig cfg, std::shared_ptr<Transport> transport, Sleeper sleeper = {});

    /// Chat completion through the cache; retries retryable transport
    /// failures up to 3 attempts with exponential backoff.
    nlohmann::json complete(const nlohmann::json& messages);

    std::vector<ActionProposal> propose_actions(const std::string& state_text, const std::string& task_prompt,
                                                std::size_t k);

    WorldStep world_step(const std::string& state_text, const std::string& action_text,
                         const std::string& world_prompt);

    /// Embedding vector for `text` from the embeddings endpoint, cached.
    Vector embed(const std::string& text);

    const LlmEndpointConfig& config() const noexcept { return cfg_; }
    const ResponseCache& cache() const noexcept { return cache_; }
    std::uint64_t network_calls() const noexcept { return network_calls_.load(); }

private:
    nlohmann::json fetch(const std::string& path, const nlohmann::json& body, std::uint64_t key);

    LlmEndpointConfig cfg_;
    std::shared_ptr<Transport> transport_;
    Sleeper sleeper_;
    ResponseCache cache_;
    std::atomic<std::uint64_t> network_calls_{0};
};

/// Embedding endpoint with an in-memory and an on-disk cache keyed by text.
class HttpEmbedding final : public EmbeddingProvider {
public:
    explicit HttpEmbedding(std::shared_ptr<LlmClient> client);

    std::size_t dimension() const override;
    Vector embed(std::string_view text) override;

private:
    std::shared_ptr<LlmClient> client_;
    std::mutex mutex_;
    std::map<std::string, Vector, std::less<>> memo_;
};

/// Prior policy backed by propose_actions.
class LlmPolicy final : public PriorPolicy {
public:
    LlmPolicy(std::shared_ptr<LlmClient> client, std::string task_prompt, std::size_t k);

    std::vector<Proposal> propose(const std::string& state, const envs::Environment& env) override;

private:
    std::shared_ptr<LlmClient> client_;
    std::string task_prompt_;
    std::size_t k_;
};

}  // namespace planu::llm
