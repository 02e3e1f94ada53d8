#include "planu/llm_bridge.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>
#include <unistd.h>

namespace planu::llm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int schema_version = 1;
constexpr int max_attempts = 3;

std::string trim(std::string_view text)
{
    std::size_t b = 0, e = text.size();
    while (b < e && std::isspace(static_cast<unsigned char>(text[b])))
        ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1])))
        --e;
    return std::string(text.substr(b, e - b));
}

std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Length of a leading "1." / "1)" / "-" / "*" marker plus following blanks.
std::size_t marker_length(std::string_view line)
{
    std::size_t i = 0;
    if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
        i = 1;
    } else {
        while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i])))
            ++i;
        if (i == 0 || i >= line.size() || (line[i] != '.' && line[i] != ')'))
            return 0;
        ++i;
    }
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t'))
        ++i;
    return i;
}

}  // namespace

fs::path resolve_cache_dir(const LlmEndpointConfig& cfg)
{
    if (const char* dir = std::getenv("PLANU_CACHE_DIR"); dir && *dir)
        return dir;
    return cfg.cache_dir;
}

// ---------------------------------------------------------------------------

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) {}

std::uint64_t ResponseCache::key(const std::string& model, const std::string& prompt, double temperature,
                                 std::size_t max_tokens)
{
    char num[64];
    std::snprintf(num, sizeof num, "%.17g|%zu", temperature, max_tokens);
    std::uint64_t h = fnv1a64(model);
    h = fnv1a64(std::string_view("\0", 1), h);
    h = fnv1a64(prompt, h);
    h = fnv1a64(std::string_view("\0", 1), h);
    return fnv1a64(num, h);
}

fs::path ResponseCache::path_for(std::uint64_t key) const
{
    return dir_ / (hex64(key) + ".json");
}

std::optional<json> ResponseCache::get(std::uint64_t key) const
{
    std::ifstream in(path_for(key));
    if (!in)
        return std::nullopt;
    try {
        return json::parse(in);
    } catch (const json::exception&) {
        return std::nullopt;  // torn or foreign file: treat as a miss
    }
}

void ResponseCache::put(std::uint64_t key, const json& entry) const
{
    static std::atomic<std::uint64_t> counter{0};
    fs::create_directories(dir_);
    const fs::path final_path = path_for(key);
    const fs::path tmp = dir_ / (hex64(key) + ".tmp." + std::to_string(::getpid()) + "." +
                                 std::to_string(counter.fetch_add(1)));
    {
        std::ofstream out(tmp, std::ios::binary);
        out << entry.dump(2) << '\n';
        if (!out)
            throw std::runtime_error("cannot write cache file " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, final_path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw std::runtime_error("cannot publish cache file " + final_path.string());
    }
}

// ---------------------------------------------------------------------------

std::vector<ActionProposal> parse_action_proposals(const json& response, bool use_logprobs)
{
    const std::string raw = response.dump();
    if (!response.is_object() || !response.contains("choices") || !response["choices"].is_array() ||
        response["choices"].empty())
        throw MalformedResponse("completion response has no choices", raw);
    const json& choice = response["choices"][0];
    if (!choice.contains("message") || !choice["message"].contains("content") ||
        !choice["message"]["content"].is_string())
        throw MalformedResponse("completion response has no message content", raw);

    std::string text = choice["message"]["content"].get<std::string>();
    struct Span {
        std::size_t begin, end;
        double prob;
        std::string token;
    };
    std::vector<Span> spans;
    const bool have_logprobs = use_logprobs && choice.contains("logprobs") && choice["logprobs"].is_object() &&
                               choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array();
    if (have_logprobs) {
        // The token stream is authoritative for offsets.
        std::string joined;
        for (const json& t : choice["logprobs"]["content"]) {
            if (!t.contains("token") || !t["token"].is_string() || !t.contains("logprob") || !t["logprob"].is_number())
                throw MalformedResponse("malformed logprob entry", raw);
            const std::string tok = t["token"].get<std::string>();
            const double p = std::exp(t["logprob"].get<double>());
            spans.push_back({joined.size(), joined.size() + tok.size(), std::clamp(p, 0.0, 1.0), tok});
            joined += tok;
        }
        text = joined;
    }

    std::vector<std::size_t> starts;
    std::vector<ActionProposal> out;
    std::size_t line_begin = 0;
    while (line_begin <= text.size()) {
        std::size_t line_end = text.find('\n', line_begin);
        if (line_end == std::string::npos)
            line_end = text.size();
        std::string_view line(text.data() + line_begin, line_end - line_begin);
        std::size_t b = 0, e = line.size();
        while (b < e && std::isspace(static_cast<unsigned char>(line[b])))
            ++b;
        b += marker_length(line.substr(b));
        while (e > b && std::isspace(static_cast<unsigned char>(line[e - 1])))
            --e;
        if (e > b) {
            ActionProposal p;
            p.action_text = std::string(line.substr(b, e - b));
            const std::size_t lo = line_begin + b, hi = line_begin + e;
            p.prior = 1.0;
            for (const Span& s : spans) {
                if (s.end > lo && s.begin < hi) {
                    p.tokens.push_back({s.token, s.prob});
                    p.prior *= s.prob;
                }
            }
            out.push_back(std::move(p));
        }
        if (line_end == text.size())
            break;
        line_begin = line_end + 1;
    }
    if (!have_logprobs)
        for (auto& p : out)
            p.prior = out.empty() ? 0.0 : 1.0 / static_cast<double>(out.size());
    return out;
}

std::vector<ActionProposal> merge_proposals(std::vector<ActionProposal> proposals, std::size_t k, bool renormalize)
{
    std::vector<ActionProposal> merged;
    for (auto& p : proposals) {
        auto it = std::find_if(merged.begin(), merged.end(),
                               [&](const ActionProposal& m) { return m.action_text == p.action_text; });
        if (it == merged.end())
            merged.push_back(std::move(p));
        else
            it->prior += p.prior;
    }
    for (auto& m : merged)
        m.prior = std::clamp(m.prior, 0.0, 1.0);
    if (merged.size() > k)
        merged.resize(k);
    if (renormalize) {
        double total = 0.0;
        for (const auto& m : merged)
            total += m.prior;
        if (total > 0.0)
            for (auto& m : merged)
                m.prior /= total;
    }
    return merged;
}

WorldStep parse_world_step(const std::string& text)
{
    WorldStep out;
    out.raw = text;
    bool have_state = false, have_reward = false;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto colon = line.find(':');
        if (colon == std::string::npos)
            continue;
        std::string key = trim(std::string_view(line).substr(0, colon));
        std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
        const std::string value = trim(std::string_view(line).substr(colon + 1));
        if (key == "next_state" && !have_state) {
            out.next_state = value;
            have_state = true;
        } else if (key == "reward" && !have_reward) {
            char* end = nullptr;
            const double r = std::strtod(value.c_str(), &end);
            if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(r))
                throw MalformedResponse("reward is not a number: '" + value + "'", text);
            out.reward = r;
            have_reward = true;
        }
    }
    if (!have_state || out.next_state.empty())
        throw MalformedResponse("response has no next_state line", text);
    out.reward_missing = !have_reward;
    return out;
}

// ---------------------------------------------------------------------------

LlmClient::LlmClient(LlmEndpointConfig cfg, std::shared_ptr<Transport> transport, Sleeper sleeper)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), sleeper_(std::move(sleeper)),
      cache_(resolve_cache_dir(cfg_))
{
    if (!sleeper_)
        sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

json LlmClient::fetch(const std::string& path, const json& body, std::uint64_t key)
{
    if (auto hit = cache_.get(key)) {
        if (hit->contains("response"))
            return (*hit)["response"];
    }
    if (cfg_.offline)
        throw OfflineMiss("offline mode: no cached response for request " + cache_.path_for(key).filename().string());
    if (cfg_.base_url.empty() || !transport_)
        throw TransportError("no endpoint configured", false);

    HttpRequest req;
    std::string base = cfg_.base_url;
    while (!base.empty() && base.back() == '/')
        base.pop_back();
    req.url = base + path;
    req.body = body.dump();
    req.timeout_seconds = cfg_.timeout_seconds;
    req.headers["Content-Type"] = "application/json";
    if (const char* key_value = std::getenv(cfg_.api_key_env.c_str()); key_value && *key_value)
        req.headers["Authorization"] = std::string("Bearer ") + key_value;

    std::string last_error;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        if (attempt > 0)
            sleeper_(std::chrono::milliseconds(500 << (attempt - 1)));
        HttpResponse resp;
        try {
            ++network_calls_;
            resp = transport_->post(req);
        } catch (const TransportError& e) {
            if (!e.retryable())
                throw;
            last_error = e.what();
            continue;
        }
        if (resp.status == 429 || resp.status >= 500) {
            last_error = "HTTP " + std::to_string(resp.status);
            continue;
        }
        if (resp.status < 200 || resp.status >= 300)
            throw TransportError("HTTP " + std::to_string(resp.status) + ": " + resp.body.substr(0, 200), false);
        json parsed;
        try {
            parsed = json::parse(resp.body);
        } catch (const json::exception&) {
            throw MalformedResponse("response body is not JSON", resp.body);
        }
        cache_.put(key, json{{"schema_version", schema_version},
                             {"key", hex64(key)},
                             {"request", body},
                             {"response", parsed}});
        return parsed;
    }
    throw TransportError("giving up after " + std::to_string(max_attempts) + " attempts: " + last_error, true);
}

json LlmClient::complete(const json& messages)
{
    json body = {{"model", cfg_.model},
                 {"messages", messages},
                 {"temperature", cfg_.temperature},
                 {"max_tokens", cfg_.max_tokens}};
    if (cfg_.logprobs)
        body["logprobs"] = true;
    const std::uint64_t key = ResponseCache::key(cfg_.model, messages.dump(), cfg_.temperature, cfg_.max_tokens);
    return fetch("/chat/completions", body, key);
}

std::vector<ActionProposal> LlmClient::propose_actions(const std::string& state_text, const std::string& task_prompt,
                                                       std::size_t k)
{
    if (k == 0)
        throw std::invalid_argument("propose_actions needs k >= 1");
    const json messages = json::array(
        {{{"role", "system"}, {"content", task_prompt}},
         {{"role", "user"},
          {"content", "Current state: " + state_text + "\nPropose up to " + std::to_string(k) +
                          " next actions. Output one action per line and nothing else."}}});
    return merge_proposals(parse_action_proposals(complete(messages), cfg_.logprobs), k, cfg_.renormalize_priors);
}

WorldStep LlmClient::world_step(const std::string& state_text, const std::string& action_text,
                                const std::string& world_prompt)
{
    json messages = json::array(
        {{{"role", "system"}, {"content", world_prompt}},
         {{"role", "user"},
          {"content", "State: " + state_text + "\nAction: " + action_text +
                          "\nAnswer with exactly two lines:\nnext_state: <state>\nreward: <number>"}}});
    auto content_of = [](const json& response) {
        if (!response.contains("choices") || response["choices"].empty() ||
            !response["choices"][0].contains("message") || !response["choices"][0]["message"].contains("content") ||
            !response["choices"][0]["message"]["content"].is_string())
            throw MalformedResponse("completion response has no message content", response.dump());
        return response["choices"][0]["message"]["content"].get<std::string>();
    };
    const std::string first = content_of(complete(messages));
    try {
        return parse_world_step(first);
    } catch (const MalformedResponse&) {
        messages.push_back({{"role", "assistant"}, {"content", first}});
        messages.push_back({{"role", "user"},
                            {"content", "That answer could not be parsed. Reply with exactly two lines:\n"
                                        "next_state: <state>\nreward: <number>"}});
        return parse_world_step(content_of(complete(messages)));
    }
}

Vector LlmClient::embed(const std::string& text)
{
    const std::string& model = cfg_.embedding_model.empty() ? cfg_.model : cfg_.embedding_model;
    const json body = {{"model", model}, {"input", text}};
    const json resp = fetch("/embeddings", body, ResponseCache::key(model, text, 0.0, 0));
    if (!resp.contains("data") || !resp["data"].is_array() || resp["data"].empty() ||
        !resp["data"][0].contains("embedding") || !resp["data"][0]["embedding"].is_array())
        throw MalformedResponse("embedding response has no data[0].embedding", resp.dump());
    Vector out;
    for (const json& v : resp["data"][0]["embedding"]) {
        if (!v.is_number())
            throw MalformedResponse("embedding contains a non-number", resp.dump());
        out.push_back(v.get<float>());
    }
    if (out.size() != cfg_.embedding_dim)
        throw MalformedResponse("embedding has dimension " + std::to_string(out.size()) + ", expected " +
                                    std::to_string(cfg_.embedding_dim),
                                resp.dump());
    return out;
}

// ---------------------------------------------------------------------------

HttpEmbedding::HttpEmbedding(std::shared_ptr<LlmClient> client) : client_(std::move(client))
{
    if (!client_)
        throw std::invalid_argument("HttpEmbedding needs a client");
}

std::size_t HttpEmbedding::dimension() const
{
    return client_->config().embedding_dim;
}

Vector HttpEmbedding::embed(std::string_view text)
{
    std::lock_guard lock(mutex_);
    if (auto it = memo_.find(text); it != memo_.end())
        return it->second;
    Vector v = client_->embed(std::string(text));
    memo_.emplace(std::string(text), v);
    return v;
}

LlmPolicy::LlmPolicy(std::shared_ptr<LlmClient> client, std::string task_prompt, std::size_t k)
    : client_(std::move(client)), task_prompt_(std::move(task_prompt)), k_(k)
{
    if (!client_)
        throw std::invalid_argument("LlmPolicy needs a client");
    if (k_ == 0)
        throw std::invalid_argument("LlmPolicy needs k >= 1");
}

std::vector<Proposal> LlmPolicy::propose(const std::string& state, const envs::Environment&)
{
    std::vector<Proposal> out;
    for (const ActionProposal& p : client_->propose_actions(state, task_prompt_, k_))
        out.push_back({p.action_text, p.prior});
    return out;
}

}  // namespace planu::llm
