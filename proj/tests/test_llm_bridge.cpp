#include "planu/llm_bridge.hpp"

#include <doctest.h>

#include <atomic>
#include <deque>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

using namespace planu;
using namespace planu::llm;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_fixture(const std::string& name)
{
    std::ifstream in(fs::path(PLANU_FIXTURES) / name);
    REQUIRE(in);
    return json::parse(in);
}

fs::path fresh_dir(const std::string& tag)
{
    static std::atomic<int> counter{0};
    const fs::path dir = fs::temp_directory_path() /
                         ("planu-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(dir);
    return dir;
}

/// Replays scripted responses and records every request.
class StubTransport final : public Transport {
public:
    std::deque<HttpResponse> script;
    std::deque<bool> failures;  ///< true: throw a retryable TransportError instead
    std::vector<HttpRequest> requests;

    HttpResponse post(const HttpRequest& request) override
    {
        requests.push_back(request);
        if (!failures.empty()) {
            const bool fail = failures.front();
            failures.pop_front();
            if (fail)
                throw TransportError("connection refused", true);
        }
        REQUIRE_FALSE(script.empty());
        HttpResponse r = script.front();
        script.pop_front();
        return r;
    }
};

json chat(const std::string& content)
{
    return {{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}};
}

LlmEndpointConfig endpoint(const fs::path& cache)
{
    LlmEndpointConfig cfg;
    cfg.base_url = "http://llm.invalid/v1/";
    cfg.model = "fixture-model";
    cfg.cache_dir = cache;
    return cfg;
}

}  // namespace

TEST_SUITE("llm_bridge")
{
    TEST_CASE("prior is the product of token probabilities")
    {
        const auto props = parse_action_proposals(load_fixture("chat_two_tokens.json"), true);
        REQUIRE(props.size() == 1);
        CHECK(props[0].action_text == "pickup(red)");
        CHECK(props[0].tokens.size() == 2);
        CHECK(props[0].prior == doctest::Approx(0.72).epsilon(1e-12));
    }

    TEST_CASE("list markers are stripped and duplicates merge with a cap")
    {
        const auto raw = parse_action_proposals(load_fixture("chat_list.json"), true);
        REQUIRE(raw.size() == 3);
        CHECK(raw[0].action_text == "buy_a");
        CHECK(raw[1].action_text == "buy_b");
        CHECK(raw[2].action_text == "buy_a");
        // " buy" and "_a" overlap the first action; "1" and "." do not
        CHECK(raw[0].prior == doctest::Approx(0.8));
        CHECK(raw[1].prior == doctest::Approx(0.5));
        CHECK(raw[2].prior == doctest::Approx(0.7));

        const auto merged = merge_proposals(raw, 5, false);
        REQUIRE(merged.size() == 2);
        CHECK(merged[0].action_text == "buy_a");
        CHECK(merged[0].prior == 1.0);
        CHECK(merged[1].prior == doctest::Approx(0.5));

        const auto top1 = merge_proposals(raw, 1, false);
        CHECK(top1.size() == 1);
        const auto norm = merge_proposals(raw, 5, true);
        CHECK(norm[0].prior + norm[1].prior == doctest::Approx(1.0));
        CHECK(norm[0].prior == doctest::Approx(1.0 / 1.5));
    }

    TEST_CASE("without logprobs each proposal gets 1/n")
    {
        const auto props = parse_action_proposals(chat("a\nb\nc\nd"), false);
        REQUIRE(props.size() == 4);
        for (const auto& p : props)
            CHECK(p.prior == 0.25);
        CHECK_THROWS_AS(parse_action_proposals(json{{"choices", json::array()}}, true), MalformedResponse);
        CHECK_THROWS_AS(parse_action_proposals(json::array(), true), MalformedResponse);
    }

    TEST_CASE("world-step responses")
    {
        const auto w = parse_world_step("next_state: on(red,blue) handempty\nreward: 0.5\n");
        CHECK(w.next_state == "on(red,blue) handempty");
        CHECK(w.reward == 0.5);
        CHECK_FALSE(w.reward_missing);
        const auto m = parse_world_step("Next_State: s1");
        CHECK(m.reward_missing);
        CHECK(m.reward == 0.0);
        try {
            parse_world_step("I think the block falls over.");
            FAIL("expected MalformedResponse");
        } catch (const MalformedResponse& e) {
            CHECK(e.raw() == "I think the block falls over.");
        }
        CHECK_THROWS_AS(parse_world_step("next_state: s\nreward: lots"), MalformedResponse);
    }

    TEST_CASE("responses are cached and replayed without network calls")
    {
        const auto dir = fresh_dir("cache");
        auto transport = std::make_shared<StubTransport>();
        transport->script.push_back({200, load_fixture("chat_two_tokens.json").dump()});
        LlmClient client(endpoint(dir), transport);
        const auto first = client.propose_actions("ontable(red)", "stack blocks", 3);
        CHECK(client.network_calls() == 1);
        REQUIRE(transport->requests.size() == 1);
        CHECK(transport->requests[0].url == "http://llm.invalid/v1/chat/completions");
        const auto body = json::parse(transport->requests[0].body);
        CHECK(body["model"] == "fixture-model");
        CHECK(body["logprobs"] == true);

        const auto second = client.propose_actions("ontable(red)", "stack blocks", 3);
        CHECK(client.network_calls() == 1);
        REQUIRE(second.size() == 1);
        CHECK(second[0].prior == first[0].prior);

        // cache files carry the request next to the response
        std::size_t files = 0;
        for (const auto& entry : fs::directory_iterator(dir)) {
            ++files;
            std::ifstream in(entry.path());
            const auto j = json::parse(in);
            CHECK(j["schema_version"] == 1);
            CHECK(j.contains("request"));
            CHECK(j["response"]["choices"][0]["message"]["content"] == "pickup(red)");
        }
        CHECK(files == 1);

        // a fresh client in offline mode replays the same file
        auto cfg = endpoint(dir);
        cfg.offline = true;
        LlmClient offline(cfg, nullptr);
        CHECK(offline.propose_actions("ontable(red)", "stack blocks", 3)[0].prior == doctest::Approx(0.72));
        fs::remove_all(dir);
    }

    TEST_CASE("offline miss is an explicit error")
    {
        const auto dir = fresh_dir("offline");
        auto cfg = endpoint(dir);
        cfg.offline = true;
        auto transport = std::make_shared<StubTransport>();
        LlmClient client(cfg, transport);
        CHECK_THROWS_AS(client.propose_actions("s", "task", 2), OfflineMiss);
        CHECK(transport->requests.empty());
    }

    TEST_CASE("retryable failures back off and give up after three attempts")
    {
        const auto dir = fresh_dir("retry");
        auto transport = std::make_shared<StubTransport>();
        std::vector<long long> sleeps;
        auto sleeper = [&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); };

        transport->failures = {true};
        transport->script = {{503, "busy"}, {200, chat("buy_a").dump()}};
        LlmClient client(endpoint(dir), transport, sleeper);
        const auto props = client.propose_actions("s", "task", 2);
        CHECK(props.size() == 1);
        CHECK(client.network_calls() == 3);
        CHECK(sleeps == std::vector<long long>{500, 1000});

        sleeps.clear();
        transport->script = {{429, ""}, {500, ""}, {502, ""}};
        try {
            client.propose_actions("other state", "task", 2);
            FAIL("expected TransportError");
        } catch (const TransportError& e) {
            CHECK(e.retryable());
        }
        CHECK(sleeps == std::vector<long long>{500, 1000});

        transport->script = {{401, "unauthorized"}};
        try {
            client.propose_actions("third state", "task", 2);
            FAIL("expected TransportError");
        } catch (const TransportError& e) {
            CHECK_FALSE(e.retryable());
        }

        transport->script = {{200, "not json"}};
        CHECK_THROWS_AS(client.propose_actions("fourth state", "task", 2), MalformedResponse);
        fs::remove_all(dir);
    }

    TEST_CASE("world_step repairs once")
    {
        const auto dir = fresh_dir("world");
        auto transport = std::make_shared<StubTransport>();
        transport->script = {{200, chat("The red block is now held.").dump()},
                             {200, chat("next_state: holding(red)\nreward: 0").dump()}};
        LlmClient client(endpoint(dir), transport, [](auto) {});
        const auto w = client.world_step("ontable(red)", "pickup(red)", "blocks world");
        CHECK(w.next_state == "holding(red)");
        REQUIRE(transport->requests.size() == 2);
        const auto repair = json::parse(transport->requests[1].body);
        CHECK(repair["messages"].size() == 4);

        transport->script = {{200, chat("no idea").dump()}, {200, chat("still no idea").dump()}};
        CHECK_THROWS_AS(client.world_step("ontable(blue)", "pickup(blue)", "blocks world"), MalformedResponse);
        fs::remove_all(dir);
    }

    TEST_CASE("embeddings are checked and cached")
    {
        const auto dir = fresh_dir("embed");
        auto cfg = endpoint(dir);
        cfg.embedding_dim = 3;
        cfg.embedding_model = "embedder";
        auto transport = std::make_shared<StubTransport>();
        transport->script = {{200, json{{"data", json::array({{{"embedding", {0.1, 0.2, 0.3}}}})}}.dump()},
                             {200, json{{"data", json::array({{{"embedding", {0.1, 0.2}}}})}}.dump()}};
        auto client = std::make_shared<LlmClient>(cfg, transport);
        HttpEmbedding emb(client);
        CHECK(emb.dimension() == 3);
        const auto v = emb.embed("state one");
        CHECK(v == Vector{0.1f, 0.2f, 0.3f});
        CHECK(emb.embed("state one") == v);
        CHECK(client->network_calls() == 1);
        CHECK(transport->requests[0].url == "http://llm.invalid/v1/embeddings");
        CHECK(json::parse(transport->requests[0].body)["model"] == "embedder");
        CHECK_THROWS_AS(emb.embed("state two"), MalformedResponse);
        fs::remove_all(dir);
    }

    TEST_CASE("llm policy feeds proposals to the planner")
    {
        const auto dir = fresh_dir("policy");
        auto transport = std::make_shared<StubTransport>();
        transport->script = {{200, load_fixture("chat_list.json").dump()}};
        auto client = std::make_shared<LlmClient>(endpoint(dir), transport);
        LlmPolicy policy(client, "invest", 2);
        envs::StockEnv env;
        const auto props = policy.propose(std::string(envs::StockEnv::initial_state), env);
        REQUIRE(props.size() == 2);
        CHECK(props[0].action == "buy_a");
        CHECK(props[0].prior == 1.0);
        fs::remove_all(dir);
    }

    TEST_CASE("cache keys separate every request field")
    {
        const auto k = ResponseCache::key("m", "p", 0.0, 10);
        CHECK(k == ResponseCache::key("m", "p", 0.0, 10));
        CHECK(k != ResponseCache::key("m2", "p", 0.0, 10));
        CHECK(k != ResponseCache::key("m", "p2", 0.0, 10));
        CHECK(k != ResponseCache::key("m", "p", 0.5, 10));
        CHECK(k != ResponseCache::key("m", "p", 0.0, 11));
        CHECK(ResponseCache::key("ab", "c", 0, 1) != ResponseCache::key("a", "bc", 0, 1));
    }
}
