#include "planu/llm_bridge.hpp"

#include <httplib.h>

namespace planu::llm {

namespace {

class HttplibTransport final : public Transport {
public:
    HttpResponse post(const HttpRequest& request) override
    {
        // Split "scheme://host[:port]/path" into client origin and path.
        const auto scheme_end = request.url.find("://");
        if (scheme_end == std::string::npos)
            throw TransportError("URL has no scheme: " + request.url, false);
        const auto path_begin = request.url.find('/', scheme_end + 3);
        const std::string origin = request.url.substr(0, path_begin);
        const std::string path = path_begin == std::string::npos ? "/" : request.url.substr(path_begin);

        httplib::Client client(origin);
        if (!client.is_valid())
            throw TransportError("unsupported endpoint " + origin, false);
        const auto secs = static_cast<time_t>(request.timeout_seconds);
        const auto usecs = static_cast<time_t>((request.timeout_seconds - static_cast<double>(secs)) * 1e6);
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);

        httplib::Headers headers;
        std::string content_type = "application/json";
        for (const auto& [k, v] : request.headers) {
            if (k == "Content-Type")
                content_type = v;
            else
                headers.emplace(k, v);
        }
        auto result = client.Post(path, headers, request.body, content_type);
        if (!result)
            throw TransportError("request to " + request.url + " failed: " + httplib::to_string(result.error()), true);
        return {result->status, result->body};
    }
};

}  // namespace

std::unique_ptr<Transport> make_http_transport()
{
    return std::make_unique<HttplibTransport>();
}

}  // namespace planu::llm
