#include "unite/http_provider.hpp"

#include <chrono>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

namespace unite {

HttpProvider::HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
    const std::string& url = config_.endpoint;
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) {
        throw UsageError(fmt::format("provider endpoint '{}' has no scheme", url));
    }
    if (url.compare(0, scheme, "http") != 0) {
        throw UsageError(fmt::format("provider endpoint '{}': only http:// is supported", url));
    }
    const auto path_start = url.find('/', scheme + 3);
    host_ = url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
    if (config_.timeout_ms <= 0) throw UsageError("provider timeout must be positive");
    if (config_.retries < 0) throw UsageError("provider retries must be non-negative");
}

std::string HttpProvider::translate(const TranslationRequest& request) {
    httplib::Client client(host_);
    const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    const std::string body = nlohmann::json{{"src", request.src}, {"lp", request.lp.str()}}.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        auto res = client.Post(path_, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = fmt::format("HTTP {}", res->status);
            continue;
        }
        try {
            const auto reply = nlohmann::json::parse(res->body);
            return reply.at("mt").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            last_error = fmt::format("bad response: {}", e.what());
        }
    }
    throw ProviderError(fmt::format("{} failed after {} attempts: {}", config_.endpoint, config_.retries + 1,
                                    last_error));
}

}  // namespace unite
