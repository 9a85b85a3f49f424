#pragma once

#include <string>

#include "unite/datagen.hpp"

namespace unite {

struct HttpProviderConfig {
    // "http://host:port/path"
    std::string endpoint = "http://127.0.0.1:8080/translate";
    int timeout_ms = 5000;
    int retries = 2;
};

// POSTs {"src": text, "lp": "xx-yy"} and expects {"mt": text} back. Each
// attempt is bounded by timeout_ms; a failure is retried `retries` times
// before ProviderError is thrown.
class HttpProvider final : public TranslationProvider {
public:
    explicit HttpProvider(HttpProviderConfig config);
    std::string translate(const TranslationRequest& request) override;
    std::string name() const override { return "http"; }

private:
    HttpProviderConfig config_;
    std::string host_;
    std::string path_;
};

}  // namespace unite
