#ifndef ONET_AGENT_HTTP_BACKEND_HPP
#define ONET_AGENT_HTTP_BACKEND_HPP

#include <cstdlib>
#include <string>

#include <httplib.h>

#include "backend.hpp"

namespace onet::agent {

struct HttpBackendConfig {
    std::string url;  // http://host[:port]/path
    std::string model = "gpt-4";
    std::string token_env = "ONET_BACKEND_TOKEN";
    int timeout_s = 30;
    int retries = 2;
};

/// Chat-completions client. Transport failures and 5xx replies are retried;
/// 4xx replies fail immediately.
class HttpBackend : public LlmBackend {
  public:
    explicit HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
        static const std::regex url_re(R"(^http://([^/:]+)(:(\d+))?(/.*)?$)");
        std::smatch m;
        if (!std::regex_match(cfg_.url, m, url_re))
            throw ConfigError("backend url must look like http://host[:port]/path, got '" + cfg_.url + "'");
        host_ = m[1].str();
        port_ = m[3].matched ? std::stoi(m[3].str()) : 80;
        path_ = m[4].matched ? m[4].str() : "/";
        if (const char* t = std::getenv(cfg_.token_env.c_str())) token_ = t;
    }

    std::string complete(const LlmRequest& request) override {
        httplib::Client cli(host_, port_);
        cli.set_connection_timeout(cfg_.timeout_s);
        cli.set_read_timeout(cfg_.timeout_s);
        cli.set_write_timeout(cfg_.timeout_s);
        if (!token_.empty()) cli.set_bearer_token_auth(token_);
        const auto body = to_json(request, cfg_.model).dump();
        std::string last_error;
        for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
            auto res = cli.Post(path_, body, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status >= 400 && res->status < 500)
                throw BackendError("backend rejected request with HTTP " + std::to_string(res->status) + ": " +
                                   res->body.substr(0, 200));
            if (res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            return parse_reply(res->body);
        }
        throw BackendError("backend unreachable after " + std::to_string(cfg_.retries + 1) + " attempts (" +
                           last_error + ")");
    }

    std::string id() const override { return "http:" + cfg_.model + "@" + host_ + ":" + std::to_string(port_); }
    bool deterministic() const override { return false; }

    static std::string parse_reply(const std::string& body) {
        json j;
        try {
            j = json::parse(body);
        } catch (const json::parse_error& e) {
            throw BackendError(std::string("backend reply is not JSON: ") + e.what());
        }
        const auto ptr = json::json_pointer("/choices/0/message/content");
        if (!j.contains(ptr) || !j.at(ptr).is_string()) throw BackendError("backend reply lacks choices[0].message.content");
        return j.at(ptr).get<std::string>();
    }

  private:
    HttpBackendConfig cfg_;
    std::string host_;
    int port_ = 80;
    std::string path_;
    std::string token_;
};

}  // namespace onet::agent

#endif  // ONET_AGENT_HTTP_BACKEND_HPP
