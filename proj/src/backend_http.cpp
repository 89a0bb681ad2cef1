#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <semaphore>

#include "a2r2/error.hpp"
#include "backend_impl.hpp"

namespace a2r2::backend {

namespace {

using nlohmann::json;
using Slots = std::counting_semaphore<1024>;

struct Url {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path prefix without trailing slash
};

Url split_url(const std::string& uri) {
    const auto scheme_end = uri.find("://");
    const auto path_start = uri.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    Url u{uri.substr(0, path_start), path_start == std::string::npos ? "" : uri.substr(path_start)};
    while (!u.prefix.empty() && u.prefix.back() == '/') u.prefix.pop_back();
    return u;
}

class HttpTransport : public Transport {
public:
    HttpTransport(const std::string& base_url, const HttpOptions& options, std::shared_ptr<Slots> slots)
        : url_(split_url(base_url)), client_(url_.origin), slots_(std::move(slots)) {
        if (!client_.is_valid()) throw ConfigError("invalid backend URL '" + base_url + "'");
        const auto secs = static_cast<time_t>(options.timeout_s);
        const auto usecs = static_cast<time_t>((options.timeout_s - static_cast<double>(secs)) * 1e6);
        client_.set_connection_timeout(std::min<time_t>(secs, 10), 0);
        client_.set_read_timeout(secs, usecs);
        client_.set_write_timeout(secs, usecs);
    }

    Capabilities capabilities() override {
        const json j = exchange([&] { return client_.Get(url_.prefix + "/v1/capabilities"); });
        try {
            return {j.value("attention", false), j.value("layers", 0)};
        } catch (const json::exception& e) {
            throw ProtocolError(std::string("malformed capabilities: ") + e.what());
        }
    }

    BackendResponse infer(const BackendRequest& request) override {
        const std::string body = request_to_json(request).dump();
        return response_from_json(
            exchange([&] { return client_.Post(url_.prefix + "/v1/infer", body, "application/json"); }));
    }

private:
    template <typename F>
    json exchange(F&& send) {
        httplib::Result res = [&] {
            if (!slots_) return send();
            slots_->acquire();
            struct Release {
                Slots& s;
                ~Release() { s.release(); }
            } release{*slots_};
            return send();
        }();
        if (!res) throw TransportError("HTTP request failed: " + httplib::to_string(res.error()));
        if (res->status >= 500 || res->status == 429 || res->status == 408) {
            throw TransportError("HTTP status " + std::to_string(res->status));
        }
        if (res->status != 200) {
            throw ProtocolError("HTTP status " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
        }
        try {
            return json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw ProtocolError(std::string("response is not JSON: ") + e.what());
        }
    }

    Url url_;
    httplib::Client client_;
    std::shared_ptr<Slots> slots_;
};

class HttpEndpoint : public Endpoint {
public:
    HttpEndpoint(std::string uri, const BackendSettings& settings)
        : uri_(std::move(uri)),
          options_{settings.request_timeout_s},
          slots_(std::make_shared<Slots>(std::clamp(settings.max_in_flight, 1, 1024))) {}

    std::unique_ptr<Transport> connect(const Instance&) override {
        return std::make_unique<HttpTransport>(uri_, options_, slots_);
    }
    std::string describe() const override { return uri_; }

private:
    std::string uri_;
    HttpOptions options_;
    std::shared_ptr<Slots> slots_;
};

}  // namespace

std::unique_ptr<Transport> make_http_transport(const std::string& base_url, const HttpOptions& options) {
    return std::make_unique<HttpTransport>(base_url, options, nullptr);
}

namespace detail {

std::unique_ptr<Endpoint> make_http_endpoint(const std::string& uri, const BackendSettings& settings) {
    return std::make_unique<HttpEndpoint>(uri, settings);
}

}  // namespace detail

}  // namespace a2r2::backend
