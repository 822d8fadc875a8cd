#pragma once

#include <charconv>
#include <optional>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ptdp/session.hpp"

namespace ptdp {

/// HTTP+JSON front of a SessionStore.
///
///   POST   /sessions                  create (201, or 202 with "async": true)
///   GET    /sessions                  list ids
///   GET    /sessions/{id}             status and calibration summary
///   GET    /sessions/{id}/clusters    ?threshold=&connectivity=&voxels=1
///   POST   /sessions/{id}/drill       sub-clusters of one cluster, recorded in the drill tree
///   GET    /sessions/{id}/slice       ?axis=&index=&layer=stat|tdp[&threshold=|&node=]
///   GET    /sessions/{id}/history     drill tree
///   POST   /sessions/{id}/tdp         bound for an explicit subset
///   DELETE /sessions/{id}
class Service {
public:
    explicit Service(StoreOptions opts = {}) : store_(std::move(opts)) {}

    SessionStore& store() noexcept { return store_; }

    void mount(httplib::Server& srv) {
        srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
        srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });
        srv.Get("/health", [](const httplib::Request&, httplib::Response& res) {
            send(res, {200, {{"schema_version", schema_version}, {"status", "ok"}}});
        });
        srv.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { return store_.create(parse_body(req.body)); });
        });
        srv.Get("/sessions", [this](const httplib::Request&, httplib::Response& res) {
            send(res, {200, {{"schema_version", schema_version}, {"sessions", store_.ids()}}});
        });
        srv.Get(R"(/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
            with_session(req, res, [](Session& s) { return s.summary(); });
        });
        srv.Delete(R"(/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            if (!store_.remove(id)) return send(res, error_reply(404, "unknown session '" + id + "'"));
            send(res, {200, {{"schema_version", schema_version}, {"deleted", id}}});
        });
        srv.Get(R"(/sessions/([0-9a-f]+)/clusters)", [this](const httplib::Request& req, httplib::Response& res) {
            with_session(req, res, [&](Session& s) {
                auto z = threshold_param(req, "threshold");
                if (!z) return error_reply(422, "a finite threshold is required");
                return s.clusters(*z, connectivity_param(req), flag_param(req, "voxels"));
            });
        });
        srv.Post(R"(/sessions/([0-9a-f]+)/drill)", [this](const httplib::Request& req, httplib::Response& res) {
            with_session(req, res, [&](Session& s) {
                auto r = s.drill(parse_body(req.body));
                if (r.status == 200) store_.persist(s);
                return r;
            });
        });
        srv.Get(R"(/sessions/([0-9a-f]+)/slice)", [this](const httplib::Request& req, httplib::Response& res) {
            with_session(req, res, [&](Session& s) {
                const auto index = integer_param(req, "index");
                if (!index) return error_reply(400, "slice needs an integer index");
                std::optional<std::size_t> node;
                if (req.has_param("node")) {
                    auto n = integer_param(req, "node");
                    if (!n || *n < 0) return error_reply(400, "node must be a nonnegative integer");
                    node = static_cast<std::size_t>(*n);
                }
                return s.slice(req.get_param_value("axis"), *index,
                               req.has_param("layer") ? req.get_param_value("layer") : "stat",
                               threshold_param(req, "threshold"), connectivity_param(req), node);
            });
        });
        srv.Get(R"(/sessions/([0-9a-f]+)/history)", [this](const httplib::Request& req, httplib::Response& res) {
            with_session(req, res, [](Session& s) { return s.history(); });
        });
        srv.Post(R"(/sessions/([0-9a-f]+)/tdp)", [this](const httplib::Request& req, httplib::Response& res) {
            with_session(req, res, [&](Session& s) { return s.tdp(parse_body(req.body)); });
        });
    }

private:
    // 422 for a present but invalid threshold.
    struct bad_threshold : invalid_input {
        using invalid_input::invalid_input;
    };

    static void send(httplib::Response& res, const Reply& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    }

    static nlohmann::json parse_body(const std::string& body) {
        if (body.empty()) return nlohmann::json::object();
        return nlohmann::json::parse(body);
    }

    template <typename F>
    static void guarded(httplib::Response& res, F&& f) {
        try {
            send(res, f());
        } catch (const bad_threshold& e) {
            send(res, error_reply(422, e.what()));
        } catch (const nlohmann::json::exception& e) {
            send(res, error_reply(400, std::string("malformed request: ") + e.what()));
        } catch (const invalid_input& e) {
            send(res, error_reply(400, e.what()));
        } catch (const std::exception& e) {
            send(res, error_reply(500, e.what()));
        }
    }

    template <typename F>
    void with_session(const httplib::Request& req, httplib::Response& res, F&& f) {
        const std::string id = req.matches[1];
        auto s = store_.find(id);
        if (!s) return send(res, error_reply(404, "unknown session '" + id + "'"));
        guarded(res, [&] { return f(*s); });
    }

    static std::optional<double> threshold_param(const httplib::Request& req, const char* key) {
        if (!req.has_param(key)) return std::nullopt;
        const auto v = req.get_param_value(key);
        double z = 0.0;
        auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), z);
        if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(z))
            throw bad_threshold("invalid " + std::string(key) + " '" + v + "'");
        return z;
    }

    static std::optional<long> integer_param(const httplib::Request& req, const char* key) {
        if (!req.has_param(key)) return std::nullopt;
        const auto v = req.get_param_value(key);
        long x = 0;
        auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
        if (ec != std::errc() || ptr != v.data() + v.size()) return std::nullopt;
        return x;
    }

    static int connectivity_param(const httplib::Request& req) {
        if (!req.has_param("connectivity")) return 26;
        auto c = integer_param(req, "connectivity");
        if (!c) throw invalid_input("connectivity must be 6, 18 or 26");
        check_connectivity(static_cast<int>(*c));
        return static_cast<int>(*c);
    }

    static bool flag_param(const httplib::Request& req, const char* key) {
        if (!req.has_param(key)) return false;
        const auto v = req.get_param_value(key);
        return v == "1" || v == "true" || v == "yes";
    }

    SessionStore store_;
};

/// Splits "host:port"; a bare port binds to 127.0.0.1.
inline std::pair<std::string, int> parse_bind(const std::string& bind) {
    const auto colon = bind.rfind(':');
    std::string host = colon == std::string::npos ? "127.0.0.1" : bind.substr(0, colon);
    const std::string port = colon == std::string::npos ? bind : bind.substr(colon + 1);
    int p = 0;
    auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), p);
    if (ec != std::errc() || ptr != port.data() + port.size() || p < 0 || p > 65535)
        throw invalid_input("invalid bind address '" + bind + "' (expected host:port)");
    if (host.empty()) host = "127.0.0.1";
    return {host, p};
}

}  // namespace ptdp
