#include "rhythm/steerd.hpp"

#include <httplib.h>

#include <chrono>

namespace rhythm::steerd {

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump() + "\n", "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
    int status = 500;
    switch (e.kind()) {
        case ErrorKind::UnknownSession: status = 404; break;
        case ErrorKind::InvalidCommand:
        case ErrorKind::ConfigValidation: status = 400; break;
        case ErrorKind::BundleIncompatible: status = 422; break;
        default: break;
    }
    send_json(res, status, {{"error", e.what()}, {"kind", std::string(to_string(e.kind()))}});
}

SessionConfig session_from_json(const json& j, SessionConfig base) {
    if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("initial_state")) base.initial_state = j.at("initial_state").get<std::size_t>();
    if (j.contains("fps")) base.fps = j.at("fps").get<double>();
    if (j.contains("estimate_window")) base.estimate_window = j.at("estimate_window").get<long>();
    if (j.contains("queue_capacity")) base.queue_capacity = j.at("queue_capacity").get<std::size_t>();
    if (j.contains("replay_path")) base.replay_path = j.at("replay_path").get<std::string>();
    return base;
}

}  // namespace

struct Server::Impl {
    httplib::Server http;
    std::thread thread;
};

Server::Server(ServerOptions opts) : impl_(std::make_unique<Impl>()), opts_(std::move(opts)) {
    auto& http = impl_->http;
    sessions_.set_replay_dir(opts_.replay_dir);
    // httplib also sets SO_REUSEPORT, which lets a second server share the port silently
    http.set_socket_options([](socket_t sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
    });

    http.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
        json list = json::array();
        for (const auto& id : sessions_.ids()) {
            try {
                const auto s = sessions_.get(id);
                list.push_back({{"id", id},
                                {"frame", s->frame()},
                                {"mode", std::string(learner::to_string(s->mode()))},
                                {"running", s->running()}});
            } catch (const Error&) {
                // stopped between ids() and get()
            }
        }
        send_json(res, 200, {{"status", "ok"}, {"version", std::string(kVersion)}, {"sessions", list}});
    });

    http.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        try {
            json body = req.body.empty() ? json::object() : json::parse(req.body);
            std::string bundle = body.value("bundle", opts_.bundle);
            if (bundle.empty()) throw Error(ErrorKind::ConfigValidation, "request needs a bundle directory");
            const auto id = sessions_.start(bundle, session_from_json(body, opts_.session));
            send_json(res, 201, {{"session", id}});
        } catch (const Error& e) {
            send_error(res, e);
        } catch (const std::exception& e) {
            send_json(res, 400, {{"error", e.what()}, {"kind", "invalid-command"}});
        }
    });

    http.Post(R"(/sessions/([^/]+)/commands)", [this](const httplib::Request& req, httplib::Response& res) {
        try {
            const auto runner = sessions_.get(req.matches[1]);
            json body;
            try {
                body = json::parse(req.body);
            } catch (const json::exception& e) {
                throw Error(ErrorKind::InvalidCommand, std::string("body is not JSON: ") + e.what());
            }
            auto fut = runner->command(command_from_json(body));
            if (fut.wait_for(std::chrono::seconds(10)) != std::future_status::ready)
                throw Error(ErrorKind::UnknownSession, "session did not reach a frame boundary in time");
            send_json(res, 200, to_json(fut.get()));
        } catch (const Error& e) {
            send_error(res, e);
        }
    });

    http.Get(R"(/sessions/([^/]+)/stream)", [this](const httplib::Request& req, httplib::Response& res) {
        std::shared_ptr<SessionRunner> runner;
        try {
            runner = sessions_.get(req.matches[1]);
        } catch (const Error& e) {
            send_error(res, e);
            return;
        }
        auto sub = runner->subscribe();
        long limit = -1;
        if (req.has_param("frames")) limit = std::stol(req.get_param_value("frames"));
        auto sent = std::make_shared<long>(0);
        res.set_chunked_content_provider(
            "application/x-ndjson",
            [sub, limit, sent](std::size_t, httplib::DataSink& sink) {
                if (limit >= 0 && *sent >= limit) {
                    sink.done();
                    return true;
                }
                auto p = sub->pop(std::chrono::milliseconds(200));
                if (!p) {
                    if (sub->closed()) {
                        sink.write("{\"event\":\"session-ended\"}\n", 26);
                        sink.done();
                    }
                    return true;
                }
                const auto line = to_json(*p).dump() + "\n";
                if (!sink.write(line.data(), line.size())) return false;
                ++*sent;
                return true;
            },
            [runner, sub](bool) { runner->unsubscribe(sub); });
    });

    http.Delete(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        try {
            sessions_.stop(req.matches[1]);
            send_json(res, 200, {{"stopped", std::string(req.matches[1])}});
        } catch (const Error& e) {
            send_error(res, e);
        }
    });
}

Server::~Server() { stop(); }

void Server::start() {
    auto& http = impl_->http;
    if (opts_.port == 0) {
        port_ = http.bind_to_any_port(opts_.host);
        if (port_ <= 0) throw Error(ErrorKind::PortInUse, "could not bind any port on " + opts_.host);
    } else {
        if (!http.bind_to_port(opts_.host, opts_.port))
            throw Error(ErrorKind::PortInUse, "port " + std::to_string(opts_.port) + " is not available");
        port_ = opts_.port;
    }
    if (!opts_.bundle.empty()) sessions_.start(opts_.bundle, opts_.session);
    impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
    impl_->http.wait_until_ready();
}

void Server::wait() {
    if (impl_->thread.joinable()) impl_->thread.join();
}

void Server::stop() {
    if (!impl_) return;
    sessions_.stop_all();
    impl_->http.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace rhythm::steerd
