#include <chrono>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "survwright/error.hpp"
#include "survwright/service.hpp"

namespace survwright::service {

struct Server::Impl {
  const Registry& registry;
  httplib::Server http;

  explicit Impl(const Registry& r) : registry(r) {}
};

namespace {

template <class F>
void serve_logged(const httplib::Request& req, httplib::Response& res, F&& handler) {
  const auto start = std::chrono::steady_clock::now();
  const HttpResult result = handler();
  res.status = result.status;
  res.set_content(result.body, "application/json");
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  spdlog::info("{} {} -> {} ({:.2f} ms) request={} response={}", req.method, req.path, result.status, ms, req.body,
               result.body);
}

}  // namespace

Server::Server(const Registry& registry) : impl_(std::make_unique<Impl>(registry)) {
  if (registry.empty()) throw Error("config", "no model bundles loaded");
  auto& http = impl_->http;
  const Registry& reg = registry;
  http.Get("/v1/models", [&reg](const httplib::Request& req, httplib::Response& res) {
    serve_logged(req, res, [&] { return handle_models(reg); });
  });
  http.Post("/v1/score", [&reg](const httplib::Request& req, httplib::Response& res) {
    serve_logged(req, res, [&] { return handle_score(reg, req.body); });
  });
  http.Post("/v1/whatif", [&reg](const httplib::Request& req, httplib::Response& res) {
    serve_logged(req, res, [&] { return handle_whatif(reg, req.body); });
  });
  http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    res.set_content(error_body(res.status == 404 ? "not_found" : "http", "no such endpoint").dump(),
                    "application/json");
  });
}

Server::~Server() = default;

int Server::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->http.bind_to_any_port(host);
    if (bound < 0) throw Error("io", "cannot bind " + host);
    return bound;
  }
  if (!impl_->http.bind_to_port(host, port)) throw Error("io", "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void Server::listen() { impl_->http.listen_after_bind(); }

void Server::stop() { impl_->http.stop(); }

}  // namespace survwright::service
