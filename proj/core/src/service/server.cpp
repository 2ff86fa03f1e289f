#include "aipat/service/server.hpp"

#include <httplib.h>

#include <cctype>
#include <thread>

namespace aipat::service {

struct Server::Impl {
  Api& api;
  httplib::Server http;
  std::thread worker;

  explicit Impl(Api& a) : api(a) {}

  void serve(const httplib::Request& in, httplib::Response& out) {
    HttpRequest req;
    req.method = in.method;
    req.path = in.path;
    req.body = in.body;
    for (const auto& [k, v] : in.params) req.query.emplace(k, v);
    for (const auto& [k, v] : in.headers) {
      std::string name = k;
      for (auto& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      req.headers.emplace(std::move(name), v);
    }
    const HttpResponse res = api.handle(req);
    out.status = res.status;
    out.set_content(res.body, res.content_type.c_str());
  }
};

Server::Server(Api& api) : impl_(std::make_unique<Impl>(api)) {
  auto handler = [this](const httplib::Request& in, httplib::Response& out) { impl_->serve(in, out); };
  impl_->http.Get(".*", handler);
  impl_->http.Post(".*", handler);
  impl_->http.Put(".*", handler);
  impl_->http.Delete(".*", handler);
  impl_->http.Patch(".*", handler);
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->http.bind_to_any_port(host);
    if (bound < 0) fail(ErrorKind::io, "cannot bind " + host);
    return bound;
  }
  if (!impl_->http.bind_to_port(host, port)) fail(ErrorKind::io, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void Server::listen() { impl_->http.listen_after_bind(); }

void Server::start() {
  impl_->worker = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
}

void Server::stop() {
  impl_->http.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace aipat::service
