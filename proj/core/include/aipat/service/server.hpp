#pragma once

#include <memory>
#include <string>

#include "aipat/service/api.hpp"

namespace aipat::service {

/// HTTP/1.1 front end for an Api (cpp-httplib, thread pool).
class Server {
 public:
  explicit Server(Api& api);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and returns the port; port 0 picks a free one.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void listen();
  /// listen() on a background thread; returns once the socket accepts.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace aipat::service
