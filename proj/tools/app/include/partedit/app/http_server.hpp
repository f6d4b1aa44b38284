#pragma once

#include "partedit/app/service.hpp"

#include <memory>
#include <string>

namespace partedit::app {

/// HTTP/1.1 binding of an EditService. Requests for different sessions run
/// concurrently; the service serializes requests within one session.
class HttpServer {
 public:
  HttpServer(EditService& service, std::string cors_origin = "*");
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds host:port (port 0 picks a free one) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called. Requires a successful bind().
  bool listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace partedit::app
