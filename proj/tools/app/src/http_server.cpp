#include "partedit/app/http_server.hpp"

#include <httplib.h>

namespace partedit::app {

struct HttpServer::Impl {
  EditService& service;
  std::string cors_origin;
  httplib::Server server;

  Impl(EditService& s, std::string origin) : service(s), cors_origin(std::move(origin)) {}

  void reply(const httplib::Request& req, httplib::Response& res) {
    const auto r = service.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  }
};

HttpServer::HttpServer(EditService& service, std::string cors_origin)
    : impl_(std::make_unique<Impl>(service, std::move(cors_origin))) {
  auto& srv = impl_->server;
  const std::string origin = impl_->cors_origin;
  srv.set_default_headers({{"Access-Control-Allow-Origin", origin},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  auto handler = [this](const httplib::Request& req, httplib::Response& res) { impl_->reply(req, res); };
  srv.Get(R"(/.*)", handler);
  srv.Post(R"(/.*)", handler);
  srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpServer::listen() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace partedit::app
