#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "kge/embednet.hpp"

namespace httplib {
class Server;
}

namespace kge {

struct ServiceConfig {
  std::size_t max_sessions = 64;
  std::size_t max_rows = 200000;
  std::size_t max_body_bytes = 256u << 20;
  Hyperparams defaults;  // used for fields a train request leaves out
};

struct HttpRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct HttpResponse {
  int status = 200;
  std::string body;  // JSON
};

struct Session;

// Session-scoped JSON API over the analysis modules. handle() is transport
// independent and thread safe; bind() routes an httplib server to it.
class Service {
 public:
  explicit Service(ServiceConfig config = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  HttpResponse handle(const HttpRequest& req);
  void bind(httplib::Server& server);

  const ServiceConfig& config() const { return config_; }

 private:
  std::shared_ptr<Session> find(const std::string& id);

  ServiceConfig config_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::size_t next_id_ = 1;
};

}  // namespace kge
