#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>

#include "kdmd/edit.hpp"
#include "kdmd/fluid.hpp"
#include "kdmd/rom.hpp"

namespace kdmd {

struct HttpResult {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

// Frame payload: u32 width, u32 height, u32 channels (little-endian), then
// width*height*channels samples, f32 for "bin" and u8 for "raster". Rows run
// bottom to top for "bin" and top to bottom for "raster".
enum class FrameField { Density, Speed, Velocity };
enum class FrameFormat { Bin, Raster };

// Request handlers behind the HTTP routes. Handlers never throw; errors map to
// 400 (bad input), 404 (unknown session), 409 (inverse stepping blocked), 500.
class Service {
 public:
  explicit Service(ReducedModel model, std::optional<Dataset> data = std::nullopt);

  HttpResult model_info() const;
  HttpResult create_session(const std::string& body);
  HttpResult frame(const std::string& id, const std::string& k, const std::string& field,
                   const std::string& format) const;
  HttpResult force(const std::string& id, const std::string& body);
  HttpResult upres(const std::string& id, const std::string& body) const;
  HttpResult remove_session(const std::string& id);

  size_t session_count() const;
  const Rom& base() const { return base_; }

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id) const;

  Rom base_;
  std::optional<Dataset> data_;
  CVec default_z0_;
  Vec default_density_;

  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
};

// cpp-httplib front end. Binds once; listen() blocks until stop().
class HttpServer {
 public:
  explicit HttpServer(Service& svc);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace kdmd
