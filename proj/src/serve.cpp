#include "kdmd/serve.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <mutex>

#include <httplib.h>

#include "kdmd/error.hpp"
#include "kdmd/io.hpp"
#include "kdmd/upres.hpp"

namespace kdmd {

struct Service::Session {
  std::shared_ptr<const Rom> rom;  // edited copy
  CVec z0;                          // base-model coordinates at frame0
  std::int64_t frame0 = 0;
  Vec density0;
  mutable std::shared_mutex mu;
};

namespace {

struct HttpError : Error {
  HttpError(int s, const std::string& what) : Error(what), status(s) {}
  int status;
};

HttpResult json_result(const Json& j, int status = 200) { return {status, j.dump(), "application/json"}; }

HttpResult error_result(int status, const std::string& msg, const std::vector<int>* modes = nullptr) {
  Json j = {{"error", msg}};
  if (modes) j["modes"] = *modes;
  return json_result(j, status);
}

template <typename F>
HttpResult guarded(F&& f) {
  try {
    return f();
  } catch (const HttpError& e) {
    return error_result(e.status, e.what());
  } catch (const SpectralError& e) {
    return error_result(409, e.what(), &e.modes());
  } catch (const Json::exception& e) {
    return error_result(400, std::string("malformed body: ") + e.what());
  } catch (const DimensionError& e) {
    return error_result(400, e.what());
  } catch (const InvalidArgument& e) {
    return error_result(400, e.what());
  } catch (const FormatError& e) {
    return error_result(400, e.what());
  } catch (const std::exception& e) {
    return error_result(500, e.what());
  }
}

Json parse_body(const std::string& body) {
  if (body.empty()) return Json::object();
  Json j = Json::parse(body);
  if (!j.is_object()) throw HttpError(400, "request body must be a JSON object");
  return j;
}

std::int64_t parse_int(const std::string& s, const char* name) {
  std::int64_t v = 0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (s.empty() || res.ec != std::errc() || res.ptr != end)
    throw HttpError(400, std::string("query parameter ") + name + " must be an integer, got '" + s + "'");
  return v;
}

FrameField parse_field(const std::string& s) {
  if (s.empty() || s == "density") return FrameField::Density;
  if (s == "speed") return FrameField::Speed;
  if (s == "velocity") return FrameField::Velocity;
  throw HttpError(400, "field must be density, speed or velocity");
}

FrameFormat parse_format(const std::string& s) {
  if (s.empty() || s == "bin") return FrameFormat::Bin;
  if (s == "raster") return FrameFormat::Raster;
  throw HttpError(400, "format must be bin or raster");
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

// channels x cells, cell-major interleaving.
HttpResult encode_frame(const GridSpec& g, const std::vector<const Vec*>& chans, FrameFormat fmt) {
  std::string out;
  put_u32(out, static_cast<std::uint32_t>(g.nx));
  put_u32(out, static_cast<std::uint32_t>(g.ny));
  const auto nch = static_cast<std::uint32_t>(chans.size());
  if (fmt == FrameFormat::Bin) {
    put_u32(out, nch);
    out.reserve(12 + static_cast<size_t>(g.cells()) * nch * 4);
    for (int c = 0; c < g.cells(); ++c)
      for (const Vec* ch : chans) put_f32(out, static_cast<float>((*ch)[c]));
    return {200, std::move(out), "application/octet-stream"};
  }
  // Raster: one gray channel; the magnitude across channels scaled by its max.
  put_u32(out, 1);
  Vec mag = Vec::Zero(g.cells());
  for (const Vec* ch : chans) mag += ch->cwiseAbs2();
  mag = mag.cwiseSqrt();
  const double peak = mag.maxCoeff();
  for (int j = g.ny - 1; j >= 0; --j)
    for (int i = 0; i < g.nx; ++i) {
      const double t = peak > 0.0 ? mag[g.cell(i, j)] / peak : 0.0;
      out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(t, 0.0, 1.0)))));
    }
  return {200, std::move(out), "application/octet-stream"};
}

const GridSpec& require_grid(const Rom& rom) {
  if (!rom.model().grid) throw HttpError(400, "model carries no grid metadata; frames cannot be rendered");
  return *rom.model().grid;
}

MacField negate(MacField f) {
  f.u = -f.u;
  f.v = -f.v;
  return f;
}

HttpResult render(const GridSpec& g, const StateVector& state, const Vec* density, FrameField field,
                  FrameFormat fmt) {
  if (field == FrameField::Density) return encode_frame(g, {density}, fmt);
  const MacField vel = unflatten(state, g);
  Vec uc, vc;
  cell_centered_velocity(vel, uc, vc);
  if (field == FrameField::Velocity) return encode_frame(g, {&uc, &vc}, fmt);
  const Vec speed = (uc.cwiseAbs2() + vc.cwiseAbs2()).cwiseSqrt();
  return encode_frame(g, {&speed}, fmt);
}

// Reduced state at absolute frame k, plus the advected density when wanted.
CVec state_at(const Rom& rom, const CVec& z0, std::int64_t frame0, std::int64_t k, const Vec* density0,
              Vec* density_out) {
  const ReducedState s0{z0, frame0};
  const ReducedState sk = k >= frame0 ? rom.step_k(s0, k - frame0) : rom.inverse_step_k(s0, frame0 - k);
  if (density_out) {
    const GridSpec& g = require_grid(rom);
    ScalarField rho(g);
    rho.values = *density0;
    const double dt = rom.model().dt;
    ReducedState s = s0;
    while (s.frame != k) {
      if (k > s.frame) {
        s = rom.step(s);
        rho = advect_maccormack(unflatten(rom.decode(s), g), rho, dt);
      } else {
        rho = advect_maccormack(negate(unflatten(rom.decode(s), g)), rho, dt);
        s = rom.inverse_step(s);
      }
    }
    *density_out = rho.values;
  }
  return sk.z;
}

Vec impulse(const GridSpec& g, const Json& b) {
  const double x = b.at("x").get<double>();
  const double y = b.at("y").get<double>();
  const double dx = b.value("dx", 0.0);
  const double dy = b.value("dy", 0.0);
  const double radius = b.value("radius", 4.0 * g.h);
  const double scale = b.value("scale", 1.0);
  if (!(radius > 0.0)) throw HttpError(400, "radius must be positive");
  for (double v : {x, y, dx, dy, scale})
    if (!std::isfinite(v)) throw HttpError(400, "force parameters must be finite");
  MacField f(g);
  auto weight = [&](double px, double py) {
    const double d = std::hypot(px - x, py - y);
    return d < radius ? 1.0 - d / radius : 0.0;
  };
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i <= g.nx; ++i) f.u_at(i, j) = scale * dx * weight(i * g.h, (j + 0.5) * g.h);
  for (int j = 0; j <= g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) f.v_at(i, j) = scale * dy * weight((i + 0.5) * g.h, j * g.h);
  apply_boundary_mask(f);
  return flatten(f);
}

}  // namespace

Service::Service(ReducedModel model, std::optional<Dataset> data) : base_(std::move(model)), data_(std::move(data)) {
  const ReducedModel& m = base_.model();
  if (data_) {
    if (data_->snapshots.n() != m.n()) throw DimensionError("dataset state size differs from the model");
    default_z0_ = base_.encode(data_->snapshots.states.col(0)).z;
  } else {
    default_z0_ = CVec::Ones(m.r());
  }
  const int cells = m.grid ? m.grid->cells() : 0;
  if (data_ && data_->density.rows() == cells && data_->density.cols() > 0)
    default_density_ = data_->density.col(0);
  else
    default_density_ = Vec::Zero(cells);
}

std::shared_ptr<Service::Session> Service::find(const std::string& id) const {
  std::shared_lock lock(mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw HttpError(404, "unknown session '" + id + "'");
  return it->second;
}

size_t Service::session_count() const {
  std::shared_lock lock(mu_);
  return sessions_.size();
}

HttpResult Service::model_info() const {
  return guarded([&] {
    const ReducedModel& m = base_.model();
    Json eig = Json::array();
    for (Eigen::Index i = 0; i < m.r(); ++i) {
      const cplx l = m.lambda[i];
      eig.push_back({{"re", l.real()},
                     {"im", l.imag()},
                     {"modulus", std::abs(l)},
                     {"freq", std::abs(l) == 0.0 ? 0.0 : std::arg(l) / m.dt}});
    }
    const Clusters c = cluster_modes(m);
    return json_result({{"n", m.n()},
                        {"r", m.r()},
                        {"dt", m.dt},
                        {"grid", m.grid ? grid_to_json(*m.grid) : Json(nullptr)},
                        {"eigenvalues", eig},
                        {"clusters", {{"threshold", kDefaultClusterThreshold}, {"low", c.low}, {"high", c.high}}},
                        {"provenance", provenance_to_json(m.provenance)}});
  });
}

HttpResult Service::create_session(const std::string& body) {
  return guarded([&] {
    const Json b = parse_body(body);
    const EditSpec spec = edit_from_json(b.contains("edit") ? b.at("edit") : b);
    auto s = std::make_shared<Session>();
    s->rom = std::make_shared<const Rom>(apply_edit(base_.model(), spec));
    s->z0 = default_z0_;
    s->density0 = default_density_;
    if (b.contains("start_frame")) {
      const auto f = b.at("start_frame").get<std::int64_t>();
      if (!data_) throw HttpError(400, "start_frame needs the server to be started with a dataset");
      if (f < 0 || f >= data_->snapshots.frames()) throw HttpError(400, "start_frame outside the dataset");
      s->z0 = base_.encode(data_->snapshots.states.col(f)).z;
      if (data_->density.cols() > f && data_->density.rows() == s->density0.size())
        s->density0 = data_->density.col(f);
    }
    std::unique_lock lock(mu_);
    const std::string id = "s" + std::to_string(next_id_++);
    sessions_.emplace(id, std::move(s));
    return json_result({{"session_id", id}}, 201);
  });
}

HttpResult Service::frame(const std::string& id, const std::string& k, const std::string& field,
                          const std::string& format) const {
  return guarded([&] {
    const std::int64_t kk = parse_int(k, "k");
    const FrameField f = parse_field(field);
    const FrameFormat fmt = parse_format(format);
    const auto s = find(id);
    std::shared_lock lock(s->mu);
    Vec density;
    const CVec z = state_at(*s->rom, s->z0, s->frame0, kk, &s->density0,
                            f == FrameField::Density ? &density : nullptr);
    const StateVector vel = f == FrameField::Density ? StateVector() : s->rom->decode(z);
    return render(require_grid(*s->rom), vel, &density, f, fmt);
  });
}

HttpResult Service::force(const std::string& id, const std::string& body) {
  return guarded([&] {
    const Json b = parse_body(body);
    const auto s = find(id);
    std::unique_lock lock(s->mu);
    const Rom& rom = *s->rom;
    const GridSpec& g = require_grid(rom);
    const Vec f = impulse(g, b);
    const double dt = rom.model().dt;
    // Reduced coordinates stay in the base basis, so the force projects with the base pseudoinverse.
    ReducedState next = rom.step({s->z0, s->frame0});
    next.z += base_.encode(f).z * dt;
    ScalarField rho(g);
    rho.values = s->density0;
    rho = advect_maccormack(unflatten(rom.decode(next), g), rho, dt);
    s->z0 = next.z;
    s->frame0 = next.frame;
    s->density0 = rho.values;
    return json_result({{"frame", s->frame0}});
  });
}

HttpResult Service::upres(const std::string& id, const std::string& body) const {
  return guarded([&] {
    const Json b = parse_body(body);
    const auto s = find(id);
    std::shared_lock lock(s->mu);
    const Rom& rom = *s->rom;
    require_grid(rom);
    UpresConfig cfg;
    cfg.factor = b.value("factor", 2);
    cfg.split = b.value("split", 0);
    cfg.project = b.value("project", true);
    cfg.blend = b.value("blend", std::vector<double>{});
    const auto low = b.at("low").get<std::vector<double>>();
    const Upscaler up(rom, cfg);
    const std::int64_t k = b.value("k", s->frame0);
    const CVec z = state_at(rom, s->z0, s->frame0, k, nullptr, nullptr);
    const UpresStep st = up.step_full({z, k}, Eigen::Map<const Vec>(low.data(), static_cast<Eigen::Index>(low.size())));
    const FrameField f = parse_field(b.value("field", std::string("speed")));
    if (f == FrameField::Density) throw HttpError(400, "upres returns velocity fields only");
    return render(require_grid(rom), st.H, nullptr, f, parse_format(b.value("format", std::string("bin"))));
  });
}

HttpResult Service::remove_session(const std::string& id) {
  return guarded([&] {
    std::unique_lock lock(mu_);
    if (sessions_.erase(id) == 0) throw HttpError(404, "unknown session '" + id + "'");
    return json_result({{"deleted", id}});
  });
}

struct HttpServer::Impl {
  Service& svc;
  httplib::Server server;
  explicit Impl(Service& s) : svc(s) {}
};

HttpServer::HttpServer(Service& svc) : impl_(std::make_unique<Impl>(svc)) {
  auto& srv = impl_->server;
  Service& s = svc;
  auto reply = [](httplib::Response& res, const HttpResult& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
  srv.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  srv.Get("/api/model", [&s, reply](const httplib::Request&, httplib::Response& res) { reply(res, s.model_info()); });
  srv.Post("/api/session", [&s, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, s.create_session(req.body));
  });
  srv.Get(R"(/api/session/([^/]+)/frame)", [&s, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, s.frame(req.matches[1], req.get_param_value("k"), req.get_param_value("field"),
                       req.get_param_value("format")));
  });
  srv.Post(R"(/api/session/([^/]+)/force)", [&s, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, s.force(req.matches[1], req.body));
  });
  srv.Post(R"(/api/session/([^/]+)/upres)", [&s, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, s.upres(req.matches[1], req.body));
  });
  srv.Delete(R"(/api/session/([^/]+))", [&s, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, s.remove_session(req.matches[1]));
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  auto& srv = impl_->server;
  if (port == 0) {
    const int p = srv.bind_to_any_port(host);
    if (p < 0) throw Error("cannot bind " + host);
    return p;
  }
  if (!srv.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace kdmd
