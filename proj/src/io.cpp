#include "kdmd/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <zlib.h>

#include "kdmd/error.hpp"

namespace kdmd {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'K', 'D', 'M', 'D'};

template <typename T>
T to_le(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    v = to_le(v);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf.insert(buf.end(), p, p + sizeof(T));
  }
  void raw(const void* p, size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  void text(const std::string& s) {
    put<std::uint64_t>(s.size());
    raw(s.data(), s.size());
  }
  Bytes buf;
};

class Reader {
 public:
  Reader(const Bytes& b, size_t limit) : b_(b), limit_(limit) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_le(v);
  }
  std::string text() {
    const auto len = get<std::uint64_t>();
    need(len);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), static_cast<size_t>(len));
    pos_ += static_cast<size_t>(len);
    return s;
  }
  void need(std::uint64_t n) const {
    if (n > limit_ - pos_)
      throw SizeMismatch("file ends at byte " + std::to_string(limit_) + " but " + std::to_string(n) +
                         " more bytes are needed at offset " + std::to_string(pos_));
  }
  void skip(std::uint64_t n) {
    need(n);
    pos_ += static_cast<size_t>(n);
  }
  size_t pos() const { return pos_; }

 private:
  const Bytes& b_;
  size_t limit_;
  size_t pos_ = 0;
};

std::string scene_kind_name(SceneKind k) { return k == SceneKind::Plume ? "plume" : "buoyant"; }

SceneKind scene_kind_from(const std::string& s) {
  if (s == "plume") return SceneKind::Plume;
  if (s == "buoyant") return SceneKind::Buoyant;
  throw InvalidArgument("unknown scene kind '" + s + "'");
}

Json disk_to_json(const Disk& d) { return {{"cx", d.cx}, {"cy", d.cy}, {"radius", d.radius}}; }
Disk disk_from_json(const Json& j) {
  return {j.at("cx").get<double>(), j.at("cy").get<double>(), j.at("radius").get<double>()};
}

template <typename F>
auto parse_guard(const std::string& what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw FormatError(what + ": " + e.what());
  }
}

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, size_t len) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  while (len > 0) {
    const auto chunk = static_cast<uInt>(std::min<size_t>(len, std::numeric_limits<uInt>::max()));
    c = ::crc32(c, data, chunk);
    data += chunk;
    len -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

Json grid_to_json(const GridSpec& g) {
  Json solid = Json::array();
  for (int c = 0; c < g.cells(); ++c)
    if (!g.solid.empty() && g.solid[static_cast<size_t>(c)]) solid.push_back(c);
  return {{"nx", g.nx}, {"ny", g.ny}, {"h", g.h}, {"boundary", to_string(g.boundary)}, {"solid_cells", solid}};
}

GridSpec grid_from_json(const Json& j) {
  return parse_guard("grid", [&] {
    GridSpec g(j.at("nx").get<int>(), j.at("ny").get<int>(), j.at("h").get<double>(),
               boundary_from_string(j.value("boundary", std::string("closed"))));
    const auto& solid = j.contains("solid_cells") ? j.at("solid_cells") : Json::array();
    if (!solid.empty()) {
      g.solid.assign(static_cast<size_t>(g.cells()), 0);
      for (const auto& c : solid) {
        const int idx = c.get<int>();
        if (idx < 0 || idx >= g.cells()) throw FormatError("solid cell index out of range");
        g.solid[static_cast<size_t>(idx)] = 1;
      }
    }
    g.validate();
    return g;
  });
}

Json provenance_to_json(const Provenance& p) {
  return {{"method", to_string(p.method)},   {"svd", to_string(p.svd)},
          {"seed", p.seed},                  {"residual", p.residual},
          {"unstable", p.unstable},          {"lm_iterations", p.lm_iterations},
          {"lm_converged", p.lm_converged}, {"edited", p.edited}};
}

Provenance provenance_from_json(const Json& j) {
  return parse_guard("provenance", [&] {
    Provenance p;
    p.method = dmd_method_from_string(j.at("method").get<std::string>());
    p.svd = svd_mode_from_string(j.at("svd").get<std::string>());
    p.seed = j.at("seed").get<std::uint64_t>();
    p.residual = j.at("residual").get<double>();
    p.unstable = j.at("unstable").get<bool>();
    p.lm_iterations = j.value("lm_iterations", 0);
    p.lm_converged = j.value("lm_converged", true);
    p.edited = j.value("edited", false);
    return p;
  });
}

Json edit_to_json(const EditSpec& e) {
  return {{"weights", e.weights},
          {"growth_scale", e.growth_scale},
          {"freq_scale", e.freq_scale},
          {"cluster_threshold", e.cluster_threshold}};
}

EditSpec edit_from_json(const Json& j) {
  return parse_guard("edit spec", [&] {
    if (!j.is_object()) throw FormatError("edit spec must be an object");
    EditSpec e;
    e.weights = j.value("weights", std::vector<double>{});
    e.growth_scale = j.value("growth_scale", std::vector<double>{});
    e.freq_scale = j.value("freq_scale", std::vector<double>{});
    e.cluster_threshold = j.value("cluster_threshold", kDefaultClusterThreshold);
    return e;
  });
}

Json scene_to_json(const SceneConfig& s) {
  Json sources = Json::array();
  for (const auto& e : s.params.sources)
    sources.push_back({{"region", disk_to_json(e.region)},
                       {"density_rate", e.density_rate},
                       {"temperature_rate", e.temperature_rate}});
  Json obstacles = Json::array();
  for (const auto& d : s.obstacles) obstacles.push_back(disk_to_json(d));
  Json regions = Json::array();
  for (const auto& d : s.regions) regions.push_back(disk_to_json(d));
  GridSpec g = s.grid;
  g.solid.clear();  // rebuilt from obstacles
  return {{"name", s.name},
          {"kind", scene_kind_name(s.kind)},
          {"grid", grid_to_json(g)},
          {"params",
           {{"dt", s.params.dt},
            {"buoyancy_alpha", s.params.buoyancy_alpha},
            {"buoyancy_beta", s.params.buoyancy_beta},
            {"vorticity_eps", s.params.vorticity_eps},
            {"cg_tol", s.params.cg_tol},
            {"cg_max_iters", s.params.cg_max_iters},
            {"sources", sources}}},
          {"frames", s.frames},
          {"warmup_frames", s.warmup_frames},
          {"record_every", s.record_every},
          {"obstacles", obstacles},
          {"regions", regions},
          {"region_up_velocity", s.region_up_velocity},
          {"outside_down_velocity", s.outside_down_velocity}};
}

SceneConfig scene_from_json(const Json& j) {
  return parse_guard("scene", [&] {
    SceneConfig s;
    s.kind = scene_kind_from(j.value("kind", std::string("plume")));
    if (j.contains("grid")) {
      const Json& g = j.at("grid");
      s = s.kind == SceneKind::Plume ? plume_scene(g.at("nx").get<int>(), g.at("ny").get<int>())
                                     : buoyant_scene(g.at("nx").get<int>(), g.at("ny").get<int>());
      s.grid = grid_from_json(g);
    }
    s.name = j.value("name", s.name);
    if (j.contains("params")) {
      const Json& p = j.at("params");
      s.params.dt = p.value("dt", s.params.dt);
      s.params.buoyancy_alpha = p.value("buoyancy_alpha", s.params.buoyancy_alpha);
      s.params.buoyancy_beta = p.value("buoyancy_beta", s.params.buoyancy_beta);
      s.params.vorticity_eps = p.value("vorticity_eps", s.params.vorticity_eps);
      s.params.cg_tol = p.value("cg_tol", s.params.cg_tol);
      s.params.cg_max_iters = p.value("cg_max_iters", s.params.cg_max_iters);
      if (p.contains("sources")) {
        s.params.sources.clear();
        for (const auto& e : p.at("sources"))
          s.params.sources.push_back({disk_from_json(e.at("region")), e.value("density_rate", 0.0),
                                      e.value("temperature_rate", 0.0)});
      }
    }
    s.frames = j.value("frames", s.frames);
    s.warmup_frames = j.value("warmup_frames", s.warmup_frames);
    s.record_every = j.value("record_every", s.record_every);
    if (j.contains("obstacles")) {
      s.obstacles.clear();
      for (const auto& d : j.at("obstacles")) s.obstacles.push_back(disk_from_json(d));
    }
    if (j.contains("regions")) {
      s.regions.clear();
      for (const auto& d : j.at("regions")) s.regions.push_back(disk_from_json(d));
    }
    s.region_up_velocity = j.value("region_up_velocity", s.region_up_velocity);
    s.outside_down_velocity = j.value("outside_down_velocity", s.outside_down_velocity);
    s.validate();
    return s;
  });
}

std::string dataset_provenance(const SceneConfig& scene) {
  Json j = {{"solver", "maccormack-mic0pcg"}, {"scene", scene_to_json(scene)}};
  return j.dump();
}

Bytes model_to_bytes(const ReducedModel& m) {
  m.validate();
  Writer w;
  w.raw(kMagic, 4);
  w.put<std::uint32_t>(kModelVersion);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(m.n()));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(m.r()));
  w.put<double>(m.dt);
  w.text(m.grid ? grid_to_json(*m.grid).dump() : std::string("null"));
  for (Eigen::Index i = 0; i < m.r(); ++i) w.put<double>(m.sigma[i]);
  for (Eigen::Index i = 0; i < m.r(); ++i) {
    w.put<double>(m.lambda[i].real());
    w.put<double>(m.lambda[i].imag());
  }
  const size_t count = static_cast<size_t>(m.phi.size());
  if constexpr (std::endian::native == std::endian::little) {
    // Eigen stores complex column-major as interleaved (re, im) pairs.
    w.raw(m.phi.data(), count * sizeof(cplx));
  } else {
    for (size_t i = 0; i < count; ++i) {
      w.put<double>(m.phi.data()[i].real());
      w.put<double>(m.phi.data()[i].imag());
    }
  }
  w.text(provenance_to_json(m.provenance).dump());
  w.put<std::uint32_t>(crc32(w.buf.data(), w.buf.size()));
  return std::move(w.buf);
}

ReducedModel model_from_bytes(const Bytes& bytes) {
  if (bytes.size() < 8) throw SizeMismatch("model file shorter than its header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw BadMagic("not a KDMD model file (bad magic)");
  Reader r(bytes, bytes.size() < 4 ? 0 : bytes.size() - 4);
  r.skip(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kModelVersion)
    throw BadVersion("model file version " + std::to_string(version) + ", expected " +
                     std::to_string(kModelVersion));
  const auto n = r.get<std::uint64_t>();
  const auto rank = r.get<std::uint64_t>();
  const double dt = r.get<double>();
  const std::string grid_text = r.text();
  constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max() / 64;
  if (n > kMax || rank > kMax || (rank > 0 && n > kMax / rank))
    throw SizeMismatch("model header declares an impossible size");
  const size_t arrays_at = r.pos();
  r.skip(rank * 8 + rank * 16 + n * rank * 16);
  const std::string prov_text = r.text();
  if (r.pos() + 4 != bytes.size())
    throw SizeMismatch("model file has " + std::to_string(bytes.size() - 4 - r.pos()) + " trailing bytes");
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + r.pos(), 4);
  stored = to_le(stored);
  if (stored != crc32(bytes.data(), r.pos())) throw ChecksumMismatch("model file CRC32 mismatch");

  ReducedModel m;
  m.dt = dt;
  const Json gj = parse_guard("grid block", [&] { return Json::parse(grid_text); });
  if (!gj.is_null()) m.grid = grid_from_json(gj);
  m.provenance = provenance_from_json(parse_guard("provenance block", [&] { return Json::parse(prov_text); }));
  const auto R = static_cast<Eigen::Index>(rank);
  const auto N = static_cast<Eigen::Index>(n);
  m.sigma.resize(R);
  m.lambda.resize(R);
  m.phi.resize(N, R);
  Reader a(bytes, bytes.size() - 4);
  a.skip(arrays_at);
  for (Eigen::Index i = 0; i < R; ++i) m.sigma[i] = a.get<double>();
  for (Eigen::Index i = 0; i < R; ++i) {
    const double re = a.get<double>();
    const double im = a.get<double>();
    m.lambda[i] = {re, im};
  }
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(m.phi.data(), bytes.data() + a.pos(), static_cast<size_t>(m.phi.size()) * sizeof(cplx));
  } else {
    for (Eigen::Index i = 0; i < m.phi.size(); ++i) {
      const double re = a.get<double>();
      const double im = a.get<double>();
      m.phi.data()[i] = {re, im};
    }
  }
  m.validate();
  return m;
}

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<size_t>(in.tellg());
  in.seekg(0);
  Bytes b(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(size)))
    throw Error("failed reading " + path.string());
  return b;
}

void write_file_atomic(const fs::path& path, const Bytes& bytes) {
  std::random_device rd;
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(rd());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot rename onto " + path.string() + ": " + ec.message());
  }
}

void save_model(const fs::path& path, const ReducedModel& m) { write_file_atomic(path, model_to_bytes(m)); }

ReducedModel load_model(const fs::path& path) { return model_from_bytes(read_file(path)); }

Json load_json(const fs::path& path) {
  const Bytes b = read_file(path);
  return parse_guard(path.string(), [&] { return Json::parse(b.begin(), b.end()); });
}

void save_json(const fs::path& path, const Json& j) {
  const std::string s = j.dump(2) + "\n";
  write_file_atomic(path, Bytes(s.begin(), s.end()));
}

namespace {

Bytes matrix_bytes(const Mat& m) {
  Writer w;
  if constexpr (std::endian::native == std::endian::little) {
    w.raw(m.data(), static_cast<size_t>(m.size()) * sizeof(double));
  } else {
    for (Eigen::Index i = 0; i < m.size(); ++i) w.put<double>(m.data()[i]);
  }
  return std::move(w.buf);
}

Mat matrix_from(const Bytes& b, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
  const auto expect = static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols) * 8;
  if (b.size() != expect)
    throw SizeMismatch(name + " holds " + std::to_string(b.size()) + " bytes, manifest implies " +
                       std::to_string(expect));
  Mat m(rows, cols);
  Reader r(b, b.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.get<double>();
  return m;
}

}  // namespace

void save_dataset(const fs::path& dir, const Dataset& d) {
  const SnapshotMatrix& s = d.snapshots;
  s.validate();
  fs::create_directories(dir);
  Json prov = nullptr;
  if (!s.provenance.empty()) {
    prov = Json::parse(s.provenance, nullptr, false);
    if (prov.is_discarded()) prov = s.provenance;
  }
  const bool has_density = d.density.size() > 0;
  if (has_density && d.density.cols() != s.frames())
    throw DimensionError("density frames differ from snapshot frames");
  Json manifest = {{"format", "kdmd-dataset"},
                   {"version", kDatasetVersion},
                   {"n", s.n()},
                   {"frames", s.frames()},
                   {"dt", s.dt},
                   {"grid", s.grid ? grid_to_json(*s.grid) : Json(nullptr)},
                   {"layout", "f64 little-endian, column-major frames, u block then v block, faces row-major"},
                   {"provenance", prov},
                   {"density_cells", has_density ? d.density.rows() : 0}};
  write_file_atomic(dir / "snapshots.bin", matrix_bytes(s.states));
  if (has_density) write_file_atomic(dir / "density.bin", matrix_bytes(d.density));
  save_json(dir / "manifest.json", manifest);
}

void save_dataset(const fs::path& dir, const SnapshotMatrix& s) { save_dataset(dir, Dataset{s, Mat()}); }

Dataset load_dataset(const fs::path& dir) {
  const Json m = load_json(dir / "manifest.json");
  return parse_guard("dataset manifest", [&] {
    if (m.value("format", std::string()) != "kdmd-dataset") throw BadMagic("not a kdmd dataset manifest");
    const auto version = m.at("version").get<std::uint32_t>();
    if (version != kDatasetVersion) throw BadVersion("dataset version " + std::to_string(version));
    Dataset d;
    SnapshotMatrix& s = d.snapshots;
    const auto n = m.at("n").get<Eigen::Index>();
    const auto frames = m.at("frames").get<Eigen::Index>();
    s.dt = m.at("dt").get<double>();
    if (!m.at("grid").is_null()) s.grid = grid_from_json(m.at("grid"));
    if (s.grid && s.grid->state_size() != n) throw SizeMismatch("manifest n does not match its grid");
    const Json& prov = m.value("provenance", Json(nullptr));
    s.provenance = prov.is_null() ? std::string() : prov.is_string() ? prov.get<std::string>() : prov.dump();
    s.states = matrix_from(read_file(dir / "snapshots.bin"), n, frames, "snapshots.bin");
    const auto cells = m.value("density_cells", Eigen::Index{0});
    if (cells > 0) d.density = matrix_from(read_file(dir / "density.bin"), cells, frames, "density.bin");
    s.validate();
    return d;
  });
}

}  // namespace kdmd
