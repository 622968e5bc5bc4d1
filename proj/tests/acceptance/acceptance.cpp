// Acceptance runner. One line per criterion: "criterion N PASS|FAIL: details".
// Datasets are cached under --cache so separate invocations share them.
#include <algorithm>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>

#include "../support/fixtures.hpp"
#include "kdmd/edit.hpp"
#include "kdmd/error.hpp"
#include "kdmd/io.hpp"
#include "kdmd/rom.hpp"
#include "kdmd/upres.hpp"

using namespace kdmd;
using namespace kdmd::testing;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

fs::path g_cache = "acceptance_cache";

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(3) << v;
  return s.str();
}

// Generation time is stored next to the data so timed criteria can include it.
Dataset cached(const std::string& name, const SceneConfig& scene, double* gen_seconds = nullptr) {
  const fs::path dir = g_cache / name;
  if (fs::exists(dir / "manifest.json") && fs::exists(dir / "generation.json")) {
    try {
      Dataset d = load_dataset(dir);
      if (d.snapshots.provenance == dataset_provenance(scene)) {
        if (gen_seconds) *gen_seconds = load_json(dir / "generation.json").at("seconds").get<double>();
        return d;
      }
    } catch (const Error&) {
      // regenerate below
    }
  }
  const auto t0 = Clock::now();
  Dataset d = generate_dataset(scene);
  const double t = seconds_since(t0);
  save_dataset(dir, d);
  save_json(dir / "generation.json", Json{{"seconds", t}});
  if (gen_seconds) *gen_seconds = t;
  return d;
}

// Plume used by the rank sweep and its follow-ups.
SceneConfig sweep_scene() {
  SceneConfig s = plume_scene(128, 256);
  s.params.vorticity_eps = 0.0;
  s.frames = 300;
  return s;
}

SceneConfig reversal_scene() { return buoyant_scene(64, 128); }

SceneConfig vc_scene(double eps) {
  SceneConfig s = plume_scene(64, 128);
  s.params.vorticity_eps = eps;
  return s;
}

double max_rel_diff(const Vec& a, const Vec& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

// 1. Exact DMD recovers the generator spectrum of a clean linear system.
Outcome criterion1() {
  const auto t0 = Clock::now();
  const LinearSystem sys = linear_system(200, 5, 60, 7);
  const ReducedModel m = exact_dmd(snapshots(sys.states), 10);
  const double err = eigenvalue_error(m.lambda, sys.eigenvalues);
  const double t = seconds_since(t0);
  return {err <= 1e-8 && t < 1.0, "max eigenvalue error " + fmt(err) + " (<= 1e-8), " + fmt(t) + " s (< 1 s)"};
}

// 2. Reconstruction error over the training horizon against rank.
Outcome criterion2() {
  double t_gen = 0.0;
  const Dataset d = cached("plume_128x256", sweep_scene(), &t_gen);
  const auto t0 = Clock::now();
  const Mat& X = d.snapshots.states;
  const Eigen::Index T = X.cols();
  std::vector<double> errs;
  std::ostringstream detail;
  for (int r : {2, 9, 28, 61}) {
    const Rom rom(optdmd(d.snapshots, r));
    const ReducedState z0 = fit_amplitudes(rom, X, 0, T);
    std::vector<StateVector> frames{rom.decode(z0)};
    const RolloutResult res = rollout(rom, z0, static_cast<int>(T) - 1);
    frames.insert(frames.end(), res.frames.begin(), res.frames.end());
    errs.push_back(relative_error(frames, X, 0));
    detail << "r=" << r << ": " << fmt(errs.back()) << "  ";
  }
  bool ok = errs.back() <= 0.05;
  for (size_t i = 1; i < errs.size(); ++i) ok = ok && errs[i] <= errs[i - 1] * 1.05;
  const double t = t_gen + seconds_since(t0);
  ok = ok && t < 600.0;
  detail << "(non-increasing with 5% slack, r=61 <= 0.05), " << fmt(t) << " s with data generation (< 600 s)";
  return {ok, detail.str()};
}

// 3. Power stepping and continuous-time evaluation agree with repeated steps.
Outcome criterion3() {
  const Dataset d = cached("plume_128x256", sweep_scene());
  const Rom rom(exact_dmd(d.snapshots, 61));
  const ReducedState z0 = rom.encode(d.snapshots.states.col(0));
  ReducedState seq = z0;
  for (int k = 0; k < 100; ++k) seq = rom.step(seq);
  const StateVector ref = rom.decode(seq);
  const double e_pow = max_rel_diff(rom.decode(rom.step_k(z0, 100)), ref);
  const double e_cont = max_rel_diff(rom.decode(rom.eval_continuous(z0, 100 * rom.model().dt)), ref);
  return {e_pow <= 1e-10 && e_cont <= 1e-9,
          "step_k(100) " + fmt(e_pow) + " (<= 1e-10), eval_continuous " + fmt(e_cont) + " (<= 1e-9)"};
}

// 4. Time reversal on the buoyant scene.
Outcome criterion4() {
  const Dataset d = cached("buoyant_64x128", reversal_scene());
  const GridSpec& g = *d.snapshots.grid;
  const Rom rom(exact_dmd(d.snapshots, 40));
  const Eigen::Index last = d.snapshots.frames() - 1;
  const ReducedState z = rom.encode(d.snapshots.states.col(last), last);
  const double e_id = (rom.inverse_step(rom.step(z)).z - z.z).norm() / z.z.norm();
  ReducedState s = z;
  std::vector<double> ke;
  bool finite = true;
  for (int k = 0; k < 300; ++k) {
    s = rom.inverse_step(s);
    const StateVector u = rom.decode(s);
    finite = finite && u.allFinite();
    ke.push_back(kinetic_energy(u, g));
  }
  const int window = 30;
  std::vector<double> means;
  for (size_t w = 0; w + window <= ke.size(); w += window)
    means.push_back(std::accumulate(ke.begin() + static_cast<long>(w), ke.begin() + static_cast<long>(w + window), 0.0) /
                    window);
  bool mono = true;
  for (size_t i = 1; i < means.size(); ++i) mono = mono && means[i] <= means[i - 1] * 1.05;
  std::ostringstream detail;
  detail << "inverse(step) error " << fmt(e_id) << " (<= 1e-10), finite " << (finite ? "yes" : "no")
         << ", windowed KE backward:";
  for (double m : means) detail << ' ' << fmt(m);
  return {e_id <= 1e-10 && finite && mono, detail.str()};
}

double max_divergence(const Mat& states, const GridSpec& g) {
  double m = 0.0;
  for (Eigen::Index t = 0; t < states.cols(); ++t) m = std::max(m, max_abs_divergence(unflatten(states.col(t), g)));
  return m;
}

double max_divergence(const std::vector<StateVector>& frames, const GridSpec& g) {
  double m = 0.0;
  for (const auto& f : frames) m = std::max(m, max_abs_divergence(unflatten(f, g)));
  return m;
}

// 5. Decoded frames inherit the training data's incompressibility.
Outcome criterion5() {
  const Dataset d = cached("plume_128x256", sweep_scene());
  const GridSpec& g = *d.snapshots.grid;
  const Mat& X = d.snapshots.states;
  const double bound = max_divergence(X, g);
  double speed = 0.0;
  for (Eigen::Index t = 0; t < X.cols(); ++t) speed = std::max(speed, X.col(t).cwiseAbs().maxCoeff());
  const double scale = sweep_scene().params.cg_tol * speed / g.h;
  const Rom exact(exact_dmd(d.snapshots, 61));
  const Rom opt(optdmd(d.snapshots, 61));
  const int T = static_cast<int>(X.cols());
  const double de = max_divergence(rollout(exact, exact.encode(X.col(0)), 2 * T).frames, g);
  const double dopt = max_divergence(rollout(opt, fit_amplitudes(opt, X, 0, T), T - 1).frames, g);
  const double worst = std::max(de, dopt);
  return {worst <= 10.0 * bound && bound <= scale,
          "training bound " + fmt(bound) + " (<= cg_tol*max|u|/h = " + fmt(scale) + "), decoded max " + fmt(worst) +
              " (<= 10x bound)"};
}

// 6. Randomized SVD accuracy and determinism.
Outcome criterion6() {
  double worst = 0.0;
  bool deterministic = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    Vec s(20);
    for (int i = 0; i < 20; ++i) s[i] = std::pow(10.0, -3.0 * i / 19.0) * 10.0;
    const Mat M = orthonormal(500, 20, rng) * s.asDiagonal() * orthonormal(200, 20, rng).transpose() +
                  gaussian(500, 200, rng, 1e-8);
    const SvdResult dense = truncated_svd(M, 20);
    RandomizedSvdOptions opts;
    opts.seed = seed;
    const SvdResult a = randomized_svd(M, 20, opts);
    const SvdResult b = randomized_svd(M, 20, opts);
    worst = std::max(worst, ((a.S - dense.S).array() / dense.S.array()).abs().maxCoeff());
    deterministic = deterministic && a.S == b.S && a.U == b.U && a.V == b.V;
  }
  return {worst <= 1e-6 && deterministic,
          "max relative singular value error " + fmt(worst) + " (<= 1e-6), repeat runs bitwise equal: " +
              (deterministic ? "yes" : "no")};
}

// 7. OptDMD against exact DMD on noisy linear data.
Outcome criterion7() {
  std::vector<double> e_exact, e_opt;
  bool monotone = true;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    LinearSystem sys = linear_system(200, 5, 60, 100 + seed);
    std::mt19937_64 rng(seed);
    const double rms = sys.states.norm() / std::sqrt(static_cast<double>(sys.states.size()));
    const Mat noisy = sys.states + gaussian(sys.states.rows(), sys.states.cols(), rng, 0.01 * rms);
    const SnapshotMatrix data = snapshots(noisy);
    e_exact.push_back(eigenvalue_error(exact_dmd(data, 10).lambda, sys.eigenvalues));
    OptDmdReport rep;
    e_opt.push_back(eigenvalue_error(optdmd(data, 10, std::nullopt, {}, &rep).lambda, sys.eigenvalues));
    for (size_t i = 1; i < rep.objective.size(); ++i) monotone = monotone && rep.objective[i] <= rep.objective[i - 1];
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  };
  const double me = median(e_exact), mo = median(e_opt);
  return {mo <= me && monotone, "median eigenvalue error optdmd " + fmt(mo) + " vs exact " + fmt(me) +
                                    ", objective non-increasing on all runs: " + (monotone ? "yes" : "no")};
}

// 8. Upres projection against a dense KKT solve.
Outcome criterion8() {
  const GridSpec high(8, 8, 1.0 / 8);
  const Projector proj = build_projector(high, 2);
  const Mat A = Mat(proj.downsample());
  const Eigen::Index n = A.cols(), m = A.rows();
  Mat K = Mat::Zero(n + m, n + m);
  K.topLeftCorner(n, n).setIdentity();
  K.topRightCorner(n, m) = A.transpose();
  K.bottomLeftCorner(m, n) = A;
  const Eigen::FullPivLU<Mat> kkt(K);
  std::mt19937_64 rng(3);
  double e_con = 0.0, e_kkt = 0.0, e_idem = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Vec H = gaussian(n, 1, rng);
    const Vec L = gaussian(m, 1, rng);
    const Vec x = constrained_project(proj, H, L);
    Vec rhs(n + m);
    rhs << H, L;
    const Vec oracle = kkt.solve(rhs).head(n);
    e_con = std::max(e_con, (A * x - L).norm() / L.norm());
    e_kkt = std::max(e_kkt, (x - oracle).norm() / oracle.norm());
    e_idem = std::max(e_idem, (constrained_project(proj, x, L) - x).norm() / x.norm());
  }
  return {e_con <= 1e-9 && e_kkt <= 1e-9 && e_idem <= 1e-10,
          "constraint " + fmt(e_con) + " (<= 1e-9), KKT oracle " + fmt(e_kkt) + " (<= 1e-9), idempotence " +
              fmt(e_idem) + " (<= 1e-10)"};
}

// 9. Edit algebra on a trained model.
Outcome criterion9() {
  const Dataset d = cached("buoyant_64x128", reversal_scene());
  const ReducedModel base = exact_dmd(d.snapshots, 20);
  const Rom rom(base);
  const ReducedState z0 = rom.encode(d.snapshots.states.col(0));
  const RolloutResult ref = rollout(rom, z0, 50);
  const EditSpec id = EditSpec::identity(base.r());
  RolloutOptions opts;
  opts.edit = &id;
  const RolloutResult same = rollout(rom, z0, 50, opts);
  double e_id = 0.0;
  for (size_t k = 0; k < ref.frames.size(); ++k) e_id = std::max(e_id, max_rel_diff(same.frames[k], ref.frames[k]));

  // Pick the first complex pair.
  const auto partner = conjugate_partners(base.lambda);
  int i = 0;
  while (i < base.r() && partner[static_cast<size_t>(i)] == i) ++i;
  if (i == base.r()) return {false, "model has no complex pair to edit"};
  const int p = partner[static_cast<size_t>(i)];
  const double w = 1.5, gs = 0.7, fs = 1.3;
  EditSpec spec = EditSpec::identity(base.r());
  spec.set_mode(base, i, {w, gs, fs});
  const ReducedModel edited = apply_edit(base, spec);
  auto contribution = [&](const ReducedModel& m) {
    return Vec((m.phi.col(i) * z0.z[i] + m.phi.col(p) * z0.z[p]).real());
  };
  const double e_w = max_rel_diff(contribution(edited), w * contribution(base));
  double e_g = 0.0, e_f = 0.0;
  for (int k : {i, p}) {
    e_g = std::max(e_g, std::abs(std::abs(edited.lambda[k]) - std::pow(std::abs(base.lambda[k]), gs)));
    e_f = std::max(e_f, std::abs(std::arg(edited.lambda[k]) - fs * std::arg(base.lambda[k])));
  }
  return {e_id <= 1e-12 && e_w <= 1e-12 && e_g <= 1e-12 && e_f <= 1e-12,
          "identity " + fmt(e_id) + ", weight " + fmt(e_w) + ", growth " + fmt(e_g) + ", frequency " + fmt(e_f) +
              " (all <= 1e-12)"};
}

template <typename F>
double median_seconds(int reps, F&& f) {
  std::vector<double> t;
  for (int k = 0; k < reps; ++k) {
    const auto t0 = Clock::now();
    f();
    t.push_back(seconds_since(t0));
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

// 10. Reduced step plus decode against a full solver step at 256x512.
Outcome criterion10() {
  SceneConfig scene = plume_scene(256, 512);
  FluidState state = initial_state(scene);
  for (int k = 0; k < 5; ++k) state = step(state, scene.params);
  const double t_full = median_seconds(100, [&] { state = step(state, scene.params); });

  // Timing only depends on the shapes, so a random model of the right size stands in.
  std::mt19937_64 rng(10);
  ReducedModel m;
  m.grid = scene.grid;
  const Eigen::Index n = scene.grid.state_size(), r = 150;
  m.phi.resize(n, r);
  std::normal_distribution<double> nd;
  for (Eigen::Index k = 0; k < m.phi.size(); ++k) m.phi.data()[k] = {nd(rng), nd(rng)};
  m.lambda = CVec::Constant(r, std::polar(0.999, 0.01));
  m.sigma = Vec::Ones(r);
  m.dt = scene.params.dt;
  const Rom rom(std::move(m));
  ReducedState s{CVec::Ones(r), 0};
  StateVector out;
  const double t_step = median_seconds(100, [&] { s = rom.step(s); });
  const double t_red = median_seconds(100, [&] {
    s = rom.step(s);
    out = rom.decode(s);
  });
  const double ratio = t_full / t_red;
  return {ratio >= 1000.0, "full step " + fmt(t_full * 1e3) + " ms, reduced step+decode " + fmt(t_red * 1e3) +
                               " ms, speedup " + fmt(ratio) + "x (>= 1000x); reduced step alone " +
                               fmt(t_step * 1e6) + " us (" + fmt(t_full / t_step) + "x)"};
}

// 11. Error grows with distance from the training vorticity confinement.
Outcome criterion11() {
  const Dataset train = cached("plume_64x128_vc1.5", vc_scene(1.5));
  const Dataset near = cached("plume_64x128_vc1.51", vc_scene(1.51));
  const Dataset far = cached("plume_64x128_vc2.5", vc_scene(2.5));
  const Rom rom(exact_dmd(train.snapshots, 50));
  auto errors = [&](const Dataset& d) {
    const Mat& X = d.snapshots.states;
    const ReducedState z0 = rom.encode(X.col(0));
    const RolloutResult res = rollout(rom, z0, static_cast<int>(X.cols()) - 1);
    std::vector<double> e{relative_error({rom.decode(z0)}, X, 0)};
    for (Eigen::Index k = 50; k < X.cols(); k += 50)
      e.push_back(relative_error({res.frames[static_cast<size_t>(k - 1)]}, X, k));
    return e;
  };
  const auto en = errors(near), ef = errors(far);
  bool ok = true;
  std::ostringstream detail;
  detail << "frame: err(1.51)/err(2.5)";
  for (size_t i = 0; i < en.size(); ++i) {
    ok = ok && en[i] <= ef[i];
    detail << "  " << 50 * i << ": " << fmt(en[i]) << "/" << fmt(ef[i]);
  }
  return {ok, detail.str()};
}

bool same_model(const ReducedModel& a, const ReducedModel& b) {
  auto bits = [](const auto& x, const auto& y) {
    return x.size() == y.size() &&
           std::memcmp(x.data(), y.data(), static_cast<size_t>(x.size()) * sizeof(*x.data())) == 0;
  };
  return bits(a.phi, b.phi) && bits(a.lambda, b.lambda) && bits(a.sigma, b.sigma) &&
         std::memcmp(&a.dt, &b.dt, sizeof(double)) == 0 && a.grid == b.grid &&
         provenance_to_json(a.provenance) == provenance_to_json(b.provenance);
}

// 12. Byte-exact golden files.
Outcome criterion12() {
  const fs::path golden = KDMD_GOLDEN_DIR;
  const ReducedModel m = golden_model();
  const Bytes file = read_file(golden / "model.kdmd");
  const Bytes ours = model_to_bytes(m);
  const bool model_bytes = file == ours;
  const bool model_load = same_model(model_from_bytes(file), m);
  // Little-endian header: version 1 then n.
  const bool header = file.size() > 16 && file[4] == 1 && file[5] == 0 && file[6] == 0 && file[7] == 0 &&
                      file[8] == static_cast<std::uint8_t>(m.n()) && file[9] == 0;

  const Dataset d = golden_dataset();
  const fs::path tmp = g_cache / "golden_dataset_roundtrip";
  save_dataset(tmp, d);
  bool data_bytes = true;
  for (const char* f : {"manifest.json", "snapshots.bin", "density.bin"})
    data_bytes = data_bytes && read_file(tmp / f) == read_file(golden / "dataset" / f);
  const Dataset back = load_dataset(golden / "dataset");
  const bool data_load = back.snapshots.states == d.snapshots.states && back.density == d.density &&
                         back.snapshots.dt == d.snapshots.dt && back.snapshots.grid == d.snapshots.grid;
  std::ostringstream detail;
  detail << "model bytes " << (model_bytes ? "match" : "DIFFER") << ", model load " << (model_load ? "bitwise" : "DIFFERS")
         << ", LE header " << (header ? "ok" : "bad") << ", dataset bytes " << (data_bytes ? "match" : "DIFFER")
         << ", dataset load " << (data_load ? "bitwise" : "DIFFERS");
  return {model_bytes && model_load && header && data_bytes && data_load, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::vector<int> only;
  std::string cache = g_cache.string();
  app.add_option("--only", only, "Criteria to run (default: all)")->check(CLI::Range(1, 12));
  app.add_option("--cache", cache, "Directory for generated datasets");
  CLI11_PARSE(app, argc, argv);
  g_cache = cache;
  fs::create_directories(g_cache);

  const std::map<int, std::function<Outcome()>> all = {
      {1, criterion1}, {2, criterion2}, {3, criterion3},   {4, criterion4},   {5, criterion5},   {6, criterion6},
      {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}, {11, criterion11}, {12, criterion12}};
  if (only.empty())
    for (const auto& [k, f] : all) only.push_back(k);

  int failures = 0;
  for (int k : only) {
    Outcome o;
    try {
      o = all.at(k)();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << k << (o.pass ? " PASS: " : " FAIL: ") << o.detail << std::endl;
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
