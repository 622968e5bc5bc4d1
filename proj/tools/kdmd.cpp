// kdmd: command-line front end for simulation, training, playback and serving.
#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kdmd/dmd.hpp"
#include "kdmd/edit.hpp"
#include "kdmd/error.hpp"
#include "kdmd/fluid.hpp"
#include "kdmd/io.hpp"
#include "kdmd/rom.hpp"
#include "kdmd/serve.hpp"
#include "kdmd/upres.hpp"

namespace fs = std::filesystem;
using namespace kdmd;

namespace {

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

Mat as_columns(const StateVector& first, const std::vector<StateVector>& rest) {
  Mat m(first.size(), static_cast<Eigen::Index>(rest.size()) + 1);
  m.col(0) = first;
  for (size_t k = 0; k < rest.size(); ++k) m.col(static_cast<Eigen::Index>(k) + 1) = rest[k];
  return m;
}

Mat density_columns(const Vec& first, const std::vector<Vec>& rest) {
  if (rest.empty()) return Mat();
  return as_columns(first, rest);
}

StateVector start_state(const Dataset& d, int frame) {
  if (frame < 0 || frame >= d.snapshots.frames())
    throw InvalidArgument("--start-frame " + std::to_string(frame) + " outside the dataset (" +
                          std::to_string(d.snapshots.frames()) + " frames)");
  return d.snapshots.states.col(frame);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman/DMD reduced-order fluid toolkit"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run the full-space solver and write a dataset");
  std::string scene_name = "plume";
  std::string scene_file;
  int nx = 64, ny = 128, frames = 300;
  std::optional<double> vort;
  std::string sim_out;
  sim->add_option("--scene", scene_name, "plume or buoyant")->check(CLI::IsMember({"plume", "buoyant"}));
  sim->add_option("--scene-file", scene_file, "Scene description (JSON)")->check(CLI::ExistingFile);
  sim->add_option("--nx", nx)->check(CLI::PositiveNumber);
  sim->add_option("--ny", ny)->check(CLI::PositiveNumber);
  sim->add_option("--frames", frames)->check(CLI::Range(2, 1000000));
  sim->add_option("--vorticity", vort, "Vorticity confinement strength");
  sim->add_option("--out", sim_out, "Dataset directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Fit a reduced model to a dataset");
  std::string train_data, train_out, method = "exact", svd = "full";
  int rank = 0;
  std::uint64_t seed = 0;
  train->add_option("--data", train_data)->required()->check(CLI::ExistingDirectory);
  train->add_option("--rank", rank)->required()->check(CLI::PositiveNumber);
  train->add_option("--method", method)->check(CLI::IsMember({"exact", "optdmd"}));
  train->add_option("--svd", svd)->check(CLI::IsMember({"full", "randomized"}));
  train->add_option("--seed", seed);
  train->add_option("--out", train_out)->required();

  // rollout
  auto* roll = app.add_subcommand("rollout", "Step a model forward from a dataset frame");
  std::string model_path, data_path, out_path, edit_path;
  int start_frame = 0, out_frames = 1;
  std::int64_t stride = 1;
  bool with_density = false;
  roll->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  roll->add_option("--data", data_path, "Dataset holding the start frame")->required()->check(CLI::ExistingDirectory);
  roll->add_option("--start-frame", start_frame);
  roll->add_option("--k", stride, "Steps per emitted frame")->check(CLI::PositiveNumber);
  roll->add_option("--frames", out_frames, "Emitted frames after the start frame")->check(CLI::PositiveNumber);
  roll->add_option("--edit", edit_path, "EditSpec (JSON)")->check(CLI::ExistingFile);
  roll->add_flag("--density", with_density, "Advect the dataset's density for visualization");
  roll->add_option("--out", out_path, "Output dataset directory")->required();

  // reverse
  auto* rev = app.add_subcommand("reverse", "Step a model backward from a dataset frame");
  int back_frames = 1;
  rev->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  rev->add_option("--data", data_path)->required()->check(CLI::ExistingDirectory);
  rev->add_option("--start-frame", start_frame);
  rev->add_option("--frames", back_frames)->check(CLI::PositiveNumber);
  rev->add_option("--out", out_path)->required();

  // upres
  auto* up = app.add_subcommand("upres", "Guide a high-res model with a low-res dataset");
  std::string low_path, project = "on";
  int split = 0, factor = 2;
  up->add_option("--low", low_path)->required()->check(CLI::ExistingDirectory);
  up->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  up->add_option("--split", split)->check(CLI::NonNegativeNumber);
  up->add_option("--factor", factor)->check(CLI::Range(2, 64));
  up->add_option("--project", project)->check(CLI::IsMember({"on", "off"}));
  up->add_option("--out", out_path)->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Relative error of a rollout against ground truth (JSON on stdout)");
  int eval_frames = 0;
  ev->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data_path)->required()->check(CLI::ExistingDirectory);
  ev->add_option("--start-frame", start_frame);
  ev->add_option("--frames", eval_frames, "Frames to compare (default: rest of the dataset)");
  std::string eval_init = "encode";
  ev->add_option("--init", eval_init, "encode: project the start frame; fit: least-squares amplitudes over the window")
      ->check(CLI::IsMember({"encode", "fit"}));

  // serve
  auto* srv = app.add_subcommand("serve", "HTTP API for the interactive editor");
  std::string host = "127.0.0.1";
  int port = 8080;
  srv->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  srv->add_option("--data", data_path, "Dataset supplying start states and density")->check(CLI::ExistingDirectory);
  srv->add_option("--host", host);
  srv->add_option("--port", port)->check(CLI::Range(0, 65535));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*sim) {
      SceneConfig scene = scene_name == "buoyant" ? buoyant_scene(nx, ny) : plume_scene(nx, ny);
      if (!scene_file.empty()) scene = scene_from_json(load_json(scene_file));
      if (sim->count("--frames") || scene_file.empty()) scene.frames = frames;
      if (vort) scene.params.vorticity_eps = *vort;
      scene.validate();
      save_dataset(sim_out, generate_dataset(scene));
      std::cerr << "wrote " << scene.frames << " frames to " << sim_out << "\n";
    } else if (*train) {
      const Dataset d = load_dataset(train_data);
      ExactDmdOptions opts;
      opts.svd = svd_mode_from_string(svd);
      opts.seed = seed;
      const ReducedModel m = method == "optdmd" ? optdmd(d.snapshots, rank, std::nullopt, {}, nullptr, opts)
                                                : exact_dmd(d.snapshots, rank, opts);
      save_model(train_out, m);
      std::cerr << "rank " << m.r() << " model, one-step residual " << m.provenance.residual
                << (m.provenance.unstable ? " (warning: unstable eigenvalues)" : "") << "\n";
    } else if (*roll) {
      const Rom rom(load_model(model_path));
      const Dataset d = load_dataset(data_path);
      std::optional<EditSpec> edit;
      if (!edit_path.empty()) edit = edit_from_json(load_json(edit_path));
      RolloutOptions opts;
      opts.stride = stride;
      opts.edit = edit ? &*edit : nullptr;
      Vec rho0;
      if (with_density) {
        if (d.density.cols() <= start_frame) throw InvalidArgument("--density needs a dataset with density frames");
        rho0 = d.density.col(start_frame);
        opts.density = rho0;
      }
      const StateVector u0 = start_state(d, start_frame);
      const RolloutResult res = rollout(rom, rom.encode(u0, start_frame), out_frames, opts);
      Dataset out;
      out.snapshots.states = as_columns(u0, res.frames);
      out.snapshots.dt = rom.model().dt * static_cast<double>(stride);
      out.snapshots.grid = rom.model().grid;
      out.snapshots.provenance = Json{{"rollout", {{"model", model_path}, {"start_frame", start_frame},
                                                   {"k", stride}, {"frames", out_frames}}}}
                                     .dump();
      if (with_density) out.density = density_columns(rho0, res.density);
      save_dataset(out_path, out);
      if (res.max_imag_residue > kImagResidueLimit)
        std::cerr << "warning: decoded fields carry imaginary residue " << res.max_imag_residue << "\n";
    } else if (*rev) {
      const Rom rom(load_model(model_path));
      const Dataset d = load_dataset(data_path);
      const StateVector u0 = start_state(d, start_frame);
      ReducedState s = rom.encode(u0, start_frame);
      std::vector<StateVector> back;
      for (int k = 0; k < back_frames; ++k) {
        s = rom.inverse_step(s);
        back.push_back(rom.decode(s));
      }
      Dataset out;
      out.snapshots.states = as_columns(u0, back);
      out.snapshots.dt = rom.model().dt;
      out.snapshots.grid = rom.model().grid;
      out.snapshots.provenance =
          Json{{"reverse", {{"model", model_path}, {"start_frame", start_frame}, {"frames", back_frames}}}}.dump();
      save_dataset(out_path, out);
    } else if (*up) {
      const Rom rom(load_model(model_path));
      const Dataset low = load_dataset(low_path);
      UpresConfig cfg;
      cfg.split = split;
      cfg.factor = factor;
      cfg.project = project == "on";
      const Upscaler ups(rom, cfg);
      const Mat& L = low.snapshots.states;
      ReducedState R = ups.lift(L.col(0));
      std::vector<StateVector> hi;
      for (Eigen::Index t = 1; t < L.cols(); ++t) {
        const UpresStep st = ups.step_full(R, L.col(t));
        R = st.R;
        hi.push_back(st.H);
      }
      Dataset out;
      out.snapshots.states = as_columns(rom.decode(ups.lift(L.col(0))), hi);
      out.snapshots.dt = low.snapshots.dt;
      out.snapshots.grid = rom.model().grid;
      out.snapshots.provenance = Json{{"upres", {{"model", model_path}, {"split", ups.config().split},
                                                 {"factor", factor}, {"project", cfg.project}}}}
                                     .dump();
      save_dataset(out_path, out);
    } else if (*ev) {
      const Rom rom(load_model(model_path));
      const Dataset d = load_dataset(data_path);
      const StateVector u0 = start_state(d, start_frame);
      const int avail = static_cast<int>(d.snapshots.frames()) - start_frame - 1;
      const int n = eval_frames > 0 ? eval_frames : avail;
      if (n < 1 || n > avail) throw InvalidArgument("--frames exceeds the ground-truth horizon");
      const ReducedState z0 = eval_init == "fit" ? fit_amplitudes(rom, d.snapshots.states, start_frame, n + 1)
                                                 : rom.encode(u0, start_frame);
      const RolloutResult res = rollout(rom, z0, n);
      Json per = Json::array();
      for (int k = 0; k < n; ++k)
        per.push_back(relative_error({res.frames[static_cast<size_t>(k)]}, d.snapshots.states, start_frame + k + 1));
      const Json report = {{"model", model_path},
                           {"data", data_path},
                           {"rank", rom.model().r()},
                           {"start_frame", start_frame},
                           {"frames", n},
                           {"init", eval_init},
                           {"relative_error", relative_error(res.frames, d.snapshots.states, start_frame + 1)},
                           {"per_frame", per},
                           {"one_step_residual", one_step_residual(rom.model(), d.snapshots)},
                           {"max_imag_residue", res.max_imag_residue}};
      std::cout << report.dump(2) << "\n";
    } else if (*srv) {
      std::optional<Dataset> d;
      if (!data_path.empty()) d = load_dataset(data_path);
      Service service(load_model(model_path), std::move(d));
      HttpServer server(service);
      const int bound = server.bind(host, port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "serving on http://" << host << ":" << bound << "\n";
      server.listen();
      g_server = nullptr;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
