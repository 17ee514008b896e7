// sphcam: batch driver for mask design, simulation, reconstruction,
// evaluation and parameter sweeps. See README.md for the config keys.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "sphcam/sphcam.hpp"

namespace fs = std::filesystem;
using namespace sphcam;

namespace {

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::io: return 3;
    case ErrorCategory::domain: return 4;
    case ErrorCategory::dimension: return 5;
    case ErrorCategory::ill_posed: return 6;
    case ErrorCategory::divergence: return 7;
  }
  return 1;
}

// Every key some command understands. A shared config file may carry keys
// for other commands, so only keys in none of them are rejected.
const std::set<std::string> kKnownKeys{
    "L", "seed", "name", "base",
    // design
    "mode", "n_bits", "half_aperture_deg", "restarts", "ascent_iters",
    // sensor and scene
    "full_well", "dynamic_range_db", "noiseless", "scene", "scene_channel", "response", "brightness", "subsample",
    "deformation", "deformation_param",
    // reconstruction
    "method", "lambda_tv", "lambda_scale", "max_iters", "tv_inner_iters", "tol", "wiener_snr_prior", "nonneg",
    "measurements", "truth", "width", "height",
    // sweep and eval
    "sweep", "values", "responses", "seeds", "jobs", "estimate", "noise_power"};

/// One invocation: resolved config, seed and output directory.
struct Run {
  Config cfg;
  std::uint64_t seed = 1;
  fs::path out_dir = ".";

  std::string hash() const { return cfg.hash(); }

  int L() const {
    const auto L = cfg.get_int("L", 36);
    if (L < 1 || L > 4096) throw Error(ErrorCategory::config, "L must be in [1, 4096]");
    return static_cast<int>(L);
  }

  BaseProfile base() const { return base_profile_from_name(cfg.get("base", "cosine")); }

  std::string path(const std::string& suffix) const { return (out_dir / (cfg.get("name", default_name) + suffix)).string(); }

  std::ofstream open(const std::string& file) const {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw Error(ErrorCategory::io, "cannot write " + file);
    os << std::setprecision(12);
    return os;
  }

  void provenance(std::ostream& os) const {
    os << "# config_hash=" << hash() << "\n# seed=" << seed << "\n";
  }

  std::string default_name;
};

SensorSpec sensor_from(const Config& c) {
  SensorSpec s;
  s.full_well = c.get_double("full_well", s.full_well);
  s.dynamic_range_db = c.get_double("dynamic_range_db", s.dynamic_range_db);
  s.noiseless = c.get_bool("noiseless", false);
  s.validate();
  return s;
}

ReconSettings recon_from(const Config& c) {
  ReconSettings s;
  s.method = recon_method_from_name(c.get("method", "mfista"));
  s.solver.max_iters = static_cast<int>(c.get_int("max_iters", s.solver.max_iters));
  s.solver.tv_inner_iters = static_cast<int>(c.get_int("tv_inner_iters", s.solver.tv_inner_iters));
  s.solver.tol = c.get_double("tol", s.solver.tol);
  s.solver.wiener_snr_prior = c.get_double("wiener_snr_prior", s.solver.wiener_snr_prior);
  s.solver.nonneg = c.get_bool("nonneg", true);
  if (c.has("lambda_tv")) {
    s.solver.lambda_tv = c.get_double("lambda_tv");
    s.lambda_scale = -1.0;
  } else {
    s.lambda_scale = c.get_double("lambda_scale", s.lambda_scale);
    if (s.lambda_scale < 0.0) throw Error(ErrorCategory::config, "lambda_scale must be >= 0");
  }
  s.solver.validate();
  return s;
}

// ---------------------------------------------------------------------------

int cmd_design(Run& run) {
  run.default_name = "design";
  run.cfg.check_keys(kKnownKeys);
  const int L = run.L();
  const auto base = run.base();
  const auto mode = run.cfg.get("mode", "exhaustive");
  const auto bits = static_cast<int>(run.cfg.get_int("n_bits", 10));
  const double alpha = run.cfg.get_double("half_aperture_deg", 10.0);

  MaskSearchResult best;
  if (mode == "exhaustive") {
    best = search_exhaustive(bits, alpha, L, base);
  } else if (mode == "stochastic") {
    StochasticSearchOptions opt;
    opt.seed = run.seed;
    opt.restarts = static_cast<int>(run.cfg.get_int("restarts", opt.restarts));
    opt.ascent_iters = static_cast<int>(run.cfg.get_int("ascent_iters", opt.ascent_iters));
    best = search_stochastic(bits, alpha, L, base, opt);
  } else {
    throw Error(ErrorCategory::config, "mode must be exhaustive or stochastic, got '" + mode + "'");
  }
  const auto resp = mask_to_response(best.mask, L, base);
  const auto open = open_aperture(alpha, L, base);
  const auto ghat = resp.scaling_coeffs();

  const auto mask_file = run.path(".mask"), resp_file = run.path("_response.csv"), report_file = run.path("_report.txt");
  {
    auto os = run.open(mask_file);
    run.provenance(os);
    write_mask(os, best.mask);
  }
  {
    auto os = run.open(resp_file);
    run.provenance(os);
    write_response_csv(os, resp);
  }
  auto os = run.open(report_file);
  run.provenance(os);
  os << "mode=" << mode << "\nL=" << L << "\nn_bits=" << bits << "\nhalf_aperture_deg=" << alpha
     << "\nmask=" << best.mask.to_string() << "\nrobustness=" << best.robustness
     << "\nthroughput_sr=" << light_throughput(resp) << "\nopen_throughput_sr=" << light_throughput(open)
     << "\nthroughput_pct_open=" << 100.0 * light_throughput(resp) / light_throughput(open)
     << "\nexpected_error_unit_noise=" << expected_recon_error(ghat, 1.0) << "\nevaluated=" << best.evaluated
     << "\n\nl,ghat\n";
  for (std::size_t l = 0; l < ghat.size(); ++l) os << l << "," << ghat[l] << "\n";
  std::cout << "mask " << best.mask.to_string() << " robustness " << best.robustness << "\n"
            << "wrote " << mask_file << ", " << resp_file << ", " << report_file << "\n";
  return 0;
}

int cmd_simulate(Run& run) {
  run.default_name = "measurements";
  run.cfg.check_keys(kKnownKeys);
  const int L = run.L();
  const auto grid = make_grid(L);
  const auto scene_spec = run.cfg.get("scene"), resp_spec = run.cfg.get("response");
  const auto scene = scene_from_spec(scene_spec, grid, static_cast<int>(run.cfg.get_int("scene_channel", 0)));
  const auto resp = response_from_spec(resp_spec, L, run.base());
  const auto sensor = sensor_from(run.cfg);
  const double brightness = run.cfg.get_double("brightness", 0.4);
  const double fraction = run.cfg.get_double("subsample", 1.0);

  std::map<std::string, std::string> extra{{"config_hash", run.hash()},
                                           {"scene", scene_spec},
                                           {"response", resp_spec},
                                           {"base", run.cfg.get("base", "cosine")},
                                           {"subsample", run.cfg.get("subsample", "1")}};
  PixelLayout layout = PixelLayout::full_grid(grid);
  const auto def_name = run.cfg.get("deformation", "none");
  if (def_name != "none") {
    const auto d = deform_layout(grid, Deformation::parse(def_name, run.cfg.get_double("deformation_param", 1.0)));
    layout = d.layout;
    extra["deformation"] = def_name;
    extra["deformation_param"] = run.cfg.get("deformation_param", "1");
    extra["distinct_orientations"] = std::to_string(d.distinct);
    extra["conditioning_alert"] = d.conditioning_alert ? "1" : "0";
    if (d.conditioning_alert)
      std::cerr << "warning: deformed layout has only " << d.distinct << " distinct orientations\n";
    if (fraction < 1.0) throw Error(ErrorCategory::config, "subsample applies to spherical layouts only");
  }
  const auto m = acquire(scene, resp, layout, sensor, brightness, run.seed, fraction);
  const auto file = run.path(".csv");
  auto os = run.open(file);
  write_measurements(os, m, extra);
  std::cout << "wrote " << file << " (" << m.values.size() << " readings)\n";
  return 0;
}

struct ReconReport {
  ReconOutcome outcome;
  std::optional<double> snr_db;
};

ReconReport reconstruct_and_score(const MeasurementSet& m, const SphericalGrid& grid, const AngularResponse& resp,
                                  const ReconSettings& s, const RealSignal* truth) {
  ReconReport r{reconstruct(m, grid, resp, s), std::nullopt};
  if (truth) r.snr_db = snr_i(r.outcome.estimate, *truth);
  return r;
}

int cmd_reconstruct(Run& run) {
  run.default_name = "recon";
  run.cfg.check_keys(kKnownKeys);
  std::ifstream is(run.cfg.get("measurements"));
  if (!is) throw Error(ErrorCategory::io, "cannot read " + run.cfg.get("measurements"));
  std::map<std::string, std::string> header;
  const auto m = read_measurements(is, &header);
  const int L = m.layout.bandlimit;
  if (run.cfg.has("L") && run.L() != L)
    throw Error(ErrorCategory::dimension, "config L differs from the measurement file's L=" + std::to_string(L));
  const auto grid = make_grid(L);

  auto from_header = [&](const std::string& k) {
    if (run.cfg.has(k)) return run.cfg.get(k);
    const auto it = header.find(k);
    if (it == header.end()) throw Error(ErrorCategory::config, "no '" + k + "' in config or measurement header");
    return it->second;
  };
  const auto resp_spec = from_header("response");
  const auto base = base_profile_from_name(run.cfg.has("base") ? run.cfg.get("base") : header.count("base") ? header.at("base") : "cosine");
  const auto resp = response_from_spec(resp_spec, L, base);
  const auto settings = recon_from(run.cfg);

  std::optional<RealSignal> truth;
  if (run.cfg.has("truth"))
    truth = scene_from_spec(run.cfg.get("truth"), grid, static_cast<int>(run.cfg.get_int("scene_channel", 0)));
  const auto rep = reconstruct_and_score(m, grid, resp, settings, truth ? &*truth : nullptr);
  const auto& est = rep.outcome.estimate;

  const int W = static_cast<int>(run.cfg.get_int("width", grid.cols()));
  const int H = static_cast<int>(run.cfg.get_int("height", grid.rows()));
  const auto image_file = run.path(".pgm"), coeff_file = run.path("_coeffs.txt"), report_file = run.path("_report.txt");
  save_pnm(image_file, grid_to_raster(est, W, H), 16,
           {"config_hash=" + run.hash(), "seed=" + std::to_string(m.seed)});
  {
    auto os = run.open(coeff_file);
    os << "# config_hash=" << run.hash() << "\n# seed=" << m.seed << "\n";
    write_coeffs(os, sht_forward(est));
  }
  auto os = run.open(report_file);
  os << "# config_hash=" << run.hash() << "\n# seed=" << m.seed << "\n";
  os << "measurement_config_hash=" << (header.count("config_hash") ? header.at("config_hash") : "") << "\n";
  os << "method=" << run.cfg.get("method", "mfista") << "\nL=" << L << "\nresponse=" << resp_spec
     << "\nreadings=" << m.values.size() << "\n";
  if (rep.outcome.solver) {
    const auto& sr = *rep.outcome.solver;
    os << "lambda_tv=" << rep.outcome.lambda_tv << "\niterations=" << sr.iterations
       << "\nconverged=" << (sr.converged ? 1 : 0) << "\nlipschitz=" << sr.lipschitz << "\n";
  }
  if (rep.snr_db) os << "snr_i_db=" << *rep.snr_db << "\n";
  if (rep.outcome.solver) {
    os << "\niteration,objective\n";
    const auto& obj = rep.outcome.solver->objective;
    for (std::size_t k = 0; k < obj.size(); ++k) os << k << "," << obj[k] << "\n";
  }
  if (rep.snr_db) std::cout << "SNR_I " << std::setprecision(12) << *rep.snr_db << " dB\n";
  std::cout << "wrote " << image_file << ", " << coeff_file << ", " << report_file << "\n";
  return 0;
}

int cmd_sweep(Run& run) {
  run.default_name = "sweep";
  run.cfg.check_keys(kKnownKeys);
  const auto kind = run.cfg.get("sweep");
  std::vector<double> values;
  if (run.cfg.has("values")) {
    values = run.cfg.get_list("values");
  } else if (kind == "brightness") {
    for (int k = 1; k <= 10; ++k) values.push_back(0.1 * k);
  } else if (kind == "resolution") {
    values = {36, 72, 180, 360};
  } else if (kind == "subsample") {
    values = {1.0, 0.5, 0.25, 0.1};
  }
  if (kind != "brightness" && kind != "resolution" && kind != "subsample")
    throw Error(ErrorCategory::config, "sweep must be brightness, resolution or subsample");
  if (values.empty()) throw Error(ErrorCategory::config, "sweep has no values");
  const auto responses = run.cfg.has("responses") ? run.cfg.get_strings("responses")
                                                  : std::vector<std::string>{"optimal:10:10", "aperture:1"};
  const auto seeds = run.cfg.get_int("seeds", 3);
  if (seeds < 1) throw Error(ErrorCategory::config, "seeds must be >= 1");
  const auto sensor = sensor_from(run.cfg);
  const auto settings = recon_from(run.cfg);
  const auto scene_spec = run.cfg.get("scene", "synthetic");
  const int channel = static_cast<int>(run.cfg.get_int("scene_channel", 0));
  const auto base = run.base();

  // per-L scene and responses, built up front
  std::map<int, std::pair<SphericalGrid, RealSignal>> scenes;
  std::map<std::pair<int, std::string>, AngularResponse> resp_cache;
  auto L_for = [&](double v) {
    if (kind != "resolution") return run.L();
    if (v < 1 || v != std::floor(v)) throw Error(ErrorCategory::config, "resolution values must be positive integers");
    return static_cast<int>(v);
  };
  for (double v : values) {
    const int L = L_for(v);
    if (!scenes.count(L)) {
      auto grid = make_grid(L);
      auto scene = scene_from_spec(scene_spec, grid, channel);
      scenes.emplace(L, std::make_pair(std::move(grid), std::move(scene)));
    }
    for (const auto& r : responses)
      if (!resp_cache.count({L, r})) resp_cache.emplace(std::make_pair(L, r), response_from_spec(r, L, base));
  }

  struct Point {
    double value;
    std::string response;
    std::uint64_t seed;
    double snr = 0.0;
    int iterations = 0;
    bool converged = false;
  };
  std::vector<Point> points;
  for (double v : values)
    for (const auto& r : responses)
      for (long long k = 0; k < seeds; ++k) points.push_back({v, r, run.seed + static_cast<std::uint64_t>(k)});

  const double brightness = run.cfg.get_double("brightness", 0.4), fraction = run.cfg.get_double("subsample", 1.0);
  auto body = [&](std::size_t i) {
    auto& p = points[i];
    const int L = L_for(p.value);
    const auto& [grid, scene] = scenes.at(L);
    const auto& resp = resp_cache.at({L, p.response});
    const double b = kind == "brightness" ? p.value : brightness;
    const double f = kind == "subsample" ? p.value : fraction;
    const auto m = acquire(scene, resp, PixelLayout::full_grid(grid), sensor, b, p.seed, f);
    const auto rep = reconstruct_and_score(m, grid, resp, settings, &scene);
    p.snr = *rep.snr_db;
    if (rep.outcome.solver) {
      p.iterations = rep.outcome.solver->iterations;
      p.converged = rep.outcome.solver->converged;
    }
  };
  const auto jobs = run.cfg.get_int("jobs", 1);
  if (jobs > 1) {
    // one thread per point; the transforms inside each point run serially
    const unsigned saved = parallel_threads();
    parallel_threads() = static_cast<unsigned>(jobs);
    try {
      parallel_for(0, points.size(), [&](std::size_t i) { body(i); });
    } catch (...) {
      parallel_threads() = saved;
      throw;
    }
    parallel_threads() = saved;
  } else {
    for (std::size_t i = 0; i < points.size(); ++i) body(i);
  }

  const auto file = run.path(".csv"), runs_file = run.path("_runs.csv");
  {
    auto os = run.open(runs_file);
    run.provenance(os);
    os << "value,response,seed,snr_db,iterations,converged\n";
    for (const auto& p : points)
      os << p.value << "," << p.response << "," << p.seed << "," << p.snr << "," << p.iterations << ","
         << (p.converged ? 1 : 0) << "\n";
  }
  auto os = run.open(file);
  run.provenance(os);
  os << "# seeds=" << seeds << "\n";
  os << "sweep,value,response,mean_snr_db,std_snr_db,runs\n";
  for (std::size_t i = 0; i < points.size(); i += static_cast<std::size_t>(seeds)) {
    double mean = 0.0, sq = 0.0;
    for (long long k = 0; k < seeds; ++k) mean += points[i + k].snr;
    mean /= static_cast<double>(seeds);
    for (long long k = 0; k < seeds; ++k) sq += (points[i + k].snr - mean) * (points[i + k].snr - mean);
    const double sd = seeds > 1 ? std::sqrt(sq / static_cast<double>(seeds - 1)) : 0.0;
    os << kind << "," << points[i].value << "," << points[i].response << "," << mean << "," << sd << "," << seeds
       << "\n";
  }
  std::cout << "wrote " << file << ", " << runs_file << " (" << points.size() << " runs)\n";
  return 0;
}

int cmd_eval(Run& run) {
  run.default_name = "eval";
  run.cfg.check_keys(kKnownKeys);
  const int L = run.L();
  auto os = run.open(run.path(".txt"));
  run.provenance(os);
  os << "L=" << L << "\n";
  bool did = false;
  if (run.cfg.has("estimate")) {
    const auto grid = make_grid(L);
    const int channel = static_cast<int>(run.cfg.get_int("scene_channel", 0));
    const auto est = raster_to_grid(load_pnm(run.cfg.get("estimate")), L, 0);
    const auto truth = scene_from_spec(run.cfg.get("truth"), grid, channel);
    const double snr = snr_i(est, truth);
    os << "snr_i_db=" << snr << "\n";
    std::cout << "SNR_I " << std::setprecision(12) << snr << " dB\n";
    did = true;
  }
  if (run.cfg.has("response")) {
    const auto resp = response_from_spec(run.cfg.get("response"), L, run.base());
    const auto ghat = resp.scaling_coeffs();
    const double noise = run.cfg.get_double("noise_power", 1.0);
    os << "response=" << run.cfg.get("response") << "\nrobustness=" << robustness(ghat)
       << "\nthroughput_sr=" << light_throughput(resp) << "\nexpected_error=" << expected_recon_error(ghat, noise)
       << "\nnoise_power=" << noise << "\n";
    std::cout << "robustness " << std::setprecision(12) << robustness(ghat) << ", throughput "
              << light_throughput(resp) << " sr\n";
    did = true;
  }
  if (!did) throw Error(ErrorCategory::config, "eval needs 'estimate' and 'truth', or 'response'");
  std::cout << "wrote " << run.path(".txt") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sphcam: spherical lensless camera simulation and reconstruction"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::vector<std::string> overrides;
  std::map<std::string, std::function<int(Run&)>> commands{{"design", cmd_design},
                                                           {"simulate", cmd_simulate},
                                                           {"reconstruct", cmd_reconstruct},
                                                           {"sweep", cmd_sweep},
                                                           {"eval", cmd_eval}};
  const std::map<std::string, std::string> help{
      {"design", "search for the most robust mask"},
      {"simulate", "simulate sensor readings of a scene"},
      {"reconstruct", "recover the scene from readings"},
      {"sweep", "mean SNR_I over brightness, resolution or subsampling"},
      {"eval", "score an estimate against the truth, or a response"}};
  for (const auto& [name, fn] : commands) {
    auto* sub = app.add_subcommand(name, help.at(name));
    sub->add_option("-c,--config", config_path, "key = value config file");
    sub->add_option("--seed", seed, "seed (overrides the config)");
    sub->add_option("-o,--out-dir", out_dir, "output directory");
    sub->add_option("--set", overrides, "key=value override, applied after the config")->take_all();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[config]: " << e.what() << "\n";
    return exit_code(ErrorCategory::config);
  }

  try {
    Run run;
    if (!config_path.empty()) run.cfg = Config::load(config_path);
    for (const auto& kv : overrides) run.cfg.set_assignment(kv);
    if (seed) run.cfg.set("seed", std::to_string(*seed));
    const auto s = run.cfg.get_int("seed", 1);
    if (s < 0) throw Error(ErrorCategory::config, "seed must be >= 0");
    run.seed = static_cast<std::uint64_t>(s);
    run.out_dir = out_dir;
    std::error_code ec;
    fs::create_directories(run.out_dir, ec);
    if (ec) throw Error(ErrorCategory::io, "cannot create " + out_dir + ": " + ec.message());
    return commands.at(app.get_subcommands().front()->get_name())(run);
  } catch (const Error& e) {
    std::cerr << "error[" << to_string(e.category()) << "]: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
}
