// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fail. Usage: acceptance [baseline-file]

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "sphcam/sphcam.hpp"
#include "test_support.hpp"

using namespace sphcam;
using namespace sphcam::testing;

namespace {

// pinned tolerances
constexpr double kShtTol = 1e-9;
constexpr double kShtSeconds = 10.0;
constexpr double kConvTol = 1e-6;
constexpr double kConvSeconds = 30.0;
constexpr double kThroughputRelTol = 1e-6;
constexpr double kSearchSeconds = 120.0;
constexpr double kSpearmanMin = 0.9;
constexpr double kMcRelTol = 0.05;
constexpr double kMfistaDirectTol = 1e-4;
constexpr double kGradRelTol = 1e-5;
constexpr double kAdjointRelTol = 1e-10;
constexpr double kFreeformMarginDb = 3.0;
constexpr double kBaselineSlackDb = 1e-6;

constexpr int kL = 36;
constexpr double kBrightness = 0.4;
constexpr int kSeeds = 3;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass;
  std::string detail;
};

// objective traces from every MFISTA run, checked together under criterion 8
std::vector<std::pair<std::string, std::vector<double>>> g_traces;

bool monotone(const std::vector<double>& v) {
  for (std::size_t k = 1; k < v.size(); ++k)
    if (v[k] > v[k - 1]) return false;
  return true;
}

AngularResponse golden_response(int L) {
  return mask_to_response(search_exhaustive(10, 10.0, L).mask, L);
}

struct RunResult {
  double snr;
  ReconResult solver;
};

/// Simulate + MFISTA-TV with the library defaults.
RunResult run_point(const SphericalGrid& grid, const RealSignal& scene, const AngularResponse& g,
                    const PixelLayout& layout, double brightness, std::uint64_t seed, double fraction,
                    const std::string& label) {
  const auto m = acquire(scene, g, layout, SensorSpec{}, brightness, seed, fraction);
  auto out = reconstruct(m, grid, g, ReconSettings{});
  g_traces.emplace_back(label, out.solver->objective);
  return {snr_i(out.estimate, scene), std::move(*out.solver)};
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// ---------------------------------------------------------------------------

Outcome sht_exactness() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int L : {2, 4, 8, 16, 32}) {
    const auto grid = make_grid(L);
    for (std::uint64_t s = 1; s <= 3; ++s) {
      const auto c = random_complex_coeffs(L, 100 * L + s);
      worst = std::max(worst, max_abs_diff(sht_forward(sht_inverse(c, grid)), c));
    }
  }
  const double t = seconds_since(t0);
  return {worst <= kShtTol && t < kShtSeconds, fmt("max abs error %.3g, %.2f s", worst, t)};
}

Outcome convolution_theorem() {
  const auto t0 = Clock::now();
  // degree-4 polynomial profile: brute-force quadrature on the L+4 grid is exact
  const auto poly = BaseProfile::function([](double t) { return std::pow(0.5 * (1.0 + std::cos(t)), 4); });
  double worst = 0.0;
  for (int L : {4, 8, 16}) {
    const auto coarse = make_grid(L), fine = make_grid(L + 4);
    const auto g = profile_response(poly, L);
    const SpectralOperator op(g, L);
    std::vector<Vec3> dirs(coarse.size());
    for (std::size_t j = 0; j < dirs.size(); ++j) dirs[j] = coarse.direction(j);
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
      const auto c = random_real_coeffs(L, 7000 + 100 * L + trial);
      const auto spectral = sht_inverse_real(convolve_spectral(c, op), coarse);
      const auto direct = convolve_bruteforce(sht_inverse_real(c, fine), g, dirs);
      for (std::size_t j = 0; j < dirs.size(); ++j) worst = std::max(worst, std::abs(spectral[j] - direct[j]));
    }
  }
  const double t = seconds_since(t0);
  return {worst <= kConvTol && t < kConvSeconds, fmt("max abs error %.3g over 60 trials, %.2f s", worst, t)};
}

Outcome throughput_closed_form() {
  double worst = 0.0;
  for (double a : {1.0, 10.0, 20.0, 30.0, 40.0}) {
    const double expect = kPi * std::pow(std::sin(deg_to_rad(a)), 2);
    worst = std::max(worst, std::abs(light_throughput(open_aperture(a, kL)) - expect) / expect);
  }
  return {worst <= kThroughputRelTol, fmt("max relative error %.3g", worst)};
}

Outcome robustness_ordering() {
  const auto best = search_exhaustive(10, 10.0, kL);
  const auto mask = mask_to_response(best.mask, kL);
  const auto pin = open_aperture(1.0, kL), wide = open_aperture(40.0, kL);
  const double rm = robustness(mask, kL), rp = robustness(pin, kL), rw = robustness(wide, kL);
  const double tm = light_throughput(mask), tp = light_throughput(pin);
  const bool ok = rm > rp && rm > rw && tm > tp;
  return {ok, fmt("mask %s: robustness %.4g vs 1 deg %.4g, 40 deg %.4g; throughput %.4g vs %.4g sr",
                  best.mask.to_string().c_str(), rm, rp, rw, tm, tp)};
}

Outcome exhaustive_validity() {
  const auto t0 = Clock::now();
  const auto best = search_exhaustive(10, 10.0, kL);
  // independent sweep through the public response builders
  double top = -1.0;
  std::uint64_t top_code = 0;
  for (std::uint64_t code = 1; code < 1024; ++code) {
    const double r = robustness(mask_to_response(BinaryMask::from_code(code, 10, 10.0), kL), kL);
    if (r > top) {
      top = r;
      top_code = code;
    }
  }
  const double t = seconds_since(t0);
  const bool ok = best.robustness == top && best.mask.code() == top_code && best.evaluated == 1023 && t < kSearchSeconds;
  return {ok, fmt("search %s (%.6g), sweep %s (%.6g), %.1f s", best.mask.to_string().c_str(), best.robustness,
                  BinaryMask::from_code(top_code, 10, 10.0).to_string().c_str(), top, t)};
}

struct EndToEnd {
  std::map<double, double> mask_by_brightness;  // mean SNR_I
  double pinhole = 0.0;
};

EndToEnd end_to_end_runs(const SphericalGrid& grid, const RealSignal& scene) {
  EndToEnd e;
  const auto mask = golden_response(kL), pin = open_aperture(1.0, kL);
  const auto layout = PixelLayout::full_grid(grid);
  for (int k = 1; k <= 10; ++k) {
    const double b = 0.1 * k;
    double acc = 0.0;
    for (std::uint64_t s = 1; s <= kSeeds; ++s)
      acc += run_point(grid, scene, mask, layout, b, s, 1.0, fmt("mask b=%.1f seed=%d", b, int(s))).snr;
    e.mask_by_brightness[b] = acc / kSeeds;
  }
  for (std::uint64_t s = 1; s <= kSeeds; ++s)
    e.pinhole += run_point(grid, scene, pin, layout, kBrightness, s, 1.0, fmt("pinhole seed=%d", int(s))).snr / kSeeds;
  return e;
}

Outcome snr_ordering(const EndToEnd& e) {
  std::vector<double> b, snr;
  std::string curve;
  for (const auto& [bb, s] : e.mask_by_brightness) {
    b.push_back(bb);
    snr.push_back(s);
    curve += fmt(" %.1f", s);
  }
  const double mask40 = e.mask_by_brightness.lower_bound(kBrightness - 1e-9)->second;
  const double rho = spearman(b, snr);
  return {mask40 > e.pinhole && rho > kSpearmanMin,
          fmt("at 40%%: mask %.2f dB vs 1 deg pinhole %.2f dB; Spearman %.3f over brightness, dB:", mask40,
              e.pinhole, rho) + curve};
}

Outcome expected_error_formula() {
  const int L = 8;
  const auto r = mask_to_response(BinaryMask({0, 0, 0, 0, 0, 1, 1, 1, 1, 1}, 45.0), L);
  const SpectralOperator op(r, L);
  const double noise_power = 0.01;
  const auto f = random_real_coeffs(L, 5);
  const auto clean = convolve_spectral(f, op);
  CounterRng rng(99);
  std::normal_distribution<double> n(0.0, std::sqrt(noise_power / 2.0));
  const int draws = 1000;
  double mse = 0.0;
  for (int d = 0; d < draws; ++d) {
    HarmonicCoeffs y = clean;
    for (auto& v : y.values()) v += cdouble{n(rng), n(rng)};
    const auto est = invert_direct(y, op);
    double e = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) e += std::norm(est.values()[i] - f.values()[i]);
    mse += e / draws;
  }
  const double predicted = expected_recon_error(r, L, noise_power);
  const double rel = std::abs(mse - predicted) / predicted;
  return {rel <= kMcRelTol, fmt("Monte Carlo %.5g vs predicted %.5g (%.2f%%)", mse, predicted, 100 * rel)};
}

Outcome mfista_contract() {
  const int L = 8;
  const auto grid = make_grid(L);
  const auto scene = synthetic_scene(grid, 3);
  const auto g = mask_to_response(BinaryMask({0, 0, 0, 0, 0, 1, 1, 1, 1, 1}, 45.0), L);

  // lambda = 0, noiseless, against direct inversion
  const auto m = acquire(scene, g, PixelLayout::full_grid(grid), SensorSpec::ideal(), 0.5, 1);
  const SpectralOperator spec(g, L);
  const auto direct = sht_inverse_real(invert_direct(measured_coeffs(m, grid), spec), grid);
  const SpectralConvolutionOperator op(grid, spec, m.gain);
  ReconConfig cfg;
  cfg.lambda_tv = 0.0;
  cfg.max_iters = 20000;
  cfg.tol = 1e-15;
  const auto res = mfista_tv(op, m.values, cfg);
  g_traces.emplace_back("lambda=0 noiseless", res.objective);
  double worst = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) worst = std::max(worst, std::abs(res.estimate[i] - direct[i]));

  // a few regularized problems on each operator kind
  const auto noisy = acquire(scene, g, PixelLayout::full_grid(grid), SensorSpec{}, 0.3, 2);
  const auto sub = subsample(noisy, 0.3, 2);
  const auto def = deform_layout(grid, Deformation::parse("ellipsoid", 1.5));
  const auto free = acquire(scene, g, def.layout, SensorSpec{}, 0.3, 2);
  for (double lam : {1e-4, 1e-2, 1.0})
    for (const auto* mm : {&noisy, &sub, &free}) {
      ReconConfig c;
      c.lambda_tv = lam;
      c.max_iters = 200;
      const auto o = measurement_operator(*mm, grid, g);
      g_traces.emplace_back(fmt("%s lambda=%g", std::string(to_string(mm->layout.kind)).c_str(), lam),
                            mfista_tv(*o, mm->values, c).objective);
    }

  // data-term gradient by central differences along random directions
  double grad_err = 0.0;
  CounterRng rng(17);
  const DenseConvolutionOperator dense(grid, g, def.layout.orientations, free.gain);
  for (const LinearOperator* o : {static_cast<const LinearOperator*>(&op), static_cast<const LinearOperator*>(&dense)})
    for (int trial = 0; trial < 3; ++trial) {
      std::vector<double> x(o->cols()), y(o->rows()), d(o->cols()), grad;
      for (auto& v : x) v = rng.uniform();
      for (auto& v : y) v = rng.uniform();
      for (auto& v : d) v = rng.uniform() - 0.5;
      const ReconObjective obj(*o, y, 0.3);
      obj.value(x, &grad);
      double analytic = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) analytic += grad[i] * d[i];
      const double h = 1e-4;
      auto xp = x, xm = x;
      for (std::size_t i = 0; i < x.size(); ++i) {
        xp[i] += h * d[i];
        xm[i] -= h * d[i];
      }
      const double numeric = (obj.value(xp) - obj.value(xm)) / (2 * h);
      grad_err = std::max(grad_err, std::abs(analytic - numeric) / std::abs(numeric));
    }

  std::size_t bad = 0;
  std::string first_bad;
  for (const auto& [label, trace] : g_traces)
    if (!monotone(trace)) {
      if (!bad) first_bad = label;
      ++bad;
    }
  const bool ok = bad == 0 && worst <= kMfistaDirectTol && grad_err <= kGradRelTol;
  return {ok, fmt("%zu/%zu objective traces monotone%s; lambda=0 vs direct %.3g (%d iterations); gradient rel err %.3g",
                  g_traces.size() - bad, g_traces.size(), bad ? (" (first bad: " + first_bad + ")").c_str() : "",
                  worst, res.iterations, grad_err)};
}

Outcome undersampling(const SphericalGrid& grid, const RealSignal& scene) {
  const auto mask = golden_response(kL);
  std::vector<double> means;
  bool converged = true;
  std::string curve;
  for (double f : {1.0, 0.5, 0.25, 0.1}) {
    double acc = 0.0;
    for (std::uint64_t s = 1; s <= kSeeds; ++s) {
      const auto r = run_point(grid, scene, mask, PixelLayout::full_grid(grid), kBrightness, s, f,
                               fmt("subsample %.2f seed=%d", f, int(s)));
      converged = converged && std::isfinite(r.snr) && r.solver.objective.back() < r.solver.objective.front();
      acc += r.snr;
    }
    means.push_back(acc / kSeeds);
    curve += fmt(" %g%%: %.2f dB", 100 * f, means.back());
  }
  bool mono = true;
  for (std::size_t k = 1; k < means.size(); ++k) mono = mono && means[k] <= means[k - 1];
  return {mono && converged, std::string(mono ? "non-increasing" : "NOT non-increasing") + ";" + curve +
                                 (converged ? "; all runs decreased the objective" : "; a run failed to converge")};
}

Outcome flexible_layout(const std::string& baseline_path) {
  const int L = 8;
  const auto grid = make_grid(L);
  const auto scene = synthetic_scene(grid, 1);
  const auto g = mask_to_response(BinaryMask({0, 0, 0, 0, 0, 1, 1, 1, 1, 1}, 45.0), L);
  const auto def = deform_layout(grid, Deformation::parse("ellipsoid", 1.5));
  const DenseConvolutionOperator op(grid, g, def.layout.orientations, 0.7);

  double adj = 0.0;
  CounterRng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> x(op.cols()), y(op.rows());
    for (auto& v : x) v = rng.uniform() - 0.5;
    for (auto& v : y) v = rng.uniform() - 0.5;
    const auto ax = op.apply(x), aty = op.adjoint(y);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += ax[i] * y[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * aty[i];
    adj = std::max(adj, std::abs(lhs - rhs) / std::abs(rhs));
  }

  double free = 0.0, sub = 0.0;
  for (std::uint64_t s = 1; s <= kSeeds; ++s) {
    free += run_point(grid, scene, g, def.layout, kBrightness, s, 1.0, fmt("ellipsoid seed=%d", int(s))).snr / kSeeds;
    sub += run_point(grid, scene, g, PixelLayout::full_grid(grid), kBrightness, s, 0.1,
                     fmt("L=8 subsample 0.1 seed=%d", int(s))).snr / kSeeds;
  }
  bool ok = adj <= kAdjointRelTol && free >= sub - kFreeformMarginDb;
  std::string detail = fmt("adjoint rel err %.3g; ellipsoid %.2f dB vs 10%% spherical %.2f dB", adj, free, sub);

  std::ifstream in(baseline_path);
  double base_free = 0.0, base_sub = 0.0;
  if (in >> base_free >> base_sub) {
    const bool held = free >= base_free - kBaselineSlackDb;
    ok = ok && held;
    detail += fmt("; baseline %.2f dB %s", base_free, held ? "held" : "REGRESSED");
  } else {
    std::ofstream out(baseline_path);
    out << std::setprecision(17) << free << " " << sub << "\n";
    detail += out ? "; baseline recorded" : "; could not record baseline";
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string baseline = argc > 1 ? argv[1] : "acceptance_baseline.txt";
  struct Line {
    std::string name;
    Outcome outcome;
    double seconds;
  };
  std::map<int, Line> lines;
  auto run = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    std::cerr << "running " << id << " (" << name << ")" << std::endl;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    lines[id] = {name, o, seconds_since(t0)};
  };

  const auto grid = make_grid(kL);
  const auto scene = synthetic_scene(grid, 1);

  run(1, "SHT exactness", sht_exactness);
  run(2, "convolution theorem", convolution_theorem);
  run(3, "open-aperture throughput", throughput_closed_form);
  run(4, "robustness ordering", robustness_ordering);
  run(5, "exhaustive search validity", exhaustive_validity);
  run(6, "end-to-end SNR ordering", [&] { return snr_ordering(end_to_end_runs(grid, scene)); });
  run(7, "expected-error formula", expected_error_formula);
  run(9, "undersampling robustness", [&] { return undersampling(grid, scene); });
  run(10, "flexible layout", [&] { return flexible_layout(baseline); });
  // last, so the objective traces of 6, 9 and 10 are covered too
  run(8, "MFISTA contract", mfista_contract);

  int failed = 0;
  for (const auto& [id, l] : lines) {
    if (!l.outcome.pass) ++failed;
    std::cout << (l.outcome.pass ? "PASS" : "FAIL") << "  " << std::setw(2) << id << "  " << l.name << ": "
              << l.outcome.detail << fmt(" [%.1f s]", l.seconds) << "\n";
  }
  std::cout << (failed ? fmt("%d criteria failed\n", failed) : std::string("all criteria passed\n"));
  return failed ? 1 : 0;
}
