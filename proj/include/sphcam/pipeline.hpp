#pragma once

// Glue shared by the command-line tool and the end-to-end checks: named
// responses and scenes, and one simulate + reconstruct pass.
//
// Response specs:
//   aperture:<deg>          open cone of half-angle deg
//   optimal:<bits>:<deg>    best mask of that size (exhaustive up to 20 bits)
//   mask:<path>             mask file
//   response:<path>         tabulated theta_rad,g file
// Scene specs: synthetic[:<seed>] or a PGM/PPM path.

#include <memory>
#include <optional>
#include <string>

#include "sphcam/forward_sim.hpp"
#include "sphcam/mask_search.hpp"
#include "sphcam/operators.hpp"
#include "sphcam/recon.hpp"
#include "sphcam/scene_io.hpp"

namespace sphcam {

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t a = 0;
  while (true) {
    const auto b = s.find(sep, a);
    out.push_back(s.substr(a, b == std::string::npos ? std::string::npos : b - a));
    if (b == std::string::npos) return out;
    a = b + 1;
  }
}

inline double spec_number(const std::string& s, const std::string& spec) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw Error(ErrorCategory::config, "bad number '" + s + "' in '" + spec + "'");
  return v;
}

}  // namespace detail

inline BaseProfile base_profile_from_name(const std::string& name) {
  if (name == "cosine") return BaseProfile::cosine();
  if (name == "uniform") return BaseProfile::uniform();
  throw Error(ErrorCategory::config, "unknown base profile '" + name + "' (cosine|uniform)");
}

/// Mask behind an optimal:<bits>:<deg> spec.
inline MaskSearchResult optimal_mask(int bits, double deg, int L, const BaseProfile& base) {
  if (bits <= 20) return search_exhaustive(bits, deg, L, base);
  return search_stochastic(bits, deg, L, base);
}

inline AngularResponse response_from_spec(const std::string& spec, int L,
                                          const BaseProfile& base = BaseProfile::cosine()) {
  const auto parts = detail::split(spec, ':');
  const auto& kind = parts[0];
  if (kind == "aperture" && parts.size() == 2) return open_aperture(detail::spec_number(parts[1], spec), L, base);
  if (kind == "optimal" && parts.size() == 3) {
    const double bits = detail::spec_number(parts[1], spec);
    if (bits != std::floor(bits) || bits < 1) throw Error(ErrorCategory::config, "bad bit count in '" + spec + "'");
    const auto best = optimal_mask(static_cast<int>(bits), detail::spec_number(parts[2], spec), L, base);
    return mask_to_response(best.mask, L, base);
  }
  const auto rest = spec.substr(spec.find(':') + 1);
  if (kind == "mask" && parts.size() >= 2) return mask_to_response(load_mask(rest), L, base);
  if (kind == "response" && parts.size() >= 2) return load_response_csv(rest, L);
  throw Error(ErrorCategory::config,
              "bad response spec '" + spec + "' (aperture:<deg> | optimal:<bits>:<deg> | mask:<path> | response:<path>)");
}

inline RealSignal scene_from_spec(const std::string& spec, const SphericalGrid& grid, int channel = 0) {
  if (spec == "synthetic") return synthetic_scene(grid);
  if (spec.rfind("synthetic:", 0) == 0) {
    const double s = detail::spec_number(spec.substr(10), spec);
    if (s < 0 || s != std::floor(s)) throw Error(ErrorCategory::config, "bad scene seed in '" + spec + "'");
    return synthetic_scene(grid, static_cast<std::uint64_t>(s));
  }
  return raster_to_grid(load_pnm(spec), grid.bandlimit(), channel);
}

enum class ReconMethod { mfista, direct, wiener };

inline ReconMethod recon_method_from_name(const std::string& s) {
  if (s == "mfista") return ReconMethod::mfista;
  if (s == "direct") return ReconMethod::direct;
  if (s == "wiener") return ReconMethod::wiener;
  throw Error(ErrorCategory::config, "unknown method '" + s + "' (mfista|direct|wiener)");
}

struct ReconSettings {
  ReconMethod method = ReconMethod::mfista;
  ReconConfig solver;
  // TV weight per unit reading noise variance; negative uses solver.lambda_tv as is
  double lambda_scale = 1e4;
};

struct ReconOutcome {
  RealSignal estimate;
  std::optional<ReconResult> solver;
  double lambda_tv = 0.0;
};

/// Forward operator matching a measurement's layout.
inline std::unique_ptr<LinearOperator> measurement_operator(const MeasurementSet& m, const SphericalGrid& grid,
                                                            const AngularResponse& g) {
  if (m.layout.bandlimit != grid.bandlimit())
    throw Error(ErrorCategory::dimension, "measurement bandlimit " + std::to_string(m.layout.bandlimit) +
                                              " does not match grid bandlimit " + std::to_string(grid.bandlimit()));
  switch (m.layout.kind) {
    case LayoutKind::full_grid:
      return std::make_unique<SpectralConvolutionOperator>(grid, SpectralOperator(g, grid.bandlimit()), m.gain);
    case LayoutKind::subset:
      return std::make_unique<SpectralConvolutionOperator>(grid, SpectralOperator(g, grid.bandlimit()), m.gain,
                                                           m.layout.indices);
    case LayoutKind::freeform:
      return std::make_unique<DenseConvolutionOperator>(grid, g, m.layout.orientations, m.gain);
  }
  throw Error(ErrorCategory::domain, "unknown layout");
}

inline ReconOutcome reconstruct(const MeasurementSet& m, const SphericalGrid& grid, const AngularResponse& g,
                                const ReconSettings& s) {
  ReconOutcome out{RealSignal(grid), std::nullopt, 0.0};
  if (s.method == ReconMethod::mfista) {
    auto cfg = s.solver;
    if (s.lambda_scale >= 0.0) cfg.lambda_tv = noise_scaled_lambda(m, s.lambda_scale);
    out.lambda_tv = cfg.lambda_tv;
    const auto op = measurement_operator(m, grid, g);
    out.solver = mfista_tv(*op, m.values, cfg);
    out.estimate = out.solver->estimate;
    return out;
  }
  const SpectralOperator spec(g, grid.bandlimit());
  const auto y = measured_coeffs(m, grid);
  const auto c = s.method == ReconMethod::direct ? invert_direct(y, spec) : wiener(y, spec, s.solver.wiener_snr_prior);
  out.estimate = sht_inverse_real(c, grid);
  return out;
}

/// One scene through the camera: simulate on the layout, optionally keep a
/// random fraction of the pixels.
inline MeasurementSet acquire(const RealSignal& scene, const AngularResponse& g, const PixelLayout& layout,
                              const SensorSpec& sensor, double brightness, std::uint64_t seed, double fraction = 1.0) {
  auto m = simulate(scene, g, layout, sensor, brightness, seed);
  if (fraction < 1.0) m = subsample(m, fraction, seed);
  return m;
}

}  // namespace sphcam
