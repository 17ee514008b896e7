#pragma once

// Sensor readings from a scene: isotropic convolution with the pixel
// response, exposure calibration, Poisson photon noise, Gaussian readout
// noise and saturation.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "sphcam/convolution.hpp"
#include "sphcam/operators.hpp"
#include "sphcam/response.hpp"

namespace sphcam {

/// Half-angle of the open cosine aperture that defines brightness 1.0: at
/// that brightness its brightest pixel just reaches full well.
inline constexpr double kReferenceApertureDeg = 40.0;

struct SensorSpec {
  double full_well = 32761.0;      // electrons
  double dynamic_range_db = 73.07;
  bool noiseless = false;

  double readout_sigma() const { return full_well * std::pow(10.0, -dynamic_range_db / 20.0); }

  /// Same scale, no noise.
  static SensorSpec ideal(double full_well = 32761.0) { return {full_well, 73.07, true}; }

  void validate() const {
    if (!(full_well > 0.0)) throw Error(ErrorCategory::domain, "full well must be > 0");
    if (!(dynamic_range_db > 0.0)) throw Error(ErrorCategory::domain, "dynamic range must be > 0 dB");
  }
};

enum class LayoutKind { full_grid, subset, freeform };

inline std::string_view to_string(LayoutKind k) {
  switch (k) {
    case LayoutKind::full_grid: return "full-grid";
    case LayoutKind::subset: return "subset";
    case LayoutKind::freeform: return "freeform";
  }
  return "unknown";
}

struct PixelLayout {
  LayoutKind kind = LayoutKind::full_grid;
  std::vector<Vec3> orientations;
  int bandlimit = 0;                  // grid the layout refers to
  std::vector<std::size_t> indices;   // grid sample of each pixel (full-grid, subset)

  std::size_t size() const { return orientations.size(); }

  static PixelLayout full_grid(const SphericalGrid& grid) {
    PixelLayout l;
    l.kind = LayoutKind::full_grid;
    l.bandlimit = grid.bandlimit();
    l.orientations.resize(grid.size());
    l.indices.resize(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) {
      l.orientations[j] = grid.direction(j);
      l.indices[j] = j;
    }
    return l;
  }

  static PixelLayout freeform(std::vector<Vec3> dirs, int bandlimit) {
    detail::check_unit(dirs);
    PixelLayout l;
    l.kind = LayoutKind::freeform;
    l.bandlimit = bandlimit;
    l.orientations = std::move(dirs);
    return l;
  }
};

struct MeasurementSet {
  std::vector<double> values;  // normalized digital numbers in [0, 1]
  PixelLayout layout;
  SensorSpec sensor;
  double brightness = 1.0;
  std::uint64_t seed = 0;
  double gain = 1.0;  // noiseless value per unit of (f * g), fixed by the calibration
};

/// Scaled-down readings (f * g)(r_i) for the layout; full-grid and subset
/// layouts go through the harmonic domain, freeform layouts through the
/// dense quadrature.
inline std::vector<double> convolve_layout(const RealSignal& scene, const AngularResponse& g,
                                           const PixelLayout& layout) {
  const auto& grid = scene.grid();
  if (layout.kind == LayoutKind::freeform)
    return DenseConvolutionOperator(grid, g, layout.orientations).apply(scene.values());
  if (layout.bandlimit != grid.bandlimit())
    throw Error(ErrorCategory::dimension, "layout bandlimit " + std::to_string(layout.bandlimit) +
                                              " does not match scene grid " +
                                              std::to_string(grid.bandlimit()));
  if (layout.kind == LayoutKind::full_grid && layout.indices.size() != grid.size())
    throw Error(ErrorCategory::dimension, "full-grid layout does not enumerate the grid");
  const auto full = convolve_grid(scene, SpectralOperator(g.with_bandlimit(grid.bandlimit()), grid.bandlimit()));
  std::vector<double> out(layout.indices.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = full[layout.indices[k]];
  return out;
}

/// Largest full-grid reading of the scene under the reference aperture.
inline double reference_peak(const RealSignal& scene) {
  const int L = scene.grid().bandlimit();
  const auto ref = convolve_grid(scene, SpectralOperator(open_aperture(kReferenceApertureDeg, L), L));
  return *std::max_element(ref.values().begin(), ref.values().end());
}

/// One pixel: mean electrons -> Poisson + readout noise -> clip -> [0, 1].
inline double noisy_reading(double mean_electrons, const SensorSpec& s, std::uint64_t seed, std::uint64_t pixel) {
  if (s.noiseless) return std::clamp(mean_electrons, 0.0, s.full_well) / s.full_well;
  CounterRng rng(seed, pixel);
  const double mu = std::max(0.0, mean_electrons);
  double e = 0.0;
  if (mu > 0.0) e = static_cast<double>(std::poisson_distribution<long long>(mu)(rng));
  e += std::normal_distribution<double>(0.0, s.readout_sigma())(rng);
  return std::clamp(e, 0.0, s.full_well) / s.full_well;
}

inline MeasurementSet simulate(const RealSignal& scene, const AngularResponse& response,
                               const PixelLayout& layout, const SensorSpec& sensor, double brightness,
                               std::uint64_t seed) {
  sensor.validate();
  if (!(brightness > 0.0 && brightness <= 1.0))
    throw Error(ErrorCategory::domain, "brightness must be in (0, 1], got " + std::to_string(brightness));
  const auto conv = convolve_layout(scene, response, layout);
  const double peak = reference_peak(scene);
  MeasurementSet m;
  m.layout = layout;
  m.sensor = sensor;
  m.brightness = brightness;
  m.seed = seed;
  // a dark scene has no peak to calibrate against; any gain will do
  m.gain = peak > 0.0 ? brightness / peak : brightness;
  m.values.resize(conv.size());
  parallel_for(0, conv.size(), [&](std::size_t i) {
    // divide last so the reference peak maps to exactly `brightness`
    const double dn = peak > 0.0 ? brightness * conv[i] / peak : brightness * conv[i];
    m.values[i] = noisy_reading(dn * sensor.full_well, sensor, seed, i);
  });
  return m;
}

/// Keeps round(fraction N) readings chosen uniformly without replacement,
/// in their original order.
inline MeasurementSet subsample(const MeasurementSet& m, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw Error(ErrorCategory::domain, "subsample fraction must be in (0, 1]");
  if (m.layout.kind != LayoutKind::full_grid)
    throw Error(ErrorCategory::domain, "subsample expects a full-grid measurement set");
  const std::size_t n = m.values.size();
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  std::vector<std::size_t> all(n), picked;
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  picked.reserve(keep);
  CounterRng rng(seed, 0x5ab5a3b1eULL);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), keep, rng);

  MeasurementSet out = m;
  out.layout.kind = LayoutKind::subset;
  out.layout.orientations.clear();
  out.layout.indices.clear();
  out.values.clear();
  for (std::size_t i : picked) {
    out.values.push_back(m.values[i]);
    out.layout.orientations.push_back(m.layout.orientations[i]);
    out.layout.indices.push_back(m.layout.indices[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deformed sensors

enum class DeformationKind { identity, ellipsoid, cap, bend };

/// ellipsoid: param = z/x axis ratio. cap: param = angular extent in degrees
/// that the sphere's 0..180 degree colatitudes are squeezed into. bend:
/// param in [0, 1], elevations shrink by (1 - param), 1 giving a cylinder.
struct Deformation {
  DeformationKind kind = DeformationKind::identity;
  double param = 1.0;

  static Deformation parse(const std::string& name, double param) {
    if (name == "identity" || name == "none") return {DeformationKind::identity, 1.0};
    if (name == "ellipsoid") return {DeformationKind::ellipsoid, param};
    if (name == "cap") return {DeformationKind::cap, param};
    if (name == "bend") return {DeformationKind::bend, param};
    throw Error(ErrorCategory::config, "unknown deformation '" + name + "'");
  }
};

struct DeformedLayout {
  PixelLayout layout;
  std::size_t distinct = 0;        // distinct orientations (to 1e-9)
  bool conditioning_alert = false; // many pixels collapsed onto the same orientation
};

inline std::size_t count_distinct(const std::vector<Vec3>& dirs, double tol = 1e-9) {
  std::set<std::array<long long, 3>> keys;
  for (const auto& d : dirs)
    keys.insert({std::llround(d[0] / tol), std::llround(d[1] / tol), std::llround(d[2] / tol)});
  return keys.size();
}

inline DeformedLayout deform_layout(const SphericalGrid& grid, const Deformation& def) {
  std::vector<Vec3> dirs(grid.size());
  for (int t = 0; t < grid.rows(); ++t)
    for (int p = 0; p < grid.cols(); ++p) {
      const double th = grid.theta(t), ph = grid.phi(p);
      Vec3 n{};
      switch (def.kind) {
        case DeformationKind::identity: n = grid.direction(t, p); break;
        case DeformationKind::ellipsoid: {
          if (!(def.param > 0.0)) throw Error(ErrorCategory::domain, "ellipsoid ratio must be > 0");
          const double s = std::sin(th);
          // surface (sin cos, sin sin, c cos); normal is the gradient of x^2+y^2+z^2/c^2
          n = normalized({s * std::cos(ph), s * std::sin(ph), std::cos(th) / def.param});
          break;
        }
        case DeformationKind::cap: {
          if (!(def.param > 0.0 && def.param <= 180.0))
            throw Error(ErrorCategory::domain, "cap extent must be in (0, 180] degrees");
          n = direction(th * def.param / 180.0, ph);
          break;
        }
        case DeformationKind::bend: {
          if (!(def.param >= 0.0 && def.param <= 1.0))
            throw Error(ErrorCategory::domain, "bend amount must be in [0, 1]");
          const double elev = (kPi / 2 - th) * (1.0 - def.param);
          n = {std::cos(elev) * std::cos(ph), std::cos(elev) * std::sin(ph), std::sin(elev)};
          break;
        }
      }
      dirs[grid.index(t, p)] = n;
    }
  DeformedLayout out;
  out.distinct = count_distinct(dirs);
  // the undeformed grid already repeats its pole row
  const std::size_t grid_distinct = grid.size() - static_cast<std::size_t>(grid.cols() - 1);
  out.conditioning_alert = static_cast<double>(out.distinct) < 0.99 * static_cast<double>(grid_distinct);
  out.layout = PixelLayout::freeform(std::move(dirs), grid.bandlimit());
  return out;
}

// ---------------------------------------------------------------------------
// Files

/// "# key=value" provenance lines, then "theta,phi,value" rows.
inline void write_measurements(std::ostream& os, const MeasurementSet& m,
                               const std::map<std::string, std::string>& extra = {}) {
  os << std::setprecision(17);
  os << "# layout=" << to_string(m.layout.kind) << "\n";
  os << "# L=" << m.layout.bandlimit << "\n";
  os << "# full_well=" << m.sensor.full_well << "\n";
  os << "# dynamic_range_db=" << m.sensor.dynamic_range_db << "\n";
  os << "# noiseless=" << (m.sensor.noiseless ? 1 : 0) << "\n";
  os << "# brightness=" << m.brightness << "\n";
  os << "# seed=" << m.seed << "\n";
  os << "# gain=" << m.gain << "\n";
  for (const auto& [k, v] : extra) os << "# " << k << "=" << v << "\n";
  os << "theta,phi,value\n";
  const bool on_grid = m.layout.kind != LayoutKind::freeform && m.layout.indices.size() == m.values.size();
  const int N = 2 * m.layout.bandlimit - 1;
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    double th, ph;
    if (on_grid) {
      // grid angles, so pole-row pixels keep their azimuth
      const auto idx = m.layout.indices[i];
      th = kPi * (2.0 * static_cast<double>(idx / N) + 1.0) / N;
      ph = kTwoPi * static_cast<double>(idx % N) / N;
    } else {
      std::tie(th, ph) = to_spherical(m.layout.orientations[i]);
    }
    os << th << "," << ph << "," << m.values[i] << "\n";
  }
}

/// Parses a measurement file. Grid-backed layouts recover each pixel's grid
/// index from its angles.
inline MeasurementSet read_measurements(std::istream& is, std::map<std::string, std::string>* header = nullptr) {
  std::map<std::string, std::string> h;
  std::string line;
  bool columns = false;
  MeasurementSet m;
  std::vector<std::pair<double, double>> angles;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto key = line.substr(1, eq - 1);
      key.erase(0, key.find_first_not_of(' '));
      h[key] = line.substr(eq + 1);
      continue;
    }
    if (!columns) {
      if (line != "theta,phi,value") throw Error(ErrorCategory::io, "measurement file: expected header theta,phi,value");
      columns = true;
      continue;
    }
    std::stringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c))
      throw Error(ErrorCategory::io, "measurement file: bad row '" + line + "'");
    try {
      angles.emplace_back(std::stod(a), std::stod(b));
      m.values.push_back(std::stod(c));
    } catch (const std::exception&) {
      throw Error(ErrorCategory::io, "measurement file: bad number in '" + line + "'");
    }
  }
  if (!columns) throw Error(ErrorCategory::io, "measurement file: no data header");
  auto get = [&](const std::string& k) -> const std::string& {
    const auto it = h.find(k);
    if (it == h.end()) throw Error(ErrorCategory::io, "measurement file: missing '" + k + "' in header");
    return it->second;
  };
  try {
    m.layout.bandlimit = std::stoi(get("L"));
    m.sensor.full_well = std::stod(get("full_well"));
    m.sensor.dynamic_range_db = std::stod(get("dynamic_range_db"));
    m.sensor.noiseless = get("noiseless") == "1";
    m.brightness = std::stod(get("brightness"));
    m.seed = std::stoull(get("seed"));
    m.gain = std::stod(get("gain"));
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw Error(ErrorCategory::io, "measurement file: malformed header value");
  }
  const auto& kind = get("layout");
  if (kind == "full-grid") m.layout.kind = LayoutKind::full_grid;
  else if (kind == "subset") m.layout.kind = LayoutKind::subset;
  else if (kind == "freeform") m.layout.kind = LayoutKind::freeform;
  else throw Error(ErrorCategory::io, "measurement file: unknown layout '" + kind + "'");

  for (const auto& [th, ph] : angles) m.layout.orientations.push_back(direction(th, ph));
  if (m.layout.kind != LayoutKind::freeform) {
    if (m.layout.bandlimit < 1) throw Error(ErrorCategory::io, "measurement file: bad L");
    const int L = m.layout.bandlimit, N = 2 * L - 1;
    for (const auto& [th, ph] : angles) {
      const long t = std::lround((th * N / kPi - 1.0) / 2.0);
      const long p = std::lround(ph * N / kTwoPi) % N;
      if (t < 0 || t >= L) throw Error(ErrorCategory::io, "measurement file: theta off the grid");
      m.layout.indices.push_back(static_cast<std::size_t>(t * N + p));
    }
    if (m.layout.kind == LayoutKind::full_grid && m.values.size() != static_cast<std::size_t>(L) * N)
      throw Error(ErrorCategory::io, "measurement file: full-grid layout with wrong row count");
  }
  if (header) *header = std::move(h);
  return m;
}

}  // namespace sphcam
