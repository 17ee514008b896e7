#pragma once

// Equirectangular rasters and their resampling to and from the grid.
//
// Row r of an H-row raster sits at theta = pi (2r+1)/(2H-1) and column c of
// a W-column raster at phi = 2 pi c/W, the same placement as the grid, so an
// L x (2L-1) raster lands on grid nodes exactly. Values are linear
// intensities; no transfer curve is applied in either direction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "sphcam/grid.hpp"
#include "sphcam/sht.hpp"

namespace sphcam {

struct SceneRaster {
  int width = 0, height = 0, channels = 1;
  std::vector<double> data;  // row-major, channels interleaved

  SceneRaster() = default;
  SceneRaster(int w, int h, int c = 1) : width(w), height(h), channels(c) {
    if (w < 1 || h < 1) throw Error(ErrorCategory::dimension, "raster must be at least 1x1");
    if (c != 1 && c != 3) throw Error(ErrorCategory::dimension, "raster must have 1 or 3 channels");
    data.assign(static_cast<std::size_t>(w) * h * c, 0.0);
  }

  double& at(int r, int c, int ch = 0) { return data[offset(r, c, ch)]; }
  double at(int r, int c, int ch = 0) const { return data[offset(r, c, ch)]; }

  void validate() const {
    if (width < 1 || height < 1) throw Error(ErrorCategory::dimension, "raster must be at least 1x1");
    if (data.size() != static_cast<std::size_t>(width) * height * channels)
      throw Error(ErrorCategory::dimension, "raster data size does not match its dimensions");
  }

 private:
  std::size_t offset(int r, int c, int ch) const {
    return (static_cast<std::size_t>(r) * width + c) * channels + ch;
  }
};

namespace detail {

/// Bilinear read of an equirectangular table at (theta, phi), wrapping phi
/// and clamping theta to the first and last rows.
template <class Get>
double equirect_sample(int H, int W, double theta, double phi, Get&& get) {
  double u = (theta * (2.0 * H - 1.0) / kPi - 1.0) / 2.0;
  if (std::abs(u - std::round(u)) < 1e-9) u = std::round(u);  // land exactly on nodes
  u = std::clamp(u, 0.0, static_cast<double>(H - 1));
  const int r0 = static_cast<int>(std::floor(u));
  const int r1 = std::min(r0 + 1, H - 1);
  const double fu = u - r0;

  double v = phi * W / kTwoPi;
  if (std::abs(v - std::round(v)) < 1e-9) v = std::round(v);
  v -= W * std::floor(v / W);
  int c0 = static_cast<int>(std::floor(v));
  double fv = v - c0;
  if (c0 >= W) {  // v rounded up to W
    c0 = 0;
    fv = 0.0;
  }
  const int c1 = (c0 + 1) % W;

  const double top = (1.0 - fv) * get(r0, c0) + fv * get(r0, c1);
  const double bot = (1.0 - fv) * get(r1, c0) + fv * get(r1, c1);
  // exact pass-through at nodes
  return fu == 0.0 ? top : (1.0 - fu) * top + fu * bot;
}

}  // namespace detail

inline RealSignal raster_to_grid(const SceneRaster& raster, int L, int channel = 0) {
  raster.validate();
  if (channel < 0 || channel >= raster.channels) throw Error(ErrorCategory::dimension, "raster channel out of range");
  const auto grid = make_grid(L);
  RealSignal out(grid);
  for (int t = 0; t < grid.rows(); ++t)
    for (int p = 0; p < grid.cols(); ++p)
      out(t, p) = detail::equirect_sample(raster.height, raster.width, grid.theta(t), grid.phi(p),
                                          [&](int r, int c) { return raster.at(r, c, channel); });
  return out;
}

/// Single-channel raster from a grid signal, by the same interpolation rule.
inline SceneRaster grid_to_raster(const RealSignal& f, int width, int height) {
  if (width < 1 || height < 1) throw Error(ErrorCategory::dimension, "raster must be at least 1x1");
  SceneRaster out(width, height, 1);
  const int H = f.rows(), W = f.cols();
  for (int r = 0; r < height; ++r) {
    const double theta = kPi * (2.0 * r + 1.0) / (2.0 * height - 1.0);
    for (int c = 0; c < width; ++c)
      out.at(r, c) = detail::equirect_sample(H, W, theta, kTwoPi * c / width,
                                             [&](int t, int p) { return f(t, p); });
  }
  return out;
}

/// Stacks single-channel rasters of equal size.
inline SceneRaster merge_channels(const std::vector<SceneRaster>& parts) {
  if (parts.size() != 1 && parts.size() != 3) throw Error(ErrorCategory::dimension, "need 1 or 3 channels");
  SceneRaster out(parts[0].width, parts[0].height, static_cast<int>(parts.size()));
  for (std::size_t ch = 0; ch < parts.size(); ++ch) {
    if (parts[ch].width != out.width || parts[ch].height != out.height || parts[ch].channels != 1)
      throw Error(ErrorCategory::dimension, "channel rasters differ in size");
    for (int r = 0; r < out.height; ++r)
      for (int c = 0; c < out.width; ++c) out.at(r, c, static_cast<int>(ch)) = parts[ch].at(r, c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic scenes

/// Smooth nonnegative test scene: a sky gradient plus a few
/// exp(kappa (cos angle - 1)) blobs, projected onto bandlimit L.
inline RealSignal synthetic_scene(const SphericalGrid& grid, std::uint64_t seed = 1, int blobs = 6) {
  CounterRng rng(seed, 0x5ce9e);
  struct Blob {
    Vec3 centre;
    double kappa, amp;
  };
  std::vector<Blob> bs;
  const double kmax = std::max(4.0, 0.6 * grid.bandlimit());
  for (int k = 0; k < blobs; ++k) {
    const double z = 2.0 * rng.uniform() - 1.0, ph = kTwoPi * rng.uniform();
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    bs.push_back({{s * std::cos(ph), s * std::sin(ph), z}, 2.0 + (kmax - 2.0) * rng.uniform(), 0.3 + 0.7 * rng.uniform()});
  }
  RealSignal f(grid);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const auto d = grid.direction(j);
    double v = 0.15 + 0.1 * d[2];
    for (const auto& b : bs) v += b.amp * std::exp(b.kappa * (dot(d, b.centre) - 1.0));
    f[j] = v;
  }
  auto p = bandlimit_projection(f);
  const auto [lo, hi] = std::minmax_element(p.values().begin(), p.values().end());
  const double scale = *hi > 0.0 ? 1.0 / *hi : 1.0;
  const double floor = std::min(0.0, *lo);
  // shift any ringing below zero away, then scale into [0, 1]; both keep it bandlimited
  for (auto& v : p.values()) v = (v - floor) * scale / (1.0 - floor * scale);
  return p;
}

// ---------------------------------------------------------------------------
// Portable anymap files (P2, P3, P5, P6; 8 or 16 bit)

namespace detail {

inline int pnm_next_int(std::istream& is) {
  int c;
  while ((c = is.peek()) != EOF) {
    if (c == '#') {
      std::string skip;
      std::getline(is, skip);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      break;
    }
  }
  int v;
  if (!(is >> v)) throw Error(ErrorCategory::io, "PNM: truncated header or data");
  return v;
}

}  // namespace detail

inline SceneRaster read_pnm(std::istream& is) {
  char magic[2];
  if (!is.read(magic, 2) || magic[0] != 'P') throw Error(ErrorCategory::io, "PNM: bad magic number");
  const char kind = magic[1];
  if (kind != '2' && kind != '3' && kind != '5' && kind != '6')
    throw Error(ErrorCategory::io, std::string("PNM: unsupported type P") + kind);
  const int channels = (kind == '3' || kind == '6') ? 3 : 1;
  const int w = detail::pnm_next_int(is), h = detail::pnm_next_int(is), maxval = detail::pnm_next_int(is);
  if (w < 1 || h < 1) throw Error(ErrorCategory::dimension, "PNM: degenerate dimensions");
  if (maxval < 1 || maxval > 65535) throw Error(ErrorCategory::io, "PNM: maxval out of range");
  SceneRaster r(w, h, channels);
  const std::size_t n = r.data.size();
  if (kind == '2' || kind == '3') {
    for (std::size_t i = 0; i < n; ++i) r.data[i] = static_cast<double>(detail::pnm_next_int(is)) / maxval;
  } else {
    is.get();  // single whitespace after maxval
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(n * static_cast<std::size_t>(bytes));
    if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
      throw Error(ErrorCategory::io, "PNM: truncated pixel data");
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned v = bytes == 2 ? (buf[2 * i] << 8) | buf[2 * i + 1] : buf[i];
      r.data[i] = static_cast<double>(v) / maxval;
    }
  }
  for (double& v : r.data) v = std::clamp(v, 0.0, 1.0);
  return r;
}

/// Binary PGM/PPM; values are clamped to [0, 1] and quantized. Each comment
/// becomes a "# ..." header line.
inline void write_pnm(std::ostream& os, const SceneRaster& r, int bits = 16,
                      const std::vector<std::string>& comments = {}) {
  r.validate();
  if (bits != 8 && bits != 16) throw Error(ErrorCategory::domain, "PNM: bits must be 8 or 16");
  const int maxval = bits == 16 ? 65535 : 255;
  os << (r.channels == 3 ? "P6" : "P5") << "\n";
  for (const auto& c : comments) os << "# " << c << "\n";
  os << r.width << " " << r.height << "\n" << maxval << "\n";
  std::vector<unsigned char> buf;
  buf.reserve(r.data.size() * (bits / 8));
  for (double v : r.data) {
    const auto q = static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * maxval));
    if (bits == 16) buf.push_back(static_cast<unsigned char>(q >> 8));
    buf.push_back(static_cast<unsigned char>(q & 0xff));
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline SceneRaster load_pnm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCategory::io, "cannot read " + path);
  return read_pnm(is);
}

inline void save_pnm(const std::string& path, const SceneRaster& r, int bits = 16,
                     const std::vector<std::string>& comments = {}) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCategory::io, "cannot write " + path);
  write_pnm(os, r, bits, comments);
}

}  // namespace sphcam
