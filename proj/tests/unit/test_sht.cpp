#include <catch_amalgamated.hpp>

#include <sstream>

#include "sphcam/sht.hpp"
#include "test_support.hpp"

using namespace sphcam;
using namespace sphcam::testing;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("grid layout") {
  const auto g = make_grid(180);
  CHECK(g.rows() == 180);
  CHECK(g.cols() == 359);
  CHECK(g.size() == 180u * 359u);

  for (int L : {1, 2, 5, 16}) {
    const auto grid = make_grid(L);
    const int N = 2 * L - 1;
    for (int t = 0; t < L; ++t) {
      CHECK(grid.theta(t) == kPi * (2 * t + 1) / N);
      CHECK(grid.theta(t) > 0.0);
      CHECK(grid.theta(t) <= kPi);
      if (t > 0) CHECK(grid.theta(t) > grid.theta(t - 1));
      CHECK(grid.weight(t) >= 0.0);
    }
    for (int p = 0; p < N; ++p) CHECK(grid.phi(p) == kTwoPi * p / N);
  }
  CHECK_THROWS_AS(make_grid(0), Error);
}

TEST_CASE("grid weights sum to the full solid angle") {
  for (int L : {1, 2, 3, 8, 36, 100}) {
    const auto g = make_grid(L);
    double s = 0.0;
    for (int t = 0; t < L; ++t) s += g.weight(t) * g.cols();
    CHECK_THAT(s, WithinRel(4 * kPi, 1e-9));
  }
  const auto g1 = make_grid(1);
  CHECK(g1.size() == 1u);
  CHECK_THAT(g1.weight(0), WithinRel(4 * kPi, 1e-12));
}

TEST_CASE("grid quadrature integrates every harmonic below the bandlimit") {
  for (int L : {4, 8, 13}) {
    const auto g = make_grid(L);
    for (int l = 0; l < L; ++l)
      for (int m = -l; m <= l; ++m) {
        std::complex<double> s{};
        for (int t = 0; t < g.rows(); ++t)
          for (int p = 0; p < g.cols(); ++p) s += g.weight(t) * ylm_eval(l, m, g.theta(t), g.phi(p));
        const double expect = (l == 0) ? std::sqrt(4 * kPi) : 0.0;
        CHECK_THAT(std::abs(s - expect), WithinAbs(0.0, 1e-9));
      }
  }
}

TEST_CASE("forward transform of simple signals") {
  const auto g = make_grid(12);
  SECTION("constant") {
    RealSignal f(g, std::vector<double>(g.size(), 2.5));
    const auto c = sht_forward(f);
    CHECK_THAT(c(0, 0).real(), WithinAbs(2.5 * std::sqrt(4 * kPi), 1e-9));
    for (std::size_t i = 1; i < c.size(); ++i) CHECK(std::abs(c.values()[i]) <= 1e-9);
  }
  SECTION("Y_20 sampled") {
    RealSignal f(g);
    for (int t = 0; t < g.rows(); ++t)
      for (int p = 0; p < g.cols(); ++p) f(t, p) = ylm_eval(2, 0, g.theta(t), g.phi(p)).real();
    const auto c = sht_forward(f);
    CHECK_THAT(c(2, 0).real(), WithinAbs(1.0, 1e-10));
    for (int l = 0; l < 12; ++l)
      for (int m = -l; m <= l; ++m)
        if (!(l == 2 && m == 0)) CHECK(std::abs(c(l, m)) <= 1e-10);
  }
}

TEST_CASE("inverse transform of simple coefficient sets") {
  const auto g = make_grid(9);
  HarmonicCoeffs zero(9);
  const auto z1 = sht_inverse_real(zero, g);
  const auto z2 = sht_inverse(zero, g);
  for (double v : z1.values()) CHECK(v == 0.0);
  for (auto v : z2.values()) CHECK(v == std::complex<double>{});

  HarmonicCoeffs c(9);
  c(0, 0) = std::sqrt(4 * kPi);
  const auto one = sht_inverse_real(c, g);
  for (double v : one.values()) CHECK_THAT(v, WithinAbs(1.0, 1e-12));
}

TEST_CASE("inverse transform matches direct double sum") {
  const int L = 16;
  const auto g = make_grid(L);
  const auto c = random_complex_coeffs(L, 11);
  const auto f = sht_inverse(c, g);
  CounterRng rng(5);
  for (int k = 0; k < 10; ++k) {
    const int t = static_cast<int>(rng() % g.rows()), p = static_cast<int>(rng() % g.cols());
    const auto expect = brute_synthesis(c, g.theta(t), g.phi(p));
    CHECK(std::abs(f(t, p) - expect) <= 1e-9);
  }
  // real path
  const auto cr = random_real_coeffs(L, 12);
  const auto fr = sht_inverse_real(cr, g);
  const auto fc = sht_inverse(cr, g);
  for (std::size_t i = 0; i < fr.size(); ++i) {
    CHECK(std::abs(fc[i].imag()) <= 1e-9);
    CHECK_THAT(fr[i], WithinAbs(fc[i].real(), 1e-9));
  }
}

TEST_CASE("round trip is the identity on bandlimited coefficients") {
  for (int L : {1, 2, 4, 8, 16, 32}) {
    const auto g = make_grid(L);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto cr = random_real_coeffs(L, seed);
      CHECK(max_abs_diff(sht_forward(sht_inverse_real(cr, g)), cr) <= 1e-9);
      const auto cc = random_complex_coeffs(L, 100 + seed);
      CHECK(max_abs_diff(sht_forward(sht_inverse(cc, g)), cc) <= 1e-9);
    }
  }
}

TEST_CASE("lower bandlimit coefficients are zero padded") {
  const auto g = make_grid(10);
  const auto c = random_real_coeffs(4, 9);
  CHECK(max_abs_diff(sht_forward(sht_inverse_real(c, g)), pad(c, 10)) <= 1e-10);
  CHECK_THROWS_AS(sht_inverse_real(random_real_coeffs(11, 1), g), Error);
}

TEST_CASE("dimension mismatch is rejected") {
  const auto g = make_grid(4);
  CHECK_THROWS_AS(RealSignal(g, std::vector<double>(5)), Error);
}

TEST_CASE("forward output of real signals is conjugate symmetric") {
  const auto g = make_grid(10);
  RealSignal f(g);
  CounterRng rng(3);
  for (auto& v : f.values()) v = rng.uniform();
  CHECK(sht_forward(f).conjugate_asymmetry() <= 1e-12);
}

TEST_CASE("Parseval holds while the squared signal stays within the bandlimit") {
  // Pointwise weights integrate bandlimit-L functions exactly; |f|^2 of a
  // bandlimit-K signal has bandlimit 2K-1, so K <= (L+1)/2 is exact.
  for (int L : {3, 8, 17, 32}) {
    const int K = (L + 1) / 2;
    const auto g = make_grid(L);
    const auto c = random_real_coeffs(K, 40 + L);
    const auto f = sht_inverse_real(c, g);
    double energy = 0.0;
    for (int t = 0; t < g.rows(); ++t)
      for (int p = 0; p < g.cols(); ++p) energy += g.weight(t) * f(t, p) * f(t, p);
    CHECK_THAT(energy, WithinRel(c.norm() * c.norm(), 1e-8));
  }
}

TEST_CASE("Parseval at the full bandlimit is only approximate") {
  const int L = 16;
  const auto g = make_grid(L);
  const auto c = random_real_coeffs(L, 77);
  const auto f = sht_inverse_real(c, g);
  double energy = 0.0;
  for (int t = 0; t < g.rows(); ++t)
    for (int p = 0; p < g.cols(); ++p) energy += g.weight(t) * f(t, p) * f(t, p);
  const double rel = std::abs(energy - c.norm() * c.norm()) / (c.norm() * c.norm());
  CHECK(rel < 0.2);
}

TEST_CASE("transform adjoints") {
  const int L = 9;
  const auto g = make_grid(L);
  RealSignal x(g);
  CounterRng rng(21);
  for (auto& v : x.values()) v = rng.uniform() - 0.5;
  const auto d = random_real_coeffs(L, 22);

  auto inner_c = [](const HarmonicCoeffs& a, const HarmonicCoeffs& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (std::conj(a.values()[i]) * b.values()[i]).real();
    return s;
  };
  auto inner_x = [](const RealSignal& a, const RealSignal& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  // synthesis
  const double lhs1 = inner_x(sht_inverse_real(d, g), x);
  const double rhs1 = inner_c(d, sht_synthesis_adjoint(x));
  CHECK_THAT(lhs1, WithinRel(rhs1, 1e-11));
  // analysis
  const double lhs2 = inner_c(sht_forward(x), d);
  const double rhs2 = inner_x(x, sht_forward_adjoint(d, g));
  CHECK_THAT(lhs2, WithinRel(rhs2, 1e-11));
}

TEST_CASE("bandlimit projection is idempotent and fixes bandlimited signals") {
  const auto g = make_grid(7);
  RealSignal x(g);
  CounterRng rng(8);
  for (auto& v : x.values()) v = rng.uniform();
  const auto p1 = bandlimit_projection(x);
  const auto p2 = bandlimit_projection(p1);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK_THAT(p2[i], WithinAbs(p1[i], 1e-12));
  const auto b = sht_inverse_real(random_real_coeffs(7, 2), g);
  const auto pb = bandlimit_projection(b);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK_THAT(pb[i], WithinAbs(b[i], 1e-11));
}

TEST_CASE("evaluation at arbitrary directions matches grid synthesis") {
  const auto g = make_grid(8);
  const auto c = random_real_coeffs(8, 4);
  const auto f = sht_inverse_real(c, g);
  std::vector<Vec3> dirs;
  for (std::size_t i = 0; i < g.size(); i += 7) dirs.push_back(g.direction(i));
  const auto v = evaluate_real(c, dirs);
  for (std::size_t k = 0; k < dirs.size(); ++k) CHECK_THAT(v[k], WithinAbs(f[k * 7], 1e-11));
}

TEST_CASE("coefficient file round trip") {
  const auto c = random_complex_coeffs(5, 1);
  std::stringstream ss;
  write_coeffs(ss, c);
  CHECK(ss.str().rfind("L=5\n0,0,", 0) == 0);
  const auto back = read_coeffs(ss);
  CHECK(max_abs_diff(back, c) == 0.0);
  std::stringstream bad("L=2\n0,0,1,0\n");
  CHECK_THROWS_AS(read_coeffs(bad), Error);
}
