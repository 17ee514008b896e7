#pragma once

// Searches over N-bit ring masks for maximum robustness at bandlimit L.
//
// Both searches work on the ring moment matrix, so a candidate costs
// O(N L) to score: ghat_l(x) = c_l sum_i x_i S(i, l).

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "sphcam/core.hpp"
#include "sphcam/response.hpp"

namespace sphcam {

namespace detail {

class MaskScorer {
 public:
  MaskScorer(int n_bits, double alpha_deg, int L, const BaseProfile& base)
      : n_(n_bits), L_(L), S_(static_cast<std::size_t>(n_bits) * L) {
    if (L < 1) throw Error(ErrorCategory::domain, "mask search: L must be >= 1");
    const auto rows = ring_moments(n_bits, alpha_deg, L, base);
    for (int i = 0; i < n_bits; ++i)
      for (int l = 0; l < L; ++l) S_[idx(i, l)] = std::sqrt(kFourPi / (2.0 * l + 1.0)) * rows[i][l];
  }

  int bits() const { return n_; }

  /// ghat for the relaxed transmittances x.
  void scaling(const std::vector<double>& x, std::vector<double>& g) const {
    g.assign(static_cast<std::size_t>(L_), 0.0);
    for (int i = 0; i < n_; ++i)
      if (x[i] != 0.0)
        for (int l = 0; l < L_; ++l) g[l] += x[i] * S_[idx(i, l)];
  }

  double robustness_of(const std::vector<double>& x) const {
    std::vector<double> g;
    scaling(x, g);
    return sphcam::robustness(g);
  }

  double robustness_of_code(std::uint64_t code, std::vector<double>& g) const {
    g.assign(static_cast<std::size_t>(L_), 0.0);
    for (int i = 0; i < n_; ++i)
      if ((code >> (n_ - 1 - i)) & 1u)
        for (int l = 0; l < L_; ++l) g[l] += S_[idx(i, l)];
    return sphcam::robustness(g);
  }

  /// log robustness and its gradient in x. Returns -inf when some ghat_l = 0.
  double log_robustness(const std::vector<double>& x, std::vector<double>* grad) const {
    std::vector<double> g;
    scaling(x, g);
    double s = 0.0;
    for (double v : g) {
      if (v == 0.0) return -std::numeric_limits<double>::infinity();
      s += 1.0 / (v * v);
    }
    if (grad) {
      grad->assign(static_cast<std::size_t>(n_), 0.0);
      // d/dx_i [-log sum_l g_l^-2] = (2/s) sum_l g_l^-3 S(i, l)
      for (int i = 0; i < n_; ++i) {
        double acc = 0.0;
        for (int l = 0; l < L_; ++l) acc += S_[idx(i, l)] / (g[l] * g[l] * g[l]);
        (*grad)[i] = 2.0 * acc / s;
      }
    }
    return -std::log(s);
  }

 private:
  std::size_t idx(int i, int l) const { return static_cast<std::size_t>(i) * L_ + l; }

  int n_, L_;
  std::vector<double> S_;
};

inline std::uint64_t bits_to_code(const std::vector<double>& x) {
  std::uint64_t c = 0;
  for (double v : x) c = (c << 1) | (v != 0.0 ? 1u : 0u);
  return c;
}

struct Candidate {
  double robustness = -1.0;
  std::uint64_t code = 0;
};

/// Ordered comparison: higher robustness wins, ties go to the smaller code.
inline bool better(const Candidate& a, const Candidate& b) {
  return a.robustness > b.robustness || (a.robustness == b.robustness && a.code < b.code);
}

}  // namespace detail

struct MaskSearchResult {
  BinaryMask mask;
  double robustness = 0.0;
  std::uint64_t evaluated = 0;  // candidate scorings performed
};

/// Every nonzero code, best robustness at bandlimit L; ties resolved toward
/// the smallest code value (bits read MSB first).
inline MaskSearchResult search_exhaustive(int n_bits, double half_aperture_deg, int L,
                                          const BaseProfile& base = BaseProfile::cosine()) {
  if (n_bits < 1 || n_bits > 20)
    throw Error(ErrorCategory::domain,
                "exhaustive search supports 1..20 bits, got " + std::to_string(n_bits));
  const detail::MaskScorer scorer(n_bits, half_aperture_deg, L, base);
  const std::uint64_t total = (std::uint64_t{1} << n_bits) - 1;
  // fixed chunking so the reduction order does not depend on thread count
  const std::uint64_t chunks = std::min<std::uint64_t>(total, 64);
  std::vector<detail::Candidate> best(chunks);
  parallel_for(0, chunks, [&](std::size_t k) {
    const std::uint64_t lo = 1 + total * k / chunks, hi = 1 + total * (k + 1) / chunks;
    std::vector<double> g;
    detail::Candidate b;
    for (std::uint64_t c = lo; c < hi; ++c) {
      const detail::Candidate cand{scorer.robustness_of_code(c, g), c};
      if (detail::better(cand, b)) b = cand;
    }
    best[k] = b;
  });
  detail::Candidate winner;
  for (const auto& b : best)
    if (detail::better(b, winner)) winner = b;
  return {BinaryMask::from_code(winner.code, n_bits, half_aperture_deg), winner.robustness, total};
}

struct StochasticSearchOptions {
  std::uint64_t seed = 1;
  int restarts = 16;
  int ascent_iters = 300;
};

/// Relaxed search: each restart draws x in [0,1]^N, runs projected gradient
/// ascent on log robustness with backtracking, rounds at 1/2, then flips
/// single bits greedily while that improves. The all-ones mask and every
/// single-bit mask are also refined, so the result never scores below them.
inline MaskSearchResult search_stochastic(int n_bits, double half_aperture_deg, int L,
                                          const BaseProfile& base = BaseProfile::cosine(),
                                          const StochasticSearchOptions& opt = {}) {
  if (n_bits < 1 || n_bits > 64)
    throw Error(ErrorCategory::domain, "stochastic search supports 1..64 bits");
  if (opt.restarts < 1) throw Error(ErrorCategory::domain, "stochastic search needs restarts >= 1");
  const detail::MaskScorer scorer(n_bits, half_aperture_deg, L, base);
  const int N = n_bits;

  auto refine = [&](std::vector<double> x, std::uint64_t& evals) {
    double r = scorer.robustness_of(x);
    ++evals;
    for (;;) {
      int flip = -1;
      double best_r = r;
      for (int i = 0; i < N; ++i) {
        x[i] = 1.0 - x[i];
        const double ri = scorer.robustness_of(x);
        ++evals;
        x[i] = 1.0 - x[i];
        if (ri > best_r) {
          best_r = ri;
          flip = i;
        }
      }
      if (flip < 0) break;
      x[flip] = 1.0 - x[flip];
      r = best_r;
    }
    return detail::Candidate{r, detail::bits_to_code(x)};
  };

  auto ascend = [&](std::vector<double> x, std::uint64_t& evals) {
    std::vector<double> grad, trial(x.size()), tgrad;
    double f = scorer.log_robustness(x, &grad);
    double step = 0.5;
    for (int it = 0; it < opt.ascent_iters && std::isfinite(f); ++it) {
      double gmax = 0.0;
      for (double v : grad) gmax = std::max(gmax, std::abs(v));
      if (gmax == 0.0) break;
      bool accepted = false;
      for (int bt = 0; bt < 40; ++bt) {
        double moved = 0.0, predicted = 0.0;
        for (int i = 0; i < N; ++i) {
          trial[i] = std::clamp(x[i] + step * grad[i] / gmax, 0.0, 1.0);
          moved = std::max(moved, std::abs(trial[i] - x[i]));
          predicted += grad[i] * (trial[i] - x[i]);
        }
        if (moved == 0.0) break;
        const double ft = scorer.log_robustness(trial, nullptr);
        ++evals;
        if (ft >= f + 1e-4 * predicted) {
          x = trial;
          f = scorer.log_robustness(x, &grad);
          step = std::min(1.0, 2.0 * step);
          accepted = moved > 1e-10;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
    }
    for (auto& v : x) v = v >= 0.5 ? 1.0 : 0.0;
    return x;
  };

  // Seeds 0..restarts-1 are random starts; the rest are the floor candidates.
  const std::size_t jobs = static_cast<std::size_t>(opt.restarts) + 1 + static_cast<std::size_t>(N);
  std::vector<detail::Candidate> results(jobs);
  std::vector<std::uint64_t> evals(jobs, 0);
  parallel_for(0, jobs, [&](std::size_t j) {
    std::vector<double> x(static_cast<std::size_t>(N), 0.0);
    if (j < static_cast<std::size_t>(opt.restarts)) {
      CounterRng rng(opt.seed, j);
      for (auto& v : x) v = rng.uniform();
      x = ascend(std::move(x), evals[j]);
      if (std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; })) x.assign(x.size(), 1.0);
    } else if (j == static_cast<std::size_t>(opt.restarts)) {
      x.assign(x.size(), 1.0);
    } else {
      x[j - static_cast<std::size_t>(opt.restarts) - 1] = 1.0;
    }
    results[j] = refine(std::move(x), evals[j]);
  });

  detail::Candidate winner;
  std::uint64_t total = 0;
  for (std::size_t j = 0; j < jobs; ++j) {
    if (detail::better(results[j], winner)) winner = results[j];
    total += evals[j];
  }
  return {BinaryMask::from_code(winner.code, N, half_aperture_deg), winner.robustness, total};
}

}  // namespace sphcam
