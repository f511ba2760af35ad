#pragma once

#include "labelshift/predictors.hpp"
#include "labelshift/random.hpp"
#include "labelshift/simplex.hpp"

#include <cmath>
#include <vector>

namespace testing {

using labelshift::Matrix;
using labelshift::PredictorTable;
using labelshift::ProbVector;
using labelshift::Vector;

// Six-point marginally calibrated predictor: outputs and their true group posteriors.
inline const double kSixPointOutputs[6][3] = {{.1, .2, .7}, {.1, .7, .2}, {.2, .1, .7},
                                              {.2, .7, .1}, {.7, .1, .2}, {.7, .2, .1}};
inline const double kSixPointPosteriors[6][3] = {{.2, .1, .7}, {0, .8, .2}, {.1, .2, .7},
                                                 {.3, .6, .1}, {.8, 0, .2}, {.6, .3, .1}};

inline ProbVector row3(const double (&r)[3]) { return ProbVector{r[0], r[1], r[2]}; }

// Target table for prior q: mass of x_i is (1/6) Σ_j q_j P(j | x_i) / p_s(j), p_s uniform.
inline PredictorTable six_point_target(const Vector& q) {
  std::vector<PredictorTable::Entry> entries;
  for (int i = 0; i < 6; ++i) {
    double mass = 0.0;
    for (int j = 0; j < 3; ++j) mass += kSixPointPosteriors[i][j] * q(j) * 3.0;
    entries.push_back({row3(kSixPointOutputs[i]), mass / 6.0});
  }
  return PredictorTable(std::move(entries), labelshift::MassKind::probability);
}

inline PredictorTable six_point_source() {
  std::vector<PredictorTable::Entry> entries;
  for (int i = 0; i < 6; ++i) entries.push_back({row3(kSixPointOutputs[i]), 1.0 / 6.0});
  return PredictorTable(std::move(entries), labelshift::MassKind::probability);
}

inline ProbVector random_prob(labelshift::rng::CounterRng& gen, std::size_t k, double alpha = 1.0) {
  Vector g(static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = gen.gamma(alpha) + 1e-300;
  return ProbVector::normalized(g / g.sum(), 1e-9);
}

// Source marginal bounded away from zero.
// Label drawn from the categorical distribution p.
inline std::size_t draw_label(labelshift::rng::CounterRng& gen, const ProbVector& p) {
  double u = gen.uniform();
  for (std::size_t y = 0; y + 1 < p.size(); ++y) {
    if (u < p[y]) return y;
    u -= p[y];
  }
  return p.size() - 1;
}

inline ProbVector random_marginal(labelshift::rng::CounterRng& gen, std::size_t k) {
  Vector v = random_prob(gen, k, 2.0).values();
  v = (v.array() + 0.05).matrix();
  return ProbVector::normalized(v / v.sum(), 1e-9);
}

inline PredictorTable random_table(labelshift::rng::CounterRng& gen, std::size_t support, std::size_t k,
                                   double alpha = 1.0) {
  std::vector<PredictorTable::Entry> entries;
  for (std::size_t i = 0; i < support; ++i) {
    entries.push_back({random_prob(gen, k, alpha), 1.0 + static_cast<double>(gen.index(20))});
  }
  return PredictorTable(std::move(entries), labelshift::MassKind::count);
}

// A point of W: target marginal divided by p_s.
inline Vector random_feasible(labelshift::rng::CounterRng& gen, const ProbVector& ps) {
  return random_prob(gen, ps.size()).values().cwiseQuotient(ps.values());
}

// Composite Simpson rule on [a, b] with n (even) panels.
template <class F>
double simpson(F f, double a, double b, int n = 20000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// Population joint p_s(bin, y) for the oracle GMM posterior (μ, uniform p_s),
// equal-width bins on f_0 = σ(2μx). Quadrature only; no library code involved
// beyond the normal density.
inline Matrix binned_gmm_joint(std::size_t bins, double mu = 1.0) {
  auto x_of = [mu](double b) { return std::log(b / (1.0 - b)) / (2.0 * mu); };
  auto phi = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); };
  Matrix j(static_cast<Eigen::Index>(bins), 2);
  for (std::size_t z = 0; z < bins; ++z) {
    const double lo = z == 0 ? -12.0 : x_of(static_cast<double>(z) / bins);
    const double hi = z + 1 == bins ? 12.0 : x_of(static_cast<double>(z + 1) / bins);
    const auto r = static_cast<Eigen::Index>(z);
    j(r, 0) = 0.5 * simpson([&](double x) { return phi(x - mu); }, lo, hi);
    j(r, 1) = 0.5 * simpson([&](double x) { return phi(x + mu); }, lo, hi);
  }
  return j;
}

} // namespace testing
