#include "labelshift/random.hpp"

#include "labelshift/error.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>

namespace labelshift::rng {

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(base);
  for (auto p : path) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

double CounterRng::uniform() {
  // 53 random bits centred in their cell: never 0, never 1.
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal() {
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, uniform());
}

double CounterRng::gamma(double shape) {
  if (!(shape > 0.0) || !std::isfinite(shape)) throw InvalidInput("gamma shape must be positive and finite");
  if (shape < 1.0) {
    return boost::math::gamma_p_inv(shape, uniform());
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::size_t CounterRng::categorical(const ProbVector& p) {
  const double u = uniform();
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    last_positive = i;
    acc += p[i];
    if (u < acc) return i;
  }
  return last_positive;  // u beyond the rounded cumulative sum
}

std::size_t CounterRng::index(std::size_t n) {
  if (n == 0) throw InvalidInput("index: empty range");
  auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
  return i >= n ? n - 1 : i;
}

} // namespace labelshift::rng
