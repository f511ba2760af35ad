#include "labelshift/diagnostics.hpp"
#include "labelshift/error.hpp"
#include "labelshift/predictors.hpp"
#include "labelshift/linalg.hpp"
#include "support.hpp"

#include <doctest.h>

#include <limits>

using namespace labelshift;

TEST_CASE("log-likelihood") {
  const PredictorTable flat({{ProbVector::uniform(4), 3.0}}, MassKind::count);
  CHECK(log_likelihood(flat, Vector{{4.0, 0.0, 0.0, 0.0}}) == 0.0);
  const PredictorTable point({{ProbVector{1.0, 0.0}, 1.0}}, MassKind::count);
  CHECK(log_likelihood(point, Vector{{2.0, 0.0}}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(log_likelihood(point, Vector{{0.0, 2.0}}), SupportError);

  const auto cx = testing::six_point_target(Vector{{0.8, 0.1, 0.1}});
  const Vector wf{{2.406441155120921, 0.2534617142311249, 0.3400971306479538}};
  CHECK(log_likelihood(cx, wf) == doctest::Approx(0.14387781915551624).epsilon(1e-13));
  CHECK(log_likelihood(cx, Vector{{2.4, 0.3, 0.3}}) == doctest::Approx(0.14356838235745648).epsilon(1e-13));
  double mass = 0.0;
  const double expected[6] = {.12, .05, .085, .155, .33, .26};
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(cx[i].mass == doctest::Approx(expected[i]).epsilon(1e-14));
    mass += cx[i].mass;
  }
  CHECK(mass == doctest::Approx(1.0));
}

TEST_CASE("gradient and Hessian") {
  const PredictorTable half({{ProbVector{0.5, 0.5}, 1.0}}, MassKind::count);
  const Vector g = likelihood_gradient(half, Vector::Ones(2));
  CHECK(g(0) == doctest::Approx(0.5));
  CHECK(g(1) == doctest::Approx(0.5));

  const PredictorTable point({{ProbVector{1.0, 0.0}, 1.0}}, MassKind::count);
  const Matrix h = likelihood_hessian(point, Vector::Ones(2));
  CHECK(h.isApprox(Matrix{{-1.0, 0.0}, {0.0, 0.0}}));

  const PredictorTable flat({{ProbVector::uniform(3), 1.0}}, MassKind::count);
  const Vector ev = linalg::jacobi_eigenvalues(likelihood_hessian(flat, Vector::Ones(3)));
  CHECK(ev(0) == doctest::Approx(-1.0 / 3.0));
  CHECK(std::abs(ev(1)) < 1e-14);
  CHECK(std::abs(ev(2)) < 1e-14);

  // First-order optimality at the counterexample maximizer.
  const auto cx = testing::six_point_target(Vector{{0.8, 0.1, 0.1}});
  const Vector wf{{2.406441155120921, 0.2534617142311249, 0.3400971306479538}};
  CHECK(tangent_gradient(likelihood_gradient(cx, wf), ProbVector::uniform(3)).norm() < 1e-9);
}

TEST_CASE("identifiability") {
  const PredictorTable flat({{ProbVector{0.3, 0.7}, 1.0}}, MassKind::count);
  const auto c = check_identifiability(flat);
  CHECK_FALSE(c.identifiable);
  CHECK(std::abs(c.min_eigenvalue) < 1e-15);

  std::vector<LabeledSample> perfect;
  for (std::size_t i = 0; i < 10; ++i) perfect.emplace_back(ProbVector::one_hot(3, i % 5 == 0 ? 0 : i % 2 + 1), 0);
  const auto p = check_identifiability(perfect);
  CHECK(p.identifiable);
  CHECK(p.min_eigenvalue == doctest::Approx(0.2));

  const auto six = check_identifiability(testing::six_point_source());
  CHECK(six.identifiable);
  CHECK(six.min_eigenvalue == doctest::Approx(0.10333333333333333).epsilon(1e-12));

  // Agreement with a determinant rank decision on small instances.
  rng::CounterRng gen(61);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + gen.index(3);
    const std::size_t support = 1 + gen.index(k + 1);
    const auto t = testing::random_table(gen, support, k);
    const double det = second_moment(t).determinant();
    CHECK(check_identifiability(t).identifiable == (std::abs(det) > 1e-14));
  }
}

TEST_CASE("tau, sandwich and bound terms") {
  const auto cx = testing::six_point_target(Vector{{0.8, 0.1, 0.1}});
  CHECK(tau_lower_bound(cx, Vector::Ones(3)) == doctest::Approx(1.0));

  // Diagonal case: perfect classifier, uniform p_s, w = 1.
  const PredictorTable diag({{ProbVector::one_hot(2, 0), 0.3}, {ProbVector::one_hot(2, 1), 0.7}},
                            MassKind::probability);
  const auto s = eigenvalue_sandwich(diag, Vector::Ones(2), ProbVector::uniform(2));
  CHECK(s.holds);
  CHECK(s.sigma_fw == doctest::Approx(0.3));
  CHECK(s.sigma_f == doctest::Approx(0.3));
  CHECK(s.tau == doctest::Approx(1.0));
  CHECK(s.lower == doctest::Approx(0.075));

  const PredictorTable flat({{ProbVector{0.4, 0.6}, 1.0}}, MassKind::count);
  const auto f = eigenvalue_sandwich(flat, Vector{{0.5, 1.5}}, ProbVector::uniform(2));
  CHECK(f.holds);
  CHECK(std::abs(f.sigma_f) < 1e-14);

  const auto b = compute_bound_terms(0.2, 0.1, 0.5, 0.0, 1.5, 1000, 1000, 0.05);
  const auto b4 = compute_bound_terms(0.2, 0.1, 0.5, 0.0, 1.5, 4000, 1000, 0.05);
  CHECK(b.term1 == doctest::Approx(2.0 * b4.term1));
  CHECK(b.term2 == doctest::Approx(2.0 * b4.term2));
  CHECK(b.total == doctest::Approx(b.term1 + b.term2));
  CHECK(b.constant == 1.0);
  const auto big = compute_bound_terms(0.2, 0.1, 0.5, 0.0, 1.5, 100000000, 1000, 0.05);
  CHECK(big.total < 1e-2);
  const auto miscal = compute_bound_terms(0.2, 0.1, 0.5, 0.1, 1.5, 100000000, 1000, 0.05);
  CHECK(miscal.term2 == doctest::Approx(1.5).epsilon(0.01));
  const auto degenerate = compute_bound_terms(0.0, 0.1, 0.5, 0.0, 1.5, 100, 100, 0.05);
  CHECK(degenerate.term1 == std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(compute_bound_terms(0.2, 0.1, 0.5, 0.0, 1.5, 100, 100, 1.5), InvalidInput);
}

TEST_CASE("threshold-predictor closed form") {
  const auto e = example1_closed_form(0.25, 0.7, 1.0);
  CHECK(e.error == doctest::Approx(0.7067237303427156).epsilon(1e-13));
  CHECK(e.formula == doctest::Approx(e.error).epsilon(1e-12));
  CHECK(example1_closed_form(0.5, 0.3, 1.0).error < 1e-15);
  CHECK(example1_closed_form(0.1, standard_normal_cdf(1.0), 1.0).error < 1e-13);
  CHECK_THROWS_AS(example1_closed_form(0.25, 0.5, 1.0), InvalidInput);

  // Both routes agree across a grid.
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < 20; ++j) {
      const double alpha = i / 19.0;
      const double c = 0.025 + j * 0.05;
      if (std::abs(c - 0.5) < 1e-12) continue;
      for (double mu : {0.5, 1.0, 2.0}) {
        const auto s = example1_closed_form(alpha, c, mu);
        CHECK(std::abs(s.error - s.formula) <= 1e-12);
      }
    }
  }
}

TEST_CASE("diagnose report") {
  const auto cx = testing::six_point_target(Vector{{0.8, 0.1, 0.1}});
  const WeightVector w(Vector{{2.4, 0.3, 0.3}}, ProbVector::uniform(3));
  const auto r = diagnose(cx, w, {}, 0.14142135623730953, DiagnosticsOptions{0.05, 600});
  CHECK(r.identifiable);
  CHECK(r.hessian_nsd);
  CHECK(r.hessian_symmetric);
  CHECK(r.sigma_min > 0.0);
  CHECK(r.tau > 0.0);
  CHECK(r.log_likelihood == doctest::Approx(0.14356838235745648).epsilon(1e-13));
  CHECK(r.calibration_error.has_value());
  CHECK(std::isfinite(r.bound_terms.total));
  CHECK(r.tangent_gradient.norm() > 1e-3);
}
