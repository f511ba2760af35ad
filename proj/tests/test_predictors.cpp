#include "labelshift/calibration.hpp"
#include "labelshift/diagnostics.hpp"
#include "labelshift/error.hpp"
#include "labelshift/predictors.hpp"
#include "labelshift/simulation.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace labelshift;

TEST_CASE("normal distribution functions") {
  CHECK(standard_normal_cdf(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-14));
  CHECK(standard_normal_cdf(0.0) == 0.5);
  CHECK(standard_normal_cdf(-1.0) == doctest::Approx(1.0 - 0.8413447460685429).epsilon(1e-13));
  CHECK(standard_normal_pdf(0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-15));
}

TEST_CASE("GMM Bayes posterior") {
  const GmmSpec spec;
  const auto mid = gmm_bayes_predict(spec, 0.0);
  CHECK(mid[0] == 0.5);
  CHECK(mid[1] == 0.5);
  const auto at1 = gmm_bayes_predict(spec, 1.0);
  CHECK(at1[0] == doctest::Approx(0.8807970779778824).epsilon(1e-15));
  CHECK(at1[1] == doctest::Approx(0.11920292202211755).epsilon(1e-14));
  const auto atm1 = gmm_bayes_predict(spec, -1.0);
  CHECK(atm1[0] == doctest::Approx(0.11920292202211755).epsilon(1e-14));

  // Bayes identity against the densities, including a skewed prior.
  GmmSpec skew;
  skew.mu = 0.7;
  skew.source_marginal = ProbVector{0.3, 0.7};
  for (double x = -4.0; x <= 4.0; x += 0.25) {
    const auto f = gmm_bayes_predict(skew, x);
    const double ratio = 0.3 * standard_normal_pdf(x - 0.7) / (0.7 * standard_normal_pdf(x + 0.7));
    CHECK(f[0] / f[1] == doctest::Approx(ratio).epsilon(1e-12));
  }
  CHECK_THROWS_AS(gmm_bayes_predict(GmmSpec{std::nan(""), ProbVector::uniform(2)}, 0.0), InvalidInput);
}

TEST_CASE("threshold predictor") {
  const auto half = threshold_predict({0.5}, 12.0);
  CHECK(half[0] == 0.5);
  const auto pos = threshold_predict({0.2}, 3.7);
  CHECK(pos[0] == doctest::Approx(0.8));
  CHECK(pos[1] == doctest::Approx(0.2));
  const auto neg = threshold_predict({0.2}, -3.7);
  CHECK(neg[0] == doctest::Approx(0.2));
  CHECK(neg[1] == doctest::Approx(0.8));
  CHECK(threshold_predict({0.2}, 0.0)[0] == doctest::Approx(0.8));
  CHECK_THROWS_AS(threshold_predict({1.5}, 0.0), InvalidInput);
}

TEST_CASE("tabular predictor") {
  std::vector<std::pair<ProbVector, double>> rows;
  for (int i = 0; i < 6; ++i) rows.emplace_back(testing::row3(testing::kSixPointOutputs[i]), 1.0 / 6.0);
  const auto t = tabular_predictor(rows);
  CHECK(t.size() == 6);
  CHECK(t.kind() == MassKind::probability);

  CHECK_THROWS_AS(tabular_predictor(std::vector<std::pair<ProbVector, double>>{}), InvalidInput);

  const std::vector<std::pair<ProbVector, double>> dup{{ProbVector{0.3, 0.7}, 0.5}, {ProbVector{0.3, 0.7}, 0.5}};
  const auto merged = tabular_predictor(dup);
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].mass == 1.0);
}

TEST_CASE("bin aggregation") {
  const std::vector<LabeledSample> s{{ProbVector{0.1, 0.9}, 1}, {ProbVector{0.2, 0.8}, 0}, {ProbVector{0.9, 0.1}, 0}};
  SUBCASE("two bins, output means") {
    const auto b = bin_aggregate(s, 2, BinValue::output_mean);
    REQUIRE(b.table().size() == 2);
    const auto lo = *b.apply(ProbVector{0.1, 0.9});
    CHECK(lo[0] == doctest::Approx(0.15).epsilon(1e-15));
    CHECK(lo[1] == doctest::Approx(0.85).epsilon(1e-15));
    const auto hi = *b.apply(ProbVector{0.9, 0.1});
    CHECK(hi[0] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(b.empty_bins().empty());
  }
  SUBCASE("two bins, label means") {
    const auto b = bin_aggregate(s, 2);
    const auto lo = *b.apply(ProbVector{0.2, 0.8});
    CHECK(lo[0] == doctest::Approx(0.5));
    const auto hi = *b.apply(ProbVector{0.95, 0.05});
    CHECK(hi[0] == doctest::Approx(1.0));
  }
  SUBCASE("one bin collapses to the global mean") {
    const auto b = bin_aggregate(s, 1, BinValue::output_mean);
    REQUIRE(b.table().size() == 1);
    CHECK(b.table()[0].output[0] == doctest::Approx(0.4));
    CHECK(check_identifiability(b.table()).min_eigenvalue == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("fine bins reproduce exact grouping") {
    const auto b = bin_aggregate(s, 1000, BinValue::output_mean);
    CHECK(b.table().size() == 3);
    for (const auto& x : s) CHECK(b.apply(x.output)->values().isApprox(x.output.values(), 1e-15));
    CHECK(b.empty_bins().size() == 997);
    CHECK_FALSE(b.apply(ProbVector{0.5, 0.5}).has_value());
  }
  CHECK_THROWS_AS(bin_aggregate(s, 0), InvalidInput);
}

TEST_CASE("binned GMM predictor is calibrated on its sample and matches the population joint") {
  const GmmSpec spec;
  const auto pts = sample_gmm(spec, spec.source_marginal, 200000, 99);
  std::vector<LabeledSample> s;
  for (const auto& p : pts) s.emplace_back(gmm_bayes_predict(spec, p.x), p.label);
  const auto b = bin_aggregate(s, 8);

  std::vector<LabeledSample> binned;
  for (const auto& x : s) binned.emplace_back(*b.apply(x.output), x.label);
  CHECK(estimate_calibration_error(binned).calibration_error <= 1e-12);

  // Joint p(bin, y) vs quadrature.
  const Matrix pop = testing::binned_gmm_joint(8);
  CHECK(pop.col(0).sum() == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(pop(0, 1) == doctest::Approx(0.25539402).epsilon(1e-6));
  CHECK(pop(3, 0) == doctest::Approx(0.02699539).epsilon(1e-6));
  Matrix emp = Matrix::Zero(8, 2);
  for (std::size_t i = 0; i < s.size(); ++i) emp(static_cast<Eigen::Index>(b.assignments()[i]), s[i].label) += 1.0;
  emp /= static_cast<double>(s.size());
  CHECK((emp - pop).cwiseAbs().maxCoeff() < 4e-3);
}

TEST_CASE("more bins never lower the second-moment rank") {
  const GmmSpec spec;
  const auto pts = sample_gmm(spec, spec.source_marginal, 5000, 5);
  std::vector<LabeledSample> s;
  for (const auto& p : pts) s.emplace_back(gmm_bayes_predict(spec, p.x), p.label);
  int prev_rank = 0;
  for (std::size_t bins : {1, 2, 4, 8, 16}) {
    const auto b = bin_aggregate(s, bins);
    const double e = check_identifiability(b.table()).min_eigenvalue;
    const int rank = b.table().size() == 1 ? 1 : (e > 1e-10 ? 2 : 1);
    CHECK(rank >= prev_rank);
    prev_rank = rank;
  }
}
