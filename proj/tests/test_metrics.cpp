#include <catch2/catch_amalgamated.hpp>

#include "agecal/metrics.hpp"
#include "test_support.hpp"

using namespace agecal;

namespace {
std::vector<EvalPair> from_residuals(const std::vector<double>& residuals, double sigma = 1.0) {
    std::vector<EvalPair> pairs;
    for (double r : residuals) pairs.push_back(EvalPair{r, 0.0, sigma});
    return pairs;
}
} // namespace

TEST_CASE("rmse") {
    CHECK(rmse(from_residuals({0.0, 0.0, 0.0})) == 0.0);
    CHECK(rmse(from_residuals({3.0, 4.0})) ==
          Catch::Approx(3.5355339059327377).epsilon(1e-15)); // sqrt(12.5)
    CHECK(rmse(from_residuals({-2.0})) == 2.0);
    CHECK_THROWS_AS(rmse({}), MetricError);
}

TEST_CASE("mae") {
    CHECK(mae(from_residuals({1.0, -1.0})) == 1.0);
    CHECK(mae(from_residuals({0.5, 1.5, 1.0})) == Catch::Approx(1.0).epsilon(1e-15));
    CHECK(mae(from_residuals({0.0, 0.0})) == 0.0);
    CHECK_THROWS_AS(mae({}), MetricError);
}

TEST_CASE("calibration score counts strict 2-sigma inclusion") {
    CHECK(calibration_score_2sigma(from_residuals({0.0, 0.0, 0.0}, 0.5)) == 100.0);
    // residual exactly on the band edge is excluded
    CHECK(calibration_score_2sigma({EvalPair{1.0, 0.0, 0.5}}) == 0.0);
    CHECK(calibration_score_2sigma({EvalPair{0.999999, 0.0, 0.5}}) == 100.0);
    const std::vector<EvalPair> pairs = {{0.1, 0.0, 0.5}, {0.2, 0.0, 0.5}, {-0.3, 0.0, 0.5},
                                         {5.0, 0.0, 0.5}};
    CHECK(calibration_score_2sigma(pairs) == 75.0);
    CHECK_THROWS_AS(calibration_score_2sigma({}), MetricError);
}

TEST_CASE("mae never exceeds rmse") {
    testsup::Rng rng(211);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> residuals;
        const int n = 1 + static_cast<int>(rng.uniform(0.0, 40.0));
        for (int i = 0; i < n; ++i) residuals.push_back(rng.normal() * rng.log_uniform(0.01, 10.0));
        const auto pairs = from_residuals(residuals);
        CHECK(mae(pairs) <= rmse(pairs) + 1e-15);
    }
}

TEST_CASE("metrics are permutation invariant and scale as expected") {
    testsup::Rng rng(223);
    std::vector<EvalPair> pairs;
    for (int i = 0; i < 25; ++i)
        pairs.push_back(EvalPair{rng.normal(), rng.normal(), rng.log_uniform(0.1, 2.0)});
    auto shuffled = pairs;
    std::reverse(shuffled.begin(), shuffled.end());
    std::swap(shuffled[3], shuffled[11]);
    CHECK(rmse(pairs) == Catch::Approx(rmse(shuffled)).epsilon(1e-15));
    CHECK(mae(pairs) == Catch::Approx(mae(shuffled)).epsilon(1e-15));
    CHECK(calibration_score_2sigma(pairs) == calibration_score_2sigma(shuffled));

    const double c = 4.2;
    std::vector<EvalPair> scaled;
    for (const auto& p : pairs)
        scaled.push_back(EvalPair{c * p.predicted, c * p.measured, c * p.sigma});
    CHECK(rmse(scaled) == Catch::Approx(c * rmse(pairs)).epsilon(1e-12));
    CHECK(mae(scaled) == Catch::Approx(c * mae(pairs)).epsilon(1e-12));
    CHECK(calibration_score_2sigma(scaled) == calibration_score_2sigma(pairs));
}

TEST_CASE("calibration score approaches 95.45 for well-calibrated gaussian residuals") {
    testsup::Rng rng(227);
    std::vector<EvalPair> pairs;
    const double sigma = 0.7;
    for (int i = 0; i < 100000; ++i) pairs.push_back(EvalPair{sigma * rng.normal(), 0.0, sigma});
    const double cs = calibration_score_2sigma(pairs);
    CHECK(cs > 95.45 - 1.5);
    CHECK(cs < 95.45 + 1.5);
}
