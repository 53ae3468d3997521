#include <cmath>
#include <vector>

#include "doctest.h"
#include "fq/matrix.hpp"
#include "fq/smoothing.hpp"
#include "fq/synthetic.hpp"
#include "test_support.hpp"

TEST_CASE("equal activation and weight maxima give unit scales at alpha 0.5") {
    const std::vector<double> maxes{0.5, 2.0, 7.0};
    const auto scales = fq::smoothing_scales(maxes, maxes, 0.5);
    for (double s : scales.s) CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("constant maxima hit the sigma=0 branch: s = 0.5^(2a-1)") {
    const std::vector<double> ones{1.0, 1.0};
    for (double alpha : {0.0, 0.25, 0.5, 0.8, 1.0}) {
        const auto scales = fq::smoothing_scales(ones, ones, alpha);
        const double expected = std::pow(0.5, 2.0 * alpha - 1.0);
        CHECK(scales.s[0] == doctest::Approx(expected).epsilon(1e-14));
        CHECK(scales.s[1] == doctest::Approx(expected).epsilon(1e-14));
        CHECK(scales.sigma == 0.0);
    }
}

TEST_CASE("larger activation channels get larger divisors") {
    const std::vector<double> act{0.0, 10.0};
    const std::vector<double> wgt{5.0, 5.0};
    const auto scales = fq::smoothing_scales(act, wgt, 0.5);
    CHECK(scales.s[1] > scales.s[0]);
}

TEST_CASE("unit scales leave both tensors untouched") {
    fq::Rng rng(5);
    const fq::Matrix x = fqtest::random_matrix(rng, 3, 4);
    const fq::Matrix w = fqtest::random_matrix(rng, 4, 2);
    fq::SmoothingScales scales;
    scales.s.assign(4, 1.0);
    const auto [xs, ws] = fq::apply_smoothing(x, w, scales);
    CHECK(xs == x);
    CHECK(ws == w);
}

TEST_CASE("scalar example: X=2, W=3, s=2") {
    fq::SmoothingScales scales;
    scales.s = {2.0};
    const auto [xs, ws] = fq::apply_smoothing(fq::Matrix(1, 1, {2.0}), fq::Matrix(1, 1, {3.0}),
                                              scales);
    CHECK(xs.at(0, 0) == doctest::Approx(1.0));
    CHECK(ws.at(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("smoothing preserves the product") {
    fq::Rng rng(29);
    for (int trial = 0; trial < 30; ++trial) {
        const fq::Matrix x = fqtest::outlier_matrix(rng, 12, 16, 1, 20, 80);
        const fq::Matrix w = fqtest::random_matrix(rng, 16, 8);
        const auto scales =
            fq::smoothing_scales(fq::column_max_abs(x), fq::row_max_abs(w), 0.5);
        const auto [xs, ws] = fq::apply_smoothing(x, w, scales);
        const fq::Matrix before = fq::matmul(x, w);
        const fq::Matrix after = fq::matmul(xs, ws);
        CHECK(fq::max_abs_diff(before, after) <= 1e-10 * fq::max_abs(before));
    }
}

TEST_CASE("scales followed by inverse scales restore the inputs") {
    fq::Rng rng(31);
    const fq::Matrix x = fqtest::random_matrix(rng, 6, 9, 4.0);
    const fq::Matrix w = fqtest::random_matrix(rng, 9, 5);
    const auto scales = fq::smoothing_scales(fq::column_max_abs(x), fq::row_max_abs(w), 0.5);
    fq::SmoothingScales inverse = scales;
    for (double& s : inverse.s) s = 1.0 / s;
    const auto [xs, ws] = fq::apply_smoothing(x, w, scales);
    const auto [xb, wb] = fq::apply_smoothing(xs, ws, inverse);
    CHECK(fq::max_abs_diff(xb, x) <= 1e-12 * std::max(1.0, fq::max_abs(x)));
    CHECK(fq::max_abs_diff(wb, w) <= 1e-12 * std::max(1.0, fq::max_abs(w)));
}

TEST_CASE("s_j responds monotonically to one channel's maxima") {
    fq::Rng rng(37);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<double> act, wgt;
        for (int i = 0; i < 12; ++i) {
            act.push_back(std::abs(rng.gaussian()) + 0.05);
            wgt.push_back(std::abs(rng.gaussian()) + 0.05);
        }
        const std::size_t j = static_cast<std::size_t>(rng.index(12));
        const auto base = fq::smoothing_scales(act, wgt, 0.5);

        auto bumped_act = act;
        bumped_act[j] += rng.uniform(0.1, 3.0);
        const auto more_act = fq::smoothing_scales(bumped_act, wgt, 0.5);
        CHECK(more_act.s[j] >= base.s[j] - 1e-12);

        auto bumped_wgt = wgt;
        bumped_wgt[j] += rng.uniform(0.1, 3.0);
        const auto more_wgt = fq::smoothing_scales(act, bumped_wgt, 0.5);
        CHECK(more_wgt.s[j] <= base.s[j] + 1e-12);
    }
}

TEST_CASE("zero weight channel still yields a finite positive scale") {
    const std::vector<double> act{1.0, 2.0};
    const std::vector<double> wgt{0.0, 3.0};
    const auto scales = fq::smoothing_scales(act, wgt, 0.5);
    CHECK(scales.s[0] > 0.0);
    CHECK(std::isfinite(scales.s[0]));
}

TEST_CASE("smoothing input validation") {
    const std::vector<double> a{1.0, 2.0};
    const std::vector<double> b{1.0};
    CHECK_THROWS(fq::smoothing_scales(a, b, 0.5));
    CHECK_THROWS(fq::smoothing_scales(a, a, -0.1));
    CHECK_THROWS(fq::smoothing_scales(a, a, 1.5));
    const std::vector<double> zeros{0.0, 0.0};
    CHECK_THROWS(fq::smoothing_scales(zeros, a, 0.5));

    fq::SmoothingScales scales;
    scales.s = {1.0, 1.0, 1.0};
    CHECK_THROWS(fq::apply_smoothing(fq::Matrix(2, 2), fq::Matrix(2, 2), scales));
}
