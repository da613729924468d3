#include <doctest.h>

#include <cmath>
#include <limits>

#include "modir/numerics.hpp"

using namespace modir;

TEST_CASE("dot products") {
    CHECK(dot(Vec{1, 0}, Vec{0, 1}) == 0.0);
    CHECK(dot(Vec{1, 2, 3}, Vec{1, 1, 1}) == 6.0);
    CHECK(dot(Vec{0.5, -0.5}, Vec{2, 2}) == 0.0);
    CHECK_THROWS_AS(dot(Vec{1, 2}, Vec{1, 2, 3}), std::invalid_argument);
}

TEST_CASE("softmax2 examples") {
    const auto a = softmax2({0.0, 0.0});
    CHECK(a[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(a[1] == doctest::Approx(0.5).epsilon(1e-15));
    const auto b = softmax2({1000.0, 0.0});
    CHECK(std::isfinite(b[0]));
    CHECK(b[0] == doctest::Approx(1.0));
    CHECK(b[1] < 1e-300);
    const auto c = softmax2({std::log(3.0), 0.0});
    CHECK(std::abs(c[0] - 0.75) < 1e-12);
    CHECK(std::abs(c[1] - 0.25) < 1e-12);
    CHECK_THROWS_AS(softmax2({std::numeric_limits<double>::quiet_NaN(), 0.0}), NumericalError);
}

TEST_CASE("softmax2 sums to one for large logits") {
    Rng rng(7);
    for (int i = 0; i < 2000; ++i) {
        const double a = rng.uniform(-1e4, 1e4);
        const double b = rng.uniform(-1e4, 1e4);
        const auto p = softmax2({a, b});
        CHECK(std::abs(p[0] + p[1] - 1.0) <= 1e-12);
    }
}

TEST_CASE("log_sum_exp examples and bounds") {
    CHECK(log_sum_exp(std::vector<double>{0.0}) == 0.0);
    CHECK(std::abs(log_sum_exp(std::vector<double>{5.0, 5.0}) - (5.0 + std::log(2.0))) < 1e-12);
    // ln(e + 2) = 1.5514447139320509
    CHECK(std::abs(log_sum_exp(std::vector<double>{1.0, 0.0, 0.0}) - 1.5514447139320509) < 1e-12);
    CHECK_THROWS(log_sum_exp(std::vector<double>{}));
    Rng rng(11);
    for (int t = 0; t < 500; ++t) {
        std::vector<double> xs(1 + rng.below(20));
        for (auto& x : xs) x = rng.uniform(-800.0, 800.0);
        const double m = *std::max_element(xs.begin(), xs.end());
        const double l = log_sum_exp(xs);
        CHECK(l >= m);
        CHECK(l <= m + std::log(static_cast<double>(xs.size())) + 1e-12);
    }
}

TEST_CASE("sigmoid reference value") {
    // 1 / (1 + e^-2) = 0.8807970779778823
    CHECK(std::abs(sigmoid(2.0) - 0.8807970779778823) < 1e-15);
    CHECK(sigmoid(-800.0) >= 0.0);
    CHECK(sigmoid(800.0) <= 1.0);
}

TEST_CASE("rng determinism, streams and snapshots") {
    Rng a(42), b(42);
    for (int i = 0; i < 100000; ++i) REQUIRE(a.next_u64() == b.next_u64());

    Rng root(5);
    Rng s1 = root.split("data"), s2 = root.split("data"), s3 = root.split("mining");
    CHECK(s1.next_u64() == s2.next_u64());
    CHECK(s1.next_u64() != s3.next_u64());

    Rng c(9);
    c.normal();
    const auto snap = c.snapshot();
    std::vector<double> expected;
    for (int i = 0; i < 10; ++i) expected.push_back(c.normal());
    Rng d = Rng::restore(snap);
    for (int i = 0; i < 10; ++i) CHECK(d.normal() == expected[i]);
}

TEST_CASE("rng distributions") {
    Rng rng(3);
    double sum = 0.0, sq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    CHECK(std::abs(sum / n) < 0.02);
    CHECK(std::abs(sq / n - 1.0) < 0.02);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(rng.below(7) < 7);
    }
}

TEST_CASE("check_gradient examples") {
    const auto quad = [](std::span<const double> x) { return dot(x, x); };
    const Vec point{1.0, 2.0};
    const Vec grad{2.0, 4.0};
    CHECK(check_gradient(quad, grad, point).max_relative_error < 1e-8);

    const auto constant = [](std::span<const double>) { return 3.0; };
    CHECK(check_gradient(constant, Vec{0.0, 0.0}, point).max_relative_error == 0.0);

    const Vec wrong{2.0, 5.0};
    const auto bad = check_gradient(quad, wrong, point);
    CHECK(bad.max_relative_error > 0.1);
    CHECK(bad.worst_index == 1);

    const auto nan_fn = [](std::span<const double> x) { return x[0] > 1.0 ? std::nan("") : 0.0; };
    CHECK_FALSE(check_gradient(nan_fn, Vec{0.0, 0.0}, point).finite);
}

TEST_CASE("matrix helpers") {
    Mat m(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
    CHECK(matvec(m, Vec{1, 0, -1}) == Vec{-2, -2});
    CHECK(matvec_transposed(m, Vec{1, 1}) == Vec{5, 7, 9});
    Mat z(2, 2);
    add_outer(z, Vec{1, 2}, Vec{3, 4}, 0.5);
    CHECK(z(1, 1) == 4.0);
    CHECK(Mat::identity(3)(2, 2) == 1.0);
    Vec y{1, 1};
    axpy(2.0, Vec{1, -1}, y.span());
    CHECK(y == Vec{3, -1});
    CHECK(squared_norm(Vec{3, 4}) == 25.0);
}
