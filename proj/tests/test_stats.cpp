#include <doctest.h>

#include <cmath>

#include "cde/stats.hpp"

using namespace cde;
using namespace cde::stats;

TEST_CASE("normal cdf and inverse agree") {
    for (double p : {1e-6, 0.01, 0.3, 0.5, 0.7, 0.99, 1.0 - 1e-6}) {
        CHECK(norm_cdf(norm_inv(p)) == doctest::Approx(p).epsilon(1e-10));
    }
    CHECK(norm_cdf(0.0) == doctest::Approx(0.5));
    CHECK(norm_inv(0.975) == doctest::Approx(1.959963985).epsilon(1e-8));
}

TEST_CASE("chi-square tail matches known values") {
    CHECK(chi2_sf(0.0, 5) == doctest::Approx(1.0));
    // dof 2: exact tail exp(-x/2)
    CHECK(chi2_sf(2.0, 2) == doctest::Approx(std::exp(-1.0)).epsilon(1e-10));
    CHECK(chi2_sf(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-8));
    CHECK(chi2_sf(18.307038053275146, 10) == doctest::Approx(0.05).epsilon(1e-8));
}

TEST_CASE("pearson correlation basics") {
    std::vector<double> x = {1, 2, 3, 4, 5};
    std::vector<double> y = {2, 4, 6, 8, 10};
    CHECK(pearson(x, y) == doctest::Approx(1.0));
    std::vector<double> z = {-1, -2, -3, -4, -5};
    CHECK(pearson(x, z) == doctest::Approx(-1.0));
    std::vector<double> c = {1, 1, 1, 1, 1};
    CHECK(std::isnan(pearson(x, c)));
}

TEST_CASE("brent finds the minimum of a smooth function") {
    const double x = brent_min([](double t) { return (t - 0.3) * (t - 0.3) + 1.0; }, -1.0, 1.0);
    CHECK(x == doctest::Approx(0.3).epsilon(1e-6));
}

TEST_CASE("ols recovers a linear model") {
    Matrix X(5, 2);
    Vector y(5);
    for (int i = 0; i < 5; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = i;
        y[i] = 1.0 + 2.0 * i;
    }
    OlsFit fit = ols(X, y);
    CHECK(fit.beta[0] == doctest::Approx(1.0));
    CHECK(fit.beta[1] == doctest::Approx(2.0));
    CHECK(fit.r2 == doctest::Approx(1.0));
}

TEST_CASE("logistic regression matches the glm reference") {
    // R: glm(y ~ x, family="binomial") gives 0.06485105, -0.25951130
    const double xs[] = {-1, 5, 3, -2, 3, 4, 1, 2, 3, 1};
    const int ys[] = {0, 0, 0, 1, 0, 1, 0, 1, 0, 1};
    Matrix X(10, 2);
    Eigen::VectorXi y(10);
    for (int i = 0; i < 10; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = xs[i];
        y[i] = ys[i];
    }
    LogisticFit fit = logistic_regression(X, y);
    CHECK(fit.beta[0] == doctest::Approx(0.06485105).epsilon(1e-3));
    CHECK(fit.beta[1] == doctest::Approx(-0.25951130).epsilon(1e-3));
    CHECK(fit.pseudo_r2 >= 0.0);
    CHECK(fit.pseudo_r2 < 1.0);
}

TEST_CASE("logistic regression honors a fixed-coefficient offset") {
    stats::Rng rng(42);
    const int n = 2000;
    Matrix X(n, 1);
    Vector off(n);
    Eigen::VectorXi y(n);
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        X(i, 0) = 1.0;
        off[i] = 2.0 * x;
        y[i] = rng.uniform() < sigmoid(0.5 + 2.0 * x) ? 1 : 0;
    }
    LogisticFit fit = logistic_regression(X, y, off);
    CHECK(fit.beta[0] == doctest::Approx(0.5).epsilon(0.4));
}

TEST_CASE("pseudo r2 is near zero for an intercept-only truth") {
    stats::Rng rng(7);
    const int n = 2000;
    Matrix X(n, 2);
    Eigen::VectorXi y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = rng.normal();
        y[i] = rng.uniform() < 0.3 ? 1 : 0;
    }
    LogisticFit fit = logistic_regression(X, y);
    CHECK(fit.pseudo_r2 < 0.01);
}

TEST_CASE("rng streams are deterministic") {
    stats::Rng a(123), b(123);
    for (int i = 0; i < 5; ++i) CHECK(a.normal() == b.normal());
    CHECK(stats::Rng::derive(1, 2) != stats::Rng::derive(1, 3));
    CHECK(stats::Rng::derive(1, 2) == stats::Rng::derive(1, 2));
}
