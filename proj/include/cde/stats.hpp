#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "cde/types.hpp"

namespace cde::stats {

double norm_pdf(double x);
double norm_cdf(double x);
/// Inverse standard normal CDF (Wichura AS241, ~1e-15 accuracy).
double norm_inv(double p);

/// Regularized incomplete gamma P(a, x) and Q(a, x) = 1 - P(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

/// Upper tail of the chi-square distribution with dof degrees of freedom.
double chi2_sf(double x, double dof);

double sigmoid(double x);

double pearson(std::span<const double> x, std::span<const double> y);
double pearson(const Vector& x, const Vector& y);

/// Minimizes f on [a, b] by Brent's method; returns the argmin.
double brent_min(const std::function<double(double)>& f, double a, double b, double tol = 1e-7);

struct OlsFit {
    Vector beta;
    Vector se;
    Vector p_values;  // two-sided Wald, normal approximation
    double sigma2 = 0.0;
    double r2 = 0.0;
};

/// Ordinary least squares of y on X (no implicit intercept column).
OlsFit ols(const Matrix& X, const Vector& y, double ridge = 0.0);

struct LogisticFit {
    Vector beta;
    Vector se;
    Vector p_values;     // two-sided Wald
    double log_lik = 0.0;
    double log_lik_null = 0.0;  // intercept-only
    double pseudo_r2 = 0.0;     // McFadden
    bool separation_warning = false;
    int iterations = 0;
};

/// Logistic regression by IRLS with a small ridge; `offset` is added to the
/// linear predictor with fixed coefficient 1.
LogisticFit logistic_regression(const Matrix& X, const Eigen::VectorXi& y,
                                const Vector& offset = Vector(), double ridge = 1e-6,
                                int max_iter = 200);

/// Deterministic RNG streams. Sub-streams derived from one seed stay stable
/// regardless of how many draws each consumes.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return unif_(engine_); }
    double normal() { return norm_(engine_); }
    std::uint64_t integer() { return engine_(); }
    /// uniform integer in [0, n)
    std::int64_t index(std::int64_t n) {
        return static_cast<std::int64_t>(engine_() % static_cast<std::uint64_t>(n));
    }
    std::mt19937_64& engine() { return engine_; }

    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

private:
    std::mt19937_64 engine_;
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
    std::normal_distribution<double> norm_{0.0, 1.0};
};

}  // namespace cde::stats
