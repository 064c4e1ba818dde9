#include "cde/stats.hpp"

#include <algorithm>
#include <cmath>

namespace cde::stats {

double norm_pdf(double x) {
    static const double inv_sqrt2pi = 0.3989422804014326779;
    return inv_sqrt2pi * std::exp(-0.5 * x * x);
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double norm_inv(double p) {
    // Wichura (1988), algorithm AS241 PPND16.
    if (p <= 0.0) return -std::numeric_limits<double>::infinity();
    if (p >= 1.0) return std::numeric_limits<double>::infinity();
    const double q = p - 0.5;
    double r;
    if (std::fabs(q) <= 0.425) {
        r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                     6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                   1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
                 1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
               (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                     3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                   5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
                 4.2313330701600911252e1) * r + 1.0);
    }
    r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                    2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                  3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
                4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
              (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                    1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                  6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
                2.05319162663775882187e0) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                    1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                  2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
                5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
              (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                    1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                  1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                5.99832206555887937690e-1) * r + 1.0);
    }
    return q < 0.0 ? -val : val;
}

namespace {

// Series and continued-fraction expansions of the regularized incomplete gamma.
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 500; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -static_cast<double>(i) * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
    if (x <= 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
    if (x <= 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_cf(a, x);
}

double chi2_sf(double x, double dof) {
    if (dof <= 0.0) return 1.0;
    return gamma_q(0.5 * dof, 0.5 * x);
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double pearson(std::span<const double> x, std::span<const double> y) {
    const size_t n = std::min(x.size(), y.size());
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sxy / std::sqrt(sxx * syy);
}

double pearson(const Vector& x, const Vector& y) {
    return pearson(std::span<const double>(x.data(), static_cast<size_t>(x.size())),
                   std::span<const double>(y.data(), static_cast<size_t>(y.size())));
}

double brent_min(const std::function<double(double)>& f, double a, double b, double tol) {
    const double gold = 0.3819660112501051;
    double x = a + gold * (b - a);
    double w = x, v = x;
    double fx = f(x), fw = fx, fv = fx;
    double d = 0.0, e = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
        const double xm = 0.5 * (a + b);
        const double tol1 = tol * std::fabs(x) + 1e-12;
        const double tol2 = 2.0 * tol1;
        if (std::fabs(x - xm) <= tol2 - 0.5 * (b - a)) break;
        bool parabolic = false;
        if (std::fabs(e) > tol1) {
            const double r = (x - w) * (fx - fv);
            double q = (x - v) * (fx - fw);
            double p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if (q > 0.0) p = -p;
            q = std::fabs(q);
            const double etemp = e;
            e = d;
            if (std::fabs(p) < std::fabs(0.5 * q * etemp) && p > q * (a - x) && p < q * (b - x)) {
                parabolic = true;
                d = p / q;
                const double u = x + d;
                if (u - a < tol2 || b - u < tol2) d = (xm - x >= 0 ? tol1 : -tol1);
            }
        }
        if (!parabolic) {
            e = (x >= xm) ? a - x : b - x;
            d = gold * e;
        }
        const double u = (std::fabs(d) >= tol1) ? x + d : x + (d >= 0 ? tol1 : -tol1);
        const double fu = f(u);
        if (fu <= fx) {
            if (u >= x) a = x; else b = x;
            v = w; w = x; x = u;
            fv = fw; fw = fx; fx = fu;
        } else {
            if (u < x) a = u; else b = u;
            if (fu <= fw || w == x) {
                v = w; w = u;
                fv = fw; fw = fu;
            } else if (fu <= fv || v == x || v == w) {
                v = u;
                fv = fu;
            }
        }
    }
    return x;
}

OlsFit ols(const Matrix& X, const Vector& y, double ridge) {
    const Eigen::Index n = X.rows();
    const Eigen::Index k = X.cols();
    Matrix xtx = X.transpose() * X;
    if (ridge > 0.0) xtx.diagonal().array() += ridge;
    Eigen::LDLT<Matrix> solver(xtx);
    OlsFit fit;
    fit.beta = solver.solve(X.transpose() * y);
    const Vector resid = y - X * fit.beta;
    const double dof = std::max<double>(1.0, static_cast<double>(n - k));
    fit.sigma2 = resid.squaredNorm() / dof;
    Matrix cov = solver.solve(Matrix::Identity(k, k)) * fit.sigma2;
    fit.se.resize(k);
    fit.p_values.resize(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        fit.se[j] = std::sqrt(std::max(cov(j, j), 0.0));
        const double z = fit.se[j] > 0 ? fit.beta[j] / fit.se[j] : 0.0;
        fit.p_values[j] = 2.0 * norm_cdf(-std::fabs(z));
    }
    const double ym = y.mean();
    const double tss = (y.array() - ym).square().sum();
    fit.r2 = tss > 0 ? 1.0 - resid.squaredNorm() / tss : 0.0;
    return fit;
}

LogisticFit logistic_regression(const Matrix& X, const Eigen::VectorXi& y, const Vector& offset,
                                double ridge, int max_iter) {
    const Eigen::Index n = X.rows();
    const Eigen::Index k = X.cols();
    Vector off = offset.size() == n ? offset : Vector::Zero(n);
    LogisticFit fit;
    fit.beta = Vector::Zero(k);
    Matrix hess = Matrix::Identity(k, k);
    auto loglik = [&](const Vector& beta) {
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double eta = X.row(i).dot(beta) + off[i];
            // log sigma(eta) = -log(1+exp(-eta)), stable in both tails
            const double lp = eta >= 0 ? -std::log1p(std::exp(-eta)) : eta - std::log1p(std::exp(eta));
            const double lq = eta >= 0 ? -eta - std::log1p(std::exp(-eta)) : -std::log1p(std::exp(eta));
            ll += y[i] ? lp : lq;
        }
        return ll - 0.5 * ridge * beta.squaredNorm();
    };
    double cur = loglik(fit.beta);
    for (int it = 0; it < max_iter; ++it) {
        fit.iterations = it + 1;
        Vector grad = Vector::Zero(k);
        hess.setZero();
        for (Eigen::Index i = 0; i < n; ++i) {
            const double eta = X.row(i).dot(fit.beta) + off[i];
            const double p = sigmoid(eta);
            const double w = std::max(p * (1.0 - p), 1e-10);
            grad += (y[i] - p) * X.row(i).transpose();
            hess += w * X.row(i).transpose() * X.row(i);
        }
        grad -= ridge * fit.beta;
        hess.diagonal().array() += ridge;
        Vector step = hess.ldlt().solve(grad);
        // halve the Newton step until the penalized log-likelihood improves
        double scale = 1.0;
        Vector cand = fit.beta + step;
        double nl = loglik(cand);
        while (nl < cur - 1e-12 && scale > 1e-8) {
            scale *= 0.5;
            cand = fit.beta + scale * step;
            nl = loglik(cand);
        }
        fit.beta = cand;
        const double gain = nl - cur;
        cur = nl;
        if (step.cwiseAbs().maxCoeff() * scale < 1e-10 || (it > 3 && gain < 1e-12)) break;
    }
    fit.log_lik = cur + 0.5 * ridge * fit.beta.squaredNorm();
    fit.separation_warning = fit.beta.cwiseAbs().maxCoeff() > 15.0;
    Matrix cov = hess.ldlt().solve(Matrix::Identity(k, k));
    fit.se.resize(k);
    fit.p_values.resize(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        fit.se[j] = std::sqrt(std::max(cov(j, j), 0.0));
        const double z = fit.se[j] > 0 ? fit.beta[j] / fit.se[j] : 0.0;
        fit.p_values[j] = 2.0 * norm_cdf(-std::fabs(z));
    }
    // intercept-only model for McFadden pseudo-R2; with an offset the null
    // model keeps the offset and fits only the intercept
    {
        Matrix ones = Matrix::Ones(n, 1);
        Vector b0 = Vector::Zero(1);
        double ll0 = 0.0;
        for (int it = 0; it < 100; ++it) {
            double g = 0.0, h = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double p = sigmoid(b0[0] + off[i]);
                g += y[i] - p;
                h += std::max(p * (1.0 - p), 1e-10);
            }
            const double step = g / h;
            b0[0] += step;
            if (std::fabs(step) < 1e-12) break;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            const double eta = b0[0] + off[i];
            const double lp = eta >= 0 ? -std::log1p(std::exp(-eta)) : eta - std::log1p(std::exp(eta));
            const double lq = eta >= 0 ? -eta - std::log1p(std::exp(-eta)) : -std::log1p(std::exp(eta));
            ll0 += y[i] ? lp : lq;
        }
        fit.log_lik_null = ll0;
        fit.pseudo_r2 = ll0 < 0.0 ? std::max(0.0, 1.0 - fit.log_lik / ll0) : 0.0;
    }
    return fit;
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 over (seed, stream)
    std::uint64_t z = seed + 0x9E3779B97f4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace cde::stats
