#include "cde/correlation.hpp"

#include <algorithm>
#include <cmath>

#include "cde/parallel.hpp"
#include "cde/stats.hpp"

namespace cde {

namespace {

struct GaussLegendre {
    std::vector<double> x, w;
    explicit GaussLegendre(int n) : x(n), w(n) {
        // Newton iteration on P_n roots, Legendre three-term recurrence
        for (int i = 0; i < n; ++i) {
            double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
            double p0, p1, dp;
            for (int it = 0; it < 100; ++it) {
                p0 = 1.0;
                p1 = t;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (t * p1 - p0) / (t * t - 1.0);
                const double step = p1 / dp;
                t -= step;
                if (std::fabs(step) < 1e-15) break;
            }
            x[static_cast<size_t>(i)] = t;
            w[static_cast<size_t>(i)] = 2.0 / ((1.0 - t * t) * dp * dp);
        }
    }
};

const GaussLegendre& gl48() {
    static const GaussLegendre g(48);
    return g;
}

double panel_integral(double a, double b, double y, double rho, double s) {
    // integral over [a, b] of phi(t) * Phi((y - rho t)/s)
    const GaussLegendre& g = gl48();
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    double sum = 0.0;
    for (size_t i = 0; i < g.x.size(); ++i) {
        const double t = c + h * g.x[i];
        sum += g.w[i] * stats::norm_pdf(t) * stats::norm_cdf((y - rho * t) / s);
    }
    return sum * h;
}

}  // namespace

double bivariate_normal_cdf(double x, double y, double rho) {
    if (!(std::fabs(rho) < 1.0)) throw Error("bivariate_normal_cdf requires |rho| < 1");
    const double lim = 8.5;
    if (x <= -lim || y <= -lim) return 0.0;
    x = std::min(x, lim);
    y = std::min(y, lim);
    if (std::fabs(rho) < 1e-14) return stats::norm_cdf(x) * stats::norm_cdf(y);

    const double s = std::sqrt((1.0 - rho) * (1.0 + rho));
    const double lo = -lim;
    std::vector<double> cuts = {lo, x};
    if (std::fabs(rho) > 0.9) {
        // the inner CDF switches near t* = y/rho; resolve it with extra panels
        const double tstar = y / rho;
        const double w = 8.0 * s / std::fabs(rho);
        for (double c : {tstar - w, tstar, tstar + w})
            if (c > lo && c < x) cuts.push_back(c);
    } else {
        cuts.push_back(lo + 0.5 * (x - lo));
    }
    std::sort(cuts.begin(), cuts.end());
    double total = 0.0;
    for (size_t i = 0; i + 1 < cuts.size(); ++i)
        if (cuts[i + 1] > cuts[i]) total += panel_integral(cuts[i], cuts[i + 1], y, rho, s);
    return std::clamp(total, 0.0, 1.0);
}

TetrachoricResult tetrachoric_from_counts(double n00, double n01, double n10, double n11) {
    const double n = n00 + n01 + n10 + n11;
    if (n <= 0) throw Error("tetrachoric: empty table");
    const double p0r = (n00 + n01) / n;  // P(C1 = 0)
    const double p0c = (n00 + n10) / n;  // P(C2 = 0)
    if (p0r <= 0.0 || p0r >= 1.0 || p0c <= 0.0 || p0c >= 1.0)
        throw Error("tetrachoric: constant vector");

    TetrachoricResult res;
    res.t1 = stats::norm_inv(p0r);
    res.t2 = stats::norm_inv(p0c);
    if (n01 == 0 && n10 == 0) {
        res.rho = 0.999;
        res.boundary = true;
        return res;
    }
    if (n00 == 0 && n11 == 0) {
        res.rho = -0.999;
        res.boundary = true;
        return res;
    }

    const double phi1 = stats::norm_cdf(res.t1);
    const double phi2 = stats::norm_cdf(res.t2);
    auto negll = [&](double rho) {
        const double f = bivariate_normal_cdf(res.t1, res.t2, rho);
        const double p00 = std::max(f, 1e-12);
        const double p01 = std::max(phi1 - f, 1e-12);
        const double p10 = std::max(phi2 - f, 1e-12);
        const double p11 = std::max(1.0 - phi1 - phi2 + f, 1e-12);
        return -(n00 * std::log(p00) + n01 * std::log(p01) + n10 * std::log(p10) +
                 n11 * std::log(p11));
    };
    res.rho = stats::brent_min(negll, -0.999, 0.999, 1e-6);
    if (std::fabs(res.rho) > 0.9985) {
        res.rho = res.rho > 0 ? 0.999 : -0.999;
        res.boundary = true;
    }
    return res;
}

TetrachoricResult tetrachoric(std::span<const double> c1, std::span<const double> c2,
                              Warnings* warnings) {
    const size_t n = std::min(c1.size(), c2.size());
    double n00 = 0, n01 = 0, n10 = 0, n11 = 0;
    for (size_t i = 0; i < n; ++i) {
        const bool a = c1[i] >= 0.5;
        const bool b = c2[i] >= 0.5;
        if (a && b) ++n11;
        else if (a) ++n10;
        else if (b) ++n01;
        else ++n00;
    }
    if (n00 + n01 + n10 + n11 < 30)
        throw Error("tetrachoric needs at least 30 jointly observed entries");
    TetrachoricResult res = tetrachoric_from_counts(n00, n01, n10, n11);
    if (res.boundary && warnings) warnings->push_back("tetrachoric estimate at boundary +-0.999");
    return res;
}

void repair_psd(Matrix& corr, double tol) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(corr);
    if (eig.eigenvalues().minCoeff() >= -tol) return;
    Vector ev = eig.eigenvalues().cwiseMax(0.0);
    corr = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
    Vector d = corr.diagonal().cwiseMax(1e-12).cwiseSqrt();
    for (Eigen::Index i = 0; i < corr.rows(); ++i)
        for (Eigen::Index j = 0; j < corr.cols(); ++j) corr(i, j) /= d[i] * d[j];
    corr = 0.5 * (corr + corr.transpose()).eval();
}

CorrelationMatrix correlation_matrix(const CourseResponseMatrix& m, Warnings* warnings) {
    const Eigen::Index S = m.n_students();
    const Eigen::Index C = m.n_courses();
    for (Eigen::Index j = 0; j < C; ++j)
        for (Eigen::Index i = 0; i < S; ++i)
            if (!m.observed(i, j))
                throw Error("correlation_matrix requires a complete matrix (impute first)");

    for (Eigen::Index j = 0; j < C; ++j) {
        const double mn = m.grades.col(j).minCoeff();
        const double mx = m.grades.col(j).maxCoeff();
        if (mn == mx) throw Error("constant course column: " + m.course_ids[static_cast<size_t>(j)]);
    }

    CorrelationMatrix out;
    out.course_ids = m.course_ids;
    out.method = m.scale.kind == ScaleKind::Binary ? CorrelationMethod::Tetrachoric
                                                   : CorrelationMethod::Pearson;
    out.values = Matrix::Identity(C, C);

    struct Pair { Eigen::Index i, j; };
    std::vector<Pair> pairs;
    for (Eigen::Index i = 0; i < C; ++i)
        for (Eigen::Index j = i + 1; j < C; ++j) pairs.push_back({i, j});

    std::vector<int> boundary(pairs.size(), 0);
    Matrix& V = out.values;
    const Matrix& G = m.grades;
    const bool tetra = out.method == CorrelationMethod::Tetrachoric;
    exec::parallel_for(static_cast<std::int64_t>(pairs.size()), [&](std::int64_t p) {
        const auto [i, j] = pairs[static_cast<size_t>(p)];
        double r;
        if (tetra) {
            TetrachoricResult t = tetrachoric(
                std::span<const double>(G.col(i).data(), static_cast<size_t>(S)),
                std::span<const double>(G.col(j).data(), static_cast<size_t>(S)));
            r = std::clamp(t.rho, -0.999, 0.999);
            boundary[static_cast<size_t>(p)] = t.boundary;
        } else {
            r = stats::pearson(G.col(i), G.col(j));
        }
        V(i, j) = r;
        V(j, i) = r;
    });
    if (warnings)
        for (size_t p = 0; p < pairs.size(); ++p)
            if (boundary[p])
                warnings->push_back("tetrachoric boundary estimate for pair (" +
                                    m.course_ids[static_cast<size_t>(pairs[p].i)] + ", " +
                                    m.course_ids[static_cast<size_t>(pairs[p].j)] + ")");
    repair_psd(out.values);
    return out;
}

}  // namespace cde
