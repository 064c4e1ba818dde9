#include "cde/imputation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cde/correlation.hpp"
#include "cde/stats.hpp"

namespace cde {

namespace {

Vector column_fill(const CourseResponseMatrix& m, bool median) {
    const Eigen::Index C = m.n_courses();
    Vector fill(C);
    for (Eigen::Index j = 0; j < C; ++j) {
        std::vector<double> v;
        for (Eigen::Index i = 0; i < m.n_students(); ++i)
            if (m.observed(i, j)) v.push_back(m.grades(i, j));
        if (v.empty()) throw Error("fully missing column: " + m.course_ids[static_cast<size_t>(j)]);
        if (median) {
            std::sort(v.begin(), v.end());
            const size_t n = v.size();
            fill[j] = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
        } else {
            fill[j] = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        }
    }
    return fill;
}

CourseResponseMatrix fill_with(const CourseResponseMatrix& m, const Vector& fill) {
    CourseResponseMatrix out = m;
    for (Eigen::Index j = 0; j < m.n_courses(); ++j)
        for (Eigen::Index i = 0; i < m.n_students(); ++i)
            if (!m.observed(i, j)) out.grades(i, j) = fill[j];
    out.observed.setConstant(true);
    return out;
}

struct PcaBasis {
    Vector mu, sd;     // column standardization of the working matrix
    Matrix loadings;   // C x k eigenvectors
    Vector shrink;     // regularized reconstruction factors
    Vector thresholds; // binary path: fitted normal thresholds per course
};

PcaBasis pca_basis(const Matrix& X, ScaleKind kind, const std::vector<std::string>& course_ids,
                   int k) {
    const Eigen::Index C = X.cols();
    PcaBasis b;
    b.mu = X.colwise().mean();
    b.sd.resize(C);
    for (Eigen::Index j = 0; j < C; ++j) {
        const double var = (X.col(j).array() - b.mu[j]).square().mean();
        b.sd[j] = std::sqrt(std::max(var, 1e-12));
    }

    Matrix corr;
    if (kind == ScaleKind::Binary) {
        // tetrachoric-adjusted inner PCA: threshold the working matrix at 0.5
        CourseResponseMatrix bm;
        bm.course_ids = course_ids;
        bm.student_ids.resize(static_cast<size_t>(X.rows()));
        bm.scale.kind = ScaleKind::Binary;
        bm.grades = (X.array() >= 0.5).cast<double>();
        bm.observed = BoolMatrix::Constant(X.rows(), C, true);
        b.thresholds.resize(C);
        for (Eigen::Index j = 0; j < C; ++j) {
            const double p0 = 1.0 - bm.grades.col(j).mean();
            b.thresholds[j] = stats::norm_inv(std::clamp(p0, 1e-6, 1.0 - 1e-6));
        }
        corr = correlation_matrix(bm).values;
    } else {
        corr = Matrix::Identity(C, C);
        for (Eigen::Index a = 0; a < C; ++a)
            for (Eigen::Index c = a + 1; c < C; ++c) {
                const double r = stats::pearson(X.col(a), X.col(c));
                corr(a, c) = corr(c, a) = std::isnan(r) ? 0.0 : r;
            }
        repair_psd(corr);
    }

    Eigen::SelfAdjointEigenSolver<Matrix> eig(corr);
    Vector ev = eig.eigenvalues().reverse();
    Matrix V = eig.eigenvectors().rowwise().reverse();
    const int kk = std::min<int>(k, static_cast<int>(C));
    // regularized reconstruction: shrink by the trailing-eigenvalue noise level
    double noise = 0.0;
    if (kk < C) {
        for (Eigen::Index i = kk; i < C; ++i) noise += std::max(ev[i], 0.0);
        noise /= static_cast<double>(C - kk);
    }
    b.loadings = V.leftCols(kk);
    b.shrink.resize(kk);
    for (int i = 0; i < kk; ++i) {
        const double lam = std::max(ev[i], 1e-12);
        b.shrink[i] = std::clamp((lam - noise) / lam, 0.0, 1.0);
    }
    return b;
}

Matrix reconstruct(const Matrix& X, const PcaBasis& b) {
    Matrix Z = (X.rowwise() - b.mu.transpose()).array().rowwise() / b.sd.transpose().array();
    Matrix scores = Z * b.loadings;
    for (Eigen::Index c = 0; c < scores.cols(); ++c) scores.col(c) *= b.shrink[c];
    return scores * b.loadings.transpose();  // standardized-scale reconstruction
}

}  // namespace

CourseResponseMatrix mean_impute(const CourseResponseMatrix& m) {
    return fill_with(m, column_fill(m, false));
}

CourseResponseMatrix median_impute(const CourseResponseMatrix& m) {
    return fill_with(m, column_fill(m, true));
}

MipcaResult mipca_impute(const CourseResponseMatrix& m, int n_components, double tol,
                         int max_iter) {
    const Eigen::Index S = m.n_students();
    const Eigen::Index C = m.n_courses();
    if (n_components < 1 || n_components >= std::min(S, C))
        throw Error("mipca_impute: n_components must be in [1, min(|S|,|C|))");
    for (Eigen::Index j = 0; j < C; ++j) {
        double lo = 0, hi = 0;
        bool first = true, any = false;
        for (Eigen::Index i = 0; i < S; ++i)
            if (m.observed(i, j)) {
                any = true;
                if (first) { lo = hi = m.grades(i, j); first = false; }
                lo = std::min(lo, m.grades(i, j));
                hi = std::max(hi, m.grades(i, j));
            }
        if (!any) throw Error("fully missing column: " + m.course_ids[static_cast<size_t>(j)]);
        if (hi - lo < 1e-12)
            throw Error("degenerate (constant) column: " + m.course_ids[static_cast<size_t>(j)]);
    }

    MipcaResult res;
    res.completed = mean_impute(m);
    if (m.n_missing() == 0) {
        res.iterations = 1;
        return res;
    }
    const bool binary = m.scale.kind == ScaleKind::Binary;
    Matrix& X = res.completed.grades;

    int it = 0;
    for (; it < max_iter; ++it) {
        PcaBasis basis = pca_basis(X, m.scale.kind, m.course_ids, n_components);
        Matrix Z = reconstruct(X, basis);
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < C; ++j)
            for (Eigen::Index i = 0; i < S; ++i) {
                if (m.observed(i, j)) continue;
                double v;
                if (binary) {
                    // reconstruction lives on the latent scale; map through the
                    // fitted threshold to a pass probability
                    v = stats::norm_cdf(Z(i, j) - basis.thresholds[j]);
                } else {
                    v = basis.mu[j] + basis.sd[j] * Z(i, j);
                }
                const double old = X(i, j);
                max_change = std::max(max_change, std::fabs(v - old) / std::max(1.0, std::fabs(old)));
                X(i, j) = v;
            }
        res.change_trace.push_back(max_change);
        if (max_change < tol) break;
    }
    res.iterations = it + 1;
    res.converged = it < max_iter;
    if (!res.converged) res.change_trace.push_back(-1.0);

    // proper-imputation completion: restore observed-residual-scale noise on
    // the imputed cells (continuous path; zero residuals add nothing)
    if (!binary) {
        PcaBasis basis = pca_basis(X, m.scale.kind, m.course_ids, n_components);
        Matrix Z = reconstruct(X, basis);
        stats::Rng rng(stats::Rng::derive(0x6d697063ULL, static_cast<std::uint64_t>(n_components)));
        for (Eigen::Index j = 0; j < C; ++j) {
            double sse = 0.0;
            int n = 0;
            for (Eigen::Index i = 0; i < S; ++i)
                if (m.observed(i, j)) {
                    const double z = (X(i, j) - basis.mu[j]) / basis.sd[j];
                    sse += (z - Z(i, j)) * (z - Z(i, j));
                    ++n;
                }
            const double s = n > 1 ? std::sqrt(sse / n) : 0.0;
            for (Eigen::Index i = 0; i < S; ++i)
                if (!m.observed(i, j))
                    X(i, j) = basis.mu[j] + basis.sd[j] * (Z(i, j) + s * rng.normal());
        }
    }
    return res;
}

int default_mipca_components(const CourseResponseMatrix& m) {
    CourseResponseMatrix filled = mean_impute(m);
    CorrelationMatrix corr = correlation_matrix(filled);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(corr.values);
    Vector ev = eig.eigenvalues().reverse();
    const double total = std::max(ev.sum(), 1e-12);
    double run = 0.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        run += std::max(ev[i], 0.0) / total;
        if (run >= 0.5) return static_cast<int>(i) + 1;
    }
    return 1;
}

}  // namespace cde
