#include "cde/missingness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <map>

#include "cde/parallel.hpp"
#include "cde/stats.hpp"

namespace cde {

std::vector<MissingnessPattern> missingness_patterns(const CourseResponseMatrix& m) {
    const Eigen::Index S = m.n_students();
    const Eigen::Index C = m.n_courses();
    std::map<std::vector<bool>, int> counts;
    for (Eigen::Index i = 0; i < S; ++i) {
        std::vector<bool> key(static_cast<size_t>(C));
        for (Eigen::Index j = 0; j < C; ++j) key[static_cast<size_t>(j)] = m.observed(i, j);
        ++counts[key];
    }
    std::vector<MissingnessPattern> out;
    for (const auto& [key, n] : counts) {
        MissingnessPattern p;
        p.count = n;
        for (size_t j = 0; j < key.size(); ++j)
            (key[j] ? p.observed_set : p.missing_set).push_back(static_cast<int>(j));
        out.push_back(std::move(p));
    }
    return out;
}

void em_mvn_estimate(const CourseResponseMatrix& m, Vector& mu, Matrix& sigma, int max_iter,
                     double tol) {
    const Eigen::Index S = m.n_students();
    const Eigen::Index C = m.n_courses();

    mu.resize(C);
    Vector var(C);
    for (Eigen::Index j = 0; j < C; ++j) {
        double s = 0.0, s2 = 0.0;
        int n = 0;
        for (Eigen::Index i = 0; i < S; ++i)
            if (m.observed(i, j)) {
                s += m.grades(i, j);
                s2 += m.grades(i, j) * m.grades(i, j);
                ++n;
            }
        if (n == 0) throw Error("em_mvn: fully missing column " + m.course_ids[static_cast<size_t>(j)]);
        mu[j] = s / n;
        var[j] = std::max(s2 / n - mu[j] * mu[j], 1e-10);
    }
    sigma = var.asDiagonal();

    // group rows by pattern once
    std::map<std::vector<bool>, std::vector<Eigen::Index>> groups;
    for (Eigen::Index i = 0; i < S; ++i) {
        std::vector<bool> key(static_cast<size_t>(C));
        for (Eigen::Index j = 0; j < C; ++j) key[static_cast<size_t>(j)] = m.observed(i, j);
        groups[key].push_back(i);
    }

    for (int it = 0; it < max_iter; ++it) {
        Vector sum_x = Vector::Zero(C);
        Matrix sum_xx = Matrix::Zero(C, C);
        for (const auto& [key, rows] : groups) {
            std::vector<Eigen::Index> O, M;
            for (size_t j = 0; j < key.size(); ++j)
                (key[j] ? O : M).push_back(static_cast<Eigen::Index>(j));
            const Eigen::Index no = static_cast<Eigen::Index>(O.size());
            const Eigen::Index nm = static_cast<Eigen::Index>(M.size());
            if (no == 0) continue;
            Matrix Soo(no, no), Smo(nm, no), Smm(nm, nm);
            for (Eigen::Index a = 0; a < no; ++a)
                for (Eigen::Index b = 0; b < no; ++b) Soo(a, b) = sigma(O[a], O[b]);
            for (Eigen::Index a = 0; a < nm; ++a) {
                for (Eigen::Index b = 0; b < no; ++b) Smo(a, b) = sigma(M[a], O[b]);
                for (Eigen::Index b = 0; b < nm; ++b) Smm(a, b) = sigma(M[a], M[b]);
            }
            Matrix A;
            Matrix cond_cov;
            if (nm > 0) {
                Eigen::LDLT<Matrix> ldlt(Soo + 1e-10 * Matrix::Identity(no, no));
                A = ldlt.solve(Smo.transpose()).transpose();  // nm x no
                cond_cov = Smm - A * Smo.transpose();
            }
            for (Eigen::Index r : rows) {
                Vector full(C);
                for (Eigen::Index a = 0; a < no; ++a) full[O[a]] = m.grades(r, O[a]);
                if (nm > 0) {
                    Vector xo(no);
                    for (Eigen::Index a = 0; a < no; ++a) xo[a] = m.grades(r, O[a]) - mu[O[a]];
                    Vector xm = A * xo;
                    for (Eigen::Index a = 0; a < nm; ++a) full[M[a]] = mu[M[a]] + xm[a];
                }
                sum_x += full;
                sum_xx += full * full.transpose();
            }
            if (nm > 0)
                for (Eigen::Index a = 0; a < nm; ++a)
                    for (Eigen::Index b = 0; b < nm; ++b)
                        sum_xx(M[a], M[b]) += cond_cov(a, b) * static_cast<double>(rows.size());
        }
        Vector mu_new = sum_x / static_cast<double>(S);
        Matrix sigma_new = sum_xx / static_cast<double>(S) - mu_new * mu_new.transpose();
        sigma_new = 0.5 * (sigma_new + sigma_new.transpose()).eval();
        const double delta = (mu_new - mu).cwiseAbs().maxCoeff() +
                             (sigma_new - sigma).cwiseAbs().maxCoeff();
        mu = mu_new;
        sigma = sigma_new;
        if (delta < tol) break;
    }
}

LittleResult little_mcar_test(const CourseResponseMatrix& m, Warnings* warnings) {
    const Eigen::Index C = m.n_courses();
    if (m.n_missing() == 0) throw Error("little_mcar_test: no missing values");
    auto patterns = missingness_patterns(m);
    if (patterns.size() < 2) throw Error("little_mcar_test: needs at least two missingness patterns");

    Vector mu;
    Matrix sigma;
    em_mvn_estimate(m, mu, sigma);

    // shrink toward the diagonal until positive definite
    {
        Matrix diag = sigma.diagonal().asDiagonal();
        double lambda = 0.0;
        while (true) {
            Matrix s = (1.0 - lambda) * sigma + lambda * diag;
            Eigen::LLT<Matrix> llt(s);
            if (llt.info() == Eigen::Success) {
                sigma = s;
                break;
            }
            lambda = lambda == 0.0 ? 0.01 : lambda * 2.0;
            if (lambda >= 1.0) {
                sigma = diag;
                if (warnings) warnings->push_back("little_mcar_test: covariance fell back to diagonal");
                break;
            }
        }
    }

    // pattern means: group rows again (patterns are in map order, rebuild index)
    std::map<std::vector<bool>, std::pair<Vector, int>> sums;
    for (Eigen::Index i = 0; i < m.n_students(); ++i) {
        std::vector<bool> key(static_cast<size_t>(C));
        for (Eigen::Index j = 0; j < C; ++j) key[static_cast<size_t>(j)] = m.observed(i, j);
        auto it = sums.find(key);
        if (it == sums.end()) it = sums.emplace(key, std::make_pair(Vector::Zero(C), 0)).first;
        for (Eigen::Index j = 0; j < C; ++j)
            if (m.observed(i, j)) it->second.first[j] += m.grades(i, j);
        ++it->second.second;
    }

    LittleResult res;
    long sum_obs = 0;
    for (const auto& [key, acc] : sums) {
        std::vector<Eigen::Index> O;
        for (size_t j = 0; j < key.size(); ++j)
            if (key[j]) O.push_back(static_cast<Eigen::Index>(j));
        if (O.empty()) continue;
        const Eigen::Index no = static_cast<Eigen::Index>(O.size());
        Matrix Soo(no, no);
        Vector diff(no);
        for (Eigen::Index a = 0; a < no; ++a) {
            diff[a] = acc.first[O[a]] / acc.second - mu[O[a]];
            for (Eigen::Index b = 0; b < no; ++b) Soo(a, b) = sigma(O[a], O[b]);
        }
        Eigen::LLT<Matrix> llt(Soo);
        if (llt.info() != Eigen::Success) {
            ++res.patterns_skipped;
            if (warnings) warnings->push_back("little_mcar_test: singular pattern covariance skipped");
            continue;
        }
        res.t2 += acc.second * diff.dot(llt.solve(diff));
        sum_obs += no;
        ++res.n_patterns;
    }
    res.dof = static_cast<int>(sum_obs - C);
    if (res.dof <= 0) throw Error("little_mcar_test: nonpositive degrees of freedom");
    res.p_value = stats::chi2_sf(res.t2, res.dof);
    return res;
}

std::vector<MarCourseResult> mar_regression_test(const CourseResponseMatrix& m) {
    const Eigen::Index S = m.n_students();
    const Eigen::Index C = m.n_courses();
    if (C < 2) throw Error("mar_regression_test needs at least two courses");

    std::vector<MarCourseResult> out(static_cast<size_t>(C));
    exec::parallel_for(C, [&](std::int64_t jj) {
        const Eigen::Index c = static_cast<Eigen::Index>(jj);
        MarCourseResult& r = out[static_cast<size_t>(c)];
        r.course_id = m.course_ids[static_cast<size_t>(c)];

        std::vector<double> gpa, sd, mn, mx;
        std::vector<int> miss;
        for (Eigen::Index i = 0; i < S; ++i) {
            double s = 0.0, s2 = 0.0, lo = 0.0, hi = 0.0;
            int n = 0;
            for (Eigen::Index j = 0; j < C; ++j) {
                if (j == c || !m.observed(i, j)) continue;
                const double g = m.grades(i, j);
                if (n == 0) { lo = hi = g; }
                lo = std::min(lo, g);
                hi = std::max(hi, g);
                s += g;
                s2 += g * g;
                ++n;
            }
            if (n < 2) continue;  // STD undefined
            const double mean = s / n;
            const double var = std::max(s2 / n - mean * mean, 0.0);
            gpa.push_back(mean);
            sd.push_back(std::sqrt(var * n / (n - 1.0)));
            mn.push_back(lo);
            mx.push_back(hi);
            miss.push_back(m.observed(i, c) ? 0 : 1);
        }
        const int n_miss = std::accumulate(miss.begin(), miss.end(), 0);
        r.n_rows = static_cast<int>(miss.size());
        if (miss.empty() || n_miss == 0 || n_miss == static_cast<int>(miss.size())) {
            r.skipped = true;
            r.note = n_miss == 0 ? "no missing entries" : "no observed entries";
            return;
        }
        Matrix X(static_cast<Eigen::Index>(miss.size()), 5);
        Eigen::VectorXi y(static_cast<Eigen::Index>(miss.size()));
        for (size_t i = 0; i < miss.size(); ++i) {
            X(static_cast<Eigen::Index>(i), 0) = 1.0;
            X(static_cast<Eigen::Index>(i), 1) = gpa[i];
            X(static_cast<Eigen::Index>(i), 2) = sd[i];
            X(static_cast<Eigen::Index>(i), 3) = mn[i];
            X(static_cast<Eigen::Index>(i), 4) = mx[i];
            y[static_cast<Eigen::Index>(i)] = miss[i];
        }
        stats::LogisticFit fit = stats::logistic_regression(X, y);
        r.coefficients = fit.beta;
        r.p_values = fit.p_values.tail(4);
        r.pseudo_r2 = fit.pseudo_r2;
        r.flagged = r.pseudo_r2 < 0.1;
        r.separation_warning = fit.separation_warning;
    });
    return out;
}

MissingnessClassification classify_missingness(const LittleResult& little,
                                               const std::vector<MarCourseResult>& mar) {
    MissingnessClassification cls;
    for (const auto& r : mar)
        if (!r.skipped && r.flagged) cls.flagged_courses.push_back(r.course_id);
    if (little.p_value >= 0.05) {
        cls.verdict = MissingnessVerdict::MCAR;
        return cls;
    }
    int testable = 0, unflagged = 0;
    for (const auto& r : mar) {
        if (r.skipped) continue;
        ++testable;
        if (!r.flagged) ++unflagged;
    }
    cls.verdict = (testable > 0 && unflagged * 2 > testable) ? MissingnessVerdict::MAR
                                                             : MissingnessVerdict::MNAR_SUSPECT;
    return cls;
}

}  // namespace cde
