#include "cde/assumption_checks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cde/correlation.hpp"
#include "cde/parallel.hpp"
#include "cde/stats.hpp"

namespace cde {

Matrix model_predictions(const LatentModel& model, const CourseResponseMatrix& m) {
    const Eigen::Index S = m.n_students();
    const Eigen::Index C = m.n_courses();
    if (model.theta.rows() != S || model.delta.rows() != C)
        throw Error("model/matrix shape mismatch");
    Matrix pred(S, C);
    for (Eigen::Index i = 0; i < S; ++i)
        for (Eigen::Index j = 0; j < C; ++j) {
            switch (model.model_class) {
                case ModelClass::Irt:
                    pred(i, j) = stats::sigmoid(model.alpha.row(j).dot(model.theta.row(i) - model.delta.row(j)));
                    break;
                case ModelClass::Agm:
                    pred(i, j) = model.alpha.row(j).dot(model.theta.row(i) + model.delta.row(j));
                    break;
                case ModelClass::Centering:
                    pred(i, j) = model.grand_mean + model.theta(i, 0) + model.delta(j, 0);
                    break;
            }
        }
    return pred;
}

Q3Report yen_q3(const LatentModel& model, const CourseResponseMatrix& m, int min_joint_students) {
    const Eigen::Index C = m.n_courses();
    const Eigen::Index S = m.n_students();
    Matrix pred = model_predictions(model, m);

    Q3Report rep;
    rep.q3 = Matrix::Constant(C, C, std::numeric_limits<double>::quiet_NaN());

    struct Pair { Eigen::Index a, b; };
    std::vector<Pair> pairs;
    for (Eigen::Index a = 0; a < C; ++a)
        for (Eigen::Index b = a + 1; b < C; ++b) pairs.push_back({a, b});

    Matrix& Q = rep.q3;
    exec::parallel_for(static_cast<std::int64_t>(pairs.size()), [&](std::int64_t p) {
        const auto [a, b] = pairs[static_cast<size_t>(p)];
        std::vector<double> ra, rb;
        for (Eigen::Index i = 0; i < S; ++i)
            if (m.observed(i, a) && m.observed(i, b)) {
                ra.push_back(m.grades(i, a) - pred(i, a));
                rb.push_back(m.grades(i, b) - pred(i, b));
            }
        if (static_cast<int>(ra.size()) < min_joint_students) return;
        const double r = stats::pearson(ra, rb);
        if (std::isnan(r)) return;
        Q(a, b) = r;
        Q(b, a) = r;
    });

    double sum = 0.0;
    for (const auto& [a, b] : pairs)
        if (!std::isnan(Q(a, b))) {
            sum += Q(a, b);
            ++rep.n_pairs_defined;
        }
    rep.mean_q3 = rep.n_pairs_defined > 0 ? sum / rep.n_pairs_defined : 0.0;
    for (const auto& [a, b] : pairs) {
        if (std::isnan(Q(a, b))) continue;
        if (Q(a, b) - rep.mean_q3 > 0.2) {
            Q3Report::Violation v;
            v.course_a = m.course_ids[static_cast<size_t>(a)];
            v.course_b = m.course_ids[static_cast<size_t>(b)];
            v.q3 = Q(a, b);
            v.residual_sign = Q(a, b) > 0 ? 1 : (Q(a, b) < 0 ? -1 : 0);
            rep.violations.push_back(std::move(v));
        }
    }
    return rep;
}

std::pair<CourseResponseMatrix, CourseResponseMatrix> split_half(const CourseResponseMatrix& m,
                                                                 SplitMode mode, std::uint64_t seed,
                                                                 Warnings* warnings) {
    if (mode == SplitMode::Time && !m.term_of_grade)
        throw Error("time split requires term_of_grade");
    const Eigen::Index S = m.n_students();
    const Eigen::Index C = m.n_courses();

    CourseResponseMatrix h1 = m, h2 = m;
    h1.observed.setConstant(false);
    h2.observed.setConstant(false);

    stats::Rng rng(stats::Rng::derive(seed, 7));
    for (Eigen::Index i = 0; i < S; ++i) {
        std::vector<Eigen::Index> cols;
        for (Eigen::Index j = 0; j < C; ++j)
            if (m.observed(i, j)) cols.push_back(j);
        if (cols.size() < 2) {
            if (warnings)
                warnings->push_back("student with fewer than two grades excluded from the split: " +
                                    m.student_ids[static_cast<size_t>(i)]);
            continue;
        }
        if (mode == SplitMode::Time) {
            const IntMatrix& t = *m.term_of_grade;
            std::sort(cols.begin(), cols.end(), [&](Eigen::Index a, Eigen::Index b) {
                if (t(i, a) != t(i, b)) return t(i, a) < t(i, b);
                return m.course_ids[static_cast<size_t>(a)] < m.course_ids[static_cast<size_t>(b)];
            });
        } else {
            std::shuffle(cols.begin(), cols.end(), rng.engine());
        }
        const size_t n1 = (cols.size() + 1) / 2;  // odd counts favor half 1
        for (size_t k = 0; k < cols.size(); ++k)
            (k < n1 ? h1 : h2).observed(i, cols[k]) = true;
    }
    return {std::move(h1), std::move(h2)};
}

namespace {

LatentModel fit_class(const CourseResponseMatrix& m, ModelClass cls, int n_dim, std::uint64_t seed) {
    switch (cls) {
        case ModelClass::Irt: {
            IrtOptions o;
            o.seed = seed;
            o.min_students_warning = 0;
            return fit_irt(m, n_dim, o);
        }
        case ModelClass::Agm: {
            AgmOptions o;
            o.seed = seed;
            return fit_agm(m, n_dim, o);
        }
        case ModelClass::Centering:
            return centering_estimates(m);
    }
    throw Error("unreachable model class");
}

CourseResponseMatrix drop_unusable_columns(const CourseResponseMatrix& m, ModelClass cls,
                                           Warnings* warnings) {
    // a half may leave a course empty or (for IRT) single-valued
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < m.n_courses(); ++j) {
        int n = 0, n1 = 0;
        for (Eigen::Index i = 0; i < m.n_students(); ++i)
            if (m.observed(i, j)) {
                ++n;
                n1 += m.grades(i, j) >= 0.5;
            }
        bool ok = n > 0;
        if (cls == ModelClass::Irt && ok && (n1 == 0 || n1 == n)) ok = false;
        if (ok) keep.push_back(j);
        else if (warnings)
            warnings->push_back("course dropped from a half-fit: " + m.course_ids[static_cast<size_t>(j)]);
    }
    if (keep.size() == static_cast<size_t>(m.n_courses())) return m;
    CourseResponseMatrix out;
    out.scale = m.scale;
    out.student_ids = m.student_ids;
    out.grades.resize(m.n_students(), static_cast<Eigen::Index>(keep.size()));
    out.observed.resize(m.n_students(), static_cast<Eigen::Index>(keep.size()));
    for (size_t k = 0; k < keep.size(); ++k) {
        out.course_ids.push_back(m.course_ids[static_cast<size_t>(keep[k])]);
        out.grades.col(static_cast<Eigen::Index>(k)) = m.grades.col(keep[k]);
        out.observed.col(static_cast<Eigen::Index>(k)) = m.observed.col(keep[k]);
    }
    if (m.term_of_grade) {
        IntMatrix t(m.n_students(), static_cast<Eigen::Index>(keep.size()));
        for (size_t k = 0; k < keep.size(); ++k)
            t.col(static_cast<Eigen::Index>(k)) = m.term_of_grade->col(keep[k]);
        out.term_of_grade = std::move(t);
    }
    return out;
}

CourseResponseMatrix drop_empty_rows(const CourseResponseMatrix& m) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < m.n_students(); ++i) {
        bool any = false;
        for (Eigen::Index j = 0; j < m.n_courses(); ++j) any |= m.observed(i, j);
        if (any) keep.push_back(i);
    }
    if (keep.size() == static_cast<size_t>(m.n_students())) return m;
    CourseResponseMatrix out;
    out.scale = m.scale;
    out.course_ids = m.course_ids;
    out.grades.resize(static_cast<Eigen::Index>(keep.size()), m.n_courses());
    out.observed.resize(static_cast<Eigen::Index>(keep.size()), m.n_courses());
    for (size_t k = 0; k < keep.size(); ++k) {
        out.student_ids.push_back(m.student_ids[static_cast<size_t>(keep[k])]);
        out.grades.row(static_cast<Eigen::Index>(k)) = m.grades.row(keep[k]);
        out.observed.row(static_cast<Eigen::Index>(k)) = m.observed.row(keep[k]);
    }
    return out;
}

}  // namespace

SplitHalfReport split_half_correlation(const CourseResponseMatrix& m, ModelClass model_class,
                                       int n_dim, SplitMode mode, std::uint64_t seed) {
    SplitHalfReport rep;
    rep.mode = mode;
    auto [h1raw, h2raw] = split_half(m, mode, seed, &rep.warnings);
    CourseResponseMatrix h1 = drop_empty_rows(drop_unusable_columns(h1raw, model_class, &rep.warnings));
    CourseResponseMatrix h2 = drop_empty_rows(drop_unusable_columns(h2raw, model_class, &rep.warnings));

    LatentModel m1, m2;
    // the two half-fits are independent
    if (exec::parallel_enabled()) {
        LatentModel models[2];
        const CourseResponseMatrix* halves[2] = {&h1, &h2};
        exec::parallel_for(2, [&](std::int64_t k) {
            models[k] = fit_class(*halves[k], model_class, n_dim,
                                  stats::Rng::derive(seed, 100 + static_cast<std::uint64_t>(k)));
        });
        m1 = std::move(models[0]);
        m2 = std::move(models[1]);
    } else {
        m1 = fit_class(h1, model_class, n_dim, stats::Rng::derive(seed, 100));
        m2 = fit_class(h2, model_class, n_dim, stats::Rng::derive(seed, 101));
    }

    // students present in both halves
    Vector u1 = student_scalar_scores(m1), u2 = student_scalar_scores(m2);
    std::vector<double> s1, s2;
    for (size_t i = 0; i < m1.student_ids.size(); ++i) {
        for (size_t k = 0; k < m2.student_ids.size(); ++k)
            if (m1.student_ids[i] == m2.student_ids[k]) {
                s1.push_back(u1[static_cast<Eigen::Index>(i)]);
                s2.push_back(u2[static_cast<Eigen::Index>(k)]);
                break;
            }
    }
    rep.shared_students = static_cast<int>(s1.size());
    rep.student_corr = stats::pearson(s1, s2);

    DifficultyEstimates d1 = unidim_difficulty(m1), d2 = unidim_difficulty(m2);
    std::vector<double> c1, c2;
    for (size_t a = 0; a < m1.course_ids.size(); ++a)
        for (size_t b = 0; b < m2.course_ids.size(); ++b)
            if (m1.course_ids[a] == m2.course_ids[b]) {
                if (std::isnan(d1.difficulty[static_cast<Eigen::Index>(a)]) ||
                    std::isnan(d2.difficulty[static_cast<Eigen::Index>(b)]))
                    break;
                c1.push_back(d1.difficulty[static_cast<Eigen::Index>(a)]);
                c2.push_back(d2.difficulty[static_cast<Eigen::Index>(b)]);
                break;
            }
    rep.shared_courses = static_cast<int>(c1.size());
    rep.course_corr = stats::pearson(c1, c2);
    rep.flagged = !(rep.student_corr >= 0.6) || !(rep.course_corr >= 0.6);
    return rep;
}

ValidityReport concurrent_validity(const LatentModel& model, const CourseResponseMatrix& m) {
    HeuristicEstimates h = heuristic_estimates(m);
    ValidityReport rep;
    Vector u = student_scalar_scores(model);
    const double rs = stats::pearson(u, h.student_gpas);
    DifficultyEstimates d = unidim_difficulty(model);
    std::vector<double> dd, mm;
    for (Eigen::Index j = 0; j < d.difficulty.size(); ++j)
        if (!std::isnan(d.difficulty[j])) {
            dd.push_back(d.difficulty[j]);
            mm.push_back(h.course_means[j]);
        }
    const double rc = stats::pearson(dd, mm);
    rep.student_r = std::fabs(rs);
    rep.course_r = std::fabs(rc);
    rep.student_sign = rs >= 0 ? 1 : -1;
    rep.course_sign = rc >= 0 ? 1 : -1;
    rep.flagged = !(rep.student_r >= 0.6) || !(rep.course_r >= 0.6);
    return rep;
}

ResidualPcaReport residual_pca_check(const LatentModel& model,
                                     const CourseResponseMatrix& m_imputed) {
    ResidualPcaReport rep;
    Matrix pred = model_predictions(model, m_imputed);
    Matrix resid = m_imputed.grades - pred;

    if (resid.cwiseAbs().maxCoeff() < 1e-10) {
        rep.degenerate = true;  // no residual structure
        return rep;
    }

    CourseResponseMatrix rm = m_imputed;
    rm.grades = resid;
    rm.observed.setConstant(true);
    rm.scale.kind = ScaleKind::Continuous;
    for (Eigen::Index j = 0; j < rm.grades.cols(); ++j) {
        const double lo = rm.grades.col(j).minCoeff(), hi = rm.grades.col(j).maxCoeff();
        if (hi - lo < 1e-12) {
            rep.degenerate = true;
            return rep;
        }
    }
    rep.residual_pve = pca_pve(correlation_matrix(rm)).pve;
    CourseResponseMatrix dm = m_imputed;
    dm.observed.setConstant(true);
    rep.data_pve = pca_pve(correlation_matrix(dm)).pve;
    // white residuals sit near the uniform level 1/C; flag only structure that
    // clears both the noise floor and the data's second component
    if (rep.residual_pve.size() > 0 && rep.data_pve.size() > 1) {
        const double noise_floor = 1.0 / static_cast<double>(rep.residual_pve.size()) + 0.05;
        rep.flagged = rep.residual_pve[0] > std::max(rep.data_pve[1], noise_floor);
    }
    return rep;
}

}  // namespace cde
