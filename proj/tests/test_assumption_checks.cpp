#include <doctest.h>

#include <cmath>

#include "cde/assumption_checks.hpp"
#include "cde/grade_data.hpp"
#include "cde/simulation.hpp"
#include "cde/stats.hpp"

using namespace cde;

TEST_CASE("q3 flags a duplicated course pair") {
    SimulationConfig cfg;
    cfg.n_students = 300;
    cfg.n_courses = 6;
    cfg.grade_kind = ScaleKind::Continuous;
    cfg.seed = 17;
    CourseResponseMatrix m = simulate_irt(cfg).matrix;
    // duplicate course 0 into course 5: identical residuals, q3 = 1
    m.grades.col(5) = m.grades.col(0);
    LatentModel fit = fit_agm(m, 1);
    Q3Report rep = yen_q3(fit, m);
    CHECK(rep.q3(0, 5) == doctest::Approx(1.0).epsilon(1e-6));
    bool found = false;
    for (const auto& v : rep.violations)
        found |= (v.course_a == m.course_ids[0] && v.course_b == m.course_ids[5] &&
                  v.residual_sign == 1);
    CHECK(found);
}

TEST_CASE("q3 is symmetric, student-order invariant, and respects the joint minimum") {
    SimulationConfig cfg;
    cfg.n_students = 200;
    cfg.n_courses = 6;
    cfg.grade_kind = ScaleKind::Continuous;
    cfg.seed = 18;
    CourseResponseMatrix m = simulate_irt(cfg).matrix;
    // leave only 4 joint students for the pair (0, 1)
    for (Eigen::Index i = 4; i < m.n_students(); ++i) m.observed(i, 0) = false;
    LatentModel fit = centering_estimates(m);
    Q3Report rep = yen_q3(fit, m, 10);
    CHECK(std::isnan(rep.q3(0, 1)));  // undefined pair excluded
    for (Eigen::Index a = 0; a < 6; ++a)
        for (Eigen::Index b = 0; b < 6; ++b)
            if (!std::isnan(rep.q3(a, b))) CHECK(rep.q3(a, b) == doctest::Approx(rep.q3(b, a)));

    CourseResponseMatrix rev = m;
    std::reverse(rev.student_ids.begin(), rev.student_ids.end());
    for (Eigen::Index i = 0; i < m.n_students(); ++i) {
        rev.grades.row(i) = m.grades.row(m.n_students() - 1 - i);
        rev.observed.row(i) = m.observed.row(m.n_students() - 1 - i);
    }
    LatentModel fit2 = centering_estimates(rev);
    Q3Report rep2 = yen_q3(fit2, rev, 10);
    CHECK(rep2.mean_q3 == doctest::Approx(rep.mean_q3).epsilon(1e-9));
}

TEST_CASE("split_half partitions each student's cells exactly") {
    SimulationConfig cfg;
    cfg.n_students = 40;
    cfg.n_courses = 9;
    cfg.seed = 5;
    CourseResponseMatrix m = simulate_irt(cfg).matrix;
    m.observed(3, 2) = false;  // a 8-grade student
    auto [h1, h2] = split_half(m, SplitMode::Random, 11);
    for (Eigen::Index i = 0; i < m.n_students(); ++i) {
        int n1 = 0, n2 = 0, n = 0;
        for (Eigen::Index j = 0; j < m.n_courses(); ++j) {
            n += m.observed(i, j);
            n1 += h1.observed(i, j);
            n2 += h2.observed(i, j);
            // no cell lands in both halves, none is invented
            CHECK_FALSE((h1.observed(i, j) && h2.observed(i, j)));
            if (h1.observed(i, j) || h2.observed(i, j)) CHECK(m.observed(i, j));
        }
        CHECK(n1 + n2 == n);
        CHECK(n1 == (n + 1) / 2);  // odd counts favor half 1
    }
    // reproducible bit-for-bit under the same seed
    auto [g1, g2] = split_half(m, SplitMode::Random, 11);
    CHECK((g1.observed.cast<int>() - h1.observed.cast<int>()).cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("time split respects chronology") {
    GradeScaleSpec spec;
    spec.kind = ScaleKind::Continuous;
    CourseResponseMatrix m = parse_matrix("id,a,b,c,d\ns1,1,2,3,4\n", spec);
    IntMatrix terms(1, 4);
    terms << 3, 1, 4, 2;
    m.term_of_grade = terms;
    auto [h1, h2] = split_half(m, SplitMode::Time, 0);
    // terms {1,2} go to half 1, {3,4} to half 2
    CHECK(h1.observed(0, 1));
    CHECK(h1.observed(0, 3));
    CHECK(h2.observed(0, 0));
    CHECK(h2.observed(0, 2));

    CHECK_THROWS_AS(split_half(parse_matrix("id,a,b\ns1,1,2\n", spec), SplitMode::Time, 0), Error);
}

TEST_CASE("students with one grade are excluded from both halves") {
    GradeScaleSpec spec;
    spec.kind = ScaleKind::Continuous;
    CourseResponseMatrix m = parse_matrix("id,a,b\ns1,1,\ns2,2,3\n", spec);
    Warnings w;
    auto [h1, h2] = split_half(m, SplitMode::Random, 3, &w);
    CHECK_FALSE(h1.observed(0, 0));
    CHECK_FALSE(h2.observed(0, 0));
    CHECK(w.size() == 1);
}

TEST_CASE("identical halves correlate perfectly") {
    // duplicate every course so both halves can carry one copy of each
    SimulationConfig cfg;
    cfg.n_students = 250;
    cfg.n_courses = 6;
    cfg.grade_kind = ScaleKind::Continuous;
    cfg.seed = 23;
    CourseResponseMatrix base = simulate_irt(cfg).matrix;
    CourseResponseMatrix dup;
    dup.scale = base.scale;
    dup.student_ids = base.student_ids;
    dup.grades.resize(base.n_students(), 12);
    dup.observed = BoolMatrix::Constant(base.n_students(), 12, true);
    IntMatrix terms(base.n_students(), 12);
    for (int j = 0; j < 6; ++j) {
        dup.course_ids.push_back("c" + std::to_string(j) + "_first");
        dup.grades.col(j) = base.grades.col(j);
        terms.col(j).setConstant(0);
    }
    for (int j = 0; j < 6; ++j) {
        dup.course_ids.push_back("c" + std::to_string(j) + "_second");
        dup.grades.col(6 + j) = base.grades.col(j);
        terms.col(6 + j).setConstant(1);
    }
    dup.term_of_grade = terms;
    // chronological split puts the first copies in half 1, the duplicates in
    // half 2; the two halves carry identical data up to course labels, so the
    // student correlation is 1 (course sets are disjoint, hence no course r)
    SplitHalfReport rep = split_half_correlation(dup, ModelClass::Agm, 1, SplitMode::Time, 1);
    CHECK(rep.student_corr == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rep.shared_courses == 0);
}

TEST_CASE("random split-half reliability on simulated continuous data") {
    SimulationConfig cfg;
    cfg.grade_kind = ScaleKind::Continuous;
    cfg.n_students = 800;
    cfg.seed = 27;
    CourseResponseMatrix m = simulate_irt(cfg).matrix;
    SplitHalfReport rep = split_half_correlation(m, ModelClass::Agm, 1, SplitMode::Random, 4);
    CHECK(rep.course_corr >= 0.97);
    CHECK(rep.student_corr >= 0.90);
    CHECK_FALSE(rep.flagged);
}

TEST_CASE("concurrent validity on matched and noise data") {
    SimulationConfig cfg;
    cfg.grade_kind = ScaleKind::Continuous;
    cfg.n_students = 600;
    cfg.n_courses = 12;
    cfg.seed = 30;
    CourseResponseMatrix m = simulate_irt(cfg).matrix;
    LatentModel cen = centering_estimates(m);
    ValidityReport v = concurrent_validity(cen, m);
    // centering difficulty is an affine image of the course means on complete data
    CHECK(v.course_r == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(v.student_r == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_FALSE(v.flagged);

    // pure-noise grades: no structure, low validity for the latent fit
    stats::Rng rng(31);
    CourseResponseMatrix noise = m;
    for (Eigen::Index i = 0; i < noise.grades.rows(); ++i)
        for (Eigen::Index j = 0; j < noise.grades.cols(); ++j)
            noise.grades(i, j) = 50.0 + 10.0 * rng.normal();
    LatentModel nfit = fit_agm(noise, 1);
    // difficulty still tracks course means (both are near-constant), but the
    // student side has nothing to explain; check the sign-agnostic magnitudes
    ValidityReport nv = concurrent_validity(nfit, noise);
    CHECK(nv.student_r <= 1.0);  // defined
    // residuals carry everything: the fitted sigma2 stays near the noise level
    CHECK(nfit.sigma2 == doctest::Approx(100.0).epsilon(0.15));
}

TEST_CASE("validity is invariant under positive affine rescaling") {
    SimulationConfig cfg;
    cfg.grade_kind = ScaleKind::Continuous;
    cfg.n_students = 300;
    cfg.n_courses = 8;
    cfg.seed = 33;
    CourseResponseMatrix m = simulate_irt(cfg).matrix;
    LatentModel f1 = fit_agm(m, 1);
    ValidityReport v1 = concurrent_validity(f1, m);
    CourseResponseMatrix scaled = m;
    scaled.grades = 2.5 * m.grades.array() + 7.0;
    LatentModel f2 = fit_agm(scaled, 1);
    ValidityReport v2 = concurrent_validity(f2, scaled);
    CHECK(v1.course_r == doctest::Approx(v2.course_r).epsilon(1e-6));
    CHECK(v1.student_r == doctest::Approx(v2.student_r).epsilon(1e-6));
}

TEST_CASE("residual pca flags a planted second factor") {
    SimulationConfig cfg;
    cfg.grade_kind = ScaleKind::Continuous;
    cfg.n_dim = 2;
    cfg.seed = 35;
    cfg.n_students = 800;
    CourseResponseMatrix m = simulate_irt(cfg).matrix;
    // a one-dimensional model leaves the second factor in the residuals
    LatentModel cen = centering_estimates(m);
    ResidualPcaReport flagged = residual_pca_check(cen, m);
    CHECK_FALSE(flagged.degenerate);
    CHECK(flagged.residual_pve[0] > 1.0 / static_cast<double>(m.n_courses()) + 0.05);
    CHECK(flagged.flagged);

    // matched-dimension AGM leaves near-white residuals
    cfg.n_dim = 1;
    CourseResponseMatrix m1 = simulate_irt(cfg).matrix;
    LatentModel agm = fit_agm(m1, 1);
    ResidualPcaReport white = residual_pca_check(agm, m1);
    CHECK_FALSE(white.degenerate);
    CHECK(white.residual_pve[0] == doctest::Approx(1.0 / static_cast<double>(m1.n_courses())).epsilon(0.9));
    CHECK(white.residual_pve[0] < 0.15);

    // zero-residual case reports no structure
    CourseResponseMatrix tiny;
    tiny.scale.kind = ScaleKind::Continuous;
    tiny.student_ids = {"s1", "s2"};
    tiny.course_ids = {"a", "b"};
    tiny.grades.resize(2, 2);
    tiny.grades << 1, 2, 3, 4;
    tiny.observed = BoolMatrix::Constant(2, 2, true);
    LatentModel exact = fit_agm(tiny, 1);
    ResidualPcaReport degen = residual_pca_check(exact, tiny);
    CHECK(degen.degenerate);
}
