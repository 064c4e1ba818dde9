#include <doctest.h>

#include <cmath>

#include "cde/correlation.hpp"
#include "cde/dimensionality.hpp"
#include "cde/grade_data.hpp"
#include "cde/imputation.hpp"
#include "cde/simulation.hpp"
#include "cde/stats.hpp"

using namespace cde;

TEST_CASE("mean and median imputation fill from the observed column") {
    GradeScaleSpec spec;
    spec.kind = ScaleKind::Continuous;
    CourseResponseMatrix m = parse_matrix("id,a,b\ns1,2,1\ns2,,1\ns3,4,2\n", spec);
    CourseResponseMatrix mean = mean_impute(m);
    CHECK(mean.grades(1, 0) == doctest::Approx(3.0));
    CHECK(mean.n_missing() == 0);
    CHECK(mean.grades(0, 0) == doctest::Approx(2.0));  // observed untouched

    CourseResponseMatrix med = median_impute(m);
    CHECK(med.grades(1, 0) == doctest::Approx(3.0));

    // binary column {1,1,0,missing} -> 2/3 continuous fill
    GradeScaleSpec bspec;
    bspec.kind = ScaleKind::Binary;
    CourseResponseMatrix b = parse_matrix("id,a,b\ns1,1,0\ns2,1,1\ns3,0,1\ns4,,0\n", bspec);
    CHECK(mean_impute(b).grades(3, 0) == doctest::Approx(2.0 / 3.0));

    CourseResponseMatrix empty = parse_matrix("id,a,b\ns1,,1\ns2,,2\n", spec);
    CHECK_THROWS_AS(mean_impute(empty), Error);
}

TEST_CASE("complete matrices are fixed points") {
    GradeScaleSpec spec;
    spec.kind = ScaleKind::Continuous;
    CourseResponseMatrix m = parse_matrix("id,a,b\ns1,1,4\ns2,2,5\ns3,3,7\n", spec);
    CHECK((mean_impute(m).grades - m.grades).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    MipcaResult r = mipca_impute(m, 1);
    CHECK(r.iterations == 1);
    CHECK((r.completed.grades - m.grades).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("mipca recovers an exactly low-rank matrix") {
    // additive grid theta + delta standardizes to a rank-1 matrix
    const int S = 60, C = 8;
    stats::Rng rng(4);
    Vector theta(S), delta(C);
    for (int i = 0; i < S; ++i) theta[i] = rng.normal();
    for (int j = 0; j < C; ++j) delta[j] = 2.0 * rng.normal();
    CourseResponseMatrix m;
    m.scale.kind = ScaleKind::Continuous;
    for (int i = 0; i < S; ++i) m.student_ids.push_back("s" + std::to_string(i));
    for (int j = 0; j < C; ++j) m.course_ids.push_back("c" + std::to_string(j));
    m.grades.resize(S, C);
    m.observed = BoolMatrix::Constant(S, C, true);
    Matrix truth(S, C);
    for (int i = 0; i < S; ++i)
        for (int j = 0; j < C; ++j) {
            truth(i, j) = theta[i] + delta[j];
            m.grades(i, j) = truth(i, j);
        }
    // 20 percent MAR-ish masking tied to theta
    for (int i = 0; i < S; ++i)
        for (int j = 0; j < C; ++j)
            if (rng.uniform() < (theta[i] < 0 ? 0.3 : 0.1)) m.observed(i, j) = false;

    MipcaResult r = mipca_impute(m, 1, 1e-10, 500);
    for (int i = 0; i < S; ++i)
        for (int j = 0; j < C; ++j) {
            if (m.observed(i, j)) {
                CHECK(r.completed.grades(i, j) == m.grades(i, j));  // bit-identical
            } else {
                CHECK(r.completed.grades(i, j) == doctest::Approx(truth(i, j)).epsilon(1e-6));
            }
        }
    CHECK(r.converged);
    CHECK(r.iterations <= 50);
    // the recorded change trace falls below tolerance
    REQUIRE(!r.change_trace.empty());
    CHECK(r.change_trace.back() < 1e-10);
}

TEST_CASE("mipca is deterministic and leaves observed cells bit-identical") {
    SimulationConfig cfg;
    cfg.n_students = 150;
    cfg.n_courses = 10;
    cfg.grade_kind = ScaleKind::Continuous;
    cfg.seed = 99;
    SimulatedData d = simulate_irt(cfg);
    AmputationResult amp = ampute_mar(d.matrix, 0.45, 0.5, 0.1, 3);

    MipcaResult a = mipca_impute(amp.matrix, 1);
    MipcaResult b = mipca_impute(amp.matrix, 1);
    CHECK((a.completed.grades - b.completed.grades).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    for (Eigen::Index i = 0; i < amp.matrix.n_students(); ++i)
        for (Eigen::Index j = 0; j < amp.matrix.n_courses(); ++j)
            if (amp.matrix.observed(i, j))
                CHECK(a.completed.grades(i, j) == amp.matrix.grades(i, j));
}

TEST_CASE("binary mipca fills pass probabilities") {
    SimulationConfig cfg;
    cfg.n_students = 300;
    cfg.n_courses = 8;
    cfg.grade_kind = ScaleKind::Binary;
    cfg.seed = 5;
    SimulatedData d = simulate_irt(cfg);
    AmputationResult amp = ampute_mar(d.matrix, 0.3, 0.4, 0.1, 7);
    MipcaResult r = mipca_impute(amp.matrix, 1);
    for (Eigen::Index i = 0; i < amp.matrix.n_students(); ++i)
        for (Eigen::Index j = 0; j < amp.matrix.n_courses(); ++j) {
            if (amp.matrix.observed(i, j)) {
                CHECK(r.completed.grades(i, j) == amp.matrix.grades(i, j));
            } else {
                CHECK(r.completed.grades(i, j) >= 0.0);
                CHECK(r.completed.grades(i, j) <= 1.0);
            }
        }
    // imputed pass probabilities should track the ground-truth trait ordering:
    // students with higher theta get higher fills in the same course
    int checked = 0;
    for (Eigen::Index j = 0; j < amp.matrix.n_courses() && checked < 1; ++j) {
        double lo_sum = 0, hi_sum = 0;
        int lo_n = 0, hi_n = 0;
        for (Eigen::Index i = 0; i < amp.matrix.n_students(); ++i) {
            if (amp.matrix.observed(i, j)) continue;
            if (d.theta(i, 0) < -0.5) { lo_sum += r.completed.grades(i, j); ++lo_n; }
            if (d.theta(i, 0) > 0.5) { hi_sum += r.completed.grades(i, j); ++hi_n; }
        }
        if (lo_n >= 5 && hi_n >= 5) {
            CHECK(hi_sum / hi_n > lo_sum / lo_n);
            ++checked;
        }
    }
    CHECK(checked == 1);
}

TEST_CASE("default component count honors the 50 percent rule") {
    SimulationConfig cfg;
    cfg.n_students = 400;
    cfg.n_courses = 12;
    cfg.grade_kind = ScaleKind::Continuous;
    cfg.seed = 21;
    SimulatedData d = simulate_irt(cfg);
    AmputationResult amp = ampute_mar(d.matrix, 0.3, 0.3, 0.1, 9);
    CHECK(default_mipca_components(amp.matrix) == 1);  // strongly one-dimensional data
}

TEST_CASE("mipca argument validation") {
    GradeScaleSpec spec;
    spec.kind = ScaleKind::Continuous;
    CourseResponseMatrix m = parse_matrix("id,a,b\ns1,1,2\ns2,2,\ns3,3,4\n", spec);
    CHECK_THROWS_AS(mipca_impute(m, 0), Error);
    CHECK_THROWS_AS(mipca_impute(m, 5), Error);
    CourseResponseMatrix constant = parse_matrix("id,a,b\ns1,1,2\ns2,1,\ns3,1,4\n", spec);
    CHECK_THROWS_AS(mipca_impute(constant, 1), Error);
}
