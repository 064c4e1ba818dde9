#include <doctest.h>

#include <cmath>

#include "cde/grade_data.hpp"

using namespace cde;

namespace {

GradeScaleSpec continuous_spec() {
    GradeScaleSpec s;
    s.kind = ScaleKind::Continuous;
    return s;
}

}  // namespace

TEST_CASE("parse a small table with one missing cell") {
    const std::string text =
        "student,math,physics\n"
        "s1,1,2\n"
        "s2,,3\n"
        "s3,4,5\n";
    CourseResponseMatrix m = parse_matrix(text, continuous_spec());
    CHECK(m.n_students() == 3);
    CHECK(m.n_courses() == 2);
    CHECK(m.n_missing() == 1);
    CHECK(m.n_observed() == 5);
    CHECK_FALSE(m.observed(1, 0));
    CHECK(m.grades(2, 1) == doctest::Approx(5.0));
}

TEST_CASE("duplicate header or student id is a structural error") {
    CHECK_THROWS_AS(parse_matrix("id,a,a\ns1,1,2\n", continuous_spec()), Error);
    CHECK_THROWS_AS(parse_matrix("id,a,b\ns1,1,2\ns1,3,4\n", continuous_spec()), Error);
}

TEST_CASE("non-numeric cells name the row and column") {
    CHECK_THROWS_WITH_AS(parse_matrix("id,a,b\ns1,1,oops\n", continuous_spec()),
                         doctest::Contains("b"), Error);
}

TEST_CASE("nan tokens denote missing, tab separation is detected") {
    // layout mirrors a binary course response table with nan entries
    const std::string text =
        "id\tcourse_A\tcourse_B\tcourse_C\tcourse_D\tcourse_E\n"
        "s_1\tnan\t1\t1\t0\t1\n"
        "s_2\t0\t1\tnan\tnan\t1\n"
        "s_3\tnan\t1\t1\tnan\t1\n"
        "s_4\t0\t0\t1\tnan\t1\n";
    GradeScaleSpec spec;
    spec.kind = ScaleKind::Binary;
    CourseResponseMatrix m = parse_matrix(text, spec);
    CHECK(m.n_courses() == 5);
    CHECK(m.n_students() == 4);
    CHECK(m.n_missing() == 6);
    CHECK_FALSE(m.observed(0, 0));
    CHECK_FALSE(m.observed(1, 2));
    CHECK_FALSE(m.observed(1, 3));
    CHECK_FALSE(m.observed(2, 0));
    CHECK_FALSE(m.observed(2, 3));
    CHECK_FALSE(m.observed(3, 3));
}

TEST_CASE("normalize_scale reflects descending grades") {
    // German scale: 5 is worst, 1 is best
    GradeScaleSpec spec;
    spec.lowest_grade = 5.0;
    spec.direction = Direction::Descending;
    spec.kind = ScaleKind::Ordinal;
    CourseResponseMatrix m = parse_matrix("id,a,b\ns1,1,3\ns2,5,2\n", spec);
    CourseResponseMatrix out = normalize_scale(m);
    CHECK(out.grades(0, 0) == doctest::Approx(4.0));  // best grade maps to the top
    CHECK(out.grades(1, 0) == doctest::Approx(0.0));  // worst maps to 0
    CHECK(out.scale.direction == Direction::Ascending);
    // idempotent
    CourseResponseMatrix again = normalize_scale(out);
    CHECK((again.grades - out.grades).cwiseAbs().maxCoeff() == doctest::Approx(0.0));

    // ascending input is untouched
    CourseResponseMatrix asc = parse_matrix("id,a\ns1,2\n", continuous_spec());
    CHECK(normalize_scale(asc).grades(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("normalize_scale preserves merit order within columns") {
    GradeScaleSpec spec;
    spec.lowest_grade = 5.0;
    spec.direction = Direction::Descending;
    CourseResponseMatrix m = parse_matrix("id,a\ns1,1.3\ns2,2.7\ns3,4.0\n", spec);
    CourseResponseMatrix out = normalize_scale(m);
    // s1 had the best grade (1.3 on a descending scale) and must stay best
    CHECK(out.grades(0, 0) > out.grades(1, 0));
    CHECK(out.grades(1, 0) > out.grades(2, 0));
}

TEST_CASE("percentile transform uses pooled mid-ranks") {
    CourseResponseMatrix m = parse_matrix("id,a,b,c\ns1,1,2,3\n", continuous_spec());
    CourseResponseMatrix out = percentile_transform(m);
    CHECK(out.grades(0, 0) == doctest::Approx(100.0 / 6.0).epsilon(1e-9));
    CHECK(out.grades(0, 1) == doctest::Approx(50.0));
    CHECK(out.grades(0, 2) == doctest::Approx(100.0 * 5.0 / 6.0).epsilon(1e-9));
    CHECK(out.scale.kind == ScaleKind::Continuous);
}

TEST_CASE("percentile transform on constant grades warns and maps to 50") {
    CourseResponseMatrix m = parse_matrix("id,a,b\ns1,2,2\ns2,2,2\n", continuous_spec());
    Warnings w;
    CourseResponseMatrix out = percentile_transform(m, &w);
    CHECK(out.grades(0, 0) == doctest::Approx(50.0));
    CHECK(out.grades(1, 1) == doctest::Approx(50.0));
    CHECK(w.size() == 1);
}

TEST_CASE("percentile transform is invariant under increasing maps and stays in range") {
    CourseResponseMatrix m = parse_matrix(
        "id,a,b\n"
        "s1,0.3,1.9\n"
        "s2,4.2,0.1\n"
        "s3,2.2,3.3\n",
        continuous_spec());
    CourseResponseMatrix p1 = percentile_transform(m);
    CourseResponseMatrix warped = m;
    for (Eigen::Index i = 0; i < m.grades.rows(); ++i)
        for (Eigen::Index j = 0; j < m.grades.cols(); ++j)
            warped.grades(i, j) = std::exp(m.grades(i, j));  // strictly increasing
    CourseResponseMatrix p2 = percentile_transform(warped);
    CHECK((p1.grades - p2.grades).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(p1.grades.minCoeff() >= 0.0);
    CHECK(p1.grades.maxCoeff() <= 100.0);
    // monotone: higher input, higher percentile
    CHECK(p1.grades(1, 0) > p1.grades(2, 0));
}

TEST_CASE("binarize thresholds at >= and flags degenerate columns") {
    CourseResponseMatrix m =
        parse_matrix("id,a,b\ns1,49.9,80\ns2,50.0,70\ns3,50.1,90\n", continuous_spec());
    Warnings w;
    CourseResponseMatrix out = binarize(m, 50.0, &w);
    CHECK(out.grades(0, 0) == doctest::Approx(0.0));
    CHECK(out.grades(1, 0) == doctest::Approx(1.0));
    CHECK(out.grades(2, 0) == doctest::Approx(1.0));
    CHECK(out.scale.kind == ScaleKind::Binary);
    // column b is all-pass -> degenerate
    REQUIRE(w.size() == 1);
    CHECK(w[0].find("b") != std::string::npos);

    // threshold at the minimum makes every column degenerate
    Warnings w2;
    binarize(m, 0.0, &w2);
    CHECK(w2.size() == 2);
}

TEST_CASE("binarize commutes with normalize_scale at the reflected threshold") {
    GradeScaleSpec spec;
    spec.lowest_grade = 5.0;
    spec.direction = Direction::Descending;
    CourseResponseMatrix m = parse_matrix("id,a\ns1,1\ns2,3\ns3,4.5\n", spec);
    // descending: pass means grade <= 2.5; canonical: pass means >= 5 - 2.5
    CourseResponseMatrix path1 = binarize(normalize_scale(m), 5.0 - 2.5);
    CourseResponseMatrix path2 = m;
    for (Eigen::Index i = 0; i < m.grades.rows(); ++i)
        path2.grades(i, 0) = m.grades(i, 0) <= 2.5 ? 1.0 : 0.0;
    CHECK((path1.grades - path2.grades).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("transforms preserve missing cells exactly") {
    CourseResponseMatrix m =
        parse_matrix("id,a,b\ns1,1,\ns2,,3\ns3,2,4\n", continuous_spec());
    for (const CourseResponseMatrix& t :
         {normalize_scale(m), percentile_transform(m), binarize(m, 2.0)}) {
        CHECK(t.observed(0, 1) == false);
        CHECK(t.observed(1, 0) == false);
        CHECK(t.n_missing() == 2);
    }
}

TEST_CASE("filter_students drops sparse rows then empty columns") {
    const std::string text =
        "id,a,b,c,d,e,f,g\n"
        "s1,1,2,,,,,\n"           // 2 observed
        "s2,1,2,3,4,5,,\n"        // 5 observed
        "s3,1,2,3,4,5,6,7\n";     // 7 observed
    CourseResponseMatrix m = parse_matrix(text, continuous_spec());
    Warnings w;
    CourseResponseMatrix out = filter_students(m, 5, &w);
    CHECK(out.n_students() == 2);
    CHECK(out.n_courses() == 7);

    // min_observed = 1 keeps everything when no row is empty
    CourseResponseMatrix same = filter_students(m, 1);
    CHECK(same.n_students() == 3);

    // a student below the cutoff whose removal empties a column
    const std::string text2 = "id,a,b\ns1,1,\ns2,2,\ns3,,9\n";
    CourseResponseMatrix m2 = parse_matrix(text2, continuous_spec());
    Warnings w2;
    CourseResponseMatrix out2 = filter_students(m2, 1, &w2);
    CHECK(out2.n_students() == 3);
    CHECK(out2.n_courses() == 2);

    CHECK_THROWS_AS(filter_students(m, 100), Error);
}

TEST_CASE("group files parse and validate") {
    GroupAssignment g = parse_groups("student_id,group\ns1,-1\ns2,1\n");
    CHECK(g.group_of("s1") == -1);
    CHECK(g.group_of("s2") == 1);
    CHECK_THROWS_AS(parse_groups("s1,-1\ns2,2\n"), Error);
    CHECK_THROWS_AS(parse_groups("s1,-1\ns2,-1\n"), Error);  // one group empty
}

TEST_CASE("matrix round-trips through write and load") {
    CourseResponseMatrix m =
        parse_matrix("id,a,b\ns1,1.25,\ns2,,3.5\n", continuous_spec());
    write_matrix(m, "/tmp/cde_test_matrix.csv");
    CourseResponseMatrix back = load_matrix("/tmp/cde_test_matrix.csv", continuous_spec());
    CHECK(back.n_students() == 2);
    CHECK(back.n_missing() == 2);
    CHECK(back.grades(0, 0) == doctest::Approx(1.25));
    CHECK(back.grades(1, 1) == doctest::Approx(3.5));
}
