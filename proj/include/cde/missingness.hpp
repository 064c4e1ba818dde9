#pragma once

#include "cde/types.hpp"

namespace cde {

struct MissingnessPattern {
    std::vector<int> observed_set;  // course indices O_p
    std::vector<int> missing_set;   // complement M_p
    int count = 0;                  // students with this pattern (s_p)
};

struct LittleResult {
    double t2 = 0.0;
    int dof = 0;
    double p_value = 1.0;
    int n_patterns = 0;
    int patterns_skipped = 0;
};

struct MarCourseResult {
    std::string course_id;
    // coefficient order: intercept, GPA, STD, MIN, MAX
    Vector coefficients;
    Vector p_values;         // GPA, STD, MIN, MAX (Wald)
    double pseudo_r2 = 0.0;  // McFadden
    bool flagged = false;    // pseudo_r2 < 0.1
    bool separation_warning = false;
    int n_rows = 0;
    bool skipped = false;
    std::string note;
};

enum class MissingnessVerdict { MCAR, MAR, MNAR_SUSPECT };

struct MissingnessClassification {
    MissingnessVerdict verdict;
    std::vector<std::string> flagged_courses;  // interpret with caution
};

std::vector<MissingnessPattern> missingness_patterns(const CourseResponseMatrix& m);

/// ML estimates of the multivariate-normal mean/covariance under ignorable
/// missingness (EM). Exposed for tests.
void em_mvn_estimate(const CourseResponseMatrix& m, Vector& mu, Matrix& sigma,
                     int max_iter = 100, double tol = 1e-8);

/// Little's chi-square test of MCAR. Requires at least one missing value and
/// two distinct patterns.
LittleResult little_mcar_test(const CourseResponseMatrix& m, Warnings* warnings = nullptr);

/// Per-course logistic regression of the missingness indicator on the
/// leave-one-out summary features GPA/STD/MIN/MAX.
std::vector<MarCourseResult> mar_regression_test(const CourseResponseMatrix& m);

MissingnessClassification classify_missingness(const LittleResult& little,
                                               const std::vector<MarCourseResult>& mar);

}  // namespace cde
