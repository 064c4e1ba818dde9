#pragma once

#include <cstdint>

#include "cde/dimensionality.hpp"
#include "cde/latent_models.hpp"
#include "cde/types.hpp"

namespace cde {

struct Q3Report {
    Matrix q3;                 // |C| x |C|, NaN diagonal and undefined pairs
    double mean_q3 = 0.0;      // over defined off-diagonal pairs
    int n_pairs_defined = 0;
    struct Violation {
        std::string course_a, course_b;
        double q3 = 0.0;
        int residual_sign = 0;  // sign of the residual correlation
    };
    std::vector<Violation> violations;  // q3 - mean > 0.2; merging is manual
};

/// Residuals are grade minus prediction (IRT: pass probability; AGM/centering:
/// additive prediction); pairwise Pearson over jointly observed students.
Q3Report yen_q3(const LatentModel& model, const CourseResponseMatrix& m,
                int min_joint_students = 10);

/// Model prediction per observed cell (used by Q3 and the residual PCA check).
Matrix model_predictions(const LatentModel& model, const CourseResponseMatrix& m);

enum class SplitMode { Random, Time };

/// Partitions each student's observed grades into two halves. Time mode splits
/// chronologically (ties by course id); random mode shuffles per seed. Odd
/// counts leave the extra grade in half 1. Students with fewer than two
/// observed grades are excluded from both halves.
std::pair<CourseResponseMatrix, CourseResponseMatrix> split_half(const CourseResponseMatrix& m,
                                                                 SplitMode mode,
                                                                 std::uint64_t seed,
                                                                 Warnings* warnings = nullptr);

struct SplitHalfReport {
    SplitMode mode = SplitMode::Random;
    double student_corr = 0.0;
    double course_corr = 0.0;
    bool flagged = false;  // either correlation below 0.6
    int shared_students = 0;
    int shared_courses = 0;
    Warnings warnings;
};

SplitHalfReport split_half_correlation(const CourseResponseMatrix& m, ModelClass model_class,
                                       int n_dim, SplitMode mode, std::uint64_t seed);

struct ValidityReport {
    double student_r = 0.0;  // |Pearson| of scalar trait vs GPA
    double course_r = 0.0;   // |Pearson| of difficulty vs course mean grade
    int student_sign = 0;
    int course_sign = 0;
    bool flagged = false;  // either |r| < 0.6
};

ValidityReport concurrent_validity(const LatentModel& model, const CourseResponseMatrix& m);

struct ResidualPcaReport {
    Vector residual_pve;
    Vector data_pve;
    bool flagged = false;       // residual first PVE exceeds the data's second PVE
    bool degenerate = false;    // no residual structure (zero residuals)
};

ResidualPcaReport residual_pca_check(const LatentModel& model,
                                     const CourseResponseMatrix& m_imputed);

}  // namespace cde
