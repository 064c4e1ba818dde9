#pragma once

#include <cstdint>

#include "cde/latent_models.hpp"
#include "cde/types.hpp"

namespace cde {

struct SimulationConfig {
    int n_students = 2000;
    int n_courses = 20;
    int n_dim = 1;  // 1 or 2
    ScaleKind grade_kind = ScaleKind::Binary;
    std::uint64_t seed = 1;
    int replicates = 10;

    // generator constants (see simulate_irt)
    double noise_sigma = 0.5;        // latent exam noise of the continuous variant
    double alpha1_scale = 1.45;      // 2-dim: general-dimension loading scale
    double alpha1_jitter = 0.15;     // 2-dim: lognormal sigma of the general loadings
    double alpha2_pos = 0.55;        // 2-dim: second-dimension loading, majority cluster
    double alpha2_neg = 1.3;         // 2-dim: second-dimension loading, minority cluster (negated)
    double alpha2_jitter = 0.08;
    double alpha2_pos_frac = 0.75;   // fraction of courses in the majority cluster
};

struct SimulatedData {
    CourseResponseMatrix matrix;
    Matrix theta;  // ground truth |S| x n
    Matrix delta;  // |C| x n
    Matrix alpha;  // |C| x n
};

/// Ground-truth IRT simulation. Binary grades are Bernoulli draws from the
/// item response function; continuous grades map the latent propensity
/// (plus exam noise) linearly onto [0, 100].
SimulatedData simulate_irt(const SimulationConfig& cfg);

struct AmputationResult {
    CourseResponseMatrix matrix;
    double realized_missing_rate = 0.0;
    int redraws = 0;
};

/// MAR amputation: cells whose student GPA or course mean (normalized to
/// [0, 1]) falls below tau are masked with probability alpha, others with the
/// base rate beta.
AmputationResult ampute_mar(const CourseResponseMatrix& m, double tau, double alpha,
                            double beta = 0.1, std::uint64_t seed = 1);

enum class DriftScenario { CourseConstantDrift, CourseDriftWithShock, StudentConstantDrift };

struct DriftConfig {
    DriftScenario scenario = DriftScenario::CourseConstantDrift;
    double rate = 0.08;          // per-course slope scale (student scenario: shared rate 0.05)
    double student_rate = 0.05;
    int shock_term = 6;
    int n_terms = 12;
};

struct DriftData {
    CourseResponseMatrix matrix;       // students x (course, term) offerings
    std::vector<std::string> parent_course;
    std::vector<int> term;
    std::vector<int> course_group;     // offering column -> course index
    Matrix delta_per_term;             // |C| x T instantaneous difficulty
    Vector delta_temporal_mean;        // |C|
    Vector theta_temporal_mean;        // |S|
    Matrix theta0;                     // |S| x 1 baseline traits
};

/// Per-term trait trajectories on a full student x course x term grid; grades
/// drawn from the instantaneous parameters. Zero rates with one term reproduce
/// simulate_irt exactly for equal seeds.
DriftData simulate_drift(const SimulationConfig& cfg, const DriftConfig& drift);

struct ChoiceBiasData {
    CourseResponseMatrix matrix;  // sparse: choice-driven enrollment
    Matrix theta, delta;
    double mean_courses_per_student = 0.0;
};

/// Above-median students enroll with probability 0.9 in above-median-difficulty
/// courses and 0.1 otherwise (mirrored below the median), capped per student.
ChoiceBiasData simulate_choice_bias(int max_courses_per_student, const SimulationConfig& cfg,
                                    double p_match = 0.9, double p_other = 0.1);

struct RegressionValidation {
    std::vector<double> rmse;  // one entry per repetition
    std::vector<double> r2;
};

/// Fits the stage-1 model, regresses grades on (theta_hat, delta_hat) rows
/// with 70/30 train-test splits, and reports test RMSE / R^2 per repetition.
RegressionValidation regression_validation(const CourseResponseMatrix& m, ModelClass model_class,
                                           int repetitions = 10, std::uint64_t seed = 1);

}  // namespace cde
