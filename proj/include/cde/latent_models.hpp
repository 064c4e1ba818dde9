#pragma once

#include <cstdint>

#include "cde/types.hpp"

namespace cde {

enum class ModelClass { Centering, Agm, Irt };

std::string to_string(ModelClass c);
ModelClass model_class_from_string(const std::string& s);

struct LatentModel {
    ModelClass model_class = ModelClass::Centering;
    int n_dim = 1;
    std::vector<std::string> student_ids;
    std::vector<std::string> course_ids;
    Matrix theta;  // |S| x n, column means zero
    Matrix delta;  // |C| x n
    Matrix alpha;  // |C| x n, all ones for Rasch / 1-dim AGM / centering
    double sigma2 = 0.0;      // residual variance (AGM / centering)
    double grand_mean = 0.0;  // centering prediction offset
    double log_likelihood = 0.0;
    long n_params = 0;
    bool converged = true;
    int epochs = 0;
    Warnings warnings;

    bool is_two_pl() const { return model_class == ModelClass::Irt && n_dim > 1; }
};

struct HeuristicEstimates {
    Vector course_means;  // pass rate / average grade per course
    Vector student_gpas;
};

HeuristicEstimates heuristic_estimates(const CourseResponseMatrix& m);

/// GPA-centered course means and course-mean-centered student means (all sums
/// over observed cells only).
LatentModel centering_estimates(const CourseResponseMatrix& m);

struct AgmOptions {
    double tol = 1e-8;      // relative objective change
    int max_sweeps = 500;
    std::uint64_t seed = 0;  // init of the multidimensional ALS
};

LatentModel fit_agm(const CourseResponseMatrix& m, int n_dim, const AgmOptions& opts = {});

struct IrtOptions {
    double ridge = 1e-4;
    int max_epochs = 500;
    double grad_tol = 1e-6;
    std::uint64_t seed = 0;
    bool drop_degenerate = false;     // default: retain degenerate courses under the ridge
    int min_students_warning = 75;
    std::vector<int> delta_group;     // optional: ties column j's delta to group id (time-invariant offering fits)
};

LatentModel fit_irt(const CourseResponseMatrix& m, int n_dim, const IrtOptions& opts = {});

double pass_probability(const LatentModel& model, const std::string& student_id,
                        const std::string& course_id);

struct DifficultyEstimates {
    std::vector<std::string> course_ids;      // course or offering labels
    std::vector<std::string> parent_course;   // offering's course (== course_ids when not time-resolved)
    std::vector<int> term;                    // offering term, -1 when pooled
    Vector difficulty;                        // oriented: higher = harder
    Vector raw_projection;                    // <alpha, delta>/|alpha| as fitted
    Vector ci_lower, ci_upper;
    double ci_level = 0.0;
    bool has_ci = false;
    Warnings warnings;
};

DifficultyEstimates unidim_difficulty(const LatentModel& model);

/// Rotation-stable scalar student score: first dimension for unidimensional
/// models, projection on the leading discrimination direction otherwise.
Vector student_scalar_scores(const LatentModel& model);

/// k ln(S) - 2 lnL with the model's joint log-likelihood and parameter count.
double bic(const LatentModel& model, const CourseResponseMatrix& m);

struct IrtBicEntry {
    int n_dim = 1;
    double marginal_ll = 0.0;
    long k_items = 0;
    double bic = 0.0;
    int em_iterations = 0;
};

struct MarginalBicOptions {
    int quad_points = 21;       // per dimension (15 when n_dim > 1)
    int max_iter = 200;
    double tol = 1e-7;
    std::uint64_t seed = 0;
};

/// Marginal-likelihood BIC for IRT dimension selection: item parameters are
/// refit by EM with the traits integrated over N(0, I) (Gauss-Hermite), and k
/// counts item parameters only. Trait estimates still come from fit_irt.
std::vector<IrtBicEntry> irt_marginal_bic(const CourseResponseMatrix& m,
                                          const std::vector<int>& dims,
                                          const MarginalBicOptions& opts = {});

struct TimeResolvedOptions {
    ModelClass model_class = ModelClass::Irt;
    int n_dim = 1;
    int bootstrap_reps = 200;
    int min_offering_size = 75;
    double ci_level = 0.95;
    std::uint64_t seed = 1;
};

/// Expands courses into per-term offerings (small offerings merge into a
/// course-level column), fits the chosen model, and attaches percentile
/// bootstrap confidence intervals over student resamples.
DifficultyEstimates fit_time_resolved(const CourseResponseMatrix& m,
                                      const TimeResolvedOptions& opts = {});

/// Penalized joint log-likelihood and its analytic gradient, exposed for the
/// finite-difference check.
double irt_objective(const CourseResponseMatrix& m, const Matrix& theta, const Matrix& delta,
                     const Matrix& alpha, double ridge, bool two_pl);
void irt_gradient(const CourseResponseMatrix& m, const Matrix& theta, const Matrix& delta,
                  const Matrix& alpha, double ridge, bool two_pl, Matrix& g_theta,
                  Matrix& g_delta, Matrix& g_alpha);

std::string serialize_model(const LatentModel& model);
LatentModel deserialize_model(const std::string& text);
void save_model(const LatentModel& model, const std::string& path);
LatentModel load_model(const std::string& path);

}  // namespace cde
