#pragma once

#include "cde/types.hpp"

namespace cde {

/// Column-mean (or median) completion. Observed cells are untouched.
CourseResponseMatrix mean_impute(const CourseResponseMatrix& m);
CourseResponseMatrix median_impute(const CourseResponseMatrix& m);

struct MipcaResult {
    CourseResponseMatrix completed;
    int iterations = 0;
    bool converged = true;
    std::vector<double> change_trace;  // max relative change of imputed cells per iteration
};

/// Iterative PCA imputation (regularized reconstruction, residual-matched
/// noise completion). Binary matrices run the tetrachoric-adjusted inner PCA
/// and fill missing cells with pass probabilities. Deterministic given
/// (matrix, n_components, tol, max_iter).
MipcaResult mipca_impute(const CourseResponseMatrix& m, int n_components, double tol = 1e-4,
                         int max_iter = 100);

/// Smallest k whose cumulative PVE on the mean-imputed matrix reaches 50%.
int default_mipca_components(const CourseResponseMatrix& m);

}  // namespace cde
