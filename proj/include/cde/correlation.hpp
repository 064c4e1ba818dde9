#pragma once

#include <span>

#include "cde/types.hpp"

namespace cde {

enum class CorrelationMethod { Pearson, Tetrachoric };

struct CorrelationMatrix {
    std::vector<std::string> course_ids;
    Matrix values;
    CorrelationMethod method = CorrelationMethod::Pearson;
};

/// P(Z1 <= x, Z2 <= y) for a standard bivariate normal with correlation rho.
/// Composite Gauss-Legendre on the conditioned 1-D form; absolute error well
/// below 1e-7 across the domain.
double bivariate_normal_cdf(double x, double y, double rho);

struct TetrachoricResult {
    double rho = 0.0;
    bool boundary = false;  // hit the +-0.999 clamp (zero off/on-diagonal cell)
    double t1 = 0.0;        // fitted thresholds
    double t2 = 0.0;
};

/// ML tetrachoric correlation from a 2x2 table. Thresholds are fixed from the
/// marginals; rho maximizes the multinomial log-likelihood on (-0.999, 0.999).
TetrachoricResult tetrachoric_from_counts(double n00, double n01, double n10, double n11);

/// Pairwise tetrachoric over jointly-observed entries of two binary vectors.
TetrachoricResult tetrachoric(std::span<const double> c1, std::span<const double> c2,
                              Warnings* warnings = nullptr);

/// Course-by-course correlation matrix of a complete matrix. Binary scales use
/// tetrachoric correlation (non-integral fill values are thresholded at 0.5),
/// otherwise Pearson. The result is symmetrized and repaired to be PSD.
CorrelationMatrix correlation_matrix(const CourseResponseMatrix& m, Warnings* warnings = nullptr);

/// Clips negative eigenvalues to zero and renormalizes the diagonal to 1.
void repair_psd(Matrix& corr, double tol = 1e-8);

}  // namespace cde
