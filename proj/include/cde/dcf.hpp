#pragma once

#include "cde/latent_models.hpp"
#include "cde/types.hpp"

namespace cde {

struct DcfResult {
    std::string course_id;
    double beta0 = 0.0;            // intercept
    double beta1 = 0.0;            // group effect; negative => group -1 finds it easier
    Vector beta2;                  // trait correction (fixed at 1 when n_dim == 1)
    double p_raw = 1.0;            // Wald p-value for beta1
    double p_bh = 1.0;             // Benjamini-Hochberg adjusted
    bool significant = false;      // p_bh <= target FDR
    int n_group_minus = 0;
    int n_group_plus = 0;
    bool skipped = false;
    std::string note;
    bool separation_warning = false;
};

struct DcfOptions {
    int min_group_size = 10;
    double ridge = 1e-6;
};

/// Second-stage regression for one course: IRT models use a logistic
/// regression of the pass indicator on {1, g_s} with the fitted trait as an
/// offset (coefficient free for n_dim > 1); AGM/centering use ordinary least
/// squares on the same design. BH fields are left unset.
DcfResult dcf_course(const CourseResponseMatrix& m, const LatentModel& model,
                     const std::string& course_id, const GroupAssignment& groups,
                     const DcfOptions& opts = {});

struct BhResult {
    std::vector<double> adjusted;
    std::vector<bool> reject;
};

/// Benjamini-Hochberg step-up: adjusted p_(i) = min_{j>=i} m p_(j) / j.
BhResult bh_correct(const std::vector<double>& p_values, double q = 0.05);

/// Runs dcf_course over all eligible courses and applies the BH correction
/// across their beta1 p-values; results sorted by |beta1| descending.
std::vector<DcfResult> dcf_all(const CourseResponseMatrix& m, const LatentModel& model,
                               const GroupAssignment& groups, double q = 0.05,
                               const DcfOptions& opts = {});

}  // namespace cde
