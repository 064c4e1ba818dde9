#pragma once

#include "cde/correlation.hpp"
#include "cde/types.hpp"

namespace cde {

struct PveResult {
    Vector eigenvalues;  // descending, negatives below 1e-10 zeroed
    Vector pve;          // eigenvalue / total
    Vector cumulative;
    int suggested_upper_bound = 1;  // min(threshold rule, elbow rule)
    int k_threshold = 1;
    int k_elbow = 1;
};

PveResult pca_pve(const CorrelationMatrix& corr);

/// Threshold rule: smallest k with cumulative PVE >= variance_threshold.
/// Elbow rule: log-eigenvalue second differences locate the flattening point;
/// the elbow is the component before it. No flattening -> no elbow cap.
int dim_upper_bound(const PveResult& pve, double variance_threshold = 0.5);

/// Candidate range the BIC stage scans: max of the two rules when they
/// disagree, so the larger model stays comparable.
int bic_candidate_bound(const PveResult& pve, double variance_threshold = 0.5);

}  // namespace cde
