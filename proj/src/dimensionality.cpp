#include "cde/dimensionality.hpp"

#include <cmath>

namespace cde {

PveResult pca_pve(const CorrelationMatrix& corr) {
    const Matrix& V = corr.values;
    if ((V - V.transpose()).cwiseAbs().maxCoeff() > 1e-9)
        throw Error("pca_pve: correlation matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(V);
    if (eig.eigenvalues().minCoeff() < -1e-8)
        throw Error("pca_pve: correlation matrix is not PSD (repair it first)");

    PveResult res;
    const Eigen::Index C = V.rows();
    res.eigenvalues = eig.eigenvalues().reverse();
    for (Eigen::Index i = 0; i < C; ++i)
        if (res.eigenvalues[i] < 1e-10) res.eigenvalues[i] = 0.0;
    const double total = res.eigenvalues.sum();
    res.pve = res.eigenvalues / (total > 0 ? total : 1.0);
    res.cumulative.resize(C);
    double run = 0.0;
    for (Eigen::Index i = 0; i < C; ++i) {
        run += res.pve[i];
        res.cumulative[i] = run;
    }

    // threshold rule at the default 50%
    res.k_threshold = static_cast<int>(C);
    for (Eigen::Index i = 0; i < C; ++i)
        if (res.cumulative[i] >= 0.5) {
            res.k_threshold = static_cast<int>(i) + 1;
            break;
        }

    // elbow: biggest positive curvature of the log-spectrum marks the first
    // flat component; keep everything before it
    res.k_elbow = static_cast<int>(C);
    if (C >= 3) {
        double best = 0.0;
        int best_i = -1;
        auto lg = [&](Eigen::Index i) { return std::log(std::max(res.eigenvalues[i], 1e-12)); };
        for (Eigen::Index i = 1; i + 1 < C; ++i) {
            const double d = lg(i - 1) - 2.0 * lg(i) + lg(i + 1);
            if (d > best + 1e-12) {
                best = d;
                best_i = static_cast<int>(i);
            }
        }
        if (best_i >= 1 && best > 0.1) res.k_elbow = std::max(1, best_i);
    }
    res.suggested_upper_bound = std::max(1, std::min(res.k_threshold, res.k_elbow));
    return res;
}

int dim_upper_bound(const PveResult& pve, double variance_threshold) {
    const Eigen::Index C = pve.pve.size();
    int k_threshold = static_cast<int>(C);
    for (Eigen::Index i = 0; i < C; ++i)
        if (pve.cumulative[i] >= variance_threshold) {
            k_threshold = static_cast<int>(i) + 1;
            break;
        }
    return std::max(1, std::min(k_threshold, pve.k_elbow));
}

int bic_candidate_bound(const PveResult& pve, double variance_threshold) {
    const Eigen::Index C = pve.pve.size();
    int k_threshold = static_cast<int>(C);
    for (Eigen::Index i = 0; i < C; ++i)
        if (pve.cumulative[i] >= variance_threshold) {
            k_threshold = static_cast<int>(i) + 1;
            break;
        }
    int k_elbow = pve.k_elbow;
    // uncapped elbow (flat spectrum) should not force fitting C dimensions
    if (k_elbow >= static_cast<int>(C)) k_elbow = k_threshold;
    return std::max(1, std::max(k_threshold, k_elbow));
}

}  // namespace cde
