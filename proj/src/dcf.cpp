#include "cde/dcf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <map>

#include "cde/parallel.hpp"
#include "cde/stats.hpp"

namespace cde {

DcfResult dcf_course(const CourseResponseMatrix& m, const LatentModel& model,
                     const std::string& course_id, const GroupAssignment& groups,
                     const DcfOptions& opts) {
    const int c = m.course_index(course_id);
    if (model.theta.rows() != m.n_students()) throw Error("model/matrix shape mismatch");

    std::map<std::string, int> gmap;
    for (size_t i = 0; i < groups.student_ids.size(); ++i) {
        if (!gmap.emplace(groups.student_ids[i], groups.group[i]).second)
            throw Error("duplicate student in group assignment: " + groups.student_ids[i]);
    }
    for (const auto& [sid, g] : gmap)
        (void)m.student_index(sid);  // every referenced student must exist

    DcfResult res;
    res.course_id = course_id;

    std::vector<int> rows;
    std::vector<double> gcode;
    for (Eigen::Index i = 0; i < m.n_students(); ++i) {
        if (!m.observed(i, c)) continue;
        auto it = gmap.find(m.student_ids[static_cast<size_t>(i)]);
        if (it == gmap.end()) continue;
        rows.push_back(static_cast<int>(i));
        gcode.push_back(static_cast<double>(it->second));
        (it->second < 0 ? res.n_group_minus : res.n_group_plus)++;
    }
    if (res.n_group_minus < opts.min_group_size || res.n_group_plus < opts.min_group_size) {
        res.skipped = true;
        res.note = "group too small (" + std::to_string(res.n_group_minus) + " / " +
                   std::to_string(res.n_group_plus) + " observed)";
        return res;
    }

    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    const int n_dim = model.n_dim;
    const bool free_trait_coef = n_dim > 1;
    const Eigen::Index k = 2 + (free_trait_coef ? n_dim : 0);

    Matrix X(n, k);
    Vector offset = Vector::Zero(n);
    Vector u = student_scalar_scores(model);
    for (Eigen::Index r = 0; r < n; ++r) {
        const int i = rows[static_cast<size_t>(r)];
        X(r, 0) = 1.0;
        X(r, 1) = gcode[static_cast<size_t>(r)];
        if (free_trait_coef)
            for (int d = 0; d < n_dim; ++d) X(r, 2 + d) = model.theta(i, d);
        else
            offset[r] = model.theta(i, 0);  // one-dimensional: coefficient fixed at 1
    }

    if (model.model_class == ModelClass::Irt) {
        Eigen::VectorXi y(n);
        for (Eigen::Index r = 0; r < n; ++r)
            y[r] = m.grades(rows[static_cast<size_t>(r)], c) >= 0.5 ? 1 : 0;
        stats::LogisticFit fit = stats::logistic_regression(X, y, offset, opts.ridge);
        res.beta0 = fit.beta[0];
        res.beta1 = fit.beta[1];
        res.p_raw = fit.p_values[1];
        res.separation_warning = fit.separation_warning;
        if (free_trait_coef) res.beta2 = fit.beta.tail(n_dim);
        else res.beta2 = Vector::Ones(1);
    } else {
        Vector y(n);
        for (Eigen::Index r = 0; r < n; ++r)
            y[r] = m.grades(rows[static_cast<size_t>(r)], c) - offset[r];
        stats::OlsFit fit = stats::ols(X, y);
        res.beta0 = fit.beta[0];
        res.beta1 = fit.beta[1];
        res.p_raw = fit.p_values[1];
        if (free_trait_coef) res.beta2 = fit.beta.tail(n_dim);
        else res.beta2 = Vector::Ones(1);
    }
    return res;
}

BhResult bh_correct(const std::vector<double>& p_values, double q) {
    const size_t n = p_values.size();
    for (double p : p_values)
        if (p < 0.0 || p > 1.0) throw Error("bh_correct: p-values must lie in [0, 1]");
    BhResult res;
    res.adjusted.assign(n, 1.0);
    res.reject.assign(n, false);
    if (n == 0) return res;
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return p_values[a] < p_values[b]; });
    double running = 1.0;
    for (size_t r = n; r-- > 0;) {
        const double adj = std::min(running, p_values[order[r]] * static_cast<double>(n) /
                                                 static_cast<double>(r + 1));
        running = adj;
        res.adjusted[order[r]] = std::min(adj, 1.0);
    }
    for (size_t i = 0; i < n; ++i) res.reject[i] = res.adjusted[i] <= q;
    return res;
}

std::vector<DcfResult> dcf_all(const CourseResponseMatrix& m, const LatentModel& model,
                               const GroupAssignment& groups, double q, const DcfOptions& opts) {
    const Eigen::Index C = m.n_courses();
    std::vector<DcfResult> all(static_cast<size_t>(C));
    exec::parallel_for(C, [&](std::int64_t j) {
        all[static_cast<size_t>(j)] =
            dcf_course(m, model, m.course_ids[static_cast<size_t>(j)], groups, opts);
    });

    std::vector<double> ps;
    std::vector<size_t> idx;
    for (size_t j = 0; j < all.size(); ++j)
        if (!all[j].skipped) {
            ps.push_back(all[j].p_raw);
            idx.push_back(j);
        }
    BhResult bh = bh_correct(ps, q);
    for (size_t r = 0; r < idx.size(); ++r) {
        all[idx[r]].p_bh = bh.adjusted[r];
        all[idx[r]].significant = bh.reject[r];
    }
    std::sort(all.begin(), all.end(), [](const DcfResult& a, const DcfResult& b) {
        if (a.skipped != b.skipped) return !a.skipped;
        return std::fabs(a.beta1) > std::fabs(b.beta1);
    });
    return all;
}

}  // namespace cde
