#include "cde/latent_models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cde/parallel.hpp"
#include "cde/stats.hpp"

namespace cde {

using stats::sigmoid;

std::string to_string(ModelClass c) {
    switch (c) {
        case ModelClass::Centering: return "centering";
        case ModelClass::Agm: return "agm";
        case ModelClass::Irt: return "irt";
    }
    return "?";
}

ModelClass model_class_from_string(const std::string& s) {
    if (s == "centering") return ModelClass::Centering;
    if (s == "agm") return ModelClass::Agm;
    if (s == "irt") return ModelClass::Irt;
    throw Error("unknown model class: " + s);
}

namespace {

struct ObsLists {
    // per-column student lists and per-student column lists, fixed order
    std::vector<std::vector<int>> col_students;
    std::vector<std::vector<int>> row_cols;
    long n_obs = 0;

    explicit ObsLists(const CourseResponseMatrix& m) {
        const int S = static_cast<int>(m.n_students());
        const int C = static_cast<int>(m.n_courses());
        col_students.resize(static_cast<size_t>(C));
        row_cols.resize(static_cast<size_t>(S));
        for (int i = 0; i < S; ++i)
            for (int j = 0; j < C; ++j)
                if (m.observed(i, j)) {
                    col_students[static_cast<size_t>(j)].push_back(i);
                    row_cols[static_cast<size_t>(i)].push_back(j);
                    ++n_obs;
                }
    }
};

void check_connected(const CourseResponseMatrix& m, const ObsLists& lists) {
    const int S = static_cast<int>(m.n_students());
    const int C = static_cast<int>(m.n_courses());
    std::vector<int> parent(static_cast<size_t>(S + C));
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (parent[static_cast<size_t>(x)] != x) {
            parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
            x = parent[static_cast<size_t>(x)];
        }
        return x;
    };
    auto unite = [&](int a, int b) { parent[static_cast<size_t>(find(a))] = find(b); };
    for (int j = 0; j < C; ++j)
        for (int i : lists.col_students[static_cast<size_t>(j)]) unite(i, S + j);
    std::vector<int> roots;
    for (int x = 0; x < S + C; ++x) {
        // only count nodes that carry observations
        const bool used = x < S ? !lists.row_cols[static_cast<size_t>(x)].empty()
                                : !lists.col_students[static_cast<size_t>(x - S)].empty();
        if (!used) continue;
        const int r = find(x);
        if (std::find(roots.begin(), roots.end(), r) == roots.end()) roots.push_back(r);
    }
    if (roots.size() > 1) {
        std::ostringstream msg;
        msg << "student-course graph is disconnected (" << roots.size() << " components):";
        for (int r : roots) {
            msg << " [";
            int shown = 0;
            for (int x = 0; x < S + C && shown < 3; ++x) {
                const bool used = x < S ? !lists.row_cols[static_cast<size_t>(x)].empty()
                                        : !lists.col_students[static_cast<size_t>(x - S)].empty();
                if (used && find(x) == r) {
                    msg << (x < S ? m.student_ids[static_cast<size_t>(x)]
                                  : m.course_ids[static_cast<size_t>(x - S)])
                        << " ";
                    ++shown;
                }
            }
            msg << "...]";
        }
        throw Error(msg.str());
    }
}

double gaussian_loglik(double sse, double n) {
    const double sigma2 = std::max(sse / n, 1e-12);
    return -0.5 * n * (std::log(2.0 * M_PI * sigma2) + 1.0);
}

}  // namespace

HeuristicEstimates heuristic_estimates(const CourseResponseMatrix& m) {
    const Eigen::Index S = m.n_students();
    const Eigen::Index C = m.n_courses();
    HeuristicEstimates h;
    h.course_means = Vector::Zero(C);
    h.student_gpas = Vector::Zero(S);
    Vector nc = Vector::Zero(C), ns = Vector::Zero(S);
    for (Eigen::Index j = 0; j < C; ++j)
        for (Eigen::Index i = 0; i < S; ++i)
            if (m.observed(i, j)) {
                h.course_means[j] += m.grades(i, j);
                h.student_gpas[i] += m.grades(i, j);
                nc[j] += 1.0;
                ns[i] += 1.0;
            }
    for (Eigen::Index j = 0; j < C; ++j) {
        if (nc[j] == 0) throw Error("course without observations: " + m.course_ids[static_cast<size_t>(j)]);
        h.course_means[j] /= nc[j];
    }
    for (Eigen::Index i = 0; i < S; ++i) {
        if (ns[i] == 0) throw Error("student without observations: " + m.student_ids[static_cast<size_t>(i)]);
        h.student_gpas[i] /= ns[i];
    }
    return h;
}

LatentModel centering_estimates(const CourseResponseMatrix& m) {
    const Eigen::Index S = m.n_students();
    const Eigen::Index C = m.n_courses();
    HeuristicEstimates h = heuristic_estimates(m);

    LatentModel model;
    model.model_class = ModelClass::Centering;
    model.n_dim = 1;
    model.student_ids = m.student_ids;
    model.course_ids = m.course_ids;
    model.theta = Matrix::Zero(S, 1);
    model.delta = Matrix::Zero(C, 1);
    model.alpha = Matrix::Ones(C, 1);

    Vector nc = Vector::Zero(C), ns = Vector::Zero(S);
    double total = 0.0;
    long n_obs = 0;
    for (Eigen::Index j = 0; j < C; ++j)
        for (Eigen::Index i = 0; i < S; ++i)
            if (m.observed(i, j)) {
                model.delta(j, 0) += m.grades(i, j) - h.student_gpas[i];
                model.theta(i, 0) += m.grades(i, j) - h.course_means[j];
                nc[j] += 1.0;
                ns[i] += 1.0;
                total += m.grades(i, j);
                ++n_obs;
            }
    for (Eigen::Index j = 0; j < C; ++j) model.delta(j, 0) /= nc[j];
    for (Eigen::Index i = 0; i < S; ++i) model.theta(i, 0) /= ns[i];
    model.grand_mean = total / static_cast<double>(n_obs);

    double sse = 0.0;
    for (Eigen::Index j = 0; j < C; ++j)
        for (Eigen::Index i = 0; i < S; ++i)
            if (m.observed(i, j)) {
                const double r = m.grades(i, j) - (model.grand_mean + model.theta(i, 0) + model.delta(j, 0));
                sse += r * r;
            }
    model.sigma2 = std::max(sse / static_cast<double>(n_obs), 1e-12);
    model.log_likelihood = gaussian_loglik(sse, static_cast<double>(n_obs));
    model.n_params = S + C + 1;
    return model;
}

LatentModel fit_agm(const CourseResponseMatrix& m, int n_dim, const AgmOptions& opts) {
    const Eigen::Index S = m.n_students();
    const Eigen::Index C = m.n_courses();
    if (n_dim < 1) throw Error("fit_agm: n_dim must be >= 1");
    if (n_dim >= std::min(S, C)) throw Error("fit_agm: n_dim must be below min(|S|, |C|)");
    ObsLists lists(m);
    check_connected(m, lists);

    LatentModel model;
    model.model_class = ModelClass::Agm;
    model.n_dim = n_dim;
    model.student_ids = m.student_ids;
    model.course_ids = m.course_ids;

    const double n_obs = static_cast<double>(lists.n_obs);

    if (n_dim == 1) {
        Vector theta = Vector::Zero(S), delta = Vector::Zero(C);
        for (Eigen::Index j = 0; j < C; ++j) {
            double s = 0.0;
            for (int i : lists.col_students[static_cast<size_t>(j)]) s += m.grades(i, j);
            delta[j] = s / static_cast<double>(lists.col_students[static_cast<size_t>(j)].size());
        }
        double prev = std::numeric_limits<double>::infinity();
        int sweep = 0;
        for (; sweep < opts.max_sweeps; ++sweep) {
            exec::parallel_for(S, [&](std::int64_t i) {
                double s = 0.0;
                for (int j : lists.row_cols[static_cast<size_t>(i)]) s += m.grades(i, j) - delta[j];
                theta[i] = s / static_cast<double>(lists.row_cols[static_cast<size_t>(i)].size());
            });
            const double mean = theta.mean();
            theta.array() -= mean;
            exec::parallel_for(C, [&](std::int64_t j) {
                double s = 0.0;
                for (int i : lists.col_students[static_cast<size_t>(j)]) s += m.grades(i, j) - theta[i];
                delta[j] = s / static_cast<double>(lists.col_students[static_cast<size_t>(j)].size());
            });
            double sse = 0.0;
            for (Eigen::Index j = 0; j < C; ++j)
                for (int i : lists.col_students[static_cast<size_t>(j)]) {
                    const double r = m.grades(i, j) - theta[i] - delta[j];
                    sse += r * r;
                }
            if (std::fabs(prev - sse) <= opts.tol * std::max(1.0, sse)) {
                prev = sse;
                break;
            }
            prev = sse;
        }
        model.theta = theta;
        model.delta = delta;
        model.alpha = Matrix::Ones(C, 1);
        model.epochs = sweep + 1;
        model.sigma2 = std::max(prev / n_obs, 1e-12);
        model.log_likelihood = gaussian_loglik(prev, n_obs);
        model.n_params = S + C + 1;
        return model;
    }

    // multidimensional: g ~ <alpha_c, theta_s> + b_c, ALS with trait whitening
    stats::Rng rng(stats::Rng::derive(opts.seed, 17));
    Matrix theta(S, n_dim), alpha(C, n_dim);
    Vector b(C);
    for (Eigen::Index i = 0; i < S; ++i)
        for (int d = 0; d < n_dim; ++d) theta(i, d) = 0.1 * rng.normal();
    for (Eigen::Index j = 0; j < C; ++j)
        for (int d = 0; d < n_dim; ++d) alpha(j, d) = 1.0 + 0.25 * rng.normal();
    for (Eigen::Index j = 0; j < C; ++j) {
        double s = 0.0;
        for (int i : lists.col_students[static_cast<size_t>(j)]) s += m.grades(i, j);
        b[j] = s / static_cast<double>(lists.col_students[static_cast<size_t>(j)].size());
    }

    double prev = std::numeric_limits<double>::infinity();
    int sweep = 0;
    for (; sweep < opts.max_sweeps; ++sweep) {
        exec::parallel_for(S, [&](std::int64_t i) {
            Matrix ata = Matrix::Zero(n_dim, n_dim);
            Vector aty = Vector::Zero(n_dim);
            for (int j : lists.row_cols[static_cast<size_t>(i)]) {
                const Vector a = alpha.row(j).transpose();
                ata += a * a.transpose();
                aty += a * (m.grades(i, j) - b[j]);
            }
            ata.diagonal().array() += 1e-9;
            theta.row(i) = ata.ldlt().solve(aty).transpose();
        });
        // whiten traits, absorb the shift into the intercepts
        Vector mean = theta.colwise().mean();
        b += alpha * mean;
        theta.rowwise() -= mean.transpose();
        Matrix cov = theta.transpose() * theta / static_cast<double>(S);
        cov.diagonal().array() += 1e-12;
        Eigen::LLT<Matrix> llt(cov);
        Matrix L = llt.matrixL();
        theta = (L.triangularView<Eigen::Lower>().solve(theta.transpose())).transpose();
        alpha = alpha * L;

        exec::parallel_for(C, [&](std::int64_t j) {
            Matrix xtx = Matrix::Zero(n_dim + 1, n_dim + 1);
            Vector xty = Vector::Zero(n_dim + 1);
            Vector row(n_dim + 1);
            for (int i : lists.col_students[static_cast<size_t>(j)]) {
                row.head(n_dim) = theta.row(i).transpose();
                row[n_dim] = 1.0;
                xtx += row * row.transpose();
                xty += row * m.grades(i, j);
            }
            xtx.diagonal().array() += 1e-9;
            Vector sol = xtx.ldlt().solve(xty);
            alpha.row(j) = sol.head(n_dim).transpose();
            b[j] = sol[n_dim];
        });

        double sse = 0.0;
        for (Eigen::Index j = 0; j < C; ++j)
            for (int i : lists.col_students[static_cast<size_t>(j)]) {
                const double r = m.grades(i, j) - alpha.row(j).dot(theta.row(i)) - b[j];
                sse += r * r;
            }
        if (std::fabs(prev - sse) <= opts.tol * std::max(1.0, sse)) {
            prev = sse;
            break;
        }
        prev = sse;
    }

    model.theta = theta;
    model.alpha = alpha;
    // minimum-norm course locations reproducing the fitted intercepts
    model.delta = Matrix::Zero(C, n_dim);
    for (Eigen::Index j = 0; j < C; ++j) {
        const double a2 = alpha.row(j).squaredNorm();
        if (a2 > 1e-12) model.delta.row(j) = (b[j] / a2) * alpha.row(j);
    }
    model.epochs = sweep + 1;
    model.converged = sweep < opts.max_sweeps;
    model.sigma2 = std::max(prev / n_obs, 1e-12);
    model.log_likelihood = gaussian_loglik(prev, n_obs);
    model.n_params = static_cast<long>(S) * n_dim + 2L * static_cast<long>(C) * n_dim + 1;
    return model;
}

namespace {

double irt_loglik_unpenalized(const CourseResponseMatrix& m, const ObsLists& lists,
                              const Matrix& theta, const Matrix& delta, const Matrix& alpha,
                              const std::vector<int>& group) {
    const Eigen::Index S = m.n_students();
    std::vector<double> partial(static_cast<size_t>(S), 0.0);
    exec::parallel_for(S, [&](std::int64_t i) {
        double ll = 0.0;
        for (int j : lists.row_cols[static_cast<size_t>(i)]) {
            const int g = group[static_cast<size_t>(j)];
            const double eta = alpha.row(j).dot(theta.row(i) - delta.row(g));
            const double lp = eta >= 0 ? -std::log1p(std::exp(-eta)) : eta - std::log1p(std::exp(eta));
            const double lq = eta >= 0 ? -eta - std::log1p(std::exp(-eta)) : -std::log1p(std::exp(eta));
            ll += m.grades(i, j) >= 0.5 ? lp : lq;
        }
        partial[static_cast<size_t>(i)] = ll;
    });
    return std::accumulate(partial.begin(), partial.end(), 0.0);
}

}  // namespace

double irt_objective(const CourseResponseMatrix& m, const Matrix& theta, const Matrix& delta,
                     const Matrix& alpha, double ridge, bool two_pl) {
    ObsLists lists(m);
    std::vector<int> group(static_cast<size_t>(m.n_courses()));
    std::iota(group.begin(), group.end(), 0);
    double ll = irt_loglik_unpenalized(m, lists, theta, delta, alpha, group);
    double pen = theta.squaredNorm() + delta.squaredNorm();
    if (two_pl) pen += (alpha.array() - 1.0).square().sum();
    return ll - 0.5 * ridge * pen;
}

void irt_gradient(const CourseResponseMatrix& m, const Matrix& theta, const Matrix& delta,
                  const Matrix& alpha, double ridge, bool two_pl, Matrix& g_theta,
                  Matrix& g_delta, Matrix& g_alpha) {
    const Eigen::Index S = m.n_students();
    const Eigen::Index C = m.n_courses();
    const int n_dim = static_cast<int>(theta.cols());
    g_theta = Matrix::Zero(S, n_dim);
    g_delta = Matrix::Zero(C, n_dim);
    g_alpha = Matrix::Zero(C, n_dim);
    for (Eigen::Index i = 0; i < S; ++i)
        for (Eigen::Index j = 0; j < C; ++j) {
            if (!m.observed(i, j)) continue;
            const double eta = alpha.row(j).dot(theta.row(i) - delta.row(j));
            const double r = (m.grades(i, j) >= 0.5 ? 1.0 : 0.0) - sigmoid(eta);
            g_theta.row(i) += r * alpha.row(j);
            g_delta.row(j) -= r * alpha.row(j);
            if (two_pl) g_alpha.row(j) += r * (theta.row(i) - delta.row(j));
        }
    g_theta -= ridge * theta;
    g_delta -= ridge * delta;
    if (two_pl) g_alpha -= ridge * (alpha.array() - 1.0).matrix();
}

LatentModel fit_irt(const CourseResponseMatrix& m, int n_dim, const IrtOptions& opts) {
    const Eigen::Index S = m.n_students();
    const Eigen::Index C = m.n_courses();
    if (n_dim < 1) throw Error("fit_irt: n_dim must be >= 1");
    if (m.scale.kind != ScaleKind::Binary) throw Error("fit_irt requires a binary matrix");
    const bool two_pl = n_dim > 1;

    ObsLists lists(m);
    check_connected(m, lists);

    std::vector<int> group;
    int n_groups;
    if (!opts.delta_group.empty()) {
        if (opts.delta_group.size() != static_cast<size_t>(C))
            throw Error("fit_irt: delta_group size mismatch");
        group = opts.delta_group;
        n_groups = 1 + *std::max_element(group.begin(), group.end());
    } else {
        group.resize(static_cast<size_t>(C));
        std::iota(group.begin(), group.end(), 0);
        n_groups = static_cast<int>(C);
    }

    LatentModel model;
    model.model_class = ModelClass::Irt;
    model.n_dim = n_dim;
    model.student_ids = m.student_ids;
    model.course_ids = m.course_ids;

    // degenerate / small columns
    std::vector<bool> keep_col(static_cast<size_t>(C), true);
    for (Eigen::Index j = 0; j < C; ++j) {
        int n1 = 0;
        const auto& col = lists.col_students[static_cast<size_t>(j)];
        for (int i : col) n1 += m.grades(i, j) >= 0.5;
        if (col.empty()) throw Error("course without observations: " + m.course_ids[static_cast<size_t>(j)]);
        if (n1 == 0 || n1 == static_cast<int>(col.size())) {
            if (opts.drop_degenerate) {
                keep_col[static_cast<size_t>(j)] = false;
                model.warnings.push_back("degenerate course excluded from fit: " +
                                         m.course_ids[static_cast<size_t>(j)]);
            } else {
                model.warnings.push_back("degenerate course retained under ridge: " +
                                         m.course_ids[static_cast<size_t>(j)]);
            }
        }
        if (static_cast<int>(col.size()) < opts.min_students_warning)
            model.warnings.push_back("course with fewer than " +
                                     std::to_string(opts.min_students_warning) + " students: " +
                                     m.course_ids[static_cast<size_t>(j)]);
    }
    if (opts.drop_degenerate)
        for (auto& cols : lists.row_cols)
            cols.erase(std::remove_if(cols.begin(), cols.end(),
                                      [&](int j) { return !keep_col[static_cast<size_t>(j)]; }),
                       cols.end());

    stats::Rng rng(stats::Rng::derive(opts.seed, 23));
    Matrix theta(S, n_dim), delta(n_groups, n_dim), alpha(C, n_dim);
    for (Eigen::Index i = 0; i < S; ++i)
        for (int d = 0; d < n_dim; ++d) theta(i, d) = 0.1 * rng.normal();
    for (int g = 0; g < n_groups; ++g)
        for (int d = 0; d < n_dim; ++d) delta(g, d) = 0.1 * rng.normal();
    for (Eigen::Index j = 0; j < C; ++j)
        for (int d = 0; d < n_dim; ++d) alpha(j, d) = two_pl ? 1.0 + 0.25 * rng.normal() : 1.0;

    auto penalized = [&](const Matrix& th, const Matrix& de, const Matrix& al) {
        double ll = irt_loglik_unpenalized(m, lists, th, de, al, group);
        double pen = th.squaredNorm() + de.squaredNorm();
        if (two_pl) pen += (al.array() - 1.0).square().sum();
        return ll - 0.5 * opts.ridge * pen;
    };

    double cur = penalized(theta, delta, alpha);
    double rate = 1.0;
    int epoch = 0;
    bool converged = false;
    Matrix g_th(S, n_dim), h_th(S, n_dim);
    Matrix g_de(n_groups, n_dim), h_de(n_groups, n_dim);
    Matrix g_al(C, n_dim), h_al(C, n_dim);
    Matrix col_r(C, 1), col_w(C, 1);
    Matrix col_rt(C, n_dim), col_wt(C, n_dim), col_wt2(C, n_dim);

    for (; epoch < opts.max_epochs; ++epoch) {
        // student-side accumulations (disjoint rows)
        exec::parallel_for(S, [&](std::int64_t i) {
            for (int d = 0; d < n_dim; ++d) {
                g_th(i, d) = -opts.ridge * theta(i, d);
                h_th(i, d) = opts.ridge;
            }
            for (int j : lists.row_cols[static_cast<size_t>(i)]) {
                const int g = group[static_cast<size_t>(j)];
                const double eta = alpha.row(j).dot(theta.row(i) - delta.row(g));
                const double p = sigmoid(eta);
                const double r = (m.grades(i, j) >= 0.5 ? 1.0 : 0.0) - p;
                const double w = std::max(p * (1.0 - p), 1e-12);
                for (int d = 0; d < n_dim; ++d) {
                    const double a = alpha(j, d);
                    g_th(i, d) += r * a;
                    h_th(i, d) += w * a * a;
                }
            }
        });
        // course-side accumulations (disjoint columns)
        exec::parallel_for(C, [&](std::int64_t j) {
            double sr = 0.0, sw = 0.0;
            Vector srt = Vector::Zero(n_dim), swt = Vector::Zero(n_dim), swt2 = Vector::Zero(n_dim);
            const int g = group[static_cast<size_t>(j)];
            for (int i : lists.col_students[static_cast<size_t>(j)]) {
                const double eta = alpha.row(j).dot(theta.row(i) - delta.row(g));
                const double p = sigmoid(eta);
                const double r = (m.grades(i, j) >= 0.5 ? 1.0 : 0.0) - p;
                const double w = std::max(p * (1.0 - p), 1e-12);
                sr += r;
                sw += w;
                if (two_pl)
                    for (int d = 0; d < n_dim; ++d) {
                        srt[d] += r * theta(i, d);
                        swt[d] += w * theta(i, d);
                        swt2[d] += w * theta(i, d) * theta(i, d);
                    }
            }
            col_r(j, 0) = sr;
            col_w(j, 0) = sw;
            if (two_pl)
                for (int d = 0; d < n_dim; ++d) {
                    col_rt(j, d) = srt[d];
                    col_wt(j, d) = swt[d];
                    col_wt2(j, d) = swt2[d];
                }
        });
        // fold columns into delta groups (sequential, fixed order)
        g_de.setZero();
        h_de.setZero();
        for (Eigen::Index j = 0; j < C; ++j) {
            const int g = group[static_cast<size_t>(j)];
            for (int d = 0; d < n_dim; ++d) {
                const double a = alpha(j, d);
                g_de(g, d) -= col_r(j, 0) * a;
                h_de(g, d) += col_w(j, 0) * a * a;
            }
        }
        g_de -= opts.ridge * delta;
        h_de.array() += opts.ridge;
        if (two_pl) {
            for (Eigen::Index j = 0; j < C; ++j) {
                const int g = group[static_cast<size_t>(j)];
                for (int d = 0; d < n_dim; ++d) {
                    g_al(j, d) = col_rt(j, d) - delta(g, d) * col_r(j, 0) -
                                 opts.ridge * (alpha(j, d) - 1.0);
                    h_al(j, d) = std::max(col_wt2(j, d) - 2.0 * delta(g, d) * col_wt(j, d) +
                                              delta(g, d) * delta(g, d) * col_w(j, 0),
                                          0.0) +
                                 opts.ridge;
                }
            }
        }

        double gmax = std::max(g_th.cwiseAbs().maxCoeff(), g_de.cwiseAbs().maxCoeff());
        if (two_pl) gmax = std::max(gmax, g_al.cwiseAbs().maxCoeff());
        if (gmax < opts.grad_tol) {
            converged = true;
            break;
        }

        bool accepted = false;
        while (rate > 1e-13) {
            Matrix nth = theta + rate * g_th.cwiseQuotient(h_th);
            Matrix nde = delta + rate * g_de.cwiseQuotient(h_de);
            Matrix nal = two_pl ? (alpha + rate * g_al.cwiseQuotient(h_al)).eval() : alpha;
            const double nl = penalized(nth, nde, nal);
            if (nl >= cur - 1e-10) {
                theta = std::move(nth);
                delta = std::move(nde);
                if (two_pl) alpha = std::move(nal);
                cur = nl;
                rate = std::min(rate * 1.3, 1.0);
                accepted = true;
                break;
            }
            rate *= 0.5;
        }
        if (!accepted) break;

        // identifiability: zero-mean traits, shift absorbed by the locations
        Vector mean = theta.colwise().mean();
        theta.rowwise() -= mean.transpose();
        delta.rowwise() -= mean.transpose();
    }

    // whiten traits and fix the rotation for multidimensional fits
    if (n_dim > 1) {
        Vector mean = theta.colwise().mean();
        theta.rowwise() -= mean.transpose();
        delta.rowwise() -= mean.transpose();
        Matrix cov = theta.transpose() * theta / static_cast<double>(S);
        cov.diagonal().array() += 1e-12;
        Eigen::LLT<Matrix> llt(cov);
        Matrix L = llt.matrixL();
        theta = L.triangularView<Eigen::Lower>().solve(theta.transpose()).transpose();
        delta = L.triangularView<Eigen::Lower>().solve(delta.transpose()).transpose();
        alpha = alpha * L;
        // rotate so the leading discrimination block is lower triangular
        Matrix top = alpha.topRows(n_dim).transpose();  // n x n
        Eigen::HouseholderQR<Matrix> qr(top);
        Matrix Q = qr.householderQ();
        Matrix R = qr.matrixQR().triangularView<Eigen::Upper>();
        for (int d = 0; d < n_dim; ++d)
            if (R(d, d) < 0) Q.col(d) *= -1.0;
        theta = theta * Q;
        delta = delta * Q;
        alpha = alpha * Q;
    }

    // expand group locations back to per-course rows
    Matrix delta_full(C, n_dim);
    for (Eigen::Index j = 0; j < C; ++j) delta_full.row(j) = delta.row(group[static_cast<size_t>(j)]);

    model.theta = theta;
    model.delta = delta_full;
    model.alpha = alpha;
    model.epochs = epoch;
    model.converged = converged;
    if (!converged)
        model.warnings.push_back("fit_irt stopped before gradient tolerance (epoch cap)");
    model.log_likelihood = irt_loglik_unpenalized(m, lists, theta, delta, alpha, group);
    model.n_params = static_cast<long>(S) * n_dim + static_cast<long>(n_groups) * n_dim +
                     (two_pl ? static_cast<long>(C) * n_dim : 0L);
    return model;
}

double pass_probability(const LatentModel& model, const std::string& student_id,
                        const std::string& course_id) {
    if (model.model_class != ModelClass::Irt)
        throw Error("pass_probability is defined for IRT models only");
    int si = -1, cj = -1;
    for (size_t i = 0; i < model.student_ids.size(); ++i)
        if (model.student_ids[i] == student_id) si = static_cast<int>(i);
    for (size_t j = 0; j < model.course_ids.size(); ++j)
        if (model.course_ids[j] == course_id) cj = static_cast<int>(j);
    if (si < 0) throw Error("unknown student id: " + student_id);
    if (cj < 0) throw Error("unknown course id: " + course_id);
    return sigmoid(model.alpha.row(cj).dot(model.theta.row(si) - model.delta.row(cj)));
}

DifficultyEstimates unidim_difficulty(const LatentModel& model) {
    const Eigen::Index C = model.delta.rows();
    DifficultyEstimates d;
    d.course_ids = model.course_ids;
    d.parent_course = model.course_ids;
    d.term.assign(static_cast<size_t>(C), -1);
    d.raw_projection.resize(C);
    for (Eigen::Index j = 0; j < C; ++j) {
        const double norm = model.alpha.row(j).norm();
        if (norm < 1e-12) {
            d.raw_projection[j] = std::numeric_limits<double>::quiet_NaN();
            d.warnings.push_back("zero discrimination vector for course " +
                                 model.course_ids[static_cast<size_t>(j)]);
            continue;
        }
        d.raw_projection[j] = model.alpha.row(j).dot(model.delta.row(j)) / norm;
    }
    // grade-scale classes measure "easiness" on the raw projection; emit one
    // consistent direction (higher = harder) across classes
    const double sign = model.model_class == ModelClass::Irt ? 1.0 : -1.0;
    d.difficulty = sign * d.raw_projection;
    return d;
}

Vector student_scalar_scores(const LatentModel& model) {
    if (model.n_dim == 1) return model.theta.col(0);
    Eigen::JacobiSVD<Matrix> svd(model.alpha, Eigen::ComputeThinV);
    Vector v1 = svd.matrixV().col(0);
    if (v1.sum() < 0) v1 = -v1;  // orient toward positive loadings
    return model.theta * v1;
}

double bic(const LatentModel& model, const CourseResponseMatrix& m) {
    return static_cast<double>(model.n_params) * std::log(static_cast<double>(m.n_students())) -
           2.0 * model.log_likelihood;
}

// ---------------------------------------------------------------------------
// Marginal-likelihood BIC for IRT (EM over Gauss-Hermite quadrature)
// ---------------------------------------------------------------------------

namespace {

struct GaussHermite {
    std::vector<double> x, w;  // weight function: standard normal density
    explicit GaussHermite(int n) : x(n), w(n) {
        // Golub-Welsch via Newton on probabilists' Hermite polynomials
        for (int i = 0; i < n; ++i) {
            // initial guesses: roots are near inverse-CDF spread
            double t = stats::norm_inv((i + 0.75) / (n + 0.5)) * std::sqrt(1.0);
            double p0, p1;
            for (int it = 0; it < 200; ++it) {
                p0 = 1.0;
                p1 = t;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = t * p1 - (k - 1.0) * p0;
                    p0 = p1;
                    p1 = p2;
                }
                const double dp = static_cast<double>(n) * p0;  // He_n' = n He_{n-1}
                const double step = p1 / dp;
                t -= step;
                if (std::fabs(step) < 1e-14) break;
            }
            x[static_cast<size_t>(i)] = t;
            const double hn1 = p0;  // He_{n-1}(t)
            // weights: (n-1)! / (n He_{n-1}(t)^2) for probabilists' polynomials
            double lfact = 0.0;
            for (int k = 2; k <= n - 1; ++k) lfact += std::log(static_cast<double>(k));
            w[static_cast<size_t>(i)] =
                std::exp(lfact - std::log(static_cast<double>(n)) - 2.0 * std::log(std::fabs(hn1)));
        }
        // normalize against fp drift
        double s = std::accumulate(w.begin(), w.end(), 0.0);
        for (auto& wi : w) wi /= s;
    }
};

}  // namespace

std::vector<IrtBicEntry> irt_marginal_bic(const CourseResponseMatrix& m,
                                          const std::vector<int>& dims,
                                          const MarginalBicOptions& opts) {
    if (m.scale.kind != ScaleKind::Binary) throw Error("irt_marginal_bic requires binary data");
    const Eigen::Index S = m.n_students();
    const Eigen::Index C = m.n_courses();
    ObsLists lists(m);

    std::vector<IrtBicEntry> out;
    for (int n_dim : dims) {
        const bool two_pl = n_dim > 1;
        const int q1 = n_dim == 1 ? opts.quad_points : 15;
        GaussHermite gh(q1);
        // tensor nodes
        Eigen::Index Q = 1;
        for (int d = 0; d < n_dim; ++d) Q *= q1;
        Matrix nodes(Q, n_dim);
        Vector wts(Q);
        for (Eigen::Index q = 0; q < Q; ++q) {
            Eigen::Index rem = q;
            double wq = 1.0;
            for (int d = 0; d < n_dim; ++d) {
                const int idx = static_cast<int>(rem % q1);
                rem /= q1;
                nodes(q, d) = gh.x[static_cast<size_t>(idx)];
                wq *= gh.w[static_cast<size_t>(idx)];
            }
            wts[q] = wq;
        }

        stats::Rng rng(stats::Rng::derive(opts.seed, 31 + static_cast<std::uint64_t>(n_dim)));
        Matrix alpha(C, n_dim);
        Vector intercept(C);  // eta = alpha . node + intercept, intercept = -<alpha, delta>
        for (Eigen::Index j = 0; j < C; ++j) {
            for (int d = 0; d < n_dim; ++d)
                alpha(j, d) = two_pl ? 1.0 + 0.25 * rng.normal() : 1.0;
            int n1 = 0;
            const auto& col = lists.col_students[static_cast<size_t>(j)];
            for (int i : col) n1 += m.grades(i, j) >= 0.5;
            const double p = std::clamp(static_cast<double>(n1) / std::max<size_t>(col.size(), 1),
                                        1e-3, 1.0 - 1e-3);
            intercept[j] = std::log(p / (1.0 - p));
        }

        double prev_ll = -std::numeric_limits<double>::infinity();
        double mll = prev_ll;
        int it = 0;
        Matrix post(S, Q);
        Matrix r1(Q, C), n1m(Q, C);
        for (; it < opts.max_iter; ++it) {
            Matrix lp(Q, C), lq(Q, C);
            for (Eigen::Index q = 0; q < Q; ++q)
                for (Eigen::Index j = 0; j < C; ++j) {
                    const double eta = alpha.row(j).dot(nodes.row(q)) + intercept[j];
                    lp(q, j) = eta >= 0 ? -std::log1p(std::exp(-eta)) : eta - std::log1p(std::exp(eta));
                    lq(q, j) = eta >= 0 ? -eta - std::log1p(std::exp(-eta)) : -std::log1p(std::exp(eta));
                }
            std::vector<double> partial(static_cast<size_t>(S), 0.0);
            exec::parallel_for(S, [&](std::int64_t i) {
                double best = -std::numeric_limits<double>::infinity();
                for (Eigen::Index q = 0; q < Q; ++q) {
                    double a = 0.0;
                    for (int j : lists.row_cols[static_cast<size_t>(i)])
                        a += m.grades(i, j) >= 0.5 ? lp(q, j) : lq(q, j);
                    post(i, q) = a;
                    best = std::max(best, a);
                }
                double denom = 0.0;
                for (Eigen::Index q = 0; q < Q; ++q) {
                    post(i, q) = std::exp(post(i, q) - best) * wts[q];
                    denom += post(i, q);
                }
                partial[static_cast<size_t>(i)] = best + std::log(denom);
                for (Eigen::Index q = 0; q < Q; ++q) post(i, q) /= denom;
            });
            mll = std::accumulate(partial.begin(), partial.end(), 0.0);

            exec::parallel_for(C, [&](std::int64_t j) {
                for (Eigen::Index q = 0; q < Q; ++q) {
                    r1(q, j) = 0.0;
                    n1m(q, j) = 0.0;
                }
                for (int i : lists.col_students[static_cast<size_t>(j)]) {
                    const bool pass = m.grades(i, j) >= 0.5;
                    for (Eigen::Index q = 0; q < Q; ++q) {
                        n1m(q, j) += post(i, q);
                        if (pass) r1(q, j) += post(i, q);
                    }
                }
            });

            // M-step: per-course logistic Newton over the nodes
            exec::parallel_for(C, [&](std::int64_t j) {
                Vector beta(n_dim + 1);
                beta.head(n_dim) = alpha.row(j).transpose();
                beta[n_dim] = intercept[j];
                for (int nw = 0; nw < 50; ++nw) {
                    Vector grad = Vector::Zero(n_dim + 1);
                    Matrix hess = Matrix::Zero(n_dim + 1, n_dim + 1);
                    Vector row(n_dim + 1);
                    for (Eigen::Index q = 0; q < Q; ++q) {
                        row.head(n_dim) = nodes.row(q).transpose();
                        row[n_dim] = 1.0;
                        const double eta = row.dot(beta);
                        const double p = sigmoid(eta);
                        grad += (r1(q, j) - n1m(q, j) * p) * row;
                        hess += std::max(n1m(q, j) * p * (1.0 - p), 1e-12) * row * row.transpose();
                    }
                    if (!two_pl) {
                        // Rasch: only the intercept moves
                        const double step = grad[n_dim] / hess(n_dim, n_dim);
                        beta[n_dim] += step;
                        if (std::fabs(step) < 1e-11) break;
                    } else {
                        hess.diagonal().array() += 1e-9;
                        Vector step = hess.ldlt().solve(grad);
                        beta += step;
                        if (step.cwiseAbs().maxCoeff() < 1e-11) break;
                    }
                }
                alpha.row(j) = beta.head(n_dim).transpose();
                intercept[j] = beta[n_dim];
            });

            if (std::fabs(mll - prev_ll) < opts.tol * std::max(1.0, std::fabs(mll))) break;
            prev_ll = mll;
        }

        IrtBicEntry e;
        e.n_dim = n_dim;
        e.marginal_ll = mll;
        e.k_items = two_pl ? 2L * static_cast<long>(C) * n_dim : static_cast<long>(C);
        e.bic = static_cast<double>(e.k_items) * std::log(static_cast<double>(S)) - 2.0 * mll;
        e.em_iterations = it + 1;
        out.push_back(e);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Time-resolved fitting
// ---------------------------------------------------------------------------

namespace {

struct OfferingPlan {
    CourseResponseMatrix expanded;
    std::vector<std::string> parent;
    std::vector<int> term;  // -1 for the merged course-level column
};

OfferingPlan expand_offerings(const CourseResponseMatrix& m, int min_size, Warnings* warnings) {
    if (!m.term_of_grade) throw Error("fit_time_resolved requires term_of_grade");
    const Eigen::Index S = m.n_students();
    const Eigen::Index C = m.n_courses();
    const IntMatrix& terms = *m.term_of_grade;

    OfferingPlan plan;
    std::vector<std::vector<std::pair<int, Eigen::Index>>> col_map;  // per new column: (term, course)
    std::vector<std::vector<int>> col_of_cell(static_cast<size_t>(C));

    for (Eigen::Index j = 0; j < C; ++j) {
        std::map<int, int> counts;
        for (Eigen::Index i = 0; i < S; ++i)
            if (m.observed(i, j)) ++counts[terms(i, j)];
        std::vector<int> big;
        int small_total = 0;
        for (const auto& [t, n] : counts)
            if (n >= min_size) big.push_back(t);
            else small_total += n;
        for (int t : big) {
            plan.parent.push_back(m.course_ids[static_cast<size_t>(j)]);
            plan.term.push_back(t);
        }
        if (small_total > 0 || big.empty()) {
            plan.parent.push_back(m.course_ids[static_cast<size_t>(j)]);
            plan.term.push_back(-1);
            if (small_total > 0 && warnings)
                warnings->push_back("course " + m.course_ids[static_cast<size_t>(j)] + ": " +
                                    std::to_string(small_total) +
                                    " grades in offerings below the size threshold merged into the course-level parameter");
        }
    }

    const Eigen::Index CC = static_cast<Eigen::Index>(plan.parent.size());
    plan.expanded.student_ids = m.student_ids;
    plan.expanded.scale = m.scale;
    plan.expanded.grades = Matrix::Zero(S, CC);
    plan.expanded.observed = BoolMatrix::Constant(S, CC, false);
    for (Eigen::Index jj = 0; jj < CC; ++jj)
        plan.expanded.course_ids.push_back(plan.parent[static_cast<size_t>(jj)] +
                                           (plan.term[static_cast<size_t>(jj)] >= 0
                                                ? "@t" + std::to_string(plan.term[static_cast<size_t>(jj)])
                                                : "@pooled"));

    for (Eigen::Index j = 0; j < C; ++j) {
        // columns of this course in the expanded matrix
        std::map<int, Eigen::Index> by_term;
        Eigen::Index pooled = -1;
        for (Eigen::Index jj = 0; jj < CC; ++jj)
            if (plan.parent[static_cast<size_t>(jj)] == m.course_ids[static_cast<size_t>(j)]) {
                if (plan.term[static_cast<size_t>(jj)] >= 0)
                    by_term[plan.term[static_cast<size_t>(jj)]] = jj;
                else
                    pooled = jj;
            }
        for (Eigen::Index i = 0; i < S; ++i) {
            if (!m.observed(i, j)) continue;
            const int t = terms(i, j);
            auto it = by_term.find(t);
            const Eigen::Index target = it != by_term.end() ? it->second : pooled;
            plan.expanded.grades(i, target) = m.grades(i, j);
            plan.expanded.observed(i, target) = true;
        }
    }
    return plan;
}

Vector difficulty_of_fit(const CourseResponseMatrix& mm, const TimeResolvedOptions& opts,
                         std::uint64_t seed) {
    LatentModel model;
    switch (opts.model_class) {
        case ModelClass::Irt: {
            IrtOptions io;
            io.seed = seed;
            io.min_students_warning = 0;
            model = fit_irt(mm, opts.n_dim, io);
            break;
        }
        case ModelClass::Agm: {
            AgmOptions ao;
            ao.seed = seed;
            model = fit_agm(mm, opts.n_dim, ao);
            break;
        }
        case ModelClass::Centering:
            model = centering_estimates(mm);
            break;
    }
    return unidim_difficulty(model).difficulty;
}

}  // namespace

DifficultyEstimates fit_time_resolved(const CourseResponseMatrix& m,
                                      const TimeResolvedOptions& opts) {
    DifficultyEstimates out;
    OfferingPlan plan = expand_offerings(m, opts.min_offering_size, &out.warnings);

    bool any_offering = false;
    for (int t : plan.term) any_offering |= t >= 0;
    if (!any_offering)
        out.warnings.push_back("no offering reached the size threshold; result is a per-course fit");

    out.course_ids = plan.expanded.course_ids;
    out.parent_course = plan.parent;
    out.term = plan.term;
    out.difficulty = difficulty_of_fit(plan.expanded, opts, opts.seed);
    out.raw_projection = out.difficulty;  // orientation applied inside

    const Eigen::Index S = plan.expanded.n_students();
    const Eigen::Index CC = plan.expanded.grades.cols();
    if (opts.bootstrap_reps > 0) {
        Matrix boot(opts.bootstrap_reps, CC);
        std::vector<int> failed(static_cast<size_t>(opts.bootstrap_reps), 0);
        exec::parallel_for(opts.bootstrap_reps, [&](std::int64_t r) {
            stats::Rng rng(stats::Rng::derive(opts.seed, 1000 + static_cast<std::uint64_t>(r)));
            CourseResponseMatrix res;
            res.course_ids = plan.expanded.course_ids;
            res.scale = plan.expanded.scale;
            res.grades.resize(S, CC);
            res.observed.resize(S, CC);
            for (Eigen::Index i = 0; i < S; ++i) {
                const Eigen::Index src = static_cast<Eigen::Index>(rng.index(S));
                res.student_ids.push_back("b" + std::to_string(i));
                res.grades.row(i) = plan.expanded.grades.row(src);
                res.observed.row(i) = plan.expanded.observed.row(src);
            }
            try {
                boot.row(r) = difficulty_of_fit(res, opts, stats::Rng::derive(opts.seed, 2000 + static_cast<std::uint64_t>(r))).transpose();
            } catch (const Error&) {
                failed[static_cast<size_t>(r)] = 1;
                boot.row(r).setConstant(std::numeric_limits<double>::quiet_NaN());
            }
        });
        int n_failed = std::accumulate(failed.begin(), failed.end(), 0);
        if (n_failed > 0)
            out.warnings.push_back(std::to_string(n_failed) + " bootstrap replicates failed and were skipped");
        out.ci_lower.resize(CC);
        out.ci_upper.resize(CC);
        const double a = 0.5 * (1.0 - opts.ci_level);
        for (Eigen::Index j = 0; j < CC; ++j) {
            std::vector<double> v;
            for (int r = 0; r < opts.bootstrap_reps; ++r)
                if (!failed[static_cast<size_t>(r)]) v.push_back(boot(r, j));
            std::sort(v.begin(), v.end());
            if (v.empty()) {
                out.ci_lower[j] = out.ci_upper[j] = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            auto quant = [&](double p) {
                const double idx = p * (static_cast<double>(v.size()) - 1.0);
                const size_t lo = static_cast<size_t>(std::floor(idx));
                const size_t hi = std::min(lo + 1, v.size() - 1);
                const double f = idx - std::floor(idx);
                return (1.0 - f) * v[lo] + f * v[hi];
            };
            out.ci_lower[j] = quant(a);
            out.ci_upper[j] = quant(1.0 - a);
        }
        out.ci_level = opts.ci_level;
        out.has_ci = true;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
    const Eigen::Index r = static_cast<Eigen::Index>(j.size());
    const Eigen::Index c = r > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index k = 0; k < c; ++k) m(i, k) = j[static_cast<size_t>(i)][static_cast<size_t>(k)].get<double>();
    return m;
}

}  // namespace

std::string serialize_model(const LatentModel& model) {
    nlohmann::json j;
    j["format"] = "cde-model";
    j["version"] = 1;
    j["model_class"] = to_string(model.model_class);
    j["n_dim"] = model.n_dim;
    j["student_ids"] = model.student_ids;
    j["course_ids"] = model.course_ids;
    j["theta"] = matrix_to_json(model.theta);
    j["delta"] = matrix_to_json(model.delta);
    j["alpha"] = matrix_to_json(model.alpha);
    j["sigma2"] = model.sigma2;
    j["grand_mean"] = model.grand_mean;
    j["log_likelihood"] = model.log_likelihood;
    j["n_params"] = model.n_params;
    j["converged"] = model.converged;
    j["epochs"] = model.epochs;
    j["warnings"] = model.warnings;
    return j.dump(2);
}

LatentModel deserialize_model(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.value("format", "") != "cde-model") throw Error("not a cde model document");
    if (j.value("version", 0) != 1) throw Error("unsupported model version");
    LatentModel model;
    model.model_class = model_class_from_string(j["model_class"].get<std::string>());
    model.n_dim = j["n_dim"].get<int>();
    model.student_ids = j["student_ids"].get<std::vector<std::string>>();
    model.course_ids = j["course_ids"].get<std::vector<std::string>>();
    model.theta = matrix_from_json(j["theta"]);
    model.delta = matrix_from_json(j["delta"]);
    model.alpha = matrix_from_json(j["alpha"]);
    model.sigma2 = j["sigma2"].get<double>();
    model.grand_mean = j["grand_mean"].get<double>();
    model.log_likelihood = j["log_likelihood"].get<double>();
    model.n_params = j["n_params"].get<long>();
    model.converged = j["converged"].get<bool>();
    model.epochs = j["epochs"].get<int>();
    model.warnings = j["warnings"].get<Warnings>();
    return model;
}

void save_model(const LatentModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write model: " + path);
    out << serialize_model(model);
}

LatentModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open model: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return deserialize_model(ss.str());
}

}  // namespace cde
