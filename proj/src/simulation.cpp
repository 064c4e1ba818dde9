#include "cde/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cde/stats.hpp"

namespace cde {

using stats::Rng;
using stats::sigmoid;

namespace {

constexpr std::uint64_t kTraitStream = 1;
constexpr std::uint64_t kCellStream = 2;
constexpr std::uint64_t kScheduleStream = 3;

void draw_traits(const SimulationConfig& cfg, Rng& rng, Matrix& theta, Matrix& delta,
                 Matrix& alpha) {
    const int S = cfg.n_students, C = cfg.n_courses, n = cfg.n_dim;
    theta.resize(S, n);
    delta.resize(C, n);
    alpha.resize(C, n);
    for (int i = 0; i < S; ++i)
        for (int d = 0; d < n; ++d) theta(i, d) = rng.normal();
    for (int j = 0; j < C; ++j)
        for (int d = 0; d < n; ++d) delta(j, d) = rng.normal();
    if (n == 1) {
        alpha.setOnes();
    } else {
        // general dimension plus a signed two-cluster second dimension
        const int n_pos = static_cast<int>(std::floor(cfg.alpha2_pos_frac * C));
        for (int j = 0; j < C; ++j) {
            alpha(j, 0) = cfg.alpha1_scale * std::exp(cfg.alpha1_jitter * rng.normal());
            const double base = j < n_pos ? cfg.alpha2_pos : -cfg.alpha2_neg;
            alpha(j, 1) = base + cfg.alpha2_jitter * rng.normal();
            for (int d = 2; d < n; ++d) alpha(j, d) = 1.0;
        }
    }
}

std::vector<std::string> make_ids(const std::string& prefix, int n) {
    std::vector<std::string> ids;
    ids.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i + 1));
    return ids;
}

}  // namespace

SimulatedData simulate_irt(const SimulationConfig& cfg) {
    if (cfg.n_students < 2 || cfg.n_courses < 2) throw Error("simulate_irt: config too small");
    SimulatedData out;
    Rng traits(Rng::derive(cfg.seed, kTraitStream));
    draw_traits(cfg, traits, out.theta, out.delta, out.alpha);

    const int S = cfg.n_students, C = cfg.n_courses;
    out.matrix.student_ids = make_ids("s", S);
    out.matrix.course_ids = make_ids("c", C);
    out.matrix.grades.resize(S, C);
    out.matrix.observed = BoolMatrix::Constant(S, C, true);
    out.matrix.scale.kind = cfg.grade_kind;
    out.matrix.scale.lowest_grade = 0.0;
    out.matrix.scale.direction = Direction::Ascending;
    if (cfg.grade_kind == ScaleKind::Binary) out.matrix.scale.pass_threshold = 0.5;

    Rng cells(Rng::derive(cfg.seed, kCellStream));
    for (int i = 0; i < S; ++i)
        for (int j = 0; j < C; ++j) {
            const double z = out.alpha.row(j).dot(out.theta.row(i) - out.delta.row(j));
            if (cfg.grade_kind == ScaleKind::Binary) {
                out.matrix.grades(i, j) = cells.uniform() < sigmoid(z) ? 1.0 : 0.0;
            } else {
                const double noisy = z + cfg.noise_sigma * cells.normal();
                out.matrix.grades(i, j) = std::clamp(50.0 + 10.0 * noisy, 0.0, 100.0);
            }
        }
    return out;
}

AmputationResult ampute_mar(const CourseResponseMatrix& m, double tau, double alpha, double beta,
                            std::uint64_t seed) {
    if (m.n_missing() > 0) throw Error("ampute_mar expects a complete matrix");
    if (alpha < 0 || alpha > 1 || beta < 0 || beta > 1)
        throw Error("ampute_mar: alpha and beta must lie in [0, 1]");
    const Eigen::Index S = m.n_students();
    const Eigen::Index C = m.n_courses();
    // normalized [0, 1] performance scale: binary as-is, [0,100] grades / 100
    const double scale = m.scale.kind == ScaleKind::Binary ? 1.0 : 0.01;
    Vector mu_s = m.grades.rowwise().mean() * scale;
    Vector mu_c = m.grades.colwise().mean().transpose() * scale;

    AmputationResult res;
    Rng rng(Rng::derive(seed, 40));
    CourseResponseMatrix masked = m;
    for (Eigen::Index i = 0; i < S; ++i)
        for (Eigen::Index j = 0; j < C; ++j) {
            const double p = (mu_s[i] < tau || mu_c[j] < tau) ? alpha : beta;
            if (rng.uniform() < p) masked.observed(i, j) = false;
        }
    // fully-missing rows/columns get their masks re-drawn
    for (int attempt = 0;; ++attempt) {
        bool ok = true;
        for (Eigen::Index i = 0; i < S; ++i) {
            bool any = false;
            for (Eigen::Index j = 0; j < C; ++j) any |= masked.observed(i, j);
            if (!any) {
                ok = false;
                for (Eigen::Index j = 0; j < C; ++j) {
                    const double p = (mu_s[i] < tau || mu_c[j] < tau) ? alpha : beta;
                    masked.observed(i, j) = rng.uniform() >= p;
                }
            }
        }
        for (Eigen::Index j = 0; j < C; ++j) {
            bool any = false;
            for (Eigen::Index i = 0; i < S; ++i) any |= masked.observed(i, j);
            if (!any) {
                ok = false;
                for (Eigen::Index i = 0; i < S; ++i) {
                    const double p = (mu_s[i] < tau || mu_c[j] < tau) ? alpha : beta;
                    masked.observed(i, j) = rng.uniform() >= p;
                }
            }
        }
        if (ok) {
            res.redraws = attempt;
            break;
        }
        if (attempt >= 10) throw Error("ampute_mar: could not avoid empty rows/columns in 10 redraws");
    }
    long removed = 0;
    for (Eigen::Index i = 0; i < S; ++i)
        for (Eigen::Index j = 0; j < C; ++j) removed += !masked.observed(i, j);
    res.matrix = std::move(masked);
    res.realized_missing_rate = static_cast<double>(removed) / static_cast<double>(S * C);
    return res;
}

DriftData simulate_drift(const SimulationConfig& cfg, const DriftConfig& drift) {
    if (cfg.n_dim != 1) throw Error("simulate_drift supports one-dimensional traits");
    const int S = cfg.n_students, C = cfg.n_courses, T = drift.n_terms;
    if (T < 1) throw Error("simulate_drift: n_terms must be >= 1");
    if (drift.scenario == DriftScenario::CourseDriftWithShock &&
        (drift.shock_term < 0 || drift.shock_term >= T))
        throw Error("simulate_drift: shock_term outside the term range");

    DriftData out;
    Rng traits(Rng::derive(cfg.seed, kTraitStream));
    Matrix theta0, delta0, alpha0;
    {
        SimulationConfig base = cfg;
        base.n_dim = 1;
        draw_traits(base, traits, theta0, delta0, alpha0);
    }
    out.theta0 = theta0;

    Rng sched(Rng::derive(cfg.seed, kScheduleStream));
    Vector slopes = Vector::Zero(C), jumps = Vector::Zero(C);
    for (int j = 0; j < C; ++j) slopes[j] = drift.rate * sched.normal();
    for (int j = 0; j < C; ++j) jumps[j] = sched.normal();

    out.delta_per_term.resize(C, T);
    for (int j = 0; j < C; ++j)
        for (int t = 0; t < T; ++t) {
            double d = delta0(j, 0);
            if (drift.scenario != DriftScenario::StudentConstantDrift) d += slopes[j] * t;
            if (drift.scenario == DriftScenario::CourseDriftWithShock && t == drift.shock_term)
                d += jumps[j];
            out.delta_per_term(j, t) = d;
        }
    out.delta_temporal_mean = out.delta_per_term.rowwise().mean();

    const double srate = drift.scenario == DriftScenario::StudentConstantDrift ? drift.student_rate : 0.0;
    out.theta_temporal_mean = theta0.col(0).array() + srate * 0.5 * (T - 1);

    out.matrix.student_ids = make_ids("s", S);
    out.matrix.scale.kind = ScaleKind::Binary;
    out.matrix.scale.pass_threshold = 0.5;
    out.matrix.grades.resize(S, C * T);
    out.matrix.observed = BoolMatrix::Constant(S, C * T, true);
    IntMatrix terms(S, C * T);

    Rng cells(Rng::derive(cfg.seed, kCellStream));
    // column order (course-major, term-minor) keeps T=1 identical to simulate_irt
    for (int j = 0; j < C; ++j)
        for (int t = 0; t < T; ++t) {
            out.matrix.course_ids.push_back("c" + std::to_string(j + 1) + "@t" + std::to_string(t));
            out.parent_course.push_back("c" + std::to_string(j + 1));
            out.term.push_back(t);
            out.course_group.push_back(j);
        }
    for (int i = 0; i < S; ++i)
        for (int j = 0; j < C; ++j)
            for (int t = 0; t < T; ++t) {
                const int col = j * T + t;
                const double th = theta0(i, 0) + srate * t;
                const double z = th - out.delta_per_term(j, t);
                out.matrix.grades(i, col) = cells.uniform() < sigmoid(z) ? 1.0 : 0.0;
                terms(i, col) = t;
            }
    out.matrix.term_of_grade = std::move(terms);
    return out;
}

ChoiceBiasData simulate_choice_bias(int max_courses_per_student, const SimulationConfig& cfg,
                                    double p_match, double p_other) {
    if (max_courses_per_student < 2) throw Error("simulate_choice_bias: max_courses must be >= 2");
    const int S = cfg.n_students, C = cfg.n_courses;

    ChoiceBiasData out;
    Rng traits(Rng::derive(cfg.seed, kTraitStream));
    Matrix alpha0;
    {
        SimulationConfig base = cfg;
        base.n_dim = 1;
        draw_traits(base, traits, out.theta, out.delta, alpha0);
    }

    // medians of the drawn traits
    auto median = [](Vector v) {
        std::vector<double> s(v.data(), v.data() + v.size());
        std::sort(s.begin(), s.end());
        const size_t n = s.size();
        return n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
    };
    const double mt = median(out.theta.col(0));
    const double md = median(out.delta.col(0));

    out.matrix.student_ids = make_ids("s", S);
    out.matrix.course_ids = make_ids("c", C);
    out.matrix.grades.resize(S, C);
    out.matrix.observed = BoolMatrix::Constant(S, C, false);
    out.matrix.scale.kind = cfg.grade_kind;
    out.matrix.scale.lowest_grade = 0.0;
    if (cfg.grade_kind == ScaleKind::Binary) out.matrix.scale.pass_threshold = 0.5;

    // grades for every cell first (deterministic regardless of enrollment)
    Rng cells(Rng::derive(cfg.seed, kCellStream));
    for (int i = 0; i < S; ++i)
        for (int j = 0; j < C; ++j) {
            const double z = out.theta(i, 0) - out.delta(j, 0);
            if (cfg.grade_kind == ScaleKind::Binary)
                out.matrix.grades(i, j) = cells.uniform() < sigmoid(z) ? 1.0 : 0.0;
            else
                out.matrix.grades(i, j) =
                    std::clamp(50.0 + 10.0 * (z + cfg.noise_sigma * cells.normal()), 0.0, 100.0);
        }

    Rng sched(Rng::derive(cfg.seed, kScheduleStream));
    long total = 0;
    for (int i = 0; i < S; ++i) {
        const bool high = out.theta(i, 0) >= mt;
        std::vector<int> picked;
        for (int attempt = 0; attempt < 100 && picked.empty(); ++attempt) {
            for (int j = 0; j < C; ++j) {
                const bool hard = out.delta(j, 0) >= md;
                const double p = (hard == high) ? p_match : p_other;
                if (sched.uniform() < p) picked.push_back(j);
            }
        }
        if (picked.empty()) throw Error("simulate_choice_bias: student drew no courses");
        while (static_cast<int>(picked.size()) > max_courses_per_student) {
            const size_t drop = static_cast<size_t>(sched.index(static_cast<std::int64_t>(picked.size())));
            picked.erase(picked.begin() + static_cast<std::ptrdiff_t>(drop));
        }
        for (int j : picked) out.matrix.observed(i, j) = true;
        total += static_cast<long>(picked.size());
    }
    out.mean_courses_per_student = static_cast<double>(total) / S;
    return out;
}

RegressionValidation regression_validation(const CourseResponseMatrix& m, ModelClass model_class,
                                           int repetitions, std::uint64_t seed) {
    LatentModel model;
    switch (model_class) {
        case ModelClass::Agm: model = fit_agm(m, 1, {.seed = seed}); break;
        case ModelClass::Centering: model = centering_estimates(m); break;
        case ModelClass::Irt: {
            IrtOptions o;
            o.seed = seed;
            o.min_students_warning = 0;
            model = fit_irt(m, 1, o);
            break;
        }
    }

    std::vector<std::array<double, 3>> rows;  // theta_hat, delta_hat, grade
    for (Eigen::Index i = 0; i < m.n_students(); ++i)
        for (Eigen::Index j = 0; j < m.n_courses(); ++j)
            if (m.observed(i, j))
                rows.push_back({model.theta(i, 0), model.delta(j, 0), m.grades(i, j)});

    RegressionValidation out;
    const size_t n = rows.size();
    std::vector<size_t> order(n);
    for (int rep = 0; rep < repetitions; ++rep) {
        Rng rng(Rng::derive(seed, 500 + static_cast<std::uint64_t>(rep)));
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng.engine());
        const size_t n_train = static_cast<size_t>(0.7 * static_cast<double>(n));
        Matrix Xtr(static_cast<Eigen::Index>(n_train), 3);
        Vector ytr(static_cast<Eigen::Index>(n_train));
        for (size_t r = 0; r < n_train; ++r) {
            Xtr(static_cast<Eigen::Index>(r), 0) = 1.0;
            Xtr(static_cast<Eigen::Index>(r), 1) = rows[order[r]][0];
            Xtr(static_cast<Eigen::Index>(r), 2) = rows[order[r]][1];
            ytr[static_cast<Eigen::Index>(r)] = rows[order[r]][2];
        }
        stats::OlsFit fit = stats::ols(Xtr, ytr);
        double sse = 0.0, tss = 0.0, mean = 0.0;
        const size_t n_test = n - n_train;
        for (size_t r = n_train; r < n; ++r) mean += rows[order[r]][2];
        mean /= static_cast<double>(n_test);
        for (size_t r = n_train; r < n; ++r) {
            const double pred =
                fit.beta[0] + fit.beta[1] * rows[order[r]][0] + fit.beta[2] * rows[order[r]][1];
            sse += (pred - rows[order[r]][2]) * (pred - rows[order[r]][2]);
            tss += (rows[order[r]][2] - mean) * (rows[order[r]][2] - mean);
        }
        out.rmse.push_back(std::sqrt(sse / static_cast<double>(n_test)));
        out.r2.push_back(tss > 0 ? 1.0 - sse / tss : 0.0);
    }
    return out;
}

}  // namespace cde
