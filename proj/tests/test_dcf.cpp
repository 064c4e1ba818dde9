#include <doctest.h>

#include <cmath>

#include "cde/dcf.hpp"
#include "cde/simulation.hpp"
#include "cde/stats.hpp"

using namespace cde;

namespace {

/// binary matrix with a planted group effect in one course: the logit gains
/// dcf_beta * g_s there, so the fitted beta1 estimates dcf_beta directly
struct Planted {
    CourseResponseMatrix m;
    GroupAssignment groups;
    LatentModel model;  // oracle model carrying the true traits
};

Planted plant(std::uint64_t seed, double dcf_beta, int planted_course, int S = 2000, int C = 10) {
    stats::Rng rng(seed);
    Planted out;
    out.m.scale.kind = ScaleKind::Binary;
    out.m.grades.resize(S, C);
    out.m.observed = BoolMatrix::Constant(S, C, true);
    Vector theta(S), delta(C);
    for (int j = 0; j < C; ++j) {
        delta[j] = rng.normal();
        out.m.course_ids.push_back("c" + std::to_string(j));
    }
    for (int i = 0; i < S; ++i) {
        out.m.student_ids.push_back("s" + std::to_string(i));
        theta[i] = rng.normal();
        const int g = rng.uniform() < 0.5 ? -1 : 1;
        out.groups.student_ids.push_back(out.m.student_ids.back());
        out.groups.group.push_back(g);
        for (int j = 0; j < C; ++j) {
            double eta = theta[i] - delta[j];
            if (j == planted_course) eta += dcf_beta * g;
            out.m.grades(i, j) = rng.uniform() < stats::sigmoid(eta) ? 1.0 : 0.0;
        }
    }
    out.model.model_class = ModelClass::Irt;
    out.model.n_dim = 1;
    out.model.student_ids = out.m.student_ids;
    out.model.course_ids = out.m.course_ids;
    out.model.theta = theta;
    out.model.delta = delta;
    out.model.alpha = Matrix::Ones(C, 1);
    return out;
}

}  // namespace

TEST_CASE("bh correction step-up examples") {
    BhResult r = bh_correct({0.01, 0.03, 0.04, 0.20}, 0.05);
    CHECK(r.reject[0]);
    CHECK_FALSE(r.reject[1]);
    CHECK_FALSE(r.reject[2]);
    CHECK_FALSE(r.reject[3]);
    CHECK(r.adjusted[0] == doctest::Approx(0.04));
    CHECK(r.adjusted[1] == doctest::Approx(0.0533333333).epsilon(1e-6));

    BhResult single = bh_correct({0.01}, 0.05);
    CHECK(single.reject[0]);
    CHECK(single.adjusted[0] == doctest::Approx(0.01));

    BhResult ones = bh_correct({1.0, 1.0, 1.0}, 0.05);
    for (int i = 0; i < 3; ++i) {
        CHECK_FALSE(ones.reject[i]);
        CHECK(ones.adjusted[static_cast<size_t>(i)] == doctest::Approx(1.0));
    }

    CHECK_THROWS_AS(bh_correct({0.5, 1.2}, 0.05), Error);
}

TEST_CASE("bh rejections grow monotonically with q") {
    const std::vector<double> p = {0.001, 0.012, 0.02, 0.3, 0.7};
    size_t prev = 0;
    for (double q : {0.01, 0.05, 0.1, 0.25}) {
        BhResult r = bh_correct(p, q);
        size_t n = 0;
        for (bool b : r.reject) n += b;
        CHECK(n >= prev);
        prev = n;
    }
}

TEST_CASE("planted dcf effect is recovered with the right sign") {
    Planted p = plant(1234, -0.5, 3);  // group -1 finds course 3 easier
    DcfResult r = dcf_course(p.m, p.model, "c3", p.groups);
    CHECK_FALSE(r.skipped);
    CHECK(r.beta1 < 0.0);
    CHECK(std::fabs(std::fabs(r.beta1) - 0.5) < 0.15);
    CHECK(r.p_raw < 0.05);
    CHECK(r.beta2.size() == 1);
    CHECK(r.beta2[0] == doctest::Approx(1.0));  // fixed in the one-dimensional case
    CHECK(r.n_group_minus + r.n_group_plus == 2000);
}

TEST_CASE("swapping group labels negates beta1 and keeps the p-value") {
    Planted p = plant(99, -0.4, 2);
    DcfResult a = dcf_course(p.m, p.model, "c2", p.groups);
    GroupAssignment swapped = p.groups;
    for (auto& g : swapped.group) g = -g;
    DcfResult b = dcf_course(p.m, p.model, "c2", swapped);
    CHECK(a.beta1 == doctest::Approx(-b.beta1).epsilon(1e-6));
    CHECK(a.p_raw == doctest::Approx(b.p_raw).epsilon(1e-6));
}

TEST_CASE("beta1 is exactly zero when both groups share identical data") {
    // duplicate every student into both groups
    Planted base = plant(7, 0.0, 0, 300, 4);
    CourseResponseMatrix dup;
    dup.scale = base.m.scale;
    dup.course_ids = base.m.course_ids;
    dup.grades.resize(600, 4);
    dup.observed = BoolMatrix::Constant(600, 4, true);
    GroupAssignment groups;
    LatentModel model = base.model;
    model.student_ids.clear();
    model.theta.resize(600, 1);
    for (int i = 0; i < 300; ++i) {
        for (int copy = 0; copy < 2; ++copy) {
            const int row = 2 * i + copy;
            dup.student_ids.push_back("s" + std::to_string(row));
            dup.grades.row(row) = base.m.grades.row(i);
            model.student_ids.push_back(dup.student_ids.back());
            model.theta(row, 0) = base.model.theta(i, 0);
            groups.student_ids.push_back(dup.student_ids.back());
            groups.group.push_back(copy == 0 ? -1 : 1);
        }
    }
    DcfResult r = dcf_course(dup, model, "c1", groups);
    CHECK(std::fabs(r.beta1) < 1e-8);
}

TEST_CASE("dcf is invariant to a constant shift of the traits") {
    Planted p = plant(55, -0.3, 1, 800, 5);
    DcfResult a = dcf_course(p.m, p.model, "c1", p.groups);
    LatentModel shifted = p.model;
    shifted.theta.array() += 3.0;
    DcfResult b = dcf_course(p.m, shifted, "c1", p.groups);
    CHECK(a.beta1 == doctest::Approx(b.beta1).epsilon(1e-6));
    CHECK(a.p_raw == doctest::Approx(b.p_raw).epsilon(1e-4));
}

TEST_CASE("small groups are skipped with a note") {
    Planted p = plant(3, 0.0, 0, 200, 4);
    // unbalance: keep only 5 students in group -1
    int kept = 0;
    for (size_t i = 0; i < p.groups.group.size(); ++i) {
        if (p.groups.group[i] < 0) {
            if (kept >= 5) p.groups.group[i] = 1;
            ++kept;
        }
    }
    DcfResult r = dcf_course(p.m, p.model, "c0", p.groups);
    CHECK(r.skipped);
    CHECK(!r.note.empty());
}

TEST_CASE("group files referencing unknown students fail") {
    Planted p = plant(4, 0.0, 0, 50, 3);
    p.groups.student_ids.push_back("ghost");
    p.groups.group.push_back(1);
    CHECK_THROWS_AS(dcf_course(p.m, p.model, "c0", p.groups), Error);
}

TEST_CASE("dcf_all corrects across courses and sorts by effect size") {
    Planted p = plant(2026, -0.6, 4, 2000, 8);
    std::vector<DcfResult> all = dcf_all(p.m, p.model, p.groups, 0.05);
    REQUIRE(all.size() == 8);
    // the planted course carries the largest effect and survives BH
    CHECK(all[0].course_id == "c4");
    CHECK(all[0].significant);
    CHECK(all[0].p_bh <= 0.05);
    // adjusted p-values are monotone in the raw ones
    for (const auto& r : all)
        if (!r.skipped) CHECK(r.p_bh >= r.p_raw - 1e-12);
}

TEST_CASE("agm-path dcf uses least squares on the same design") {
    // continuous planted effect: group -1 scores 5 points higher in course 0
    stats::Rng rng(6);
    const int S = 1500, C = 5;
    CourseResponseMatrix m;
    m.scale.kind = ScaleKind::Continuous;
    m.grades.resize(S, C);
    m.observed = BoolMatrix::Constant(S, C, true);
    GroupAssignment groups;
    LatentModel model;
    model.model_class = ModelClass::Agm;
    model.n_dim = 1;
    model.theta.resize(S, 1);
    model.alpha = Matrix::Ones(C, 1);
    model.delta = Matrix::Zero(C, 1);
    for (int j = 0; j < C; ++j) {
        model.course_ids.push_back("c" + std::to_string(j));
        m.course_ids.push_back(model.course_ids.back());
    }
    for (int i = 0; i < S; ++i) {
        m.student_ids.push_back("s" + std::to_string(i));
        model.student_ids.push_back(m.student_ids.back());
        const double theta = 10.0 * rng.normal();
        model.theta(i, 0) = theta;
        const int g = rng.uniform() < 0.5 ? -1 : 1;
        groups.student_ids.push_back(m.student_ids.back());
        groups.group.push_back(g);
        for (int j = 0; j < C; ++j) {
            double mu = 50.0 + theta + 5.0 * (j - 2);
            if (j == 0) mu += -2.5 * g;  // group -1 scores higher
            m.grades(i, j) = mu + 3.0 * rng.normal();
        }
    }
    DcfResult r = dcf_course(m, model, "c0", groups);
    CHECK(r.beta1 == doctest::Approx(-2.5).epsilon(0.1));
    CHECK(r.p_raw < 1e-6);
    DcfResult null = dcf_course(m, model, "c1", groups);
    CHECK(std::fabs(null.beta1) < 0.5);
}

TEST_CASE("null dcf p-values are roughly uniform (reduced Monte Carlo)") {
    int rejections = 0;
    const int reps = 30;
    for (int rep = 0; rep < reps; ++rep) {
        Planted p = plant(3000 + static_cast<std::uint64_t>(rep), 0.0, 0, 400, 4);
        DcfResult r = dcf_course(p.m, p.model, "c2", p.groups);
        rejections += r.p_raw < 0.05;
    }
    CHECK(rejections <= 6);  // nominal would be 1.5
}
