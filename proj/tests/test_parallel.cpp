#include <doctest.h>

#include <cmath>

#include "cde/assumption_checks.hpp"
#include "cde/correlation.hpp"
#include "cde/latent_models.hpp"
#include "cde/parallel.hpp"
#include "cde/simulation.hpp"

using namespace cde;

namespace {

struct ParallelGuard {
    bool prev;
    ParallelGuard() : prev(exec::parallel_enabled()) {}
    ~ParallelGuard() { exec::set_parallel(prev); }
};

}  // namespace

TEST_CASE("parallel_for covers the index range exactly once") {
    std::vector<int> hits(1000, 0);
    exec::parallel_for(1000, [&](std::int64_t i) { hits[static_cast<size_t>(i)] += 1; });
    for (int h : hits) CHECK(h == 1);
}

TEST_CASE("serial and parallel rasch fits agree") {
    ParallelGuard guard;
    SimulationConfig cfg;
    cfg.n_students = 400;
    cfg.n_courses = 10;
    cfg.seed = 50;
    SimulatedData d = simulate_irt(cfg);
    IrtOptions opts;
    opts.min_students_warning = 0;
    opts.max_epochs = 120;

    exec::set_parallel(false);
    LatentModel serial = fit_irt(d.matrix, 1, opts);
    exec::set_parallel(true);
    LatentModel parallel = fit_irt(d.matrix, 1, opts);

    // disjoint-slot kernels keep both paths numerically identical
    CHECK((serial.theta - parallel.theta).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    CHECK((serial.delta - parallel.delta).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    CHECK(serial.log_likelihood == doctest::Approx(parallel.log_likelihood).epsilon(1e-14));
}

TEST_CASE("serial and parallel correlation matrices agree") {
    ParallelGuard guard;
    SimulationConfig cfg;
    cfg.n_students = 300;
    cfg.n_courses = 12;
    cfg.seed = 51;
    SimulatedData d = simulate_irt(cfg);  // binary -> tetrachoric path

    exec::set_parallel(false);
    CorrelationMatrix serial = correlation_matrix(d.matrix);
    exec::set_parallel(true);
    CorrelationMatrix parallel = correlation_matrix(d.matrix);
    CHECK((serial.values - parallel.values).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("serial and parallel q3 agree") {
    ParallelGuard guard;
    SimulationConfig cfg;
    cfg.n_students = 300;
    cfg.n_courses = 10;
    cfg.grade_kind = ScaleKind::Continuous;
    cfg.seed = 52;
    SimulatedData d = simulate_irt(cfg);
    LatentModel fit = fit_agm(d.matrix, 1);

    exec::set_parallel(false);
    Q3Report serial = yen_q3(fit, d.matrix);
    exec::set_parallel(true);
    Q3Report parallel = yen_q3(fit, d.matrix);
    CHECK(serial.mean_q3 == doctest::Approx(parallel.mean_q3).epsilon(1e-15));
    CHECK(serial.violations.size() == parallel.violations.size());
}

TEST_CASE("serial and parallel marginal bic agree") {
    ParallelGuard guard;
    SimulationConfig cfg;
    cfg.n_students = 250;
    cfg.n_courses = 8;
    cfg.seed = 53;
    SimulatedData d = simulate_irt(cfg);

    exec::set_parallel(false);
    auto serial = irt_marginal_bic(d.matrix, {1});
    exec::set_parallel(true);
    auto parallel = irt_marginal_bic(d.matrix, {1});
    CHECK(serial[0].marginal_ll == doctest::Approx(parallel[0].marginal_ll).epsilon(1e-12));
}
