#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sdeadapt/schemes.hpp"

using namespace sdeadapt;

namespace {

SdeProblem jump_fixture() {
    PiecewiseFn mu({0.0},
                   {Piece{[](double) { return 1.0; }, [](double) { return 0.0; }},
                    Piece{[](double) { return -1.0; }, [](double) { return 0.0; }}});
    return make_problem(0.5, std::move(mu), PiecewiseFn::constant(1.0), 0.4);
}

SdeProblem pure_brownian() {
    return make_problem(0.0, PiecewiseFn::constant(0.0), PiecewiseFn::constant(1.0));
}

} // namespace

TEST_CASE("quasi-Milstein update formula", "[schemes]") {
    CHECK(qm_step(1.0, 0.0, 1.0, 0.0, 0.05, 0.1) == 1.1);
    CHECK(qm_step(1.0, 0.0, 1.0, 1.0, 0.01, 0.2) == Catch::Approx(1.215).epsilon(1e-15));
    CHECK(qm_step(0.0, 0.0, 0.0, 2.0, 0.01, 0.0) == Catch::Approx(-0.01).epsilon(1e-15));
}

TEST_CASE("pure Brownian motion is reproduced exactly", "[schemes]") {
    auto p = pure_brownian();
    const double delta = 1.0 / 256;

    BrownianPath path(100, 0);
    StepController ctrl(delta, 1.0, p.theta, ControllerMode::clamped);
    auto tr = run_adaptive_qm(p, ctrl, path);
    CHECK(tr.cost == 256); // constant step, dyadic accumulation is exact
    for (double t : {0.125, 0.33, 0.5, 0.875, 1.0}) {
        const double w = path.sample_at(t);
        CHECK(std::abs(eval_trajectory(tr, path, t) - w) <= 1e-12);
    }

    BrownianPath path2(100, 1);
    auto eq = run_equidistant(p, 1, path2, EquidistantKind::quasi_milstein);
    CHECK(eq.final_x() == path2.sample_at(1.0));
    CHECK(eq.cost == 1);
}

TEST_CASE("constant drift with zero noise is exact", "[schemes]") {
    auto p = make_problem(0.5, PiecewiseFn::constant(2.0), PiecewiseFn::constant(0.0));
    BrownianPath path(5, 0);
    auto eq = run_equidistant(p, 2, path, EquidistantKind::quasi_milstein);
    CHECK(eq.final_x() == 2.5);
    CHECK(eq.final_tau() == 1.0); // grid lands exactly

    BrownianPath path2(5, 1);
    StepController ctrl(1.0 / 256, 1.0, {}, ControllerMode::clamped);
    auto tr = run_adaptive_qm(p, ctrl, path2);
    CHECK(tr.final_x() == 2.5);
}

TEST_CASE("euler-maruyama equals quasi-milstein for additive noise", "[schemes]") {
    auto p = make_problem(0.3, PiecewiseFn::constant(-1.0), PiecewiseFn::constant(0.7));
    BrownianPath a(9, 0), b(9, 0);
    auto em = run_equidistant(p, 64, a, EquidistantKind::euler_maruyama);
    auto qm = run_equidistant(p, 64, b, EquidistantKind::quasi_milstein);
    CHECK(em.final_x() == qm.final_x());

    // multiplicative noise: the correction term separates them
    auto gbm = make_problem(1.0, PiecewiseFn::constant(0.0),
                            PiecewiseFn::smooth([](double x) { return x; },
                                                [](double) { return 1.0; }));
    BrownianPath c(9, 1), d(9, 1);
    auto em2 = run_equidistant(gbm, 64, c, EquidistantKind::euler_maruyama);
    auto qm2 = run_equidistant(gbm, 64, d, EquidistantKind::quasi_milstein);
    CHECK(em2.final_x() != qm2.final_x());
}

TEST_CASE("trajectory invariants", "[schemes]") {
    auto p = jump_fixture();
    BrownianPath path(77, 0);
    StepController ctrl(1.0 / 512, p.eps0, p.theta, ControllerMode::clamped);
    auto tr = run_adaptive_qm(p, ctrl, path);

    CHECK(tr.nodes.front().tau == 0.0);
    CHECK(tr.x0() == p.x0);
    for (std::size_t i = 1; i < tr.nodes.size(); ++i)
        CHECK(tr.nodes[i - 1].tau < tr.nodes[i].tau);
    CHECK(tr.final_tau() >= 1.0);
    CHECK(tr.nodes[tr.nodes.size() - 2].tau < 1.0);
    CHECK(tr.cost == tr.nodes.size() - 1);
    CHECK(tr.cost <= ctrl.step_cap());
    CHECK(tr.branch_steps[0] + tr.branch_steps[1] + tr.branch_steps[2] == tr.cost);

    CHECK_THROWS_AS(eval_trajectory(tr, path, tr.final_tau() + 0.1), std::invalid_argument);
    CHECK_THROWS_AS(eval_trajectory(tr, path, -0.1), std::invalid_argument);
    CHECK(eval_trajectory(tr, path, 0.0) == p.x0);
    CHECK(eval_trajectory(tr, path, tr.nodes[3].tau) == tr.nodes[3].x);
}

TEST_CASE("same seed gives bit-identical trajectories", "[schemes]") {
    auto p = jump_fixture();
    auto run_once = [&] {
        BrownianPath path(123, 5);
        StepController ctrl(1.0 / 1024, p.eps0, p.theta, ControllerMode::clamped);
        return run_adaptive_qm(p, ctrl, path);
    };
    auto t1 = run_once();
    auto t2 = run_once();
    REQUIRE(t1.nodes.size() == t2.nodes.size());
    CHECK(t1.cost == t2.cost);
    for (std::size_t i = 0; i < t1.nodes.size(); ++i) {
        CHECK(t1.nodes[i].tau == t2.nodes[i].tau);
        CHECK(t1.nodes[i].x == t2.nodes[i].x);
    }
}

TEST_CASE("inline probes agree with post-hoc trajectory evaluation", "[schemes]") {
    auto p = jump_fixture();
    const std::vector<double> probes = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<double> inline_vals(probes.size());
    BrownianPath path(55, 2);
    StepController ctrl(1.0 / 512, p.eps0, p.theta, ControllerMode::clamped);
    Trajectory tr;
    run_adaptive_core(p.x0, ctrl, problem_coeffs(p), path, probes, inline_vals, &tr);
    for (std::size_t i = 0; i < probes.size(); ++i)
        CHECK(eval_trajectory(tr, path, probes[i]) == inline_vals[i]);
}

TEST_CASE("transformed adaptive scheme", "[schemes]") {
    auto p = jump_fixture();

    SECTION("continuous drift coincides with the plain scheme") {
        auto cont = make_problem(0.25, PiecewiseFn::constant(0.5), PiecewiseFn::constant(1.0));
        BrownianPath a(42, 0), b(42, 0);
        auto tref = run_transformed_adaptive(cont, 1.0 / 256, ControllerMode::clamped, a);
        StepController ctrl(1.0 / 256, cont.eps0, cont.theta, ControllerMode::clamped);
        auto plain = run_adaptive_qm(cont, ctrl, b);
        REQUIRE(tref.z_trajectory.nodes.size() == plain.nodes.size());
        for (std::size_t i = 0; i < plain.nodes.size(); ++i)
            CHECK(tref.z_trajectory.nodes[i].x == plain.nodes[i].x);
        CHECK(tref.params.identity());
    }

    SECTION("cost is shared between X and Z") {
        BrownianPath path(42, 1);
        auto run = run_transformed_adaptive(p, 1.0 / 512, ControllerMode::clamped, path);
        CHECK(run.z_trajectory.cost > 0);
        // x_at applies G^{-1} to the Z extension; at t=1 it matches x_final
        BrownianPath replay(42, 1);
        auto run2 = run_transformed_adaptive(p, 1.0 / 512, ControllerMode::clamped, replay);
        CHECK(run2.x_final == run.x_final);
        CHECK(run2.z_trajectory.cost == run.z_trajectory.cost);
    }

    SECTION("pure Brownian exactness survives the transform pipeline") {
        auto pb = pure_brownian();
        BrownianPath path(42, 2);
        auto run = run_transformed_adaptive(pb, 1.0 / 256, ControllerMode::clamped, path);
        CHECK(std::abs(run.x_final - path.sample_at(1.0)) <= 1e-12);
    }
}
