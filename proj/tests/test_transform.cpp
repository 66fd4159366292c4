#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "sdeadapt/schemes.hpp"
#include "sdeadapt/transform.hpp"

using namespace sdeadapt;

namespace {

SdeProblem jump_fixture() {
    PiecewiseFn mu({0.0},
                   {Piece{[](double) { return 1.0; }, [](double) { return 0.0; }},
                    Piece{[](double) { return -1.0; }, [](double) { return 0.0; }}});
    return make_problem(0.5, std::move(mu), PiecewiseFn::constant(1.0), 0.4);
}

} // namespace

TEST_CASE("bump values and derivatives", "[transform]") {
    auto b0 = bump(0.0);
    CHECK(b0.phi == 1.0);
    CHECK(b0.d1 == 0.0);
    auto bh = bump(0.5);
    CHECK(bh.phi == Catch::Approx(0.31640625).epsilon(1e-14));
    CHECK(bh.d1 == Catch::Approx(-1.6875).epsilon(1e-14));
    CHECK(bh.d2 == Catch::Approx(3.375).epsilon(1e-14));
    auto b1 = bump(1.0);
    CHECK(b1.phi == 0.0);
    CHECK(b1.d1 == 0.0);
    CHECK(bump(-2.0).phi == 0.0);

    // derivatives agree with central differences inside the support
    for (double x : {-0.9, -0.4, 0.1, 0.3, 0.77}) {
        const double h = 1e-6;
        const double fd1 = (bump(x + h).phi - bump(x - h).phi) / (2 * h);
        const double fd2 = (bump(x + h).d1 - bump(x - h).d1) / (2 * h);
        const double fd3 = (bump(x + h).d2 - bump(x - h).d2) / (2 * h);
        CHECK(bump(x).d1 == Catch::Approx(fd1).margin(1e-6));
        CHECK(bump(x).d2 == Catch::Approx(fd2).margin(1e-5));
        CHECK(bump(x).d3 == Catch::Approx(fd3).margin(1e-4));
    }
}

TEST_CASE("alpha from the drift jump", "[transform]") {
    CHECK(compute_alpha(jump_fixture()) == std::vector<double>{1.0});

    auto cont = make_problem(0.0, PiecewiseFn::constant(2.0),
                             PiecewiseFn({0.0}, {Piece{[](double) { return 1.0; }, [](double) { return 0.0; }},
                                                 Piece{[](double) { return 1.0; }, [](double) { return 0.0; }}}));
    CHECK(compute_alpha(cont) == std::vector<double>{0.0});

    PiecewiseFn mu({0.0},
                   {Piece{[](double) { return 0.0; }, [](double) { return 0.0; }},
                    Piece{[](double) { return 1.0; }, [](double) { return 0.0; }}});
    auto p = make_problem(0.0, std::move(mu), PiecewiseFn::constant(2.0));
    CHECK(compute_alpha(p) == std::vector<double>{-0.125});

    auto bad = make_problem(0.0,
                            PiecewiseFn({0.0}, {Piece{[](double) { return 1.0; }, [](double) { return 0.0; }},
                                                Piece{[](double) { return -1.0; }, [](double) { return 0.0; }}}),
                            PiecewiseFn::smooth([](double x) { return x; }, [](double) { return 1.0; }));
    CHECK_THROWS_AS(compute_alpha(bad), std::invalid_argument);
}

TEST_CASE("rho with the 1/0 = infinity convention", "[transform]") {
    const std::vector<double> z1 = {0.0};
    CHECK(compute_rho(z1, std::vector<double>{0.5}) == 0.25);
    CHECK(std::isinf(compute_rho(z1, std::vector<double>{0.0})));
    CHECK(compute_rho(std::vector<double>{0.0, 1.0}, std::vector<double>{1.0, 1.0}) == 0.125);
}

TEST_CASE("transform evaluation", "[transform]") {
    TransformParams tp{{0.0}, {0.5}, 0.1, 0.25};
    CHECK(g_eval(tp, 0.2) == 0.2);   // outside the bump support
    CHECK(g_eval(tp, -0.15) == -0.15);
    CHECK(g_eval(tp, 0.0) == 0.0);   // fixed point
    CHECK(g_eval(tp, 0.05) == Catch::Approx(0.0503955078125).epsilon(1e-15));
    CHECK(g_eval(tp, 0.1) == 0.1);   // support edge maps to itself
    CHECK(g_prime(tp, 0.0) == 1.0);
    CHECK(g_prime(tp, 0.3) == 1.0);
}

TEST_CASE("derivatives of G match finite differences", "[transform]") {
    TransformParams tp{{0.0}, {1.0}, 0.0625, 0.125};
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (int i = 0; i < 500; ++i) {
        const double x = u(rng);
        if (std::abs(x) < 1e-3) continue; // keep away from the kink
        const double h = 1e-7;
        const double fd1 = (g_eval(tp, x + h) - g_eval(tp, x - h)) / (2 * h);
        CHECK(g_prime(tp, x) == Catch::Approx(fd1).epsilon(1e-6).margin(1e-9));
        const double fd2 = (g_prime(tp, x + h) - g_prime(tp, x - h)) / (2 * h);
        CHECK(g_second(tp, x) == Catch::Approx(fd2).margin(1e-4));
    }
}

TEST_CASE("one-sided curvature at the kink", "[transform]") {
    TransformParams tp{{0.0}, {0.5}, 0.1, 0.25};
    CHECK(g_second(tp, 0.0, Side::left) == -1.0);
    CHECK(g_second(tp, 0.0, Side::right) == 1.0);
    // one-sided finite differences of G'
    const double h = 1e-6;
    const double fd_l = (g_prime(tp, 0.0) - g_prime(tp, -h)) / h;
    const double fd_r = (g_prime(tp, h) - g_prime(tp, 0.0)) / h;
    CHECK(fd_l == Catch::Approx(-1.0).margin(1e-4));
    CHECK(fd_r == Catch::Approx(1.0).margin(1e-4));
    // third derivative limits vanish at the kink
    CHECK(g_third(tp, 0.0) == 0.0);
}

TEST_CASE("extended curvature makes the drift transform well posed", "[transform]") {
    auto p = jump_fixture(); // mu(0) = -1 (right limit), sigma = 1, alpha = 1
    auto tp = make_transform(p);
    CHECK(g_second_extended(tp, p, 0.0) == Catch::Approx(2.0).epsilon(1e-14));
    CHECK_THROWS_AS(g_second_extended(tp, p, 0.3), std::invalid_argument);
}

TEST_CASE("numerical inverse", "[transform]") {
    TransformParams tp{{0.0}, {0.5}, 0.1, 0.25};
    CHECK(g_inverse(tp, 0.2) == 0.2); // identity branch
    CHECK(g_inverse(tp, 0.0) == 0.0); // fixed point
    CHECK(g_inverse(tp, 0.0503955078125) == Catch::Approx(0.05).margin(1e-10));

    TransformParams strong{{-0.3, 1.2}, {1.0, -2.0}, 0.05, 0.0625};
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-2.3, 3.2);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double x = u(rng);
        const double back = g_inverse(strong, g_eval(strong, x));
        worst = std::max(worst, std::abs(back - x));
    }
    CHECK(worst <= 1e-9);
}

TEST_CASE("transform construction defaults", "[transform]") {
    auto p = jump_fixture();
    auto tp = make_transform(p);
    CHECK(tp.alpha == std::vector<double>{1.0});
    CHECK(tp.rho == 0.125);
    CHECK(tp.nu == 0.0625); // rho/2 default
    CHECK_FALSE(tp.identity());
    CHECK_THROWS_AS(make_transform(p, 0.2), std::invalid_argument); // nu >= rho

    auto cont = make_problem(1.0, PiecewiseFn::constant(0.5), PiecewiseFn::constant(1.0));
    CHECK(make_transform(cont).identity());
}

TEST_CASE("transformed problem", "[transform]") {
    auto p = jump_fixture();
    auto tp = make_transform(p);
    auto q = transformed_problem(p, tp);

    CHECK(q.x0 == 0.5); // outside the bump support
    CHECK(q.theta == p.theta);

    // drift is continuous at 0 with value 0
    CHECK(q.mu(0.0) == Catch::Approx(0.0).margin(1e-14));
    CHECK(std::abs(q.mu(-1e-7) - q.mu(1e-7)) <= 1e-5);
    CHECK(q.mu.left_limit(0) == Catch::Approx(0.0).margin(1e-12));
    CHECK(q.mu.right_limit(0) == Catch::Approx(0.0).margin(1e-12));

    // sigma~ = G' o G^{-1} for unit sigma; identity away from the bump
    CHECK(q.sigma(0.5) == 1.0);
    CHECK(q.sigma(-0.2) == 1.0);
    CHECK(q.sigma(0.0) == 1.0);

    // transformed coefficients satisfy the standing assumptions
    auto rep = validate_problem(q);
    INFO("validation report for transformed problem");
    CHECK(rep.hard_pass());
    CHECK(rep.all_pass());

    // identity short-circuit: continuous drift passes through unchanged
    auto cont = make_problem(1.0, PiecewiseFn::constant(0.5), PiecewiseFn::constant(1.0));
    auto tpc = make_transform(cont);
    auto qc = transformed_problem(cont, tpc);
    CHECK(qc.x0 == cont.x0);
    CHECK(qc.mu(0.7) == 0.5);
}

TEST_CASE("transformed piece derivatives match finite differences", "[transform]") {
    // exercises the chain-rule formulas including G''' in mu~'
    auto p = make_problem(0.2,
                          PiecewiseFn({0.0},
                                      {Piece{[](double x) { return 1.0 + 0.2 * std::sin(x); },
                                             [](double x) { return 0.2 * std::cos(x); }},
                                       Piece{[](double x) { return -1.0 + 0.1 * x; },
                                             [](double) { return 0.1; }}}),
                          PiecewiseFn::smooth([](double x) { return 1.0 + 0.1 * std::tanh(x); },
                                              [](double x) {
                                                  const double c = std::cosh(x);
                                                  return 0.1 / (c * c);
                                              }),
                          0.4);
    auto tp = make_transform(p);
    auto q = transformed_problem(p, tp);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    const double h = 1e-6;
    for (int i = 0; i < 300; ++i) {
        const double y = u(rng);
        if (std::abs(y) < 1e-4) continue;
        const double fd_mu = (q.mu(y + h) - q.mu(y - h)) / (2 * h);
        const double fd_sig = (q.sigma(y + h) - q.sigma(y - h)) / (2 * h);
        CHECK(q.mu.derivative(y) == Catch::Approx(fd_mu).margin(2e-4));
        CHECK(q.sigma.derivative(y) == Catch::Approx(fd_sig).margin(2e-4));
    }
}

TEST_CASE("fused coefficient field agrees with the generic route", "[transform]") {
    auto p = jump_fixture();
    auto tp = make_transform(p);
    auto q = transformed_problem(p, tp);
    TransformedCoeffField field(p, tp);
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-0.6, 1.1);
    for (int i = 0; i < 2000; ++i) {
        const double y = u(rng);
        const auto c = field(y);
        CHECK(c.mu == Catch::Approx(q.mu(y)).margin(1e-9));
        CHECK(c.sigma == Catch::Approx(q.sigma(y)).margin(1e-9));
        CHECK(c.sig_dsig ==
              Catch::Approx(q.sigma(y) * q.sigma.derivative(y)).margin(1e-9));
    }
}
