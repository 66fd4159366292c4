#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "sdeadapt/piecewise.hpp"
#include "sdeadapt/problem.hpp"

using namespace sdeadapt;

namespace {

PiecewiseFn sign_drift() { // 1 for x<0, -1 for x>=0
    return PiecewiseFn({0.0},
                       {Piece{[](double) { return 1.0; }, [](double) { return 0.0; }},
                        Piece{[](double) { return -1.0; }, [](double) { return 0.0; }}});
}

} // namespace

TEST_CASE("piecewise evaluation", "[piecewise]") {
    auto f = sign_drift();
    CHECK(f(-0.3) == 1.0);
    CHECK(f(0.3) == -1.0);
    CHECK(f(0.0) == -1.0); // defaults to the right limit

    auto id = PiecewiseFn::smooth([](double x) { return x; }, [](double) { return 1.0; });
    CHECK(id(2.5) == 2.5);

    PiecewiseFn custom({0.0},
                       {Piece{[](double) { return 1.0; }, [](double) { return 0.0; }},
                        Piece{[](double) { return -1.0; }, [](double) { return 0.0; }}},
                       {5.0});
    CHECK(custom(0.0) == 5.0);
}

TEST_CASE("a.e. derivative convention", "[piecewise]") {
    // |x| modelled with a breakpoint at 0: not differentiable there.
    PiecewiseFn absf({0.0},
                     {Piece{[](double x) { return -x; }, [](double) { return -1.0; }},
                      Piece{[](double x) { return x; }, [](double) { return 1.0; }}});
    CHECK(absf.derivative(0.0) == 0.0);
    CHECK(absf.derivative(-1.0) == -1.0);
    CHECK(absf.derivative(2.0) == 1.0);

    auto sq = PiecewiseFn::smooth([](double x) { return x * x; }, [](double x) { return 2 * x; });
    CHECK(sq.derivative(3.0) == 6.0);

    CHECK(sign_drift().derivative(0.5) == 0.0);

    // x^2 split artificially at 1: still differentiable at the seam.
    PiecewiseFn split({1.0},
                      {Piece{[](double x) { return x * x; }, [](double x) { return 2 * x; }},
                       Piece{[](double x) { return x * x; }, [](double x) { return 2 * x; }}});
    CHECK(split.derivative(1.0) == 2.0);
}

TEST_CASE("derivative matches central differences inside pieces", "[piecewise]") {
    PiecewiseFn f({-0.5, 1.0},
                  {Piece{[](double x) { return std::sin(x); }, [](double x) { return std::cos(x); }},
                   Piece{[](double x) { return x * x * x - x; }, [](double x) { return 3 * x * x - 1; }},
                   Piece{[](double x) { return std::exp(-x); }, [](double x) { return -std::exp(-x); }}});
    std::mt19937_64 rng(99);
    const double ends[4] = {-3.0, -0.5, 1.0, 4.0};
    const double h = 1e-6;
    for (int piece = 0; piece < 3; ++piece) {
        std::uniform_real_distribution<double> u(ends[piece] + 1e-3, ends[piece + 1] - 1e-3);
        for (int i = 0; i < 1000; ++i) {
            const double x = u(rng);
            const double fd = (f(x + h) - f(x - h)) / (2 * h);
            const double d = f.derivative(x);
            CHECK(std::abs(fd - d) <= 1e-4 * (1.0 + std::abs(d)));
        }
    }
}

TEST_CASE("distance to breakpoint set", "[piecewise]") {
    const std::vector<double> one = {0.0};
    const std::vector<double> two = {0.0, 1.0};
    CHECK(dist_to_theta(one, 0.3) == 0.3);
    CHECK(dist_to_theta(two, 0.6) == Catch::Approx(0.4).margin(1e-15));
    CHECK(dist_to_theta(one, 0.0) == 0.0);
    CHECK_THROWS_AS(dist_to_theta(std::vector<double>{}, 1.0), std::invalid_argument);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (int i = 0; i < 2000; ++i) {
        const double x = u(rng), y = u(rng);
        CHECK(std::abs(dist_to_theta(two, x) - dist_to_theta(two, y)) <=
              std::abs(x - y) + 1e-15);
    }
}

TEST_CASE("construction rejects malformed input", "[piecewise]") {
    auto c = [](double v) {
        return Piece{[v](double) { return v; }, [](double) { return 0.0; }};
    };
    CHECK_THROWS_AS(PiecewiseFn({1.0, 1.0}, {c(0), c(1), c(2)}), std::invalid_argument);
    CHECK_THROWS_AS(PiecewiseFn({0.0}, {c(0)}), std::invalid_argument);
    CHECK_THROWS_AS(PiecewiseFn({0.0}, {c(0), c(1)}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("problem validation", "[piecewise]") {
    auto step_drift = [](double at) {
        return PiecewiseFn({at},
                           {Piece{[](double) { return 1.0; }, [](double) { return 0.0; }},
                            Piece{[](double) { return -1.0; }, [](double) { return 0.0; }}});
    };

    SECTION("fixture passes all checks") {
        auto p = make_problem(0.5, step_drift(0.0), PiecewiseFn::constant(1.0), 0.4);
        auto rep = validate_problem(p);
        CHECK(rep.hard_pass());
        CHECK(rep.all_pass());
    }
    SECTION("vanishing sigma at a breakpoint fails hard") {
        auto p = make_problem(0.5, step_drift(0.0),
                              PiecewiseFn::smooth([](double x) { return x; },
                                                  [](double) { return 1.0; }),
                              0.4);
        CHECK_FALSE(validate_problem(p).hard_pass());
    }
    SECTION("eps0 above half the minimum gap fails hard") {
        PiecewiseFn mu({0.0, 0.5},
                       {Piece{[](double) { return 1.0; }, [](double) { return 0.0; }},
                        Piece{[](double) { return -1.0; }, [](double) { return 0.0; }},
                        Piece{[](double) { return 1.0; }, [](double) { return 0.0; }}});
        auto p = make_problem(0.25, std::move(mu), PiecewiseFn::constant(1.0), 0.3);
        CHECK_FALSE(validate_problem(p).hard_pass()); // half gap = 0.25 < 0.3
        p.eps0 = 0.25;
        CHECK(validate_problem(p).hard_pass());
    }
    SECTION("discontinuous sigma fails hard") {
        auto p = make_problem(0.0, PiecewiseFn::constant(0.0), step_drift(0.0), 0.4);
        CHECK_FALSE(validate_problem(p).hard_pass());
    }
}

TEST_CASE("one-sided limits and jumps", "[piecewise]") {
    auto f = sign_drift();
    CHECK(f.left_limit(0) == 1.0);
    CHECK(f.right_limit(0) == -1.0);
    CHECK(f.jump(0) == -2.0);
    CHECK(f.has_jump(0));
    CHECK_FALSE(f.continuous());
    CHECK(PiecewiseFn::constant(3.0).continuous());
}
