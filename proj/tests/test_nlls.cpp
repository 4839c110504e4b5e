#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "cspin/nlls.hpp"

using namespace cspin::fit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("noiseless linear model is recovered exactly") {
    std::vector<double> xs, ys;
    for (int i = 0; i < 20; ++i) {
        xs.push_back(0.1 * i);
        ys.push_back(2.0 * xs.back());
    }
    auto fn = [&](const std::vector<double>& p) {
        std::vector<double> r(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) r[i] = p[0] * xs[i] - ys[i];
        return r;
    };
    auto fit = nlls_solve(fn, {0.3}, {"slope"});
    REQUIRE(fit.converged);
    REQUIRE_THAT(fit.estimate("slope"), WithinRel(2.0, 1e-10));
    REQUIRE(fit.rss < 1e-18);
    REQUIRE(fit.sigma("slope") < 1e-9);
}

TEST_CASE("Rosenbrock valley") {
    auto fn = [](const std::vector<double>& p) {
        return std::vector<double>{10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]};
    };
    auto fit = nlls_solve(fn, {-1.2, 1.0}, {"x", "y"});
    REQUIRE(fit.converged);
    REQUIRE_THAT(fit.estimate("x"), WithinAbs(1.0, 1e-6));
    REQUIRE_THAT(fit.estimate("y"), WithinAbs(1.0, 1e-6));
}

TEST_CASE("noisy straight line matches the closed-form solution") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> noise(0.0, 0.05);
    std::vector<double> xs, ys;
    for (int i = 0; i < 60; ++i) {
        xs.push_back(0.05 * i);
        ys.push_back(1.3 * xs.back() - 0.4 + noise(rng));
    }
    auto fn = [&](const std::vector<double>& p) {
        std::vector<double> r(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) r[i] = p[0] * xs[i] + p[1] - ys[i];
        return r;
    };
    auto fit = nlls_solve(fn, {1.0, 0.0}, {"slope", "offset"}, {},
                          NllsOptions{.typical = {1.0, 1.0}});

    const double n = double(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i]; sy += ys[i]; sxx += xs[i] * xs[i]; sxy += xs[i] * ys[i];
    }
    const double det = n * sxx - sx * sx;
    const double slope = (n * sxy - sx * sy) / det;
    const double offset = (sxx * sy - sx * sxy) / det;
    REQUIRE_THAT(fit.estimate("slope"), WithinRel(slope, 1e-8));
    REQUIRE_THAT(fit.estimate("offset"), WithinRel(offset, 1e-8));

    double rss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double r = slope * xs[i] + offset - ys[i];
        rss += r * r;
    }
    const double s2 = rss / (n - 2.0);
    REQUIRE_THAT(fit.sigma("slope"), WithinRel(std::sqrt(s2 * n / det), 1e-5));
    REQUIRE_THAT(fit.sigma("offset"), WithinRel(std::sqrt(s2 * sxx / det), 1e-5));
}

TEST_CASE("uncertainties scale linearly with the noise amplitude") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> xs, eps;
    for (int i = 0; i < 40; ++i) {
        xs.push_back(0.1 * i + 0.1);
        eps.push_back(noise(rng));
    }
    auto fit_with = [&](double amp) {
        auto fn = [&, amp](const std::vector<double>& p) {
            std::vector<double> r(xs.size());
            for (std::size_t i = 0; i < xs.size(); ++i)
                r[i] = p[0] * xs[i] - (0.7 * xs[i] + amp * 0.02 * eps[i]);
            return r;
        };
        return nlls_solve(fn, {0.5}, {"slope"});
    };
    auto a = fit_with(1.0);
    auto b = fit_with(3.0);
    REQUIRE_THAT(b.sigma("slope") / a.sigma("slope"), WithinRel(3.0, 1e-6));
}

TEST_CASE("bounded parameter pins and is flagged") {
    auto fn = [](const std::vector<double>& p) { return std::vector<double>{p[0] - 5.0}; };
    auto fit = nlls_solve(fn, {1.0}, {"level"}, {Bounds{0.0, 2.0}});
    REQUIRE(fit.converged);
    REQUIRE_THAT(fit.estimate("level"), WithinAbs(2.0, 1e-12));
    bool flagged = false;
    for (const auto& w : fit.warnings) flagged |= w.find("pinned") != std::string::npos;
    REQUIRE(flagged);
}

TEST_CASE("iteration cap raises a typed error carrying the best point") {
    auto fn = [](const std::vector<double>& p) {
        return std::vector<double>{10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]};
    };
    NllsOptions opts;
    opts.max_iterations = 1;
    opts.simplex_iterations = 0;
    opts.ftol = 0.0;
    opts.xtol = 0.0;
    try {
        nlls_solve(fn, {-1.2, 1.0}, {"x", "y"}, {}, opts);
        FAIL("expected iteration_limit_error");
    } catch (const iteration_limit_error& e) {
        REQUIRE(e.best.estimates.size() == 2);
        REQUIRE_FALSE(e.best.converged);
    }
}

TEST_CASE("degenerate inputs are rejected up front") {
    auto fn = [](const std::vector<double>& p) { return std::vector<double>{p[0]}; };
    REQUIRE_THROWS_AS(nlls_solve(fn, {}, {}), std::invalid_argument);
    auto two = [](const std::vector<double>& p) {
        return std::vector<double>{p[0] + p[1]};
    };
    REQUIRE_THROWS_AS(nlls_solve(two, {1.0, 2.0}, {"a", "b"}), std::invalid_argument);
    auto bad = [](const std::vector<double>&) {
        return std::vector<double>{std::numeric_limits<double>::quiet_NaN()};
    };
    REQUIRE_THROWS_AS(nlls_solve(bad, {1.0}, {"a"}), std::invalid_argument);
    REQUIRE_THROWS_AS(nlls_solve(fn, {1.0}, {"a"}, {Bounds{2.0, 1.0}}),
                      std::invalid_argument);
}

TEST_CASE("grid seeding picks the best candidate") {
    auto fn = [](const std::vector<double>& p) {
        return std::vector<double>{std::sin(p[0]) + 0.9, p[0] / 10.0};
    };
    auto seed = best_of_grid(fn, {{0.0}, {-1.0}, {-1.1}, {2.0}, {4.0}});
    REQUIRE(seed[0] == -1.1);
    REQUIRE_THROWS_AS(best_of_grid(fn, {}), std::invalid_argument);
}

TEST_CASE("exponential decay round trip through grid seed and polish") {
    std::vector<double> ts, ys;
    for (int i = 0; i < 30; ++i) {
        ts.push_back(1e-7 * i);
        ys.push_back(0.8 * std::exp(-ts.back() / 2.3e-6));
    }
    auto fn = [&](const std::vector<double>& p) {
        std::vector<double> r(ts.size());
        for (std::size_t i = 0; i < ts.size(); ++i)
            r[i] = p[0] * std::exp(-ts[i] / p[1]) - ys[i];
        return r;
    };
    std::vector<std::vector<double>> grid;
    for (double tau : {3e-7, 1e-6, 3e-6, 1e-5}) grid.push_back({1.0, tau});
    auto fit = nlls_solve(fn, best_of_grid(fn, grid), {"amp", "tau"}, {},
                          NllsOptions{.typical = {1.0, 1e-6}});
    REQUIRE(fit.converged);
    REQUIRE_THAT(fit.estimate("amp"), WithinRel(0.8, 1e-8));
    REQUIRE_THAT(fit.estimate("tau"), WithinRel(2.3e-6, 1e-8));
}

TEST_CASE("result accessors guard unknown names") {
    auto fn = [](const std::vector<double>& p) {
        return std::vector<double>{p[0] - 1.0, p[0] - 1.0};
    };
    auto fit = nlls_solve(fn, {0.0}, {"level"});
    REQUIRE_THROWS_AS(fit.estimate("nope"), std::out_of_range);
    REQUIRE(fit.iterations > 0);
}

TEST_CASE("result is invariant under reordering of the data points") {
    std::mt19937_64 rng(4242);
    std::normal_distribution<double> noise(0.0, 0.03);
    std::vector<double> xs, ys;
    for (int i = 0; i < 40; ++i) {
        xs.push_back(0.05 * i);
        ys.push_back(1.7 * std::exp(-0.9 * xs.back()) + noise(rng));
    }
    auto make_fn = [&](bool reversed) {
        return [&, reversed](const std::vector<double>& p) {
            std::vector<double> r(xs.size());
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const std::size_t k = reversed ? xs.size() - 1 - i : i;
                r[i] = p[0] * std::exp(-p[1] * xs[k]) - ys[k];
            }
            return r;
        };
    };
    auto a = nlls_solve(make_fn(false), {1.0, 0.5}, {"amp", "rate"});
    auto b = nlls_solve(make_fn(true), {1.0, 0.5}, {"amp", "rate"});
    REQUIRE_THAT(b.estimate("amp"), WithinRel(a.estimate("amp"), 1e-10));
    REQUIRE_THAT(b.estimate("rate"), WithinRel(a.estimate("rate"), 1e-10));
    REQUIRE_THAT(b.sigma("rate"), WithinRel(a.sigma("rate"), 1e-8));
}
