#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "cspin/coherence.hpp"

using namespace cspin::coherence;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Alternative factored route for the double-refocus filter,
// 32 sin^4(pi x/2) sin^2(pi x), algebraically equal everywhere.
double cp2_factored(double x) {
    const double s = std::sin(std::numbers::pi * x / 2.0);
    const double sp = std::sin(std::numbers::pi * x);
    return 32.0 * s * s * s * s * sp * sp;
}

VisibilityModel gaas_model(double n_total = 7.6e4, double sin_tilt = 0.207,
                           double field_scale = 1.0) {
    VisibilityModel m;
    m.sin_tilt = sin_tilt;
    m.n_total = n_total;
    m.registry = cspin::species::default_registry();
    m.technical.field_scale = field_scale;
    return m;
}

VisibilityModel single_species_model() {
    VisibilityModel m;
    m.sin_tilt = 0.2;
    m.n_total = 1000.0;
    m.registry.field_t = 1.0;
    m.registry.species = {{"X", 1.5, 1.0e9, 1.0e7, 1.0}};
    return m;
}

} // namespace

TEST_CASE("filter functions match the closed forms at random points") {
    std::mt19937_64 rng(20260815);
    std::uniform_real_distribution<double> ux(0.0, 8.0);
    for (int i = 0; i < 1000; ++i) {
        const double x = ux(rng);
        const double s = std::sin(std::numbers::pi * x / 2.0);
        const double cp1 = 8.0 * std::pow(s, 4.0);
        REQUIRE(std::abs(filter_value(PulseSequence::cp1, x) - cp1) <=
                1e-10 * std::max(1.0, cp1));
        const double cp2 = cp2_factored(x);
        REQUIRE(std::abs(filter_value(PulseSequence::cp2, x) - cp2) <=
                1e-10 * std::max(1.0, cp2));
    }
}

TEST_CASE("filter landmarks") {
    REQUIRE_THAT(filter_value(PulseSequence::cp1, 1.0), WithinRel(8.0, 1e-12));
    REQUIRE(filter_value(PulseSequence::cp1, 0.0) == 0.0);
    REQUIRE(filter_value(PulseSequence::cp1, 2.0) < 1e-30);
    // removable singularity value: 8 sin^4(pi/4) * 4 sin^2(pi/2) = 8
    REQUIRE_THAT(filter_value(PulseSequence::cp2, 0.5), WithinRel(8.0, 1e-12));
    REQUIRE(filter_value(PulseSequence::cp2, 1.0) < 1e-28);
    for (double x : {0.3, 0.77, 1.9, 2.31, 3.6}) {
        REQUIRE(filter_value(PulseSequence::cp1, x) >= 0.0);
        REQUIRE(filter_value(PulseSequence::cp2, x) >= 0.0);
    }
}

TEST_CASE("double-refocus filter is continuous across half-integers") {
    for (int k = 0; k <= 6; ++k) {
        const double x0 = k + 0.5;
        const double at = filter_value(PulseSequence::cp2, x0);
        for (double eps : {1e-7, -1e-7, 3e-8}) {
            const double near = filter_value(PulseSequence::cp2, x0 + eps);
            REQUIRE(std::abs(near - at) <= 1e-4 * std::max(1.0, at));
        }
    }
}

TEST_CASE("visibility is exactly one at zero time and without tilt") {
    auto m = gaas_model();
    REQUIRE(visibility(m, PulseSequence::cp1, 0.0) == 1.0);
    REQUIRE(visibility(m, PulseSequence::cp2, 0.0) == 1.0);
    auto flat = gaas_model(7.6e4, 0.0);
    REQUIRE(visibility(flat, PulseSequence::cp1, 3.7e-8) == 1.0);
}

TEST_CASE("two-sublattice model matches the abundance-weighted closed form") {
    auto m = gaas_model(7.6e4, 0.207, 1.0177);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ut(0.0, 2.5e-7);
    for (int i = 0; i < 50; ++i) {
        const double t = ut(rng);
        for (auto seq : {PulseSequence::cp1, PulseSequence::cp2}) {
            double expo = 0.0;
            for (const auto& s : m.registry.species) {
                const double w = m.technical.field_scale *
                                 cspin::species::larmor_frequency(s, m.registry.field_t);
                const double amp = s.hyperfine_A_hz * m.sin_tilt * std::sqrt(s.abundance) / w;
                expo += 1.25 / m.n_total * amp * amp * filter_value(seq, w * t);
            }
            REQUIRE_THAT(visibility(m, seq, t), WithinRel(std::exp(-expo), 1e-12));
        }
    }
}

TEST_CASE("coherence dip at the arsenic Larmor period") {
    auto m = gaas_model();
    const double w_as = cspin::species::larmor_frequency(m.registry, "75As");
    const double dip = visibility(m, PulseSequence::cp1, 1.0 / w_as);
    REQUIRE(dip > 0.69);
    REQUIRE(dip < 0.74);
    REQUIRE_THAT(dip, WithinRel(0.7135, 5e-3));
}

TEST_CASE("field scale moves the dip position") {
    const double b = 1.0177;
    auto m = gaas_model(7.6e4, 0.207, b);
    m.registry.species = {m.registry.species.front()}; // arsenic line only
    const double w_as = cspin::species::larmor_frequency(m.registry, "75As");
    double best_t = 0.0, best_w = 2.0;
    for (int i = 0; i < 4000; ++i) {
        const double t = 1.9e-8 + i * 2.0e-12;
        const double w = visibility(m, PulseSequence::cp1, t);
        if (w < best_w) { best_w = w; best_t = t; }
    }
    REQUIRE(std::abs(best_t - 1.0 / (b * w_as)) < std::abs(best_t - 1.0 / w_as));
    REQUIRE_THAT(best_t, WithinRel(1.0 / (b * w_as), 2e-4));
}

TEST_CASE("field scale is a pure rescaling of the time axis") {
    // exponent_b(t) = exponent_1(b t) / b^2, so W_b(t) = W_1(b t)^(1/b^2)
    const double b = 1.0177;
    auto scaled = gaas_model(7.6e4, 0.207, b);
    auto plain = gaas_model(7.6e4, 0.207, 1.0);
    for (double t : {1.3e-8, 2.2e-8, 4.1e-8, 8.9e-8}) {
        for (auto seq : {PulseSequence::cp1, PulseSequence::cp2}) {
            REQUIRE_THAT(visibility(scaled, seq, t),
                         WithinRel(std::pow(visibility(plain, seq, b * t), 1.0 / (b * b)),
                                   1e-12));
        }
    }
}

TEST_CASE("dip deepens with tilt and with fewer nuclei") {
    const double w_as =
        cspin::species::larmor_frequency(cspin::species::default_registry(), "75As");
    const double t = 1.0 / w_as;
    REQUIRE(visibility(gaas_model(7.6e4, 0.207), PulseSequence::cp1, t) <
            visibility(gaas_model(7.6e4, 0.1035), PulseSequence::cp1, t));
    REQUIRE(visibility(gaas_model(3.8e4, 0.207), PulseSequence::cp1, t) <
            visibility(gaas_model(7.6e4, 0.207), PulseSequence::cp1, t));
}

TEST_CASE("single species revives at full Larmor periods") {
    auto m = single_species_model();
    const double w = 1.0e7;
    for (int k = 2; k <= 6; k += 2)
        REQUIRE_THAT(visibility(m, PulseSequence::cp1, k / w), WithinAbs(1.0, 1e-12));
    for (int k = 1; k <= 4; ++k)
        REQUIRE_THAT(visibility(m, PulseSequence::cp2, k / w), WithinAbs(1.0, 1e-12));
    // odd integers are full-strength dips for single refocusing
    REQUIRE(visibility(m, PulseSequence::cp1, 1.0 / w) <
            visibility(m, PulseSequence::cp1, 0.9 / w));
}

TEST_CASE("noise comb reproduces the visibility through the overlap rule") {
    auto m = gaas_model(7.6e4, 0.207, 1.0177);
    auto comb = noise_spectrum(m);
    REQUIRE(comb.lines.size() == 3);
    REQUIRE(comb.lines[0].frequency_hz < comb.lines[1].frequency_hz);
    REQUIRE(comb.lines[1].frequency_hz < comb.lines[2].frequency_hz);
    REQUIRE(comb.lines[0].name == "75As");
    for (double t : {1.1e-8, 2.3e-8, 4.7e-8, 9.4e-8}) {
        for (auto seq : {PulseSequence::cp1, PulseSequence::cp2}) {
            double expo = 0.0;
            for (const auto& line : comb.lines)
                expo += line.weight * filter_value(seq, line.frequency_hz * t) /
                        (2.0 * std::numbers::pi * line.frequency_hz * line.frequency_hz);
            REQUIRE_THAT(visibility(m, seq, t), WithinRel(std::exp(-expo), 1e-12));
        }
    }
    auto flat = gaas_model(7.6e4, 0.0);
    for (const auto& line : noise_spectrum(flat).lines) REQUIRE(line.weight == 0.0);
}

TEST_CASE("visibility matches a broadened spectral-overlap quadrature") {
    auto m = gaas_model();
    auto comb = noise_spectrum(m);
    const double w_as = comb.lines[0].frequency_hz;
    for (double t : {0.6 / w_as, 1.0 / w_as, 1.42 / w_as, 2.3 / w_as}) {
        for (auto seq : {PulseSequence::cp1, PulseSequence::cp2}) {
            double expo = 0.0;
            for (const auto& line : comb.lines) {
                // Gaussian line of fractional width 1e-4, trapezoid over +-8 sigma
                const double sig = 1e-4 * line.frequency_hz;
                const int n = 4000;
                const double lo = line.frequency_hz - 8.0 * sig;
                const double step = 16.0 * sig / n;
                double acc = 0.0;
                for (int i = 0; i <= n; ++i) {
                    const double w = lo + i * step;
                    const double g = std::exp(-0.5 * (w - line.frequency_hz) *
                                              (w - line.frequency_hz) / (sig * sig)) /
                                     (sig * std::sqrt(2.0 * std::numbers::pi));
                    double f = filter_value(seq, w * t) / (w * w);
                    if (i == 0 || i == n) f *= 0.5;
                    acc += g * f;
                }
                expo += line.weight * acc * step / (2.0 * std::numbers::pi);
            }
            const double closed = visibility(m, seq, t);
            REQUIRE(std::abs(closed - std::exp(-expo)) < 1e-3);
        }
    }
}

TEST_CASE("polarization term feeds the line strength") {
    auto m = gaas_model();
    auto base = noise_spectrum(m);
    m.include_polarization = true;
    m.mean_polarization = {1000.0, 0.0, 0.0};
    auto shifted = noise_spectrum(m);
    const double n_as = m.n_total * 1.0 / 2.0;
    REQUIRE_THAT(shifted.lines[0].weight / base.lines[0].weight,
                 WithinRel((2.5 * n_as + 1000.0) / (2.5 * n_as), 1e-12));
    REQUIRE(shifted.lines[1].weight == base.lines[1].weight);
    m.mean_polarization = {1.0};
    REQUIRE_THROWS_AS(noise_spectrum(m), std::invalid_argument);
}

TEST_CASE("technical parameters wrap the bath visibility") {
    auto m = gaas_model();
    m.technical.visibility_scale = 0.87;
    REQUIRE_THAT(visibility_fit_model(m, PulseSequence::cp1, 0.0), WithinRel(0.87, 1e-12));
    m.technical.decay_time_s = 5.0e-7;
    const double t = 1.0e-7;
    REQUIRE_THAT(visibility_fit_model(m, PulseSequence::cp1, t),
                 WithinRel(0.87 * visibility(m, PulseSequence::cp1, t) * std::exp(-t / 5.0e-7),
                           1e-12));
}

TEST_CASE("model validation") {
    auto m = gaas_model();
    m.n_total = 0.0;
    REQUIRE_THROWS_AS(m.validate(), std::invalid_argument);
    m = gaas_model();
    m.sin_tilt = 1.2;
    REQUIRE_THROWS_AS(m.validate(), std::invalid_argument);
    m = gaas_model();
    m.technical.field_scale = 0.0;
    REQUIRE_THROWS_AS(m.validate(), std::invalid_argument);
}

TEST_CASE("stretched-exponential echo envelope") {
    EchoDecay d{2.0e-6, 2.0};
    REQUIRE(echo_envelope(d, 0.0) == 1.0);
    REQUIRE_THAT(echo_envelope(d, 2.0e-6), WithinRel(std::exp(-1.0), 1e-12));
    REQUIRE_THAT(echo_envelope(d, 4.0e-6), WithinRel(std::exp(-4.0), 1e-12));
    REQUIRE_THROWS_AS(echo_envelope({0.0, 2.0}, 1.0e-6), std::invalid_argument);
    REQUIRE_THROWS_AS(echo_envelope(d, -1.0e-6), std::invalid_argument);
}

TEST_CASE("sequence names round trip") {
    REQUIRE(sequence_from_string("CP1") == PulseSequence::cp1);
    REQUIRE(sequence_from_string("cp2") == PulseSequence::cp2);
    REQUIRE(std::string(to_string(PulseSequence::cp2)) == "CP2");
    REQUIRE_THROWS_AS(sequence_from_string("CPMG"), std::invalid_argument);
}
