#pragma once

// Two-level description of a single collective nuclear-spin (magnon)
// excitation exchanged with the electron under a strong drive. The ground
// level is the electron-up state with an unchanged bath; the excited level
// has the electron flipped and one collective bath quantum added or
// removed. Populations evolve under a Lindblad equation with symmetric
// spin-flip noise and pure dephasing; inhomogeneous Overhauser detuning is
// handled by weighted averaging over a Gaussian grid.

#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cspin::magnon {

// Hermitian 2x2 density matrix in the (ground, excited) basis.
struct DensityMatrix2 {
    std::complex<double> gg{1.0, 0.0};
    std::complex<double> ge{0.0, 0.0};
    std::complex<double> eg{0.0, 0.0};
    std::complex<double> ee{0.0, 0.0};

    static DensityMatrix2 ground() { return {}; }
    static DensityMatrix2 excited() { return {{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}, {1.0, 0.0}}; }

    double trace() const { return gg.real() + ee.real(); }
    double hermiticity_error() const {
        return std::max({std::abs(ge - std::conj(eg)), std::abs(gg.imag()),
                         std::abs(ee.imag())});
    }
    double min_eigenvalue() const {
        const double half_diff = 0.5 * (gg.real() - ee.real());
        return 0.5 * trace() - std::hypot(half_diff, std::abs(ge));
    }
    void validate() const {
        if (hermiticity_error() > 1e-12)
            throw std::invalid_argument("DensityMatrix2: not Hermitian");
        if (std::abs(trace() - 1.0) > 1e-9)
            throw std::invalid_argument("DensityMatrix2: trace deviates from one");
        if (min_eigenvalue() < -1e-9)
            throw std::invalid_argument("DensityMatrix2: negative eigenvalue");
    }
};

// Rates of the two-level model. All frequencies ordinary Hz; the coherent
// part is H = pi * [[detuning, rabi], [rabi, -detuning]] in Hz units, so an
// undamped resonant oscillation has period exactly 1/rabi. Dissipators:
// symmetric raising/lowering channels at spin_flip_per_s each (unnormalized
// ladder operators, giving saturation 0.5*(1 - exp(-2 gamma t)) from the
// ground state) and pure dephasing with S_z = sigma_z/2, which damps the
// coherence by dephasing_per_s / 2.
struct LindbladParams {
    double rabi_hz = 0.0;
    double detuning_hz = 0.0;
    double spin_flip_per_s = 0.0;
    double dephasing_per_s = 0.0;

    void validate() const {
        if (rabi_hz < 0.0 || spin_flip_per_s < 0.0 || dephasing_per_s < 0.0)
            throw std::invalid_argument("LindbladParams: negative rate");
        if (!std::isfinite(rabi_hz) || !std::isfinite(detuning_hz) ||
            !std::isfinite(spin_flip_per_s) || !std::isfinite(dephasing_per_s))
            throw std::invalid_argument("LindbladParams: non-finite parameter");
    }
};

class integration_error : public std::runtime_error {
  public:
    integration_error(const std::string& msg, double time_s)
        : std::runtime_error(msg + " (around t = " + std::to_string(time_s) + " s)"),
          time_s(time_s) {}
    double time_s;
};

// sqrt(5 N / 2): collective enhancement of the per-nucleus coupling by the
// root-mean-square transverse spin of N thermal spin-3/2 nuclei.
inline double rms_enhancement(double n_nuclei) {
    return std::sqrt(2.5 * n_nuclei);
}

struct MonteCarloEstimate {
    double estimate = 0.0;  // sqrt(mean of I^2 - M^2)
    double std_error = 0.0; // propagated standard error of the estimate
    std::uint64_t samples = 0;
};

// Direct sampling check of the enhancement: draw a collective spin vector
// with Gaussian components of variance 5N/4, a uniform projection M in
// [-I, I], and average I^2 - M^2. Deterministic for a fixed seed.
inline MonteCarloEstimate monte_carlo_enhancement(double n_nuclei, std::uint64_t samples,
                                                  std::uint64_t seed) {
    if (!(n_nuclei >= 1.0))
        throw std::invalid_argument("monte_carlo_enhancement: need at least one nucleus");
    if (samples < 1000)
        throw std::invalid_argument("monte_carlo_enhancement: need at least 1000 samples");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> comp(0.0, std::sqrt(1.25 * n_nuclei));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double mean = 0.0, m2 = 0.0;
    for (std::uint64_t i = 0; i < samples; ++i) {
        const double ix = comp(rng), iy = comp(rng), iz = comp(rng);
        const double len = std::sqrt(ix * ix + iy * iy + iz * iz);
        const double proj = (2.0 * unit(rng) - 1.0) * len;
        const double value = len * len - proj * proj;
        const double delta = value - mean;
        mean += delta / double(i + 1);
        m2 += delta * (value - mean);
    }
    MonteCarloEstimate out;
    out.samples = samples;
    out.estimate = std::sqrt(mean);
    const double se_mean = std::sqrt(m2 / double(samples - 1) / double(samples));
    out.std_error = se_mean / (2.0 * out.estimate);
    return out;
}

// Magnon Rabi rate on a Larmor sideband: the per-nucleus non-collinear
// coupling, reduced by rabi/(2*larmor) through the drive-dressed mixing,
// and collectively enhanced.
inline double magnon_rabi_rate(double noncollinear_hz, double rabi_hz,
                               double nuclear_larmor_hz, double n_nuclei) {
    if (!(nuclear_larmor_hz > 0.0))
        throw std::invalid_argument("magnon_rabi_rate: Larmor frequency must be positive");
    if (noncollinear_hz < 0.0 || rabi_hz < 0.0)
        throw std::invalid_argument("magnon_rabi_rate: negative coupling or drive");
    if (!(n_nuclei >= 1.0))
        throw std::invalid_argument("magnon_rabi_rate: need at least one nucleus");
    return noncollinear_hz * rabi_hz / (2.0 * nuclear_larmor_hz) * rms_enhancement(n_nuclei);
}

// Drive configuration for the dressed-state picture. The mixing angle obeys
// tan(2 theta) = -rabi / detuning.
struct DriveConfig {
    double rabi_hz = 0.0;
    double detuning_hz = 0.0;
    double stueckelberg_rad = 0.0;
};

inline DriveConfig make_drive(double rabi_hz, double detuning_hz) {
    if (rabi_hz < 0.0) throw std::invalid_argument("make_drive: negative drive");
    DriveConfig d;
    d.rabi_hz = rabi_hz;
    d.detuning_hz = detuning_hz;
    d.stueckelberg_rad = 0.5 * std::atan2(-rabi_hz, detuning_hz);
    return d;
}

// Exchange rate in the far-detuned (two-photon) configuration,
// |2 (1 + rabi^2/detuning^2)^{-1/2} * a_nc * rabi / (4 detuning)| times the
// collective enhancement. Diverges as written at zero detuning, which is
// rejected; use magnon_rabi_rate for the resonant sideband instead.
inline double detuned_exchange_rate(double noncollinear_hz, const DriveConfig& drive,
                                    double enhancement) {
    if (drive.detuning_hz == 0.0)
        throw std::invalid_argument(
            "detuned_exchange_rate: zero detuning; use the resonant sideband rate");
    if (noncollinear_hz < 0.0 || enhancement < 0.0)
        throw std::invalid_argument("detuned_exchange_rate: negative inputs");
    const double ratio = drive.rabi_hz / drive.detuning_hz;
    const double dressed = 1.0 / std::sqrt(1.0 + ratio * ratio);
    return std::abs(2.0 * dressed * noncollinear_hz * drive.rabi_hz /
                    (4.0 * drive.detuning_hz) * enhancement);
}

namespace detail {

using State = std::array<double, 4>; // p_ground, p_excited, Re(rho_ge), Im(rho_ge)

struct LindbladRhs {
    double two_pi_detuning;
    double pi_rabi;
    double flip;
    double coherence_decay; // spin_flip + dephasing / 2

    void operator()(const State& y, State& dydt, double) const {
        const double pg = y[0], pe = y[1], u = y[2], v = y[3];
        dydt[0] = -2.0 * pi_rabi * v + flip * (pe - pg);
        dydt[1] = 2.0 * pi_rabi * v + flip * (pg - pe);
        dydt[2] = two_pi_detuning * v - coherence_decay * u;
        dydt[3] = -two_pi_detuning * u - pi_rabi * (pe - pg) - coherence_decay * v;
    }
};

inline State to_state(const DensityMatrix2& rho) {
    return {rho.gg.real(), rho.ee.real(), rho.ge.real(), rho.ge.imag()};
}

inline DensityMatrix2 to_matrix(const State& y) {
    DensityMatrix2 rho;
    rho.gg = {y[0], 0.0};
    rho.ee = {y[1], 0.0};
    rho.ge = {y[2], y[3]};
    rho.eg = std::conj(rho.ge);
    return rho;
}

} // namespace detail

// Integrate the Lindblad equation from rho0 at t = 0 and return the state
// at each requested time (non-decreasing, starting at or after zero).
inline std::vector<DensityMatrix2> evolve_lindblad(const DensityMatrix2& rho0,
                                                   const LindbladParams& params,
                                                   const std::vector<double>& time_s) {
    params.validate();
    rho0.validate();
    if (time_s.empty()) throw std::invalid_argument("evolve_lindblad: no sample times");
    if (time_s.front() < 0.0)
        throw std::invalid_argument("evolve_lindblad: negative sample time");
    for (std::size_t i = 1; i < time_s.size(); ++i)
        if (time_s[i] < time_s[i - 1])
            throw std::invalid_argument("evolve_lindblad: sample times must not decrease");

    const detail::LindbladRhs rhs{2.0 * std::numbers::pi * params.detuning_hz,
                                  std::numbers::pi * params.rabi_hz,
                                  params.spin_flip_per_s,
                                  params.spin_flip_per_s + 0.5 * params.dephasing_per_s};

    namespace ode = boost::numeric::odeint;
    auto stepper = ode::make_controlled(1e-12, 1e-9, ode::runge_kutta_dopri5<detail::State>());

    // pick a conservative initial step from the fastest timescale
    const double fastest =
        std::max({std::abs(params.detuning_hz), params.rabi_hz, params.spin_flip_per_s,
                  params.dephasing_per_s, 1.0});
    const double dt0 = 0.05 / fastest;

    detail::State y = detail::to_state(rho0);
    std::vector<DensityMatrix2> out;
    out.reserve(time_s.size());
    double t = 0.0;
    for (double target : time_s) {
        if (target > t) {
            try {
                ode::integrate_adaptive(stepper, rhs, y, t, target,
                                        std::min(dt0, target - t));
            } catch (const std::exception& e) {
                throw integration_error(std::string("evolve_lindblad: ") + e.what(), t);
            }
            t = target;
        }
        out.push_back(detail::to_matrix(y));
    }
    return out;
}

inline std::vector<double> excited_population(const DensityMatrix2& rho0,
                                              const LindbladParams& params,
                                              const std::vector<double>& time_s) {
    auto states = evolve_lindblad(rho0, params, time_s);
    std::vector<double> out(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) out[i] = states[i].ee.real();
    return out;
}

// Gaussian Overhauser detuning spread, sampled on a uniform sigma grid in
// [-2, 2] with standard-normal weights normalized to one.
struct EnsembleSpread {
    double t2_star_s = std::numeric_limits<double>::infinity();
    std::vector<double> sigma_grid;
    std::vector<double> weights;

    void validate() const {
        if (!(t2_star_s > 0.0))
            throw std::invalid_argument("EnsembleSpread: T2* must be positive");
        if (sigma_grid.size() != weights.size() || sigma_grid.empty())
            throw std::invalid_argument("EnsembleSpread: grid/weight mismatch");
        double sum = 0.0;
        for (double w : weights) {
            if (w < 0.0) throw std::invalid_argument("EnsembleSpread: negative weight");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("EnsembleSpread: weights must sum to one");
    }
};

inline EnsembleSpread make_spread(double t2_star_s, std::size_t n_points = 41) {
    if (!(t2_star_s > 0.0))
        throw std::invalid_argument("make_spread: T2* must be positive");
    if (n_points == 0) throw std::invalid_argument("make_spread: empty grid");
    EnsembleSpread s;
    s.t2_star_s = t2_star_s;
    s.sigma_grid.assign(n_points, 0.0);
    // build the negative half and mirror it so +-sigma pairs are exact
    for (std::size_t i = 0; i < n_points / 2; ++i) {
        const double sigma = -2.0 + 4.0 * double(i) / double(n_points - 1);
        s.sigma_grid[i] = sigma;
        s.sigma_grid[n_points - 1 - i] = -sigma;
    }
    double sum = 0.0;
    for (double sigma : s.sigma_grid) {
        s.weights.push_back(std::exp(-0.5 * sigma * sigma));
        sum += s.weights.back();
    }
    for (double& w : s.weights) w /= sum;
    return s;
}

// Detuning offset of one ensemble member: sigma * sqrt(2) / (2 pi T2*).
inline double overhauser_detuning(const EnsembleSpread& s, double sigma) {
    if (std::isinf(s.t2_star_s)) return 0.0;
    return sigma * std::numbers::sqrt2 / (2.0 * std::numbers::pi * s.t2_star_s);
}

// Weighted average of the excited population over the detuning spread.
// Members at +-sigma share one integration when the initial coherence
// vanishes, since the population is even in the detuning then.
inline std::vector<double> ensemble_average_evolution(const DensityMatrix2& rho0,
                                                      const LindbladParams& params,
                                                      const EnsembleSpread& spread,
                                                      const std::vector<double>& time_s) {
    spread.validate();
    const bool even_in_detuning = std::abs(rho0.ge) == 0.0;
    std::map<double, std::vector<double>> cache;
    std::vector<double> avg(time_s.size(), 0.0);
    for (std::size_t k = 0; k < spread.sigma_grid.size(); ++k) {
        auto member = params;
        member.detuning_hz = params.detuning_hz + overhauser_detuning(spread, spread.sigma_grid[k]);
        const double key = even_in_detuning ? std::abs(member.detuning_hz) : member.detuning_hz;
        auto it = cache.find(key);
        if (it == cache.end())
            it = cache.emplace(key, excited_population(rho0, member, time_s)).first;
        for (std::size_t i = 0; i < time_s.size(); ++i)
            avg[i] += spread.weights[k] * it->second[i];
    }
    return avg;
}

// Excited-state population left behind by the spin-flip channels alone,
// starting from the ground state.
inline double saturation_background(double spin_flip_per_s, double time_s) {
    return 0.5 * (1.0 - std::exp(-2.0 * spin_flip_per_s * time_s));
}

// One resonance of a sideband spectrum: a two-level response centered at
// center_hz on the drive-detuning axis.
struct SpectralLine {
    std::string label;
    double center_hz = 0.0;
    double rabi_hz = 0.0; // magnon Rabi rate for sidebands, drive rate for the carrier
    double spin_flip_per_s = 0.0;
    double dephasing_per_s = 0.0;
};

struct SpectrumMap {
    std::vector<double> detuning_hz;
    std::vector<double> time_s;
    std::vector<std::vector<double>> population; // [detuning][time]
    std::vector<std::string> warnings;
};

// Compose independent two-level responses on a common detuning axis. Each
// line contributes its ensemble-averaged population above its own spin-flip
// background; a single shared background (from the first line) is added
// back, so far off resonance the map reduces to that saturation curve.
// Lines closer than five linewidths raise a warning since the independent
// treatment degrades there.
inline SpectrumMap simulate_sideband_spectrum(const std::vector<SpectralLine>& lines,
                                              const std::vector<double>& detuning_hz,
                                              const std::vector<double>& time_s,
                                              const EnsembleSpread& spread) {
    if (lines.empty()) throw std::invalid_argument("simulate_sideband_spectrum: no lines");
    if (detuning_hz.empty() || time_s.empty())
        throw std::invalid_argument("simulate_sideband_spectrum: empty grid");
    spread.validate();

    SpectrumMap map;
    map.detuning_hz = detuning_hz;
    map.time_s = time_s;

    const double spread_hz = std::isinf(spread.t2_star_s)
                                 ? 0.0
                                 : std::numbers::sqrt2 /
                                       (2.0 * std::numbers::pi * spread.t2_star_s);
    auto linewidth = [&](const SpectralLine& l) {
        return std::hypot(l.rabi_hz, l.dephasing_per_s / (2.0 * std::numbers::pi)) +
               2.0 * spread_hz;
    };
    for (std::size_t i = 0; i < lines.size(); ++i) {
        for (std::size_t j = i + 1; j < lines.size(); ++j) {
            const double gap = std::abs(lines[i].center_hz - lines[j].center_hz);
            const double width = std::max(linewidth(lines[i]), linewidth(lines[j]));
            if (gap < 5.0 * width)
                map.warnings.push_back("lines '" + lines[i].label + "' and '" +
                                       lines[j].label +
                                       "' overlap within five linewidths");
        }
    }

    map.population.assign(detuning_hz.size(),
                          std::vector<double>(time_s.size(), 0.0));
    const auto rho0 = DensityMatrix2::ground();
    for (std::size_t d = 0; d < detuning_hz.size(); ++d) {
        auto& row = map.population[d];
        for (std::size_t i = 0; i < time_s.size(); ++i)
            row[i] = saturation_background(lines.front().spin_flip_per_s, time_s[i]);
        for (const auto& line : lines) {
            LindbladParams p;
            p.rabi_hz = line.rabi_hz;
            p.detuning_hz = detuning_hz[d] - line.center_hz;
            p.spin_flip_per_s = line.spin_flip_per_s;
            p.dephasing_per_s = line.dephasing_per_s;
            const auto pop = ensemble_average_evolution(rho0, p, spread, time_s);
            for (std::size_t i = 0; i < time_s.size(); ++i)
                row[i] += pop[i] - saturation_background(line.spin_flip_per_s, time_s[i]);
        }
    }
    return map;
}

} // namespace cspin::magnon
