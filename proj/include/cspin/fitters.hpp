#pragma once

// Spectroscopy fitting recipes: Gaussian sideband profiles, the Knight-shift
// chain from spin-dependent line positions to the nucleus count, damped
// Rabi oscillations in counts, and the magnon exchange fit against the
// ensemble-averaged two-level model.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cspin/magnon.hpp"
#include "cspin/nlls.hpp"

namespace cspin::fit {

namespace detail {

inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median: empty");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + long(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        std::nth_element(v.begin(), v.begin() + long(mid) - 1, v.end());
        m = 0.5 * (m + v[mid - 1]);
    }
    return m;
}

} // namespace detail

// Gaussian peak on a constant background,
// y = background + amplitude * exp(-(x - center)^2 / (2 width^2)).
// Picks the sign of the initial amplitude from the larger deviation off the
// median; a fitted amplitude consistent with zero is flagged.
inline FitResult fit_gaussian(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("fit_gaussian: ragged inputs");
    if (xs.size() < 5) throw std::invalid_argument("fit_gaussian: need at least 5 samples");
    double lo = xs[0], hi = xs[0];
    for (double x : xs) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    const double span = hi - lo;
    if (span <= 0.0) throw std::invalid_argument("fit_gaussian: zero x span");

    const double bg0 = detail::median(ys);
    std::size_t i_ext = 0;
    for (std::size_t i = 1; i < ys.size(); ++i)
        if (std::abs(ys[i] - bg0) > std::abs(ys[i_ext] - bg0)) i_ext = i;
    const double amp0 = ys[i_ext] - bg0;
    const double center0 = xs[i_ext];

    // half-maximum crossings around the extremum give the initial width
    double w0 = span / 6.0;
    if (amp0 != 0.0) {
        const double half = bg0 + 0.5 * amp0;
        double left = lo, right = hi;
        for (std::size_t i = i_ext; i-- > 0;) {
            if ((ys[i] - half) * (amp0 > 0 ? 1.0 : -1.0) < 0.0) {
                left = xs[i];
                break;
            }
        }
        for (std::size_t i = i_ext + 1; i < ys.size(); ++i) {
            if ((ys[i] - half) * (amp0 > 0 ? 1.0 : -1.0) < 0.0) {
                right = xs[i];
                break;
            }
        }
        if (right > left) w0 = std::max((right - left) / 2.355, span / 200.0);
    }

    auto fn = [&](const std::vector<double>& p) {
        std::vector<double> r(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double z = (xs[i] - p[0]) / p[1];
            r[i] = p[3] + p[2] * std::exp(-0.5 * z * z) - ys[i];
        }
        return r;
    };
    NllsOptions opts;
    opts.typical = {span, w0, std::max(std::abs(amp0), 1e-12), std::max(std::abs(bg0), 1e-12)};
    std::vector<Bounds> bounds = {
        {lo - span, hi + span}, {span / 1000.0, 10.0 * span}, {}, {}};
    auto fit = nlls_solve(fn, {center0, w0, amp0, bg0},
                          {"center_hz", "width_hz", "amplitude", "background"}, bounds,
                          opts);
    double scale = 0.0;
    for (double y : ys) scale = std::max(scale, std::abs(y));
    if (std::abs(fit.estimate("amplitude")) <=
        std::max(2.0 * fit.sigma("amplitude"), 1e-12 * scale))
        fit.warn("amplitude consistent with zero");
    return fit;
}

enum class ElectronState { up, down };
enum class SidebandSign { negative, positive };

// Measured sideband spectrum: counts on a signed drive-detuning axis,
// optionally resolved along a drive-time axis (one column when integrated).
struct SidebandSpectrum {
    SidebandSign sign = SidebandSign::positive;
    ElectronState initial_state = ElectronState::up;
    std::vector<double> detuning_hz;          // signed two-photon detuning, increasing
    std::vector<double> time_s;               // empty for time-integrated data
    std::vector<std::vector<double>> counts;  // [detuning][time column]

    void validate() const {
        if (detuning_hz.size() < 5)
            throw std::invalid_argument("SidebandSpectrum: need at least 5 detunings");
        if (counts.size() != detuning_hz.size())
            throw std::invalid_argument("SidebandSpectrum: counts/detuning mismatch");
        const std::size_t n_t = std::max<std::size_t>(time_s.size(), 1);
        for (const auto& row : counts)
            if (row.size() != n_t)
                throw std::invalid_argument("SidebandSpectrum: ragged counts");
        for (std::size_t i = 1; i < detuning_hz.size(); ++i)
            if (detuning_hz[i] <= detuning_hz[i - 1])
                throw std::invalid_argument(
                    "SidebandSpectrum: detuning axis must increase");
    }

    std::vector<double> time_summed() const {
        validate();
        std::vector<double> out(detuning_hz.size(), 0.0);
        for (std::size_t d = 0; d < counts.size(); ++d)
            for (double c : counts[d]) out[d] += c;
        return out;
    }
};

struct SidebandShift {
    double difference_hz = 0.0; // spin-up minus spin-down resonance position
    double sigma_hz = 0.0;
};

struct KnightResult {
    double a_single_hz = 0.0; // per-nucleus hyperfine shift
    double a_single_sigma_hz = 0.0;
    double n_species = 0.0;   // nuclei of the probed species
    double n_species_sigma = 0.0;
    double n_total = 0.0;     // both sublattices
    double n_total_sigma = 0.0;
    SidebandShift negative, positive;
    std::array<FitResult, 4> line_fits; // neg-up, neg-down, pos-up, pos-down
    std::vector<std::string> warnings;
};

// Knight-shift chain: Gaussian centers of the four spin-resolved sideband
// lines give one spin-up/spin-down splitting per sideband sign; their
// average is the per-nucleus shift a, and the species count follows as
// A / a with first-order error propagation (doubled for the full lattice).
inline KnightResult knight_shift_analysis(const SidebandSpectrum& neg_up,
                                          const SidebandSpectrum& neg_down,
                                          const SidebandSpectrum& pos_up,
                                          const SidebandSpectrum& pos_down,
                                          double hyperfine_A_hz) {
    if (!(hyperfine_A_hz > 0.0))
        throw std::invalid_argument("knight_shift_analysis: hyperfine constant must be positive");
    for (const auto* s : {&neg_up, &neg_down, &pos_up, &pos_down}) s->validate();
    if (neg_up.sign != SidebandSign::negative || neg_down.sign != SidebandSign::negative ||
        pos_up.sign != SidebandSign::positive || pos_down.sign != SidebandSign::positive)
        throw std::invalid_argument("knight_shift_analysis: sideband signs mislabeled");
    if (neg_up.initial_state != ElectronState::up ||
        pos_up.initial_state != ElectronState::up ||
        neg_down.initial_state != ElectronState::down ||
        pos_down.initial_state != ElectronState::down)
        throw std::invalid_argument("knight_shift_analysis: electron states mislabeled");

    KnightResult out;
    const std::array<const SidebandSpectrum*, 4> spectra = {&neg_up, &neg_down, &pos_up,
                                                            &pos_down};
    std::array<double, 4> center{}, sigma{};
    for (std::size_t i = 0; i < 4; ++i) {
        out.line_fits[i] = fit_gaussian(spectra[i]->detuning_hz, spectra[i]->time_summed());
        center[i] = out.line_fits[i].estimate("center_hz");
        sigma[i] = out.line_fits[i].sigma("center_hz");
        for (const auto& w : out.line_fits[i].warnings)
            out.warnings.push_back("line " + std::to_string(i) + ": " + w);
    }

    // spin-up lines sit a/2 further from the carrier than spin-down lines
    out.negative = {center[1] - center[0], std::hypot(sigma[0], sigma[1])};
    out.positive = {center[2] - center[3], std::hypot(sigma[2], sigma[3])};

    const double gap = std::abs(out.negative.difference_hz - out.positive.difference_hz);
    const double gap_sigma = std::hypot(out.negative.sigma_hz, out.positive.sigma_hz);
    if (gap > 2.0 * gap_sigma)
        out.warnings.push_back(
            "sideband splittings disagree beyond two standard deviations");

    out.a_single_hz = 0.5 * (out.negative.difference_hz + out.positive.difference_hz);
    out.a_single_sigma_hz = 0.5 * gap_sigma;
    if (out.a_single_hz > 0.0) {
        out.n_species = hyperfine_A_hz / out.a_single_hz;
        out.n_species_sigma =
            hyperfine_A_hz * out.a_single_sigma_hz / (out.a_single_hz * out.a_single_hz);
    } else {
        out.n_species = std::numeric_limits<double>::quiet_NaN();
        out.n_species_sigma = std::numeric_limits<double>::quiet_NaN();
        out.warnings.push_back("non-positive shift; nucleus count undefined");
    }
    out.n_total = 2.0 * out.n_species;
    out.n_total_sigma = 2.0 * out.n_species_sigma;
    return out;
}

// Damped oscillation in raw counts,
// y = offset - amplitude/2 * exp(-t/decay) * cos(2 pi f t),
// with amplitude the full peak-to-peak value at t = 0.
inline FitResult fit_damped_sine(const std::vector<double>& time_s,
                                 const std::vector<double>& counts) {
    if (time_s.size() != counts.size())
        throw std::invalid_argument("fit_damped_sine: ragged inputs");
    if (time_s.size() < 8)
        throw std::invalid_argument("fit_damped_sine: need at least 8 samples");
    double span = 0.0;
    for (std::size_t i = 1; i < time_s.size(); ++i) {
        if (time_s[i] <= time_s[i - 1])
            throw std::invalid_argument("fit_damped_sine: time axis must increase");
        span = std::max(span, time_s[i] - time_s[0]);
    }
    double ymin = counts[0], ymax = counts[0], ysum = 0.0;
    for (double y : counts) {
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
        ysum += y;
    }
    const double mean = ysum / double(counts.size());
    const double swing = ymax - ymin;

    auto fn = [&](const std::vector<double>& p) {
        std::vector<double> r(time_s.size());
        for (std::size_t i = 0; i < r.size(); ++i) {
            const double t = time_s[i];
            r[i] = p[3] - 0.5 * p[1] * std::exp(-t / p[2]) *
                              std::cos(2.0 * std::numbers::pi * p[0] * t) -
                   counts[i];
        }
        return r;
    };

    const double f_max = 0.5 * double(time_s.size()) / span; // Nyquist of a uniform grid
    std::vector<std::vector<double>> seeds;
    for (int k = 1; k <= 48; ++k) {
        const double f = f_max * double(k) / 50.0;
        seeds.push_back({f, swing, 2.0 * span, mean});
        seeds.push_back({f, swing, 0.4 * span, mean});
    }
    // slow oscillations fall below the first grid line
    for (double cycles : {0.3, 0.6, 1.0, 1.6, 2.5})
        seeds.push_back({cycles / span, swing, 2.0 * span, mean});
    NllsOptions opts;
    opts.typical = {1.0 / span, std::max(swing, 1e-12), span, std::max(std::abs(mean), 1e-12)};
    opts.simplex_iterations = 250;
    std::vector<Bounds> bounds = {{0.0, 1.2 * f_max},
                                  {0.0, 4.0 * swing + 1e-30},
                                  {span / 100.0, 100.0 * span},
                                  {}};
    auto fit = nlls_solve(fn, best_of_grid(fn, seeds),
                          {"frequency_hz", "amplitude", "decay_s", "offset"}, bounds, opts);
    if (std::abs(fit.estimate("amplitude")) <=
        std::max(2.0 * fit.sigma("amplitude"), 1e-12 * std::max(std::abs(ymax), 1.0)))
        fit.warn("amplitude consistent with zero");
    if (fit.estimate("frequency_hz") * span < 0.9)
        fit.warn("fewer than one oscillation period sampled");
    if (fit.estimate("decay_s") >= 99.0 * span)
        fit.warn("decay time beyond the sampled window; reported value is the cap");
    return fit;
}

struct PopulationSeries {
    std::vector<double> population;
    std::vector<std::string> warnings;
};

// Normalize counts by the fitted oscillation amplitude. Values outside the
// physical band [-0.1, 1.1] are kept but flagged.
inline PopulationSeries counts_to_population(const std::vector<double>& counts,
                                             double rabi_amplitude_counts) {
    if (!(rabi_amplitude_counts > 0.0))
        throw std::invalid_argument("counts_to_population: amplitude must be positive");
    PopulationSeries out;
    out.population.reserve(counts.size());
    std::size_t outside = 0;
    for (double c : counts) {
        const double p = c / rabi_amplitude_counts;
        if (p < -0.1 || p > 1.1) ++outside;
        out.population.push_back(p);
    }
    if (outside > 0)
        out.warnings.push_back(std::to_string(outside) +
                               " points outside the physical band [-0.1, 1.1]");
    return out;
}

// Spin-flip saturation background, population = 0.5 (1 - exp(-2 g t)) + B.
inline FitResult fit_background_saturation(const std::vector<double>& time_s,
                                           const std::vector<double>& population) {
    if (time_s.size() != population.size())
        throw std::invalid_argument("fit_background_saturation: ragged inputs");
    if (time_s.size() < 4)
        throw std::invalid_argument("fit_background_saturation: need at least 4 samples");
    double span = 0.0;
    for (std::size_t i = 1; i < time_s.size(); ++i)
        span = std::max(span, time_s[i] - time_s[0]);
    if (span <= 0.0)
        throw std::invalid_argument("fit_background_saturation: zero time span");

    auto fn = [&](const std::vector<double>& p) {
        std::vector<double> r(time_s.size());
        for (std::size_t i = 0; i < r.size(); ++i)
            r[i] = magnon::saturation_background(p[0], time_s[i]) + p[1] - population[i];
        return r;
    };
    std::vector<std::vector<double>> seeds;
    const double base = *std::min_element(population.begin(), population.end());
    for (double g : {0.01, 0.06, 0.3, 1.5, 8.0}) seeds.push_back({g / span, base});
    NllsOptions opts;
    opts.typical = {1.0 / span, 0.1};
    std::vector<Bounds> bounds = {{0.0, 1e3 / span}, {-2.0, 2.0}};
    auto fit = nlls_solve(fn, best_of_grid(fn, seeds),
                          {"spin_flip_per_s", "background"}, bounds, opts);
    if (fit.estimate("spin_flip_per_s") <= 2.0 * fit.sigma("spin_flip_per_s"))
        fit.warn("spin-flip rate consistent with zero");
    return fit;
}

struct MagnonRabiFit {
    double rabi_neg_hz = 0.0, rabi_neg_sigma_hz = 0.0;
    double rabi_pos_hz = 0.0, rabi_pos_sigma_hz = 0.0;
    double dephasing_per_s = 0.0, dephasing_sigma_per_s = 0.0;
    double mean_rabi_hz = 0.0, mean_rabi_sigma_hz = 0.0;
    FitResult detail;
};

// Joint fit of the two sideband exchange traces against the ensemble-
// averaged two-level model: one magnon Rabi rate per sideband, a shared
// dephasing rate, and the spin-flip rate fixed from the background fit.
inline MagnonRabiFit fit_magnon_rabi(const std::vector<double>& time_neg_s,
                                     const std::vector<double>& population_neg,
                                     const std::vector<double>& time_pos_s,
                                     const std::vector<double>& population_pos,
                                     double spin_flip_per_s,
                                     const magnon::EnsembleSpread& spread) {
    if (time_neg_s.size() != population_neg.size() ||
        time_pos_s.size() != population_pos.size())
        throw std::invalid_argument("fit_magnon_rabi: ragged inputs");
    if (time_neg_s.size() < 8 || time_pos_s.size() < 8)
        throw std::invalid_argument("fit_magnon_rabi: need at least 8 samples per trace");
    if (spin_flip_per_s < 0.0)
        throw std::invalid_argument("fit_magnon_rabi: negative spin-flip rate");
    spread.validate();
    const double span = std::max(time_neg_s.back() - time_neg_s.front(),
                                 time_pos_s.back() - time_pos_s.front());
    if (!(span > 0.0)) throw std::invalid_argument("fit_magnon_rabi: zero time span");

    const auto rho0 = magnon::DensityMatrix2::ground();
    auto trace_model = [&](double rabi_hz, double dephasing,
                           const std::vector<double>& times) {
        magnon::LindbladParams p;
        p.rabi_hz = rabi_hz;
        p.spin_flip_per_s = spin_flip_per_s;
        p.dephasing_per_s = dephasing;
        return magnon::ensemble_average_evolution(rho0, p, spread, times);
    };
    auto fn = [&](const std::vector<double>& p) {
        std::vector<double> r;
        r.reserve(time_neg_s.size() + time_pos_s.size());
        const auto neg = trace_model(p[0], p[2], time_neg_s);
        for (std::size_t i = 0; i < neg.size(); ++i)
            r.push_back(neg[i] - population_neg[i]);
        const auto pos = trace_model(p[1], p[2], time_pos_s);
        for (std::size_t i = 0; i < pos.size(); ++i)
            r.push_back(pos[i] - population_pos[i]);
        return r;
    };

    // coarse per-trace frequency scan at zero dephasing
    auto scan = [&](const std::vector<double>& times, const std::vector<double>& pop) {
        double best = 0.5 / span, best_rss = std::numeric_limits<double>::infinity();
        for (int k = 1; k <= 32; ++k) {
            const double rabi = 4.0 * double(k) / (32.0 * span);
            const auto model = trace_model(rabi, 0.0, times);
            double rss = 0.0;
            for (std::size_t i = 0; i < pop.size(); ++i) {
                const double d = model[i] - pop[i];
                rss += d * d;
            }
            if (rss < best_rss) {
                best_rss = rss;
                best = rabi;
            }
        }
        return best;
    };
    const std::vector<double> init = {scan(time_neg_s, population_neg),
                                      scan(time_pos_s, population_pos), 0.5 / span};
    NllsOptions opts;
    opts.typical = {1.0 / span, 1.0 / span, 1.0 / span};
    opts.simplex_iterations = 120;
    opts.max_iterations = 120;
    std::vector<Bounds> bounds = {{0.0, 6.0 * double(time_neg_s.size()) / span},
                                  {0.0, 6.0 * double(time_pos_s.size()) / span},
                                  {0.0, 1e3 / span}};
    auto fit = nlls_solve(fn, init, {"rabi_neg_hz", "rabi_pos_hz", "dephasing_per_s"},
                          bounds, opts);

    MagnonRabiFit out;
    out.rabi_neg_hz = fit.estimate("rabi_neg_hz");
    out.rabi_neg_sigma_hz = fit.sigma("rabi_neg_hz");
    out.rabi_pos_hz = fit.estimate("rabi_pos_hz");
    out.rabi_pos_sigma_hz = fit.sigma("rabi_pos_hz");
    out.dephasing_per_s = fit.estimate("dephasing_per_s");
    out.dephasing_sigma_per_s = fit.sigma("dephasing_per_s");
    out.mean_rabi_hz = 0.5 * (out.rabi_neg_hz + out.rabi_pos_hz);
    out.mean_rabi_sigma_hz = 0.5 * std::hypot(out.rabi_neg_sigma_hz, out.rabi_pos_sigma_hz);
    out.detail = std::move(fit);
    return out;
}

struct AmplitudeSeries {
    double center_hz = 0.0;
    double center_sigma_hz = 0.0;
    std::vector<double> time_s;
    std::vector<double> amplitude;
    std::vector<double> amplitude_sigma;
    std::vector<double> background;
    FitResult profile_fit;
};

// Per-time-step line amplitudes with the resonance position locked from the
// time-summed profile, so drifting per-step fits cannot masquerade as
// frequency shifts.
inline AmplitudeSeries sideband_amplitude_series(const SidebandSpectrum& spectrum) {
    spectrum.validate();
    if (spectrum.time_s.empty())
        throw std::invalid_argument("sideband_amplitude_series: need a time axis");

    AmplitudeSeries out;
    out.profile_fit = fit_gaussian(spectrum.detuning_hz, spectrum.time_summed());
    out.center_hz = out.profile_fit.estimate("center_hz");
    out.center_sigma_hz = out.profile_fit.sigma("center_hz");
    const double width0 = out.profile_fit.estimate("width_hz");
    const double span = spectrum.detuning_hz.back() - spectrum.detuning_hz.front();

    for (std::size_t k = 0; k < spectrum.time_s.size(); ++k) {
        std::vector<double> col(spectrum.detuning_hz.size());
        for (std::size_t d = 0; d < col.size(); ++d) col[d] = spectrum.counts[d][k];
        const double bg0 = detail::median(col);
        std::size_t i_near = 0;
        for (std::size_t d = 1; d < col.size(); ++d)
            if (std::abs(spectrum.detuning_hz[d] - out.center_hz) <
                std::abs(spectrum.detuning_hz[i_near] - out.center_hz))
                i_near = d;
        auto fn = [&](const std::vector<double>& p) {
            std::vector<double> r(col.size());
            for (std::size_t d = 0; d < col.size(); ++d) {
                const double z = (spectrum.detuning_hz[d] - out.center_hz) / p[1];
                r[d] = p[2] + p[0] * std::exp(-0.5 * z * z) - col[d];
            }
            return r;
        };
        NllsOptions opts;
        opts.typical = {std::max(std::abs(col[i_near] - bg0), 1e-12), width0,
                        std::max(std::abs(bg0), 1e-12)};
        opts.simplex_iterations = 60;
        std::vector<Bounds> bounds = {{}, {span / 1000.0, 10.0 * span}, {}};
        auto fit = nlls_solve(fn, {col[i_near] - bg0, width0, bg0},
                              {"amplitude", "width_hz", "background"}, bounds, opts);
        out.time_s.push_back(spectrum.time_s[k]);
        out.amplitude.push_back(fit.estimate("amplitude"));
        out.amplitude_sigma.push_back(fit.sigma("amplitude"));
        out.background.push_back(fit.estimate("background"));
    }
    return out;
}

} // namespace cspin::fit
