#pragma once

// Fitting recipes for decoupling-visibility and spin-echo data built on the
// shared least-squares engine. The visibility fit is global: datasets taken
// at the same electron splitting share one tilt value, the Larmor rescaling
// factor is common to everything, and each dataset keeps its own technical
// scale and slow decay.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cspin/coherence.hpp"
#include "cspin/nlls.hpp"
#include "cspin/species.hpp"

namespace cspin::coherence {

struct VisibilityDataset {
    double splitting_hz = 0.0; // electron splitting this dataset was taken at
    PulseSequence sequence = PulseSequence::cp1;
    std::vector<double> time_s;
    std::vector<double> visibility;
    std::vector<double> sigma; // optional; empty = unweighted
    std::string label;
};

struct VisibilityFit {
    struct Group {
        double splitting_hz = 0.0;
        double sin_tilt = 0.0;
        double sin_tilt_sigma = 0.0;
    };
    struct DatasetScales {
        double visibility_scale = 0.0;
        double visibility_scale_sigma = 0.0;
        double decay_time_s = 0.0;
        double decay_time_sigma_s = 0.0;
    };
    std::vector<Group> groups;             // one tilt per distinct splitting
    double field_scale = 1.0;
    double field_scale_sigma = 0.0;
    std::vector<DatasetScales> per_dataset; // same order as the input datasets
    fit::FitResult detail;
};

namespace detail {

// Filter-independent per-species factors of the dephasing exponent,
// exponent_j = (tilt_factor) * strength_j * (a_j / (2 b w_j))^2 * F(b w_j t).
struct LineFactor {
    double larmor_hz = 0.0;
    double coupling_hz = 0.0; // per-nucleus constant at unit tilt
    double strength = 0.0;
};

inline std::vector<LineFactor> line_factors(const species::SpeciesRegistry& reg,
                                            double n_total) {
    reg.validate();
    if (!(n_total >= 1.0))
        throw std::invalid_argument("line_factors: n_total must be at least 1");
    const double csum = reg.abundance_sum();
    std::vector<LineFactor> out;
    for (const auto& s : reg.species) {
        LineFactor f;
        f.larmor_hz = species::larmor_frequency(s, reg.field_t);
        f.coupling_hz = s.hyperfine_A_hz * csum / n_total;
        f.strength = 2.5 * n_total * s.abundance / csum;
        out.push_back(f);
    }
    return out;
}

inline double bath_exponent(const std::vector<LineFactor>& lines, PulseSequence seq,
                            double sin_tilt, double field_scale, double time_s) {
    double expo = 0.0;
    for (const auto& l : lines) {
        const double w = field_scale * l.larmor_hz;
        const double a_nc = sin_tilt * l.coupling_hz;
        expo += a_nc * a_nc / (4.0 * w * w) * l.strength * filter_value(seq, w * time_s);
    }
    return expo;
}

} // namespace detail

// Joint fit of several visibility datasets. Fitted parameters: one tilt per
// distinct splitting (shared across pulse sequences), one global Larmor
// rescaling factor, and per-dataset technical scale and slow decay rate.
// The nucleus count and the species registry are fixed inputs.
inline VisibilityFit fit_visibility(const std::vector<VisibilityDataset>& datasets,
                                    const species::SpeciesRegistry& registry,
                                    double n_total) {
    if (datasets.empty()) throw std::invalid_argument("fit_visibility: no datasets");
    std::size_t n_samples = 0;
    double span = 0.0;
    for (const auto& d : datasets) {
        if (d.time_s.empty() || d.time_s.size() != d.visibility.size())
            throw std::invalid_argument("fit_visibility: dataset '" + d.label +
                                        "' is empty or ragged");
        if (!d.sigma.empty() && d.sigma.size() != d.time_s.size())
            throw std::invalid_argument("fit_visibility: dataset '" + d.label +
                                        "' has a partial sigma column");
        if (!(d.splitting_hz > 0.0))
            throw std::invalid_argument("fit_visibility: non-positive splitting");
        n_samples += d.time_s.size();
        for (double t : d.time_s) span = std::max(span, t);
    }
    if (span <= 0.0) throw std::invalid_argument("fit_visibility: zero time span");

    // group datasets by splitting
    std::vector<double> group_hz;
    std::vector<std::size_t> group_of(datasets.size());
    for (std::size_t i = 0; i < datasets.size(); ++i) {
        const double w = datasets[i].splitting_hz;
        std::size_t g = group_hz.size();
        for (std::size_t k = 0; k < group_hz.size(); ++k)
            if (std::abs(group_hz[k] - w) <= 1e-9 * group_hz[k]) { g = k; break; }
        if (g == group_hz.size()) group_hz.push_back(w);
        group_of[i] = g;
    }
    const std::size_t n_groups = group_hz.size();
    const std::size_t n_params = n_groups + 1 + 2 * datasets.size();
    if (n_samples <= n_params)
        throw std::invalid_argument("fit_visibility: more parameters than samples");

    const auto lines = detail::line_factors(registry, n_total);

    // layout: [tilt_0 .. tilt_{G-1}, field_scale, {scale_d, rate_d}...]
    auto residuals = [&](const std::vector<double>& p) {
        std::vector<double> r;
        r.reserve(n_samples);
        const double b = p[n_groups];
        for (std::size_t d = 0; d < datasets.size(); ++d) {
            const auto& ds = datasets[d];
            const double tilt = p[group_of[d]];
            const double scale = p[n_groups + 1 + 2 * d];
            const double rate = p[n_groups + 2 + 2 * d];
            for (std::size_t i = 0; i < ds.time_s.size(); ++i) {
                const double t = ds.time_s[i];
                const double model =
                    scale *
                    std::exp(-detail::bath_exponent(lines, ds.sequence, tilt, b, t) -
                             rate * t);
                const double w = ds.sigma.empty() ? 1.0 : ds.sigma[i];
                r.push_back((model - ds.visibility[i]) / w);
            }
        }
        return r;
    };

    std::vector<double> init(n_params, 0.0);
    std::vector<fit::Bounds> bounds(n_params);
    std::vector<double> typical(n_params, 0.0);
    for (std::size_t g = 0; g < n_groups; ++g) {
        init[g] = 0.15;
        bounds[g] = {0.0, 1.0};
        typical[g] = 0.1;
    }
    init[n_groups] = 1.0;
    bounds[n_groups] = {0.5, 2.0};
    typical[n_groups] = 1.0;
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        const double top = *std::max_element(datasets[d].visibility.begin(),
                                             datasets[d].visibility.end());
        init[n_groups + 1 + 2 * d] = std::clamp(top, 0.1, 2.0);
        bounds[n_groups + 1 + 2 * d] = {1e-3, 2.0};
        typical[n_groups + 1 + 2 * d] = 1.0;
        init[n_groups + 2 + 2 * d] = 0.1 / span;
        bounds[n_groups + 2 + 2 * d] = {0.0, 50.0 / span};
        typical[n_groups + 2 + 2 * d] = 1.0 / span;
    }

    // coarse tilt seeding with everything else at its default
    std::vector<std::vector<double>> seeds;
    for (double tilt : {0.02, 0.05, 0.1, 0.2, 0.4}) {
        auto cand = init;
        for (std::size_t g = 0; g < n_groups; ++g)
            cand[g] = tilt * group_hz[0] / group_hz[g];
        seeds.push_back(cand);
    }
    fit::NllsOptions opts;
    opts.typical = typical;
    opts.simplex_iterations = 200;
    opts.max_iterations = 400;
    auto fit = fit::nlls_solve(residuals, fit::best_of_grid(residuals, seeds), {}, bounds,
                               opts);

    VisibilityFit out;
    out.detail = fit;
    for (std::size_t g = 0; g < n_groups; ++g) {
        out.detail.names[g] = "sin_tilt_" + std::to_string(g);
        out.groups.push_back({group_hz[g], fit.estimates[g], fit.sigmas[g]});
    }
    out.detail.names[n_groups] = "field_scale";
    out.field_scale = fit.estimates[n_groups];
    out.field_scale_sigma = fit.sigmas[n_groups];
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        const double scale = fit.estimates[n_groups + 1 + 2 * d];
        const double scale_sig = fit.sigmas[n_groups + 1 + 2 * d];
        const double rate = fit.estimates[n_groups + 2 + 2 * d];
        const double rate_sig = fit.sigmas[n_groups + 2 + 2 * d];
        const double inf = std::numeric_limits<double>::infinity();
        out.per_dataset.push_back(
            {scale, scale_sig, rate > 0.0 ? 1.0 / rate : inf,
             rate > 0.0 ? rate_sig / (rate * rate) : inf});
        out.detail.names[n_groups + 1 + 2 * d] = "visibility_scale_" + std::to_string(d);
        out.detail.names[n_groups + 2 + 2 * d] = "decay_rate_" + std::to_string(d);
    }
    return out;
}

// Tilt scaling with splitting: sin(tilt) = s0 * bare / splitting, one free
// parameter s0 (the tilt sine at the bare splitting).
inline fit::FitResult fit_tilt_scaling(const std::vector<double>& splittings_hz,
                                       const std::vector<double>& sin_tilts,
                                       const std::vector<double>& sigmas,
                                       double bare_splitting_hz) {
    if (splittings_hz.size() != sin_tilts.size() ||
        (!sigmas.empty() && sigmas.size() != sin_tilts.size()))
        throw std::invalid_argument("fit_tilt_scaling: ragged inputs");
    if (splittings_hz.size() < 2)
        throw std::invalid_argument("fit_tilt_scaling: need at least two splittings");
    if (!(bare_splitting_hz > 0.0))
        throw std::invalid_argument("fit_tilt_scaling: bare splitting must be positive");
    double lo = splittings_hz[0], hi = splittings_hz[0];
    for (double w : splittings_hz) {
        if (!(w > 0.0))
            throw std::invalid_argument("fit_tilt_scaling: non-positive splitting");
        lo = std::min(lo, w);
        hi = std::max(hi, w);
    }
    if (hi - lo <= 1e-9 * hi)
        throw std::invalid_argument("fit_tilt_scaling: all splittings coincide");

    auto fn = [&](const std::vector<double>& p) {
        std::vector<double> r(splittings_hz.size());
        for (std::size_t i = 0; i < r.size(); ++i) {
            const double model = p[0] * bare_splitting_hz / splittings_hz[i];
            const double w = sigmas.empty() ? 1.0 : sigmas[i];
            r[i] = (model - sin_tilts[i]) / w;
        }
        return r;
    };
    fit::NllsOptions opts;
    opts.typical = {0.1};
    opts.simplex_iterations = 0;
    return fit::nlls_solve(fn, {0.2}, {"bare_sin_tilt"}, {fit::Bounds{0.0, 1.0}}, opts);
}

struct EchoDecayFit {
    EchoDecay value;
    double t2_sigma_s = 0.0;
    double stretch_sigma = 0.0;
    fit::FitResult detail;
};

// Stretched-exponential fit of a spin-echo decay curve.
inline EchoDecayFit fit_echo_decay(const std::vector<double>& time_s,
                                   const std::vector<double>& visibility,
                                   const std::vector<double>& sigmas = {}) {
    if (time_s.size() != visibility.size() ||
        (!sigmas.empty() && sigmas.size() != time_s.size()))
        throw std::invalid_argument("fit_echo_decay: ragged inputs");
    if (time_s.size() < 4)
        throw std::invalid_argument("fit_echo_decay: need at least four samples");
    double span = 0.0, vmin = visibility[0], vmax = visibility[0];
    for (std::size_t i = 0; i < time_s.size(); ++i) {
        if (time_s[i] < 0.0)
            throw std::invalid_argument("fit_echo_decay: negative time");
        span = std::max(span, time_s[i]);
        vmin = std::min(vmin, visibility[i]);
        vmax = std::max(vmax, visibility[i]);
    }
    if (span <= 0.0) throw std::invalid_argument("fit_echo_decay: zero time span");
    if (vmax - vmin <= 1e-12 * std::max(1.0, std::abs(vmax)))
        throw std::invalid_argument("fit_echo_decay: data show no decay");

    auto fn = [&](const std::vector<double>& p) {
        std::vector<double> r(time_s.size());
        for (std::size_t i = 0; i < r.size(); ++i) {
            const double x = time_s[i] / p[0];
            const double model = x > 0.0 ? std::exp(-std::pow(x, p[1])) : 1.0;
            const double w = sigmas.empty() ? 1.0 : sigmas[i];
            r[i] = (model - visibility[i]) / w;
        }
        return r;
    };

    // seed T2 near the 1/e crossing when there is one
    double t_cross = span;
    for (std::size_t i = 1; i < time_s.size(); ++i) {
        if (visibility[i] <= std::exp(-1.0)) {
            t_cross = time_s[i];
            break;
        }
    }
    std::vector<std::vector<double>> seeds;
    for (double stretch : {1.0, 1.5, 2.0, 2.5, 3.0})
        for (double t2 : {0.5 * t_cross, t_cross, 1.5 * t_cross})
            seeds.push_back({t2, stretch});

    fit::NllsOptions opts;
    opts.typical = {span, 1.0};
    std::vector<fit::Bounds> bounds = {{1e-3 * span, 1e4 * span}, {0.2, 6.0}};
    auto fit = fit::nlls_solve(fn, fit::best_of_grid(fn, seeds), {"t2_s", "stretch"},
                               bounds, opts);
    if (fit.estimate("t2_s") > 1e2 * span)
        fit.warn("decay time lies far beyond the sampled window");

    EchoDecayFit out;
    out.value = {fit.estimate("t2_s"), fit.estimate("stretch")};
    out.t2_sigma_s = fit.sigma("t2_s");
    out.stretch_sigma = fit.sigma("stretch");
    out.detail = std::move(fit);
    return out;
}

// Coherence-time scaling with splitting at a fixed mean stretch exponent:
// T2(w) = coefficient * (w / bare)^(2 / stretch_mean) + offset.
inline double t2_scaling_model(double splitting_hz, double bare_splitting_hz,
                               double stretch_mean, double coefficient_s,
                               double offset_s) {
    return coefficient_s *
               std::pow(splitting_hz / bare_splitting_hz, 2.0 / stretch_mean) +
           offset_s;
}

inline fit::FitResult fit_t2_scaling(const std::vector<double>& splittings_hz,
                                     const std::vector<double>& t2_s,
                                     const std::vector<double>& sigmas,
                                     double bare_splitting_hz, double stretch_mean) {
    if (splittings_hz.size() != t2_s.size() ||
        (!sigmas.empty() && sigmas.size() != t2_s.size()))
        throw std::invalid_argument("fit_t2_scaling: ragged inputs");
    if (splittings_hz.size() < 2)
        throw std::invalid_argument("fit_t2_scaling: need at least two splittings");
    if (!(bare_splitting_hz > 0.0) || !(stretch_mean > 0.0))
        throw std::invalid_argument("fit_t2_scaling: bare splitting and stretch must be positive");
    double lo = splittings_hz[0], hi = splittings_hz[0];
    for (double w : splittings_hz) {
        if (!(w > 0.0))
            throw std::invalid_argument("fit_t2_scaling: non-positive splitting");
        lo = std::min(lo, w);
        hi = std::max(hi, w);
    }
    if (hi - lo <= 1e-9 * hi)
        throw std::invalid_argument("fit_t2_scaling: all splittings coincide");

    double t2_scale = 0.0;
    for (double v : t2_s) t2_scale = std::max(t2_scale, std::abs(v));
    auto fn = [&](const std::vector<double>& p) {
        std::vector<double> r(splittings_hz.size());
        for (std::size_t i = 0; i < r.size(); ++i) {
            const double model = t2_scaling_model(splittings_hz[i], bare_splitting_hz,
                                                  stretch_mean, p[0], p[1]);
            const double w = sigmas.empty() ? 1.0 : sigmas[i];
            r[i] = (model - t2_s[i]) / w;
        }
        return r;
    };
    fit::NllsOptions opts;
    opts.typical = {t2_scale, t2_scale};
    opts.simplex_iterations = 0; // linear in both parameters
    return fit::nlls_solve(fn, {0.5 * t2_scale, 0.5 * t2_scale},
                           {"coefficient_s", "offset_s"}, {}, opts);
}

} // namespace cspin::coherence
