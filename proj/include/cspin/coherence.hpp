#pragma once

// Dynamical-decoupling visibility of a central electron spin coupled to a
// nuclear bath through a weak non-collinear hyperfine term. Each nuclear
// species contributes a narrow noise line at its (scaled) Larmor frequency;
// the pulse-sequence filter function decides how strongly that line
// dephases the electron at a given total evolution time.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "cspin/species.hpp"

namespace cspin::coherence {

enum class PulseSequence { cp1, cp2 };

inline const char* to_string(PulseSequence seq) {
    return seq == PulseSequence::cp1 ? "CP1" : "CP2";
}

inline PulseSequence sequence_from_string(const std::string& s) {
    if (s == "CP1" || s == "cp1") return PulseSequence::cp1;
    if (s == "CP2" || s == "cp2") return PulseSequence::cp2;
    throw std::invalid_argument("unknown pulse sequence '" + s + "'");
}

// Filter function in the dimensionless variable x = frequency * total time
// (ordinary-frequency convention):
//   CP1: 8 sin^4(pi x / 2)
//   CP2: 8 sin^4(pi x / 2) sin^2(2 pi x) / cos^2(pi x)
// The CP2 ratio has removable singularities at half-integer x; since
// sin(2 pi x) = 2 sin(pi x) cos(pi x), the ratio equals 4 sin^2(pi x)
// there, which is used whenever |cos(pi x)| < 1e-6.
inline double filter_value(PulseSequence seq, double x) {
    const double s = std::sin(std::numbers::pi * x / 2.0);
    const double base = 8.0 * s * s * s * s;
    if (seq == PulseSequence::cp1) return base;
    const double c = std::cos(std::numbers::pi * x);
    if (std::abs(c) < 1e-6) {
        const double sp = std::sin(std::numbers::pi * x);
        return base * 4.0 * sp * sp;
    }
    const double s2 = std::sin(2.0 * std::numbers::pi * x);
    return base * (s2 * s2) / (c * c);
}

// Slowly varying instrument factors multiplying the bath visibility.
struct TechnicalParams {
    double visibility_scale = 1.0; // overall amplitude at t = 0
    double field_scale = 1.0;      // common rescaling of all Larmor lines
    double decay_time_s = std::numeric_limits<double>::infinity(); // extra exp(-t/tau)
};

// Bath visibility model. Per-species nucleus counts follow from the
// abundances: species j holds n_j = n_total * c_j / sum_k c_k nuclei and
// couples with per-nucleus constant a_j = A_j * (sum_k c_k) / n_total, so a
// two-sublattice registry (sum c = 2) gives n_j = c_j n/2 and a_j = 2 A_j/n
// while a single-species registry reduces to a = A/n with n_j = n.
// mean_polarization optionally adds a collective <I_z> per species to the
// line weight (zero and disabled by default).
struct VisibilityModel {
    double sin_tilt = 0.0;
    double n_total = 0.0;
    species::SpeciesRegistry registry;
    TechnicalParams technical;
    bool include_polarization = false;
    std::vector<double> mean_polarization; // per species, same order as registry

    void validate() const {
        registry.validate();
        if (!(n_total >= 1.0))
            throw std::invalid_argument("VisibilityModel: n_total must be at least 1");
        if (std::abs(sin_tilt) > 1.0)
            throw std::invalid_argument("VisibilityModel: |sin_tilt| cannot exceed 1");
        if (!(technical.visibility_scale > 0.0) || !(technical.field_scale > 0.0))
            throw std::invalid_argument("VisibilityModel: scales must be positive");
        if (!(technical.decay_time_s > 0.0))
            throw std::invalid_argument("VisibilityModel: decay time must be positive");
        if (include_polarization && mean_polarization.size() != registry.species.size())
            throw std::invalid_argument(
                "VisibilityModel: mean_polarization must match the species list");
    }
};

// One nuclear species as seen by the electron: scaled Larmor line position,
// nucleus count, per-nucleus non-collinear coupling and the thermal line
// strength 5 n_j / 2 (+ <I_z> when enabled).
struct SpeciesTerm {
    std::string name;
    double line_hz = 0.0;
    double count = 0.0;
    double noncollinear_hz = 0.0;
    double strength = 0.0;
};

inline std::vector<SpeciesTerm> species_terms(const VisibilityModel& m) {
    m.validate();
    const double csum = m.registry.abundance_sum();
    std::vector<SpeciesTerm> terms;
    terms.reserve(m.registry.species.size());
    for (std::size_t i = 0; i < m.registry.species.size(); ++i) {
        const auto& s = m.registry.species[i];
        SpeciesTerm t;
        t.name = s.name;
        t.line_hz = m.technical.field_scale * species::larmor_frequency(s, m.registry.field_t);
        t.count = m.n_total * s.abundance / csum;
        t.noncollinear_hz = m.sin_tilt * s.hyperfine_A_hz * csum / m.n_total;
        t.strength = 2.5 * t.count;
        if (m.include_polarization) t.strength += m.mean_polarization[i];
        if (t.strength < 0.0)
            throw std::invalid_argument("species_terms: negative line strength for " + s.name);
        terms.push_back(t);
    }
    return terms;
}

// Nuclear-spin noise as a comb of delta lines, normalized so that
//   -log W(t) = (1/2pi) * integral S(w) F(w t) / w^2 dw
// over ordinary frequency w reproduces the visibility below. Weights carry
// the filter-independent line strength (pi/2) a_nc^2 (5 n_j / 2 + <I_z>).
struct NoiseSpectrum {
    struct Line {
        std::string name;
        double frequency_hz = 0.0;
        double weight = 0.0;
    };
    std::vector<Line> lines; // sorted by frequency
};

inline NoiseSpectrum noise_spectrum(const VisibilityModel& m) {
    NoiseSpectrum out;
    for (const auto& t : species_terms(m)) {
        const double w = 0.5 * std::numbers::pi * t.noncollinear_hz * t.noncollinear_hz *
                         t.strength;
        out.lines.push_back({t.name, t.line_hz, w});
    }
    std::sort(out.lines.begin(), out.lines.end(),
              [](const auto& a, const auto& b) { return a.frequency_hz < b.frequency_hz; });
    return out;
}

// Bath-only visibility W(t) in [0, 1]: exp of minus the filter-weighted sum
// of species lines. W(0) = 1 exactly.
inline double visibility(const VisibilityModel& m, PulseSequence seq, double time_s) {
    double exponent = 0.0;
    for (const auto& t : species_terms(m)) {
        const double amp = t.noncollinear_hz * t.noncollinear_hz /
                           (4.0 * t.line_hz * t.line_hz) * t.strength;
        exponent += amp * filter_value(seq, t.line_hz * time_s);
    }
    return std::exp(-exponent);
}

// Full fit model: technical scale and slow exponential on top of the bath.
inline double visibility_fit_model(const VisibilityModel& m, PulseSequence seq,
                                   double time_s) {
    const double slow = std::isinf(m.technical.decay_time_s)
                            ? 1.0
                            : std::exp(-time_s / m.technical.decay_time_s);
    return m.technical.visibility_scale * visibility(m, seq, time_s) * slow;
}

// Stretched-exponential envelope of a spin-echo decay.
struct EchoDecay {
    double t2_s = 0.0;
    double stretch = 1.0;
};

inline double echo_envelope(const EchoDecay& d, double time_s) {
    if (!(d.t2_s > 0.0)) throw std::invalid_argument("echo_envelope: T2 must be positive");
    if (time_s < 0.0) throw std::invalid_argument("echo_envelope: negative time");
    if (time_s == 0.0) return 1.0;
    return std::exp(-std::pow(time_s / d.t2_s, d.stretch));
}

} // namespace cspin::coherence
