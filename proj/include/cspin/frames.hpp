#pragma once

// Geometry of the electron quantization axis in a quantum dot with an
// anisotropic in-plane g-tensor. A nuclear Overhauser field adds to the
// external-field term along one principal axis only, so it tilts the
// electron axis and sets the non-collinear fraction of the hyperfine
// coupling. Exact closed forms throughout; no small-angle approximations.

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace cspin::frames {

// In-plane g-factors along the two <110> axes.
struct GTensor {
    double g110 = 0.0;
    double g1m10 = 0.0;
};

// Tilt angle of the electron quantization axis away from the applied field,
// atan((g110 - g1m10) / (g110 + g1m10)). The sign convention follows the
// numerator; an isotropic tensor gives zero.
inline double anisotropy_angle(const GTensor& g) {
    const double den = g.g110 + g.g1m10;
    if (den == 0.0)
        throw std::invalid_argument("anisotropy_angle: g110 + g1m10 vanishes, axis undefined");
    return std::atan((g.g110 - g.g1m10) / den);
}

// Electron spin splitting and axis tilt for a given Overhauser shift.
// bare_* values describe the external field alone; the Overhauser field
// adds to the component parallel to the bare axis projection, leaving the
// perpendicular component fixed. The shift may take either sign.
struct FrameGeometry {
    double bare_splitting_hz = 0.0; // splitting from the external field alone
    double bare_tilt_rad = 0.0;     // tilt angle at zero Overhauser shift
    double overhauser_hz = 0.0;

    double splitting_hz = 0.0; // total electron spin splitting
    double sin_tilt = 0.0;
    double cos_tilt = 1.0;
};

inline FrameGeometry make_frame(double bare_splitting_hz, double bare_tilt_rad,
                                double overhauser_hz) {
    if (bare_splitting_hz <= 0.0)
        throw std::invalid_argument("make_frame: bare splitting must be positive");
    const double parallel = bare_splitting_hz * std::cos(bare_tilt_rad) + overhauser_hz;
    const double perp = bare_splitting_hz * std::sin(bare_tilt_rad);
    const double total = std::hypot(parallel, perp);
    if (total == 0.0)
        throw std::domain_error("make_frame: total splitting vanishes, tilt undefined");
    FrameGeometry f;
    f.bare_splitting_hz = bare_splitting_hz;
    f.bare_tilt_rad = bare_tilt_rad;
    f.overhauser_hz = overhauser_hz;
    f.splitting_hz = total;
    f.sin_tilt = perp / total;
    f.cos_tilt = parallel / total;
    return f;
}

// Collinear/non-collinear split of a per-nucleus hyperfine coupling in a
// tilted frame. single_hz is the full per-nucleus constant a.
struct HyperfineCouplings {
    double single_hz = 0.0;
    double noncollinear_hz = 0.0; // a * sin(tilt)
    double collinear_hz = 0.0;    // a * cos(tilt)
};

inline HyperfineCouplings split_coupling(double single_hz, const FrameGeometry& f) {
    if (single_hz < 0.0)
        throw std::invalid_argument("split_coupling: coupling must be non-negative");
    return {single_hz, single_hz * f.sin_tilt, single_hz * f.cos_tilt};
}

// Ratio by which the non-collinear coupling rescales when the total
// splitting is tuned: sin(tilt)/sin(bare tilt) = bare/total, because the
// perpendicular component is fixed while the total grows.
inline double nc_scaling(double bare_splitting_hz, double splitting_hz) {
    if (bare_splitting_hz <= 0.0 || splitting_hz <= 0.0)
        throw std::invalid_argument("nc_scaling: splittings must be positive");
    return bare_splitting_hz / splitting_hz;
}

// Overhauser shift that tunes the total splitting to a target value,
// inverting make_frame on the branch continuous with zero shift at
// target = bare splitting. Targets below the fixed perpendicular component
// are unreachable.
inline double overhauser_for_target(double target_splitting_hz, double bare_splitting_hz,
                                    double bare_tilt_rad) {
    if (bare_splitting_hz <= 0.0)
        throw std::invalid_argument("overhauser_for_target: bare splitting must be positive");
    if (target_splitting_hz <= 0.0)
        throw std::invalid_argument("overhauser_for_target: target splitting must be positive");
    const double perp = bare_splitting_hz * std::sin(bare_tilt_rad);
    const double disc = target_splitting_hz * target_splitting_hz - perp * perp;
    if (disc < 0.0)
        throw std::domain_error("overhauser_for_target: target below the perpendicular component");
    return std::sqrt(disc) - bare_splitting_hz * std::cos(bare_tilt_rad);
}

// Scale of the quadrupolar-induced non-collinear coupling, a * B_Q / omega_n,
// for comparison against the tilt-induced one.
inline double quadrupolar_nc_estimate(double single_hz, double quadrupolar_hz,
                                      double nuclear_larmor_hz) {
    if (nuclear_larmor_hz <= 0.0)
        throw std::invalid_argument("quadrupolar_nc_estimate: Larmor frequency must be positive");
    return single_hz * quadrupolar_hz / nuclear_larmor_hz;
}

inline void to_json(nlohmann::json& j, const FrameGeometry& f) {
    j = {{"bare_splitting_hz", f.bare_splitting_hz},
         {"bare_tilt_rad", f.bare_tilt_rad},
         {"overhauser_hz", f.overhauser_hz},
         {"splitting_hz", f.splitting_hz},
         {"sin_tilt", f.sin_tilt},
         {"cos_tilt", f.cos_tilt}};
}

} // namespace cspin::frames
