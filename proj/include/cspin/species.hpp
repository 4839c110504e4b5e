#pragma once

// Nuclear species table for a III-V host crystal and the static field the
// sample sits in. All frequencies throughout the library are ordinary
// frequencies in Hz (cycles per second), never angular rates; gyromagnetic
// ratios are Hz/T.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace cspin::species {

struct NuclearSpecies {
    std::string name;
    double spin = 1.5;                  // nuclear spin quantum number I
    double hyperfine_A_hz = 0.0;        // material hyperfine constant A
    double gyromagnetic_hz_per_t = 0.0; // Larmor frequency per tesla
    double abundance = 1.0;             // isotopic fraction of its sublattice
};

struct SpeciesRegistry {
    std::vector<NuclearSpecies> species;
    double field_t = 0.0; // static magnetic field the nuclei precess in

    const NuclearSpecies& find(const std::string& name) const {
        for (const auto& s : species)
            if (s.name == name) return s;
        throw std::out_of_range("SpeciesRegistry: unknown species '" + name + "'");
    }

    // Sum of abundances; equals the number of sublattices when each species
    // list covers its sublattice completely (2 for zincblende GaAs).
    double abundance_sum() const {
        double c = 0.0;
        for (const auto& s : species) c += s.abundance;
        return c;
    }

    void validate() const {
        if (field_t <= 0.0)
            throw std::invalid_argument("SpeciesRegistry: field must be positive");
        if (species.empty())
            throw std::invalid_argument("SpeciesRegistry: no species defined");
        for (std::size_t i = 0; i < species.size(); ++i) {
            const auto& s = species[i];
            if (s.name.empty())
                throw std::invalid_argument("SpeciesRegistry: species without a name");
            if (s.spin <= 0.0 || s.hyperfine_A_hz <= 0.0 || s.gyromagnetic_hz_per_t <= 0.0)
                throw std::invalid_argument("SpeciesRegistry: '" + s.name +
                                            "' needs positive spin, hyperfine and gyromagnetic values");
            if (s.abundance <= 0.0 || s.abundance > 1.0)
                throw std::invalid_argument("SpeciesRegistry: '" + s.name +
                                            "' abundance must lie in (0, 1]");
            for (std::size_t j = i + 1; j < species.size(); ++j)
                if (species[j].name == s.name)
                    throw std::invalid_argument("SpeciesRegistry: duplicate species '" + s.name + "'");
        }
    }
};

// Nuclear Larmor frequency in an applied field. gamma = 0 is allowed and
// yields 0 Hz; a non-positive field is rejected.
inline double larmor_frequency(const NuclearSpecies& s, double field_t) {
    if (field_t <= 0.0)
        throw std::invalid_argument("larmor_frequency: field must be positive");
    return s.gyromagnetic_hz_per_t * field_t;
}

inline double larmor_frequency(const SpeciesRegistry& reg, const std::string& name) {
    return larmor_frequency(reg.find(name), reg.field_t);
}

// GaAs defaults. The As hyperfine constant is the standard 65.3e9 rad/s
// converted to ordinary frequency; the Ga constants are the Paget values
// (38.2 and 48.5 ueV) converted the same way. Gyromagnetic ratios are the
// bare-nucleus values; abundances are the natural isotopic fractions, with
// As occupying its sublattice completely.
inline SpeciesRegistry default_registry() {
    SpeciesRegistry reg;
    reg.field_t = 6.10620;
    reg.species = {
        {"75As", 1.5, 65.3e9 / (2.0 * std::numbers::pi), 7.3150e6, 1.0},
        {"69Ga", 1.5, 9.2367e9, 10.2478e6, 0.604},
        {"71Ga", 1.5, 11.7272e9, 13.0208e6, 0.396},
    };
    return reg;
}

inline void to_json(nlohmann::json& j, const NuclearSpecies& s) {
    j = {{"name", s.name},
         {"spin", s.spin},
         {"hyperfine_A_hz", s.hyperfine_A_hz},
         {"gyromagnetic_hz_per_t", s.gyromagnetic_hz_per_t},
         {"abundance", s.abundance}};
}

inline void from_json(const nlohmann::json& j, NuclearSpecies& s) {
    j.at("name").get_to(s.name);
    j.at("spin").get_to(s.spin);
    j.at("hyperfine_A_hz").get_to(s.hyperfine_A_hz);
    j.at("gyromagnetic_hz_per_t").get_to(s.gyromagnetic_hz_per_t);
    j.at("abundance").get_to(s.abundance);
}

inline void to_json(nlohmann::json& j, const SpeciesRegistry& reg) {
    j = {{"field_t", reg.field_t}, {"species", reg.species}};
}

inline void from_json(const nlohmann::json& j, SpeciesRegistry& reg) {
    j.at("field_t").get_to(reg.field_t);
    j.at("species").get_to(reg.species);
}

} // namespace cspin::species
