#pragma once

// Umbrella header for the whole toolkit.

namespace cspin {
inline constexpr const char* version = "0.1.0";
}

#include "cspin/coherence.hpp"
#include "cspin/coherence_fit.hpp"
#include "cspin/fitters.hpp"
#include "cspin/frames.hpp"
#include "cspin/io.hpp"
#include "cspin/magnon.hpp"
#include "cspin/nlls.hpp"
#include "cspin/species.hpp"
