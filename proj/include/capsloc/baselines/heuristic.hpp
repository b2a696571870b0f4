#pragma once

#include <utility>

namespace capsloc {

/// The do-nothing localizer: digits bounce symmetrically, so the canvas
/// center is the best constant guess.
inline std::pair<double, double> heuristic_coords() { return {0.5, 0.5}; }

}  // namespace capsloc
