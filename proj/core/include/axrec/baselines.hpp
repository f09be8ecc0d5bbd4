#pragma once

#include "axrec/volume.hpp"

namespace axrec {

// Distance-weighted average of the two projections bracketing each output
// depth; nearest projection held beyond the first/last axial centers.
Volume interp_linear(const ProjectionStack& stack, int depth_out);

// Per-pixel cubic Hermite along depth: central-difference interior slopes,
// one-sided at the ends; output clamped to [0,1].
Volume interp_cubic(const ProjectionStack& stack, int depth_out);

}  // namespace axrec
