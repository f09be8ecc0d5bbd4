#include "axrec/baselines.hpp"

#include <algorithm>

namespace axrec {

namespace {

// bracket index i such that centers[i] <= z <= centers[i+1]
int bracket(const std::vector<double>& centers, double z) {
    int n = static_cast<int>(centers.size());
    int i = static_cast<int>(std::upper_bound(centers.begin(), centers.end(), z) - centers.begin()) - 1;
    return std::clamp(i, 0, n - 2);
}

}  // namespace

Volume interp_linear(const ProjectionStack& stack, int depth_out) {
    stack.validate();
    if (stack.count() < 2) throw Error("interp_linear needs at least 2 projections");
    Volume out(depth_out, stack.height(), stack.width(), 0.0f, "linear_interp");
    const auto& c = stack.axial_centers;
    for (int k = 0; k < depth_out; ++k) {
        double z = slice_center_z(k, depth_out);
        if (z <= c.front()) {
            out.set_slice(k, stack.projections.front());
        } else if (z >= c.back()) {
            out.set_slice(k, stack.projections.back());
        } else {
            int i = bracket(c, z);
            double u = (z - c[i]) / (c[i + 1] - c[i]);
            out.set_slice(k, (1.0 - u) * stack.projections[i] + u * stack.projections[i + 1]);
        }
    }
    return out;
}

Volume interp_cubic(const ProjectionStack& stack, int depth_out) {
    stack.validate();
    int n = stack.count();
    if (n < 2) throw Error("interp_cubic needs at least 2 projections");
    const auto& c = stack.axial_centers;

    // per-projection slope estimates dX/dz
    std::vector<Image> slopes(n);
    slopes[0] = (stack.projections[1] - stack.projections[0]) / (c[1] - c[0]);
    slopes[n - 1] = (stack.projections[n - 1] - stack.projections[n - 2]) / (c[n - 1] - c[n - 2]);
    for (int i = 1; i + 1 < n; ++i)
        slopes[i] = (stack.projections[i + 1] - stack.projections[i - 1]) / (c[i + 1] - c[i - 1]);

    Volume out(depth_out, stack.height(), stack.width(), 0.0f, "cubic_interp");
    for (int k = 0; k < depth_out; ++k) {
        double z = slice_center_z(k, depth_out);
        if (z <= c.front()) {
            out.set_slice(k, stack.projections.front());
            continue;
        }
        if (z >= c.back()) {
            out.set_slice(k, stack.projections.back());
            continue;
        }
        int i = bracket(c, z);
        double hseg = c[i + 1] - c[i];
        double u = (z - c[i]) / hseg;
        double h00 = (1 + 2 * u) * (1 - u) * (1 - u);
        double h10 = u * (1 - u) * (1 - u);
        double h01 = u * u * (3 - 2 * u);
        double h11 = u * u * (u - 1);
        Image img = h00 * stack.projections[i] + h10 * hseg * slopes[i] +
                    h01 * stack.projections[i + 1] + h11 * hseg * slopes[i + 1];
        out.set_slice(k, img.cwiseMax(0.0).cwiseMin(1.0));
    }
    return out;
}

}  // namespace axrec
