#pragma once

#include <string>
#include <vector>

namespace axrec {

// Minimal line plot (axes, ticks, numeric labels) written as a PNG.
// One series of (x, y) points, drawn in sorted-x order.
void write_line_plot_png(const std::string& path, const std::vector<double>& xs,
                         const std::vector<double>& ys, const std::string& x_label,
                         const std::string& y_label, int width = 640, int height = 480);

}  // namespace axrec
