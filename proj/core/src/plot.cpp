#include "axrec/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

#include <png.h>

#include "axrec/common.hpp"

namespace axrec {

namespace {

struct Canvas {
    int w, h;
    std::vector<unsigned char> px;  // grayscale, 255 = white

    Canvas(int width, int height) : w(width), h(height), px(static_cast<std::size_t>(width) * height, 255) {}

    void set(int x, int y, unsigned char v = 0) {
        if (x >= 0 && x < w && y >= 0 && y < h) px[static_cast<std::size_t>(y) * w + x] = v;
    }

    void line(double x0, double y0, double x1, double y1) {
        double dx = x1 - x0, dy = y1 - y0;
        int steps = static_cast<int>(std::ceil(std::max(std::abs(dx), std::abs(dy)))) + 1;
        for (int i = 0; i <= steps; ++i) {
            double t = static_cast<double>(i) / steps;
            set(static_cast<int>(std::lround(x0 + t * dx)), static_cast<int>(std::lround(y0 + t * dy)));
        }
    }

    void dot(int cx, int cy, int r = 2) {
        for (int y = -r; y <= r; ++y)
            for (int x = -r; x <= r; ++x)
                if (x * x + y * y <= r * r) set(cx + x, cy + y);
    }
};

// 3x5 glyphs for numeric labels
const char* glyph(char c) {
    switch (c) {
        case '0': return "111101101101111";
        case '1': return "010110010010111";
        case '2': return "111001111100111";
        case '3': return "111001111001111";
        case '4': return "101101111001001";
        case '5': return "111100111001111";
        case '6': return "111100111101111";
        case '7': return "111001010010010";
        case '8': return "111101111101111";
        case '9': return "111101111001111";
        case '.': return "000000000000010";
        case '-': return "000000111000000";
        case 'e': return "111101110100111";
        case '+': return "000010111010000";
        default: return nullptr;
    }
}

void draw_text(Canvas& c, int x, int y, const std::string& text) {
    for (char ch : text) {
        const char* g = glyph(ch);
        if (g) {
            for (int ry = 0; ry < 5; ++ry)
                for (int rx = 0; rx < 3; ++rx)
                    if (g[ry * 3 + rx] == '1') c.set(x + rx, y + ry);
        }
        x += 4;
    }
}

std::string fmt_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

void write_png(const std::string& path, const Canvas& c) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("cannot open for write: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("libpng failure writing " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(c.w), static_cast<png_uint_32>(c.h), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < c.h; ++y)
        png_write_row(png, const_cast<png_bytep>(&c.px[static_cast<std::size_t>(y) * c.w]));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

}  // namespace

void write_line_plot_png(const std::string& path, const std::vector<double>& xs,
                         const std::vector<double>& ys, const std::string&, const std::string&,
                         int width, int height) {
    if (xs.size() != ys.size() || xs.empty()) throw Error("plot needs matching nonempty series");
    Canvas c(width, height);
    const int ml = 60, mr = 20, mt = 20, mb = 40;  // margins
    double xmin = *std::min_element(xs.begin(), xs.end());
    double xmax = *std::max_element(xs.begin(), xs.end());
    double ymin = *std::min_element(ys.begin(), ys.end());
    double ymax = *std::max_element(ys.begin(), ys.end());
    if (xmax == xmin) { xmax += 1.0; xmin -= 1.0; }
    if (ymax == ymin) { ymax += 1.0; ymin -= 1.0; }
    double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad; ymax += ypad;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); };
    auto py = [&](double y) { return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb); };

    // axes
    c.line(ml, mt, ml, height - mb);
    c.line(ml, height - mb, width - mr, height - mb);
    // ticks
    for (int i = 0; i <= 4; ++i) {
        double xv = xmin + (xmax - xmin) * i / 4.0;
        double yv = ymin + (ymax - ymin) * i / 4.0;
        c.line(px(xv), height - mb, px(xv), height - mb + 4);
        c.line(ml - 4, py(yv), ml, py(yv));
        draw_text(c, static_cast<int>(px(xv)) - 8, height - mb + 8, fmt_tick(xv));
        draw_text(c, 4, static_cast<int>(py(yv)) - 2, fmt_tick(yv));
    }
    // series, sorted by x
    std::vector<std::size_t> order(xs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    for (std::size_t i = 0; i < order.size(); ++i) {
        c.dot(static_cast<int>(px(xs[order[i]])), static_cast<int>(py(ys[order[i]])));
        if (i > 0)
            c.line(px(xs[order[i - 1]]), py(ys[order[i - 1]]), px(xs[order[i]]), py(ys[order[i]]));
    }
    write_png(path, c);
}

}  // namespace axrec
