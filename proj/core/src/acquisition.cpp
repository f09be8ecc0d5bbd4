#include "axrec/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace axrec {

PhantomKind phantom_kind_from_string(const std::string& s) {
    if (s == "tubes") return PhantomKind::tubes;
    if (s == "spheres") return PhantomKind::spheres;
    if (s == "dendrite_like") return PhantomKind::dendrite_like;
    throw ConfigError("unknown phantom kind: " + s);
}

std::string to_string(PhantomKind k) {
    switch (k) {
        case PhantomKind::tubes: return "tubes";
        case PhantomKind::spheres: return "spheres";
        case PhantomKind::dendrite_like: return "dendrite_like";
    }
    return "?";
}

void PhantomSpec::validate() const {
    if (depth < 8 || height < 16 || width < 16)
        throw ConfigError("phantom dims too small, need at least [8,16,16]");
    if (!(density > 0.0 && density <= 1.0)) throw ConfigError("density must be in (0,1]");
    if (smoothness < 0.0) throw ConfigError("smoothness must be >= 0");
}

namespace {

struct Raster {
    Volume& v;
    std::size_t occupied = 0;
    std::size_t cap;  // stop rasterizing once this many voxels are set

    bool full() const { return occupied >= cap; }

    void set(int z, int y, int x) {
        if (z < 0 || y < 0 || x < 0 || z >= v.depth() || y >= v.height() || x >= v.width()) return;
        float& cell = v.at(z, y, x);
        if (cell < 0.5f) {
            cell = 1.0f;
            ++occupied;
        }
    }

    // Solid ball of given radius around a (fractional) center.
    void ball(double cz, double cy, double cx, double r) {
        int ir = static_cast<int>(std::ceil(r));
        for (int dz = -ir; dz <= ir && !full(); ++dz)
            for (int dy = -ir; dy <= ir; ++dy)
                for (int dx = -ir; dx <= ir; ++dx) {
                    if (dz * dz + dy * dy + dx * dx <= r * r + 0.25)
                        set(static_cast<int>(std::lround(cz)) + dz,
                            static_cast<int>(std::lround(cy)) + dy,
                            static_cast<int>(std::lround(cx)) + dx);
                }
    }
};

// Random smooth polyline swept with a ball: vasculature / neurite proxy.
void add_tube(Raster& ras, Rng& rng, double radius, int steps, bool wiggly) {
    const auto& v = ras.v;
    double z = rng.uniform(0, v.depth());
    double y = rng.uniform(0, v.height());
    double x = rng.uniform(0, v.width());
    double dz = rng.gaussian(), dy = rng.gaussian(), dx = rng.gaussian();
    double norm = std::sqrt(dz * dz + dy * dy + dx * dx) + 1e-12;
    dz /= norm; dy /= norm; dx /= norm;
    double turn = wiggly ? 0.45 : 0.15;
    for (int s = 0; s < steps && !ras.full(); ++s) {
        ras.ball(z, y, x, radius);
        dz += turn * rng.gaussian();
        dy += turn * rng.gaussian();
        dx += turn * rng.gaussian();
        norm = std::sqrt(dz * dz + dy * dy + dx * dx) + 1e-12;
        dz /= norm; dy /= norm; dx /= norm;
        z += 0.7 * dz; y += 0.7 * dy; x += 0.7 * dx;
    }
}

std::vector<double> gaussian_kernel(double sigma) {
    int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * r + 1);
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + r];
    }
    for (double& w : k) w /= sum;
    return k;
}

int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

}  // namespace

void gaussian_blur_inplace(Volume& v, double sigma) {
    if (sigma <= 0.0) return;
    auto kernel = gaussian_kernel(sigma);
    int r = (static_cast<int>(kernel.size()) - 1) / 2;
    const int dims[3] = {v.depth(), v.height(), v.width()};
    std::vector<float> tmp(v.size());
    for (int axis = 0; axis < 3; ++axis) {
        int n = dims[axis];
        for (int z = 0; z < v.depth(); ++z)
            for (int y = 0; y < v.height(); ++y)
                for (int x = 0; x < v.width(); ++x) {
                    int idx[3] = {z, y, x};
                    double acc = 0.0;
                    for (int o = -r; o <= r; ++o) {
                        int src[3] = {z, y, x};
                        src[axis] = reflect(idx[axis] + o, n);
                        acc += kernel[o + r] * v.at(src[0], src[1], src[2]);
                    }
                    tmp[(static_cast<std::size_t>(z) * v.height() + y) * v.width() + x] =
                        static_cast<float>(acc);
                }
        v.data() = tmp;
    }
}

Volume generate_phantom(const PhantomSpec& spec) {
    spec.validate();
    Volume v(spec.depth, spec.height, spec.width, 0.0f, to_string(spec.kind) + "_phantom");
    Rng rng(spec.seed);
    std::size_t total = v.size();
    Raster ras{v, 0, static_cast<std::size_t>(std::ceil(spec.density * total))};
    double max_radius = (spec.kind == PhantomKind::tubes) ? 3.0 : 5.0;
    if (2 * max_radius + 1 > std::min(spec.height, spec.width))
        throw ConfigError("phantom dims too small for structure radius");

    int guard = 0;
    while (!ras.full() && ++guard < 100000) {
        switch (spec.kind) {
            case PhantomKind::tubes:
                add_tube(ras, rng, rng.uniform(1.0, 3.0),
                         static_cast<int>(rng.uniform(0.5, 1.5) * spec.height), false);
                break;
            case PhantomKind::spheres:
                ras.ball(rng.uniform(0, spec.depth), rng.uniform(0, spec.height),
                         rng.uniform(0, spec.width), rng.uniform(2.0, 5.0));
                break;
            case PhantomKind::dendrite_like: {
                // one stem plus a few short branches, all sub-voxel radius
                add_tube(ras, rng, 0.9, static_cast<int>(spec.height * 1.2), true);
                int branches = rng.uniform_int(1, 3);
                for (int b = 0; b < branches && !ras.full(); ++b)
                    add_tube(ras, rng, 0.9, spec.height / 2, true);
                break;
            }
        }
    }
    gaussian_blur_inplace(v, spec.smoothness);
    return v;
}

ProjectionStack project(const Volume& v, const AcquisitionConfig& cfg) {
    int n = cfg.step_length;
    if (n < 1) throw ConfigError("step_length must be >= 1");
    if (n > v.depth()) throw Error("step_length exceeds volume depth");
    ProjectionStack s;
    s.step_length = n;
    s.source_depth = v.depth();
    int num = v.depth() / n;
    Rng noise_rng(cfg.noise_seed);
    for (int i = 0; i < num; ++i) {
        Image acc = Image::Zero(v.height(), v.width());
        for (int k = 0; k < n; ++k) acc += v.slice(i * n + k);
        acc /= static_cast<double>(n);
        if (cfg.noise_sigma > 0.0) {
            for (int y = 0; y < acc.rows(); ++y)
                for (int x = 0; x < acc.cols(); ++x)
                    acc(y, x) = std::clamp(acc(y, x) + cfg.noise_sigma * noise_rng.gaussian(), 0.0, 1.0);
        }
        // quantize to the storage precision
        acc = acc.unaryExpr([](double d) { return static_cast<double>(static_cast<float>(d)); });
        s.projections.push_back(std::move(acc));
        s.axial_centers.push_back(axial_center_of_subvolume(i, n, v.depth()).z);
    }
    s.validate();
    return s;
}

}  // namespace axrec
