#include "axrec/encoding.hpp"

namespace axrec {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kPi = 3.1415926535897932384626433832795;
}  // namespace

GaussianEncoding::GaussianEncoding(int out_dim, double sigma, std::uint64_t seed) : sigma_(sigma) {
    if (out_dim < 2 || out_dim % 2 != 0) throw ConfigError("Gaussian encoding out_dim must be even and >= 2");
    if (!(sigma > 0.0)) throw ConfigError("Gaussian encoding sigma must be > 0");
    Rng rng(seed);
    B_.resize(out_dim / 2, 3);
    for (Eigen::Index r = 0; r < B_.rows(); ++r)
        for (Eigen::Index c = 0; c < 3; ++c) B_(r, c) = sigma * rng.gaussian();
}

Mat GaussianEncoding::encode(const Mat& coords) const {
    if (coords.cols() != 3) throw Error("coords must be N x 3");
    Mat phase = kTwoPi * (coords * B_.transpose());  // N x F/2
    Mat out(coords.rows(), out_dim());
    out.leftCols(B_.rows()) = phase.array().sin().matrix();
    out.rightCols(B_.rows()) = phase.array().cos().matrix();
    return out;
}

SinCosEncoding::SinCosEncoding(int num_frequencies, bool include_input)
    : L_(num_frequencies), include_input_(include_input) {
    if (L_ < 1) throw ConfigError("SinCos encoding needs at least 1 frequency");
}

Mat SinCosEncoding::encode(const Mat& coords) const {
    if (coords.cols() != 3) throw Error("coords must be N x 3");
    Mat out(coords.rows(), out_dim());
    Eigen::Index col = 0;
    for (int axis = 0; axis < 3; ++axis) {
        double freq = kPi;
        for (int j = 0; j < L_; ++j) {
            out.col(col++) = (freq * coords.col(axis)).array().sin().matrix();
            out.col(col++) = (freq * coords.col(axis)).array().cos().matrix();
            freq *= 2.0;
        }
    }
    if (include_input_) out.rightCols(3) = coords;
    return out;
}

Mat slice_coordinate_grid(double z, int height, int width) {
    Mat coords(static_cast<Eigen::Index>(height) * width, 3);
    Eigen::Index r = 0;
    for (int y = 0; y < height; ++y) {
        double ny = -1.0 + 2.0 * (y + 0.5) / height;
        for (int x = 0; x < width; ++x) {
            coords(r, 0) = -1.0 + 2.0 * (x + 0.5) / width;
            coords(r, 1) = ny;
            coords(r, 2) = z;
            ++r;
        }
    }
    return coords;
}

}  // namespace axrec
