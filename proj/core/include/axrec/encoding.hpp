#pragma once

#include <variant>

#include "axrec/common.hpp"

namespace axrec {

// Fourier-feature embedding: p(c) = [sin(2*pi*B*c), cos(2*pi*B*c)],
// B is (out_dim/2) x 3 with i.i.d. N(0, sigma^2) entries, frozen after init.
class GaussianEncoding {
  public:
    GaussianEncoding() = default;
    GaussianEncoding(int out_dim, double sigma, std::uint64_t seed);

    int out_dim() const { return static_cast<int>(B_.rows()) * 2; }
    double sigma() const { return sigma_; }
    const Mat& matrix() const { return B_; }
    void set_matrix(Mat b, double sigma) { B_ = std::move(b); sigma_ = sigma; }

    // coords: N x 3 in [-1,1]^3 -> N x out_dim
    Mat encode(const Mat& coords) const;

  private:
    Mat B_;  // (out_dim/2) x 3
    double sigma_ = 10.0;
};

// NeRF-style per-axis embedding: [sin(2^j * pi * c), cos(2^j * pi * c)],
// j = 0..L-1, for each of the 3 axes; out_dim = 6L (+3 with include_input).
class SinCosEncoding {
  public:
    SinCosEncoding() = default;
    explicit SinCosEncoding(int num_frequencies, bool include_input = false);

    int out_dim() const { return 6 * L_ + (include_input_ ? 3 : 0); }
    int num_frequencies() const { return L_; }
    bool include_input() const { return include_input_; }

    Mat encode(const Mat& coords) const;

  private:
    int L_ = 10;
    bool include_input_ = false;
};

using Encoding = std::variant<GaussianEncoding, SinCosEncoding>;

inline int encoding_out_dim(const Encoding& e) {
    return std::visit([](const auto& enc) { return enc.out_dim(); }, e);
}

inline Mat encode(const Encoding& e, const Mat& coords) {
    return std::visit([&](const auto& enc) { return enc.encode(coords); }, e);
}

// Single-coordinate convenience.
inline Vec encode_one(const Encoding& e, double x, double y, double z) {
    Mat c(1, 3);
    c << x, y, z;
    return encode(e, c).row(0).transpose();
}

// Lateral pixel-center grid at depth z: rows ordered y-major, coords
// (x, y, z) with x,y the normalized pixel centers. Returns (H*W) x 3.
Mat slice_coordinate_grid(double z, int height, int width);

}  // namespace axrec
