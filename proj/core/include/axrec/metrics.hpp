#pragma once

#include <optional>
#include <string>
#include <vector>

#include "axrec/volume.hpp"

namespace axrec {

// All metrics take [0,1] images and internally map to the 255 range
// (multiply by 255, no quantization except Otsu's 256-bin histogram).

// Windowed SSIM: 11x11 Gaussian window (sigma 1.5), C1=(0.01*255)^2,
// C2=(0.03*255)^2, covariance-based structure term, mean over windows.
// Window shrinks to the largest odd size <= min dimension on small images.
double ssim(const Image& x, const Image& y);

// Global single-window variant l*c*s (reference only, not used in reports).
double ssim_global(const Image& x, const Image& y);

// 10*log10(255^2 / MSE); +infinity when MSE == 0.
double psnr(const Image& x, const Image& y);

struct OtsuResult {
    double threshold = 0.0;  // in [0,255] bin value
    bool degenerate = false; // constant image, single class
};

// 256-bin between-class-variance maximizer; tie-break to the lowest bin.
OtsuResult otsu_threshold(const Image& img);

// Foreground mask under a 255-range threshold: value*255 > threshold.
std::vector<bool> binarize(const Image& img, double threshold255);

// (2|X∩Y| + C) / (|X| + |Y| + C), default C=1.
double dice(const std::vector<bool>& x_mask, const std::vector<bool>& y_mask, double c = 1.0);

struct SliceMetrics {
    double ssim = 0.0;
    double psnr = 0.0;  // +inf encoded as infinity
    double dice = 0.0;
};

struct MetricReport {
    std::vector<SliceMetrics> per_slice;
    double mean_ssim = 0.0;
    double mean_psnr = 0.0;   // over finite-PSNR slices
    int infinite_psnr_count = 0;
    double mean_dice = 0.0;
    double volume_dice = 0.0;  // single 3D DICE with per-slice Otsu masks

    std::string to_json() const;
    static MetricReport from_json(const std::string& text);
};

// Slice-wise SSIM/PSNR/DICE along the axial direction plus the 3D DICE.
MetricReport evaluate(const Volume& recon, const Volume& truth);

}  // namespace axrec
