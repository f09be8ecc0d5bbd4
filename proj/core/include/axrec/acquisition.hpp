#pragma once

#include <cstdint>

#include "axrec/volume.hpp"

namespace axrec {

enum class PhantomKind { tubes, spheres, dendrite_like };

PhantomKind phantom_kind_from_string(const std::string& s);
std::string to_string(PhantomKind k);

// Synthetic stand-ins for point-scanned ground-truth stacks: tubes for
// vasculature, spheres for somata, dendrite_like for sub-voxel neurites.
struct PhantomSpec {
    PhantomKind kind = PhantomKind::tubes;
    int depth = 32, height = 64, width = 64;
    double density = 0.05;   // target occupied-voxel fraction, (0,1]
    std::uint64_t seed = 0;
    double smoothness = 0.0;  // Gaussian blur sigma in voxels, applied after rasterization

    void validate() const;
};

struct AcquisitionConfig {
    int step_length = 4;  // n
    double noise_sigma = 0.0;  // optional i.i.d. Gaussian sensor noise, default off
    std::uint64_t noise_seed = 0;
};

// Deterministic in spec.seed. Occupied fraction (voxels > 0.5) lands within
// +-30% of spec.density.
Volume generate_phantom(const PhantomSpec& spec);

// X_i = (1/n) * sum of slices [i*n, (i+1)*n); trailing partial sub-volume
// dropped. Projections are quantized to float32 so that in-memory values
// match a save/load round trip exactly.
ProjectionStack project(const Volume& v, const AcquisitionConfig& cfg);

// Separable 3D Gaussian blur, sigma in voxels; no-op for sigma <= 0.
void gaussian_blur_inplace(Volume& v, double sigma);

}  // namespace axrec
