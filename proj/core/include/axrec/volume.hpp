#pragma once

#include <optional>
#include <string>
#include <vector>

#include "axrec/common.hpp"

namespace axrec {

// Axial coordinate convention, fixed artifact-wide: slice index k of a
// D-deep volume sits at z = -1 + 2*(k + 0.5)/D (cell-centered, z in [-1,1]).
inline double slice_center_z(int k, int depth) {
    return -1.0 + 2.0 * (static_cast<double>(k) + 0.5) / static_cast<double>(depth);
}

// Inverse of slice_center_z, clamped to valid slice indices.
inline int nearest_slice_index(double z, int depth) {
    int k = static_cast<int>(std::floor((z + 1.0) * 0.5 * depth));
    if (k < 0) k = 0;
    if (k >= depth) k = depth - 1;
    return k;
}

struct NormalizedCoordinate {
    double z = 0.0;

    explicit NormalizedCoordinate(double zz) : z(zz) {
        if (!(z >= -1.0 && z <= 1.0)) throw Error("normalized coordinate out of [-1,1]");
    }
};

// Dense 3D scalar field, [depth][height][width], values in [0,1].
// Voxel payload is float32; that is also the on-disk precision.
class Volume {
  public:
    Volume() = default;
    Volume(int depth, int height, int width, float fill = 0.0f, std::string name = "volume");

    int depth() const { return d_; }
    int height() const { return h_; }
    int width() const { return w_; }
    std::size_t size() const { return data_.size(); }

    float& at(int z, int y, int x) { return data_[(static_cast<std::size_t>(z) * h_ + y) * w_ + x]; }
    float at(int z, int y, int x) const { return data_[(static_cast<std::size_t>(z) * h_ + y) * w_ + x]; }

    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }

    Image slice(int z) const;
    void set_slice(int z, const Image& img);

    // Throws Error if any value is non-finite or outside [0,1].
    void validate() const;

    std::string name = "volume";
    std::optional<std::array<double, 3>> voxel_size;  // micrometers per axis [z,y,x]

  private:
    int d_ = 0, h_ = 0, w_ = 0;
    std::vector<float> data_;
};

// Ordered axial projections {X_i}: each is the mean of step_length
// consecutive slices of the source volume.
struct ProjectionStack {
    std::vector<Image> projections;     // each H x W, values in [0,1]
    int step_length = 1;                // n
    std::vector<double> axial_centers;  // normalized depth per projection
    int source_depth = 0;               // D of the originating volume

    int height() const { return projections.empty() ? 0 : static_cast<int>(projections.front().rows()); }
    int width() const { return projections.empty() ? 0 : static_cast<int>(projections.front().cols()); }
    int count() const { return static_cast<int>(projections.size()); }

    void validate() const;

    // Index of the sub-volume (projection) containing slice k; clamps into
    // the kept range when trailing slices were dropped.
    int subvolume_of_slice(int k) const {
        int i = k / step_length;
        if (i >= count()) i = count() - 1;
        return i;
    }
};

// Center of slices [i*n, (i+1)*n) in normalized depth. Requires (i+1)*n <= D.
NormalizedCoordinate axial_center_of_subvolume(int i, int n, int depth);

// --- on-disk formats -------------------------------------------------------
// <base>.f32 : raw little-endian float32 voxels, z-major
// <base>.json: {"dims":[D,H,W], "voxel_size", "name", "dtype":"f32le"}
// A ProjectionStack is stored the same way with dims [N,H,W] and extra JSON
// fields {step_length, axial_centers, source_depth}.

void save_volume(const Volume& v, const std::string& base_path);
Volume load_volume(const std::string& base_path);

void save_stack(const ProjectionStack& s, const std::string& base_path);
ProjectionStack load_stack(const std::string& base_path);

std::uint64_t volume_hash(const Volume& v);

}  // namespace axrec
