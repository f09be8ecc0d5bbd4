#include "axrec/volume.hpp"

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace axrec {

using nlohmann::json;

Volume::Volume(int depth, int height, int width, float fill, std::string nm)
    : name(std::move(nm)), d_(depth), h_(height), w_(width) {
    if (depth < 1 || height < 1 || width < 1) throw Error("volume dims must be >= 1");
    data_.assign(static_cast<std::size_t>(depth) * height * width, fill);
}

Image Volume::slice(int z) const {
    Image img(h_, w_);
    for (int y = 0; y < h_; ++y)
        for (int x = 0; x < w_; ++x) img(y, x) = at(z, y, x);
    return img;
}

void Volume::set_slice(int z, const Image& img) {
    if (img.rows() != h_ || img.cols() != w_) throw Error("slice shape mismatch");
    for (int y = 0; y < h_; ++y)
        for (int x = 0; x < w_; ++x) at(z, y, x) = static_cast<float>(img(y, x));
}

void Volume::validate() const {
    for (float v : data_) {
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
            throw Error("volume value out of [0,1]: " + std::to_string(v));
    }
}

void ProjectionStack::validate() const {
    if (projections.empty()) throw Error("empty projection stack");
    if (step_length < 1) throw Error("step_length must be >= 1");
    if (axial_centers.size() != projections.size()) throw Error("axial_centers size mismatch");
    int h = height(), w = width();
    double prev = -2.0;
    for (std::size_t i = 0; i < projections.size(); ++i) {
        if (projections[i].rows() != h || projections[i].cols() != w)
            throw Error("projection shape mismatch at index " + std::to_string(i));
        if (axial_centers[i] <= prev || axial_centers[i] < -1.0 || axial_centers[i] > 1.0)
            throw Error("axial_centers must be strictly increasing within [-1,1]");
        prev = axial_centers[i];
    }
    if (count() != source_depth / step_length)
        throw Error("projection count inconsistent with source_depth/step_length");
}

NormalizedCoordinate axial_center_of_subvolume(int i, int n, int depth) {
    if (i < 0 || n < 1 || (i + 1) * n > depth)
        throw Error("sub-volume index out of range: i=" + std::to_string(i));
    // center index of slices [i*n, (i+1)*n) is i*n + (n-1)/2
    double center_index = i * static_cast<double>(n) + (n - 1) / 2.0;
    return NormalizedCoordinate(-1.0 + 2.0 * (center_index + 0.5) / depth);
}

namespace {

void write_file_atomic(const std::string& path, const void* data, std::size_t len) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for write: " + tmp);
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
        if (!out) throw IoError("write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + path + ": " + ec.message());
}

void write_text_atomic(const std::string& path, const std::string& text) {
    write_file_atomic(path, text.data(), text.size());
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("missing file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("corrupt JSON in " + path + ": " + e.what());
    }
    return j;
}

std::vector<float> read_payload(const std::string& path, std::size_t expected) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("missing file: " + path);
    auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != expected * sizeof(float))
        throw IoError("payload size mismatch in " + path + ": have " + std::to_string(bytes) +
                      " bytes, expect " + std::to_string(expected * sizeof(float)));
    std::vector<float> buf(expected);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw IoError("read failed: " + path);
    return buf;
}

float sanitize_value(float v, const std::string& path) {
    if (!std::isfinite(v)) throw IoError("non-finite voxel in " + path);
    if (v < -1e-6f || v > 1.0f + 1e-6f)
        throw IoError("voxel out of [0,1] in " + path + ": " + std::to_string(v));
    return std::min(1.0f, std::max(0.0f, v));
}

}  // namespace

void save_volume(const Volume& v, const std::string& base_path) {
    json meta{{"dims", {v.depth(), v.height(), v.width()}},
              {"name", v.name},
              {"dtype", "f32le"}};
    if (v.voxel_size) meta["voxel_size"] = *v.voxel_size;
    write_file_atomic(base_path + ".f32", v.data().data(), v.data().size() * sizeof(float));
    write_text_atomic(base_path + ".json", meta.dump(2) + "\n");
}

Volume load_volume(const std::string& base_path) {
    json meta = read_json_file(base_path + ".json");
    auto dims = meta.at("dims").get<std::array<int, 3>>();
    Volume v(dims[0], dims[1], dims[2], 0.0f, meta.value("name", "volume"));
    if (meta.contains("voxel_size")) v.voxel_size = meta["voxel_size"].get<std::array<double, 3>>();
    auto buf = read_payload(base_path + ".f32", v.size());
    for (std::size_t i = 0; i < buf.size(); ++i) v.data()[i] = sanitize_value(buf[i], base_path);
    return v;
}

void save_stack(const ProjectionStack& s, const std::string& base_path) {
    s.validate();
    Volume v(s.count(), s.height(), s.width(), 0.0f, "projection_stack");
    for (int i = 0; i < s.count(); ++i) v.set_slice(i, s.projections[i]);
    json meta{{"dims", {s.count(), s.height(), s.width()}},
              {"name", "projection_stack"},
              {"dtype", "f32le"},
              {"step_length", s.step_length},
              {"axial_centers", s.axial_centers},
              {"source_depth", s.source_depth}};
    write_file_atomic(base_path + ".f32", v.data().data(), v.data().size() * sizeof(float));
    write_text_atomic(base_path + ".json", meta.dump(2) + "\n");
}

ProjectionStack load_stack(const std::string& base_path) {
    json meta = read_json_file(base_path + ".json");
    auto dims = meta.at("dims").get<std::array<int, 3>>();
    auto buf = read_payload(base_path + ".f32",
                            static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
    ProjectionStack s;
    s.step_length = meta.at("step_length").get<int>();
    s.axial_centers = meta.at("axial_centers").get<std::vector<double>>();
    s.source_depth = meta.at("source_depth").get<int>();
    std::size_t off = 0;
    for (int i = 0; i < dims[0]; ++i) {
        Image img(dims[1], dims[2]);
        for (int y = 0; y < dims[1]; ++y)
            for (int x = 0; x < dims[2]; ++x) img(y, x) = sanitize_value(buf[off++], base_path);
        s.projections.push_back(std::move(img));
    }
    s.validate();
    return s;
}

std::uint64_t volume_hash(const Volume& v) {
    std::uint64_t h = fnv1a(v.data().data(), v.data().size() * sizeof(float));
    std::array<int, 3> dims{v.depth(), v.height(), v.width()};
    return fnv1a(dims.data(), sizeof(dims), h);
}

}  // namespace axrec
