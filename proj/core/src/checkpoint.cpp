#include "axrec/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace axrec {

namespace {
constexpr char kMagic[8] = {'A', 'X', 'R', 'E', 'C', 'K', 'P', 'T'};
}

void save_blob(const std::string& path, const nlohmann::json& header,
               const std::vector<double>& blob) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for write: " + tmp);
        out.write(kMagic, sizeof(kMagic));
        std::string h = header.dump();
        std::uint64_t hlen = h.size(), blen = blob.size();
        out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
        out.write(h.data(), static_cast<std::streamsize>(h.size()));
        out.write(reinterpret_cast<const char*>(&blen), sizeof(blen));
        out.write(reinterpret_cast<const char*>(blob.data()),
                  static_cast<std::streamsize>(blob.size() * sizeof(double)));
        if (!out) throw IoError("write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + path + ": " + ec.message());
}

std::pair<nlohmann::json, std::vector<double>> load_blob(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("missing checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("not a checkpoint file: " + path);
    std::uint64_t hlen = 0, blen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string h(hlen, '\0');
    in.read(h.data(), static_cast<std::streamsize>(hlen));
    in.read(reinterpret_cast<char*>(&blen), sizeof(blen));
    std::vector<double> blob(blen);
    in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(blen * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint: " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(h);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("corrupt checkpoint header in " + path + ": " + e.what());
    }
    return {header, std::move(blob)};
}

std::uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("missing file: " + path);
    std::uint64_t h = 0xCBF29CE484222325ULL;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
        if (!in) break;
    }
    return h;
}

}  // namespace axrec
