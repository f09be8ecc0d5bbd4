#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "axrec/volume.hpp"

using namespace axrec;
namespace fs = std::filesystem;

namespace {
fs::path tmpdir() {
    auto p = fs::temp_directory_path() / "axrec_test_volume";
    fs::create_directories(p);
    return p;
}
}  // namespace

TEST_CASE("rng determinism and independent streams") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng s0 = Rng::derive(7, 0), s1 = Rng::derive(7, 1);
    int equal = 0;
    for (int i = 0; i < 64; ++i) equal += s0.next_u64() == s1.next_u64();
    CHECK(equal == 0);

    // uniform in [0,1), gaussian has roughly unit scale
    Rng r(3);
    double acc = 0.0, acc2 = 0.0;
    for (int i = 0; i < 10000; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        double g = r.gaussian();
        acc += g;
        acc2 += g * g;
    }
    CHECK(std::abs(acc / 10000.0) < 0.05);
    CHECK(std::abs(acc2 / 10000.0 - 1.0) < 0.1);
}

TEST_CASE("fnv1a known vector") {
    // FNV-1a 64-bit of "a" per the published reference parameters
    CHECK(fnv1a("a", 1) == 0xAF63DC4C8601EC8CULL);
    CHECK(fnv1a("", 0) == 0xCBF29CE484222325ULL);
}

TEST_CASE("slice center convention") {
    // D=4: slice centers at -0.75,-0.25,0.25,0.75; window {0,1} centered at -0.5
    CHECK(slice_center_z(0, 4) == doctest::Approx(-0.75).epsilon(1e-15));
    CHECK(slice_center_z(3, 4) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(axial_center_of_subvolume(0, 2, 4).z == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK(axial_center_of_subvolume(1, 2, 4).z == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(axial_center_of_subvolume(0, 2, 2).z == doctest::Approx(0.0).epsilon(1e-15));

    for (int k = 0; k < 16; ++k) CHECK(nearest_slice_index(slice_center_z(k, 16), 16) == k);
}

TEST_CASE("normalized coordinate rejects out-of-range") {
    CHECK_NOTHROW(NormalizedCoordinate(0.0));
    CHECK_NOTHROW(NormalizedCoordinate(-1.0));
    CHECK_NOTHROW(NormalizedCoordinate(1.0));
    CHECK_THROWS_AS(NormalizedCoordinate(1.0001), Error);
    CHECK_THROWS_AS(NormalizedCoordinate(-1.0001), Error);
}

TEST_CASE("volume payload size and round trip") {
    Volume v(4, 8, 8, 0.0f, "zeros");
    auto base = (tmpdir() / "zeros").string();
    save_volume(v, base);
    CHECK(fs::file_size(base + ".f32") == 4 * 8 * 8 * 4);

    Rng rng(1);
    Volume w(3, 5, 7);
    for (int k = 0; k < 3; ++k) {
        Image s(5, 7);
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 7; ++x) s(y, x) = rng.uniform();
        w.set_slice(k, s);
    }
    auto wbase = (tmpdir() / "rand").string();
    save_volume(w, wbase);
    Volume r = load_volume(wbase);
    REQUIRE(r.depth() == 3);
    for (int k = 0; k < 3; ++k) CHECK((r.slice(k) - w.slice(k)).cwiseAbs().maxCoeff() == 0.0);  // bit-exact
}

TEST_CASE("volume load errors and clamping") {
    Volume v(2, 2, 2, 0.25f);
    auto base = (tmpdir() / "trunc").string();
    save_volume(v, base);

    // truncate payload by 4 bytes -> size error
    fs::resize_file(base + ".f32", fs::file_size(base + ".f32") - 4);
    CHECK_THROWS_AS(load_volume(base), IoError);

    // slightly out-of-range value is clamped on load
    Volume c(1, 1, 1, 1.0000003f);
    auto cbase = (tmpdir() / "clamp").string();
    {
        std::ofstream f(cbase + ".f32", std::ios::binary);
        float val = 1.0000003f;
        f.write(reinterpret_cast<const char*>(&val), sizeof(val));
    }
    {
        std::ofstream f(cbase + ".json");
        f << R"({"dims":[1,1,1],"name":"c","dtype":"f32le"})";
    }
    Volume loaded = load_volume(cbase);
    CHECK(loaded.slice(0)(0, 0) == 1.0);

    // grossly out-of-range payload rejected
    {
        std::ofstream f(cbase + ".f32", std::ios::binary);
        float val = 1.5f;
        f.write(reinterpret_cast<const char*>(&val), sizeof(val));
    }
    CHECK_THROWS_AS(load_volume(cbase), IoError);
}

TEST_CASE("projection stack round trip and slice mapping") {
    ProjectionStack st;
    st.step_length = 2;
    st.source_depth = 4;
    st.projections = {Image::Constant(3, 3, 0.1), Image::Constant(3, 3, 0.5)};
    st.axial_centers = {axial_center_of_subvolume(0, 2, 4).z, axial_center_of_subvolume(1, 2, 4).z};
    auto base = (tmpdir() / "stack").string();
    save_stack(st, base);
    ProjectionStack r = load_stack(base);
    REQUIRE(r.count() == 2);
    CHECK(r.step_length == 2);
    CHECK(r.source_depth == 4);
    // on-disk precision is float32; a second round trip is bit-exact
    CHECK((r.projections[0].array() - (double)(float)0.1).abs().maxCoeff() == 0.0);
    save_stack(r, base);
    ProjectionStack r2 = load_stack(base);
    CHECK((r2.projections[0] - r.projections[0]).cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.axial_centers[1] == doctest::Approx(0.5).epsilon(1e-12));

    CHECK(st.subvolume_of_slice(0) == 0);
    CHECK(st.subvolume_of_slice(1) == 0);
    CHECK(st.subvolume_of_slice(3) == 1);
}
