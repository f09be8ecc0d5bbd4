#include <benchmark/benchmark.h>

#include "axrec/acquisition.hpp"
#include "axrec/baselines.hpp"
#include "axrec/diffusion.hpp"
#include "axrec/encoding.hpp"
#include "axrec/inr.hpp"
#include "axrec/metrics.hpp"

using namespace axrec;

namespace {

Volume make_phantom(int d, int h, int w) {
    PhantomSpec spec;
    spec.depth = d;
    spec.height = h;
    spec.width = w;
    spec.density = 0.05;
    spec.seed = 1;
    return generate_phantom(spec);
}

void BM_PhantomGenerate(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(make_phantom(16, 64, 64));
}
BENCHMARK(BM_PhantomGenerate)->Unit(benchmark::kMillisecond);

void BM_Projection(benchmark::State& state) {
    Volume v = make_phantom(32, 64, 64);
    AcquisitionConfig cfg{4};
    for (auto _ : state) benchmark::DoNotOptimize(project(v, cfg));
}
BENCHMARK(BM_Projection)->Unit(benchmark::kMillisecond);

void BM_GaussianEncode(benchmark::State& state) {
    Encoding enc = GaussianEncoding(256, 3.0, 1);
    Mat grid = slice_coordinate_grid(0.25, 64, 64);
    for (auto _ : state) benchmark::DoNotOptimize(encode(enc, grid));
}
BENCHMARK(BM_GaussianEncode)->Unit(benchmark::kMillisecond);

void BM_InrRenderSlice(benchmark::State& state) {
    InrField f(Encoding{GaussianEncoding(128, 3.0, 1)}, {128, 128}, 1);
    for (auto _ : state) benchmark::DoNotOptimize(f.render_slice(0.25, 64, 64));
}
BENCHMARK(BM_InrRenderSlice)->Unit(benchmark::kMillisecond);

void BM_DenoiserForward(benchmark::State& state) {
    DenoiserConfig dcfg;
    dcfg.base_channels = 8;
    dcfg.time_embed_dim = 32;
    dcfg.cond_dim = 64;
    CondEncoderConfig ccfg;
    ccfg.img_base_channels = 4;
    ccfg.img_out_dim = 32;
    ccfg.pos_hidden = 32;
    ccfg.pos_out_dim = 32;
    Encoding enc = GaussianEncoding(32, 3.0, 1);
    DiffusionModel m(dcfg, ccfg, 32, NoiseSchedule{}, GuidanceConfig{}, 1);
    Rng rng(2);
    Image x(32, 32);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
    Vec pos = encode_one(enc, 0.0, 0.0, 0.25);
    Condition c = m.encoders().build(x, pos, nullptr);
    for (auto _ : state) benchmark::DoNotOptimize(m.denoiser().forward(x, 100, c));
}
BENCHMARK(BM_DenoiserForward)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
    Rng rng(3);
    Image a(64, 64), b(64, 64);
    for (int i = 0; i < a.size(); ++i) {
        a.data()[i] = rng.uniform();
        b.data()[i] = rng.uniform();
    }
    for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Unit(benchmark::kMillisecond);

void BM_OtsuThreshold(benchmark::State& state) {
    Rng rng(4);
    Image a(64, 64);
    for (int i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform();
    for (auto _ : state) benchmark::DoNotOptimize(otsu_threshold(a));
}
BENCHMARK(BM_OtsuThreshold);

void BM_LinearInterp(benchmark::State& state) {
    Volume v = make_phantom(32, 64, 64);
    ProjectionStack st = project(v, AcquisitionConfig{4});
    for (auto _ : state) benchmark::DoNotOptimize(interp_linear(st, 32));
}
BENCHMARK(BM_LinearInterp)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
