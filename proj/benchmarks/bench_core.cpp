#include <cmath>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "rotstar/detect.hpp"
#include "rotstar/eval.hpp"
#include "rotstar/optics.hpp"
#include "rotstar/patterns.hpp"
#include "rotstar/refine.hpp"

using namespace rotstar;

namespace {

ImageF random_image(int w, int h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ImageF img(w, h);
    for (double& v : img.pixels()) v = u(rng);
    return img;
}

std::vector<ImageF> corner_frames(int n, double blur) {
    std::vector<ImageF> frames;
    for (int k = 0; k < n; ++k) {
        const double t = k * M_PI / 16.0;
        ImageF img(48, 48);
        for (int y = 0; y < 48; ++y) {
            for (int x = 0; x < 48; ++x) {
                const double dx = x - 23.7, dy = y - 24.2;
                const double a = dx * std::cos(t) + dy * std::sin(t), b = -dx * std::sin(t) + dy * std::cos(t);
                img.at(x, y) = 0.5 + 0.5 * std::tanh(a / blur) * std::tanh(b / blur);
            }
        }
        frames.push_back(std::move(img));
    }
    return frames;
}

void BM_ConvolveFft(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const ImageF img = random_image(n, n, 1);
    const ImageF k = random_image(129, 129, 2);
    for (auto _ : state) benchmark::DoNotOptimize(convolve(img, k));
}
BENCHMARK(BM_ConvolveFft)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_ConvolverReuse(benchmark::State& state) {
    const ImageF img = random_image(400, 400, 1);
    const Convolver conv(random_image(129, 129, 2), 400, 400, EdgeMode::valid);
    for (auto _ : state) benchmark::DoNotOptimize(conv.apply(img));
}
BENCHMARK(BM_ConvolverReuse)->Unit(benchmark::kMillisecond);

void BM_ConvolveDirect(benchmark::State& state) {
    const ImageF img = random_image(128, 128, 1);
    const ImageF k = random_image(static_cast<int>(state.range(0)), static_cast<int>(state.range(0)), 2);
    for (auto _ : state) benchmark::DoNotOptimize(convolve_direct(img, k));
}
BENCHMARK(BM_ConvolveDirect)->Arg(5)->Arg(15)->Unit(benchmark::kMillisecond);

void BM_Psf(benchmark::State& state) {
    AberrationCoeffs c;
    c.w_coma = 4.0;
    const int grid = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(psf_from_wavefront(c, grid, grid / 2 + 1, 2));
}
BENCHMARK(BM_Psf)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_RefineSymmetry(benchmark::State& state) {
    const auto frames = corner_frames(static_cast<int>(state.range(0)), 2.0);
    RefineConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(refine_symmetry(frames, {24.5, 23.6}, cfg));
}
BENCHMARK(BM_RefineSymmetry)->Arg(1)->Arg(8)->Unit(benchmark::kMicrosecond);

void BM_RefineForstner(benchmark::State& state) {
    const auto frames = corner_frames(8, 2.0);
    RefineConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(refine_forstner(frames, {24.5, 23.6}, cfg));
}
BENCHMARK(BM_RefineForstner)->Unit(benchmark::kMicrosecond);

void BM_RefineSaddle(benchmark::State& state) {
    const auto frames = corner_frames(8, 2.0);
    RefineConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(refine_saddle(frames, {24.5, 23.6}, cfg));
}
BENCHMARK(BM_RefineSaddle)->Unit(benchmark::kMicrosecond);

void BM_RenderPatch(benchmark::State& state) {
    const RigGeometry g;
    const PatternFunction pat(g.pattern_spec(PatternKind::rotating_star));
    const BoardPose pose = g.pose(30.0, 45.0);
    const PsfKernel psf = psf_from_wavefront(AberrationCoeffs{0, 0, 0, 0, 4.0}, g.psf);
    const Point2 c = pose.project(2.0, 3.0);
    const PixelRect roi{static_cast<int>(c.x()) - 16, static_cast<int>(c.y()) - 16, 33, 33};
    const int ss = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(render_capture(pat, 3, pose, psf, g.image_size(), ss, NoiseSpec{}, roi));
}
BENCHMARK(BM_RenderPatch)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_ResponseMap(benchmark::State& state) {
    std::vector<ImageF> frames;
    for (int k = 0; k < 8; ++k) frames.push_back(random_image(640, 480, static_cast<std::uint64_t>(k)));
    for (auto _ : state) benchmark::DoNotOptimize(build_response_map(frames));
}
BENCHMARK(BM_ResponseMap)->Unit(benchmark::kMillisecond);

void BM_PairwiseRange(benchmark::State& state) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<Point2> pts;
    for (int i = 0; i < state.range(0); ++i) pts.emplace_back(n(rng), n(rng));
    for (auto _ : state) benchmark::DoNotOptimize(pairwise_distance_range(pts));
}
BENCHMARK(BM_PairwiseRange)->Arg(50)->Arg(5000);

}  // namespace

BENCHMARK_MAIN();
