#include <benchmark/benchmark.h>

#include "shlight/sh.hpp"

namespace {

shlight::RadianceMap bench_panorama(int height) {
    shlight::SHCoeffs c(2, shlight::SHDomain::radiance);
    for (int ch = 0; ch < 3; ++ch) {
        c.at(ch, 0) = 2.0;
        c.at(ch, 3) = 0.4;
        c.at(ch, 6) = -0.2;
    }
    return shlight::reconstruct_envmap(c, 2 * height, height);
}

void BM_ProjectPanorama(benchmark::State& state) {
    shlight::RadianceMap map = bench_panorama(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        auto sh = shlight::project_panorama(map, 2);
        benchmark::DoNotOptimize(sh);
    }
    state.SetItemsProcessed(state.iterations() * map.width * map.height);
}
BENCHMARK(BM_ProjectPanorama)->Arg(128)->Arg(256)->Arg(512);

void BM_ReconstructEnvmap(benchmark::State& state) {
    shlight::SHCoeffs c(2, shlight::SHDomain::radiance);
    c.at(0, 0) = 1.0;
    const int h = static_cast<int>(state.range(0));
    for (auto _ : state) {
        auto map = shlight::reconstruct_envmap(c, 2 * h, h);
        benchmark::DoNotOptimize(map);
    }
}
BENCHMARK(BM_ReconstructEnvmap)->Arg(64)->Arg(128);

void BM_ShBasisEval(benchmark::State& state) {
    shlight::Direction d = shlight::Direction::normalized(0.3, 0.8, -0.52);
    double out[25];
    for (auto _ : state) {
        shlight::sh_basis_eval_into(d, static_cast<int>(state.range(0)), out);
        benchmark::DoNotOptimize(out);
    }
}
BENCHMARK(BM_ShBasisEval)->Arg(2)->Arg(4);

}  // namespace
