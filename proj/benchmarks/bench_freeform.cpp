#include <benchmark/benchmark.h>

#include <cmath>
#include <filesystem>
#include <memory>
#include <random>

#include "freeform/farfield.hpp"
#include "freeform/field.hpp"
#include "freeform/geometry.hpp"
#include "freeform/imaging.hpp"
#include "freeform/io.hpp"
#include "freeform/tracer.hpp"

using namespace freeform;

namespace {

const Domain kDisk = Domain::disk({0, 0}, 0.7);
const Media kGlass{1.0, 1.52, 1.0};
constexpr double kC = -1.04;

// Magnify-by-2 lens; built once and shared by the trace benchmarks.
const ImagingLens& lens() {
  static const ImagingLens L = solve_same_index(ImagingMap::magnification(1.0, 6.0), kC, kGlass,
                                                {0, 0}, 1.0, Grid(kDisk, 33));
  return L;
}

TraceTarget target() {
  TraceTarget t;
  t.plane = 6.0;
  t.direction = kE3;
  t.landing = [](const Vec2& x) { return 2.0 * x; };
  return t;
}

void BM_Refract(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  const Vec3 nu = normalized(Vec3{0.1, -0.2, 1.0});
  Vec3 x = normalized(Vec3{n(rng) * 0.2, n(rng) * 0.2, 1.0});
  for (auto _ : state) benchmark::DoNotOptimize(refract(x, nu, 1.52));
}
BENCHMARK(BM_Refract);

void BM_Reflect(benchmark::State& state) {
  const Vec3 x = normalized(Vec3{0.3, 0.1, 1.0});
  const Vec3 nu = normalized(Vec3{-0.1, 0.2, 1.0});
  for (auto _ : state) benchmark::DoNotOptimize(reflect(x, nu));
}
BENCHMARK(BM_Reflect);

void BM_CurlCheck(benchmark::State& state) {
  const Grid g(kDisk, static_cast<std::size_t>(state.range(0)));
  const IncidentField f = point_source_field({0, 0, -1}, kDisk);
  for (auto _ : state) benchmark::DoNotOptimize(curl_check(f, g).max_residual);
}
BENCHMARK(BM_CurlCheck)->Arg(33)->Arg(65)->Arg(129)->Unit(benchmark::kMillisecond);

void BM_SolveSameIndex(benchmark::State& state) {
  const Grid g(kDisk, static_cast<std::size_t>(state.range(0)));
  const ImagingMap T = ImagingMap::magnification(1.0, 6.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_same_index(T, kC, kGlass, {0, 0}, 1.0, g).path_residual);
  }
}
BENCHMARK(BM_SolveSameIndex)->Arg(17)->Arg(33)->Unit(benchmark::kMillisecond);

void BM_SolveQuasilinear(benchmark::State& state) {
  const Domain unit = Domain::disk({0, 0}, 1.0);
  const Grid g(unit, static_cast<std::size_t>(state.range(0)));
  const ImagingMap T = ImagingMap::magnification(0.25, 10.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        solve_quasilinear(T, -1.0, Media{1.5, 1.7, 1.33}, {0, 0}, 2.0, g).accepted);
  }
}
BENCHMARK(BM_SolveQuasilinear)->Arg(17)->Arg(33)->Unit(benchmark::kMillisecond);

void BM_TraceRay(benchmark::State& state) {
  const auto mode = state.range(0) == 0 ? SheetMode::Exact : SheetMode::Mesh;
  const auto elements = lens_elements(lens().lens, mode);
  const TraceTarget t = target();
  const auto sources = sample_points(kDisk, 256, 3);
  std::size_t k = 0;
  for (auto _ : state) {
    const Vec2 x = sources[k++ % sources.size()];
    benchmark::DoNotOptimize(trace(Ray{Vec3(x, 0.0), kE3}, elements, t, x).position_error);
  }
  state.SetLabel(mode == SheetMode::Exact ? "exact" : "mesh");
}
BENCHMARK(BM_TraceRay)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_ExportObj(benchmark::State& state) {
  const ParametricSheet mesh =
      resample(lens().lens.sigma2, static_cast<std::size_t>(state.range(0)), 3);
  const auto path = std::filesystem::temp_directory_path() / "freeform_bench.obj";
  for (auto _ : state) export_obj(mesh, path);
  std::filesystem::remove(path);
}
BENCHMARK(BM_ExportObj)->Arg(129)->Arg(257)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
