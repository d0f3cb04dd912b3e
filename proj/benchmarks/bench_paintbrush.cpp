#include <benchmark/benchmark.h>

#include "paintbrush/evolve.hpp"
#include "paintbrush/herald.hpp"
#include "paintbrush/phasespace.hpp"
#include "paintbrush/pulses.hpp"

using namespace paintbrush;

static void BM_CatSpinHeralded(benchmark::State& state) {
    const SpinModel s{static_cast<int>(state.range(0)), 1.0};
    const CavityModel c{1.0, 0.0, 3};
    const auto d = cat_pulse(kTwoPi / 3, 0.0, 1.0, 1.0, 1e-3);
    const Vec x = default_initial_state(s);
    for (auto _ : state) benchmark::DoNotOptimize(heralded_state(x, s, c, d, kTwoPi / 3 + 1.0).psi1);
}
BENCHMARK(BM_CatSpinHeralded)->Arg(8)->Arg(30)->Arg(100)->Unit(benchmark::kMillisecond);

static void BM_DickeWeakQuadrature(benchmark::State& state) {
    const SpinModel s{8, 1.0};
    const CavityModel c{1.0, 0.0, 3};
    const Vec x = default_initial_state(s);
    CoeffTarget t;
    t.coeffs.assign(9, 0.0);
    t.coeffs[6] = 1.0;
    const auto d = synthesize_from_coeffs(t, x, s, 1.0, 1e-3);
    for (auto _ : state) benchmark::DoNotOptimize(weak_drive_heralded_state(x, s, c, d, d.t_end, 1e-12));
}
BENCHMARK(BM_DickeWeakQuadrature)->Unit(benchmark::kMillisecond);

static void BM_SpinTransmissionRates(benchmark::State& state) {
    const SpinModel s{static_cast<int>(state.range(0)), 1.0};
    const CavityModel c{1.0, 0.0, 6};
    const Vec x = default_initial_state(s);
    const auto d = cat_pulse(kTwoPi / 3, 0.0, 1.0, 1.0, 0.3);
    const std::vector<double> times{1.0, 2.5, 4.0, 6.0};
    for (auto _ : state) benchmark::DoNotOptimize(transmission_rates(x, s, c, d, times));
}
BENCHMARK(BM_SpinTransmissionRates)->Arg(8)->Arg(30)->Unit(benchmark::kMillisecond);

static void BM_MechHeralded(benchmark::State& state) {
    const MechModel m{0.125, 1.0, static_cast<int>(state.range(0))};
    const CavityModel c{1.0, 0.0, 2};
    const auto d = cat_pulse(0.375, 0.0, 0.125, 1.0, 1e-3);
    const Vec v = default_initial_state(m);
    for (auto _ : state) benchmark::DoNotOptimize(heralded_state(v, m, c, d, 4.0).psi1);
}
BENCHMARK(BM_MechHeralded)->Arg(40)->Arg(120)->Unit(benchmark::kMillisecond);

static void BM_WignerGrid(benchmark::State& state) {
    const MechModel m{1.0, 1.0, static_cast<int>(state.range(0))};
    const Vec psi = normalized(coherent_state(m, cplx(1.5, 0.5)) + coherent_state(m, cplx(-1.5, -0.5)));
    WignerOptions o;
    o.half_width = 5.0;
    o.spacing = 0.05;
    for (auto _ : state) benchmark::DoNotOptimize(wigner(psi, o).values);
}
BENCHMARK(BM_WignerGrid)->Arg(40)->Arg(120)->Unit(benchmark::kMillisecond);

static void BM_HusimiSphere(benchmark::State& state) {
    const SpinModel s{static_cast<int>(state.range(0)), 1.0};
    const Vec cat = target_cat(s, kTwoPi / 3, 0.0, kTwoPi / 3);
    for (auto _ : state) benchmark::DoNotOptimize(husimi_sphere(s, cat, 64, 128).values);
}
BENCHMARK(BM_HusimiSphere)->Arg(30)->Arg(100)->Unit(benchmark::kMillisecond);

static void BM_SweepCell(benchmark::State& state) {
    Scenario sc;
    sc.preset = "cat-spin";
    sc.system = SpinModel{30, 1.0};
    sc.cavity = CavityModel{1.0, 0.0, 10};
    SweepCell cell;
    cell.eps_over_omega = 0.1;
    for (auto _ : state) benchmark::DoNotOptimize(evaluate_cell(sc, cell));
}
BENCHMARK(BM_SweepCell)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
