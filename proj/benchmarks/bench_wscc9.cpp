#include <benchmark/benchmark.h>

#include <string>

#include "slackdyn/case_file.hpp"
#include "slackdyn/dynsim.hpp"
#include "slackdyn/powerflow.hpp"

using namespace slackdyn;

namespace {

const CaseDefinition& wscc9()
{
    static const CaseDefinition def = parse_case(std::string(SLACKDYN_CASES) + "/wscc9_machines.json");
    return def;
}

void BM_PowerFlow(benchmark::State& state)
{
    const auto prob = static_problem(wscc9().model);
    for (auto _ : state) {
        auto sol = solve_powerflow(prob.network, prob.injections, prob.slack);
        benchmark::DoNotOptimize(sol);
    }
}
BENCHMARK(BM_PowerFlow);

void BM_Admittance(benchmark::State& state)
{
    const auto& net = wscc9().model.network;
    for (auto _ : state) {
        auto y = build_admittance(net);
        benchmark::DoNotOptimize(y);
    }
}
BENCHMARK(BM_Admittance);

void BM_Step(benchmark::State& state)
{
    Simulator sim(wscc9().model);
    auto s0 = sim.initialize();
    sim.apply_event(Event::scale_load(0.0, 5, 0.8), s0);
    for (auto _ : state) {
        auto s = sim.step(s0, 0.01);
        benchmark::DoNotOptimize(s);
    }
}
BENCHMARK(BM_Step);

void BM_LoadLoss20s(benchmark::State& state, const char* file)
{
    const auto def = parse_case(std::string(SLACKDYN_CASES) + "/" + file);
    const auto& sc = def.scenario("load_loss");
    for (auto _ : state) {
        auto res = run(def.model, sc);
        benchmark::DoNotOptimize(res);
    }
}
BENCHMARK_CAPTURE(BM_LoadLoss20s, machines, "wscc9_machines.json")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_LoadLoss20s, gfm_vsm, "wscc9_gfm_vsm.json")->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
