#include <cstdlib>
#include <filesystem>
#include <random>

#include <benchmark/benchmark.h>
#include <spdlog/spdlog.h>

#include "scavenger/coordination.hpp"
#include "scavenger/objective.hpp"
#include "scavenger/simharness.hpp"

using namespace scavenger;

namespace {

BestState record(std::int64_t version) {
    BestState s;
    s.version = version;
    s.config = ConfigVector{std::vector<int>(64, 1)};
    s.performance = static_cast<double>(version) * 1e-6;
    s.updated_by = "bench";
    return s;
}

void BM_PhaseMaskEvaluate(benchmark::State& state) {
    auto n = static_cast<std::size_t>(state.range(0));
    PhaseMaskObjective o(n, 8, 1);
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> level(0, 7);
    ConfigVector c{std::vector<int>(n)};
    for (auto& v : c.levels) v = level(rng);
    for (auto _ : state) benchmark::DoNotOptimize(o.evaluate(c));
}
BENCHMARK(BM_PhaseMaskEvaluate)->Arg(8)->Arg(64)->Arg(512);

void BM_CommitMemory(benchmark::State& state) {
    JobDirectory job(std::make_shared<MemoryStore>("bench"), "bench", std::make_shared<VirtualClock>(0.0));
    write_initial_best(job, record(0), false);
    std::int64_t v = 0;
    for (auto _ : state) {
        commit_update(job, v, record(v + 1));
        ++v;
    }
}
BENCHMARK(BM_CommitMemory);

void BM_CommitFilesystem(benchmark::State& state) {
    auto pattern = (std::filesystem::temp_directory_path() / "scavenger-bench-XXXXXX").string();
    if (::mkdtemp(pattern.data()) == nullptr) {
        state.SkipWithError("mkdtemp failed");
        return;
    }
    std::filesystem::path dir = pattern;
    bool durable = state.range(0) != 0;
    JobDirectory job(std::make_shared<FsStore>(dir, FsStoreOptions{durable, {}}), "bench",
                     std::make_shared<WallClock>());
    write_initial_best(job, record(0), false);
    std::int64_t v = 0;
    for (auto _ : state) {
        commit_update(job, v, record(v + 1));
        ++v;
    }
    std::filesystem::remove_all(dir);
}
BENCHMARK(BM_CommitFilesystem)->Arg(0)->Arg(1);

void BM_SimulateFleet(benchmark::State& state) {
    std::vector<sim::SimWorker> fleet(static_cast<std::size_t>(state.range(0)));
    for (std::size_t i = 0; i < fleet.size(); ++i) fleet[i].id = "w" + std::to_string(i);
    sim::SimConfig c;
    c.stop.max_total_evaluations = 1000;
    for (auto _ : state) benchmark::DoNotOptimize(sim::simulate(fleet, {}, c).makespan);
}
BENCHMARK(BM_SimulateFleet)->Arg(1)->Arg(10);

} // namespace

int main(int argc, char** argv) {
    logger()->set_level(spdlog::level::warn);
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
