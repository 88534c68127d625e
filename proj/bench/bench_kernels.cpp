/* Serial vs. OpenMP timings of the parallel kernels: planning a workload with the three optimizers, and the batched
 * SFT / DPO loss gradients.  Inputs are built once from the in-memory fixture. */

#include <benchmark/benchmark.h>
#include <llmqo/fixture.hpp>
#include <llmqo/pipeline.hpp>
#include <llmqo/preference.hpp>
#include <llmqo/qinstruct.hpp>


using namespace llmqo;

namespace {

/*======================================================================================================================
 * Inputs
 *====================================================================================================================*/

struct Inputs
{
    Fixture fixture = imdb_fixture();
    Database data = fixture.database();
    std::vector<WorkloadQuery> workload;
    std::vector<PlanLogRecord> plans;
    std::vector<QInstructRecord> sft;
    std::vector<PreferenceTriple> triples;
    TokenModel model;
    std::vector<SftSample> sft_batch;
    std::vector<DpoSample> dpo_batch;

    Inputs() : model(Vocabulary{})
    {
        PipelineConfig config;
        config.queries = 64;
        const auto queries = pipeline_workload(fixture.catalog, fixture.join_graph, config);
        for (std::size_t i = 0; i != queries.size(); ++i) workload.push_back({query_id(i), queries[i]});

        plans = run_optimizers(workload, fixture.catalog, data, config.seed, Exec::Serial);
        sft = build_sft_dataset(workload, plans, fixture.catalog, DemoMode::Strict, config.seed);
        triples = build_dpo_dataset(sft, plans, {});
        model = initial_model(sft, TokenModel::DEFAULT_BUCKETS);
        sft_batch = sft_samples(sft, model.vocab());
        dpo_batch = dpo_samples(triples, model.vocab());
    }
};

const Inputs &inputs()
{
    static const Inputs in;
    return in;
}

Exec exec_of(const benchmark::State &state) { return state.range(0) ? Exec::Parallel : Exec::Serial; }

/*======================================================================================================================
 * Kernels
 *====================================================================================================================*/

void bm_run_optimizers(benchmark::State &state)
{
    const auto &in = inputs();
    for (auto _ : state)
        benchmark::DoNotOptimize(run_optimizers(in.workload, in.fixture.catalog, in.data, 7, exec_of(state)));
    state.SetItemsProcessed(int64_t(state.iterations() * in.workload.size()));
}

void bm_sft_loss_grad(benchmark::State &state)
{
    const auto &in = inputs();
    for (auto _ : state) benchmark::DoNotOptimize(sft_loss_grad(in.model, in.sft_batch, exec_of(state)));
    state.SetItemsProcessed(int64_t(state.iterations() * in.sft_batch.size()));
}

void bm_dpo_loss_grad(benchmark::State &state)
{
    const auto &in = inputs();
    for (auto _ : state) benchmark::DoNotOptimize(dpo_loss_grad(in.model, in.model, in.dpo_batch, 0.1, exec_of(state)));
    state.SetItemsProcessed(int64_t(state.iterations() * in.dpo_batch.size()));
}

}

BENCHMARK(bm_run_optimizers)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_sft_loss_grad)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_dpo_loss_grad)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
