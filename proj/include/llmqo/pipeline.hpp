#pragma once

#include <cstdint>
#include <llmqo/optimizers.hpp>
#include <llmqo/preference.hpp>
#include <llmqo/qinstruct.hpp>
#include <llmqo/training.hpp>
#include <llmqo/validator.hpp>
#include <map>
#include <string>
#include <vector>


namespace llmqo {

/*======================================================================================================================
 * Report
 *====================================================================================================================*/

/** Nearest-rank percentile: the element of rank ceil(p/100 * N) in ascending order.  Throws on an empty list. */
uint64_t percentile(std::vector<uint64_t> values, double p);

struct TimingStats
{
    double mean = 0.0;
    uint64_t median = 0, p75 = 0, p95 = 0, p99 = 0;
    std::size_t count = 0;
};

TimingStats timing_stats(const std::vector<uint64_t> &times);

struct InferredResponse
{
    std::string query_id;
    std::string response;
};

std::string format_responses(std::span<const InferredResponse> responses);
std::vector<InferredResponse> parse_responses(std::string_view jsonl);

struct RunReport
{
    std::map<std::string, std::size_t> sizes;           ///< dataset sizes
    std::size_t evaluated = 0;
    std::size_t valid = 0;
    CorpusSummary invalid;
    std::map<std::string, TimingStats> sources;         ///< "llm-qo" plus one entry per optimizer

    double validity_rate() const { return evaluated ? double(valid) / double(evaluated) : 0.0; }
    std::string to_table() const;
    std::string to_json() const;
};

/** Validates and times the inferred plan of every test query.  An invalid response is charged the time of the DP
 * plan, so every source is measured over the same queries. */
RunReport build_report(std::span<const WorkloadQuery> test, std::span<const InferredResponse> responses,
                       std::span<const PlanLogRecord> plan_log, const Database &data);

/*======================================================================================================================
 * Pipeline
 *====================================================================================================================*/

struct PipelineConfig
{
    std::string catalog = "data/fixture/catalog.txt";
    std::string joins = "data/fixture/joins.txt";
    std::string data = "data/fixture/tables";
    std::string work_dir = "run";

    uint64_t seed = 7;
    std::size_t queries = 60;
    std::size_t min_joins = 1;
    std::size_t max_joins = 4;
    double split = 0.8;
    DemoMode demo_mode = DemoMode::Strict;
    double r0 = 0.95;
    uint32_t buckets = TokenModel::DEFAULT_BUCKETS;
    std::size_t max_len = 256;
    TrainConfig qit = TrainConfig::qit_defaults();
    TrainConfig qdpo = TrainConfig::qdpo_defaults();

    /** Throws `Error` on out-of-range values. */
    void validate() const;

    /** Applies `key = value` lines (`#` comments, optional quotes) on top of the current values. */
    void apply(std::string_view text);
    void set(const std::string &key, const std::string &value);
};

/** Workload of the pipeline: `queries` queries spread evenly over [min_joins, max_joins]. */
std::vector<QuerySpec> pipeline_workload(const Catalog &catalog, std::span<const JoinPredicate> graph,
                                         const PipelineConfig &config);

/** Seeded split; returns (train, test), each in workload order. */
std::pair<std::vector<WorkloadQuery>, std::vector<WorkloadQuery>> split_workload(std::span<const WorkloadQuery> all,
                                                                                 double ratio, uint64_t seed);

/** Prompts for held-out queries, with demonstrations drawn from the training records. */
std::vector<std::string> test_prompts(std::span<const WorkloadQuery> test, std::span<const QInstructRecord> train,
                                      const Catalog &catalog, DemoMode mode, uint64_t seed);

/** Builds the model vocabulary from the SFT responses. */
TokenModel initial_model(std::span<const QInstructRecord> sft, uint32_t buckets);
std::vector<SftSample> sft_samples(std::span<const QInstructRecord> sft, const Vocabulary &vocab);
std::vector<DpoSample> dpo_samples(std::span<const PreferenceTriple> triples, const Vocabulary &vocab);

/** CSV `step,loss,margin`. */
std::string format_trace(std::span<const TracePoint> trace);

struct StageStatus
{
    std::string name;
    bool cached;
};

struct PipelineResult
{
    std::string report_table; ///< contents of `report.txt`
    std::string report_json;  ///< contents of `report.json`
    std::vector<StageStatus> stages;
};

/** Runs every stage; a stage whose inputs hash to its stored stamp and whose outputs exist is skipped.  Errors are
 * rethrown as `Error("stage <name>: <cause>")`. */
PipelineResult run_pipeline(const PipelineConfig &config);

}
