#include <doctest.h>

#include "../support/oracles.hpp"
#include <filesystem>
#include <llmqo/pipeline.hpp>
#include <nlohmann/json.hpp>


using namespace llmqo;
namespace fs = std::filesystem;


namespace {

PipelineConfig small_config(const std::string &name)
{
    PipelineConfig c;
    c.work_dir = (fs::temp_directory_path() / ("llmqo_unit_" + name)).string();
    fs::remove_all(c.work_dir);
    c.queries = 20;
    c.max_joins = 3;
    c.buckets = 256;
    c.qit.steps = 20;
    c.qdpo.steps = 10;
    return c;
}

}


TEST_CASE("percentile")
{
    CHECK(percentile({15, 20, 35, 40, 50}, 30) == 20);
    CHECK(percentile({15, 20, 35, 40, 50}, 40) == 20);
    CHECK(percentile({15, 20, 35, 40, 50}, 50) == 35);
    CHECK(percentile({15, 20, 35, 40, 50}, 100) == 50);
    CHECK(percentile({7}, 99) == 7);
    CHECK_THROWS_AS(percentile({}, 50), Error);
    Rng rng(2);
    for (int i = 0; i != 100; ++i) {
        std::vector<uint64_t> v(1 + rng.below(40));
        for (auto &x : v) x = rng.below(1000);
        for (double p : {50.0, 75.0, 95.0, 99.0}) CHECK(percentile(v, p) == oracle::nearest_rank(v, p));
    }
    const auto s = timing_stats({4, 1, 3, 2});
    CHECK(s.mean == 2.5);
    CHECK(s.median == 2);
    CHECK(s.p75 == 3);
    CHECK(s.p99 == 4);
    CHECK(s.count == 4);
}

TEST_CASE("PipelineConfig")
{
    PipelineConfig c;
    c.apply("# comment\nseed = 11\nwork_dir = \"out dir\"\ndemo_mode = fallback\nqit_steps = 3\n\nbeta=0.5\n");
    CHECK(c.seed == 11);
    CHECK(c.work_dir == "out dir");
    CHECK(c.demo_mode == DemoMode::Fallback);
    CHECK(c.qit.steps == 3);
    CHECK(c.qdpo.beta == 0.5);
    CHECK_THROWS_AS(c.set("nope", "1"), Error);
    CHECK_THROWS_AS(c.set("seed", "abc"), Error);
    auto bad = c;
    bad.apply("split = 1.5");
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = c;
    bad.apply("r0 = 1");
    CHECK_THROWS_AS(bad.validate(), Error);
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("split_workload")
{
    std::vector<WorkloadQuery> all;
    for (std::size_t i = 0; i != 50; ++i) all.push_back({query_id(i), parse_sql("SELECT * FROM t;")});
    const auto [train, test] = split_workload(all, 0.8, 7);
    CHECK(train.size() == 40);
    CHECK(test.size() == 10);
    CHECK(std::is_sorted(train.begin(), train.end(), [](auto &a, auto &b) { return a.id < b.id; }));
    CHECK(split_workload(all, 0.8, 7).second.front().id == test.front().id);
}

TEST_CASE("run_pipeline")
{
    const auto cfg = small_config("pipeline");
    const auto first = run_pipeline(cfg);
    for (auto &s : first.stages) CHECK_FALSE(s.cached);
    CHECK(first.stages.size() == 8);
    const auto report = nlohmann::json::parse(first.report_json);
    CHECK(report["evaluated"] == 4);
    for (auto key : {"mean", "median", "p75", "p95", "p99"}) CHECK(report["sources"]["dp"].contains(key));
    CHECK(first.report_table.find("99th") != std::string::npos);

    const auto second = run_pipeline(cfg);
    for (auto &s : second.stages) CHECK(s.cached);
    CHECK(second.report_json == first.report_json);

    SUBCASE("a changed setting reruns its stage and everything after it") {
        auto changed = cfg;
        changed.qdpo.steps = 11;
        const auto third = run_pipeline(changed);
        for (auto &s : third.stages) {
            const bool downstream = s.name == "qdpo" or s.name == "infer" or s.name == "report";
            CHECK_MESSAGE(s.cached != downstream, s.name);
        }
    }
    SUBCASE("a different work dir gives identical files") {
        const auto other = small_config("pipeline_copy");
        const auto r = run_pipeline(other);
        CHECK(r.report_json == first.report_json);
        for (auto name : {"workload.sql", "plans.jsonl", "sft.jsonl", "dpo.jsonl", "qit.ckpt", "qdpo.ckpt",
                          "responses.jsonl"})
            CHECK_MESSAGE(read_file(cfg.work_dir + "/" + name) == read_file(other.work_dir + "/" + name), name);
        fs::remove_all(other.work_dir);
    }
    fs::remove_all(cfg.work_dir);
}

TEST_CASE("run_pipeline/missing catalog")
{
    auto cfg = small_config("missing");
    cfg.catalog = "/nonexistent/catalog.txt";
    try {
        run_pipeline(cfg);
        FAIL("expected an error");
    } catch (const Error &e) {
        CHECK(std::string(e.what()).starts_with("stage load:"));
        CHECK(std::string(e.what()).find("/nonexistent/catalog.txt") != std::string::npos);
    }
    fs::remove_all(cfg.work_dir);
}
