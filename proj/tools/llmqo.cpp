#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <llmqo/fixture.hpp>
#include <llmqo/hints.hpp>
#include <llmqo/pipeline.hpp>
#include <nlohmann/json.hpp>


using namespace llmqo;

namespace {

/** Workload text (one SQL per line) or JSON Lines with `query_id` and `sql`. */
std::vector<WorkloadQuery> load_queries(const std::string &path)
{
    const auto text = read_file(path);
    const auto first = trim(text);
    if (first.empty() or first.front() != '{')
        return parse_workload(text);
    std::vector<WorkloadQuery> out;
    std::size_t line_no = 0;
    for (auto &line : split(text, '\n')) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(trim(line));
            out.push_back({j.at("query_id").get<std::string>(), parse_sql(j.at("sql").get<std::string>())});
        } catch (const nlohmann::json::exception &e) {
            throw ParseError(std::string("queries: ") + e.what(), line_no, 1);
        }
    }
    return out;
}

void emit(const std::string &out, std::string_view contents)
{
    if (out.empty() or out == "-")
        std::cout << contents;
    else
        write_file(out, contents);
}

void train_flags(CLI::App *cmd, TrainConfig &config)
{
    cmd->add_option("--lr", config.learning_rate, "learning rate (toy-model scale)");
    cmd->add_option("--steps", config.steps, "training steps T");
    cmd->add_option("--batch", config.batch_size, "batch size");
    cmd->add_option("--seed", config.seed, "shuffling seed");
    cmd->add_option("--trace-every", config.trace_every, "steps between trace points");
}

}

int main(int argc, char **argv)
{
    CLI::App app{"LLM query optimizer toolkit: datasets, two-stage training, validation and hints"};
    app.require_subcommand(1);

    /*----- make-fixture -----*/
    std::string fixture_out;
    uint64_t fixture_seed = 42;
    auto *make_fixture = app.add_subcommand("make-fixture", "write the six-table micro database");
    make_fixture->add_option("--out", fixture_out, "output directory")->required();
    make_fixture->add_option("--seed", fixture_seed, "data seed");

    /*----- gen-workload -----*/
    std::string catalog_path, joins_path, workload_out;
    std::size_t n_joins = 2, count = 10;
    uint64_t seed = 0;
    auto *gen_wl = app.add_subcommand("gen-workload", "generate random SPJ queries over the join graph");
    gen_wl->add_option("--catalog", catalog_path, "catalog file")->required();
    gen_wl->add_option("--joins", joins_path, "join graph file")->required();
    gen_wl->add_option("--n-joins", n_joins, "joins per query");
    gen_wl->add_option("--count", count, "number of queries");
    gen_wl->add_option("--seed", seed, "seed");
    gen_wl->add_option("--out", workload_out, "output file (default stdout)");

    /*----- run-optimizers -----*/
    std::string data_dir, workload_path, out_path;
    auto *run_opt = app.add_subcommand("run-optimizers", "plan and time every query with dp, greedy and random");
    run_opt->add_option("--catalog", catalog_path, "catalog file")->required();
    run_opt->add_option("--data", data_dir, "directory of table CSVs")->required();
    run_opt->add_option("--workload", workload_path, "workload file")->required();
    run_opt->add_option("--seed", seed, "seed of the random optimizer");
    run_opt->add_option("--out", out_path, "plan log (default stdout)");

    /*----- gen-sft -----*/
    std::string plans_path, demo_mode = "strict";
    auto *gen_sft = app.add_subcommand("gen-sft", "build the instruction-tuning dataset");
    gen_sft->add_option("--catalog", catalog_path, "catalog file")->required();
    gen_sft->add_option("--workload", workload_path, "workload file")->required();
    gen_sft->add_option("--plans", plans_path, "plan log")->required();
    gen_sft->add_option("--demo-mode", demo_mode, "strict, fallback or none");
    gen_sft->add_option("--seed", seed, "demonstration seed");
    gen_sft->add_option("--out", out_path, "dataset (default stdout)");

    /*----- gen-dpo / extend-dpo -----*/
    std::string sft_path, dataset_path, new_plans_path;
    double r0 = 0.95;
    auto *gen_dpo = app.add_subcommand("gen-dpo", "build preference triples from logged plan timings");
    gen_dpo->add_option("--sft", sft_path, "SFT dataset")->required();
    gen_dpo->add_option("--plans", plans_path, "plan log")->required();
    gen_dpo->add_option("--r0", r0, "speed-ratio threshold in (0, 1)");
    gen_dpo->add_option("--out", out_path, "dataset (default stdout)");

    auto *extend_dpo = app.add_subcommand("extend-dpo", "add the plans of one more optimizer to a preference set");
    extend_dpo->add_option("--dataset", dataset_path, "existing preference dataset")->required();
    extend_dpo->add_option("--sft", sft_path, "SFT dataset")->required();
    extend_dpo->add_option("--plans", plans_path, "plan log the dataset was built from")->required();
    extend_dpo->add_option("--new-plans,--plans-new", new_plans_path, "plan log of the added optimizer")->required();
    extend_dpo->add_option("--r0", r0, "speed-ratio threshold in (0, 1)");
    extend_dpo->add_option("--out", out_path, "dataset (default stdout)");

    /*----- train-qit / train-qdpo -----*/
    std::string model_path, trace_path;
    uint32_t buckets = TokenModel::DEFAULT_BUCKETS;
    auto qit_config = TrainConfig::qit_defaults();
    auto *train_qit_cmd = app.add_subcommand("train-qit", "supervised fine-tuning on the SFT dataset");
    train_qit_cmd->add_option("--dataset", dataset_path, "SFT dataset")->required();
    train_qit_cmd->add_option("--out", out_path, "checkpoint")->required();
    train_qit_cmd->add_option("--buckets", buckets, "context buckets");
    train_qit_cmd->add_option("--trace", trace_path, "loss trace CSV");
    train_flags(train_qit_cmd, qit_config);

    auto qdpo_config = TrainConfig::qdpo_defaults();
    auto *train_qdpo_cmd = app.add_subcommand("train-qdpo", "preference fine-tuning starting from a QIT checkpoint");
    train_qdpo_cmd->add_option("--model", model_path, "QIT checkpoint (policy init and frozen reference)")->required();
    train_qdpo_cmd->add_option("--dataset", dataset_path, "preference dataset")->required();
    train_qdpo_cmd->add_option("--out", out_path, "checkpoint")->required();
    train_qdpo_cmd->add_option("--beta", qdpo_config.beta, "divergence weight beta");
    train_qdpo_cmd->add_option("--trace", trace_path, "loss/margin trace CSV");
    train_flags(train_qdpo_cmd, qdpo_config);

    /*----- infer -----*/
    std::string sql_path, prompt_path, pool_path;
    std::size_t max_len = 256;
    double temperature = 0.0;
    auto *infer_cmd = app.add_subcommand("infer", "decode a plan for one query");
    infer_cmd->add_option("--model", model_path, "checkpoint")->required();
    auto *sql_opt = infer_cmd->add_option("--sql", sql_path, "file with one SQL query");
    infer_cmd->add_option("--prompt", prompt_path, "file with a complete prompt")->excludes(sql_opt);
    infer_cmd->add_option("--catalog", catalog_path, "catalog file (with --sql)");
    infer_cmd->add_option("--pool", pool_path, "SFT dataset to draw a demonstration from (with --sql)");
    infer_cmd->add_option("--demo-mode", demo_mode, "strict, fallback or none");
    infer_cmd->add_option("--max-len", max_len, "maximum number of tokens")->check(CLI::PositiveNumber);
    infer_cmd->add_option("--temperature", temperature, "sample at this temperature instead of greedy decoding");
    infer_cmd->add_option("--seed", seed, "sampling and demonstration seed");

    /*----- validate / hint / report -----*/
    std::string queries_path, responses_path;
    auto *validate_cmd = app.add_subcommand("validate", "classify responses into E1/E2/E3");
    validate_cmd->add_option("--queries", queries_path, "workload or JSON Lines {query_id, sql}")->required();
    validate_cmd->add_option("--responses", responses_path, "JSON Lines {query_id, response}")->required();

    std::string bracket;
    auto *hint_cmd = app.add_subcommand("hint", "prepend join-order and method hints to a query");
    hint_cmd->add_option("--plan", bracket, "plan in bracket form")->required();
    hint_cmd->add_option("--sql", sql_path, "file with the SQL query")->required();

    std::string json_path;
    auto *report_cmd = app.add_subcommand("report", "timing quantiles of inferred plans vs. the optimizers");
    report_cmd->add_option("--queries", queries_path, "test queries")->required();
    report_cmd->add_option("--responses", responses_path, "inferred responses")->required();
    report_cmd->add_option("--plans", plans_path, "plan log")->required();
    report_cmd->add_option("--data", data_dir, "directory of table CSVs")->required();
    report_cmd->add_option("--json", json_path, "also write the JSON report here");

    /*----- run-pipeline -----*/
    std::string config_path;
    std::vector<std::string> overrides;
    auto *pipeline_cmd = app.add_subcommand("run-pipeline", "all stages end to end, with per-stage caching");
    pipeline_cmd->add_option("--config", config_path, "key = value configuration file");
    pipeline_cmd->add_option("--set", overrides, "key=value overrides (win over the file)");

    /*----- grad-check -----*/
    std::string kind = "sft", reference_path;
    double h = 1e-5, tolerance = 1e-5, init_scale = 0.5, beta = 0.1;
    std::size_t max_params = 200, sample_index = 0;
    auto *grad_cmd = app.add_subcommand("grad-check", "finite-difference check of the analytic gradients");
    grad_cmd->add_option("--kind", kind, "sft or dpo")->check(CLI::IsMember({"sft", "dpo"}));
    grad_cmd->add_option("--dataset", dataset_path, "SFT or preference dataset")->required();
    grad_cmd->add_option("--sample", sample_index, "dataset line to check");
    grad_cmd->add_option("--step", h, "finite-difference step");
    grad_cmd->add_option("--tolerance", tolerance, "maximum relative error");
    grad_cmd->add_option("--params", max_params, "number of sampled parameters");
    grad_cmd->add_option("--beta", beta, "beta (dpo)");
    grad_cmd->add_option("--init-scale", init_scale, "random logits in [-s, s]");
    grad_cmd->add_option("--buckets", buckets, "context buckets");
    grad_cmd->add_option("--seed", seed, "seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*make_fixture) {
            write_fixture(imdb_fixture(fixture_seed), fixture_out);
        } else if (*gen_wl) {
            const auto catalog = load_catalog(catalog_path);
            const auto graph = parse_join_graph(read_file(joins_path));
            emit(workload_out, format_workload(gen_workload(catalog, graph, n_joins, count, seed)));
        } else if (*run_opt) {
            const auto catalog = load_catalog(catalog_path);
            const auto workload = load_queries(workload_path);
            emit(out_path, format_plan_log(run_optimizers(workload, catalog, load_database(data_dir), seed)));
        } else if (*gen_sft) {
            const auto catalog = load_catalog(catalog_path);
            const auto records = build_sft_dataset(load_queries(workload_path), parse_plan_log(read_file(plans_path)),
                                                   catalog, demo_mode_from_string(demo_mode), seed);
            emit(out_path, format_sft_dataset(records));
        } else if (*gen_dpo) {
            const auto sft = parse_sft_dataset(read_file(sft_path));
            emit(out_path, format_dpo_dataset(build_dpo_dataset(sft, parse_plan_log(read_file(plans_path)), {r0})));
        } else if (*extend_dpo) {
            const auto existing = parse_dpo_dataset(read_file(dataset_path));
            const auto sft = parse_sft_dataset(read_file(sft_path));
            emit(out_path, format_dpo_dataset(extend_dpo_dataset(existing, sft, parse_plan_log(read_file(plans_path)),
                                                                 parse_plan_log(read_file(new_plans_path)), {r0})));
        } else if (*train_qit_cmd) {
            const auto sft = parse_sft_dataset(read_file(dataset_path));
            const auto init = initial_model(sft, buckets);
            const auto samples = sft_samples(sft, init.vocab());
            const auto result = train_qit(init, samples, qit_config);
            save_model(result.model, out_path);
            if (not trace_path.empty()) write_file(trace_path, format_trace(result.trace));
            std::cout << "final loss " << result.trace.back().loss << '\n';
        } else if (*train_qdpo_cmd) {
            const auto reference = load_model(model_path);
            const auto triples = parse_dpo_dataset(read_file(dataset_path));
            const auto result = train_qdpo(reference, dpo_samples(triples, reference.vocab()), qdpo_config);
            save_model(result.model, out_path);
            if (not trace_path.empty()) write_file(trace_path, format_trace(result.trace));
            std::cout << "final loss " << result.trace.back().loss << " margin " << result.trace.back().margin << '\n';
        } else if (*infer_cmd) {
            const auto model = load_model(model_path);
            std::string prompt;
            if (not prompt_path.empty()) {
                prompt = read_file(prompt_path);
            } else if (not sql_path.empty()) {
                if (catalog_path.empty())
                    throw CLI::RequiredError("--catalog (needed with --sql)");
                const auto catalog = load_catalog(catalog_path);
                const auto q = parse_sql(read_file(sql_path));
                std::optional<Demonstration> demo;
                if (not pool_path.empty()) {
                    const auto pool = parse_sft_dataset(read_file(pool_path));
                    try {
                        demo = select_demonstration(q, "", pool, demo_mode_from_string(demo_mode), seed);
                    } catch (const NoDemonstrationAvailable&) {
                    }
                }
                prompt = build_prompt(q, catalog, demo);
            } else {
                throw CLI::RequiredError("--sql or --prompt");
            }
            const auto mode = temperature > 0.0 ? DecodeMode::Temperature : DecodeMode::Greedy;
            std::cout << infer(model, prompt, max_len, mode, temperature, seed) << '\n';
        } else if (*validate_cmd) {
            const auto queries = load_queries(queries_path);
            std::map<std::string, const QuerySpec*> by_id;
            for (auto &w : queries) by_id[w.id] = &w.query;
            std::vector<ResponseCase> cases;
            for (auto &r : parse_responses(read_file(responses_path))) {
                auto it = by_id.find(r.query_id);
                if (it == by_id.end())
                    throw Error("response for unknown query '" + r.query_id + "'");
                cases.push_back({r.response, *it->second});
            }
            std::cout << classify_corpus(cases).to_string() << '\n';
        } else if (*hint_cmd) {
            const auto plan = parse_bracket(bracket);
            std::cout << hinted_sql(plan, render_sql(parse_sql(read_file(sql_path)))) << '\n';
        } else if (*report_cmd) {
            const auto report = build_report(load_queries(queries_path), parse_responses(read_file(responses_path)),
                                             parse_plan_log(read_file(plans_path)), load_database(data_dir));
            std::cout << report.to_table();
            if (not json_path.empty()) write_file(json_path, report.to_json());
        } else if (*pipeline_cmd) {
            PipelineConfig config;
            if (not config_path.empty()) config.apply(read_file(config_path));
            for (auto &o : overrides) {
                const auto eq = o.find('=');
                if (eq == std::string::npos)
                    throw CLI::ValidationError("--set", "expected key=value, got '" + o + "'");
                config.set(std::string(trim(o.substr(0, eq))), std::string(trim(o.substr(eq + 1))));
            }
            const auto result = run_pipeline(config);
            for (auto &s : result.stages)
                std::cerr << "stage " << s.name << ": " << (s.cached ? "cached" : "ran") << '\n';
            std::cout << result.report_table;
        } else if (*grad_cmd) {
            const auto text = read_file(dataset_path);
            GradCheckReport report;
            if (kind == "sft") {
                const auto sft = parse_sft_dataset(text);
                if (sample_index >= sft.size()) throw Error("--sample is out of range");
                auto model = initial_model(sft, buckets);
                model.randomize(seed, init_scale);
                const auto samples = sft_samples(std::span(sft).subspan(sample_index, 1), model.vocab());
                report = grad_check(LossKind::Sft, model, nullptr, &samples[0], nullptr, beta, h, tolerance,
                                    max_params, seed);
            } else {
                const auto triples = parse_dpo_dataset(text);
                if (sample_index >= triples.size()) throw Error("--sample is out of range");
                std::vector<std::string> responses;
                for (auto &t : triples) responses.insert(responses.end(), {t.chosen, t.rejected});
                TokenModel reference(Vocabulary::build(responses), buckets);
                reference.randomize(seed, init_scale);
                auto policy = reference;
                policy.randomize(mix64(seed), init_scale);
                const auto samples = dpo_samples(std::span(triples).subspan(sample_index, 1), policy.vocab());
                report = grad_check(LossKind::Dpo, policy, &reference, nullptr, &samples[0], beta, h, tolerance,
                                    max_params, seed);
            }
            std::cout << "checked " << report.checked << " max_rel_error " << report.max_rel_error
                      << " max_abs_error " << report.max_abs_error << ' ' << (report.passed ? "PASS" : "FAIL") << '\n';
            return report.passed ? 0 : 1;
        }
    } catch (const CLI::Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
