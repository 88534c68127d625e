#include <llmqo/pipeline.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <llmqo/fixture.hpp>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>


namespace fs = std::filesystem;

namespace llmqo {

/*======================================================================================================================
 * Report
 *====================================================================================================================*/

uint64_t percentile(std::vector<uint64_t> values, double p)
{
    if (values.empty())
        throw Error("percentile of an empty list");
    if (not (p > 0.0 and p <= 100.0))
        throw Error("percentile must lie in (0, 100]");
    std::sort(values.begin(), values.end());
    auto rank = std::size_t(std::ceil(p / 100.0 * double(values.size())));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

TimingStats timing_stats(const std::vector<uint64_t> &times)
{
    TimingStats s;
    s.count = times.size();
    if (times.empty()) return s;
    long double sum = 0;
    for (auto t : times) sum += t;
    s.mean = double(sum / times.size());
    s.median = percentile(times, 50);
    s.p75 = percentile(times, 75);
    s.p95 = percentile(times, 95);
    s.p99 = percentile(times, 99);
    return s;
}

std::string format_responses(std::span<const InferredResponse> responses)
{
    std::string out;
    for (auto &r : responses) {
        nlohmann::ordered_json j;
        j["query_id"] = r.query_id;
        j["response"] = r.response;
        out += j.dump() + '\n';
    }
    return out;
}

std::vector<InferredResponse> parse_responses(std::string_view jsonl)
{
    std::vector<InferredResponse> out;
    std::size_t line_no = 0;
    for (auto &raw : split(jsonl, '\n')) {
        ++line_no;
        if (trim(raw).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(trim(raw));
            out.push_back({j.at("query_id").get<std::string>(), j.at("response").get<std::string>()});
        } catch (const nlohmann::json::exception &e) {
            throw ParseError(std::string("responses: ") + e.what(), line_no, 1);
        }
    }
    return out;
}

RunReport build_report(std::span<const WorkloadQuery> test, std::span<const InferredResponse> responses,
                       std::span<const PlanLogRecord> plan_log, const Database &data)
{
    std::map<std::string, std::string> response_of;
    for (auto &r : responses) response_of[r.query_id] = r.response;
    std::map<std::string, std::map<std::string, uint64_t>> logged; // query -> optimizer -> time
    for (auto &r : plan_log) logged[r.query_id][r.optimizer] = r.time_units;

    RunReport report;
    std::map<std::string, std::vector<uint64_t>> times;
    std::vector<ResponseCase> cases;
    for (auto &[id, q] : test) {
        auto opt = logged.find(id);
        if (opt == logged.end())
            throw Error("plan log has no plan for test query '" + id + "'");
        for (auto &[name, t] : opt->second) times[name].push_back(t);

        auto r = response_of.find(id);
        const std::string response = r == response_of.end() ? std::string() : r->second;
        const auto v = validate(response, q);
        ++report.evaluated;
        if (v.valid) {
            ++report.valid;
            times["llm-qo"].push_back(micro_execute(*v.plan, q, data).time);
        } else {
            cases.push_back({response, q});
            auto dp = opt->second.find("dp");
            if (dp == opt->second.end())
                throw Error("plan log has no dp plan for test query '" + id + "'");
            times["llm-qo"].push_back(dp->second);
        }
    }
    report.invalid = classify_corpus(cases);
    for (auto &[name, t] : times) report.sources[name] = timing_stats(t);
    return report;
}

std::string RunReport::to_table() const
{
    std::ostringstream os;
    if (not sizes.empty()) {
        os << "datasets:";
        for (auto &[k, v] : sizes) os << ' ' << k << '=' << v;
        os << '\n';
    }
    os << "validity: " << valid << '/' << evaluated << " (" << std::fixed << std::setprecision(3)
       << validity_rate() << ")\ninvalid: " << invalid.to_string() << "\n\n";
    os << std::left << std::setw(10) << "source" << std::right << std::setw(7) << "n" << std::setw(12) << "mean"
       << std::setw(10) << "median" << std::setw(10) << "75th" << std::setw(10) << "95th" << std::setw(10) << "99th"
       << '\n';
    for (auto &[name, s] : sources)
        os << std::left << std::setw(10) << name << std::right << std::setw(7) << s.count << std::setw(12)
           << std::setprecision(1) << s.mean << std::setw(10) << s.median << std::setw(10) << s.p75 << std::setw(10)
           << s.p95 << std::setw(10) << s.p99 << '\n';
    return os.str();
}

std::string RunReport::to_json() const
{
    nlohmann::ordered_json j;
    j["sizes"] = nlohmann::ordered_json::object();
    for (auto &[k, v] : sizes) j["sizes"][k] = v;
    j["evaluated"] = evaluated;
    j["valid"] = valid;
    j["validity_rate"] = validity_rate();
    j["invalid"] = {{"E1", invalid.e1}, {"E2", invalid.e2}, {"E3", invalid.e3}, {"invalid", invalid.invalid}};
    for (auto &[name, s] : sources)
        j["sources"][name] = {{"count", s.count}, {"mean", s.mean},  {"median", s.median},
                              {"p75", s.p75},     {"p95", s.p95},    {"p99", s.p99}};
    return j.dump(2) + '\n';
}


/*======================================================================================================================
 * Configuration
 *====================================================================================================================*/

void PipelineConfig::validate() const
{
    if (not (split > 0.0 and split < 1.0))
        throw Error("split ratio must lie in (0, 1)");
    if (queries < 2)
        throw Error("the pipeline needs at least two queries");
    if (min_joins == 0 or min_joins > max_joins or max_joins + 1 > DP_MAX_TABLES)
        throw Error("join range must satisfy 1 <= min_joins <= max_joins < " + std::to_string(DP_MAX_TABLES));
    if (buckets == 0)
        throw Error("buckets must be positive");
    if (max_len == 0)
        throw Error("max_len must be positive");
    PreferenceGenConfig{r0}.validate();
    qit.validate();
    qdpo.validate();
}

namespace {

template<typename T>
T parse_number(const std::string &key, const std::string &value)
{
    T out{};
    std::istringstream is(value);
    is >> out;
    if (is.fail() or not is.eof())
        throw Error("config key '" + key + "': '" + value + "' is not a valid number");
    if constexpr (std::is_unsigned_v<T>)
        if (value.find('-') != std::string::npos)
            throw Error("config key '" + key + "' must not be negative");
    return out;
}

}

void PipelineConfig::set(const std::string &key, const std::string &value)
{
    if (key == "catalog") catalog = value;
    else if (key == "joins") joins = value;
    else if (key == "data") data = value;
    else if (key == "work_dir") work_dir = value;
    else if (key == "seed") seed = parse_number<uint64_t>(key, value);
    else if (key == "queries") queries = parse_number<std::size_t>(key, value);
    else if (key == "min_joins") min_joins = parse_number<std::size_t>(key, value);
    else if (key == "max_joins") max_joins = parse_number<std::size_t>(key, value);
    else if (key == "split") split = parse_number<double>(key, value);
    else if (key == "demo_mode") demo_mode = demo_mode_from_string(value);
    else if (key == "r0") r0 = parse_number<double>(key, value);
    else if (key == "buckets") buckets = parse_number<uint32_t>(key, value);
    else if (key == "max_len") max_len = parse_number<std::size_t>(key, value);
    else if (key == "qit_lr") qit.learning_rate = parse_number<double>(key, value);
    else if (key == "qit_steps") qit.steps = parse_number<std::size_t>(key, value);
    else if (key == "qit_batch") qit.batch_size = parse_number<std::size_t>(key, value);
    else if (key == "qdpo_lr") qdpo.learning_rate = parse_number<double>(key, value);
    else if (key == "qdpo_steps") qdpo.steps = parse_number<std::size_t>(key, value);
    else if (key == "qdpo_batch") qdpo.batch_size = parse_number<std::size_t>(key, value);
    else if (key == "beta") qdpo.beta = parse_number<double>(key, value);
    else throw Error("unknown config key '" + key + "'");
}

void PipelineConfig::apply(std::string_view text)
{
    std::size_t line_no = 0;
    for (auto &raw : llmqo::split(text, '\n')) {
        ++line_no;
        std::string_view line = raw;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ParseError("config: expected 'key = value'", line_no, 1);
        const auto key = std::string(trim(line.substr(0, eq)));
        auto value = trim(line.substr(eq + 1));
        if (value.size() >= 2 and value.front() == '"' and value.back() == '"')
            value = value.substr(1, value.size() - 2);
        try {
            set(key, std::string(value));
        } catch (const ParseError&) {
            throw;
        } catch (const Error &e) {
            throw ParseError(std::string("config: ") + e.what(), line_no, 1);
        }
    }
}


/*======================================================================================================================
 * Stage helpers
 *====================================================================================================================*/

std::vector<QuerySpec> pipeline_workload(const Catalog &catalog, std::span<const JoinPredicate> graph,
                                         const PipelineConfig &config)
{
    const auto levels = config.max_joins - config.min_joins + 1;
    std::vector<QuerySpec> all;
    for (std::size_t l = 0; l != levels; ++l) {
        const auto count = config.queries / levels + (l < config.queries % levels ? 1 : 0);
        auto part = gen_workload(catalog, graph, config.min_joins + l, count, mix64(config.seed + l));
        all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return all;
}

std::pair<std::vector<WorkloadQuery>, std::vector<WorkloadQuery>> split_workload(std::span<const WorkloadQuery> all,
                                                                                 double ratio, uint64_t seed)
{
    if (not (ratio > 0.0 and ratio < 1.0))
        throw Error("split ratio must lie in (0, 1)");
    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix64(seed ^ fnv1a("split")));
    rng.shuffle(order);
    const auto n_train = std::size_t(std::llround(ratio * double(all.size())));
    std::vector<bool> is_train(all.size());
    for (std::size_t i = 0; i != n_train; ++i) is_train[order[i]] = true;
    std::pair<std::vector<WorkloadQuery>, std::vector<WorkloadQuery>> out;
    for (std::size_t i = 0; i != all.size(); ++i)
        (is_train[i] ? out.first : out.second).push_back(all[i]);
    return out;
}

std::vector<std::string> test_prompts(std::span<const WorkloadQuery> test, std::span<const QInstructRecord> train,
                                      const Catalog &catalog, DemoMode mode, uint64_t seed)
{
    std::vector<std::string> prompts;
    for (auto &[id, q] : test) {
        std::optional<Demonstration> demo;
        try {
            demo = select_demonstration(q, id, train, mode, seed);
        } catch (const NoDemonstrationAvailable&) {
        }
        prompts.push_back(build_prompt(q, catalog, demo));
    }
    return prompts;
}

TokenModel initial_model(std::span<const QInstructRecord> sft, uint32_t buckets)
{
    std::vector<std::string> responses;
    for (auto &r : sft) responses.push_back(r.response);
    return TokenModel(Vocabulary::build(responses), buckets);
}

std::vector<SftSample> sft_samples(std::span<const QInstructRecord> sft, const Vocabulary &vocab)
{
    std::vector<SftSample> out;
    for (auto &r : sft) out.push_back({tokenize_prompt(r.prompt, vocab), tokenize_response(r.response, vocab)});
    return out;
}

std::vector<DpoSample> dpo_samples(std::span<const PreferenceTriple> triples, const Vocabulary &vocab)
{
    std::vector<DpoSample> out;
    for (auto &t : triples) {
        if (trim(t.chosen).empty() or trim(t.rejected).empty())
            throw Error("preference triple for query '" + t.query_id + "' has an empty response");
        out.push_back({tokenize_prompt(t.prompt, vocab), tokenize_response(t.chosen, vocab),
                       tokenize_response(t.rejected, vocab)});
    }
    return out;
}

std::string format_trace(std::span<const TracePoint> trace)
{
    std::ostringstream os;
    os << "step,loss,margin\n" << std::setprecision(17);
    for (auto &p : trace) os << p.step << ',' << p.loss << ',' << p.margin << '\n';
    return os.str();
}


/*======================================================================================================================
 * Pipeline
 *====================================================================================================================*/

namespace {

std::string hash_dir(const std::string &dir)
{
    if (not fs::is_directory(dir))
        throw Error("data directory '" + dir + "' does not exist");
    std::vector<fs::path> files;
    for (auto &e : fs::directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    Fnv1a h;
    for (auto &f : files) h.bytes(f.filename().string()).bytes(read_file(f.string()));
    return std::to_string(h.digest());
}

class Stages
{
    fs::path dir_;
    std::vector<StageStatus> status_;

    public:
    explicit Stages(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_ / ".stamps"); }

    fs::path path(const std::string &name) const { return dir_ / name; }
    std::string read(const std::string &name) const { return read_file(path(name).string()); }
    void write(const std::string &name, std::string_view contents) const { write_file(path(name).string(), contents); }

    /** Runs `produce` unless the stamp of (name, params, inputs) is current and every output exists. */
    void run(const std::string &name, const std::string &params, const std::vector<std::string> &inputs,
             const std::vector<std::string> &outputs, const std::function<void()> &produce)
    {
        try {
            Fnv1a h;
            h.bytes(name).u64(0).bytes(params).u64(0);
            for (auto &in : inputs) h.bytes(read(in)).u64(0);
            std::ostringstream key;
            key << std::hex << std::setw(16) << std::setfill('0') << h.digest() << '\n';

            const auto stamp = (dir_ / ".stamps" / name).string();
            const bool fresh = fs::exists(stamp) and read_file(stamp) == key.str() and
                               std::all_of(outputs.begin(), outputs.end(),
                                           [&](auto &o) { return fs::exists(path(o)); });
            if (not fresh) {
                fs::remove(stamp);
                produce();
                write_file(stamp, key.str());
            }
            status_.push_back({name, fresh});
        } catch (const std::exception &e) {
            throw Error("stage " + name + ": " + e.what());
        }
    }

    const std::vector<StageStatus> & status() const { return status_; }
};

nlohmann::ordered_json test_record(const WorkloadQuery &w, const std::string &prompt)
{
    nlohmann::ordered_json j;
    j["query_id"] = w.id;
    j["sql"] = render_sql(w.query);
    j["prompt"] = prompt;
    return j;
}

std::string train_params(const TrainConfig &c, uint32_t buckets)
{
    std::ostringstream os;
    os << std::setprecision(17) << c.learning_rate << ' ' << c.steps << ' ' << c.batch_size << ' ' << c.beta << ' '
       << c.seed << ' ' << c.trace_every << ' ' << buckets;
    return os.str();
}

}

PipelineResult run_pipeline(const PipelineConfig &config)
{
    config.validate();

    Catalog catalog;
    std::vector<JoinPredicate> graph;
    Database data;
    std::string catalog_text, joins_text, data_hash;
    try {
        for (auto *p : {&config.catalog, &config.joins})
            if (not fs::is_regular_file(*p))
                throw Error("cannot read '" + *p + "'");
        catalog_text = read_file(config.catalog);
        joins_text = read_file(config.joins);
        catalog = parse_catalog(catalog_text);
        graph = parse_join_graph(joins_text);
        data_hash = hash_dir(config.data);
        data = load_database(config.data);
    } catch (const std::exception &e) {
        throw Error(std::string("stage load: ") + e.what());
    }

    Stages stages(config.work_dir);
    stages.write("catalog.txt", catalog_text);
    stages.write("joins.txt", joins_text);
    std::ostringstream seed_params;
    seed_params << config.seed << ' ' << config.queries << ' ' << config.min_joins << ' ' << config.max_joins;

    stages.run("workload", seed_params.str(), {"catalog.txt", "joins.txt"}, {"workload.sql"}, [&] {
        stages.write("workload.sql", format_workload(pipeline_workload(catalog, graph, config)));
    });
    const auto workload = parse_workload(stages.read("workload.sql"));

    stages.run("plans", std::to_string(config.seed) + ' ' + data_hash, {"catalog.txt", "workload.sql"},
               {"plans.jsonl"}, [&] {
        stages.write("plans.jsonl", format_plan_log(run_optimizers(workload, catalog, data, config.seed)));
    });
    const auto plan_log = parse_plan_log(stages.read("plans.jsonl"));

    auto [train, test] = split_workload(workload, config.split, config.seed);
    std::ostringstream sft_params;
    sft_params << std::setprecision(17) << config.split << ' ' << to_string(config.demo_mode) << ' ' << config.seed;
    stages.run("sft", sft_params.str(), {"catalog.txt", "workload.sql", "plans.jsonl"}, {"sft.jsonl", "test.jsonl"},
               [&] {
        const auto records = build_sft_dataset(train, plan_log, catalog, config.demo_mode, config.seed);
        stages.write("sft.jsonl", format_sft_dataset(records));
        const auto prompts = test_prompts(test, records, catalog, config.demo_mode, config.seed);
        std::string out;
        for (std::size_t i = 0; i != test.size(); ++i) out += test_record(test[i], prompts[i]).dump() + '\n';
        stages.write("test.jsonl", out);
    });
    const auto sft = parse_sft_dataset(stages.read("sft.jsonl"));

    std::ostringstream r0;
    r0 << std::setprecision(17) << config.r0;
    stages.run("dpo", r0.str(), {"sft.jsonl", "plans.jsonl"}, {"dpo.jsonl"}, [&] {
        stages.write("dpo.jsonl", format_dpo_dataset(build_dpo_dataset(sft, plan_log, {config.r0})));
    });
    const auto dpo = parse_dpo_dataset(stages.read("dpo.jsonl"));

    auto qit_config = config.qit;
    qit_config.seed = config.seed;
    stages.run("qit", train_params(qit_config, config.buckets), {"sft.jsonl"}, {"qit.ckpt", "qit_trace.csv"}, [&] {
        const auto init = initial_model(sft, config.buckets);
        const auto samples = sft_samples(sft, init.vocab());
        auto result = train_qit(init, samples, qit_config);
        save_model(result.model, stages.path("qit.ckpt").string());
        stages.write("qit_trace.csv", format_trace(result.trace));
    });

    auto qdpo_config = config.qdpo;
    qdpo_config.seed = config.seed;
    stages.run("qdpo", train_params(qdpo_config, config.buckets), {"qit.ckpt", "dpo.jsonl"},
               {"qdpo.ckpt", "qdpo_trace.csv"}, [&] {
        const auto reference = load_model(stages.path("qit.ckpt").string());
        if (dpo.empty()) { // nothing to prefer: the policy stays at the SFT model
            save_model(reference, stages.path("qdpo.ckpt").string());
            stages.write("qdpo_trace.csv", format_trace({}));
            return;
        }
        auto result = train_qdpo(reference, dpo_samples(dpo, reference.vocab()), qdpo_config);
        save_model(result.model, stages.path("qdpo.ckpt").string());
        stages.write("qdpo_trace.csv", format_trace(result.trace));
    });

    stages.run("infer", std::to_string(config.max_len), {"qdpo.ckpt", "test.jsonl"}, {"responses.jsonl"}, [&] {
        const auto model = load_model(stages.path("qdpo.ckpt").string());
        std::vector<InferredResponse> responses;
        for (auto &line : split(stages.read("test.jsonl"), '\n')) {
            if (trim(line).empty()) continue;
            const auto j = nlohmann::json::parse(line);
            responses.push_back({j.at("query_id").get<std::string>(),
                                 infer(model, j.at("prompt").get<std::string>(), config.max_len)});
        }
        stages.write("responses.jsonl", format_responses(responses));
    });

    stages.run("report", data_hash, {"test.jsonl", "responses.jsonl", "plans.jsonl", "sft.jsonl", "dpo.jsonl"},
               {"report.json", "report.txt"}, [&] {
        auto r = build_report(test, parse_responses(stages.read("responses.jsonl")), plan_log, data);
        r.sizes = {{"queries", workload.size()}, {"train", train.size()}, {"test", test.size()},
                   {"sft", sft.size()}, {"dpo", dpo.size()}};
        stages.write("report.json", r.to_json());
        stages.write("report.txt", r.to_table());
    });

    return {stages.read("report.txt"), stages.read("report.json"), stages.status()};
}

}
