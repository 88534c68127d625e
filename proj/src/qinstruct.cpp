#include <llmqo/qinstruct.hpp>

#include <algorithm>
#include <map>
#include <nlohmann/json.hpp>


namespace llmqo {

const std::string_view INSTRUCTION_TEXT =
    "You are a SQL query optimizer. You will be given a multi-table SQL query <SQL> and the statistics of the "
    "tables involved in the query <Statistics>. The statistics include the minimum value, maximum value, and the "
    "count of distinct values for each column of each table in the query, in the format of [min, max, distinct "
    "count]. Your task is to generate the optimal execution plan for the given SQL query. You should represent the "
    "execution plan using a bracket sequence, where HashJoin, NestLoopJoin, or MergeJoin are used to join the "
    "tables in the SQL query. Let's think step by step and show your reasoning before showing the final result.";

namespace {

constexpr std::string_view INPUT_HEADER = "\n\nINPUT:\n<SQL>: ";
constexpr std::string_view STATS_HEADER = "\n<Statistics>:\n";

}

DemoMode demo_mode_from_string(std::string_view s)
{
    if (s == "strict") return DemoMode::Strict;
    if (s == "fallback") return DemoMode::Fallback;
    if (s == "none") return DemoMode::None;
    throw Error("unknown demonstration mode '" + std::string(s) + "' (expected strict, fallback or none)");
}

const char * to_string(DemoMode mode)
{
    switch (mode) {
        case DemoMode::Strict: return "strict";
        case DemoMode::Fallback: return "fallback";
        case DemoMode::None: return "none";
    }
    return "?";
}

std::string build_prompt(const QuerySpec &query, const Catalog &catalog, const std::optional<Demonstration> &demo)
{
    std::string prompt = "INSTRUCTION: ";
    prompt += INSTRUCTION_TEXT;
    if (demo) {
        prompt += "\n<Planning Demonstration>:\n<SQL>: " + demo->sql;
        prompt += "\n<Statistics>:\n" + demo->statistics;
        prompt += "\n<Response>:\n" + demo->response;
    }
    prompt += INPUT_HEADER;
    prompt += render_sql(query);
    prompt += STATS_HEADER;
    const auto tables = sorted_tables(query);
    prompt += serialize_stats(catalog, tables);
    return prompt;
}

std::pair<std::string, std::string> prompt_input(std::string_view prompt)
{
    const auto input = prompt.rfind(INPUT_HEADER);
    if (input == std::string_view::npos)
        throw ParseError("prompt has no INPUT section");
    const auto rest = prompt.substr(input + INPUT_HEADER.size());
    const auto stats = rest.find(STATS_HEADER);
    if (stats == std::string_view::npos)
        throw ParseError("prompt INPUT section has no <Statistics> block");
    return {std::string(rest.substr(0, stats)), std::string(rest.substr(stats + STATS_HEADER.size()))};
}


/*======================================================================================================================
 * Demonstrations
 *====================================================================================================================*/

namespace {

/** |A ∩ B| / |A ∪ B| as an exact fraction; empty ∪ counts as 1/1. */
template<typename T>
std::pair<std::size_t, std::size_t> jaccard(const std::vector<T> &a, const std::vector<T> &b)
{
    std::vector<T> both, either;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(either));
    if (either.empty()) return {1, 1};
    return {both.size(), either.size()};
}

/** a < b for fractions */
bool less(std::pair<std::size_t, std::size_t> a, std::pair<std::size_t, std::size_t> b)
{
    return a.first * b.second < b.first * a.second;
}

Demonstration demo_of(const QInstructRecord &r) { return {r.sql, r.statistics, r.response}; }

}

std::optional<Demonstration> select_demonstration(const QuerySpec &query, std::string_view query_id,
                                                  std::span<const QInstructRecord> pool, DemoMode mode,
                                                  uint64_t seed)
{
    if (mode == DemoMode::None)
        return std::nullopt;

    const auto tmpl = template_of(query);
    const auto sql = render_sql(query);
    std::vector<const QInstructRecord*> others, same;
    for (auto &r : pool) {
        if (r.query_id == query_id or r.sql == sql) continue;
        others.push_back(&r);
        if (r.query_template == tmpl) same.push_back(&r);
    }
    const auto by_id = [](auto *a, auto *b) { return a->query_id < b->query_id; };

    if (not same.empty()) {
        std::sort(same.begin(), same.end(), by_id);
        Rng rng(mix64(seed ^ fnv1a(query_id)));
        return demo_of(*same[rng.below(same.size())]);
    }
    if (mode == DemoMode::Strict)
        throw NoDemonstrationAvailable("no demonstration with the template of query '" + std::string(query_id) + "'");
    if (others.empty())
        return std::nullopt;

    std::sort(others.begin(), others.end(), by_id);
    const QInstructRecord *best = nullptr;
    std::pair<std::size_t, std::size_t> best_tables{0, 1}, best_joins{0, 1};
    for (auto *r : others) {
        const auto jt = jaccard(tmpl.tables, r->query_template.tables);
        const auto jj = jaccard(tmpl.joins, r->query_template.joins);
        if (not best or less(best_tables, jt) or (not less(jt, best_tables) and less(best_joins, jj))) {
            best = r;
            best_tables = jt;
            best_joins = jj;
        }
    }
    return demo_of(*best);
}


/*======================================================================================================================
 * SFT dataset
 *====================================================================================================================*/

const PlanLogRecord & best_plan(std::span<const PlanLogRecord *const> records)
{
    if (records.empty())
        throw Error("no plans to choose from");
    const PlanLogRecord *best = records.front();
    for (auto *r : records)
        if (std::tie(r->time_units, r->bracket) < std::tie(best->time_units, best->bracket)) best = r;
    return *best;
}

std::vector<QInstructRecord> build_sft_dataset(std::span<const WorkloadQuery> workload,
                                               std::span<const PlanLogRecord> plan_log, const Catalog &catalog,
                                               DemoMode mode, uint64_t seed)
{
    std::map<std::string, std::vector<const PlanLogRecord*>> plans;
    for (auto &r : plan_log) plans[r.query_id].push_back(&r);

    std::vector<QInstructRecord> records;
    records.reserve(workload.size());
    for (auto &[id, q] : workload) {
        auto it = plans.find(id);
        if (it == plans.end())
            throw Error("plan log has no plan for query '" + id + "'");
        QInstructRecord r;
        r.query_id = id;
        r.response = render_response(parse_bracket(best_plan(it->second).bracket));
        r.sql = render_sql(q);
        const auto tables = sorted_tables(q);
        r.statistics = serialize_stats(catalog, tables);
        r.query_template = template_of(q);
        records.push_back(std::move(r));
    }
    std::sort(records.begin(), records.end(), [](auto &a, auto &b) { return a.query_id < b.query_id; });

    std::map<std::string, const QuerySpec*> queries;
    for (auto &w : workload) queries.emplace(w.id, &w.query);
    for (auto &r : records) {
        const auto &q = *queries.at(r.query_id);
        std::optional<Demonstration> demo;
        try {
            demo = select_demonstration(q, r.query_id, records, mode, seed);
        } catch (const NoDemonstrationAvailable&) {
        }
        r.prompt = build_prompt(q, catalog, demo);
    }
    return records;
}

std::string format_sft_dataset(std::span<const QInstructRecord> records)
{
    std::vector<const QInstructRecord*> sorted;
    for (auto &r : records) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](auto *a, auto *b) { return a->query_id < b->query_id; });
    std::string out;
    for (auto *r : sorted) {
        nlohmann::ordered_json j;
        j["query_id"] = r->query_id;
        j["prompt"] = r->prompt;
        j["response"] = r->response;
        out += j.dump() + '\n';
    }
    return out;
}

std::vector<QInstructRecord> parse_sft_dataset(std::string_view jsonl)
{
    std::vector<QInstructRecord> records;
    std::size_t line_no = 0;
    for (auto &raw : split(jsonl, '\n')) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty()) continue;
        QInstructRecord r;
        try {
            const auto j = nlohmann::json::parse(line);
            r.query_id = j.at("query_id").get<std::string>();
            r.prompt = j.at("prompt").get<std::string>();
            r.response = j.at("response").get<std::string>();
        } catch (const nlohmann::json::exception &e) {
            throw ParseError(std::string("dataset: ") + e.what(), line_no, 1);
        }
        std::tie(r.sql, r.statistics) = prompt_input(r.prompt);
        r.query_template = template_of(parse_sql(r.sql));
        records.push_back(std::move(r));
    }
    return records;
}

}
