#include <llmqo/optimizers.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <optional>


namespace llmqo {

/*======================================================================================================================
 * CostModel
 *====================================================================================================================*/

namespace {

const ColumnStats & column_stats(const Catalog &catalog, const std::string &table, const std::string &column)
{
    const auto *entry = catalog.at(table).find(column);
    if (not entry)
        throw Error("catalog has no column '" + table + "." + column + "'");
    return entry->stats;
}

}

double CostModel::selectivity(const Selection &s) const
{
    const auto &st = column_stats(*catalog_, s.table, s.column);
    if (st.distinct_count == 0)
        return 0.0;
    const double domain = double(st.max_value) - double(st.min_value) + 1.0;
    const double v = double(s.literal);
    double sel = 0.0;
    switch (s.op) {
        case CmpOp::Lt: sel = (v - double(st.min_value)) / domain; break;
        case CmpOp::Le: sel = (v - double(st.min_value) + 1.0) / domain; break;
        case CmpOp::Gt: sel = (double(st.max_value) - v) / domain; break;
        case CmpOp::Ge: sel = (double(st.max_value) - v + 1.0) / domain; break;
        case CmpOp::Eq:
            sel = s.literal >= st.min_value and s.literal <= st.max_value ? 1.0 / double(st.distinct_count) : 0.0;
            break;
    }
    return std::clamp(sel, 0.0, 1.0);
}

double CostModel::join_selectivity(const JoinPredicate &j) const
{
    const auto da = column_stats(*catalog_, j.left_table, j.left_column).distinct_count;
    const auto db = column_stats(*catalog_, j.right_table, j.right_column).distinct_count;
    return 1.0 / double(std::max<uint64_t>({da, db, 1}));
}

double CostModel::scan_cardinality(const QuerySpec &q, const std::string &table) const
{
    double card = double(catalog_->at(table).row_estimate());
    for (auto &s : q.selections)
        if (s.table == table) card *= selectivity(s);
    return card;
}

double CostModel::cardinality(const QuerySpec &q, std::vector<std::string> tables) const
{
    std::sort(tables.begin(), tables.end());
    const auto in = [&](const std::string &t) { return std::binary_search(tables.begin(), tables.end(), t); };
    double card = 1.0;
    for (auto &t : tables)
        card *= scan_cardinality(q, t);
    for (auto &j : q.joins)
        if (in(j.left_table) and in(j.right_table)) card *= join_selectivity(j);
    return card;
}

double plan_cost(const Plan &plan, const QuerySpec &q, const CostModel &model)
{
    if (plan.is_scan())
        return 0.0;
    return plan_cost(plan.left(), q, model) + plan_cost(plan.right(), q, model) +
           model.cardinality(q, plan.tables());
}


/*======================================================================================================================
 * Optimizers
 *====================================================================================================================*/

namespace {

JoinOp dp_operator(double left_card, double right_card)
{
    return left_card < CostModel::NEST_LOOP_THRESHOLD and right_card < CostModel::NEST_LOOP_THRESHOLD
        ? JoinOp::NestLoopJoin : JoinOp::HashJoin;
}

}

Plan dp_optimize(const QuerySpec &q, const CostModel &model)
{
    const auto tables = sorted_tables(q);
    const std::size_t n = tables.size();
    if (n > DP_MAX_TABLES)
        throw TooManyTables("dp_optimize supports at most " + std::to_string(DP_MAX_TABLES) + " tables, got " +
                            std::to_string(n));

    const auto index_of = [&](const std::string &t) {
        return std::size_t(std::lower_bound(tables.begin(), tables.end(), t) - tables.begin());
    };
    std::vector<uint32_t> adjacent(n, 0);
    for (auto &j : q.joins) {
        const auto a = index_of(j.left_table), b = index_of(j.right_table);
        adjacent[a] |= 1u << b;
        adjacent[b] |= 1u << a;
    }
    const auto neighbours = [&](uint32_t set) {
        uint32_t result = 0;
        for (uint32_t s = set; s; s &= s - 1)
            result |= adjacent[std::countr_zero(s)];
        return result & ~set;
    };
    const auto tables_of = [&](uint32_t set) {
        std::vector<std::string> ts;
        for (uint32_t s = set; s; s &= s - 1)
            ts.push_back(tables[std::countr_zero(s)]);
        return ts;
    };

    struct Entry
    {
        double cost;
        double card;
        std::string bracket;
        std::optional<Plan> plan;
    };
    const uint32_t full = (1u << n) - 1;
    std::vector<std::optional<Entry>> best(std::size_t(full) + 1);
    for (std::size_t i = 0; i != n; ++i) {
        auto plan = Plan::scan(tables[i]);
        best[1u << i] = Entry{0.0, model.scan_cardinality(q, tables[i]), tables[i], std::move(plan)};
    }

    for (uint32_t set = 1; set <= full; ++set) {
        if (std::popcount(set) < 2) continue;
        std::optional<Entry> winner;
        double card = -1.0;
        for (uint32_t left = (set - 1) & set; left; left = (left - 1) & set) {
            const uint32_t right = set ^ left;
            const auto &l = best[left], &r = best[right];
            if (not l or not r or not (neighbours(left) & right)) continue;
            if (card < 0.0) card = model.cardinality(q, tables_of(set));
            const double cost = l->cost + r->cost + card;
            const JoinOp op = dp_operator(l->card, r->card);
            std::string bracket = std::string(to_string(op)) + '(' + l->bracket + ' ' + r->bracket + ')';
            if (winner and (cost > winner->cost or (cost == winner->cost and bracket >= winner->bracket)))
                continue;
            winner = Entry{cost, card, std::move(bracket), std::nullopt};
            winner->plan = Plan::join(op, *l->plan, *r->plan);
        }
        best[set] = std::move(winner);
    }
    if (not best[full])
        throw SemanticError("join graph is disconnected");
    return *best[full]->plan;
}

Plan greedy_optimize(const QuerySpec &q, const CostModel &model)
{
    std::vector<Plan> parts;
    for (auto &t : sorted_tables(q))
        parts.push_back(Plan::scan(t));

    while (parts.size() > 1) {
        std::optional<std::pair<double, std::string>> best_key;
        std::size_t best_i = 0, best_j = 0;
        bool swap = false;
        for (std::size_t i = 0; i != parts.size(); ++i) {
            for (std::size_t j = i + 1; j != parts.size(); ++j) {
                if (q.joins_between(parts[i].tables(), parts[j].tables()).empty()) continue;
                auto all = parts[i].tables();
                all.insert(all.end(), parts[j].tables().begin(), parts[j].tables().end());
                const double out = model.cardinality(q, std::move(all));
                auto bi = to_bracket(parts[i]), bj = to_bracket(parts[j]);
                const bool flip = bj < bi;
                if (flip) std::swap(bi, bj);
                std::pair<double, std::string> key{out, "MergeJoin(" + bi + ' ' + bj + ')'};
                if (not best_key or key < *best_key) {
                    best_key = std::move(key);
                    best_i = i;
                    best_j = j;
                    swap = flip;
                }
            }
        }
        if (not best_key)
            throw SemanticError("join graph is disconnected");
        Plan merged = swap ? Plan::join(JoinOp::MergeJoin, parts[best_j], parts[best_i])
                           : Plan::join(JoinOp::MergeJoin, parts[best_i], parts[best_j]);
        parts[best_i] = std::move(merged);
        parts.erase(parts.begin() + std::ptrdiff_t(best_j));
    }
    return parts.front();
}

Plan random_optimize(const QuerySpec &q, uint64_t seed)
{
    Rng rng(seed);
    std::vector<Plan> parts;
    for (auto &t : sorted_tables(q))
        parts.push_back(Plan::scan(t));

    while (parts.size() > 1) {
        std::vector<std::pair<std::size_t, std::size_t>> candidates;
        for (std::size_t i = 0; i != parts.size(); ++i)
            for (std::size_t j = i + 1; j != parts.size(); ++j)
                if (not q.joins_between(parts[i].tables(), parts[j].tables()).empty())
                    candidates.emplace_back(i, j);
        if (candidates.empty())
            throw SemanticError("join graph is disconnected");
        auto [i, j] = candidates[rng.below(candidates.size())];
        const JoinOp op = ALL_JOIN_OPS[rng.below(3)];
        Plan merged = rng.coin() ? Plan::join(op, parts[j], parts[i]) : Plan::join(op, parts[i], parts[j]);
        parts[i] = std::move(merged);
        parts.erase(parts.begin() + std::ptrdiff_t(j));
    }
    return parts.front();
}


/*======================================================================================================================
 * Micro-executor
 *====================================================================================================================*/

uint64_t sort_charge(uint64_t n)
{
    if (n <= 1) return 0;
    return n * uint64_t(std::bit_width(n - 1));
}

namespace {

bool passes(int64_t value, CmpOp op, int64_t literal)
{
    switch (op) {
        case CmpOp::Lt: return value < literal;
        case CmpOp::Gt: return value > literal;
        case CmpOp::Eq: return value == literal;
        case CmpOp::Le: return value <= literal;
        case CmpOp::Ge: return value >= literal;
    }
    return false;
}

using Row = std::vector<int64_t>;
using Key = std::vector<int64_t>;

Key key_of(const Row &row, const std::vector<std::size_t> &cols)
{
    Key k;
    k.reserve(cols.size());
    for (auto c : cols) k.push_back(row[c]);
    return k;
}

std::size_t schema_index(const std::vector<std::string> &schema, const std::string &name)
{
    for (std::size_t i = 0; i != schema.size(); ++i)
        if (schema[i] == name) return i;
    throw Error("column '" + name + "' is not produced by the sub-plan");
}

ExecutionResult run(const Plan &plan, const QuerySpec &q, const Database &data)
{
    ExecutionResult out;
    if (plan.is_scan()) {
        auto it = data.find(plan.table());
        if (it == data.end())
            throw Error("no data for table '" + plan.table() + "'");
        const auto &table = it->second;
        std::vector<std::pair<std::size_t, const Selection*>> filters;
        for (auto &s : q.selections)
            if (s.table == table.name) filters.emplace_back(table.column_index(s.column), &s);
        for (auto &c : table.columns)
            out.schema.push_back(table.name + '.' + c);
        out.work = table.rows.size();
        for (auto &row : table.rows) {
            const bool keep = std::all_of(filters.begin(), filters.end(), [&](auto &f) {
                return passes(row[f.first], f.second->op, f.second->literal);
            });
            if (keep) out.rows.push_back(row);
        }
        return out;
    }

    auto left = run(plan.left(), q, data);
    auto right = run(plan.right(), q, data);
    out.work = left.work + right.work;
    out.schema = left.schema;
    out.schema.insert(out.schema.end(), right.schema.begin(), right.schema.end());

    std::vector<std::size_t> lkey, rkey;
    const auto &ltables = plan.left().tables();
    for (auto *j : q.joins_between(ltables, plan.right().tables())) {
        const bool left_first = std::find(ltables.begin(), ltables.end(), j->left_table) != ltables.end();
        const auto lcol = left_first ? j->left_table + '.' + j->left_column : j->right_table + '.' + j->right_column;
        const auto rcol = left_first ? j->right_table + '.' + j->right_column : j->left_table + '.' + j->left_column;
        lkey.push_back(schema_index(left.schema, lcol));
        rkey.push_back(schema_index(right.schema, rcol));
    }
    const auto concat = [](const Row &a, const Row &b) {
        Row r = a;
        r.insert(r.end(), b.begin(), b.end());
        return r;
    };
    const uint64_t nl = left.rows.size(), nr = right.rows.size();

    switch (plan.op()) {
        case JoinOp::HashJoin: {
            out.work += nl + nr;
            std::map<Key, std::vector<std::size_t>> table;
            for (std::size_t i = 0; i != left.rows.size(); ++i)
                table[key_of(left.rows[i], lkey)].push_back(i);
            for (auto &r : right.rows) {
                auto it = table.find(key_of(r, rkey));
                if (it == table.end()) continue;
                for (auto i : it->second)
                    out.rows.push_back(concat(left.rows[i], r));
            }
            break;
        }
        case JoinOp::MergeJoin: {
            out.work += sort_charge(nl) + sort_charge(nr) + nl + nr;
            std::vector<std::pair<Key, std::size_t>> ls, rs;
            for (std::size_t i = 0; i != left.rows.size(); ++i) ls.emplace_back(key_of(left.rows[i], lkey), i);
            for (std::size_t i = 0; i != right.rows.size(); ++i) rs.emplace_back(key_of(right.rows[i], rkey), i);
            std::sort(ls.begin(), ls.end());
            std::sort(rs.begin(), rs.end());
            std::size_t a = 0, b = 0;
            while (a < ls.size() and b < rs.size()) {
                if (ls[a].first < rs[b].first) { ++a; continue; }
                if (rs[b].first < ls[a].first) { ++b; continue; }
                std::size_t a_end = a, b_end = b;
                while (a_end < ls.size() and ls[a_end].first == ls[a].first) ++a_end;
                while (b_end < rs.size() and rs[b_end].first == rs[b].first) ++b_end;
                for (auto i = a; i != a_end; ++i)
                    for (auto k = b; k != b_end; ++k)
                        out.rows.push_back(concat(left.rows[ls[i].second], right.rows[rs[k].second]));
                a = a_end;
                b = b_end;
            }
            break;
        }
        case JoinOp::NestLoopJoin: {
            out.work += nl * nr;
            const auto matches = [&](const Row &l, const Row &r) {
                for (std::size_t k = 0; k != lkey.size(); ++k)
                    if (l[lkey[k]] != r[rkey[k]]) return false;
                return true;
            };
            for (auto &l : left.rows)
                for (auto &r : right.rows)
                    if (matches(l, r)) out.rows.push_back(concat(l, r));
            break;
        }
    }
    return out;
}

}

ExecutionResult ExecutionResult::canonical() const
{
    std::vector<std::size_t> order(schema.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return schema[a] < schema[b]; });
    ExecutionResult c;
    c.work = work;
    for (auto i : order) c.schema.push_back(schema[i]);
    for (auto &row : rows) {
        Row r;
        for (auto i : order) r.push_back(row[i]);
        c.rows.push_back(std::move(r));
    }
    std::sort(c.rows.begin(), c.rows.end());
    return c;
}

ExecutionResult execute_plan(const Plan &plan, const QuerySpec &q, const Database &data)
{
    return run(plan, q, data);
}

PlanTiming micro_execute(const Plan &plan, const QuerySpec &q, const Database &data, std::string optimizer)
{
    return {std::move(optimizer), plan, execute_plan(plan, q, data).work};
}


/*======================================================================================================================
 * Workloads
 *====================================================================================================================*/

std::string query_id(std::size_t index)
{
    auto digits = std::to_string(index);
    if (digits.size() < 5) digits.insert(0, 5 - digits.size(), '0');
    return "q" + digits;
}

std::vector<JoinPredicate> parse_join_graph(std::string_view text)
{
    std::vector<JoinPredicate> graph;
    std::size_t line_no = 0;
    for (auto &raw : split(text, '\n')) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty()) continue;
        const auto sides = split(line, '=');
        if (sides.size() != 2)
            throw ParseError("expected 'a.x = b.y'", line_no, 1);
        const auto a = split(trim(sides[0]), '.'), b = split(trim(sides[1]), '.');
        if (a.size() != 2 or b.size() != 2)
            throw ParseError("expected 'a.x = b.y'", line_no, 1);
        if (a[0] == b[0])
            throw ParseError("join graph edge within one table", line_no, 1);
        graph.push_back(JoinPredicate::make(a[0], a[1], b[0], b[1]));
    }
    return graph;
}

std::string format_join_graph(std::span<const JoinPredicate> graph)
{
    std::string out;
    for (auto &j : graph) out += j.to_string() + '\n';
    return out;
}

std::vector<QuerySpec> gen_workload(const Catalog &catalog, std::span<const JoinPredicate> join_graph,
                                    std::size_t n_joins, std::size_t count, uint64_t seed)
{
    std::vector<std::string> graph_tables;
    for (auto &j : join_graph) {
        for (auto *t : {&j.left_table, &j.right_table}) {
            if (not catalog.contains(*t))
                throw Error("join graph references unknown table '" + *t + "'");
            if (std::find(graph_tables.begin(), graph_tables.end(), *t) == graph_tables.end())
                graph_tables.push_back(*t);
        }
    }
    std::sort(graph_tables.begin(), graph_tables.end());
    if (graph_tables.empty())
        for (auto &t : catalog.tables()) graph_tables.push_back(t.name);
    if (n_joins >= graph_tables.size())
        throw Error("n_joins = " + std::to_string(n_joins) + " needs more than the " +
                    std::to_string(graph_tables.size()) + " tables of the join graph");

    Rng rng(seed);
    const auto add_selection = [&](QuerySpec &q, const std::string &table) {
        const auto &t = catalog.at(table);
        if (t.columns.empty()) return;
        const auto &col = t.columns[rng.below(t.columns.size())];
        const CmpOp op = rng.coin() ? CmpOp::Lt : CmpOp::Gt;
        const int64_t literal = col.stats.distinct_count ? rng.between(col.stats.min_value, col.stats.max_value) : 0;
        q.selections.push_back({table, col.name, op, literal});
    };

    std::vector<QuerySpec> queries;
    queries.reserve(count);
    for (std::size_t i = 0; i != count; ++i) {
        QuerySpec q;
        q.tables.push_back(graph_tables[rng.below(graph_tables.size())]);
        add_selection(q, q.tables.front());
        for (std::size_t step = 0; step != n_joins; ++step) {
            std::vector<const JoinPredicate*> frontier;
            for (auto &j : join_graph)
                if (q.has_table(j.left_table) != q.has_table(j.right_table)) frontier.push_back(&j);
            if (frontier.empty())
                throw Error("join graph is not connected enough for " + std::to_string(n_joins) + " joins");
            const auto *edge = frontier[rng.below(frontier.size())];
            const auto &added = q.has_table(edge->left_table) ? edge->right_table : edge->left_table;
            q.tables.push_back(added);
            q.joins.push_back(*edge);
            if (rng.coin()) add_selection(q, added);
        }
        q.raw_sql = render_sql(q);
        queries.push_back(std::move(q));
    }
    return queries;
}

std::vector<WorkloadQuery> parse_workload(std::string_view text)
{
    std::vector<WorkloadQuery> workload;
    std::size_t index = 0;
    for (auto &raw : split(text, '\n')) {
        const auto line = trim(raw);
        if (line.empty()) continue;
        workload.push_back({query_id(index++), parse_sql(line)});
    }
    return workload;
}

std::string format_workload(std::span<const QuerySpec> queries)
{
    std::string out;
    for (auto &q : queries) out += render_sql(q) + '\n';
    return out;
}


/*======================================================================================================================
 * Plan logs
 *====================================================================================================================*/

std::vector<PlanLogRecord> parse_plan_log(std::string_view jsonl)
{
    std::vector<PlanLogRecord> records;
    std::size_t line_no = 0;
    for (auto &raw : split(jsonl, '\n')) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            records.push_back({j.at("query_id").get<std::string>(), j.at("optimizer").get<std::string>(),
                               j.at("bracket").get<std::string>(), j.at("time_units").get<uint64_t>()});
        } catch (const nlohmann::json::exception &e) {
            throw ParseError(std::string("plan log: ") + e.what(), line_no, 1);
        }
    }
    return records;
}

std::string format_plan_log(std::span<const PlanLogRecord> records)
{
    std::string out;
    for (auto &r : records) {
        nlohmann::ordered_json j;
        j["query_id"] = r.query_id;
        j["optimizer"] = r.optimizer;
        j["bracket"] = r.bracket;
        j["time_units"] = r.time_units;
        out += j.dump() + '\n';
    }
    return out;
}

std::vector<PlanLogRecord> run_optimizers(std::span<const WorkloadQuery> workload, const Catalog &catalog,
                                          const Database &data, uint64_t seed, Exec exec)
{
    const CostModel model(catalog);
    std::vector<std::array<PlanLogRecord, 3>> per_query(workload.size());

    const auto one = [&](std::size_t i) {
        const auto &[id, q] = workload[i];
        const Plan plans[3] = {
            dp_optimize(q, model),
            greedy_optimize(q, model),
            random_optimize(q, mix64(seed ^ fnv1a(id))),
        };
        for (std::size_t k = 0; k != 3; ++k) {
            const auto timing = micro_execute(plans[k], q, data, OPTIMIZER_NAMES[k]);
            per_query[i][k] = {id, timing.optimizer, to_bracket(plans[k]), timing.time};
        }
    };

    const auto n = static_cast<long>(workload.size());
    if (exec == Exec::Parallel) {
        std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
        for (long i = 0; i < n; ++i) {
            try {
                one(std::size_t(i));
            } catch (...) {
#pragma omp critical
                if (not failure) failure = std::current_exception();
            }
        }
        if (failure) std::rethrow_exception(failure);
    } else {
        for (long i = 0; i < n; ++i) one(std::size_t(i));
    }

    std::vector<PlanLogRecord> records;
    records.reserve(3 * workload.size());
    for (auto &rs : per_query)
        for (auto &r : rs) records.push_back(std::move(r));
    return records;
}

}
