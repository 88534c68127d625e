#pragma once

#include <cstdint>
#include <llmqo/plan.hpp>
#include <llmqo/relational.hpp>
#include <llmqo/sql.hpp>
#include <map>
#include <span>
#include <string>
#include <vector>


namespace llmqo {

/** Serial loops are the reference; the parallel variants must produce identical results. */
enum class Exec { Serial, Parallel };

/*======================================================================================================================
 * Cost model
 *====================================================================================================================*/

/** Uniformity/independence estimates over catalog statistics.
 *
 * - scan: row estimate of the table times the selectivity of each of its selections
 * - `col < v`: (v - min) / (max - min + 1), `col > v`: (max - v) / (max - min + 1), `<=`/`>=` include v,
 *   `col = v`: 1 / distinct; all clamped to [0, 1]
 * - equi-join: 1 / max(distinct_a, distinct_b) */
class CostModel
{
    const Catalog *catalog_;

    public:
    /** Both inputs below this estimate make the DP optimizer pick a nested-loop join. */
    static constexpr double NEST_LOOP_THRESHOLD = 100.0;

    explicit CostModel(const Catalog &catalog) : catalog_(&catalog) { }

    const Catalog & catalog() const { return *catalog_; }

    double selectivity(const Selection &s) const;
    double join_selectivity(const JoinPredicate &j) const;
    double scan_cardinality(const QuerySpec &q, const std::string &table) const;
    /** Estimated result size of joining `tables` under all query predicates among them.  Shape-independent. */
    double cardinality(const QuerySpec &q, std::vector<std::string> tables) const;
};

/** C_out: sum of the estimated output cardinalities of all join nodes. */
double plan_cost(const Plan &plan, const QuerySpec &q, const CostModel &model);

/*======================================================================================================================
 * Optimizers
 *====================================================================================================================*/

struct TooManyTables : Error
{
    using Error::Error;
};

inline constexpr std::size_t DP_MAX_TABLES = 14;

/** Exact bushy DP over connected subsets minimizing C_out; ties go to the lexicographically smallest bracket. */
Plan dp_optimize(const QuerySpec &q, const CostModel &model);
/** Repeatedly merges the connected pair with the smallest estimated output, always with MergeJoin. */
Plan greedy_optimize(const QuerySpec &q, const CostModel &model);
/** Random connected bushy tree with random operators, reproducible from `seed`. */
Plan random_optimize(const QuerySpec &q, uint64_t seed);

inline constexpr const char *OPTIMIZER_NAMES[] = {"dp", "greedy", "random"};

/*======================================================================================================================
 * Micro-executor
 *====================================================================================================================*/

using Database = std::map<std::string, MicroTable, std::less<>>;

struct ExecutionResult
{
    uint64_t work = 0;                      ///< row touches
    std::vector<std::string> schema;        ///< `table.column`
    std::vector<std::vector<int64_t>> rows;

    /** Columns sorted by name and rows sorted: equal for any two plans computing the same multiset. */
    ExecutionResult canonical() const;
};

/** Executes bottom-up over real rows.  Charges: scan = rows of the table; hash join = |L| + |R|; merge join =
 * n log n sort charge for each input plus |L| + |R|; nested loop = |L| * |R|. */
ExecutionResult execute_plan(const Plan &plan, const QuerySpec &q, const Database &data);

struct PlanTiming
{
    std::string optimizer;
    Plan plan;
    uint64_t time; ///< work units
};

PlanTiming micro_execute(const Plan &plan, const QuerySpec &q, const Database &data, std::string optimizer = "");

/** n * ceil(log2 n), zero for n <= 1. */
uint64_t sort_charge(uint64_t n);

/*======================================================================================================================
 * Workloads and plan logs
 *====================================================================================================================*/

struct WorkloadQuery
{
    std::string id;
    QuerySpec query;
};

std::string query_id(std::size_t index);

/** Join graph file: one `a.x = b.y` per line. */
std::vector<JoinPredicate> parse_join_graph(std::string_view text);
std::string format_join_graph(std::span<const JoinPredicate> graph);

/** Random walks over the join graph: a uniform start table, then `n_joins` uniformly chosen edges leaving the current
 * table set.  The start table always gets one selection, every other table one with probability 1/2 (uniform
 * column, `<` or `>`, literal uniform in [min, max]). */
std::vector<QuerySpec> gen_workload(const Catalog &catalog, std::span<const JoinPredicate> join_graph,
                                    std::size_t n_joins, std::size_t count, uint64_t seed);

/** One canonical SQL text per line; ids are assigned from line numbers. */
std::vector<WorkloadQuery> parse_workload(std::string_view text);
std::string format_workload(std::span<const QuerySpec> queries);

struct PlanLogRecord
{
    std::string query_id;
    std::string optimizer;
    std::string bracket;
    uint64_t time_units;

    friend bool operator==(const PlanLogRecord&, const PlanLogRecord&) = default;
};

std::vector<PlanLogRecord> parse_plan_log(std::string_view jsonl);
std::string format_plan_log(std::span<const PlanLogRecord> records);

/** Runs the three optimizers on every query and times their plans.  Output is ordered by (query, optimizer). */
std::vector<PlanLogRecord> run_optimizers(std::span<const WorkloadQuery> workload, const Catalog &catalog,
                                          const Database &data, uint64_t seed, Exec exec = Exec::Parallel);

}
