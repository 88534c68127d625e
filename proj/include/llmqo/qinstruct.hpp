#pragma once

#include <cstdint>
#include <llmqo/optimizers.hpp>
#include <llmqo/relational.hpp>
#include <llmqo/sql.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>


namespace llmqo {

/** One instruction-tuning sample: prompt `x` and response `y` for one query. */
struct QInstructRecord
{
    std::string query_id;
    std::string prompt;
    std::string response;
    std::string sql;        ///< canonical SQL of the query, as shown in the prompt
    std::string statistics; ///< statistics block of the prompt
    QueryTemplate query_template;
};

struct Demonstration
{
    std::string sql;
    std::string statistics;
    std::string response;
};

enum class DemoMode { Strict, Fallback, None };

DemoMode demo_mode_from_string(std::string_view s);
const char * to_string(DemoMode mode);

struct NoDemonstrationAvailable : Error
{
    using Error::Error;
};

/** The fixed instruction paragraph that opens every prompt. */
extern const std::string_view INSTRUCTION_TEXT;

/** Instruction, optional demonstration block, then `INPUT:` with the canonical SQL and the statistics of the query's
 * tables in the order of the canonical FROM list. */
std::string build_prompt(const QuerySpec &query, const Catalog &catalog, const std::optional<Demonstration> &demo);

/** Picks the one-shot demonstration for `query` from `pool`, never the query itself (by id or by identical SQL).
 *
 * - strict: uniformly seeded choice among records with the same template; throws `NoDemonstrationAvailable`
 * - fallback: as strict, else the record maximizing table-set Jaccard, then join-set Jaccard, then smallest id
 * - none: always `std::nullopt` */
std::optional<Demonstration> select_demonstration(const QuerySpec &query, std::string_view query_id,
                                                  std::span<const QInstructRecord> pool, DemoMode mode,
                                                  uint64_t seed);

/** The fastest plan among the log records of one query; ties go to the smallest bracket. */
const PlanLogRecord & best_plan(std::span<const PlanLogRecord *const> records);

/** One record per query whose response renders the fastest logged plan.  Demonstrations come from the dataset's
 * own records.  In strict mode a query without a same-template exemplar gets no demonstration. */
std::vector<QInstructRecord> build_sft_dataset(std::span<const WorkloadQuery> workload,
                                               std::span<const PlanLogRecord> plan_log, const Catalog &catalog,
                                               DemoMode mode, uint64_t seed);

/** JSON Lines `{query_id, prompt, response}`, sorted by query id. */
std::string format_sft_dataset(std::span<const QInstructRecord> records);
/** Parses a dataset/pool file; SQL, statistics and template are recovered from each prompt's INPUT section. */
std::vector<QInstructRecord> parse_sft_dataset(std::string_view jsonl);

/** SQL and statistics of the INPUT section of a prompt. */
std::pair<std::string, std::string> prompt_input(std::string_view prompt);

}
