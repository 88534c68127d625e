#pragma once

#include <cstdint>
#include <llmqo/optimizers.hpp>
#include <llmqo/qinstruct.hpp>
#include <span>
#include <string>
#include <vector>


namespace llmqo {

struct PreferenceTriple
{
    std::string query_id;
    std::string prompt;
    std::string chosen;   ///< response rendering the fastest plan
    std::string rejected; ///< response rendering a plan at least 1/r0 times slower
    uint64_t t_star = 0;
    uint64_t t_rejected = 0;
    std::string chosen_optimizer;
    std::string rejected_optimizer;

    friend bool operator==(const PreferenceTriple&, const PreferenceTriple&) = default;
};

struct PreferenceGenConfig
{
    double r0 = 0.95;

    /** Throws `Error` unless 0 < r0 < 1. */
    void validate() const;
};

/** Index of the fastest timing; ties go to the smallest bracket. */
std::size_t fastest(std::span<const PlanTiming> timings);

/** Pairs the fastest plan p* with every plan p_i for which t* / t_i < r0, in input order. */
std::vector<PreferenceTriple> generate_preferences(std::span<const PlanTiming> timings, const std::string &prompt,
                                                   const std::string &query_id, const PreferenceGenConfig &config);

/** Result of adding one optimizer's plan for a query.  When the new plan becomes the fastest, the query's existing
 * triples (which name the former p* as chosen) are superseded so that each query keeps a single preferred plan. */
struct PreferenceDelta
{
    std::vector<PreferenceTriple> added;
    std::vector<PreferenceTriple> superseded;
};

PreferenceDelta extend_preferences(std::span<const PreferenceTriple> existing, const PlanTiming &added,
                                   std::span<const PlanTiming> old_timings, const std::string &prompt,
                                   const std::string &query_id, const PreferenceGenConfig &config);

/** Removes `superseded`, appends `added`, and sorts by (query id, rejected optimizer). */
std::vector<PreferenceTriple> apply_delta(std::vector<PreferenceTriple> dataset, const PreferenceDelta &delta);

/** Runs `generate_preferences` for every query of the SFT dataset; queries yielding no pair are dropped. */
std::vector<PreferenceTriple> build_dpo_dataset(std::span<const QInstructRecord> sft,
                                                std::span<const PlanLogRecord> plan_log,
                                                const PreferenceGenConfig &config);

/** Extends a dataset with the plans of one additional optimizer (`new_log` holds exactly one optimizer). */
std::vector<PreferenceTriple> extend_dpo_dataset(std::span<const PreferenceTriple> existing,
                                                 std::span<const QInstructRecord> sft,
                                                 std::span<const PlanLogRecord> old_log,
                                                 std::span<const PlanLogRecord> new_log,
                                                 const PreferenceGenConfig &config);

/** JSON Lines `{query_id, prompt, chosen, rejected, t_star, t_rejected, chosen_optimizer, rejected_optimizer}`. */
std::string format_dpo_dataset(std::span<const PreferenceTriple> triples);
std::vector<PreferenceTriple> parse_dpo_dataset(std::string_view jsonl);

}
