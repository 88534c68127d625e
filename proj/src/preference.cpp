#include <llmqo/preference.hpp>

#include <algorithm>
#include <map>
#include <nlohmann/json.hpp>
#include <set>


namespace llmqo {

void PreferenceGenConfig::validate() const
{
    if (not (r0 > 0.0 and r0 < 1.0))
        throw Error("r0 must lie in (0, 1), got " + std::to_string(r0));
}

std::size_t fastest(std::span<const PlanTiming> timings)
{
    if (timings.empty())
        throw Error("no timings");
    std::size_t best = 0;
    std::string best_bracket = to_bracket(timings[0].plan);
    for (std::size_t i = 1; i != timings.size(); ++i) {
        auto bracket = to_bracket(timings[i].plan);
        if (timings[i].time < timings[best].time or
            (timings[i].time == timings[best].time and bracket < best_bracket))
        {
            best = i;
            best_bracket = std::move(bracket);
        }
    }
    return best;
}

namespace {

void check_timings(std::span<const PlanTiming> timings)
{
    std::set<std::string> ids;
    for (auto &t : timings) {
        if (not ids.insert(t.optimizer).second)
            throw Error("duplicate optimizer '" + t.optimizer + "'");
        if (t.time == 0)
            throw Error("optimizer '" + t.optimizer + "' reports a zero execution time");
    }
}

/** Ratio filter: p_i is dispreferred iff t* / t_i < r0. */
bool dispreferred(uint64_t t_star, uint64_t t_i, double r0)
{
    return double(t_star) / double(t_i) < r0;
}

PreferenceTriple make_triple(const std::string &query_id, const std::string &prompt, const PlanTiming &chosen,
                             const PlanTiming &rejected)
{
    return {query_id, prompt, render_response(chosen.plan), render_response(rejected.plan),
            chosen.time, rejected.time, chosen.optimizer, rejected.optimizer};
}

bool same_pair(const PreferenceTriple &t, const std::string &chosen, const std::string &rejected)
{
    return t.chosen == chosen and t.rejected == rejected;
}

}

std::vector<PreferenceTriple> generate_preferences(std::span<const PlanTiming> timings, const std::string &prompt,
                                                   const std::string &query_id, const PreferenceGenConfig &config)
{
    config.validate();
    if (timings.size() < 2)
        throw Error("preference generation needs at least two optimizers, got " + std::to_string(timings.size()));
    check_timings(timings);

    const auto &best = timings[fastest(timings)];
    std::vector<PreferenceTriple> triples;
    for (auto &t : timings)
        if (dispreferred(best.time, t.time, config.r0))
            triples.push_back(make_triple(query_id, prompt, best, t));
    return triples;
}

PreferenceDelta extend_preferences(std::span<const PreferenceTriple> existing, const PlanTiming &added,
                                   std::span<const PlanTiming> old_timings, const std::string &prompt,
                                   const std::string &query_id, const PreferenceGenConfig &config)
{
    config.validate();
    if (old_timings.empty())
        throw Error("no existing timings to extend");
    for (auto &t : old_timings)
        if (t.optimizer == added.optimizer)
            throw Error("optimizer '" + added.optimizer + "' is already part of the dataset");
    check_timings(old_timings);
    if (added.time == 0)
        throw Error("optimizer '" + added.optimizer + "' reports a zero execution time");

    const auto &incumbent = old_timings[fastest(old_timings)];
    const PlanTiming pair[] = {incumbent, added};
    const bool takes_over = fastest(pair) == 1;

    std::vector<const PreferenceTriple*> mine;
    for (auto &t : existing)
        if (t.query_id == query_id) mine.push_back(&t);

    PreferenceDelta delta;
    std::vector<PreferenceTriple> candidates;
    if (takes_over) {
        const auto chosen = render_response(added.plan);
        for (auto *t : mine)
            if (t->chosen != chosen) delta.superseded.push_back(*t);
        for (auto &old : old_timings)
            if (dispreferred(added.time, old.time, config.r0))
                candidates.push_back(make_triple(query_id, prompt, added, old));
    } else if (dispreferred(incumbent.time, added.time, config.r0)) {
        candidates.push_back(make_triple(query_id, prompt, incumbent, added));
    }

    for (auto &c : candidates) {
        const bool kept_already = std::any_of(mine.begin(), mine.end(), [&](auto *t) {
            return same_pair(*t, c.chosen, c.rejected) and
                   std::none_of(delta.superseded.begin(), delta.superseded.end(),
                                [&](auto &s) { return same_pair(s, c.chosen, c.rejected); });
        });
        if (not kept_already)
            delta.added.push_back(std::move(c));
    }
    return delta;
}

std::vector<PreferenceTriple> apply_delta(std::vector<PreferenceTriple> dataset, const PreferenceDelta &delta)
{
    std::erase_if(dataset, [&](const PreferenceTriple &t) {
        return std::find(delta.superseded.begin(), delta.superseded.end(), t) != delta.superseded.end();
    });
    dataset.insert(dataset.end(), delta.added.begin(), delta.added.end());
    std::stable_sort(dataset.begin(), dataset.end(), [](auto &a, auto &b) {
        return std::tie(a.query_id, a.rejected_optimizer) < std::tie(b.query_id, b.rejected_optimizer);
    });
    return dataset;
}


/*======================================================================================================================
 * Datasets
 *====================================================================================================================*/

namespace {

std::map<std::string, std::vector<PlanTiming>> timings_by_query(std::span<const PlanLogRecord> log)
{
    std::map<std::string, std::vector<PlanTiming>> by_query;
    for (auto &r : log)
        by_query[r.query_id].push_back({r.optimizer, parse_bracket(r.bracket), r.time_units});
    return by_query;
}

}

std::vector<PreferenceTriple> build_dpo_dataset(std::span<const QInstructRecord> sft,
                                                std::span<const PlanLogRecord> plan_log,
                                                const PreferenceGenConfig &config)
{
    config.validate();
    const auto timings = timings_by_query(plan_log);
    std::vector<PreferenceTriple> dataset;
    for (auto &r : sft) {
        auto it = timings.find(r.query_id);
        if (it == timings.end())
            throw Error("plan log has no plan for query '" + r.query_id + "'");
        auto triples = generate_preferences(it->second, r.prompt, r.query_id, config);
        dataset.insert(dataset.end(), std::make_move_iterator(triples.begin()), std::make_move_iterator(triples.end()));
    }
    return apply_delta(std::move(dataset), {});
}

std::vector<PreferenceTriple> extend_dpo_dataset(std::span<const PreferenceTriple> existing,
                                                 std::span<const QInstructRecord> sft,
                                                 std::span<const PlanLogRecord> old_log,
                                                 std::span<const PlanLogRecord> new_log,
                                                 const PreferenceGenConfig &config)
{
    std::set<std::string> new_optimizers;
    for (auto &r : new_log) new_optimizers.insert(r.optimizer);
    if (new_optimizers.size() != 1)
        throw Error("the new plan log must contain exactly one optimizer, found " +
                    std::to_string(new_optimizers.size()));

    const auto old_timings = timings_by_query(old_log);
    const auto new_timings = timings_by_query(new_log);
    std::vector<PreferenceTriple> dataset(existing.begin(), existing.end());
    for (auto &r : sft) {
        auto o = old_timings.find(r.query_id);
        auto n = new_timings.find(r.query_id);
        if (o == old_timings.end() or n == new_timings.end())
            throw Error("plan logs have no plan for query '" + r.query_id + "'");
        if (n->second.size() != 1)
            throw Error("new optimizer logged several plans for query '" + r.query_id + "'");
        dataset = apply_delta(std::move(dataset),
                              extend_preferences(dataset, n->second.front(), o->second, r.prompt, r.query_id, config));
    }
    return apply_delta(std::move(dataset), {});
}

std::string format_dpo_dataset(std::span<const PreferenceTriple> triples)
{
    std::string out;
    for (auto &t : triples) {
        nlohmann::ordered_json j;
        j["query_id"] = t.query_id;
        j["prompt"] = t.prompt;
        j["chosen"] = t.chosen;
        j["rejected"] = t.rejected;
        j["t_star"] = t.t_star;
        j["t_rejected"] = t.t_rejected;
        j["chosen_optimizer"] = t.chosen_optimizer;
        j["rejected_optimizer"] = t.rejected_optimizer;
        out += j.dump() + '\n';
    }
    return out;
}

std::vector<PreferenceTriple> parse_dpo_dataset(std::string_view jsonl)
{
    std::vector<PreferenceTriple> triples;
    std::size_t line_no = 0;
    for (auto &raw : split(jsonl, '\n')) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            triples.push_back({j.at("query_id").get<std::string>(), j.at("prompt").get<std::string>(),
                               j.at("chosen").get<std::string>(), j.at("rejected").get<std::string>(),
                               j.at("t_star").get<uint64_t>(), j.at("t_rejected").get<uint64_t>(),
                               j.value("chosen_optimizer", std::string()),
                               j.value("rejected_optimizer", std::string())});
        } catch (const nlohmann::json::exception &e) {
            throw ParseError(std::string("preference dataset: ") + e.what(), line_no, 1);
        }
    }
    return triples;
}

}
