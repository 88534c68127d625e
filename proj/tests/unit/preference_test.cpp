#include <doctest.h>

#include "../support/oracles.hpp"
#include <llmqo/preference.hpp>


using namespace llmqo;


namespace {

std::vector<PlanTiming> timings(std::initializer_list<std::pair<const char*, uint64_t>> items)
{
    // Distinct plans over {a, b, c}, one per optimizer.
    static const char *const brackets[] = {
        "HashJoin(a HashJoin(b c))", "MergeJoin(HashJoin(a b) c)", "NestLoopJoin(c HashJoin(a b))",
        "HashJoin(b HashJoin(a c))", "MergeJoin(a MergeJoin(b c))",
    };
    std::vector<PlanTiming> out;
    for (auto &[name, t] : items) out.push_back({name, parse_bracket(brackets[out.size()]), t});
    return out;
}

std::set<std::pair<std::string, std::string>> pairs_of(std::span<const PreferenceTriple> triples)
{
    std::set<std::pair<std::string, std::string>> out;
    for (auto &t : triples) out.insert({to_bracket(parse_response(t.chosen)), to_bracket(parse_response(t.rejected))});
    return out;
}

}


TEST_CASE("generate_preferences/examples")
{
    const PreferenceGenConfig cfg;
    SUBCASE("two dispreferred plans") {
        const auto t = timings({{"dp", 100}, {"greedy", 180}, {"random", 400}});
        const auto out = generate_preferences(t, "x", "q", cfg);
        REQUIRE(out.size() == 2);
        CHECK(out[0].rejected_optimizer == "greedy");
        CHECK(out[1].rejected_optimizer == "random");
        CHECK(out[0].chosen == render_response(t[0].plan));
        CHECK(out[0].t_star == 100);
        CHECK(out[1].t_rejected == 400);
        CHECK(pairs_of(out) == oracle::preference_pairs(t, 0.95));
    }
    SUBCASE("equal times") { CHECK(generate_preferences(timings({{"a", 100}, {"b", 100}}), "x", "q", cfg).empty()); }
    SUBCASE("ratio equal to the threshold") {
        CHECK(generate_preferences(timings({{"a", 95}, {"b", 100}}), "x", "q", cfg).empty());
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(generate_preferences(timings({{"a", 95}}), "x", "q", cfg), Error);
        CHECK_THROWS_AS(generate_preferences(timings({{"a", 95}, {"a", 200}}), "x", "q", cfg), Error);
        CHECK_THROWS_AS((PreferenceGenConfig{1.0}.validate()), Error);
        CHECK_THROWS_AS((PreferenceGenConfig{0.0}.validate()), Error);
    }
}

TEST_CASE("fastest breaks ties by bracket")
{
    auto t = timings({{"a", 100}, {"b", 100}});
    CHECK(fastest(t) == 0); // "HashJoin(...)" < "MergeJoin(...)"
    std::swap(t[0], t[1]);
    CHECK(fastest(t) == 1);
}

TEST_CASE("extend_preferences/examples")
{
    const PreferenceGenConfig cfg;
    const auto old = timings({{"dp", 100}, {"greedy", 180}, {"new", 0}});
    const std::vector<PlanTiming> old_timings(old.begin(), old.begin() + 2);
    const auto existing = generate_preferences(old_timings, "x", "q", cfg);
    REQUIRE(existing.size() == 1);
    auto added = old[2];
    SUBCASE("new plan becomes the fastest") {
        added.time = 50;
        const auto d = extend_preferences(existing, added, old_timings, "x", "q", cfg);
        CHECK(d.added.size() == 2);
        for (auto &t : d.added) CHECK(t.chosen_optimizer == "new");
        CHECK(d.superseded == existing);
    }
    SUBCASE("new plan barely faster") {
        added.time = 99;
        const auto d = extend_preferences(existing, added, old_timings, "x", "q", cfg);
        CHECK(d.added.size() == 1);
        CHECK(d.added[0].rejected_optimizer == "greedy");
    }
    SUBCASE("new plan slower") {
        added.time = 500;
        const auto d = extend_preferences(existing, added, old_timings, "x", "q", cfg);
        REQUIRE(d.added.size() == 1);
        CHECK(d.added[0].chosen_optimizer == "dp");
        CHECK(d.added[0].rejected_optimizer == "new");
        CHECK(d.superseded.empty());
    }
    SUBCASE("duplicate optimizer") {
        CHECK_THROWS_AS(extend_preferences(existing, old_timings[0], old_timings, "x", "q", cfg), Error);
    }
}

TEST_CASE("preference properties on random timings")
{
    Rng rng(5);
    for (int i = 0; i != 200; ++i) {
        const auto t = timings({{"o1", 1 + rng.below(300)}, {"o2", 1 + rng.below(300)}, {"o3", 1 + rng.below(300)},
                                {"o4", 1 + rng.below(300)}});
        const double r0 = 0.05 + 0.9 * rng.unit();
        const auto out = generate_preferences(t, "x", "q", {r0});
        CHECK(pairs_of(out) == oracle::preference_pairs(t, r0));
        for (auto &tr : out) CHECK(tr.t_star < tr.t_rejected);
        const auto higher = generate_preferences(t, "x", "q", {std::min(0.99, r0 + 0.1)});
        const auto p = pairs_of(out);
        const auto h = pairs_of(higher);
        CHECK(std::includes(h.begin(), h.end(), p.begin(), p.end()));

        const std::vector<PlanTiming> old(t.begin(), t.begin() + 3);
        const auto base = generate_preferences(old, "x", "q", {r0});
        const auto ext = apply_delta(base, extend_preferences(base, t[3], old, "x", "q", {r0}));
        CHECK(pairs_of(ext) == oracle::preference_pairs(t, r0));
    }
}

TEST_CASE("dataset files round trip")
{
    const auto t = timings({{"dp", 100}, {"greedy", 180}, {"random", 400}});
    const auto out = generate_preferences(t, "prompt\nwith \"quotes\"", "q0001", {});
    CHECK(parse_dpo_dataset(format_dpo_dataset(out)) == out);
}
