#include <doctest.h>

#include "../support/oracles.hpp"
#include <llmqo/validator.hpp>


using namespace llmqo;

using enum InvalidClass;


namespace {

std::string response_for(std::string_view bracket)
{
    return std::string("Therefore, the final answer is:\n") + std::string(bracket) + ".";
}

}


TEST_CASE("validate/examples")
{
    const auto q = parse_sql(oracle::IMDB_SQL);
    SUBCASE("valid response") {
        const auto r = validate(oracle::IMDB_RESPONSE, q);
        CHECK(r.valid);
        CHECK(r.errors.empty());
        REQUIRE(r.plan);
        CHECK(*r.plan == oracle::imdb_plan());
    }
    SUBCASE("missing table") {
        const auto r = validate(response_for("HashJoin(movie_companies title)"), q);
        CHECK_FALSE(r.valid);
        CHECK(r.errors == InvalidSet{E1_TableNumberMismatch});
    }
    SUBCASE("foreign table with matching count") {
        const auto r = validate(response_for("HashJoin(cast_info HashJoin(movie_companies title))"), q);
        CHECK(r.errors == InvalidSet{E2_TableMismatch});
    }
    SUBCASE("redundant table") {
        const auto r =
            validate(response_for("HashJoin(cast_info HashJoin(movie_info_idx HashJoin(movie_companies title)))"), q);
        CHECK(r.errors == InvalidSet{E1_TableNumberMismatch, E2_TableMismatch});
    }
    SUBCASE("cross product") {
        const auto r = validate(response_for("HashJoin(HashJoin(movie_companies movie_info_idx) title)"), q);
        CHECK(r.errors == InvalidSet{E3_OperatorMismatch});
        CHECK(r.plan);
    }
    SUBCASE("unbalanced bracket with a missing table") {
        const auto r = validate(response_for("HashJoin(movie_companies title"), q);
        CHECK(r.errors == InvalidSet{E1_TableNumberMismatch, E3_OperatorMismatch});
        CHECK_FALSE(r.plan);
    }
    SUBCASE("unknown operator only") {
        const auto r = validate(response_for("HashJoin(movie_info_idx FooJoin(movie_companies title))"), q);
        CHECK(r.errors == InvalidSet{E3_OperatorMismatch});
    }
    SUBCASE("no final answer") { CHECK(validate("I do not know.", q).errors.contains(E3_OperatorMismatch)); }
    SUBCASE("chatter before the marker is ignored") {
        CHECK(validate(std::string("Let me think. HashJoin(x y)\n") + oracle::IMDB_RESPONSE, q).valid);
    }
}

TEST_CASE("scan_leaf_identifiers")
{
    CHECK(scan_leaf_identifiers(response_for("HashJoin(a FooJoin(b c)")) ==
          std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("classify_corpus")
{
    const auto q = parse_sql(oracle::IMDB_SQL);
    SUBCASE("arithmetic") {
        std::vector<ResponseCase> corpus;
        for (int i = 0; i != 4; ++i) corpus.push_back({oracle::IMDB_RESPONSE, q});
        corpus.push_back({response_for("HashJoin(movie_companies title)"), q});
        corpus.push_back({response_for("HashJoin(movie_companies title"), q});
        const auto s = classify_corpus(corpus);
        CHECK(s.e1 == 2);
        CHECK(s.e2 == 0);
        CHECK(s.e3 == 1);
        CHECK(s.invalid == 2);
        CHECK(s.total == 6);
        CHECK(s.to_string() == "E1=2 E2=0 E3=1 total=2");
    }
    SUBCASE("empty corpus") { CHECK(classify_corpus({}) == CorpusSummary{}); }
}

TEST_CASE("every connected plan of a query validates")
{
    const auto q = parse_sql(oracle::IMDB_SQL);
    for (auto &p : oracle::enumerate_connected_plans(q)) CHECK(validate(render_response(p), q).valid);
}
