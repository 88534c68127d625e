#include <doctest.h>

#include "../support/oracles.hpp"
#include <llmqo/sql.hpp>


using namespace llmqo;


/*======================================================================================================================
 * Parsing
 *====================================================================================================================*/

TEST_CASE("parse_sql/three-table query")
{
    const auto q = parse_sql(oracle::IMDB_SQL);
    CHECK(q.tables == std::vector<std::string>{"movie_companies", "title", "movie_info_idx"});
    CHECK(q.joins.size() == 2);
    CHECK(q.selections.size() == 3);
    CHECK(q.raw_sql == oracle::IMDB_SQL);
    CHECK(q.selections[0] == Selection{"movie_companies", "company_type_id", CmpOp::Eq, 1});
    CHECK(q.selections[1] == Selection{"title", "product_year", CmpOp::Lt, 1904});
    CHECK(q.selections[2] == Selection{"title", "product_year", CmpOp::Gt, 58});
    CHECK(q.joins[0] == JoinPredicate::make("title", "movie_id", "movie_companies", "movie_id"));
    CHECK(q.joins[0].left_table == "movie_companies");
}

TEST_CASE("parse_sql/single table")
{
    const auto q = parse_sql("SELECT * FROM t1;");
    CHECK(q.tables == std::vector<std::string>{"t1"});
    CHECK(q.joins.empty());
    CHECK(q.selections.empty());
}

TEST_CASE("parse_sql/comparison operators and negative literals")
{
    const auto q = parse_sql("SELECT * FROM a WHERE a.x <= -3 AND a.y >= 4 AND a.z = 0;");
    REQUIRE(q.selections.size() == 3);
    CHECK(q.selections[0] == Selection{"a", "x", CmpOp::Le, -3});
    CHECK(q.selections[1].op == CmpOp::Ge);
    CHECK(q.selections[2].op == CmpOp::Eq);
}

TEST_CASE("parse_sql/errors")
{
    SUBCASE("disconnected join graph") {
        CHECK_THROWS_AS(parse_sql("SELECT * FROM a, b WHERE a.x = 1;"), SemanticError);
    }
    SUBCASE("self join") { CHECK_THROWS_AS(parse_sql("SELECT * FROM a, a WHERE a.x = a.y;"), SemanticError); }
    SUBCASE("non-integer literal") { CHECK_THROWS_AS(parse_sql("SELECT * FROM a WHERE a.x = 'q';"), Error); }
    SUBCASE("disjunction") {
        CHECK_THROWS_AS(parse_sql("SELECT * FROM a WHERE a.x = 1 OR a.x = 2;"), SemanticError);
    }
    SUBCASE("projection list") { CHECK_THROWS_AS(parse_sql("SELECT a.x FROM a;"), Error); }
    SUBCASE("non-equi join") {
        CHECK_THROWS_AS(parse_sql("SELECT * FROM a, b WHERE a.x < b.y;"), SemanticError);
    }
    SUBCASE("unknown table in predicate") {
        CHECK_THROWS_AS(parse_sql("SELECT * FROM a WHERE c.x = 1;"), SemanticError);
    }
    SUBCASE("syntax error carries a position") {
        try {
            parse_sql("SELECT * FROM a WHERE a.x = ;");
            FAIL("expected a parse error");
        } catch (const ParseError &e) {
            CHECK(e.line == 1);
            CHECK(e.column > 0);
        }
    }
}


/*======================================================================================================================
 * Canonical form and templates
 *====================================================================================================================*/

TEST_CASE("render_sql is a normalization fixpoint")
{
    const auto q = parse_sql(oracle::IMDB_SQL);
    const auto canon = render_sql(q);
    CHECK(canon ==
          "SELECT * FROM movie_companies, movie_info_idx, title WHERE movie_companies.company_type_id = 1 AND "
          "movie_companies.movie_id = title.movie_id AND movie_info_idx.movie_id = title.movie_id AND "
          "title.product_year < 1904 AND title.product_year > 58;");
    CHECK(render_sql(parse_sql(canon)) == canon);
    CHECK(sorted_tables(q) == std::vector<std::string>{"movie_companies", "movie_info_idx", "title"});
}

TEST_CASE("template_of")
{
    const auto q = parse_sql(oracle::IMDB_SQL);
    SUBCASE("selection literals are erased") {
        std::string other = oracle::IMDB_SQL;
        other.replace(other.find("1904"), 4, "1950");
        CHECK(template_of(q) == template_of(parse_sql(other)));
    }
    SUBCASE("permuting FROM list and conjuncts") {
        const auto p = parse_sql(
            "SELECT * FROM title, movie_info_idx, movie_companies WHERE title.product_year > 3 AND "
            "movie_info_idx.movie_id = title.movie_id AND movie_companies.movie_id = title.movie_id;");
        CHECK(template_of(q) == template_of(p));
        CHECK(template_of(q).key() == template_of(p).key());
    }
    SUBCASE("single table") { CHECK(template_of(parse_sql("SELECT * FROM t1;")).joins.empty()); }
    SUBCASE("one differing join predicate") {
        const auto a = parse_sql("SELECT * FROM a, b WHERE a.x = b.x;");
        const auto b = parse_sql("SELECT * FROM a, b WHERE a.x = b.y;");
        CHECK(template_of(a) != template_of(b));
        CHECK(template_of(a).key() != template_of(b).key());
    }
}
