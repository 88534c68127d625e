#pragma once

#include <cstdint>
#include <llmqo/common.hpp>
#include <string>
#include <vector>


namespace llmqo {

/** Unsupported but well-formed SQL: disconnected join graphs, self-joins, non-equi joins, OR/IN/LIKE, ... */
struct SemanticError : Error
{
    using Error::Error;
};

/** Equi-join `left_table.left_column = right_table.right_column`, stored with the lexicographically smaller side
 * first so that equal predicates compare equal regardless of how they were written. */
struct JoinPredicate
{
    std::string left_table;
    std::string left_column;
    std::string right_table;
    std::string right_column;

    static JoinPredicate make(std::string ta, std::string ca, std::string tb, std::string cb);

    bool connects(std::string_view a, std::string_view b) const {
        return (left_table == a and right_table == b) or (left_table == b and right_table == a);
    }

    std::string to_string() const;

    friend auto operator<=>(const JoinPredicate&, const JoinPredicate&) = default;
};

enum class CmpOp { Lt, Gt, Eq, Le, Ge };

const char * to_string(CmpOp op);

struct Selection
{
    std::string table;
    std::string column;
    CmpOp op;
    int64_t literal;

    std::string to_string() const;

    friend auto operator<=>(const Selection&, const Selection&) = default;
};

/** A parsed select-project-join query.  `tables` keeps FROM-list order. */
struct QuerySpec
{
    std::vector<std::string> tables;
    std::vector<JoinPredicate> joins;
    std::vector<Selection> selections;
    std::string raw_sql;

    bool has_table(std::string_view t) const;
    /** Join predicates with one side in `a` and the other in `b`. */
    std::vector<const JoinPredicate*> joins_between(const std::vector<std::string> &a,
                                                    const std::vector<std::string> &b) const;
};

/** Tables plus join predicates, both sorted; selections erased. */
struct QueryTemplate
{
    std::vector<std::string> tables;
    std::vector<JoinPredicate> joins;

    /** Stable textual key, e.g. for hashing into the model's context. */
    std::string key() const;

    friend auto operator<=>(const QueryTemplate&, const QueryTemplate&) = default;
};

/** Parses `SELECT * FROM t1, ... [WHERE p1 AND ...][;]`.  Throws `ParseError` for syntax errors (with position) and
 * `SemanticError` for unsupported constructs or a disconnected join graph. */
QuerySpec parse_sql(std::string_view text);

/** Canonical SQL: FROM list and WHERE conjuncts sorted, single spaces, trailing `;`. */
std::string render_sql(const QuerySpec &query);

/** FROM list of the canonical rendering (sorted). */
std::vector<std::string> sorted_tables(const QuerySpec &query);

QueryTemplate template_of(const QuerySpec &query);

/** Checks the QuerySpec invariants (distinct tables, joins over known distinct tables, connected join graph). */
void check_query(const QuerySpec &query);

}
