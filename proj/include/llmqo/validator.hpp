#pragma once

#include <llmqo/plan.hpp>
#include <llmqo/sql.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>


namespace llmqo {

/** Invalid-plan classes.  They are not exclusive; a report carries a set. */
enum class InvalidClass : unsigned
{
    E1_TableNumberMismatch = 1u << 0,
    E2_TableMismatch = 1u << 1,
    E3_OperatorMismatch = 1u << 2,
};

const char * to_string(InvalidClass c);

class InvalidSet
{
    unsigned bits_ = 0;

    public:
    InvalidSet() = default;
    InvalidSet(std::initializer_list<InvalidClass> classes) { for (auto c : classes) insert(c); }

    void insert(InvalidClass c) { bits_ |= unsigned(c); }
    bool contains(InvalidClass c) const { return bits_ & unsigned(c); }
    bool empty() const { return bits_ == 0; }

    std::string to_string() const; ///< e.g. `{E1,E3}`

    friend bool operator==(InvalidSet, InvalidSet) = default;
};

struct ValidationReport
{
    bool valid = false;
    InvalidSet errors;
    std::vector<std::string> detail;
    std::optional<Plan> plan; ///< present whenever the final answer decodes
};

/** Checks a generated response against its query.
 *
 * - E1: the number of leaf tables differs from the number of query tables.
 * - E2: a leaf is not a query table, or the count matches but the table sets differ.
 * - E3: the final answer does not decode structurally, or (when the table sets match) some join combines inputs
 *   that no query predicate connects ("cross product").
 *
 * When the answer does not decode, leaves are recovered by scanning identifiers so that E1/E2 can still surface. */
ValidationReport validate(std::string_view response, const QuerySpec &query);

struct CorpusSummary
{
    std::size_t e1 = 0;
    std::size_t e2 = 0;
    std::size_t e3 = 0;
    std::size_t invalid = 0;
    std::size_t total = 0;

    std::string to_string() const; ///< `E1=<n> E2=<n> E3=<n> total=<n>`, total counting invalid responses

    friend bool operator==(const CorpusSummary&, const CorpusSummary&) = default;
};

struct ResponseCase
{
    std::string response;
    QuerySpec query;
};

CorpusSummary classify_corpus(std::span<const ResponseCase> corpus);

/** Identifiers in the final answer (or the whole text if there is none) that are not used as operators. */
std::vector<std::string> scan_leaf_identifiers(std::string_view response);

}
