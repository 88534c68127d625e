#pragma once

#include <llmqo/common.hpp>
#include <memory>
#include <optional>
#include <string>
#include <vector>


namespace llmqo {

enum class JoinOp { HashJoin, MergeJoin, NestLoopJoin };

inline constexpr JoinOp ALL_JOIN_OPS[] = {JoinOp::HashJoin, JoinOp::MergeJoin, JoinOp::NestLoopJoin};

const char * to_string(JoinOp op);
std::optional<JoinOp> join_op_from_string(std::string_view name);

/** Reasons a textual plan fails to decode.  The first four are the structural mistakes counted as operator
 * mismatches by the validator. */
enum class PlanErrorKind
{
    UnbalancedBracket,
    UnknownOperator,
    MissingOperand,
    RedundantOperand,
    UnexpectedToken,
    DuplicateTable,
    SingleTablePlan,
    DanglingReference,
    ReusedIntermediate,
    StepCountMismatch,
    MissingFinalAnswer,
};

const char * to_string(PlanErrorKind kind);

struct PlanError : Error
{
    PlanErrorKind kind;

    PlanError(PlanErrorKind kind, const std::string &detail)
        : Error(std::string(to_string(kind)) + ": " + detail)
        , kind(kind)
    { }
};

/** Immutable binary physical plan: sequential scans at the leaves, one of three join operators at inner nodes.
 * Copies share structure.  Leaves are pairwise distinct tables. */
class Plan
{
    struct Node;
    std::shared_ptr<const Node> node_;

    explicit Plan(std::shared_ptr<const Node> node) : node_(std::move(node)) { }

    public:
    static Plan scan(std::string table);
    /** Throws `PlanError(DuplicateTable)` if the two inputs share a table. */
    static Plan join(JoinOp op, Plan left, Plan right);

    bool is_scan() const;
    const std::string & table() const;  ///< scan only
    JoinOp op() const;                  ///< join only
    const Plan & left() const;          ///< join only
    const Plan & right() const;         ///< join only

    /** Leaf tables, left to right. */
    const std::vector<std::string> & tables() const;
    std::size_t num_joins() const { return tables().size() - 1; }

    friend bool operator==(const Plan &a, const Plan &b);
};

/** `Op(left right)`; scans render as the bare table name. */
std::string to_bracket(const Plan &plan);

/** Total parser for bracket sequences.  Accepts arbitrary whitespace between tokens (including before `(`). */
Plan parse_bracket(std::string_view text);

/** One join node: two operands (table name or the bracket form of an earlier step) and the operator. */
struct PlanStep
{
    std::string left;
    std::string right;
    JoinOp op;

    friend bool operator==(const PlanStep&, const PlanStep&) = default;
};

struct PlanningPath
{
    std::vector<PlanStep> steps; ///< post-order over join nodes, left subtree first

    friend bool operator==(const PlanningPath&, const PlanningPath&) = default;
};

PlanningPath to_path(const Plan &plan);
Plan from_path(const PlanningPath &path);

inline constexpr std::string_view FINAL_ANSWER_MARKER = "the final answer is:";

/** Steps as `Step{i}: [opd1, opd2, opt],` lines, a blank line, then `Therefore, the final answer is:` and the
 * bracket form followed by a period. */
std::string render_response(const Plan &plan);

/** Decodes the bracket after the last final-answer marker.  With `lenient`, a response without marker falls back
 * to its last non-empty line. */
Plan parse_response(std::string_view text, bool lenient = false);

/** The text `parse_response` would hand to the bracket parser; `std::nullopt` when there is none. */
std::optional<std::string> extract_final_answer(std::string_view text, bool lenient = false);

}
