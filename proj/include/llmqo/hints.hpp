#pragma once

#include <llmqo/plan.hpp>
#include <string>


namespace llmqo {

/** Method keyword of the hint extension: `HashJoin`, `MergeJoin` or `NestLoop`. */
const char * hint_keyword(JoinOp op);

/** `/*+ Leading(<nested>) <method hints> *\/`.  The nested clause parenthesizes the leaves by tree shape; one method
 * hint per join node, in post-order, listing that node's tables left to right.  Throws `PlanError(SingleTablePlan)`. */
std::string emit_hints(const Plan &plan);

/** Inverse of `emit_hints`.  Throws `ParseError` on empty or malformed text and unknown keywords, and when the
 * method hints do not cover the join nodes exactly. */
Plan parse_hints(std::string_view text);

/** Hint comment, a line break, then the SQL text. */
std::string hinted_sql(const Plan &plan, std::string_view sql);

}
