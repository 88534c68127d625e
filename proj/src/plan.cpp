#include <llmqo/plan.hpp>

#include <algorithm>
#include <cctype>


namespace llmqo {

const char * to_string(JoinOp op)
{
    switch (op) {
        case JoinOp::HashJoin: return "HashJoin";
        case JoinOp::MergeJoin: return "MergeJoin";
        case JoinOp::NestLoopJoin: return "NestLoopJoin";
    }
    return "?";
}

std::optional<JoinOp> join_op_from_string(std::string_view name)
{
    for (auto op : ALL_JOIN_OPS)
        if (name == to_string(op)) return op;
    return std::nullopt;
}

const char * to_string(PlanErrorKind kind)
{
    switch (kind) {
        case PlanErrorKind::UnbalancedBracket: return "UnbalancedBracket";
        case PlanErrorKind::UnknownOperator: return "UnknownOperator";
        case PlanErrorKind::MissingOperand: return "MissingOperand";
        case PlanErrorKind::RedundantOperand: return "RedundantOperand";
        case PlanErrorKind::UnexpectedToken: return "UnexpectedToken";
        case PlanErrorKind::DuplicateTable: return "DuplicateTable";
        case PlanErrorKind::SingleTablePlan: return "SingleTablePlan";
        case PlanErrorKind::DanglingReference: return "DanglingReference";
        case PlanErrorKind::ReusedIntermediate: return "ReusedIntermediate";
        case PlanErrorKind::StepCountMismatch: return "StepCountMismatch";
        case PlanErrorKind::MissingFinalAnswer: return "MissingFinalAnswer";
    }
    return "?";
}


/*======================================================================================================================
 * Plan
 *====================================================================================================================*/

struct Plan::Node
{
    std::string table;
    JoinOp op = JoinOp::HashJoin;
    std::vector<Plan> children; ///< empty for scans, {left, right} for joins
    std::vector<std::string> tables;
};

Plan Plan::scan(std::string table)
{
    auto node = std::make_shared<Node>();
    node->tables.push_back(table);
    node->table = std::move(table);
    return Plan(std::move(node));
}

Plan Plan::join(JoinOp op, Plan left, Plan right)
{
    auto node = std::make_shared<Node>();
    node->op = op;
    node->tables = left.tables();
    for (auto &t : right.tables()) {
        if (std::find(node->tables.begin(), node->tables.end(), t) != node->tables.end())
            throw PlanError(PlanErrorKind::DuplicateTable, "table '" + t + "' occurs more than once");
        node->tables.push_back(t);
    }
    node->children.push_back(std::move(left));
    node->children.push_back(std::move(right));
    return Plan(std::move(node));
}

bool Plan::is_scan() const { return node_->children.empty(); }
const std::string & Plan::table() const { return node_->table; }
JoinOp Plan::op() const { return node_->op; }
const Plan & Plan::left() const { return node_->children[0]; }
const Plan & Plan::right() const { return node_->children[1]; }
const std::vector<std::string> & Plan::tables() const { return node_->tables; }

bool operator==(const Plan &a, const Plan &b)
{
    if (a.node_ == b.node_) return true;
    if (a.is_scan() != b.is_scan()) return false;
    if (a.is_scan()) return a.table() == b.table();
    return a.op() == b.op() and a.left() == b.left() and a.right() == b.right();
}


/*======================================================================================================================
 * Bracket form
 *====================================================================================================================*/

namespace {

void append_bracket(const Plan &plan, std::string &out)
{
    if (plan.is_scan()) {
        out += plan.table();
        return;
    }
    out += to_string(plan.op());
    out += '(';
    append_bracket(plan.left(), out);
    out += ' ';
    append_bracket(plan.right(), out);
    out += ')';
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) or c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) or c == '_'; }

class BracketParser
{
    enum class Tok { Ident, LParen, RParen, End, Other };

    struct Token
    {
        Tok kind;
        std::string_view text;
    };

    std::string_view text_;
    std::size_t pos_ = 0;
    Token current_;
    unsigned depth_ = 0;
    std::optional<PlanError> duplicate_;

    public:
    explicit BracketParser(std::string_view text) : text_(text) { current_ = lex(); }

    Plan parse() {
        Plan plan = parse_operand();
        switch (current_.kind) {
            case Tok::End:
                if (duplicate_) throw *duplicate_;
                return plan;
            case Tok::RParen: fail(PlanErrorKind::UnbalancedBracket, "unmatched ')'");
            case Tok::Ident:
            case Tok::LParen: fail(PlanErrorKind::RedundantOperand, "text after the complete plan");
            case Tok::Other: fail(PlanErrorKind::UnexpectedToken, "unexpected '" + std::string(current_.text) + "'");
        }
        return plan;
    }

    private:
    [[noreturn]] void fail(PlanErrorKind kind, const std::string &detail) const {
        throw PlanError(kind, detail + " at offset " + std::to_string(pos_));
    }

    Token lex() {
        while (pos_ < text_.size() and std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        if (pos_ == text_.size()) return {Tok::End, {}};
        const auto start = pos_;
        const char c = text_[pos_++];
        if (c == '(') return {Tok::LParen, text_.substr(start, 1)};
        if (c == ')') return {Tok::RParen, text_.substr(start, 1)};
        if (is_ident_start(c)) {
            while (pos_ < text_.size() and is_ident_char(text_[pos_])) ++pos_;
            return {Tok::Ident, text_.substr(start, pos_ - start)};
        }
        return {Tok::Other, text_.substr(start, 1)};
    }

    void advance() { current_ = lex(); }

    Plan parse_operand() {
        switch (current_.kind) {
            case Tok::End:
                if (depth_) fail(PlanErrorKind::UnbalancedBracket, "missing ')'");
                fail(PlanErrorKind::MissingOperand, "empty plan");
            case Tok::RParen:
                if (depth_) fail(PlanErrorKind::MissingOperand, "operator has fewer than two operands");
                fail(PlanErrorKind::UnbalancedBracket, "unmatched ')'");
            case Tok::LParen:
                fail(PlanErrorKind::UnknownOperator, "'(' without a join operator");
            case Tok::Other:
                fail(PlanErrorKind::UnexpectedToken, "unexpected '" + std::string(current_.text) + "'");
            case Tok::Ident:
                break;
        }

        const std::string name(current_.text);
        advance();
        if (current_.kind != Tok::LParen) {
            if (join_op_from_string(name))
                fail(PlanErrorKind::MissingOperand, "operator " + name + " without operands");
            return Plan::scan(name);
        }

        const auto op = join_op_from_string(name);
        if (not op)
            fail(PlanErrorKind::UnknownOperator, "unknown join operator '" + name + "'");
        advance();
        ++depth_;
        Plan left = parse_operand();
        Plan right = parse_operand();
        switch (current_.kind) {
            case Tok::RParen: break;
            case Tok::End: fail(PlanErrorKind::UnbalancedBracket, "missing ')'");
            case Tok::Ident:
            case Tok::LParen: fail(PlanErrorKind::RedundantOperand, "operator " + name + " has more than two operands");
            case Tok::Other: fail(PlanErrorKind::UnexpectedToken, "unexpected '" + std::string(current_.text) + "'");
        }
        --depth_;
        advance();
        try {
            return Plan::join(*op, left, std::move(right));
        } catch (const PlanError &e) {
            /* Keep going so that structural errors later in the text take precedence. */
            if (not duplicate_) duplicate_ = e;
            return left;
        }
    }
};

}

std::string to_bracket(const Plan &plan)
{
    std::string out;
    append_bracket(plan, out);
    return out;
}

Plan parse_bracket(std::string_view text) { return BracketParser(text).parse(); }


/*======================================================================================================================
 * Planning path
 *====================================================================================================================*/

namespace {

std::string collect_steps(const Plan &plan, std::vector<PlanStep> &steps)
{
    if (plan.is_scan())
        return plan.table();
    auto left = collect_steps(plan.left(), steps);
    auto right = collect_steps(plan.right(), steps);
    steps.push_back({std::move(left), std::move(right), plan.op()});
    return to_bracket(plan);
}

}

PlanningPath to_path(const Plan &plan)
{
    if (plan.is_scan())
        throw PlanError(PlanErrorKind::SingleTablePlan, "a single-table plan has no join steps");
    PlanningPath path;
    path.steps.reserve(plan.num_joins());
    collect_steps(plan, path.steps);
    return path;
}

Plan from_path(const PlanningPath &path)
{
    if (path.steps.empty())
        throw PlanError(PlanErrorKind::StepCountMismatch, "planning path has no steps");

    struct Completed
    {
        std::string bracket;
        Plan plan;
        bool used;
    };
    std::vector<Completed> completed;

    const auto resolve = [&](std::string_view raw, std::size_t step) -> Plan {
        const auto operand = trim(raw);
        const auto where = " in step " + std::to_string(step + 1);
        if (operand.find('(') == std::string_view::npos) {
            if (operand.empty() or not is_ident_start(operand[0]) or
                not std::all_of(operand.begin(), operand.end(), is_ident_char))
                throw PlanError(PlanErrorKind::DanglingReference, "operand '" + std::string(operand) + "'" + where);
            return Plan::scan(std::string(operand));
        }
        std::string canonical;
        try {
            canonical = to_bracket(parse_bracket(operand));
        } catch (const PlanError &e) {
            throw PlanError(PlanErrorKind::DanglingReference,
                            "operand '" + std::string(operand) + "'" + where + " is not a plan (" + e.what() + ")");
        }
        for (auto &c : completed) {
            if (c.bracket != canonical) continue;
            if (c.used)
                throw PlanError(PlanErrorKind::ReusedIntermediate, "'" + canonical + "'" + where);
            c.used = true;
            return c.plan;
        }
        throw PlanError(PlanErrorKind::DanglingReference,
                        "operand '" + canonical + "'" + where + " matches no earlier step");
    };

    for (std::size_t i = 0; i != path.steps.size(); ++i) {
        const auto &step = path.steps[i];
        Plan left = resolve(step.left, i);
        Plan right = resolve(step.right, i);
        Plan joined = Plan::join(step.op, std::move(left), std::move(right));
        completed.push_back({to_bracket(joined), std::move(joined), false});
    }
    for (std::size_t i = 0; i + 1 < completed.size(); ++i)
        if (not completed[i].used)
            throw PlanError(PlanErrorKind::StepCountMismatch,
                            "step " + std::to_string(i + 1) + " is never consumed by a later step");
    return completed.back().plan;
}


/*======================================================================================================================
 * Response
 *====================================================================================================================*/

std::string render_response(const Plan &plan)
{
    const auto path = to_path(plan);
    std::string out;
    for (std::size_t i = 0; i != path.steps.size(); ++i) {
        const auto &s = path.steps[i];
        out += "Step" + std::to_string(i + 1) + ": [" + s.left + ", " + s.right + ", " + to_string(s.op) + "],\n";
    }
    out += "\nTherefore, ";
    out += FINAL_ANSWER_MARKER;
    out += '\n';
    out += to_bracket(plan);
    out += '.';
    return out;
}

std::optional<std::string> extract_final_answer(std::string_view text, bool lenient)
{
    std::string_view answer;
    if (const auto pos = text.rfind(FINAL_ANSWER_MARKER); pos != std::string_view::npos) {
        answer = text.substr(pos + FINAL_ANSWER_MARKER.size());
    } else if (lenient) {
        auto rest = trim(text);
        const auto nl = rest.rfind('\n');
        answer = nl == std::string_view::npos ? rest : rest.substr(nl + 1);
    } else {
        return std::nullopt;
    }
    answer = trim(answer);
    if (not answer.empty() and answer.back() == '.') {
        answer.remove_suffix(1);
        answer = trim(answer);
    }
    if (answer.empty())
        return std::nullopt;
    return std::string(answer);
}

Plan parse_response(std::string_view text, bool lenient)
{
    auto answer = extract_final_answer(text, lenient);
    if (not answer)
        throw PlanError(PlanErrorKind::MissingFinalAnswer, "response has no final answer");
    return parse_bracket(*answer);
}

}
