#include <llmqo/hints.hpp>

#include <cctype>
#include <map>
#include <memory>
#include <vector>


namespace llmqo {

const char * hint_keyword(JoinOp op)
{
    switch (op) {
        case JoinOp::HashJoin: return "HashJoin";
        case JoinOp::MergeJoin: return "MergeJoin";
        case JoinOp::NestLoopJoin: return "NestLoop";
    }
    return "?";
}

namespace {

std::string leading(const Plan &p)
{
    if (p.is_scan()) return p.table();
    return "(" + leading(p.left()) + " " + leading(p.right()) + ")";
}

void methods(const Plan &p, std::string &out)
{
    if (p.is_scan()) return;
    methods(p.left(), out);
    methods(p.right(), out);
    out += ' ';
    out += hint_keyword(p.op());
    out += '(';
    const auto &tables = p.tables();
    for (std::size_t i = 0; i != tables.size(); ++i) {
        if (i) out += ' ';
        out += tables[i];
    }
    out += ')';
}

std::string key_of(const std::vector<std::string> &tables)
{
    std::string k;
    for (auto &t : tables) k += t + ' ';
    return k;
}

}

std::string emit_hints(const Plan &plan)
{
    if (plan.is_scan())
        throw PlanError(PlanErrorKind::SingleTablePlan, "a single-table plan needs no join hints");
    std::string out = "/*+ Leading(" + leading(plan) + ")";
    methods(plan, out);
    out += " */";
    return out;
}

namespace {

/*======================================================================================================================
 * Hint parser
 *====================================================================================================================*/

class HintParser
{
    std::string_view in_;
    std::size_t pos_ = 0;

    /** Join shape without operators: leaves or pairs. */
    struct Shape
    {
        std::string table;
        std::unique_ptr<Shape> left, right;
    };

    [[noreturn]] void fail(const std::string &what) const {
        throw ParseError("hint: " + what + " at offset " + std::to_string(pos_));
    }

    void skip_ws() { while (pos_ < in_.size() and std::isspace(static_cast<unsigned char>(in_[pos_]))) ++pos_; }

    bool eat(std::string_view s) {
        skip_ws();
        if (in_.substr(pos_, s.size()) != s) return false;
        pos_ += s.size();
        return true;
    }

    void expect(std::string_view s) {
        if (not eat(s)) fail("expected '" + std::string(s) + "'");
    }

    std::string ident() {
        skip_ws();
        const auto start = pos_;
        while (pos_ < in_.size() and (std::isalnum(static_cast<unsigned char>(in_[pos_])) or in_[pos_] == '_')) ++pos_;
        if (start == pos_) fail("expected an identifier");
        return std::string(in_.substr(start, pos_ - start));
    }

    std::unique_ptr<Shape> shape() {
        auto s = std::make_unique<Shape>();
        if (eat("(")) {
            s->left = shape();
            s->right = shape();
            expect(")");
        } else {
            s->table = ident();
        }
        return s;
    }

    Plan build(const Shape &s, std::map<std::string, JoinOp> &ops) const {
        if (not s.left) return Plan::scan(s.table);
        Plan l = build(*s.left, ops), r = build(*s.right, ops);
        auto tables = l.tables();
        tables.insert(tables.end(), r.tables().begin(), r.tables().end());
        auto it = ops.find(key_of(tables));
        if (it == ops.end())
            throw ParseError("hint: no method hint for the join of " + key_of(tables));
        const auto op = it->second;
        ops.erase(it);
        return Plan::join(op, std::move(l), std::move(r));
    }

    public:
    explicit HintParser(std::string_view in) : in_(in) { }

    Plan parse() {
        skip_ws();
        if (pos_ == in_.size()) fail("empty hint");
        expect("/*+");
        expect("Leading");
        expect("(");
        auto tree = shape();
        expect(")");
        if (not tree->left) fail("Leading clause names a single table");

        std::map<std::string, JoinOp> ops;
        for (;;) {
            if (eat("*/")) break;
            const auto keyword = ident();
            JoinOp op;
            if (keyword == "HashJoin") op = JoinOp::HashJoin;
            else if (keyword == "MergeJoin") op = JoinOp::MergeJoin;
            else if (keyword == "NestLoop") op = JoinOp::NestLoopJoin;
            else fail("unknown hint keyword '" + keyword + "'");
            expect("(");
            std::vector<std::string> tables;
            while (not eat(")")) tables.push_back(ident());
            if (tables.size() < 2) fail("method hint needs at least two tables");
            if (not ops.emplace(key_of(tables), op).second) fail("duplicate method hint");
        }
        skip_ws();
        if (pos_ != in_.size()) fail("trailing text after the hint comment");

        Plan plan = build(*tree, ops);
        if (not ops.empty())
            throw ParseError("hint: method hint '" + ops.begin()->first + "' matches no join node");
        return plan;
    }
};

}

Plan parse_hints(std::string_view text) { return HintParser(text).parse(); }

std::string hinted_sql(const Plan &plan, std::string_view sql)
{
    return emit_hints(plan) + "\n" + std::string(sql);
}

}
