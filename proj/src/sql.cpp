#include <llmqo/sql.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <set>


namespace llmqo {

/*======================================================================================================================
 * Predicates
 *====================================================================================================================*/

JoinPredicate JoinPredicate::make(std::string ta, std::string ca, std::string tb, std::string cb)
{
    if (std::tie(tb, cb) < std::tie(ta, ca)) {
        std::swap(ta, tb);
        std::swap(ca, cb);
    }
    return {std::move(ta), std::move(ca), std::move(tb), std::move(cb)};
}

std::string JoinPredicate::to_string() const
{
    return left_table + '.' + left_column + " = " + right_table + '.' + right_column;
}

const char * to_string(CmpOp op)
{
    switch (op) {
        case CmpOp::Lt: return "<";
        case CmpOp::Gt: return ">";
        case CmpOp::Eq: return "=";
        case CmpOp::Le: return "<=";
        case CmpOp::Ge: return ">=";
    }
    return "?";
}

std::string Selection::to_string() const
{
    return table + '.' + column + ' ' + llmqo::to_string(op) + ' ' + std::to_string(literal);
}

bool QuerySpec::has_table(std::string_view t) const
{
    return std::find(tables.begin(), tables.end(), t) != tables.end();
}

std::vector<const JoinPredicate*> QuerySpec::joins_between(const std::vector<std::string> &a,
                                                           const std::vector<std::string> &b) const
{
    const auto in = [](const std::vector<std::string> &set, const std::string &t) {
        return std::find(set.begin(), set.end(), t) != set.end();
    };
    std::vector<const JoinPredicate*> result;
    for (auto &j : joins) {
        if ((in(a, j.left_table) and in(b, j.right_table)) or (in(b, j.left_table) and in(a, j.right_table)))
            result.push_back(&j);
    }
    return result;
}

std::string QueryTemplate::key() const
{
    std::string k;
    for (auto &t : tables)
        k += t + ',';
    k += '|';
    for (auto &j : joins)
        k += j.to_string() + ';';
    return k;
}


/*======================================================================================================================
 * Lexer
 *====================================================================================================================*/

namespace {

enum class Tok { Ident, Int, Star, Comma, Dot, Semicolon, Op, LParen, RParen, String, End, Bad };

struct Token
{
    Tok kind;
    std::string text;
    std::size_t pos;
};

std::vector<Token> lex(std::string_view s)
{
    std::vector<Token> tokens;
    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (std::isspace(static_cast<unsigned char>(c))) { ++i; continue; }
        const std::size_t start = i;
        if (std::isalpha(static_cast<unsigned char>(c)) or c == '_') {
            while (i < s.size() and (std::isalnum(static_cast<unsigned char>(s[i])) or s[i] == '_')) ++i;
            tokens.push_back({Tok::Ident, std::string(s.substr(start, i - start)), start});
        } else if (std::isdigit(static_cast<unsigned char>(c)) or
                   ((c == '-' or c == '+') and i + 1 < s.size() and std::isdigit(static_cast<unsigned char>(s[i + 1]))))
        {
            ++i;
            while (i < s.size() and std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
            if (i < s.size() and (s[i] == '.' or std::isalpha(static_cast<unsigned char>(s[i])))) {
                while (i < s.size() and (std::isalnum(static_cast<unsigned char>(s[i])) or s[i] == '.')) ++i;
                tokens.push_back({Tok::Bad, std::string(s.substr(start, i - start)), start});
            } else {
                tokens.push_back({Tok::Int, std::string(s.substr(start, i - start)), start});
            }
        } else if (c == '\'' or c == '"') {
            ++i;
            while (i < s.size() and s[i] != c) ++i;
            if (i < s.size()) ++i;
            tokens.push_back({Tok::String, std::string(s.substr(start, i - start)), start});
        } else if (c == '<' or c == '>' or c == '=' or c == '!') {
            ++i;
            if (i < s.size() and (s[i] == '=' or (c == '<' and s[i] == '>'))) ++i;
            tokens.push_back({Tok::Op, std::string(s.substr(start, i - start)), start});
        } else {
            ++i;
            Tok kind = Tok::Bad;
            switch (c) {
                case '*': kind = Tok::Star; break;
                case ',': kind = Tok::Comma; break;
                case '.': kind = Tok::Dot; break;
                case ';': kind = Tok::Semicolon; break;
                case '(': kind = Tok::LParen; break;
                case ')': kind = Tok::RParen; break;
            }
            tokens.push_back({kind, std::string(1, c), start});
        }
    }
    tokens.push_back({Tok::End, "", s.size()});
    return tokens;
}

bool keyword_is(const Token &t, std::string_view kw)
{
    if (t.kind != Tok::Ident or t.text.size() != kw.size())
        return false;
    for (std::size_t i = 0; i != kw.size(); ++i)
        if (std::toupper(static_cast<unsigned char>(t.text[i])) != kw[i]) return false;
    return true;
}

bool is_reserved(const Token &t)
{
    for (auto kw : {"SELECT", "FROM", "WHERE", "AND", "OR", "NOT", "IN", "LIKE", "BETWEEN", "AS", "JOIN", "ON",
                    "GROUP", "ORDER", "BY", "HAVING", "UNION", "LIMIT", "IS", "NULL"})
        if (keyword_is(t, kw)) return true;
    return false;
}

class Parser
{
    std::string_view text_;
    std::vector<Token> tokens_;
    std::size_t pos_ = 0;

    public:
    explicit Parser(std::string_view text) : text_(text), tokens_(lex(text)) { }

    QuerySpec parse() {
        QuerySpec q;
        q.raw_sql = std::string(text_);
        expect_keyword("SELECT");
        if (peek().kind != Tok::Star)
            semantic("only SELECT * is supported");
        advance();
        expect_keyword("FROM");
        for (;;) {
            q.tables.push_back(expect_identifier("table name"));
            if (peek().kind == Tok::Ident and not is_reserved(peek()))
                semantic("table aliases are not supported");
            if (peek().kind != Tok::Comma) break;
            advance();
        }
        if (keyword_is(peek(), "WHERE")) {
            advance();
            for (;;) {
                parse_predicate(q);
                if (keyword_is(peek(), "AND")) { advance(); continue; }
                if (keyword_is(peek(), "OR"))
                    semantic("disjunctions (OR) are not supported");
                break;
            }
        }
        if (peek().kind == Tok::Semicolon) advance();
        if (peek().kind != Tok::End) {
            if (is_reserved(peek()))
                semantic("unsupported construct '" + peek().text + "'");
            error("unexpected '" + peek().text + "'");
        }
        check_query(q);
        return q;
    }

    private:
    const Token & peek() const { return tokens_[pos_]; }
    const Token & advance() { return tokens_[pos_ < tokens_.size() - 1 ? pos_++ : pos_]; }

    [[noreturn]] void error(const std::string &msg) const {
        const auto offset = peek().pos;
        std::size_t line = 1, column = 1;
        for (std::size_t i = 0; i < offset and i < text_.size(); ++i) {
            if (text_[i] == '\n') { ++line; column = 1; }
            else ++column;
        }
        throw ParseError("SQL syntax error: " + msg, line, column);
    }

    [[noreturn]] void semantic(const std::string &msg) const { throw SemanticError(msg); }

    void expect_keyword(std::string_view kw) {
        if (not keyword_is(peek(), kw))
            error("expected " + std::string(kw));
        advance();
    }

    std::string expect_identifier(const char *what) {
        if (peek().kind != Tok::Ident or is_reserved(peek()))
            error(std::string("expected ") + what);
        return advance().text;
    }

    std::pair<std::string, std::string> parse_column_ref() {
        auto table = expect_identifier("table name");
        if (peek().kind != Tok::Dot)
            error("expected '.' in column reference (qualified columns are required)");
        advance();
        auto column = expect_identifier("column name");
        return {std::move(table), std::move(column)};
    }

    void parse_predicate(QuerySpec &q) {
        if (peek().kind == Tok::LParen)
            semantic("parenthesized predicates are not supported");
        if (keyword_is(peek(), "NOT"))
            semantic("negated predicates are not supported");
        if (peek().kind == Tok::Int or peek().kind == Tok::String)
            error("predicates must start with a column reference");
        auto [table, column] = parse_column_ref();
        if (keyword_is(peek(), "IN") or keyword_is(peek(), "LIKE") or keyword_is(peek(), "BETWEEN") or
            keyword_is(peek(), "IS"))
            semantic("unsupported predicate '" + peek().text + "'");
        if (peek().kind != Tok::Op)
            error("expected comparison operator");
        const auto op_text = advance().text;
        CmpOp op;
        if (op_text == "<") op = CmpOp::Lt;
        else if (op_text == ">") op = CmpOp::Gt;
        else if (op_text == "=") op = CmpOp::Eq;
        else if (op_text == "<=") op = CmpOp::Le;
        else if (op_text == ">=") op = CmpOp::Ge;
        else semantic("unsupported comparison operator '" + op_text + "'");

        if (not q.has_table(table))
            semantic("table '" + table + "' is not in the FROM list");

        const auto &rhs = peek();
        if (rhs.kind == Tok::Ident and not is_reserved(rhs)) {
            auto [table2, column2] = parse_column_ref();
            if (op != CmpOp::Eq)
                semantic("non-equi join predicates are not supported");
            if (not q.has_table(table2))
                semantic("table '" + table2 + "' is not in the FROM list");
            if (table == table2)
                semantic("predicate comparing two columns of '" + table + "' is not supported");
            auto jp = JoinPredicate::make(table, column, table2, column2);
            if (std::find(q.joins.begin(), q.joins.end(), jp) == q.joins.end())
                q.joins.push_back(std::move(jp));
        } else if (rhs.kind == Tok::Int) {
            int64_t value{};
            const auto &t = advance().text;
            const char *first = t.data() + (t[0] == '+' ? 1 : 0);
            const auto [end, ec] = std::from_chars(first, t.data() + t.size(), value);
            if (ec != std::errc{} or end != t.data() + t.size())
                semantic("integer literal out of range: " + t);
            q.selections.push_back({std::move(table), std::move(column), op, value});
        } else if (rhs.kind == Tok::String or rhs.kind == Tok::Bad) {
            semantic("non-integer literal " + rhs.text);
        } else {
            error("expected column reference or integer literal");
        }
    }
};

}


/*======================================================================================================================
 * QuerySpec operations
 *====================================================================================================================*/

void check_query(const QuerySpec &q)
{
    if (q.tables.empty())
        throw SemanticError("query has no tables");
    std::set<std::string> tables(q.tables.begin(), q.tables.end());
    if (tables.size() != q.tables.size())
        throw SemanticError("a table appears more than once in FROM (self-joins are not supported)");
    for (auto &j : q.joins) {
        if (not tables.contains(j.left_table) or not tables.contains(j.right_table))
            throw SemanticError("join predicate " + j.to_string() + " references a table outside FROM");
        if (j.left_table == j.right_table)
            throw SemanticError("join predicate " + j.to_string() + " is a self-join");
    }
    for (auto &s : q.selections)
        if (not tables.contains(s.table))
            throw SemanticError("selection " + s.to_string() + " references a table outside FROM");

    /* Connectivity by flood fill over join predicates. */
    std::set<std::string> reached{q.tables.front()};
    for (bool grown = true; grown; ) {
        grown = false;
        for (auto &j : q.joins) {
            const bool l = reached.contains(j.left_table), r = reached.contains(j.right_table);
            if (l != r) {
                reached.insert(l ? j.right_table : j.left_table);
                grown = true;
            }
        }
    }
    if (reached.size() != tables.size())
        throw SemanticError("disconnected join graph (cross products are not supported)");
}

QuerySpec parse_sql(std::string_view text) { return Parser(text).parse(); }

std::vector<std::string> sorted_tables(const QuerySpec &query)
{
    auto tables = query.tables;
    std::sort(tables.begin(), tables.end());
    return tables;
}

std::string render_sql(const QuerySpec &query)
{
    std::string sql = "SELECT * FROM ";
    const auto tables = sorted_tables(query);
    for (std::size_t i = 0; i != tables.size(); ++i)
        sql += (i ? ", " : "") + tables[i];

    std::vector<std::string> conjuncts;
    for (auto &j : query.joins)
        conjuncts.push_back(j.to_string());
    for (auto &s : query.selections)
        conjuncts.push_back(s.to_string());
    std::sort(conjuncts.begin(), conjuncts.end());
    conjuncts.erase(std::unique(conjuncts.begin(), conjuncts.end()), conjuncts.end());
    for (std::size_t i = 0; i != conjuncts.size(); ++i)
        sql += (i ? " AND " : " WHERE ") + conjuncts[i];
    sql += ';';
    return sql;
}

QueryTemplate template_of(const QuerySpec &query)
{
    QueryTemplate t{sorted_tables(query), query.joins};
    std::sort(t.joins.begin(), t.joins.end());
    t.joins.erase(std::unique(t.joins.begin(), t.joins.end()), t.joins.end());
    return t;
}

}
