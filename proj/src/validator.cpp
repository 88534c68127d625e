#include <llmqo/validator.hpp>

#include <algorithm>
#include <cctype>
#include <set>


namespace llmqo {

const char * to_string(InvalidClass c)
{
    switch (c) {
        case InvalidClass::E1_TableNumberMismatch: return "E1";
        case InvalidClass::E2_TableMismatch: return "E2";
        case InvalidClass::E3_OperatorMismatch: return "E3";
    }
    return "?";
}

std::string InvalidSet::to_string() const
{
    std::string s = "{";
    for (auto c : {InvalidClass::E1_TableNumberMismatch, InvalidClass::E2_TableMismatch,
                   InvalidClass::E3_OperatorMismatch})
    {
        if (not contains(c)) continue;
        if (s.size() > 1) s += ',';
        s += llmqo::to_string(c);
    }
    return s + '}';
}

std::string CorpusSummary::to_string() const
{
    return "E1=" + std::to_string(e1) + " E2=" + std::to_string(e2) + " E3=" + std::to_string(e3) +
           " total=" + std::to_string(invalid);
}

std::vector<std::string> scan_leaf_identifiers(std::string_view response)
{
    auto answer = extract_final_answer(response, true);
    const std::string_view text = answer ? std::string_view(*answer) : response;

    std::vector<std::string> leaves;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (not (std::isalpha(static_cast<unsigned char>(c)) or c == '_')) { ++i; continue; }
        const auto start = i;
        while (i < text.size() and (std::isalnum(static_cast<unsigned char>(text[i])) or text[i] == '_')) ++i;
        const auto ident = text.substr(start, i - start);
        auto j = i;
        while (j < text.size() and std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        const bool used_as_operator = j < text.size() and text[j] == '(';
        if (not used_as_operator and not join_op_from_string(ident))
            leaves.emplace_back(ident);
    }
    return leaves;
}

namespace {

/** Returns the first join node (as bracket text) whose inputs share no query predicate, if any. */
std::optional<std::string> find_cross_product(const Plan &plan, const QuerySpec &query)
{
    if (plan.is_scan())
        return std::nullopt;
    if (auto l = find_cross_product(plan.left(), query)) return l;
    if (auto r = find_cross_product(plan.right(), query)) return r;
    if (query.joins_between(plan.left().tables(), plan.right().tables()).empty())
        return to_bracket(plan);
    return std::nullopt;
}

void check_tables(const std::vector<std::string> &leaves, const QuerySpec &query, ValidationReport &report)
{
    const std::set<std::string> expected(query.tables.begin(), query.tables.end());
    const std::set<std::string> actual(leaves.begin(), leaves.end());

    if (leaves.size() != expected.size()) {
        report.errors.insert(InvalidClass::E1_TableNumberMismatch);
        report.detail.push_back("plan has " + std::to_string(leaves.size()) + " tables, query has " +
                                std::to_string(expected.size()));
    }
    std::vector<std::string> foreign;
    std::set_difference(actual.begin(), actual.end(), expected.begin(), expected.end(), std::back_inserter(foreign));
    if (not foreign.empty()) {
        report.errors.insert(InvalidClass::E2_TableMismatch);
        std::string names;
        for (auto &f : foreign) names += (names.empty() ? "" : ", ") + f;
        report.detail.push_back("tables not in query: " + names);
    } else if (leaves.size() == expected.size() and actual != expected) {
        report.errors.insert(InvalidClass::E2_TableMismatch);
        report.detail.push_back("plan repeats tables and omits others");
    }
}

}

ValidationReport validate(std::string_view response, const QuerySpec &query)
{
    ValidationReport report;
    try {
        report.plan = parse_response(response);
    } catch (const PlanError &e) {
        if (e.kind == PlanErrorKind::DuplicateTable) {
            /* Structurally sound but a table repeats: a table-count/table-set problem, not an operator one. */
            check_tables(scan_leaf_identifiers(response), query, report);
        } else {
            report.errors.insert(InvalidClass::E3_OperatorMismatch);
            report.detail.push_back(e.what());
            check_tables(scan_leaf_identifiers(response), query, report);
        }
        report.valid = report.errors.empty();
        return report;
    }

    check_tables(report.plan->tables(), query, report);
    if (report.errors.empty()) {
        if (auto node = find_cross_product(*report.plan, query)) {
            report.errors.insert(InvalidClass::E3_OperatorMismatch);
            report.detail.push_back("cross product at " + *node);
        }
    }
    report.valid = report.errors.empty();
    return report;
}

CorpusSummary classify_corpus(std::span<const ResponseCase> corpus)
{
    std::vector<InvalidSet> results(corpus.size());
    const auto n = static_cast<long>(corpus.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (long i = 0; i < n; ++i)
        results[i] = validate(corpus[i].response, corpus[i].query).errors;

    CorpusSummary summary;
    summary.total = corpus.size();
    for (auto &errors : results) {
        if (errors.empty()) continue;
        ++summary.invalid;
        summary.e1 += errors.contains(InvalidClass::E1_TableNumberMismatch);
        summary.e2 += errors.contains(InvalidClass::E2_TableMismatch);
        summary.e3 += errors.contains(InvalidClass::E3_OperatorMismatch);
    }
    return summary;
}

}
