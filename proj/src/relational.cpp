#include <llmqo/relational.hpp>

#include <algorithm>
#include <charconv>
#include <set>
#include <unordered_set>


namespace llmqo {

namespace {

bool is_identifier(std::string_view s)
{
    if (s.empty() or not (std::isalpha(static_cast<unsigned char>(s[0])) or s[0] == '_'))
        return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) or c == '_';
    });
}

template<typename Int>
Int parse_int(std::string_view field, std::size_t line, std::size_t column, const char *what)
{
    Int value{};
    field = trim(field);
    const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} or end != field.data() + field.size())
        throw ParseError(std::string("expected integer ") + what + ", got '" + std::string(field) + "'", line, column);
    return value;
}

}


/*======================================================================================================================
 * TableStats / Catalog
 *====================================================================================================================*/

const ColumnEntry * TableStats::find(std::string_view column) const
{
    for (auto &c : columns)
        if (c.name == column) return &c;
    return nullptr;
}

uint64_t TableStats::row_estimate() const
{
    uint64_t rows = 0;
    for (auto &c : columns)
        rows = std::max(rows, c.stats.distinct_count);
    return rows;
}

void check_stats(const ColumnStats &stats, const std::string &what)
{
    if (stats.distinct_count == 0)
        return;
    if (stats.min_value > stats.max_value)
        throw Error("column " + what + ": min " + std::to_string(stats.min_value) + " exceeds max " +
                    std::to_string(stats.max_value));
    const auto domain = static_cast<__int128>(stats.max_value) - stats.min_value + 1;
    if (static_cast<__int128>(stats.distinct_count) > domain)
        throw Error("column " + what + ": distinct count " + std::to_string(stats.distinct_count) +
                    " exceeds domain size");
}

void Catalog::add(TableStats table)
{
    if (contains(table.name))
        throw Error("duplicate table '" + table.name + "' in catalog");
    std::unordered_set<std::string> seen;
    for (auto &c : table.columns) {
        if (not seen.insert(c.name).second)
            throw Error("duplicate column '" + table.name + "." + c.name + "' in catalog");
        check_stats(c.stats, table.name + "." + c.name);
    }
    index_.emplace(table.name, tables_.size());
    tables_.push_back(std::move(table));
}

const TableStats & Catalog::at(std::string_view name) const
{
    auto it = index_.find(name);
    if (it == index_.end())
        throw Error("unknown table '" + std::string(name) + "'");
    return tables_[it->second];
}


/*======================================================================================================================
 * Catalog file
 *====================================================================================================================*/

Catalog parse_catalog(std::string_view text)
{
    Catalog catalog;
    std::size_t line_no = 0;
    for (auto &raw : split(text, '\n')) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty())
            continue;
        const auto fields = split(line, '|');
        TableStats table;
        table.name = std::string(trim(fields[0]));
        if (not is_identifier(table.name))
            throw ParseError("invalid table name '" + table.name + "'", line_no, 1);
        std::size_t column = fields[0].size() + 2;
        for (std::size_t i = 1; i != fields.size(); ++i) {
            const auto parts = split(fields[i], ':');
            if (parts.size() != 4)
                throw ParseError("expected col:min:max:distinct, got '" + fields[i] + "'", line_no, column);
            ColumnEntry entry;
            entry.name = std::string(trim(parts[0]));
            if (not is_identifier(entry.name))
                throw ParseError("invalid column name '" + entry.name + "'", line_no, column);
            entry.stats.min_value = parse_int<int64_t>(parts[1], line_no, column, "min");
            entry.stats.max_value = parse_int<int64_t>(parts[2], line_no, column, "max");
            entry.stats.distinct_count = parse_int<uint64_t>(parts[3], line_no, column, "distinct count");
            table.columns.push_back(std::move(entry));
            column += fields[i].size() + 1;
        }
        catalog.add(std::move(table));
    }
    return catalog;
}

Catalog load_catalog(const std::string &path) { return parse_catalog(read_file(path)); }

std::string format_catalog(const Catalog &catalog)
{
    std::string out;
    for (auto &t : catalog.tables()) {
        out += t.name;
        for (auto &c : t.columns) {
            out += '|';
            out += c.name + ':' + std::to_string(c.stats.min_value) + ':' + std::to_string(c.stats.max_value) + ':' +
                   std::to_string(c.stats.distinct_count);
        }
        out += '\n';
    }
    return out;
}


/*======================================================================================================================
 * Statistics
 *====================================================================================================================*/

std::vector<ColumnEntry> derive_stats(const MicroTable &table)
{
    std::vector<ColumnEntry> result;
    result.reserve(table.columns.size());
    for (std::size_t c = 0; c != table.columns.size(); ++c) {
        ColumnEntry entry{table.columns[c], {}};
        if (not table.rows.empty()) {
            std::set<int64_t> distinct;
            for (auto &row : table.rows)
                distinct.insert(row[c]);
            entry.stats = {*distinct.begin(), *distinct.rbegin(), distinct.size()};
        }
        result.push_back(std::move(entry));
    }
    return result;
}

Catalog catalog_from_tables(std::span<const MicroTable> tables)
{
    Catalog catalog;
    for (auto &t : tables)
        catalog.add({t.name, derive_stats(t)});
    return catalog;
}

std::string serialize_stats(const Catalog &catalog, std::span<const std::string> tables)
{
    std::string out;
    for (std::size_t i = 0; i != tables.size(); ++i) {
        const auto &t = catalog.at(tables[i]);
        if (i) out += ",\n";
        out += t.name + " (";
        for (std::size_t c = 0; c != t.columns.size(); ++c) {
            const auto &s = t.columns[c].stats;
            if (c) out += ", ";
            out += t.columns[c].name + ": [" + std::to_string(s.min_value) + ',' + std::to_string(s.max_value) + ',' +
                   std::to_string(s.distinct_count) + ']';
        }
        out += ')';
    }
    if (not tables.empty())
        out += '.';
    return out;
}


/*======================================================================================================================
 * MicroTable
 *====================================================================================================================*/

std::size_t MicroTable::column_index(std::string_view column) const
{
    for (std::size_t i = 0; i != columns.size(); ++i)
        if (columns[i] == column) return i;
    throw Error("table '" + name + "' has no column '" + std::string(column) + "'");
}

MicroTable parse_micro_table(std::string name, std::string_view text)
{
    MicroTable table;
    table.name = std::move(name);
    std::size_t line_no = 0;
    bool header = true;
    for (auto &raw : split(text, '\n')) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty())
            continue;
        const auto fields = split(line, ',');
        if (header) {
            for (auto &f : fields) {
                auto col = std::string(trim(f));
                if (not is_identifier(col))
                    throw ParseError("invalid column name '" + col + "'", line_no, 1);
                table.columns.push_back(std::move(col));
            }
            header = false;
            continue;
        }
        if (fields.size() != table.columns.size())
            throw ParseError("row has " + std::to_string(fields.size()) + " values, expected " +
                             std::to_string(table.columns.size()), line_no, 1);
        std::vector<int64_t> row;
        row.reserve(fields.size());
        std::size_t column = 1;
        for (auto &f : fields) {
            row.push_back(parse_int<int64_t>(f, line_no, column, "value"));
            column += f.size() + 1;
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

MicroTable load_micro_table(const std::string &path, std::string name)
{
    return parse_micro_table(std::move(name), read_file(path));
}

std::string format_micro_table(const MicroTable &table)
{
    std::string out;
    for (std::size_t i = 0; i != table.columns.size(); ++i)
        out += (i ? "," : "") + table.columns[i];
    out += '\n';
    for (auto &row : table.rows) {
        for (std::size_t i = 0; i != row.size(); ++i)
            out += (i ? "," : "") + std::to_string(row[i]);
        out += '\n';
    }
    return out;
}

}
