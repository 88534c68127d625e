#pragma once

#include <cstdint>
#include <llmqo/common.hpp>
#include <map>
#include <span>
#include <string>
#include <vector>


namespace llmqo {

/** Per-column statistics in the `[min, max, distinct count]` shape shown to the model. */
struct ColumnStats
{
    int64_t min_value = 0;
    int64_t max_value = 0;
    uint64_t distinct_count = 0;

    friend bool operator==(const ColumnStats&, const ColumnStats&) = default;
};

struct ColumnEntry
{
    std::string name;
    ColumnStats stats;

    friend bool operator==(const ColumnEntry&, const ColumnEntry&) = default;
};

struct TableStats
{
    std::string name;
    std::vector<ColumnEntry> columns; ///< file order; the statistics string depends on it

    const ColumnEntry * find(std::string_view column) const;

    /** Row-count estimate: the largest distinct count of any column (the catalog carries no row counts). */
    uint64_t row_estimate() const;

    friend bool operator==(const TableStats&, const TableStats&) = default;
};

/** Immutable collection of table statistics.  Table order is insertion order. */
class Catalog
{
    std::vector<TableStats> tables_;
    std::map<std::string, std::size_t, std::less<>> index_;

    public:
    Catalog() = default;

    /** Adds a table.  Throws `Error` on duplicate table or column names, or stats violating their invariants. */
    void add(TableStats table);

    const std::vector<TableStats> & tables() const { return tables_; }
    std::size_t size() const { return tables_.size(); }
    bool empty() const { return tables_.empty(); }
    bool contains(std::string_view name) const { return index_.find(name) != index_.end(); }

    /** Throws `Error` if the table is unknown. */
    const TableStats & at(std::string_view name) const;

    friend bool operator==(const Catalog &a, const Catalog &b) { return a.tables_ == b.tables_; }
};

/** Tiny in-memory integer table executed by the micro-executor. */
struct MicroTable
{
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<int64_t>> rows;

    /** Throws `Error` if the column does not exist. */
    std::size_t column_index(std::string_view column) const;
};

/** Checks `min <= max` (when non-empty) and `distinct <= max - min + 1`; throws `Error` naming `what`. */
void check_stats(const ColumnStats &stats, const std::string &what);

/** Parses the catalog file format: one `table|col:min:max:distinct|...` line per table. */
Catalog parse_catalog(std::string_view text);
Catalog load_catalog(const std::string &path);
/** Canonical catalog file text; `parse_catalog(format_catalog(c)) == c`. */
std::string format_catalog(const Catalog &catalog);

/** Exact min/max/distinct per column.  Empty tables yield `[0,0,0]`. */
std::vector<ColumnEntry> derive_stats(const MicroTable &table);
Catalog catalog_from_tables(std::span<const MicroTable> tables);

/** Renders `name (col: [min,max,distinct], ...)` blocks joined by ",\n" and terminated by a single `.`. */
std::string serialize_stats(const Catalog &catalog, std::span<const std::string> tables);

/** MicroTable file: comma-separated header, then one comma-separated integer row per line. */
MicroTable parse_micro_table(std::string name, std::string_view text);
MicroTable load_micro_table(const std::string &path, std::string name);
std::string format_micro_table(const MicroTable &table);

}
