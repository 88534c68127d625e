#include <llmqo/fixture.hpp>

#include <algorithm>
#include <filesystem>


namespace llmqo {

namespace fs = std::filesystem;

Database Fixture::database() const
{
    Database db;
    for (auto &t : tables) db.emplace(t.name, t);
    return db;
}

Fixture imdb_fixture(uint64_t seed)
{
    Rng rng(seed);
    constexpr int64_t MOVIES = 60;

    struct ColumnSpec
    {
        const char *name;
        int64_t lo, hi; ///< `movie_id` columns use [1, MOVIES]
    };
    struct TableSpec
    {
        const char *name;
        std::size_t rows;
        std::vector<ColumnSpec> columns;
    };
    const TableSpec defs[] = {
        {"cast_info", 120, {{"movie_id", 1, MOVIES}, {"person_id", 1, 300}, {"role_id", 1, 11}}},
        {"movie_companies", 80, {{"movie_id", 1, MOVIES}, {"company_id", 1, 40}, {"company_type_id", 1, 2}}},
        {"movie_info", 70, {{"movie_id", 1, MOVIES}, {"info_type_id", 1, 20}}},
        {"movie_info_idx", 50, {{"movie_id", 1, MOVIES}, {"info_type_id", 99, 113}}},
        {"movie_keyword", 90, {{"movie_id", 1, MOVIES}, {"keyword_id", 1, 200}}},
        {"title", std::size_t(MOVIES), {{"movie_id", 1, MOVIES}, {"kind_id", 1, 7}, {"production_year", 1950, 2019}}},
    };

    Fixture f;
    for (auto &def : defs) {
        MicroTable t;
        t.name = def.name;
        for (auto &c : def.columns) t.columns.push_back(c.name);
        const bool key_table = t.name == "title";
        for (std::size_t r = 0; r != def.rows; ++r) {
            std::vector<int64_t> row;
            for (auto &c : def.columns) {
                if (key_table and std::string_view(c.name) == "movie_id")
                    row.push_back(int64_t(r) + 1);
                else
                    row.push_back(rng.between(c.lo, c.hi));
            }
            t.rows.push_back(std::move(row));
        }
        f.tables.push_back(std::move(t));
    }
    f.catalog = catalog_from_tables(f.tables);
    for (auto *other : {"cast_info", "movie_companies", "movie_info", "movie_info_idx", "movie_keyword"})
        f.join_graph.push_back(JoinPredicate::make("title", "movie_id", other, "movie_id"));
    f.join_graph.push_back(JoinPredicate::make("movie_companies", "movie_id", "movie_keyword", "movie_id"));
    f.join_graph.push_back(JoinPredicate::make("movie_info", "movie_id", "movie_info_idx", "movie_id"));
    return f;
}

void write_fixture(const Fixture &fixture, const std::string &dir)
{
    fs::create_directories(fs::path(dir) / "tables");
    write_file((fs::path(dir) / "catalog.txt").string(), format_catalog(fixture.catalog));
    write_file((fs::path(dir) / "joins.txt").string(), format_join_graph(fixture.join_graph));
    for (auto &t : fixture.tables)
        write_file((fs::path(dir) / "tables" / (t.name + ".csv")).string(), format_micro_table(t));
}

Database load_database(const std::string &dir)
{
    if (not fs::is_directory(dir))
        throw Error("data directory '" + dir + "' does not exist");
    std::vector<fs::path> files;
    for (auto &entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".csv") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    Database db;
    for (auto &p : files) {
        auto name = p.stem().string();
        db.emplace(name, load_micro_table(p.string(), name));
    }
    return db;
}

Fixture load_fixture(const std::string &dir)
{
    Fixture f;
    f.catalog = load_catalog((fs::path(dir) / "catalog.txt").string());
    f.join_graph = parse_join_graph(read_file((fs::path(dir) / "joins.txt").string()));
    for (auto &[name, table] : load_database((fs::path(dir) / "tables").string()))
        f.tables.push_back(table);
    return f;
}

}
