#pragma once

#include <cstdint>
#include <llmqo/optimizers.hpp>
#include <llmqo/relational.hpp>
#include <string>
#include <vector>


namespace llmqo {

/** A micro database: tables, the catalog derived from them, and the join graph queries are drawn from. */
struct Fixture
{
    std::vector<MicroTable> tables;
    Catalog catalog;
    std::vector<JoinPredicate> join_graph;

    Database database() const;
};

/** Six IMDB-style tables joined on `movie_id` (a star around `title` plus two extra edges). */
Fixture imdb_fixture(uint64_t seed = 42);

/** Writes `catalog.txt`, `joins.txt` and `tables/<name>.csv` below `dir`. */
void write_fixture(const Fixture &fixture, const std::string &dir);

/** Reads the layout produced by `write_fixture`; the catalog is taken from `catalog.txt`. */
Fixture load_fixture(const std::string &dir);

/** Loads every `<name>.csv` in `dir` as table `<name>`. */
Database load_database(const std::string &dir);

}
