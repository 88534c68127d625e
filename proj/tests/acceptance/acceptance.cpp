/* Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.  Run from the repository root so
 * that the fixture paths resolve. */

#include "../support/oracles.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <llmqo/fixture.hpp>
#include <llmqo/hints.hpp>
#include <llmqo/pipeline.hpp>
#include <nlohmann/json.hpp>
#include <sstream>


using namespace llmqo;
namespace fs = std::filesystem;


namespace {

/** Collects the first few mismatches of one criterion. */
struct Outcome
{
    std::size_t failures = 0;
    std::ostringstream notes;

    void expect(bool ok, const std::string &what) {
        if (ok) return;
        if (failures++ < 3) notes << (failures > 1 ? "; " : "") << what;
    }
};

bool run(int number, const std::string &title, const std::function<std::string(Outcome&)> &body)
{
    Outcome out;
    std::string summary;
    const auto start = std::chrono::steady_clock::now();
    try {
        summary = body(out);
    } catch (const std::exception &e) {
        out.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "AC" << number << ' ' << (out.failures ? "FAIL" : "PASS") << ' ' << title << " (" << summary;
    if (out.failures) std::cout << "; " << out.failures << " mismatches: " << out.notes.str();
    std::cout << "; " << std::fixed << std::setprecision(2) << secs << "s)" << std::endl;
    return out.failures == 0;
}

const Fixture & fixture()
{
    static const Fixture f = load_fixture("data/fixture");
    return f;
}

/** Every connected set of tables of the join graph, each with all graph edges among its tables. */
std::vector<QuerySpec> connected_queries(std::size_t max_tables)
{
    const auto &f = fixture();
    std::vector<std::string> names;
    for (auto &t : f.catalog.tables()) names.push_back(t.name);
    std::vector<QuerySpec> out;
    for (unsigned mask = 1; mask < (1u << names.size()); ++mask) {
        QuerySpec q;
        for (std::size_t i = 0; i != names.size(); ++i)
            if (mask >> i & 1) q.tables.push_back(names[i]);
        if (q.tables.size() > max_tables) continue;
        for (auto &j : f.join_graph)
            if (q.has_table(j.left_table) and q.has_table(j.right_table)) q.joins.push_back(j);
        try {
            check_query(q);
        } catch (const Error&) {
            continue;
        }
        out.push_back(q);
    }
    return out;
}

/** Copies of `q` with seeded random selections (possibly none). */
std::vector<QuerySpec> with_selections(const QuerySpec &q, std::size_t variants, Rng &rng)
{
    const auto &c = fixture().catalog;
    std::vector<QuerySpec> out = {q};
    for (std::size_t v = 1; v < variants; ++v) {
        auto s = q;
        for (auto &t : q.tables) {
            if (rng.coin()) continue;
            const auto &table = c.at(t);
            const auto &col = table.columns[rng.below(table.columns.size())];
            const CmpOp ops[] = {CmpOp::Lt, CmpOp::Gt, CmpOp::Eq, CmpOp::Le, CmpOp::Ge};
            s.selections.push_back(
                {t, col.name, ops[rng.below(5)], rng.between(col.stats.min_value, col.stats.max_value)});
        }
        out.push_back(s);
    }
    return out;
}

Plan drop_leaf(const Plan &p, const std::string &table)
{
    if (p.is_scan()) return p;
    if (p.left().is_scan() and p.left().table() == table) return p.right();
    if (p.right().is_scan() and p.right().table() == table) return p.left();
    return Plan::join(p.op(), drop_leaf(p.left(), table), drop_leaf(p.right(), table));
}

Plan rename_leaf(const Plan &p, const std::string &from, const std::string &to)
{
    if (p.is_scan()) return Plan::scan(p.table() == from ? to : p.table());
    return Plan::join(p.op(), rename_leaf(p.left(), from, to), rename_leaf(p.right(), from, to));
}

/** Deletes the last `)` of the final answer. */
std::string unbalance(std::string response)
{
    response.erase(response.rfind(')'), 1);
    return response;
}

/*======================================================================================================================
 * Synthetic preference fixture: 50 triples over distinct FROM lists of t0..t11.
 *====================================================================================================================*/

struct PreferenceFixture
{
    TokenModel reference;
    std::vector<DpoSample> samples;
};

PreferenceFixture preference_fixture(std::size_t count, uint32_t buckets, uint64_t seed)
{
    Rng rng(seed);
    std::set<std::vector<std::string>> used;
    std::vector<std::array<std::string, 3>> texts;
    while (texts.size() != count) {
        auto names = oracle::table_names(12);
        rng.shuffle(names);
        names.resize(2 + rng.below(4));
        std::sort(names.begin(), names.end());
        if (not used.insert(names).second) continue;
        std::string from;
        for (auto &n : names) from += (from.empty() ? "" : ", ") + n;
        const auto chosen = oracle::random_plan(names, rng);
        auto rejected = oracle::random_plan(names, rng);
        while (rejected == chosen) rejected = oracle::random_plan(names, rng);
        texts.push_back({"INPUT:\n<SQL>: SELECT * FROM " + from + ";\n<Statistics>:\n.", render_response(chosen),
                         render_response(rejected)});
    }
    std::vector<std::string> responses;
    for (auto &t : texts) responses.insert(responses.end(), {t[1], t[2]});
    PreferenceFixture f{TokenModel(Vocabulary::build(responses), buckets), {}};
    f.reference.randomize(seed, 1.0);
    for (auto &t : texts) {
        const auto &v = f.reference.vocab();
        f.samples.push_back({tokenize_prompt(t[0], v), tokenize_response(t[1], v), tokenize_response(t[2], v)});
    }
    return f;
}

}


int main()
{
    bool ok = true;

    ok &= run(1, "plan grammar round trips on 1000 random plans", [](Outcome &out) {
        Rng rng(2024);
        std::size_t steps = 0;
        for (int i = 0; i != 1000; ++i) {
            const auto p = oracle::random_plan(oracle::table_names(2 + rng.below(11)), rng);
            const auto b = to_bracket(p);
            const auto path = to_path(p);
            out.expect(oracle::bracket_cfg_accepts(b), "grammar " + b);
            out.expect(parse_bracket(b) == p, "bracket " + b);
            out.expect(from_path(path) == p, "path " + b);
            out.expect(parse_response(render_response(p)) == p, "response " + b);
            out.expect(path.steps.size() == p.tables().size() - 1, "step count " + b);
            const auto expected = oracle::post_order_steps(p);
            for (std::size_t s = 0; s != path.steps.size(); ++s)
                out.expect(path.steps[s].left == expected[s][0] and path.steps[s].right == expected[s][1] and
                               to_string(path.steps[s].op) == expected[s][2],
                           "post-order " + b);
            steps += path.steps.size();
        }
        return "1000 plans, " + std::to_string(steps) + " steps";
    });

    ok &= run(2, "bracket, planning path and response goldens", [](Outcome &out) {
        const auto p = oracle::imdb_plan();
        out.expect(to_bracket(p) == oracle::IMDB_BRACKET, "bracket");
        const auto path = to_path(p);
        out.expect(path.steps.size() == 2, "step count");
        out.expect(path.steps[0] == PlanStep{"movie_companies", "title", JoinOp::HashJoin}, "step 1");
        out.expect(path.steps[1] == PlanStep{"movie_info_idx", "HashJoin(movie_companies title)", JoinOp::HashJoin},
                   "step 2");
        out.expect(render_response(p) == oracle::IMDB_RESPONSE, "response");
        out.expect(parse_response(oracle::IMDB_RESPONSE) == p, "parse response");
        return std::string("3 goldens");
    });

    ok &= run(3, "validator taxonomy on a 300-response mutation corpus", [](Outcome &out) {
        const auto &f = fixture();
        Rng rng(33);
        std::vector<WorkloadQuery> queries;
        for (std::size_t joins = 2; joins <= 4; ++joins)
            for (auto &q : gen_workload(f.catalog, f.join_graph, joins, 20, joins)) queries.push_back({"", q});

        using enum InvalidClass;
        struct Mutation { std::string name; InvalidSet label; };
        const std::vector<Mutation> kinds = {
            {"valid", {}},
            {"drop-table", {E1_TableNumberMismatch}},
            {"swap-table", {E2_TableMismatch}},
            {"add-table", {E1_TableNumberMismatch, E2_TableMismatch}},
            {"unbalance", {E3_OperatorMismatch}},
            {"drop+unbalance", {E1_TableNumberMismatch, E3_OperatorMismatch}},
        };
        std::vector<ResponseCase> corpus;
        CorpusSummary expected;
        std::size_t valid_false_invalid = 0, valid_count = 0;
        for (std::size_t i = 0; i != 300; ++i) {
            const auto &q = queries[rng.below(queries.size())].query;
            const auto &kind = kinds[i % kinds.size()];
            const auto plan = oracle::random_connected_plan(q, rng);
            std::string foreign;
            for (auto &t : f.catalog.tables())
                if (not q.has_table(t.name)) foreign = t.name;
            const auto victim = q.tables[rng.below(q.tables.size())];
            std::string response;
            if (kind.name == "valid") response = render_response(plan);
            else if (kind.name == "drop-table") response = render_response(drop_leaf(plan, victim));
            else if (kind.name == "swap-table") response = render_response(rename_leaf(plan, victim, foreign));
            else if (kind.name == "add-table")
                response = render_response(Plan::join(JoinOp::HashJoin, plan, Plan::scan(foreign)));
            else if (kind.name == "unbalance") response = unbalance(render_response(plan));
            else response = unbalance(render_response(drop_leaf(plan, victim)));

            const auto report = validate(response, q);
            out.expect(report.errors == kind.label,
                       kind.name + " labelled " + kind.label.to_string() + " got " + report.errors.to_string());
            if (kind.name == "valid") {
                ++valid_count;
                valid_false_invalid += not report.valid;
            }
            corpus.push_back({response, q});
            expected.e1 += kind.label.contains(E1_TableNumberMismatch);
            expected.e2 += kind.label.contains(E2_TableMismatch);
            expected.e3 += kind.label.contains(E3_OperatorMismatch);
            expected.invalid += not kind.label.empty();
        }
        expected.total = corpus.size();
        const auto summary = classify_corpus(corpus);
        out.expect(summary == expected, "corpus counts " + summary.to_string());
        out.expect(valid_false_invalid == 0, "false invalids");
        return summary.to_string() + ", " + std::to_string(valid_count) + " valid with " +
               std::to_string(valid_false_invalid) + " false invalids";
    });

    ok &= run(4, "preference generation against the pair-scan oracle", [](Outcome &out) {
        const auto &f = fixture();
        const auto db = f.database();
        std::vector<WorkloadQuery> w;
        for (std::size_t joins = 1; joins <= 4; ++joins)
            for (auto &q : gen_workload(f.catalog, f.join_graph, joins, 50, 100 + joins))
                w.push_back({query_id(w.size()), q});
        const auto log = run_optimizers(w, f.catalog, db, 7);
        const double sweep[] = {0.6, 0.7, 0.8, 0.9, 0.95, 1.0 - 1e-9};
        std::size_t triples = 0;
        for (std::size_t i = 0; i != w.size(); ++i) {
            std::vector<PlanTiming> t;
            for (std::size_t k = 0; k != 3; ++k) {
                const auto &r = log[3 * i + k];
                t.push_back({r.optimizer, parse_bracket(r.bracket), r.time_units});
            }
            auto pairs = [&](std::span<const PreferenceTriple> ts) {
                std::set<std::pair<std::string, std::string>> s;
                for (auto &tr : ts) {
                    s.emplace(to_bracket(parse_response(tr.chosen)), to_bracket(parse_response(tr.rejected)));
                    out.expect(tr.t_star < tr.t_rejected, "chosen not faster");
                }
                return s;
            };
            const auto got = generate_preferences(t, "x", w[i].id, {0.95});
            triples += got.size();
            out.expect(pairs(got) == oracle::preference_pairs(t, 0.95), "oracle " + w[i].id);

            std::set<std::pair<std::string, std::string>> previous;
            for (double r0 : sweep) {
                const auto now = pairs(generate_preferences(t, "x", w[i].id, {r0}));
                out.expect(std::includes(now.begin(), now.end(), previous.begin(), previous.end()), "monotone");
                previous = now;
            }
            for (std::size_t added = 0; added != 3; ++added) {
                std::vector<PlanTiming> old;
                for (std::size_t k = 0; k != 3; ++k)
                    if (k != added) old.push_back(t[k]);
                const auto base = generate_preferences(old, "x", w[i].id, {0.95});
                const auto ext = apply_delta(base, extend_preferences(base, t[added], old, "x", w[i].id, {0.95}));
                out.expect(pairs(ext) == oracle::preference_pairs(t, 0.95), "extension " + w[i].id);
            }
        }
        return std::to_string(w.size()) + " queries, " + std::to_string(triples) + " triples at r0=0.95";
    });

    ok &= run(5, "DP optimality for connected queries up to 6 tables", [](Outcome &out) {
        const auto &f = fixture();
        const CostModel model(f.catalog);
        Rng rng(5);
        std::size_t checked = 0, plans = 0;
        for (auto &base : connected_queries(6)) {
            if (base.tables.size() < 2) continue;
            for (auto &q : with_selections(base, 3, rng)) {
                const auto dp = dp_optimize(q, model);
                double best = INFINITY;
                for (auto &p : oracle::enumerate_connected_plans(q)) {
                    best = std::min(best, oracle::cout_cost(p, q, f.catalog));
                    ++plans;
                }
                const double cost = oracle::cout_cost(dp, q, f.catalog);
                out.expect(std::abs(cost - best) <= 1e-12 * std::max(1.0, best), render_sql(q));
                out.expect(std::abs(plan_cost(dp, q, model) - cost) <= 1e-12 * std::max(1.0, cost), "model cost");
                ++checked;
            }
        }
        return std::to_string(checked) + " queries, " + std::to_string(plans) + " enumerated plans";
    });

    ok &= run(6, "identical result multisets for every plan up to 5 tables", [](Outcome &out) {
        const auto &f = fixture();
        const auto db = f.database();
        Rng rng(6);
        std::size_t queries = 0, plans = 0;
        for (auto &base : connected_queries(5)) {
            for (auto &q : with_selections(base, 2, rng)) {
                const auto [schema, rows] = oracle::naive_result(q, db);
                auto all = q.tables.size() == 1 ? std::vector<Plan>{Plan::scan(q.tables[0])}
                                                : oracle::enumerate_connected_plans(q);
                for (auto p : all) {
                    // random operators on top of the enumerated shape
                    std::function<Plan(const Plan&)> ops = [&](const Plan &n) {
                        return n.is_scan() ? n : Plan::join(ALL_JOIN_OPS[rng.below(3)], ops(n.left()), ops(n.right()));
                    };
                    const auto r = execute_plan(ops(p), q, db).canonical();
                    out.expect(r.schema == schema and r.rows == rows, render_sql(q) + " " + to_bracket(p));
                    ++plans;
                }
                ++queries;
            }
        }
        return std::to_string(queries) + " queries, " + std::to_string(plans) + " plans executed";
    });

    ok &= run(7, "objective exactness", [](Outcome &out) {
        const auto fx = preference_fixture(100, 1024, 7);
        auto policy = fx.reference;
        policy.randomize(8, 1.0);
        double worst_ln2 = 0, worst = 0;
        for (auto &s : fx.samples) {
            for (double beta : {0.05, 0.1, 0.3}) {
                const double d = std::abs(dpo_loss(fx.reference, fx.reference, s, beta) - std::log(2.0));
                worst_ln2 = std::max(worst_ln2, d);
                out.expect(d <= 1e-12, "ln 2");
                const double u = std::abs(dpo_reward_diff(policy, fx.reference, s, beta) -
                                          oracle::reward_diff(policy, fx.reference, s, beta));
                const double l = std::abs(dpo_loss(policy, fx.reference, s, beta) -
                                          oracle::dpo_loss(policy, fx.reference, s, beta));
                worst = std::max({worst, u, l});
            }
            for (auto *y : {&s.chosen, &s.rejected}) {
                const double d = std::abs(sequence_log_prob(policy, s.prompt, *y) - oracle::log_prob(policy, s.prompt, *y));
                worst = std::max(worst, d);
            }
        }
        std::vector<SftSample> batch;
        for (auto &s : fx.samples) batch.push_back({s.prompt, s.chosen});
        worst = std::max(worst, std::abs(sft_loss(policy, batch) - oracle::sft_loss(policy, batch)));
        out.expect(worst <= 1e-10, "oracle difference " + std::to_string(worst));
        std::ostringstream s;
        s << "max |L - ln 2| = " << worst_ln2 << ", max oracle difference = " << worst;
        return s.str();
    });

    ok &= run(8, "finite-difference gradient checks", [](Outcome &out) {
        const auto fx = preference_fixture(10, 1024, 8);
        auto policy = fx.reference;
        policy.randomize(9, 1.0);
        double worst = 0, worst_abs = 0;
        std::size_t checked = 0;
        for (std::size_t i = 0; i != 3; ++i) {
            const auto &d = fx.samples[i];
            const SftSample s{d.prompt, d.chosen};
            for (auto kind : {LossKind::Sft, LossKind::Dpo}) {
                const auto r = grad_check(kind, policy, &fx.reference, &s, &d, 0.1, 1e-5, 1e-5, 250, i);
                out.expect(r.checked >= 200, "fewer than 200 parameters");
                out.expect(r.passed, "relative error " + std::to_string(r.max_rel_error));
                worst = std::max(worst, r.max_rel_error);
                worst_abs = std::max(worst_abs, r.max_abs_error);
                checked += r.checked;
            }
        }
        // The reference is frozen: a training step leaves it byte-identical.
        const auto before = serialize_model(fx.reference);
        TrainConfig cfg{0.5, 5, 4};
        const auto trained = train_qdpo(fx.reference, fx.samples, cfg);
        out.expect(serialize_model(fx.reference) == before, "reference changed");
        out.expect(param_distance(trained.model, fx.reference) > 0, "policy did not move");
        std::ostringstream s;
        s << checked << " parameters, max relative error " << worst << " (raw max |a - n| " << worst_abs
          << "), reference unchanged";
        return s.str();
    });

    ok &= run(9, "two-stage training behaviour", [](Outcome &out) {
        std::ostringstream s;
        {
            const auto fx = preference_fixture(1, 4096, 90);
            const std::vector<SftSample> one = {{fx.samples[0].prompt, fx.samples[0].chosen}};
            const auto r = train_qit(TokenModel(fx.reference.vocab()), one, {2.0, 100, 1});
            const auto decoded = generate(r.model, one[0].prompt, 256);
            out.expect(decoded == one[0].response, "QIT overfit does not reproduce the response");
            s << "QIT loss " << r.trace.front().loss << " -> " << r.trace.back().loss;
        }
        const auto fx = preference_fixture(50, 1 << 16, 91);
        TrainConfig cfg = TrainConfig::qdpo_defaults();
        const auto r = train_qdpo(fx.reference, fx.samples, cfg);
        for (std::size_t i = 1; i != r.trace.size(); ++i)
            out.expect(r.trace[i].margin > r.trace[i - 1].margin, "margin not increasing at " +
                                                                      std::to_string(r.trace[i].step));
        std::size_t improved = 0;
        for (auto &d : fx.samples) improved += mean_margin(r.model, std::span(&d, 1)) > mean_margin(fx.reference, std::span(&d, 1));
        out.expect(improved * 100 >= 95 * fx.samples.size(), "improved on " + std::to_string(improved));
        s << "; QDPO margin " << r.trace.front().margin << " -> " << r.trace.back().margin << " over "
          << r.trace.size() << " checkpoints, improved on " << improved << "/" << fx.samples.size();

        // Divergence control shows once the preference loss saturates: a long run with a large step.
        TrainConfig lo{2.0, 1000, 8, 0.05}, hi{2.0, 1000, 8, 0.5};
        lo.trace_every = hi.trace_every = 1000;
        const double d_lo = param_distance(train_qdpo(fx.reference, fx.samples, lo).model, fx.reference);
        const double d_hi = param_distance(train_qdpo(fx.reference, fx.samples, hi).model, fx.reference);
        out.expect(d_hi < d_lo, "beta 0.5 moved further than beta 0.05");
        s << "; displacement beta=0.05 " << d_lo << ", beta=0.5 " << d_hi;
        return s.str();
    });

    ok &= run(10, "end-to-end determinism and report columns", [](Outcome &out) {
        PipelineConfig a;
        a.work_dir = (fs::temp_directory_path() / "llmqo_acceptance_a").string();
        auto b = a;
        b.work_dir = (fs::temp_directory_path() / "llmqo_acceptance_b").string();
        fs::remove_all(a.work_dir);
        fs::remove_all(b.work_dir);
        const auto ra = run_pipeline(a);
        const auto rb = run_pipeline(b);
        std::size_t files = 0;
        for (auto &entry : fs::directory_iterator(a.work_dir)) {
            if (not entry.is_regular_file()) continue;
            const auto name = entry.path().filename().string();
            out.expect(read_file(entry.path().string()) == read_file(b.work_dir + "/" + name), name + " differs");
            ++files;
        }
        out.expect(files >= 14, "expected at least 14 artifacts");
        const auto report = nlohmann::json::parse(ra.report_json);
        for (auto &[source, stats] : report["sources"].items())
            for (auto key : {"mean", "median", "p75", "p95", "p99"}) out.expect(stats.contains(key), source + "." + key);
        out.expect(ra.report_table.find("mean    median      75th      95th      99th") != std::string::npos,
                   "table header");
        out.expect(ra.report_table == rb.report_table, "report table");
        fs::remove_all(a.work_dir);
        fs::remove_all(b.work_dir);
        return std::to_string(files) + " artifacts byte-identical across two runs";
    });

    ok &= run(11, "hint round trips on 500 random plans", [](Outcome &out) {
        Rng rng(11);
        for (int i = 0; i != 500; ++i) {
            const auto p = oracle::random_plan(oracle::table_names(2 + rng.below(9)), rng);
            out.expect(parse_hints(emit_hints(p)) == p, to_bracket(p));
        }
        return std::string("500 plans");
    });

    return ok ? 0 : 1;
}
