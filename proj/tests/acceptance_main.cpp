// Acceptance suite: eight go/no-go checks over the whole toolkit, one
// printed line per criterion. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bibmatch/clock.hpp"
#include "bibmatch/indexclient.hpp"
#include "bibmatch/matcher.hpp"
#include "bibmatch/metrics.hpp"
#include "bibmatch/mockindex.hpp"
#include "bibmatch/pipeline.hpp"
#include "bibmatch/queryexpr.hpp"
#include "bibmatch/rng.hpp"
#include "bibmatch/textnorm.hpp"
#include "support/country_table.hpp"
#include "support/matcher_oracle.hpp"
#include "support/rank_oracle.hpp"
#include "support/synthetic_corpus.hpp"

#include <httplib.h>

using namespace bibmatch;
namespace ts = bibmatch::testsupport;

namespace {

int failures = 0;

void report(int number, const std::string& name, bool ok, const std::string& detail) {
    std::printf("%s  %d. %s — %s\n", ok ? "PASS" : "FAIL", number, name.c_str(),
                detail.c_str());
    if (!ok)
        ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
}

std::string fmt(double v, int decimals = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("bibmatch_accept_" + tag + "_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

// --- 1. published country-table correlation -------------------------------

void criterion_country_pearson() {
    const auto start = std::chrono::steady_clock::now();
    std::vector<double> match, english;
    for (const auto& row : ts::kCountryMatchTable) {
        match.push_back(row.match_percent);
        english.push_back(row.english_percent);
    }
    const auto r = pearson(match, english);
    const double elapsed = seconds_since(start);
    const bool ok = r && std::abs(*r - 0.74) <= 0.02 && elapsed < 1.0 &&
                    match.size() == 25;
    report(1, "country match-rate vs English-share Pearson = 0.74 +/- 0.02",
           ok, "r=" + (r ? fmt(*r) : std::string("undefined")) +
                   ", n=" + std::to_string(match.size()) + ", " + fmt(elapsed, 3) + "s");
}

// --- 2. normalization golden examples --------------------------------------

void criterion_normalization_golden() {
    bool ok = true;
    std::string detail = "all four strings exact";
    try {
        if (normalize_title("The O/OREOS mission: First science data from the space "
                            "environment viability of organics (SEVO) payload")
                .str() !=
            "the o oreos mission first science data from the space environment "
            "viability of organics sevo payload") {
            ok = false;
            detail = "title example diverged";
        }
        if (normalize_author("Jehlička", "J.").str() != "j jehlicka") {
            ok = false;
            detail = "author example diverged";
        }
        if (normalize_journal("Agris On-line Papers in Economics and Informatics")
                .str() != "agris on line papers in economics and informatics") {
            ok = false;
            detail = "journal example diverged";
        }
        const std::string beta = normalize_title(
                                     "Previous prescription of β-blockers is "
                                     "associated with reduced mortality among patients "
                                     "hospitalized in intensive care units for sepsis")
                                     .str();
        if (beta.find("beta blockers") == std::string::npos) {
            ok = false;
            detail = "beta-blocker title did not convert";
        }
    } catch (const Error& e) {
        ok = false;
        detail = e.what();
    }
    report(2, "normalization reproduces the worked examples", ok, detail);
}

// --- 3. query grammar round trip --------------------------------------------

NormalizedText accept_random_text(std::mt19937_64& gen) {
    const std::size_t n_words = 1 + rng::bounded(gen, 5);
    std::string out;
    for (std::size_t w = 0; w < n_words; ++w) {
        if (w)
            out += ' ';
        const std::size_t len = 1 + rng::bounded(gen, 7);
        for (std::size_t i = 0; i < len; ++i) {
            const auto r = rng::bounded(gen, 36);
            out.push_back(r < 26 ? static_cast<char>('a' + r)
                                 : static_cast<char>('0' + (r - 26)));
        }
    }
    return *NormalizedText::parse(out);
}

QueryExpr accept_random_query(std::mt19937_64& gen) {
    auto make_term = [&gen](std::size_t kind) -> QueryExpr {
        switch (kind) {
        case 0:
            return {TitleEquals{accept_random_text(gen)}};
        case 1:
            return {YearEquals{static_cast<int>(1500 + rng::bounded(gen, 600))}};
        case 2:
            return {AuthorComposite{accept_random_text(gen)}};
        default:
            return {JournalComposite{accept_random_text(gen)}};
        }
    };
    if (rng::bounded(gen, 3) == 0)
        return make_term(rng::bounded(gen, 4));
    std::vector<std::size_t> kinds = {0, 1, 2, 3};
    for (std::size_t i = kinds.size(); i > 1; --i)
        std::swap(kinds[i - 1], kinds[rng::bounded(gen, i)]);
    std::vector<QueryExpr> operands;
    const std::size_t n = 2 + rng::bounded(gen, 3);
    for (std::size_t i = 0; i < n; ++i)
        operands.push_back(make_term(kinds[i]));
    return {AndExpr{std::move(operands)}};
}

void criterion_query_roundtrip() {
    std::mt19937_64 gen(0xACCE57);
    bool ok = true;
    std::string detail = "1000 round trips";
    for (int i = 0; i < 1000 && ok; ++i) {
        const QueryExpr expr = accept_random_query(gen);
        const std::string wire = serialize_query(expr);
        try {
            if (!(parse_query(wire) == expr)) {
                ok = false;
                detail = "round trip broke on: " + wire;
            }
        } catch (const Error& e) {
            ok = false;
            detail = std::string("parse failed: ") + e.what();
        }
    }

    BibRecord lin;
    lin.record_id = "lin";
    lin.title = "Designs of variable resolution";
    lin.first_author_surname = "Lin";
    lin.first_author_given = "C.";
    lin.journal_name = "Biometrika";
    lin.pub_year = 2012;
    lin.field_codes = {"2613"};
    const std::string expected =
        "And(Composite(AA.AuN='c lin'),Composite(J.JN='biometrika'),"
        "Ti='designs of variable resolution',Y=2012)";
    if (serialize_query(build_query(lin, Strategy::full)) != expected) {
        ok = false;
        detail = "printed full-query string diverged";
    }
    report(3, "query grammar round trip and verbatim full-query string", ok, detail);
}

// --- 4. matcher oracle equivalence ------------------------------------------

void criterion_matcher_oracle() {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 gen(0x0C0FFEE);
    const MatchRules rules;
    int agreed = 0;
    bool ok = true;
    std::string detail;
    for (int i = 0; i < 10000 && ok; ++i) {
        const BibRecord rec = ts::oracle_random_record(gen);
        std::vector<CandidateResult> cands;
        for (std::size_t c = 0, n = rng::bounded(gen, 5); c < n; ++c)
            cands.push_back(ts::oracle_random_candidate(rec, gen));
        const MatchDecision mine = metadata_filter(rec, cands, rules);
        const ts::OracleOutcome oracle = ts::oracle_metadata_filter(rec, cands, rules);
        if (mine.is_accepted() != oracle.accepted ||
            (oracle.accepted && mine.accepted->entity_id != oracle.entity_id)) {
            ok = false;
            detail = "disagreement at case " + std::to_string(i);
        } else {
            ++agreed;
        }
    }
    const double elapsed = seconds_since(start);
    ok = ok && elapsed < 10.0;
    if (ok)
        detail = std::to_string(agreed) + "/10000 agree, " + fmt(elapsed, 2) + "s";
    report(4, "metadata filter agrees with the brute-force rules on 10000 sets", ok,
           detail);
}

// --- 5. simulation fidelity --------------------------------------------------

void criterion_simulation_fidelity() {
    const auto start = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    TempDir tmp("sim");
    try {
        const auto corpus = ts::make_synthetic_corpus(5000, 10, 20260810);
        const auto input = tmp.path / "corpus.jsonl";
        {
            std::ofstream out(input, std::ios::binary);
            write_records_jsonl(out, corpus);
        }
        PipelineConfig config;
        config.input = input;
        config.input_format = RecordFormat::jsonl;
        config.filter_mode = FilterMode::doi;
        config.sample_n = 400;
        config.min_field_size = 50;
        config.seed = 7;
        config.workers = 4;
        config.out_dir = tmp.path / "out";
        CorruptionProfile profile;
        profile.seed = 7;
        profile.p_missing_journal_year = 0.05;
        profile.p_alt_language_title = 0.03;
        profile.p_wrong_doi = 0.02;
        profile.p_missing_doi = 0.02;
        profile.p_metadata_noise = 0.05;
        config.mock_profile = profile;

        const PipelineResult result = run_pipeline(config);
        std::size_t comparisons = 0;
        for (std::size_t i = 0; i < result.samples.size() && ok; ++i) {
            double title_recall = -1.0;
            for (Strategy s : kAllStrategies) {
                const double measured =
                    result.field_reports[i].per_strategy.at(s).recall;
                const double predicted = predicted_doi_recall(
                    result.samples[i].records, *result.mock_ledger, s,
                    profile.retrieval_overlap_min);
                ++comparisons;
                if (measured != predicted) {  // exact equality required
                    ok = false;
                    detail = "field " + result.field_reports[i].field_code + "/" +
                             strategy_name(s) + ": measured " + fmt(measured) +
                             " != predicted " + fmt(predicted);
                    break;
                }
                if (s == Strategy::title_only)
                    title_recall = measured;
            }
            if (!ok)
                break;
            for (Strategy s : kAllStrategies) {
                if (result.field_reports[i].per_strategy.at(s).recall >
                    title_recall + 1e-15) {
                    ok = false;
                    detail = "strategy " + std::string(strategy_name(s)) +
                             " beat title_only in field " +
                             result.field_reports[i].field_code;
                }
            }
        }
        const double elapsed = seconds_since(start);
        if (elapsed >= 60.0) {
            ok = false;
            detail = "too slow: " + fmt(elapsed, 1) + "s";
        }
        if (ok)
            detail = std::to_string(comparisons) + " field/strategy recalls exact, " +
                     fmt(elapsed, 1) + "s";
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    report(5, "pipeline recall equals ledger prediction; title-only is optimal", ok,
           detail);
}

// --- 6. statistics suite ------------------------------------------------------

void criterion_statistics() {
    bool ok = true;
    std::string detail = "spearman oracle, AM-GM, aggregates";
    std::mt19937_64 gen(0x57A7);
    for (int i = 0; i < 1000 && ok; ++i) {
        const std::size_t n = 3 + rng::bounded(gen, 40);
        const auto x = ts::tie_bearing_vector(gen, n);
        const auto y = ts::tie_bearing_vector(gen, n);
        const auto mine = spearman(x, y);
        bool x_const = true, y_const = true;
        for (double v : x)
            x_const &= v == x[0];
        for (double v : y)
            y_const &= v == y[0];
        if (x_const || y_const) {
            if (mine) {
                ok = false;
                detail = "spearman defined on a constant vector";
            }
            continue;
        }
        const double want =
            ts::oracle_pearson(ts::oracle_midranks(x), ts::oracle_midranks(y));
        if (!mine || std::abs(*mine - want) > 1e-12) {
            ok = false;
            detail = "spearman off oracle by more than 1e-12";
        }
    }

    if (ok) {
        const bool examples = std::abs(geometric_mean({0, 0, 0}) - 0.0) < 1e-12 &&
                              std::abs(geometric_mean({1, 1, 1}) - 1.0) < 1e-12 &&
                              std::abs(geometric_mean({0, 3}) - 1.0) < 1e-12;
        if (!examples) {
            ok = false;
            detail = "geometric mean examples diverged";
        }
    }
    if (ok) {
        for (int i = 0; i < 500 && ok; ++i) {
            const std::size_t n = 1 + rng::bounded(gen, 15);
            std::vector<long long> counts(n);
            double arith = 0;
            for (auto& c : counts) {
                c = static_cast<long long>(rng::bounded(gen, 40));
                arith += double(c);
            }
            arith /= double(n);
            if (geometric_mean(counts) > arith + 1e-9) {
                ok = false;
                detail = "AM-GM violated";
            }
        }
    }
    if (ok) {
        const Aggregates a = summarize({0.2, 0.4, 0.6, 0.8});
        if (a.min != 0.2 || a.max != 0.8 || a.median != 0.5 || a.mean != 0.5) {
            ok = false;
            detail = "summarize aggregates diverged";
        }
    }
    report(6, "statistics: spearman oracle 1e-12, geometric means, aggregates", ok,
           detail);
}

// --- 7. client contract --------------------------------------------------------

void criterion_client_contract() {
    bool ok = true;
    std::string detail;
    try {
        httplib::Server server;
        server.Get("/evaluate", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"entities":[]})", "application/json");
        });
        const int port = server.bind_to_any_port("127.0.0.1");
        std::thread thread([&server] { server.listen_after_bind(); });
        server.wait_until_ready();

        ClientConfig cfg;
        cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
        cfg.queries_per_second = 2.0;
        auto clock = std::make_shared<VirtualClock>();
        IndexClient client(cfg, clock);
        for (int i = 0; i < 11; ++i)
            client.evaluate("Y=" + std::to_string(1900 + i));
        const auto virtual_elapsed = clock->now();
        if (virtual_elapsed < std::chrono::microseconds(5'000'000)) {
            ok = false;
            detail = "11 calls at 2 qps consumed only " +
                     std::to_string(virtual_elapsed.count()) + "us";
        }

        const long long before = client.ledger().used;
        client.evaluate("Y=1900");  // repeated expression
        if (client.ledger().used != before) {
            ok = false;
            detail = "a repeated expr consumed a transaction";
        }

        const LedgerReport cost = ledger_report({1000, std::nullopt});
        if (std::abs(cost.estimated_cost - 0.22) > 1e-12) {
            ok = false;
            detail = "1000 transactions priced at " + fmt(cost.estimated_cost);
        }
        server.stop();
        thread.join();
        if (ok)
            detail = ">=5s virtual for 11 calls; cache free; 1000 tx = 0.22";
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    report(7, "client pacing, cache and transaction pricing", ok, detail);
}

// --- 8. end-to-end determinism ---------------------------------------------------

void criterion_determinism() {
    bool ok = true;
    std::string detail;
    TempDir tmp("determinism");
    try {
        const auto corpus = ts::make_synthetic_corpus(600, 5, 99);
        const auto input = tmp.path / "corpus.jsonl";
        {
            std::ofstream out(input, std::ios::binary);
            write_records_jsonl(out, corpus);
        }
        PipelineConfig config;
        config.input = input;
        config.input_format = RecordFormat::jsonl;
        config.sample_n = 50;
        config.min_field_size = 20;
        config.seed = 3;
        config.workers = 4;
        config.out_dir = tmp.path / "out";
        CorruptionProfile profile;
        profile.seed = 12;
        profile.p_missing_journal_year = 0.1;
        profile.p_metadata_noise = 0.1;
        profile.p_missing_doi = 0.05;
        config.mock_profile = profile;

        // First run, snapshot, wipe, identical second run.
        run_pipeline(config);
        std::map<std::string, std::string> snapshot;
        for (const auto& entry : std::filesystem::directory_iterator(config.out_dir)) {
            if (!entry.is_regular_file())
                continue;
            std::ifstream in(entry.path(), std::ios::binary);
            std::ostringstream ss;
            ss << in.rdbuf();
            snapshot[entry.path().filename().string()] = ss.str();
        }
        std::filesystem::remove_all(config.out_dir);
        run_pipeline(config);

        std::size_t compared = 0;
        for (const auto& entry : std::filesystem::directory_iterator(config.out_dir)) {
            if (!entry.is_regular_file())
                continue;
            std::ifstream in(entry.path(), std::ios::binary);
            std::ostringstream ss;
            ss << in.rdbuf();
            const auto name = entry.path().filename().string();
            if (!snapshot.count(name)) {
                ok = false;
                detail = "second run created extra file " + name;
                break;
            }
            if (snapshot[name] != ss.str()) {
                ok = false;
                detail = "byte difference in " + name;
                break;
            }
            ++compared;
        }
        if (ok && compared != snapshot.size()) {
            ok = false;
            detail = "file counts differ between runs";
        }
        if (ok)
            detail = std::to_string(compared) + " bundle files byte-identical";
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    report(8, "two identical runs produce byte-identical report bundles", ok, detail);
}

}  // namespace

int main() {
    criterion_country_pearson();
    criterion_normalization_golden();
    criterion_query_roundtrip();
    criterion_matcher_oracle();
    criterion_simulation_fidelity();
    criterion_statistics();
    criterion_client_contract();
    criterion_determinism();
    if (failures) {
        std::printf("%d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("all 8 criteria passed\n");
    return 0;
}
