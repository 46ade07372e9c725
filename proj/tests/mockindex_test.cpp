#include "bibmatch/mockindex.hpp"

#include <doctest.h>

#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "bibmatch/indexclient.hpp"
#include "support/synthetic_corpus.hpp"

using namespace bibmatch;
using testsupport::make_synthetic_corpus;

namespace {

CorruptionProfile clean_profile(std::uint64_t seed = 1) {
    CorruptionProfile profile;
    profile.seed = seed;
    return profile;
}

std::string ledger_text(const GroundTruthLedger& ledger) {
    std::ostringstream os;
    ledger.write_jsonl(os);
    return os.str();
}

}  // namespace

TEST_CASE("zero corruption indexes every record cleanly under its normalized title") {
    const auto corpus = make_synthetic_corpus(100, 4, 11);
    const auto [index, ledger] = MockIndex::build(corpus, clean_profile());
    CHECK(index.docs().size() == corpus.size());
    CHECK(ledger.count_absent() == 0);
    for (const auto& rec : corpus) {
        const LedgerEntry& entry = ledger.at(rec.record_id);
        CHECK(entry.status == LedgerEntry::Status::indexed_clean);
        CHECK(entry.kinds.empty());
    }
    for (std::size_t i = 0; i < corpus.size(); ++i)
        CHECK(index.docs()[i].norm_title == normalize_title(corpus[i].title));
}

TEST_CASE("p_missing_journal_year = 1 wipes the index") {
    const auto corpus = make_synthetic_corpus(60, 3, 5);
    CorruptionProfile profile = clean_profile();
    profile.p_missing_journal_year = 1.0;
    const auto [index, ledger] = MockIndex::build(corpus, profile);
    CHECK(index.docs().empty());
    CHECK(ledger.count_absent() == corpus.size());
}

TEST_CASE("missing-doi counts stay inside the binomial 3-sigma band") {
    const auto corpus = make_synthetic_corpus(1000, 5, 77);
    CorruptionProfile profile = clean_profile(77);
    profile.p_missing_doi = 0.1;
    const auto [index, ledger] = MockIndex::build(corpus, profile);
    const std::size_t missing = ledger.count_kind(CorruptionKind::missing_doi);
    CHECK(missing >= 69);
    CHECK(missing <= 131);
}

TEST_CASE("builds are deterministic and conserve records") {
    const auto corpus = make_synthetic_corpus(300, 5, 123);
    CorruptionProfile profile = clean_profile(99);
    profile.p_missing_journal_year = 0.1;
    profile.p_alt_language_title = 0.05;
    profile.p_erratum_conflation = 0.05;
    profile.p_missing_doi = 0.05;
    profile.p_wrong_doi = 0.05;
    profile.p_metadata_noise = 0.1;

    const auto [index_a, ledger_a] = MockIndex::build(corpus, profile);
    const auto [index_b, ledger_b] = MockIndex::build(corpus, profile);
    CHECK(ledger_text(ledger_a) == ledger_text(ledger_b));
    REQUIRE(index_a.docs().size() == index_b.docs().size());
    for (std::size_t i = 0; i < index_a.docs().size(); ++i) {
        CHECK(index_a.docs()[i].title == index_b.docs()[i].title);
        CHECK(index_a.docs()[i].doi == index_b.docs()[i].doi);
        CHECK(index_a.docs()[i].citation_count == index_b.docs()[i].citation_count);
    }

    // conservation: indexed + absent = corpus
    CHECK(index_a.docs().size() + ledger_a.count_absent() == corpus.size());

    // ledger jsonl round-trips
    std::istringstream in(ledger_text(ledger_a));
    const GroundTruthLedger back = GroundTruthLedger::read_jsonl(in);
    CHECK(ledger_text(back) == ledger_text(ledger_a));
}

TEST_CASE("search semantics: exact title first, conjunction filters, 0.8 threshold") {
    std::vector<BibRecord> corpus;
    BibRecord rec;
    rec.record_id = "r1";
    rec.title = "alpha beta gamma delta epsilon";
    rec.first_author_surname = "smith";
    rec.first_author_given = "j";
    rec.journal_name = "venue one";
    rec.pub_year = 2012;
    rec.doi = "10.1/one";
    rec.citation_count = 5;
    rec.field_codes = {"1111"};
    corpus.push_back(rec);
    rec.record_id = "r2";
    rec.title = "totally different words entirely";
    rec.doi = "10.1/two";
    corpus.push_back(rec);

    const auto [index, ledger] = MockIndex::build(corpus, clean_profile());

    const auto exact = index.search("Ti='alpha beta gamma delta epsilon'", 10);
    REQUIRE(exact.size() == 1);
    CHECK(exact[0].entity_id == ledger.at("r1").entity_id);

    CHECK(index.search("And(Ti='alpha beta gamma delta epsilon',Y=2013)", 10).empty());
    CHECK(index.search("And(Ti='alpha beta gamma delta epsilon',Y=2012)", 10).size() == 1);

    // 4 shared words of 5 -> jaccard 4/6 < 0.8: no match
    CHECK(index.search("Ti='alpha beta gamma delta zeta'", 10).empty());
    // drop one word: jaccard 4/5 = 0.8 exactly: match
    CHECK(index.search("Ti='alpha beta gamma delta'", 10).size() == 1);

    CHECK(index.search("Composite(AA.AuN='j smith')", 10).size() == 2);
    CHECK(index.search("And(Composite(J.JN='venue one'),Ti='alpha beta gamma delta "
                       "epsilon')",
                       10)
              .size() == 1);

    // count truncation
    CHECK(index.search("Composite(AA.AuN='j smith')", 1).size() == 1);
}

TEST_CASE("alt-language and erratum variants behave like the real failure modes") {
    std::vector<BibRecord> corpus;
    BibRecord rec;
    rec.record_id = "r1";
    rec.title = "splenic tuberculosis in patient cohort review";
    rec.first_author_surname = "ruiz";
    rec.first_author_given = "m";
    rec.journal_name = "revista clinica";
    rec.pub_year = 2012;
    rec.doi = "10.1/es";
    rec.field_codes = {"2706"};
    rec.title_language = "es";
    corpus.push_back(rec);

    CorruptionProfile alt = clean_profile();
    alt.p_alt_language_title = 1.0;
    {
        const auto [index, ledger] = MockIndex::build(corpus, alt);
        REQUIRE(index.docs().size() == 1);
        CHECK(ledger.at("r1").has_kind(CorruptionKind::alt_language_title));
        // the surrogate title keeps the language token and reversed words
        CHECK(index.docs()[0].title.substr(0, 3) == "es ");
        // a title query no longer finds it
        const std::string expr =
            serialize_query(build_query(corpus[0], Strategy::title_only));
        CHECK(index.search(expr, 10).empty());
        CHECK_FALSE(ledger_predicts_doi_match(corpus[0], ledger.at("r1"),
                                              Strategy::title_only, 0.8));
    }

    CorruptionProfile erratum = clean_profile();
    erratum.p_erratum_conflation = 1.0;
    {
        const auto [index, ledger] = MockIndex::build(corpus, erratum);
        REQUIRE(index.docs().size() == 1);
        CHECK(index.docs()[0].title.substr(0, 11) == "erratum to ");
        // 6 title words -> overlap 6/8 = 0.75 < 0.8: the erratum hides the
        // record from title search; wider titles would still be found but
        // then fail the doi check.
        const std::string expr =
            serialize_query(build_query(corpus[0], Strategy::title_only));
        CHECK(index.search(expr, 10).empty());
        CHECK(index.docs()[0].doi->find("erratum") != std::string::npos);
        CHECK_FALSE(ledger_predicts_doi_match(corpus[0], ledger.at("r1"),
                                              Strategy::title_only, 0.8));
    }
}

TEST_CASE("metadata noise defeats exactly the strategies that query the field") {
    auto corpus = make_synthetic_corpus(40, 2, 3);
    CorruptionProfile profile = clean_profile(3);
    profile.p_metadata_noise = 1.0;
    const auto [index, ledger] = MockIndex::build(corpus, profile);
    for (const auto& rec : corpus) {
        const LedgerEntry& entry = ledger.at(rec.record_id);
        REQUIRE(entry.status == LedgerEntry::Status::indexed_corrupted);
        // title-only retrieval is unaffected by metadata noise
        CHECK(ledger_predicts_doi_match(rec, entry, Strategy::title_only, 0.8));
        const bool year_ok =
            ledger_predicts_doi_match(rec, entry, Strategy::year_title, 0.8);
        const bool author_ok =
            ledger_predicts_doi_match(rec, entry, Strategy::author_title, 0.8);
        const bool journal_ok =
            ledger_predicts_doi_match(rec, entry, Strategy::journal_title, 0.8);
        CHECK((!year_ok || !author_ok || !journal_ok));
        CHECK_FALSE(ledger_predicts_doi_match(rec, entry, Strategy::full, 0.8));

        // the prediction must agree with an actual search + doi comparison
        const std::string expr =
            serialize_query(build_query(rec, Strategy::year_title));
        const auto results = index.search(expr, 10);
        bool found = false;
        for (const auto& cand : results)
            found |= cand.doi && normalize_doi(*cand.doi).str() ==
                                     normalize_doi(*rec.doi).str();
        CHECK(found == year_ok);
    }
}

TEST_CASE("predicted recall equals a hand count over the ledger") {
    const auto corpus = make_synthetic_corpus(200, 4, 9);
    CorruptionProfile profile = clean_profile(9);
    profile.p_missing_doi = 0.2;
    const auto [index, ledger] = MockIndex::build(corpus, profile);
    std::size_t expected = 0;
    for (const auto& rec : corpus)
        expected += !ledger.at(rec.record_id).has_kind(CorruptionKind::missing_doi);
    CHECK(predicted_doi_recall(corpus, ledger, Strategy::title_only, 0.8) ==
          doctest::Approx(double(expected) / double(corpus.size())));
}

TEST_CASE("the http service answers the wire contract") {
    const auto corpus = make_synthetic_corpus(30, 2, 21);
    auto [index, ledger] = MockIndex::build(corpus, clean_profile());
    const std::string expr = serialize_query(build_query(corpus[0], Strategy::title_only));
    const std::string own_entity = ledger.at(corpus[0].record_id).entity_id;

    MockIndexServer server(std::move(index));
    const int port = server.start("127.0.0.1", 0);
    CHECK(port > 0);

    httplib::Client http(server.base_url());

    // valid expr: 200 with entities
    auto res = http.Get("/evaluate?expr=" + url_encode(expr) +
                        "&count=10&attributes=Ti,Y,AA.AuN,J.JN,E.DOI,CC,Id");
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto body = nlohmann::json::parse(res->body);
    REQUIRE(body.contains("entities"));
    REQUIRE(body["entities"].size() == 1);
    CHECK(body["entities"][0]["Id"].get<long long>() == std::stoll(own_entity));
    CHECK(body["entities"][0].contains("E"));

    // unbalanced quote: 400 with a byte offset
    auto bad = http.Get("/evaluate?expr=" + url_encode("Ti='a"));
    REQUIRE(bad);
    CHECK(bad->status == 400);
    CHECK(nlohmann::json::parse(bad->body)["error"].contains("offset"));

    // missing expr parameter: 400
    auto missing = http.Get("/evaluate");
    REQUIRE(missing);
    CHECK(missing->status == 400);

    // unknown path: 404
    auto unknown = http.Get("/nope");
    REQUIRE(unknown);
    CHECK(unknown->status == 404);

    // simultaneous identical requests produce identical bodies
    std::string body_a, body_b;
    std::thread ta([&] {
        body_a = http.Get("/evaluate?expr=" + url_encode(expr))->body;
    });
    httplib::Client http2(server.base_url());
    std::thread tb([&] {
        body_b = http2.Get("/evaluate?expr=" + url_encode(expr))->body;
    });
    ta.join();
    tb.join();
    CHECK(body_a == body_b);
    CHECK_FALSE(body_a.empty());

    // attribute filtering drops unrequested keys but keeps Id
    auto slim = http.Get("/evaluate?expr=" + url_encode(expr) + "&attributes=Ti");
    const auto slim_body = nlohmann::json::parse(slim->body);
    CHECK(slim_body["entities"][0].contains("Id"));
    CHECK(slim_body["entities"][0].contains("Ti"));
    CHECK_FALSE(slim_body["entities"][0].contains("E"));

    server.stop();
}

TEST_CASE("profile json round-trips and validates") {
    CorruptionProfile profile;
    profile.p_missing_journal_year = 0.05;
    profile.p_alt_language_title = 0.03;
    profile.p_wrong_doi = 0.02;
    profile.p_missing_doi = 0.02;
    profile.p_metadata_noise = 0.05;
    profile.seed = 42;
    const CorruptionProfile back =
        CorruptionProfile::from_json_text(profile.to_json_text());
    CHECK(back.p_missing_journal_year == profile.p_missing_journal_year);
    CHECK(back.seed == 42);

    CHECK_THROWS_AS(CorruptionProfile::from_json_text(R"({"p_missing_doi":1.5})"), Error);
    CHECK_THROWS_AS(
        CorruptionProfile::from_json_text(R"({"p_missing_doi":0.6,"p_wrong_doi":0.6})"),
        Error);
}

TEST_CASE("client candidates from the mock service satisfy the query predicate") {
    const auto corpus = make_synthetic_corpus(80, 2, 13);
    CorruptionProfile profile = clean_profile(13);
    profile.p_metadata_noise = 0.2;
    auto [index, ledger] = MockIndex::build(corpus, profile);
    MockIndexServer server(std::move(index));
    server.start("127.0.0.1", 0);

    ClientConfig cfg;
    cfg.base_url = server.base_url();
    cfg.queries_per_second = 10000;
    IndexClient client(cfg);

    for (std::size_t i = 0; i < 10; ++i) {
        const auto& rec = corpus[i];
        const NormalizedText want = normalize_title(rec.title);
        const auto candidates =
            client.evaluate(serialize_query(build_query(rec, Strategy::title_only)));
        for (const auto& cand : candidates) {
            const NormalizedText got = normalize_title(cand.title);
            const bool satisfied =
                got == want || title_word_overlap(want, got) >= 0.8;
            CHECK(satisfied);
        }
    }
    server.stop();
}

TEST_CASE("binding an unavailable address fails loudly") {
    const auto corpus = make_synthetic_corpus(5, 1, 2);
    auto [index, ledger] = MockIndex::build(corpus, clean_profile());
    MockIndexServer server(std::move(index));
    // 192.0.2.0/24 is reserved for documentation; no local interface has it
    CHECK_THROWS_AS(server.start("192.0.2.1", 4), Error);
}
