#include "bibmatch/mockindex.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_map>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "bibmatch/rng.hpp"

namespace bibmatch {

namespace {

constexpr long long kFirstEntityId = 1000001;

std::optional<NormalizedText> try_title(const std::string& raw) {
    try {
        return normalize_title(raw);
    } catch (const Error&) {
        return std::nullopt;
    }
}

std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty())
            out += ' ';
        out += w;
    }
    return out;
}

/// Group key for journal-year dropout. Falls back to the raw journal
/// string when normalization fails so grouping still works.
std::string journal_year_key(const BibRecord& rec) {
    std::string journal;
    try {
        journal = normalize_journal(rec.journal_name).str();
    } catch (const Error&) {
        journal = rec.journal_name;
    }
    return journal + "|" + std::to_string(rec.pub_year);
}

struct QueryTerms {
    const TitleEquals* title = nullptr;
    const YearEquals* year = nullptr;
    const AuthorComposite* author = nullptr;
    const JournalComposite* journal = nullptr;
};

QueryTerms collect_terms(const QueryExpr& expr) {
    QueryTerms terms;
    auto add = [&terms](const QueryExpr& e) {
        if (const auto* t = std::get_if<TitleEquals>(&e.node))
            terms.title = t;
        else if (const auto* y = std::get_if<YearEquals>(&e.node))
            terms.year = y;
        else if (const auto* a = std::get_if<AuthorComposite>(&e.node))
            terms.author = a;
        else if (const auto* j = std::get_if<JournalComposite>(&e.node))
            terms.journal = j;
    };
    if (const auto* conj = std::get_if<AndExpr>(&expr.node)) {
        for (const auto& op : conj->operands)
            add(op);
    } else {
        add(expr);
    }
    return terms;
}

}  // namespace

void CorruptionProfile::validate() const {
    const double probs[] = {p_missing_journal_year, p_alt_language_title,
                            p_erratum_conflation,   p_missing_doi,
                            p_wrong_doi,            p_metadata_noise};
    for (double p : probs) {
        if (p < 0.0 || p > 1.0)
            throw Error("corruption profile: probability out of [0,1]");
    }
    if (p_missing_doi + p_wrong_doi > 1.0)
        throw Error("corruption profile: p_missing_doi + p_wrong_doi > 1");
    if (retrieval_overlap_min < 0.0 || retrieval_overlap_min > 1.0)
        throw Error("corruption profile: retrieval_overlap_min out of [0,1]");
}

CorruptionProfile CorruptionProfile::from_json_text(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("corruption profile: bad JSON: ") + e.what());
    }
    CorruptionProfile p;
    p.p_missing_journal_year = doc.value("p_missing_journal_year", 0.0);
    p.p_alt_language_title = doc.value("p_alt_language_title", 0.0);
    p.p_erratum_conflation = doc.value("p_erratum_conflation", 0.0);
    p.p_missing_doi = doc.value("p_missing_doi", 0.0);
    p.p_wrong_doi = doc.value("p_wrong_doi", 0.0);
    p.p_metadata_noise = doc.value("p_metadata_noise", 0.0);
    p.seed = doc.value("seed", std::uint64_t{0});
    p.retrieval_overlap_min = doc.value("retrieval_overlap_min", 0.8);
    p.validate();
    return p;
}

std::string CorruptionProfile::to_json_text() const {
    return nlohmann::json{{"p_missing_journal_year", p_missing_journal_year},
                          {"p_alt_language_title", p_alt_language_title},
                          {"p_erratum_conflation", p_erratum_conflation},
                          {"p_missing_doi", p_missing_doi},
                          {"p_wrong_doi", p_wrong_doi},
                          {"p_metadata_noise", p_metadata_noise},
                          {"seed", seed},
                          {"retrieval_overlap_min", retrieval_overlap_min}}
        .dump(2);
}

const char* corruption_kind_name(CorruptionKind k) {
    switch (k) {
    case CorruptionKind::alt_language_title:
        return "alt_language_title";
    case CorruptionKind::erratum_conflation:
        return "erratum_conflation";
    case CorruptionKind::missing_doi:
        return "missing_doi";
    case CorruptionKind::wrong_doi:
        return "wrong_doi";
    case CorruptionKind::noise_year:
        return "noise_year";
    case CorruptionKind::noise_author:
        return "noise_author";
    case CorruptionKind::noise_journal:
        return "noise_journal";
    }
    return "?";
}

CorruptionKind corruption_kind_from_name(const std::string& name) {
    for (int k = 0; k <= static_cast<int>(CorruptionKind::noise_journal); ++k) {
        if (name == corruption_kind_name(static_cast<CorruptionKind>(k)))
            return static_cast<CorruptionKind>(k);
    }
    throw Error("unknown corruption kind \"" + name + "\"");
}

bool LedgerEntry::has_kind(CorruptionKind k) const {
    return std::find(kinds.begin(), kinds.end(), k) != kinds.end();
}

void GroundTruthLedger::add(const std::string& record_id, LedgerEntry entry) {
    entries_[record_id] = std::move(entry);
}

const LedgerEntry& GroundTruthLedger::at(const std::string& record_id) const {
    const auto it = entries_.find(record_id);
    if (it == entries_.end())
        throw Error("ledger: unknown record id \"" + record_id + "\"");
    return it->second;
}

std::size_t GroundTruthLedger::count_absent() const {
    std::size_t n = 0;
    for (const auto& [_, e] : entries_)
        n += e.status == LedgerEntry::Status::absent;
    return n;
}

std::size_t GroundTruthLedger::count_kind(CorruptionKind k) const {
    std::size_t n = 0;
    for (const auto& [_, e] : entries_)
        n += e.has_kind(k);
    return n;
}

void GroundTruthLedger::write_jsonl(std::ostream& out) const {
    for (const auto& [record_id, entry] : entries_) {
        const char* status = entry.status == LedgerEntry::Status::indexed_clean
                                 ? "indexed_clean"
                                 : entry.status == LedgerEntry::Status::indexed_corrupted
                                       ? "indexed_corrupted"
                                       : "absent";
        nlohmann::json kinds = nlohmann::json::array();
        for (CorruptionKind k : entry.kinds)
            kinds.push_back(corruption_kind_name(k));
        nlohmann::json obj{{"record_id", record_id},
                           {"status", status},
                           {"kinds", kinds}};
        obj["entity_id"] =
            entry.entity_id.empty() ? nlohmann::json() : nlohmann::json(entry.entity_id);
        out << obj.dump() << "\n";
    }
}

GroundTruthLedger GroundTruthLedger::read_jsonl(std::istream& in) {
    GroundTruthLedger ledger;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        const nlohmann::json obj = nlohmann::json::parse(line);
        LedgerEntry entry;
        const std::string status = obj.at("status").get<std::string>();
        entry.status = status == "indexed_clean" ? LedgerEntry::Status::indexed_clean
                       : status == "indexed_corrupted"
                           ? LedgerEntry::Status::indexed_corrupted
                           : LedgerEntry::Status::absent;
        for (const auto& k : obj.at("kinds"))
            entry.kinds.push_back(corruption_kind_from_name(k.get<std::string>()));
        if (obj.contains("entity_id") && !obj["entity_id"].is_null())
            entry.entity_id = obj["entity_id"].get<std::string>();
        ledger.add(obj.at("record_id").get<std::string>(), std::move(entry));
    }
    return ledger;
}

std::vector<std::string> mock_stored_title_words(const BibRecord& record,
                                                 const std::vector<CorruptionKind>& kinds) {
    const NormalizedText norm = normalize_title(record.title);
    std::vector<std::string> words;
    for (const auto w : norm.words())
        words.emplace_back(w);

    const bool alt = std::find(kinds.begin(), kinds.end(),
                               CorruptionKind::alt_language_title) != kinds.end();
    const bool erratum = std::find(kinds.begin(), kinds.end(),
                                   CorruptionKind::erratum_conflation) != kinds.end();
    if (alt) {
        // No real translation exists, so the surrogate reverses each word
        // and prefixes a language token; that defeats word-overlap
        // retrieval the way a true alternate-language title would.
        for (auto& w : words)
            std::reverse(w.begin(), w.end());
        std::string lang = "xx";
        if (record.title_language) {
            try {
                lang = normalize_title(*record.title_language).str();
            } catch (const Error&) {
            }
        }
        words.insert(words.begin(), lang);
    }
    if (erratum)
        words.insert(words.begin(), {"erratum", "to"});
    return words;
}

std::pair<MockIndex, GroundTruthLedger> MockIndex::build(const std::vector<BibRecord>& corpus,
                                                         const CorruptionProfile& profile) {
    profile.validate();
    {
        std::set<std::string> ids;
        for (const auto& rec : corpus) {
            if (!ids.insert(rec.record_id).second)
                throw Error("mock index: duplicate record id \"" + rec.record_id + "\"");
        }
    }

    // Journal-year dropout is decided once per group.
    std::map<std::string, bool> group_dropped;
    for (const auto& rec : corpus) {
        const std::string key = journal_year_key(rec);
        if (group_dropped.count(key))
            continue;
        std::mt19937_64 gen = rng::substream(profile.seed, "group:" + key);
        group_dropped[key] = rng::unit(gen) < profile.p_missing_journal_year;
    }

    MockIndex index;
    index.retrieval_overlap_min_ = profile.retrieval_overlap_min;
    GroundTruthLedger ledger;
    long long next_id = kFirstEntityId;

    for (const auto& rec : corpus) {
        LedgerEntry entry;
        if (group_dropped.at(journal_year_key(rec))) {
            ledger.add(rec.record_id, std::move(entry));
            continue;
        }
        if (!try_title(rec.title)) {
            // Nothing indexable remains of the title; treat as absent.
            ledger.add(rec.record_id, std::move(entry));
            continue;
        }

        // Fixed draw order per record; each record has its own substream
        // so corpus order does not matter.
        std::mt19937_64 gen = rng::substream(profile.seed, "record:" + rec.record_id);
        const double u_alt = rng::unit(gen);
        const double u_erratum = rng::unit(gen);
        const double u_doi = rng::unit(gen);
        const double u_noise = rng::unit(gen);

        if (u_alt < profile.p_alt_language_title)
            entry.kinds.push_back(CorruptionKind::alt_language_title);
        if (u_erratum < profile.p_erratum_conflation)
            entry.kinds.push_back(CorruptionKind::erratum_conflation);

        const bool doi_missing = rec.doi && u_doi < profile.p_missing_doi;
        const bool doi_wrong =
            rec.doi && !doi_missing && u_doi < profile.p_missing_doi + profile.p_wrong_doi;
        if (doi_missing)
            entry.kinds.push_back(CorruptionKind::missing_doi);
        if (doi_wrong)
            entry.kinds.push_back(CorruptionKind::wrong_doi);

        int metadata_noise_field = -1;
        bool year_minus = false;
        if (u_noise < profile.p_metadata_noise) {
            metadata_noise_field = static_cast<int>(rng::bounded(gen, 3));
            if (metadata_noise_field == 0) {
                year_minus = rng::bounded(gen, 2) == 0;
                entry.kinds.push_back(CorruptionKind::noise_year);
            } else if (metadata_noise_field == 1) {
                entry.kinds.push_back(CorruptionKind::noise_author);
            } else {
                entry.kinds.push_back(CorruptionKind::noise_journal);
            }
        }
        const long long cc_jitter = static_cast<long long>(rng::bounded(gen, 5)) - 2;

        IndexedDoc doc;
        doc.id_num = next_id++;
        doc.entity_id = std::to_string(doc.id_num);
        doc.source_record_id = rec.record_id;
        doc.title = join_words(mock_stored_title_words(rec, entry.kinds));
        doc.norm_title = NormalizedText::trusted(doc.title);
        doc.year = rec.pub_year + (metadata_noise_field == 0 ? (year_minus ? -1 : 1) : 0);

        try {
            NormalizedText author =
                normalize_author(rec.first_author_surname, rec.first_author_given);
            if (metadata_noise_field == 1) {
                // Perturb the surname portion of the normalized name.
                std::string s = author.str();
                const std::size_t space = s.find(' ');
                s.insert(space == std::string::npos ? 0 : space + 1, "z");
                author = NormalizedText::trusted(std::move(s));
            }
            doc.author = std::move(author);
        } catch (const Error&) {
        }
        try {
            NormalizedText journal = normalize_journal(rec.journal_name);
            if (metadata_noise_field == 2)
                journal = NormalizedText::trusted("z" + journal.str());
            doc.journal = std::move(journal);
        } catch (const Error&) {
        }

        if (std::find(entry.kinds.begin(), entry.kinds.end(),
                      CorruptionKind::erratum_conflation) != entry.kinds.end()) {
            doc.doi = doi_missing ? std::optional<std::string>()
                                  : std::optional<std::string>("10.9999/erratum/" +
                                                               doc.entity_id);
        } else if (doi_missing) {
            doc.doi = std::nullopt;
        } else if (doi_wrong) {
            doc.doi = "10.9999/wrong/" + doc.entity_id;
        } else {
            doc.doi = rec.doi;
        }

        doc.citation_count = std::max<long long>(0, rec.citation_count.value_or(0) + cc_jitter);

        entry.status = entry.kinds.empty() ? LedgerEntry::Status::indexed_clean
                                           : LedgerEntry::Status::indexed_corrupted;
        entry.entity_id = doc.entity_id;
        ledger.add(rec.record_id, std::move(entry));

        const auto doc_index = static_cast<std::uint32_t>(index.docs_.size());
        std::set<std::string_view> distinct;
        for (const auto w : doc.norm_title.words())
            distinct.insert(w);
        doc.n_title_words = distinct.size();
        for (const auto w : distinct)
            index.title_postings_[std::string(w)].push_back(doc_index);
        index.docs_.push_back(std::move(doc));
    }
    return {std::move(index), std::move(ledger)};
}

std::vector<CandidateResult> MockIndex::search(const std::string& expr, int count) const {
    return search(parse_query(expr), count);
}

std::vector<CandidateResult> MockIndex::search(const QueryExpr& expr, int count) const {
    const QueryTerms terms = collect_terms(expr);

    struct Hit {
        const IndexedDoc* doc;
        double overlap;
    };
    std::vector<Hit> hits;

    const auto other_terms_match = [&terms](const IndexedDoc& doc) {
        if (terms.year && doc.year != terms.year->year)
            return false;
        if (terms.author && (!doc.author || !(*doc.author == terms.author->author)))
            return false;
        if (terms.journal && (!doc.journal || !(*doc.journal == terms.journal->journal)))
            return false;
        return true;
    };

    if (terms.title) {
        // Walk the posting lists: any document matching by equality or by
        // overlap shares at least one word with the query.
        std::set<std::string_view> query_words;
        for (const auto w : terms.title->title.words())
            query_words.insert(w);
        const std::size_t qn = query_words.size();
        std::unordered_map<std::uint32_t, std::size_t> shared;
        for (const auto w : query_words) {
            const auto it = title_postings_.find(std::string(w));
            if (it == title_postings_.end())
                continue;
            for (const std::uint32_t idx : it->second)
                ++shared[idx];
        }
        for (const auto& [idx, s] : shared) {
            const IndexedDoc& doc = docs_[idx];
            const std::size_t uni = qn + doc.n_title_words - s;
            const double overlap =
                uni == 0 ? 0.0 : static_cast<double>(s) / static_cast<double>(uni);
            const bool match = doc.norm_title == terms.title->title ||
                               overlap >= retrieval_overlap_min_;
            if (match && other_terms_match(doc))
                hits.push_back({&doc, overlap});
        }
    } else {
        for (const auto& doc : docs_) {
            if (other_terms_match(doc))
                hits.push_back({&doc, 0.0});
        }
    }

    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
        if (a.overlap != b.overlap)
            return a.overlap > b.overlap;
        return a.doc->id_num < b.doc->id_num;
    });
    if (count < 0)
        count = 0;
    if (hits.size() > static_cast<std::size_t>(count))
        hits.resize(static_cast<std::size_t>(count));

    std::vector<CandidateResult> out;
    out.reserve(hits.size());
    for (const Hit& hit : hits) {
        const IndexedDoc& doc = *hit.doc;
        CandidateResult cand;
        cand.entity_id = doc.entity_id;
        cand.title = doc.title;
        cand.pub_year = doc.year;
        if (doc.author)
            cand.first_author = doc.author->str();
        if (doc.journal)
            cand.journal_name = doc.journal->str();
        cand.doi = doc.doi;
        cand.citation_count = doc.citation_count;
        out.push_back(std::move(cand));
    }
    return out;
}

bool ledger_predicts_doi_match(const BibRecord& record, const LedgerEntry& entry,
                               Strategy strategy, double retrieval_overlap_min) {
    if (entry.status == LedgerEntry::Status::absent)
        return false;
    if (!record.doi)
        return false;
    if (entry.has_kind(CorruptionKind::missing_doi) ||
        entry.has_kind(CorruptionKind::wrong_doi) ||
        entry.has_kind(CorruptionKind::erratum_conflation))
        return false;

    NormalizedText query_title;
    try {
        query_title = normalize_title(record.title);
    } catch (const Error&) {
        return false;
    }
    const std::string stored = join_words(mock_stored_title_words(record, entry.kinds));
    const NormalizedText stored_title = NormalizedText::trusted(stored);
    if (!(stored_title == query_title) &&
        title_word_overlap(query_title, stored_title) < retrieval_overlap_min)
        return false;

    const bool wants_author =
        strategy == Strategy::full || strategy == Strategy::author_title;
    const bool wants_journal =
        strategy == Strategy::full || strategy == Strategy::journal_title;
    const bool wants_year = strategy == Strategy::full || strategy == Strategy::year_title;

    if (wants_author) {
        try {
            normalize_author(record.first_author_surname, record.first_author_given);
        } catch (const Error&) {
            return false;  // the query itself cannot be built
        }
        if (entry.has_kind(CorruptionKind::noise_author))
            return false;
    }
    if (wants_journal) {
        try {
            normalize_journal(record.journal_name);
        } catch (const Error&) {
            return false;
        }
        if (entry.has_kind(CorruptionKind::noise_journal))
            return false;
    }
    if (wants_year && entry.has_kind(CorruptionKind::noise_year))
        return false;
    return true;
}

double predicted_doi_recall(const std::vector<BibRecord>& sample,
                            const GroundTruthLedger& ledger, Strategy strategy,
                            double retrieval_overlap_min) {
    if (sample.empty())
        return 0.0;
    std::size_t matched = 0;
    for (const auto& rec : sample) {
        matched += ledger_predicts_doi_match(rec, ledger.at(rec.record_id), strategy,
                                             retrieval_overlap_min);
    }
    return static_cast<double>(matched) / static_cast<double>(sample.size());
}

struct MockIndexServer::Impl {
    explicit Impl(MockIndex idx) : index(std::move(idx)) {}

    MockIndex index;
    httplib::Server server;
    std::thread thread;
    std::string host;
    int port = 0;
};

MockIndexServer::MockIndexServer(MockIndex index)
    : impl_(std::make_unique<Impl>(std::move(index))) {
    impl_->server.Get("/evaluate", [this](const httplib::Request& req,
                                          httplib::Response& res) {
        if (!req.has_param("expr")) {
            res.status = 400;
            res.set_content(nlohmann::json{{"error", {{"message", "missing expr parameter"}}}}
                                .dump(),
                            "application/json");
            return;
        }
        const std::string expr = req.get_param_value("expr");
        int count = 10;
        if (req.has_param("count")) {
            try {
                count = std::stoi(req.get_param_value("count"));
            } catch (const std::exception&) {
                res.status = 400;
                res.set_content(
                    nlohmann::json{{"error", {{"message", "bad count parameter"}}}}.dump(),
                    "application/json");
                return;
            }
        }
        std::set<std::string> attrs;
        if (req.has_param("attributes")) {
            std::stringstream ss(req.get_param_value("attributes"));
            std::string a;
            while (std::getline(ss, a, ','))
                attrs.insert(a);
        }
        const auto want = [&attrs](const char* name) {
            return attrs.empty() || attrs.count(name) > 0;
        };

        std::vector<CandidateResult> results;
        try {
            results = impl_->index.search(expr, count);
        } catch (const ParseError& e) {
            res.status = 400;
            res.set_content(nlohmann::json{{"error",
                                            {{"message", e.what()},
                                             {"offset", e.offset()}}}}
                                .dump(),
                            "application/json");
            return;
        }

        nlohmann::json entities = nlohmann::json::array();
        for (const auto& cand : results) {
            nlohmann::json entity{{"Id", std::stoll(cand.entity_id)}};
            if (want("Ti"))
                entity["Ti"] = cand.title;
            if (want("Y") && cand.pub_year)
                entity["Y"] = *cand.pub_year;
            if (want("CC"))
                entity["CC"] = cand.citation_count;
            if (want("AA.AuN") && cand.first_author)
                entity["AA"] = nlohmann::json::array({{{"AuN", *cand.first_author}}});
            if (want("J.JN") && cand.journal_name)
                entity["J"] = {{"JN", *cand.journal_name}};
            if (want("E.DOI") && cand.doi)
                entity["E"] = {{"DOI", *cand.doi}};
            entities.push_back(std::move(entity));
        }
        res.set_content(nlohmann::json{{"expr", expr}, {"entities", entities}}.dump(),
                        "application/json");
    });
}

MockIndexServer::~MockIndexServer() {
    stop();
}

int MockIndexServer::start(const std::string& host, int port) {
    impl_->host = host;
    if (port == 0) {
        impl_->port = impl_->server.bind_to_any_port(host);
        if (impl_->port < 0)
            throw Error("mock server: failed to bind to any port on " + host);
    } else {
        if (!impl_->server.bind_to_port(host, port))
            throw Error("mock server: failed to bind " + host + ":" + std::to_string(port));
        impl_->port = port;
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return impl_->port;
}

void MockIndexServer::stop() {
    if (impl_->thread.joinable()) {
        impl_->server.stop();
        impl_->thread.join();
    }
}

std::string MockIndexServer::base_url() const {
    return "http://" + impl_->host + ":" + std::to_string(impl_->port);
}

}  // namespace bibmatch
