#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "bibmatch/corpus.hpp"
#include "bibmatch/matcher.hpp"
#include "bibmatch/queryexpr.hpp"

namespace bibmatch {

/// Seeded error-injection parameters for the simulated index.
struct CorruptionProfile {
    double p_missing_journal_year = 0.0;  // whole journal-year groups absent
    double p_alt_language_title = 0.0;    // indexed under an alternate-language title
    double p_erratum_conflation = 0.0;    // record replaced by its erratum
    double p_missing_doi = 0.0;
    double p_wrong_doi = 0.0;
    double p_metadata_noise = 0.0;  // one of year/author/journal perturbed
    std::uint64_t seed = 0;

    /// Approximate-title retrieval threshold of the simulated service.
    /// A synthetic parameter, deliberately below the matcher's 0.85.
    double retrieval_overlap_min = 0.8;

    void validate() const;  // throws on out-of-range probabilities
    static CorruptionProfile from_json_text(const std::string& text);
    std::string to_json_text() const;
};

enum class CorruptionKind {
    alt_language_title,
    erratum_conflation,
    missing_doi,
    wrong_doi,
    noise_year,
    noise_author,
    noise_journal,
};

const char* corruption_kind_name(CorruptionKind k);
CorruptionKind corruption_kind_from_name(const std::string& name);

struct LedgerEntry {
    enum class Status { indexed_clean, indexed_corrupted, absent };
    Status status = Status::absent;
    std::vector<CorruptionKind> kinds;
    std::string entity_id;  // empty when absent

    bool has_kind(CorruptionKind k) const;
};

/// Per-record truth about what the index build did, keyed by record_id.
class GroundTruthLedger {
public:
    void add(const std::string& record_id, LedgerEntry entry);
    const LedgerEntry& at(const std::string& record_id) const;  // throws on miss
    std::size_t size() const { return entries_.size(); }
    std::size_t count_absent() const;
    std::size_t count_kind(CorruptionKind k) const;
    const std::map<std::string, LedgerEntry>& entries() const { return entries_; }

    void write_jsonl(std::ostream& out) const;
    static GroundTruthLedger read_jsonl(std::istream& in);

private:
    std::map<std::string, LedgerEntry> entries_;
};

/// One stored document in the simulated index.
struct IndexedDoc {
    long long id_num = 0;
    std::string entity_id;
    std::string source_record_id;
    std::string title;
    NormalizedText norm_title;
    std::size_t n_title_words = 0;  // distinct words, for overlap ranking
    int year = 0;
    std::optional<NormalizedText> author;
    std::optional<NormalizedText> journal;
    std::optional<std::string> doi;
    long long citation_count = 0;
};

/// The normalized word list the index stores for a record given its
/// corruption kinds: alternate-language titles get a language prefix
/// token and each word reversed; erratum conflation prepends
/// "erratum to". Shared by the builder and the ledger predictor.
std::vector<std::string> mock_stored_title_words(const BibRecord& record,
                                                 const std::vector<CorruptionKind>& kinds);

/// Deterministic simulated academic index.
class MockIndex {
public:
    static std::pair<MockIndex, GroundTruthLedger> build(const std::vector<BibRecord>& corpus,
                                                         const CorruptionProfile& profile);

    /// Evaluates the wire expression over the index: titles match on
    /// normalized equality or word overlap >= the retrieval threshold,
    /// other terms on normalized equality. Results are ranked by overlap
    /// descending then entity id ascending and truncated to `count`.
    std::vector<CandidateResult> search(const std::string& expr, int count) const;
    std::vector<CandidateResult> search(const QueryExpr& expr, int count) const;

    const std::vector<IndexedDoc>& docs() const { return docs_; }
    double retrieval_overlap_min() const { return retrieval_overlap_min_; }

private:
    std::vector<IndexedDoc> docs_;
    // Inverted title-word index so approximate-title queries only touch
    // documents sharing at least one word with the query.
    std::map<std::string, std::vector<std::uint32_t>> title_postings_;
    double retrieval_overlap_min_ = 0.8;
};

/// Whether, per the ledger, `strategy`'s query for `record` retrieves the
/// record's own document with an intact DOI. Exact, not probabilistic:
/// this is the oracle the measured DOI-mode recall must equal. Assumes
/// corpora whose normalized titles do not collide past the retrieval
/// threshold (the generated corpora guarantee it).
bool ledger_predicts_doi_match(const BibRecord& record, const LedgerEntry& entry,
                               Strategy strategy, double retrieval_overlap_min);

double predicted_doi_recall(const std::vector<BibRecord>& sample,
                            const GroundTruthLedger& ledger, Strategy strategy,
                            double retrieval_overlap_min);

/// Serves a MockIndex over HTTP with the /evaluate wire contract.
class MockIndexServer {
public:
    explicit MockIndexServer(MockIndex index);
    ~MockIndexServer();

    /// Binds and starts serving on a background thread; port 0 picks an
    /// ephemeral port. Returns the bound port; throws on bind failure.
    int start(const std::string& host, int port);
    void stop();
    std::string base_url() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace bibmatch
