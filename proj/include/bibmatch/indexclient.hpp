#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "bibmatch/clock.hpp"
#include "bibmatch/error.hpp"
#include "bibmatch/matcher.hpp"

namespace bibmatch {

struct ClientConfig {
    std::string base_url;  // e.g. "http://127.0.0.1:8080"
    std::string api_key;
    double queries_per_second = 5.0;
    int max_retries = 3;
    int per_query_count = 10;
    std::optional<long long> monthly_budget;  // transactions
    std::string attributes = "Ti,Y,AA.AuN,J.JN,E.DOI,CC,Id";
    std::optional<std::filesystem::path> cache_dir;  // unset: in-memory cache only
};

struct TransactionLedger {
    long long used = 0;
    std::optional<long long> budget;
};

struct LedgerReport {
    long long used = 0;
    std::optional<long long> remaining;
    double estimated_cost = 0.0;  // currency units at kCostPerThousand
};

constexpr double kCostPerThousandTransactions = 0.22;

LedgerReport ledger_report(const TransactionLedger& ledger);

/// HTTP client for the /evaluate endpoint: token-bucket pacing, retry
/// with exponential backoff on 429/5xx, response caching keyed by the
/// query expression (repeats cost zero transactions), and a transaction
/// budget checked before any network call. Safe for concurrent callers;
/// identical in-flight expressions are coalesced into one request.
class IndexClient {
public:
    explicit IndexClient(ClientConfig config,
                         std::shared_ptr<Clock> clock = std::make_shared<SystemClock>());

    /// Runs one query; `expr` must be grammar-valid wire text.
    std::vector<CandidateResult> evaluate(const std::string& expr);

    TransactionLedger ledger() const;

    /// Parses a response body ({"entities":[...]}) into candidates.
    /// Throws Error carrying the raw body on malformed JSON.
    static std::vector<CandidateResult> parse_entities(const std::string& body);

private:
    std::string fetch_or_wait(const std::string& expr);
    std::string http_get(const std::string& expr);
    std::optional<std::string> cache_lookup(const std::string& expr);
    void cache_store(const std::string& expr, const std::string& body);
    std::filesystem::path cache_path(const std::string& expr) const;

    ClientConfig config_;
    std::shared_ptr<Clock> clock_;
    std::chrono::microseconds pacing_interval_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::map<std::string, std::string> memory_cache_;
    std::map<std::string, bool> in_flight_;  // true once finished (failed)
    TransactionLedger ledger_;
    std::chrono::microseconds next_slot_{0};
};

/// Percent-encodes a string for use as a URL query parameter value.
std::string url_encode(const std::string& value);

}  // namespace bibmatch
