#include "bibmatch/indexclient.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "bibmatch/rng.hpp"

namespace bibmatch {

namespace {

constexpr std::chrono::microseconds kBackoffBase{500000};  // 0.5 s, doubled per retry

bool retryable_status(int status) {
    return status == 429 || (status >= 500 && status <= 599);
}

}  // namespace

LedgerReport ledger_report(const TransactionLedger& ledger) {
    LedgerReport report;
    report.used = ledger.used;
    if (ledger.budget)
        report.remaining = *ledger.budget - ledger.used;
    report.estimated_cost =
        static_cast<double>(ledger.used) * kCostPerThousandTransactions / 1000.0;
    return report;
}

std::string url_encode(const std::string& value) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    out.reserve(value.size() * 3);
    for (unsigned char c : value) {
        const bool unreserved = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                                (c >= '0' && c <= '9') || c == '-' || c == '_' ||
                                c == '.' || c == '~';
        if (unreserved) {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xF]);
        }
    }
    return out;
}

IndexClient::IndexClient(ClientConfig config, std::shared_ptr<Clock> clock)
    : config_(std::move(config)), clock_(std::move(clock)) {
    if (config_.queries_per_second <= 0)
        throw Error("client: queries_per_second must be positive");
    if (config_.per_query_count < 1)
        throw Error("client: per_query_count must be >= 1");
    pacing_interval_ = std::chrono::microseconds(
        static_cast<long long>(std::llround(1e6 / config_.queries_per_second)));
    ledger_.budget = config_.monthly_budget;
    if (config_.cache_dir)
        std::filesystem::create_directories(*config_.cache_dir);
}

TransactionLedger IndexClient::ledger() const {
    std::lock_guard lock(mu_);
    return ledger_;
}

std::filesystem::path IndexClient::cache_path(const std::string& expr) const {
    char name[32];
    std::snprintf(name, sizeof name, "%016llx.json",
                  static_cast<unsigned long long>(rng::fnv1a64(expr)));
    return *config_.cache_dir / name;
}

std::optional<std::string> IndexClient::cache_lookup(const std::string& expr) {
    if (!config_.cache_dir)
        return std::nullopt;
    std::ifstream in(cache_path(expr));
    if (!in)
        return std::nullopt;
    nlohmann::json entry;
    try {
        in >> entry;
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
    // The file name is a hash; verify the stored expression to rule out
    // collisions.
    if (!entry.is_object() || entry.value("expr", "") != expr)
        return std::nullopt;
    return entry.value("body", "");
}

void IndexClient::cache_store(const std::string& expr, const std::string& body) {
    if (!config_.cache_dir)
        return;
    std::ofstream out(cache_path(expr));
    out << nlohmann::json{{"expr", expr}, {"body", body}}.dump();
}

std::string IndexClient::http_get(const std::string& expr) {
    const std::string path = "/evaluate?expr=" + url_encode(expr) +
                             "&count=" + std::to_string(config_.per_query_count) +
                             "&attributes=" + url_encode(config_.attributes);
    httplib::Headers headers;
    if (!config_.api_key.empty())
        headers.emplace("X-Api-Key", config_.api_key);

    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0)
            clock_->sleep_for(kBackoffBase * (1LL << (attempt - 1)));
        httplib::Client cli(config_.base_url);
        cli.set_connection_timeout(10, 0);
        cli.set_read_timeout(60, 0);
        auto res = cli.Get(path, headers);
        if (!res) {
            throw Error("client: transport failure for " + config_.base_url + path +
                        " (" + httplib::to_string(res.error()) + ")");
        }
        if (res->status == 200)
            return res->body;
        if (!retryable_status(res->status)) {
            throw Error("client: HTTP " + std::to_string(res->status) + " for expr " +
                        expr + ": " + res->body);
        }
        last_error = "HTTP " + std::to_string(res->status);
    }
    throw Error("client: retries exhausted for expr " + expr + " (last: " + last_error +
                ")");
}

std::string IndexClient::fetch_or_wait(const std::string& expr) {
    for (;;) {
        std::chrono::microseconds slot{0};
        {
            std::unique_lock lock(mu_);
            if (auto it = memory_cache_.find(expr); it != memory_cache_.end())
                return it->second;
            if (in_flight_.count(expr)) {
                cv_.wait(lock, [&] { return !in_flight_.count(expr); });
                continue;  // re-check the cache; retry ourselves if the flight failed
            }
            // Disk lookup under the lock keeps the ledger/cache view consistent.
            if (auto body = cache_lookup(expr)) {
                memory_cache_[expr] = *body;
                return *body;
            }
            if (ledger_.budget && ledger_.used >= *ledger_.budget)
                throw Error("client: transaction budget exhausted (" +
                            std::to_string(*ledger_.budget) + ")");
            in_flight_[expr] = true;
            const auto now = clock_->now();
            slot = std::max(now, next_slot_);
            next_slot_ = slot + pacing_interval_;
        }
        try {
            const auto wait = slot - clock_->now();
            if (wait.count() > 0)
                clock_->sleep_for(wait);
            std::string body = http_get(expr);
            {
                std::lock_guard lock(mu_);
                ++ledger_.used;
                memory_cache_[expr] = body;
                in_flight_.erase(expr);
            }
            cv_.notify_all();
            cache_store(expr, body);
            return body;
        } catch (...) {
            {
                std::lock_guard lock(mu_);
                in_flight_.erase(expr);
            }
            cv_.notify_all();
            throw;
        }
    }
}

std::vector<CandidateResult> IndexClient::evaluate(const std::string& expr) {
    return parse_entities(fetch_or_wait(expr));
}

std::vector<CandidateResult> IndexClient::parse_entities(const std::string& body) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw Error("client: malformed response JSON (" + std::string(e.what()) +
                    "); body: " + body);
    }
    if (!doc.is_object() || !doc.contains("entities") || !doc["entities"].is_array())
        throw Error("client: response lacks an entities array; body: " + body);

    std::vector<CandidateResult> out;
    for (const auto& entity : doc["entities"]) {
        if (!entity.is_object() || !entity.contains("Id"))
            throw Error("client: entity without Id; body: " + body);
        CandidateResult cand;
        cand.entity_id = entity["Id"].is_string()
                             ? entity["Id"].get<std::string>()
                             : std::to_string(entity["Id"].get<long long>());
        if (entity.contains("Ti"))
            cand.title = entity["Ti"].get<std::string>();
        if (entity.contains("Y") && entity["Y"].is_number())
            cand.pub_year = entity["Y"].get<int>();
        if (entity.contains("CC") && entity["CC"].is_number())
            cand.citation_count = entity["CC"].get<long long>();
        if (entity.contains("AA") && entity["AA"].is_array() && !entity["AA"].empty()) {
            const auto& first = entity["AA"].front();
            if (first.is_object() && first.contains("AuN"))
                cand.first_author = first["AuN"].get<std::string>();
        }
        if (entity.contains("J") && entity["J"].is_object() && entity["J"].contains("JN"))
            cand.journal_name = entity["J"]["JN"].get<std::string>();
        if (entity.contains("E") && entity["E"].is_object() && entity["E"].contains("DOI"))
            cand.doi = entity["E"]["DOI"].get<std::string>();
        out.push_back(std::move(cand));
    }
    return out;
}

}  // namespace bibmatch
