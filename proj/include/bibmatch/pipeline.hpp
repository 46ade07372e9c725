#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bibmatch/corpus.hpp"
#include "bibmatch/indexclient.hpp"
#include "bibmatch/matcher.hpp"
#include "bibmatch/metrics.hpp"
#include "bibmatch/mockindex.hpp"
#include "bibmatch/queryexpr.hpp"

namespace bibmatch {

enum class FilterMode { doi, metadata, metadata_then_doi_check };
enum class ReportFormat { csv, jsonl, markdown };

const char* filter_mode_name(FilterMode m);
FilterMode filter_mode_from_name(const std::string& name);
const char* report_format_name(ReportFormat f);
ReportFormat report_format_from_name(const std::string& name);

struct PipelineConfig {
    std::filesystem::path input;
    RecordFormat input_format = RecordFormat::csv;
    std::vector<Strategy> strategies{kAllStrategies.begin(), kAllStrategies.end()};
    MatchRules rules;
    FilterMode filter_mode = FilterMode::doi;

    // Exactly one of the two backends must be set.
    std::optional<ClientConfig> client;
    std::optional<CorruptionProfile> mock_profile;
    int per_query_count = 10;  // results per query in mock mode

    std::size_t sample_n = 400;
    std::size_t min_field_size = 50;
    std::uint64_t seed = 1;
    ReportFormat format = ReportFormat::markdown;
    std::filesystem::path out_dir;
    int workers = 4;

    void validate() const;  // throws Error on inconsistent settings
    static PipelineConfig from_json_file(const std::filesystem::path& path);
    std::string to_json_text() const;
};

struct DecisionRow {
    std::string record_id;
    std::string field_code;
    Strategy strategy = Strategy::title_only;
    std::string query;
    std::size_t n_candidates = 0;
    std::string outcome;  // accepted | rejected | error
    std::vector<std::string> reasons;
    std::optional<std::string> accepted_entity_id;
    bool correct = false;
    std::optional<long long> scopus_citations;
    std::optional<long long> index_citations;
};

struct PipelineResult {
    std::vector<FieldReport> field_reports;
    std::vector<FieldReport> doi_check_reports;  // metadata_then_doi_check mode only
    std::vector<CountryRate> country_rates;
    std::vector<DecisionRow> decisions;
    LedgerReport transactions;
    std::vector<std::filesystem::path> written;

    // Populated in mock mode so callers can verify against the ledger.
    std::optional<GroundTruthLedger> mock_ledger;
    std::vector<FieldSample> samples;
};

/// Runs ingest -> sample -> query -> match -> metrics -> report and writes
/// the report bundle under config.out_dir. On failure, everything already
/// written moves to out_dir/quarantine and the error propagates.
PipelineResult run_pipeline(const PipelineConfig& config);

/// Writes the summary tables in the requested format plus the decision
/// log and transaction ledger. Byte-deterministic for fixed inputs.
std::vector<std::filesystem::path> emit_report(const PipelineResult& result,
                                               const std::vector<Strategy>& strategies,
                                               FilterMode mode, ReportFormat format,
                                               const std::filesystem::path& out_dir);

}  // namespace bibmatch
