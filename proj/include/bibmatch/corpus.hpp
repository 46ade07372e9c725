#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bibmatch/error.hpp"

namespace bibmatch {

/// One source bibliographic record. Field semantics follow the input
/// schema documented in the README: only the first author is stored
/// structurally, field_codes are subject-category identifiers.
struct BibRecord {
    std::string record_id;
    std::string title;
    std::string first_author_surname;
    std::string first_author_given;
    std::string journal_name;
    int pub_year = 0;
    std::optional<std::string> doi;
    std::optional<long long> citation_count;
    std::vector<std::string> field_codes;  // sorted, unique, non-empty
    std::optional<std::string> first_author_country;
    std::optional<std::string> title_language;

    bool operator==(const BibRecord&) const = default;
};

struct RejectedRow {
    std::string record_id;  // may be empty when the id itself was missing
    std::string reason;
};

struct IngestResult {
    std::vector<BibRecord> records;
    std::vector<RejectedRow> rejects;
};

enum class RecordFormat { csv, jsonl };

/// Parses the stream into records, collecting rows that violate record
/// invariants into `rejects`. Throws on structural problems: unreadable
/// stream, unknown or missing columns, duplicate record ids.
IngestResult ingest_records(std::istream& in, RecordFormat format);

struct FieldSample {
    std::string field_code;
    std::string field_name;
    std::vector<BibRecord> records;
};

/// Draws min(n, population) distinct records carrying `field_code`,
/// uniformly without replacement. mt19937_64 + partial Fisher-Yates, so
/// the draw is identical across platforms for a fixed seed. Throws when
/// no record carries the code.
FieldSample sample_per_field(const std::vector<BibRecord>& records,
                             const std::string& field_code, std::size_t n,
                             std::uint64_t seed);

/// Keeps samples with at least `min_size` records; one log line per
/// removed field is written to `log` when given.
std::vector<FieldSample> filter_min_field_size(std::vector<FieldSample> samples,
                                               std::size_t min_size,
                                               std::ostream* log = nullptr);

/// All distinct field codes present in the records, sorted.
std::vector<std::string> collect_field_codes(const std::vector<BibRecord>& records);

/// JSONL writers for the external record and rejects formats.
void write_records_jsonl(std::ostream& out, const std::vector<BibRecord>& records);
void write_rejects_jsonl(std::ostream& out, const std::vector<RejectedRow>& rejects);

}  // namespace bibmatch
