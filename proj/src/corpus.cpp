#include "bibmatch/corpus.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bibmatch/rng.hpp"

namespace bibmatch {

namespace {

const std::vector<std::string> kColumns = {
    "record_id", "title",     "first_author_surname", "first_author_given",
    "journal",   "year",      "doi",                  "citations",
    "field_codes", "country", "language"};

std::vector<std::string> split_semicolons(const std::string& s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const std::size_t end = s.find(';', pos);
        const std::string part = s.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
        if (!part.empty())
            out.push_back(part);
        if (end == std::string::npos)
            break;
        pos = end + 1;
    }
    return out;
}

std::string trimmed(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

/// Validates BibRecord invariants; returns a reject reason or empty.
std::string invariant_violation(const BibRecord& rec) {
    if (trimmed(rec.title).empty())
        return "empty title";
    if (rec.pub_year < 1500 || rec.pub_year > 2100)
        return "year out of range [1500, 2100]";
    if (rec.doi && (rec.doi->empty() || rec.doi->find('/') == std::string::npos))
        return "malformed doi (no '/')";
    if (rec.field_codes.empty())
        return "no field codes";
    if (rec.citation_count && *rec.citation_count < 0)
        return "negative citation count";
    return "";
}

void finalize_field_codes(BibRecord& rec) {
    std::sort(rec.field_codes.begin(), rec.field_codes.end());
    rec.field_codes.erase(std::unique(rec.field_codes.begin(), rec.field_codes.end()),
                          rec.field_codes.end());
}

// RFC-4180 style CSV reader: quoted fields may contain commas, quotes
// (doubled) and newlines. Returns false at end of stream.
bool read_csv_row(std::istream& in, std::vector<std::string>& row) {
    row.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    int c;
    while ((c = in.get()) != EOF) {
        any = true;
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get();
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(static_cast<char>(c));
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            row.push_back(field);
            field.clear();
        } else if (c == '\n') {
            if (!field.empty() && field.back() == '\r')
                field.pop_back();
            row.push_back(field);
            return true;
        } else {
            field.push_back(static_cast<char>(c));
        }
    }
    if (!any)
        return false;
    if (in_quotes)
        throw Error("csv: unterminated quoted field at end of input");
    row.push_back(field);
    return true;
}

struct ParsedRow {
    BibRecord record;
    std::string error;  // non-empty when the row is malformed
};

ParsedRow row_to_record(const std::map<std::string, std::string>& cells) {
    ParsedRow out;
    BibRecord& rec = out.record;
    rec.record_id = cells.at("record_id");
    rec.title = cells.at("title");
    rec.first_author_surname = cells.at("first_author_surname");
    rec.first_author_given = cells.at("first_author_given");
    rec.journal_name = cells.at("journal");
    const std::string& year = cells.at("year");
    try {
        std::size_t used = 0;
        rec.pub_year = std::stoi(year, &used);
        if (used != year.size())
            throw std::invalid_argument(year);
    } catch (const std::exception&) {
        out.error = "unparseable year \"" + year + "\"";
        return out;
    }
    if (const std::string& doi = cells.at("doi"); !doi.empty())
        rec.doi = doi;
    if (const std::string& cites = cells.at("citations"); !cites.empty()) {
        try {
            std::size_t used = 0;
            rec.citation_count = std::stoll(cites, &used);
            if (used != cites.size())
                throw std::invalid_argument(cites);
        } catch (const std::exception&) {
            out.error = "unparseable citation count \"" + cites + "\"";
            return out;
        }
    }
    rec.field_codes = split_semicolons(cells.at("field_codes"));
    if (const std::string& country = cells.at("country"); !country.empty())
        rec.first_author_country = country;
    if (const std::string& lang = cells.at("language"); !lang.empty())
        rec.title_language = lang;
    finalize_field_codes(rec);
    out.error = invariant_violation(rec);
    return out;
}

IngestResult ingest_csv(std::istream& in) {
    std::vector<std::string> header;
    if (!read_csv_row(in, header))
        throw Error("csv: empty input, expected a header row");
    for (const auto& col : header) {
        if (std::find(kColumns.begin(), kColumns.end(), col) == kColumns.end())
            throw Error("csv: unknown column \"" + col + "\"");
    }
    for (const auto& col : kColumns) {
        if (std::find(header.begin(), header.end(), col) == header.end())
            throw Error("csv: missing column \"" + col + "\"");
    }

    IngestResult result;
    std::vector<std::string> row;
    std::size_t line = 1;
    while (read_csv_row(in, row)) {
        ++line;
        if (row.size() == 1 && row[0].empty())
            continue;  // blank line
        if (row.size() != header.size())
            throw Error("csv: line " + std::to_string(line) + " has " +
                        std::to_string(row.size()) + " fields, expected " +
                        std::to_string(header.size()));
        std::map<std::string, std::string> cells;
        for (std::size_t i = 0; i < header.size(); ++i)
            cells[header[i]] = row[i];
        ParsedRow parsed = row_to_record(cells);
        if (parsed.error.empty())
            result.records.push_back(std::move(parsed.record));
        else
            result.rejects.push_back({parsed.record.record_id, parsed.error});
    }
    return result;
}

IngestResult ingest_jsonl(std::istream& in) {
    IngestResult result;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trimmed(line).empty())
            continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error("jsonl: line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!obj.is_object())
            throw Error("jsonl: line " + std::to_string(lineno) + " is not an object");
        for (const auto& [key, _] : obj.items()) {
            if (std::find(kColumns.begin(), kColumns.end(), key) == kColumns.end())
                throw Error("jsonl: unknown key \"" + key + "\" on line " +
                            std::to_string(lineno));
        }
        std::map<std::string, std::string> cells;
        for (const auto& col : kColumns) {
            if (!obj.contains(col) || obj[col].is_null()) {
                cells[col] = "";
            } else if (col == "field_codes" && obj[col].is_array()) {
                std::string joined;
                for (const auto& code : obj[col]) {
                    if (!joined.empty())
                        joined += ';';
                    joined += code.get<std::string>();
                }
                cells[col] = joined;
            } else if (obj[col].is_string()) {
                cells[col] = obj[col].get<std::string>();
            } else {
                cells[col] = obj[col].dump();
            }
        }
        ParsedRow parsed = row_to_record(cells);
        if (parsed.error.empty())
            result.records.push_back(std::move(parsed.record));
        else
            result.rejects.push_back({parsed.record.record_id, parsed.error});
    }
    return result;
}

}  // namespace

IngestResult ingest_records(std::istream& in, RecordFormat format) {
    if (!in)
        throw Error("ingest: unreadable input stream");
    IngestResult result =
        format == RecordFormat::csv ? ingest_csv(in) : ingest_jsonl(in);
    if (in.bad())
        throw Error("ingest: stream failed mid-read");

    std::set<std::string> seen;
    std::set<std::string> duplicates;
    for (const auto& rec : result.records) {
        if (!seen.insert(rec.record_id).second)
            duplicates.insert(rec.record_id);
    }
    if (!duplicates.empty()) {
        std::string ids;
        for (const auto& id : duplicates)
            ids += (ids.empty() ? "" : ", ") + id;
        throw Error("ingest: duplicate record ids: " + ids);
    }
    return result;
}

FieldSample sample_per_field(const std::vector<BibRecord>& records,
                             const std::string& field_code, std::size_t n,
                             std::uint64_t seed) {
    if (n == 0)
        throw Error("sample_per_field: n must be >= 1");
    std::vector<const BibRecord*> population;
    for (const auto& rec : records) {
        if (std::binary_search(rec.field_codes.begin(), rec.field_codes.end(), field_code))
            population.push_back(&rec);
    }
    if (population.empty())
        throw Error("sample_per_field: no records carry field code \"" + field_code + "\"");

    std::mt19937_64 gen = rng::substream(seed, "sample:" + field_code);
    const std::size_t k = std::min(n, population.size());
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j =
            i + static_cast<std::size_t>(rng::bounded(gen, population.size() - i));
        std::swap(population[i], population[j]);
    }

    FieldSample sample;
    sample.field_code = field_code;
    sample.field_name = field_code;
    sample.records.reserve(k);
    for (std::size_t i = 0; i < k; ++i)
        sample.records.push_back(*population[i]);
    return sample;
}

std::vector<FieldSample> filter_min_field_size(std::vector<FieldSample> samples,
                                               std::size_t min_size,
                                               std::ostream* log) {
    std::vector<FieldSample> kept;
    kept.reserve(samples.size());
    for (auto& sample : samples) {
        if (sample.records.size() >= min_size) {
            kept.push_back(std::move(sample));
        } else if (log) {
            *log << "dropping field " << sample.field_code << ": "
                 << sample.records.size() << " records < minimum " << min_size << "\n";
        }
    }
    return kept;
}

std::vector<std::string> collect_field_codes(const std::vector<BibRecord>& records) {
    std::set<std::string> codes;
    for (const auto& rec : records)
        codes.insert(rec.field_codes.begin(), rec.field_codes.end());
    return {codes.begin(), codes.end()};
}

void write_records_jsonl(std::ostream& out, const std::vector<BibRecord>& records) {
    for (const auto& rec : records) {
        nlohmann::json obj{{"record_id", rec.record_id},
                           {"title", rec.title},
                           {"first_author_surname", rec.first_author_surname},
                           {"first_author_given", rec.first_author_given},
                           {"journal", rec.journal_name},
                           {"year", rec.pub_year},
                           {"field_codes", rec.field_codes}};
        obj["doi"] = rec.doi ? nlohmann::json(*rec.doi) : nlohmann::json();
        obj["citations"] =
            rec.citation_count ? nlohmann::json(*rec.citation_count) : nlohmann::json();
        obj["country"] = rec.first_author_country ? nlohmann::json(*rec.first_author_country)
                                                  : nlohmann::json();
        obj["language"] =
            rec.title_language ? nlohmann::json(*rec.title_language) : nlohmann::json();
        out << obj.dump() << "\n";
    }
}

void write_rejects_jsonl(std::ostream& out, const std::vector<RejectedRow>& rejects) {
    for (const auto& rej : rejects)
        out << nlohmann::json{{"record_id", rej.record_id}, {"reason", rej.reason}}.dump()
            << "\n";
}

}  // namespace bibmatch
