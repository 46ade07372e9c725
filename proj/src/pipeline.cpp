#include "bibmatch/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace bibmatch {

namespace {

using nlohmann::json;

std::optional<NormalizedDoi> try_doi(const std::optional<std::string>& raw) {
    if (!raw)
        return std::nullopt;
    try {
        return normalize_doi(*raw);
    } catch (const Error&) {
        return std::nullopt;
    }
}

bool doi_equal(const std::optional<std::string>& a, const std::optional<std::string>& b) {
    const auto na = try_doi(a);
    const auto nb = try_doi(b);
    return na && nb && *na == *nb;
}

std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", fraction * 100.0);
    return buf;
}

std::string format_fixed(double v, int decimals) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

}  // namespace

const char* filter_mode_name(FilterMode m) {
    switch (m) {
    case FilterMode::doi:
        return "doi";
    case FilterMode::metadata:
        return "metadata";
    case FilterMode::metadata_then_doi_check:
        return "metadata_then_doi_check";
    }
    return "?";
}

FilterMode filter_mode_from_name(const std::string& name) {
    if (name == "doi")
        return FilterMode::doi;
    if (name == "metadata")
        return FilterMode::metadata;
    if (name == "metadata_then_doi_check")
        return FilterMode::metadata_then_doi_check;
    throw Error("unknown filter mode \"" + name + "\"");
}

const char* report_format_name(ReportFormat f) {
    switch (f) {
    case ReportFormat::csv:
        return "csv";
    case ReportFormat::jsonl:
        return "jsonl";
    case ReportFormat::markdown:
        return "markdown";
    }
    return "?";
}

ReportFormat report_format_from_name(const std::string& name) {
    if (name == "csv")
        return ReportFormat::csv;
    if (name == "jsonl")
        return ReportFormat::jsonl;
    if (name == "markdown")
        return ReportFormat::markdown;
    throw Error("unknown report format \"" + name + "\"");
}

void PipelineConfig::validate() const {
    if (input.empty())
        throw Error("config: input path is empty");
    if (out_dir.empty())
        throw Error("config: output directory is empty");
    if (strategies.empty())
        throw Error("config: strategy set is empty");
    if (client.has_value() == mock_profile.has_value())
        throw Error("config: exactly one of client and mock_profile must be set");
    if (sample_n == 0)
        throw Error("config: sample_n must be >= 1");
    if (workers < 1)
        throw Error("config: workers must be >= 1");
    if (per_query_count < 1)
        throw Error("config: per_query_count must be >= 1");
    if (rules.max_field_differences < 0)
        throw Error("config: max_field_differences must be >= 0");
    if (rules.title_overlap_min < 0.0 || rules.title_overlap_min > 1.0)
        throw Error("config: title_overlap_min out of [0,1]");
    if (mock_profile)
        mock_profile->validate();
}

namespace {

const char* overlap_mode_name(OverlapMode m) {
    switch (m) {
    case OverlapMode::set_jaccard:
        return "set_jaccard";
    case OverlapMode::multiset_jaccard:
        return "multiset_jaccard";
    case OverlapMode::query_containment:
        return "query_containment";
    }
    return "?";
}

OverlapMode overlap_mode_from_name(const std::string& name) {
    if (name == "set_jaccard")
        return OverlapMode::set_jaccard;
    if (name == "multiset_jaccard")
        return OverlapMode::multiset_jaccard;
    if (name == "query_containment")
        return OverlapMode::query_containment;
    throw Error("unknown overlap mode \"" + name + "\"");
}

}  // namespace

PipelineConfig PipelineConfig::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw Error("config: cannot open " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw Error("config: bad JSON in " + path.string() + ": " + e.what());
    }

    PipelineConfig cfg;
    cfg.input = doc.value("input", "");
    cfg.input_format =
        doc.value("format", "csv") == std::string("jsonl") ? RecordFormat::jsonl
                                                           : RecordFormat::csv;
    if (doc.contains("strategies")) {
        cfg.strategies.clear();
        for (const auto& s : doc["strategies"])
            cfg.strategies.push_back(strategy_from_name(s.get<std::string>()));
    }
    if (doc.contains("match_rules")) {
        const auto& r = doc["match_rules"];
        cfg.rules.max_field_differences = r.value("max_field_differences", 1);
        cfg.rules.title_overlap_min = r.value("title_overlap_min", 0.85);
        cfg.rules.overlap_mode =
            overlap_mode_from_name(r.value("overlap_mode", "set_jaccard"));
    }
    cfg.filter_mode = filter_mode_from_name(doc.value("filter_mode", "doi"));
    if (doc.contains("client")) {
        const auto& c = doc["client"];
        ClientConfig client;
        client.base_url = c.value("base_url", "");
        client.queries_per_second = c.value("queries_per_second", 5.0);
        client.max_retries = c.value("max_retries", 3);
        client.per_query_count = c.value("per_query_count", 10);
        if (c.contains("monthly_budget") && !c["monthly_budget"].is_null())
            client.monthly_budget = c["monthly_budget"].get<long long>();
        client.attributes = c.value("attributes", client.attributes);
        cfg.client = std::move(client);
    }
    if (doc.contains("mock_profile"))
        cfg.mock_profile = CorruptionProfile::from_json_text(doc["mock_profile"].dump());
    cfg.per_query_count = doc.value("per_query_count", 10);
    cfg.sample_n = doc.value("sample_n", std::size_t{400});
    cfg.min_field_size = doc.value("min_field_size", std::size_t{50});
    cfg.seed = doc.value("seed", std::uint64_t{1});
    cfg.format = report_format_from_name(doc.value("report_format", "markdown"));
    cfg.out_dir = doc.value("out", "");
    cfg.workers = doc.value("workers", 4);
    return cfg;
}

std::string PipelineConfig::to_json_text() const {
    json doc{{"input", input.string()},
             {"format", input_format == RecordFormat::csv ? "csv" : "jsonl"},
             {"filter_mode", filter_mode_name(filter_mode)},
             {"sample_n", sample_n},
             {"min_field_size", min_field_size},
             {"seed", seed},
             {"report_format", report_format_name(format)},
             {"out", out_dir.string()},
             {"workers", workers},
             {"per_query_count", per_query_count}};
    json strategies_json = json::array();
    for (Strategy s : strategies)
        strategies_json.push_back(strategy_name(s));
    doc["strategies"] = strategies_json;
    doc["match_rules"] = {{"max_field_differences", rules.max_field_differences},
                          {"title_overlap_min", rules.title_overlap_min},
                          {"overlap_mode", overlap_mode_name(rules.overlap_mode)}};
    if (client) {
        // The API key is a secret and never serialized.
        json c{{"base_url", client->base_url},
               {"queries_per_second", client->queries_per_second},
               {"max_retries", client->max_retries},
               {"per_query_count", client->per_query_count},
               {"attributes", client->attributes}};
        c["monthly_budget"] =
            client->monthly_budget ? json(*client->monthly_budget) : json();
        doc["client"] = c;
    }
    if (mock_profile)
        doc["mock_profile"] = json::parse(mock_profile->to_json_text());
    return doc.dump(2);
}

namespace {

/// Everything computed for one field; slots are merged in field order.
struct FieldWork {
    FieldReport report;
    FieldReport doi_check;
    std::vector<DecisionRow> decisions;
    std::map<std::string, bool> correlated_matched;  // record_id -> matched
};

Strategy correlation_strategy(const std::vector<Strategy>& strategies) {
    if (std::find(strategies.begin(), strategies.end(), Strategy::title_only) !=
        strategies.end())
        return Strategy::title_only;
    return strategies.front();
}

FieldWork process_field(const FieldSample& sample, const PipelineConfig& config,
                        IndexClient& client,
                        const GroundTruthLedger* mock_ledger) {
    FieldWork work;
    work.report.field_code = sample.field_code;
    work.report.n_articles = sample.records.size();
    work.doi_check.field_code = sample.field_code;
    work.doi_check.n_articles = sample.records.size();

    const Strategy corr_strategy = correlation_strategy(config.strategies);
    std::vector<long long> scopus_counts, index_counts;
    std::vector<double> scopus_d, index_d;

    for (Strategy strategy : config.strategies) {
        std::map<std::string, bool> accepted, correct, doi_verdict;
        for (const auto& record : sample.records) {
            DecisionRow row;
            row.record_id = record.record_id;
            row.field_code = sample.field_code;
            row.strategy = strategy;

            MatchDecision decision;
            bool errored = false;
            try {
                row.query = serialize_query(build_query(record, strategy));
                const std::vector<CandidateResult> candidates = client.evaluate(row.query);
                row.n_candidates = candidates.size();
                if (config.filter_mode == FilterMode::doi) {
                    if (record.doi) {
                        decision = doi_filter(record, candidates);
                    } else {
                        decision.rejections.push_back({"", {"record has no doi"}});
                    }
                } else {
                    decision = metadata_filter(record, candidates, config.rules);
                }
            } catch (const Error& e) {
                errored = true;
                row.outcome = "error";
                row.reasons = {e.what()};
            }

            if (!errored) {
                if (decision.is_accepted()) {
                    const CandidateResult& cand = *decision.accepted;
                    row.outcome = "accepted";
                    row.accepted_entity_id = cand.entity_id;
                    if (mock_ledger) {
                        const LedgerEntry& entry = mock_ledger->at(record.record_id);
                        row.correct =
                            !entry.entity_id.empty() && entry.entity_id == cand.entity_id;
                    } else {
                        row.correct = doi_equal(record.doi, cand.doi);
                    }
                    row.scopus_citations = record.citation_count;
                    row.index_citations = cand.citation_count;
                    if (config.filter_mode == FilterMode::metadata_then_doi_check &&
                        record.doi)
                        doi_verdict[record.record_id] = doi_equal(record.doi, cand.doi);
                } else {
                    row.outcome = "rejected";
                    for (const auto& rej : decision.rejections) {
                        std::string reason = rej.entity_id.empty() ? "" : rej.entity_id + ": ";
                        for (std::size_t i = 0; i < rej.reasons.size(); ++i)
                            reason += (i ? "; " : "") + rej.reasons[i];
                        row.reasons.push_back(std::move(reason));
                    }
                }
            }

            accepted[record.record_id] = row.outcome == "accepted";
            correct[record.record_id] = row.correct;
            if (!doi_verdict.count(record.record_id))
                doi_verdict[record.record_id] = false;

            if (strategy == corr_strategy) {
                const bool matched = row.outcome == "accepted" && row.correct;
                work.correlated_matched[record.record_id] = matched;
                if (matched && record.citation_count && row.index_citations) {
                    scopus_counts.push_back(*record.citation_count);
                    index_counts.push_back(*row.index_citations);
                    scopus_d.push_back(static_cast<double>(*record.citation_count));
                    index_d.push_back(static_cast<double>(*row.index_citations));
                }
            }
            work.decisions.push_back(std::move(row));
        }

        const PrecisionRecall pr = field_precision_recall(accepted, correct);
        work.report.per_strategy[strategy] = {pr.recall, pr.precision};
        if (config.filter_mode == FilterMode::metadata_then_doi_check) {
            const PrecisionRecall check = field_precision_recall(accepted, doi_verdict);
            work.doi_check.per_strategy[strategy] = {check.recall, check.precision};
        }
    }

    work.report.n_correlated = scopus_counts.size();
    if (!scopus_counts.empty()) {
        work.report.scopus_geomean = geometric_mean(scopus_counts);
        work.report.index_geomean = geometric_mean(index_counts);
        work.report.spearman_correlation = spearman(scopus_d, index_d);
    }
    return work;
}

void write_file(const std::filesystem::path& path, const std::string& content,
                std::vector<std::filesystem::path>& written) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path.string());
    out << content;
    written.push_back(path);
}

std::string strategy_cell(const StrategyStats& stats, bool precision) {
    if (precision)
        return stats.precision ? format_percent(*stats.precision) : "-";
    return format_percent(stats.recall);
}

/// Renders a Table-1-shaped summary: one row per field, recall/precision
/// per strategy, aggregate rows at the bottom.
std::string render_strategy_table(const std::vector<FieldReport>& reports,
                                  const std::vector<Strategy>& strategies,
                                  ReportFormat format, const std::string& title) {
    std::vector<std::string> header{"field", "articles"};
    for (Strategy s : strategies) {
        header.push_back(std::string(strategy_name(s)) + " recall");
        header.push_back(std::string(strategy_name(s)) + " prec.");
    }

    std::vector<std::vector<std::string>> rows;
    for (const auto& report : reports) {
        std::vector<std::string> row{report.field_code,
                                     std::to_string(report.n_articles)};
        for (Strategy s : strategies) {
            const StrategyStats& stats = report.per_strategy.at(s);
            row.push_back(strategy_cell(stats, false));
            row.push_back(strategy_cell(stats, true));
        }
        rows.push_back(std::move(row));
    }

    // Aggregate rows over the per-field values.
    const char* agg_names[] = {"Min.", "Max.", "Med.", "Mean"};
    std::vector<std::vector<std::string>> agg_rows(4);
    for (int a = 0; a < 4; ++a)
        agg_rows[a] = {agg_names[a], ""};
    for (Strategy s : strategies) {
        std::vector<std::optional<double>> recalls, precisions;
        for (const auto& report : reports) {
            recalls.emplace_back(report.per_strategy.at(s).recall);
            precisions.push_back(report.per_strategy.at(s).precision);
        }
        const Aggregates rec = summarize(recalls);
        const double rec_vals[] = {rec.min, rec.max, rec.median, rec.mean};
        bool any_precision = false;
        for (const auto& p : precisions)
            any_precision |= p.has_value();
        Aggregates prec{};
        if (any_precision)
            prec = summarize(precisions);
        const double prec_vals[] = {prec.min, prec.max, prec.median, prec.mean};
        for (int a = 0; a < 4; ++a) {
            agg_rows[a].push_back(format_percent(rec_vals[a]));
            agg_rows[a].push_back(any_precision ? format_percent(prec_vals[a]) : "-");
        }
    }
    for (auto& row : agg_rows)
        rows.push_back(std::move(row));

    std::ostringstream out;
    if (format == ReportFormat::markdown) {
        out << "# " << title << "\n\n|";
        for (const auto& h : header)
            out << " " << h << " |";
        out << "\n|";
        for (std::size_t i = 0; i < header.size(); ++i)
            out << "---|";
        out << "\n";
        for (const auto& row : rows) {
            out << "|";
            for (const auto& cell : row)
                out << " " << cell << " |";
            out << "\n";
        }
    } else if (format == ReportFormat::csv) {
        for (std::size_t i = 0; i < header.size(); ++i)
            out << (i ? "," : "") << header[i];
        out << "\n";
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i)
                out << (i ? "," : "") << row[i];
            out << "\n";
        }
    } else {
        for (const auto& report : reports) {
            json obj{{"field_code", report.field_code},
                     {"n_articles", report.n_articles}};
            for (Strategy s : strategies) {
                const StrategyStats& stats = report.per_strategy.at(s);
                json cell{{"recall", stats.recall}};
                cell["precision"] = stats.precision ? json(*stats.precision) : json();
                obj[strategy_name(s)] = cell;
            }
            out << obj.dump() << "\n";
        }
        for (int a = 0; a < 4; ++a) {
            json obj{{"aggregate", agg_names[a]}};
            std::size_t col = 2;
            for (Strategy s : strategies) {
                obj[std::string(strategy_name(s)) + "_recall"] = agg_rows[a][col++];
                obj[std::string(strategy_name(s)) + "_precision"] = agg_rows[a][col++];
            }
            out << obj.dump() << "\n";
        }
    }
    return out.str();
}

std::string render_correlations(const std::vector<FieldReport>& reports,
                                ReportFormat format) {
    struct Row {
        std::string field;
        std::string articles, scopus, index, diff, rho;
    };
    auto diff_cell = [](const FieldReport& r) -> std::string {
        if (!r.scopus_geomean || !r.index_geomean)
            return "-";
        const double diff = *r.scopus_geomean - *r.index_geomean;
        std::string out = format_fixed(diff, 2);
        if (*r.index_geomean > 0.0)
            out += " (" + format_percent(diff / *r.index_geomean) + ")";
        return out;
    };

    std::vector<Row> rows;
    for (const auto& r : reports) {
        Row row;
        row.field = r.field_code;
        row.articles = std::to_string(r.n_correlated);
        row.scopus = r.scopus_geomean ? format_fixed(*r.scopus_geomean, 2) : "-";
        row.index = r.index_geomean ? format_fixed(*r.index_geomean, 2) : "-";
        row.diff = diff_cell(r);
        row.rho =
            r.spearman_correlation ? format_fixed(*r.spearman_correlation, 3) : "-";
        rows.push_back(std::move(row));
    }

    // Column-wise aggregates, undefined entries excluded.
    std::vector<std::optional<double>> articles, scopus, index, diffs, rhos;
    for (const auto& r : reports) {
        articles.emplace_back(static_cast<double>(r.n_correlated));
        scopus.push_back(r.scopus_geomean);
        index.push_back(r.index_geomean);
        if (r.scopus_geomean && r.index_geomean)
            diffs.emplace_back(*r.scopus_geomean - *r.index_geomean);
        else
            diffs.emplace_back(std::nullopt);
        rhos.push_back(r.spearman_correlation);
    }
    const char* agg_names[] = {"Min", "Max", "Median", "Average"};
    std::vector<Row> agg_rows;
    auto pick = [](const Aggregates& a, int i) {
        const double v[] = {a.min, a.max, a.median, a.mean};
        return v[i];
    };
    const bool have_scopus = std::any_of(scopus.begin(), scopus.end(),
                                         [](const auto& v) { return v.has_value(); });
    const bool have_rho = std::any_of(rhos.begin(), rhos.end(),
                                      [](const auto& v) { return v.has_value(); });
    Aggregates agg_articles = summarize(articles);
    Aggregates agg_scopus{}, agg_index{}, agg_diff{}, agg_rho{};
    if (have_scopus) {
        agg_scopus = summarize(scopus);
        agg_index = summarize(index);
        agg_diff = summarize(diffs);
    }
    if (have_rho)
        agg_rho = summarize(rhos);
    for (int a = 0; a < 4; ++a) {
        Row row;
        row.field = agg_names[a];
        row.articles = format_fixed(pick(agg_articles, a), 1);
        row.scopus = have_scopus ? format_fixed(pick(agg_scopus, a), 2) : "-";
        row.index = have_scopus ? format_fixed(pick(agg_index, a), 2) : "-";
        row.diff = have_scopus ? format_fixed(pick(agg_diff, a), 2) : "-";
        row.rho = have_rho ? format_fixed(pick(agg_rho, a), 3) : "-";
        agg_rows.push_back(std::move(row));
    }

    std::ostringstream out;
    if (format == ReportFormat::markdown) {
        out << "# Citation count comparison (matched articles)\n\n"
            << "| Field | Articles | Scopus geomean | Index geomean | Difference (% of "
               "index) | Spearman |\n"
            << "|---|---|---|---|---|---|\n";
        for (const auto& r : rows)
            out << "| " << r.field << " | " << r.articles << " | " << r.scopus << " | "
                << r.index << " | " << r.diff << " | " << r.rho << " |\n";
        for (const auto& r : agg_rows)
            out << "| " << r.field << " | " << r.articles << " | " << r.scopus << " | "
                << r.index << " | " << r.diff << " | " << r.rho << " |\n";
    } else if (format == ReportFormat::csv) {
        out << "field,articles,scopus_geomean,index_geomean,difference,spearman\n";
        for (const auto& r : rows)
            out << r.field << "," << r.articles << "," << r.scopus << "," << r.index
                << "," << r.diff << "," << r.rho << "\n";
        for (const auto& r : agg_rows)
            out << r.field << "," << r.articles << "," << r.scopus << "," << r.index
                << "," << r.diff << "," << r.rho << "\n";
    } else {
        for (const auto& r : reports) {
            json obj{{"field_code", r.field_code}, {"articles", r.n_correlated}};
            obj["scopus_geomean"] = r.scopus_geomean ? json(*r.scopus_geomean) : json();
            obj["index_geomean"] = r.index_geomean ? json(*r.index_geomean) : json();
            obj["spearman"] =
                r.spearman_correlation ? json(*r.spearman_correlation) : json();
            out << obj.dump() << "\n";
        }
        for (int a = 0; a < 4; ++a) {
            const Row& r = agg_rows[a];
            json obj{{"aggregate", r.field},
                     {"articles", r.articles},
                     {"scopus_geomean", r.scopus},
                     {"index_geomean", r.index},
                     {"difference", r.diff},
                     {"spearman", r.rho}};
            out << obj.dump() << "\n";
        }
    }
    return out.str();
}

std::string render_country_rates(const std::vector<CountryRate>& rates,
                                 ReportFormat format) {
    std::ostringstream out;
    if (format == ReportFormat::markdown) {
        out << "# Match rate by first-author country\n\n"
            << "| Country | Articles | Matches | Percentage matches |\n|---|---|---|---|\n";
        for (const auto& r : rates)
            out << "| " << r.country << " | " << r.articles << " | " << r.matches
                << " | " << format_percent(r.rate) << " |\n";
    } else if (format == ReportFormat::csv) {
        out << "country,articles,matches,percentage_matches\n";
        for (const auto& r : rates)
            out << r.country << "," << r.articles << "," << r.matches << ","
                << format_percent(r.rate) << "\n";
    } else {
        for (const auto& r : rates) {
            out << json{{"country", r.country},
                        {"articles", r.articles},
                        {"matches", r.matches},
                        {"rate", r.rate}}
                       .dump()
                << "\n";
        }
    }
    return out.str();
}

std::string render_decisions(const std::vector<DecisionRow>& decisions) {
    std::ostringstream out;
    for (const auto& row : decisions) {
        json obj{{"record_id", row.record_id},
                 {"field_code", row.field_code},
                 {"strategy", strategy_name(row.strategy)},
                 {"query", row.query},
                 {"n_candidates", row.n_candidates},
                 {"outcome", row.outcome},
                 {"reasons", row.reasons},
                 {"correct", row.correct}};
        obj["accepted_entity_id"] =
            row.accepted_entity_id ? json(*row.accepted_entity_id) : json();
        obj["scopus_citations"] =
            row.scopus_citations ? json(*row.scopus_citations) : json();
        obj["index_citations"] = row.index_citations ? json(*row.index_citations) : json();
        out << obj.dump() << "\n";
    }
    return out.str();
}

std::string extension(ReportFormat format) {
    switch (format) {
    case ReportFormat::csv:
        return ".csv";
    case ReportFormat::jsonl:
        return ".jsonl";
    case ReportFormat::markdown:
        return ".md";
    }
    return ".txt";
}

void quarantine_outputs(const std::filesystem::path& out_dir,
                        std::vector<std::filesystem::path>& written) {
    std::error_code ec;
    const auto dir = out_dir / "quarantine";
    std::filesystem::create_directories(dir, ec);
    for (const auto& path : written)
        std::filesystem::rename(path, dir / path.filename(), ec);
    written.clear();
}

}  // namespace

std::vector<std::filesystem::path> emit_report(const PipelineResult& result,
                                               const std::vector<Strategy>& strategies,
                                               FilterMode mode, ReportFormat format,
                                               const std::filesystem::path& out_dir) {
    std::vector<std::filesystem::path> written;
    const std::string ext = extension(format);
    const std::string mode_title = std::string("Strategy summary (") +
                                   filter_mode_name(mode) + " filtering)";
    write_file(out_dir / ("strategy_summary" + ext),
               render_strategy_table(result.field_reports, strategies, format, mode_title),
               written);
    if (mode == FilterMode::metadata_then_doi_check) {
        write_file(out_dir / ("doi_check_of_metadata" + ext),
                   render_strategy_table(result.doi_check_reports, strategies, format,
                                         "DOI check of metadata-accepted matches"),
                   written);
    }
    write_file(out_dir / ("country_rates" + ext),
               render_country_rates(result.country_rates, format), written);
    write_file(out_dir / ("correlations" + ext),
               render_correlations(result.field_reports, format), written);
    write_file(out_dir / "decisions.jsonl", render_decisions(result.decisions), written);

    json ledger{{"used", result.transactions.used},
                {"estimated_cost", result.transactions.estimated_cost}};
    ledger["remaining"] =
        result.transactions.remaining ? json(*result.transactions.remaining) : json();
    write_file(out_dir / "transactions.json", ledger.dump(2) + "\n", written);
    return written;
}

PipelineResult run_pipeline(const PipelineConfig& config) {
    config.validate();
    std::filesystem::create_directories(config.out_dir);

    PipelineResult result;
    std::vector<std::filesystem::path> written;
    try {
        // Ingest.
        std::ifstream in(config.input, std::ios::binary);
        if (!in)
            throw Error("cannot open input " + config.input.string());
        IngestResult ingest = ingest_records(in, config.input_format);
        {
            std::ostringstream rejects;
            write_rejects_jsonl(rejects, ingest.rejects);
            write_file(config.out_dir / "rejects.jsonl", rejects.str(), written);
        }
        if (ingest.records.empty())
            throw Error("input contains no valid records");

        // Sample per field, then drop undersized fields.
        std::vector<FieldSample> samples;
        for (const auto& code : collect_field_codes(ingest.records))
            samples.push_back(
                sample_per_field(ingest.records, code, config.sample_n, config.seed));
        samples = filter_min_field_size(std::move(samples), config.min_field_size,
                                        &std::cerr);
        if (samples.empty())
            throw Error("no field reaches min_field_size=" +
                        std::to_string(config.min_field_size));
        result.samples = samples;

        // Search backend: an in-process mock service or a remote client.
        std::optional<MockIndexServer> server;
        ClientConfig client_config;
        GroundTruthLedger mock_ledger;
        if (config.mock_profile) {
            auto [index, ledger] = MockIndex::build(ingest.records, *config.mock_profile);
            mock_ledger = std::move(ledger);
            {
                std::ostringstream os;
                mock_ledger.write_jsonl(os);
                write_file(config.out_dir / "mock_ledger.jsonl", os.str(), written);
            }
            write_file(config.out_dir / "mock_profile.json",
                       config.mock_profile->to_json_text() + "\n", written);
            server.emplace(std::move(index));
            const int port = server->start("127.0.0.1", 0);
            (void)port;
            client_config.base_url = server->base_url();
            client_config.queries_per_second = 1e6;  // pacing is for remote services
            client_config.max_retries = 2;
            client_config.per_query_count = config.per_query_count;
            result.mock_ledger = mock_ledger;
        } else {
            client_config = *config.client;
            if (!client_config.cache_dir)
                client_config.cache_dir = config.out_dir / "cache";
        }
        IndexClient client(client_config);

        // Per-field work on a bounded pool; slots keep field order stable.
        std::vector<FieldWork> works(samples.size());
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mu;
        const std::size_t n_threads = std::min<std::size_t>(
            static_cast<std::size_t>(config.workers), samples.size());
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) {
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= samples.size())
                        return;
                    try {
                        works[i] = process_field(
                            samples[i], config, client,
                            config.mock_profile ? &mock_ledger : nullptr);
                    } catch (...) {
                        std::lock_guard lock(failure_mu);
                        if (!failure)
                            failure = std::current_exception();
                        return;
                    }
                }
            });
        }
        for (auto& th : pool)
            th.join();
        if (failure)
            std::rethrow_exception(failure);
        if (server)
            server->stop();

        // Merge in field order.
        std::vector<BibRecord> all_sampled;
        std::map<std::string, bool> matched;
        for (std::size_t i = 0; i < works.size(); ++i) {
            result.field_reports.push_back(std::move(works[i].report));
            if (config.filter_mode == FilterMode::metadata_then_doi_check)
                result.doi_check_reports.push_back(std::move(works[i].doi_check));
            for (auto& row : works[i].decisions)
                result.decisions.push_back(std::move(row));
            for (const auto& [id, m] : works[i].correlated_matched)
                matched[id] = m;
            for (const auto& rec : samples[i].records)
                all_sampled.push_back(rec);
        }
        result.country_rates = country_match_rates(all_sampled, matched);
        result.transactions = ledger_report(client.ledger());

        write_file(config.out_dir / "run_config.json", config.to_json_text() + "\n",
                   written);
        auto report_files = emit_report(result, config.strategies, config.filter_mode,
                                        config.format, config.out_dir);
        written.insert(written.end(), report_files.begin(), report_files.end());
        result.written = written;
        return result;
    } catch (...) {
        quarantine_outputs(config.out_dir, written);
        throw;
    }
}

}  // namespace bibmatch
