#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "bibmatch/indexclient.hpp"
#include "bibmatch/mockindex.hpp"
#include "bibmatch/pipeline.hpp"

namespace {

using namespace bibmatch;

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRuntimeError = 2;

RecordFormat parse_format(const std::string& name) {
    if (name == "csv")
        return RecordFormat::csv;
    if (name == "jsonl")
        return RecordFormat::jsonl;
    throw Error("unknown input format \"" + name + "\" (expected csv or jsonl)");
}

IngestResult ingest_file(const std::string& path, const std::string& format) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path);
    return ingest_records(in, parse_format(format));
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path);
    return out;
}

struct RunFlags {
    std::string config_path;
    std::string input;
    std::string format;
    std::vector<std::string> strategies;
    std::string filter_mode;
    std::string mock_profile_path;
    std::string base_url;
    std::string api_key_env;
    std::string out;
    std::string report_format;
    int sample_n = -1;
    int min_field_size = -1;
    long long seed = -1;
    int workers = -1;
    int per_query_count = -1;
};

PipelineConfig assemble_run_config(const RunFlags& flags) {
    PipelineConfig config;
    if (!flags.config_path.empty())
        config = PipelineConfig::from_json_file(flags.config_path);

    // Flags override the config file, which overrides defaults.
    if (!flags.input.empty())
        config.input = flags.input;
    if (!flags.format.empty())
        config.input_format = parse_format(flags.format);
    if (!flags.strategies.empty()) {
        config.strategies.clear();
        for (const auto& name : flags.strategies)
            config.strategies.push_back(strategy_from_name(name));
    }
    if (!flags.filter_mode.empty())
        config.filter_mode = filter_mode_from_name(flags.filter_mode);
    if (!flags.mock_profile_path.empty()) {
        config.mock_profile =
            CorruptionProfile::from_json_text(read_file(flags.mock_profile_path));
        config.client.reset();
    }
    if (!flags.base_url.empty()) {
        if (!config.client)
            config.client = ClientConfig{};
        config.client->base_url = flags.base_url;
        config.mock_profile.reset();
    }
    if (!flags.api_key_env.empty() && config.client) {
        const char* key = std::getenv(flags.api_key_env.c_str());
        if (!key)
            throw Error("environment variable " + flags.api_key_env + " is not set");
        config.client->api_key = key;
    }
    if (!flags.out.empty())
        config.out_dir = flags.out;
    if (!flags.report_format.empty())
        config.format = report_format_from_name(flags.report_format);
    if (flags.sample_n >= 0)
        config.sample_n = static_cast<std::size_t>(flags.sample_n);
    if (flags.min_field_size >= 0)
        config.min_field_size = static_cast<std::size_t>(flags.min_field_size);
    if (flags.seed >= 0)
        config.seed = static_cast<std::uint64_t>(flags.seed);
    if (flags.workers >= 0)
        config.workers = flags.workers;
    if (flags.per_query_count >= 0)
        config.per_query_count = flags.per_query_count;
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bibliographic record linkage against an academic search index"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "validate records and report rejects");
    std::string in_path, in_format = "csv", out_dir = ".";
    ingest->add_option("--input", in_path, "input records file")->required();
    ingest->add_option("--format", in_format, "csv or jsonl");
    ingest->add_option("--out", out_dir, "output directory");

    // sample
    auto* sample = app.add_subcommand("sample", "draw per-field samples");
    std::string sample_out = "samples.jsonl";
    int sample_n = 400, min_field_size = 50;
    long long seed = 1;
    sample->add_option("--input", in_path, "input records file")->required();
    sample->add_option("--format", in_format, "csv or jsonl");
    sample->add_option("--sample-n", sample_n, "records per field (default 400)");
    sample->add_option("--min-field-size", min_field_size,
                       "drop fields with fewer sampled records (default 50)");
    sample->add_option("--seed", seed, "RNG seed");
    sample->add_option("--out", sample_out, "output JSONL file");

    // query
    auto* query = app.add_subcommand("query", "emit wire query expressions");
    std::vector<std::string> strategy_names;
    std::string query_out = "-";
    query->add_option("--input", in_path, "input records file")->required();
    query->add_option("--format", in_format, "csv or jsonl");
    query->add_option("--strategy", strategy_names,
                      "strategy (repeatable; default all five)");
    query->add_option("--out", query_out, "output file or - for stdout");

    // match
    auto* match = app.add_subcommand("match", "filter candidate lists per record");
    std::string records_path, candidates_path, filter_mode = "doi",
                match_out = "decisions.jsonl";
    MatchRules rules;
    match->add_option("--records", records_path, "records JSONL")->required();
    match->add_option("--candidates", candidates_path,
                      "JSONL of {record_id, entities:[...]}")
        ->required();
    match->add_option("--filter-mode", filter_mode, "doi or metadata");
    match->add_option("--max-field-differences", rules.max_field_differences,
                      "metadata rule (default 1)");
    match->add_option("--title-overlap-min", rules.title_overlap_min,
                      "metadata rule (default 0.85)");
    match->add_option("--out", match_out, "output decisions JSONL");

    // stats
    auto* stats = app.add_subcommand("stats", "aggregate a decision log");
    std::string decisions_path, stats_records, stats_out_dir = ".",
                stats_format = "markdown";
    stats->add_option("--decisions", decisions_path, "decisions JSONL")->required();
    stats->add_option("--records", stats_records,
                      "records JSONL (enables country rates)");
    stats->add_option("--report-format", stats_format, "csv, jsonl or markdown");
    stats->add_option("--out", stats_out_dir, "output directory");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "build the mock index and ledger");
    std::string profile_path, sim_out_dir = ".";
    simulate->add_option("--input", in_path, "input records file")->required();
    simulate->add_option("--format", in_format, "csv or jsonl");
    simulate->add_option("--profile", profile_path, "corruption profile JSON")->required();
    simulate->add_option("--out", sim_out_dir, "output directory");

    // serve-mock
    auto* serve = app.add_subcommand("serve-mock", "serve the mock index over HTTP");
    std::string host = "127.0.0.1";
    int port = 8080;
    serve->add_option("--input", in_path, "input records file")->required();
    serve->add_option("--format", in_format, "csv or jsonl");
    serve->add_option("--profile", profile_path, "corruption profile JSON")->required();
    serve->add_option("--host", host, "bind address");
    serve->add_option("--port", port, "bind port (0 = ephemeral)");

    // run
    auto* run = app.add_subcommand("run", "run the full pipeline");
    RunFlags flags;
    run->add_option("--config", flags.config_path, "pipeline config JSON");
    run->add_option("--input", flags.input, "input records file");
    run->add_option("--format", flags.format, "csv or jsonl");
    run->add_option("--strategy", flags.strategies, "strategy (repeatable)");
    run->add_option("--filter-mode", flags.filter_mode,
                    "doi, metadata or metadata_then_doi_check");
    run->add_option("--sample-n", flags.sample_n, "records per field (default 400)");
    run->add_option("--min-field-size", flags.min_field_size,
                    "minimum sampled field size (default 50)");
    run->add_option("--seed", flags.seed, "RNG seed");
    run->add_option("--mock-profile", flags.mock_profile_path,
                    "corruption profile JSON (mock backend)");
    run->add_option("--base-url", flags.base_url, "index service URL (client backend)");
    run->add_option("--api-key-env", flags.api_key_env,
                    "environment variable holding the API key");
    run->add_option("--out", flags.out, "output directory");
    run->add_option("--report-format", flags.report_format, "csv, jsonl or markdown");
    run->add_option("--workers", flags.workers, "worker threads");
    run->add_option("--per-query-count", flags.per_query_count,
                    "results requested per query");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (*ingest) {
            const IngestResult result = ingest_file(in_path, in_format);
            std::filesystem::create_directories(out_dir);
            {
                auto out = open_out(out_dir + "/records.jsonl");
                write_records_jsonl(out, result.records);
            }
            {
                auto out = open_out(out_dir + "/rejects.jsonl");
                write_rejects_jsonl(out, result.rejects);
            }
            std::cout << result.records.size() << " records, " << result.rejects.size()
                      << " rejects\n";
        } else if (*sample) {
            const IngestResult result = ingest_file(in_path, in_format);
            std::vector<FieldSample> samples;
            for (const auto& code : collect_field_codes(result.records))
                samples.push_back(sample_per_field(result.records, code,
                                                   static_cast<std::size_t>(sample_n),
                                                   static_cast<std::uint64_t>(seed)));
            samples = filter_min_field_size(std::move(samples),
                                            static_cast<std::size_t>(min_field_size),
                                            &std::cerr);
            auto out = open_out(sample_out);
            for (const auto& s : samples) {
                std::ostringstream records;
                write_records_jsonl(records, s.records);
                std::istringstream lines(records.str());
                std::string line;
                while (std::getline(lines, line)) {
                    out << "{\"field_code\":" << nlohmann::json(s.field_code).dump()
                        << ",\"record\":" << line << "}\n";
                }
            }
        } else if (*query) {
            const IngestResult result = ingest_file(in_path, in_format);
            std::vector<Strategy> strategies;
            if (strategy_names.empty())
                strategies.assign(kAllStrategies.begin(), kAllStrategies.end());
            else
                for (const auto& name : strategy_names)
                    strategies.push_back(strategy_from_name(name));
            std::ofstream file;
            if (query_out != "-")
                file = open_out(query_out);
            std::ostream& out = query_out == "-" ? std::cout : file;
            for (const auto& rec : result.records) {
                for (Strategy s : strategies) {
                    nlohmann::json obj{{"record_id", rec.record_id},
                                       {"strategy", strategy_name(s)}};
                    try {
                        obj["query"] = serialize_query(build_query(rec, s));
                    } catch (const Error& e) {
                        obj["error"] = e.what();
                    }
                    out << obj.dump() << "\n";
                }
            }
        } else if (*match) {
            const IngestResult records = ingest_file(records_path, "jsonl");
            std::map<std::string, std::vector<CandidateResult>> candidates;
            {
                std::ifstream in(candidates_path, std::ios::binary);
                if (!in)
                    throw Error("cannot open " + candidates_path);
                std::string line;
                while (std::getline(in, line)) {
                    if (line.empty())
                        continue;
                    const auto obj = nlohmann::json::parse(line);
                    candidates[obj.at("record_id").get<std::string>()] =
                        IndexClient::parse_entities(
                            nlohmann::json{{"entities", obj.at("entities")}}.dump());
                }
            }
            const FilterMode mode = filter_mode_from_name(filter_mode);
            auto out = open_out(match_out);
            for (const auto& rec : records.records) {
                const auto it = candidates.find(rec.record_id);
                const std::vector<CandidateResult> cands =
                    it == candidates.end() ? std::vector<CandidateResult>{} : it->second;
                nlohmann::json obj{{"record_id", rec.record_id}};
                try {
                    const MatchDecision decision =
                        mode == FilterMode::doi ? doi_filter(rec, cands)
                                                : metadata_filter(rec, cands, rules);
                    if (decision.is_accepted()) {
                        obj["outcome"] = "accepted";
                        obj["accepted_entity_id"] = decision.accepted->entity_id;
                        obj["overlap"] = decision.overlap;
                    } else {
                        obj["outcome"] = "rejected";
                        nlohmann::json reasons = nlohmann::json::array();
                        for (const auto& rej : decision.rejections)
                            reasons.push_back({{"entity_id", rej.entity_id},
                                               {"reasons", rej.reasons}});
                        obj["rejections"] = reasons;
                    }
                } catch (const Error& e) {
                    obj["outcome"] = "error";
                    obj["error"] = e.what();
                }
                out << obj.dump() << "\n";
            }
        } else if (*stats) {
            // Rebuild per-field tables from a decision log.
            std::ifstream in(decisions_path, std::ios::binary);
            if (!in)
                throw Error("cannot open " + decisions_path);
            std::map<std::string, std::vector<DecisionRow>> by_field;
            std::set<std::string> strategy_set;
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty())
                    continue;
                const auto obj = nlohmann::json::parse(line);
                DecisionRow row;
                row.record_id = obj.at("record_id").get<std::string>();
                row.field_code = obj.value("field_code", "all");
                row.strategy = strategy_from_name(obj.at("strategy").get<std::string>());
                row.outcome = obj.at("outcome").get<std::string>();
                row.correct = obj.value("correct", false);
                if (obj.contains("scopus_citations") && !obj["scopus_citations"].is_null())
                    row.scopus_citations = obj["scopus_citations"].get<long long>();
                if (obj.contains("index_citations") && !obj["index_citations"].is_null())
                    row.index_citations = obj["index_citations"].get<long long>();
                strategy_set.insert(strategy_name(row.strategy));
                by_field[row.field_code].push_back(std::move(row));
            }
            if (by_field.empty())
                throw Error("decision log is empty");
            std::vector<Strategy> strategies;
            for (Strategy s : kAllStrategies)
                if (strategy_set.count(strategy_name(s)))
                    strategies.push_back(s);

            PipelineResult result;
            const Strategy corr = strategies.front();
            const Strategy corr_strategy =
                strategy_set.count("title_only") ? Strategy::title_only : corr;
            for (const auto& [field, rows] : by_field) {
                FieldReport report;
                report.field_code = field;
                std::set<std::string> ids;
                for (const auto& row : rows)
                    ids.insert(row.record_id);
                report.n_articles = ids.size();
                std::vector<long long> scopus_counts, index_counts;
                std::vector<double> sx, ix;
                for (Strategy s : strategies) {
                    std::map<std::string, bool> accepted, correct;
                    for (const auto& row : rows) {
                        if (row.strategy != s)
                            continue;
                        accepted[row.record_id] = row.outcome == "accepted";
                        correct[row.record_id] = row.correct;
                        if (s == corr_strategy && row.outcome == "accepted" &&
                            row.correct && row.scopus_citations && row.index_citations) {
                            scopus_counts.push_back(*row.scopus_citations);
                            index_counts.push_back(*row.index_citations);
                            sx.push_back(static_cast<double>(*row.scopus_citations));
                            ix.push_back(static_cast<double>(*row.index_citations));
                        }
                    }
                    const PrecisionRecall pr = field_precision_recall(accepted, correct);
                    report.per_strategy[s] = {pr.recall, pr.precision};
                }
                report.n_correlated = scopus_counts.size();
                if (!scopus_counts.empty()) {
                    report.scopus_geomean = geometric_mean(scopus_counts);
                    report.index_geomean = geometric_mean(index_counts);
                    report.spearman_correlation = spearman(sx, ix);
                }
                result.field_reports.push_back(std::move(report));
            }
            if (!stats_records.empty()) {
                const IngestResult records = ingest_file(stats_records, "jsonl");
                std::map<std::string, bool> matched;
                for (const auto& [field, rows] : by_field)
                    for (const auto& row : rows)
                        if (row.strategy == corr_strategy)
                            matched[row.record_id] =
                                row.outcome == "accepted" && row.correct;
                result.country_rates = country_match_rates(records.records, matched);
            }
            std::filesystem::create_directories(stats_out_dir);
            emit_report(result, strategies, FilterMode::metadata,
                        report_format_from_name(stats_format), stats_out_dir);
        } else if (*simulate) {
            const IngestResult result = ingest_file(in_path, in_format);
            const CorruptionProfile profile =
                CorruptionProfile::from_json_text(read_file(profile_path));
            auto [index, ledger] = MockIndex::build(result.records, profile);
            std::filesystem::create_directories(sim_out_dir);
            {
                auto out = open_out(sim_out_dir + "/mock_ledger.jsonl");
                ledger.write_jsonl(out);
            }
            {
                auto out = open_out(sim_out_dir + "/mock_profile.json");
                out << profile.to_json_text() << "\n";
            }
            nlohmann::json summary{{"corpus_records", ledger.size()},
                                   {"indexed_docs", index.docs().size()},
                                   {"absent", ledger.count_absent()}};
            for (int k = 0; k <= static_cast<int>(CorruptionKind::noise_journal); ++k) {
                const auto kind = static_cast<CorruptionKind>(k);
                summary[corruption_kind_name(kind)] = ledger.count_kind(kind);
            }
            auto out = open_out(sim_out_dir + "/index_summary.json");
            out << summary.dump(2) << "\n";
            std::cout << summary.dump(2) << "\n";
        } else if (*serve) {
            const IngestResult result = ingest_file(in_path, in_format);
            const CorruptionProfile profile =
                CorruptionProfile::from_json_text(read_file(profile_path));
            auto [index, ledger] = MockIndex::build(result.records, profile);
            MockIndexServer server(std::move(index));
            const int bound = server.start(host, port);
            std::cerr << "serving " << result.records.size() - ledger.count_absent()
                      << " documents on http://" << host << ":" << bound << "\n";
            // Blocks until interrupted.
            for (;;)
                std::this_thread::sleep_for(std::chrono::seconds(3600));
        } else if (*run) {
            PipelineConfig config;
            try {
                config = assemble_run_config(flags);
                config.validate();
            } catch (const Error& e) {
                std::cerr << "config error: " << e.what() << "\n";
                return kExitConfigError;
            }
            const PipelineResult result = run_pipeline(config);
            std::cout << "wrote " << result.written.size() << " files to "
                      << config.out_dir.string() << " (" << result.transactions.used
                      << " transactions)\n";
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntimeError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntimeError;
    }
    return kExitOk;
}
