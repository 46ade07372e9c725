#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bibmatch/corpus.hpp"
#include "bibmatch/queryexpr.hpp"

namespace bibmatch {

struct PrecisionRecall {
    std::optional<double> precision;  // absent when nothing was accepted
    double recall = 0.0;
};

/// recall = records with a correct accepted match / all records;
/// precision = correct accepted / all accepted (absent when none).
/// `accepted` and `correct` must cover the same record ids.
PrecisionRecall field_precision_recall(const std::map<std::string, bool>& accepted,
                                       const std::map<std::string, bool>& correct);

/// Midranks: tied observations share the average of the ranks they span.
std::vector<double> midranks(const std::vector<double>& values);

/// Pearson correlation of midranks. Absent when n < 2 or either input
/// has fewer than two distinct values.
std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y);

/// Product-moment correlation. Absent on zero variance.
std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Offset geometric mean exp(mean(ln(1+c))) - 1; admits zero counts.
double geometric_mean(const std::vector<long long>& counts);

struct Aggregates {
    double min = 0.0, max = 0.0, median = 0.0, mean = 0.0;
    std::size_t excluded = 0;  // undefined entries left out
};

/// Min/max/median/mean over the defined entries; even-count medians are
/// midpoint averages. Throws when every entry is undefined.
Aggregates summarize(const std::vector<std::optional<double>>& values);

struct CountryRate {
    std::string country;
    std::size_t articles = 0;
    std::size_t matches = 0;
    double rate = 0.0;
};

/// Match rate by first-author country, records without a country under
/// "unknown", sorted by articles descending (country name breaks ties).
std::vector<CountryRate> country_match_rates(const std::vector<BibRecord>& records,
                                             const std::map<std::string, bool>& matched);

struct StrategyStats {
    double recall = 0.0;
    std::optional<double> precision;
};

/// One per-field row of the summary tables.
struct FieldReport {
    std::string field_code;
    std::size_t n_articles = 0;
    std::map<Strategy, StrategyStats> per_strategy;
    std::size_t n_correlated = 0;  // article pairs behind the correlation columns
    std::optional<double> scopus_geomean;
    std::optional<double> index_geomean;
    std::optional<double> spearman_correlation;
};

}  // namespace bibmatch
