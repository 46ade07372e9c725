#include "bibmatch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bibmatch {

PrecisionRecall field_precision_recall(const std::map<std::string, bool>& accepted,
                                       const std::map<std::string, bool>& correct) {
    if (accepted.size() != correct.size())
        throw Error("precision/recall: decisions and truth cover different record sets");
    std::size_t n_accepted = 0, n_correct_accepted = 0;
    for (const auto& [record_id, was_accepted] : accepted) {
        const auto it = correct.find(record_id);
        if (it == correct.end())
            throw Error("precision/recall: truth is missing record \"" + record_id + "\"");
        if (was_accepted) {
            ++n_accepted;
            n_correct_accepted += it->second;
        }
    }
    PrecisionRecall out;
    out.recall = accepted.empty() ? 0.0
                                  : static_cast<double>(n_correct_accepted) /
                                        static_cast<double>(accepted.size());
    if (n_accepted > 0)
        out.precision =
            static_cast<double>(n_correct_accepted) / static_cast<double>(n_accepted);
    return out;
}

std::vector<double> midranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&values](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]])
            ++j;
        const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw Error("pearson: input lengths differ");
    const std::size_t n = x.size();
    if (n < 2)
        return std::nullopt;
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double num = 0.0, dx2 = 0.0, dy2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        num += dx * dy;
        dx2 += dx * dx;
        dy2 += dy * dy;
    }
    if (dx2 == 0.0 || dy2 == 0.0)
        return std::nullopt;
    return num / std::sqrt(dx2 * dy2);
}

std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw Error("spearman: input lengths differ");
    if (x.size() < 2)
        return std::nullopt;
    return pearson(midranks(x), midranks(y));
}

double geometric_mean(const std::vector<long long>& counts) {
    if (counts.empty())
        throw Error("geometric_mean: empty input");
    double sum = 0.0;
    for (long long c : counts) {
        if (c < 0)
            throw Error("geometric_mean: negative count");
        sum += std::log1p(static_cast<double>(c));
    }
    return std::expm1(sum / static_cast<double>(counts.size()));
}

Aggregates summarize(const std::vector<std::optional<double>>& values) {
    std::vector<double> defined;
    defined.reserve(values.size());
    std::size_t excluded = 0;
    for (const auto& v : values) {
        if (v)
            defined.push_back(*v);
        else
            ++excluded;
    }
    if (defined.empty())
        throw Error("summarize: every entry is undefined");
    std::sort(defined.begin(), defined.end());

    Aggregates out;
    out.excluded = excluded;
    out.min = defined.front();
    out.max = defined.back();
    const std::size_t n = defined.size();
    out.median = n % 2 == 1 ? defined[n / 2]
                            : (defined[n / 2 - 1] + defined[n / 2]) / 2.0;
    out.mean = std::accumulate(defined.begin(), defined.end(), 0.0) /
               static_cast<double>(n);
    return out;
}

std::vector<CountryRate> country_match_rates(const std::vector<BibRecord>& records,
                                             const std::map<std::string, bool>& matched) {
    std::map<std::string, CountryRate> by_country;
    for (const auto& rec : records) {
        const std::string country = rec.first_author_country.value_or("unknown");
        CountryRate& row = by_country[country];
        row.country = country;
        ++row.articles;
        const auto it = matched.find(rec.record_id);
        row.matches += it != matched.end() && it->second;
    }
    std::vector<CountryRate> out;
    out.reserve(by_country.size());
    for (auto& [_, row] : by_country) {
        row.rate = static_cast<double>(row.matches) / static_cast<double>(row.articles);
        out.push_back(std::move(row));
    }
    std::sort(out.begin(), out.end(), [](const CountryRate& a, const CountryRate& b) {
        if (a.articles != b.articles)
            return a.articles > b.articles;
        return a.country < b.country;
    });
    return out;
}

}  // namespace bibmatch
