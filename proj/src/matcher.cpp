#include "bibmatch/matcher.hpp"

#include <algorithm>
#include <map>

namespace bibmatch {

namespace {

std::optional<NormalizedText> try_normalize_title(const std::string& raw) {
    try {
        return normalize_title(raw);
    } catch (const Error&) {
        return std::nullopt;
    }
}

std::optional<NormalizedDoi> try_normalize_doi(const std::string& raw) {
    try {
        return normalize_doi(raw);
    } catch (const Error&) {
        return std::nullopt;
    }
}

double jaccard(const std::vector<std::string_view>& a,
               const std::vector<std::string_view>& b) {
    std::set<std::string_view> sa(a.begin(), a.end());
    std::set<std::string_view> sb(b.begin(), b.end());
    std::size_t inter = 0;
    for (const auto& w : sa)
        inter += sb.count(w);
    const std::size_t uni = sa.size() + sb.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double multiset_jaccard(const std::vector<std::string_view>& a,
                        const std::vector<std::string_view>& b) {
    std::map<std::string_view, std::size_t> ca, cb;
    for (const auto& w : a)
        ++ca[w];
    for (const auto& w : b)
        ++cb[w];
    std::size_t inter = 0, uni = 0;
    for (const auto& [w, n] : ca) {
        const auto it = cb.find(w);
        const std::size_t m = it == cb.end() ? 0 : it->second;
        inter += std::min(n, m);
        uni += std::max(n, m);
    }
    for (const auto& [w, m] : cb) {
        if (!ca.count(w))
            uni += m;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double containment(const std::vector<std::string_view>& query,
                   const std::vector<std::string_view>& result) {
    std::set<std::string_view> sq(query.begin(), query.end());
    std::set<std::string_view> sr(result.begin(), result.end());
    if (sq.empty())
        return 0.0;
    std::size_t found = 0;
    for (const auto& w : sq)
        found += sr.count(w);
    return static_cast<double>(found) / static_cast<double>(sq.size());
}

/// Overlap between the record title and a candidate title, 0 when either
/// side fails to normalize.
double overlap_or_zero(const std::optional<NormalizedText>& record_title,
                       const std::string& candidate_title, OverlapMode mode) {
    if (!record_title)
        return 0.0;
    const auto cand = try_normalize_title(candidate_title);
    if (!cand)
        return 0.0;
    return title_overlap(*record_title, *cand, mode);
}

}  // namespace

const char* meta_field_name(MetaField f) {
    switch (f) {
    case MetaField::title:
        return "title";
    case MetaField::year:
        return "year";
    case MetaField::author:
        return "author";
    case MetaField::journal:
        return "journal";
    }
    return "?";
}

double title_word_overlap(const NormalizedText& a, const NormalizedText& b) {
    return jaccard(a.words(), b.words());
}

double title_overlap(const NormalizedText& query, const NormalizedText& result,
                     OverlapMode mode) {
    switch (mode) {
    case OverlapMode::set_jaccard:
        return jaccard(query.words(), result.words());
    case OverlapMode::multiset_jaccard:
        return multiset_jaccard(query.words(), result.words());
    case OverlapMode::query_containment:
        return containment(query.words(), result.words());
    }
    return 0.0;
}

NormalizedRecord NormalizedRecord::of(const BibRecord& record) {
    NormalizedRecord out;
    out.title = try_normalize_title(record.title);
    try {
        out.author = normalize_author(record.first_author_surname, record.first_author_given);
    } catch (const Error&) {
    }
    try {
        out.journal = normalize_journal(record.journal_name);
    } catch (const Error&) {
    }
    if (record.doi)
        out.doi = try_normalize_doi(*record.doi);
    return out;
}

std::optional<NormalizedText> normalize_candidate_author(const std::string& raw) {
    // Split on whitespace: first token is the given name, the rest the
    // surname. A single token is treated as a bare surname.
    std::vector<std::string> tokens;
    std::string tok;
    for (char c : raw) {
        if (c == ' ' || c == '\t') {
            if (!tok.empty())
                tokens.push_back(std::move(tok));
            tok.clear();
        } else {
            tok.push_back(c);
        }
    }
    if (!tok.empty())
        tokens.push_back(std::move(tok));
    if (tokens.empty())
        return std::nullopt;
    try {
        if (tokens.size() == 1)
            return normalize_author(tokens[0], "");
        std::string surname;
        for (std::size_t i = 1; i < tokens.size(); ++i) {
            if (i > 1)
                surname += ' ';
            surname += tokens[i];
        }
        return normalize_author(surname, tokens[0]);
    } catch (const Error&) {
        return std::nullopt;
    }
}

std::set<MetaField> field_differences(const BibRecord& record,
                                      const CandidateResult& candidate) {
    const NormalizedRecord rec = NormalizedRecord::of(record);
    std::set<MetaField> diffs;

    const auto cand_title = try_normalize_title(candidate.title);
    if (!rec.title || !cand_title || !(*rec.title == *cand_title))
        diffs.insert(MetaField::title);

    if (!candidate.pub_year || *candidate.pub_year != record.pub_year)
        diffs.insert(MetaField::year);

    std::optional<NormalizedText> cand_author;
    if (candidate.first_author)
        cand_author = normalize_candidate_author(*candidate.first_author);
    if (!rec.author || !cand_author || !(*rec.author == *cand_author))
        diffs.insert(MetaField::author);

    std::optional<NormalizedText> cand_journal;
    if (candidate.journal_name) {
        try {
            cand_journal = normalize_journal(*candidate.journal_name);
        } catch (const Error&) {
        }
    }
    if (!rec.journal || !cand_journal || !(*rec.journal == *cand_journal))
        diffs.insert(MetaField::journal);

    return diffs;
}

MatchDecision doi_filter(const BibRecord& record,
                         const std::vector<CandidateResult>& candidates) {
    if (!record.doi)
        throw Error("doi_filter requires a DOI on the record");
    const NormalizedDoi want = normalize_doi(*record.doi);

    MatchDecision decision;
    const auto rec_title = try_normalize_title(record.title);
    for (const auto& cand : candidates) {
        if (!cand.doi) {
            decision.rejections.push_back({cand.entity_id, {"no doi"}});
            continue;
        }
        const auto have = try_normalize_doi(*cand.doi);
        if (have && *have == want) {
            decision.accepted = cand;
            decision.overlap = overlap_or_zero(rec_title, cand.title, OverlapMode::set_jaccard);
            decision.rejections.clear();
            return decision;
        }
        decision.rejections.push_back({cand.entity_id, {"doi mismatch"}});
    }
    return decision;
}

MatchDecision metadata_filter(const BibRecord& record,
                              const std::vector<CandidateResult>& candidates,
                              const MatchRules& rules) {
    const NormalizedRecord rec = NormalizedRecord::of(record);

    MatchDecision decision;
    std::size_t best = candidates.size();
    double best_overlap = -1.0;

    std::vector<RejectedCandidate> rejections;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& cand = candidates[i];
        const std::set<MetaField> diffs = field_differences(record, cand);
        const double overlap = overlap_or_zero(rec.title, cand.title, rules.overlap_mode);

        std::vector<std::string> reasons;
        if (static_cast<int>(diffs.size()) > rules.max_field_differences) {
            std::string fields;
            for (MetaField f : diffs)
                fields += (fields.empty() ? "" : ", ") + std::string(meta_field_name(f));
            reasons.push_back(std::to_string(diffs.size()) + " field differences (" +
                              fields + ")");
        }
        if (overlap < rules.title_overlap_min)
            reasons.push_back("overlap below threshold");

        if (reasons.empty()) {
            if (overlap > best_overlap) {
                best = i;
                best_overlap = overlap;
            }
        } else {
            rejections.push_back({cand.entity_id, std::move(reasons)});
        }
    }

    if (best < candidates.size()) {
        decision.accepted = candidates[best];
        decision.overlap = best_overlap;
        return decision;
    }
    decision.rejections = std::move(rejections);
    return decision;
}

}  // namespace bibmatch
